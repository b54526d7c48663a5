//! Property tests for the structural invariants.

use proptest::prelude::*;

use h2b_core::ipi::{align, detect_peaks, IpiSequence};
use h2b_core::protocol::ReconMessage;
use h2b_core::quantizer::{quantize, BitKey, QuantizerModel};
use h2b_core::reconcile::{make_matrix, project};
use h2b_core::signalgen::{BodyLocation, PiezoTrace};

fn beat_times(count: usize, seed: u64) -> Vec<f64> {
    // irregular but physiological: 600..1100 ms intervals
    let mut rng = h2b_core::rng::DetRng::new(seed);
    let mut t = 100.0;
    let mut out = vec![t];
    for _ in 1..count {
        t += 600.0 + 500.0 * rng.next_f64();
        out.push(t);
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn align_outputs_have_equal_length(seed in 0u64..1000, offset in -150.0f64..150.0, drop_idx in 1usize..18) {
        let times_a = beat_times(20, seed);
        let mut times_b: Vec<f64> = times_a.iter().map(|t| t + offset).collect();
        times_b.remove(drop_idx);
        let a = IpiSequence::from_beat_times(times_a, 120).unwrap();
        let b = IpiSequence::from_beat_times(times_b, 120).unwrap();
        if let Ok((x, y)) = align(&a, &b, 200.0) {
            prop_assert_eq!(x.len(), y.len());
            // the invariant between intervals and rebuilt beat times holds
            for (i, iv) in x.intervals_ms.iter().enumerate() {
                prop_assert!((x.beat_times_ms[i + 1] - x.beat_times_ms[i] - iv).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn peak_detection_is_scale_invariant(seed in 0u64..500, scale in 0.01f64..100.0) {
        let mut rng = h2b_core::rng::DetRng::new(seed);
        let mut samples = vec![0.0f64; 400];
        // a few triangular pulses at random spots plus mild noise
        for _ in 0..3 {
            let c = 30 + rng.next_index(340);
            for k in 0..15 {
                let v = 1.0 - (k as f64 - 7.0).abs() / 8.0;
                samples[c + k - 7] += v.max(0.0);
            }
        }
        for s in samples.iter_mut() {
            *s += 0.05 * rng.next_gaussian();
        }
        let base = PiezoTrace {
            samples: samples.clone(),
            sampling_rate_hz: 120,
            true_beat_times_ms: vec![],
            location: BodyLocation::Chest,
        };
        let scaled = PiezoTrace {
            samples: samples.iter().map(|v| v * scale).collect(),
            ..base.clone()
        };
        // same peaks at the same places; sub-sample refinement is float
        // arithmetic, so allow rounding at the nanosecond level
        let p0 = detect_peaks(&base, 300.0, 0.3);
        let p1 = detect_peaks(&scaled, 300.0, 0.3);
        prop_assert_eq!(p0.len(), p1.len());
        for (a, b) in p0.iter().zip(&p1) {
            prop_assert!((a - b).abs() < 1e-6, "{} vs {}", a, b);
        }
    }

    #[test]
    fn quantization_is_monotone(a in 500.0f64..1200.0, b in 500.0f64..1200.0) {
        let model = QuantizerModel::from_normal(850.0, 80.0, 64).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let seq = IpiSequence {
            intervals_ms: vec![lo, hi],
            beat_times_ms: vec![0.0, lo, lo + hi],
            source_rate_hz: 120,
        };
        let levels = quantize(&seq, &model);
        prop_assert!(levels[0] <= levels[1]);
    }

    #[test]
    fn projection_difference_identity(seed in 0u64..1000) {
        // Phi a - Phi b = Phi (a - b) over the integers
        let mut rng = h2b_core::rng::DetRng::new(seed);
        let matrix = make_matrix(seed ^ 0x51, 20, 64).unwrap();
        let key = |rng: &mut h2b_core::rng::DetRng| BitKey {
            bits: (0..64).map(|_| rng.next_index(2) as u8).collect(),
            bits_per_ipi: 1,
            kept_band: (1, 1),
        };
        let a = key(&mut rng);
        let b = key(&mut rng);
        let ya = project(&a, &matrix).unwrap();
        let yb = project(&b, &matrix).unwrap();
        for r in 0..20 {
            let direct: i32 = (0..64)
                .map(|c| matrix.entry(r, c) as i32 * (a.bits[c] as i32 - b.bits[c] as i32))
                .sum();
            prop_assert_eq!(ya.values[r] - yb.values[r], direct);
        }
    }

    #[test]
    fn wire_message_round_trip(seed in 0u64..2000, m in 1usize..80) {
        let mut rng = h2b_core::rng::DetRng::new(seed);
        let y: Vec<i16> = (0..m).map(|_| (rng.next_index(257) as i16) - 128).collect();
        let key = BitKey {
            bits: (0..128).map(|_| rng.next_index(2) as u8).collect(),
            bits_per_ipi: 3,
            kept_band: (4, 6),
        };
        let msg = ReconMessage::build(seed, 128, y, &key);
        let back = ReconMessage::parse(&msg.to_bytes()).unwrap();
        prop_assert_eq!(&back, &msg);
        prop_assert!(back.verify(&key));
    }

    #[test]
    fn bit_key_json_round_trip(seed in 0u64..2000, len in 1usize..400) {
        let mut rng = h2b_core::rng::DetRng::new(seed);
        let key = BitKey {
            bits: (0..len).map(|_| rng.next_index(2) as u8).collect(),
            bits_per_ipi: 3,
            kept_band: (4, 6),
        };
        let back = BitKey::from_json(&key.to_json()).unwrap();
        prop_assert_eq!(back, key);
    }
}
