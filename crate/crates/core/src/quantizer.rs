//! Quantile-function quantization of interval sequences into Gray-coded
//! bit vectors.
//!
//! Intervals are normally distributed, so equal-width bins would load all
//! probability onto a few codes. Fitting a normal distribution and cutting
//! it at the quantiles `i/n` instead yields `n` equally likely levels;
//! Gray coding then limits a near-threshold wobble to a single bit flip.
//! The low bits still absorb most of the measurement noise, so only a
//! configurable high-entropy band (bits 4..6 of 6 by default) is kept.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ipi::IpiSequence;
use crate::stats::{inverse_normal_cdf, mean, shannon_entropy, std_dev};

/// Default number of quantization levels (6-bit Gray words).
pub const DEFAULT_LEVELS: usize = 64;
/// Default kept band: bits 4..=6, counting bit 1 as the LSB.
pub const DEFAULT_BAND: (u8, u8) = (4, 6);
/// Minimum calibration sample for entropy estimation and model fitting.
pub const MIN_CALIBRATION_INTERVALS: usize = 30;

#[derive(Debug, Error)]
pub enum QuantError {
    #[error("need at least {needed} intervals, got {got}")]
    TooFewIntervals { needed: usize, got: usize },
    #[error("bin width must be positive, got {0}")]
    BadBinWidth(f64),
    #[error("interval sample has (near-)zero variance; cannot fit quantiles")]
    DegenerateDistribution,
    #[error("n_levels must be a power of two >= 2, got {0}")]
    BadLevels(usize),
    #[error("kept band {low}..={high} invalid for {width}-bit words")]
    BadBand { low: u8, high: u8, width: u8 },
}

/// Shannon entropy (bits) of the interval histogram at the given bin width.
pub fn estimate_entropy(ipis: &IpiSequence, bin_width_ms: f64) -> Result<f64, QuantError> {
    if ipis.len() < MIN_CALIBRATION_INTERVALS {
        return Err(QuantError::TooFewIntervals {
            needed: MIN_CALIBRATION_INTERVALS,
            got: ipis.len(),
        });
    }
    if bin_width_ms.is_nan() || bin_width_ms <= 0.0 {
        return Err(QuantError::BadBinWidth(bin_width_ms));
    }
    let bins: Vec<i64> = ipis
        .intervals_ms
        .iter()
        .map(|&x| (x / bin_width_ms).floor() as i64)
        .collect();
    let lo = *bins.iter().min().unwrap();
    let hi = *bins.iter().max().unwrap();
    let mut counts = vec![0usize; (hi - lo + 1) as usize];
    for b in bins {
        counts[(b - lo) as usize] += 1;
    }
    Ok(shannon_entropy(&counts))
}

/// Default histogram bin width: the measurement resolution of the source,
/// i.e. one sample period (1 ms when the source rate is unknown).
pub fn default_bin_width_ms(ipis: &IpiSequence) -> f64 {
    if ipis.source_rate_hz == 0 {
        1.0
    } else {
        1000.0 / ipis.source_rate_hz as f64
    }
}

/// Level count from measured entropy: `2^floor(H)`, clamped to a sane range.
pub fn levels_from_entropy(entropy_bits: f64) -> usize {
    let floor = entropy_bits.max(1.0).floor() as u32;
    1usize << floor.min(10)
}

/// Fitted quantile model: `n` equally probable segments of a normal
/// distribution. The final threshold is a +inf sentinel, so a level is
/// simply the count of thresholds strictly below the value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizerModel {
    pub thresholds_ms: Vec<f64>,
    pub n_levels: usize,
    pub dist_mean_ms: f64,
    pub dist_std_ms: f64,
}

impl QuantizerModel {
    /// Build the model directly from normal parameters.
    pub fn from_normal(mean_ms: f64, std_ms: f64, n_levels: usize) -> Result<Self, QuantError> {
        if n_levels < 2 || !n_levels.is_power_of_two() {
            return Err(QuantError::BadLevels(n_levels));
        }
        if std_ms.is_nan() || std_ms <= 0.0 {
            return Err(QuantError::DegenerateDistribution);
        }
        let n = n_levels as f64;
        let mut thresholds = Vec::with_capacity(n_levels);
        for i in 1..n_levels {
            thresholds.push(mean_ms + std_ms * inverse_normal_cdf(i as f64 / n));
        }
        thresholds.push(f64::INFINITY);
        Ok(QuantizerModel {
            thresholds_ms: thresholds,
            n_levels,
            dist_mean_ms: mean_ms,
            dist_std_ms: std_ms,
        })
    }

    /// Bits per quantized value.
    pub fn word_width(&self) -> u8 {
        self.n_levels.trailing_zeros() as u8
    }
}

/// Fit a quantile model to an observed interval sample.
pub fn fit_model(ipis: &IpiSequence, n_levels: usize) -> Result<QuantizerModel, QuantError> {
    if ipis.len() < MIN_CALIBRATION_INTERVALS {
        return Err(QuantError::TooFewIntervals {
            needed: MIN_CALIBRATION_INTERVALS,
            got: ipis.len(),
        });
    }
    let m = mean(&ipis.intervals_ms);
    let s = std_dev(&ipis.intervals_ms);
    if s < 1e-9 {
        return Err(QuantError::DegenerateDistribution);
    }
    QuantizerModel::from_normal(m, s, n_levels)
}

/// Map each interval to its quantization level: the count of thresholds
/// strictly below it. Levels are in `[0, n_levels)`.
pub fn quantize(ipis: &IpiSequence, model: &QuantizerModel) -> Vec<usize> {
    ipis.intervals_ms
        .iter()
        .map(|&x| model.thresholds_ms.partition_point(|&t| t < x))
        .collect()
}

/// Reflected binary Gray code of `v`.
pub fn gray_code(v: u64) -> u64 {
    v ^ (v >> 1)
}

/// Inverse of [`gray_code`].
pub fn gray_code_inverse(mut g: u64) -> u64 {
    let mut mask = g >> 1;
    while mask != 0 {
        g ^= mask;
        mask >>= 1;
    }
    g
}

/// Gray-encode a level as a binary string, most significant bit first.
pub fn gray_encode(level: u64, width: u8) -> String {
    assert!((1..=63).contains(&width), "width out of range");
    assert!(
        level < 1 << width,
        "level {level} needs more than {width} bits"
    );
    let g = gray_code(level);
    (0..width)
        .rev()
        .map(|b| if (g >> b) & 1 == 1 { '1' } else { '0' })
        .collect()
}

/// Decode an MSB-first Gray-coded binary string back to its level.
pub fn gray_decode(bits: &str) -> Option<u64> {
    if bits.is_empty() || bits.len() > 63 {
        return None;
    }
    let mut g = 0u64;
    for c in bits.chars() {
        g = (g << 1)
            | match c {
                '0' => 0,
                '1' => 1,
                _ => return None,
            };
    }
    Some(gray_code_inverse(g))
}

/// A fixed-length binary key extracted from an interval sequence.
///
/// `bits` holds the kept band of every interval's Gray word, MSB-first
/// within each interval, intervals in time order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitKey {
    pub bits: Vec<u8>,
    pub bits_per_ipi: usize,
    /// Inclusive kept bit positions, LSB = bit 1.
    pub kept_band: (u8, u8),
}

impl BitKey {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// First `n` bits as a new key.
    pub fn truncated(&self, n: usize) -> BitKey {
        BitKey {
            bits: self.bits[..n.min(self.bits.len())].to_vec(),
            bits_per_ipi: self.bits_per_ipi,
            kept_band: self.kept_band,
        }
    }

    pub fn xor(&self, delta: &[u8]) -> BitKey {
        assert_eq!(self.bits.len(), delta.len(), "xor length mismatch");
        BitKey {
            bits: self
                .bits
                .iter()
                .zip(delta)
                .map(|(a, b)| a ^ (b & 1))
                .collect(),
            bits_per_ipi: self.bits_per_ipi,
            kept_band: self.kept_band,
        }
    }

    pub fn hamming_distance(&self, other: &BitKey) -> usize {
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| a != b)
            .count()
    }

    pub fn ones_fraction(&self) -> f64 {
        if self.bits.is_empty() {
            return 0.0;
        }
        self.bits.iter().filter(|&&b| b == 1).count() as f64 / self.bits.len() as f64
    }

    /// Pack into bytes, MSB-first, zero-padded in the final byte.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.bits.len().div_ceil(8)];
        for (i, &b) in self.bits.iter().enumerate() {
            if b == 1 {
                out[i / 8] |= 0x80 >> (i % 8);
            }
        }
        out
    }

    pub fn bit_string(&self) -> String {
        self.bits
            .iter()
            .map(|&b| if b == 1 { '1' } else { '0' })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&BitKeyWire::from(self)).expect("BitKey serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let wire: BitKeyWire = serde_json::from_str(text)?;
        wire.try_into().map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct BitKeyWire {
    bits: String,
    bits_per_ipi: usize,
    band: [u8; 2],
}

impl From<&BitKey> for BitKeyWire {
    fn from(key: &BitKey) -> Self {
        BitKeyWire {
            bits: key.bit_string(),
            bits_per_ipi: key.bits_per_ipi,
            band: [key.kept_band.0, key.kept_band.1],
        }
    }
}

impl TryFrom<BitKeyWire> for BitKey {
    type Error = String;

    fn try_from(wire: BitKeyWire) -> Result<Self, Self::Error> {
        let bits = wire
            .bits
            .chars()
            .map(|c| match c {
                '0' => Ok(0u8),
                '1' => Ok(1u8),
                other => Err(format!("invalid bit character '{other}'")),
            })
            .collect::<Result<Vec<u8>, _>>()?;
        Ok(BitKey {
            bits,
            bits_per_ipi: wire.bits_per_ipi,
            kept_band: (wire.band[0], wire.band[1]),
        })
    }
}

/// Quantize, Gray-encode, band-select, and concatenate an interval
/// sequence into a bit key.
pub fn build_key(
    ipis: &IpiSequence,
    model: &QuantizerModel,
    kept_band: (u8, u8),
) -> Result<BitKey, QuantError> {
    let width = model.word_width();
    let (low, high) = kept_band;
    if low < 1 || high < low || high > width {
        return Err(QuantError::BadBand { low, high, width });
    }
    let levels = quantize(ipis, model);
    let mut bits = Vec::with_capacity(levels.len() * (high - low + 1) as usize);
    for level in levels {
        let g = gray_code(level as u64);
        for b in (low..=high).rev() {
            bits.push(((g >> (b - 1)) & 1) as u8);
        }
    }
    Ok(BitKey {
        bits,
        bits_per_ipi: (high - low + 1) as usize,
        kept_band,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::DetRng;
    use crate::signalgen::{generate_ipi_series, HeartModel};
    use crate::stats::chi_square_sf;

    fn sequence(intervals: Vec<f64>, rate: u32) -> IpiSequence {
        let mut times = vec![0.0];
        for &iv in &intervals {
            times.push(times.last().unwrap() + iv);
        }
        IpiSequence {
            intervals_ms: intervals,
            beat_times_ms: times,
            source_rate_hz: rate,
        }
    }

    fn normal_sample(mean: f64, std: f64, n: usize, seed: u64) -> IpiSequence {
        let mut rng = DetRng::new(seed);
        sequence(
            (0..n).map(|_| mean + std * rng.next_gaussian()).collect(),
            120,
        )
    }

    #[test]
    fn entropy_of_constant_sample_is_zero() {
        let ipis = sequence(vec![850.0; 100], 120);
        assert_eq!(estimate_entropy(&ipis, 8.0).unwrap(), 0.0);
    }

    #[test]
    fn entropy_of_sixteen_uniform_bins() {
        // oracle: -sum p log2 p over 16 equally likely bins is exactly 4
        let mut intervals = Vec::new();
        for bin in 0..16 {
            for k in 0..100 {
                intervals.push(700.0 + bin as f64 * 10.0 + (k % 10) as f64 * 0.5);
            }
        }
        let ipis = sequence(intervals, 120);
        let h = estimate_entropy(&ipis, 10.0).unwrap();
        assert!((h - 4.0).abs() < 0.1, "entropy {h}");
    }

    #[test]
    fn entropy_of_normal_sample_at_millisecond_bins() {
        // histogram entropy of N(850, 50) at 1 ms resolution is
        // ~log2(50 * sqrt(2*pi*e)) = 7.7 bits
        let ipis = normal_sample(850.0, 50.0, 20_000, 21);
        let h = estimate_entropy(&ipis, 1.0).unwrap();
        assert!((6.0..=8.0).contains(&h), "entropy {h}");
    }

    #[test]
    fn level_rule_reaches_sixty_four() {
        // a sample whose histogram entropy lands in [6,7) maps to n = 64
        let ipis = normal_sample(850.0, 160.0, 20_000, 22);
        let h = estimate_entropy(&ipis, default_bin_width_ms(&ipis)).unwrap();
        assert!((6.0..7.0).contains(&h), "entropy {h}");
        assert_eq!(levels_from_entropy(h), 64);
    }

    #[test]
    fn entropy_needs_enough_intervals() {
        let ipis = sequence(vec![850.0; 10], 120);
        assert!(matches!(
            estimate_entropy(&ipis, 8.0),
            Err(QuantError::TooFewIntervals { .. })
        ));
    }

    #[test]
    fn quartile_thresholds_match_normal_quantiles() {
        let model = QuantizerModel::from_normal(850.0, 50.0, 4).unwrap();
        // z(0.25) = -0.6745
        assert!((model.thresholds_ms[0] - 816.2755).abs() < 1e-3);
        assert!((model.thresholds_ms[1] - 850.0).abs() < 1e-9);
        assert!((model.thresholds_ms[2] - 883.7245).abs() < 1e-3);
        assert!(model.thresholds_ms[3].is_infinite());
    }

    #[test]
    fn two_levels_split_at_the_mean() {
        let model = QuantizerModel::from_normal(850.0, 37.0, 2).unwrap();
        assert_eq!(model.thresholds_ms.len(), 2);
        assert!((model.thresholds_ms[0] - 850.0).abs() < 1e-9);
    }

    #[test]
    fn sixty_four_thresholds_strictly_ascend() {
        let model = QuantizerModel::from_normal(850.0, 50.0, 64).unwrap();
        assert_eq!(model.thresholds_ms.len(), 64);
        for w in model.thresholds_ms.windows(2) {
            assert!(w[0] < w[1]);
        }
    }

    #[test]
    fn fit_rejects_degenerate_sample() {
        let ipis = sequence(vec![850.0; 100], 120);
        assert!(matches!(
            fit_model(&ipis, 64),
            Err(QuantError::DegenerateDistribution)
        ));
    }

    #[test]
    fn fit_rejects_non_power_of_two() {
        let ipis = normal_sample(850.0, 50.0, 100, 1);
        assert!(matches!(
            fit_model(&ipis, 48),
            Err(QuantError::BadLevels(48))
        ));
    }

    #[test]
    fn quantize_boundary_levels() {
        let model = QuantizerModel::from_normal(850.0, 50.0, 8).unwrap();
        let ipis = sequence(vec![500.0, 1200.0], 120);
        let levels = quantize(&ipis, &model);
        assert_eq!(levels, vec![0, 7]);
    }

    #[test]
    fn quantize_is_monotonic() {
        let model = QuantizerModel::from_normal(850.0, 50.0, 64).unwrap();
        let mut rng = DetRng::new(3);
        for _ in 0..500 {
            let a = 600.0 + 500.0 * rng.next_f64();
            let b = 600.0 + 500.0 * rng.next_f64();
            let (a, b) = if a <= b { (a, b) } else { (b, a) };
            let ipis = sequence(vec![a, b], 120);
            let lv = quantize(&ipis, &model);
            assert!(lv[0] <= lv[1], "{a} -> {}, {b} -> {}", lv[0], lv[1]);
        }
    }

    #[test]
    fn quantized_levels_are_uniform() {
        let ipis = normal_sample(850.0, 50.0, 10_000, 77);
        let model = fit_model(&ipis, 64).unwrap();
        let levels = quantize(&ipis, &model);
        let mut counts = vec![0usize; 64];
        for l in levels {
            counts[l] += 1;
        }
        let expected = 10_000.0 / 64.0;
        let stat: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        let p = chi_square_sf(stat, 63.0);
        assert!(p > 0.01, "chi-square p = {p}");
    }

    #[test]
    fn gray_encoding_matches_reference_vectors() {
        assert_eq!(gray_encode(840, 10), "1011101100");
        assert_eq!(gray_encode(860, 10), "1011110010");
        assert_eq!(gray_encode(0, 10), "0000000000");
        assert_eq!(gray_encode(0, 3), "000");
    }

    #[test]
    fn gray_adjacent_levels_differ_in_one_bit() {
        for width in 1..=10u8 {
            for l in 0..(1u64 << width) - 1 {
                let diff = gray_code(l) ^ gray_code(l + 1);
                assert_eq!(diff.count_ones(), 1, "width {width} level {l}");
            }
        }
    }

    #[test]
    fn gray_round_trip_is_identity() {
        for width in 1..=10u8 {
            for l in 0..(1u64 << width) {
                assert_eq!(gray_decode(&gray_encode(l, width)), Some(l));
            }
        }
    }

    #[test]
    fn key_length_is_three_bits_per_interval() {
        let ipis = normal_sample(850.0, 50.0, 43, 5);
        let model = QuantizerModel::from_normal(850.0, 50.0, 64).unwrap();
        let key = build_key(&ipis, &model, DEFAULT_BAND).unwrap();
        assert_eq!(key.len(), 129);
        assert_eq!(key.bits_per_ipi, 3);
        assert_eq!(key.truncated(128).len(), 128);
    }

    #[test]
    fn full_band_equals_whole_gray_word() {
        let ipis = normal_sample(850.0, 50.0, 40, 6);
        let model = QuantizerModel::from_normal(850.0, 50.0, 64).unwrap();
        let key = build_key(&ipis, &model, (1, 6)).unwrap();
        let levels = quantize(&ipis, &model);
        let expected: String = levels.iter().map(|&l| gray_encode(l as u64, 6)).collect();
        assert_eq!(key.bit_string(), expected);
    }

    #[test]
    fn identical_sequences_give_identical_keys() {
        let ipis = normal_sample(850.0, 50.0, 50, 8);
        let model = fit_model(&ipis, 64).unwrap();
        let a = build_key(&ipis, &model, DEFAULT_BAND).unwrap();
        let b = build_key(&ipis, &model, DEFAULT_BAND).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn band_validation() {
        let ipis = normal_sample(850.0, 50.0, 40, 9);
        let model = QuantizerModel::from_normal(850.0, 50.0, 64).unwrap();
        assert!(build_key(&ipis, &model, (0, 3)).is_err());
        assert!(build_key(&ipis, &model, (5, 4)).is_err());
        assert!(build_key(&ipis, &model, (4, 7)).is_err());
    }

    #[test]
    fn kept_bits_are_balanced() {
        // every kept position's ones-fraction within [0.45, 0.55] over 10^4
        // model-matched intervals
        let heart = HeartModel {
            seed: 31,
            ..HeartModel::default()
        };
        let ipis = generate_ipi_series(&heart, 10_000).unwrap();
        let model = fit_model(&ipis, 64).unwrap();
        let key = build_key(&ipis, &model, DEFAULT_BAND).unwrap();
        for pos in 0..3 {
            let ones = key
                .bits
                .iter()
                .skip(pos)
                .step_by(3)
                .filter(|&&b| b == 1)
                .count();
            let frac = ones as f64 / 10_000.0;
            assert!(
                (0.45..=0.55).contains(&frac),
                "kept bit {pos} ones fraction {frac}"
            );
        }
    }

    #[test]
    fn key_json_round_trip() {
        let ipis = normal_sample(850.0, 50.0, 43, 12);
        let model = QuantizerModel::from_normal(850.0, 50.0, 64).unwrap();
        let key = build_key(&ipis, &model, DEFAULT_BAND).unwrap();
        let back = BitKey::from_json(&key.to_json()).unwrap();
        assert_eq!(key, back);
        assert!(key.to_json().contains("\"band\""));
    }

    #[test]
    fn byte_packing_is_msb_first() {
        let key = BitKey {
            bits: vec![1, 0, 1, 1, 1, 0, 1, 1, 0, 0],
            bits_per_ipi: 5,
            kept_band: (1, 5),
        };
        assert_eq!(key.to_bytes(), vec![0b1011_1011, 0b0000_0000]);
    }
}
