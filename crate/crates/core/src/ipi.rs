//! Inter-pulse-interval extraction: Savitzky-Golay smoothing, local peak
//! detection, and alignment of two beat sequences captured on a shared
//! clock.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signalgen::PiezoTrace;

/// Default minimum separation between detected beats (200 bpm ceiling).
pub const DEFAULT_MIN_SEPARATION_MS: f64 = 300.0;
/// Default peak prominence as a fraction of the trace amplitude range.
pub const DEFAULT_PROMINENCE_FRACTION: f64 = 0.3;
/// Default pairing window for [`align`].
pub const DEFAULT_MAX_OFFSET_MS: f64 = 200.0;

#[derive(Debug, Error)]
pub enum IpiError {
    #[error("smoother window ({window}) longer than trace ({samples} samples)")]
    WindowTooLong { window: usize, samples: usize },
    #[error("invalid smoother config: {0}")]
    InvalidSmoother(String),
    #[error("fewer than 2 peaks detected ({found}); cannot form intervals")]
    TooFewPeaks { found: usize },
    #[error("no beats paired within the offset window")]
    NoPairs,
    #[error("beat times must be strictly increasing")]
    NonMonotonicBeats,
}

/// An ordered sequence of heartbeat intervals with their beat timestamps.
///
/// Invariant: `intervals_ms[i] == beat_times_ms[i+1] - beat_times_ms[i]`
/// and every interval is positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpiSequence {
    pub intervals_ms: Vec<f64>,
    pub beat_times_ms: Vec<f64>,
    #[serde(rename = "source_rate")]
    pub source_rate_hz: u32,
}

impl IpiSequence {
    /// Build a sequence from beat timestamps (must be strictly increasing).
    pub fn from_beat_times(beat_times_ms: Vec<f64>, source_rate_hz: u32) -> Result<Self, IpiError> {
        if beat_times_ms.windows(2).any(|w| w[1] <= w[0]) {
            return Err(IpiError::NonMonotonicBeats);
        }
        let intervals_ms = beat_times_ms.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(IpiSequence {
            intervals_ms,
            beat_times_ms,
            source_rate_hz,
        })
    }

    pub fn len(&self) -> usize {
        self.intervals_ms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals_ms.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("IpiSequence serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Savitzky-Golay smoother parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmootherConfig {
    /// Window length in samples; must be odd and greater than `poly_order`.
    pub window_length: usize,
    pub poly_order: usize,
}

impl Default for SmootherConfig {
    fn default() -> Self {
        // 31 samples at 120 Hz is a ~0.26 s window, well under any
        // physiological inter-pulse interval
        SmootherConfig {
            window_length: 31,
            poly_order: 3,
        }
    }
}

impl SmootherConfig {
    /// Window scaled to the sampling rate: a ~0.26 s span up to 120 Hz,
    /// tapering to a shorter span at higher rates where pulse flattening
    /// costs more peak-location accuracy than noise averaging buys.
    pub fn for_rate(rate_hz: u32) -> Self {
        let rate = rate_hz as f64;
        let mut window = if rate <= 120.0 {
            (0.26 * rate).round() as usize
        } else {
            (31.0 + (rate - 120.0) * 2.0 / 15.0).round() as usize
        };
        if window.is_multiple_of(2) {
            window += 1;
        }
        let window = window.max(5);
        SmootherConfig {
            window_length: window,
            poly_order: 3,
        }
    }

    fn validate(&self) -> Result<(), IpiError> {
        if self.window_length.is_multiple_of(2) {
            return Err(IpiError::InvalidSmoother(format!(
                "window_length must be odd, got {}",
                self.window_length
            )));
        }
        if self.window_length <= self.poly_order {
            return Err(IpiError::InvalidSmoother(format!(
                "window_length {} must exceed poly_order {}",
                self.window_length, self.poly_order
            )));
        }
        Ok(())
    }
}

/// Least-squares weights evaluating a degree-`order` fit at the window
/// centre, for a symmetric window of half-width `half`.
fn sg_center_weights(half: usize, order: usize) -> Vec<f64> {
    let width = 2 * half + 1;
    let order = order.min(width - 1);
    let dim = order + 1;

    // normal equations: moments m[j+k], solve (X^T X) c = X^T e_row for the
    // evaluation functional at x = 0
    let mut moments = vec![0.0_f64; 2 * order + 1];
    for x in -(half as i64)..=(half as i64) {
        let mut p = 1.0;
        for m in moments.iter_mut() {
            *m += p;
            p *= x as f64;
        }
    }
    let mut a = vec![vec![0.0_f64; dim]; dim];
    for (j, row) in a.iter_mut().enumerate() {
        for (k, v) in row.iter_mut().enumerate() {
            *v = moments[j + k];
        }
    }
    // invert by solving A z = e_0; weight for sample at offset x is then
    // sum_j z[j] x^j
    let mut rhs = vec![0.0_f64; dim];
    rhs[0] = 1.0;
    let z = solve_linear(&mut a, &mut rhs);

    (0..width)
        .map(|i| {
            let x = i as f64 - half as f64;
            let mut p = 1.0;
            let mut w = 0.0;
            for &zj in &z {
                w += zj * p;
                p *= x;
            }
            w
        })
        .collect()
}

/// Gaussian elimination with partial pivoting; consumes its inputs.
#[allow(clippy::needless_range_loop)]
fn solve_linear(a: &mut [Vec<f64>], b: &mut [f64]) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if a[row][col].abs() > a[pivot][col].abs() {
                pivot = row;
            }
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        let diag = a[col][col];
        for row in col + 1..n {
            let f = a[row][col] / diag;
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut s = b[col];
        for k in col + 1..n {
            s -= a[col][k] * x[k];
        }
        x[col] = s / a[col][col];
    }
    x
}

/// Savitzky-Golay smoothing with symmetric windows.
///
/// The window shrinks symmetrically near the edges, which keeps the filter
/// zero-phase everywhere; output length equals input length.
pub fn sg_smooth(trace: &PiezoTrace, cfg: &SmootherConfig) -> Result<PiezoTrace, IpiError> {
    cfg.validate()?;
    let n = trace.samples.len();
    if cfg.window_length > n {
        return Err(IpiError::WindowTooLong {
            window: cfg.window_length,
            samples: n,
        });
    }
    let half_max = cfg.window_length / 2;
    // weights per half-width; interior positions all share half_max
    let weights: Vec<Vec<f64>> = (0..=half_max)
        .map(|h| sg_center_weights(h, cfg.poly_order))
        .collect();

    let mut out = vec![0.0_f64; n];
    for (i, slot) in out.iter_mut().enumerate() {
        let h = half_max.min(i).min(n - 1 - i);
        let w = &weights[h];
        let mut acc = 0.0;
        for (k, wk) in w.iter().enumerate() {
            acc += wk * trace.samples[i - h + k];
        }
        *slot = acc;
    }

    Ok(PiezoTrace {
        samples: out,
        sampling_rate_hz: trace.sampling_rate_hz,
        true_beat_times_ms: trace.true_beat_times_ms.clone(),
        location: trace.location,
    })
}

/// Locate heartbeat peaks in a trace.
///
/// Keeps strict local maxima whose prominence reaches
/// `prominence_fraction` of the full amplitude range, then enforces
/// `min_separation_ms` by preferring taller peaks. Returned times are in
/// milliseconds, refined to sub-sample precision by parabolic
/// interpolation, strictly increasing.
pub fn detect_peaks(
    trace: &PiezoTrace,
    min_separation_ms: f64,
    prominence_fraction: f64,
) -> Vec<f64> {
    assert!(min_separation_ms > 0.0, "min_separation must be positive");
    let s = &trace.samples;
    let n = s.len();
    if n < 3 {
        return Vec::new();
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in s {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let range = hi - lo;
    if range <= 0.0 {
        return Vec::new();
    }
    let min_prominence = prominence_fraction * range;

    let mut candidates: Vec<usize> = Vec::new();
    for i in 1..n - 1 {
        if s[i] > s[i - 1] && s[i] >= s[i + 1] {
            candidates.push(i);
        }
    }

    // prominence: height above the higher of the two valley minima that
    // separate the peak from taller terrain on each side
    let prominent: Vec<usize> = candidates
        .into_iter()
        .filter(|&i| {
            let peak = s[i];
            let mut left_min = peak;
            let mut j = i;
            while j > 0 {
                j -= 1;
                if s[j] > peak {
                    break;
                }
                left_min = left_min.min(s[j]);
            }
            let mut right_min = peak;
            let mut j = i;
            while j + 1 < n {
                j += 1;
                if s[j] > peak {
                    break;
                }
                right_min = right_min.min(s[j]);
            }
            peak - left_min.max(right_min) >= min_prominence
        })
        .collect();

    // separation: tallest first, drop anything too close to an accepted peak
    let ms_per_sample = 1000.0 / trace.sampling_rate_hz as f64;
    let mut by_height = prominent;
    by_height.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap());
    let mut accepted: Vec<usize> = Vec::new();
    for i in by_height {
        let t = i as f64 * ms_per_sample;
        if accepted
            .iter()
            .all(|&j| (t - j as f64 * ms_per_sample).abs() >= min_separation_ms)
        {
            accepted.push(i);
        }
    }
    accepted.sort_unstable();

    // sub-sample refinement: least-squares parabola over a neighbourhood
    // scaled to the separation constraint, vertex clamped near the argmax
    let half_fit = ((min_separation_ms / 5.0) / ms_per_sample).round() as usize;
    let mut refined: Vec<f64> = accepted
        .into_iter()
        .map(|i| (i as f64 + parabola_vertex(s, i, half_fit.max(1))) * ms_per_sample)
        .collect();
    refined.retain(|t| t.is_finite());
    refined.dedup_by(|a, b| *a <= *b);
    refined
}

/// Vertex offset (in samples, relative to `i`) of a least-squares parabola
/// fitted over `i ± half` samples. Returns 0 when the fit is degenerate.
fn parabola_vertex(s: &[f64], i: usize, half: usize) -> f64 {
    let half = half.min(i).min(s.len() - 1 - i);
    if half == 0 {
        return 0.0;
    }
    // symmetric abscissa makes the normal equations 2x2:
    // sums of x^odd vanish
    let (mut s0, mut s2, mut s4) = (0.0_f64, 0.0_f64, 0.0_f64);
    let (mut b0, mut b1, mut b2) = (0.0_f64, 0.0_f64, 0.0_f64);
    for k in 0..=2 * half {
        let x = k as f64 - half as f64;
        let y = s[i - half + k];
        s0 += 1.0;
        s2 += x * x;
        s4 += x * x * x * x;
        b0 += y;
        b1 += x * y;
        b2 += x * x * y;
    }
    let det = s0 * s4 - s2 * s2;
    if det.abs() < 1e-12 {
        return 0.0;
    }
    let c1 = b1 / s2;
    let c2 = (s0 * b2 - s2 * b0) / det;
    if c2 >= 0.0 {
        return 0.0;
    }
    (-c1 / (2.0 * c2)).clamp(-1.5, 1.5)
}

/// Smooth a trace and extract its inter-pulse intervals.
pub fn extract_ipis(
    trace: &PiezoTrace,
    smoother: &SmootherConfig,
) -> Result<IpiSequence, IpiError> {
    extract_ipis_with(
        trace,
        smoother,
        DEFAULT_MIN_SEPARATION_MS,
        DEFAULT_PROMINENCE_FRACTION,
    )
}

/// [`extract_ipis`] with explicit peak-detection parameters.
pub fn extract_ipis_with(
    trace: &PiezoTrace,
    smoother: &SmootherConfig,
    min_separation_ms: f64,
    prominence_fraction: f64,
) -> Result<IpiSequence, IpiError> {
    let smoothed = sg_smooth(trace, smoother)?;
    let peaks = detect_peaks(&smoothed, min_separation_ms, prominence_fraction);
    if peaks.len() < 2 {
        return Err(IpiError::TooFewPeaks { found: peaks.len() });
    }
    IpiSequence::from_beat_times(peaks, trace.sampling_rate_hz)
}

/// Pair the beats of two sequences captured on a shared clock.
///
/// Beats are paired greedily by nearest timestamp within `max_offset_ms`;
/// unpaired beats are dropped from both sides, and only intervals whose
/// endpoints are adjacent in *both* originals survive. The returned
/// sequences have equal length. Their `beat_times_ms` are rebuilt
/// cumulatively from the first paired beat, so gaps left by dropped beats
/// are compressed.
pub fn align(
    a: &IpiSequence,
    b: &IpiSequence,
    max_offset_ms: f64,
) -> Result<(IpiSequence, IpiSequence), IpiError> {
    let ta = &a.beat_times_ms;
    let tb = &b.beat_times_ms;
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let (mut i, mut j) = (0usize, 0usize);
    while i < ta.len() && j < tb.len() {
        let d = ta[i] - tb[j];
        if d.abs() <= max_offset_ms {
            // prefer a strictly closer successor on either side
            if j + 1 < tb.len() && (tb[j + 1] - ta[i]).abs() < d.abs() {
                j += 1;
                continue;
            }
            if i + 1 < ta.len() && (ta[i + 1] - tb[j]).abs() < d.abs() {
                i += 1;
                continue;
            }
            pairs.push((i, j));
            i += 1;
            j += 1;
        } else if ta[i] < tb[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    if pairs.is_empty() {
        return Err(IpiError::NoPairs);
    }

    let mut ia = Vec::new();
    let mut ib = Vec::new();
    for w in pairs.windows(2) {
        let ((i0, j0), (i1, j1)) = (w[0], w[1]);
        if i1 == i0 + 1 && j1 == j0 + 1 {
            ia.push(ta[i1] - ta[i0]);
            ib.push(tb[j1] - tb[j0]);
        }
    }

    let rebuild = |start: f64, intervals: &[f64], rate: u32| {
        let mut times = Vec::with_capacity(intervals.len() + 1);
        times.push(start);
        for &iv in intervals {
            times.push(times.last().unwrap() + iv);
        }
        IpiSequence {
            intervals_ms: intervals.to_vec(),
            beat_times_ms: times,
            source_rate_hz: rate,
        }
    };
    let (i0, j0) = pairs[0];
    Ok((
        rebuild(ta[i0], &ia, a.source_rate_hz),
        rebuild(tb[j0], &ib, b.source_rate_hz),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signalgen::BodyLocation;

    fn trace_from(samples: Vec<f64>, rate: u32) -> PiezoTrace {
        PiezoTrace {
            samples,
            sampling_rate_hz: rate,
            true_beat_times_ms: Vec::new(),
            location: BodyLocation::Chest,
        }
    }

    #[test]
    fn smooth_preserves_constant_signal() {
        let trace = trace_from(vec![2.5; 200], 120);
        let out = sg_smooth(&trace, &SmootherConfig::default()).unwrap();
        for v in out.samples {
            assert!((v - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn smooth_reproduces_low_order_polynomial() {
        // degree-3 polynomial samples must pass through order-3 SG unchanged
        let samples: Vec<f64> = (0..120)
            .map(|i| {
                let x = i as f64 / 20.0;
                0.3 * x * x * x - 2.0 * x * x + x - 5.0
            })
            .collect();
        let trace = trace_from(samples.clone(), 120);
        let out = sg_smooth(&trace, &SmootherConfig::default()).unwrap();
        for (a, b) in out.samples.iter().zip(&samples) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn smooth_rejects_window_longer_than_trace() {
        let trace = trace_from(vec![0.0; 10], 120);
        assert!(matches!(
            sg_smooth(&trace, &SmootherConfig::default()),
            Err(IpiError::WindowTooLong { .. })
        ));
    }

    #[test]
    fn smooth_is_linear() {
        let f: Vec<f64> = (0..150).map(|i| (i as f64 * 0.21).sin()).collect();
        let g: Vec<f64> = (0..150).map(|i| (i as f64 * 0.08).cos() * 2.0).collect();
        let cfg = SmootherConfig::default();
        let sf = sg_smooth(&trace_from(f.clone(), 120), &cfg).unwrap();
        let sg = sg_smooth(&trace_from(g.clone(), 120), &cfg).unwrap();
        let combo: Vec<f64> = f.iter().zip(&g).map(|(a, b)| 3.0 * a - 0.5 * b).collect();
        let sc = sg_smooth(&trace_from(combo, 120), &cfg).unwrap();
        for i in 0..150 {
            let expect = 3.0 * sf.samples[i] - 0.5 * sg.samples[i];
            assert!((sc.samples[i] - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn flat_trace_has_no_peaks() {
        let trace = trace_from(vec![0.0; 500], 120);
        assert!(detect_peaks(&trace, 300.0, 0.3).is_empty());
    }

    #[test]
    fn separation_keeps_the_larger_peak() {
        // two pulses 100 ms apart (12 samples at 120 Hz), min separation 300 ms
        let mut samples = vec![0.0_f64; 200];
        for (offset, amp) in [(50usize, 0.8), (62usize, 1.0)] {
            for k in 0..7 {
                let v = amp * (1.0 - (k as f64 - 3.0).abs() / 4.0);
                samples[offset + k] = samples[offset + k].max(v);
            }
        }
        let trace = trace_from(samples, 120);
        let peaks = detect_peaks(&trace, 300.0, 0.3);
        assert_eq!(peaks.len(), 1);
        // the taller pulse is centred at sample 65
        assert!((peaks[0] - 65.0 * 1000.0 / 120.0).abs() < 10.0);
    }

    #[test]
    fn peaks_invariant_under_amplitude_scaling() {
        let mut samples = vec![0.0; 600];
        for c in [100usize, 250, 400, 530] {
            for k in 0..13 {
                samples[c - 6 + k] = 1.0 - (k as f64 - 6.0).abs() / 7.0;
            }
        }
        let base = trace_from(samples.clone(), 120);
        let scaled = trace_from(samples.iter().map(|v| v * 37.5).collect(), 120);
        assert_eq!(
            detect_peaks(&base, 300.0, 0.3),
            detect_peaks(&scaled, 300.0, 0.3)
        );
    }

    #[test]
    fn align_identical_sequences_is_identity() {
        let a = IpiSequence::from_beat_times(vec![0.0, 850.0, 1700.0, 2550.0], 120).unwrap();
        let (x, y) = align(&a, &a, 200.0).unwrap();
        assert_eq!(x.intervals_ms, a.intervals_ms);
        assert_eq!(y.intervals_ms, a.intervals_ms);
    }

    #[test]
    fn align_cancels_constant_offset() {
        let a = IpiSequence::from_beat_times(vec![0.0, 850.0, 1720.0, 2500.0], 120).unwrap();
        let shifted: Vec<f64> = a.beat_times_ms.iter().map(|t| t + 20.0).collect();
        let b = IpiSequence::from_beat_times(shifted, 120).unwrap();
        let (x, y) = align(&a, &b, 100.0).unwrap();
        assert_eq!(x.len(), a.len());
        for (ia, ib) in x.intervals_ms.iter().zip(&y.intervals_ms) {
            assert!((ia - ib).abs() < 1e-9);
        }
    }

    #[test]
    fn align_drops_intervals_adjacent_to_missing_beat() {
        // five beats; b is missing the middle one
        let a =
            IpiSequence::from_beat_times(vec![0.0, 850.0, 1700.0, 2550.0, 3400.0], 120).unwrap();
        let b = IpiSequence::from_beat_times(vec![0.0, 850.0, 2550.0, 3400.0], 120).unwrap();
        let (x, y) = align(&a, &b, 200.0).unwrap();
        assert_eq!(x.len(), 2);
        assert_eq!(y.len(), 2);
        assert_eq!(x.intervals_ms, vec![850.0, 850.0]);
        assert_eq!(y.intervals_ms, vec![850.0, 850.0]);
    }

    #[test]
    fn align_with_no_overlap_errors() {
        let a = IpiSequence::from_beat_times(vec![0.0, 850.0], 120).unwrap();
        let b = IpiSequence::from_beat_times(vec![10_000.0, 10_850.0], 120).unwrap();
        assert!(matches!(align(&a, &b, 200.0), Err(IpiError::NoPairs)));
    }

    mod extraction_round_trip {
        use super::*;
        use crate::signalgen::{
            generate_ipi_series, render_trace, BodyLocation, HeartModel, SensorConfig,
        };

        fn cfg(location: BodyLocation, rate: u32, noise: f64, jitter: f64) -> SensorConfig {
            SensorConfig {
                location,
                sampling_rate_hz: rate,
                noise_std: noise,
                propagation_delay_ms: 0.0,
                jitter_std_ms: jitter,
                seed: 1234,
            }
        }

        #[test]
        fn noiseless_metronome_recovers_exactly() {
            let heart = HeartModel {
                ipi_std_ms: 0.0,
                ar_coefficient: 0.0,
                ..HeartModel::default()
            };
            let ipis = generate_ipi_series(&heart, 20).unwrap();
            for location in [BodyLocation::Chest, BodyLocation::Wrist] {
                let trace = render_trace(&ipis, &cfg(location, 120, 0.0, 0.0)).unwrap();
                let out = extract_ipis(&trace, &SmootherConfig::default()).unwrap();
                assert_eq!(out.len(), 20, "{location}");
                let tol = 1000.0 / 120.0;
                for iv in &out.intervals_ms {
                    assert!((iv - 850.0).abs() <= tol, "{location}: interval {iv}");
                }
            }
        }

        #[test]
        fn noiseless_peaks_land_on_true_beats() {
            let ipis = generate_ipi_series(&HeartModel::default(), 30).unwrap();
            let trace = render_trace(&ipis, &cfg(BodyLocation::Chest, 120, 0.0, 0.0)).unwrap();
            let smoothed = sg_smooth(&trace, &SmootherConfig::default()).unwrap();
            let peaks = detect_peaks(&smoothed, 300.0, 0.3);
            assert_eq!(peaks.len(), trace.true_beat_times_ms.len());
            let tol = 1000.0 / 120.0;
            for (p, t) in peaks.iter().zip(&trace.true_beat_times_ms) {
                assert!((p - t).abs() <= tol, "peak {p} vs beat {t}");
            }
        }

        #[test]
        fn smoothing_keeps_noisy_peak_within_one_sample() {
            let ipis = generate_ipi_series(&HeartModel::default(), 6).unwrap();
            let clean = render_trace(&ipis, &cfg(BodyLocation::Chest, 120, 0.0, 0.0)).unwrap();
            let noisy = render_trace(&ipis, &cfg(BodyLocation::Chest, 120, 0.1, 0.0)).unwrap();
            let smoother = SmootherConfig::default();
            let clean_s = sg_smooth(&clean, &smoother).unwrap();
            let noisy_s = sg_smooth(&noisy, &smoother).unwrap();
            // compare argmax around each beat
            let rate = 120.0;
            for &bt in &clean.true_beat_times_ms {
                let lo = ((bt - 150.0) / 1000.0 * rate) as usize;
                let hi = ((bt + 150.0) / 1000.0 * rate) as usize;
                let argmax = |s: &[f64]| {
                    (lo..=hi.min(s.len() - 1))
                        .max_by(|&a, &b| s[a].partial_cmp(&s[b]).unwrap())
                        .unwrap()
                };
                let a = argmax(&clean_s.samples) as i64;
                let b = argmax(&noisy_s.samples) as i64;
                assert!((a - b).abs() <= 1, "noisy argmax moved {} samples", a - b);
            }
        }

        /// Pooled interval RMSE over several seeded sessions.
        fn pooled_rmse(location: BodyLocation, rate: u32, noise: f64, seeds: &[u64]) -> f64 {
            let mut se = 0.0;
            let mut n = 0usize;
            for &seed in seeds {
                let heart = HeartModel {
                    seed,
                    ..HeartModel::default()
                };
                let ipis = generate_ipi_series(&heart, 150).unwrap();
                let trace = render_trace(&ipis, &cfg(location, rate, noise, 4.0)).unwrap();
                let out = extract_ipis(&trace, &SmootherConfig::for_rate(rate)).unwrap();
                let truth =
                    IpiSequence::from_beat_times(trace.true_beat_times_ms.clone(), 0).unwrap();
                let (a, b) = align(&out, &truth, 150.0).unwrap();
                assert!(a.len() >= 140, "only {}/150 intervals matched", a.len());
                se += a
                    .intervals_ms
                    .iter()
                    .zip(&b.intervals_ms)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>();
                n += a.len();
            }
            (se / n as f64).sqrt()
        }

        #[test]
        fn elevated_noise_rmse_within_one_sample_period_at_120hz() {
            let rmse = pooled_rmse(BodyLocation::Chest, 120, 0.3, &[61, 62, 63]);
            assert!(rmse <= 1000.0 / 120.0, "rmse {rmse} ms");
        }

        #[test]
        fn default_noise_rmse_within_one_sample_period_at_40hz() {
            let rmse = pooled_rmse(BodyLocation::Wrist, 40, 0.2, &[64, 65]);
            assert!(rmse <= 1000.0 / 40.0, "rmse {rmse} ms");
        }

        #[test]
        fn too_few_beats_is_an_error() {
            let ipis = generate_ipi_series(&HeartModel::default(), 1).unwrap();
            let trace = render_trace(&ipis, &cfg(BodyLocation::Chest, 120, 0.0, 0.0)).unwrap();
            // a flat stretch of the trace with the pulses cut out
            let flat = PiezoTrace {
                samples: vec![0.0; trace.samples.len()],
                ..trace
            };
            assert!(matches!(
                extract_ipis(&flat, &SmootherConfig::default()),
                Err(IpiError::TooFewPeaks { .. })
            ));
        }
    }

    #[test]
    fn ipi_json_round_trip() {
        let a = IpiSequence::from_beat_times(vec![0.0, 840.0, 1700.0], 120).unwrap();
        let back = IpiSequence::from_json(&a.to_json()).unwrap();
        assert_eq!(a, back);
        // wire name pinned by the file format
        assert!(a.to_json().contains("\"source_rate\""));
    }
}
