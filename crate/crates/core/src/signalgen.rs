//! Synthetic piezo-like heartbeat traces with controllable heart-rate
//! variability, per-location pulse morphology, propagation delay, and
//! sensor noise.
//!
//! The generator is the ground-truth source for everything downstream:
//! every trace carries the exact (jittered, delayed) beat instants it was
//! rendered from.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ipi::IpiSequence;
use crate::rng::{derive_seed, DetRng};

/// Physiological floor for generated intervals.
pub const MIN_IPI_MS: f64 = 200.0;
/// Quiet lead-in before the first beat so pulse tails fit in the trace.
const START_PAD_MS: f64 = 400.0;
const TAIL_PAD_MS: f64 = 400.0;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("invalid heart model: {0}")]
    InvalidModel(String),
    #[error("invalid sensor config: {0}")]
    InvalidConfig(String),
    #[error("target rate {to_hz} Hz does not divide source rate {from_hz} Hz")]
    RateNotDivisor { from_hz: u32, to_hz: u32 },
    #[error("render_body needs at least 2 sensor configs, got {0}")]
    TooFewConfigs(usize),
    #[error("trace file malformed: {0}")]
    MalformedTrace(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Where on the body a sensor sits; selects the pulse morphology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BodyLocation {
    Chest,
    Neck,
    Wrist,
    Waist,
    Ankle,
}

impl BodyLocation {
    pub const ALL: [BodyLocation; 5] = [
        BodyLocation::Chest,
        BodyLocation::Neck,
        BodyLocation::Wrist,
        BodyLocation::Waist,
        BodyLocation::Ankle,
    ];

    /// Chest and waist sensors see the heart's vibration directly (SCG);
    /// the others pick up the arterial pressure pulse (BCG).
    pub fn is_scg(self) -> bool {
        matches!(self, BodyLocation::Chest | BodyLocation::Waist)
    }

    /// Nominal pulse-arrival delay relative to the chest, in ms.
    pub fn default_delay_ms(self) -> f64 {
        match self {
            BodyLocation::Chest => 0.0,
            BodyLocation::Waist => 5.0,
            BodyLocation::Neck => 8.0,
            BodyLocation::Wrist => 12.0,
            BodyLocation::Ankle => 20.0,
        }
    }
}

impl fmt::Display for BodyLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BodyLocation::Chest => "chest",
            BodyLocation::Neck => "neck",
            BodyLocation::Wrist => "wrist",
            BodyLocation::Waist => "waist",
            BodyLocation::Ankle => "ankle",
        };
        f.write_str(s)
    }
}

impl FromStr for BodyLocation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "chest" => Ok(BodyLocation::Chest),
            "neck" => Ok(BodyLocation::Neck),
            "wrist" => Ok(BodyLocation::Wrist),
            "waist" => Ok(BodyLocation::Waist),
            "ankle" => Ok(BodyLocation::Ankle),
            other => Err(format!("unknown body location '{other}'")),
        }
    }
}

/// AR(1) Gaussian model of a heart's interval process.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HeartModel {
    pub mean_ipi_ms: f64,
    pub ipi_std_ms: f64,
    /// Lag-1 autocorrelation of successive intervals, in [0, 1).
    pub ar_coefficient: f64,
    pub seed: u64,
}

impl Default for HeartModel {
    fn default() -> Self {
        HeartModel {
            mean_ipi_ms: 850.0,
            ipi_std_ms: 80.0,
            ar_coefficient: 0.3,
            seed: 1,
        }
    }
}

impl HeartModel {
    pub fn validate(&self) -> Result<(), SignalError> {
        if self.mean_ipi_ms.is_nan() || self.mean_ipi_ms <= 0.0 {
            return Err(SignalError::InvalidModel(format!(
                "mean_ipi must be positive, got {}",
                self.mean_ipi_ms
            )));
        }
        if self.ipi_std_ms.is_nan() || self.ipi_std_ms < 0.0 {
            return Err(SignalError::InvalidModel(format!(
                "ipi_std must be non-negative, got {}",
                self.ipi_std_ms
            )));
        }
        if !(0.0..1.0).contains(&self.ar_coefficient) {
            return Err(SignalError::InvalidModel(format!(
                "ar_coefficient must be in [0,1), got {}",
                self.ar_coefficient
            )));
        }
        Ok(())
    }
}

/// One sensor's capture parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SensorConfig {
    pub location: BodyLocation,
    pub sampling_rate_hz: u32,
    /// Additive Gaussian sample noise, as a fraction of pulse amplitude.
    pub noise_std: f64,
    pub propagation_delay_ms: f64,
    /// Per-beat timing jitter (models the low SNR of piezo pickup).
    pub jitter_std_ms: f64,
    pub seed: u64,
}

impl SensorConfig {
    /// Default capture setup for a location: 120 Hz, calibrated noise.
    pub fn for_location(location: BodyLocation) -> Self {
        SensorConfig {
            location,
            sampling_rate_hz: 120,
            noise_std: 0.2,
            propagation_delay_ms: location.default_delay_ms(),
            jitter_std_ms: 4.0,
            seed: location as u64 + 1,
        }
    }

    pub fn validate(&self) -> Result<(), SignalError> {
        if !(40..=400).contains(&self.sampling_rate_hz) {
            return Err(SignalError::InvalidConfig(format!(
                "sampling_rate must be within 40..400 Hz, got {}",
                self.sampling_rate_hz
            )));
        }
        if self.noise_std.is_nan() || self.noise_std < 0.0 {
            return Err(SignalError::InvalidConfig("noise_std must be >= 0".into()));
        }
        if self.propagation_delay_ms.is_nan() || self.propagation_delay_ms < 0.0 {
            return Err(SignalError::InvalidConfig(
                "propagation_delay must be >= 0".into(),
            ));
        }
        if !(0.0..=50.0).contains(&self.jitter_std_ms) {
            return Err(SignalError::InvalidConfig(
                "jitter_std must be in [0, 50] ms".into(),
            ));
        }
        Ok(())
    }
}

/// A uniformly sampled sensor waveform with ground-truth beat annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct PiezoTrace {
    pub samples: Vec<f64>,
    pub sampling_rate_hz: u32,
    /// Exact beat instants the trace was rendered from (jitter and delay
    /// included), strictly increasing.
    pub true_beat_times_ms: Vec<f64>,
    pub location: BodyLocation,
}

impl PiezoTrace {
    pub fn duration_ms(&self) -> f64 {
        self.samples.len() as f64 * 1000.0 / self.sampling_rate_hz as f64
    }

    /// Ground-truth intervals between the rendered beats.
    pub fn true_intervals_ms(&self) -> Vec<f64> {
        self.true_beat_times_ms
            .windows(2)
            .map(|w| w[1] - w[0])
            .collect()
    }
}

/// Draw `count` intervals from the AR(1) model. Deterministic in the seed.
pub fn generate_ipi_series(model: &HeartModel, count: usize) -> Result<IpiSequence, SignalError> {
    model.validate()?;
    if count == 0 {
        return Err(SignalError::InvalidModel("count must be >= 1".into()));
    }
    let mut rng = DetRng::new(model.seed);
    let innovation = model.ipi_std_ms * (1.0 - model.ar_coefficient.powi(2)).sqrt();

    let mut intervals = Vec::with_capacity(count);
    let mut prev = model.mean_ipi_ms + model.ipi_std_ms * rng.next_gaussian();
    prev = prev.max(MIN_IPI_MS);
    intervals.push(prev);
    for _ in 1..count {
        let x = model.mean_ipi_ms
            + model.ar_coefficient * (prev - model.mean_ipi_ms)
            + innovation * rng.next_gaussian();
        let x = x.max(MIN_IPI_MS);
        intervals.push(x);
        prev = x;
    }

    let mut beat_times = Vec::with_capacity(count + 1);
    beat_times.push(0.0);
    for &iv in &intervals {
        beat_times.push(beat_times.last().unwrap() + iv);
    }
    Ok(IpiSequence {
        intervals_ms: intervals,
        beat_times_ms: beat_times,
        source_rate_hz: 0, // continuous-time ground truth, no sampling grid
    })
}

/// SCG morphology (chest/waist): a damped oscillation — a 3 Hz carrier
/// under a Gaussian envelope, peak amplitude 1 at dt = 0. The carrier is
/// slow enough to survive the default Savitzky-Golay window.
fn scg_pulse(dt_ms: f64) -> f64 {
    if dt_ms.abs() > 280.0 {
        return 0.0;
    }
    let env = (-(dt_ms / 110.0).powi(2)).exp();
    env * (2.0 * std::f64::consts::PI * 3.0 * dt_ms / 1000.0).cos()
}

/// BCG morphology (wrist/neck/ankle): a smooth single raised-cosine lobe,
/// 220 ms wide, peak amplitude 1 at dt = 0.
fn bcg_pulse(dt_ms: f64) -> f64 {
    if dt_ms.abs() > 110.0 {
        return 0.0;
    }
    0.5 * (1.0 + (std::f64::consts::PI * dt_ms / 110.0).cos())
}

fn pulse_half_width(location: BodyLocation) -> f64 {
    if location.is_scg() {
        280.0
    } else {
        110.0
    }
}

fn pulse_value(location: BodyLocation, dt_ms: f64) -> f64 {
    if location.is_scg() {
        scg_pulse(dt_ms)
    } else {
        bcg_pulse(dt_ms)
    }
}

/// Render one sensor's waveform from an interval sequence.
///
/// Each beat places one pulse template, centred at
/// `cumulative time + propagation_delay + jitter`; the exact centres are
/// recorded in `true_beat_times_ms`. Gaussian sample noise is added last.
pub fn render_trace(ipis: &IpiSequence, cfg: &SensorConfig) -> Result<PiezoTrace, SignalError> {
    cfg.validate()?;
    if ipis.beat_times_ms.is_empty() {
        return Err(SignalError::InvalidConfig("empty interval sequence".into()));
    }

    let mut jitter_rng = DetRng::new(derive_seed(cfg.seed, 1));
    let mut noise_rng = DetRng::new(derive_seed(cfg.seed, 2));

    let beat_count = ipis.beat_times_ms.len();
    let mut beat_times = Vec::with_capacity(beat_count);
    for &nominal in &ipis.beat_times_ms {
        let jitter = cfg.jitter_std_ms * jitter_rng.next_gaussian();
        beat_times.push(START_PAD_MS + nominal + cfg.propagation_delay_ms + jitter);
    }
    // jitter is small against the 200 ms interval floor, but keep the
    // ground-truth invariant airtight
    for k in 1..beat_times.len() {
        if beat_times[k] <= beat_times[k - 1] {
            beat_times[k] = beat_times[k - 1] + 1e-6;
        }
    }

    let rate = cfg.sampling_rate_hz as f64;
    let ms_per_sample = 1000.0 / rate;
    let duration = beat_times.last().unwrap() + TAIL_PAD_MS;
    let n_samples = (duration / ms_per_sample).ceil() as usize;
    let half_w = pulse_half_width(cfg.location);

    let mut samples = vec![0.0_f64; n_samples];
    for &bt in &beat_times {
        let first = (((bt - half_w) / ms_per_sample).floor().max(0.0)) as usize;
        let last = (((bt + half_w) / ms_per_sample).ceil() as usize).min(n_samples - 1);
        for (i, slot) in samples[first..=last].iter_mut().enumerate() {
            let t = (first + i) as f64 * ms_per_sample;
            *slot += pulse_value(cfg.location, t - bt);
        }
    }
    if cfg.noise_std > 0.0 {
        for s in &mut samples {
            *s += cfg.noise_std * noise_rng.next_gaussian();
        }
    }

    Ok(PiezoTrace {
        samples,
        sampling_rate_hz: cfg.sampling_rate_hz,
        true_beat_times_ms: beat_times,
        location: cfg.location,
    })
}

/// Render several sensors capturing the same heart on a shared clock.
///
/// Jitter and noise are independent per sensor even when configs share a
/// seed value.
pub fn render_body(
    ipis: &IpiSequence,
    cfgs: &[SensorConfig],
) -> Result<Vec<PiezoTrace>, SignalError> {
    if cfgs.len() < 2 {
        return Err(SignalError::TooFewConfigs(cfgs.len()));
    }
    cfgs.iter()
        .enumerate()
        .map(|(idx, cfg)| {
            let mut per_sensor = *cfg;
            per_sensor.seed = derive_seed(cfg.seed, 0x0b0d_1000 + idx as u64);
            render_trace(ipis, &per_sensor)
        })
        .collect()
}

/// Decimate a trace to a rate that divides its sampling rate.
/// Ground-truth beat times are unchanged.
pub fn downsample(trace: &PiezoTrace, target_rate_hz: u32) -> Result<PiezoTrace, SignalError> {
    if target_rate_hz == 0 || !trace.sampling_rate_hz.is_multiple_of(target_rate_hz) {
        return Err(SignalError::RateNotDivisor {
            from_hz: trace.sampling_rate_hz,
            to_hz: target_rate_hz,
        });
    }
    let factor = (trace.sampling_rate_hz / target_rate_hz) as usize;
    Ok(PiezoTrace {
        samples: trace.samples.iter().copied().step_by(factor).collect(),
        sampling_rate_hz: target_rate_hz,
        true_beat_times_ms: trace.true_beat_times_ms.clone(),
        location: trace.location,
    })
}

#[derive(Serialize, Deserialize)]
struct BeatSidecar {
    true_beat_times_ms: Vec<f64>,
}

/// Write a trace as CSV (`sampling_rate,location` header, one amplitude
/// per line) plus a `<stem>.beats.json` sidecar with the ground truth.
pub fn save_trace(trace: &PiezoTrace, csv_path: &Path) -> Result<(), SignalError> {
    let mut out = String::with_capacity(trace.samples.len() * 12 + 64);
    out.push_str("sampling_rate,location\n");
    out.push_str(&format!("{},{}\n", trace.sampling_rate_hz, trace.location));
    for s in &trace.samples {
        out.push_str(&format!("{s}\n"));
    }
    let mut f = fs::File::create(csv_path)?;
    f.write_all(out.as_bytes())?;

    let sidecar = BeatSidecar {
        true_beat_times_ms: trace.true_beat_times_ms.clone(),
    };
    fs::write(
        sidecar_path(csv_path),
        serde_json::to_string_pretty(&sidecar)?,
    )?;
    Ok(())
}

fn sidecar_path(csv_path: &Path) -> std::path::PathBuf {
    let stem = csv_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "trace".into());
    csv_path.with_file_name(format!("{stem}.beats.json"))
}

/// Read a trace CSV written by [`save_trace`]. The sidecar is optional;
/// without it the trace carries no ground-truth annotations.
pub fn load_trace(csv_path: &Path) -> Result<PiezoTrace, SignalError> {
    let text = fs::read_to_string(csv_path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| SignalError::MalformedTrace("empty file".into()))?;
    if header.trim() != "sampling_rate,location" {
        return Err(SignalError::MalformedTrace(format!(
            "unexpected header '{header}'"
        )));
    }
    let meta = lines
        .next()
        .ok_or_else(|| SignalError::MalformedTrace("missing metadata row".into()))?;
    let mut parts = meta.trim().split(',');
    let rate: u32 = parts
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| SignalError::MalformedTrace("bad sampling_rate".into()))?;
    let location: BodyLocation = parts
        .next()
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| SignalError::MalformedTrace("bad location".into()))?;

    let mut samples = Vec::new();
    for line in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line
            .parse()
            .map_err(|_| SignalError::MalformedTrace(format!("bad sample '{line}'")))?;
        samples.push(v);
    }
    if samples.is_empty() {
        return Err(SignalError::MalformedTrace("no samples".into()));
    }

    let beats = match fs::read_to_string(sidecar_path(csv_path)) {
        Ok(json) => serde_json::from_str::<BeatSidecar>(&json)?.true_beat_times_ms,
        Err(_) => Vec::new(),
    };

    Ok(PiezoTrace {
        samples,
        sampling_rate_hz: rate,
        true_beat_times_ms: beats,
        location,
    })
}
