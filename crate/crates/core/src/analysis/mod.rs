//! Statistical evaluation harness: per-bit entropy/mismatch tables,
//! sparsity distributions with their effective/secure margins, a
//! reconciliation benchmark (compressive sensing vs Reed-Solomon), attack
//! simulations, and a randomness-test subset.

mod nist;

pub use nist::{
    approximate_entropy, block_frequency, cumulative_sums, monobit, randomness_suite, runs,
    MIN_BITS,
};

use serde::Serialize;
use thiserror::Error;

use crate::ipi::IpiError;
use crate::protocol::{
    derive_key_pair, PairingParams, PairingSession, ProtocolError, RespondOutcome, Role,
};
use crate::quantizer::{self, BitKey, QuantError};
use crate::reconcile::{self, effective_threshold, ReconcileError};
use crate::rng::{derive_seed, DetRng};
use crate::signalgen::{self, BodyLocation, HeartModel, SensorConfig, SignalError};
use crate::stats::binary_entropy;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("need at least {need} bits, got {got}")]
    TooFewBits { need: usize, got: usize },
    #[error("need at least {need} trials, got {got}")]
    TooFewTrials { need: usize, got: usize },
    #[error("bit table needs keys of uniform width {expected}, found {got}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("no key pairs supplied")]
    NoPairs,
    #[error("passive attack needs at least 2 user models")]
    TooFewUsers,
    #[error("heart model has zero variance; all keys would be identical")]
    DegenerateModel,
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Extraction(#[from] IpiError),
    #[error(transparent)]
    Quantization(#[from] QuantError),
    #[error(transparent)]
    Reconciliation(#[from] ReconcileError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// Per-bit-position entropy and mismatch statistics (index 0 = bit 1, the
/// least significant bit of the Gray word).
#[derive(Debug, Clone, Serialize)]
pub struct BitStats {
    pub per_bit_entropy: Vec<f64>,
    pub per_bit_mismatch: Vec<f64>,
    pub bit_count: usize,
}

/// Tabulate entropy and mismatch per bit position over key pairs holding
/// full `width`-bit words.
pub fn bit_table(pairs: &[(BitKey, BitKey)], width: u8) -> Result<BitStats, AnalysisError> {
    if pairs.is_empty() {
        return Err(AnalysisError::NoPairs);
    }
    let w = width as usize;
    for (a, b) in pairs {
        if a.bits_per_ipi != w || b.bits_per_ipi != w {
            return Err(AnalysisError::WidthMismatch {
                expected: w,
                got: a.bits_per_ipi.max(b.bits_per_ipi),
            });
        }
    }
    let mut ones = vec![0usize; w];
    let mut diff = vec![0usize; w];
    let mut total = vec![0usize; w];
    for (a, b) in pairs {
        let words = a.bits.len().min(b.bits.len()) / w;
        for word in 0..words {
            for bit in 1..=w {
                // storage is MSB-first within each word
                let idx = word * w + (w - bit);
                ones[bit - 1] += a.bits[idx] as usize + b.bits[idx] as usize;
                diff[bit - 1] += usize::from(a.bits[idx] != b.bits[idx]);
                total[bit - 1] += 1;
            }
        }
    }
    let per_bit_entropy = (0..w)
        .map(|k| binary_entropy(ones[k] as f64 / (2 * total[k]) as f64))
        .collect();
    let per_bit_mismatch = (0..w).map(|k| diff[k] as f64 / total[k] as f64).collect();
    Ok(BitStats {
        per_bit_entropy,
        per_bit_mismatch,
        bit_count: total[0],
    })
}

/// Scenario for pipeline-level Monte-Carlo runs: one heart observed by two
/// sensors, plus an independent attacker heart when needed.
#[derive(Debug, Clone, Copy)]
pub struct PipelineConfig {
    pub heart: HeartModel,
    pub location_a: BodyLocation,
    pub location_b: BodyLocation,
    /// Beats generated per session (~5 minutes at 850 ms by default).
    pub beats: usize,
    pub pairing: PairingParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            heart: HeartModel::default(),
            location_a: BodyLocation::Chest,
            location_b: BodyLocation::Waist,
            beats: 360,
            pairing: PairingParams::default(),
        }
    }
}

impl PipelineConfig {
    /// Derive the two legitimate keys for one seeded session.
    pub fn key_pair(&self, seed: u64) -> Result<(BitKey, BitKey), AnalysisError> {
        let heart = HeartModel {
            seed: derive_seed(seed, 0xabcd),
            ..self.heart
        };
        let ipis = signalgen::generate_ipi_series(&heart, self.beats)?;
        let mut cfg_a = SensorConfig::for_location(self.location_a);
        cfg_a.seed = derive_seed(seed, 1);
        let mut cfg_b = SensorConfig::for_location(self.location_b);
        cfg_b.seed = derive_seed(seed, 2);
        let traces = signalgen::render_body(&ipis, &[cfg_a, cfg_b])?;
        let (a, b, _) = derive_key_pair(&traces[0], &traces[1], &self.pairing)?;
        Ok((a, b))
    }

    /// Derive a single key for one seeded observer of `heart`.
    pub fn single_key(
        &self,
        heart: &HeartModel,
        sensor_seed: u64,
    ) -> Result<BitKey, AnalysisError> {
        let ipis = signalgen::generate_ipi_series(heart, self.beats)?;
        let mut cfg = SensorConfig::for_location(self.location_a);
        cfg.seed = sensor_seed;
        let trace = signalgen::render_trace(&ipis, &cfg)?;
        let seq = crate::ipi::extract_ipis_with(
            &trace,
            &crate::ipi::SmootherConfig::for_rate(trace.sampling_rate_hz),
            self.pairing.min_separation_ms,
            self.pairing.prominence_fraction,
        )?;
        let model = quantizer::fit_model(&seq, self.pairing.n_levels)?;
        let key = quantizer::build_key(&seq, &model, self.pairing.kept_band)?;
        if key.len() < self.pairing.session.n {
            return Err(ProtocolError::NotEnoughBeats {
                need: self.pairing.session.n.div_ceil(key.bits_per_ipi),
                got: key.len() / key.bits_per_ipi,
            }
            .into());
        }
        Ok(key.truncated(self.pairing.session.n))
    }
}

/// One trial of the sparsity census.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SparsityTrial {
    pub s_mismatch: usize,
    pub s_key: usize,
    pub s_attacker_mismatch: usize,
    pub p_threshold: f64,
    pub q_threshold: f64,
}

/// Distribution of sparsities and margins over seeded pipeline runs.
#[derive(Debug, Clone, Serialize)]
pub struct SparsityReport {
    pub trials: Vec<SparsityTrial>,
    pub fraction_p_at_least_m: f64,
    pub m: usize,
    pub n: usize,
}

/// Census of `S_mismatch`, `S_key`, and attacker mismatch over seeded
/// pipeline runs, with the derived P/Q margins.
pub fn sparsity_histogram(
    trials: usize,
    config: &PipelineConfig,
    seed: u64,
) -> Result<SparsityReport, AnalysisError> {
    if trials < 100 {
        return Err(AnalysisError::TooFewTrials {
            need: 100,
            got: trials,
        });
    }
    let n = config.pairing.session.n;
    let m = config.pairing.session.m;
    let mut rows = Vec::with_capacity(trials);
    let mut p_exceed = 0usize;
    for t in 0..trials {
        let trial_seed = derive_seed(seed, t as u64);
        let (a, b) = config.key_pair(trial_seed)?;
        // an independent user observed with the same pipeline
        let eve_heart = HeartModel {
            seed: derive_seed(trial_seed, 0xeeu64),
            ..config.heart
        };
        let eve = config.single_key(&eve_heart, derive_seed(trial_seed, 3))?;

        let s_mismatch = a.hamming_distance(&b);
        let s_key = reconcile::sparsity_bits(&a.bits);
        let s_attacker = a.hamming_distance(&eve);
        let p = effective_threshold(s_mismatch, n);
        if p >= m as f64 {
            p_exceed += 1;
        }
        rows.push(SparsityTrial {
            s_mismatch,
            s_key,
            s_attacker_mismatch: s_attacker,
            p_threshold: p,
            q_threshold: s_key.min(s_attacker) as f64,
        });
    }
    Ok(SparsityReport {
        fraction_p_at_least_m: p_exceed as f64 / trials as f64,
        trials: rows,
        m,
        n,
    })
}

/// Reconciliation method under benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cs,
    Rs,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Cs => "cs",
            Method::Rs => "rs",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cs" => Ok(Method::Cs),
            "rs" => Ok(Method::Rs),
            other => Err(format!("unknown method '{other}' (expected cs or rs)")),
        }
    }
}

/// Outcome of a reconciliation benchmark run.
#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub method: Method,
    pub n: usize,
    pub m: usize,
    pub mismatch_rate: f64,
    pub trials: usize,
    pub successes: usize,
    pub success_fraction: f64,
    pub per_trial: Vec<bool>,
}

/// Exact-recovery rate under uniformly random mismatch patterns of
/// `round(mismatch_rate * n)` flips. A trial succeeds only when the
/// reconciled key equals the reference key bit for bit. Deterministic in
/// `seed` and independent of `threads`.
pub fn benchmark_reconciliation(
    method: Method,
    n: usize,
    m: usize,
    mismatch_rate: f64,
    trials: usize,
    seed: u64,
    threads: usize,
) -> Result<BenchReport, AnalysisError> {
    if trials == 0 {
        return Err(AnalysisError::TooFewTrials { need: 1, got: 0 });
    }
    let flips = ((mismatch_rate * n as f64).round() as usize).min(n);
    let threads = threads.max(1).min(trials);

    let run_trial = |t: usize| -> Result<bool, AnalysisError> {
        let trial_seed = derive_seed(seed, t as u64);
        let mut rng = DetRng::new(trial_seed);
        let reference = BitKey {
            bits: (0..n).map(|_| rng.next_index(2) as u8).collect(),
            bits_per_ipi: 3,
            kept_band: (4, 6),
        };
        let mut other = reference.clone();
        for &i in &rng.distinct_indices(n, flips) {
            other.bits[i] ^= 1;
        }
        match method {
            Method::Cs => {
                let matrix = reconcile::make_matrix(derive_seed(trial_seed, 1), m, n)?;
                let sketch = reconcile::project(&reference, &matrix)?;
                match reconcile::recover_mismatch(&sketch, &other, &matrix, 1e-6) {
                    Ok(delta) => Ok(other.xor(&delta) == reference),
                    Err(ReconcileError::Solver(_)) => Ok(false),
                    Err(e) => Err(e.into()),
                }
            }
            Method::Rs => {
                let (offset, _check) =
                    reconcile::rs_reconcile_offset(&reference, derive_seed(trial_seed, 2));
                match reconcile::rs_reconcile_apply(&offset, &other) {
                    Ok(recovered) => Ok(recovered == reference),
                    Err(ReconcileError::RsDecodeFailure) => Ok(false),
                    Err(e) => Err(e.into()),
                }
            }
        }
    };

    let mut per_trial = vec![false; trials];
    if threads == 1 {
        for (t, slot) in per_trial.iter_mut().enumerate() {
            *slot = run_trial(t)?;
        }
    } else {
        let chunk = trials.div_ceil(threads);
        let results: Vec<Result<Vec<bool>, AnalysisError>> = std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for w in 0..threads {
                let lo = w * chunk;
                let hi = ((w + 1) * chunk).min(trials);
                let run = &run_trial;
                handles.push(scope.spawn(move || (lo..hi).map(run).collect()));
            }
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        let mut cursor = 0usize;
        for r in results {
            for v in r? {
                per_trial[cursor] = v;
                cursor += 1;
            }
        }
    }

    let successes = per_trial.iter().filter(|&&s| s).count();
    Ok(BenchReport {
        method,
        n,
        m,
        mismatch_rate,
        trials,
        successes,
        success_fraction: successes as f64 / trials as f64,
        per_trial,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    Passive,
    Presentation,
}

/// Result of an attack simulation campaign.
#[derive(Debug, Clone, Serialize)]
pub struct AttackReport {
    pub kind: AttackKind,
    pub agreement_rates: Vec<f64>,
    pub success_count: usize,
    pub trials: usize,
}

impl AttackReport {
    pub fn mean_agreement(&self) -> f64 {
        self.agreement_rates.iter().sum::<f64>() / self.agreement_rates.len().max(1) as f64
    }

    pub fn max_agreement(&self) -> f64 {
        self.agreement_rates.iter().fold(0.0, |a, &b| a.max(b))
    }

    /// 95% normal-approximation confidence interval of the mean agreement.
    pub fn agreement_ci95(&self) -> (f64, f64) {
        let n = self.agreement_rates.len() as f64;
        let mean = self.mean_agreement();
        let var = self
            .agreement_rates
            .iter()
            .map(|a| (a - mean) * (a - mean))
            .sum::<f64>()
            / (n - 1.0).max(1.0);
        let half = 1.96 * (var / n).sqrt();
        (mean - half, mean + half)
    }
}

/// Run one protocol attempt where the attacker key answers the victim key.
/// Returns (verified, agreement rate).
fn attack_attempt(
    victim: BitKey,
    attacker: BitKey,
    params: &PairingParams,
) -> Result<(bool, f64), AnalysisError> {
    let n = victim.bits.len();
    let agreement = 1.0 - victim.hamming_distance(&attacker) as f64 / n as f64;
    let mut alice = PairingSession::new(Role::Initiator, params.session);
    let msg = alice.initiate(victim)?;
    let mut eve = PairingSession::new(Role::Responder, params.session);
    eve.load_key(attacker)?;
    let verified = matches!(eve.respond(&msg)?, RespondOutcome::Verified(_));
    Ok((verified, agreement))
}

/// Passive eavesdropping: the attacker responds to a victim's exchange
/// with a key derived from their *own* heartbeat, captured at the same
/// body location.
pub fn simulate_passive_attack(
    users: &[HeartModel],
    trials: usize,
    config: &PipelineConfig,
    seed: u64,
) -> Result<AttackReport, AnalysisError> {
    if users.len() < 2 {
        return Err(AnalysisError::TooFewUsers);
    }
    let mut agreement_rates = Vec::with_capacity(trials);
    let mut success_count = 0usize;
    for t in 0..trials {
        let trial_seed = derive_seed(seed, t as u64);
        // rotate over ordered (victim, attacker) pairs
        let v = t % users.len();
        let e = (v + 1 + (t / users.len()) % (users.len() - 1)) % users.len();
        let victim_heart = HeartModel {
            seed: derive_seed(trial_seed, 10 + v as u64),
            ..users[v]
        };
        let eve_heart = HeartModel {
            seed: derive_seed(trial_seed, 10 + e as u64),
            ..users[e]
        };
        let victim = config.single_key(&victim_heart, derive_seed(trial_seed, 1))?;
        let attacker = config.single_key(&eve_heart, derive_seed(trial_seed, 2))?;
        let (verified, agreement) = attack_attempt(victim, attacker, &config.pairing)?;
        success_count += usize::from(verified);
        agreement_rates.push(agreement);
    }
    Ok(AttackReport {
        kind: AttackKind::Passive,
        agreement_rates,
        success_count,
        trials,
    })
}

/// Presentation attack: historical interval data from the *same* user
/// (the first half of a session) replays against keys from the second
/// half.
pub fn simulate_presentation_attack(
    model: &HeartModel,
    trials: usize,
    config: &PipelineConfig,
    seed: u64,
) -> Result<AttackReport, AnalysisError> {
    if model.ipi_std_ms <= 0.0 {
        return Err(AnalysisError::DegenerateModel);
    }
    let mut agreement_rates = Vec::with_capacity(trials);
    let mut success_count = 0usize;
    for t in 0..trials {
        let trial_seed = derive_seed(seed, t as u64);
        let heart = HeartModel {
            seed: derive_seed(trial_seed, 0xabu64),
            ..*model
        };
        // one long recording segmented into two equal parts
        let long = signalgen::generate_ipi_series(&heart, 2 * config.beats)?;
        let halves = split_intervals(&long, config.beats);
        let render = |ipis: &crate::ipi::IpiSequence, stream: u64| {
            let mut cfg = SensorConfig::for_location(config.location_a);
            cfg.seed = derive_seed(trial_seed, stream);
            signalgen::render_trace(ipis, &cfg)
        };
        let historical_trace = render(&halves.0, 1)?;
        let current_trace = render(&halves.1, 2)?;
        let key_of = |trace: &signalgen::PiezoTrace| -> Result<BitKey, AnalysisError> {
            let seq = crate::ipi::extract_ipis_with(
                trace,
                &crate::ipi::SmootherConfig::for_rate(trace.sampling_rate_hz),
                config.pairing.min_separation_ms,
                config.pairing.prominence_fraction,
            )?;
            let model = quantizer::fit_model(&seq, config.pairing.n_levels)?;
            let key = quantizer::build_key(&seq, &model, config.pairing.kept_band)?;
            Ok(key.truncated(config.pairing.session.n))
        };
        let victim = key_of(&current_trace)?;
        let attacker = key_of(&historical_trace)?;
        let (verified, agreement) = attack_attempt(victim, attacker, &config.pairing)?;
        success_count += usize::from(verified);
        agreement_rates.push(agreement);
    }
    Ok(AttackReport {
        kind: AttackKind::Presentation,
        agreement_rates,
        success_count,
        trials,
    })
}

fn split_intervals(
    seq: &crate::ipi::IpiSequence,
    at: usize,
) -> (crate::ipi::IpiSequence, crate::ipi::IpiSequence) {
    let rebuild = |intervals: &[f64]| {
        let mut times = vec![0.0];
        for &iv in intervals {
            times.push(times.last().unwrap() + iv);
        }
        crate::ipi::IpiSequence {
            intervals_ms: intervals.to_vec(),
            beat_times_ms: times,
            source_rate_hz: seq.source_rate_hz,
        }
    };
    (
        rebuild(&seq.intervals_ms[..at]),
        rebuild(&seq.intervals_ms[at..]),
    )
}

/// Protocol-level self-pairing control: the very same key on both sides
/// must agree perfectly.
pub fn self_pairing_agreement(config: &PipelineConfig, seed: u64) -> Result<f64, AnalysisError> {
    let key = config.single_key(
        &HeartModel {
            seed: derive_seed(seed, 1),
            ..config.heart
        },
        derive_seed(seed, 2),
    )?;
    let (verified, agreement) = attack_attempt(key.clone(), key, &config.pairing)?;
    debug_assert!(verified);
    Ok(agreement)
}

/// MAC-tamper campaign: corrupt one sketch value per message and count
/// false verifications (there must be none). Trials are independent and
/// run on `threads` workers; the count is order-free.
pub fn mac_tamper_campaign(
    sessions: usize,
    config: &PipelineConfig,
    seed: u64,
    threads: usize,
) -> Result<usize, AnalysisError> {
    let key = config.single_key(
        &HeartModel {
            seed: derive_seed(seed, 7),
            ..config.heart
        },
        derive_seed(seed, 8),
    )?;
    let params = config.pairing;

    let run_one = |t: usize| -> Result<bool, AnalysisError> {
        let mut rng = DetRng::new(derive_seed(seed, 100 + t as u64));
        let mut alice = PairingSession::new(Role::Initiator, params.session);
        let msg = alice.initiate(key.clone())?;
        let mut tampered = msg.clone();
        let idx = rng.next_index(tampered.y_values.len());
        let delta = 1 + rng.next_index(16) as i16;
        tampered.y_values[idx] = tampered.y_values[idx].wrapping_add(delta);
        let mut bob = PairingSession::new(Role::Responder, params.session);
        bob.load_key(key.clone())?;
        Ok(matches!(
            bob.respond(&tampered)?,
            RespondOutcome::Verified(_)
        ))
    };

    let threads = threads.max(1).min(sessions.max(1));
    if threads == 1 {
        let mut false_verifies = 0usize;
        for t in 0..sessions {
            false_verifies += usize::from(run_one(t)?);
        }
        return Ok(false_verifies);
    }
    let chunk = sessions.div_ceil(threads);
    let counts: Vec<Result<usize, AnalysisError>> = std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for w in 0..threads {
            let lo = w * chunk;
            let hi = ((w + 1) * chunk).min(sessions);
            let run = &run_one;
            handles.push(scope.spawn(move || {
                let mut acc = 0usize;
                for t in lo..hi {
                    acc += usize::from(run(t)?);
                }
                Ok(acc)
            }));
        }
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut false_verifies = 0usize;
    for c in counts {
        false_verifies += c?;
    }
    Ok(false_verifies)
}
