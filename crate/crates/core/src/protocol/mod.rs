//! The pairing protocol: one side sends its compressed key with a MAC
//! keyed by the raw key itself; the other corrects its own key via sparse
//! recovery and verifies the MAC with the corrected candidate, which
//! authenticates the message and confirms reconciliation at once. The
//! agreed raw key is hashed (SHA2-256) into the final session key, and an
//! authenticated notification closes the loop.

mod transport;
mod wire;

pub use transport::{loopback_pair, LoopbackTransport, TcpTransport, Transport, TransportError};
pub use wire::{key_tag, tag_bytes, Notification, ReconMessage, WireError, TAG_LEN};

use std::time::{Duration, SystemTime};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ipi::{self, IpiError, IpiSequence, SmootherConfig};
use crate::quantizer::{self, BitKey, QuantError};
use crate::reconcile::{self, ReconcileError, SecurityMargin};
use crate::signalgen::PiezoTrace;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("operation invalid in state {0:?}")]
    WrongState(SessionState),
    #[error("key length {got} does not match session length {expected}")]
    KeyLength { expected: usize, got: usize },
    #[error("aligned interval sequences too short: {got} intervals, need {need}")]
    NotEnoughBeats { need: usize, got: usize },
    #[error(transparent)]
    Extraction(#[from] IpiError),
    #[error(transparent)]
    Quantization(#[from] QuantError),
    #[error(transparent)]
    Reconciliation(#[from] ReconcileError),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

/// Why a session ended in `Failed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailReason {
    /// MAC verification failed (tampering or uncorrected mismatch).
    MacMismatch,
    /// The sparse solver did not converge.
    SolverFailure,
    /// The peer's message was malformed.
    Malformed,
    /// Protocol parameters in the message differ from the session's.
    ParameterMismatch,
    /// The peer reported failure.
    PeerRejected,
    /// The transport timed out or closed.
    ChannelLost,
}

impl std::fmt::Display for FailReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            FailReason::MacMismatch => "mac-mismatch",
            FailReason::SolverFailure => "solver-failure",
            FailReason::Malformed => "malformed-message",
            FailReason::ParameterMismatch => "parameter-mismatch",
            FailReason::PeerRejected => "peer-rejected",
            FailReason::ChannelLost => "channel-lost",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Initiator,
    Responder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionState {
    Idle,
    Keyed,
    Sent,
    Verified,
    Failed,
}

/// The derived 256-bit session key with its freshness window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FinalKey {
    pub bytes: [u8; 32],
    pub created_at: SystemTime,
    pub valid_for: Duration,
}

impl FinalKey {
    fn derive(raw: &BitKey, valid_for: Duration) -> Self {
        FinalKey {
            bytes: Sha256::digest(raw.to_bytes()).into(),
            created_at: SystemTime::now(),
            valid_for,
        }
    }

    pub fn hex(&self) -> String {
        self.bytes.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn is_expired_at(&self, now: SystemTime) -> bool {
        now.duration_since(self.created_at)
            .map(|age| age > self.valid_for)
            .unwrap_or(false)
    }

    pub fn is_expired(&self) -> bool {
        self.is_expired_at(SystemTime::now())
    }
}

/// Protocol parameters both sides must agree on out of band.
#[derive(Debug, Clone, Copy)]
pub struct SessionConfig {
    pub matrix_seed: u64,
    pub m: usize,
    pub n: usize,
    pub epsilon: f64,
    /// Freshness window of the final key.
    pub key_validity: Duration,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            matrix_seed: 0x4831_3242_5345_5544, // arbitrary public default
            m: reconcile::DEFAULT_M,
            n: reconcile::DEFAULT_N,
            epsilon: reconcile::DEFAULT_EPSILON,
            key_validity: Duration::from_secs(300),
        }
    }
}

/// One half of a pairing run.
#[derive(Debug)]
pub struct PairingSession {
    pub role: Role,
    config: SessionConfig,
    state: SessionState,
    raw_key: Option<BitKey>,
    final_key: Option<FinalKey>,
    fail_reason: Option<FailReason>,
}

impl PairingSession {
    pub fn new(role: Role, config: SessionConfig) -> Self {
        PairingSession {
            role,
            config,
            state: SessionState::Idle,
            raw_key: None,
            final_key: None,
            fail_reason: None,
        }
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    /// The final key, present exactly in the `Verified` state.
    pub fn final_key(&self) -> Option<&FinalKey> {
        self.final_key.as_ref()
    }

    pub fn fail_reason(&self) -> Option<FailReason> {
        self.fail_reason
    }

    /// Load the locally derived raw key (responder path; the initiator
    /// passes its key to [`initiate`](Self::initiate) directly).
    pub fn load_key(&mut self, key: BitKey) -> Result<(), ProtocolError> {
        if self.state != SessionState::Idle {
            return Err(ProtocolError::WrongState(self.state));
        }
        self.check_key(&key)?;
        self.raw_key = Some(key);
        self.state = SessionState::Keyed;
        Ok(())
    }

    fn check_key(&self, key: &BitKey) -> Result<(), ProtocolError> {
        if key.bits.len() != self.config.n {
            return Err(ProtocolError::KeyLength {
                expected: self.config.n,
                got: key.bits.len(),
            });
        }
        Ok(())
    }

    /// Initiator: project the key and produce the tagged exchange message.
    pub fn initiate(&mut self, key: BitKey) -> Result<ReconMessage, ProtocolError> {
        if self.role != Role::Initiator || self.state != SessionState::Idle {
            return Err(ProtocolError::WrongState(self.state));
        }
        self.check_key(&key)?;
        let matrix = reconcile::make_matrix(self.config.matrix_seed, self.config.m, self.config.n)?;
        let sketch = reconcile::project(&key, &matrix)?;
        let y_values: Vec<i16> = sketch.values.iter().map(|&v| v as i16).collect();
        let msg = ReconMessage::build(self.config.matrix_seed, self.config.n, y_values, &key);
        self.raw_key = Some(key);
        self.state = SessionState::Sent;
        Ok(msg)
    }

    fn fail(&mut self, reason: FailReason) -> FailReason {
        self.state = SessionState::Failed;
        self.fail_reason = Some(reason);
        reason
    }

    /// Responder: correct the local key against the received sketch and
    /// verify the MAC with the corrected candidate.
    pub fn respond(&mut self, msg: &ReconMessage) -> Result<RespondOutcome, ProtocolError> {
        if self.role != Role::Responder || self.state != SessionState::Keyed {
            return Err(ProtocolError::WrongState(self.state));
        }
        let local = self.raw_key.clone().expect("keyed state holds a key");

        if msg.matrix_seed != self.config.matrix_seed
            || msg.m as usize != self.config.m
            || msg.n as usize != self.config.n
        {
            return Ok(RespondOutcome::Failed(
                self.fail(FailReason::ParameterMismatch),
            ));
        }

        let matrix = reconcile::make_matrix(msg.matrix_seed, msg.m as usize, msg.n as usize)?;
        let remote_sketch = reconcile::CompressedKey {
            values: msg.y_values.iter().map(|&v| v as i32).collect(),
            matrix_seed: msg.matrix_seed,
            n_bits: msg.n as usize,
        };
        let delta =
            match reconcile::recover_mismatch(&remote_sketch, &local, &matrix, self.config.epsilon)
            {
                Ok(delta) => delta,
                Err(ReconcileError::Solver(_)) => {
                    return Ok(RespondOutcome::Failed(self.fail(FailReason::SolverFailure)))
                }
                Err(other) => return Err(other.into()),
            };
        let candidate = local.xor(&delta);

        if msg.verify(&candidate) {
            let final_key = FinalKey::derive(&candidate, self.config.key_validity);
            self.raw_key = Some(candidate);
            self.final_key = Some(final_key.clone());
            self.state = SessionState::Verified;
            Ok(RespondOutcome::Verified(final_key))
        } else {
            // the message is treated as discarded
            Ok(RespondOutcome::Failed(self.fail(FailReason::MacMismatch)))
        }
    }

    /// Responder: notify the initiator of the final result.
    pub fn confirm(&self) -> Result<Notification, ProtocolError> {
        match self.state {
            SessionState::Verified => {
                let fk = self.final_key.as_ref().expect("verified implies final key");
                Ok(Notification::success(&fk.bytes))
            }
            SessionState::Failed => Ok(Notification::failure()),
            other => Err(ProtocolError::WrongState(other)),
        }
    }

    /// Initiator: act on the responder's notification. Verification keys
    /// the tag with this side's own derived final key, so a forged or
    /// replayed success cannot pass.
    pub fn process_confirmation(
        &mut self,
        notif: &Notification,
    ) -> Result<SessionState, ProtocolError> {
        if self.role != Role::Initiator || self.state != SessionState::Sent {
            return Err(ProtocolError::WrongState(self.state));
        }
        if !notif.success {
            self.fail(FailReason::PeerRejected);
            return Ok(self.state);
        }
        let own = FinalKey::derive(
            self.raw_key.as_ref().expect("sent state holds a key"),
            self.config.key_validity,
        );
        if notif.verify(&own.bytes) {
            self.final_key = Some(own);
            self.state = SessionState::Verified;
        } else {
            self.fail(FailReason::MacMismatch);
        }
        Ok(self.state)
    }

    /// Forget all session material and return to `Idle`.
    pub fn reset(&mut self) {
        self.raw_key = None;
        self.final_key = None;
        self.fail_reason = None;
        self.state = SessionState::Idle;
    }
}

/// Result of the responder's verification step.
#[derive(Debug, Clone)]
pub enum RespondOutcome {
    Verified(FinalKey),
    Failed(FailReason),
}

/// Terminal result of a full protocol run over a transport.
#[derive(Debug, Clone)]
pub enum ProtocolOutcome {
    Verified(FinalKey),
    Failed(FailReason),
}

impl ProtocolOutcome {
    pub fn is_verified(&self) -> bool {
        matches!(self, ProtocolOutcome::Verified(_))
    }
}

/// Drive the initiator half of a session over a transport.
pub fn run_initiator(
    session: &mut PairingSession,
    key: BitKey,
    transport: &mut dyn Transport,
) -> Result<ProtocolOutcome, ProtocolError> {
    let msg = session.initiate(key)?;
    if transport.send(&msg.to_bytes()).is_err() {
        return Ok(ProtocolOutcome::Failed(
            session.fail(FailReason::ChannelLost),
        ));
    }
    let frame = match transport.recv() {
        Ok(f) => f,
        Err(_) => {
            return Ok(ProtocolOutcome::Failed(
                session.fail(FailReason::ChannelLost),
            ))
        }
    };
    let notif = match Notification::parse(&frame) {
        Ok(n) => n,
        Err(_) => return Ok(ProtocolOutcome::Failed(session.fail(FailReason::Malformed))),
    };
    session.process_confirmation(&notif)?;
    Ok(match session.state {
        SessionState::Verified => {
            ProtocolOutcome::Verified(session.final_key.clone().expect("verified"))
        }
        _ => ProtocolOutcome::Failed(session.fail_reason.unwrap_or(FailReason::PeerRejected)),
    })
}

/// Drive the responder half of a session over a transport.
pub fn run_responder(
    session: &mut PairingSession,
    key: BitKey,
    transport: &mut dyn Transport,
) -> Result<ProtocolOutcome, ProtocolError> {
    session.load_key(key)?;
    let frame = match transport.recv() {
        Ok(f) => f,
        Err(_) => {
            return Ok(ProtocolOutcome::Failed(
                session.fail(FailReason::ChannelLost),
            ))
        }
    };
    let outcome = match ReconMessage::parse(&frame) {
        Ok(msg) => session.respond(&msg)?,
        Err(_) => RespondOutcome::Failed(session.fail(FailReason::Malformed)),
    };
    let notif = session.confirm()?;
    if transport.send(&notif.to_bytes()).is_err() {
        return Ok(ProtocolOutcome::Failed(
            session.fail(FailReason::ChannelLost),
        ));
    }
    Ok(match outcome {
        RespondOutcome::Verified(fk) => ProtocolOutcome::Verified(fk),
        RespondOutcome::Failed(reason) => ProtocolOutcome::Failed(reason),
    })
}

/// Everything the full pipeline needs to turn two traces into keys.
#[derive(Debug, Clone, Copy)]
pub struct PairingParams {
    pub session: SessionConfig,
    pub n_levels: usize,
    pub kept_band: (u8, u8),
    pub max_align_offset_ms: f64,
    pub min_separation_ms: f64,
    pub prominence_fraction: f64,
}

impl Default for PairingParams {
    fn default() -> Self {
        PairingParams {
            session: SessionConfig::default(),
            n_levels: quantizer::DEFAULT_LEVELS,
            kept_band: quantizer::DEFAULT_BAND,
            max_align_offset_ms: ipi::DEFAULT_MAX_OFFSET_MS,
            min_separation_ms: ipi::DEFAULT_MIN_SEPARATION_MS,
            prominence_fraction: ipi::DEFAULT_PROMINENCE_FRACTION,
        }
    }
}

/// Full-pipeline diagnostics for one pairing attempt.
#[derive(Debug, Clone)]
pub struct PairingReport {
    pub verified: bool,
    pub fail_reason: Option<FailReason>,
    pub final_key_initiator: Option<String>,
    pub final_key_responder: Option<String>,
    /// Raw-key disagreement before reconciliation.
    pub mismatch_bits: usize,
    pub mismatch_rate: f64,
    pub margin: SecurityMargin,
    pub aligned_intervals: usize,
}

/// Run the whole pipeline on two traces captured from one body: extract,
/// align, quantize independently, then pair over a loopback channel.
pub fn pair_end_to_end(
    trace_initiator: &PiezoTrace,
    trace_responder: &PiezoTrace,
    params: &PairingParams,
) -> Result<PairingReport, ProtocolError> {
    let (key_a, key_b, aligned) = derive_key_pair(trace_initiator, trace_responder, params)?;

    let mismatch_bits = key_a.hamming_distance(&key_b);
    let n = params.session.n;
    let margin = reconcile::security_margin(
        mismatch_bits,
        reconcile::sparsity_bits(&key_a.bits),
        n / 2, // nominal attacker mismatch for reporting
        n,
        params.session.m,
    );

    let mut alice = PairingSession::new(Role::Initiator, params.session);
    let mut bob = PairingSession::new(Role::Responder, params.session);
    let (mut ta, mut tb) = loopback_pair();

    let key_a_clone = key_a.clone();
    let a_handle = std::thread::spawn(move || {
        let out = run_initiator(&mut alice, key_a_clone, &mut ta);
        (alice, out)
    });
    let outcome_b = run_responder(&mut bob, key_b, &mut tb)?;
    let (alice, outcome_a) = a_handle.join().expect("initiator thread");
    let outcome_a = outcome_a?;

    let verified = outcome_a.is_verified() && outcome_b.is_verified();
    Ok(PairingReport {
        verified,
        fail_reason: bob.fail_reason().or(alice.fail_reason()),
        final_key_initiator: match &outcome_a {
            ProtocolOutcome::Verified(fk) => Some(fk.hex()),
            ProtocolOutcome::Failed(_) => None,
        },
        final_key_responder: match &outcome_b {
            ProtocolOutcome::Verified(fk) => Some(fk.hex()),
            ProtocolOutcome::Failed(_) => None,
        },
        mismatch_bits,
        mismatch_rate: mismatch_bits as f64 / n as f64,
        margin,
        aligned_intervals: aligned,
    })
}

/// Extraction + alignment + independent quantization for both traces.
/// Returns the two N-bit keys and the aligned interval count.
pub fn derive_key_pair(
    trace_a: &PiezoTrace,
    trace_b: &PiezoTrace,
    params: &PairingParams,
) -> Result<(BitKey, BitKey, usize), ProtocolError> {
    let extract = |trace: &PiezoTrace| {
        ipi::extract_ipis_with(
            trace,
            &SmootherConfig::for_rate(trace.sampling_rate_hz),
            params.min_separation_ms,
            params.prominence_fraction,
        )
    };
    let seq_a = extract(trace_a)?;
    let seq_b = extract(trace_b)?;
    let (al_a, al_b) = ipi::align(&seq_a, &seq_b, params.max_align_offset_ms)?;

    let band_width = (params.kept_band.1 - params.kept_band.0 + 1) as usize;
    let need = params.session.n.div_ceil(band_width);
    if al_a.len() < need {
        return Err(ProtocolError::NotEnoughBeats {
            need,
            got: al_a.len(),
        });
    }

    let key_of = |aligned: &IpiSequence| -> Result<BitKey, ProtocolError> {
        let model = quantizer::fit_model(aligned, params.n_levels)?;
        let key = quantizer::build_key(aligned, &model, params.kept_band)?;
        Ok(key.truncated(params.session.n))
    };
    let key_a = key_of(&al_a)?;
    let key_b = key_of(&al_b)?;
    Ok((key_a, key_b, al_a.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::DetRng;
    use crate::signalgen::{
        generate_ipi_series, render_body, BodyLocation, HeartModel, SensorConfig,
    };

    fn random_key(n: usize, seed: u64) -> BitKey {
        let mut rng = DetRng::new(seed);
        BitKey {
            bits: (0..n).map(|_| rng.next_index(2) as u8).collect(),
            bits_per_ipi: 3,
            kept_band: (4, 6),
        }
    }

    fn flip_bits(key: &BitKey, count: usize, seed: u64) -> BitKey {
        let mut rng = DetRng::new(seed);
        let mut out = key.clone();
        for &i in &rng.distinct_indices(key.bits.len(), count) {
            out.bits[i] ^= 1;
        }
        out
    }

    fn run_pair(key_a: BitKey, key_b: BitKey) -> (ProtocolOutcome, ProtocolOutcome) {
        let cfg = SessionConfig::default();
        let mut alice = PairingSession::new(Role::Initiator, cfg);
        let mut bob = PairingSession::new(Role::Responder, cfg);
        let (mut ta, mut tb) = loopback_pair();
        let h = std::thread::spawn(move || (run_initiator(&mut alice, key_a, &mut ta), alice));
        let out_b = run_responder(&mut bob, key_b, &mut tb).unwrap();
        let (out_a, _alice) = h.join().unwrap();
        (out_a.unwrap(), out_b)
    }

    #[test]
    fn message_values_fit_the_sketch_range() {
        let cfg = SessionConfig::default();
        let mut alice = PairingSession::new(Role::Initiator, cfg);
        let msg = alice.initiate(random_key(128, 1)).unwrap();
        assert_eq!(msg.y_values.len(), 50);
        assert!(msg.y_values.iter().all(|&v| (-128..=128).contains(&v)));
        assert_eq!(alice.state(), SessionState::Sent);
    }

    #[test]
    fn identical_keys_verify_with_equal_final_keys() {
        let key = random_key(128, 2);
        let (a, b) = run_pair(key.clone(), key);
        match (a, b) {
            (ProtocolOutcome::Verified(fa), ProtocolOutcome::Verified(fb)) => {
                assert_eq!(fa.bytes, fb.bytes);
            }
            other => panic!("expected both verified, got {other:?}"),
        }
    }

    #[test]
    fn eight_bit_mismatch_verifies_end_to_end() {
        let key = random_key(128, 3);
        let other = flip_bits(&key, 8, 30);
        let (a, b) = run_pair(key, other);
        match (a, b) {
            (ProtocolOutcome::Verified(fa), ProtocolOutcome::Verified(fb)) => {
                assert_eq!(fa.bytes, fb.bytes);
            }
            other => panic!("expected both verified, got {other:?}"),
        }
    }

    #[test]
    fn tampered_message_fails_mac() {
        let cfg = SessionConfig::default();
        let mut alice = PairingSession::new(Role::Initiator, cfg);
        let key = random_key(128, 4);
        let mut msg = alice.initiate(key.clone()).unwrap();
        msg.y_values[7] += 1; // in-transit modification
        let mut bob = PairingSession::new(Role::Responder, cfg);
        bob.load_key(key).unwrap();
        match bob.respond(&msg).unwrap() {
            RespondOutcome::Failed(FailReason::MacMismatch) => {}
            other => panic!("expected mac failure, got {other:?}"),
        }
        assert_eq!(bob.state(), SessionState::Failed);
    }

    #[test]
    fn wrong_state_calls_are_rejected() {
        let cfg = SessionConfig::default();
        let mut s = PairingSession::new(Role::Responder, cfg);
        let msg_template = {
            let mut a = PairingSession::new(Role::Initiator, cfg);
            a.initiate(random_key(128, 5)).unwrap()
        };
        // respond before keyed
        assert!(matches!(
            s.respond(&msg_template),
            Err(ProtocolError::WrongState(SessionState::Idle))
        ));
        // initiator ops on a responder
        assert!(s.initiate(random_key(128, 6)).is_err());
        // double load
        s.load_key(random_key(128, 7)).unwrap();
        assert!(s.load_key(random_key(128, 8)).is_err());
    }

    #[test]
    fn final_key_exists_iff_verified() {
        let cfg = SessionConfig::default();
        let mut bob = PairingSession::new(Role::Responder, cfg);
        assert!(bob.final_key().is_none());
        bob.load_key(random_key(128, 9)).unwrap();
        assert!(bob.final_key().is_none());
        let mut alice = PairingSession::new(Role::Initiator, cfg);
        let msg = alice.initiate(random_key(128, 9)).unwrap();
        assert!(alice.final_key().is_none()); // sent, not yet confirmed
        match bob.respond(&msg).unwrap() {
            RespondOutcome::Verified(_) => assert!(bob.final_key().is_some()),
            RespondOutcome::Failed(r) => panic!("unexpected failure {r}"),
        }
        let notif = bob.confirm().unwrap();
        alice.process_confirmation(&notif).unwrap();
        assert_eq!(alice.state(), SessionState::Verified);
        assert!(alice.final_key().is_some());
    }

    #[test]
    fn corrupted_success_notification_fails_initiator() {
        let cfg = SessionConfig::default();
        let key = random_key(128, 10);
        let mut alice = PairingSession::new(Role::Initiator, cfg);
        let msg = alice.initiate(key.clone()).unwrap();
        let mut bob = PairingSession::new(Role::Responder, cfg);
        bob.load_key(key).unwrap();
        bob.respond(&msg).unwrap();
        let notif = bob.confirm().unwrap();
        let mut bytes = notif.to_bytes();
        bytes[10] ^= 0x40;
        let corrupted = Notification::parse(&bytes).unwrap();
        alice.process_confirmation(&corrupted).unwrap();
        assert_eq!(alice.state(), SessionState::Failed);
        assert_eq!(alice.fail_reason(), Some(FailReason::MacMismatch));
        assert!(alice.final_key().is_none());
    }

    #[test]
    fn failure_notification_fails_both_and_session_is_restartable() {
        let cfg = SessionConfig::default();
        let mut alice = PairingSession::new(Role::Initiator, cfg);
        alice.initiate(random_key(128, 11)).unwrap();
        let notif = Notification::failure();
        alice.process_confirmation(&notif).unwrap();
        assert_eq!(alice.state(), SessionState::Failed);
        alice.reset();
        assert_eq!(alice.state(), SessionState::Idle);
        assert!(alice.initiate(random_key(128, 12)).is_ok());
    }

    #[test]
    fn replayed_message_fails_against_fresh_key() {
        let cfg = SessionConfig::default();
        let key_old = random_key(128, 13);
        let mut alice = PairingSession::new(Role::Initiator, cfg);
        let recorded = alice.initiate(key_old).unwrap();

        // a fresh session has a fresh raw key; the recorded message's tag
        // cannot verify against anything reachable from it
        let key_new = random_key(128, 14);
        let mut bob = PairingSession::new(Role::Responder, cfg);
        bob.load_key(key_new).unwrap();
        match bob.respond(&recorded).unwrap() {
            RespondOutcome::Failed(_) => {}
            RespondOutcome::Verified(_) => panic!("replay must not verify"),
        }
    }

    #[test]
    fn key_freshness_window() {
        let raw = random_key(128, 15);
        let fk = FinalKey::derive(&raw, Duration::from_secs(300));
        assert!(!fk.is_expired());
        let later = fk.created_at + Duration::from_secs(301);
        assert!(fk.is_expired_at(later));
        let within = fk.created_at + Duration::from_secs(299);
        assert!(!fk.is_expired_at(within));
    }

    #[test]
    fn end_to_end_noise_free_pair_verifies_with_zero_mismatch() {
        // ideal channel: no noise, no jitter, equal path delays, so both
        // sensors see sample-identical signals
        let heart = HeartModel {
            seed: 777,
            ..HeartModel::default()
        };
        let ipis = generate_ipi_series(&heart, 60).unwrap();
        let quiet = |loc: BodyLocation, seed: u64| SensorConfig {
            location: loc,
            sampling_rate_hz: 120,
            noise_std: 0.0,
            propagation_delay_ms: 0.0,
            jitter_std_ms: 0.0,
            seed,
        };
        let traces = render_body(
            &ipis,
            &[quiet(BodyLocation::Chest, 1), quiet(BodyLocation::Waist, 2)],
        )
        .unwrap();
        let report = pair_end_to_end(&traces[0], &traces[1], &PairingParams::default()).unwrap();
        assert!(report.verified, "noise-free pair must verify: {report:?}");
        assert_eq!(report.mismatch_bits, 0);
        assert_eq!(report.final_key_initiator, report.final_key_responder);
    }

    #[test]
    fn end_to_end_default_noise_pair_verifies() {
        let heart = HeartModel {
            seed: 778,
            ..HeartModel::default()
        };
        let ipis = generate_ipi_series(&heart, 360).unwrap();
        let traces = render_body(
            &ipis,
            &[
                SensorConfig::for_location(BodyLocation::Chest),
                SensorConfig::for_location(BodyLocation::Waist),
            ],
        )
        .unwrap();
        let report = pair_end_to_end(&traces[0], &traces[1], &PairingParams::default()).unwrap();
        assert!(
            report.verified,
            "default-noise chest+waist pair should verify: {report:?}"
        );
        assert_eq!(report.final_key_initiator, report.final_key_responder);
    }

    #[test]
    fn end_to_end_different_hearts_fail() {
        let ipis_a = generate_ipi_series(
            &HeartModel {
                seed: 779,
                ..HeartModel::default()
            },
            360,
        )
        .unwrap();
        let ipis_b = generate_ipi_series(
            &HeartModel {
                seed: 780,
                ..HeartModel::default()
            },
            360,
        )
        .unwrap();
        let cfg_a = SensorConfig::for_location(BodyLocation::Chest);
        let cfg_b = SensorConfig::for_location(BodyLocation::Wrist);
        let trace_a = crate::signalgen::render_trace(&ipis_a, &cfg_a).unwrap();
        let trace_b = crate::signalgen::render_trace(&ipis_b, &cfg_b).unwrap();
        let report = pair_end_to_end(&trace_a, &trace_b, &PairingParams::default()).unwrap();
        assert!(!report.verified, "different hearts must not pair");
    }
}
