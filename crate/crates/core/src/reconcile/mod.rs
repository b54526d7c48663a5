//! Information reconciliation by compressive sensing.
//!
//! Both parties project their N-bit keys through the same seeded ±1
//! Bernoulli matrix. The difference of the two M-entry sketches equals the
//! projection of the signed mismatch vector, which is sparse for
//! legitimate devices; an l1 solver recovers it and the local key is
//! corrected by XOR. The effective/secure margins of the parameter
//! choice are computed alongside, and a (15,3) Reed-Solomon code-offset
//! reconciliation is provided as the baseline to benchmark against.

mod reed_solomon;
mod solver;

pub use reed_solomon::{
    rs_decode, rs_encode, rs_reconcile_apply, rs_reconcile_offset, BLOCK_BITS, RS_K, RS_N, RS_T,
};
pub use solver::{solve_l1, SolverFailure};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quantizer::BitKey;
use crate::rng::DetRng;

/// Sketch length used throughout: small enough to stay below the secure
/// threshold, large enough to correct legitimate mismatches.
pub const DEFAULT_M: usize = 50;
/// Key length in bits.
pub const DEFAULT_N: usize = 128;
/// Residual tolerance for the solver; the sketches are integer-exact, so
/// the constraint is essentially an equality.
pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ReconcileError {
    #[error("matrix shape must satisfy 0 < rows < cols, got {rows}x{cols}")]
    InvalidShape { rows: usize, cols: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix seed mismatch: local {local:#x}, remote {remote:#x}")]
    SeedMismatch { local: u64, remote: u64 },
    #[error(transparent)]
    Solver(#[from] SolverFailure),
    #[error("Reed-Solomon decoder failed (more than {RS_T} symbol errors in a block)")]
    RsDecodeFailure,
}

/// Seeded ±1 Bernoulli sensing matrix. Both parties regenerate it from
/// the seed alone, so only the seed crosses the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SensingMatrix {
    pub seed: u64,
    pub rows: usize,
    pub cols: usize,
    entries: Vec<i8>,
}

impl SensingMatrix {
    #[inline]
    pub fn entry(&self, row: usize, col: usize) -> i8 {
        self.entries[row * self.cols + col]
    }

    pub fn entries(&self) -> &[i8] {
        &self.entries
    }

    pub fn row(&self, row: usize) -> &[i8] {
        &self.entries[row * self.cols..(row + 1) * self.cols]
    }

    /// Fraction of +1 entries.
    pub fn positive_fraction(&self) -> f64 {
        self.entries.iter().filter(|&&e| e > 0).count() as f64 / self.entries.len() as f64
    }
}

/// Generate the M x N symmetric-Bernoulli matrix for a seed.
pub fn make_matrix(seed: u64, m: usize, n: usize) -> Result<SensingMatrix, ReconcileError> {
    if m == 0 || m >= n {
        return Err(ReconcileError::InvalidShape { rows: m, cols: n });
    }
    let mut rng = DetRng::new(seed);
    let entries = (0..m * n).map(|_| rng.next_sign()).collect();
    Ok(SensingMatrix {
        seed,
        rows: m,
        cols: n,
        entries,
    })
}

/// A compressed key sketch `y = Phi x`, exact over the integers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompressedKey {
    pub values: Vec<i32>,
    pub matrix_seed: u64,
    pub n_bits: usize,
}

/// Project a key through the sensing matrix.
pub fn project(key: &BitKey, matrix: &SensingMatrix) -> Result<CompressedKey, ReconcileError> {
    if key.bits.len() != matrix.cols {
        return Err(ReconcileError::DimensionMismatch {
            expected: matrix.cols,
            got: key.bits.len(),
        });
    }
    let values = (0..matrix.rows)
        .map(|r| {
            matrix
                .row(r)
                .iter()
                .zip(&key.bits)
                .filter(|(_, &b)| b == 1)
                .map(|(&e, _)| e as i32)
                .sum()
        })
        .collect();
    Ok(CompressedKey {
        values,
        matrix_seed: matrix.seed,
        n_bits: matrix.cols,
    })
}

/// Count of nonzero entries (the sparsity S of a vector).
pub fn sparsity(values: &[i32]) -> usize {
    values.iter().filter(|&&v| v != 0).count()
}

/// Ones count of a bit vector.
pub fn sparsity_bits(bits: &[u8]) -> usize {
    bits.iter().filter(|&&b| b == 1).count()
}

/// Recover the mismatch vector between a remote sketch and the local key.
///
/// The signed difference `d = x_remote - x_local` satisfies
/// `Phi d = y_remote - y_local` exactly; the solver finds the sparse `d`
/// and positions with `|d| > 0.5` are the mismatched bits. XOR the result
/// into the local key to obtain the remote key (subject to verification).
pub fn recover_mismatch(
    y_remote: &CompressedKey,
    key_local: &BitKey,
    matrix: &SensingMatrix,
    epsilon: f64,
) -> Result<Vec<u8>, ReconcileError> {
    if y_remote.matrix_seed != matrix.seed {
        return Err(ReconcileError::SeedMismatch {
            local: matrix.seed,
            remote: y_remote.matrix_seed,
        });
    }
    if y_remote.n_bits != matrix.cols || y_remote.values.len() != matrix.rows {
        return Err(ReconcileError::DimensionMismatch {
            expected: matrix.cols,
            got: y_remote.n_bits,
        });
    }
    let y_local = project(key_local, matrix)?;
    let delta_y: Vec<i32> = y_remote
        .values
        .iter()
        .zip(&y_local.values)
        .map(|(r, l)| r - l)
        .collect();
    let d = solve_l1(&delta_y, matrix, epsilon)?;
    Ok(d.iter().map(|&v| u8::from(v.abs() > 0.5)).collect())
}

/// The effective/secure margins for a parameter choice.
///
/// `p_threshold = S_mismatch * log2(N / S_mismatch)` is the sketch length
/// above which legitimate recovery is guaranteed; `q_threshold` is the
/// smaller of the key's own sparsity and the attacker-mismatch sparsity,
/// below which neither eavesdropper reconstruction can succeed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecurityMargin {
    pub p_threshold: f64,
    pub q_threshold: f64,
    pub m: usize,
    pub s_mismatch: usize,
    pub s_key: usize,
}

impl SecurityMargin {
    /// Sketch is long enough to correct the legitimate mismatch.
    pub fn is_effective(&self) -> bool {
        (self.m as f64) > self.p_threshold
    }

    /// Sketch is short enough to starve an eavesdropper's reconstruction.
    pub fn is_secure(&self) -> bool {
        (self.m as f64) < self.q_threshold
    }
}

/// Effective threshold `P(s) = s * log2(n/s)` (0 when `s = 0`).
pub fn effective_threshold(s_mismatch: usize, n: usize) -> f64 {
    if s_mismatch == 0 {
        return 0.0;
    }
    let s = s_mismatch as f64;
    s * (n as f64 / s).log2()
}

/// Compute both margins for a parameter set.
pub fn security_margin(
    s_mismatch: usize,
    s_key: usize,
    s_attacker_mismatch: usize,
    n: usize,
    m: usize,
) -> SecurityMargin {
    assert!(s_mismatch <= n, "mismatch sparsity exceeds key length");
    SecurityMargin {
        p_threshold: effective_threshold(s_mismatch, n),
        q_threshold: s_key.min(s_attacker_mismatch) as f64,
        m,
        s_mismatch,
        s_key,
    }
}
