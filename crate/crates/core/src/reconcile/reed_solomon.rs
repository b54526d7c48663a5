//! (15,3) Reed-Solomon code over GF(16) and the code-offset construction
//! built on it, used as the error-correction baseline for reconciliation.
//!
//! GF(16) is generated by x^4 + x + 1 with alpha = 2. The code corrects up
//! to 6 symbol errors per 15-symbol (60-bit) block.

use sha2::{Digest, Sha256};

use crate::quantizer::BitKey;
use crate::rng::{derive_seed, DetRng};

use super::ReconcileError;

/// Symbols per codeword.
pub const RS_N: usize = 15;
/// Message symbols per codeword.
pub const RS_K: usize = 3;
/// Correctable symbol errors per codeword.
pub const RS_T: usize = (RS_N - RS_K) / 2;
/// Bits per GF(16) symbol.
pub const SYMBOL_BITS: usize = 4;
/// Bits per code-offset block.
pub const BLOCK_BITS: usize = RS_N * SYMBOL_BITS;

const FIELD: usize = 16;
const PRIMITIVE_POLY: u8 = 0b0011; // x^4 = x + 1

struct Tables {
    exp: [u8; 2 * FIELD],
    log: [u8; FIELD],
}

const fn build_tables() -> Tables {
    let mut exp = [0u8; 2 * FIELD];
    let mut log = [0u8; FIELD];
    let mut x: u8 = 1;
    let mut i = 0;
    while i < FIELD - 1 {
        exp[i] = x;
        log[x as usize] = i as u8;
        let hi = x & 0x8 != 0;
        x <<= 1;
        x &= 0xF;
        if hi {
            x ^= PRIMITIVE_POLY;
        }
        i += 1;
    }
    // duplicate for modulo-free indexing
    let mut j = FIELD - 1;
    while j < 2 * FIELD {
        exp[j] = exp[j - (FIELD - 1)];
        j += 1;
    }
    Tables { exp, log }
}

static TABLES: Tables = build_tables();

#[inline]
fn gf_mul(a: u8, b: u8) -> u8 {
    if a == 0 || b == 0 {
        0
    } else {
        TABLES.exp[(TABLES.log[a as usize] + TABLES.log[b as usize]) as usize]
    }
}

#[inline]
fn gf_inv(a: u8) -> u8 {
    debug_assert!(a != 0);
    TABLES.exp[FIELD - 1 - TABLES.log[a as usize] as usize]
}

#[inline]
fn gf_pow_alpha(e: usize) -> u8 {
    TABLES.exp[e % (FIELD - 1)]
}

/// Generator polynomial (x - a^1)(x - a^2)...(x - a^{12}), low degree first.
fn generator_poly() -> Vec<u8> {
    let mut g = vec![1u8];
    for j in 1..=(RS_N - RS_K) {
        let root = gf_pow_alpha(j);
        let mut next = vec![0u8; g.len() + 1];
        for (i, &c) in g.iter().enumerate() {
            next[i] ^= gf_mul(c, root);
            next[i + 1] ^= c;
        }
        g = next;
    }
    g
}

/// Evaluate a polynomial (low degree first) at point `x`.
fn poly_eval(poly: &[u8], x: u8) -> u8 {
    let mut acc = 0u8;
    for &c in poly.iter().rev() {
        acc = gf_mul(acc, x) ^ c;
    }
    acc
}

/// Systematic encode: codeword coefficients low degree first, parity in
/// positions 0..12 and the message in positions 12..15.
pub fn rs_encode(message: [u8; RS_K]) -> [u8; RS_N] {
    let g = generator_poly();
    // m(x) * x^{12}
    let mut work = [0u8; RS_N];
    work[RS_N - RS_K..].copy_from_slice(&message);
    // long division by g (degree 12, monic)
    let mut remainder = work;
    for i in (RS_N - RS_K..RS_N).rev() {
        let coef = remainder[i];
        if coef != 0 {
            for (j, &gc) in g.iter().enumerate() {
                remainder[i - (RS_N - RS_K) + j] ^= gf_mul(coef, gc);
            }
        }
    }
    let mut codeword = [0u8; RS_N];
    codeword[..RS_N - RS_K].copy_from_slice(&remainder[..RS_N - RS_K]);
    codeword[RS_N - RS_K..].copy_from_slice(&message);
    codeword
}

/// Decode a received word, correcting up to [`RS_T`] symbol errors.
/// Returns the corrected codeword.
pub fn rs_decode(received: [u8; RS_N]) -> Result<[u8; RS_N], ReconcileError> {
    let syndromes: Vec<u8> = (1..=(RS_N - RS_K))
        .map(|j| poly_eval(&received, gf_pow_alpha(j)))
        .collect();
    if syndromes.iter().all(|&s| s == 0) {
        return Ok(received);
    }

    // Berlekamp-Massey: error locator sigma(x), low degree first
    let mut sigma = vec![1u8];
    let mut prev = vec![1u8];
    let mut l = 0usize;
    let mut m = 1usize;
    let mut b = 1u8;
    for n in 0..syndromes.len() {
        let mut delta = syndromes[n];
        for i in 1..=l {
            if i < sigma.len() {
                delta ^= gf_mul(sigma[i], syndromes[n - i]);
            }
        }
        if delta == 0 {
            m += 1;
        } else if 2 * l <= n {
            let tmp = sigma.clone();
            let scale = gf_mul(delta, gf_inv(b));
            if sigma.len() < prev.len() + m {
                sigma.resize(prev.len() + m, 0);
            }
            for (i, &c) in prev.iter().enumerate() {
                sigma[i + m] ^= gf_mul(scale, c);
            }
            l = n + 1 - l;
            prev = tmp;
            b = delta;
            m = 1;
        } else {
            let scale = gf_mul(delta, gf_inv(b));
            if sigma.len() < prev.len() + m {
                sigma.resize(prev.len() + m, 0);
            }
            for (i, &c) in prev.iter().enumerate() {
                sigma[i + m] ^= gf_mul(scale, c);
            }
            m += 1;
        }
    }
    while sigma.last() == Some(&0) {
        sigma.pop();
    }
    let nu = sigma.len() - 1;
    if nu == 0 || nu > RS_T {
        return Err(ReconcileError::RsDecodeFailure);
    }

    // Chien search: error positions p with sigma(alpha^{-p}) = 0
    let mut positions = Vec::with_capacity(nu);
    for p in 0..RS_N {
        let x_inv = gf_pow_alpha((FIELD - 1 - p) % (FIELD - 1));
        if poly_eval(&sigma, x_inv) == 0 {
            positions.push(p);
        }
    }
    if positions.len() != nu {
        return Err(ReconcileError::RsDecodeFailure);
    }

    // Forney: Omega(x) = S(x) sigma(x) mod x^{2t}
    let mut omega = vec![0u8; RS_N - RS_K];
    for (i, &s) in syndromes.iter().enumerate() {
        for (j, &c) in sigma.iter().enumerate() {
            if i + j < omega.len() {
                omega[i + j] ^= gf_mul(s, c);
            }
        }
    }
    // formal derivative of sigma: odd-degree terms shift down
    let sigma_deriv: Vec<u8> = sigma
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, &c)| if i % 2 == 1 { c } else { 0 })
        .collect();

    let mut corrected = received;
    for &p in &positions {
        let x_inv = gf_pow_alpha((FIELD - 1 - p) % (FIELD - 1));
        let num = poly_eval(&omega, x_inv);
        let den = poly_eval(&sigma_deriv, x_inv);
        if den == 0 {
            return Err(ReconcileError::RsDecodeFailure);
        }
        corrected[p] ^= gf_mul(num, gf_inv(den));
    }

    // verify
    for j in 1..=(RS_N - RS_K) {
        if poly_eval(&corrected, gf_pow_alpha(j)) != 0 {
            return Err(ReconcileError::RsDecodeFailure);
        }
    }
    Ok(corrected)
}

fn bits_to_symbols(bits: &[u8]) -> Vec<u8> {
    bits.chunks(SYMBOL_BITS)
        .map(|c| c.iter().fold(0u8, |acc, &b| (acc << 1) | (b & 1)))
        .collect()
}

fn symbols_to_bits(symbols: &[u8]) -> Vec<u8> {
    let mut bits = Vec::with_capacity(symbols.len() * SYMBOL_BITS);
    for &s in symbols {
        for k in (0..SYMBOL_BITS).rev() {
            bits.push((s >> k) & 1);
        }
    }
    bits
}

fn padded_bits(key: &BitKey) -> Vec<u8> {
    let mut bits = key.bits.clone();
    let rem = bits.len() % BLOCK_BITS;
    if rem != 0 {
        bits.extend(std::iter::repeat_n(0, BLOCK_BITS - rem));
    }
    bits
}

/// Code-offset commitment to `key`: per 60-bit block, a random codeword is
/// XOR-masked with the key bits. Returns the public offset and a SHA-256
/// digest of the key for the remote side to verify recovery against.
pub fn rs_reconcile_offset(key: &BitKey, seed: u64) -> (Vec<u8>, [u8; 32]) {
    let bits = padded_bits(key);
    let mut offset = Vec::with_capacity(bits.len());
    for (block_idx, block) in bits.chunks(BLOCK_BITS).enumerate() {
        let mut rng = DetRng::new(derive_seed(seed, block_idx as u64));
        let message = [
            rng.next_index(FIELD) as u8,
            rng.next_index(FIELD) as u8,
            rng.next_index(FIELD) as u8,
        ];
        let codeword_bits = symbols_to_bits(&rs_encode(message));
        offset.extend(block.iter().zip(&codeword_bits).map(|(k, c)| k ^ c));
    }
    let digest = Sha256::digest(key.to_bytes());
    (offset, digest.into())
}

/// Remote half of the code offset: XOR the local key in, decode each
/// block, and unmask. Succeeds when every block carries at most [`RS_T`]
/// symbol errors; the result is the *other* side's key.
pub fn rs_reconcile_apply(offset: &[u8], key_local: &BitKey) -> Result<BitKey, ReconcileError> {
    let bits = padded_bits(key_local);
    if offset.len() != bits.len() {
        return Err(ReconcileError::DimensionMismatch {
            expected: bits.len(),
            got: offset.len(),
        });
    }
    let mut recovered = Vec::with_capacity(bits.len());
    for (block, off_block) in bits.chunks(BLOCK_BITS).zip(offset.chunks(BLOCK_BITS)) {
        let noisy: Vec<u8> = block.iter().zip(off_block).map(|(k, o)| k ^ o).collect();
        let mut word = [0u8; RS_N];
        word.copy_from_slice(&bits_to_symbols(&noisy));
        let corrected = rs_decode(word)?;
        let code_bits = symbols_to_bits(&corrected);
        recovered.extend(off_block.iter().zip(&code_bits).map(|(o, c)| o ^ c));
    }
    recovered.truncate(key_local.bits.len());
    Ok(BitKey {
        bits: recovered,
        bits_per_ipi: key_local.bits_per_ipi,
        kept_band: key_local.kept_band,
    })
}
