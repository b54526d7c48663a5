//! Five statistical randomness tests (monobit frequency, block frequency,
//! runs, cumulative sums, approximate entropy) with the standard p-value
//! formulations. A p-value below 0.01 rejects the randomness hypothesis.

use crate::stats::{erfc, normal_cdf, regularized_gamma_q};

use super::AnalysisError;

/// Minimum input length for the frequency-family tests.
pub const MIN_BITS: usize = 1000;
/// Block length for the block-frequency test.
pub const BLOCK_LEN: usize = 128;
/// Pattern length for approximate entropy.
pub const APEN_M: usize = 2;

/// Monobit frequency test.
pub fn monobit(bits: &[u8]) -> f64 {
    let n = bits.len() as f64;
    let s: i64 = bits.iter().map(|&b| if b == 1 { 1i64 } else { -1 }).sum();
    erfc((s.abs() as f64 / n.sqrt()) / std::f64::consts::SQRT_2)
}

/// Frequency within `BLOCK_LEN`-bit blocks.
pub fn block_frequency(bits: &[u8]) -> f64 {
    let blocks = bits.len() / BLOCK_LEN;
    let mut chi = 0.0;
    for b in 0..blocks {
        let ones = bits[b * BLOCK_LEN..(b + 1) * BLOCK_LEN]
            .iter()
            .filter(|&&x| x == 1)
            .count();
        let pi = ones as f64 / BLOCK_LEN as f64;
        chi += (pi - 0.5) * (pi - 0.5);
    }
    chi *= 4.0 * BLOCK_LEN as f64;
    regularized_gamma_q(blocks as f64 / 2.0, chi / 2.0)
}

/// Runs test: total count of maximal same-bit runs.
pub fn runs(bits: &[u8]) -> f64 {
    let n = bits.len() as f64;
    let pi = bits.iter().filter(|&&b| b == 1).count() as f64 / n;
    // frequency prerequisite
    if (pi - 0.5).abs() >= 2.0 / n.sqrt() {
        return 0.0;
    }
    let v = 1 + bits.windows(2).filter(|w| w[0] != w[1]).count();
    let expected = 2.0 * n * pi * (1.0 - pi);
    erfc((v as f64 - expected).abs() / (2.0 * (2.0 * n).sqrt() * pi * (1.0 - pi)))
}

/// Cumulative sums test (forward mode).
pub fn cumulative_sums(bits: &[u8]) -> f64 {
    let n = bits.len() as f64;
    let mut s = 0i64;
    let mut z = 0i64;
    for &b in bits {
        s += if b == 1 { 1 } else { -1 };
        z = z.max(s.abs());
    }
    if z == 0 {
        return 0.0;
    }
    let z = z as f64;
    let sqrt_n = n.sqrt();

    let mut p = 1.0;
    let k_lo = ((-n / z + 1.0) / 4.0).floor() as i64;
    let k_hi = ((n / z - 1.0) / 4.0).floor() as i64;
    for k in k_lo..=k_hi {
        let k = k as f64;
        p -= normal_cdf((4.0 * k + 1.0) * z / sqrt_n) - normal_cdf((4.0 * k - 1.0) * z / sqrt_n);
    }
    let k_lo = ((-n / z - 3.0) / 4.0).floor() as i64;
    let k_hi = ((n / z - 1.0) / 4.0).floor() as i64;
    for k in k_lo..=k_hi {
        let k = k as f64;
        p += normal_cdf((4.0 * k + 3.0) * z / sqrt_n) - normal_cdf((4.0 * k + 1.0) * z / sqrt_n);
    }
    p.clamp(0.0, 1.0)
}

/// Approximate entropy with pattern length [`APEN_M`].
pub fn approximate_entropy(bits: &[u8]) -> f64 {
    let n = bits.len();
    let phi = |m: usize| -> f64 {
        if m == 0 {
            return 0.0;
        }
        let mut counts = vec![0usize; 1 << m];
        for i in 0..n {
            let mut idx = 0usize;
            for j in 0..m {
                idx = (idx << 1) | bits[(i + j) % n] as usize;
            }
            counts[idx] += 1;
        }
        counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n as f64;
                p * p.ln()
            })
            .sum()
    };
    let apen = phi(APEN_M) - phi(APEN_M + 1);
    let chi = 2.0 * n as f64 * (std::f64::consts::LN_2 - apen);
    regularized_gamma_q((1 << (APEN_M - 1)) as f64, chi / 2.0)
}

/// Run all five tests. Returns `(name, p_value)` pairs in a fixed order.
pub fn randomness_suite(bits: &[u8]) -> Result<Vec<(String, f64)>, AnalysisError> {
    if bits.len() < MIN_BITS {
        return Err(AnalysisError::TooFewBits {
            need: MIN_BITS,
            got: bits.len(),
        });
    }
    Ok(vec![
        ("frequency".into(), monobit(bits)),
        ("block_frequency".into(), block_frequency(bits)),
        ("runs".into(), runs(bits)),
        ("cumulative_sums".into(), cumulative_sums(bits)),
        ("approximate_entropy".into(), approximate_entropy(bits)),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::DetRng;

    fn random_bits(n: usize, seed: u64) -> Vec<u8> {
        let mut rng = DetRng::new(seed);
        (0..n).map(|_| (rng.next_u64() & 1) as u8).collect()
    }

    #[test]
    fn monobit_of_perfect_balance_is_one() {
        // erfc(0) = 1 exactly
        let bits: Vec<u8> = (0..2000).map(|i| (i % 2) as u8).collect();
        assert_eq!(monobit(&bits), 1.0);
    }

    #[test]
    fn monobit_rejects_all_zeros() {
        assert!(monobit(&vec![0u8; 2000]) < 0.01);
    }

    #[test]
    fn runs_rejects_perfect_alternation_with_closed_form() {
        let n = 2000usize;
        let bits: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let p = runs(&bits);
        // V = n runs, pi = 1/2: p = erfc(sqrt(n/2))
        let expected = erfc((n as f64 / 2.0).sqrt());
        assert!((p - expected).abs() < 1e-12);
        assert!(p < 0.01);
    }

    #[test]
    fn good_generator_passes_all_five() {
        let bits = random_bits(20_000, 424242);
        for (name, p) in randomness_suite(&bits).unwrap() {
            assert!(p >= 0.01, "{name} p = {p}");
        }
    }

    #[test]
    fn biased_inputs_fail_their_tests() {
        // 70/30 bias: frequency fails
        let mut rng = DetRng::new(1);
        let biased: Vec<u8> = (0..5000).map(|_| u8::from(rng.next_f64() < 0.7)).collect();
        assert!(monobit(&biased) < 0.01);

        // long deterministic blocks: block frequency fails
        let blocky: Vec<u8> = (0..5000).map(|i| ((i / 256) % 2) as u8).collect();
        assert!(block_frequency(&blocky) < 0.01);

        // strongly correlated bits: approximate entropy fails
        let mut corr = Vec::with_capacity(5000);
        let mut prev = 0u8;
        for _ in 0..5000 {
            prev = if rng.next_f64() < 0.9 { prev } else { 1 - prev };
            corr.push(prev);
        }
        assert!(approximate_entropy(&corr) < 0.01);
    }

    #[test]
    fn cumulative_sums_penalizes_drift() {
        // a slow random walk drift: first half slightly ones-heavy
        let mut rng = DetRng::new(2);
        let bits: Vec<u8> = (0..4000)
            .map(|i| {
                let p = if i < 2000 { 0.58 } else { 0.5 };
                u8::from(rng.next_f64() < p)
            })
            .collect();
        assert!(cumulative_sums(&bits) < 0.01);
        let good = random_bits(4000, 3);
        assert!(cumulative_sums(&good) >= 0.01);
    }

    #[test]
    fn suite_requires_enough_bits() {
        assert!(matches!(
            randomness_suite(&[0, 1, 0, 1]),
            Err(AnalysisError::TooFewBits { .. })
        ));
    }
}
