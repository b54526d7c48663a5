//! Deterministic random number generation.
//!
//! Every stochastic component in this crate (IPI processes, sensor noise,
//! sensing matrices, Monte-Carlo trials) draws from [`DetRng`], a seeded
//! xoshiro256++ generator. Identical seeds produce identical streams on
//! every platform and under any thread schedule, which is what makes the
//! benchmarks and the pairing experiments reproducible bit for bit.

use std::f64::consts::TAU;

/// splitmix64 step, used for seed expansion and stream derivation.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive an independent sub-seed from a base seed and a stream tag.
///
/// Used to give each Monte-Carlo trial (or each sensor in a body set) its
/// own stream so that results do not depend on evaluation order.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut s = base ^ 0xa076_1d64_78bd_642f_u64.wrapping_mul(stream.wrapping_add(1));
    let a = splitmix64(&mut s);
    let b = splitmix64(&mut s);
    a ^ b.rotate_left(17)
}

/// Seeded xoshiro256++ generator.
#[derive(Debug, Clone)]
pub struct DetRng {
    s: [u64; 4],
}

impl DetRng {
    /// Create a generator from any 64-bit seed (expanded via splitmix64).
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        let mut s = [0u64; 4];
        for slot in &mut s {
            *slot = splitmix64(&mut sm);
        }
        // the all-zero state is invalid for xoshiro
        if s == [0, 0, 0, 0] {
            s[0] = 1;
        }
        DetRng { s }
    }

    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[0]
            .wrapping_add(self.s[3])
            .rotate_left(23)
            .wrapping_add(self.s[0]);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal draw (Box-Muller).
    pub fn next_gaussian(&mut self) -> f64 {
        let mut u1 = self.next_f64();
        while u1 <= 0.0 {
            u1 = self.next_f64();
        }
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
    }

    /// Uniform integer in `[0, n)`.
    pub fn next_index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // rejection sampling keeps the draw unbiased
        let n = n as u64;
        let zone = u64::MAX - u64::MAX % n;
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    /// Random sign, `+1` or `-1` with equal probability.
    pub fn next_sign(&mut self) -> i8 {
        if self.next_u64() & 1 == 0 {
            1
        } else {
            -1
        }
    }

    /// `true` with probability `p`.
    pub fn next_bool(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// `count` distinct indices drawn uniformly from `[0, n)`, ascending.
    pub fn distinct_indices(&mut self, n: usize, count: usize) -> Vec<usize> {
        debug_assert!(count <= n);
        let mut taken = vec![false; n];
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let i = self.next_index(n);
            if !taken[i] {
                taken[i] = true;
                out.push(i);
            }
        }
        out.sort_unstable();
        out
    }
}
