//! Deterministic, portable pseudo-random numbers.
//!
//! The generator is xoshiro256** seeded through SplitMix64, exactly as in the
//! reference C implementations (Blackman & Vigna). Every randomized component
//! of the crate (weight init, batch shuffling, dropout masks, synthetic data)
//! draws from its own stream so that toggling one component never perturbs
//! the others. Stream derivation and all sampling algorithms are documented
//! in the README; two runs with the same seed are bit-identical.

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 step; used only for state initialization.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN_GAMMA);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// xoshiro256** generator with Box-Muller normal sampling.
#[derive(Debug, Clone)]
pub struct Rng {
    state: [u64; 4],
    cached_normal: Option<f64>,
}

impl Rng {
    /// Seed the full 256-bit state from `seed` via SplitMix64.
    pub fn from_seed(seed: u64) -> Self {
        Self::from_seed_stream(seed, 0)
    }

    /// Independent stream `stream` of the same logical seed.
    ///
    /// The SplitMix64 starting point is `seed XOR (stream + 1) * GOLDEN_GAMMA`,
    /// so streams of one seed never share state prefixes.
    pub fn from_seed_stream(seed: u64, stream: u64) -> Self {
        let mut sm = seed ^ stream.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA);
        let mut state = [0u64; 4];
        for s in state.iter_mut() {
            *s = splitmix64(&mut sm);
        }
        if state.iter().all(|&s| s == 0) {
            state[0] = GOLDEN_GAMMA;
        }
        Rng {
            state,
            cached_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.state;
        let result = s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform f64 in [0, 1) with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box-Muller; the paired variate is cached.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.cached_normal.take() {
            return z;
        }
        // 1 - uniform() lies in (0, 1], keeping the log finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.cached_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn normal_scaled(&mut self, sigma: f64) -> f64 {
        self.normal() * sigma
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Unbiased integer in [0, bound) by Lemire's widening-multiply rejection.
    pub fn index(&mut self, bound: usize) -> usize {
        assert!(bound > 0, "index bound must be positive");
        let bound = bound as u64;
        loop {
            let x = self.next_u64();
            let m = (x as u128) * (bound as u128);
            let lo = m as u64;
            if lo < bound {
                let threshold = bound.wrapping_neg() % bound;
                if lo < threshold {
                    continue;
                }
            }
            return (m >> 64) as usize;
        }
    }

    /// Fisher-Yates shuffle, iterating from the back.
    pub fn shuffle<T>(&mut self, slice: &mut [T]) {
        for i in (1..slice.len()).rev() {
            let j = self.index(i + 1);
            slice.swap(i, j);
        }
    }

    /// Seeded permutation of 0..n.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx
    }
}

/// Stream tags used across the crate, kept in one place so the README table
/// stays in sync with the code.
pub mod streams {
    pub const WEIGHT_INIT: u64 = 0;
    pub const BATCH_SHUFFLE: u64 = 1;
    pub const DROPOUT: u64 = 2;
    pub const DATA_SPLIT: u64 = 3;
    pub const SYNTHETIC: u64 = 4;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_across_instances() {
        let mut a = Rng::from_seed(42);
        let mut b = Rng::from_seed(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn streams_are_distinct() {
        let mut a = Rng::from_seed_stream(7, 0);
        let mut b = Rng::from_seed_stream(7, 1);
        let xs: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        assert_ne!(xs, ys);
    }

    // Frozen against an independent Python implementation of SplitMix64 +
    // xoshiro256** with the same stream derivation.
    #[test]
    fn matches_reference_sequence() {
        let mut r = Rng::from_seed(0);
        let expected: [u64; 4] = [
            4768932952251265552,
            16168679545894742312,
            6487188721686299062,
            86499648889209533,
        ];
        for e in expected {
            assert_eq!(r.next_u64(), e);
        }
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut r = Rng::from_seed(3);
        for _ in 0..10_000 {
            let u = r.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn normal_moments_are_sane() {
        let mut r = Rng::from_seed(11);
        let n = 200_000;
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..n {
            let z = r.normal();
            sum += z;
            sq += z * z;
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut r = Rng::from_seed(5);
        let mut v: Vec<usize> = (0..100).collect();
        r.shuffle(&mut v);
        let mut sorted = v.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..100).collect::<Vec<_>>());
        assert_ne!(v, (0..100).collect::<Vec<_>>());
    }
}
