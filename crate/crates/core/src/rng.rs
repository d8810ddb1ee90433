//! Counter-based 64-bit random number generator.
//!
//! Every draw is a pure function of `(key, counter)`, so streams can be
//! reproduced from `(seed, stream path, entry index)` in any language.
//!
//! Algorithm:
//!
//! ```text
//! mix(z):   z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
//!           z ^= z >> 27; z *= 0x94D049BB133111EB;
//!           z ^= z >> 31
//! key(seed, [s1, .., sk]):
//!           key = mix(seed ^ SEED_SALT)
//!           for s in path: key = mix(key ^ mix(s + GOLDEN))
//! output(key, c) = mix(key + (c + 1) * GOLDEN)          (wrapping)
//! unit(x)  = (x >> 11) * 2^-53                           in [0, 1)
//! ```
//!
//! with `GOLDEN = 0x9E3779B97F4A7C15` and `SEED_SALT = 0x5851F42D4C957F2D`.
//! `output` is the SplitMix64 finaliser applied to a Weyl sequence, which makes
//! the generator random-access: draw `c` of a stream never depends on earlier
//! draws.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const SEED_SALT: u64 = 0x5851_F42D_4C95_7F2D;

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a stream key from a seed and a path of stream identifiers.
pub fn derive_key(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix64(seed ^ SEED_SALT), |key, &s| {
        mix64(key ^ mix64(s.wrapping_add(GOLDEN)))
    })
}

/// Derive a child seed, e.g. the seed of replica `r` is `derive_seed(seed, &[r])`.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    derive_key(seed, path)
}

#[inline]
fn unit(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[derive(Debug, Clone)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(seed: u64, path: &[u64]) -> Self {
        Self {
            key: derive_key(seed, path),
            counter: 0,
        }
    }

    /// Independent child stream of this generator's key.
    pub fn substream(&self, path: &[u64]) -> Self {
        Self {
            key: derive_key(self.key, path),
            counter: 0,
        }
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    /// Draw number `counter` of this stream, without advancing it.
    #[inline]
    pub fn u64_at(&self, counter: u64) -> u64 {
        mix64(self.key.wrapping_add(counter.wrapping_add(1).wrapping_mul(GOLDEN)))
    }

    #[inline]
    pub fn unit_at(&self, counter: u64) -> f64 {
        unit(self.u64_at(counter))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let x = self.u64_at(self.counter);
        self.counter = self.counter.wrapping_add(1);
        x
    }

    /// Uniform on `[0, 1)`.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        unit(self.next_u64())
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal via Box-Muller (cosine branch, two draws per variate).
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Exponential(1) by inversion.
    pub fn exponential(&mut self) -> f64 {
        -(1.0 - self.next_f64()).ln()
    }

    /// Uniform integer in `0..n` by rejection (unbiased). `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let x = self.next_u64();
            if x < zone {
                return x % n;
            }
        }
    }

    /// Fisher-Yates shuffle, swapping `i` with `below(i + 1)` for `i = len-1 .. 1`.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    /// Uniform `s`-subset of `0..k`, returned in increasing order.
    pub fn subset(&mut self, k: usize, s: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..k).collect();
        let s = s.min(k);
        for i in 0..s {
            let j = i + self.below((k - i) as u64) as usize;
            idx.swap(i, j);
        }
        let mut out = idx[..s].to_vec();
        out.sort_unstable();
        out
    }
}
