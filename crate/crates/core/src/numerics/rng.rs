//! Deterministic pseudo-random numbers.
//!
//! Every randomized step in the pipeline (init, shuffling, k-means restarts,
//! patch permutations, synthetic audio) draws from this generator so that a
//! run is reproducible from its seeds alone. The core is splitmix64: a 64-bit
//! state advanced by a Weyl constant and finalized with two xor-multiply
//! rounds. Identical seeds produce identical streams on every platform.
//!
//! Parallel call sites must not share one `Rng`; they derive an independent
//! child stream per work item with [`Rng::derive`].

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// splitmix64 stream. `Copy` is deliberately not derived: accidental copies
/// would silently fork the stream.
#[derive(Debug, Clone)]
pub struct Rng {
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { state: seed }
    }

    /// Child stream for parallel work item `stream`. Children with different
    /// stream ids are independent of each other and of the parent.
    pub fn derive(seed: u64, stream: u64) -> Self {
        Rng::new(Self::mix(&[seed, stream]))
    }

    /// Collapses several seed components into one well-mixed seed. Used to
    /// key independent streams off (seed, epoch, layer, ...) tuples.
    pub fn mix(parts: &[u64]) -> u64 {
        let mut acc: u64 = 0x243f_6a88_85a3_08d3; // pi, nothing up the sleeve
        for &p in parts {
            let mut r = Rng::new(acc ^ p.wrapping_mul(GOLDEN_GAMMA));
            acc = r.next_u64();
        }
        acc
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` with 53 bits of mantissa.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform index in `[0, n)` by masked rejection (no modulo bias).
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index() needs a non-empty range");
        let n = n as u64;
        let mask = n.next_power_of_two().wrapping_sub(1);
        loop {
            let v = self.next_u64() & mask;
            if v < n {
                return v as usize;
            }
        }
    }

    /// Uniform permutation of `0..n` by Fisher-Yates.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.index(i + 1);
            p.swap(i, j);
        }
        p
    }

    /// Standard normal via Box-Muller. Draws two uniforms per sample; the
    /// second branch is discarded to keep the state a single u64.
    pub fn normal(&mut self) -> f64 {
        loop {
            let u1 = self.next_f64();
            if u1 > 0.0 {
                let u2 = self.next_f64();
                let r = (-2.0 * u1.ln()).sqrt();
                return r * (std::f64::consts::TAU * u2).cos();
            }
        }
    }
}
