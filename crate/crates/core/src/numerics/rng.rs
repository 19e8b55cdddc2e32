use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::scalar::Scalar;

/// Stream identifiers for the crate's internal consumers of randomness.
///
/// Per-sample attribution uses the sample index as its stream, so these sit
/// well above any realistic sample count.
pub mod streams {
    pub const KMEANS_INIT: u64 = 1 << 40;
    pub const NMF_INIT: u64 = (1 << 40) + 1;
    pub const SUBSAMPLE: u64 = (1 << 40) + 2;
    pub const MU_FIDELITY: u64 = (1 << 40) + 3;
    pub const EMBED: u64 = (1 << 40) + 4;
    pub const VERIFY: u64 = (1 << 40) + 5;
}

/// Deterministic random source keyed by `(seed, stream)`.
///
/// Backed by ChaCha8, whose output is specified independently of platform and
/// word size, so identical keys give identical draws everywhere.
#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform<T: Scalar>(&mut self) -> T {
        T::lit(self.inner.random::<f64>())
    }

    pub fn normal<T: Scalar>(&mut self) -> T {
        let z: f64 = StandardNormal.sample(&mut self.inner);
        T::lit(z)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.inner.random::<f64>() < p
    }

    /// Uniform index in `0..n`. `n` must be positive.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn shuffle<X>(&mut self, items: &mut [X]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }

    /// `m` distinct indices from `0..n`, in sampled order.
    pub fn sample_indices(&mut self, n: usize, m: usize) -> Vec<usize> {
        assert!(m <= n, "cannot sample {m} of {n} without replacement");
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..m {
            let j = i + self.index(n - i);
            pool.swap(i, j);
        }
        pool.truncate(m);
        pool
    }
}
