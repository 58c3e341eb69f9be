//! Counter-based per-replica random streams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardUniform};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Independent stream for one replica: the master seed selects the key and the
/// replica index selects the ChaCha stream, so replicas are reproducible in any order.
#[derive(Clone, Debug)]
pub struct ReplicaStream {
    rng: ChaCha8Rng,
    draws: u64,
    budget: u64,
}

impl ReplicaStream {
    pub const DEFAULT_BUDGET: u64 = 1 << 60;

    pub fn new(master_seed: u64, replica: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(replica);
        Self { rng, draws: 0, budget: Self::DEFAULT_BUDGET }
    }

    /// Caps the number of draws; exceeding it yields [`Error::RngExhausted`].
    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = budget;
        self
    }

    pub fn draws(&self) -> u64 {
        self.draws
    }

    #[inline]
    fn charge(&mut self) -> Result<()> {
        if self.draws >= self.budget {
            return Err(Error::RngExhausted { draws: self.draws });
        }
        self.draws += 1;
        Ok(())
    }

    /// Uniform sample in `[0, 1)`.
    #[inline]
    pub fn uniform<T: Scalar>(&mut self) -> Result<T> {
        self.charge()?;
        let u: f64 = StandardUniform.sample(&mut self.rng);
        Ok(T::of(u))
    }

    /// Standard exponential sample.
    #[inline]
    pub fn exp1<T: Scalar>(&mut self) -> Result<T> {
        self.charge()?;
        let e: f64 = Exp1.sample(&mut self.rng);
        Ok(T::of(e))
    }

    #[inline]
    pub fn bernoulli<T: Scalar>(&mut self, p: T) -> Result<bool> {
        Ok(self.uniform::<T>()? < p)
    }

    /// Uniform integer in `0..n`.
    #[inline]
    pub fn below(&mut self, n: usize) -> Result<usize> {
        self.charge()?;
        Ok(self.rng.random_range(0..n))
    }

    /// Standard normal sample.
    pub fn normal<T: Scalar>(&mut self) -> Result<T> {
        self.charge()?;
        let z: f64 = rand_distr::StandardNormal.sample(&mut self.rng);
        Ok(T::of(z))
    }
}
