//! Deterministic parallel replica execution.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::stats::EnsembleSummary;

/// Mixes a master seed with a tag and an index (FNV-1a followed by a splitmix finalizer).
pub fn derive_seed(master: u64, tag: &str, index: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes().chain(index.to_le_bytes()) {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = h ^ master.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Runs `f(replica)` for every replica and returns the results in replica order.
///
/// Any failure aborts the run and discards the partial results.
pub fn run_replicas<R, F>(count: usize, workers: Option<usize>, f: F) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(u64) -> Result<R> + Sync + Send,
{
    let job = || (0..count as u64).into_par_iter().map(&f).collect::<Result<Vec<R>>>();
    match workers {
        None => job(),
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::InvalidConfiguration(format!("cannot start {w} workers: {e}")))?
            .install(job),
    }
}

/// Per-replica summaries merged in replica order, so the result does not depend on scheduling.
pub fn run_ensemble<F>(count: usize, workers: Option<usize>, f: F) -> Result<EnsembleSummary>
where
    F: Fn(u64) -> Result<EnsembleSummary> + Sync + Send,
{
    let parts = run_replicas(count, workers, f)?;
    let mut total = EnsembleSummary::default();
    for p in &parts {
        total.merge(p)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::ReplicaStream;

    fn sample(rep: u64) -> Result<EnsembleSummary> {
        let mut s = ReplicaStream::new(11, rep);
        let mut e = EnsembleSummary::default();
        let x: f64 = s.normal()?;
        let y: f64 = s.normal()?;
        e.push("x", x);
        e.push_pair("xy", x, x + y);
        Ok(e)
    }

    #[test]
    fn single_replica_is_the_sample() {
        let one = run_ensemble(1, Some(1), sample).unwrap();
        assert_eq!(one, sample(0).unwrap());
    }

    #[test]
    fn worker_count_does_not_change_the_summary() {
        let a = run_ensemble(257, Some(1), sample).unwrap();
        let b = run_ensemble(257, Some(3), sample).unwrap();
        let c = run_ensemble(257, None, sample).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        assert_eq!(a.count(), 257);
    }

    #[test]
    fn failures_abort_the_run() {
        let r = run_ensemble(50, Some(2), |rep| if rep == 17 { Err(Error::Numerical("boom".into())) } else { sample(rep) });
        assert!(r.is_err());
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, "a", 0), derive_seed(1, "a", 1));
        assert_ne!(derive_seed(1, "a", 0), derive_seed(1, "b", 0));
        assert_ne!(derive_seed(1, "a", 0), derive_seed(2, "a", 0));
        assert_eq!(derive_seed(5, "x", 3), derive_seed(5, "x", 3));
    }
}
