//! Bounded-parallelism job runner.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Number of hardware threads, at least 1.
pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Runs `job` on every input with at most `workers` threads and returns the
/// results in input order. The first error (in input order) is returned.
pub fn run_jobs<T, R, F>(workers: usize, inputs: Vec<T>, job: F) -> Result<Vec<R>>
where
    T: Send,
    R: Send,
    F: Fn(T) -> Result<R> + Sync + Send,
{
    if workers <= 1 || inputs.len() <= 1 {
        return inputs.into_iter().map(job).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start {workers} workers: {e}")))?;
    let results: Vec<Result<R>> = pool.install(|| inputs.into_par_iter().map(&job).collect());
    results.into_iter().collect()
}
