//! Fan-out of independent realizations.
//!
//! Results always come back in realization order, so outputs do not depend on the worker count.

use crate::engine::{run_realization, RealizationConfig, RealizationRecord};
use crate::error::Result;
use std::ops::Range;

/// Map `f` over realization indices on the calling thread.
pub fn map_sequential<T, F>(indices: Range<u64>, f: F) -> Result<Vec<T>>
where
    F: Fn(u64) -> Result<T>,
{
    indices.map(f).collect()
}

/// Map `f` over realization indices on the rayon pool.
#[cfg(feature = "parallel")]
pub fn map_parallel<T, F>(indices: Range<u64>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    use rayon::prelude::*;
    indices.into_par_iter().map(f).collect()
}

/// Parallel when the `parallel` feature is on, sequential otherwise.
pub fn map_realizations<T, F>(indices: Range<u64>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        map_parallel(indices, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_sequential(indices, f)
    }
}

pub fn run_batch(cfg: &RealizationConfig, count: u64) -> Result<Vec<RealizationRecord>> {
    cfg.validate()?;
    map_realizations(0..count, |i| run_realization(cfg, i))
}
