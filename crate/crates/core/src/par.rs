//! Order-preserving data-parallel maps with a sequential fallback.
//!
//! With the `parallel` feature (default) [`Execution::Parallel`] runs on the
//! rayon pool; without it every call is sequential. Results always come back
//! in input order, so callers merge them deterministically.

use serde::{Deserialize, Serialize};

/// Environment variable capping the number of concurrent workers.
pub const THREADS_ENV: &str = "SMC_THREADS";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

/// `(0..n).map(f)` collected in order.
pub fn map_range<R, F>(exec: Execution, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// `items.iter().map(f)` collected in order.
pub fn map<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

/// Worker cap from `SMC_THREADS`, if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Run `f` on a pool honouring `SMC_THREADS`; uses the global pool otherwise.
pub fn with_thread_cap<R, F>(f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    #[cfg(feature = "parallel")]
    if let Some(n) = thread_cap() {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            return pool.install(f);
        }
    }
    f()
}
