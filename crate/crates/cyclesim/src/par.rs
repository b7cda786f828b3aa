//! Data-parallel helpers with a sequential fallback.
//!
//! Everything hot in this crate (convolution batches, per-image translation,
//! Monte-Carlo metric loops) is expressed through these helpers. The
//! `parallel` feature (on by default) pulls in rayon; building with
//! `--no-default-features` yields a fully sequential binary. The runtime
//! [`Parallelism`] switch exists so benchmarks can compare both paths inside
//! one build.

use serde::{Deserialize, Serialize};

/// Execution strategy for data-parallel loops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parallelism {
    Sequential,
    #[cfg(feature = "parallel")]
    Rayon,
}

impl Parallelism {
    /// Rayon when the `parallel` feature is enabled, sequential otherwise.
    pub fn auto() -> Self {
        #[cfg(feature = "parallel")]
        {
            Parallelism::Rayon
        }
        #[cfg(not(feature = "parallel"))]
        {
            Parallelism::Sequential
        }
    }
}

impl Default for Parallelism {
    fn default() -> Self {
        Parallelism::auto()
    }
}

/// Maps `f` over `0..n`, collecting results in index order.
///
/// Output order is identical for both strategies; each slot is produced by an
/// independent sequential computation, so results are bitwise reproducible.
pub fn map_indexed<T, F>(par: Parallelism, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match par {
        Parallelism::Sequential => (0..n).map(f).collect(),
        #[cfg(feature = "parallel")]
        Parallelism::Rayon => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
    }
}

/// Runs two independent closures, in parallel when enabled.
pub fn join<A, B, FA, FB>(par: Parallelism, fa: FA, fb: FB) -> (A, B)
where
    A: Send,
    B: Send,
    FA: FnOnce() -> A + Send,
    FB: FnOnce() -> B + Send,
{
    match par {
        Parallelism::Sequential => (fa(), fb()),
        #[cfg(feature = "parallel")]
        Parallelism::Rayon => rayon::join(fa, fb),
    }
}
