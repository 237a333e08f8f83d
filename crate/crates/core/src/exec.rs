//! Data-parallel execution helpers.
//!
//! Sweeps over grid points, boundary coordinates and simulation replications
//! are embarrassingly parallel. With the `parallel` feature (on by default)
//! they fan out over rayon; without it the same code runs sequentially.
//! `Mode::Sequential` forces the serial path at runtime, which the benches
//! use to compare both.

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Rayon-backed when the `parallel` feature is enabled, sequential
    /// otherwise.
    #[default]
    Parallel,
    Sequential,
}

/// Maps `f` over `0..n`, preserving index order in the output.
pub fn map_indexed<U: Send>(mode: Mode, n: usize, f: impl Fn(usize) -> U + Sync + Send) -> Vec<U> {
    match mode {
        Mode::Sequential => (0..n).map(f).collect(),
        Mode::Parallel => map_parallel(n, f),
    }
}

#[cfg(feature = "parallel")]
fn map_parallel<U: Send>(n: usize, f: impl Fn(usize) -> U + Sync + Send) -> Vec<U> {
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_parallel<U: Send>(n: usize, f: impl Fn(usize) -> U + Sync + Send) -> Vec<U> {
    (0..n).map(f).collect()
}
