//! Shared fixtures for the benchmarks.

use hsq_core::{Codebook, CodebookMethod, SplitMix64};

/// Gradient length used throughout the benches.
pub const GRADIENT_LEN: usize = 1 << 16;

pub fn gradient(len: usize, seed: u64) -> Vec<f64> {
    SplitMix64::new(seed).gaussian_vec(len)
}

pub fn codebook(method: CodebookMethod, dim: usize, count: usize) -> Codebook {
    Codebook::generate(method, dim, count, 1).expect("valid codebook shape")
}
