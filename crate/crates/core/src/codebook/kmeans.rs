//! Lloyd k-means on a seeded Gaussian pool.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::dot;
use crate::error::Result;
use crate::rng::SplitMix64;

/// Pool size is this factor times the codeword count.
pub const KMEANS_POOL_FACTOR: usize = 256;
pub const KMEANS_ITERATIONS: usize = 25;

const POOL_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KMeansParams {
    pub pool_factor: usize,
    pub iterations: usize,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            pool_factor: KMEANS_POOL_FACTOR,
            iterations: KMEANS_ITERATIONS,
        }
    }
}

pub(crate) fn kmeans_gaussian(dim: usize, count: usize, seed: u64, params: &KMeansParams) -> Result<DMatrix<f64>> {
    let root = SplitMix64::new(seed);
    let pool_len = params.pool_factor.max(1) * count;
    let mut pool_rng = root.fork(&[POOL_STREAM]);
    let pool: Vec<f64> = (0..pool_len * dim).map(|_| pool_rng.gaussian()).collect();
    let point = |i: usize| &pool[i * dim..(i + 1) * dim];

    let mut init_rng = root.fork(&[INIT_STREAM]);
    let mut centers: Vec<f64> = init_rng
        .sample_without_replacement(pool_len, count)
        .into_iter()
        .flat_map(|i| point(i).to_vec())
        .collect();

    let mut assignment = vec![(0usize, 0.0f64); pool_len];
    for _ in 0..params.iterations {
        assign(&pool, &centers, dim, &mut assignment);

        let mut sums = vec![0.0; count * dim];
        let mut sizes = vec![0usize; count];
        for (i, &(c, _)) in assignment.iter().enumerate() {
            sizes[c] += 1;
            for (s, &x) in sums[c * dim..(c + 1) * dim].iter_mut().zip(point(i)) {
                *s += x;
            }
        }
        // Points already used to re-seed an empty cluster this round.
        let mut taken = vec![false; pool_len];
        for c in 0..count {
            let center = &mut centers[c * dim..(c + 1) * dim];
            if sizes[c] == 0 {
                let far = assignment
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !taken[*i])
                    .fold(
                        (0usize, f64::NEG_INFINITY),
                        |best, (i, &(_, d))| {
                            if d > best.1 {
                                (i, d)
                            } else {
                                best
                            }
                        },
                    )
                    .0;
                taken[far] = true;
                center.copy_from_slice(point(far));
            } else {
                let inv = 1.0 / sizes[c] as f64;
                for (dst, &s) in center.iter_mut().zip(&sums[c * dim..(c + 1) * dim]) {
                    *dst = s * inv;
                }
            }
        }
    }

    Ok(DMatrix::from_vec(dim, count, centers))
}

/// Nearest center (lowest index on ties) and squared distance for each point.
fn assign(pool: &[f64], centers: &[f64], dim: usize, out: &mut [(usize, f64)]) {
    let norms: Vec<f64> = centers.chunks_exact(dim).map(|c| dot(c, c)).collect();
    out.par_iter_mut()
        .zip(pool.par_chunks_exact(dim))
        .for_each(|(slot, x)| {
            let xx = dot(x, x);
            let mut best = (0usize, f64::INFINITY);
            for (c, (center, &cc)) in centers.chunks_exact(dim).zip(&norms).enumerate() {
                let d = xx - 2.0 * dot(x, center) + cc;
                if d < best.1 {
                    best = (c, d);
                }
            }
            *slot = (best.0, best.1.max(0.0));
        });
}
