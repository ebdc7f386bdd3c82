//! Element-wise reference compressors: QSGD, TernGrad and SignSGD.

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Bucket size used by QSGD in the federated experiments.
pub const QSGD_DEFAULT_BUCKET: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub enum BaselineCode {
    Qsgd {
        levels: u32,
        bucket: usize,
        /// Euclidean norm of each bucket.
        norms: Vec<f64>,
        /// Signed level in `[-s, s]` per coordinate.
        quantized: Vec<i32>,
    },
    TernGrad {
        scaler: f64,
        /// Each entry is -1, 0 or +1.
        values: Vec<i8>,
    },
    Sign {
        /// `true` encodes +1.
        positive: Vec<bool>,
    },
}

impl BaselineCode {
    pub fn dim(&self) -> usize {
        match self {
            BaselineCode::Qsgd { quantized, .. } => quantized.len(),
            BaselineCode::TernGrad { values, .. } => values.len(),
            BaselineCode::Sign { positive } => positive.len(),
        }
    }

    pub fn decode(&self) -> Vec<f64> {
        match self {
            BaselineCode::Qsgd {
                levels,
                bucket,
                norms,
                quantized,
            } => quantized
                .chunks(*bucket)
                .zip(norms)
                .flat_map(|(chunk, &norm)| chunk.iter().map(move |&q| norm * q as f64 / *levels as f64))
                .collect(),
            BaselineCode::TernGrad { scaler, values } => values.iter().map(|&t| scaler * t as f64).collect(),
            BaselineCode::Sign { positive } => positive.iter().map(|&p| if p { 1.0 } else { -1.0 }).collect(),
        }
    }

    /// Nonzero coordinates of a QSGD code (0 for other schemes).
    pub fn nonzeros(&self) -> usize {
        match self {
            BaselineCode::Qsgd { quantized, .. } => quantized.iter().filter(|&&q| q != 0).count(),
            BaselineCode::TernGrad { values, .. } => values.iter().filter(|&&v| v != 0).count(),
            BaselineCode::Sign { .. } => 0,
        }
    }
}

fn check_finite(g: &[f64]) -> Result<()> {
    if g.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidGradient)
    }
}

/// QSGD with `s` uniform levels per bucket.
pub fn qsgd_compress(g: &[f64], s: u32, bucket: usize, rng: &mut SplitMix64) -> Result<BaselineCode> {
    if s == 0 || bucket == 0 {
        return Err(Error::InvalidConfig("QSGD needs s >= 1 and a positive bucket".into()));
    }
    check_finite(g)?;
    let mut norms = Vec::with_capacity(g.len().div_ceil(bucket));
    let mut quantized = Vec::with_capacity(g.len());
    for chunk in g.chunks(bucket) {
        let norm = chunk.iter().map(|v| v * v).sum::<f64>().sqrt();
        norms.push(norm);
        for &v in chunk {
            if norm == 0.0 {
                quantized.push(0);
                continue;
            }
            let r = v.abs() / norm * s as f64;
            let lower = r.floor();
            let level = lower as i32 + rng.bernoulli(r - lower) as i32;
            quantized.push(if v < 0.0 { -level } else { level });
        }
    }
    Ok(BaselineCode::Qsgd {
        levels: s,
        bucket,
        norms,
        quantized,
    })
}

/// TernGrad: scaler `max |g_i|`, entries ±1 with probability `|g_i| / scaler`.
pub fn terngrad_compress(g: &[f64], rng: &mut SplitMix64) -> Result<BaselineCode> {
    check_finite(g)?;
    let scaler = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let values = g
        .iter()
        .map(|&v| {
            if scaler == 0.0 || !rng.bernoulli(v.abs() / scaler) {
                0
            } else if v < 0.0 {
                -1
            } else {
                1
            }
        })
        .collect();
    Ok(BaselineCode::TernGrad { scaler, values })
}

/// SignSGD. `sign(0)` is taken as +1.
pub fn signsgd_compress(g: &[f64]) -> Result<BaselineCode> {
    check_finite(g)?;
    Ok(BaselineCode::Sign {
        positive: g.iter().map(|&v| v >= 0.0).collect(),
    })
}

fn elias_gamma_bits(n: u64) -> u64 {
    debug_assert!(n >= 1);
    2 * (63 - n.leading_zeros() as u64) + 1
}

/// Bits of a sparse QSGD encoding of `code`: per nonzero, an Elias-gamma
/// position gap, one sign bit and an Elias-gamma level. Bucket norms are not
/// counted.
pub fn qsgd_sparse_bits(code: &BaselineCode) -> Option<u64> {
    let BaselineCode::Qsgd { quantized, .. } = code else {
        return None;
    };
    let mut prev = 0u64;
    let mut bits = 0u64;
    for (i, &q) in quantized.iter().enumerate() {
        if q == 0 {
            continue;
        }
        let pos = i as u64 + 1;
        bits += elias_gamma_bits(pos - prev) + 1 + elias_gamma_bits(q.unsigned_abs() as u64);
        prev = pos;
    }
    Some(bits)
}

/// Upper bound `s (s + √d)` on the expected QSGD nonzero count for `d` coordinates.
pub fn qsgd_nonzero_bound(d: usize, s: u32) -> f64 {
    let s = s as f64;
    s * (s + (d as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mc_mean(n: usize, mut f: impl FnMut() -> Vec<f64>) -> (Vec<f64>, Vec<f64>) {
        let first = f();
        let d = first.len();
        let mut sum = first.clone();
        let mut sq: Vec<f64> = first.iter().map(|v| v * v).collect();
        for _ in 1..n {
            for (k, v) in f().into_iter().enumerate() {
                sum[k] += v;
                sq[k] += v * v;
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let se = (0..d)
            .map(|k| ((sq[k] / n as f64 - mean[k] * mean[k]).max(0.0) / n as f64).sqrt())
            .collect();
        (mean, se)
    }

    #[test]
    fn qsgd_single_coordinate_is_exact() {
        let mut rng = SplitMix64::new(1);
        let g = [0.0, -2.5, 0.0];
        for _ in 0..100 {
            let code = qsgd_compress(&g, 4, 512, &mut rng).unwrap();
            assert_eq!(code.decode(), g.to_vec());
        }
    }

    #[test]
    fn qsgd_zero_bucket() {
        let mut rng = SplitMix64::new(1);
        let mut g = vec![0.0; 8];
        g.extend([1.0, 2.0]);
        let code = qsgd_compress(&g, 2, 8, &mut rng).unwrap();
        let BaselineCode::Qsgd { quantized, norms, .. } = &code else {
            panic!()
        };
        assert!(quantized[..8].iter().all(|&q| q == 0));
        assert_eq!(norms[0], 0.0);
        assert_eq!(norms.len(), 2);
    }

    #[test]
    fn qsgd_is_unbiased() {
        let mut rng = SplitMix64::new(2);
        let g: Vec<f64> = rng.gaussian_vec(20);
        let (mean, se) = mc_mean(50_000, || qsgd_compress(&g, 2, 8, &mut rng).unwrap().decode());
        for k in 0..g.len() {
            assert!((mean[k] - g[k]).abs() <= 4.0 * se[k] + 1e-12, "coord {k}");
        }
    }

    #[test]
    fn qsgd_s1_sparsity_bound() {
        let mut rng = SplitMix64::new(3);
        let bucket = 512;
        let g = rng.gaussian_vec(bucket);
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let l1: f64 = g.iter().map(|v| v.abs()).sum();
        let n = 2000;
        let counts: Vec<f64> = (0..n)
            .map(|_| qsgd_compress(&g, 1, bucket, &mut rng).unwrap().nonzeros() as f64)
            .collect();
        let mean = counts.iter().sum::<f64>() / n as f64;
        let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        // E[nnz] = ||g||_1 / ||g|| exactly for s = 1.
        assert!((mean - l1 / norm).abs() < 4.0 * (var / n as f64).sqrt());
        assert!(l1 / norm <= (bucket as f64).sqrt());
        assert!(mean <= qsgd_nonzero_bound(bucket, 1));
    }

    #[test]
    fn terngrad_cases() {
        let mut rng = SplitMix64::new(4);
        let code = terngrad_compress(&[0.0; 5], &mut rng).unwrap();
        assert_eq!(code.decode(), vec![0.0; 5]);
        let code = terngrad_compress(&[1.5, -1.5], &mut rng).unwrap();
        assert_eq!(
            code,
            BaselineCode::TernGrad {
                scaler: 1.5,
                values: vec![1, -1]
            }
        );
    }

    #[test]
    fn terngrad_is_unbiased() {
        let mut rng = SplitMix64::new(5);
        let g = rng.gaussian_vec(10);
        let (mean, se) = mc_mean(100_000, || terngrad_compress(&g, &mut rng).unwrap().decode());
        for k in 0..g.len() {
            assert!((mean[k] - g[k]).abs() <= 4.0 * se[k] + 1e-12, "coord {k}");
        }
    }

    #[test]
    fn sign_cases() {
        assert_eq!(signsgd_compress(&[2.0, -3.0]).unwrap().decode(), vec![1.0, -1.0]);
        assert_eq!(signsgd_compress(&[0.0]).unwrap().decode(), vec![1.0]);
        assert_eq!(signsgd_compress(&[f64::NAN]), Err(Error::InvalidGradient));
    }

    #[test]
    fn elias_gamma_lengths() {
        assert_eq!(elias_gamma_bits(1), 1);
        assert_eq!(elias_gamma_bits(2), 3);
        assert_eq!(elias_gamma_bits(3), 3);
        assert_eq!(elias_gamma_bits(4), 5);
        let code = BaselineCode::Qsgd {
            levels: 1,
            bucket: 4,
            norms: vec![1.0],
            quantized: vec![0, 1, 0, -1],
        };
        // gaps 2 and 2, levels 1 and 1: (3+1+1) * 2
        assert_eq!(qsgd_sparse_bits(&code), Some(10));
    }
}
