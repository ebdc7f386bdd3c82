//! Gaussian (Johnson–Lindenstrauss) sketch of the codebook projections.
//!
//! With `H` a `dim × k` matrix of i.i.d. standard normals, the sketch stores
//! `bar = (1/√k) · P · H` where `P` is `C†` (unbiased path) or `Cᵀ` (greedy
//! path), and answers queries as `bar · ((1/√k) · Hᵀ g)`. The two `1/√k`
//! factors combine to `P (H Hᵀ / k) g`, and `E[H Hᵀ] = k I`, so the query is an
//! unbiased estimate of `P g` at `2·count·k`-ish cost instead of `count·dim`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::Codebook;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SketchPath {
    /// Sketch `C† g`.
    Unbiased,
    /// Sketch `Cᵀ g`.
    Greedy,
}

#[derive(Debug, Clone)]
pub struct SketchedCodebook<'a> {
    base: &'a Codebook,
    path: SketchPath,
    h: DMatrix<f64>,
    bar: DMatrix<f64>,
}

impl<'a> SketchedCodebook<'a> {
    pub fn new(base: &'a Codebook, k: usize, seed: u64, path: SketchPath) -> Result<Self> {
        if k == 0 || k >= base.dim() {
            return Err(Error::InvalidShape(format!(
                "sketch dimension {k} must lie in [1, {})",
                base.dim()
            )));
        }
        let mut rng = SplitMix64::new(seed);
        let h = DMatrix::from_iterator(base.dim(), k, (0..base.dim() * k).map(|_| rng.gaussian()));
        Self::with_matrix(base, h, path)
    }

    /// Use an explicit `dim × k` sketch matrix (any `k ≤ dim`).
    pub fn with_matrix(base: &'a Codebook, h: DMatrix<f64>, path: SketchPath) -> Result<Self> {
        let k = h.ncols();
        if h.nrows() != base.dim() || k == 0 || k > base.dim() {
            return Err(Error::InvalidShape(format!(
                "sketch matrix is {}x{k}, codebook dim {}",
                h.nrows(),
                base.dim()
            )));
        }
        let scale = 1.0 / (k as f64).sqrt();
        let bar = match path {
            SketchPath::Unbiased => base.pinv() * &h * scale,
            SketchPath::Greedy => base.columns().transpose() * &h * scale,
        };
        Ok(Self { base, path, h, bar })
    }

    pub fn base(&self) -> &Codebook {
        self.base
    }

    pub fn path(&self) -> SketchPath {
        self.path
    }

    pub fn sketch_dim(&self) -> usize {
        self.h.ncols()
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    /// The transformed `count × k` matrix.
    pub fn bar(&self) -> &DMatrix<f64> {
        &self.bar
    }

    /// Approximation of `C† g` or `Cᵀ g` depending on the path.
    pub fn project(&self, g: &[f64]) -> Vec<f64> {
        let scale = 1.0 / (self.sketch_dim() as f64).sqrt();
        let g = DVector::from_column_slice(g);
        let t = self.h.tr_mul(&g) * scale;
        (&self.bar * t).data.into()
    }

    /// The exact projection the sketch approximates.
    pub fn exact(&self, g: &[f64]) -> Vec<f64> {
        match self.path {
            SketchPath::Unbiased => self.base.pinv_mul(g),
            SketchPath::Greedy => self.base.correlations(g),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::CodebookMethod;

    #[test]
    fn scaled_identity_sketch_is_exact() {
        let cb = Codebook::generate(CodebookMethod::RandomGaussian, 6, 10, 3).unwrap();
        let k = cb.dim();
        let h = DMatrix::<f64>::identity(k, k) * (k as f64).sqrt();
        let mut rng = SplitMix64::new(8);
        for path in [SketchPath::Unbiased, SketchPath::Greedy] {
            let s = SketchedCodebook::with_matrix(&cb, h.clone(), path).unwrap();
            let g = rng.gaussian_vec(k);
            for (a, b) in s.project(&g).iter().zip(s.exact(&g)) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rejects_bad_k() {
        let cb = Codebook::generate(CodebookMethod::Sob, 4, 4, 0).unwrap();
        assert!(cb.sketch(0, 1, SketchPath::Greedy).is_err());
        assert!(cb.sketch(4, 1, SketchPath::Greedy).is_err());
        assert!(cb.sketch(3, 1, SketchPath::Greedy).is_ok());
    }

    #[test]
    fn shapes() {
        let cb = Codebook::generate(CodebookMethod::RandomGaussian, 8, 12, 3).unwrap();
        let s = cb.sketch(5, 2, SketchPath::Unbiased).unwrap();
        assert_eq!(s.bar().shape(), (12, 5));
        assert_eq!(s.h().shape(), (8, 5));
        assert_eq!(s.project(&[1.0; 8]).len(), 12);
    }
}
