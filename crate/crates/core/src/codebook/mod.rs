//! Shared vector codebooks.
//!
//! A codebook is a `dim × count` matrix of unit-norm codewords with full row
//! rank. Devices and the coordinator regenerate it from `(method, dim, count,
//! seed)`, so only the seed ever needs to be distributed.

mod io;
mod kmeans;
mod sketch;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

pub use io::{read_codebook, write_codebook, CODEBOOK_MAGIC, CODEBOOK_VERSION};
pub use kmeans::{KMeansParams, KMEANS_ITERATIONS, KMEANS_POOL_FACTOR};
pub use sketch::{SketchPath, SketchedCodebook};

/// Smallest singular value accepted as full row rank.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodebookMethod {
    /// Standard orthonormal basis `e_1 .. e_dim`.
    Sob,
    /// Haar-random rotation of the standard basis.
    RandomRotation,
    /// Normalized i.i.d. Gaussian vectors.
    RandomGaussian,
    /// Normalized k-means centers of a Gaussian sample.
    #[serde(rename = "kmeans_gaussian")]
    KMeansGaussian,
}

impl CodebookMethod {
    pub const ALL: [CodebookMethod; 4] = [
        CodebookMethod::Sob,
        CodebookMethod::RandomRotation,
        CodebookMethod::RandomGaussian,
        CodebookMethod::KMeansGaussian,
    ];

    pub fn code(self) -> u8 {
        match self {
            CodebookMethod::Sob => 0,
            CodebookMethod::RandomRotation => 1,
            CodebookMethod::RandomGaussian => 2,
            CodebookMethod::KMeansGaussian => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.code() == code)
    }

    pub fn name(self) -> &'static str {
        match self {
            CodebookMethod::Sob => "sob",
            CodebookMethod::RandomRotation => "random_rotation",
            CodebookMethod::RandomGaussian => "random_gaussian",
            CodebookMethod::KMeansGaussian => "kmeans_gaussian",
        }
    }

    /// Orthonormal methods require a square codebook.
    pub fn requires_square(self) -> bool {
        matches!(self, CodebookMethod::Sob | CodebookMethod::RandomRotation)
    }
}

impl std::str::FromStr for CodebookMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        match norm.as_str() {
            "sob" => Ok(CodebookMethod::Sob),
            "rr" | "random_rotation" => Ok(CodebookMethod::RandomRotation),
            "gaussian" | "random_gaussian" => Ok(CodebookMethod::RandomGaussian),
            "kmeans" | "kmeans_gaussian" => Ok(CodebookMethod::KMeansGaussian),
            _ => Err(Error::InvalidConfig(format!("unknown codebook method `{s}`"))),
        }
    }
}

/// Immutable shared codebook with its pseudoinverse and extremal singular values.
#[derive(Debug, Clone)]
pub struct Codebook {
    dim: usize,
    count: usize,
    columns: DMatrix<f64>,
    pinv: DMatrix<f64>,
    sigma_min: f64,
    sigma_max: f64,
    seed: u64,
    method: CodebookMethod,
}

impl Codebook {
    /// Regenerate the codebook identified by `(method, dim, count, seed)`.
    pub fn generate(method: CodebookMethod, dim: usize, count: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidShape("segment dimension must be positive".into()));
        }
        if count < dim {
            return Err(Error::InvalidShape(format!(
                "codeword count {count} is below segment dimension {dim}"
            )));
        }
        if method.requires_square() && count != dim {
            return Err(Error::InvalidShape(format!(
                "{} needs count == dim, got {count} != {dim}",
                method.name()
            )));
        }
        let columns = match method {
            CodebookMethod::Sob => DMatrix::identity(dim, dim),
            CodebookMethod::RandomRotation => random_rotation(dim, seed)?,
            CodebookMethod::RandomGaussian => random_gaussian(dim, count, seed),
            CodebookMethod::KMeansGaussian => kmeans::kmeans_gaussian(dim, count, seed, &KMeansParams::default())?,
        };
        Self::from_columns(columns, seed, method)
    }

    /// Build from explicit columns. Columns are renormalized to unit length.
    pub fn from_columns(mut columns: DMatrix<f64>, seed: u64, method: CodebookMethod) -> Result<Self> {
        for mut col in columns.column_iter_mut() {
            let norm = col.norm();
            if !(norm > 0.0) || !norm.is_finite() {
                return Err(Error::RankDeficient { sigma_min: 0.0 });
            }
            col /= norm;
        }
        Self::from_unit_columns(columns, seed, method)
    }

    /// Build from columns that are already unit length; they are stored as given.
    pub fn from_unit_columns(columns: DMatrix<f64>, seed: u64, method: CodebookMethod) -> Result<Self> {
        let (dim, count) = columns.shape();
        if dim == 0 || count < dim {
            return Err(Error::InvalidShape(format!("{dim}x{count} codebook")));
        }
        let (pinv, sigma_min, sigma_max) = pseudoinverse(&columns)?;
        Ok(Self {
            dim,
            count,
            columns,
            pinv,
            sigma_min,
            sigma_max,
            seed,
            method,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn method(&self) -> CodebookMethod {
        self.method
    }

    pub fn columns(&self) -> &DMatrix<f64> {
        &self.columns
    }

    /// `C^T (C C^T)^{-1}`, shape `count × dim`.
    pub fn pinv(&self) -> &DMatrix<f64> {
        &self.pinv
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma_min
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma_max
    }

    /// Largest singular value of the pseudoinverse, `1 / sigma_min`.
    pub fn pinv_sigma_max(&self) -> f64 {
        1.0 / self.sigma_min
    }

    pub fn codeword(&self, index: usize) -> &[f64] {
        &self.columns.as_slice()[index * self.dim..(index + 1) * self.dim]
    }

    /// `p = C† g`, written into `out` (length `count`).
    pub fn pinv_mul_into(&self, g: &[f64], out: &mut [f64]) {
        debug_assert_eq!(g.len(), self.dim);
        debug_assert_eq!(out.len(), self.count);
        out.iter_mut().for_each(|o| *o = 0.0);
        let data = self.pinv.as_slice();
        for (j, &gj) in g.iter().enumerate() {
            if gj == 0.0 {
                continue;
            }
            let col = &data[j * self.count..(j + 1) * self.count];
            for (o, &c) in out.iter_mut().zip(col) {
                *o += c * gj;
            }
        }
    }

    /// `C^T g`, written into `out` (length `count`).
    pub fn correlations_into(&self, g: &[f64], out: &mut [f64]) {
        debug_assert_eq!(g.len(), self.dim);
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.codeword(i), g);
        }
    }

    pub fn correlations(&self, g: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.count];
        self.correlations_into(g, &mut out);
        out
    }

    pub fn pinv_mul(&self, g: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.count];
        self.pinv_mul_into(g, &mut out);
        out
    }

    /// JL sketch of the projection used by `path`.
    pub fn sketch(&self, k: usize, seed: u64, path: SketchPath) -> Result<SketchedCodebook<'_>> {
        SketchedCodebook::new(self, k, seed, path)
    }
}

/// Returns `(C^T (C C^T)^{-1}, sigma_min(C), sigma_max(C))`.
///
/// Singular values come from the eigenvalues of the `dim × dim` Gram matrix.
pub fn pseudoinverse(columns: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64, f64)> {
    let gram = columns * columns.transpose();
    let eig = SymmetricEigen::new(gram.clone());
    let (lo, hi) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let sigma_min = lo.max(0.0).sqrt();
    let sigma_max = hi.max(0.0).sqrt();
    if !(sigma_min >= RANK_TOLERANCE) {
        return Err(Error::RankDeficient { sigma_min });
    }
    let chol = gram.cholesky().ok_or(Error::RankDeficient { sigma_min })?;
    // (G^{-1} C)^T == C^T G^{-1} since G is symmetric.
    let pinv = chol.solve(columns).transpose();
    Ok((pinv, sigma_min, sigma_max))
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn random_gaussian(dim: usize, count: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = SplitMix64::new(seed);
    // Column-major fill: codeword j is draws j*dim .. (j+1)*dim.
    DMatrix::from_iterator(dim, count, (0..dim * count).map(|_| rng.gaussian()))
}

/// Haar rotation: Gram–Schmidt (with one re-orthogonalization pass) of a
/// Gaussian matrix. The implied triangular factor has a positive diagonal.
fn random_rotation(dim: usize, seed: u64) -> Result<DMatrix<f64>> {
    let mut q = random_gaussian(dim, dim, seed);
    for j in 0..dim {
        for _pass in 0..2 {
            for i in 0..j {
                let proj = q.column(i).dot(&q.column(j));
                let qi = q.column(i).clone_owned();
                let mut cj = q.column_mut(j);
                cj.axpy(-proj, &qi, 1.0);
            }
        }
        let norm = q.column(j).norm();
        if !(norm > RANK_TOLERANCE) {
            return Err(Error::RankDeficient { sigma_min: norm });
        }
        q.column_mut(j).unscale_mut(norm);
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs_identity_error(m: &DMatrix<f64>) -> f64 {
        let n = m.nrows();
        (m - DMatrix::<f64>::identity(n, n)).abs().max()
    }

    #[test]
    fn sob_is_identity() {
        let cb = Codebook::generate(CodebookMethod::Sob, 3, 3, 123).unwrap();
        assert_eq!(cb.columns(), &DMatrix::<f64>::identity(3, 3));
        assert_eq!(cb.sigma_min(), 1.0);
        assert_eq!(cb.sigma_max(), 1.0);
        assert_eq!(cb.pinv(), &DMatrix::<f64>::identity(3, 3));
    }

    #[test]
    fn random_rotation_is_orthonormal() {
        let cb = Codebook::generate(CodebookMethod::RandomRotation, 4, 4, 7).unwrap();
        let ctc = cb.columns().transpose() * cb.columns();
        assert!(max_abs_identity_error(&ctc) < 1e-9);
        // Orthonormal case: pinv == C^T.
        assert!((cb.pinv() - cb.columns().transpose()).abs().max() < 1e-12);
        assert!((cb.sigma_min() - 1.0).abs() < 1e-12);
        assert!((cb.sigma_max() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unit_norm_and_right_inverse() {
        for method in CodebookMethod::ALL {
            let (d, m) = if method.requires_square() { (8, 8) } else { (8, 16) };
            let cb = Codebook::generate(method, d, m, 1).unwrap();
            for i in 0..m {
                let n = dot(cb.codeword(i), cb.codeword(i)).sqrt();
                assert!((n - 1.0).abs() < 1e-12, "{method:?} col {i} norm {n}");
            }
            let prod = cb.columns() * cb.pinv();
            assert!(max_abs_identity_error(&prod) < 1e-9, "{method:?}");
            assert!(cb.sigma_min() <= cb.sigma_max());
        }
    }

    #[test]
    fn hand_solved_pinv() {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let c = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, r, 0.0, 1.0, r]);
        let cb = Codebook::from_columns(c, 0, CodebookMethod::RandomGaussian).unwrap();
        // Gram = [[1.5, 0.5], [0.5, 1.5]], inverse = [[0.75, -0.25], [-0.25, 0.75]].
        let expected = DMatrix::from_row_slice(3, 2, &[0.75, -0.25, -0.25, 0.75, 0.5 * r, 0.5 * r]);
        assert!((cb.pinv() - &expected).abs().max() < 1e-12);
        let prod = cb.columns() * cb.pinv();
        assert!(max_abs_identity_error(&prod) < 1e-12);
        // Gram eigenvalues 2 and 1.
        assert!((cb.sigma_max() - 2f64.sqrt()).abs() < 1e-12);
        assert!((cb.sigma_min() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projector_identity() {
        let cb = Codebook::generate(CodebookMethod::RandomGaussian, 6, 11, 4).unwrap();
        let mut rng = SplitMix64::new(99);
        for _ in 0..20 {
            let g = rng.gaussian_vec(6);
            let p = cb.pinv_mul(&g);
            let back = cb.columns() * nalgebra::DVector::from_vec(p);
            for (a, b) in back.iter().zip(&g) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn generation_is_bit_identical() {
        for method in CodebookMethod::ALL {
            let (d, m) = if method.requires_square() { (5, 5) } else { (5, 9) };
            let a = Codebook::generate(method, d, m, 42).unwrap();
            let b = Codebook::generate(method, d, m, 42).unwrap();
            let bits = |c: &Codebook| c.columns().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a), bits(&b), "{method:?}");
            let c = Codebook::generate(method, d, m, 43).unwrap();
            if method != CodebookMethod::Sob {
                assert_ne!(bits(&a), bits(&c));
            }
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(matches!(
            Codebook::generate(CodebookMethod::RandomGaussian, 8, 4, 0),
            Err(Error::InvalidShape(_))
        ));
        assert!(matches!(
            Codebook::generate(CodebookMethod::Sob, 4, 8, 0),
            Err(Error::InvalidShape(_))
        ));
        assert!(matches!(
            Codebook::generate(CodebookMethod::RandomRotation, 0, 0, 0),
            Err(Error::InvalidShape(_))
        ));
    }

    #[test]
    fn rank_deficient_detected() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 0.0]);
        assert!(matches!(
            Codebook::from_columns(c, 0, CodebookMethod::RandomGaussian),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn method_names_roundtrip() {
        for m in CodebookMethod::ALL {
            assert_eq!(m.name().parse::<CodebookMethod>().unwrap(), m);
            assert_eq!(CodebookMethod::from_code(m.code()), Some(m));
        }
    }
}
