//! Test objectives with per-sample gradient oracles.
//!
//! Every objective is a mean over `N` samples, `f(x) = (1/N) Σ f_i(x)`, so a
//! minibatch mean of per-sample gradients is an unbiased estimate of `∇f`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Quadratic,
    Logistic,
    TinyMlp,
}

/// Serializable description from which a [`Problem`] is generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    /// Least squares `(1/2N) ‖A x − b‖²` with Gaussian `A` and `b = A x_true + noise`.
    Quadratic {
        dim: usize,
        samples: usize,
        #[serde(default)]
        noise: f64,
        seed: u64,
    },
    /// L2-regularized logistic regression on two separable Gaussian clouds.
    /// The model has `features + 1` parameters (a bias is appended).
    Logistic {
        features: usize,
        samples: usize,
        #[serde(default = "default_test_samples")]
        test_samples: usize,
        #[serde(default = "default_margin")]
        margin: f64,
        #[serde(default = "default_l2")]
        l2: f64,
        seed: u64,
    },
    /// tanh MLP with softmax cross-entropy on Gaussian blobs.
    TinyMlp {
        layers: Vec<usize>,
        samples: usize,
        #[serde(default = "default_test_samples")]
        test_samples: usize,
        seed: u64,
    },
}

fn default_test_samples() -> usize {
    1000
}

fn default_margin() -> f64 {
    0.5
}

fn default_l2() -> f64 {
    1e-3
}

/// Largest parameter count accepted for a tiny MLP.
pub const TINY_MLP_MAX_PARAMS: usize = 5000;

impl ProblemSpec {
    pub fn build(&self) -> Result<Problem> {
        match self {
            ProblemSpec::Quadratic {
                dim,
                samples,
                noise,
                seed,
            } => Problem::quadratic(*dim, *samples, *noise, *seed),
            ProblemSpec::Logistic {
                features,
                samples,
                test_samples,
                margin,
                l2,
                seed,
            } => Problem::logistic(*features, *samples, *test_samples, *margin, *l2, *seed),
            ProblemSpec::TinyMlp {
                layers,
                samples,
                test_samples,
                seed,
            } => Problem::tiny_mlp(layers, *samples, *test_samples, *seed),
        }
    }
}

#[derive(Debug, Clone)]
struct LeastSquares {
    /// Row-major `samples × dim`.
    a: Vec<f64>,
    b: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Logistic {
    /// Row-major `samples × (features + 1)`, last column is the bias input 1.
    x: Vec<f64>,
    y: Vec<f64>,
    test_x: Vec<f64>,
    test_y: Vec<f64>,
    l2: f64,
}

#[derive(Debug, Clone)]
struct Mlp {
    layers: Vec<usize>,
    x: Vec<f64>,
    labels: Vec<usize>,
    test_x: Vec<f64>,
    test_labels: Vec<usize>,
}

#[derive(Debug, Clone)]
enum Objective {
    LeastSquares(LeastSquares),
    Logistic(Logistic),
    Mlp(Mlp),
}

#[derive(Debug, Clone)]
pub struct Problem {
    kind: ProblemKind,
    dim: usize,
    samples: usize,
    objective: Objective,
    /// Smoothness constant `L` (exact for the convex problems, a local estimate for the MLP).
    pub smoothness: f64,
    /// Known optimum (quadratic), Newton optimum (logistic) or the lower bound 0 (MLP).
    pub f_star: f64,
    pub x_star: Option<Vec<f64>>,
    pub x0: Vec<f64>,
}

impl Problem {
    pub fn quadratic(dim: usize, samples: usize, noise: f64, seed: u64) -> Result<Self> {
        if dim == 0 || samples < dim {
            return Err(Error::InvalidConfig(format!(
                "quadratic needs samples >= dim >= 1, got dim {dim}, samples {samples}"
            )));
        }
        let mut rng = SplitMix64::new(seed);
        let a = rng.gaussian_vec(samples * dim);
        let x_true = rng.gaussian_vec(dim);
        let b: Vec<f64> = a
            .chunks_exact(dim)
            .map(|row| dot(row, &x_true) + noise * rng.gaussian())
            .collect();
        Self::least_squares(a, b, dim)
    }

    /// Least squares on explicit row-major data `a` (`b.len() × dim`).
    ///
    /// A singular design leaves `x_star` unset and `f_star` at 0.
    pub fn least_squares(a: Vec<f64>, b: Vec<f64>, dim: usize) -> Result<Self> {
        let samples = b.len();
        if dim == 0 || samples == 0 || a.len() != samples * dim {
            return Err(Error::InvalidShape(format!(
                "least squares data: {} entries for {samples} samples of dim {dim}",
                a.len()
            )));
        }
        let am = DMatrix::from_row_slice(samples, dim, &a);
        let gram = am.tr_mul(&am) / samples as f64;
        let rhs = am.tr_mul(&DVector::from_column_slice(&b)) / samples as f64;
        let smoothness = max_eigenvalue(&gram);
        let x_star: Option<Vec<f64>> = gram.clone().cholesky().map(|c| c.solve(&rhs).data.into());
        let mut p = Self {
            kind: ProblemKind::Quadratic,
            dim,
            samples,
            objective: Objective::LeastSquares(LeastSquares { a, b }),
            smoothness,
            f_star: 0.0,
            x_star: None,
            x0: vec![0.0; dim],
        };
        if let Some(xs) = &x_star {
            p.f_star = p.loss(xs);
        }
        p.x_star = x_star;
        Ok(p)
    }

    pub fn logistic(
        features: usize,
        samples: usize,
        test_samples: usize,
        margin: f64,
        l2: f64,
        seed: u64,
    ) -> Result<Self> {
        if features == 0 || samples == 0 || !(margin >= 0.0) || !(l2 >= 0.0) {
            return Err(Error::InvalidConfig(
                "logistic needs features, samples > 0 and margin, l2 >= 0".into(),
            ));
        }
        let mut rng = SplitMix64::new(seed);
        let mut w = rng.gaussian_vec(features);
        let wn = dot(&w, &w).sqrt();
        w.iter_mut().for_each(|v| *v /= wn);
        let draw = |n: usize, rng: &mut SplitMix64| {
            let mut xs = Vec::with_capacity(n * (features + 1));
            let mut ys = Vec::with_capacity(n);
            while ys.len() < n {
                let y = if rng.bernoulli(0.5) { 1.0 } else { -1.0 };
                let mut x = rng.gaussian_vec(features);
                for (xi, wi) in x.iter_mut().zip(&w) {
                    *xi += y * wi;
                }
                // Keep only points at least margin/2 on their side of the separator.
                if y * dot(&x, &w) < margin / 2.0 {
                    continue;
                }
                xs.extend_from_slice(&x);
                xs.push(1.0);
                ys.push(y);
            }
            (xs, ys)
        };
        let (x, y) = draw(samples, &mut rng);
        let (test_x, test_y) = draw(test_samples, &mut rng);
        let dim = features + 1;
        let xm = DMatrix::from_row_slice(samples, dim, &x);
        let smoothness = 0.25 * max_eigenvalue(&(xm.tr_mul(&xm) / samples as f64)) + l2;
        let mut p = Self {
            kind: ProblemKind::Logistic,
            dim,
            samples,
            objective: Objective::Logistic(Logistic {
                x,
                y,
                test_x,
                test_y,
                l2,
            }),
            smoothness,
            f_star: 0.0,
            x_star: None,
            x0: vec![0.0; dim],
        };
        let x_star = p.newton_minimize(50);
        p.f_star = p.loss(&x_star);
        p.x_star = Some(x_star);
        Ok(p)
    }

    pub fn tiny_mlp(layers: &[usize], samples: usize, test_samples: usize, seed: u64) -> Result<Self> {
        if layers.len() < 2 || layers.len() > 4 || layers.contains(&0) || *layers.last().unwrap() < 2 {
            return Err(Error::InvalidConfig(
                "tiny MLP needs 1-3 dense layers and at least 2 output classes".into(),
            ));
        }
        let dim: usize = layers.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        if dim > TINY_MLP_MAX_PARAMS {
            return Err(Error::InvalidConfig(format!(
                "tiny MLP has {dim} parameters, limit is {TINY_MLP_MAX_PARAMS}"
            )));
        }
        if samples == 0 {
            return Err(Error::InvalidConfig("tiny MLP needs samples".into()));
        }
        let n_in = layers[0];
        let classes = *layers.last().unwrap();
        let mut rng = SplitMix64::new(seed);
        let centers: Vec<f64> = (0..classes * n_in).map(|_| 1.5 * rng.gaussian()).collect();
        let blobs = |n: usize, rng: &mut SplitMix64| {
            let mut xs = Vec::with_capacity(n * n_in);
            let mut labels = Vec::with_capacity(n);
            for _ in 0..n {
                let c = rng.below(classes as u64) as usize;
                for k in 0..n_in {
                    xs.push(centers[c * n_in + k] + rng.gaussian());
                }
                labels.push(c);
            }
            (xs, labels)
        };
        let (x, labels) = blobs(samples, &mut rng);
        let (test_x, test_labels) = blobs(test_samples, &mut rng);

        let mut x0 = Vec::with_capacity(dim);
        for w in layers.windows(2) {
            let scale = 1.0 / (w[0] as f64).sqrt();
            x0.extend((0..w[0] * w[1]).map(|_| scale * rng.gaussian()));
            x0.extend(std::iter::repeat_n(0.0, w[1]));
        }
        let mut p = Self {
            kind: ProblemKind::TinyMlp,
            dim,
            samples,
            objective: Objective::Mlp(Mlp {
                layers: layers.to_vec(),
                x,
                labels,
                test_x,
                test_labels,
            }),
            smoothness: 1.0,
            f_star: 0.0,
            x_star: None,
            x0,
        };
        let x0 = p.x0.clone();
        p.smoothness = p.estimate_smoothness(&x0, 50, seed);
        Ok(p)
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_samples(&self) -> usize {
        self.samples
    }

    /// `‖x0 − x*‖` when the optimum is known.
    pub fn initial_distance(&self) -> Option<f64> {
        self.x_star.as_ref().map(|xs| {
            xs.iter()
                .zip(&self.x0)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        })
    }

    pub fn loss(&self, x: &[f64]) -> f64 {
        match &self.objective {
            Objective::LeastSquares(ls) => {
                let sum: f64 =
                    ls.a.chunks_exact(self.dim)
                        .zip(&ls.b)
                        .map(|(row, b)| (dot(row, x) - b).powi(2))
                        .sum();
                0.5 * sum / self.samples as f64
            }
            Objective::Logistic(lg) => {
                let sum: f64 =
                    lg.x.chunks_exact(self.dim)
                        .zip(&lg.y)
                        .map(|(row, y)| softplus(-y * dot(row, x)))
                        .sum();
                sum / self.samples as f64 + 0.5 * lg.l2 * dot(x, x)
            }
            Objective::Mlp(mlp) => {
                let n_in = mlp.layers[0];
                let sum: f64 = mlp
                    .x
                    .chunks_exact(n_in)
                    .zip(&mlp.labels)
                    .map(|(input, &label)| mlp.sample_loss(x, input, label))
                    .sum();
                sum / self.samples as f64
            }
        }
    }

    /// Add `weight · ∇f_i(x)` into `out`.
    pub fn add_sample_gradient(&self, x: &[f64], i: usize, weight: f64, out: &mut [f64]) {
        match &self.objective {
            Objective::LeastSquares(ls) => {
                let row = &ls.a[i * self.dim..(i + 1) * self.dim];
                let r = (dot(row, x) - ls.b[i]) * weight;
                for (o, a) in out.iter_mut().zip(row) {
                    *o += r * a;
                }
            }
            Objective::Logistic(lg) => {
                let row = &lg.x[i * self.dim..(i + 1) * self.dim];
                let y = lg.y[i];
                let coef = -y * sigmoid(-y * dot(row, x)) * weight;
                for ((o, a), xv) in out.iter_mut().zip(row).zip(x) {
                    *o += coef * a + weight * lg.l2 * xv;
                }
            }
            Objective::Mlp(mlp) => {
                let n_in = mlp.layers[0];
                mlp.add_sample_gradient(x, &mlp.x[i * n_in..(i + 1) * n_in], mlp.labels[i], weight, out);
            }
        }
    }

    /// Mean gradient over `batch` (indices may repeat).
    pub fn stochastic_gradient(&self, x: &[f64], batch: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        if batch.is_empty() {
            return out;
        }
        let w = 1.0 / batch.len() as f64;
        for &i in batch {
            self.add_sample_gradient(x, i, w, &mut out);
        }
        out
    }

    pub fn full_gradient(&self, x: &[f64]) -> Vec<f64> {
        match &self.objective {
            Objective::LeastSquares(ls) => {
                // Aᵀ(Ax − b) / N through the dense matrix routines.
                let a = DMatrix::from_row_slice(self.samples, self.dim, &ls.a);
                let r = &a * DVector::from_column_slice(x) - DVector::from_column_slice(&ls.b);
                (a.tr_mul(&r) / self.samples as f64).data.into()
            }
            _ => {
                let all: Vec<usize> = (0..self.samples).collect();
                self.stochastic_gradient(x, &all)
            }
        }
    }

    /// Test-set accuracy for the classification problems.
    pub fn accuracy(&self, x: &[f64]) -> Option<f64> {
        match &self.objective {
            Objective::LeastSquares(_) => None,
            Objective::Logistic(lg) => {
                if lg.test_y.is_empty() {
                    return None;
                }
                let hits = lg
                    .test_x
                    .chunks_exact(self.dim)
                    .zip(&lg.test_y)
                    .filter(|(row, &y)| y * dot(row, x) > 0.0)
                    .count();
                Some(hits as f64 / lg.test_y.len() as f64)
            }
            Objective::Mlp(mlp) => {
                if mlp.test_labels.is_empty() {
                    return None;
                }
                let n_in = mlp.layers[0];
                let hits = mlp
                    .test_x
                    .chunks_exact(n_in)
                    .zip(&mlp.test_labels)
                    .filter(|(input, &label)| {
                        let (acts, _) = mlp.forward(x, input);
                        argmax(acts.last().unwrap()) == label
                    })
                    .count();
                Some(hits as f64 / mlp.test_labels.len() as f64)
            }
        }
    }

    /// Least squares only: a `B'` valid for every `x` with `‖x − x*‖ ≤ radius`,
    /// from `‖g_i(x)_j‖ ≤ ‖a_ij‖ (‖a_i‖ radius + |a_iᵀx* − b_i|)`.
    pub fn second_moment_bound_in_ball(&self, radius: f64, segment_dim: usize) -> Option<f64> {
        let Objective::LeastSquares(ls) = &self.objective else {
            return None;
        };
        let x_star = self.x_star.as_ref()?;
        assert!(segment_dim > 0);
        let n_seg = self.dim.div_ceil(segment_dim);
        let mut acc = vec![0.0; n_seg];
        for (row, b) in ls.a.chunks_exact(self.dim).zip(&ls.b) {
            let scale = dot(row, row).sqrt() * radius + (dot(row, x_star) - b).abs();
            for (j, seg) in row.chunks(segment_dim).enumerate() {
                acc[j] += dot(seg, seg) * scale * scale;
            }
        }
        let n = self.samples as f64;
        Some(acc.into_iter().fold(0.0, |w, a| w.max(a / n)))
    }

    /// Largest Hessian eigenvalue near `x` by power iteration on
    /// finite-difference Hessian-vector products.
    pub fn estimate_smoothness(&self, x: &[f64], iterations: usize, seed: u64) -> f64 {
        let h = 1e-5;
        let mut v = SplitMix64::new(seed).gaussian_vec(self.dim);
        let mut lambda = 0.0;
        for _ in 0..iterations.max(1) {
            let n = dot(&v, &v).sqrt();
            v.iter_mut().for_each(|e| *e /= n);
            let plus: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + h * b).collect();
            let minus: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a - h * b).collect();
            let gp = self.full_gradient(&plus);
            let gm = self.full_gradient(&minus);
            let hv: Vec<f64> = gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * h)).collect();
            lambda = dot(&hv, &hv).sqrt();
            if lambda == 0.0 {
                break;
            }
            v = hv;
        }
        lambda
    }

    fn newton_minimize(&self, iterations: usize) -> Vec<f64> {
        let Objective::Logistic(lg) = &self.objective else {
            unreachable!("Newton solve is only used for logistic regression");
        };
        let d = self.dim;
        let mut theta = self.x0.clone();
        for _ in 0..iterations {
            let g = self.full_gradient(&theta);
            if dot(&g, &g).sqrt() < 1e-13 {
                break;
            }
            let mut hess = DMatrix::<f64>::identity(d, d) * lg.l2;
            for row in lg.x.chunks_exact(d) {
                let s = sigmoid(dot(row, &theta));
                let w = s * (1.0 - s) / self.samples as f64;
                let r = DVector::from_column_slice(row);
                hess.ger(w, &r, &r, 1.0);
            }
            let Some(chol) = hess.cholesky() else { break };
            let step = chol.solve(&DVector::from_vec(g.clone()));
            // Backtracking keeps Newton monotone far from the optimum.
            let f0 = self.loss(&theta);
            let mut t = 1.0;
            loop {
                let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(a, s)| a - t * s).collect();
                if self.loss(&cand) <= f0 || t < 1e-8 {
                    theta = cand;
                    break;
                }
                t *= 0.5;
            }
        }
        theta
    }
}

impl Mlp {
    /// Activations per layer (input first, softmax probabilities last) and pre-activations.
    fn forward(&self, params: &[f64], input: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut acts = vec![input.to_vec()];
        let mut pre = Vec::new();
        let mut off = 0;
        let last = self.layers.len() - 2;
        for (l, w) in self.layers.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &params[off..off + n_in * n_out];
            let bias = &params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let prev = acts.last().unwrap();
            let z: Vec<f64> = (0..n_out)
                .map(|o| dot(&weights[o * n_in..(o + 1) * n_in], prev) + bias[o])
                .collect();
            let a = if l == last {
                softmax(&z)
            } else {
                z.iter().map(|v| v.tanh()).collect()
            };
            pre.push(z);
            acts.push(a);
        }
        (acts, pre)
    }

    fn sample_loss(&self, params: &[f64], input: &[f64], label: usize) -> f64 {
        let (_, pre) = self.forward(params, input);
        let logits = pre.last().unwrap();
        log_sum_exp(logits) - logits[label]
    }

    fn add_sample_gradient(&self, params: &[f64], input: &[f64], label: usize, weight: f64, out: &mut [f64]) {
        let (acts, _) = self.forward(params, input);
        let n_layers = self.layers.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for w in self.layers.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        // dL/dz at the output: softmax − one_hot.
        let mut delta: Vec<f64> = acts[n_layers].clone();
        delta[label] -= 1.0;
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.layers[l], self.layers[l + 1]);
            let base = offsets[l];
            let prev = &acts[l];
            for o in 0..n_out {
                let d = delta[o] * weight;
                for i in 0..n_in {
                    out[base + o * n_in + i] += d * prev[i];
                }
                out[base + n_in * n_out + o] += d;
            }
            if l > 0 {
                let weights = &params[base..base + n_in * n_out];
                delta = (0..n_in)
                    .map(|i| {
                        let back: f64 = (0..n_out).map(|o| weights[o * n_in + i] * delta[o]).sum();
                        back * (1.0 - prev[i] * prev[i])
                    })
                    .collect();
            }
        }
    }
}

/// Central-difference check: `max_k |FD_k − ∇f_k| / (|∇f_k| + 1e-12)`.
pub fn finite_diff_check(p: &Problem, x: &[f64], h: f64) -> f64 {
    assert!(h > 0.0, "step must be positive");
    let grad = p.full_gradient(x);
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for k in 0..x.len() {
        probe[k] = x[k] + h;
        let fp = p.loss(&probe);
        probe[k] = x[k] - h;
        let fm = p.loss(&probe);
        probe[k] = x[k];
        let fd = (fp - fm) / (2.0 * h);
        worst = worst.max((fd - grad[k]).abs() / (grad[k].abs() + 1e-12));
    }
    worst
}

/// `B'`: the largest per-segment second moment `E_i ‖g_i(x)_j‖²` of the
/// single-sample gradient over the given points and every segment `j`.
pub fn estimate_second_moment(p: &Problem, xs: &[Vec<f64>], segment_dim: usize) -> f64 {
    assert!(segment_dim > 0);
    let n_seg = p.dim().div_ceil(segment_dim);
    let mut worst = 0.0f64;
    let mut g = vec![0.0; p.dim()];
    for x in xs {
        let mut acc = vec![0.0; n_seg];
        for i in 0..p.num_samples() {
            g.iter_mut().for_each(|v| *v = 0.0);
            p.add_sample_gradient(x, i, 1.0, &mut g);
            for (j, seg) in g.chunks(segment_dim).enumerate() {
                acc[j] += dot(seg, seg);
            }
        }
        let n = p.num_samples() as f64;
        worst = acc.iter().fold(worst, |w, &a| w.max(a / n));
    }
    worst
}

/// Largest single-sample gradient variance `E_i ‖g_i(x) − ∇f(x)‖²` over `xs`.
pub fn estimate_noise_variance(p: &Problem, xs: &[Vec<f64>]) -> f64 {
    let mut worst = 0.0f64;
    let mut g = vec![0.0; p.dim()];
    for x in xs {
        let full = p.full_gradient(x);
        let mut acc = 0.0;
        for i in 0..p.num_samples() {
            g.iter_mut().for_each(|v| *v = 0.0);
            p.add_sample_gradient(x, i, 1.0, &mut g);
            acc += g.iter().zip(&full).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        }
        worst = worst.max(acc / p.num_samples() as f64);
    }
    worst
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(z);
    z.iter().map(|v| (v - lse).exp()).collect()
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (i, &x)| if x > b.1 { (i, x) } else { b })
        .0
}

fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}
