//! Statistical validators for the quantizers and accounting claims.
//!
//! Every Monte-Carlo trial `i` draws from `SplitMix64::derive(seed, [i])`, so
//! results are independent of thread count; partial sums are merged in trial
//! order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codebook::{dot, Codebook, SketchPath, SketchedCodebook};
use crate::error::{Error, Result};
use crate::fedsim::Simulator;
use crate::hsq::{self, level_value, Variant};
use crate::rng::SplitMix64;
use crate::scheme::Quantizer;

/// Half-width of the Monte-Carlo acceptance band, in standard errors.
pub const Z_BAND: f64 = 4.0;

/// Trials per parallel chunk; chunk boundaries do not affect results.
const CHUNK: usize = 1024;

/// Per-coordinate running mean and sum of squared deviations.
#[derive(Debug, Clone)]
struct Moments {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(d: usize) -> Self {
        Self {
            n: 0.0,
            mean: vec![0.0; d],
            m2: vec![0.0; d],
        }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1.0;
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let delta = v - *m;
            *m += delta / self.n;
            *s += delta * (v - *m);
        }
    }

    fn merge(mut self, other: Self) -> Self {
        if other.n == 0.0 {
            return self;
        }
        if self.n == 0.0 {
            return other;
        }
        let n = self.n + other.n;
        for i in 0..self.mean.len() {
            let delta = other.mean[i] - self.mean[i];
            self.mean[i] += delta * other.n / n;
            self.m2[i] += other.m2[i] + delta * delta * self.n * other.n / n;
        }
        self.n = n;
        self
    }

    fn variance(&self, i: usize) -> f64 {
        if self.n > 1.0 {
            self.m2[i] / (self.n - 1.0)
        } else {
            0.0
        }
    }
}

/// Run `trials` draws of a vector-valued experiment and accumulate moments.
fn monte_carlo<F>(d: usize, trials: usize, seed: u64, f: F) -> Result<Moments>
where
    F: Fn(&mut SplitMix64, &mut Vec<f64>) -> Result<()> + Sync,
{
    let chunks: Vec<Moments> = (0..trials.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut m = Moments::new(d);
            let mut buf = vec![0.0; d];
            for i in c * CHUNK..((c + 1) * CHUNK).min(trials) {
                let mut rng = SplitMix64::derive(seed, &[i as u64]);
                f(&mut rng, &mut buf)?;
                m.push(&buf);
            }
            Ok(m)
        })
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().fold(Moments::new(d), Moments::merge))
}

fn z_score(mean: f64, target: f64, var: f64, n: f64) -> f64 {
    let err = mean - target;
    let se = (var / n).sqrt();
    if se > 0.0 {
        err / se
    } else if err.abs() <= 1e-12 * target.abs().max(1.0) {
        0.0
    } else {
        err.signum() * f64::INFINITY
    }
}

/// Per-coordinate `z = (mean − g) / (σ̂/√N)` over `trials` quantizations of `g`.
pub fn test_unbiasedness(q: &dyn Quantizer, g: &[f64], trials: usize, seed: u64) -> Result<Vec<f64>> {
    if trials < 2 {
        return Err(Error::InvalidConfig("unbiasedness test needs at least 2 trials".into()));
    }
    let m = monte_carlo(g.len(), trials, seed, |rng, out| {
        let v = q.quantize(g, rng)?;
        if v.len() != g.len() {
            return Err(Error::DimensionMismatch {
                expected: g.len(),
                actual: v.len(),
            });
        }
        out.copy_from_slice(&v);
        Ok(())
    })?;
    Ok((0..g.len())
        .map(|i| z_score(m.mean[i], g[i], m.variance(i), m.n))
        .collect())
}

/// z-score of the decoded stochastic rounding of `u` on the `s`-interval grid.
pub fn test_pseudo_norm_unbiasedness(u: f64, u_min: f64, u_max: f64, s: u32, trials: usize, seed: u64) -> Result<f64> {
    let m = monte_carlo(1, trials, seed, |rng, out| {
        let level = hsq::quantize_pseudo_norm(u, u_min, u_max, s, rng)?;
        out[0] = level_value(u_min, u_max, s, level);
        Ok(())
    })?;
    Ok(z_score(m.mean[0], u, m.variance(0), m.n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    /// `max_j` of the Monte-Carlo `E‖g̃_j‖²`.
    pub empirical: f64,
    pub standard_error: f64,
    /// `B'`: `max_j E‖g_j‖²` of the input distribution.
    pub b_prime: f64,
    /// `m σ₁(C†)² B' + E[(u_max − u_min)²]/s` (norm term dropped for `s = 0`).
    pub bound: f64,
    /// `(1 + 4/s) m σ₁(C†)² B'`, absent for `s = 0`.
    pub loose_bound: Option<f64>,
    pub pass: bool,
    pub loose_pass: Option<bool>,
}

/// Second moment of Unbiased-HSQ segments for gradients `mean + sigma·N(0, I)`.
///
/// Passes iff the empirical value is at most the bound plus `Z_BAND` standard errors.
pub fn test_variance_bound(
    cb: &Codebook,
    levels: u32,
    mean: &[f64],
    sigma: f64,
    trials: usize,
    seed: u64,
) -> Result<VarianceReport> {
    let dp = cb.dim();
    let n_seg = hsq::segment_count(mean.len(), dp);
    let b_prime = mean
        .chunks(dp)
        .map(|seg| dot(seg, seg) + seg.len() as f64 * sigma * sigma)
        .fold(0.0, f64::max);
    // Slots: per-segment ‖g̃_j‖², then (u_max − u_min)².
    let m = monte_carlo(n_seg + 1, trials, seed, |rng, out| {
        let g: Vec<f64> = mean.iter().map(|&mu| mu + sigma * rng.gaussian()).collect();
        let cg = hsq::compress(&g, cb, levels, Variant::Unbiased, rng)?;
        let dec = hsq::decode(&cg, cb)?;
        for (j, seg) in dec.chunks(dp).enumerate() {
            out[j] = dot(seg, seg);
        }
        out[n_seg] = if levels == 0 {
            0.0
        } else {
            (cg.u_max as f64 - cg.u_min as f64).powi(2)
        };
        Ok(())
    })?;
    let (worst, _) = (0..n_seg)
        .map(|j| (j, m.mean[j]))
        .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    let empirical = m.mean[worst];
    let standard_error = (m.variance(worst) / m.n).sqrt();
    let sigma1 = cb.pinv_sigma_max();
    let direction = cb.count() as f64 * sigma1 * sigma1 * b_prime;
    let bound = if levels == 0 {
        direction
    } else {
        direction + m.mean[n_seg] / levels as f64
    };
    let loose_bound = (levels >= 1).then(|| (1.0 + 4.0 / levels as f64) * direction);
    let slack = Z_BAND * standard_error;
    Ok(VarianceReport {
        empirical,
        standard_error,
        b_prime,
        bound,
        loose_bound,
        pass: empirical <= bound + slack,
        loose_pass: loose_bound.map(|b| empirical <= b + slack),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaReport {
    /// Smallest observed `(gᵀQ(g))² / ‖g‖²`.
    pub worst_ratio: f64,
    /// `σ²_min(C) / m`.
    pub threshold: f64,
    pub violations: usize,
    pub pass: bool,
}

/// Greedy direction quantizer on `trials` random unit vectors against `σ²_min/m`.
pub fn test_alpha(cb: &Codebook, trials: usize, seed: u64) -> AlphaReport {
    let threshold = cb.sigma_min() * cb.sigma_min() / cb.count() as f64;
    let ratios: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = SplitMix64::derive(seed, &[i as u64]);
            let mut g = rng.gaussian_vec(cb.dim());
            let n = dot(&g, &g).sqrt();
            g.iter_mut().for_each(|v| *v /= n);
            let beta = beta_correlation(&g, cb);
            beta * beta / dot(&g, &g)
        })
        .collect();
    let violations = ratios.iter().filter(|&&r| !(r >= threshold)).count();
    AlphaReport {
        worst_ratio: ratios.iter().copied().fold(f64::INFINITY, f64::min),
        threshold,
        violations,
        pass: violations == 0,
    }
}

/// `max_c |gᵀc|` over the codewords.
pub fn beta_correlation(g: &[f64], cb: &Codebook) -> f64 {
    (0..cb.count())
        .map(|i| dot(cb.codeword(i), g).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    /// `sup_x |F_a(x) − F_b(x)|`.
    pub statistic: f64,
    /// Asymptotic p-value with the small-sample correction `√n_e + 0.12 + 0.11/√n_e`.
    pub p_value: f64,
}

/// Two-sample Kolmogorov–Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = (na * nb / (na + nb)).sqrt();
    let lambda = (ne + 0.12 + 0.11 / ne) * d;
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_q(lambda),
    })
}

/// `Q(λ) = 2 Σ_{k≥1} (−1)^{k−1} e^{−2k²λ²}`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Mean `‖Q(g) − g‖²` over `grads`, gradient `i` quantized with stream `(seed, i)`.
pub fn mean_squared_error(q: &dyn Quantizer, grads: &[Vec<f64>], seed: u64) -> Result<f64> {
    if grads.is_empty() {
        return Err(Error::EmptyInput);
    }
    let errs: Vec<f64> = grads
        .par_iter()
        .enumerate()
        .map(|(i, g)| {
            let mut rng = SplitMix64::derive(seed, &[i as u64]);
            let v = q.quantize(g, &mut rng)?;
            Ok(v.iter().zip(g).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
        })
        .collect::<Result<_>>()?;
    Ok(errs.iter().sum::<f64>() / grads.len() as f64)
}

/// Mean over rows of `|p̂_i − p_i| / (‖row_i‖ ‖g‖)` for the sketched projection.
pub fn sketch_error(sketch: &SketchedCodebook<'_>, g: &[f64]) -> f64 {
    let cb = sketch.base();
    let approx = sketch.project(g);
    let exact = sketch.exact(g);
    let gn = dot(g, g).sqrt();
    if gn == 0.0 {
        return 0.0;
    }
    let total: f64 = (0..cb.count())
        .map(|i| {
            let row_norm = match sketch.path() {
                SketchPath::Unbiased => cb.pinv().row(i).norm(),
                SketchPath::Greedy => 1.0,
            };
            (approx[i] - exact[i]).abs() / (row_norm * gn)
        })
        .sum();
    total / cb.count() as f64
}

/// Trace of the covariance of the coordinator's averaged gradient at `x`,
/// estimated over rounds `1..=trials` (each round re-samples clients and noise).
pub fn round_gradient_variance(sim: &Simulator<'_>, x: &[f64], trials: usize) -> Result<f64> {
    if trials < 2 {
        return Err(Error::InvalidConfig("variance estimate needs at least 2 trials".into()));
    }
    let parts: Vec<Moments> = (0..trials.div_ceil(64))
        .into_par_iter()
        .map(|c| {
            let mut m = Moments::new(x.len());
            for round in c * 64 + 1..=((c + 1) * 64).min(trials) {
                m.push(&sim.round_gradient(x, round)?.0);
            }
            Ok(m)
        })
        .collect::<Result<_>>()?;
    let m = parts.into_iter().fold(Moments::new(x.len()), Moments::merge);
    Ok((0..x.len()).map(|i| m.variance(i)).sum())
}
