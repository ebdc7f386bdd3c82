//! Hyper-sphere quantization of gradient segments.
//!
//! A gradient of length `d` is cut into `ceil(d / d')` segments of length `d'`
//! (the last one zero-padded). Each segment `g` is replaced by a pair
//! `(ũ, c)`: a codeword index and a scalar pseudo-norm, so the device sends
//! `ceil(log2 m)` index bits plus either `ceil(log2(s+1))` level bits or a raw
//! 32-bit float per segment.

use serde::{Deserialize, Serialize};

use crate::codebook::{Codebook, SketchedCodebook};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Absolute slack (scaled by the grid magnitude) tolerated outside `[u_min, u_max]`.
pub const RANGE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Sample a codeword with probability proportional to `|C† g|`.
    Unbiased,
    /// Take the codeword with the largest absolute correlation.
    Greedy,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "unbiased" => Ok(Variant::Unbiased),
            "greedy" => Ok(Variant::Greedy),
            _ => Err(Error::InvalidConfig(format!("unknown HSQ variant `{s}`"))),
        }
    }
}

/// Transmitted pseudo-norm of one segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Magnitude {
    /// Index on the `s + 1` point grid over `[u_min, u_max]`.
    Level(u32),
    /// Unquantized pseudo-norm (`s = 0`).
    Raw(f32),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentCode {
    pub codeword_index: u32,
    pub magnitude: Magnitude,
}

/// One device's compressed gradient, exactly the content of a wire frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedGradient {
    pub variant: Variant,
    pub total_dim: usize,
    pub segment_dim: usize,
    pub codeword_count: usize,
    /// Number of grid intervals `s`; zero means raw pseudo-norms.
    pub levels: u32,
    pub u_min: f32,
    pub u_max: f32,
    pub segments: Vec<SegmentCode>,
}

pub fn segment_count(total_dim: usize, segment_dim: usize) -> usize {
    total_dim.div_ceil(segment_dim)
}

/// Grid point `level` of the `s`-interval grid over `[u_min, u_max]`.
///
/// The top level decodes to `u_max` exactly. A degenerate range decodes to `u_min`.
pub fn level_value(u_min: f64, u_max: f64, s: u32, level: u32) -> f64 {
    if level == 0 || u_max == u_min {
        return u_min;
    }
    if level >= s {
        return u_max;
    }
    let delta = (u_max - u_min) / s as f64;
    u_min + level as f64 * delta
}

impl CompressedGradient {
    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }

    /// Decoded pseudo-norm `ũ` of segment `j`.
    pub fn pseudo_norm(&self, j: usize) -> f64 {
        match self.segments[j].magnitude {
            Magnitude::Raw(u) => u as f64,
            Magnitude::Level(l) => level_value(self.u_min as f64, self.u_max as f64, self.levels, l),
        }
    }

    /// Structural checks shared by the decoder and the wire codec.
    pub fn validate(&self) -> Result<()> {
        if self.total_dim == 0 {
            return Err(Error::EmptyInput);
        }
        if self.segment_dim == 0 || self.codeword_count == 0 {
            return Err(Error::InvalidShape("zero segment or codebook size".into()));
        }
        let expected = segment_count(self.total_dim, self.segment_dim);
        if self.segments.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: self.segments.len(),
            });
        }
        if !(self.u_min <= self.u_max) {
            return Err(Error::Format(format!(
                "u_min {} exceeds u_max {}",
                self.u_min, self.u_max
            )));
        }
        for seg in &self.segments {
            if seg.codeword_index as usize >= self.codeword_count {
                return Err(Error::Format(format!(
                    "codeword index {} out of range {}",
                    seg.codeword_index, self.codeword_count
                )));
            }
            match seg.magnitude {
                Magnitude::Level(l) if self.levels == 0 || l > self.levels => {
                    return Err(Error::Format(format!("level {l} invalid for s = {}", self.levels)))
                }
                Magnitude::Raw(_) if self.levels != 0 => {
                    return Err(Error::Format("raw pseudo-norm with s > 0".into()))
                }
                Magnitude::Raw(u) if !u.is_finite() => return Err(Error::InvalidGradient),
                _ => {}
            }
        }
        Ok(())
    }
}

fn check_finite(g: &[f64]) -> Result<()> {
    if g.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidGradient)
    }
}

fn check_segment(g: &[f64], cb: &Codebook) -> Result<()> {
    if g.len() != cb.dim() {
        return Err(Error::DimensionMismatch {
            expected: cb.dim(),
            actual: g.len(),
        });
    }
    check_finite(g)
}

/// Draw index `i` with probability `|p_i| / ‖p‖₁` from one uniform.
/// Returns `(sign(p_i)·‖p‖₁, i)`.
fn sample_from_projection(p: &[f64], rng: &mut SplitMix64) -> (f64, usize) {
    let l1: f64 = p.iter().map(|v| v.abs()).sum();
    let target = rng.next_f64() * l1;
    let mut cum = 0.0;
    let mut last_nonzero = 0;
    for (i, &v) in p.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        last_nonzero = i;
        cum += v.abs();
        if target < cum {
            return (l1.copysign(v), i);
        }
    }
    // Rounding left target at the very top of the cumulative sum.
    (l1.copysign(p[last_nonzero]), last_nonzero)
}

/// Index of the largest `|p_i|`, lowest index on ties, with the signed value.
fn argmax_abs(p: &[f64]) -> (f64, usize) {
    let mut best = 0;
    for (i, v) in p.iter().enumerate() {
        if v.abs() > p[best].abs() {
            best = i;
        }
    }
    (p[best], best)
}

fn is_zero(g: &[f64]) -> bool {
    g.iter().all(|&v| v == 0.0)
}

/// Unbiased direction quantizer: `E[u · c_i] = g`.
pub fn quantize_unbiased(g: &[f64], cb: &Codebook, rng: &mut SplitMix64) -> Result<(f64, usize)> {
    check_segment(g, cb)?;
    if is_zero(g) {
        return Ok((0.0, 0));
    }
    let p = cb.pinv_mul(g);
    Ok(sample_from_projection(&p, rng))
}

/// Greedy direction quantizer: the codeword with the largest `|gᵀc|`, `u = gᵀc`.
pub fn quantize_greedy(g: &[f64], cb: &Codebook) -> Result<(f64, usize)> {
    check_segment(g, cb)?;
    if is_zero(g) {
        return Ok((0.0, 0));
    }
    Ok(argmax_abs(&cb.correlations(g)))
}

/// Unbiased selection driven by a sketched `C† g`.
pub fn quantize_unbiased_sketched(
    g: &[f64],
    sketch: &SketchedCodebook<'_>,
    rng: &mut SplitMix64,
) -> Result<(f64, usize)> {
    check_segment(g, sketch.base())?;
    if is_zero(g) {
        return Ok((0.0, 0));
    }
    let p = sketch.project(g);
    if p.iter().all(|&v| v == 0.0) {
        return Ok((0.0, 0));
    }
    Ok(sample_from_projection(&p, rng))
}

/// Greedy selection driven by sketched correlations; `u` is the exact `gᵀc`.
pub fn quantize_greedy_sketched(g: &[f64], sketch: &SketchedCodebook<'_>) -> Result<(f64, usize)> {
    check_segment(g, sketch.base())?;
    if is_zero(g) {
        return Ok((0.0, 0));
    }
    let (_, i) = argmax_abs(&sketch.project(g));
    let u = crate::codebook::dot(g, sketch.base().codeword(i));
    Ok((u, i))
}

/// Stochastic rounding of `u` onto the `s`-interval grid over `[u_min, u_max]`.
///
/// Rounds down to `u_min + kδ` with probability `((k+1)δ + u_min − u) / δ` and up
/// otherwise, so the decoded value is unbiased.
pub fn quantize_pseudo_norm(u: f64, u_min: f64, u_max: f64, s: u32, rng: &mut SplitMix64) -> Result<u32> {
    if s == 0 {
        return Err(Error::InvalidShape("pseudo-norm grid needs s >= 1".into()));
    }
    if !(u.is_finite() && u_min.is_finite() && u_max.is_finite()) || u_min > u_max {
        return Err(Error::OutOfRange {
            value: u,
            lo: u_min,
            hi: u_max,
        });
    }
    let slack = RANGE_SLACK * 1f64.max(u_min.abs()).max(u_max.abs());
    if u < u_min - slack || u > u_max + slack {
        return Err(Error::OutOfRange {
            value: u,
            lo: u_min,
            hi: u_max,
        });
    }
    let u = u.clamp(u_min, u_max);
    if u_max == u_min {
        return Ok(0);
    }
    let delta = (u_max - u_min) / s as f64;
    let k = (((u - u_min) / delta).floor() as i64).clamp(0, s as i64 - 1) as u32;
    let lower = level_value(u_min, u_max, s, k);
    let upper = level_value(u_min, u_max, s, k + 1);
    let p_lower = ((upper - u) / (upper - lower)).clamp(0.0, 1.0);
    Ok(if rng.next_f64() < p_lower { k } else { k + 1 })
}

/// Largest f32 not above `x`.
fn f32_floor(x: f64) -> Result<f32> {
    let f = x as f32;
    if !f.is_finite() {
        return Err(Error::Overflow("pseudo-norm"));
    }
    Ok(if f as f64 > x { f.next_down() } else { f })
}

/// Smallest f32 not below `x`.
fn f32_ceil(x: f64) -> Result<f32> {
    let f = x as f32;
    if !f.is_finite() {
        return Err(Error::Overflow("pseudo-norm"));
    }
    Ok(if (f as f64) < x { f.next_up() } else { f })
}

/// Compress a full gradient.
///
/// One `u64` is drawn from `rng`; segment `j` then uses the substream
/// `(that value, j)`, so segments could run in any order with identical output.
pub fn compress(
    g: &[f64],
    cb: &Codebook,
    s: u32,
    variant: Variant,
    rng: &mut SplitMix64,
) -> Result<CompressedGradient> {
    if g.is_empty() {
        return Err(Error::EmptyInput);
    }
    check_finite(g)?;
    let dp = cb.dim();
    let n_seg = segment_count(g.len(), dp);
    let gradient_seed = rng.next_u64();

    let mut buf = vec![0.0; dp];
    let mut picks = Vec::with_capacity(n_seg);
    for j in 0..n_seg {
        let lo = j * dp;
        let hi = (lo + dp).min(g.len());
        buf[..hi - lo].copy_from_slice(&g[lo..hi]);
        buf[hi - lo..].iter_mut().for_each(|v| *v = 0.0);
        let mut seg_rng = SplitMix64::derive(gradient_seed, &[j as u64]);
        let (u, idx) = match variant {
            Variant::Unbiased => quantize_unbiased(&buf, cb, &mut seg_rng)?,
            Variant::Greedy => quantize_greedy(&buf, cb)?,
        };
        picks.push((u, idx, seg_rng));
    }

    let (lo, hi) = picks
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(u, _, _)| {
            (lo.min(u), hi.max(u))
        });

    let (u_min, u_max, segments) = if s == 0 {
        let segments = picks
            .iter()
            .map(|&(u, idx, _)| {
                let raw = u as f32;
                if !raw.is_finite() {
                    return Err(Error::Overflow("pseudo-norm"));
                }
                Ok(SegmentCode {
                    codeword_index: idx as u32,
                    magnitude: Magnitude::Raw(raw),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let (mn, mx) = segments.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), seg| {
            let Magnitude::Raw(u) = seg.magnitude else {
                unreachable!()
            };
            (a.min(u), b.max(u))
        });
        (mn, mx, segments)
    } else {
        let u_min = f32_floor(lo)?;
        let u_max = f32_ceil(hi)?;
        let segments = picks
            .into_iter()
            .map(|(u, idx, mut seg_rng)| {
                let level = quantize_pseudo_norm(u, u_min as f64, u_max as f64, s, &mut seg_rng)?;
                Ok(SegmentCode {
                    codeword_index: idx as u32,
                    magnitude: Magnitude::Level(level),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        (u_min, u_max, segments)
    };

    Ok(CompressedGradient {
        variant,
        total_dim: g.len(),
        segment_dim: dp,
        codeword_count: cb.count(),
        levels: s,
        u_min,
        u_max,
        segments,
    })
}

fn check_compatible(cg: &CompressedGradient, cb: &Codebook) -> Result<()> {
    if cg.segment_dim != cb.dim() {
        return Err(Error::DimensionMismatch {
            expected: cb.dim(),
            actual: cg.segment_dim,
        });
    }
    if cg.codeword_count != cb.count() {
        return Err(Error::DimensionMismatch {
            expected: cb.count(),
            actual: cg.codeword_count,
        });
    }
    cg.validate()
}

/// Add `weight · decode(cg)` into `out`.
pub fn accumulate_into(cg: &CompressedGradient, cb: &Codebook, weight: f64, out: &mut [f64]) -> Result<()> {
    check_compatible(cg, cb)?;
    if out.len() != cg.total_dim {
        return Err(Error::DimensionMismatch {
            expected: cg.total_dim,
            actual: out.len(),
        });
    }
    let dp = cg.segment_dim;
    for (j, seg) in cg.segments.iter().enumerate() {
        let u = cg.pseudo_norm(j) * weight;
        if u == 0.0 {
            continue;
        }
        let c = cb.codeword(seg.codeword_index as usize);
        let lo = j * dp;
        let hi = (lo + dp).min(cg.total_dim);
        for (o, &cv) in out[lo..hi].iter_mut().zip(c) {
            *o += u * cv;
        }
    }
    Ok(())
}

/// Reconstruct `ũ_j · c_j` for every segment, dropping the padding.
pub fn decode(cg: &CompressedGradient, cb: &Codebook) -> Result<Vec<f64>> {
    let mut out = vec![0.0; cg.total_dim];
    accumulate_into(cg, cb, 1.0, &mut out)?;
    Ok(out)
}

/// Coordinator-side mean of decoded gradients, accumulated in list order.
pub fn aggregate(grads: &[CompressedGradient], cb: &Codebook) -> Result<Vec<f64>> {
    let first = grads.first().ok_or(Error::EmptyInput)?;
    let d = first.total_dim;
    let mut out = vec![0.0; d];
    let w = 1.0 / grads.len() as f64;
    for cg in grads {
        if cg.total_dim != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: cg.total_dim,
            });
        }
        accumulate_into(cg, cb, w, &mut out)?;
    }
    Ok(out)
}
