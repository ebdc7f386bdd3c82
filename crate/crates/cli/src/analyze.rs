//! Validator suite behind `hsq analyze`.

use hsq_core::baselines::{qsgd_compress, qsgd_nonzero_bound};
use hsq_core::metrics::{self, Z_BAND};
use hsq_core::{hsq, wire, Codebook, CodebookMethod, Compressor, HsqParams, QuantizerScheme, SplitMix64, Variant};
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::CliResult;
use crate::experiment::SCHEMA_VERSION;

#[derive(Debug, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub measured: Value,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub seed: u64,
    pub trials: usize,
    pub all_pass: bool,
    pub checks: Vec<Check>,
}

fn hsq_compressor(
    variant: Variant,
    dp: usize,
    m: usize,
    s: u32,
    method: CodebookMethod,
    seed: u64,
) -> CliResult<Compressor> {
    Ok(Compressor::new(QuantizerScheme::Hsq(HsqParams {
        variant,
        segment_dim: dp,
        codeword_count: m,
        levels: s,
        codebook: method,
        codebook_seed: seed,
    }))?)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, b| a.max(b.abs()))
}

/// JSON has no infinity; a zero-variance bias reports as the string "inf".
fn z_json(z: f64) -> Value {
    if z.is_finite() {
        json!(z)
    } else {
        json!("inf")
    }
}

pub fn run(trials: usize, seed: u64) -> CliResult<Report> {
    let trials = trials.max(1000);
    let mut checks = Vec::new();
    let mut rng = SplitMix64::derive(seed, &[0]);

    // Unbiased direction quantizer, orthonormal codebook, exact norms.
    let un = hsq_compressor(Variant::Unbiased, 16, 16, 0, CodebookMethod::RandomRotation, seed)?;
    let mut worst = 0.0f64;
    for k in 0..5 {
        let g = rng.gaussian_vec(64);
        worst = worst.max(max_abs(&metrics::test_unbiasedness(&un, &g, trials, seed + k)?));
    }
    checks.push(Check {
        name: "unbiasedness_hsq",
        pass: worst <= Z_BAND,
        measured: json!({"max_abs_z": worst, "gradients": 5, "draws": trials}),
    });

    // Greedy selection is biased; the same harness must notice.
    let gr = hsq_compressor(Variant::Greedy, 16, 16, 0, CodebookMethod::Sob, seed)?;
    let g: Vec<f64> = (0..16)
        .map(|i| if i == 0 { 3.0 } else { 0.5 + 0.1 * i as f64 })
        .collect();
    let z = max_abs(&metrics::test_unbiasedness(&gr, &g, trials.min(5000), seed)?);
    checks.push(Check {
        name: "greedy_bias_detected",
        pass: z > Z_BAND,
        measured: json!({"max_abs_z": z_json(z)}),
    });

    // Pseudo-norm stochastic rounding.
    let mut worst = 0.0f64;
    for k in 0..20u64 {
        let a = rng.gaussian() * 3.0;
        let b = rng.gaussian() * 3.0;
        let (lo, hi) = (a.min(b), a.max(b));
        let u = lo + (hi - lo) * rng.next_f64();
        let s = 1 + rng.below(63) as u32;
        worst = worst.max(metrics::test_pseudo_norm_unbiasedness(u, lo, hi, s, trials, seed + k)?.abs());
    }
    checks.push(Check {
        name: "unbiasedness_pseudo_norm",
        pass: worst <= Z_BAND,
        measured: json!({"max_abs_z": worst}),
    });

    // Second-moment bound.
    let mut rows = Vec::new();
    let mut pass = true;
    for (dp, m, s) in [(8, 8, 1), (8, 16, 4), (16, 16, 63), (16, 32, 1)] {
        let method = if m == dp {
            CodebookMethod::RandomRotation
        } else {
            CodebookMethod::RandomGaussian
        };
        let cb = Codebook::generate(method, dp, m, seed)?;
        let mean = rng.gaussian_vec(4 * dp);
        let r = metrics::test_variance_bound(&cb, s, &mean, 0.5, trials / 4, seed)?;
        pass &= r.pass;
        rows.push(json!({"dprime": dp, "m": m, "s": s, "report": r}));
    }
    checks.push(Check {
        name: "variance_bound",
        pass,
        measured: Value::Array(rows),
    });

    // Greedy direction quantizer is an alpha-compressor.
    let mut rows = Vec::new();
    let mut pass = true;
    for method in CodebookMethod::ALL {
        let m = if method.requires_square() { 8 } else { 16 };
        let cb = Codebook::generate(method, 8, m, seed)?;
        let r = metrics::test_alpha(&cb, trials / 2, seed);
        pass &= r.pass;
        rows.push(json!({"method": method.name(), "report": r}));
    }
    checks.push(Check {
        name: "alpha_compressor",
        pass,
        measured: Value::Array(rows),
    });

    // Orthonormal codebooks share one correlation distribution over Haar-random g.
    let sob = Codebook::generate(CodebookMethod::Sob, 8, 8, seed)?;
    let rot = Codebook::generate(CodebookMethod::RandomRotation, 8, 8, seed)?;
    let draw = |cb: &Codebook, tag: u64| -> Vec<f64> {
        let mut r = SplitMix64::derive(seed, &[tag]);
        (0..trials / 2)
            .map(|_| {
                let g = r.gaussian_vec(8);
                let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                metrics::beta_correlation(&g, cb) / n
            })
            .collect()
    };
    let ks = metrics::ks_two_sample(&draw(&sob, 1), &draw(&rot, 2))?;
    checks.push(Check {
        name: "beta_sob_vs_rotation",
        pass: ks.p_value > 1e-3,
        measured: json!(ks),
    });

    // Wire frames.
    let mut failures = 0;
    let frames = (trials / 10).max(100);
    for t in 0..frames {
        let mut r = SplitMix64::derive(seed, &[3, t as u64]);
        let dp = 1 + r.below(12) as usize;
        let m = dp + r.below(8) as usize;
        let s = r.below(64) as u32;
        let cb = Codebook::generate(CodebookMethod::RandomGaussian, dp, m, t as u64)?;
        let len = 1 + r.below(100) as usize;
        let g = r.gaussian_vec(len);
        let cg = hsq::compress(&g, &cb, s, Variant::Unbiased, &mut r)?;
        let bytes = wire::encode(&cg)?;
        let len_ok = bytes.len() as u64
            == wire::FRAME_HEADER_BYTES as u64 + wire::hsq_payload_bits(g.len(), dp, m, s).div_ceil(8);
        if !len_ok || wire::decode(&bytes).ok().as_ref() != Some(&cg) {
            failures += 1;
        }
    }
    checks.push(Check {
        name: "wire_roundtrip",
        pass: failures == 0,
        measured: json!({"frames": frames, "failures": failures}),
    });

    // Compression ratios.
    let d = 1usize << 20;
    let hsq_scheme = |dp| {
        QuantizerScheme::Hsq(HsqParams {
            variant: Variant::Greedy,
            segment_dim: dp,
            codeword_count: 256,
            levels: 63,
            codebook: CodebookMethod::KMeansGaussian,
            codebook_seed: 0,
        })
    };
    let table = [
        ("hsq_dprime_8", hsq_scheme(8), 18.3),
        ("hsq_dprime_16", hsq_scheme(16), 36.6),
        ("hsq_dprime_64", hsq_scheme(64), 146.3),
        ("terngrad", QuantizerScheme::TernGrad, 20.2),
        ("signsgd", QuantizerScheme::SignSgd, 32.0),
    ];
    let mut pass = true;
    let mut measured = serde_json::Map::new();
    for (label, scheme, want) in table {
        let got = wire::compression_ratio(&scheme, d, false);
        pass &= format!("{got:.1}") == format!("{want:.1}");
        measured.insert(label.into(), json!(got));
    }
    checks.push(Check {
        name: "compression_ratios",
        pass,
        measured: Value::Object(measured),
    });

    // QSGD with one level: expected nonzeros per bucket stay under s(s + √b).
    let bucket = 512;
    let g = rng.gaussian_vec(bucket);
    let mut nz = 0usize;
    let reps = 200;
    for k in 0..reps {
        let mut r = SplitMix64::derive(seed, &[4, k]);
        nz += qsgd_compress(&g, 1, bucket, &mut r)?.nonzeros();
    }
    let mean_nz = nz as f64 / reps as f64;
    let bound = qsgd_nonzero_bound(bucket, 1);
    checks.push(Check {
        name: "qsgd_sparsity",
        pass: mean_nz <= bound,
        measured: json!({"mean_nonzeros": mean_nz, "bound": bound}),
    });

    Ok(Report {
        schema_version: SCHEMA_VERSION,
        seed,
        trials,
        all_pass: checks.iter().all(|c| c.pass),
        checks,
    })
}
