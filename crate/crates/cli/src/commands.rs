use std::fs;
use std::io::Write;
use std::path::Path;

use hsq_core::codebook::{read_codebook, write_codebook};
use hsq_core::fedsim::Simulator;
use hsq_core::{
    hsq, wire, Codebook, CodebookMethod, HsqParams, LrSchedule, QuantizerScheme, SchemeKind, SplitMix64, Variant,
};
use serde_json::json;

use crate::analyze;
use crate::args::*;
use crate::error::{CliError, CliResult};
use crate::experiment::{self, ExperimentConfig, Summary, SCHEMA_VERSION};

pub fn dispatch(cmd: Command) -> CliResult {
    match cmd {
        Command::Codebook(CodebookCommand::Gen(a)) => codebook_gen(a),
        Command::Codebook(CodebookCommand::Info { input }) => codebook_info(&input),
        Command::Quantize(a) => quantize(a),
        Command::Decode(a) => decode(a),
        Command::Roundtrip(a) => roundtrip(a),
        Command::Ratio(a) => ratio(a),
        Command::Simulate(a) => simulate(a),
        Command::Analyze(a) => {
            let report = analyze::run(a.trials, a.seed)?;
            emit_json(&report, a.out.as_deref())
        }
        Command::Preset(a) => preset(a),
    }
}

fn emit_json(value: &impl serde::Serialize, path: Option<&Path>) -> CliResult {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    match path {
        Some(p) => fs::write(p, text + "\n")?,
        None => writeln!(std::io::stdout().lock(), "{text}")?,
    }
    Ok(())
}

fn codebook_json(cb: &Codebook) -> serde_json::Value {
    json!({
        "method": cb.method().name(),
        "dim": cb.dim(),
        "count": cb.count(),
        "seed": cb.seed(),
        "sigma_min": cb.sigma_min(),
        "sigma_max": cb.sigma_max(),
    })
}

fn codebook_gen(a: CodebookGenArgs) -> CliResult {
    let cb = Codebook::generate(a.method, a.dim, a.count, a.seed)?;
    write_codebook(&cb, fs::File::create(&a.out)?)?;
    emit_json(&codebook_json(&cb), None)
}

fn codebook_info(input: &Path) -> CliResult {
    let cb = read_codebook(fs::File::open(input)?)?;
    emit_json(&codebook_json(&cb), None)
}

fn load_codebook(src: &CodebookSource, dim: usize, count: usize) -> CliResult<Codebook> {
    let cb = match &src.codebook {
        Some(path) => read_codebook(fs::File::open(path)?)?,
        None => Codebook::generate(src.method, dim, count, src.codebook_seed)?,
    };
    if cb.dim() != dim || cb.count() != count {
        return Err(CliError::Config(vec![format!(
            "codebook: file is {}x{}, frame needs {dim}x{count}",
            cb.dim(),
            cb.count()
        )]));
    }
    Ok(cb)
}

fn read_gradient(path: &Path) -> CliResult<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(vec![format!("input: expected a JSON array of numbers ({e})")]))
}

fn quantize(a: QuantizeArgs) -> CliResult {
    let g = read_gradient(&a.input)?;
    let cb = load_codebook(&a.source, a.dprime, a.m)?;
    let mut rng = SplitMix64::new(a.seed);
    let cg = hsq::compress(&g, &cb, a.s, a.variant, &mut rng)?;
    let bytes = wire::encode(&cg)?;
    fs::write(&a.out, &bytes)?;
    emit_json(
        &json!({
            "d": g.len(),
            "segments": cg.segments.len(),
            "payload_bits": wire::hsq_payload_bits(g.len(), a.dprime, a.m, a.s),
            "frame_bytes": bytes.len(),
            "u_min": cg.u_min,
            "u_max": cg.u_max,
        }),
        None,
    )
}

fn decode(a: DecodeArgs) -> CliResult {
    let cg = wire::decode(&fs::read(&a.input)?)?;
    let cb = load_codebook(&a.source, cg.segment_dim, cg.codeword_count)?;
    let g = hsq::decode(&cg, &cb)?;
    emit_json(&g, a.out.as_deref())
}

fn roundtrip(a: RoundtripArgs) -> CliResult {
    let mut failures = 0usize;
    let mut total_bytes = 0usize;
    for t in 0..a.trials {
        let mut rng = SplitMix64::derive(a.seed, &[t as u64]);
        let d = 1 + rng.below(300) as usize;
        let dp = 1 + rng.below(16) as usize;
        let m = dp + rng.below(17) as usize;
        let s = rng.below(71) as u32;
        let method = if m == dp {
            CodebookMethod::RandomRotation
        } else {
            CodebookMethod::RandomGaussian
        };
        let variant = if rng.bernoulli(0.5) {
            Variant::Greedy
        } else {
            Variant::Unbiased
        };
        let cb = Codebook::generate(method, dp, m, rng.next_u64())?;
        let g = rng.gaussian_vec(d);
        let cg = hsq::compress(&g, &cb, s, variant, &mut rng)?;
        let bytes = wire::encode(&cg)?;
        total_bytes += bytes.len();
        let expected_len = wire::FRAME_HEADER_BYTES + wire::hsq_payload_bits(d, dp, m, s).div_ceil(8) as usize;
        let ok = bytes.len() == expected_len && wire::decode(&bytes).map(|b| b == cg).unwrap_or(false);
        failures += usize::from(!ok);
    }
    emit_json(
        &json!({"trials": a.trials, "failures": failures, "bytes": total_bytes, "pass": failures == 0}),
        None,
    )?;
    if failures > 0 {
        return Err(CliError::Core(hsq_core::Error::Format(format!(
            "{failures} of {} frames failed to roundtrip",
            a.trials
        ))));
    }
    Ok(())
}

fn scheme_for(kind: SchemeKind, dprime: usize, m: usize, s: u32, bucket: usize) -> QuantizerScheme {
    match kind {
        SchemeKind::Identity => QuantizerScheme::Identity,
        SchemeKind::Hsq => QuantizerScheme::Hsq(HsqParams {
            variant: Variant::Greedy,
            segment_dim: dprime,
            codeword_count: m,
            levels: s,
            codebook: CodebookMethod::KMeansGaussian,
            codebook_seed: 0,
        }),
        SchemeKind::Qsgd => QuantizerScheme::Qsgd { levels: s, bucket },
        SchemeKind::TernGrad => QuantizerScheme::TernGrad,
        SchemeKind::SignSgd => QuantizerScheme::SignSgd,
    }
}

fn ratio(a: RatioArgs) -> CliResult {
    if a.d == 0 {
        return Err(CliError::Config(vec!["d: must be at least 1".into()]));
    }
    if a.grid {
        let rows = [
            ("sgd", scheme_for(SchemeKind::Identity, 0, 0, 0, 0)),
            ("hsq d'=8 m=256 s=63", scheme_for(SchemeKind::Hsq, 8, 256, 63, 0)),
            ("hsq d'=16 m=256 s=63", scheme_for(SchemeKind::Hsq, 16, 256, 63, 0)),
            ("hsq d'=64 m=256 s=63", scheme_for(SchemeKind::Hsq, 64, 256, 63, 0)),
            ("qsgd s=7", scheme_for(SchemeKind::Qsgd, 0, 0, 7, a.bucket)),
            ("qsgd s=127", scheme_for(SchemeKind::Qsgd, 0, 0, 127, a.bucket)),
            ("terngrad", QuantizerScheme::TernGrad),
            ("signsgd", QuantizerScheme::SignSgd),
        ];
        let mut out = std::io::stdout().lock();
        writeln!(out, "scheme\tpayload_bits\tratio")?;
        for (label, scheme) in rows {
            writeln!(
                out,
                "{label}\t{}\t{:.1}",
                wire::payload_bits(&scheme, a.d),
                wire::compression_ratio(&scheme, a.d, a.include_header)
            )?;
        }
        return Ok(());
    }
    let mut bad = Vec::new();
    match a.scheme {
        SchemeKind::Hsq => {
            if a.dprime == 0 {
                bad.push("dprime: must be at least 1".to_string());
            }
            if a.m < a.dprime {
                bad.push(format!("m: must be at least dprime ({}), got {}", a.dprime, a.m));
            }
        }
        SchemeKind::Qsgd if a.s == 0 || a.bucket == 0 => {
            bad.push("s, bucket: QSGD needs levels >= 1 and bucket >= 1".to_string())
        }
        _ => {}
    }
    if !bad.is_empty() {
        return Err(CliError::Config(bad));
    }
    let scheme = scheme_for(a.scheme, a.dprime, a.m, a.s, a.bucket);
    writeln!(
        std::io::stdout().lock(),
        "{:.1}",
        wire::compression_ratio(&scheme, a.d, a.include_header)
    )?;
    Ok(())
}

fn simulate(a: SimulateArgs) -> CliResult {
    let text = fs::read_to_string(&a.config)?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    let fed = &mut cfg.fed;
    if let Some(v) = a.rounds {
        fed.rounds = v;
    }
    if let Some(v) = a.seed {
        fed.seed = v;
    }
    if let Some(v) = a.clients {
        fed.num_clients = v;
    }
    if let Some(v) = a.per_round {
        fed.clients_per_round = v;
    }
    if let Some(v) = a.batch {
        fed.local_batch = v;
    }
    if let Some(eta) = a.eta {
        fed.lr = LrSchedule::Constant { eta };
    }
    if let Some(v) = a.eval_every {
        fed.eval_every = v;
    }
    if let Some(v) = a.downlink_compressed {
        fed.downlink_compressed = v;
    }
    let v = cfg.violations();
    if !v.is_empty() {
        return Err(CliError::Config(v));
    }
    let problem = cfg.problem.build()?;
    let sim = Simulator::new(cfg.fed.clone(), &problem)?;
    let result = sim.run()?;
    match &a.csv {
        Some(path) => experiment::csv_rows(&result, fs::File::create(path)?)?,
        None => experiment::csv_rows(&result, std::io::stdout().lock())?,
    }
    if let Some(path) = &a.summary {
        let last = result.logs.last().expect("at least one round");
        let summary = Summary {
            schema_version: SCHEMA_VERSION,
            config: &cfg,
            scheme_label: cfg.fed.scheme.label(),
            dim: problem.dim(),
            step_size: result.step_size,
            f_star: problem.f_star,
            initial_loss: result.initial_loss,
            final_loss: last.loss,
            final_grad_norm_sq: last.grad_norm_sq,
            final_accuracy: problem.accuracy(&result.final_x),
            average_iterate_loss: problem.loss(&result.average_x),
            uplink_bits_per_client: sim.uplink_bits_per_client(),
            total_uplink_bits: result.total_uplink_bits,
            total_downlink_bits: result.total_downlink_bits,
        };
        emit_json(&summary, Some(path))?;
    }
    Ok(())
}

fn preset(a: PresetArgs) -> CliResult {
    if a.d == 0 {
        return Err(CliError::Config(vec!["d: must be at least 1".into()]));
    }
    let (name, dp) = match a.kind {
        PresetKind::Extreme => ("extreme", a.d),
        PresetKind::Compact => ("compact", (a.d as f64).sqrt().ceil() as usize),
        PresetKind::HighPrecision => {
            if a.kappa == 0 || a.kappa > a.d {
                return Err(CliError::Config(vec![format!(
                    "kappa: must be in 1..={}, got {}",
                    a.d, a.kappa
                )]));
            }
            ("high_precision", a.kappa)
        }
    };
    let params = HsqParams {
        variant: Variant::Unbiased,
        segment_dim: dp,
        codeword_count: dp,
        levels: 0,
        codebook: CodebookMethod::RandomRotation,
        codebook_seed: a.codebook_seed,
    };
    let scheme = QuantizerScheme::Hsq(params);
    emit_json(
        &json!({
            "preset": name,
            "d": a.d,
            "scheme": scheme,
            "segments": hsq::segment_count(a.d, dp),
            "bits_per_gradient": wire::hsq_payload_bits(a.d, dp, dp, 0),
            "compression_ratio": wire::compression_ratio(&scheme, a.d, false),
            "variance_blowup": dp,
        }),
        None,
    )
}
