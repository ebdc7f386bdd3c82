//! Versioned experiment configuration and run summary.

use hsq_core::{FedConfig, ProblemSpec, RunResult};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub problem: ProblemSpec,
    pub fed: FedConfig,
}

impl ExperimentConfig {
    /// Parse and check every field, collecting all violations.
    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(vec![schema_message(&e)]))?;
        let v = cfg.violations();
        if v.is_empty() {
            Ok(cfg)
        } else {
            Err(CliError::Config(v))
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            out.push(format!(
                "schema_version: expected {SCHEMA_VERSION}, got {}",
                self.schema_version
            ));
        }
        match &self.problem {
            ProblemSpec::Quadratic {
                dim, samples, noise, ..
            } => {
                if *dim == 0 {
                    out.push("problem.dim: must be at least 1".into());
                }
                if samples < dim {
                    out.push(format!("problem.samples: must be at least dim ({dim}), got {samples}"));
                }
                if !(*noise >= 0.0) {
                    out.push(format!("problem.noise: must be non-negative, got {noise}"));
                }
            }
            ProblemSpec::Logistic {
                features, samples, l2, ..
            } => {
                if *features == 0 {
                    out.push("problem.features: must be at least 1".into());
                }
                if *samples < 2 {
                    out.push("problem.samples: must be at least 2".into());
                }
                if !(*l2 > 0.0) {
                    out.push(format!("problem.l2: must be positive, got {l2}"));
                }
            }
            ProblemSpec::TinyMlp { layers, samples, .. } => {
                if layers.len() < 2 || layers.contains(&0) {
                    out.push("problem.layers: need at least input and output widths, all positive".into());
                }
                if *samples == 0 {
                    out.push("problem.samples: must be at least 1".into());
                }
            }
        }
        out.extend(self.fed.violations().into_iter().map(|m| format!("fed.{m}")));
        let samples = match &self.problem {
            ProblemSpec::Quadratic { samples, .. }
            | ProblemSpec::Logistic { samples, .. }
            | ProblemSpec::TinyMlp { samples, .. } => *samples,
        };
        if self.fed.num_clients > samples {
            out.push(format!(
                "fed.num_clients: {} exceeds problem.samples ({samples})",
                self.fed.num_clients
            ));
        }
        out
    }
}

fn schema_message(e: &serde_json::Error) -> String {
    format!("schema (line {}, column {}): {e}", e.line(), e.column())
}

#[derive(Debug, Serialize)]
pub struct Summary<'a> {
    pub schema_version: u32,
    pub config: &'a ExperimentConfig,
    pub scheme_label: String,
    pub dim: usize,
    pub step_size: f64,
    pub f_star: f64,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub final_grad_norm_sq: f64,
    pub final_accuracy: Option<f64>,
    pub average_iterate_loss: f64,
    pub uplink_bits_per_client: u64,
    pub total_uplink_bits: u64,
    pub total_downlink_bits: u64,
}

pub fn csv_rows(result: &RunResult, mut out: impl std::io::Write) -> CliResult {
    let mut w = csv::Writer::from_writer(&mut out);
    w.write_record([
        "round",
        "loss",
        "grad_norm_sq",
        "uplink_bits",
        "downlink_bits",
        "cumulative_bits",
    ])?;
    for log in &result.logs {
        w.write_record([
            log.round.to_string(),
            format!("{:e}", log.loss),
            format!("{:e}", log.grad_norm_sq),
            log.uplink_bits.to_string(),
            log.downlink_bits.to_string(),
            log.cumulative_bits.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
