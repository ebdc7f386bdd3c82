//! Deterministic federated SGD simulator.
//!
//! Training samples are split uniformly at random across `num_clients`
//! shards. Each round the coordinator samples `clients_per_round` clients
//! without replacement; each computes a minibatch gradient on its shard,
//! compresses it and uploads it. The coordinator decodes, averages in
//! ascending client order and takes an SGD step. Every random choice comes
//! from a stream derived from `(seed, round, client)`, so results do not
//! depend on thread scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codebook::Codebook;
use crate::error::{Error, Result};
use crate::problems::Problem;
use crate::rng::SplitMix64;
use crate::scheme::{Compressor, Message, QuantizerScheme};
use crate::wire::FLOAT_BITS;

const TAG_PARTITION: u64 = 0x7061_7274;
const TAG_SAMPLE: u64 = 0x7361_6d70;
const TAG_CLIENT: u64 = 0x636c_6e74;
const TAG_DOWNLINK: u64 = 0x646f_776e;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LrSchedule {
    Constant {
        eta: f64,
    },
    /// Convex-case step `1 / (L + √(V_q T) / R)`.
    Theorem1 {
        smoothness: f64,
        radius: f64,
        vq: f64,
        horizon: usize,
    },
    /// Greedy non-convex step `1 / √(T 𝓛)`.
    Theorem3 {
        horizon: usize,
        smoothness_bar: f64,
    },
}

impl LrSchedule {
    pub fn step_size(&self) -> Result<f64> {
        match *self {
            LrSchedule::Constant { eta } => {
                if eta > 0.0 && eta.is_finite() {
                    Ok(eta)
                } else {
                    Err(Error::InvalidConfig(format!("lr.eta: must be positive, got {eta}")))
                }
            }
            LrSchedule::Theorem1 {
                smoothness,
                radius,
                vq,
                horizon,
            } => lr_theorem1(smoothness, radius, vq, horizon),
            LrSchedule::Theorem3 {
                horizon,
                smoothness_bar,
            } => lr_theorem3(horizon, smoothness_bar),
        }
    }
}

fn default_eval_every() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FedConfig {
    pub num_clients: usize,
    pub clients_per_round: usize,
    pub rounds: usize,
    /// Minibatch size per client; a batch at least the shard size uses the whole shard.
    pub local_batch: usize,
    pub lr: LrSchedule,
    pub scheme: QuantizerScheme,
    #[serde(default)]
    pub downlink_compressed: bool,
    pub seed: u64,
    /// Loss and gradient norm are evaluated every this many rounds and at the last round.
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
}

impl FedConfig {
    /// Every violated constraint as `field: message`.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.num_clients == 0 {
            out.push("num_clients: must be at least 1".to_string());
        }
        if self.clients_per_round == 0 || self.clients_per_round > self.num_clients {
            out.push(format!(
                "clients_per_round: must be in 1..={}, got {}",
                self.num_clients, self.clients_per_round
            ));
        }
        if self.rounds == 0 {
            out.push("rounds: must be at least 1".to_string());
        }
        if self.local_batch == 0 {
            out.push("local_batch: must be at least 1".to_string());
        }
        if self.eval_every == 0 {
            out.push("eval_every: must be at least 1".to_string());
        }
        if let Err(e) = self.lr.step_size() {
            out.push(match e {
                Error::InvalidConfig(msg) => msg,
                other => format!("lr: {other}"),
            });
        }
        if self.downlink_compressed && !matches!(self.scheme, QuantizerScheme::Hsq(_)) {
            out.push("downlink_compressed: requires an hsq scheme".to_string());
        }
        match self.scheme {
            QuantizerScheme::Hsq(p) => {
                if p.segment_dim == 0 {
                    out.push("scheme.segment_dim: must be at least 1".to_string());
                }
                if p.codeword_count < p.segment_dim {
                    out.push(format!(
                        "scheme.codeword_count: must be at least segment_dim ({}), got {}",
                        p.segment_dim, p.codeword_count
                    ));
                }
            }
            QuantizerScheme::Qsgd { levels, bucket } => {
                if levels == 0 {
                    out.push("scheme.levels: must be at least 1".to_string());
                }
                if bucket == 0 {
                    out.push("scheme.bucket: must be at least 1".to_string());
                }
            }
            _ => {}
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(v.join("; ")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    /// 1-based; the row describes `x_round`, the model after `round` updates.
    pub round: usize,
    pub loss: f64,
    pub grad_norm_sq: f64,
    pub uplink_bits: u64,
    pub downlink_bits: u64,
    /// Uplink plus downlink bits over rounds `1..=round`.
    pub cumulative_bits: u64,
    pub sampled_clients: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub step_size: f64,
    pub initial_loss: f64,
    pub initial_grad_norm_sq: f64,
    pub logs: Vec<RoundLog>,
    pub final_x: Vec<f64>,
    /// `(1/T) Σ_{t=1..T} x_t`.
    pub average_x: Vec<f64>,
    pub total_uplink_bits: u64,
    pub total_downlink_bits: u64,
}

/// A configured simulation bound to a problem.
pub struct Simulator<'a> {
    cfg: FedConfig,
    problem: &'a Problem,
    shards: Vec<Vec<usize>>,
    compressor: Compressor,
    step_size: f64,
    uplink_per_client: u64,
    downlink_per_client: u64,
}

impl<'a> Simulator<'a> {
    pub fn new(cfg: FedConfig, problem: &'a Problem) -> Result<Self> {
        cfg.validate()?;
        if cfg.num_clients > problem.num_samples() {
            return Err(Error::InvalidConfig(format!(
                "num_clients: {} exceeds the {} training samples",
                cfg.num_clients,
                problem.num_samples()
            )));
        }
        let compressor = Compressor::new(cfg.scheme)?;
        let d = problem.dim();
        let uplink_per_client = compressor.payload_bits(d).ceil() as u64;
        let downlink_per_client = if cfg.downlink_compressed {
            uplink_per_client
        } else {
            FLOAT_BITS as u64 * d as u64
        };
        Ok(Self {
            shards: partition(problem.num_samples(), cfg.num_clients, cfg.seed),
            step_size: cfg.lr.step_size()?,
            cfg,
            problem,
            compressor,
            uplink_per_client,
            downlink_per_client,
        })
    }

    pub fn config(&self) -> &FedConfig {
        &self.cfg
    }

    pub fn shards(&self) -> &[Vec<usize>] {
        &self.shards
    }

    pub fn step_size(&self) -> f64 {
        self.step_size
    }

    pub fn compressor(&self) -> &Compressor {
        &self.compressor
    }

    pub fn uplink_bits_per_client(&self) -> u64 {
        self.uplink_per_client
    }

    /// Clients sampled in `round`, ascending.
    pub fn sample_clients(&self, round: usize) -> Vec<usize> {
        let mut rng = SplitMix64::derive(self.cfg.seed, &[TAG_SAMPLE, round as u64]);
        let mut picked = rng.sample_without_replacement(self.cfg.num_clients, self.cfg.clients_per_round);
        picked.sort_unstable();
        picked
    }

    /// Uncompressed minibatch gradient of `client`, batch drawn from `rng`.
    pub fn client_gradient(&self, x: &[f64], client: usize, rng: &mut SplitMix64) -> Vec<f64> {
        let shard = &self.shards[client];
        if self.cfg.local_batch >= shard.len() {
            return self.problem.stochastic_gradient(x, shard);
        }
        let batch: Vec<usize> = rng
            .sample_without_replacement(shard.len(), self.cfg.local_batch)
            .into_iter()
            .map(|k| shard[k])
            .collect();
        self.problem.stochastic_gradient(x, &batch)
    }

    /// The coordinator's averaged decoded gradient for `round` at `x`, and the sampled clients.
    pub fn round_gradient(&self, x: &[f64], round: usize) -> Result<(Vec<f64>, Vec<usize>)> {
        let sampled = self.sample_clients(round);
        let messages: Vec<Message> = sampled
            .par_iter()
            .map(|&c| {
                let mut rng = SplitMix64::derive(self.cfg.seed, &[TAG_CLIENT, round as u64, c as u64]);
                let g = self.client_gradient(x, c, &mut rng);
                self.compressor.compress(&g, &mut rng)
            })
            .collect::<Result<_>>()?;
        let mut avg = vec![0.0; x.len()];
        let w = 1.0 / sampled.len() as f64;
        for msg in &messages {
            self.compressor.accumulate(msg, w, &mut avg)?;
        }
        Ok((avg, sampled))
    }

    /// The model update applied after aggregation, compressed if the downlink is.
    fn model_delta(&self, avg: &[f64], round: usize) -> Result<Vec<f64>> {
        let delta: Vec<f64> = avg.iter().map(|g| -self.step_size * g).collect();
        if !self.cfg.downlink_compressed {
            return Ok(delta);
        }
        let mut rng = SplitMix64::derive(self.cfg.seed, &[TAG_DOWNLINK, round as u64]);
        let msg = self.compressor.compress(&delta, &mut rng)?;
        self.compressor.decode(&msg, delta.len())
    }

    pub fn run(&self) -> Result<RunResult> {
        let p = self.problem;
        let d = p.dim();
        let mut x = p.x0.clone();
        let mut sum_x = vec![0.0; d];
        let initial_loss = p.loss(&x);
        let initial_grad_norm_sq = norm_sq(&p.full_gradient(&x));
        let mut logs = Vec::new();
        let (mut up_total, mut down_total) = (0u64, 0u64);
        for round in 1..=self.cfg.rounds {
            let (avg, sampled) = self.round_gradient(&x, round)?;
            let delta = self.model_delta(&avg, round)?;
            for (xi, di) in x.iter_mut().zip(&delta) {
                *xi += di;
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig(format!("model diverged at round {round}")));
            }
            for (s, xi) in sum_x.iter_mut().zip(&x) {
                *s += xi;
            }
            let n = sampled.len() as u64;
            let up = n * self.uplink_per_client;
            let down = n * self.downlink_per_client;
            up_total += up;
            down_total += down;
            if round % self.cfg.eval_every == 0 || round == self.cfg.rounds {
                logs.push(RoundLog {
                    round,
                    loss: p.loss(&x),
                    grad_norm_sq: norm_sq(&p.full_gradient(&x)),
                    uplink_bits: up,
                    downlink_bits: down,
                    cumulative_bits: up_total + down_total,
                    sampled_clients: sampled,
                });
            }
        }
        let t = self.cfg.rounds as f64;
        Ok(RunResult {
            step_size: self.step_size,
            initial_loss,
            initial_grad_norm_sq,
            logs,
            final_x: x,
            average_x: sum_x.into_iter().map(|s| s / t).collect(),
            total_uplink_bits: up_total,
            total_downlink_bits: down_total,
        })
    }
}

/// Run `cfg` on `problem`.
pub fn run(cfg: &FedConfig, problem: &Problem) -> Result<RunResult> {
    Simulator::new(cfg.clone(), problem)?.run()
}

/// Seeded uniform split of `0..samples` into `clients` shards whose sizes differ by at most one.
pub fn partition(samples: usize, clients: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..samples).collect();
    SplitMix64::derive(seed, &[TAG_PARTITION]).shuffle(&mut idx);
    let mut shards = vec![Vec::with_capacity(samples / clients.max(1) + 1); clients];
    for (k, i) in idx.into_iter().enumerate() {
        shards[k % clients].push(i);
    }
    shards
}

/// `1 / (L + √(V_q T) / R)`.
pub fn lr_theorem1(smoothness: f64, radius: f64, vq: f64, horizon: usize) -> Result<f64> {
    if !(smoothness > 0.0) || !(radius > 0.0) || !(vq >= 0.0) || horizon == 0 {
        return Err(Error::InvalidConfig(format!(
            "lr: theorem1 needs smoothness > 0, radius > 0, vq >= 0, horizon >= 1 \
             (got {smoothness}, {radius}, {vq}, {horizon})"
        )));
    }
    Ok(1.0 / (smoothness + (vq * horizon as f64).sqrt() / radius))
}

/// `R √(V_q / T) + L R² / (2T)`.
pub fn theorem1_bound(smoothness: f64, radius: f64, vq: f64, horizon: usize) -> f64 {
    let t = horizon as f64;
    radius * (vq / t).sqrt() + smoothness * radius * radius / (2.0 * t)
}

/// `1 / √(T 𝓛)`.
pub fn lr_theorem3(horizon: usize, smoothness_bar: f64) -> Result<f64> {
    if horizon == 0 || !(smoothness_bar > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "lr: theorem3 needs horizon >= 1 and smoothness_bar > 0 (got {horizon}, {smoothness_bar})"
        )));
    }
    Ok(1.0 / (horizon as f64 * smoothness_bar).sqrt())
}

/// `𝓛 = L (1 + 4/s) d / d'`; undefined for `s = 0`.
pub fn theorem3_smoothness(smoothness: f64, levels: u32, d: usize, segment_dim: usize) -> Option<f64> {
    (levels >= 1).then(|| smoothness * (1.0 + 4.0 / levels as f64) * d as f64 / segment_dim as f64)
}

/// Batch size `⌈√T⌉`.
pub fn theorem3_batch(horizon: usize) -> usize {
    (horizon as f64).sqrt().ceil() as usize
}

/// Right-hand side of the greedy non-convex rate,
/// `((α√(T𝓛) + 𝓛) σ²/√T + 2𝓛 Δ0) / ((1−α)√(T𝓛) − 𝓛)`, or `None` if the
/// denominator is not positive.
pub fn theorem3_bound(alpha: f64, smoothness_bar: f64, sigma_sq: f64, gap0: f64, horizon: usize) -> Option<f64> {
    let t = horizon as f64;
    let root = (t * smoothness_bar).sqrt();
    let den = (1.0 - alpha) * root - smoothness_bar;
    (den > 0.0).then(|| ((alpha * root + smoothness_bar) * sigma_sq / t.sqrt() + 2.0 * smoothness_bar * gap0) / den)
}

/// `V_q = (d/d') (m σ₁(C†)² B' + (u_max − u_min)²/s)`; the norm term is dropped for `s = 0`.
pub fn vq_bound(d: usize, cb: &Codebook, levels: u32, b_prime: f64, u_range: f64) -> f64 {
    let sigma = cb.pinv_sigma_max();
    let mut seg = cb.count() as f64 * sigma * sigma * b_prime;
    if levels >= 1 {
        seg += u_range * u_range / levels as f64;
    }
    d as f64 / cb.dim() as f64 * seg
}

fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}
