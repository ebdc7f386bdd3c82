//! Scheme selection and a uniform compress/decode surface over all quantizers.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::baselines::{self, BaselineCode, QSGD_DEFAULT_BUCKET};
use crate::codebook::{Codebook, CodebookMethod};
use crate::error::{Error, Result};
use crate::hsq::{self, CompressedGradient, Variant};
use crate::rng::SplitMix64;
use crate::wire;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HsqParams {
    pub variant: Variant,
    /// Segment length `d'`.
    pub segment_dim: usize,
    /// Codeword count `m`.
    pub codeword_count: usize,
    /// Pseudo-norm intervals `s`; 0 sends raw 32-bit norms.
    pub levels: u32,
    pub codebook: CodebookMethod,
    pub codebook_seed: u64,
}

impl HsqParams {
    pub fn build_codebook(&self) -> Result<Codebook> {
        Codebook::generate(self.codebook, self.segment_dim, self.codeword_count, self.codebook_seed)
    }
}

fn default_bucket() -> usize {
    QSGD_DEFAULT_BUCKET
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", from = "SchemeRepr")]
pub enum QuantizerScheme {
    /// Uncompressed 32-bit gradients (plain SGD).
    Identity,
    Hsq(HsqParams),
    Qsgd {
        levels: u32,
        #[serde(default = "default_bucket")]
        bucket: usize,
    },
    TernGrad,
    SignSgd,
}

/// Deserialization mirror: serde only rejects unknown fields on struct
/// variants, so the unit variants are spelled `{}` here.
#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum SchemeRepr {
    Identity {},
    Hsq(HsqParams),
    Qsgd {
        levels: u32,
        #[serde(default = "default_bucket")]
        bucket: usize,
    },
    TernGrad {},
    SignSgd {},
}

impl From<SchemeRepr> for QuantizerScheme {
    fn from(r: SchemeRepr) -> Self {
        match r {
            SchemeRepr::Identity {} => QuantizerScheme::Identity,
            SchemeRepr::Hsq(p) => QuantizerScheme::Hsq(p),
            SchemeRepr::Qsgd { levels, bucket } => QuantizerScheme::Qsgd { levels, bucket },
            SchemeRepr::TernGrad {} => QuantizerScheme::TernGrad,
            SchemeRepr::SignSgd {} => QuantizerScheme::SignSgd,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    Identity,
    Hsq,
    Qsgd,
    TernGrad,
    SignSgd,
}

impl std::str::FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "identity" | "sgd" | "none" => Ok(SchemeKind::Identity),
            "hsq" => Ok(SchemeKind::Hsq),
            "qsgd" => Ok(SchemeKind::Qsgd),
            "terngrad" => Ok(SchemeKind::TernGrad),
            "signsgd" | "sign" => Ok(SchemeKind::SignSgd),
            _ => Err(Error::UnknownScheme(s.to_string())),
        }
    }
}

impl QuantizerScheme {
    pub fn kind(&self) -> SchemeKind {
        match self {
            QuantizerScheme::Identity => SchemeKind::Identity,
            QuantizerScheme::Hsq(_) => SchemeKind::Hsq,
            QuantizerScheme::Qsgd { .. } => SchemeKind::Qsgd,
            QuantizerScheme::TernGrad => SchemeKind::TernGrad,
            QuantizerScheme::SignSgd => SchemeKind::SignSgd,
        }
    }

    pub fn label(&self) -> String {
        match self {
            QuantizerScheme::Identity => "sgd".into(),
            QuantizerScheme::Hsq(p) => format!(
                "hsq-{}(d'={},m={},s={})",
                match p.variant {
                    Variant::Unbiased => "unbiased",
                    Variant::Greedy => "greedy",
                },
                p.segment_dim,
                p.codeword_count,
                p.levels
            ),
            QuantizerScheme::Qsgd { levels, bucket } => format!("qsgd(s={levels},bucket={bucket})"),
            QuantizerScheme::TernGrad => "terngrad".into(),
            QuantizerScheme::SignSgd => "signsgd".into(),
        }
    }
}

/// A compressed uplink message.
#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Raw(Vec<f64>),
    Hsq(CompressedGradient),
    Baseline(BaselineCode),
}

/// Anything that maps a gradient to a (possibly random) reconstruction.
pub trait Quantizer: Sync {
    fn quantize(&self, g: &[f64], rng: &mut SplitMix64) -> Result<Vec<f64>>;
}

impl<F> Quantizer for F
where
    F: Fn(&[f64], &mut SplitMix64) -> Result<Vec<f64>> + Sync,
{
    fn quantize(&self, g: &[f64], rng: &mut SplitMix64) -> Result<Vec<f64>> {
        self(g, rng)
    }
}

/// A scheme bound to its codebook, ready for use by devices and coordinator.
#[derive(Debug, Clone)]
pub struct Compressor {
    scheme: QuantizerScheme,
    codebook: Option<Arc<Codebook>>,
}

impl Compressor {
    pub fn new(scheme: QuantizerScheme) -> Result<Self> {
        let codebook = match &scheme {
            QuantizerScheme::Hsq(p) => Some(Arc::new(p.build_codebook()?)),
            QuantizerScheme::Qsgd { levels, bucket } if *levels == 0 || *bucket == 0 => {
                return Err(Error::InvalidConfig("QSGD needs levels >= 1 and bucket >= 1".into()))
            }
            _ => None,
        };
        Ok(Self { scheme, codebook })
    }

    /// HSQ compressor over an existing codebook.
    pub fn with_codebook(params: HsqParams, codebook: Arc<Codebook>) -> Result<Self> {
        if codebook.dim() != params.segment_dim || codebook.count() != params.codeword_count {
            return Err(Error::DimensionMismatch {
                expected: params.segment_dim,
                actual: codebook.dim(),
            });
        }
        Ok(Self {
            scheme: QuantizerScheme::Hsq(params),
            codebook: Some(codebook),
        })
    }

    pub fn scheme(&self) -> &QuantizerScheme {
        &self.scheme
    }

    pub fn codebook(&self) -> Option<&Arc<Codebook>> {
        self.codebook.as_ref()
    }

    pub fn compress(&self, g: &[f64], rng: &mut SplitMix64) -> Result<Message> {
        Ok(match &self.scheme {
            QuantizerScheme::Identity => {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidGradient);
                }
                Message::Raw(g.to_vec())
            }
            QuantizerScheme::Hsq(p) => {
                let cb = self.codebook.as_ref().expect("hsq compressor has a codebook");
                Message::Hsq(hsq::compress(g, cb, p.levels, p.variant, rng)?)
            }
            QuantizerScheme::Qsgd { levels, bucket } => {
                Message::Baseline(baselines::qsgd_compress(g, *levels, *bucket, rng)?)
            }
            QuantizerScheme::TernGrad => Message::Baseline(baselines::terngrad_compress(g, rng)?),
            QuantizerScheme::SignSgd => Message::Baseline(baselines::signsgd_compress(g)?),
        })
    }

    /// Add `weight · decode(msg)` into `out`.
    pub fn accumulate(&self, msg: &Message, weight: f64, out: &mut [f64]) -> Result<()> {
        match msg {
            Message::Hsq(cg) => {
                let cb = self
                    .codebook
                    .as_ref()
                    .ok_or_else(|| Error::InvalidConfig("HSQ message without codebook".into()))?;
                hsq::accumulate_into(cg, cb, weight, out)
            }
            Message::Raw(v) => add_scaled(v, weight, out),
            Message::Baseline(code) => add_scaled(&code.decode(), weight, out),
        }
    }

    pub fn decode(&self, msg: &Message, d: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; d];
        self.accumulate(msg, 1.0, &mut out)?;
        Ok(out)
    }

    pub fn payload_bits(&self, d: usize) -> f64 {
        wire::payload_bits(&self.scheme, d)
    }
}

impl Quantizer for Compressor {
    fn quantize(&self, g: &[f64], rng: &mut SplitMix64) -> Result<Vec<f64>> {
        let msg = self.compress(g, rng)?;
        self.decode(&msg, g.len())
    }
}

fn add_scaled(v: &[f64], weight: f64, out: &mut [f64]) -> Result<()> {
    if v.len() != out.len() {
        return Err(Error::DimensionMismatch {
            expected: out.len(),
            actual: v.len(),
        });
    }
    for (o, x) in out.iter_mut().zip(v) {
        *o += weight * x;
    }
    Ok(())
}
