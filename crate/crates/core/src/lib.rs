//! Hyper-sphere quantization (HSQ) for communication-efficient SGD.
//!
//! Gradients are cut into segments, and each segment is sent as a codeword
//! index from a shared codebook plus a scalar pseudo-norm. The crate also
//! provides element-wise baselines, a bit-exact wire format, test objectives,
//! a deterministic federated simulator and statistical validators.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod codebook;
pub mod error;
pub mod fedsim;
pub mod hsq;
pub mod metrics;
pub mod problems;
pub mod rng;
pub mod scheme;
pub mod wire;

pub use codebook::{Codebook, CodebookMethod, SketchPath, SketchedCodebook};
pub use error::{Error, Result};
pub use fedsim::{FedConfig, LrSchedule, RoundLog, RunResult, Simulator};
pub use hsq::{CompressedGradient, Magnitude, SegmentCode, Variant};
pub use problems::{Problem, ProblemKind, ProblemSpec};
pub use rng::SplitMix64;
pub use scheme::{Compressor, HsqParams, Message, Quantizer, QuantizerScheme, SchemeKind};
