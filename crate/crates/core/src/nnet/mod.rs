//! The M_CNN / M_Hybrid network: forward and hand-derived backward passes,
//! Adam, the training loop and a versioned weight container.
//!
//! Master weights are always `f64`. Kernels are generic over [`Real`] so the
//! same code runs in double precision (`Precision::Check64`) or single
//! precision against rounded copies of the weights (`Precision::Fast32`).

mod adam;
mod io;
pub mod layers;
mod model;
mod params;
mod spec;
mod train;

use std::fmt::Debug;
use std::ops::{AddAssign, MulAssign};

use num_traits::Float;
use thiserror::Error;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use io::{load_weights, load_weights_expecting, save_weights, FORMAT_VERSION, MAGIC};
pub use model::{backward, forward, predict, predict_scores, Batch, ForwardTrace, Gradients};
pub use params::{build_model, BnSite, Layout, ModelParams, RunningStats};
pub use spec::{
    conv_out_len, pool_out_len, same_padding, Activation, Arch, BranchShape, ConvSpec, ModelSpec, PoolSpec, Shapes,
};
pub use train::{train, write_loss_history, EpochLoss, Precision, TrainConfig, TrainOutcome};

#[derive(Debug, Error)]
pub enum NnetError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("batchnorm in train mode needs at least 2 examples, got {0}")]
    BatchTooSmall(usize),
    #[error("trace was recorded at parameter step {trace} but the model is at step {model}")]
    StaleTrace { trace: u64, model: u64 },
    #[error("non-finite loss at epoch {epoch}, batch {batch} (max |grad| {max_grad:e})")]
    NonFinite { epoch: usize, batch: usize, max_grad: f64 },
    #[error("weight file: bad magic")]
    BadMagic,
    #[error("weight file: version {found} not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("weight file: checksum mismatch")]
    Checksum,
    #[error("weight file truncated")]
    Truncated,
    #[error("weight file channel order '{0}' does not match ACGT")]
    ChannelOrder(String),
    #[error("weight file spec '{found}' differs from expected '{expected}'")]
    SpecMismatch { found: String, expected: String },
    #[error("features: {0}")]
    Features(#[from] crate::features::FeatureError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Floating-point type the kernels run in.
pub trait Real: Float + AddAssign + MulAssign + Debug + Send + Sync + 'static {
    fn of(v: f64) -> Self;
    fn to64(self) -> f64;
}

impl Real for f64 {
    #[inline]
    fn of(v: f64) -> Self {
        v
    }
    #[inline]
    fn to64(self) -> f64 {
        self
    }
}

impl Real for f32 {
    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn to64(self) -> f64 {
        self as f64
    }
}
