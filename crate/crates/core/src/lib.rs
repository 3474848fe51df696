//! Leave-one-chromosome-out benchmarking for enhancer-promoter interaction
//! (EPI) prediction.
//!
//! The crate is organised bottom-up:
//!
//! - [`dataio`]: EP-pair datasets, fold manifests, prediction files and a
//!   synthetic generator that plants chromosome-local or global signal.
//! - [`splits`]: LOCO folds, random holdouts and random k-fold partitions.
//! - [`features`]: one-hot matrices and normalized k-mer spectra.
//! - [`nnet`]: a hand-derived CNN / CNN+k-mer network with Adam training.
//! - [`evalstats`]: ROC, AUC, the DeLong paired test and box statistics.
//! - [`cli`]: experiment orchestration behind the `epiloco` binary.

pub mod cli;
pub mod dataio;
pub mod evalstats;
pub mod features;
pub mod nnet;
pub mod splits;

pub use dataio::{Chromosome, Dataset, EPRecord, FoldManifest, SplitKind};
pub use evalstats::PredictionSet;
pub use features::FeatureBundle;
pub use nnet::{ModelParams, ModelSpec, TrainConfig};
