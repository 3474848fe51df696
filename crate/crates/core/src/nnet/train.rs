use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{adam_step, AdamConfig, AdamState};
use super::layers::Mode;
use super::model::{backward, batch_loss, forward, Gradients};
use super::params::ModelParams;
use super::{NnetError, Real};
use crate::dataio::Dataset;
use crate::features::FeatureBundle;

/// Arithmetic used for the forward and backward passes. Master weights and
/// optimizer state are `f64` either way.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    Fast32,
    #[default]
    Check64,
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Precision::Fast32 => "fast-32",
            Precision::Check64 => "check-64",
        })
    }
}

impl FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fast-32" | "fast32" => Ok(Precision::Fast32),
            "check-64" | "check64" => Ok(Precision::Check64),
            other => Err(format!("unknown precision '{other}' (expected fast-32 or check-64)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Weight on the positive-class loss term; `None` means unweighted.
    pub pos_weight: Option<f64>,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            learning_rate: adam.learning_rate,
            batch_size: 100,
            epochs: 70,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            seed: 0,
            pos_weight: None,
            precision: Precision::Check64,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig { learning_rate: self.learning_rate, beta1: self.beta1, beta2: self.beta2, epsilon: self.epsilon }
    }

    pub fn validate(&self) -> Result<(), NnetError> {
        let bad = |m: String| Err(NnetError::Config(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || self.epsilon.is_nan()
            || self.epsilon <= 0.0
        {
            return bad("adam constants out of range".into());
        }
        if let Some(w) = self.pos_weight {
            if !(w > 0.0 && w.is_finite()) {
                return bad(format!("positive-class weight must be positive, got {w}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub mean_loss: f64,
    pub wall_secs: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: Vec<EpochLoss>,
}

/// Splits a shuffled order into batches. A trailing batch of one example
/// is merged into the previous batch because batchnorm needs two.
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if out.len() >= 2 && out[out.len() - 1].len() == 1 {
        out.pop();
        let start = order.len() - size - 1;
        *out.last_mut().expect("at least one batch") = &order[start..];
    }
    out
}

fn step<F: Real>(
    params: &ModelParams,
    inputs: &[&FeatureBundle],
    labels: &[u8],
    pos_weight: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, Gradients, super::model::ForwardTrace<F>), NnetError> {
    let trace = forward::<F, _>(params, inputs, Mode::Train, rng)?;
    let (loss, d_logits) = batch_loss(&trace.probs, labels, pos_weight);
    let grads = backward(params, &trace, inputs, &d_logits)?;
    Ok((loss, grads, trace))
}

/// Mini-batch Adam on binary cross-entropy. Examples are reshuffled every
/// epoch from `cfg.seed`; dropout masks come from an independent stream of
/// the same seed, so a run is a pure function of (model, data, cfg).
pub fn train(
    model: ModelParams,
    dataset: &Dataset,
    features: &[FeatureBundle],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, NnetError> {
    cfg.validate()?;
    model.check()?;
    if features.len() != dataset.len() {
        return Err(NnetError::Shape(format!("{} feature bundles for {} records", features.len(), dataset.len())));
    }
    let mut params = model;
    if cfg.epochs == 0 {
        return Ok(TrainOutcome { params, history: Vec::new() });
    }
    if dataset.len() < 2 {
        return Err(NnetError::BatchTooSmall(dataset.len()));
    }
    let labels = dataset.labels();
    let pos_weight = cfg.pos_weight.unwrap_or(1.0);
    let adam = cfg.adam();
    params.optimizer = adam;
    let mut state = AdamState::new(params.num_params());
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    dropout_rng.set_stream(1);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let started = Instant::now();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for (b, idx) in batches(&order, cfg.batch_size).into_iter().enumerate() {
            let inputs: Vec<&FeatureBundle> = idx.iter().map(|&i| &features[i]).collect();
            let y: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
            let (loss, grads) = match cfg.precision {
                Precision::Check64 => {
                    let (loss, g, trace) = step::<f64>(&params, &inputs, &y, pos_weight, &mut dropout_rng)?;
                    params.update_running(&trace);
                    (loss, g)
                }
                Precision::Fast32 => {
                    let (loss, g, trace) = step::<f32>(&params, &inputs, &y, pos_weight, &mut dropout_rng)?;
                    params.update_running(&trace);
                    (loss, g)
                }
            };
            if !loss.is_finite() || grads.values.iter().any(|g| !g.is_finite()) {
                return Err(NnetError::NonFinite { epoch, batch: b + 1, max_grad: grads.max_abs() });
            }
            adam_step(&mut params, &grads.values, &mut state, &adam)?;
            total += loss * idx.len() as f64;
        }
        history.push(EpochLoss {
            epoch,
            mean_loss: total / dataset.len() as f64,
            wall_secs: started.elapsed().as_secs_f64(),
        });
    }
    Ok(TrainOutcome { params, history })
}

/// CSV with columns `epoch,mean_loss,wall_secs`.
pub fn write_loss_history<W: Write>(history: &[EpochLoss], mut sink: W) -> std::io::Result<()> {
    writeln!(sink, "epoch,mean_loss,wall_secs")?;
    for e in history {
        writeln!(sink, "{},{:.10},{:.3}", e.epoch, e.mean_loss, e.wall_secs)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{Chromosome, EPRecord};
    use crate::features::featurize_records;
    use crate::nnet::params::build_model;
    use crate::nnet::spec::{Activation, Arch, ConvSpec, ModelSpec, PoolSpec};
    use rand::Rng;

    fn toy_spec() -> ModelSpec {
        ModelSpec {
            arch: Arch::MCnn,
            enhancer_len: 60,
            promoter_len: 40,
            conv1: ConvSpec { filters: 8, kernel: 5, stride: 2 },
            conv2: ConvSpec { filters: 8, kernel: 7, stride: 2 },
            pool: PoolSpec { size: 8, stride: 4 },
            dropout_rate: 0.0,
            kmer_dim: 16,
            activation: Activation::Relu,
        }
    }

    /// 20 pairs; positives carry a planted motif in the enhancer.
    fn toy_dataset(seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seq = |n: usize| -> String { (0..n).map(|_| b"ACGT"[rng.gen_range(0..4)] as char).collect() };
        let records = (0..20)
            .map(|i| {
                let mut enh = seq(60);
                let label = (i % 2) as u8;
                if label == 1 {
                    enh.replace_range(25..35, "GGGGGGGGGG");
                }
                EPRecord::new(format!("t{i}"), "toy", Chromosome::new(1).unwrap(), enh, seq(40), label)
            })
            .collect();
        Dataset::new("toy", 60, 40, records)
    }

    #[test]
    fn batching_keeps_partial_and_merges_singletons() {
        let order: Vec<usize> = (0..10).collect();
        let sizes = |n: usize, b: usize| batches(&order[..n], b).iter().map(|c| c.len()).collect::<Vec<_>>();
        assert_eq!(sizes(10, 4), vec![4, 4, 2]);
        assert_eq!(sizes(9, 4), vec![4, 5]);
        assert_eq!(sizes(10, 5), vec![5, 5]);
        assert_eq!(sizes(3, 10), vec![3]);
        let merged = batches(&order[..9], 4);
        assert_eq!(merged[1], &[4, 5, 6, 7, 8]);
    }

    #[test]
    fn separable_toy_problem_is_fitted() {
        let data = toy_dataset(1);
        let feats = featurize_records(&data.records, 2).unwrap();
        let model = build_model(&toy_spec(), 1).unwrap();
        let cfg = TrainConfig { epochs: 30, batch_size: 10, learning_rate: 0.01, seed: 5, ..TrainConfig::default() };
        let out = train(model, &data, &feats, &cfg).unwrap();
        assert_eq!(out.history.len(), 30);
        let last = out.history.last().unwrap().mean_loss;
        assert!(last < 0.1, "final loss {last}");
    }

    #[test]
    fn check64_training_is_bit_reproducible() {
        let data = toy_dataset(2);
        let feats = featurize_records(&data.records, 2).unwrap();
        let spec = ModelSpec { dropout_rate: 0.5, ..toy_spec() };
        let cfg = TrainConfig { epochs: 3, batch_size: 6, seed: 9, ..TrainConfig::default() };
        let run = || train(build_model(&spec, 4).unwrap(), &data, &feats, &cfg).unwrap().params;
        let (a, b) = (run(), run());
        let bits = |m: &ModelParams| m.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(a.running, b.running);
        assert_eq!(a.step, 12);
    }

    #[test]
    fn zero_epochs_returns_initial_weights() {
        let data = toy_dataset(3);
        let feats = featurize_records(&data.records, 2).unwrap();
        let model = build_model(&toy_spec(), 4).unwrap();
        let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
        let out = train(model.clone(), &data, &feats, &cfg).unwrap();
        assert_eq!(out.params, model);
        assert!(out.history.is_empty());
    }

    #[test]
    fn fast32_training_runs_and_learns() {
        let data = toy_dataset(1);
        let feats = featurize_records(&data.records, 2).unwrap();
        let cfg = TrainConfig {
            epochs: 30,
            batch_size: 10,
            learning_rate: 0.01,
            precision: Precision::Fast32,
            ..TrainConfig::default()
        };
        let out = train(build_model(&toy_spec(), 1).unwrap(), &data, &feats, &cfg).unwrap();
        assert!(out.history.last().unwrap().mean_loss < 0.2);
    }

    #[test]
    fn non_finite_loss_is_reported() {
        let data = toy_dataset(3);
        let feats = featurize_records(&data.records, 2).unwrap();
        let mut model = build_model(&toy_spec(), 4).unwrap();
        let b = model.layout.dense_b;
        model.values[b] = f64::NAN;
        let cfg = TrainConfig { epochs: 2, batch_size: 5, ..TrainConfig::default() };
        match train(model, &data, &feats, &cfg) {
            Err(NnetError::NonFinite { epoch: 1, batch: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        for cfg in [
            TrainConfig { learning_rate: 0.0, ..TrainConfig::default() },
            TrainConfig { batch_size: 0, ..TrainConfig::default() },
            TrainConfig { pos_weight: Some(-1.0), ..TrainConfig::default() },
        ] {
            assert!(matches!(cfg.validate(), Err(NnetError::Config(_))));
        }
    }

    #[test]
    fn loss_history_csv() {
        let mut buf = Vec::new();
        write_loss_history(&[EpochLoss { epoch: 1, mean_loss: 0.5, wall_secs: 1.25 }], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "epoch,mean_loss,wall_secs\n1,0.5000000000,1.250\n");
    }
}
