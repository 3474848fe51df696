use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{
    activate, activation_backward, batchnorm_backward, batchnorm_forward, bce_loss, conv1d_backward, conv1d_forward,
    dense_sigmoid_forward, dropout_forward, maxpool1d_backward, maxpool1d_forward, BatchNormTrace, ConvGeometry, Mode,
    BN_MOMENTUM,
};
use super::params::{BnSite, BranchLayout, ModelParams};
use super::spec::{BranchShape, ModelSpec};
use super::{NnetError, Real};
use crate::dataio::Dataset;
use crate::evalstats::PredictionSet;
use crate::features::FeatureBundle;

/// A mini-batch of featurized pairs.
pub type Batch<'a> = [&'a FeatureBundle];

/// Examples scored per inference chunk.
const PREDICT_CHUNK: usize = 256;

#[derive(Debug, Clone)]
struct BranchTrace<F> {
    z1: Vec<F>,
    a1: Vec<F>,
    z2: Vec<F>,
    argmax: Vec<u32>,
    mask: Option<Vec<F>>,
}

/// Everything a forward pass computed, kept for the backward pass and for
/// inspection of the intermediate representations.
#[derive(Debug, Clone)]
pub struct ForwardTrace<F> {
    /// `ModelParams::step` at the time of the pass.
    pub step: u64,
    pub mode: Mode,
    pub batch: usize,
    branches: Vec<[BranchTrace<F>; 2]>,
    enh_side: Vec<F>,
    prom_side: Vec<F>,
    enh_bn: BatchNormTrace<F>,
    prom_bn: BatchNormTrace<F>,
    enh_drop: Option<Vec<F>>,
    prom_drop: Option<Vec<F>>,
    joint_in: Vec<F>,
    joint_bn: BatchNormTrace<F>,
    dense_in: Vec<F>,
    pub logits: Vec<F>,
    pub probs: Vec<F>,
    enh_flat: usize,
    prom_flat: usize,
}

impl<F: Real> ForwardTrace<F> {
    fn row(v: &[F], width: usize, r: usize) -> &[F] {
        &v[r * width..(r + 1) * width]
    }

    /// Flattened enhancer conv features of example `r`.
    pub fn e_cnn(&self, r: usize) -> &[F] {
        &self.e_hybrid(r)[..self.enh_flat]
    }

    pub fn p_cnn(&self, r: usize) -> &[F] {
        &self.p_hybrid(r)[..self.prom_flat]
    }

    /// E_CNN concatenated with E_k-mer (just E_CNN for M_CNN).
    pub fn e_hybrid(&self, r: usize) -> &[F] {
        Self::row(&self.enh_side, self.enh_bn.features, r)
    }

    pub fn p_hybrid(&self, r: usize) -> &[F] {
        Self::row(&self.prom_side, self.prom_bn.features, r)
    }

    /// Both sides after their batchnorm and dropout, before the joint batchnorm.
    pub fn joint(&self, r: usize) -> &[F] {
        Self::row(&self.joint_in, self.joint_bn.features, r)
    }

    pub fn output(&self, r: usize) -> F {
        self.probs[r]
    }
}

/// Parameter gradients, aligned with [`ModelParams::values`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub values: Vec<f64>,
}

impl Gradients {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn geometries(spec: &ModelSpec, shape: &BranchShape) -> (ConvGeometry, ConvGeometry) {
    (
        ConvGeometry {
            len_in: shape.input_len,
            c_in: 4,
            filters: spec.conv1.filters,
            kernel: spec.conv1.kernel,
            stride: spec.conv1.stride,
        },
        ConvGeometry {
            len_in: shape.conv1_len,
            c_in: spec.conv1.filters,
            filters: spec.conv2.filters,
            kernel: spec.conv2.kernel,
            stride: spec.conv2.stride,
        },
    )
}

fn to_real<F: Real>(v: &[f64]) -> Vec<F> {
    v.iter().map(|&x| F::of(x)).collect()
}

fn branch_forward<F: Real>(
    x: &[F],
    w: &[F],
    bl: &BranchLayout,
    spec: &ModelSpec,
    shape: &BranchShape,
) -> (BranchTrace<F>, Vec<F>) {
    let (g1, g2) = geometries(spec, shape);
    let z1 = conv1d_forward(x, &w[bl.conv1_w.clone()], &w[bl.conv1_b.clone()], &g1);
    let a1 = activate(&z1, spec.activation);
    let z2 = conv1d_forward(&a1, &w[bl.conv2_w.clone()], &w[bl.conv2_b.clone()], &g2);
    let a2 = activate(&z2, spec.activation);
    let (pooled, argmax) =
        maxpool1d_forward(&a2, shape.conv2_len, spec.conv2.filters, spec.pool.size, spec.pool.stride);
    (BranchTrace { z1, a1, z2, argmax, mask: None }, pooled)
}

#[allow(clippy::too_many_arguments)]
fn branch_backward<F: Real>(
    x: &[F],
    trace: &BranchTrace<F>,
    mut d_flat: Vec<F>,
    w: &[F],
    bl: &BranchLayout,
    spec: &ModelSpec,
    shape: &BranchShape,
    g: &mut [F],
) {
    if let Some(mask) = &trace.mask {
        for (d, &m) in d_flat.iter_mut().zip(mask) {
            *d *= m;
        }
    }
    let (g1, g2) = geometries(spec, shape);
    let mut d_a2 = maxpool1d_backward(&d_flat, &trace.argmax, shape.conv2_len, spec.conv2.filters);
    activation_backward(&trace.z2, &mut d_a2, spec.activation);
    let (gw, gb) = g[bl.conv2_w.start..bl.conv2_b.end].split_at_mut(bl.conv2_w.len());
    let mut d_a1 =
        conv1d_backward(&trace.a1, &w[bl.conv2_w.clone()], &d_a2, &g2, gw, gb, true).expect("input gradient requested");
    activation_backward(&trace.z1, &mut d_a1, spec.activation);
    let (gw, gb) = g[bl.conv1_w.start..bl.conv1_b.end].split_at_mut(bl.conv1_w.len());
    conv1d_backward(x, &w[bl.conv1_w.clone()], &d_a1, &g1, gw, gb, false);
}

fn check_inputs(params: &ModelParams, inputs: &Batch) -> Result<(), NnetError> {
    let spec = &params.spec;
    for (i, x) in inputs.iter().enumerate() {
        if x.enh_onehot.len() != spec.enhancer_len * 4 || x.prom_onehot.len() != spec.promoter_len * 4 {
            return Err(NnetError::Shape(format!(
                "example {i}: sequences of {}/{} bp, model expects {}/{}",
                x.enh_onehot.len() / 4,
                x.prom_onehot.len() / 4,
                spec.enhancer_len,
                spec.promoter_len
            )));
        }
        if spec.is_hybrid() && (x.enh_kmer.len() != spec.kmer_dim || x.prom_kmer.len() != spec.kmer_dim) {
            return Err(NnetError::Shape(format!(
                "example {i}: k-mer vectors of length {}/{}, model expects {}",
                x.enh_kmer.len(),
                x.prom_kmer.len(),
                spec.kmer_dim
            )));
        }
    }
    Ok(())
}

fn bn_forward<F: Real>(
    params: &ModelParams,
    w: &[F],
    site: BnSite,
    input: &[F],
    batch: usize,
    mode: Mode,
) -> (Vec<F>, BatchNormTrace<F>) {
    let bl = params.bn_layout(site);
    let stats = params.running_stats(site);
    batchnorm_forward(
        input,
        batch,
        &w[bl.gamma.clone()],
        &w[bl.beta.clone()],
        &to_real(&stats.mean),
        &to_real(&stats.var),
        mode,
    )
}

/// Runs the network on a batch. Train mode samples dropout masks from `rng`
/// and normalizes with batch statistics; inference mode ignores `rng`.
pub fn forward<F: Real, R: Rng>(
    params: &ModelParams,
    inputs: &Batch,
    mode: Mode,
    rng: &mut R,
) -> Result<ForwardTrace<F>, NnetError> {
    let batch = inputs.len();
    if batch == 0 {
        return Err(NnetError::Shape("empty batch".into()));
    }
    if mode == Mode::Train && batch < 2 {
        return Err(NnetError::BatchTooSmall(batch));
    }
    check_inputs(params, inputs)?;
    let spec = &params.spec;
    let sh = &params.shapes;
    let l = &params.layout;
    let rate = spec.dropout_rate;
    let w: Vec<F> = to_real(&params.values);

    let mut enh_side = Vec::with_capacity(batch * sh.enh_features);
    let mut prom_side = Vec::with_capacity(batch * sh.prom_features);
    let mut branches = Vec::with_capacity(batch);
    for x in inputs {
        let (mut e, mut e_flat) = branch_forward(&to_real(&x.enh_onehot), &w, &l.enhancer, spec, &sh.enhancer);
        e.mask = dropout_forward(&mut e_flat, rate, mode, rng);
        enh_side.extend_from_slice(&e_flat);
        if spec.is_hybrid() {
            let mut k = to_real(&x.enh_kmer);
            dropout_forward(&mut k, rate, mode, rng);
            enh_side.extend_from_slice(&k);
        }
        let (mut p, mut p_flat) = branch_forward(&to_real(&x.prom_onehot), &w, &l.promoter, spec, &sh.promoter);
        p.mask = dropout_forward(&mut p_flat, rate, mode, rng);
        prom_side.extend_from_slice(&p_flat);
        if spec.is_hybrid() {
            let mut k = to_real(&x.prom_kmer);
            dropout_forward(&mut k, rate, mode, rng);
            prom_side.extend_from_slice(&k);
        }
        branches.push([e, p]);
    }

    let (mut enh_out, enh_bn) = bn_forward(params, &w, BnSite::Enhancer, &enh_side, batch, mode);
    let enh_drop = dropout_forward(&mut enh_out, rate, mode, rng);
    let (mut prom_out, prom_bn) = bn_forward(params, &w, BnSite::Promoter, &prom_side, batch, mode);
    let prom_drop = dropout_forward(&mut prom_out, rate, mode, rng);

    let mut joint_in = Vec::with_capacity(batch * sh.joint);
    for (e, p) in enh_out.chunks_exact(sh.enh_features).zip(prom_out.chunks_exact(sh.prom_features)) {
        joint_in.extend_from_slice(e);
        joint_in.extend_from_slice(p);
    }
    let (dense_in, joint_bn) = bn_forward(params, &w, BnSite::Joint, &joint_in, batch, mode);

    let dense_w = &w[l.dense_w.clone()];
    let (logits, probs) =
        dense_in.chunks_exact(sh.joint).map(|row| dense_sigmoid_forward(row, dense_w, w[l.dense_b])).unzip();

    Ok(ForwardTrace {
        step: params.step,
        mode,
        batch,
        branches,
        enh_side,
        prom_side,
        enh_bn,
        prom_bn,
        enh_drop,
        prom_drop,
        joint_in,
        joint_bn,
        dense_in,
        logits,
        probs,
        enh_flat: sh.enhancer.flat,
        prom_flat: sh.promoter.flat,
    })
}

fn bn_backward_into<F: Real>(
    params: &ModelParams,
    w: &[F],
    site: BnSite,
    d_out: &[F],
    trace: &BatchNormTrace<F>,
    g: &mut [F],
) -> Vec<F> {
    let bl = params.bn_layout(site);
    let (dg, db) = g[bl.gamma.start..bl.beta.end].split_at_mut(bl.gamma.len());
    batchnorm_backward(d_out, trace, &w[bl.gamma.clone()], dg, db)
}

/// Gradients of all parameters given `d_logits[r]`, the derivative of the
/// batch loss with respect to example `r`'s pre-sigmoid logit. The k-mer
/// inputs are fixed features and receive no gradient.
pub fn backward<F: Real>(
    params: &ModelParams,
    trace: &ForwardTrace<F>,
    inputs: &Batch,
    d_logits: &[f64],
) -> Result<Gradients, NnetError> {
    if trace.step != params.step {
        return Err(NnetError::StaleTrace { trace: trace.step, model: params.step });
    }
    if trace.mode != Mode::Train {
        return Err(NnetError::Shape("backward needs a train-mode trace".into()));
    }
    if d_logits.len() != trace.batch || inputs.len() != trace.batch {
        return Err(NnetError::Shape(format!(
            "trace has {} examples, got {} inputs and {} logit gradients",
            trace.batch,
            inputs.len(),
            d_logits.len()
        )));
    }
    let spec = &params.spec;
    let sh = &params.shapes;
    let l = &params.layout;
    let w: Vec<F> = to_real(&params.values);
    let mut g = vec![F::zero(); l.total];
    let batch = trace.batch;

    let mut d_dense_in = Vec::with_capacity(batch * sh.joint);
    for (r, row) in trace.dense_in.chunks_exact(sh.joint).enumerate() {
        let dl = F::of(d_logits[r]);
        g[l.dense_b] += dl;
        let gw = &mut g[l.dense_w.clone()];
        for (j, &x) in row.iter().enumerate() {
            gw[j] += dl * x;
        }
        d_dense_in.extend(w[l.dense_w.clone()].iter().map(|&wj| dl * wj));
    }
    let d_joint = bn_backward_into(params, &w, BnSite::Joint, &d_dense_in, &trace.joint_bn, &mut g);

    let mut d_enh = Vec::with_capacity(batch * sh.enh_features);
    let mut d_prom = Vec::with_capacity(batch * sh.prom_features);
    for row in d_joint.chunks_exact(sh.joint) {
        d_enh.extend_from_slice(&row[..sh.enh_features]);
        d_prom.extend_from_slice(&row[sh.enh_features..]);
    }
    for (d, mask) in [(&mut d_enh, &trace.enh_drop), (&mut d_prom, &trace.prom_drop)] {
        if let Some(mask) = mask {
            for (v, &m) in d.iter_mut().zip(mask) {
                *v *= m;
            }
        }
    }
    let d_enh_side = bn_backward_into(params, &w, BnSite::Enhancer, &d_enh, &trace.enh_bn, &mut g);
    let d_prom_side = bn_backward_into(params, &w, BnSite::Promoter, &d_prom, &trace.prom_bn, &mut g);

    for (r, x) in inputs.iter().enumerate() {
        let [e, p] = &trace.branches[r];
        let d_flat = d_enh_side[r * sh.enh_features..r * sh.enh_features + sh.enhancer.flat].to_vec();
        branch_backward(&to_real(&x.enh_onehot), e, d_flat, &w, &l.enhancer, spec, &sh.enhancer, &mut g);
        let d_flat = d_prom_side[r * sh.prom_features..r * sh.prom_features + sh.promoter.flat].to_vec();
        branch_backward(&to_real(&x.prom_onehot), p, d_flat, &w, &l.promoter, spec, &sh.promoter, &mut g);
    }
    Ok(Gradients { values: g.into_iter().map(F::to64).collect() })
}

/// Mean weighted cross-entropy over a batch, and its gradient with respect
/// to each logit (already divided by the batch size).
pub fn batch_loss<F: Real>(probs: &[F], labels: &[u8], pos_weight: f64) -> (f64, Vec<f64>) {
    let n = probs.len() as f64;
    let mut total = 0.0;
    let grads = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let (loss, g) = bce_loss(p.to64(), y, pos_weight);
            total += loss;
            g / n
        })
        .collect();
    (total / n, grads)
}

impl ModelParams {
    /// Folds a train-mode trace's batch statistics into the running estimates.
    pub fn update_running<F: Real>(&mut self, trace: &ForwardTrace<F>) {
        let m = BN_MOMENTUM;
        for (stats, bn) in self.running.iter_mut().zip([&trace.enh_bn, &trace.prom_bn, &trace.joint_bn]) {
            if bn.batch_mean.is_empty() {
                continue;
            }
            for (r, &b) in stats.mean.iter_mut().zip(&bn.batch_mean) {
                *r = m * *r + (1.0 - m) * b.to64();
            }
            for (r, &b) in stats.var.iter_mut().zip(&bn.batch_var) {
                *r = m * *r + (1.0 - m) * b.to64();
            }
        }
    }
}

/// Inference-mode probabilities, one per input, in input order.
pub fn predict_scores(params: &ModelParams, inputs: &[FeatureBundle]) -> Result<Vec<f64>, NnetError> {
    // Inference draws no random numbers; the generator only satisfies the signature.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut scores = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(PREDICT_CHUNK) {
        let refs: Vec<&FeatureBundle> = chunk.iter().collect();
        let trace = forward::<f64, _>(params, &refs, Mode::Infer, &mut rng)?;
        scores.extend(trace.probs);
    }
    Ok(scores)
}

/// Scores every record of `dataset`; `features` must be aligned with its records.
pub fn predict(
    params: &ModelParams,
    dataset: &Dataset,
    features: &[FeatureBundle],
    fold_id: &str,
) -> Result<PredictionSet, NnetError> {
    if features.len() != dataset.len() {
        return Err(NnetError::Shape(format!("{} feature bundles for {} records", features.len(), dataset.len())));
    }
    let scores = predict_scores(params, features)?;
    let mut out = PredictionSet::new(fold_id, params.spec.arch.tag());
    for (r, s) in dataset.records.iter().zip(scores) {
        out.push(r.pair_id.clone(), r.label, s);
    }
    Ok(out)
}
