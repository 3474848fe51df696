use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::adam::AdamConfig;
use super::spec::{ConvSpec, ModelSpec, Shapes};
use super::NnetError;
use crate::features::CHANNEL_ORDER;

/// Offsets of one convolutional branch inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BranchLayout {
    pub conv1_w: Range<usize>,
    pub conv1_b: Range<usize>,
    pub conv2_w: Range<usize>,
    pub conv2_b: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BnLayout {
    pub gamma: Range<usize>,
    pub beta: Range<usize>,
}

/// Where every trainable tensor lives in [`ModelParams::values`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub enhancer: BranchLayout,
    pub promoter: BranchLayout,
    pub bn_enhancer: BnLayout,
    pub bn_promoter: BnLayout,
    pub bn_joint: BnLayout,
    pub dense_w: Range<usize>,
    pub dense_b: usize,
    pub total: usize,
}

struct Cursor(usize);

impl Cursor {
    fn take(&mut self, n: usize) -> Range<usize> {
        let r = self.0..self.0 + n;
        self.0 += n;
        r
    }
}

impl Layout {
    pub fn new(spec: &ModelSpec, shapes: &Shapes) -> Self {
        let mut c = Cursor(0);
        let branch = |c: &mut Cursor| BranchLayout {
            conv1_w: c.take(spec.conv1.kernel * 4 * spec.conv1.filters),
            conv1_b: c.take(spec.conv1.filters),
            conv2_w: c.take(spec.conv2.kernel * spec.conv1.filters * spec.conv2.filters),
            conv2_b: c.take(spec.conv2.filters),
        };
        let enhancer = branch(&mut c);
        let promoter = branch(&mut c);
        let bn = |c: &mut Cursor, n: usize| BnLayout { gamma: c.take(n), beta: c.take(n) };
        let bn_enhancer = bn(&mut c, shapes.enh_features);
        let bn_promoter = bn(&mut c, shapes.prom_features);
        let bn_joint = bn(&mut c, shapes.joint);
        let dense_w = c.take(shapes.joint);
        let dense_b = c.take(1).start;
        Layout { enhancer, promoter, bn_enhancer, bn_promoter, bn_joint, dense_w, dense_b, total: c.0 }
    }

    /// Named tensors in storage order.
    pub fn tensors(&self) -> Vec<(&'static str, Range<usize>)> {
        vec![
            ("enhancer.conv1.weight", self.enhancer.conv1_w.clone()),
            ("enhancer.conv1.bias", self.enhancer.conv1_b.clone()),
            ("enhancer.conv2.weight", self.enhancer.conv2_w.clone()),
            ("enhancer.conv2.bias", self.enhancer.conv2_b.clone()),
            ("promoter.conv1.weight", self.promoter.conv1_w.clone()),
            ("promoter.conv1.bias", self.promoter.conv1_b.clone()),
            ("promoter.conv2.weight", self.promoter.conv2_w.clone()),
            ("promoter.conv2.bias", self.promoter.conv2_b.clone()),
            ("enhancer.bn.gamma", self.bn_enhancer.gamma.clone()),
            ("enhancer.bn.beta", self.bn_enhancer.beta.clone()),
            ("promoter.bn.gamma", self.bn_promoter.gamma.clone()),
            ("promoter.bn.beta", self.bn_promoter.beta.clone()),
            ("joint.bn.gamma", self.bn_joint.gamma.clone()),
            ("joint.bn.beta", self.bn_joint.beta.clone()),
            ("dense.weight", self.dense_w.clone()),
            ("dense.bias", self.dense_b..self.dense_b + 1),
        ]
    }
}

/// The three batchnorm layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnSite {
    Enhancer,
    Promoter,
    Joint,
}

impl BnSite {
    pub const ALL: [BnSite; 3] = [BnSite::Enhancer, BnSite::Promoter, BnSite::Joint];

    pub fn name(self) -> &'static str {
        match self {
            BnSite::Enhancer => "enhancer.bn",
            BnSite::Promoter => "promoter.bn",
            BnSite::Joint => "joint.bn",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningStats {
    fn fresh(n: usize) -> Self {
        Self { mean: vec![0.0; n], var: vec![1.0; n] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub spec: ModelSpec,
    pub shapes: Shapes,
    pub layout: Layout,
    /// All trainable values, addressed through `layout`.
    pub values: Vec<f64>,
    /// Running statistics indexed like [`BnSite::ALL`].
    pub running: [RunningStats; 3],
    pub channel_order: [u8; 4],
    /// Optimizer constants the weights were (or will be) trained with.
    pub optimizer: AdamConfig,
    /// Number of optimizer updates applied so far.
    pub step: u64,
}

fn glorot_fill(values: &mut [f64], fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in values {
        *v = rng.gen_range(-limit..=limit);
    }
}

fn conv_fans(conv: &ConvSpec, c_in: usize) -> (usize, usize) {
    (conv.kernel * c_in, conv.kernel * conv.filters)
}

/// Fresh parameters: Glorot-uniform weights, zero biases, unit batchnorm
/// scale and zero shift, running mean 0 and variance 1.
pub fn build_model(spec: &ModelSpec, seed: u64) -> Result<ModelParams, NnetError> {
    spec.validate()?;
    let shapes = spec.shapes()?;
    let layout = Layout::new(spec, &shapes);
    let mut values = vec![0.0; layout.total];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for branch in [&layout.enhancer, &layout.promoter] {
        let (fi, fo) = conv_fans(&spec.conv1, 4);
        glorot_fill(&mut values[branch.conv1_w.clone()], fi, fo, &mut rng);
        let (fi, fo) = conv_fans(&spec.conv2, spec.conv1.filters);
        glorot_fill(&mut values[branch.conv2_w.clone()], fi, fo, &mut rng);
    }
    for bn in [&layout.bn_enhancer, &layout.bn_promoter, &layout.bn_joint] {
        values[bn.gamma.clone()].fill(1.0);
    }
    glorot_fill(&mut values[layout.dense_w.clone()], shapes.joint, 1, &mut rng);
    let running = [
        RunningStats::fresh(shapes.enh_features),
        RunningStats::fresh(shapes.prom_features),
        RunningStats::fresh(shapes.joint),
    ];
    Ok(ModelParams {
        spec: spec.clone(),
        shapes,
        layout,
        values,
        running,
        channel_order: *CHANNEL_ORDER,
        optimizer: AdamConfig::default(),
        step: 0,
    })
}

impl ModelParams {
    pub fn num_params(&self) -> usize {
        self.values.len()
    }

    pub fn running_stats(&self, site: BnSite) -> &RunningStats {
        &self.running[site as usize]
    }

    pub fn dense_weights(&self) -> &[f64] {
        &self.values[self.layout.dense_w.clone()]
    }

    pub fn dense_weights_mut(&mut self) -> &mut [f64] {
        let r = self.layout.dense_w.clone();
        &mut self.values[r]
    }

    pub fn bn_layout(&self, site: BnSite) -> &BnLayout {
        match site {
            BnSite::Enhancer => &self.layout.bn_enhancer,
            BnSite::Promoter => &self.layout.bn_promoter,
            BnSite::Joint => &self.layout.bn_joint,
        }
    }

    /// Checks the invariants a loaded or mutated model must satisfy.
    pub fn check(&self) -> Result<(), NnetError> {
        let shapes = self.spec.shapes()?;
        if shapes != self.shapes || Layout::new(&self.spec, &shapes) != self.layout {
            return Err(NnetError::Shape("layout does not follow the spec".into()));
        }
        if self.values.len() != self.layout.total {
            return Err(NnetError::Shape(format!(
                "{} values for a layout of {}",
                self.values.len(),
                self.layout.total
            )));
        }
        let widths = [shapes.enh_features, shapes.prom_features, shapes.joint];
        for (site, (stats, &n)) in BnSite::ALL.iter().zip(self.running.iter().zip(&widths)) {
            if stats.mean.len() != n || stats.var.len() != n {
                return Err(NnetError::Shape(format!("{} running stats have the wrong width", site.name())));
            }
            if stats.var.iter().any(|&v| v.is_nan() || v <= 0.0) {
                return Err(NnetError::Shape(format!("{} running variance must be positive", site.name())));
            }
        }
        Ok(())
    }
}
