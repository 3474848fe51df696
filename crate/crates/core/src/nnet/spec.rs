use std::fmt;
use std::str::FromStr;

use super::NnetError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arch {
    /// Two-branch CNN over one-hot enhancer and promoter.
    MCnn,
    /// The CNN branches concatenated with enhancer and promoter k-mer spectra.
    MHybrid,
}

impl Arch {
    pub fn tag(self) -> &'static str {
        match self {
            Arch::MCnn => "mcnn",
            Arch::MHybrid => "mhybrid",
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Arch {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mcnn" => Ok(Arch::MCnn),
            "mhybrid" => Ok(Arch::MHybrid),
            other => Err(format!("unknown model '{other}' (expected mcnn or mhybrid)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Linear,
}

impl FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "relu" => Ok(Activation::Relu),
            "linear" => Ok(Activation::Linear),
            other => Err(format!("unknown activation '{other}'")),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Linear => "linear",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConvSpec {
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PoolSpec {
    pub size: usize,
    pub stride: usize,
}

/// Architecture description. Every tensor shape follows from it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub arch: Arch,
    pub enhancer_len: usize,
    pub promoter_len: usize,
    pub conv1: ConvSpec,
    pub conv2: ConvSpec,
    pub pool: PoolSpec,
    pub dropout_rate: f64,
    /// Length of each k-mer input (4^k). Ignored by `MCnn`.
    pub kmer_dim: usize,
    pub activation: Activation,
}

/// Lengths through one convolutional branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BranchShape {
    pub input_len: usize,
    pub conv1_len: usize,
    pub conv2_len: usize,
    pub pooled_len: usize,
    /// `pooled_len * conv2.filters`.
    pub flat: usize,
}

/// Feature widths at every concatenation point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shapes {
    pub enhancer: BranchShape,
    pub promoter: BranchShape,
    /// E_CNN (+ E_k-mer for the hybrid).
    pub enh_features: usize,
    pub prom_features: usize,
    pub joint: usize,
}

/// Output length of a "same"-padded strided convolution.
pub fn conv_out_len(len: usize, stride: usize) -> usize {
    len.div_ceil(stride)
}

/// (left, right) zero padding realizing `conv_out_len`; the odd unit goes right.
pub fn same_padding(len: usize, kernel: usize, stride: usize) -> (usize, usize) {
    let out = conv_out_len(len, stride);
    let total = ((out - 1) * stride + kernel).saturating_sub(len);
    (total / 2, total - total / 2)
}

/// Valid pooling output length, `None` when the window does not fit.
pub fn pool_out_len(len: usize, size: usize, stride: usize) -> Option<usize> {
    (len >= size).then(|| (len - size) / stride + 1)
}

impl ModelSpec {
    /// Layer sizes of the published architecture: 3000/2000 bp inputs,
    /// Conv1D(16,13,2), Conv1D(32,23,2), MaxPool(40,20), dropout 0.5, 5-mers.
    pub fn paper(arch: Arch) -> Self {
        Self {
            arch,
            enhancer_len: 3000,
            promoter_len: 2000,
            conv1: ConvSpec { filters: 16, kernel: 13, stride: 2 },
            conv2: ConvSpec { filters: 32, kernel: 23, stride: 2 },
            pool: PoolSpec { size: 40, stride: 20 },
            dropout_rate: 0.5,
            kmer_dim: 1024,
            activation: Activation::Relu,
        }
    }

    /// Tenfold shorter inputs with kernels and pooling scaled to keep the
    /// flatten widths (36 x 32 and 24 x 32) of the full model.
    pub fn desk(arch: Arch) -> Self {
        Self {
            enhancer_len: 300,
            promoter_len: 200,
            conv1: ConvSpec { filters: 16, kernel: 5, stride: 2 },
            conv2: ConvSpec { filters: 32, kernel: 7, stride: 2 },
            pool: PoolSpec { size: 4, stride: 2 },
            ..Self::paper(arch)
        }
    }

    pub fn is_hybrid(&self) -> bool {
        self.arch == Arch::MHybrid
    }

    fn branch(&self, len: usize, what: &str) -> Result<BranchShape, NnetError> {
        if len == 0 {
            return Err(NnetError::Shape(format!("{what} length is zero")));
        }
        let conv1_len = conv_out_len(len, self.conv1.stride);
        let conv2_len = conv_out_len(conv1_len, self.conv2.stride);
        let pooled_len = pool_out_len(conv2_len, self.pool.size, self.pool.stride).ok_or_else(|| {
            NnetError::Shape(format!("{what}: pool size {} exceeds feature length {conv2_len}", self.pool.size))
        })?;
        Ok(BranchShape { input_len: len, conv1_len, conv2_len, pooled_len, flat: pooled_len * self.conv2.filters })
    }

    pub fn validate(&self) -> Result<(), NnetError> {
        let positive = [
            self.conv1.filters,
            self.conv1.kernel,
            self.conv1.stride,
            self.conv2.filters,
            self.conv2.kernel,
            self.conv2.stride,
            self.pool.size,
            self.pool.stride,
        ];
        if positive.contains(&0) {
            return Err(NnetError::Shape("filters, kernels, strides and pool must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(NnetError::Shape(format!("dropout rate {} outside [0,1)", self.dropout_rate)));
        }
        if self.is_hybrid() && self.kmer_dim == 0 {
            return Err(NnetError::Shape("hybrid model needs kmer_dim > 0".into()));
        }
        self.shapes().map(|_| ())
    }

    pub fn shapes(&self) -> Result<Shapes, NnetError> {
        let enhancer = self.branch(self.enhancer_len, "enhancer")?;
        let promoter = self.branch(self.promoter_len, "promoter")?;
        let extra = if self.is_hybrid() { self.kmer_dim } else { 0 };
        let enh_features = enhancer.flat + extra;
        let prom_features = promoter.flat + extra;
        Ok(Shapes { enhancer, promoter, enh_features, prom_features, joint: enh_features + prom_features })
    }

    /// One-line `key=value;...` form stored in weight files.
    pub fn to_text(&self) -> String {
        format!(
            "arch={};enhancer_len={};promoter_len={};conv1={},{},{};conv2={},{},{};pool={},{};dropout={:?};kmer_dim={};activation={}",
            self.arch,
            self.enhancer_len,
            self.promoter_len,
            self.conv1.filters,
            self.conv1.kernel,
            self.conv1.stride,
            self.conv2.filters,
            self.conv2.kernel,
            self.conv2.stride,
            self.pool.size,
            self.pool.stride,
            self.dropout_rate,
            self.kmer_dim,
            self.activation
        )
    }

    pub fn from_text(text: &str) -> Result<Self, NnetError> {
        let bad = |m: String| NnetError::Format(format!("model spec: {m}"));
        let mut spec = ModelSpec::paper(Arch::MCnn);
        let mut seen = 0;
        for item in text.split(';') {
            let (key, value) = item.split_once('=').ok_or_else(|| bad(format!("'{item}' is not key=value")))?;
            let nums = |v: &str| -> Result<Vec<usize>, NnetError> {
                v.split(',').map(|x| x.parse::<usize>().map_err(|_| bad(format!("bad number in '{item}'")))).collect()
            };
            let triple = |v: &str| -> Result<ConvSpec, NnetError> {
                match nums(v)?.as_slice() {
                    &[filters, kernel, stride] => Ok(ConvSpec { filters, kernel, stride }),
                    _ => Err(bad(format!("'{item}' needs three numbers"))),
                }
            };
            match key {
                "arch" => spec.arch = value.parse().map_err(bad)?,
                "enhancer_len" => spec.enhancer_len = value.parse().map_err(|_| bad(item.into()))?,
                "promoter_len" => spec.promoter_len = value.parse().map_err(|_| bad(item.into()))?,
                "conv1" => spec.conv1 = triple(value)?,
                "conv2" => spec.conv2 = triple(value)?,
                "pool" => match nums(value)?.as_slice() {
                    &[size, stride] => spec.pool = PoolSpec { size, stride },
                    _ => return Err(bad(format!("'{item}' needs two numbers"))),
                },
                "dropout" => spec.dropout_rate = value.parse().map_err(|_| bad(item.into()))?,
                "kmer_dim" => spec.kmer_dim = value.parse().map_err(|_| bad(item.into()))?,
                "activation" => spec.activation = value.parse().map_err(bad)?,
                other => return Err(bad(format!("unknown key '{other}'"))),
            }
            seen += 1;
        }
        if seen != 9 {
            return Err(bad(format!("expected 9 fields, found {seen}")));
        }
        spec.validate()?;
        Ok(spec)
    }
}
