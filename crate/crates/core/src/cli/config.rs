//! Flat `key = value` experiment configs.
//!
//! One setting per line, `#` starts a comment, later lines win. `include =
//! other.conf` splices another file in place (paths relative to the including
//! file). Dataset paths are resolved against the file that names them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use super::CliError;
use crate::dataio::{MotifMode, SplitKind, SyntheticConfig};
use crate::features::MAX_K;
use crate::nnet::{Arch, ConvSpec, ModelSpec, PoolSpec, Precision, TrainConfig};
use crate::splits::DEFAULT_TEST_FRACTION;

pub const DESK_MAX_EPOCHS: usize = 10;
pub const DESK_MAX_RECORDS: usize = 2000;
pub const DESK_BATCH_SIZE: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Profile {
    /// Published input lengths, layer sizes and epoch count.
    Paper,
    /// 300/200 bp windows, at most 10 epochs and 2000 records per dataset.
    Desk,
}

impl FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper" => Ok(Profile::Paper),
            "desk" => Ok(Profile::Desk),
            other => Err(format!("unknown profile '{other}' (expected paper or desk)")),
        }
    }
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::Paper => "paper",
            Profile::Desk => "desk",
        }
    }
}

/// Raw settings before interpretation, with the directory each value came from.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    values: BTreeMap<String, (String, PathBuf)>,
}

impl RawConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let mut raw = RawConfig::default();
        raw.include(path, &mut Vec::new())?;
        Ok(raw)
    }

    fn include(&mut self, path: &Path, stack: &mut Vec<PathBuf>) -> Result<(), CliError> {
        let canonical = path.canonicalize().map_err(|e| CliError::io(path, e))?;
        if stack.contains(&canonical) {
            return Err(CliError::Config(format!("include cycle through {}", path.display())));
        }
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let dir = canonical.parent().map(Path::to_path_buf).unwrap_or_default();
        stack.push(canonical);
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("{}:{}: expected key = value", path.display(), i + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if key == "include" {
                self.include(&dir.join(value), stack)?;
            } else {
                self.values.insert(key.to_string(), (value.to_string(), dir.clone()));
            }
        }
        stack.pop();
        Ok(())
    }

    /// Command-line override; relative paths resolve against the working directory.
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(key.to_string(), (value.into(), PathBuf::new()));
    }

    pub fn set_pair(&mut self, pair: &str) -> Result<(), CliError> {
        let (k, v) =
            pair.split_once('=').ok_or_else(|| CliError::Config(format!("--set '{pair}' is not key=value")))?;
        self.set(k.trim(), v.trim());
        Ok(())
    }
}

/// Everything a run needs, fully resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub profile: Profile,
    pub seed: u64,
    pub out: PathBuf,
    /// (cell line, path) in name order.
    pub datasets: Vec<(String, PathBuf)>,
    pub columns: String,
    pub split: SplitKind,
    pub test_fraction: f64,
    /// Random k-fold instead of a single holdout when set.
    pub kfold: Option<usize>,
    pub stratified: bool,
    pub models: Vec<Arch>,
    /// k-mer length for the k-mer inputs.
    pub k: usize,
    /// Architecture for the first model; `arch` is replaced per model.
    pub spec: ModelSpec,
    pub train: TrainConfig,
    pub record_cap: Option<usize>,
    pub synth: SyntheticConfig,
}

const KNOWN: &[&str] = &[
    "profile",
    "seed",
    "out",
    "columns",
    "split",
    "test_fraction",
    "kfold",
    "stratified",
    "model",
    "k",
    "enhancer_len",
    "promoter_len",
    "conv1",
    "conv2",
    "pool",
    "dropout",
    "epochs",
    "batch_size",
    "learning_rate",
    "beta1",
    "beta2",
    "epsilon",
    "pos_weight",
    "precision",
    "record_cap",
];

const SYNTH_KNOWN: &[&str] = &[
    "cell_line",
    "chromosomes",
    "pairs",
    "positive_fraction",
    "enhancer_len",
    "promoter_len",
    "mode",
    "motif_length",
    "motif_copies",
    "duplicates",
    "mutation_rate",
    "composition_bias",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value.parse().map_err(|_| CliError::Config(format!("{key}: cannot parse '{value}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(CliError::Config(format!("{key}: '{other}' is not a boolean"))),
    }
}

fn parse_numbers(key: &str, value: &str) -> Result<Vec<usize>, CliError> {
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn parse_models(value: &str) -> Result<Vec<Arch>, CliError> {
    let mut models = Vec::new();
    for m in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let arch: Arch = m.parse().map_err(CliError::Config)?;
        if !models.contains(&arch) {
            models.push(arch);
        }
    }
    if models.is_empty() {
        return Err(CliError::Config("model list is empty".into()));
    }
    Ok(models)
}

impl ExperimentConfig {
    pub fn resolve(raw: &RawConfig) -> Result<Self, CliError> {
        for key in raw.values.keys() {
            let ok = KNOWN.contains(&key.as_str())
                || key == "dataset"
                || key.strip_prefix("dataset.").is_some_and(|c| !c.is_empty())
                || key.strip_prefix("synth.").is_some_and(|s| SYNTH_KNOWN.contains(&s));
            if !ok {
                return Err(CliError::Config(format!("unknown key '{key}'")));
            }
        }
        let get = |k: &str| raw.values.get(k).map(|(v, _)| v.as_str());

        let profile: Profile =
            get("profile").map(str::parse).transpose().map_err(CliError::Config)?.unwrap_or(Profile::Paper);
        let desk = profile == Profile::Desk;
        let seed = get("seed").map(|v| parse("seed", v)).transpose()?.unwrap_or(0);
        let out = get("out").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"));

        let mut datasets = Vec::new();
        for (key, (value, dir)) in &raw.values {
            let path = dir.join(value);
            if let Some(cell) = key.strip_prefix("dataset.") {
                datasets.push((cell.to_string(), path));
            } else if key == "dataset" {
                let stem = Path::new(value).file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
                datasets.push((stem.to_string(), path));
            }
        }
        datasets.sort();
        if let Some(w) = datasets.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(CliError::Config(format!("cell line '{}' is configured twice", w[0].0)));
        }

        let split = get("split").map(str::parse).transpose().map_err(CliError::Config)?.unwrap_or(SplitKind::Loco);
        let test_fraction =
            get("test_fraction").map(|v| parse("test_fraction", v)).transpose()?.unwrap_or(DEFAULT_TEST_FRACTION);
        let kfold = match get("kfold") {
            None | Some("none") => None,
            Some(v) => Some(parse("kfold", v)?),
        };
        let stratified = get("stratified").map(|v| parse_bool("stratified", v)).transpose()?.unwrap_or(true);
        let models = parse_models(get("model").unwrap_or("mhybrid"))?;
        let k: usize = get("k").map(|v| parse("k", v)).transpose()?.unwrap_or(5);
        if !(1..=MAX_K).contains(&k) {
            return Err(CliError::Config(format!("k must be in 1..={MAX_K}, got {k}")));
        }

        let mut spec = if desk { ModelSpec::desk(models[0]) } else { ModelSpec::paper(models[0]) };
        spec.kmer_dim = 1 << (2 * k);
        if let Some(v) = get("enhancer_len") {
            spec.enhancer_len = parse("enhancer_len", v)?;
        }
        if let Some(v) = get("promoter_len") {
            spec.promoter_len = parse("promoter_len", v)?;
        }
        for (key, slot) in [("conv1", &mut spec.conv1), ("conv2", &mut spec.conv2)] {
            if let Some(v) = get(key) {
                match parse_numbers(key, v)?.as_slice() {
                    &[filters, kernel, stride] => *slot = ConvSpec { filters, kernel, stride },
                    _ => return Err(CliError::Config(format!("{key} wants filters,kernel,stride"))),
                }
            }
        }
        if let Some(v) = get("pool") {
            match parse_numbers("pool", v)?.as_slice() {
                &[size, stride] => spec.pool = PoolSpec { size, stride },
                _ => return Err(CliError::Config("pool wants size,stride".into())),
            }
        }
        if let Some(v) = get("dropout") {
            spec.dropout_rate = parse("dropout", v)?;
        }
        spec.validate().map_err(|e| CliError::Config(e.to_string()))?;

        let mut train = TrainConfig { seed, ..TrainConfig::default() };
        if desk {
            train.epochs = DESK_MAX_EPOCHS;
            train.batch_size = DESK_BATCH_SIZE;
        }
        if let Some(v) = get("epochs") {
            train.epochs = parse("epochs", v)?;
        }
        if let Some(v) = get("batch_size") {
            train.batch_size = parse("batch_size", v)?;
        }
        for (key, slot) in [
            ("learning_rate", &mut train.learning_rate),
            ("beta1", &mut train.beta1),
            ("beta2", &mut train.beta2),
            ("epsilon", &mut train.epsilon),
        ] {
            if let Some(v) = get(key) {
                *slot = parse(key, v)?;
            }
        }
        train.pos_weight = match get("pos_weight") {
            None | Some("none") => None,
            Some(v) => Some(parse("pos_weight", v)?),
        };
        if let Some(v) = get("precision") {
            train.precision = v.parse::<Precision>().map_err(CliError::Config)?;
        }
        let mut record_cap = match get("record_cap") {
            None | Some("none") => None,
            Some(v) => Some(parse::<usize>("record_cap", v)?),
        };
        if desk {
            train.epochs = train.epochs.min(DESK_MAX_EPOCHS);
            record_cap = Some(record_cap.map_or(DESK_MAX_RECORDS, |c| c.min(DESK_MAX_RECORDS)));
        }
        train.validate().map_err(|e| CliError::Config(e.to_string()))?;

        let mut synth = SyntheticConfig { seed, ..SyntheticConfig::default() };
        let sget = |k: &str| get(&format!("synth.{k}"));
        if let Some(v) = sget("cell_line") {
            synth.cell_line = v.to_string();
        }
        for (key, slot) in [
            ("chromosomes", &mut synth.n_chromosomes),
            ("pairs", &mut synth.pairs_per_chromosome),
            ("enhancer_len", &mut synth.enhancer_len),
            ("promoter_len", &mut synth.promoter_len),
            ("motif_length", &mut synth.motif_length),
            ("motif_copies", &mut synth.motif_copies),
        ] {
            if let Some(v) = sget(key) {
                *slot = parse(key, v)?;
            }
        }
        for (key, slot) in [
            ("positive_fraction", &mut synth.positive_fraction),
            ("duplicates", &mut synth.near_duplicate_fraction),
            ("mutation_rate", &mut synth.mutation_rate),
            ("composition_bias", &mut synth.composition_bias),
        ] {
            if let Some(v) = sget(key) {
                *slot = parse(key, v)?;
            }
        }
        if let Some(v) = sget("mode") {
            synth.motif_mode = v.parse::<MotifMode>().map_err(CliError::Config)?;
        }

        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(CliError::Config(format!("test_fraction must be in (0,1), got {test_fraction}")));
        }
        if kfold.is_some_and(|k| k < 2) {
            return Err(CliError::Config("kfold must be at least 2".into()));
        }

        Ok(ExperimentConfig {
            profile,
            seed,
            out,
            datasets,
            columns: get("columns").unwrap_or("").to_string(),
            split,
            test_fraction,
            kfold,
            stratified,
            models,
            k,
            spec,
            train,
            record_cap,
            synth,
        })
    }

    /// Model spec for one architecture.
    pub fn spec_for(&self, arch: Arch) -> ModelSpec {
        ModelSpec { arch, ..self.spec.clone() }
    }

    /// Checks that every configured dataset file exists.
    pub fn check_datasets(&self, at_least: usize) -> Result<(), CliError> {
        if self.datasets.len() < at_least {
            return Err(CliError::Config(format!(
                "need at least {at_least} dataset(s), {} configured",
                self.datasets.len()
            )));
        }
        for (cell, path) in &self.datasets {
            if !path.is_file() {
                return Err(CliError::Config(format!("dataset for {cell} not found: {}", path.display())));
            }
        }
        Ok(())
    }

    fn settings(&self, with_out: bool) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        let opt = |v: Option<usize>| v.map_or("none".to_string(), |x| x.to_string());
        put("profile", self.profile.name().into());
        put("seed", self.seed.to_string());
        if with_out {
            put("out", self.out.display().to_string());
        }
        for (cell, path) in &self.datasets {
            put(&format!("dataset.{cell}"), path.display().to_string());
        }
        put("columns", self.columns.clone());
        put("split", self.split.to_string().to_ascii_lowercase());
        put("test_fraction", format!("{:?}", self.test_fraction));
        put("kfold", opt(self.kfold));
        put("stratified", self.stratified.to_string());
        put("model", self.models.iter().map(|a| a.tag()).collect::<Vec<_>>().join(","));
        put("k", self.k.to_string());
        let sp = &self.spec;
        put("enhancer_len", sp.enhancer_len.to_string());
        put("promoter_len", sp.promoter_len.to_string());
        put("conv1", format!("{},{},{}", sp.conv1.filters, sp.conv1.kernel, sp.conv1.stride));
        put("conv2", format!("{},{},{}", sp.conv2.filters, sp.conv2.kernel, sp.conv2.stride));
        put("pool", format!("{},{}", sp.pool.size, sp.pool.stride));
        put("dropout", format!("{:?}", sp.dropout_rate));
        let t = &self.train;
        put("epochs", t.epochs.to_string());
        put("batch_size", t.batch_size.to_string());
        put("learning_rate", format!("{:?}", t.learning_rate));
        put("beta1", format!("{:?}", t.beta1));
        put("beta2", format!("{:?}", t.beta2));
        put("epsilon", format!("{:?}", t.epsilon));
        put("pos_weight", t.pos_weight.map_or("none".into(), |w| format!("{w:?}")));
        put("precision", t.precision.to_string());
        put("record_cap", opt(self.record_cap));
        let y = &self.synth;
        put("synth.cell_line", y.cell_line.clone());
        put("synth.chromosomes", y.n_chromosomes.to_string());
        put("synth.pairs", y.pairs_per_chromosome.to_string());
        put("synth.positive_fraction", format!("{:?}", y.positive_fraction));
        put("synth.enhancer_len", y.enhancer_len.to_string());
        put("synth.promoter_len", y.promoter_len.to_string());
        put(
            "synth.mode",
            match y.motif_mode {
                MotifMode::Global => "global".into(),
                MotifMode::ChromosomeLocal => "local".into(),
            },
        );
        put("synth.motif_length", y.motif_length.to_string());
        put("synth.motif_copies", y.motif_copies.to_string());
        put("synth.duplicates", format!("{:?}", y.near_duplicate_fraction));
        put("synth.mutation_rate", format!("{:?}", y.mutation_rate));
        put("synth.composition_bias", format!("{:?}", y.composition_bias));
        s
    }

    /// Canonical text; reading it back gives the same config.
    pub fn to_text(&self) -> String {
        self.settings(true)
    }

    /// First 16 hex digits of the SHA-256 of the canonical settings, output
    /// directory excluded so a moved run keeps its hash.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.settings(false).as_bytes());
        crate::dataio::hex16(&digest)
    }
}
