//! Experiment configuration files: TOML with dotted-key overrides.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use synthgrad::analysis::ProbeConfig;
use synthgrad::data::{Dataset, Labeler};
use synthgrad::network::{Activation, Architecture, BlockOrder, LossKind};
use synthgrad::sg::{MethodKind, SgKind};
use synthgrad::theory::CriticalPointConfig;
use synthgrad::trainer::{FeedbackInit, NetworkSpec, Placement, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Train every variant for every seed, then run the enabled analyses.
    Train,
    /// Final-loss gaps between SG and backprop over seeded datasets.
    Table,
    /// Loss surfaces on a 2-D grid at evenly spaced snapshots.
    LossSurface,
    Theorem1,
    CriticalPoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub experiment: ExperimentKind,
    /// Empty means `[train.seed]`.
    #[serde(default)]
    pub seeds: Vec<u64>,
    /// Not recorded in a run's `config.json`, so reruns elsewhere match.
    #[serde(default = "default_output", skip_serializing)]
    pub output: PathBuf,
    #[serde(default)]
    pub dataset: Option<DatasetConfig>,
    #[serde(default)]
    pub arch: Option<ArchConfig>,
    #[serde(default, rename = "variant")]
    pub variants: Vec<Variant>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub table: Option<TableConfig>,
    #[serde(default)]
    pub surface: Option<SurfaceConfig>,
    #[serde(default)]
    pub theorem1: Option<Theorem1Config>,
    #[serde(default)]
    pub critical_point: Option<CriticalPointConfig>,
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetConfig {
    Linear {
        k: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
    Noisy {
        k: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
    Random {
        k: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
    Grid {
        #[serde(default = "default_resolution")]
        resolution: usize,
        #[serde(default = "default_range")]
        range: (f64, f64),
        labeler: Labeler,
        #[serde(default)]
        seed: Option<u64>,
    },
    Mnist {
        /// Falls back to `$SYNTHGRAD_MNIST_DIR`, then `data/mnist`.
        #[serde(default)]
        dir: Option<PathBuf>,
        #[serde(default)]
        subset: Option<usize>,
        #[serde(default)]
        subset_seed: u64,
    },
    Csv {
        path: PathBuf,
        /// Defaults to one more than the largest label.
        #[serde(default)]
        classes: Option<usize>,
    },
}

fn default_resolution() -> usize {
    20
}

fn default_range() -> (f64, f64) {
    (-1.0, 1.0)
}

/// Hidden layers as an explicit list or as `width` × `depth`; input and
/// output sizes come from the dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    #[serde(default)]
    pub hidden: Option<Vec<usize>>,
    #[serde(default)]
    pub width: Option<usize>,
    #[serde(default)]
    pub depth: Option<usize>,
    #[serde(default)]
    pub activation: Option<Activation>,
    #[serde(default)]
    pub batchnorm: bool,
    #[serde(default)]
    pub order: BlockOrder,
    pub loss: LossKind,
}

impl ArchConfig {
    pub fn hidden_dims(&self) -> Result<Vec<usize>> {
        match (&self.hidden, self.width, self.depth) {
            (Some(h), None, None) => Ok(h.clone()),
            (None, Some(w), Some(d)) => Ok(vec![w; d]),
            (None, None, Some(0)) | (None, None, None) => Ok(Vec::new()),
            _ => bail!("arch: give either `hidden` or both `width` and `depth`"),
        }
    }

    pub fn build(&self, input: usize, classes: usize) -> Result<Architecture> {
        let mut layer_dims = vec![input];
        layer_dims.extend(self.hidden_dims()?);
        layer_dims.push(classes);
        let arch = Architecture {
            layer_dims,
            activation: self.activation,
            batchnorm: self.batchnorm,
            order: self.order,
            loss: self.loss,
        };
        arch.validate()?;
        Ok(arch)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub label: String,
    #[serde(default)]
    pub placement: Placement,
    #[serde(default = "default_sg_kind")]
    pub sg_kind: SgKind,
    #[serde(default = "default_method")]
    pub method: MethodKind,
    #[serde(default)]
    pub feedback: FeedbackInit,
}

fn default_sg_kind() -> SgKind {
    SgKind::Linear
}

fn default_method() -> MethodKind {
    MethodKind::Backprop
}

impl Variant {
    pub fn spec(&self, arch: Architecture) -> NetworkSpec {
        NetworkSpec {
            arch,
            placement: self.placement,
            sg_kind: self.sg_kind,
            method: self.method,
            feedback: self.feedback,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub rdm: bool,
    pub probes: bool,
    pub norms: bool,
    /// Label-sorted sample size for RDMs.
    pub sample: usize,
    pub sample_seed: u64,
    pub probe: ProbeConfig,
    /// Also regress each hidden layer onto the network input.
    pub probe_inputs: bool,
    /// Variant whose final loss the others are compared against.
    pub baseline: Option<String>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            rdm: false,
            probes: false,
            norms: false,
            sample: 400,
            sample_seed: 0,
            probe: ProbeConfig::default(),
            probe_inputs: false,
            baseline: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TableModel {
    ShallowMse,
    DeepMse,
    ShallowLog,
    DeepLog,
}

impl TableModel {
    pub fn label(self) -> &'static str {
        match self {
            TableModel::ShallowMse => "shallow MSE",
            TableModel::DeepMse => "deep MSE",
            TableModel::ShallowLog => "shallow log loss",
            TableModel::DeepLog => "deep log loss",
        }
    }

    pub fn is_deep(self) -> bool {
        matches!(self, TableModel::DeepMse | TableModel::DeepLog)
    }

    pub fn loss(self) -> LossKind {
        match self {
            TableModel::ShallowMse | TableModel::DeepMse => LossKind::Mse,
            TableModel::ShallowLog | TableModel::DeepLog => LossKind::LogLoss,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TableConfig {
    /// Names like `linear2`, `noisy100`, `random2`.
    pub datasets: Vec<String>,
    pub models: Vec<TableModel>,
    /// Datasets per cell; seeds run `0..seeds`.
    pub seeds: u64,
    pub deep_width: usize,
    pub deep_depth: usize,
    pub sg_kind: SgKind,
    pub shallow_iterations: usize,
    pub deep_iterations: usize,
    pub batch_size: usize,
    /// Datasets with at most this many rows train full-batch (0 disables).
    pub full_batch_max: usize,
}

impl Default for TableConfig {
    fn default() -> Self {
        TableConfig {
            datasets: ["linear2", "noisy2", "random2", "linear100", "noisy100", "random100"]
                .map(String::from)
                .to_vec(),
            models: vec![TableModel::ShallowMse, TableModel::DeepMse, TableModel::ShallowLog, TableModel::DeepLog],
            seeds: 10,
            deep_width: 20,
            deep_depth: 10,
            sg_kind: SgKind::Linear,
            shallow_iterations: 200_000,
            deep_iterations: 100_000,
            batch_size: 50,
            full_batch_max: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurfaceConfig {
    /// Snapshots at `i · iterations / intervals`, `i = 0..=intervals`.
    pub intervals: usize,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        SurfaceConfig { intervals: 20 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Theorem1Config {
    pub samples: usize,
    pub dim: usize,
    /// Problems run with seeds `seed..seed + problems`.
    pub problems: u64,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for Theorem1Config {
    fn default() -> Self {
        Theorem1Config {
            samples: 20,
            dim: 5,
            problems: 1,
            tol: 1e-6,
            max_iters: 2_000_000,
        }
    }
}

/// Parses a `key.path=value` override; the value is read as a TOML value
/// and falls back to a bare string.
pub fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| anyhow!("override `{assignment}` is not of the form key=value"))?;
    let value = parse_value(raw.trim());
    let keys: Vec<&str> = path.trim().split('.').collect();
    let (last, parents) = keys.split_last().expect("split yields at least one key");
    let mut table = root;
    for key in parents {
        let entry = table
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| anyhow!("override `{path}`: `{key}` is not a table"))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

pub fn load(path: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut table: toml::Table = text.parse().with_context(|| format!("parsing {}", path.display()))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let config: ExperimentConfig = toml::Value::Table(table)
        .try_into()
        .with_context(|| format!("invalid config {}", path.display()))?;
    config.validate()?;
    Ok(config)
}

impl ExperimentConfig {
    pub fn seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            vec![self.train.seed]
        } else {
            self.seeds.clone()
        }
    }

    /// Checks everything that can be checked without loading data.
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            bail!("name: must be a non-empty file-name-safe string");
        }
        let need = |present: bool, what: &str| {
            if present {
                Ok(())
            } else {
                Err(anyhow!("{what}: required for experiment {:?}", self.experiment))
            }
        };
        match self.experiment {
            ExperimentKind::Train | ExperimentKind::LossSurface => {
                need(self.dataset.is_some(), "dataset")?;
                need(self.arch.is_some(), "arch")?;
                need(!self.variants.is_empty(), "variant")?;
                self.train.validate().context("train")?;
                let arch = self.arch.as_ref().expect("checked above");
                // Placeholder sizes; the real ones come from the data.
                let probe = arch.build(2, 2).context("arch")?;
                let mut labels = std::collections::BTreeSet::new();
                for v in &self.variants {
                    if !labels.insert(v.label.as_str()) {
                        bail!("variant: duplicate label `{}`", v.label);
                    }
                    v.spec(probe.clone())
                        .validate()
                        .with_context(|| format!("variant `{}`", v.label))?;
                }
                if let Some(b) = &self.analysis.baseline {
                    if !labels.contains(b.as_str()) {
                        bail!("analysis.baseline: no variant labelled `{b}`");
                    }
                }
                if self.experiment == ExperimentKind::LossSurface {
                    if !matches!(self.dataset, Some(DatasetConfig::Grid { .. })) {
                        bail!("dataset: loss surfaces need a grid dataset");
                    }
                    if self.surface.as_ref().is_some_and(|s| s.intervals == 0) {
                        bail!("surface.intervals: must be positive");
                    }
                }
            }
            ExperimentKind::Table => {
                let t = self.table.clone().unwrap_or_default();
                self.train.validate().context("train")?;
                for d in &t.datasets {
                    parse_table_dataset(d).with_context(|| format!("table.datasets: `{d}`"))?;
                }
                if t.seeds == 0 {
                    bail!("table.seeds: must be positive");
                }
            }
            ExperimentKind::Theorem1 => {
                let t = self.theorem1.clone().unwrap_or_default();
                if t.samples < t.dim + 2 || t.dim == 0 {
                    bail!("theorem1: need dim ≥ 1 and samples ≥ dim + 2");
                }
            }
            ExperimentKind::CriticalPoint => {}
        }
        Ok(())
    }

    /// Stable hash of everything that affects results (not the output
    /// directory or the seed list).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.seeds.clear();
        c.train.seed = 0;
        let json = serde_json::to_vec(&c).expect("config serialises");
        let digest = Sha256::digest(&json);
        digest[..6].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn run_dir(&self, seed: u64) -> PathBuf {
        self.output.join(format!("{}-{}-s{seed}", self.name, self.hash()))
    }
}

/// `linear2` → (Linear, 2).
pub fn parse_table_dataset(name: &str) -> Result<(synthgrad::data::DatasetKind, usize)> {
    use synthgrad::data::DatasetKind;
    let split = name.find(|c: char| c.is_ascii_digit()).ok_or_else(|| anyhow!("missing dimension"))?;
    let (kind, k) = name.split_at(split);
    let kind = match kind {
        "linear" => DatasetKind::Linear,
        "noisy" => DatasetKind::Noisy,
        "random" => DatasetKind::Random,
        other => bail!("unknown dataset family `{other}`"),
    };
    Ok((kind, k.parse()?))
}

pub const MNIST_ENV: &str = "SYNTHGRAD_MNIST_DIR";
pub const MNIST_IMAGES: &str = "train-images-idx3-ubyte";
pub const MNIST_LABELS: &str = "train-labels-idx1-ubyte";

/// Finds the training IDX pair, accepting `.gz` variants.
pub fn locate_mnist(dir: Option<&Path>) -> Result<(PathBuf, PathBuf)> {
    let dir = match dir {
        Some(d) => d.to_path_buf(),
        None => std::env::var_os(MNIST_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("data/mnist")),
    };
    let find = |stem: &str| {
        [stem.to_string(), format!("{stem}.gz")]
            .into_iter()
            .map(|n| dir.join(n))
            .find(|p| p.exists())
    };
    match (find(MNIST_IMAGES), find(MNIST_LABELS)) {
        (Some(i), Some(l)) => Ok((i, l)),
        _ => bail!(
            "MNIST training files not found in {} (expected {MNIST_IMAGES}[.gz] and {MNIST_LABELS}[.gz]); \
             set {MNIST_ENV}, pass dataset.dir, or download them with `synthgrad fetch-mnist --base-url <URL> --out {}`",
            dir.display(),
            dir.display()
        ),
    }
}

pub fn load_dataset(cfg: &DatasetConfig, seed: u64) -> Result<Dataset> {
    use synthgrad::data::{generate, grid_2d, load_mnist, DatasetKind};
    Ok(match cfg {
        DatasetConfig::Linear { k, seed: s } => generate(DatasetKind::Linear, *k, s.unwrap_or(seed))?,
        DatasetConfig::Noisy { k, seed: s } => generate(DatasetKind::Noisy, *k, s.unwrap_or(seed))?,
        DatasetConfig::Random { k, seed: s } => generate(DatasetKind::Random, *k, s.unwrap_or(seed))?,
        DatasetConfig::Grid {
            resolution,
            range,
            labeler,
            seed: s,
        } => grid_2d(*resolution, *range, *labeler, s.unwrap_or(seed))?.data,
        DatasetConfig::Mnist { dir, subset, subset_seed } => {
            let (images, labels) = locate_mnist(dir.as_deref())?;
            let full = load_mnist(&images, &labels)?;
            match subset {
                Some(m) if *m < full.len() => full.subset(*m, *subset_seed)?,
                _ => full,
            }
        }
        DatasetConfig::Csv { path, classes } => Dataset::read_csv(path, *classes)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_reach_nested_keys() {
        let mut t: toml::Table = "[train]\niterations = 5".parse().unwrap();
        apply_override(&mut t, "train.iterations=7").unwrap();
        apply_override(&mut t, "train.lr_main=1e-3").unwrap();
        apply_override(&mut t, "name=hello").unwrap();
        assert_eq!(t["train"]["iterations"].as_integer(), Some(7));
        assert_eq!(t["train"]["lr_main"].as_float(), Some(1e-3));
        assert_eq!(t["name"].as_str(), Some("hello"));
        assert!(apply_override(&mut t, "name.inner=1").is_err());
        assert!(apply_override(&mut t, "novalue").is_err());
    }

    #[test]
    fn table_dataset_names() {
        use synthgrad::data::DatasetKind;
        assert_eq!(parse_table_dataset("noisy100").unwrap(), (DatasetKind::Noisy, 100));
        assert!(parse_table_dataset("blobs2").is_err());
        assert!(parse_table_dataset("linear").is_err());
    }

    #[test]
    fn hash_ignores_seed_and_output() {
        let text = r#"
            name = "t"
            experiment = "critical-point"
        "#;
        let a: ExperimentConfig = toml::from_str(text).unwrap();
        let mut b = a.clone();
        b.output = "elsewhere".into();
        b.seeds = vec![3];
        assert_eq!(a.hash(), b.hash());
        b.critical_point = Some(CriticalPointConfig { a0: 2.0, ..Default::default() });
        assert_ne!(a.hash(), b.hash());
    }
}
