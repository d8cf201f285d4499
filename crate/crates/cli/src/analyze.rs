//! Post-training analyses on a trained network: weight-norm profiles,
//! RDMs, linear probes and loss surfaces.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::Serialize;
use synthgrad::analysis::{
    compute_rdm, linear_probe_classifier, linear_probe_regressor, profile_plateau, rdm_distance_profile,
    surface_at, weight_norm_profile, write_surfaces_csv, Rdm,
};
use synthgrad::checkpoint::Checkpoint;
use synthgrad::data::{grid_2d, Dataset};
use synthgrad::linalg::spearman;
use synthgrad::network::{Mode, Network};
use synthgrad::trainer::{NetworkSpec, TrainConfig, Trainer, CHECKPOINT_FILE};
use synthgrad::Matrix;

use crate::config::{self, AnalysisConfig, DatasetConfig, ExperimentConfig};
use crate::Failure;

pub const CONFIG_FILE: &str = "config.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AnalysisKind {
    Rdm,
    Probes,
    Norms,
    LossSurface,
}

#[derive(Args)]
pub struct AnalyzeArgs {
    #[arg(value_enum)]
    pub kind: AnalysisKind,
    /// A variant directory holding `checkpoint.bin`, inside a run
    /// directory holding `config.json`.
    #[arg(long)]
    pub run: PathBuf,
    /// Output directory (default: the variant directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct AnalysisSummary {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norm_profile: Option<Vec<f64>>,
    /// Spearman correlation of the norm profile with layer index.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norm_depth_correlation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rdm_profile: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rdm_plateau: Option<bool>,
    /// Mean within- and between-class dissimilarity of the last hidden layer.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_rdm_within: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_rdm_between: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe_accuracy: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe_input_mse: Option<Vec<f64>>,
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Columns `layer,norm`; layers are the hidden dense maps, 1-based.
pub fn norms(net: &Network, dir: &Path) -> Result<(Vec<f64>, Option<f64>)> {
    let profile = weight_norm_profile(net);
    let mut text = String::from("layer,norm\n");
    for (l, v) in profile.iter().enumerate() {
        let _ = writeln!(text, "{},{v}", l + 1);
    }
    write(&dir.join("norms.csv"), &text)?;
    let depth: Vec<f64> = (1..=profile.len()).map(|l| l as f64).collect();
    Ok((profile.clone(), spearman(&profile, &depth).ok()))
}

/// Hidden activations `h^1 .. h^{N-1}` of a label-sorted sample.
fn hidden_layers(net: &Network, x: &Matrix) -> Result<Vec<Matrix>> {
    let mut pass = net.forward(x, Mode::Eval)?;
    let n = pass.activations.len();
    Ok(pass.activations.drain(1..n - 1).collect())
}

/// Writes `rdm/layer<l>.csv` (a `label` column then one column per sample)
/// and `rdm_profile.csv`.
pub fn rdms(net: &Network, data: &Dataset, cfg: &AnalysisConfig, dir: &Path) -> Result<Vec<Rdm>> {
    let sample = data.sample_sorted(cfg.sample.min(data.len()), cfg.sample_seed)?;
    let layers = hidden_layers(net, &sample.x)?;
    if layers.is_empty() {
        bail!("RDMs need at least one hidden layer");
    }
    let rdm_dir = dir.join("rdm");
    std::fs::create_dir_all(&rdm_dir)?;
    let mut out = Vec::with_capacity(layers.len());
    for (l, h) in layers.iter().enumerate() {
        let rdm = compute_rdm(h, &sample.labels)?;
        let n = rdm.labels.len();
        let mut text = String::from("label");
        for j in 0..n {
            let _ = write!(text, ",s{j}");
        }
        text.push('\n');
        for i in 0..n {
            let _ = write!(text, "{}", rdm.labels[i]);
            for j in 0..n {
                let _ = write!(text, ",{:.8}", rdm.matrix.get(i, j));
            }
            text.push('\n');
        }
        write(&rdm_dir.join(format!("layer{}.csv", l + 1)), &text)?;
        out.push(rdm);
    }
    let profile = rdm_distance_profile(&out)?;
    let mut text = String::from("layer,distance,mean_within,mean_between\n");
    for (l, (d, r)) in profile.iter().zip(&out).enumerate() {
        let _ = writeln!(text, "{},{d},{},{}", l + 1, r.mean_within(), r.mean_between());
    }
    write(&dir.join("rdm_profile.csv"), &text)?;
    Ok(out)
}

/// Streams the data through one block at a time so only a single layer's
/// activations are held. Columns `layer,accuracy,degenerate[,input_mse]`.
pub fn probes(net: &Network, data: &Dataset, cfg: &AnalysisConfig, dir: &Path) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    let mut h = data.x.clone();
    let mut acc = Vec::new();
    let mut mse = Vec::new();
    let mut text = String::from(if cfg.probe_inputs {
        "layer,accuracy,degenerate,input_mse\n"
    } else {
        "layer,accuracy,degenerate\n"
    });
    for (l, block) in net.blocks[..net.blocks.len() - 1].iter().enumerate() {
        h = block.forward(&h, Mode::Eval)?.0;
        let r = linear_probe_classifier(&h, &data.labels, data.classes(), &cfg.probe)?;
        let _ = write!(text, "{},{},{}", l + 1, r.value, r.degenerate);
        acc.push(r.value);
        if cfg.probe_inputs {
            let m = linear_probe_regressor(&h, &data.x, &cfg.probe)?.value;
            let _ = write!(text, ",{m}");
            mse.push(m);
        }
        text.push('\n');
    }
    write(&dir.join("probes.csv"), &text)?;
    Ok((acc, cfg.probe_inputs.then_some(mse)))
}

/// Runs every analysis enabled in `cfg`.
pub fn run_enabled(trainer: &Trainer, data: &Dataset, cfg: &AnalysisConfig, dir: &Path) -> Result<AnalysisSummary> {
    let net = &trainer.net;
    let mut s = AnalysisSummary::default();
    let hidden = net.depth() > 1;
    if cfg.norms && hidden {
        let (p, rho) = norms(net, dir)?;
        s.norm_profile = Some(p);
        s.norm_depth_correlation = rho;
    }
    if cfg.rdm && hidden {
        let r = rdms(net, data, cfg, dir)?;
        let profile = rdm_distance_profile(&r)?;
        s.rdm_plateau = Some(profile_plateau(&profile));
        s.rdm_profile = Some(profile);
        let last = r.last().expect("at least one hidden layer");
        s.final_rdm_within = Some(last.mean_within());
        s.final_rdm_between = Some(last.mean_between());
    }
    if cfg.probes && hidden {
        let (acc, mse) = probes(net, data, cfg, dir)?;
        s.probe_accuracy = Some(acc);
        s.probe_input_mse = mse;
    }
    Ok(s)
}

/// Rebuilds a trainer from a variant directory written by `train`.
pub fn load_variant(run: &Path) -> Result<(ExperimentConfig, Trainer)> {
    let ck_path = run.join(CHECKPOINT_FILE);
    let ck = Checkpoint::load(&ck_path)?;
    let cfg_path = run
        .parent()
        .map(|p| p.join(CONFIG_FILE))
        .filter(|p| p.exists())
        .with_context(|| format!("no {CONFIG_FILE} next to {}", run.display()))?;
    let cfg: ExperimentConfig = serde_json::from_str(&std::fs::read_to_string(&cfg_path)?)
        .map_err(|e| Failure::Config(format!("{}: {e}", cfg_path.display())))?;
    let meta: serde_json::Value = serde_json::from_str(&ck.meta)?;
    let spec: NetworkSpec = serde_json::from_value(meta["spec"].clone())?;
    let train: TrainConfig = serde_json::from_value(meta["config"].clone())?;
    let trainer = Trainer::from_checkpoint(spec, train, &ck)?;
    Ok((cfg, trainer))
}

pub fn analyze_cmd(args: &AnalyzeArgs) -> Result<()> {
    let (cfg, trainer) = load_variant(&args.run)?;
    let out = args.out.clone().unwrap_or_else(|| args.run.clone());
    std::fs::create_dir_all(&out)?;
    let dataset = cfg.dataset.as_ref().context("config has no dataset")?;
    let seed = trainer.config().seed;
    let net = &trainer.net;
    if net.depth() < 2 && args.kind != AnalysisKind::LossSurface {
        return Err(Failure::Config("the network has no hidden layers to analyse".into()).into());
    }
    match args.kind {
        AnalysisKind::LossSurface => {
            let DatasetConfig::Grid { resolution, range, labeler, seed: s } = dataset else {
                return Err(Failure::Config("loss surfaces need a grid dataset".into()).into());
            };
            let grid = grid_2d(*resolution, *range, *labeler, s.unwrap_or(seed))?;
            let surface = surface_at(&trainer, &grid)?;
            write_surfaces_csv(&out.join("surface.csv"), std::slice::from_ref(&surface))?;
            for ((k, _), rho) in surface.reconstructed.iter().zip(&surface.spearman) {
                println!("boundary {k}: spearman {}", rho.map_or("undefined".into(), |r| format!("{r:.4}")));
            }
        }
        kind => {
            let data = config::load_dataset(dataset, seed)?;
            check_shape(net, &data)?;
            match kind {
                AnalysisKind::Norms => {
                    let (p, rho) = norms(net, &out)?;
                    println!("norm profile {p:.4?}; depth correlation {rho:?}");
                }
                AnalysisKind::Rdm => {
                    let r = rdms(net, &data, &cfg.analysis, &out)?;
                    let profile = rdm_distance_profile(&r)?;
                    println!("{} RDMs; distance profile {profile:.3?}; plateau {}", r.len(), profile_plateau(&profile));
                }
                AnalysisKind::Probes => {
                    let (acc, _) = probes(net, &data, &cfg.analysis, &out)?;
                    for (l, a) in acc.iter().enumerate() {
                        println!("layer {}: probe accuracy {:.4}", l + 1, a);
                    }
                }
                AnalysisKind::LossSurface => unreachable!(),
            }
        }
    }
    Ok(())
}

fn check_shape(net: &Network, data: &Dataset) -> Result<()> {
    let dims = &net.arch.layer_dims;
    if dims[0] != data.dim() || *dims.last().expect("non-empty dims") != data.classes() {
        bail!(
            "checkpoint network {:?} does not fit data with {} inputs and {} classes",
            dims,
            data.dim(),
            data.classes()
        );
    }
    Ok(())
}
