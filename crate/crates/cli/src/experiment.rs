//! Config-driven experiment runner. Every run writes under
//! `<output>/<name>-<hash>-s<seed>/`.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use synthgrad::analysis::loss_surface_experiment;
use synthgrad::checkpoint::Checkpoint;
use synthgrad::data::{generate, grid_2d, Dataset};
use synthgrad::network::Architecture;
use synthgrad::trainer::{run_experiment, NetworkSpec, TrainConfig, Trainer, CHECKPOINT_FILE};

use crate::analyze::{self, AnalysisSummary, CONFIG_FILE};
use crate::config::{self, parse_table_dataset, DatasetConfig, ExperimentConfig, ExperimentKind, TableModel};
use crate::theory;
use crate::Failure;

pub struct RunOptions {
    pub stop_after: Option<usize>,
    pub jobs: usize,
}

pub fn run(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(opts.jobs.max(1)).build()?;
    pool.install(|| match cfg.experiment {
        ExperimentKind::Train => cfg.seeds().into_iter().try_for_each(|s| train_seed(cfg, s, opts)),
        ExperimentKind::LossSurface => cfg.seeds().into_iter().try_for_each(|s| surface_seed(cfg, s)),
        ExperimentKind::Table => table(cfg),
        ExperimentKind::Theorem1 => theorem1(cfg),
        ExperimentKind::CriticalPoint => critical_point(cfg),
    })
}

/// Creates the run directory and records the resolved config for `seed`.
fn prepare(cfg: &ExperimentConfig, seed: u64) -> Result<std::path::PathBuf> {
    let dir = cfg.run_dir(seed);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut resolved = cfg.clone();
    resolved.seeds = vec![seed];
    resolved.train.seed = seed;
    std::fs::write(dir.join(CONFIG_FILE), serde_json::to_string_pretty(&resolved)? + "\n")?;
    Ok(dir)
}

fn write_summary<T: Serialize>(dir: &Path, summary: &T, markdown: &str) -> Result<()> {
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(summary)? + "\n")?;
    std::fs::write(dir.join("summary.md"), markdown)?;
    print!("{markdown}");
    Ok(())
}

fn load_data(cfg: &ExperimentConfig, seed: u64) -> Result<(Dataset, Architecture)> {
    let dataset = cfg.dataset.as_ref().expect("validated");
    let data = config::load_dataset(dataset, seed)?;
    let arch = cfg
        .arch
        .as_ref()
        .expect("validated")
        .build(data.dim(), data.classes())
        .map_err(|e| Failure::Config(format!("arch: {e:#}")))?;
    Ok((data, arch))
}

#[derive(Clone, Debug, Serialize)]
pub struct VariantSummary {
    pub label: String,
    pub iterations: usize,
    pub finished: bool,
    pub converged_at: Option<usize>,
    pub final_train_loss: f64,
    pub final_train_accuracy: f64,
    /// `final_train_loss` minus the baseline variant's.
    pub loss_gap: Option<f64>,
    pub analysis: AnalysisSummary,
}

#[derive(Serialize)]
struct SeedSummary<'a> {
    name: &'a str,
    seed: u64,
    variants: Vec<VariantSummary>,
}

fn train_seed(cfg: &ExperimentConfig, seed: u64, opts: &RunOptions) -> Result<()> {
    let (data, arch) = load_data(cfg, seed)?;
    let dir = prepare(cfg, seed)?;
    let train = TrainConfig { seed, ..cfg.train.clone() };
    let mut variants = cfg
        .variants
        .par_iter()
        .map(|v| -> Result<VariantSummary> {
            let vdir = dir.join(&v.label);
            let spec = v.spec(arch.clone());
            let run = run_experiment(&spec, &train, &data, None, Some(&vdir), opts.stop_after)
                .with_context(|| format!("variant `{}` (seed {seed})", v.label))?;
            let ck = Checkpoint::load(&vdir.join(CHECKPOINT_FILE))?;
            let trainer = Trainer::from_checkpoint(spec, train.clone(), &ck)?;
            let finished = run.converged_at.is_some() || trainer.iteration() >= train.iterations;
            let analysis = if finished {
                analyze::run_enabled(&trainer, &data, &cfg.analysis, &vdir)
                    .with_context(|| format!("analysing variant `{}`", v.label))?
            } else {
                AnalysisSummary::default()
            };
            eprintln!("[seed {seed}] {}: iteration {}, train loss {:.6}", v.label, trainer.iteration(), run.final_loss());
            Ok(VariantSummary {
                label: v.label.clone(),
                iterations: trainer.iteration(),
                finished,
                converged_at: run.converged_at,
                final_train_loss: run.final_train.loss,
                final_train_accuracy: run.final_train.accuracy,
                loss_gap: None,
                analysis,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(b) = &cfg.analysis.baseline {
        let base = variants.iter().find(|v| &v.label == b).map(|v| v.final_train_loss);
        for v in &mut variants {
            v.loss_gap = base.map(|l| v.final_train_loss - l);
        }
    }
    let md = train_markdown(cfg, seed, &variants);
    write_summary(&dir, &SeedSummary { name: &cfg.name, seed, variants }, &md)
}

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map_or("–".into(), |x| format!("{x:.prec$}"))
}

fn train_markdown(cfg: &ExperimentConfig, seed: u64, variants: &[VariantSummary]) -> String {
    let mut s = format!("## {} (seed {seed})\n\n", cfg.name);
    s.push_str("| variant | iterations | train loss | train accuracy | gap vs baseline |\n|---|---|---|---|---|\n");
    for v in variants {
        let _ = writeln!(
            s,
            "| {} | {}{} | {:.6} | {:.4} | {} |",
            v.label,
            v.iterations,
            if v.finished { "" } else { " (paused)" },
            v.final_train_loss,
            v.final_train_accuracy,
            opt(v.loss_gap, 6)
        );
    }
    let analysed: Vec<&VariantSummary> = variants
        .iter()
        .filter(|v| v.analysis.norm_profile.is_some() || v.analysis.rdm_profile.is_some() || v.analysis.probe_accuracy.is_some())
        .collect();
    if !analysed.is_empty() {
        s.push_str("\n| variant | norm/depth ρ | RDM plateau | last-layer within / between | probe accuracy (first two layers) |\n|---|---|---|---|---|\n");
        for v in analysed {
            let a = &v.analysis;
            let probes = a.probe_accuracy.as_ref().map_or("–".into(), |p| {
                p.iter().take(2).map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ")
            });
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} / {} | {} |",
                v.label,
                opt(a.norm_depth_correlation, 3),
                a.rdm_plateau.map_or("–".into(), |p| p.to_string()),
                opt(a.final_rdm_within, 3),
                opt(a.final_rdm_between, 3),
                probes
            );
        }
    }
    s
}

#[derive(Clone, Debug, Serialize)]
pub struct SurfaceSummary {
    pub label: String,
    /// Per SG boundary: mean Spearman ρ over snapshots in the first and
    /// second half of training (undefined snapshots skipped).
    pub boundaries: Vec<(usize, Option<f64>, Option<f64>)>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn surface_seed(cfg: &ExperimentConfig, seed: u64) -> Result<()> {
    let dir = prepare(cfg, seed)?;
    let Some(DatasetConfig::Grid { resolution, range, labeler, seed: s }) = &cfg.dataset else {
        unreachable!("validated");
    };
    let grid = grid_2d(*resolution, *range, *labeler, s.unwrap_or(seed))?;
    let arch = cfg.arch.as_ref().expect("validated").build(2, grid.data.classes())?;
    let train = TrainConfig { seed, ..cfg.train.clone() };
    let intervals = cfg.surface.clone().unwrap_or_default().intervals;
    let mut snapshots: Vec<usize> = (0..=intervals).map(|i| i * train.iterations / intervals).collect();
    snapshots.dedup();
    let half = train.iterations / 2;
    let summaries = cfg
        .variants
        .par_iter()
        .map(|v| -> Result<SurfaceSummary> {
            let vdir = dir.join(&v.label);
            std::fs::create_dir_all(&vdir)?;
            let surfaces = loss_surface_experiment(&v.spec(arch.clone()), &train, &grid, &snapshots)?;
            synthgrad::analysis::write_surfaces_csv(&vdir.join("surfaces.csv"), &surfaces)?;
            let mut text = String::from("iteration,boundary,spearman\n");
            for s in &surfaces {
                for ((k, _), rho) in s.reconstructed.iter().zip(&s.spearman) {
                    let _ = writeln!(text, "{},{k},{}", s.iteration, rho.map_or(String::new(), |r| r.to_string()));
                }
            }
            std::fs::write(vdir.join("spearman.csv"), text)?;
            let boundaries = surfaces
                .first()
                .map(|s| s.reconstructed.iter().map(|(k, _)| *k).collect::<Vec<_>>())
                .unwrap_or_default();
            let per = |j: usize, early: bool| {
                let vals: Vec<f64> = surfaces
                    .iter()
                    .filter(|s| (s.iteration <= half) == early)
                    .filter_map(|s| s.spearman[j])
                    .collect();
                mean(&vals)
            };
            Ok(SurfaceSummary {
                label: v.label.clone(),
                boundaries: boundaries.iter().enumerate().map(|(j, &k)| (k, per(j, true), per(j, false))).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut md = format!("## {} (seed {seed})\n\n| variant | boundary | mean ρ, first half | mean ρ, second half |\n|---|---|---|---|\n", cfg.name);
    for s in &summaries {
        for (k, early, late) in &s.boundaries {
            let _ = writeln!(md, "| {} | {k} | {} | {} |", s.label, opt(*early, 3), opt(*late, 3));
        }
    }
    write_summary(&dir, &summaries, &md)
}

#[derive(Clone, Debug, Serialize)]
pub struct TableCell {
    pub model: TableModel,
    pub dataset: String,
    pub seed: u64,
    pub backprop_loss: f64,
    pub sg_loss: f64,
    pub gap: f64,
}

fn table(cfg: &ExperimentConfig) -> Result<()> {
    let t = cfg.table.clone().unwrap_or_default();
    let base = cfg.seeds()[0];
    let dir = prepare(cfg, base)?;
    let mut jobs = Vec::new();
    for &model in &t.models {
        for name in &t.datasets {
            for s in 0..t.seeds {
                jobs.push((model, name.clone(), base + s));
            }
        }
    }
    let cells = jobs
        .par_iter()
        .map(|(model, name, seed)| -> Result<TableCell> {
            let (kind, k) = parse_table_dataset(name)?;
            let data = generate(kind, k, *seed)?;
            let mut layer_dims = vec![data.dim()];
            if model.is_deep() {
                layer_dims.extend(std::iter::repeat(t.deep_width).take(t.deep_depth));
            }
            layer_dims.push(data.classes());
            let arch = Architecture {
                layer_dims,
                activation: None,
                batchnorm: false,
                order: Default::default(),
                loss: model.loss(),
            };
            let iterations = if model.is_deep() { t.deep_iterations } else { t.shallow_iterations };
            let train = TrainConfig {
                seed: *seed,
                iterations,
                batch_size: if data.len() <= t.full_batch_max { data.len() } else { t.batch_size },
                log_every: iterations,
                full_eval: false,
                ..cfg.train.clone()
            };
            let bp = run_experiment(&NetworkSpec::backprop(arch.clone()), &train, &data, None, None, None)?;
            let sg = run_experiment(&NetworkSpec::single_sg(arch, t.sg_kind, None), &train, &data, None, None, None)?;
            eprintln!("[table] {} {name} seed {seed}: gap {:.6}", model.label(), sg.final_loss() - bp.final_loss());
            Ok(TableCell {
                model: *model,
                dataset: name.clone(),
                seed: *seed,
                backprop_loss: bp.final_loss(),
                sg_loss: sg.final_loss(),
                gap: sg.final_loss() - bp.final_loss(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut csv = String::from("model,dataset,seed,backprop_loss,sg_loss,gap\n");
    for c in &cells {
        let _ = writeln!(csv, "{},{},{},{},{},{}", c.model.label(), c.dataset, c.seed, c.backprop_loss, c.sg_loss, c.gap);
    }
    std::fs::write(dir.join("table3.csv"), csv)?;
    write_summary(&dir, &cells, &table_markdown(&t.models, &t.datasets, &cells))
}

/// Rows are (dataset, depth) pairs with MSE and log-loss columns; each
/// entry is the mean gap over seeds, bold when above 0.01.
pub fn table_markdown(models: &[TableModel], datasets: &[String], cells: &[TableCell]) -> String {
    let entry = |m: TableModel, d: &str| {
        if !models.contains(&m) {
            return "–".to_string();
        }
        let gaps: Vec<f64> = cells.iter().filter(|c| c.model == m && c.dataset == d).map(|c| c.gap).collect();
        match mean(&gaps) {
            Some(g) if g > 0.01 => format!("**{g:.5}**"),
            Some(g) => format!("{g:.5}"),
            None => "–".to_string(),
        }
    };
    let mut s = String::from("| dataset | model | MSE | log loss |\n|---|---|---|---|\n");
    for (depth, mse, log) in [
        ("shallow", TableModel::ShallowMse, TableModel::ShallowLog),
        ("deep", TableModel::DeepMse, TableModel::DeepLog),
    ] {
        if !models.contains(&mse) && !models.contains(&log) {
            continue;
        }
        for d in datasets {
            let _ = writeln!(s, "| {d} | {depth} | {} | {} |", entry(mse, d), entry(log, d));
        }
    }
    s
}

fn theorem1(cfg: &ExperimentConfig) -> Result<()> {
    let t = cfg.theorem1.clone().unwrap_or_default();
    let base = cfg.seeds()[0];
    let dir = prepare(cfg, base)?;
    let rows = theory::run_theorem1(&t, base, Some(&dir))?;
    write_summary(&dir, &rows, &theory::theorem1_markdown(&rows))?;
    theory::theorem1_verdict(&rows)
}

fn critical_point(cfg: &ExperimentConfig) -> Result<()> {
    let c = cfg.critical_point.unwrap_or_default();
    let dir = prepare(cfg, cfg.seeds()[0])?;
    let (ok, msg) = theory::run_critical(&c, Some(&dir.join("critical_point.csv")))?;
    #[derive(Serialize)]
    struct Out<'a> {
        passed: bool,
        verdict: &'a str,
    }
    write_summary(&dir, &Out { passed: ok, verdict: &msg }, &format!("{msg}\n"))?;
    if ok {
        Ok(())
    } else {
        Err(Failure::Verdict(msg).into())
    }
}
