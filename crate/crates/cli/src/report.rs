//! Summaries of finished runs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use clap::Args;
use serde_json::Value;

#[derive(Args)]
pub struct ReportArgs {
    /// A run directory, or an output root holding several.
    pub dir: PathBuf,
}

fn run_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    if dir.join("summary.md").exists() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("summary.md").exists())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        bail!("no finished runs under {}", dir.display());
    }
    Ok(dirs)
}

/// Per-run summaries, then mean train loss and accuracy per variant across
/// the seeds of each training experiment.
pub fn report(dir: &Path) -> Result<String> {
    let mut out = String::new();
    let mut pooled: BTreeMap<(String, String), Vec<(f64, f64)>> = BTreeMap::new();
    for d in run_dirs(dir)? {
        out.push_str(&std::fs::read_to_string(d.join("summary.md"))?);
        out.push('\n');
        let Ok(text) = std::fs::read_to_string(d.join("summary.json")) else {
            continue;
        };
        let json: Value = serde_json::from_str(&text)?;
        let (Some(name), Some(variants)) = (json["name"].as_str(), json["variants"].as_array()) else {
            continue;
        };
        for v in variants {
            if let (Some(label), Some(loss), Some(acc)) =
                (v["label"].as_str(), v["final_train_loss"].as_f64(), v["final_train_accuracy"].as_f64())
            {
                pooled.entry((name.to_string(), label.to_string())).or_default().push((loss, acc));
            }
        }
    }
    if pooled.values().any(|v| v.len() > 1) {
        out.push_str("## Across seeds\n\n| experiment | variant | seeds | mean train loss | mean train accuracy |\n|---|---|---|---|---|\n");
        for ((name, label), v) in &pooled {
            let n = v.len() as f64;
            let loss = v.iter().map(|x| x.0).sum::<f64>() / n;
            let acc = v.iter().map(|x| x.1).sum::<f64>() / n;
            let _ = writeln!(out, "| {name} | {label} | {} | {loss:.6} | {acc:.4} |", v.len());
        }
    }
    Ok(out)
}

pub fn report_cmd(args: &ReportArgs) -> Result<()> {
    print!("{}", report(&args.dir)?);
    Ok(())
}
