//! Theorem-1 and critical-point commands.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use serde::Serialize;
use synthgrad::theory::{
    critical_point_demo, theorem1_init, theorem1_problem, theorem1_run, write_trajectory_csv, CriticalPointConfig,
    CriticalPointRow, CriticalPointVerdict, Theorem1Run,
};

use crate::config::Theorem1Config;
use crate::Failure;

/// Acceptance bounds for a Theorem-1 run.
const W_REL_TOL: f64 = 1e-4;
const E_PERP_TOL: f64 = 1e-10;
/// Distance from the minimum that counts as reaching it.
const MINIMUM_TOL: f64 = 1e-2;

#[derive(Args)]
pub struct Theorem1Args {
    /// Number of samples.
    #[arg(long, visible_alias = "S", default_value_t = 20)]
    pub samples: usize,
    /// Input dimension.
    #[arg(long, visible_alias = "d", default_value_t = 5)]
    pub dim: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Stop once ‖f‖ + ‖ξ‖ falls below this.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 2_000_000)]
    pub max_iters: usize,
    /// Run problems with seeds `seed..seed + problems`.
    #[arg(long, default_value_t = 1)]
    pub problems: u64,
    /// Directory for trajectory CSVs.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct CriticalPointArgs {
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub a0: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub b0: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub lr_main: f64,
    #[arg(long, default_value_t = 0.1)]
    pub lr_sg: f64,
    #[arg(long, default_value_t = 2000)]
    pub iterations: usize,
    /// Descend along the true subgradient instead of the SG.
    #[arg(long)]
    pub use_true_grad: bool,
    /// CSV path for both trajectories.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Theorem1Summary {
    pub seed: u64,
    pub iterations: usize,
    pub converged: bool,
    pub stalled: bool,
    pub monotone: bool,
    pub final_norm: f64,
    pub relative_w_error: f64,
    pub e_perp_drift: f64,
    pub passed: bool,
}

fn summarise(seed: u64, run: &Theorem1Run) -> Theorem1Summary {
    let rel = run.relative_w_error();
    Theorem1Summary {
        seed,
        iterations: run.state.iteration,
        converged: run.converged,
        stalled: run.stalled,
        monotone: run.monotone,
        final_norm: run.final_norm(),
        relative_w_error: rel,
        e_perp_drift: run.e_perp_drift,
        passed: run.converged && run.monotone && rel < W_REL_TOL && run.e_perp_drift < E_PERP_TOL,
    }
}

/// Runs each problem, writing `theorem1_s<seed>.csv` under `out`.
pub fn run_theorem1(cfg: &Theorem1Config, first_seed: u64, out: Option<&Path>) -> Result<Vec<Theorem1Summary>> {
    if cfg.dim == 0 || cfg.samples < cfg.dim + 2 {
        return Err(Failure::Config("theorem1 needs dim ≥ 1 and samples ≥ dim + 2".into()).into());
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut rows = Vec::new();
    for seed in first_seed..first_seed + cfg.problems {
        let (x, y) = theorem1_problem(cfg.samples, cfg.dim, seed);
        let state = theorem1_init(&x, &y, seed)?;
        let run = theorem1_run(state, cfg.tol, cfg.max_iters)?;
        if let Some(dir) = out {
            write_trajectory_csv(&dir.join(format!("theorem1_s{seed}.csv")), &run.trajectory)?;
        }
        rows.push(summarise(seed, &run));
    }
    Ok(rows)
}

pub fn theorem1_markdown(rows: &[Theorem1Summary]) -> String {
    let mut s = String::from(
        "| seed | iterations | ‖f‖+‖ξ‖ | rel. W error | e⊥ drift | monotone | pass |\n|---|---|---|---|---|---|---|\n",
    );
    for r in rows {
        let _ = writeln!(
            s,
            "| {} | {} | {:.3e} | {:.3e} | {:.1e} | {} | {} |",
            r.seed, r.iterations, r.final_norm, r.relative_w_error, r.e_perp_drift, r.monotone, r.passed
        );
    }
    s
}

pub fn theorem1_verdict(rows: &[Theorem1Summary]) -> Result<()> {
    let failed: Vec<String> = rows
        .iter()
        .filter(|r| !r.passed)
        .map(|r| {
            let why = if r.stalled {
                "line search stalled"
            } else if !r.converged {
                "iteration budget exhausted"
            } else {
                "final state outside tolerance"
            };
            format!("seed {}: {why} (‖f‖+‖ξ‖ = {:.3e})", r.seed, r.final_norm)
        })
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verdict(failed.join("; ")).into())
    }
}

pub fn theorem1_cmd(args: &Theorem1Args) -> Result<()> {
    let cfg = Theorem1Config {
        samples: args.samples,
        dim: args.dim,
        problems: args.problems,
        tol: args.tol,
        max_iters: args.max_iters,
    };
    let rows = run_theorem1(&cfg, args.seed, args.out.as_deref())?;
    print!("{}", theorem1_markdown(&rows));
    theorem1_verdict(&rows)
}

/// Writes both trajectories with a leading `mode` column.
pub fn write_critical_csv(path: &Path, v: &CriticalPointVerdict, use_true_grad: bool) -> Result<()> {
    let mut text = String::from("mode,iteration,a,b,c,true_grad_a,true_grad_b\n");
    let first = if use_true_grad { "true-grad" } else { "sg" };
    let mut push = |mode: &str, rows: &[CriticalPointRow]| {
        for r in rows {
            let _ = writeln!(
                text,
                "{mode},{},{},{},{},{},{}",
                r.iteration, r.a, r.b, r.c, r.true_grad_a, r.true_grad_b
            );
        }
    };
    push(first, &v.sg_trajectory);
    push("reference", &v.reference_trajectory);
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// The SG run must stall at a spurious point; the true-gradient run must
/// reach the minimum at the origin.
pub fn critical_verdict(cfg: &CriticalPointConfig, v: &CriticalPointVerdict) -> (bool, String) {
    if cfg.use_true_grad {
        let ok = v.sg_final.a.abs() < MINIMUM_TOL && v.sg_final.b.abs() < MINIMUM_TOL;
        let msg = format!(
            "true subgradient descent {} the minimum: a={:.6} b={:.6}",
            if ok { "reached" } else { "did not reach" },
            v.sg_final.a,
            v.sg_final.b
        );
        (ok, msg)
    } else {
        (v.spurious, v.summary())
    }
}

pub fn run_critical(cfg: &CriticalPointConfig, out: Option<&Path>) -> Result<(bool, String)> {
    let v = critical_point_demo(cfg);
    if let Some(path) = out {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        write_critical_csv(path, &v, cfg.use_true_grad)?;
    }
    Ok(critical_verdict(cfg, &v))
}

pub fn critical_point_cmd(args: &CriticalPointArgs) -> Result<()> {
    let cfg = CriticalPointConfig {
        a0: args.a0,
        b0: args.b0,
        lr_main: args.lr_main,
        lr_sg: args.lr_sg,
        iterations: args.iterations,
        use_true_grad: args.use_true_grad,
    };
    if !(cfg.lr_main > 0.0 && cfg.lr_sg > 0.0) {
        return Err(Failure::Config("learning rates must be positive".into()).into());
    }
    let (ok, msg) = run_critical(&cfg, args.out.as_deref())?;
    println!("{msg}");
    if ok {
        Ok(())
    } else {
        Err(Failure::Verdict(msg).into())
    }
}
