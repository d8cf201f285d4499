use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::step::{batch_indices, ExperimentRecord, StepOutcome, Trainer};
use super::{NetworkSpec, TrainConfig};
use crate::checkpoint::Checkpoint;
use crate::data::Dataset;
use crate::linalg::derive_seed;
use crate::network::{per_sample_loss, Network};
use crate::{Error, Result};

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";

/// Seed stream for minibatch order, distinct from initialisation.
const BATCH_STREAM: u64 = 2;
const EVAL_CHUNK: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
}

/// Eval-mode mean loss and argmax accuracy over a whole dataset.
pub fn evaluate(net: &Network, data: &Dataset) -> Result<Evaluation> {
    let n = data.len();
    if n == 0 {
        return Err(Error::Invalid("cannot evaluate on an empty dataset".into()));
    }
    let (mut loss, mut correct) = (0.0, 0usize);
    for start in (0..n).step_by(EVAL_CHUNK) {
        let idx: Vec<usize> = (start..(start + EVAL_CHUNK).min(n)).collect();
        let pred = net.predict(&data.x.select_rows(&idx))?;
        loss += per_sample_loss(net.loss_kind(), &pred, &data.y.select_rows(&idx))?.iter().sum::<f64>();
        correct += pred
            .argmax_rows()
            .iter()
            .zip(&idx)
            .filter(|(p, &i)| **p == data.labels[i])
            .count();
    }
    Ok(Evaluation {
        loss: loss / n as f64,
        accuracy: correct as f64 / n as f64,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub records: Vec<ExperimentRecord>,
    /// Iteration at which the gradient norm fell below `grad_tol`.
    pub converged_at: Option<usize>,
    pub final_train: Evaluation,
}

impl RunSummary {
    pub fn final_loss(&self) -> f64 {
        self.final_train.loss
    }
}

impl Trainer {
    fn record(&self, data: &Dataset, test: Option<&Dataset>, step: Option<&StepOutcome>) -> Result<ExperimentRecord> {
        let full = self.config().full_eval || step.is_none();
        let train = full.then(|| evaluate(&self.net, data)).transpose()?;
        let test = match test {
            Some(t) if full => Some(evaluate(&self.net, t)?),
            _ => None,
        };
        let rec = ExperimentRecord {
            iteration: self.iteration(),
            train_loss: train.map(|e| e.loss),
            train_accuracy: train.map(|e| e.accuracy),
            test_loss: test.map(|e| e.loss),
            test_accuracy: test.map(|e| e.accuracy),
            batch_loss: step.map(|s| s.loss),
            grad_norm: step.map(|s| s.grad_norm),
            sg_losses: step.map(|s| s.sg_losses.clone()).unwrap_or_default(),
            eps: step.and_then(|s| s.eps),
            weight_sq_norms: self.net.weight_sq_norms(),
        };
        let scalars = [rec.train_loss, rec.test_loss, rec.batch_loss, rec.grad_norm];
        let finite = scalars.iter().flatten().chain(&rec.sg_losses).chain(&rec.weight_sq_norms).all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite(format!("metrics at iteration {}", rec.iteration)));
        }
        Ok(rec)
    }

    /// Trains until `until` iterations have been taken (or the gradient
    /// tolerance is met), handing each record to `sink`. The final row is
    /// only emitted when the run ends, not when it pauses early.
    pub fn run(
        &mut self,
        data: &Dataset,
        test: Option<&Dataset>,
        until: usize,
        sink: &mut dyn FnMut(&ExperimentRecord, &Trainer) -> Result<()>,
    ) -> Result<Option<usize>> {
        if data.dim() != self.spec().arch.layer_dims[0] || data.classes() != *self.spec().arch.layer_dims.last().unwrap() {
            return Err(Error::Invalid(format!(
                "dataset is {}-dimensional with {} classes, network expects {:?}",
                data.dim(),
                data.classes(),
                self.spec().arch.layer_dims
            )));
        }
        let cfg = self.config().clone();
        let batch_seed = derive_seed(cfg.seed, BATCH_STREAM);
        let mut converged = None;
        while self.iteration() < until {
            let t = self.iteration();
            let idx = batch_indices(data.len(), cfg.batch_size, batch_seed, t);
            let (x, y) = (data.x.select_rows(&idx), data.y.select_rows(&idx));
            let pass = self.net.forward(&x, crate::network::Mode::Train)?;
            let (grads, outcome) = self.grads_from_pass(&pass, &y)?;
            if t % cfg.log_every == 0 {
                let rec = self.record(data, test, Some(&outcome))?;
                sink(&rec, self)?;
            }
            self.apply(&grads, &pass)?;
            if cfg.checkpoint_every > 0 && self.iteration() % cfg.checkpoint_every == 0 && self.iteration() < until {
                sink_checkpoint(self, sink)?;
            }
            if cfg.grad_tol > 0.0 && outcome.grad_norm < cfg.grad_tol {
                converged = Some(t);
                break;
            }
        }
        if converged.is_some() || self.iteration() >= cfg.iterations {
            let rec = self.record(data, test, None)?;
            sink(&rec, self)?;
        }
        Ok(converged)
    }
}

/// Signals a checkpoint request to the sink with an empty record.
fn sink_checkpoint(t: &Trainer, sink: &mut dyn FnMut(&ExperimentRecord, &Trainer) -> Result<()>) -> Result<()> {
    let marker = ExperimentRecord {
        iteration: usize::MAX,
        train_loss: None,
        train_accuracy: None,
        test_loss: None,
        test_accuracy: None,
        batch_loss: None,
        grad_norm: None,
        sg_losses: Vec::new(),
        eps: None,
        weight_sq_norms: Vec::new(),
    };
    sink(&marker, t)
}

/// Runs `config.iterations` steps (or fewer with `stop_after`), writing
/// `metrics.jsonl` and `checkpoint.bin` under `out_dir` when given. An
/// existing checkpoint there is resumed: later metrics lines are dropped
/// and the run continues from the stored iteration.
pub fn run_experiment(
    spec: &NetworkSpec,
    config: &TrainConfig,
    data: &Dataset,
    test: Option<&Dataset>,
    out_dir: Option<&Path>,
    stop_after: Option<usize>,
) -> Result<RunSummary> {
    let until = stop_after.unwrap_or(config.iterations).min(config.iterations);
    let mut records = Vec::new();
    let mut trainer = None;
    let mut writer = None;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let ck_path = dir.join(CHECKPOINT_FILE);
        let metrics_path = dir.join(METRICS_FILE);
        if ck_path.exists() {
            let t = Trainer::from_checkpoint(spec.clone(), config.clone(), &Checkpoint::load(&ck_path)?)?;
            records = truncate_metrics(&metrics_path, t.iteration())?;
            trainer = Some(t);
        } else if metrics_path.exists() {
            std::fs::remove_file(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&metrics_path)
            .map_err(|e| Error::io(&metrics_path, e))?;
        writer = Some((BufWriter::new(file), metrics_path, ck_path));
    }
    let mut trainer = match trainer {
        Some(t) => t,
        None => Trainer::new(spec.clone(), config.clone())?,
    };
    let mut sink = |rec: &ExperimentRecord, t: &Trainer| -> Result<()> {
        if rec.iteration == usize::MAX {
            if let Some((w, mp, cp)) = writer.as_mut() {
                w.flush().map_err(|e| Error::io(&*mp, e))?;
                t.to_checkpoint()?.save(cp)?;
            }
            return Ok(());
        }
        if let Some((w, mp, _)) = writer.as_mut() {
            serde_json::to_writer(&mut *w, rec)?;
            w.write_all(b"\n").map_err(|e| Error::io(&*mp, e))?;
        }
        records.push(rec.clone());
        Ok(())
    };
    let converged_at = trainer.run(data, test, until, &mut sink)?;
    if let Some((mut w, mp, cp)) = writer {
        w.flush().map_err(|e| Error::io(&mp, e))?;
        trainer.to_checkpoint()?.save(&cp)?;
    }
    let final_train = evaluate(&trainer.net, data)?;
    Ok(RunSummary {
        records,
        converged_at,
        final_train,
    })
}

/// Keeps metrics rows before `iteration`, rewriting the file in place.
fn truncate_metrics(path: &Path, iteration: usize) -> Result<Vec<ExperimentRecord>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut kept = Vec::new();
    let mut text = String::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let rec: ExperimentRecord = serde_json::from_str(&line)?;
        if rec.iteration < iteration {
            text.push_str(&line);
            text.push('\n');
            kept.push(rec);
        }
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(kept)
}
