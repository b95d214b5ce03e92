//! Mini-batch training of the projection with per-epoch validation and
//! best-checkpoint selection.
//!
//! A run directory holds `config.json`, `log.jsonl` (one object per step and
//! per epoch, no timestamps), and the `best/` and `last/` checkpoints.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{write_json, PairedDataset, RetrievalCorpus};
use crate::error::{Error, Result};
use crate::model::{save_checkpoint, ProjectionConfig, ProjectionModel, TOOLKIT_VERSION};
use crate::objectives::{combined_loss, LossConfig};
use crate::optim::{adamw_step, lr_at, AdamWConfig, AdamWState, ScheduleConfig};
use crate::retrieval::validation_score;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    Retrieval,
    Generation,
}

impl std::str::FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "retrieval" => Ok(Self::Retrieval),
            "generation" => Ok(Self::Generation),
            other => Err(Error::Usage(format!(
                "unknown mode {other:?} (expected retrieval or generation)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: LossConfig,
    /// `total_steps` is recomputed from the data by [`train`].
    pub schedule: ScheduleConfig,
    pub optimizer: AdamWConfig,
    pub mode: TrainMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 64,
            seed: 0,
            loss: LossConfig::default(),
            schedule: ScheduleConfig {
                base_lr: 3e-4,
                warmup_steps: 50,
                total_steps: 50,
            },
            optimizer: AdamWConfig::default(),
            mode: TrainMode::Retrieval,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Usage("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Usage("batch size must be >= 1".into()));
        }
        if self.schedule.warmup_steps == 0 {
            return Err(Error::Usage("warmup steps must be >= 1".into()));
        }
        self.loss.validate()
    }

    /// The configuration actually used for `n` pairs: generation mode
    /// turns off normalization and the structure term, and the schedule
    /// spans `epochs · ceil(n / batch_size)` steps. A warmup longer than
    /// the whole run is shortened to the run length.
    pub fn resolve(&self, n: usize) -> Result<TrainConfig> {
        self.validate()?;
        let mut cfg = self.clone();
        if cfg.mode == TrainMode::Generation {
            cfg.loss.normalize = false;
            cfg.loss.beta = 0.0;
        }
        let total = cfg.epochs * n.div_ceil(cfg.batch_size);
        cfg.schedule.total_steps = total;
        cfg.schedule.warmup_steps = cfg.schedule.warmup_steps.min(total);
        cfg.schedule.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub batch: usize,
    pub lr: f64,
    pub loss: f64,
    pub align: f64,
    pub structure: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub val_score: Option<f64>,
    pub is_best: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "lowercase")]
pub enum LogEvent {
    Step(StepRecord),
    Epoch(EpochRecord),
}

/// Resolved settings written to the run directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub toolkit_version: String,
    pub model: ProjectionConfig,
    pub train: TrainConfig,
    pub n_pairs: usize,
    pub validation_corpus: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RunLog {
    pub config: RunConfig,
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
    /// Zero-based epoch of the selected checkpoint.
    pub best_epoch: usize,
    pub best_score: Option<f64>,
}

/// Trains a fresh projection on `pairs`, validating on `val` after every
/// epoch. Without a validation corpus the final epoch is kept.
pub fn train(
    pairs: &PairedDataset,
    val: Option<&RetrievalCorpus>,
    model_cfg: ProjectionConfig,
    cfg: &TrainConfig,
    out_dir: impl AsRef<Path>,
) -> Result<(ProjectionModel, RunLog)> {
    let out_dir = out_dir.as_ref();
    if pairs.is_empty() {
        return Err(Error::invalid("no training pairs"));
    }
    model_cfg.validate()?;
    if pairs.d_in() != model_cfg.d_in || pairs.d_out() != model_cfg.d_out {
        return Err(Error::Shape {
            op: "train",
            left: (pairs.d_in(), pairs.d_out()),
            right: (model_cfg.d_in, model_cfg.d_out),
        });
    }
    if let Some(v) = val {
        v.validate()?;
    }
    let cfg = cfg.resolve(pairs.len())?;

    let data = pairs.canonical_order();
    let x_all = data.zm.to_matrix();
    let y_all = data.ze.to_matrix();
    let n = data.len();

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let run_config = RunConfig {
        toolkit_version: TOOLKIT_VERSION.to_string(),
        model: model_cfg,
        train: cfg.clone(),
        n_pairs: n,
        validation_corpus: val.map(|v| v.name.clone()),
    };
    write_json(&out_dir.join("config.json"), &run_config)?;
    let log_path = out_dir.join("log.jsonl");
    let mut log_file = BufWriter::new(fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?);

    let mut model = ProjectionModel::init(model_cfg)?;
    let mut state = AdamWState::new();
    let mut steps = Vec::with_capacity(cfg.schedule.total_steps);
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, ProjectionModel)> = None;
    let mut global = 0usize;

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        Rng::derive(cfg.seed, epoch as u64).shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut n_batches = 0usize;

        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let x = x_all.select_rows(chunk);
            let y = y_all.select_rows(chunk);
            let (u, cache) = model.forward(&x)?;
            let out = combined_loss(&u, &y, &cfg.loss)?;
            if !out.loss.is_finite() {
                return Err(Error::NonFiniteLoss { step: global });
            }
            let (grads, _) = model.backward(&cache, &out.grad)?;
            let lr = lr_at(global, &cfg.schedule)?;
            {
                let mut params = model.tensors_mut();
                adamw_step(&mut params, &grads.tensors(), &mut state, lr, &cfg.optimizer)?;
            }
            let rec = StepRecord {
                step: global,
                epoch,
                batch: bi,
                lr,
                loss: out.loss,
                align: out.align,
                structure: out.structure,
            };
            write_event(&mut log_file, &log_path, &LogEvent::Step(rec.clone()))?;
            steps.push(rec);
            loss_sum += out.loss;
            n_batches += 1;
            global += 1;
        }
        if !model.is_finite() {
            return Err(Error::NonFiniteLoss { step: global - 1 });
        }

        let val_score = val.map(|v| validation_score(&model, v)).transpose()?;
        let is_best = match (&best, val_score) {
            (None, _) => true,
            (Some((_, prev, _)), Some(s)) => s > *prev,
            (Some(_), None) => true,
        };
        if is_best {
            best = Some((epoch, val_score.unwrap_or(f64::NAN), model.clone()));
            if val.is_some() {
                save_checkpoint(&model, out_dir.join("best"), Some(&cfg.loss))?;
            }
        }
        let rec = EpochRecord {
            epoch,
            mean_loss: loss_sum / n_batches as f64,
            val_score,
            is_best,
        };
        write_event(&mut log_file, &log_path, &LogEvent::Epoch(rec.clone()))?;
        epochs.push(rec);
    }
    log_file.flush().map_err(|e| Error::io(&log_path, e))?;
    save_checkpoint(&model, out_dir.join("last"), Some(&cfg.loss))?;
    if val.is_none() {
        save_checkpoint(&model, out_dir.join("best"), Some(&cfg.loss))?;
    }

    let (best_epoch, score, best_model) = best.expect("at least one epoch");
    Ok((
        best_model,
        RunLog {
            config: run_config,
            steps,
            epochs,
            best_epoch,
            best_score: val.map(|_| score),
        },
    ))
}

fn write_event(w: &mut impl Write, path: &Path, ev: &LogEvent) -> Result<()> {
    let line = serde_json::to_string(ev).map_err(|e| Error::json(path, e))?;
    writeln!(w, "{line}").map_err(|e| Error::io(path, e))
}

/// Reads a `log.jsonl` written by [`train`].
pub fn read_log(path: impl AsRef<Path>) -> Result<Vec<LogEvent>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::json(path, e)))
        .collect()
}
