/*
Copyright 2026 The admm-prune Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

//! The train, prune and retrain phases and the artifacts they leave in the
//! output directory.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::admm::{hard_prune, retrain_masked, run_admm, AdmmRun};
use crate::checkpoint::{write_atomic, Checkpoint, CheckpointMeta, Phase};
use crate::config::RunConfig;
use crate::data::{load_mnist, Dataset, Split};
use crate::error::{Error, Result};
use crate::mask::PruneMask;
use crate::model::Model;
use crate::report::Report;
use crate::trainer::train;

pub const CONFIG_FILE: &str = "config.json";
pub const BASELINE_CHECKPOINT: &str = "baseline.ckpt";
pub const PRUNED_CHECKPOINT: &str = "pruned.ckpt";
pub const RETRAINED_CHECKPOINT: &str = "retrained.ckpt";
pub const ADMM_LOG: &str = "admm_log.jsonl";
pub const RETRAIN_LOG: &str = "retrain_log.jsonl";
pub const REPORT_TEXT: &str = "report.txt";
pub const REPORT_CSV: &str = "report.csv";
pub const SUMMARY_FILE: &str = "summary.json";

const PROBE_SAMPLES: usize = 256;

/// Line-oriented log written to `<path>.partial` and renamed into place when finished.
pub struct JsonlLog {
    path: PathBuf,
    partial: PathBuf,
    out: BufWriter<File>,
}

impl JsonlLog {
    pub fn create(path: &Path) -> Result<Self> {
        let mut name = path.file_name().unwrap_or_default().to_os_string();
        name.push(".partial");
        let partial = path.with_file_name(name);
        let file = File::create(&partial).map_err(|e| Error::io(&partial, e))?;
        Ok(JsonlLog {
            path: path.to_path_buf(),
            partial,
            out: BufWriter::new(file),
        })
    }

    pub fn line<T: Serialize>(&mut self, record: &T) -> Result<()> {
        let text = serde_json::to_string(record).map_err(|e| Error::Internal(e.to_string()))?;
        writeln!(self.out, "{text}")
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::io(&self.partial, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.partial, e))?;
        fs::rename(&self.partial, &self.path).map_err(|e| Error::io(&self.path, e))
    }
}

/// Training and test data with the config's sample limits applied.
pub fn load_data(config: &RunConfig) -> Result<(Dataset, Dataset)> {
    let limit = |d: Dataset, n: Option<usize>| match n {
        Some(n) if n < d.len() => d.head(n),
        _ => Ok(d),
    };
    let train = limit(load_mnist(&config.data_dir, Split::Train)?, config.train_samples)?;
    let test = limit(load_mnist(&config.data_dir, Split::Test)?, config.test_samples)?;
    Ok((train, test))
}

fn meta(config: &RunConfig, phase: Phase, admm_iterations: usize, train_steps: usize) -> CheckpointMeta {
    CheckpointMeta {
        arch: config.arch,
        seed: config.seed,
        phase,
        admm_iterations,
        train_steps,
    }
}

/// Initialises a model from the run seed and trains it densely.
pub fn train_baseline(config: &RunConfig, train_set: &Dataset) -> Result<(Model, Checkpoint)> {
    let mut model = Model::build(config.arch, config.seed);
    let tc = config.baseline_train();
    train(&mut model, train_set, &tc, None)?;
    let ck = Checkpoint::from_model(&model, meta(config, Phase::Baseline, 0, tc.steps))?;
    Ok((model, ck))
}

/// Result of ADMM followed by hard pruning.
pub struct Pruned {
    pub model: Model,
    pub run: AdmmRun,
    pub mask: PruneMask,
    pub checkpoint: Checkpoint,
}

/// Runs ADMM from `model`, logging one JSON line per iteration to `log_path`,
/// then keeps the budgeted largest weights of each layer.
pub fn prune(config: &RunConfig, mut model: Model, train_set: &Dataset, log_path: &Path) -> Result<Pruned> {
    let admm = config.admm_config()?;
    let probe_idx: Vec<usize> = (0..PROBE_SAMPLES.min(train_set.len())).collect();
    let probe = train_set.gather(&probe_idx)?;
    let mut log = JsonlLog::create(log_path)?;
    let run = run_admm(&mut model, &admm, train_set, Some(&probe), &mut |rec| log.line(rec))?;
    log.finish()?;
    let mask = hard_prune(&mut model, &admm.budgets)?;
    let checkpoint = Checkpoint::from_model(
        &model,
        meta(config, Phase::Pruned, run.state.k(), run.state.k() * admm.w_update.steps),
    )?
    .with_admm_state(&run.state)?
    .with_mask(&mask)?;
    Ok(Pruned {
        model,
        run,
        mask,
        checkpoint,
    })
}

/// One retraining log line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrainRecord {
    /// Steps completed.
    pub step: usize,
    pub loss: f64,
    /// Nonzero weights per prunable layer.
    pub nonzero: Vec<usize>,
}

/// Masked retraining, logging per-layer nonzero counts to `log_path` every
/// `config.retrain_log_every` steps and after the last one.
pub fn retrain(
    config: &RunConfig,
    mut model: Model,
    mask: &PruneMask,
    train_set: &Dataset,
    log_path: &Path,
) -> Result<(Model, Checkpoint, Vec<RetrainRecord>)> {
    let tc = config.retrain_train();
    let every = config.retrain_log_every;
    let mut log = JsonlLog::create(log_path)?;
    let mut records = Vec::new();
    retrain_masked(&mut model, mask, train_set, &tc, &mut |ev, m| {
        let done = ev.step + 1;
        if done % every == 0 || done == tc.steps {
            let rec = RetrainRecord {
                step: done,
                loss: ev.loss,
                nonzero: m.prunable().iter().map(|w| w.count_nonzero()).collect(),
            };
            log.line(&rec)?;
            records.push(rec);
        }
        Ok(())
    })?;
    log.finish()?;
    let checkpoint = Checkpoint::from_model(&model, meta(config, Phase::Retrained, 0, tc.steps))?.with_mask(mask)?;
    Ok((model, checkpoint, records))
}

/// Wall-clock seconds per phase.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub baseline: f64,
    pub admm: f64,
    pub retrain: f64,
}

impl Timings {
    /// `(admm + retrain) / baseline`.
    pub fn compute_ratio(&self) -> f64 {
        (self.admm + self.retrain) / self.baseline
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub arch: String,
    pub baseline_accuracy: f64,
    /// Right after hard pruning, before retraining.
    pub pruned_accuracy: f64,
    pub retrained_accuracy: f64,
    pub admm_iterations: usize,
    pub admm_converged: bool,
    /// `max_i r_i` per iteration.
    pub admm_max_r: Vec<f64>,
    pub nonzero: Vec<usize>,
    pub total_nonzero: usize,
    pub total_weights: usize,
    pub timings: Timings,
    pub compute_ratio: f64,
    /// SGD steps of ADMM plus retraining, over baseline steps.
    pub step_ratio: f64,
}

/// Everything a full pipeline run produced.
pub struct PipelineRun {
    pub summary: Summary,
    pub report: Report,
    pub retrain_log: Vec<RetrainRecord>,
    pub output_dir: PathBuf,
}

/// Baseline training, ADMM pruning and masked retraining, writing
/// checkpoints, logs, the report and a summary to `config.output_dir`.
pub fn run_pipeline(config: &RunConfig, train_set: &Dataset, test_set: &Dataset) -> Result<PipelineRun> {
    let effective = config.effective()?;
    let dir = config.output_dir.clone();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write_atomic(&dir.join(CONFIG_FILE), effective.to_json().as_bytes())?;

    let started = Instant::now();
    let (baseline, ck) = train_baseline(config, train_set)?;
    let t_baseline = started.elapsed().as_secs_f64();
    ck.save(&dir.join(BASELINE_CHECKPOINT))?;
    let baseline_accuracy = baseline.evaluate(test_set)?;

    let started = Instant::now();
    let pruned = prune(config, baseline, train_set, &dir.join(ADMM_LOG))?;
    let t_admm = started.elapsed().as_secs_f64();
    pruned.checkpoint.save(&dir.join(PRUNED_CHECKPOINT))?;
    let pruned_accuracy = pruned.model.evaluate(test_set)?;

    let started = Instant::now();
    let (model, ck, retrain_log) = retrain(config, pruned.model, &pruned.mask, train_set, &dir.join(RETRAIN_LOG))?;
    let t_retrain = started.elapsed().as_secs_f64();
    ck.save(&dir.join(RETRAINED_CHECKPOINT))?;
    let retrained_accuracy = model.evaluate(test_set)?;

    let report = Report::from_model(&model)?.with_accuracy(Some(baseline_accuracy), retrained_accuracy);
    write_atomic(&dir.join(REPORT_TEXT), report.to_text().as_bytes())?;
    write_atomic(&dir.join(REPORT_CSV), report.to_csv().as_bytes())?;

    let admm = config.admm_config()?;
    let baseline_steps = config.baseline_train().steps;
    let extra_steps = pruned.run.state.k() * admm.w_update.steps + config.retrain_train().steps;
    let timings = Timings {
        baseline: t_baseline,
        admm: t_admm,
        retrain: t_retrain,
    };
    let summary = Summary {
        arch: config.arch.to_string(),
        baseline_accuracy,
        pruned_accuracy,
        retrained_accuracy,
        admm_iterations: pruned.run.state.k(),
        admm_converged: pruned.run.converged,
        admm_max_r: pruned.run.state.history().iter().map(|r| r.max_r()).collect(),
        nonzero: report.rows.iter().map(|r| r.nonzero).collect(),
        total_nonzero: report.total_nonzero(),
        total_weights: report.total_original(),
        compute_ratio: timings.compute_ratio(),
        step_ratio: extra_steps as f64 / baseline_steps as f64,
        timings,
    };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Internal(e.to_string()))?;
    write_atomic(&dir.join(SUMMARY_FILE), json.as_bytes())?;
    Ok(PipelineRun {
        summary,
        report,
        retrain_log,
        output_dir: dir,
    })
}
