//! Resumable grid execution.
//!
//! Layout under the output directory:
//!
//! ```text
//! records/<config-hash>.json   one ResultRecord per finished run
//! ckpt/<config-hash>.augb      trained weights
//! ```
//!
//! A run whose record exists is skipped, so an interrupted grid picks up
//! where it stopped. Records are written to a temporary name and renamed.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::augment::SchemeKind;
use crate::data::Dataset;
use crate::error::{Error, Result};

use super::config::{ExperimentConfig, ExperimentGrid};
use super::eval::{evaluate, evaluate_tta};
use super::train::{train, EpochMetrics, TrainOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub cell: String,
    pub seed: u64,
    pub scheme: SchemeKind,
    pub regularized: bool,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub epochs: Vec<EpochMetrics>,
    pub final_acc: Option<f64>,
    pub tta_acc: Option<f64>,
    pub wall_s: f64,
    pub config_hash: String,
    pub decay_applications: u64,
    pub dropout_mask_draws: u64,
}

impl ResultRecord {
    /// Equality on everything except wall-clock measurements.
    pub fn same_outcome(&self, other: &Self) -> bool {
        let strip = |r: &Self| {
            let mut r = r.clone();
            r.wall_s = 0.0;
            r.epochs.iter_mut().for_each(|e| e.wall_s = 0.0);
            r
        };
        strip(self) == strip(other)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GridOptions {
    /// Stop after this many newly trained runs (the rest stay pending).
    pub max_new_runs: Option<usize>,
    pub verbose: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOutcome {
    /// Records of every finished run, in grid order.
    pub records: Vec<ResultRecord>,
    pub trained: usize,
    pub skipped: usize,
    pub pending: usize,
}

pub fn record_path(out: &Path, hash: &str) -> PathBuf {
    out.join("records").join(format!("{hash}.json"))
}

pub fn checkpoint_path(out: &Path, hash: &str) -> PathBuf {
    out.join("ckpt").join(format!("{hash}.augb"))
}

/// Trains and evaluates one run. Training failures become a failed record;
/// I/O failures propagate.
pub fn execute_run(
    cfg: &ExperimentConfig,
    train_set: &Dataset,
    test_set: &Dataset,
    ckpt: Option<&Path>,
    verbose: bool,
) -> Result<ResultRecord> {
    let hash = cfg.hash();
    let start = Instant::now();
    let opts = TrainOptions {
        verbose,
        ..TrainOptions::from(cfg.runtime)
    };
    let base = ResultRecord {
        cell: cfg.cell_id(),
        seed: cfg.train.seed,
        scheme: cfg.scheme,
        regularized: cfg.regularized,
        status: RunStatus::Failed,
        error: None,
        epochs: vec![],
        final_acc: None,
        tta_acc: None,
        wall_s: 0.0,
        config_hash: hash,
        decay_applications: 0,
        dropout_mask_draws: 0,
    };
    let outcome = train(cfg, train_set, &opts).and_then(|(mut net, hist)| {
        let single = evaluate(&mut net, test_set, cfg.crop)?;
        let tta = evaluate_tta(&mut net, test_set, cfg.tta_views, cfg.train.seed, cfg.crop)?;
        if let Some(p) = ckpt {
            net.save(p)?;
        }
        Ok((hist, single, tta))
    });
    let rec = match outcome {
        Ok((hist, single, tta)) => ResultRecord {
            status: RunStatus::Ok,
            epochs: hist.epochs,
            final_acc: Some(single),
            tta_acc: Some(tta),
            decay_applications: hist.decay_applications,
            dropout_mask_draws: hist.dropout_mask_draws,
            ..base
        },
        Err(e @ (Error::Io(_) | Error::Checkpoint(_))) => return Err(e),
        Err(e) => ResultRecord {
            error: Some(e.to_string()),
            ..base
        },
    };
    Ok(ResultRecord {
        wall_s: start.elapsed().as_secs_f64(),
        ..rec
    })
}

fn write_record(path: &Path, rec: &ResultRecord) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, serde_json::to_vec_pretty(rec)?)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn read_record(path: &Path) -> Result<ResultRecord> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

/// Runs every cell × seed of `grid`, skipping runs already recorded in
/// `out`. Data is loaded once.
pub fn run_grid(grid: &ExperimentGrid, out: &Path, opts: &GridOptions) -> Result<GridOutcome> {
    grid.validate()?;
    let (train_set, test_set) = grid.data.load()?;
    run_grid_on(grid, &train_set, &test_set, out, opts)
}

/// [`run_grid`] with the datasets supplied by the caller.
pub fn run_grid_on(
    grid: &ExperimentGrid,
    train_set: &Dataset,
    test_set: &Dataset,
    out: &Path,
    opts: &GridOptions,
) -> Result<GridOutcome> {
    fs::create_dir_all(out.join("records"))?;
    fs::create_dir_all(out.join("ckpt"))?;
    let runs = grid.runs();
    let mut outcome = GridOutcome {
        records: Vec::with_capacity(runs.len()),
        trained: 0,
        skipped: 0,
        pending: 0,
    };
    for (k, cfg) in runs.iter().enumerate() {
        let hash = cfg.hash();
        let rp = record_path(out, &hash);
        if rp.exists() {
            outcome.records.push(read_record(&rp)?);
            outcome.skipped += 1;
            continue;
        }
        if opts.max_new_runs.is_some_and(|m| outcome.trained >= m) {
            outcome.pending += 1;
            continue;
        }
        if opts.verbose {
            eprintln!("[{}/{}] {} seed {}", k + 1, runs.len(), cfg.cell_id(), cfg.train.seed);
        }
        let rec = execute_run(cfg, train_set, test_set, Some(&checkpoint_path(out, &hash)), opts.verbose)?;
        if opts.verbose {
            match &rec.error {
                None => eprintln!(
                    "    single-view {:.4}  tta {:.4}  {:.0}s",
                    rec.final_acc.unwrap_or(f64::NAN),
                    rec.tta_acc.unwrap_or(f64::NAN),
                    rec.wall_s
                ),
                Some(e) => eprintln!("    failed: {e}"),
            }
        }
        write_record(&rp, &rec)?;
        outcome.records.push(rec);
        outcome.trained += 1;
    }
    Ok(outcome)
}

/// Every record under `dir/records`, sorted by (cell, seed).
pub fn load_records(dir: &Path) -> Result<Vec<ResultRecord>> {
    let rdir = dir.join("records");
    let mut out = Vec::new();
    for entry in fs::read_dir(&rdir)? {
        let p = entry?.path();
        if p.extension().is_some_and(|e| e == "json") {
            out.push(read_record(&p)?);
        }
    }
    out.sort_by(|a, b| (!a.regularized, a.scheme as u8, a.seed).cmp(&(!b.regularized, b.scheme as u8, b.seed)));
    Ok(out)
}
