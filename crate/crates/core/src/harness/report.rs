//! Report files for a finished grid.
//!
//! * `results.csv`: one row per record. Columns are `cell, seed, scheme,
//!   regularized, status, train_loss_e1.., train_acc_e1.., final_acc,
//!   tta_acc, wall_s, config_hash`. Epoch columns run to the longest
//!   history; missing values are empty.
//! * `bars.dat`: whitespace-separated grouped-bar data, one line per
//!   (regularization, scheme) with mean/min/max TTA and single-view accuracy
//!   over the successful seeds.
//! * `summary.txt`: the regularized-minus-unregularized gap for each scheme.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::augment::SchemeKind;
use crate::error::{Error, Result};

use super::config::cell_id;
use super::grid::{ResultRecord, RunStatus};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spread {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl Spread {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        Some(Self {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            n: values.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bar {
    pub regularized: bool,
    pub scheme: SchemeKind,
    pub tta: Spread,
    pub single: Spread,
}

/// Mean/min/max per (regularization, scheme) over successful records,
/// regularized group first.
pub fn bars(records: &[ResultRecord]) -> Vec<Bar> {
    let mut out = Vec::new();
    for reg in [true, false] {
        for scheme in SchemeKind::ALL {
            let ok: Vec<&ResultRecord> = records
                .iter()
                .filter(|r| r.regularized == reg && r.scheme == scheme && r.status == RunStatus::Ok)
                .collect();
            let tta: Vec<f64> = ok.iter().filter_map(|r| r.tta_acc).collect();
            let single: Vec<f64> = ok.iter().filter_map(|r| r.final_acc).collect();
            if let (Some(tta), Some(single)) = (Spread::of(&tta), Spread::of(&single)) {
                out.push(Bar {
                    regularized: reg,
                    scheme,
                    tta,
                    single,
                });
            }
        }
    }
    out
}

pub fn find_bar(bars: &[Bar], regularized: bool, scheme: SchemeKind) -> Option<&Bar> {
    bars.iter().find(|b| b.regularized == regularized && b.scheme == scheme)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

pub fn write_csv(records: &[ResultRecord], path: &Path) -> Result<()> {
    let n_ep = records.iter().map(|r| r.epochs.len()).max().unwrap_or(0);
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = ["cell", "seed", "scheme", "regularized", "status"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=n_ep).map(|e| format!("train_loss_e{e}")));
    header.extend((1..=n_ep).map(|e| format!("train_acc_e{e}")));
    header.extend(["final_acc", "tta_acc", "wall_s", "config_hash"].map(String::from));
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.cell.clone(),
            r.seed.to_string(),
            r.scheme.to_string(),
            r.regularized.to_string(),
            match r.status {
                RunStatus::Ok => "ok".to_string(),
                RunStatus::Failed => "failed".to_string(),
            },
        ];
        row.extend((0..n_ep).map(|e| fmt_opt(r.epochs.get(e).map(|m| m.train_loss))));
        row.extend((0..n_ep).map(|e| fmt_opt(r.epochs.get(e).map(|m| m.train_acc))));
        row.push(fmt_opt(r.final_acc));
        row.push(fmt_opt(r.tta_acc));
        row.push(format!("{:.3}", r.wall_s));
        row.push(r.config_hash.clone());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn bars_text(bars: &[Bar]) -> String {
    let mut s = String::from(
        "# group scheme n tta_mean tta_min tta_max single_mean single_min single_max\n",
    );
    for b in bars {
        let _ = writeln!(
            s,
            "{} {} {} {} {} {} {} {} {}",
            if b.regularized { "reg" } else { "noreg" },
            b.scheme,
            b.tta.n,
            b.tta.mean,
            b.tta.min,
            b.tta.max,
            b.single.mean,
            b.single.min,
            b.single.max
        );
    }
    s
}

pub fn summary_text(records: &[ResultRecord], bars: &[Bar]) -> String {
    let mut s = String::new();
    let failed = records.iter().filter(|r| r.status == RunStatus::Failed).count();
    let _ = writeln!(s, "{} records, {} failed", records.len(), failed);
    for scheme in SchemeKind::ALL {
        match (find_bar(bars, true, scheme), find_bar(bars, false, scheme)) {
            (Some(on), Some(off)) => {
                let _ = writeln!(
                    s,
                    "{scheme}: with weight decay and dropout {:.2} %, without {:.2} %, difference {:+.2} % (TTA, mean of {}/{} seeds)",
                    100.0 * on.tta.mean,
                    100.0 * off.tta.mean,
                    100.0 * (on.tta.mean - off.tta.mean),
                    on.tta.n,
                    off.tta.n
                );
            }
            _ => {
                let _ = writeln!(
                    s,
                    "{scheme}: incomplete ({} / {} missing)",
                    cell_id(true, scheme),
                    cell_id(false, scheme)
                );
            }
        }
    }
    s
}

/// Writes `results.csv`, `bars.dat` and `summary.txt` into `out`.
pub fn emit_report(records: &[ResultRecord], out: &Path) -> Result<Vec<Bar>> {
    if records.is_empty() {
        return Err(Error::Usage("no records to report".into()));
    }
    fs::create_dir_all(out)?;
    write_csv(records, &out.join("results.csv"))?;
    let b = bars(records);
    fs::write(out.join("bars.dat"), bars_text(&b))?;
    fs::write(out.join("summary.txt"), summary_text(records, &b))?;
    Ok(b)
}

/// Thresholds for the desk-scale qualitative check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AblationThresholds {
    /// Minimum TTA gain of light augmentation over none, unregularized.
    pub min_augmentation_gain: f64,
    /// Maximum |unregularized − regularized| TTA gap under light augmentation.
    pub max_regularization_gap: f64,
}

impl Default for AblationThresholds {
    fn default() -> Self {
        Self {
            min_augmentation_gain: 0.02,
            max_regularization_gap: 0.03,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AblationVerdict {
    pub augmentation_gain: f64,
    pub regularization_gap: f64,
    pub gain_ok: bool,
    pub gap_ok: bool,
}

pub fn ablation_verdict(records: &[ResultRecord], t: &AblationThresholds) -> Result<AblationVerdict> {
    let b = bars(records);
    let get = |reg, scheme| {
        find_bar(&b, reg, scheme)
            .map(|x| x.tta.mean)
            .ok_or_else(|| Error::Usage(format!("no successful runs for {}", cell_id(reg, scheme))))
    };
    let noreg_light = get(false, SchemeKind::Light)?;
    let gain = noreg_light - get(false, SchemeKind::None)?;
    let gap = (noreg_light - get(true, SchemeKind::Light)?).abs();
    Ok(AblationVerdict {
        augmentation_gain: gain,
        regularization_gap: gap,
        gain_ok: gain >= t.min_augmentation_gain,
        gap_ok: gap <= t.max_regularization_gap,
    })
}
