use std::fs;

use augablate::arch::{ArchName, WidthScale};
use augablate::augment::SchemeKind;
use augablate::data::{synthetic_blobs, Dataset};
use augablate::harness::{
    emit_report, load_records, run_grid_on, ArchConfig, DataConfig, ExperimentGrid, GridOptions, RunStatus,
};
use augablate::optim::TrainConfig;
use augablate::Error;

fn tiny_grid() -> ExperimentGrid {
    ExperimentGrid {
        arch: ArchConfig::new(ArchName::AllCnnCifar, WidthScale::new(1, 8).unwrap()),
        data: DataConfig::synthetic(4, 64, 16, 32),
        train: TrainConfig {
            base_lr: 0.05,
            schedule: vec![],
            momentum: 0.9,
            nesterov: false,
            weight_decay: 0.001,
            batch_size: 32,
            epochs: 1,
            seed: 0,
        },
        regularization: vec![true, false],
        schemes: SchemeKind::ALL.to_vec(),
        seeds: vec![0, 1, 2],
        crop: None,
        tta_views: 2,
        runtime: Default::default(),
    }
}

fn data() -> (Dataset, Dataset) {
    tiny_grid().data.load().unwrap()
}

fn quiet(max_new_runs: Option<usize>) -> GridOptions {
    GridOptions {
        max_new_runs,
        verbose: false,
    }
}

#[test]
fn full_grid_then_resume_and_chunked_restart() {
    let grid = tiny_grid();
    let (train, test) = data();
    let a = tempfile::tempdir().unwrap();

    let first = run_grid_on(&grid, &train, &test, a.path(), &quiet(None)).unwrap();
    assert_eq!(first.records.len(), 18);
    assert_eq!((first.trained, first.skipped, first.pending), (18, 0, 0));
    assert!(first.records.iter().all(|r| r.status == RunStatus::Ok));
    let files = fs::read_dir(a.path().join("records")).unwrap().count();
    assert_eq!(files, 18);

    let again = run_grid_on(&grid, &train, &test, a.path(), &quiet(None)).unwrap();
    assert_eq!((again.trained, again.skipped), (0, 18));
    assert_eq!(again.records, first.records);

    // Interrupt after every five runs and resume until done.
    let b = tempfile::tempdir().unwrap();
    let mut rounds = 0;
    let resumed = loop {
        let o = run_grid_on(&grid, &train, &test, b.path(), &quiet(Some(5))).unwrap();
        rounds += 1;
        if o.pending == 0 {
            break o;
        }
        assert!(o.trained == 5);
    };
    assert_eq!(rounds, 4);
    assert_eq!(resumed.records.len(), 18);
    for (x, y) in first.records.iter().zip(&resumed.records) {
        assert!(x.same_outcome(y), "{} seed {} differs after restart", x.cell, x.seed);
    }

    let out = a.path().join("report");
    let bars = emit_report(&load_records(a.path()).unwrap(), &out).unwrap();
    assert_eq!(bars.len(), 6);
    assert!(bars.iter().all(|b| b.tta.n == 3 && b.single.n == 3));

    let mut rd = csv::Reader::from_path(out.join("results.csv")).unwrap();
    let header = rd.headers().unwrap().clone();
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let (reg, scheme, tta) = (col("regularized"), col("scheme"), col("tta_acc"));
    let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 18);
    assert_eq!(fs::read_to_string(out.join("results.csv")).unwrap().lines().count(), 19);

    let dat = fs::read_to_string(out.join("bars.dat")).unwrap();
    let lines: Vec<&str> = dat.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(lines.len(), 6);
    for line in lines {
        let f: Vec<&str> = line.split_whitespace().collect();
        let want_reg = (f[0] == "reg").to_string();
        let vals: Vec<f64> = rows
            .iter()
            .filter(|r| r[reg] == want_reg && &r[scheme] == f[1])
            .map(|r| r[tta].parse().unwrap())
            .collect();
        assert_eq!(vals.len(), 3);
        let mean = vals.iter().sum::<f64>() / 3.0;
        let plotted: f64 = f[3].parse().unwrap();
        assert!((mean - plotted).abs() < 1e-9, "{line}");
    }
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("with weight decay and dropout"));
}

#[test]
fn report_on_nothing_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(emit_report(&[], dir.path()), Err(Error::Usage(_))));
}

#[test]
fn failing_runs_are_recorded_and_not_retried() {
    let mut grid = tiny_grid();
    grid.regularization = vec![false];
    grid.schemes = vec![SchemeKind::None];
    grid.seeds = vec![0];
    let (train, _) = data();
    // Test images of the wrong size make evaluation fail after training.
    let test = synthetic_blobs(4, 8, 24, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();

    let o = run_grid_on(&grid, &train, &test, dir.path(), &quiet(None)).unwrap();
    assert_eq!(o.trained, 1);
    let rec = &o.records[0];
    assert_eq!(rec.status, RunStatus::Failed);
    assert!(rec.error.is_some());
    assert_eq!(rec.final_acc, None);

    let again = run_grid_on(&grid, &train, &test, dir.path(), &quiet(None)).unwrap();
    assert_eq!((again.trained, again.skipped), (0, 1));

    let out = dir.path().join("report");
    let bars = emit_report(&again.records, &out).unwrap();
    assert!(bars.is_empty());
    let csv = fs::read_to_string(out.join("results.csv")).unwrap();
    assert!(csv.contains("failed"));
}
