use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use augablate::arch::Network;
use augablate::augment::{apply_scheme, Scheme, SchemeKind};
use augablate::data::{load_cifar, CifarVariant, Split};
use augablate::harness::{self, ExperimentConfig, ExperimentGrid, GridOptions};
use augablate::image::Image;
use augablate::rng::{self, Domain};
use augablate::Result;

#[derive(Parser)]
#[command(name = "augablate", version, about = "Augmentation vs. explicit regularization ablations")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    Cifar10,
    Cifar100,
}

#[derive(Subcommand)]
enum Cmd {
    /// Augment one PNG with a scheme and write the result.
    AugmentPreview {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "heavier")]
        scheme: SchemeKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and evaluate a single configuration.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Directory for the checkpoint and result record.
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        #[arg(long)]
        quiet: bool,
    },
    /// Accuracy of a checkpoint on a CIFAR test split.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Number of light-augmented views to average.
        #[arg(long)]
        tta: Option<usize>,
        #[arg(long, value_enum, default_value = "cifar10")]
        variant: Variant,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run (or resume) a regularization × augmentation grid.
    Ablate {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Train at most this many new runs, then stop.
        #[arg(long)]
        max_new_runs: Option<usize>,
        #[arg(long)]
        quiet: bool,
    },
    /// Build CSV, bar data and summary from a grid's records.
    Report {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn preview(input: &Path, scheme: SchemeKind, seed: u64, out: &Path) -> Result<()> {
    let img = Image::load_png(input)?;
    let mut r = rng::keyed(seed, Domain::Augment, 0, 0);
    apply_scheme(&img, &Scheme::new(scheme), &mut r)?.save_png(out)
}

fn train_one(config: &Path, out: &Path, verbose: bool) -> Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    let (train_set, test_set) = cfg.data.load()?;
    fs::create_dir_all(out)?;
    let hash = cfg.hash();
    let ckpt = out.join(format!("{hash}.augb"));
    let rec = harness::execute_run(&cfg, &train_set, &test_set, Some(&ckpt), verbose)?;
    fs::write(out.join(format!("{hash}.json")), serde_json::to_vec_pretty(&rec)?)?;
    match (&rec.error, rec.final_acc, rec.tta_acc) {
        (None, Some(a), Some(t)) => {
            println!("{} seed {}: accuracy {a:.4}, tta {t:.4}", rec.cell, rec.seed);
            println!("checkpoint {}", ckpt.display());
            Ok(())
        }
        (err, ..) => Err(augablate::Error::Usage(format!(
            "run failed: {}",
            err.as_deref().unwrap_or("unknown")
        ))),
    }
}

fn evaluate(checkpoint: &Path, data: &Path, tta: Option<usize>, variant: Variant, seed: u64) -> Result<()> {
    let mut net = Network::<f32>::load(checkpoint)?;
    let variant = match variant {
        Variant::Cifar10 => CifarVariant::Cifar10,
        Variant::Cifar100 => CifarVariant::Cifar100,
    };
    let test = load_cifar(data, variant, Split::Test)?;
    let acc = harness::evaluate(&mut net, &test, None)?;
    println!("accuracy {acc:.4} ({} images)", test.len());
    if let Some(n) = tta {
        let t = harness::evaluate_tta(&mut net, &test, n, seed, None)?;
        println!("tta accuracy {t:.4} ({n} views)");
    }
    Ok(())
}

fn ablate(grid: &Path, out: &Path, max_new_runs: Option<usize>, verbose: bool) -> Result<()> {
    let g = ExperimentGrid::load(grid)?;
    let outcome = harness::run_grid(&g, out, &GridOptions { max_new_runs, verbose })?;
    println!(
        "{} trained, {} already done, {} pending",
        outcome.trained, outcome.skipped, outcome.pending
    );
    if !outcome.records.is_empty() {
        harness::emit_report(&outcome.records, out)?;
        print!("{}", fs::read_to_string(out.join("summary.txt"))?);
    }
    Ok(())
}

fn report(results: &Path, out: &Path) -> Result<()> {
    let records = harness::load_records(results)?;
    harness::emit_report(&records, out)?;
    print!("{}", fs::read_to_string(out.join("summary.txt"))?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::AugmentPreview {
            input,
            scheme,
            seed,
            out,
        } => preview(&input, scheme, seed, &out),
        Cmd::Train { config, out, quiet } => train_one(&config, &out, !quiet),
        Cmd::Evaluate {
            checkpoint,
            data,
            tta,
            variant,
            seed,
        } => evaluate(&checkpoint, &data, tta, variant, seed),
        Cmd::Ablate {
            grid,
            out,
            max_new_runs,
            quiet,
        } => ablate(&grid, &out, max_new_runs, !quiet),
        Cmd::Report { results, out } => report(&results, &out),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
