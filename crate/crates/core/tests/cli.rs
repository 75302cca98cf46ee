use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use augablate::harness::ExperimentGrid;
use augablate::image::Image;

fn augablate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_augablate")).args(args).output().unwrap()
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn gradient(side: usize) -> Image {
    let mut img = Image::zeros(side, side, 3);
    for r in 0..side {
        for c in 0..side {
            for ch in 0..3 {
                img.set(r, c, ch, ((r + 2 * c + ch) % side) as f32 / side as f32);
            }
        }
    }
    img
}

#[test]
fn preview_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.png");
    gradient(16).save_png(&input).unwrap();
    let run = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        let o = augablate(&[
            "augment-preview",
            "--in",
            input.to_str().unwrap(),
            "--scheme",
            "heavier",
            "--seed",
            seed,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        Image::load_png(&out).unwrap()
    };
    let a = run("5", "a.png");
    assert_eq!(a, run("5", "b.png"));
    assert_ne!(a, run("6", "c.png"));
    assert_eq!((a.height(), a.width(), a.channels()), (16, 16, 3));
}

#[test]
fn ablate_then_report_reproduces_the_summary() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("grid.toml");
    fs::write(
        &grid,
        r#"
seeds = [0]
schemes = ["none"]
tta_views = 2

[arch]
name = "allcnn-cifar"
width_scale = "1/8"

[data]
source = "synthetic"
classes = 4
train_size = 64
test_size = 16

[train]
base_lr = 0.05
batch_size = 32
epochs = 1
schedule = []
"#,
    )
    .unwrap();
    let out = dir.path().join("grid");
    let o = augablate(&["ablate", "--grid", grid.to_str().unwrap(), "--out", out.to_str().unwrap(), "--quiet"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("2 trained"), "{stdout}");

    let again = augablate(&["ablate", "--grid", grid.to_str().unwrap(), "--out", out.to_str().unwrap(), "--quiet"]);
    assert!(String::from_utf8_lossy(&again.stdout).contains("0 trained, 2 already done"));

    let rep = dir.path().join("rep");
    let o = augablate(&["report", "--results", out.to_str().unwrap(), "--out", rep.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(
        fs::read_to_string(rep.join("summary.txt")).unwrap(),
        fs::read_to_string(out.join("summary.txt")).unwrap()
    );
    assert_eq!(fs::read_to_string(rep.join("results.csv")).unwrap().lines().count(), 3);
}

#[test]
fn bad_input_exits_nonzero_with_a_message() {
    let o = augablate(&["report", "--results", "/nonexistent/grid", "--out", "/tmp/unused"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn shipped_configs_parse() {
    let desk = ExperimentGrid::load(&configs().join("desk.toml")).unwrap();
    assert_eq!(desk, ExperimentGrid::desk("data/cifar-10-batches-bin"));
    let synthetic = ExperimentGrid::load(&configs().join("grid-synthetic.toml")).unwrap();
    assert_eq!(synthetic.runs().len(), 18);
    augablate::harness::ExperimentConfig::load(&configs().join("smoke.toml")).unwrap();
}
