use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use noiseaware::experiment::RunRecord;
use noiseaware::metrics::MetricsReport;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_noiseaware"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin().args(args).current_dir(cwd).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: &Output) {
    assert!(o.status.success(), "exit {:?}\nstderr: {}", o.status, stderr(o));
}

fn write_config(dir: &Path, name: &str, loss: &str, head: &str, out: &str) -> String {
    let task = if loss.ends_with("reg") || loss == "mse" { "reconstruction" } else { "segmentation" };
    let text = format!(
        r#"out_dir = "{out}"

[dataset]
dir = "data"

[dataset.generate]
n = 10
seed = 3

[model]
task = "{task}"
head_mode = "{head}"
base_channels = 2
depth = 2
input_size = [64, 64]

[training]
loss = "{loss}"
epochs = 1
batch_size = 4
seed = 5
"#
    );
    fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

#[test]
fn full_workflow() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let du = write_config(d, "du.toml", "het_cls", "dual", "runs/du");
    let ce = write_config(d, "ce.toml", "ce", "single", "runs/ce");

    let o = run(&["generate", "--config", &du], d);
    ok(&o);
    assert!(d.join("data/manifest.json").exists());
    assert!(d.join("data/samples/00000_degraded.pgm").exists());

    let o = run(&["generate", "--config", &du], d);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("error[output-exists]"), "{}", stderr(&o));

    ok(&run(&["train", "--config", &du], d));
    ok(&run(&["train", "--config", &ce], d));
    for f in ["model.ckpt", "metrics.json", "metrics.csv", "resolved_config.toml", "run_record.json"] {
        assert!(d.join("runs/du").join(f).exists(), "missing {f}");
    }
    let record = RunRecord::load(&d.join("runs/du")).unwrap();
    assert_eq!(record.loss_curve.len(), 1);
    assert!(record.uncertainty.is_some());
    let csv = fs::read_to_string(d.join("runs/du/metrics.csv")).unwrap();
    assert!(csv.starts_with("id,dice,jaccard,err,hc,mc,psnr"));
    assert_eq!(csv.lines().count(), 2 + 2, "header, 2 test rows, mean row");

    let o = run(
        &["evaluate", "--checkpoint", "runs/du/model.ckpt", "--dataset", "data", "--out", "eval"],
        d,
    );
    ok(&o);
    let report = MetricsReport::read_json(&d.join("eval/metrics.json")).unwrap();
    assert_eq!(report.per_image, record.metrics.per_image);

    let o = run(
        &["analyze-uncertainty", "--checkpoint", "runs/du/model.ckpt", "--dataset", "data", "--out", "unc"],
        d,
    );
    ok(&o);
    assert!(d.join("unc/uncertainty.json").exists());
    assert!(d.join("unc/uncertainty_bars.svg").exists());
    assert!(fs::read_dir(d.join("unc/heatmaps")).unwrap().count() >= 2);

    let o = run(
        &["analyze-uncertainty", "--checkpoint", "runs/ce/model.ckpt", "--dataset", "data", "--out", "unc-ce"],
        d,
    );
    assert!(stderr(&o).contains("error[invalid-state]"), "{}", stderr(&o));
    let o = run(
        &[
            "analyze-uncertainty",
            "--checkpoint",
            "runs/ce/model.ckpt",
            "--dataset",
            "data",
            "--mc-samples",
            "3",
            "--out",
            "unc-ce",
        ],
        d,
    );
    ok(&o);

    let o = run(
        &["benchmark-time", "--checkpoint", "runs/du/model.ckpt", "--repeats", "5", "--out", "timing"],
        d,
    );
    ok(&o);
    let timing = fs::read_to_string(d.join("timing/timing.csv")).unwrap();
    for v in ["single_head", "dual_head", "mc_dropout"] {
        assert!(timing.contains(v), "{timing}");
    }

    let o = run(&["compare", "runs/du", "runs/ce", "--out", "cmp"], d);
    ok(&o);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("sign_test"), "{text}");
}

#[test]
fn argument_errors_exit_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["train", "--bogus"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error[invalid-argument]"), "{}", stderr(&o));
    let o = run(&["frobnicate"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn runtime_errors_are_classified() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let o = run(&["train"], d);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("error[invalid-argument]"), "{}", stderr(&o));

    let o = run(&["train", "--config", "missing.toml"], d);
    assert!(stderr(&o).contains("error[io]") && stderr(&o).contains("missing.toml"), "{}", stderr(&o));

    fs::write(d.join("bad.toml"), "out_dir = 3").unwrap();
    let o = run(&["train", "--config", "bad.toml"], d);
    assert!(stderr(&o).contains("error[format]"), "{}", stderr(&o));

    let o = run(&["evaluate", "--checkpoint", "nope.ckpt", "--dataset", "data"], d);
    assert!(stderr(&o).contains("error[io]"), "{}", stderr(&o));
}

#[test]
fn help_and_version_succeed() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["--help"], tmp.path());
    ok(&o);
    let text = String::from_utf8_lossy(&o.stdout);
    for cmd in ["generate", "train", "evaluate", "analyze-uncertainty", "benchmark-time", "compare"] {
        assert!(text.contains(cmd), "{text}");
    }
    ok(&run(&["--version"], tmp.path()));
}
