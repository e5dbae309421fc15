use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::error::{invalid_arg, Error, Result};
use crate::image::Image;
use crate::metrics::{
    binarize, format_sig6, psnr, sign_test, time_inference, uncertainty_stats, ImageMetrics, MetricsReport,
    PsnrValue, SignTest, TimingSummary, UncertaintyStats,
};
use crate::models::{HeadMode, Model, ModelConfig, Task};
use crate::rng::RngState;
use crate::synthdata::{
    generate_dataset, generate_sample, pgm, DatasetManifest, DatasetSpec, DatasetTask, Sample, Split,
};

use super::config::{EvaluationConfig, ExperimentConfig, MetricKind};
use super::train::{predict, train_model, PredictMode, Prediction};

pub const RUN_RECORD_FILE: &str = "run_record.json";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
const RECORD_VERSION: u32 = 1;

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(crate::synthdata::sha256_hex(&bytes))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path.display().to_string(), e))?;
    write_text(path, &(text + "\n"))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path.display().to_string(), e))
}

/// Creates `dir`, refusing a non-empty existing directory unless `force`.
pub fn prepare_output_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let non_empty = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?.next().is_some();
        if non_empty && !force {
            return Err(Error::OutputExists(dir.to_path_buf()));
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub manifest: PathBuf,
    pub dataset_hash: String,
    pub train: usize,
    pub test: usize,
    pub mean_mask_fraction: f64,
    /// Mean PSNR of degraded inputs against their clean targets.
    pub mean_input_psnr_db: f64,
}

pub fn cmd_generate(spec: &DatasetSpec, dir: &Path, threads: usize, force: bool) -> Result<DatasetSummary> {
    spec.validate()?;
    prepare_output_dir(dir, force)?;
    let manifest = generate_dataset(spec, dir, threads)?;
    let mut samples = manifest.load_split(dir, Split::Train)?;
    samples.extend(manifest.load_split(dir, Split::Test)?);
    let n = samples.len() as f64;
    let mean_mask_fraction = samples.iter().map(|s| s.mask.area_fraction()).sum::<f64>() / n;
    let mut psnr_sum = 0.0;
    for s in &samples {
        psnr_sum += psnr(&s.degraded, &s.clean, 1.0)?.as_f64().min(100.0);
    }
    Ok(DatasetSummary {
        manifest: dir.join(crate::synthdata::MANIFEST_FILE),
        dataset_hash: manifest.dataset_hash.clone(),
        train: manifest.entries(Split::Train).count(),
        test: manifest.entries(Split::Test).count(),
        mean_mask_fraction,
        mean_input_psnr_db: psnr_sum / n,
    })
}

/// A loaded split together with the sample ids from the manifest.
pub struct LoadedSplit {
    pub manifest: DatasetManifest,
    pub ids: Vec<usize>,
    pub samples: Vec<Sample>,
}

pub fn load_split(dir: &Path, split: Split) -> Result<LoadedSplit> {
    let manifest = DatasetManifest::load(dir)?;
    let ids = manifest.entries(split).map(|e| e.id).collect();
    let samples = manifest.load_split(dir, split)?;
    Ok(LoadedSplit { manifest, ids, samples })
}

fn check_task(dataset: DatasetTask, task: Task) -> Result<()> {
    let ok = match dataset {
        DatasetTask::Both => true,
        DatasetTask::Segmentation => task == Task::Segmentation,
        DatasetTask::Reconstruction => task == Task::Reconstruction,
    };
    if !ok {
        return Err(invalid_arg!("{task:?} model cannot be evaluated on a {dataset:?} dataset"));
    }
    Ok(())
}

fn model_id(model: &Model) -> Result<String> {
    Ok(crate::synthdata::sha256_hex(&checkpoint::encode(model)?)[..16].to_string())
}

/// Metrics and data-uncertainty statistics of `model` on `samples`.
pub struct Evaluation {
    pub report: MetricsReport,
    pub uncertainty: Option<UncertaintyStats>,
}

pub fn evaluate_model(
    model: &Model,
    ids: &[usize],
    samples: &[Sample],
    eval: &EvaluationConfig,
    dataset_id: &str,
) -> Result<Evaluation> {
    let task = model.config().task;
    eval.validate(task)?;
    let refs: Vec<&Sample> = samples.iter().collect();
    let preds = predict(model, &refs, PredictMode::Single)?;
    let selected = eval.selected(task);
    let mut per_image = Vec::with_capacity(samples.len());
    let mut stats = Vec::new();
    for ((&id, s), p) in ids.iter().zip(samples).zip(&preds) {
        let (mut m, pred_mask) = match task {
            Task::Segmentation => {
                let pm = binarize(&p.output, eval.threshold);
                (ImageMetrics::segmentation(id, &pm, &s.mask, eval.patch)?, pm)
            }
            Task::Reconstruction => (ImageMetrics::reconstruction(id, &p.output, &s.clean)?, s.mask.clone()),
        };
        keep_only(&mut m, &selected);
        per_image.push(m);
        if let Some(v) = &p.variance {
            stats.push(uncertainty_stats(v, &s.mask, &pred_mask)?);
        }
    }
    let report = MetricsReport::new(
        model_id(model)?,
        dataset_id.to_string(),
        model.config().seed,
        eval.threshold,
        per_image,
    );
    let uncertainty = (!stats.is_empty()).then(|| UncertaintyStats::pooled(&stats));
    Ok(Evaluation { report, uncertainty })
}

fn keep_only(m: &mut ImageMetrics, selected: &[MetricKind]) {
    let has = |k| selected.contains(&k);
    if !has(MetricKind::Dice) {
        m.dice = None;
    }
    if !has(MetricKind::Jaccard) {
        m.jaccard = None;
    }
    if !has(MetricKind::Err) {
        m.err = None;
    }
    if !has(MetricKind::Hc) {
        m.hc = None;
    }
    if !has(MetricKind::Mc) {
        m.mc = None;
    }
    if !has(MetricKind::Psnr) {
        m.psnr = None;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub format_version: u32,
    /// Fully resolved config, defaults included.
    pub config: ExperimentConfig,
    pub dataset_hash: String,
    pub loss_curve: Vec<f64>,
    pub metrics: MetricsReport,
    pub uncertainty: Option<UncertaintyStats>,
    /// Single-image forward pass.
    pub timing: TimingSummary,
    pub training_seconds: f64,
    /// File name → SHA-256 of every artifact in the run directory.
    pub artifacts: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

impl RunRecord {
    /// Accepts a run directory or the record file itself.
    pub fn load(path: &Path) -> Result<Self> {
        let file = if path.is_dir() { path.join(RUN_RECORD_FILE) } else { path.to_path_buf() };
        let record: Self = read_json(&file)?;
        if record.format_version != RECORD_VERSION {
            return Err(Error::format(
                file.display().to_string(),
                format!("unsupported run record version {}", record.format_version),
            ));
        }
        Ok(record)
    }
}

/// Trains, evaluates on the test split, and writes the run directory.
pub fn cmd_train(config: &ExperimentConfig, force: bool) -> Result<RunRecord> {
    config.validate()?;
    let train = load_split(&config.dataset.dir, Split::Train)?;
    check_task(train.manifest.spec.task, config.model.task)?;
    let test = load_split(&config.dataset.dir, Split::Test)?;
    let out = &config.out_dir;
    prepare_output_dir(out, force)?;

    let outcome = train_model(config, &train.samples)?;
    let ckpt = out.join(CHECKPOINT_FILE);
    checkpoint::save(&outcome.model, &ckpt)?;
    let hash = &train.manifest.dataset_hash;
    let eval = evaluate_model(&outcome.model, &test.ids, &test.samples, &config.evaluation, hash)?;
    let probe = super::train::input_batch(&test.samples.iter().take(1).collect::<Vec<_>>())?;
    let timing = time_inference(5, || outcome.model.forward(&probe, false, &mut RngState::new(0)).map(|_| ()))?;

    eval.report.write_json(&out.join("metrics.json"))?;
    eval.report.write_csv(&out.join("metrics.csv"))?;
    write_text(&out.join("resolved_config.toml"), &config.to_toml()?)?;
    let mut artifacts = BTreeMap::new();
    for name in [CHECKPOINT_FILE, "metrics.json", "metrics.csv", "resolved_config.toml"] {
        artifacts.insert(name.to_string(), sha256_file(&out.join(name))?);
    }
    let record = RunRecord {
        format_version: RECORD_VERSION,
        config: config.clone(),
        dataset_hash: hash.clone(),
        loss_curve: outcome.loss_curve,
        metrics: eval.report,
        uncertainty: eval.uncertainty,
        timing,
        training_seconds: outcome.seconds,
        artifacts,
        warnings: outcome.warnings,
    };
    write_json(&out.join(RUN_RECORD_FILE), &record)?;
    Ok(record)
}

/// Retrains from a record's config and returns the fresh metrics, without
/// touching the filesystem beyond reading the dataset.
pub fn replay(record: &RunRecord) -> Result<MetricsReport> {
    let cfg = &record.config;
    let train = load_split(&cfg.dataset.dir, Split::Train)?;
    if train.manifest.dataset_hash != record.dataset_hash {
        return Err(invalid_arg!("dataset at {} changed since the run", cfg.dataset.dir.display()));
    }
    let test = load_split(&cfg.dataset.dir, Split::Test)?;
    let outcome = train_model(cfg, &train.samples)?;
    Ok(evaluate_model(&outcome.model, &test.ids, &test.samples, &cfg.evaluation, &record.dataset_hash)?.report)
}

pub fn cmd_evaluate(
    checkpoint_path: &Path,
    dataset: &Path,
    eval: &EvaluationConfig,
    out: &Path,
    force: bool,
) -> Result<MetricsReport> {
    let model = checkpoint::load(checkpoint_path)?;
    let test = load_split(dataset, Split::Test)?;
    check_task(test.manifest.spec.task, model.config().task)?;
    prepare_output_dir(out, force)?;
    let e = evaluate_model(&model, &test.ids, &test.samples, eval, &test.manifest.dataset_hash)?;
    e.report.write_json(&out.join("metrics.json"))?;
    e.report.write_csv(&out.join("metrics.csv"))?;
    if let Some(u) = &e.uncertainty {
        write_json(&out.join("uncertainty.json"), u)?;
    }
    Ok(e.report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertaintySource {
    /// `exp(log-variance)` from the dual head.
    Data,
    /// Variance across dropout passes.
    Model,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageUncertainty {
    pub id: usize,
    pub stats: UncertaintyStats,
    pub heatmap: PathBuf,
    /// Variance mapped to black and white in the heat map.
    pub normalization: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyAnalysis {
    pub source: UncertaintySource,
    pub mc_samples: Option<usize>,
    pub per_image: Vec<ImageUncertainty>,
    pub pooled: UncertaintyStats,
}

pub fn cmd_analyze_uncertainty(
    checkpoint_path: &Path,
    dataset: &Path,
    mc_samples: Option<usize>,
    seed: u64,
    threshold: f64,
    out: &Path,
    force: bool,
) -> Result<UncertaintyAnalysis> {
    let model = checkpoint::load(checkpoint_path)?;
    let (source, mode) = match (mc_samples, model.config().head_mode) {
        (Some(samples), _) => (UncertaintySource::Model, PredictMode::McDropout { samples, seed }),
        (None, HeadMode::Dual) => (UncertaintySource::Data, PredictMode::Single),
        (None, HeadMode::Single) => {
            return Err(Error::InvalidState(
                "single-head checkpoint has no data uncertainty; request Monte-Carlo dropout samples".into(),
            ))
        }
    };
    let test = load_split(dataset, Split::Test)?;
    check_task(test.manifest.spec.task, model.config().task)?;
    prepare_output_dir(out, force)?;
    let heat_dir = out.join("heatmaps");
    fs::create_dir_all(&heat_dir).map_err(|e| Error::io(&heat_dir, e))?;
    let preds = predict(&model, &test.samples.iter().collect::<Vec<_>>(), mode)?;
    let mut per_image = Vec::with_capacity(preds.len());
    for ((&id, s), p) in test.ids.iter().zip(&test.samples).zip(&preds) {
        let Prediction { output, variance } = p;
        let v = variance.as_ref().expect("variance produced in both modes");
        let pred_mask = match model.config().task {
            Task::Segmentation => binarize(output, threshold),
            Task::Reconstruction => s.mask.clone(),
        };
        let stats = uncertainty_stats(v, &s.mask, &pred_mask)?;
        let (lo, hi) = v.min_max();
        let rel = PathBuf::from("heatmaps").join(format!("{id:05}_variance.pgm"));
        let path = out.join(&rel);
        fs::write(&path, pgm::encode_normalized16(v, lo, hi)).map_err(|e| Error::io(&path, e))?;
        per_image.push(ImageUncertainty {
            id,
            stats,
            heatmap: rel,
            normalization: [lo, hi],
        });
    }
    let pooled = UncertaintyStats::pooled(&per_image.iter().map(|u| u.stats.clone()).collect::<Vec<_>>());
    let analysis = UncertaintyAnalysis {
        source,
        mc_samples,
        per_image,
        pooled,
    };
    write_json(&out.join("uncertainty.json"), &analysis)?;
    write_text(&out.join("uncertainty_bars.svg"), &bar_chart(&analysis.pooled))?;
    Ok(analysis)
}

/// Grouped bar chart of the four pooled partition means.
pub fn bar_chart(u: &UncertaintyStats) -> String {
    let bars = [
        ("foreground", u.mean_var_foreground, "#4c72b0"),
        ("background", u.mean_var_background, "#dd8452"),
        ("correct", u.mean_var_correct, "#55a868"),
        ("incorrect", u.mean_var_incorrect, "#c44e52"),
    ];
    let max = bars.iter().filter_map(|b| b.1).fold(0.0f64, f64::max);
    let scale = if max > 0.0 { 200.0 / max } else { 0.0 };
    let mut svg = String::from(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"420\" height=\"300\" font-family=\"sans-serif\" font-size=\"11\">\n",
    );
    svg.push_str("<text x=\"210\" y=\"16\" text-anchor=\"middle\" font-size=\"13\">mean predicted variance</text>\n");
    for (i, (label, value, color)) in bars.iter().enumerate() {
        let x = 30 + i * 95 + if i >= 2 { 20 } else { 0 };
        let h = value.unwrap_or(0.0) * scale;
        let y = 250.0 - h;
        let text = value.map(format_sig6).unwrap_or_else(|| "n/a".into());
        let _ = writeln!(svg, "<rect x=\"{x}\" y=\"{y:.2}\" width=\"60\" height=\"{h:.2}\" fill=\"{color}\"/>");
        let _ = writeln!(svg, "<text x=\"{}\" y=\"{:.2}\" text-anchor=\"middle\">{text}</text>", x + 30, y - 4.0);
        let _ = writeln!(svg, "<text x=\"{}\" y=\"266\" text-anchor=\"middle\">{label}</text>", x + 30);
    }
    svg.push_str("<line x1=\"20\" y1=\"250\" x2=\"410\" y2=\"250\" stroke=\"black\"/>\n</svg>\n");
    svg
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub variant: String,
    pub passes: usize,
    pub timing: TimingSummary,
    pub ratio_to_baseline: f64,
}

/// Rebuilds `config` with another head, reusing every matching parameter of `src`.
fn with_head(src: &Model, head_mode: HeadMode) -> Result<Model> {
    if src.config().head_mode == head_mode {
        return Ok(src.clone());
    }
    let config = ModelConfig {
        head_mode,
        ..src.config().clone()
    };
    let mut target = Model::build(config)?;
    let names = target.param_names();
    let src_names = src.param_names();
    for (i, name) in names.iter().enumerate() {
        if let Some(j) = src_names.iter().position(|n| n == name) {
            target.params_mut()[i] = src.params()[j].clone();
        }
    }
    Ok(target)
}

/// Times a single-head pass, a dual-head pass and `samples` dropout passes
/// on one image; writes `timing.csv`.
pub fn cmd_benchmark_time(
    checkpoint_path: &Path,
    samples: usize,
    repeats: usize,
    out: &Path,
    force: bool,
) -> Result<Vec<BenchmarkRow>> {
    let model = checkpoint::load(checkpoint_path)?;
    let single = with_head(&model, HeadMode::Single)?;
    let dual = with_head(&model, HeadMode::Dual)?;
    let cfg = model.config();
    let spec = DatasetSpec {
        image_size: cfg.input_size,
        ..DatasetSpec::desk_scale(cfg.seed)
    };
    let probe = generate_sample(&spec, 0)?;
    let x = Image::stack(&[&probe.degraded])?;
    prepare_output_dir(out, force)?;

    let base = time_inference(repeats, || single.forward(&x, false, &mut RngState::new(0)).map(|_| ()))?;
    let du = time_inference(repeats, || dual.forward(&x, false, &mut RngState::new(0)).map(|_| ()))?;
    let rng = RngState::new(cfg.seed);
    let mc = time_inference(repeats, || single.forward_mc_dropout(&x, samples, &rng).map(|_| ()))?;
    let b = base.median_s;
    let rows = vec![
        BenchmarkRow {
            variant: "single_head".into(),
            passes: 1,
            ratio_to_baseline: 1.0,
            timing: base,
        },
        BenchmarkRow {
            variant: "dual_head".into(),
            passes: 1,
            ratio_to_baseline: du.median_s / b,
            timing: du,
        },
        BenchmarkRow {
            variant: "mc_dropout".into(),
            passes: samples,
            ratio_to_baseline: mc.median_s / b,
            timing: mc,
        },
    ];
    let mut csv = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::format("timing csv", e);
    csv.write_record(["variant", "passes", "median_ms", "iqr_ms", "ratio_to_baseline", "repeats"])
        .map_err(csv_err)?;
    for r in &rows {
        csv.write_record([
            r.variant.clone(),
            r.passes.to_string(),
            format_sig6(r.timing.median_s * 1e3),
            format_sig6(r.timing.iqr_s * 1e3),
            format_sig6(r.ratio_to_baseline),
            r.timing.measurements_s.len().to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = csv.into_inner().map_err(|e| Error::format("timing csv", e.to_string()))?;
    let path = out.join("timing.csv");
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    write_json(&out.join("timing.json"), &rows)?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedDiff {
    pub id: usize,
    pub a: f64,
    pub b: f64,
    /// `b - a`.
    pub diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub dataset_hash: String,
    pub run_a: String,
    pub run_b: String,
    /// Metric used for the paired test (Dice or PSNR).
    pub primary_metric: String,
    /// Mean `b - a` of every metric both runs report.
    pub mean_deltas: BTreeMap<String, f64>,
    pub paired: Vec<PairedDiff>,
    pub sign_test: SignTest,
}

fn metric_values(m: &ImageMetrics) -> [(&'static str, Option<f64>); 6] {
    [
        ("dice", m.dice),
        ("jaccard", m.jaccard),
        ("err", m.err),
        ("hc", m.hc),
        ("mc", m.mc),
        ("psnr", m.psnr.map(PsnrValue::as_f64)),
    ]
}

pub fn cmd_compare(run_a: &Path, run_b: &Path, out: Option<&Path>, force: bool) -> Result<Comparison> {
    let (a, b) = (RunRecord::load(run_a)?, RunRecord::load(run_b)?);
    let cmp = compare_records(&a, &b)?;
    if let Some(out) = out {
        prepare_output_dir(out, force)?;
        write_json(&out.join("comparison.json"), &cmp)?;
    }
    Ok(cmp)
}

pub fn compare_records(a: &RunRecord, b: &RunRecord) -> Result<Comparison> {
    if a.dataset_hash != b.dataset_hash {
        return Err(invalid_arg!(
            "runs used different datasets ({} vs {})",
            a.dataset_hash,
            b.dataset_hash
        ));
    }
    let primary = match a.config.model.task {
        Task::Segmentation => "dice",
        Task::Reconstruction => "psnr",
    };
    let by_id: BTreeMap<usize, &ImageMetrics> = b.metrics.per_image.iter().map(|m| (m.id, m)).collect();
    let mut sums: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    let mut paired = Vec::new();
    for ma in &a.metrics.per_image {
        let Some(mb) = by_id.get(&ma.id) else { continue };
        for ((name, va), (_, vb)) in metric_values(ma).into_iter().zip(metric_values(mb)) {
            if let (Some(x), Some(y)) = (va, vb) {
                if x.is_finite() && y.is_finite() {
                    let e = sums.entry(name).or_default();
                    e.0 += y - x;
                    e.1 += 1;
                    if name == primary {
                        paired.push(PairedDiff {
                            id: ma.id,
                            a: x,
                            b: y,
                            diff: y - x,
                        });
                    }
                }
            }
        }
    }
    let diffs: Vec<f64> = paired.iter().map(|p| p.diff).collect();
    Ok(Comparison {
        dataset_hash: a.dataset_hash.clone(),
        run_a: a.config.out_dir.display().to_string(),
        run_b: b.config.out_dir.display().to_string(),
        primary_metric: primary.into(),
        mean_deltas: sums.into_iter().map(|(k, (s, n))| (k.to_string(), s / n as f64)).collect(),
        sign_test: sign_test(&diffs),
        paired,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn refuses_non_empty_output_without_force() {
        let dir = tempfile::tempdir().unwrap();
        prepare_output_dir(dir.path(), false).unwrap();
        fs::write(dir.path().join("x"), "1").unwrap();
        assert!(matches!(prepare_output_dir(dir.path(), false), Err(Error::OutputExists(_))));
        prepare_output_dir(dir.path(), true).unwrap();
    }

    #[test]
    fn bar_chart_marks_absent_partitions() {
        let u = UncertaintyStats {
            mean_var_foreground: Some(0.5),
            mean_var_background: Some(2.0),
            mean_var_correct: Some(1.0),
            mean_var_incorrect: None,
            ..Default::default()
        };
        let svg = bar_chart(&u);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("n/a"));
        assert_eq!(svg.matches("<rect").count(), 4);
    }

    #[test]
    fn head_swap_keeps_backbone() {
        let mut c = ModelConfig::new(Task::Segmentation, HeadMode::Dual);
        c.base_channels = 2;
        c.depth = 1;
        c.input_size = (8, 8);
        let dual = Model::build(c).unwrap();
        let single = with_head(&dual, HeadMode::Single).unwrap();
        assert_eq!(single.params().len() + 4, dual.params().len());
        for (n, p) in single.param_names().iter().zip(single.params()) {
            let j = dual.param_names().iter().position(|m| m == n).unwrap();
            assert_eq!(p, &dual.params()[j]);
        }
    }
}
