use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use noiseaware::experiment::{
    cmd_analyze_uncertainty, cmd_benchmark_time, cmd_compare, cmd_evaluate, cmd_generate, cmd_train,
    DatasetSection, EvaluationConfig, ExperimentConfig,
};
use noiseaware::synthdata::DatasetSpec;
use noiseaware::{Error, Result};

/// Train and analyse noise-aware dense prediction models on synthetic ridge images.
#[derive(Parser, Debug)]
#[command(name = "noiseaware", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Write into a non-empty output directory.
    #[arg(long, global = true)]
    force: bool,
    /// Worker threads for dataset generation.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset and its manifest.
    Generate,
    /// Train the configured model and evaluate it on the test split.
    Train,
    /// Evaluate a checkpoint on a dataset's test split.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Per-partition uncertainty statistics, bar chart and heat maps.
    AnalyzeUncertainty {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Use this many dropout passes (model uncertainty) instead of the log-variance head.
        #[arg(long)]
        mc_samples: Option<usize>,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
    /// Time single-head, dual-head and Monte-Carlo dropout inference.
    BenchmarkTime {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dropout passes per Monte-Carlo prediction.
        #[arg(long, default_value_t = 5)]
        samples: usize,
        #[arg(long, default_value_t = 20)]
        repeats: usize,
    },
    /// Paired comparison of two runs on the same dataset.
    Compare { run_a: PathBuf, run_b: PathBuf },
}

fn load_config(g: &Global) -> Result<ExperimentConfig> {
    let path = g
        .config
        .as_deref()
        .ok_or_else(|| Error::InvalidArgument("this command needs --config".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = g.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(out) = &g.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn out_dir(g: &Global, default: &str) -> PathBuf {
    g.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidState(e.to_string()))?;
    println!("{text}");
    Ok(())
}

/// The `[dataset]` table of an experiment config; other tables are ignored.
#[derive(Deserialize)]
struct GenerateFile {
    dataset: DatasetSection,
}

fn generate(g: &Global) -> Result<()> {
    let (mut spec, dir) = match &g.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.to_path_buf(),
                source: e,
            })?;
            let file: GenerateFile = toml::from_str(&text).map_err(|e| Error::Format {
                context: path.display().to_string(),
                message: e.to_string().trim_end().to_string(),
            })?;
            let spec = file.dataset.generate.ok_or_else(|| {
                Error::InvalidArgument(format!("{}: missing [dataset.generate]", path.display()))
            })?;
            (spec, file.dataset.dir)
        }
        None => (DatasetSpec::desk_scale(0), PathBuf::from("dataset")),
    };
    if let Some(seed) = g.seed {
        spec.seed = seed;
    }
    let dir = g.out.clone().unwrap_or(dir);
    let summary = cmd_generate(&spec, &dir, g.threads, g.force)?;
    println!("{}", summary.manifest.display());
    print_json(&summary)
}

fn evaluation_config(g: &Global) -> Result<EvaluationConfig> {
    match &g.config {
        Some(_) => Ok(load_config(g)?.evaluation),
        None => Ok(EvaluationConfig::default()),
    }
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::Generate => generate(g),
        Command::Train => {
            let cfg = load_config(g)?;
            let record = cmd_train(&cfg, g.force)?;
            for w in &record.warnings {
                eprintln!("warning: {w}");
            }
            println!("{}", cfg.out_dir.join(noiseaware::experiment::RUN_RECORD_FILE).display());
            print_json(&record.metrics.mean)
        }
        Command::Evaluate { checkpoint, dataset } => {
            let eval = evaluation_config(g)?;
            let report = cmd_evaluate(&checkpoint, &dataset, &eval, &out_dir(g, "evaluation"), g.force)?;
            print_json(&report.mean)
        }
        Command::AnalyzeUncertainty {
            checkpoint,
            dataset,
            mc_samples,
            threshold,
        } => {
            let a = cmd_analyze_uncertainty(
                &checkpoint,
                &dataset,
                mc_samples,
                g.seed.unwrap_or(0),
                threshold,
                &out_dir(g, "uncertainty"),
                g.force,
            )?;
            print_json(&a.pooled)
        }
        Command::BenchmarkTime {
            checkpoint,
            samples,
            repeats,
        } => {
            let rows = cmd_benchmark_time(&checkpoint, samples, repeats, &out_dir(g, "timing"), g.force)?;
            for r in rows {
                println!(
                    "{:<12} passes {:>2}  median {:>9.3} ms  iqr {:>8.3} ms  ratio {:.3}",
                    r.variant,
                    r.passes,
                    r.timing.median_s * 1e3,
                    r.timing.iqr_s * 1e3,
                    r.ratio_to_baseline
                );
            }
            Ok(())
        }
        Command::Compare { run_a, run_b } => {
            let c = cmd_compare(&run_a, &run_b, g.out.as_deref(), g.force)?;
            print_json(&serde_json::json!({
                "primary_metric": c.primary_metric,
                "mean_deltas": c.mean_deltas,
                "sign_test": c.sign_test,
            }))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error[invalid-argument]: {first}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.class(), e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
