use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use coinvent::pipeline::{self, PipelineConfig};
use coinvent::synth::{self, SynthConfig};
use coinvent::Algorithm;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "coinvent", version, about = "Co-inventor communities and first-citation lags")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load input tables, select the cohort and date citations.
    Ingest(StageArgs),
    /// Build the co-inventor network and its largest component.
    Project(StageArgs),
    /// Run the community detectors on the largest component.
    Detect(StageArgs),
    /// Classify first citations under each partition.
    Classify(StageArgs),
    /// Histograms, log-normal fits and Welch tests.
    Stats(StageArgs),
    /// Randomized-community control.
    Control(ControlArgs),
    /// Assemble report tables and the manifest.
    Report(StageArgs),
    /// Run every stage in order.
    Run(StageArgs),
    /// Generate a synthetic cohort.
    Synth(SynthArgs),
}

#[derive(Args)]
struct StageArgs {
    /// Pipeline config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override any config value by dotted key, e.g. `analysis.window_months=60`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Comma-separated detector names.
    #[arg(long, value_delimiter = ',')]
    algorithms: Option<Vec<Algorithm>>,
    #[arg(long)]
    window_months: Option<f64>,
    #[arg(long)]
    bin_width: Option<f64>,
    #[arg(long)]
    tie_rule: Option<String>,
    #[arg(long)]
    ari_runs: Option<usize>,
    #[arg(long)]
    detection_seed: Option<u64>,
    #[arg(long)]
    subsample_seed: Option<u64>,
    #[arg(long)]
    control_seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct ControlArgs {
    #[command(flatten)]
    stage: StageArgs,
    /// Detector whose partition is randomized.
    #[arg(long)]
    algorithm: Option<Algorithm>,
    /// Partition file to use instead of the detect stage output.
    #[arg(long)]
    partition: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Synthetic cohort config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Directory receiving the generated tables.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

impl StageArgs {
    fn load(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::load(&self.config)
            .with_context(|| format!("config {}", self.config.display()))?;
        let mut overrides: Vec<(String, String)> = Vec::new();
        let mut named = |key: &str, value: Option<String>| {
            if let Some(v) = value {
                overrides.push((key.to_string(), v));
            }
        };
        named("output_dir", self.output_dir.as_ref().map(|p| toml_string(&p.to_string_lossy())));
        named(
            "detection.algorithms",
            self.algorithms.as_ref().map(|a| {
                let names: Vec<String> = a.iter().map(|x| toml_string(x.name())).collect();
                format!("[{}]", names.join(", "))
            }),
        );
        named("analysis.window_months", self.window_months.map(float));
        named("analysis.bin_width", self.bin_width.map(float));
        named("analysis.tie_rule", self.tie_rule.as_deref().map(toml_string));
        named("detection.ari_runs", self.ari_runs.map(|v| v.to_string()));
        named("seeds.detection", self.detection_seed.map(|v| v.to_string()));
        named("seeds.subsample", self.subsample_seed.map(|v| v.to_string()));
        named("seeds.control", self.control_seed.map(|v| v.to_string()));
        named("workers", self.workers.map(|v| v.to_string()));
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .with_context(|| format!("--set expects KEY=VALUE, got `{kv}`"))?;
            overrides.push((k.trim().to_string(), v.trim().to_string()));
        }
        for (k, v) in overrides {
            cfg.apply_override(&k, &v)?;
        }
        Ok(cfg)
    }
}

fn toml_string(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

fn float(v: f64) -> String {
    format!("{v:?}")
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(a) => print_json(&pipeline::run_ingest(&a.load()?)?),
        Command::Project(a) => print_json(&pipeline::run_project(&a.load()?)?),
        Command::Detect(a) => print_json(&pipeline::run_detect(&a.load()?)?),
        Command::Classify(a) => print_json(&pipeline::run_classify(&a.load()?)?),
        Command::Stats(a) => print_json(&pipeline::run_stats(&a.load()?)?),
        Command::Control(a) => {
            let cfg = a.stage.load()?;
            let alg = a.algorithm.unwrap_or_else(|| cfg.control_algorithm());
            print_json(&pipeline::run_control(&cfg, alg, a.partition.as_deref())?)
        }
        Command::Report(a) => print_json(&pipeline::run_report(&a.load()?)?.table2),
        Command::Run(a) => {
            let cfg = a.load()?;
            pipeline::run_pipeline(&cfg)?;
            println!("report written to {}", cfg.layout().report("").display());
            Ok(())
        }
        Command::Synth(a) => {
            let mut cfg = SynthConfig::load(&a.config).with_context(|| format!("config {}", a.config.display()))?;
            if let Some(seed) = a.seed {
                cfg.seed = seed;
            }
            let data = synth::generate(&cfg)?;
            data.write(&a.out)?;
            println!(
                "{} patents, {} inventor links, {} citations written to {}",
                data.patents.len(),
                data.links.len(),
                data.citations.len(),
                a.out.display()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("coinvent: {e:#}");
            ExitCode::FAILURE
        }
    }
}
