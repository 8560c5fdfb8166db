mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::PredictInput;
use config::RunConfig;

#[derive(Parser)]
#[command(name = "bace-rul", version, about = "Remaining-useful-life prediction from single-cycle measurements")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write checkpoint, report and manifest.
    Train(Common),
    /// Score a checkpoint on a labeled dataset.
    Evaluate(Common),
    /// Predict RUL for single feature rows.
    Predict {
        #[command(flatten)]
        common: Common,
        /// One feature row, comma or space separated.
        #[arg(long, conflicts_with = "input", required_unless_present = "input")]
        row: Option<String>,
        /// File of rows in either dataset format.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Generate a synthetic run-to-failure fleet.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        units: Option<u32>,
        #[arg(long)]
        min_life: Option<u32>,
        #[arg(long)]
        max_life: Option<u32>,
        #[arg(long)]
        features: Option<usize>,
        #[arg(long)]
        noise_std: Option<f64>,
    },
}

#[derive(Args)]
struct Common {
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    rul_file: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Output directory (predict: output file).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    rul_cap: Option<u32>,
    #[arg(long, value_parser = ["none", "no-cond", "no-e2"])]
    ablation: Option<String>,
    #[arg(long)]
    samples: Option<usize>,
    /// Any config key, as `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn overrides(&self, skip_out: bool) -> bace_rul::Result<Vec<(String, String)>> {
        let mut o = Vec::new();
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| bace_rul::Error::Usage(format!("--set expects key=value, got `{kv}`")))?;
            o.push((k.trim().to_string(), v.trim().to_string()));
        }
        let path = |p: &PathBuf| p.display().to_string();
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                o.push((k.to_string(), v));
            }
        };
        push("seed", self.seed.map(|s| s.to_string()));
        push("dataset", self.dataset.as_ref().map(path));
        push("rul_file", self.rul_file.as_ref().map(path));
        push("checkpoint", self.checkpoint.as_ref().map(path));
        if !skip_out {
            push("out", self.out.as_ref().map(path));
        }
        push("rul_cap", self.rul_cap.map(|c| c.to_string()));
        push("ablation", self.ablation.clone());
        push("samples", self.samples.map(|s| s.to_string()));
        Ok(o)
    }

    fn load(&self, extra: Vec<(String, String)>, skip_out: bool) -> bace_rul::Result<RunConfig> {
        let mut o = self.overrides(skip_out)?;
        o.extend(extra);
        RunConfig::load(self.config.as_deref(), &o)
    }
}

fn run(cli: Cli) -> bace_rul::Result<()> {
    match cli.command {
        Command::Train(c) => commands::cmd_train(&c.load(vec![], false)?),
        Command::Evaluate(c) => commands::cmd_evaluate(&c.load(vec![], false)?),
        Command::Predict { common, row, input } => {
            let cfg = common.load(vec![], true)?;
            let input = match (row, input) {
                (Some(r), _) => PredictInput::Row(r),
                (None, Some(p)) => PredictInput::File(p),
                (None, None) => unreachable!("clap requires --row or --input"),
            };
            commands::cmd_predict(&cfg, &input, common.out.as_deref())
        }
        Command::Synth {
            common,
            units,
            min_life,
            max_life,
            features,
            noise_std,
        } => {
            let extra: Vec<(String, String)> = [
                ("synth_units", units.map(|v| v.to_string())),
                ("synth_min_life", min_life.map(|v| v.to_string())),
                ("synth_max_life", max_life.map(|v| v.to_string())),
                ("synth_features", features.map(|v| v.to_string())),
                ("synth_noise_std", noise_std.map(|v| v.to_string())),
            ]
            .into_iter()
            .filter_map(|(k, v)| v.map(|v| (k.to_string(), v)))
            .collect();
            commands::cmd_synth(&common.load(extra, false)?)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
