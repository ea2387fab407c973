use std::path::PathBuf;
use std::process::ExitCode;

use aircomp_sim::{load_config, run_to_file, ConfigError, ExperimentConfig, ExperimentKind, Format};
use clap::{Parser, Subcommand};

/// Run AirComp simulation experiments from TOML configs.
///
/// Any config key can be overridden from the environment: AIRCOMP_SEED,
/// AIRCOMP_NUM_TRIALS, AIRCOMP_OUTPUT and AIRCOMP_PARAM_<NAME> for
/// parameters (values in TOML syntax). Command-line flags win over both.
#[derive(Parser)]
#[command(name = "aircomp-sim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its results.
    Run {
        config: PathBuf,
        /// Number of trials.
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output file; defaults to the config's `output`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// csv or jsonl; defaults from the output extension.
        #[arg(long)]
        format: Option<Format>,
        /// Trials run in parallel.
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Check a config without running it.
    Validate { config: PathBuf },
    /// List experiment kinds and their parameters.
    ListExperiments,
}

fn load(path: &PathBuf) -> Result<ExperimentConfig, ConfigError> {
    let mut config = load_config(path)?;
    config.apply_env_overrides(std::env::vars())?;
    Ok(config)
}

fn config_failure(e: ConfigError) -> ExitCode {
    eprintln!("config error: {e}");
    ExitCode::from(1)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            trials,
            seed,
            out,
            format,
            workers,
        } => {
            let mut cfg = match load(&config) {
                Ok(c) => c,
                Err(e) => return config_failure(e),
            };
            if let Some(t) = trials {
                if t == 0 {
                    return config_failure(ConfigError::Invalid {
                        key: "--trials".into(),
                        line: None,
                        message: "must be at least 1".into(),
                    });
                }
                cfg.num_trials = t;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = out {
                cfg.output_path = o;
            }
            let format = format.unwrap_or_else(|| Format::from_path(&cfg.output_path));
            match run_to_file(&cfg, &cfg.output_path, format, workers) {
                Ok(summary) => {
                    println!(
                        "{}: {} records ({} trials computed, {} reused) -> {}",
                        cfg.kind,
                        summary.records,
                        summary.computed_trials,
                        summary.reused_trials,
                        cfg.output_path.display()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
        Command::Validate { config } => match load(&config) {
            Ok(cfg) => {
                println!(
                    "ok: {} with {} sweep point(s) x {} trial(s), config hash {:016x}",
                    cfg.kind,
                    cfg.sweep_points().len(),
                    cfg.num_trials,
                    cfg.config_hash()
                );
                ExitCode::SUCCESS
            }
            Err(e) => config_failure(e),
        },
        Command::ListExperiments => {
            for kind in ExperimentKind::ALL {
                println!("{kind}: {}", kind.description());
                for p in kind.params() {
                    let default = match p.default {
                        aircomp_sim::config::DefaultValue::Required => "required".to_string(),
                        aircomp_sim::config::DefaultValue::Int(i) => format!("default {i}"),
                        aircomp_sim::config::DefaultValue::Real(r) => format!("default {r}"),
                        aircomp_sim::config::DefaultValue::Ident(s) => format!("default {s}"),
                    };
                    println!("    {:<24} {} ({default})", p.name, p.help);
                }
            }
            ExitCode::SUCCESS
        }
    }
}
