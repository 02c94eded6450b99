use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::{DeserializeOwned, IntoDeserializer};

use hdus_harness::config::{ConfigError, ExperimentConfig, FrameworkName, Scope, Setting, TopologyKind, UnlearnConfig};
use hdus_harness::metrics::{timeline, write_atomic};
use hdus_harness::sweep::{sweep, sweep_csv, SweepParam};
use hdus_harness::{emit_metrics, run_experiment, HarnessError, RunReport};

#[derive(Parser)]
#[command(name = "hdus", version, about = "Decentralized learning/unlearning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured framework and write summary, timeline and event logs.
    Run(Common),
    /// Repeat the experiment over a grid of lambda or temperature values.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Parameter to vary: lambda or temperature.
        #[arg(long)]
        param: SweepParam,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Run with one client leaving mid-training and print the accuracy timeline.
    UnlearnDemo {
        #[command(flatten)]
        common: Common,
        /// Client that leaves (default 0).
        #[arg(long)]
        unlearn_client: Option<u32>,
        /// Training rounds before the request (default: half of `rounds`).
        #[arg(long)]
        unlearn_round: Option<usize>,
    },
    /// Parse and validate a config file without running anything.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

/// Flags mirror config keys and win over the file.
#[derive(Args)]
struct Common {
    /// TOML config file; defaults apply to every key it leaves out.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', value_parser = parse_named::<FrameworkName>)]
    frameworks: Option<Vec<FrameworkName>>,
    #[arg(long)]
    n_clients: Option<usize>,
    #[arg(long, value_parser = parse_named::<Setting>)]
    setting: Option<Setting>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    local_epochs: Option<usize>,
    #[arg(long)]
    incubate_epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    distill_lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    master_seed: Option<u64>,
    #[arg(long, value_parser = parse_named::<Scope>)]
    eval_scope: Option<Scope>,
    #[arg(long, value_parser = parse_named::<TopologyKind>)]
    topology: Option<TopologyKind>,
    /// Output directory.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn parse_named<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    T::deserialize(s.into_deserializer()).map_err(|e: serde::de::value::Error| e.to_string())
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig, HarnessError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    HarnessError::Config(ConfigError {
                        key: "<file>".into(),
                        message: format!("{}: {e}", path.display()),
                    })
                })?;
                ExperimentConfig::from_toml(&text)?
            }
            None => ExperimentConfig::default(),
        };
        macro_rules! apply {
            ($($field:ident => $target:ident),* $(,)?) => {
                $(if let Some(v) = self.$field.clone() { cfg.$target = v; })*
            };
        }
        apply!(
            frameworks => frameworks,
            n_clients => n_clients,
            setting => setting,
            lambda => lambda,
            temperature => temperature,
            local_epochs => local_epochs,
            incubate_epochs => incubate_epochs,
            lr => lr,
            distill_lr => distill_lr,
            batch_size => batch_size,
            rounds => rounds,
            repeats => repeats,
            master_seed => master_seed,
            eval_scope => eval_scope,
            topology => topology,
            output => output_path,
        );
        Ok(cfg)
    }
}

fn print_summary(report: &RunReport) {
    println!("config_hash {}", report.config_hash);
    println!("{:<8} {:>10} {:>10} {:>8}", "framework", "mean_acc", "std_acc", "repeats");
    for s in &report.summary {
        println!(
            "{:<8} {:>10.4} {:>10.4} {:>8}",
            s.framework.name(),
            s.mean_accuracy,
            s.std_accuracy,
            s.repeats
        );
    }
}

fn run(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::Run(common) => {
            let cfg = common.resolve()?;
            let report = run_experiment(&cfg)?;
            emit_metrics(&report, &cfg.output_path)?;
            print_summary(&report);
        }
        Command::Sweep { common, param, values } => {
            let cfg = common.resolve()?;
            cfg.validate()?;
            let cells = sweep(&cfg, param, &values);
            std::fs::create_dir_all(&cfg.output_path).map_err(|e| HarnessError::io(&cfg.output_path, e))?;
            let path = cfg.output_path.join(format!("sweep_{param}.csv"));
            write_atomic(&path, &sweep_csv(&cfg.hash(), param, &cells))?;
            for cell in &cells {
                match &cell.outcome {
                    Ok(report) => {
                        println!("{param} = {}", cell.value);
                        print_summary(report);
                    }
                    Err(e) => eprintln!("{param} = {}: {e}", cell.value),
                }
            }
        }
        Command::UnlearnDemo {
            common,
            unlearn_client,
            unlearn_round,
        } => {
            let mut cfg = common.resolve()?;
            let prior = cfg.unlearn;
            cfg.unlearn = Some(UnlearnConfig {
                client: unlearn_client.or(prior.map(|u| u.client)).unwrap_or(0),
                round: unlearn_round
                    .or(prior.map(|u| u.round))
                    .unwrap_or((cfg.rounds / 2).max(1)),
            });
            let report = run_experiment(&cfg)?;
            emit_metrics(&report, &cfg.output_path)?;
            print_summary(&report);
            println!("{:<8} {:>5} {:>10}", "framework", "t", "mean_acc");
            for row in timeline(&report) {
                println!("{:<8} {:>5} {:>10.4}", row.framework.name(), row.t, row.mean_accuracy);
            }
        }
        Command::ValidateConfig { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            println!("ok {}", cfg.hash());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
