use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use metaopt_harness::config::{Scale, ScenarioConfig, Suite};
use metaopt_harness::records::write_records;
use metaopt_harness::scenario::{beampattern_dump, run_scenario, tradeoff_sweep, write_beampattern, write_beampattern_to, RunOptions};
use metaopt_harness::{write_csv, HarnessError};

#[derive(Parser)]
#[command(name = "metaopt", version, about = "Learned-optimizer wireless scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every realization and grid point, write one CSV row each.
    Run(Common),
    /// ISAC tradeoff over the λ grid.
    Sweep(Common),
    /// Beampattern table of one ISAC or precoder run.
    Beampattern {
        #[command(flatten)]
        common: Common,
        /// Number of angles on [-π/2, π/2].
        #[arg(long, default_value_t = 361)]
        resolution: usize,
        /// Index into the λ grid (ISAC).
        #[arg(long, default_value_t = 0)]
        lambda_index: usize,
        /// Channel realization to use.
        #[arg(long, default_value_t = 0)]
        realization: usize,
    },
    /// Parse and validate, then print the normalized config.
    ValidateConfig(Common),
}

#[derive(Args)]
struct Common {
    /// TOML scenario file; without it the preset for --suite is used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset suite when no config file is given.
    #[arg(long)]
    suite: Option<Suite>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output path; `-` or absent (and none in the config) writes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    parallel: Option<usize>,
    /// Size preset applied on top of the config.
    #[arg(long)]
    scale: Option<Scale>,
    /// Record wall-clock seconds; output is then no longer reproducible.
    #[arg(long)]
    timing: bool,
}

impl Common {
    fn config(&self) -> Result<ScenarioConfig, HarnessError> {
        let mut cfg = match (&self.config, self.suite) {
            (Some(path), _) => {
                let cfg = ScenarioConfig::load(path)?;
                match self.scale {
                    Some(s) => cfg.rescaled(s),
                    None => cfg,
                }
            }
            (None, Some(suite)) => ScenarioConfig::preset(suite, self.scale.unwrap_or(Scale::Desk)),
            (None, None) => {
                return Err(HarnessError::Config { field: "config".into(), reason: "pass --config or --suite".into() })
            }
        };
        if self.config.is_some() {
            if let Some(suite) = self.suite.filter(|s| *s != cfg.suite) {
                return Err(HarnessError::Config {
                    field: "suite".into(),
                    reason: format!("--suite {suite} conflicts with the config's {}", cfg.suite),
                });
            }
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output = Some(out.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn options(&self) -> RunOptions {
        RunOptions { workers: self.parallel, timing: self.timing }
    }
}

fn output(cfg: &ScenarioConfig) -> Option<PathBuf> {
    cfg.output.clone().filter(|p| p.as_os_str() != "-")
}

fn emit(cfg: &ScenarioConfig, records: &[metaopt_harness::ResultRecord]) -> Result<(), HarnessError> {
    match output(cfg) {
        Some(path) => write_csv(records, &path),
        None => write_records(records, std::io::stdout().lock()),
    }
}

fn execute(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run(c) => {
            let cfg = c.config()?;
            let records = run_scenario(&cfg, &c.options())?;
            emit(&cfg, &records)
        }
        Command::Sweep(c) => {
            let cfg = c.config()?;
            let records = tradeoff_sweep(&cfg, &c.options())?;
            emit(&cfg, &records)
        }
        Command::Beampattern { common, resolution, lambda_index, realization } => {
            let cfg = common.config()?;
            let lambdas = cfg.lambdas();
            let lambda = match lambdas.get(lambda_index) {
                Some(&l) => l,
                None if lambdas.is_empty() && lambda_index == 0 => 0.0,
                None => {
                    return Err(HarnessError::Config {
                        field: "lambda-index".into(),
                        reason: format!("{lambda_index} outside a grid of {}", lambdas.len()),
                    })
                }
            };
            if realization >= cfg.realizations {
                return Err(HarnessError::Config {
                    field: "realization".into(),
                    reason: format!("{realization} outside {} realizations", cfg.realizations),
                });
            }
            let table = beampattern_dump(&cfg, resolution, realization, lambda)?;
            match output(&cfg) {
                Some(path) => write_beampattern(&table, &path),
                None => write_beampattern_to(&table, std::io::stdout().lock()),
            }
        }
        Command::ValidateConfig(c) => {
            let cfg = c.config()?;
            print!("{}", cfg.to_toml()?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
