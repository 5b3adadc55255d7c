//! Command-line driver: run the pipeline, run a stage check, or render a
//! previously written summary.
//!
//! Exit codes: 0 all checks pass, 1 check failure, 2 config error.

use clap::{Parser, Subcommand};
use hypcode::pipeline::{render_summary, run_pipeline, PipelineConfig, PipelineError, Stage};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "hypcode", about = "Symbolic coding of hyperbolic model flows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline from a TOML config file.
    Run { config: PathBuf },
    /// Run the pipeline through a single stage.
    Check {
        config: PathBuf,
        #[arg(long, default_value = "second")]
        stage: String,
    },
    /// Render the summary of a previous run directory.
    Report { dir: PathBuf },
    /// Print a default config (roof = const | cos | stretch).
    DefaultConfig {
        #[arg(default_value = "const")]
        roof: String,
    },
}

fn load_config(path: &PathBuf) -> Result<PipelineConfig, PipelineError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| PipelineError::Config(format!("cannot read {}: {}", path.display(), e)))?;
    PipelineConfig::from_toml(&text)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config } => {
            load_config(&config).and_then(|cfg| run_pipeline(&cfg, Stage::Second))
        }
        Command::Check { config, stage } => {
            let parsed: Result<Stage, _> = stage.parse();
            match parsed {
                Ok(st) => load_config(&config).and_then(|cfg| run_pipeline(&cfg, st)),
                Err(e) => Err(PipelineError::Config(e)),
            }
        }
        Command::Report { dir } => {
            let path = dir.join("summary.json");
            match std::fs::read_to_string(&path) {
                Ok(text) => match serde_json::from_str::<serde_json::Value>(&text) {
                    Ok(v) => {
                        println!("{}", serde_json::to_string_pretty(&v).unwrap());
                        return ExitCode::SUCCESS;
                    }
                    Err(e) => Err(PipelineError::Config(format!("bad summary: {}", e))),
                },
                Err(e) => {
                    Err(PipelineError::Config(format!("cannot read {}: {}", path.display(), e)))
                }
            }
        }
        Command::DefaultConfig { roof } => {
            let cfg = PipelineConfig::defaults(&roof);
            match cfg.validate() {
                Ok(_) => {
                    println!("{}", cfg.to_toml());
                    return ExitCode::SUCCESS;
                }
                Err(e) => Err(e),
            }
        }
    };
    match result {
        Ok(summary) => {
            print!("{}", render_summary(&summary));
            if summary.all_pass() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
