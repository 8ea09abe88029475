use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use granular_cli::{run_scenario, CliError, ScenarioFile};

#[derive(Parser)]
#[command(name = "granular", version, about = "Granular kinetic equation scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every scenario of a TOML scenario file.
    Run {
        /// Scenario file.
        file: PathBuf,
        /// Output directory; each scenario writes to `<out>/<name>/`.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Write a snapshot every `n` steps (0 disables snapshots).
        #[arg(long)]
        stride: Option<usize>,
        /// Print the resolved scenarios and exit without running.
        #[arg(long)]
        dry_run: bool,
        /// `key=value` for every scenario or `name.key=value` for one.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn execute(cli: Cli) -> Result<bool, CliError> {
    let Command::Run {
        file,
        out,
        stride,
        dry_run,
        overrides,
    } = cli.command;
    let text = std::fs::read_to_string(&file).map_err(CliError::io(&file))?;
    let scenarios = ScenarioFile::parse_with_overrides(&text, &overrides)?;
    if dry_run {
        for spec in scenarios.scenarios.values() {
            match spec.mode()? {
                granular_cli::Mode::SelfSimilar => {
                    spec.self_similar()?;
                }
                _ => {
                    spec.run_config()?;
                }
            }
        }
        print!("{}", scenarios.to_toml()?);
        return Ok(false);
    }
    let mut early = false;
    for (name, spec) in &scenarios.scenarios {
        log::info!("running {name}");
        let summary = run_scenario(name, spec, &out.join(name), stride)?;
        println!(
            "{name}: t_b = {:.6} trigger = {} steps = {}",
            summary.t_b,
            summary.trigger.as_deref().unwrap_or("none"),
            summary.steps
        );
        if let Some(e) = &summary.expectation {
            println!(
                "{name}: expected t_b = {} +/- {} -> {}",
                e.t_b,
                e.tol,
                if e.pass { "PASS" } else { "FAIL" }
            );
        }
        early |= summary.stopped_early();
    }
    Ok(early)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
