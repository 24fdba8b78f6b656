//! `multigait` command-line front end.

mod compare;
mod dump;
mod manifest;
mod plot;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use multigait::config::{load_gait_config, Gait, GaitSpec, RunScale};
use multigait::ppo::AmpMode;

/// Error caused by the command line itself; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Parser)]
#[command(name = "multigait", version, about = "Train, evaluate and compare planar biped gait policies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one policy per seed.
    Train(train::TrainArgs),
    /// Run a trained policy without learning and report reliability metrics.
    Eval(train::EvalArgs),
    /// Train with the preset AMP setting and with AMP inverted, then report both arms.
    CompareAmp(compare::CompareArgs),
    /// Render reward, tracking-error and failure-rate curves of a run or comparison directory.
    Plot(plot::PlotArgs),
    /// Write the joint reference over one gait cycle as CSV.
    RefDump(dump::RefDumpArgs),
    /// Write actor observation frames from a short rollout as CSV.
    ObsDump(dump::ObsDumpArgs),
}

fn parse_gait(s: &str) -> Result<Gait, String> {
    s.parse::<Gait>().map_err(|e| e.to_string())
}

fn parse_amp(s: &str) -> Result<AmpMode, String> {
    s.parse::<AmpMode>().map_err(|e| e.to_string())
}

/// Gait preset, optionally overridden by a TOML file.
#[derive(Args, Debug, Clone)]
pub struct SpecArgs {
    /// Gait preset: walking, goose_stepping, running, stair_climbing or jumping.
    #[arg(long, value_parser = parse_gait)]
    pub gait: Option<Gait>,
    /// TOML configuration; keys it omits come from its gait's preset.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

impl SpecArgs {
    /// The configured spec, or `fallback`'s preset when neither flag is given.
    pub fn resolve(&self, fallback: Gait) -> anyhow::Result<GaitSpec> {
        match (&self.config, self.gait) {
            (Some(path), gait) => {
                let spec = load_gait_config(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
                if let Some(g) = gait {
                    if g != spec.gait_name {
                        return Err(usage(format!("--gait {g} conflicts with gait_name = {} in {}", spec.gait_name, path.display())));
                    }
                }
                Ok(spec)
            }
            (None, gait) => Ok(GaitSpec::preset(gait.unwrap_or(fallback))),
        }
    }
}

#[derive(Args, Debug, Clone, Copy)]
pub struct ScaleArgs {
    /// Reduced environment count and network widths (default).
    #[arg(long, conflicts_with = "paper")]
    pub desk: bool,
    /// Full-scale environment count, iterations and network widths.
    #[arg(long)]
    pub paper: bool,
}

impl ScaleArgs {
    pub fn scale(self) -> RunScale {
        if self.paper {
            RunScale::Paper
        } else {
            RunScale::Desk
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Train(a) => train::run_train(&a),
        Command::Eval(a) => train::run_eval(&a),
        Command::CompareAmp(a) => compare::run(&a),
        Command::Plot(a) => plot::run(&a),
        Command::RefDump(a) => dump::ref_dump(&a),
        Command::ObsDump(a) => dump::obs_dump(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
