//! `fb`: runs the laboratory's experiments from a JSON config plus flags and
//! writes a checksummed run directory per invocation.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod model;
pub mod output;

use config::Settings;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] fb_core::Error),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    /// 1 for a failed mathematical check, 2 for anything the user can fix
    /// in the config or environment.
    pub fn exit_code(&self) -> i32 {
        use fb_core::Error as E;
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Core(e) => match e {
                E::InvalidArgument(_)
                | E::DimensionMismatch { .. }
                | E::Unsupported(_)
                | E::AnchorOffZeroSet { .. }
                | E::NotHarmonic { .. }
                | E::Io(_) => 2,
                _ => 1,
            },
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "fb", version, about = "Monotonicity-formula laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct CommandArgs {
    /// JSON config document ("schema": 1); flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    settings: Settings,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Spectral epiperimetric inequality on random traces.
    Epi(CommandArgs),
    /// H, D, N, W on a geometric grid of radii.
    Scan(CommandArgs),
    /// Ball masses of the polynomial harmonic measure.
    Measure(CommandArgs),
    /// Synthesize a jump model and store it under <output>/models.
    Synth(CommandArgs),
    /// Blowup sequence, rate and tangent polynomial.
    Blowup(CommandArgs),
    /// Strata labels and Whitney compatibility of blowup jets.
    Whitney(CommandArgs),
}

impl Command {
    fn split(self) -> (&'static str, CommandArgs) {
        match self {
            Command::Epi(a) => ("epi", a),
            Command::Scan(a) => ("scan", a),
            Command::Measure(a) => ("measure", a),
            Command::Synth(a) => ("synth", a),
            Command::Blowup(a) => ("blowup", a),
            Command::Whitney(a) => ("whitney", a),
        }
    }
}

fn resolve(name: &str, args: &CommandArgs) -> Result<Settings, CliError> {
    let base = match &args.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    if let Some(c) = &base.command {
        if c != name {
            return Err(CliError::Config(format!(
                "config was written for '{c}', not '{name}'"
            )));
        }
    }
    Ok(base.overlay(&args.settings))
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let (name, args) = cli.command.split();
    let outcome = resolve(name, &args).and_then(|s| match name {
        "epi" => commands::epi(&s),
        "scan" => commands::scan(&s),
        "measure" => commands::measure(&s),
        "synth" => commands::synth(&s),
        "blowup" => commands::blowup(&s),
        _ => commands::whitney(&s),
    });
    match outcome {
        Ok(report) => {
            for c in &report.checks {
                println!(
                    "{} {}: {}",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
            }
            println!("{}", report.dir.display());
            if report.pass {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("fb {name}: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(
            CliError::from(fb_core::Error::Unsupported("x".into())).exit_code(),
            2
        );
        assert_eq!(
            CliError::from(fb_core::Error::VerificationFailed("x".into())).exit_code(),
            1
        );
        assert_eq!(
            CliError::from(fb_core::Error::Unclassifiable {
                frequency: 1.5,
                residual: 0.5
            })
            .exit_code(),
            1
        );
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["fb", "nonsense"]), 2);
        assert_eq!(run(["fb", "epi", "--trials", "many"]), 2);
        assert_eq!(run(["fb", "--help"]), 0);
    }
}
