//! Command-line front end: annotated protocol transcripts, figure CSVs,
//! the attack report and a whole-scenario summary.
//!
//! `run` takes its output streams as arguments so tests can capture them.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use kerbwsn::scenario::{parse_scenario, Scenario, ScenarioError};

mod figures;
mod report;
mod transcript;

pub use figures::Figure;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_SCENARIO: i32 = 2;
pub const EXIT_ATTACK: i32 = 3;

/// Directory searched for relative scenario paths that do not exist as
/// given.
pub const SCENARIO_DIR_ENV: &str = "KERBWSN_SCENARIO_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "kerbwsn",
    version,
    about = "Kerberos authentication for WSN base stations, simulated"
)]
struct Cli {
    /// Scenario file; built-in defaults when omitted.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the annotated five-step exchange for one user and base station.
    Handshake,
    /// Print the exchange for a user reaching a base station in another realm.
    CrossRealm,
    /// Write the data behind one figure as CSV.
    Figure {
        #[arg(long, value_enum)]
        which: FigureArg,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every attack with authentication on and off.
    AttackReport,
    /// Summarise every experiment for a scenario.
    Run,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FigureArg {
    #[value(name = "10")]
    Traffic,
    #[value(name = "11")]
    LifetimeOpen,
    #[value(name = "12")]
    LifetimeAuth,
    #[value(name = "13")]
    EnergyLifetime,
}

impl From<FigureArg> for Figure {
    fn from(f: FigureArg) -> Self {
        match f {
            FigureArg::Traffic => Figure::TrafficVsUsers,
            FigureArg::LifetimeOpen => Figure::LifetimeWithoutAuth,
            FigureArg::LifetimeAuth => Figure::LifetimeWithAuth,
            FigureArg::EnergyLifetime => Figure::LifetimeVsEnergy,
        }
    }
}

/// Failure of a subcommand, carrying its exit code.
#[derive(Debug)]
pub(crate) struct Failure {
    pub code: i32,
    pub msg: String,
}

impl Failure {
    pub fn scenario(msg: impl ToString) -> Self {
        Failure {
            code: EXIT_SCENARIO,
            msg: msg.to_string(),
        }
    }

    pub fn io(e: std::io::Error) -> Self {
        Failure {
            code: EXIT_USAGE,
            msg: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::io(e)
    }
}

fn resolve(path: &Path, dir: Option<&Path>) -> PathBuf {
    match dir {
        Some(dir) if path.is_relative() && !path.exists() => dir.join(path),
        _ => path.to_path_buf(),
    }
}

/// Loads the scenario named on the command line, falling back to
/// `$KERBWSN_SCENARIO_DIR/<path>` for relative paths.
pub fn load_scenario(path: Option<&Path>) -> Result<Scenario, ScenarioError> {
    match path {
        None => Ok(Scenario::default()),
        Some(p) => {
            let dir = std::env::var_os(SCENARIO_DIR_ENV).map(PathBuf::from);
            parse_scenario(&resolve(p, dir.as_deref()))
        }
    }
}

/// Runs the CLI on `args` (including the program name) and returns the
/// process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let to_stdout = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let text = e.render().to_string();
            let _ = if to_stdout {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return if to_stdout { EXIT_OK } else { EXIT_USAGE };
        }
    };
    let scenario = match load_scenario(cli.scenario.as_deref()) {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_SCENARIO;
        }
    };
    let result = match cli.command {
        Command::Handshake => transcript::handshake(&scenario, out),
        Command::CrossRealm => transcript::cross_realm(&scenario, out),
        Command::Figure { which, out: path } => {
            figures::write_figure(&scenario, which.into(), path.as_deref(), out)
        }
        Command::AttackReport => report::attack_report(&scenario, out),
        Command::Run => report::summary(&scenario, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.msg);
            f.code
        }
    }
}
