use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use kerbwsn::energy::{
    lifetime_vs_energy, run_lifetime_experiment, traffic_vs_users, ExperimentError,
};
use kerbwsn::scenario::Scenario;

use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    /// `--which 10`: bytes on the network per query round against user count.
    TrafficVsUsers,
    /// `--which 11`: remaining energy per tick, authentication off.
    LifetimeWithoutAuth,
    /// `--which 12`: remaining energy per tick, authentication on.
    LifetimeWithAuth,
    /// `--which 13`: lifetime against initial energy.
    LifetimeVsEnergy,
}

impl Figure {
    pub fn number(self) -> u32 {
        match self {
            Figure::TrafficVsUsers => 10,
            Figure::LifetimeWithoutAuth => 11,
            Figure::LifetimeWithAuth => 12,
            Figure::LifetimeVsEnergy => 13,
        }
    }

    pub fn header(self) -> &'static str {
        match self {
            Figure::TrafficVsUsers => "users,total_bytes",
            Figure::LifetimeWithoutAuth | Figure::LifetimeWithAuth => "tick,remaining_milliunits",
            Figure::LifetimeVsEnergy => "initial_energy,lifetime_ticks",
        }
    }
}

/// The figure's CSV text and a one-line summary of it.
pub fn figure_csv(scenario: &Scenario, fig: Figure) -> Result<(String, String), ExperimentError> {
    let mut csv = String::new();
    writeln!(csv, "{}", fig.header()).unwrap();
    let summary = match fig {
        Figure::TrafficVsUsers => {
            let series = traffic_vs_users(scenario, &scenario.run.user_counts)?;
            for (u, bytes) in &series {
                writeln!(csv, "{u},{bytes}").unwrap();
            }
            format!("{} user counts", series.len())
        }
        Figure::LifetimeWithoutAuth | Figure::LifetimeWithAuth => {
            let trace = run_lifetime_experiment(scenario, fig == Figure::LifetimeWithAuth)?;
            for (t, e) in trace.series.iter().enumerate() {
                writeln!(csv, "{t},{e}").unwrap();
            }
            format!("lifetime {} ticks", trace.lifetime)
        }
        Figure::LifetimeVsEnergy => {
            let series = lifetime_vs_energy(scenario, &scenario.run.energies)?;
            for (e, l) in &series {
                writeln!(csv, "{e},{l}").unwrap();
            }
            format!("{} energy levels", series.len())
        }
    };
    Ok((csv, summary))
}

pub(crate) fn write_figure(
    scenario: &Scenario,
    fig: Figure,
    path: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), Failure> {
    let (csv, summary) = figure_csv(scenario, fig).map_err(Failure::scenario)?;
    match path {
        Some(path) => {
            std::fs::write(path, &csv).map_err(|e| {
                Failure::io(std::io::Error::new(
                    e.kind(),
                    format!("{}: {e}", path.display()),
                ))
            })?;
            writeln!(
                out,
                "figure {}: {summary}; wrote {}",
                fig.number(),
                path.display()
            )?;
        }
        None => out.write_all(csv.as_bytes())?,
    }
    Ok(())
}
