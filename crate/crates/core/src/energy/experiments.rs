//! Experiment generators: traffic against user count, the per-tick energy
//! trace with and without authentication, and lifetime against initial
//! energy.

use thiserror::Error;

use crate::base_station::{BaseStationError, StationStats};
use crate::client::{ClientError, ClientSession};
use crate::energy::{EnergyState, EnergyTrace};
use crate::error::ErrorKind;
use crate::net::DeliveryError;
use crate::protocol::{encode, NetAddress, Principal, RawQuery, SensorQuery, Tick};
use crate::scenario::{Scenario, ScenarioError, UserSpec};
use crate::world::World;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("the measured realm has no users")]
    NoUsers,
    #[error("{0} must not be empty")]
    EmptyInput(&'static str),
    #[error("{0} must be sorted ascending")]
    Unsorted(&'static str),
    #[error("the measured base station has no sensor nodes")]
    EmptyNetwork,
    #[error("{user}: {source}")]
    Client { user: String, source: ClientError },
}

pub const QUERY_ATTRIBUTE: &str = "temperature";

fn query(t: Tick) -> SensorQuery {
    SensorQuery {
        query_id: t as u32,
        attribute: QUERY_ATTRIBUTE.into(),
    }
}

/// One lifetime run with everything needed to audit it.
#[derive(Debug, Clone)]
pub struct LifetimeRun {
    pub trace: EnergyTrace,
    pub energy: EnergyState,
    pub stats: StationStats,
}

enum Outcome {
    Answered,
    Denied,
    Depleted,
}

fn classify(user: &str, r: Result<(), ClientError>) -> Result<Outcome, ExperimentError> {
    match r {
        Ok(()) => Ok(Outcome::Answered),
        Err(ClientError::Delivery(DeliveryError::Station(e))) => match e {
            BaseStationError::AccessDenied(_) => Ok(Outcome::Denied),
            BaseStationError::Depleted => Ok(Outcome::Depleted),
            BaseStationError::EmptyNetwork => Err(ExperimentError::EmptyNetwork),
        },
        Err(source) => Err(ExperimentError::Client {
            user: user.to_string(),
            source,
        }),
    }
}

struct Querier {
    spec: UserSpec,
    session: Option<ClientSession>,
}

/// Runs the home base station until its battery is empty or
/// `run.max_ticks` pass. Every tick each user of the home realm sends one
/// query: authorized users through the ticket flow, the others as bare
/// queries.
pub fn run_lifetime_detailed(
    scenario: &Scenario,
    auth_enabled: bool,
) -> Result<LifetimeRun, ExperimentError> {
    let mut world = World::build(scenario, auth_enabled)?;
    world.net.set_recording(false);
    let realm = scenario.home_realm().clone();
    if realm.users.is_empty() {
        return Err(ExperimentError::NoUsers);
    }
    let station = world.home_station();
    if world
        .net
        .station(&station)
        .is_none_or(|s| s.topology().is_empty())
    {
        return Err(ExperimentError::EmptyNetwork);
    }

    let mut queriers = Vec::with_capacity(realm.users.len());
    for spec in realm.users {
        let session = if spec.authorized {
            let s = world.login(&realm.name, &spec.name, 0).map_err(|source| {
                ExperimentError::Client {
                    user: spec.name.clone(),
                    source,
                }
            })?;
            Some(s)
        } else {
            None
        };
        queriers.push(Querier { spec, session });
    }

    let initial = scenario.energy.initial_energy;
    let mut series = vec![initial];
    let mut lifetime = scenario.run.max_ticks;
    let mut depleted_at = None;
    if initial == 0 {
        lifetime = 0;
        depleted_at = Some(0);
    }

    let mut t: Tick = 1;
    while depleted_at.is_none() && t <= scenario.run.max_ticks {
        let mut fully_powered = true;
        for q in &mut queriers {
            let result = match &mut q.session {
                Some(session) => access(session, &mut world, &station, t),
                None => {
                    let raw = RawQuery {
                        claimed_user: Principal::new(&q.spec.name, &realm.name)
                            .expect("validated name"),
                        query: query(t),
                    };
                    world
                        .net
                        .send_station(NetAddress(q.spec.address), &station, &encode(&raw), t)
                        .map(|_| ())
                        .map_err(ClientError::from)
                }
            };
            if let Outcome::Depleted = classify(&q.spec.name, result)? {
                fully_powered = false;
            }
        }
        let remaining = world
            .net
            .station(&station)
            .expect("home station")
            .energy()
            .remaining();
        series.push(remaining);
        if !fully_powered {
            lifetime = t - 1;
            depleted_at = Some(t);
        } else if remaining == 0 {
            lifetime = t;
            depleted_at = Some(t);
        }
        t += 1;
    }

    let bs = world.net.station(&station).expect("home station");
    Ok(LifetimeRun {
        trace: EnergyTrace {
            series,
            lifetime,
            depleted_at,
        },
        energy: bs.energy().clone(),
        stats: bs.stats(),
    })
}

fn access(
    session: &mut ClientSession,
    world: &mut World,
    station: &Principal,
    t: Tick,
) -> Result<(), ClientError> {
    match session.access_base_station(&mut world.net, station, query(t), t) {
        Err(ClientError::ExpiredTgt) => {
            session.renew_tgt(&mut world.net, t)?;
            session
                .access_base_station(&mut world.net, station, query(t), t)
                .map(|_| ())
        }
        r => r.map(|_| ()),
    }
}

pub fn run_lifetime_experiment(
    scenario: &Scenario,
    auth_enabled: bool,
) -> Result<EnergyTrace, ExperimentError> {
    run_lifetime_detailed(scenario, auth_enabled).map(|r| r.trace)
}

/// Network bytes for one round in which `u` authorized users each query
/// the home base station once, for every `u` in `user_counts`.
///
/// The home realm's users are replaced by `u` synthetic authorized users.
pub fn traffic_vs_users(
    scenario: &Scenario,
    user_counts: &[u32],
) -> Result<Vec<(u32, u64)>, ExperimentError> {
    if user_counts.is_empty() {
        return Err(ExperimentError::EmptyInput("user_counts"));
    }
    let mut out = Vec::with_capacity(user_counts.len());
    for &u in user_counts {
        let mut s = scenario.clone();
        s.realms[0].users = (0..u)
            .map(|i| UserSpec {
                name: format!("user{i:05}"),
                password: Some(format!("pw-{i}")),
                address: 10_000 + i,
                authorized: true,
                clock_offset: 0,
            })
            .collect();
        let mut world = World::build(&s, true)?;
        world.net.set_recording(false);
        let station = world.home_station();
        let realm = s.realms[0].name.clone();
        for user in &s.realms[0].users {
            let mut session =
                world
                    .login(&realm, &user.name, 1)
                    .map_err(|source| ExperimentError::Client {
                        user: user.name.clone(),
                        source,
                    })?;
            let r = session
                .access_base_station(&mut world.net, &station, query(1), 1)
                .map(|_| ());
            if let Outcome::Depleted = classify(&user.name, r)? {
                break;
            }
        }
        let bytes = world
            .net
            .station(&station)
            .expect("home station")
            .stats()
            .network_bytes;
        out.push((u, bytes));
    }
    Ok(out)
}

/// Lifetime with authentication on, for each initial energy.
pub fn lifetime_vs_energy(
    scenario: &Scenario,
    energies: &[u64],
) -> Result<Vec<(u64, Tick)>, ExperimentError> {
    if energies.is_empty() {
        return Err(ExperimentError::EmptyInput("energies"));
    }
    if energies.windows(2).any(|w| w[0] > w[1]) {
        return Err(ExperimentError::Unsorted("energies"));
    }
    energies
        .iter()
        .map(|&e| {
            let mut s = scenario.clone();
            s.energy.initial_energy = e;
            run_lifetime_experiment(&s, true).map(|t| (e, t.lifetime))
        })
        .collect()
}

impl ExperimentError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            ExperimentError::Scenario(_)
            | ExperimentError::EmptyInput(_)
            | ExperimentError::Unsorted(_) => ErrorKind::InvalidInput,
            ExperimentError::NoUsers => ErrorKind::UnknownPrincipal,
            ExperimentError::EmptyNetwork => ErrorKind::EmptyNetwork,
            ExperimentError::Client { source, .. } => source.kind(),
        }
    }
}
