//! Builds a complete simulated deployment from a scenario: one KDC per
//! realm, one base station per service, inter-realm keys between every
//! pair of realms, and the authorized users registered at their home KDC.
//!
//! Every random choice is drawn from a stream named after what it is for,
//! so adding a user does not perturb, say, the topology of a station.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::base_station::{BaseStation, StationConfig};
use crate::client::{self, ClientError, ClientSession};
use crate::crypto::KeyRegistry;
use crate::kdc::{Kdc, PrincipalDb};
use crate::net::SimNet;
use crate::protocol::{NetAddress, Principal, Tick};
use crate::rng;
use crate::scenario::{Scenario, ScenarioError, UserSpec};
use crate::sensor_net::build_topology;

pub struct World {
    pub scenario: Scenario,
    pub net: SimNet,
    logins: BTreeMap<Principal, u32>,
}

fn build_err(e: impl std::fmt::Display) -> ScenarioError {
    ScenarioError::Validation(e.to_string())
}

impl World {
    pub fn build(scenario: &Scenario, auth_enabled: bool) -> Result<World, ScenarioError> {
        scenario.validate()?;
        let seed = scenario.seed;
        let mut registry = KeyRegistry::new();
        let mut key_rng = rng::stream(seed, "keys");

        let mut dbs = Vec::with_capacity(scenario.realms.len());
        for realm in &scenario.realms {
            dbs.push(
                PrincipalDb::new(&realm.name, registry.generate(&mut key_rng))
                    .map_err(build_err)?,
            );
        }

        let mut net = SimNet::new();
        for (realm, db) in scenario.realms.iter().zip(dbs.iter_mut()) {
            for name in &realm.services {
                let service = Principal::new(name, &realm.name).map_err(build_err)?;
                let key = registry.generate(&mut key_rng);
                db.register_service(&service, key.clone())
                    .map_err(build_err)?;
                let mut topo_rng = rng::stream(seed, &format!("topology/{}/{}", realm.name, name));
                let t = &scenario.topology;
                let topology = build_topology(t.n_nodes, t.area, t.range, &mut topo_rng);
                let cfg = StationConfig {
                    auth_enabled,
                    max_clock_skew: scenario.kdc.max_clock_skew,
                    reading_packet_size: t.reading_packet_size,
                    query_packet_size: t.query_packet_size,
                    energy: scenario.energy,
                };
                net.add_station(BaseStation::new(service, key, cfg, Arc::new(topology)));
            }
        }

        for i in 0..dbs.len() {
            for j in i + 1..dbs.len() {
                // One key per pair, used in both directions.
                let shared = registry.generate(&mut key_rng);
                let (a, b) = (
                    scenario.realms[i].name.clone(),
                    scenario.realms[j].name.clone(),
                );
                dbs[i]
                    .register_remote_realm(&b, shared.clone())
                    .map_err(build_err)?;
                dbs[j]
                    .register_remote_realm(&a, shared)
                    .map_err(build_err)?;
            }
        }

        for (realm, db) in scenario.realms.iter().zip(dbs.iter_mut()) {
            for u in realm.users.iter().filter(|u| u.authorized) {
                let user = Principal::new(&u.name, &realm.name).map_err(build_err)?;
                let password = u.password.as_deref().unwrap_or_default();
                db.register_user(&user, password).map_err(build_err)?;
            }
        }

        for db in dbs {
            let realm = db.realm().to_string();
            net.add_kdc(
                Kdc::new(db, scenario.kdc),
                rng::stream(seed, &format!("kdc/{realm}")),
            );
        }

        Ok(World {
            scenario: scenario.clone(),
            net,
            logins: BTreeMap::new(),
        })
    }

    pub fn user_spec(&self, realm: &str, name: &str) -> Option<&UserSpec> {
        self.scenario
            .realms
            .iter()
            .find(|r| r.name == realm)?
            .users
            .iter()
            .find(|u| u.name == name)
    }

    /// The first service of the first realm.
    pub fn home_station(&self) -> Principal {
        let realm = self.scenario.home_realm();
        Principal::new(&realm.services[0], &realm.name).expect("validated scenario")
    }

    /// Logs a scenario user in with their configured password, address and
    /// clock offset.
    pub fn login(
        &mut self,
        realm: &str,
        name: &str,
        now: Tick,
    ) -> Result<ClientSession, ClientError> {
        let spec = self
            .user_spec(realm, name)
            .ok_or_else(|| ClientError::InvalidInput(format!("no user {name} in realm {realm}")))?
            .clone();
        self.login_as(
            realm,
            name,
            spec.password.as_deref().unwrap_or_default(),
            NetAddress(spec.address),
            now,
        )
        .map(|mut s| {
            s.set_clock_offset(spec.clock_offset);
            s
        })
    }

    /// Logs in with explicit credentials, e.g. a guessed password.
    pub fn login_as(
        &mut self,
        realm: &str,
        name: &str,
        password: &str,
        addr: NetAddress,
        now: Tick,
    ) -> Result<ClientSession, ClientError> {
        let user =
            Principal::new(name, realm).map_err(|e| ClientError::InvalidInput(e.to_string()))?;
        let n = self.logins.entry(user.clone()).or_insert(0);
        let label = format!("client/{realm}/{name}/{n}");
        *n += 1;
        client::login(
            &user,
            password,
            addr,
            &mut self.net,
            now,
            rng::stream(self.scenario.seed, &label),
        )
    }
}
