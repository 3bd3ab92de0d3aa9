//! Scenario files.
//!
//! A scenario is a line-oriented text file of `section.key = value`
//! assignments. Lines starting with `#` are comments; a `#` after a
//! value is part of the value. Every key is optional; missing
//! keys take the defaults below, and if no `realm.*` key is present the
//! default two-realm layout is used. Unknown or repeated keys are errors.
//!
//! ```text
//! scenario.seed = 42
//! # sensor nodes behind each base station, in an area x area square
//! topology.n_nodes = 20
//! topology.area = 100
//! topology.range = 30
//! topology.reading_packet_size = 32
//! topology.query_packet_size = 16
//! # energy in milliunits: battery, per packet, per byte, per credential check
//! energy.initial = 1000000
//! energy.fixed_tx = 100
//! energy.per_byte = 1
//! energy.verify = 10
//! # lifetimes and skew in ticks
//! kdc.tgt_lifetime = 480
//! kdc.service_ticket_lifetime = 100
//! kdc.max_clock_skew = 5
//! run.max_ticks = 100000
//! run.user_counts = 0, 1, 2, 4, 8, 16
//! run.energies = 250000, 500000, 1000000
//! realm.WSN.services = bs1, bs2
//! realm.WSN.user.alice.password = alice-pw
//! realm.WSN.user.alice.address = 1
//! realm.WSN.user.alice.authorized = true
//! realm.WSN.user.alice.clock_offset = 0
//! ```
//!
//! Realms and users keep the order in which they first appear; the first
//! realm and its first service are the ones the experiments measure.
//! Values are trimmed, so passwords cannot start or end with whitespace.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

use crate::energy::EnergyParams;
use crate::kdc::KdcConfig;
use crate::protocol::TGS_NAME;
use crate::rng;
use crate::sensor_net::{DEFAULT_QUERY_PACKET_SIZE, DEFAULT_READING_PACKET_SIZE};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid scenario: {0}")]
    Validation(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserSpec {
    pub name: String,
    /// Unauthorized users may have no password at all.
    pub password: Option<String>,
    pub address: u32,
    /// Authorized users are registered with their realm's KDC.
    pub authorized: bool,
    pub clock_offset: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RealmSpec {
    pub name: String,
    pub services: Vec<String>,
    pub users: Vec<UserSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopologyParams {
    pub n_nodes: u32,
    pub area: f64,
    pub range: f64,
    pub reading_packet_size: u64,
    pub query_packet_size: u64,
}

impl Default for TopologyParams {
    fn default() -> Self {
        TopologyParams {
            n_nodes: 20,
            area: 100.0,
            range: 30.0,
            reading_packet_size: DEFAULT_READING_PACKET_SIZE,
            query_packet_size: DEFAULT_QUERY_PACKET_SIZE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunParams {
    pub max_ticks: u64,
    pub user_counts: Vec<u32>,
    pub energies: Vec<u64>,
}

impl Default for RunParams {
    fn default() -> Self {
        RunParams {
            max_ticks: 100_000,
            user_counts: vec![0, 1, 2, 4, 8, 16],
            energies: vec![250_000, 500_000, 1_000_000],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub seed: u64,
    pub realms: Vec<RealmSpec>,
    pub topology: TopologyParams,
    pub energy: EnergyParams,
    pub kdc: KdcConfig,
    pub run: RunParams,
}

fn user(name: &str, password: Option<&str>, address: u32, authorized: bool) -> UserSpec {
    UserSpec {
        name: name.into(),
        password: password.map(Into::into),
        address,
        authorized,
        clock_offset: 0,
    }
}

pub fn default_realms() -> Vec<RealmSpec> {
    vec![
        RealmSpec {
            name: "WSN".into(),
            services: vec!["bs1".into(), "bs2".into()],
            users: vec![
                user("alice", Some("alice-pw"), 1, true),
                user("bob", Some("bob-pw"), 2, true),
                user("mallory", None, 3, false),
            ],
        },
        RealmSpec {
            name: "FIELD".into(),
            services: vec!["bs-field".into()],
            users: vec![user("carol", Some("carol-pw"), 1, true)],
        },
    ]
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            seed: 42,
            realms: default_realms(),
            topology: TopologyParams::default(),
            energy: EnergyParams::default(),
            kdc: KdcConfig::default(),
            run: RunParams::default(),
        }
    }
}

fn parse_value<T: FromStr>(value: &str, line: usize, key: &str) -> Result<T, ScenarioError> {
    value.parse().map_err(|_| ScenarioError::Parse {
        line,
        msg: format!("bad value {value:?} for {key}"),
    })
}

fn parse_list<T: FromStr>(value: &str, line: usize, key: &str) -> Result<Vec<T>, ScenarioError> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|v| parse_value(v.trim(), line, key))
        .collect()
}

fn join<T: ToString>(items: &[T]) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

// Names appear inside dotted keys and comma lists.
fn check_name(name: &str, what: &str) -> Result<(), ScenarioError> {
    let bad = name.is_empty()
        || name
            .chars()
            .any(|c| c == '.' || c == '/' || c == '=' || c == ',' || c == '#' || c.is_whitespace());
    if bad {
        return Err(ScenarioError::Validation(format!(
            "{what} name {name:?} must be non-empty without '.', '/', '=', ',', '#' or whitespace"
        )));
    }
    Ok(())
}

impl Scenario {
    pub fn parse_str(text: &str) -> Result<Scenario, ScenarioError> {
        let mut s = Scenario {
            realms: Vec::new(),
            ..Scenario::default()
        };
        let mut seen = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed
                .split_once('=')
                .ok_or_else(|| ScenarioError::Parse {
                    line,
                    msg: "expected `section.key = value`".into(),
                })?;
            let key = key.trim();
            let value = value.trim();
            if !seen.insert(key.to_string()) {
                return Err(ScenarioError::Parse {
                    line,
                    msg: format!("duplicate key {key}"),
                });
            }
            s.assign(key, value, line)?;
        }
        if s.realms.is_empty() {
            s.realms = default_realms();
        }
        s.validate()?;
        Ok(s)
    }

    fn realm_mut(&mut self, name: &str) -> &mut RealmSpec {
        if let Some(i) = self.realms.iter().position(|r| r.name == name) {
            return &mut self.realms[i];
        }
        self.realms.push(RealmSpec {
            name: name.to_string(),
            services: Vec::new(),
            users: Vec::new(),
        });
        self.realms.last_mut().unwrap()
    }

    fn assign(&mut self, key: &str, value: &str, line: usize) -> Result<(), ScenarioError> {
        let parts: Vec<&str> = key.split('.').collect();
        match parts.as_slice() {
            ["scenario", "seed"] => self.seed = parse_value(value, line, key)?,
            ["topology", "n_nodes"] => self.topology.n_nodes = parse_value(value, line, key)?,
            ["topology", "area"] => self.topology.area = parse_value(value, line, key)?,
            ["topology", "range"] => self.topology.range = parse_value(value, line, key)?,
            ["topology", "reading_packet_size"] => {
                self.topology.reading_packet_size = parse_value(value, line, key)?
            }
            ["topology", "query_packet_size"] => {
                self.topology.query_packet_size = parse_value(value, line, key)?
            }
            ["energy", "initial"] => self.energy.initial_energy = parse_value(value, line, key)?,
            ["energy", "fixed_tx"] => self.energy.cost_fixed_tx = parse_value(value, line, key)?,
            ["energy", "per_byte"] => self.energy.cost_per_byte = parse_value(value, line, key)?,
            ["energy", "verify"] => self.energy.verify_cost = parse_value(value, line, key)?,
            ["kdc", "tgt_lifetime"] => self.kdc.tgt_lifetime = parse_value(value, line, key)?,
            ["kdc", "service_ticket_lifetime"] => {
                self.kdc.service_ticket_lifetime = parse_value(value, line, key)?
            }
            ["kdc", "max_clock_skew"] => self.kdc.max_clock_skew = parse_value(value, line, key)?,
            ["run", "max_ticks"] => self.run.max_ticks = parse_value(value, line, key)?,
            ["run", "user_counts"] => self.run.user_counts = parse_list(value, line, key)?,
            ["run", "energies"] => self.run.energies = parse_list(value, line, key)?,
            ["realm", realm, "services"] => {
                let services = parse_list::<String>(value, line, key)?;
                self.realm_mut(realm).services = services;
            }
            ["realm", realm, "user", name, field] => {
                let realm = self.realm_mut(realm);
                let idx = match realm.users.iter().position(|u| u.name == *name) {
                    Some(i) => i,
                    None => {
                        realm.users.push(UserSpec {
                            name: name.to_string(),
                            password: None,
                            address: 0,
                            authorized: false,
                            clock_offset: 0,
                        });
                        realm.users.len() - 1
                    }
                };
                let u = &mut realm.users[idx];
                match *field {
                    "password" => u.password = Some(value.to_string()),
                    "address" => u.address = parse_value(value, line, key)?,
                    "authorized" => u.authorized = parse_value(value, line, key)?,
                    "clock_offset" => u.clock_offset = parse_value(value, line, key)?,
                    _ => {
                        return Err(ScenarioError::Parse {
                            line,
                            msg: format!("unknown key {key}"),
                        })
                    }
                }
            }
            _ => {
                return Err(ScenarioError::Parse {
                    line,
                    msg: format!("unknown key {key}"),
                })
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |msg: String| Err(ScenarioError::Validation(msg));
        if self.realms.is_empty() {
            return invalid("at least one realm is required".into());
        }
        let mut realm_names = BTreeSet::new();
        for realm in &self.realms {
            check_name(&realm.name, "realm")?;
            if !realm_names.insert(&realm.name) {
                return invalid(format!("realm {} declared twice", realm.name));
            }
            if realm.services.is_empty() {
                return invalid(format!("realm {} has no base-station services", realm.name));
            }
            let mut names = BTreeSet::new();
            for service in &realm.services {
                check_name(service, "service")?;
                if service == TGS_NAME || !names.insert(service.as_str()) {
                    return invalid(format!(
                        "service name {service} in realm {} is reserved or repeated",
                        realm.name
                    ));
                }
            }
            let mut addresses = BTreeSet::new();
            for u in &realm.users {
                check_name(&u.name, "user")?;
                if u.name == TGS_NAME || !names.insert(u.name.as_str()) {
                    return invalid(format!(
                        "user name {} in realm {} is reserved or repeated",
                        u.name, realm.name
                    ));
                }
                if !addresses.insert(u.address) {
                    return invalid(format!(
                        "duplicate address {} in realm {}",
                        u.address, realm.name
                    ));
                }
                match &u.password {
                    Some(pw) if pw.is_empty() || pw.trim() != pw => {
                        return invalid(format!(
                            "password of {} must be non-empty and untrimmed-safe",
                            u.name
                        ))
                    }
                    None if u.authorized => {
                        return invalid(format!(
                            "authorized user {} in realm {} needs a password",
                            u.name, realm.name
                        ))
                    }
                    _ => {}
                }
            }
        }
        let t = &self.topology;
        if !(t.area.is_finite() && t.area > 0.0) {
            return invalid("topology.area must be finite and > 0".into());
        }
        if !(t.range.is_finite() && t.range >= 0.0) {
            return invalid("topology.range must be finite and >= 0".into());
        }
        if t.reading_packet_size == 0 || t.query_packet_size == 0 {
            return invalid("packet sizes must be > 0".into());
        }
        self.energy
            .validate(t.reading_packet_size)
            .map_err(ScenarioError::Validation)?;
        self.kdc
            .validate()
            .map_err(|m| ScenarioError::Validation(m.into()))?;
        if self.run.max_ticks == 0 {
            return invalid("run.max_ticks must be > 0".into());
        }
        if self.run.user_counts.is_empty() {
            return invalid("run.user_counts must not be empty".into());
        }
        if self.run.energies.is_empty() || self.run.energies.windows(2).any(|w| w[0] > w[1]) {
            return invalid("run.energies must be non-empty and sorted ascending".into());
        }
        Ok(())
    }

    /// Writes every field explicitly; `parse_str(render())` reproduces the
    /// scenario.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| writeln!(out, "{k} = {v}").unwrap();
        kv("scenario.seed", self.seed.to_string());
        kv("topology.n_nodes", self.topology.n_nodes.to_string());
        kv("topology.area", self.topology.area.to_string());
        kv("topology.range", self.topology.range.to_string());
        kv(
            "topology.reading_packet_size",
            self.topology.reading_packet_size.to_string(),
        );
        kv(
            "topology.query_packet_size",
            self.topology.query_packet_size.to_string(),
        );
        kv("energy.initial", self.energy.initial_energy.to_string());
        kv("energy.fixed_tx", self.energy.cost_fixed_tx.to_string());
        kv("energy.per_byte", self.energy.cost_per_byte.to_string());
        kv("energy.verify", self.energy.verify_cost.to_string());
        kv("kdc.tgt_lifetime", self.kdc.tgt_lifetime.to_string());
        kv(
            "kdc.service_ticket_lifetime",
            self.kdc.service_ticket_lifetime.to_string(),
        );
        kv("kdc.max_clock_skew", self.kdc.max_clock_skew.to_string());
        kv("run.max_ticks", self.run.max_ticks.to_string());
        kv("run.user_counts", join(&self.run.user_counts));
        kv("run.energies", join(&self.run.energies));
        for realm in &self.realms {
            kv(
                &format!("realm.{}.services", realm.name),
                join(&realm.services),
            );
            for u in &realm.users {
                let prefix = format!("realm.{}.user.{}", realm.name, u.name);
                if let Some(pw) = &u.password {
                    kv(&format!("{prefix}.password"), pw.clone());
                }
                kv(&format!("{prefix}.address"), u.address.to_string());
                kv(&format!("{prefix}.authorized"), u.authorized.to_string());
                kv(
                    &format!("{prefix}.clock_offset"),
                    u.clock_offset.to_string(),
                );
            }
        }
        out
    }

    /// The realm the experiments run in.
    pub fn home_realm(&self) -> &RealmSpec {
        &self.realms[0]
    }
}

/// A random valid single-realm scenario with one to three authorized and
/// one to three unauthorized users, for property sweeps.
///
/// Costs are drawn so that verifying every request is always cheaper than
/// answering the unauthorized ones by a margin of several ticks of
/// lifetime.
pub fn sample_scenario(seed: u64) -> Scenario {
    let mut r = rng::stream(seed, "sample-scenario");
    let authorized = r.random_range(1..=3u32);
    let unauthorized = r.random_range(1..=3u32);
    let users = (0..authorized + unauthorized)
        .map(|i| {
            let is_auth = i < authorized;
            UserSpec {
                name: format!("u{i}"),
                password: is_auth.then(|| format!("pw-{seed}-{i}")),
                address: i + 1,
                authorized: is_auth,
                clock_offset: 0,
            }
        })
        .collect();
    Scenario {
        seed,
        realms: vec![RealmSpec {
            name: "WSN".into(),
            services: vec!["bs1".into()],
            users,
        }],
        topology: TopologyParams {
            n_nodes: r.random_range(1..=15),
            area: r.random_range(20.0..100.0),
            range: r.random_range(20.0..60.0),
            reading_packet_size: r.random_range(8..=24),
            query_packet_size: r.random_range(8..=24),
        },
        energy: EnergyParams {
            initial_energy: r.random_range(1_000_000..=2_000_000),
            cost_fixed_tx: r.random_range(100..=300),
            cost_per_byte: r.random_range(0..=1),
            verify_cost: r.random_range(1..=10),
        },
        ..Scenario::default()
    }
}

pub fn parse_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    Scenario::parse_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn seed_only_file_gets_defaults() {
        let s = Scenario::parse_str("scenario.seed = 7\n").unwrap();
        assert_eq!(
            s,
            Scenario {
                seed: 7,
                ..Scenario::default()
            }
        );
    }

    #[test]
    fn default_scenario_is_valid() {
        Scenario::default().validate().unwrap();
    }

    #[test]
    fn sampled_scenarios_are_valid_and_seeded() {
        for seed in 0..200 {
            let s = sample_scenario(seed);
            s.validate().unwrap();
            assert!(s.realms[0].users.iter().any(|u| !u.authorized));
            assert_eq!(s, sample_scenario(seed));
        }
        assert_ne!(sample_scenario(1), sample_scenario(2));
    }

    #[test]
    fn duplicate_address_rejected() {
        let text = "realm.R.services = bs\n\
                    realm.R.user.a.password = x\nrealm.R.user.a.address = 4\nrealm.R.user.a.authorized = true\n\
                    realm.R.user.b.address = 4\n";
        match Scenario::parse_str(text) {
            Err(ScenarioError::Validation(msg)) => {
                assert!(msg.contains("duplicate address 4"), "{msg}")
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn same_address_in_two_realms_is_fine() {
        let text = "realm.A.services = bs\nrealm.A.user.a.address = 1\n\
                    realm.B.services = bs\nrealm.B.user.b.address = 1\n";
        assert!(Scenario::parse_str(text).is_ok());
    }

    #[test]
    fn unknown_and_duplicate_keys_report_line() {
        assert_eq!(
            Scenario::parse_str("# c\nscenario.seed = 1\nscenario.colour = red\n"),
            Err(ScenarioError::Parse {
                line: 3,
                msg: "unknown key scenario.colour".into()
            })
        );
        assert!(matches!(
            Scenario::parse_str("scenario.seed = 1\nscenario.seed = 2\n"),
            Err(ScenarioError::Parse { line: 2, .. })
        ));
        assert!(matches!(
            Scenario::parse_str("scenario.seed = banana\n"),
            Err(ScenarioError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            Scenario::parse_str("just words\n"),
            Err(ScenarioError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn authorized_user_needs_password() {
        let text = "realm.R.services = bs\nrealm.R.user.a.authorized = true\n";
        assert!(matches!(
            Scenario::parse_str(text),
            Err(ScenarioError::Validation(_))
        ));
    }

    #[test]
    fn expensive_verification_rejected() {
        assert!(matches!(
            Scenario::parse_str("energy.verify = 5000\n"),
            Err(ScenarioError::Validation(_))
        ));
    }

    #[test]
    fn unsorted_energies_rejected() {
        assert!(Scenario::parse_str("run.energies = 5, 3\n").is_err());
    }

    #[test]
    fn passwords_may_contain_equals_and_hash() {
        let text = "realm.R.services = bs\nrealm.R.user.a.password = p=w#1\nrealm.R.user.a.authorized = true\n";
        let s = Scenario::parse_str(text).unwrap();
        assert_eq!(s.realms[0].users[0].password.as_deref(), Some("p=w#1"));
    }

    fn arb_name() -> impl Strategy<Value = String> {
        "[a-z][a-z0-9_-]{0,6}"
    }

    prop_compose! {
        fn arb_realm()(name in arb_name(),
                       services in proptest::collection::btree_set(arb_name(), 1..3),
                       users in proptest::collection::btree_map(arb_name(), ("[!-~]{1,10}", any::<bool>(), -3i64..3, any::<bool>()), 0..4))
                       -> Option<RealmSpec> {
            let services: Vec<String> = services.into_iter().filter(|s| s != TGS_NAME).collect();
            let users: Vec<UserSpec> = users
                .into_iter()
                .filter(|(n, _)| !services.contains(n) && n != TGS_NAME)
                .enumerate()
                .map(|(i, (name, (pw, authorized, clock_offset, has_pw)))| UserSpec {
                    name,
                    password: (has_pw || authorized).then_some(pw),
                    address: i as u32 * 3 + 1,
                    authorized,
                    clock_offset,
                })
                .collect();
            (!services.is_empty()).then_some(RealmSpec { name, services, users })
        }
    }

    prop_compose! {
        fn arb_scenario()(seed in any::<u64>(),
                          realms in proptest::collection::vec(arb_realm(), 1..3),
                          n_nodes in 0u32..500, area in 1.0f64..1e4, range in 0.0f64..1e3,
                          reading in 1u64..64, query in 1u64..64,
                          initial in 0u64..10_000_000, fixed in 20u64..500, per_byte in 0u64..5, verify in 0u64..20,
                          tgt in 1u64..1000, svc in 1u64..1000, skew in 1u64..20,
                          max_ticks in 1u64..1_000_000,
                          user_counts in proptest::collection::vec(0u32..64, 1..6),
                          mut energies in proptest::collection::vec(0u64..10_000_000, 1..5)) -> Scenario {
            let mut seen = BTreeSet::new();
            let realms = realms.into_iter().flatten().filter(|r| seen.insert(r.name.clone())).collect();
            energies.sort_unstable();
            Scenario {
                seed,
                realms,
                topology: TopologyParams { n_nodes, area, range, reading_packet_size: reading, query_packet_size: query },
                energy: EnergyParams { initial_energy: initial, cost_fixed_tx: fixed, cost_per_byte: per_byte, verify_cost: verify },
                kdc: KdcConfig { tgt_lifetime: tgt, service_ticket_lifetime: svc, max_clock_skew: skew },
                run: RunParams { max_ticks, user_counts, energies },
            }
        }
    }

    proptest! {
        #[test]
        fn render_parse_round_trip(s in arb_scenario()) {
            prop_assume!(s.validate().is_ok());
            let text = s.render();
            prop_assert_eq!(Scenario::parse_str(&text).unwrap(), s);
        }
    }
}
