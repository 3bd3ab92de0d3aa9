use std::path::PathBuf;
use std::sync::Arc;

use kerbwsn::base_station::{BaseStation, BaseStationError, StationConfig};
use kerbwsn::client::{login, ClientError};
use kerbwsn::crypto::{self, random_nonce, KeyRegistry};
use kerbwsn::energy::EnergyParams;
use kerbwsn::kdc::{Kdc, KdcConfig, PrincipalDb};
use kerbwsn::net::{DeliveryError, SimNet};
use kerbwsn::protocol::{encode, ApRequest, Authenticator, SensorQuery, TgsRequest};
use kerbwsn::rng;
use kerbwsn::scenario::{parse_scenario, Scenario};
use kerbwsn::sensor_net::build_topology;
use kerbwsn::world::World;
use kerbwsn::{ErrorKind, NetAddress, Principal, Rejection};

fn query() -> SensorQuery {
    SensorQuery {
        query_id: 1,
        attribute: "humidity".into(),
    }
}

fn p(name: &str, realm: &str) -> Principal {
    Principal::new(name, realm).unwrap()
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

#[test]
fn shipped_scenarios_parse() {
    assert_eq!(
        parse_scenario(&fixture("default.scn")).unwrap(),
        Scenario::default()
    );
    let seed_only = parse_scenario(&fixture("seed-only.scn")).unwrap();
    assert_eq!(seed_only.seed, 1234);
    let crowded = parse_scenario(&fixture("crowded.scn")).unwrap();
    assert_eq!(
        crowded.realms[0]
            .users
            .iter()
            .filter(|u| !u.authorized)
            .count(),
        4
    );
    assert_eq!(
        crowded.realms[0].users[0].password.as_deref(),
        Some("correct horse")
    );
}

#[test]
fn every_user_of_crowded_scenario_is_served_or_refused() {
    let s = parse_scenario(&fixture("crowded.scn")).unwrap();
    let mut world = World::build(&s, true).unwrap();
    let station = world.home_station();
    for name in ["ana", "ben"] {
        let mut session = world.login("LAB", name, 1).unwrap();
        session
            .access_base_station(&mut world.net, &station, query(), 1)
            .unwrap();
    }
    for name in ["x1", "x2"] {
        let err = world
            .login_as("LAB", name, "guess", NetAddress(99), 1)
            .err()
            .unwrap();
        assert_eq!(err.kind(), ErrorKind::UnknownPrincipal);
    }
}

/// Two realms wired by hand so the inter-realm keys can disagree.
fn two_realms(matching_keys: bool) -> SimNet {
    let mut registry = KeyRegistry::new();
    let mut r = rng::stream(5, "two-realms");
    let mut a = PrincipalDb::new("A", registry.generate(&mut r)).unwrap();
    let mut b = PrincipalDb::new("B", registry.generate(&mut r)).unwrap();
    a.register_user(&p("ann", "A"), "ann-pw").unwrap();
    let bs_key = registry.generate(&mut r);
    b.register_service(&p("gw", "B"), bs_key.clone()).unwrap();
    let shared = registry.generate(&mut r);
    a.register_remote_realm("B", shared.clone()).unwrap();
    let b_side = if matching_keys {
        shared
    } else {
        // right key id, wrong bytes
        crypto::random_session_key(&mut r).with_key_id(shared.key_id())
    };
    b.register_remote_realm("A", b_side).unwrap();

    let mut net = SimNet::new();
    net.add_kdc(Kdc::new(a, KdcConfig::default()), rng::stream(5, "kdc-a"));
    net.add_kdc(Kdc::new(b, KdcConfig::default()), rng::stream(5, "kdc-b"));
    let cfg = StationConfig {
        auth_enabled: true,
        max_clock_skew: 5,
        reading_packet_size: 32,
        query_packet_size: 16,
        energy: EnergyParams::default(),
    };
    let topo = build_topology(10, 50.0, 40.0, &mut rng::stream(5, "topo"));
    net.add_station(BaseStation::new(p("gw", "B"), bs_key, cfg, Arc::new(topo)));
    net
}

#[test]
fn cross_realm_with_shared_key() {
    let mut net = two_realms(true);
    let mut ann = login(
        &p("ann", "A"),
        "ann-pw",
        NetAddress(4),
        &mut net,
        1,
        rng::stream(1, "ann"),
    )
    .unwrap();
    let resp = ann
        .access_base_station(&mut net, &p("gw", "B"), query(), 2)
        .unwrap();
    assert!(!resp.readings.is_empty());
    assert_eq!(net.kdc("A").unwrap().counters().tgs_exchanges, 1);
    assert_eq!(net.kdc("B").unwrap().counters().tgs_exchanges, 1);
}

#[test]
fn cross_realm_with_mismatched_key() {
    let mut net = two_realms(false);
    let mut ann = login(
        &p("ann", "A"),
        "ann-pw",
        NetAddress(4),
        &mut net,
        1,
        rng::stream(1, "ann"),
    )
    .unwrap();
    let err = ann
        .access_base_station(&mut net, &p("gw", "B"), query(), 2)
        .unwrap_err();
    assert_eq!(err.kind(), ErrorKind::IntegrityFailure);
    assert!(matches!(err, ClientError::Delivery(DeliveryError::Kdc(_))));
}

#[test]
fn tickets_expire_inclusively_at_tgs_and_station() {
    let mut world = World::build(&Scenario::default(), true).unwrap();
    let mut alice = world.login("WSN", "alice", 0).unwrap();
    let addr = alice.addr();
    let tgt = alice.tgt().unwrap().clone();
    let end = tgt.issued_at + tgt.lifetime;
    let station = p("bs1", "WSN");

    let tgs_request = |now| {
        let auth = Authenticator {
            client: p("alice", "WSN"),
            client_addr: addr,
            timestamp: now,
        };
        TgsRequest {
            user: p("alice", "WSN"),
            service: station.clone(),
            tgt: tgt.ticket.clone(),
            authenticator: crypto::seal(
                &encode(&auth),
                &tgt.session_key,
                &random_nonce(&mut rng::stream(now, "n")),
            ),
        }
    };
    world
        .net
        .send_tgs(addr, "WSN", &encode(&tgs_request(end)), end)
        .unwrap();
    let err = world
        .net
        .send_tgs(addr, "WSN", &encode(&tgs_request(end + 1)), end + 1)
        .unwrap_err();
    assert_eq!(err.kind(), ErrorKind::ExpiredTicket);

    let svc = alice
        .obtain_service_ticket(&mut world.net, &station, 10)
        .unwrap();
    let end = svc.issued_at + svc.lifetime;
    let ap_request = |now| {
        let auth = Authenticator {
            client: p("alice", "WSN"),
            client_addr: addr,
            timestamp: now,
        };
        ApRequest {
            user: p("alice", "WSN"),
            service_ticket: svc.ticket.clone(),
            authenticator: crypto::seal(
                &encode(&auth),
                &svc.session_key,
                &random_nonce(&mut rng::stream(now, "m")),
            ),
            query: query(),
        }
    };
    world
        .net
        .send_station(addr, &station, &encode(&ap_request(end)), end)
        .unwrap();
    let err = world
        .net
        .send_station(addr, &station, &encode(&ap_request(end + 1)), end + 1)
        .unwrap_err();
    assert_eq!(
        err,
        DeliveryError::Station(BaseStationError::AccessDenied(Rejection::ExpiredTicket))
    );
}

#[test]
fn wrong_password_fails_at_reply_decryption() {
    let mut world = World::build(&Scenario::default(), true).unwrap();
    let err = world
        .login_as("WSN", "alice", "alice-pw!", NetAddress(1), 1)
        .err()
        .unwrap();
    assert_eq!(err, ClientError::WrongPassword);
    // the AS answered; only the client could tell the password was wrong
    assert_eq!(world.net.kdc("WSN").unwrap().counters().as_exchanges, 1);
    assert_eq!(world.net.transcript().len(), 2);
}
