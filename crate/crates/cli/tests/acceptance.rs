//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use kerbwsn::base_station::{BaseStation, BaseStationError, StationConfig};
use kerbwsn::client::{login, ClientError};
use kerbwsn::crypto::{self, random_nonce, KeyRegistry};
use kerbwsn::energy::{lifetime_vs_energy, run_lifetime_detailed, traffic_vs_users, EnergyParams};
use kerbwsn::kdc::{Kdc, KdcConfig, PrincipalDb};
use kerbwsn::net::{DeliveryError, SimNet};
use kerbwsn::protocol::{encode, ApRequest, Authenticator, SensorQuery, TgsRequest};
use kerbwsn::rng;
use kerbwsn::scenario::{sample_scenario, RealmSpec, Scenario, TopologyParams, UserSpec};
use kerbwsn::sensor_net::{
    build_topology, many_to_one_round, one_to_many_flood, Point, SensorNode, Topology,
};
use kerbwsn::threat::{
    attack_address_spoof, attack_impersonation, attack_replay, demo_unauthenticated_vulnerability,
    AttackOutcome, ThreatError,
};
use kerbwsn::world::World;
use kerbwsn::{ErrorKind, NetAddress, Principal, Rejection};
use rand::Rng;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);
type Attack = fn(&Scenario, bool) -> Result<AttackOutcome, ThreatError>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn p(name: &str, realm: &str) -> Principal {
    Principal::new(name, realm).unwrap()
}

fn query() -> SensorQuery {
    SensorQuery {
        query_id: 7,
        attribute: "temperature".into(),
    }
}

fn handshake_and_wrong_password() -> Check {
    let start = Instant::now();
    let mut world = World::build(&Scenario::default(), true).map_err(|e| e.to_string())?;
    let station = world.home_station();
    let mut alice = world.login("WSN", "alice", 1).map_err(|e| e.to_string())?;
    let resp = alice
        .access_base_station(&mut world.net, &station, query(), 1)
        .map_err(|e| e.to_string())?;
    ensure!(!resp.readings.is_empty(), "happy path returned no readings");
    ensure!(
        world.net.transcript().len() == 6,
        "happy path took {} messages",
        world.net.transcript().len()
    );

    let mut world = World::build(&Scenario::default(), true).map_err(|e| e.to_string())?;
    let err = world
        .login_as("WSN", "alice", "not-alice-pw", NetAddress(1), 1)
        .err();
    ensure!(
        err == Some(ClientError::WrongPassword),
        "wrong password gave {err:?}"
    );
    let counters = world.net.kdc("WSN").unwrap().counters();
    ensure!(
        counters.as_exchanges == 1
            && counters.tgs_exchanges == 0
            && world.net.transcript().len() == 2,
        "wrong password went past the AS reply"
    );
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    Ok(format!(
        "5 steps served, wrong password stops at AS reply, {elapsed:.2?}"
    ))
}

fn authenticator(
    user: &Principal,
    addr: NetAddress,
    now: u64,
    key: &crypto::SecretKey,
) -> crypto::SealedBlob {
    let auth = Authenticator {
        client: user.clone(),
        client_addr: addr,
        timestamp: now,
    };
    crypto::seal(
        &encode(&auth),
        key,
        &random_nonce(&mut rng::stream(now, "acceptance-nonce")),
    )
}

fn expiry_boundaries() -> Check {
    let mut world = World::build(&Scenario::default(), true).map_err(|e| e.to_string())?;
    let user = p("alice", "WSN");
    let station = world.home_station();
    let mut alice = world.login("WSN", "alice", 0).map_err(|e| e.to_string())?;
    let addr = alice.addr();
    let tgt = alice.tgt().unwrap().clone();
    let end = tgt.issued_at + tgt.lifetime;
    let tgs = |now| {
        encode(&TgsRequest {
            user: user.clone(),
            service: station.clone(),
            tgt: tgt.ticket.clone(),
            authenticator: authenticator(&user, addr, now, &tgt.session_key),
        })
    };
    let at_end = world.net.send_tgs(addr, "WSN", &tgs(end), end);
    ensure!(
        at_end.is_ok(),
        "TGS refused TGT at its last tick: {at_end:?}"
    );
    let after = world.net.send_tgs(addr, "WSN", &tgs(end + 1), end + 1);
    ensure!(
        after.as_ref().err().map(|e| e.kind()) == Some(ErrorKind::ExpiredTicket),
        "TGS one tick late gave {after:?}"
    );

    let svc = alice
        .obtain_service_ticket(&mut world.net, &station, 10)
        .map_err(|e| e.to_string())?;
    let svc_end = svc.issued_at + svc.lifetime;
    let ap = |now| {
        encode(&ApRequest {
            user: user.clone(),
            service_ticket: svc.ticket.clone(),
            authenticator: authenticator(&user, addr, now, &svc.session_key),
            query: query(),
        })
    };
    let at_end = world
        .net
        .send_station(addr, &station, &ap(svc_end), svc_end);
    ensure!(
        at_end.is_ok(),
        "station refused ticket at its last tick: {at_end:?}"
    );
    let after = world
        .net
        .send_station(addr, &station, &ap(svc_end + 1), svc_end + 1);
    ensure!(
        after
            == Err(DeliveryError::Station(BaseStationError::AccessDenied(
                Rejection::ExpiredTicket
            ))),
        "station one tick late gave {after:?}"
    );
    Ok(format!(
        "TGT accepted at {end}, refused at {}; service ticket accepted at {svc_end}, refused at {}",
        end + 1,
        svc_end + 1
    ))
}

fn threat_suite() -> Check {
    let attacks: [(&str, Attack); 3] = [
        ("impersonation", attack_impersonation),
        ("replay", attack_replay),
        ("address alteration", attack_address_spoof),
    ];
    let seeds = 20;
    let mut attempts = 0;
    for seed in 0..seeds {
        let s = Scenario {
            seed,
            ..Scenario::default()
        };
        for (name, attack) in attacks {
            let outcome = attack(&s, true).map_err(|e| format!("{name}: {e}"))?;
            ensure!(
                !outcome.served,
                "{name} served with authentication on, seed {seed}"
            );
            ensure!(
                outcome.attempts.iter().all(|a| !a.served),
                "{name} partially served, seed {seed}"
            );
            attempts += outcome.attempts.len();
        }
        let open = demo_unauthenticated_vulnerability(&s, false).map_err(|e| e.to_string())?;
        let closed = demo_unauthenticated_vulnerability(&s, true).map_err(|e| e.to_string())?;
        ensure!(
            open.served,
            "unauthorized query not served without authentication, seed {seed}"
        );
        ensure!(
            !closed.served,
            "unauthorized query served with authentication, seed {seed}"
        );
    }
    Ok(format!(
        "{attempts} attack attempts over {seeds} seeds all refused; open/closed flip holds"
    ))
}

fn traffic_shape() -> Check {
    let counts = [0, 1, 2, 4, 8, 16];
    let mut scenarios = vec![Scenario::default()];
    scenarios.extend((0..5).map(sample_scenario));
    for s in &scenarios {
        let series = traffic_vs_users(s, &counts).map_err(|e| e.to_string())?;
        ensure!(series[0] == (0, 0), "u=0 gave {:?}", series[0]);
        ensure!(
            series.windows(2).all(|w| w[1].1 > w[0].1),
            "not strictly increasing: {series:?}"
        );
        let bytes: BTreeMap<u32, u64> = series.iter().copied().collect();
        for u in [1, 2, 4, 8] {
            ensure!(
                bytes[&(2 * u)] == 2 * bytes[&u],
                "bytes({}) != 2 x bytes({u})",
                2 * u
            );
        }
    }
    let default = traffic_vs_users(&scenarios[0], &counts).unwrap();
    Ok(format!(
        "{} scenarios linear; default per user {} bytes",
        scenarios.len(),
        default[1].1
    ))
}

fn lifetime_shape() -> Check {
    let n = 50;
    let mut min_gain = u64::MAX;
    for seed in 0..n {
        let s = sample_scenario(seed);
        ensure!(
            s.realms
                .iter()
                .flat_map(|r| &r.users)
                .any(|u| !u.authorized),
            "seed {seed} has no unauthorized user"
        );
        let open = run_lifetime_detailed(&s, false).map_err(|e| e.to_string())?;
        let auth = run_lifetime_detailed(&s, true).map_err(|e| e.to_string())?;
        for run in [&open, &auth] {
            ensure!(run.trace.is_non_increasing(), "seed {seed}: trace rises");
            ensure!(run.energy.audit(), "seed {seed}: audit unbalanced");
            let spent: u64 = run.energy.charges().iter().map(|c| c.applied).sum();
            ensure!(
                run.energy.initial() - run.energy.remaining() == spent,
                "seed {seed}: energy not conserved"
            );
        }
        ensure!(
            auth.trace.lifetime > open.trace.lifetime,
            "seed {seed}: auth {} <= open {}",
            auth.trace.lifetime,
            open.trace.lifetime
        );
        min_gain = min_gain.min(auth.trace.lifetime - open.trace.lifetime);
    }
    Ok(format!(
        "{n}/{n} scenarios live longer with authentication (min gain {min_gain} ticks)"
    ))
}

/// Five nodes in range of the base with 20-byte readings: one authorized
/// user drains 100 + 100 + 10 per tick with authentication, 200 without.
fn hand_scenario() -> Scenario {
    Scenario {
        realms: vec![RealmSpec {
            name: "WSN".into(),
            services: vec!["bs1".into()],
            users: vec![UserSpec {
                name: "alice".into(),
                password: Some("alice-pw".into()),
                address: 1,
                authorized: true,
                clock_offset: 0,
            }],
        }],
        topology: TopologyParams {
            n_nodes: 5,
            area: 10.0,
            range: 100.0,
            reading_packet_size: 20,
            query_packet_size: 16,
        },
        energy: EnergyParams {
            initial_energy: 100_000,
            cost_fixed_tx: 100,
            cost_per_byte: 1,
            verify_cost: 10,
        },
        ..Scenario::default()
    }
}

fn energy_scaling() -> Check {
    let hand = hand_scenario();
    let auth = run_lifetime_detailed(&hand, true).map_err(|e| e.to_string())?;
    let open = run_lifetime_detailed(&hand, false).map_err(|e| e.to_string())?;
    ensure!(
        (auth.trace.lifetime, auth.trace.depleted_at) == (476, Some(477)),
        "hand case with auth: {} / {:?}",
        auth.trace.lifetime,
        auth.trace.depleted_at
    );
    ensure!(
        (open.trace.lifetime, open.trace.depleted_at) == (500, Some(500)),
        "hand case without auth: {} / {:?}",
        open.trace.lifetime,
        open.trace.depleted_at
    );

    let mut cases = vec![hand];
    cases.extend((0..10).map(sample_scenario));
    for (i, s) in cases.iter().enumerate() {
        let e = s.energy.initial_energy / 4;
        let trace = run_lifetime_detailed(s, true)
            .map_err(|e| e.to_string())?
            .trace;
        let drain = trace.series[0] - trace.series[1];
        ensure!(drain > 0, "case {i}: no drain");
        let series = lifetime_vs_energy(s, &[e, 2 * e, 4 * e]).map_err(|e| e.to_string())?;
        ensure!(
            series.windows(2).all(|w| w[1].1 >= w[0].1),
            "case {i}: decreasing {series:?}"
        );
        for &(energy, lifetime) in &series {
            // floor(E / drain): within one tick of E / drain
            ensure!(
                lifetime == energy / drain,
                "case {i}: E={energy} drain={drain} lifetime={lifetime}"
            );
        }
    }
    Ok(format!(
        "hand oracle 476/500 exact; {} cases match floor(E/drain) at E, 2E, 4E",
        cases.len()
    ))
}

fn two_realms(matching_keys: bool) -> SimNet {
    let mut registry = KeyRegistry::new();
    let mut r = rng::stream(9, "acceptance-realms");
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
        crypto::random_session_key(&mut r).with_key_id(shared.key_id())
    };
    b.register_remote_realm("A", b_side).unwrap();

    let mut net = SimNet::new();
    net.add_kdc(Kdc::new(a, KdcConfig::default()), rng::stream(9, "kdc-a"));
    net.add_kdc(Kdc::new(b, KdcConfig::default()), rng::stream(9, "kdc-b"));
    let cfg = StationConfig {
        auth_enabled: true,
        max_clock_skew: 5,
        reading_packet_size: 32,
        query_packet_size: 16,
        energy: EnergyParams::default(),
    };
    let topo = build_topology(12, 50.0, 40.0, &mut rng::stream(9, "acceptance-topo"));
    net.add_station(BaseStation::new(p("gw", "B"), bs_key, cfg, Arc::new(topo)));
    net
}

fn cross_realm() -> Check {
    let mut world = World::build(&Scenario::default(), true).map_err(|e| e.to_string())?;
    let mut carol = world
        .login("FIELD", "carol", 1)
        .map_err(|e| e.to_string())?;
    let resp = carol
        .access_base_station(&mut world.net, &p("bs1", "WSN"), query(), 2)
        .map_err(|e| e.to_string())?;
    ensure!(
        !resp.readings.is_empty(),
        "no readings from the remote station"
    );
    let tgs = |net: &SimNet, realm| net.kdc(realm).unwrap().counters().tgs_exchanges;
    let total = tgs(&world.net, "WSN") + tgs(&world.net, "FIELD");
    ensure!(total == 2, "{total} TGS exchanges");

    let mut net = two_realms(false);
    let mut ann = login(
        &p("ann", "A"),
        "ann-pw",
        NetAddress(4),
        &mut net,
        1,
        rng::stream(1, "ann"),
    )
    .map_err(|e| e.to_string())?;
    let err = ann
        .access_base_station(&mut net, &p("gw", "B"), query(), 2)
        .err();
    ensure!(
        matches!(&err, Some(ClientError::Delivery(DeliveryError::Kdc(e))) if e.kind() == ErrorKind::IntegrityFailure),
        "mismatched key gave {err:?}"
    );
    Ok("two TGS exchanges across realms; mismatched key refused with IntegrityFailure".into())
}

fn random_topology(seed: u64) -> Topology {
    let mut r = rng::stream(seed, "acceptance-topology");
    let n = r.random_range(1..=200u32);
    let area = r.random_range(20.0..200.0);
    let nodes = (0..n)
        .map(|k| SensorNode {
            id: k * 13 + 5,
            position: Point {
                x: r.random::<f64>() * area,
                y: r.random::<f64>() * area,
            },
            radio_range: r.random_range(5.0..60.0),
            reading: r.random_range(-50..50),
        })
        .collect();
    let base = Point {
        x: area / 2.0,
        y: area / 2.0,
    };
    Topology::new(nodes, base, r.random_range(5.0..60.0)).unwrap()
}

/// Hop distance to the base for each node, by BFS over a brute-force
/// adjacency matrix.
fn oracle_hops(topo: &Topology) -> Vec<Option<u64>> {
    let nodes = topo.nodes();
    let hears = |a: Point, ra: f64, b: Point, rb: f64| a.distance_sq(b) <= ra.min(rb).powi(2);
    let n = nodes.len();
    let mut hops = vec![None; n];
    let mut queue = VecDeque::new();
    for i in 0..n {
        if hears(
            topo.base_pos(),
            topo.base_range(),
            nodes[i].position,
            nodes[i].radio_range,
        ) {
            hops[i] = Some(1);
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        for j in 0..n {
            if j != i
                && hops[j].is_none()
                && hears(
                    nodes[i].position,
                    nodes[i].radio_range,
                    nodes[j].position,
                    nodes[j].radio_range,
                )
            {
                hops[j] = Some(hops[i].unwrap() + 1);
                queue.push_back(j);
            }
        }
    }
    hops
}

fn sensor_oracle() -> Check {
    let start = Instant::now();
    let mut nodes = 0;
    for seed in 0..100 {
        let topo = random_topology(seed);
        nodes += topo.len();
        let hops = oracle_hops(&topo);
        let reached: BTreeSet<u32> = topo
            .nodes()
            .iter()
            .zip(&hops)
            .filter(|(_, h)| h.is_some())
            .map(|(n, _)| n.id)
            .collect();
        let flood = one_to_many_flood(&topo, 16);
        ensure!(flood.reached == reached, "seed {seed}: flood reach differs");
        ensure!(
            flood.total_bytes == 16 * (1 + reached.len() as u64),
            "seed {seed}: flood bytes differ"
        );
        let collected: u64 = hops.iter().flatten().map(|h| h * 32).sum();
        let round = many_to_one_round(&topo, 32);
        ensure!(
            round.total_bytes == collected,
            "seed {seed}: collection bytes {} vs {collected}",
            round.total_bytes
        );
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!("100 topologies, {nodes} nodes, {elapsed:.2?}"))
}

fn run_cli(args: &[&str]) -> Result<(Vec<u8>, i32), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_kerbwsn"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    Ok((out.stdout, out.status.code().unwrap_or(-1)))
}

fn cli_determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/seed-only.scn");
    let fixture = fixture.to_str().unwrap().to_string();
    let mut runs = 0;
    for scenario in [None, Some(fixture.as_str())] {
        let mut invocations: Vec<(Vec<String>, Option<std::path::PathBuf>)> = Vec::new();
        for sub in ["handshake", "cross-realm", "attack-report", "run"] {
            invocations.push((vec![sub.into()], None));
        }
        for which in ["10", "11", "12", "13"] {
            invocations.push((vec!["figure".into(), "--which".into(), which.into()], None));
            let path = dir.path().join(format!("fig{which}.csv"));
            let args = vec![
                "figure".into(),
                "--which".into(),
                which.into(),
                "--out".into(),
                path.to_str().unwrap().into(),
            ];
            invocations.push((args, Some(path)));
        }
        for (mut args, file) in invocations {
            if let Some(s) = scenario {
                args.splice(0..0, ["--scenario".to_string(), s.to_string()]);
            }
            let argv: Vec<&str> = args.iter().map(String::as_str).collect();
            let mut seen = Vec::new();
            for _ in 0..2 {
                let (stdout, code) = run_cli(&argv)?;
                let written = match &file {
                    Some(f) => std::fs::read(f).map_err(|e| e.to_string())?,
                    None => Vec::new(),
                };
                if let Some(f) = &file {
                    std::fs::remove_file(f).map_err(|e| e.to_string())?;
                }
                seen.push((stdout, code, written));
            }
            ensure!(seen[0].1 == 0, "{argv:?} exited {}", seen[0].1);
            ensure!(!seen[0].0.is_empty(), "{argv:?} printed nothing");
            ensure!(seen[0] == seen[1], "{argv:?} differs between runs");
            runs += 2;
        }
    }
    Ok(format!("{runs} invocations, each pair byte-identical"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("handshake and wrong password", handshake_and_wrong_password),
        ("ticket expiry boundaries", expiry_boundaries),
        ("threat suite", threat_suite),
        ("traffic vs users", traffic_shape),
        ("lifetime with and without authentication", lifetime_shape),
        ("lifetime vs initial energy", energy_scaling),
        ("cross-realm access", cross_realm),
        ("sensor network oracle", sensor_oracle),
        ("CLI determinism", cli_determinism),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {why}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
