use std::io::Write;

use kerbwsn::client::{CachedTicket, ClientSession};
use kerbwsn::net::{Endpoint, WireMessage};
use kerbwsn::protocol::{
    decode, peek_tag, tag, ApRequest, AsReply, AsRequest, Principal, SensorQuery, SensorResponse,
    TgsReply, TgsRequest, Tick,
};
use kerbwsn::scenario::{Scenario, UserSpec};
use kerbwsn::world::World;

use crate::Failure;

const START: Tick = 1;

fn endpoint(e: &Endpoint) -> String {
    match e {
        Endpoint::Host(a) => format!("client {a}"),
        Endpoint::Kdc(realm) => format!("KDC {realm}"),
        Endpoint::Station(p) => format!("base station {p}"),
    }
}

fn validity(t: &CachedTicket) -> String {
    format!("valid ticks {}..={}", t.issued_at, t.issued_at + t.lifetime)
}

fn first_authorized(scenario: &Scenario, realm: usize) -> Result<(String, UserSpec), Failure> {
    let r = &scenario.realms[realm];
    r.users
        .iter()
        .find(|u| u.authorized)
        .map(|u| (r.name.clone(), u.clone()))
        .ok_or_else(|| Failure::scenario(format!("realm {} has no authorized user", r.name)))
}

/// Writes one numbered step per request/reply; a sensor response is
/// attached to the request it answers.
fn describe(
    transcript: &[WireMessage],
    session: &ClientSession,
    issued: &[CachedTicket],
    out: &mut dyn Write,
) -> Result<(), Failure> {
    let mut step = 0;
    let mut issued = issued.iter();
    for msg in transcript {
        let t = peek_tag(&msg.bytes);
        let (name, text) = match t {
            Some(tag::AS_REQUEST) => {
                let req: AsRequest = decode(&msg.bytes).map_err(Failure::scenario)?;
                (
                    "AS-REQ",
                    format!(
                        "{} asks for a ticket-granting ticket for {}",
                        req.user, req.tgs
                    ),
                )
            }
            Some(tag::AS_REPLY) => {
                let rep: AsReply = decode(&msg.bytes).map_err(Failure::scenario)?;
                let tgt = session
                    .tgt()
                    .ok_or_else(|| Failure::scenario("no TGT after login"))?;
                (
                    "AS-REP",
                    format!(
                        "sealed under the user's key #{}; the client derives that key from the password and opens it: TGT for {}, {}",
                        rep.sealed_for_client.key_id,
                        tgt.service,
                        validity(tgt)
                    ),
                )
            }
            Some(tag::TGS_REQUEST) => {
                let req: TgsRequest = decode(&msg.bytes).map_err(Failure::scenario)?;
                (
                    "TGS-REQ",
                    format!(
                        "{} presents a ticket sealed under key #{} with an authenticator and asks for {}",
                        req.user, req.tgt.key_id, req.service
                    ),
                )
            }
            Some(tag::TGS_REPLY) => {
                let _: TgsReply = decode(&msg.bytes).map_err(Failure::scenario)?;
                let ticket = issued
                    .next()
                    .ok_or_else(|| Failure::scenario("unexpected TGS reply"))?;
                (
                    "TGS-REP",
                    format!(
                        "ticket verified and within its time limit; issues a ticket for {} sealed under key #{}, {}",
                        ticket.service,
                        ticket.ticket.key_id,
                        validity(ticket)
                    ),
                )
            }
            Some(tag::AP_REQUEST) => {
                let req: ApRequest = decode(&msg.bytes).map_err(Failure::scenario)?;
                (
                    "AP-REQ",
                    format!(
                        "{} presents the service ticket with an authenticator and queries {:?}",
                        req.user, req.query.attribute
                    ),
                )
            }
            Some(tag::SENSOR_RESPONSE) => {
                let resp: SensorResponse = decode(&msg.bytes).map_err(Failure::scenario)?;
                writeln!(
                    out,
                    "   {} authenticated the ticket and answered with {} readings, aggregate {} ({} bytes)",
                    endpoint(&msg.from),
                    resp.readings.len(),
                    resp.aggregate,
                    msg.bytes.len()
                )?;
                continue;
            }
            _ => ("?", "unrecognised message".to_string()),
        };
        step += 1;
        writeln!(
            out,
            "{step}. {} -> {}  {name} ({} bytes)",
            endpoint(&msg.from),
            endpoint(&msg.to),
            msg.bytes.len()
        )?;
        writeln!(out, "   {text}")?;
    }
    Ok(())
}

fn counters(world: &World, out: &mut dyn Write) -> Result<(), Failure> {
    for realm in &world.scenario.realms {
        let c = world
            .net
            .kdc(&realm.name)
            .expect("every realm has a KDC")
            .counters();
        writeln!(
            out,
            "KDC {}: {} AS exchanges, {} TGS exchanges",
            realm.name, c.as_exchanges, c.tgs_exchanges
        )?;
    }
    Ok(())
}

fn query() -> SensorQuery {
    SensorQuery {
        query_id: 1,
        attribute: kerbwsn::energy::QUERY_ATTRIBUTE.into(),
    }
}

fn run_exchange(
    scenario: &Scenario,
    target: Principal,
    out: &mut dyn Write,
) -> Result<(), Failure> {
    let (realm, user) = first_authorized(scenario, 0)?;
    let mut world = World::build(scenario, true).map_err(Failure::scenario)?;
    writeln!(out, "{}@{realm} -> {target} at tick {START}", user.name)?;
    let mut session = world
        .login(&realm, &user.name, START)
        .map_err(|e| Failure::scenario(format!("login failed: {e}")))?;
    session
        .access_base_station(&mut world.net, &target, query(), START)
        .map_err(|e| Failure::scenario(format!("access failed: {e}")))?;

    let mut issued = Vec::new();
    if target.realm() != realm {
        let remote_tgs = Principal::tgs(target.realm()).map_err(Failure::scenario)?;
        issued.extend(session.cached(&remote_tgs).cloned());
    }
    issued.extend(session.cached(&target).cloned());
    describe(world.net.transcript(), &session, &issued, out)?;
    counters(&world, out)
}

/// The five steps of a single-realm exchange: AS request and reply, TGS
/// request and reply, and the base-station request with its answer.
pub(crate) fn handshake(scenario: &Scenario, out: &mut dyn Write) -> Result<(), Failure> {
    let realm = scenario.home_realm();
    let target = Principal::new(&realm.services[0], &realm.name).map_err(Failure::scenario)?;
    writeln!(out, "Kerberos handshake")?;
    run_exchange(scenario, target, out)
}

/// A user of the first realm reaching the first base station of the
/// second realm through a cross-realm TGT.
pub(crate) fn cross_realm(scenario: &Scenario, out: &mut dyn Write) -> Result<(), Failure> {
    let remote = scenario
        .realms
        .get(1)
        .ok_or_else(|| Failure::scenario("cross-realm access needs at least two realms"))?;
    let target = Principal::new(&remote.services[0], &remote.name).map_err(Failure::scenario)?;
    writeln!(out, "Cross-realm access")?;
    run_exchange(scenario, target, out)
}
