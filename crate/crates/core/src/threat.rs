//! Adversary scenarios against a base station.
//!
//! The adversary reads every message on the simulated network and can
//! inject arbitrary bytes from any source address, but holds no secret key.
//! Each attack builds its own world, lets the victim (the first authorized
//! user of the first realm) complete one legitimate query, and then tries
//! a list of strategies. Outcomes are data: every strategy is reported with
//! whether it obtained sensor readings and, if not, why it was refused.

use std::collections::BTreeSet;

use rand::Rng;
use thiserror::Error;

use crate::client::ClientSession;
use crate::crypto::{self, random_nonce, SecretKey, KEY_LEN};
use crate::error::ErrorKind;
use crate::net::{Endpoint, WireMessage};
use crate::protocol::{
    decode, encode, peek_tag, tag, ApRequest, Authenticator, NetAddress, Principal, RawQuery,
    ReplyPart, SensorQuery, TgsReply, TgsRequest, Tick, Ticket,
};
use crate::rng::{self, SimRng};
use crate::scenario::{Scenario, ScenarioError, UserSpec};
use crate::world::World;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ThreatError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("attack setup failed: {0}")]
    Setup(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attempt {
    pub strategy: String,
    pub served: bool,
    pub rejection: Option<ErrorKind>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackOutcome {
    pub attack_name: String,
    pub auth_enabled: bool,
    /// True if any strategy obtained sensor readings.
    pub served: bool,
    /// Why the first strategy was refused; absent when anything was served.
    pub rejection: Option<ErrorKind>,
    pub attempts: Vec<Attempt>,
    pub messages_observed: Vec<WireMessage>,
}

impl AttackOutcome {
    fn new(
        name: &str,
        auth_enabled: bool,
        attempts: Vec<Attempt>,
        transcript: &[WireMessage],
    ) -> Self {
        let served = attempts.iter().any(|a| a.served);
        let rejection = if served {
            None
        } else {
            attempts.first().and_then(|a| a.rejection)
        };
        AttackOutcome {
            attack_name: name.to_string(),
            auth_enabled,
            served,
            rejection,
            attempts,
            messages_observed: transcript.to_vec(),
        }
    }
}

/// Passwords an attacker might try.
pub const PASSWORD_GUESSES: &[&str] = &[
    "password", "123456", "letmein", "qwerty", "admin", "changeme",
];

fn attempt(strategy: impl Into<String>, result: Result<(), ErrorKind>) -> Attempt {
    Attempt {
        strategy: strategy.into(),
        served: result.is_ok(),
        rejection: result.err(),
    }
}

fn query(id: u32) -> SensorQuery {
    SensorQuery {
        query_id: id,
        attribute: "temperature".into(),
    }
}

const T0: Tick = 10;

/// One world after the victim's legitimate query, plus what the attacker
/// captured from it.
struct Stage {
    world: World,
    auth_enabled: bool,
    realm: String,
    victim: UserSpec,
    victim_p: Principal,
    victim_session: ClientSession,
    attacker: Principal,
    attacker_addr: NetAddress,
    station: Principal,
    captured_as: Vec<u8>,
    captured_tgs: Vec<u8>,
    captured_ap: Vec<u8>,
    rng: SimRng,
}

fn captured(
    transcript: &[WireMessage],
    from: NetAddress,
    wanted: u8,
) -> Result<Vec<u8>, ThreatError> {
    transcript
        .iter()
        .find(|m| m.from == Endpoint::Host(from) && peek_tag(&m.bytes) == Some(wanted))
        .map(|m| m.bytes.clone())
        .ok_or_else(|| ThreatError::Setup(format!("no message with tag {wanted:#04x} observed")))
}

fn stage(scenario: &Scenario, auth_enabled: bool) -> Result<Stage, ThreatError> {
    let mut world = World::build(scenario, auth_enabled)?;
    let home = scenario.home_realm().clone();
    let victim = home
        .users
        .iter()
        .find(|u| u.authorized)
        .cloned()
        .ok_or_else(|| ThreatError::Setup("no authorized victim in the first realm".into()))?;
    let (attacker_name, attacker_addr) = match home.users.iter().find(|u| !u.authorized) {
        Some(u) => (u.name.clone(), NetAddress(u.address)),
        None => {
            let used: BTreeSet<u32> = home.users.iter().map(|u| u.address).collect();
            let addr = (666..).find(|a| !used.contains(a)).expect("free address");
            ("eve".to_string(), NetAddress(addr))
        }
    };
    let station = world.home_station();
    let victim_p =
        Principal::new(&victim.name, &home.name).map_err(|e| ThreatError::Setup(e.to_string()))?;

    let mut victim_session = world
        .login(&home.name, &victim.name, T0)
        .map_err(|e| ThreatError::Setup(format!("victim login: {e}")))?;
    victim_session
        .access_base_station(&mut world.net, &station, query(1), T0)
        .map_err(|e| ThreatError::Setup(format!("victim query: {e}")))?;

    let from = NetAddress(victim.address);
    let transcript = world.net.transcript();
    let captured_as = captured(transcript, from, tag::AS_REQUEST)?;
    let captured_tgs = captured(transcript, from, tag::TGS_REQUEST)?;
    let captured_ap = captured(transcript, from, tag::AP_REQUEST)?;

    Ok(Stage {
        rng: rng::stream(scenario.seed, "attacker"),
        attacker: Principal::new(&attacker_name, &home.name)
            .map_err(|e| ThreatError::Setup(e.to_string()))?,
        realm: home.name,
        world,
        auth_enabled,
        victim,
        victim_p,
        victim_session,
        attacker_addr,
        station,
        captured_as,
        captured_tgs,
        captured_ap,
    })
}

impl Stage {
    fn random_key(&mut self, key_id: u32) -> SecretKey {
        let mut bytes = [0u8; KEY_LEN];
        self.rng.fill(&mut bytes[..]);
        SecretKey::new(key_id, bytes)
    }

    fn send_station_to(
        &mut self,
        from: NetAddress,
        station: &Principal,
        bytes: &[u8],
        now: Tick,
    ) -> Result<(), ErrorKind> {
        self.world
            .net
            .send_station(from, station, bytes, now)
            .map(|_| ())
            .map_err(|e| e.kind())
    }

    fn send_station(&mut self, from: NetAddress, bytes: &[u8], now: Tick) -> Result<(), ErrorKind> {
        let station = self.station.clone();
        self.send_station_to(from, &station, bytes, now)
    }

    /// A replayed request's reply is sealed under a key the attacker does
    /// not hold, so an answer is as useless as a refusal.
    fn replay_tgs(
        &mut self,
        from: NetAddress,
        realm: &str,
        bytes: &[u8],
        now: Tick,
    ) -> Result<(), ErrorKind> {
        match self.world.net.send_tgs(from, realm, bytes, now) {
            Ok(_) => Err(ErrorKind::IntegrityFailure),
            Err(e) => Err(e.kind()),
        }
    }

    fn send_as(&mut self, from: NetAddress, bytes: &[u8], now: Tick) -> Result<(), ErrorKind> {
        let realm = self.realm.clone();
        match self.world.net.send_as(from, &realm, bytes, now) {
            // The reply is sealed under the victim's key; without the
            // password the attacker learns nothing from it.
            Ok(_) => Err(ErrorKind::IntegrityFailure),
            Err(e) => Err(e.kind()),
        }
    }

    fn sealed_authenticator(
        &mut self,
        client: &Principal,
        addr: NetAddress,
        key: &SecretKey,
        now: Tick,
    ) -> crypto::SealedBlob {
        let auth = Authenticator {
            client: client.clone(),
            client_addr: addr,
            timestamp: now,
        };
        crypto::seal(&encode(&auth), key, &random_nonce(&mut self.rng))
    }

    /// A ticket the attacker made up, sealed under a key of their choosing.
    fn forged_ap(&mut self, addr: NetAddress, sealing_key_id: u32, now: Tick) -> Vec<u8> {
        let sealing_key = self.random_key(sealing_key_id);
        let session_key = self.random_key(0);
        let ticket = Ticket {
            client: self.victim_p.clone(),
            client_addr: addr,
            service: self.station.clone(),
            session_key: session_key.clone(),
            issued_at: now,
            lifetime: 100,
        };
        let victim = self.victim_p.clone();
        let req = ApRequest {
            user: victim.clone(),
            service_ticket: crypto::seal(
                &encode(&ticket),
                &sealing_key,
                &random_nonce(&mut self.rng),
            ),
            authenticator: self.sealed_authenticator(&victim, addr, &session_key, now),
            query: query(now as u32),
        };
        encode(&req)
    }

    fn captured_ap(&self) -> ApRequest {
        decode(&self.captured_ap).expect("captured AP request decodes")
    }

    fn skew(&self) -> Tick {
        self.world.scenario.kdc.max_clock_skew
    }
}

/// Tries to pass as the victim without their password: guessed passwords,
/// self-made and tampered tickets, a forged TGT, a bare query in the
/// victim's name, and (when another user exists) an insider claiming to be
/// the victim.
pub fn attack_impersonation(
    scenario: &Scenario,
    auth_enabled: bool,
) -> Result<AttackOutcome, ThreatError> {
    let mut s = stage(scenario, auth_enabled)?;
    let mut attempts = Vec::new();
    let mut now = T0 + 1;
    let attacker_addr = s.attacker_addr;
    let victim_addr = NetAddress(s.victim.address);

    for guess in PASSWORD_GUESSES {
        let realm = s.realm.clone();
        let name = s.victim.name.clone();
        let station = s.station.clone();
        let result = match s.world.login_as(&realm, &name, guess, attacker_addr, now) {
            Ok(mut session) => session
                .access_base_station(&mut s.world.net, &station, query(now as u32), now)
                .map(|_| ())
                .map_err(|e| e.kind()),
            Err(e) => Err(e.kind()),
        };
        attempts.push(attempt(format!("guess-password:{guess}"), result));
        now += 1;
    }

    let observed_key_id = s.captured_ap().service_ticket.key_id;
    let bytes = s.forged_ap(attacker_addr, 0, now);
    let r = s.send_station(attacker_addr, &bytes, now);
    attempts.push(attempt("forged-ticket:random-key", r));

    let bytes = s.forged_ap(attacker_addr, observed_key_id, now);
    let r = s.send_station(attacker_addr, &bytes, now);
    attempts.push(attempt("forged-ticket:observed-key-id", r));

    let bytes = s.forged_ap(victim_addr, observed_key_id, now);
    let r = s.send_station(victim_addr, &bytes, now);
    attempts.push(attempt("forged-ticket:spoofed-victim-address", r));

    let mut tampered = s.captured_ap();
    if let Some(b) = tampered.service_ticket.ciphertext.first_mut() {
        *b ^= 0x01;
    }
    let guessed = s.random_key(0);
    let victim = s.victim_p.clone();
    tampered.authenticator = s.sealed_authenticator(&victim, victim_addr, &guessed, now);
    let r = s.send_station(victim_addr, &encode(&tampered), now);
    attempts.push(attempt("tampered-ticket", r));

    let tgs = Principal::tgs(&s.realm).map_err(|e| ThreatError::Setup(e.to_string()))?;
    let captured_tgs: TgsRequest = decode(&s.captured_tgs).expect("captured TGS request decodes");
    let tgs_key = s.random_key(captured_tgs.tgt.key_id);
    let session_key = s.random_key(0);
    let forged_tgt = Ticket {
        client: victim.clone(),
        client_addr: attacker_addr,
        service: tgs,
        session_key: session_key.clone(),
        issued_at: now,
        lifetime: 480,
    };
    let req = TgsRequest {
        user: victim.clone(),
        service: s.station.clone(),
        tgt: crypto::seal(&encode(&forged_tgt), &tgs_key, &random_nonce(&mut s.rng)),
        authenticator: s.sealed_authenticator(&victim, attacker_addr, &session_key, now),
    };
    let realm = s.realm.clone();
    // Had the TGS accepted the forgery, the reply would open under the
    // attacker's own session key and yield a real service ticket.
    let r = match s
        .world
        .net
        .send_tgs(attacker_addr, &realm, &encode(&req), now)
    {
        Err(e) => Err(e.kind()),
        Ok(bytes) => {
            let reply: TgsReply = decode(&bytes).expect("KDC replies decode");
            match crypto::open(&reply.sealed_for_client, &session_key)
                .map(|p| decode::<ReplyPart>(&p))
            {
                Ok(Ok(part)) => {
                    let ap = ApRequest {
                        user: victim.clone(),
                        service_ticket: part.ticket,
                        authenticator: s.sealed_authenticator(
                            &victim,
                            attacker_addr,
                            &part.session_key,
                            now,
                        ),
                        query: query(now as u32),
                    };
                    s.send_station(attacker_addr, &encode(&ap), now)
                }
                _ => Err(ErrorKind::IntegrityFailure),
            }
        }
    };
    attempts.push(attempt("forged-tgt", r));

    let raw = RawQuery {
        claimed_user: victim.clone(),
        query: query(now as u32),
    };
    let r = s.send_station(attacker_addr, &encode(&raw), now);
    attempts.push(attempt("raw-query-as-victim", r));

    let insider = scenario
        .home_realm()
        .users
        .iter()
        .find(|u| u.authorized && u.name != s.victim.name)
        .cloned();
    if let Some(insider) = insider {
        now += 1;
        let realm = s.realm.clone();
        let station = s.station.clone();
        let r = match s.world.login(&realm, &insider.name, now) {
            Ok(mut session) => {
                match session.ap_request(&mut s.world.net, &station, query(now as u32), now) {
                    Ok(mut req) => {
                        req.user = victim.clone();
                        s.send_station(NetAddress(insider.address), &encode(&req), now)
                    }
                    Err(e) => Err(e.kind()),
                }
            }
            Err(e) => Err(e.kind()),
        };
        attempts.push(attempt("insider-claims-victim", r));
    }

    Ok(AttackOutcome::new(
        "impersonation",
        s.auth_enabled,
        attempts,
        s.world.net.transcript(),
    ))
}

/// Resends the victim's captured AS, TGS and AP requests byte for byte,
/// from the victim's own address: at once, after the skew window, and (AP
/// only) to a different base station.
pub fn attack_replay(
    scenario: &Scenario,
    auth_enabled: bool,
) -> Result<AttackOutcome, ThreatError> {
    let mut s = stage(scenario, auth_enabled)?;
    let from = NetAddress(s.victim.address);
    // Clients may stamp a few ticks ahead when busy; twice the skew is
    // safely outside the window.
    let late = T0 + 2 * s.skew() + 1;
    let (as_bytes, tgs_bytes, ap_bytes) = (
        s.captured_as.clone(),
        s.captured_tgs.clone(),
        s.captured_ap.clone(),
    );
    let realm = s.realm.clone();
    let mut attempts = Vec::new();

    for (when, label) in [(T0, "immediate"), (late, "after-skew")] {
        let r = s.send_as(from, &as_bytes, when);
        attempts.push(attempt(format!("replay-as:{label}"), r));
        let r = s.replay_tgs(from, &realm, &tgs_bytes, when);
        attempts.push(attempt(format!("replay-tgs:{label}"), r));
        let r = s.send_station(from, &ap_bytes, when);
        attempts.push(attempt(format!("replay-ap:{label}"), r));
    }

    let other = scenario
        .realms
        .iter()
        .flat_map(|r| r.services.iter().map(move |svc| (svc, &r.name)))
        .map(|(svc, realm)| Principal::new(svc, realm).expect("validated name"))
        .find(|p| *p != s.station);
    if let Some(other) = other {
        let r = s.send_station_to(from, &other, &ap_bytes, T0);
        attempts.push(attempt("replay-ap:other-station", r));
    }

    Ok(AttackOutcome::new(
        "replay",
        s.auth_enabled,
        attempts,
        s.world.net.transcript(),
    ))
}

/// Presents the victim's captured ticket from addresses other than the
/// one it is bound to, and from the victim's address without the session
/// key.
pub fn attack_address_spoof(
    scenario: &Scenario,
    auth_enabled: bool,
) -> Result<AttackOutcome, ThreatError> {
    let mut s = stage(scenario, auth_enabled)?;
    let attacker_addr = s.attacker_addr;
    let victim_addr = NetAddress(s.victim.address);
    let victim = s.victim_p.clone();
    let mut attempts = Vec::new();
    let now = T0 + 1;

    // The captured authenticator names the victim's address; the attacker
    // re-seals nothing and simply sends from elsewhere.
    let r = s.send_station(attacker_addr, &s.captured_ap.clone(), now);
    attempts.push(attempt("stolen-ticket:attacker-address", r));

    let mut req = s.captured_ap();
    let guessed = s.random_key(0);
    req.authenticator = s.sealed_authenticator(&victim, attacker_addr, &guessed, now);
    let r = s.send_station(attacker_addr, &encode(&req), now);
    attempts.push(attempt(
        "stolen-ticket:attacker-address-fresh-authenticator",
        r,
    ));

    let mut req = s.captured_ap();
    let guessed = s.random_key(0);
    req.authenticator = s.sealed_authenticator(&victim, victim_addr, &guessed, now + 1);
    let r = s.send_station(victim_addr, &encode(&req), now + 1);
    attempts.push(attempt("stolen-ticket:spoofed-victim-address", r));

    let attacker = s.attacker.clone();
    let mut req = s.captured_ap();
    req.user = attacker.clone();
    req.authenticator = s.sealed_authenticator(&attacker, attacker_addr, &guessed, now + 2);
    let r = s.send_station(attacker_addr, &encode(&req), now + 2);
    attempts.push(attempt("stolen-ticket:claimed-as-attacker", r));

    Ok(AttackOutcome::new(
        "address-spoof",
        s.auth_enabled,
        attempts,
        s.world.net.transcript(),
    ))
}

/// An unregistered user sends a bare query in their own name.
pub fn demo_unauthenticated_vulnerability(
    scenario: &Scenario,
    auth_enabled: bool,
) -> Result<AttackOutcome, ThreatError> {
    let mut s = stage(scenario, auth_enabled)?;
    s.world.net.clear_transcript();
    let raw = RawQuery {
        claimed_user: s.attacker.clone(),
        query: query(7),
    };
    let r = s.send_station(s.attacker_addr, &encode(&raw), T0 + 1);
    let attempts = vec![attempt("raw-query", r)];
    Ok(AttackOutcome::new(
        "unauthenticated-access",
        s.auth_enabled,
        attempts,
        s.world.net.transcript(),
    ))
}

/// Every built-in attack, in report order.
pub fn all_attacks(
    scenario: &Scenario,
    auth_enabled: bool,
) -> Result<Vec<AttackOutcome>, ThreatError> {
    Ok(vec![
        attack_impersonation(scenario, auth_enabled)?,
        attack_replay(scenario, auth_enabled)?,
        attack_address_spoof(scenario, auth_enabled)?,
        demo_unauthenticated_vulnerability(scenario, auth_enabled)?,
    ])
}

/// Which (source address, holds the real session key) pairs get served
/// when the captured ticket is presented with a fresh authenticator, for
/// every source address in `addresses` plus the victim's own.
pub fn address_sweep(
    scenario: &Scenario,
    addresses: impl IntoIterator<Item = u32>,
) -> Result<Vec<(NetAddress, bool)>, ThreatError> {
    let mut s = stage(scenario, true)?;
    let victim_addr = NetAddress(s.victim.address);
    let mut sources: BTreeSet<u32> = addresses.into_iter().collect();
    sources.insert(victim_addr.0);
    let ticket = s
        .victim_session
        .cached(&s.station)
        .cloned()
        .ok_or_else(|| ThreatError::Setup("victim holds no service ticket".into()))?;
    let victim = s.victim_p.clone();
    let mut served = Vec::new();
    let mut now = T0;
    for addr in sources {
        now += 1;
        let from = NetAddress(addr);
        for with_key in [false, true] {
            let key = if with_key {
                ticket.session_key.clone()
            } else {
                s.random_key(0)
            };
            let req = ApRequest {
                user: victim.clone(),
                service_ticket: ticket.ticket.clone(),
                authenticator: s.sealed_authenticator(&victim, from, &key, now),
                query: query(addr),
            };
            if s.send_station(from, &encode(&req), now).is_ok() {
                served.push((from, with_key));
            }
        }
        if now >= T0 + ticket.lifetime {
            break;
        }
    }
    Ok(served)
}
