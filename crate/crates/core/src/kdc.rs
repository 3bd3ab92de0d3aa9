//! The key distribution center: an Authentication Server and a Ticket
//! Granting Server sharing one principal database.
//!
//! The AS never checks a password. It seals the reply under the key derived
//! from the user's password, and only a client that knows the password can
//! open it.

use std::collections::{BTreeMap, BTreeSet};

use rand::RngCore;
use thiserror::Error;

use crate::crypto::{self, random_nonce, random_session_key, SealedBlob, SecretKey};
use crate::error::{ErrorKind, Rejection};
use crate::protocol::{
    encode, AsReply, AsRequest, NetAddress, Principal, ReplyPart, TgsReply, TgsRequest, Tick,
    Ticket, WireField,
};
use crate::replay::{self, ReplayCache};
use crate::verify::{verify_credentials, Expectation};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KdcError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("principal {0} already registered")]
    AlreadyRegistered(Principal),
    #[error("key id {0} already in use")]
    DuplicateKeyId(u32),
    #[error("unknown principal {0}")]
    UnknownPrincipal(Principal),
    #[error("unknown service {0}")]
    UnknownService(Principal),
    #[error("unknown realm {0}")]
    UnknownRealm(String),
    #[error("request rejected: {0}")]
    Rejected(Rejection),
}

impl KdcError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            KdcError::InvalidInput(_) => ErrorKind::InvalidInput,
            KdcError::AlreadyRegistered(_) => ErrorKind::AlreadyRegistered,
            KdcError::DuplicateKeyId(_) => ErrorKind::DuplicateKeyId,
            KdcError::UnknownPrincipal(_) => ErrorKind::UnknownPrincipal,
            KdcError::UnknownService(_) => ErrorKind::UnknownService,
            KdcError::UnknownRealm(_) => ErrorKind::UnknownRealm,
            KdcError::Rejected(r) => r.kind(),
        }
    }
}

impl From<Rejection> for KdcError {
    fn from(r: Rejection) -> Self {
        KdcError::Rejected(r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KdcConfig {
    pub tgt_lifetime: Tick,
    pub service_ticket_lifetime: Tick,
    pub max_clock_skew: Tick,
}

impl Default for KdcConfig {
    fn default() -> Self {
        KdcConfig {
            tgt_lifetime: 480,
            service_ticket_lifetime: 100,
            max_clock_skew: 5,
        }
    }
}

impl KdcConfig {
    pub fn validate(&self) -> Result<(), &'static str> {
        if self.tgt_lifetime == 0 {
            return Err("kdc.tgt_lifetime must be > 0");
        }
        if self.service_ticket_lifetime == 0 {
            return Err("kdc.service_ticket_lifetime must be > 0");
        }
        if self.max_clock_skew == 0 {
            return Err("kdc.max_clock_skew must be > 0");
        }
        Ok(())
    }
}

/// Long-term keys known to one realm's KDC. Users are stored only as
/// derived keys.
#[derive(Debug, Clone)]
pub struct PrincipalDb {
    realm: String,
    tgs: Principal,
    tgs_key: SecretKey,
    users: BTreeMap<Principal, SecretKey>,
    services: BTreeMap<Principal, SecretKey>,
    remote_realms: BTreeMap<String, SecretKey>,
    key_ids: BTreeSet<u32>,
}

impl PrincipalDb {
    pub fn new(realm: &str, tgs_key: SecretKey) -> Result<Self, KdcError> {
        let tgs = Principal::tgs(realm).map_err(|e| KdcError::InvalidInput(e.to_string()))?;
        let key_ids = BTreeSet::from([tgs_key.key_id()]);
        Ok(PrincipalDb {
            realm: realm.to_string(),
            tgs,
            tgs_key,
            users: BTreeMap::new(),
            services: BTreeMap::new(),
            remote_realms: BTreeMap::new(),
            key_ids,
        })
    }

    pub fn realm(&self) -> &str {
        &self.realm
    }

    pub fn tgs(&self) -> &Principal {
        &self.tgs
    }

    fn claim_key_id(&mut self, key_id: u32) -> Result<(), KdcError> {
        if key_id == 0 || !self.key_ids.insert(key_id) {
            return Err(KdcError::DuplicateKeyId(key_id));
        }
        Ok(())
    }

    fn free_key_id(&self) -> u32 {
        (1..)
            .find(|id| !self.key_ids.contains(id))
            .expect("key id space exhausted")
    }

    fn check_local(&self, p: &Principal) -> Result<(), KdcError> {
        if p.realm() != self.realm {
            return Err(KdcError::InvalidInput(format!(
                "{p} is not in realm {}",
                self.realm
            )));
        }
        if p.is_tgs() {
            return Err(KdcError::InvalidInput(format!(
                "{p} is reserved for the TGS"
            )));
        }
        if self.users.contains_key(p) || self.services.contains_key(p) {
            return Err(KdcError::AlreadyRegistered(p.clone()));
        }
        Ok(())
    }

    pub fn register_user(&mut self, user: &Principal, password: &str) -> Result<(), KdcError> {
        self.check_local(user)?;
        let key = crypto::derive_key(password, user.name(), user.realm())
            .map_err(|e| KdcError::InvalidInput(e.to_string()))?;
        let key = key.with_key_id(self.free_key_id());
        self.claim_key_id(key.key_id())?;
        self.users.insert(user.clone(), key);
        Ok(())
    }

    pub fn register_service(
        &mut self,
        service: &Principal,
        key: SecretKey,
    ) -> Result<(), KdcError> {
        self.check_local(service)?;
        self.claim_key_id(key.key_id())?;
        self.services.insert(service.clone(), key);
        Ok(())
    }

    pub fn register_remote_realm(
        &mut self,
        realm: &str,
        inter_realm_key: SecretKey,
    ) -> Result<(), KdcError> {
        if realm == self.realm {
            return Err(KdcError::InvalidInput(
                "cannot register the local realm as remote".into(),
            ));
        }
        Principal::tgs(realm).map_err(|e| KdcError::InvalidInput(e.to_string()))?;
        if self.remote_realms.contains_key(realm) {
            return Err(KdcError::InvalidInput(format!(
                "realm {realm} already registered"
            )));
        }
        self.claim_key_id(inter_realm_key.key_id())?;
        self.remote_realms
            .insert(realm.to_string(), inter_realm_key);
        Ok(())
    }

    pub fn user_key(&self, user: &Principal) -> Option<&SecretKey> {
        self.users.get(user)
    }

    pub fn service_key(&self, service: &Principal) -> Option<&SecretKey> {
        self.services.get(service)
    }

    pub fn remote_realm_key(&self, realm: &str) -> Option<&SecretKey> {
        self.remote_realms.get(realm)
    }

    pub fn users(&self) -> impl Iterator<Item = &Principal> {
        self.users.keys()
    }

    pub fn services(&self) -> impl Iterator<Item = &Principal> {
        self.services.keys()
    }

    /// Canonical dump of everything the database stores.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.realm.clone().put(&mut out);
        self.tgs_key.put(&mut out);
        for table in [&self.users, &self.services] {
            (table.len() as u32).put(&mut out);
            for (p, k) in table {
                p.put(&mut out);
                k.put(&mut out);
            }
        }
        (self.remote_realms.len() as u32).put(&mut out);
        for (realm, k) in &self.remote_realms {
            realm.clone().put(&mut out);
            k.put(&mut out);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExchangeCounters {
    pub as_exchanges: u64,
    pub tgs_exchanges: u64,
}

/// One realm's KDC. Exchanges only mutate the replay cache and counters.
#[derive(Debug, Clone)]
pub struct Kdc {
    db: PrincipalDb,
    cfg: KdcConfig,
    replay: ReplayCache,
    as_replay: ReplayCache,
    counters: ExchangeCounters,
}

impl Kdc {
    pub fn new(db: PrincipalDb, cfg: KdcConfig) -> Self {
        Kdc {
            db,
            replay: ReplayCache::new(cfg.max_clock_skew, replay::DEFAULT_CAPACITY),
            as_replay: ReplayCache::new(cfg.max_clock_skew, replay::DEFAULT_CAPACITY),
            cfg,
            counters: ExchangeCounters::default(),
        }
    }

    pub fn realm(&self) -> &str {
        self.db.realm()
    }

    pub fn db(&self) -> &PrincipalDb {
        &self.db
    }

    pub fn db_mut(&mut self) -> &mut PrincipalDb {
        &mut self.db
    }

    pub fn config(&self) -> &KdcConfig {
        &self.cfg
    }

    pub fn counters(&self) -> ExchangeCounters {
        self.counters
    }

    fn seal_ticket<R: RngCore + ?Sized>(
        ticket: &Ticket,
        key: &SecretKey,
        rng: &mut R,
    ) -> SealedBlob {
        crypto::seal(&encode(ticket), key, &random_nonce(rng))
    }

    /// Issues a TGT bound to `source`, sealed for the TGS, inside a reply
    /// sealed under the user's password-derived key.
    ///
    /// `requested_at` must be within the clock skew and is remembered like
    /// an authenticator timestamp, so a captured request cannot be resent.
    pub fn as_exchange<R: RngCore + ?Sized>(
        &mut self,
        req: &AsRequest,
        source: NetAddress,
        now: Tick,
        rng: &mut R,
    ) -> Result<AsReply, KdcError> {
        self.counters.as_exchanges += 1;
        if req.user.realm() != self.db.realm {
            return Err(KdcError::UnknownRealm(req.user.realm().to_string()));
        }
        if req.tgs != self.db.tgs {
            return Err(KdcError::UnknownService(req.tgs.clone()));
        }
        let user_key = self
            .db
            .users
            .get(&req.user)
            .ok_or_else(|| KdcError::UnknownPrincipal(req.user.clone()))?;
        if req.requested_at.abs_diff(now) > self.cfg.max_clock_skew {
            return Err(Rejection::StaleAuthenticator.into());
        }
        self.as_replay
            .check_and_insert(&req.user, source, req.requested_at, now)?;

        let session_key = random_session_key(rng);
        let tgt = Ticket {
            client: req.user.clone(),
            client_addr: source,
            service: self.db.tgs.clone(),
            session_key: session_key.clone(),
            issued_at: now,
            lifetime: self.cfg.tgt_lifetime,
        };
        let part = ReplyPart {
            session_key,
            service: self.db.tgs.clone(),
            issued_at: now,
            lifetime: self.cfg.tgt_lifetime,
            ticket: Self::seal_ticket(&tgt, &self.db.tgs_key, rng),
        };
        Ok(AsReply {
            sealed_for_client: crypto::seal(&encode(&part), user_key, &random_nonce(rng)),
        })
    }

    /// Exchanges a TGT (local, or cross-realm from a trusted realm) plus a
    /// fresh authenticator for a ticket to `req.service`.
    ///
    /// A local service gets a service ticket. A service in a directly
    /// trusted realm gets a cross-realm TGT for that realm's TGS, sealed
    /// under the inter-realm key. Transit through a third realm is refused.
    pub fn tgs_exchange<R: RngCore + ?Sized>(
        &mut self,
        req: &TgsRequest,
        source: NetAddress,
        now: Tick,
        rng: &mut R,
    ) -> Result<TgsReply, KdcError> {
        self.counters.tgs_exchanges += 1;
        let client_realm = req.user.realm();
        let tgt_key = if client_realm == self.db.realm {
            &self.db.tgs_key
        } else {
            self.db
                .remote_realms
                .get(client_realm)
                .ok_or_else(|| KdcError::UnknownRealm(client_realm.to_string()))?
        };
        let expect = Expectation {
            service_key: tgt_key,
            service: &self.db.tgs,
            claimed_user: &req.user,
            source,
            now,
            max_skew: self.cfg.max_clock_skew,
        };
        let tgt = verify_credentials(&expect, &req.tgt, &req.authenticator, &mut self.replay)?;

        let (target, target_key) = if req.service.realm() == self.db.realm {
            let key = self
                .db
                .services
                .get(&req.service)
                .ok_or_else(|| KdcError::UnknownService(req.service.clone()))?;
            (req.service.clone(), key)
        } else {
            if tgt.client.realm() != self.db.realm {
                return Err(KdcError::UnknownRealm(req.service.realm().to_string()));
            }
            let key = self
                .db
                .remote_realms
                .get(req.service.realm())
                .ok_or_else(|| KdcError::UnknownRealm(req.service.realm().to_string()))?;
            let remote_tgs = Principal::tgs(req.service.realm())
                .map_err(|e| KdcError::InvalidInput(e.to_string()))?;
            (remote_tgs, key)
        };

        let session_key = random_session_key(rng);
        let ticket = Ticket {
            client: tgt.client.clone(),
            client_addr: tgt.client_addr,
            service: target.clone(),
            session_key: session_key.clone(),
            issued_at: now,
            lifetime: self.cfg.service_ticket_lifetime,
        };
        let part = ReplyPart {
            session_key,
            service: target,
            issued_at: now,
            lifetime: self.cfg.service_ticket_lifetime,
            ticket: Self::seal_ticket(&ticket, target_key, rng),
        };
        Ok(TgsReply {
            sealed_for_client: crypto::seal(&encode(&part), &tgt.session_key, &random_nonce(rng)),
        })
    }
}
