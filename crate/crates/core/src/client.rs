//! The user side of the exchange: log in at the AS, keep the TGT, trade it
//! for service tickets, and present those to base stations.
//!
//! Tickets are cached per full principal and reused until they expire by
//! the client's own clock. Only principal names and sealed blobs ever leave
//! the client; the password is used once, locally, to derive the key that
//! opens the AS reply.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::crypto::{self, random_nonce, SealedBlob, SecretKey};
use crate::error::ErrorKind;
use crate::net::{DeliveryError, SimNet};
use crate::protocol::{
    decode, encode, ApRequest, AsReply, AsRequest, Authenticator, NetAddress, Principal, ReplyPart,
    SensorQuery, SensorResponse, TgsReply, TgsRequest, Tick,
};
use crate::rng::SimRng;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClientError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("wrong password")]
    WrongPassword,
    #[error("no ticket-granting ticket; log in first")]
    NoTgt,
    #[error("ticket-granting ticket expired")]
    ExpiredTgt,
    #[error("unexpected reply: {0}")]
    UnexpectedReply(&'static str),
    #[error(transparent)]
    Delivery(#[from] DeliveryError),
}

impl ClientError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            ClientError::InvalidInput(_) => ErrorKind::InvalidInput,
            ClientError::WrongPassword => ErrorKind::WrongPassword,
            ClientError::NoTgt => ErrorKind::NoTgt,
            ClientError::ExpiredTgt => ErrorKind::ExpiredTgt,
            ClientError::UnexpectedReply(_) => ErrorKind::IntegrityFailure,
            ClientError::Delivery(e) => e.kind(),
        }
    }
}

/// A ticket the client holds along with what it learned from the reply
/// that carried it. The ticket itself stays opaque to the client.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CachedTicket {
    pub service: Principal,
    pub ticket: SealedBlob,
    pub session_key: SecretKey,
    pub issued_at: Tick,
    pub lifetime: Tick,
}

impl CachedTicket {
    fn from_part(part: ReplyPart) -> Self {
        CachedTicket {
            service: part.service,
            ticket: part.ticket,
            session_key: part.session_key,
            issued_at: part.issued_at,
            lifetime: part.lifetime,
        }
    }

    pub fn is_valid_at(&self, t: Tick) -> bool {
        self.issued_at <= t && t <= self.issued_at.saturating_add(self.lifetime)
    }
}

pub struct ClientSession {
    user: Principal,
    addr: NetAddress,
    user_key: SecretKey,
    clock_offset: i64,
    tgt: Option<CachedTicket>,
    service_tickets: BTreeMap<Principal, CachedTicket>,
    // Verifiers remember (client, address, timestamp), so two requests to
    // the same verifier within one tick need distinct timestamps.
    last_stamp: BTreeMap<Principal, Tick>,
    rng: SimRng,
}

/// Runs the AS exchange and returns a session holding the TGT.
///
/// The AS cannot tell a wrong password from a right one; the failure shows
/// up here, when the reply does not open under the derived key.
pub fn login(
    user: &Principal,
    password: &str,
    addr: NetAddress,
    net: &mut SimNet,
    now: Tick,
    rng: SimRng,
) -> Result<ClientSession, ClientError> {
    let user_key = crypto::derive_key(password, user.name(), user.realm())
        .map_err(|e| ClientError::InvalidInput(e.to_string()))?;
    let mut session = ClientSession {
        user: user.clone(),
        addr,
        user_key,
        clock_offset: 0,
        tgt: None,
        service_tickets: BTreeMap::new(),
        last_stamp: BTreeMap::new(),
        rng,
    };
    session.renew_tgt(net, now)?;
    Ok(session)
}

impl ClientSession {
    pub fn user(&self) -> &Principal {
        &self.user
    }

    pub fn addr(&self) -> NetAddress {
        self.addr
    }

    pub fn tgt(&self) -> Option<&CachedTicket> {
        self.tgt.as_ref()
    }

    pub fn cached(&self, service: &Principal) -> Option<&CachedTicket> {
        self.service_tickets.get(service)
    }

    /// Offsets the client's clock from simulation time.
    pub fn set_clock_offset(&mut self, offset: i64) {
        self.clock_offset = offset;
    }

    pub fn local_time(&self, now: Tick) -> Tick {
        now.saturating_add_signed(self.clock_offset)
    }

    /// Forgets every ticket, as if the credential cache were destroyed.
    pub fn drop_credentials(&mut self) {
        self.tgt = None;
        self.service_tickets.clear();
    }

    /// Repeats the AS exchange with the key derived at login.
    pub fn renew_tgt(&mut self, net: &mut SimNet, now: Tick) -> Result<(), ClientError> {
        let tgs = Principal::tgs(self.user.realm())
            .map_err(|e| ClientError::InvalidInput(e.to_string()))?;
        let req = AsRequest {
            user: self.user.clone(),
            tgs: tgs.clone(),
            requested_at: self.next_stamp(&tgs, now),
        };
        let bytes = net.send_as(self.addr, self.user.realm(), &encode(&req), now)?;
        let reply: AsReply =
            decode(&bytes).map_err(|_| ClientError::UnexpectedReply("AS reply"))?;
        // The reply names the key version it was sealed under.
        let key = self
            .user_key
            .clone()
            .with_key_id(reply.sealed_for_client.key_id);
        let plain =
            crypto::open(&reply.sealed_for_client, &key).map_err(|_| ClientError::WrongPassword)?;
        let part: ReplyPart =
            decode(&plain).map_err(|_| ClientError::UnexpectedReply("AS reply contents"))?;
        if part.service != tgs {
            return Err(ClientError::UnexpectedReply("AS reply for the wrong TGS"));
        }
        self.tgt = Some(CachedTicket::from_part(part));
        Ok(())
    }

    fn next_stamp(&mut self, verifier: &Principal, now: Tick) -> Tick {
        let mut timestamp = self.local_time(now);
        if let Some(&last) = self.last_stamp.get(verifier) {
            timestamp = timestamp.max(last + 1);
        }
        self.last_stamp.insert(verifier.clone(), timestamp);
        timestamp
    }

    fn seal_authenticator(
        &mut self,
        verifier: &Principal,
        session_key: &SecretKey,
        now: Tick,
    ) -> SealedBlob {
        let timestamp = self.next_stamp(verifier, now);
        let auth = Authenticator {
            client: self.user.clone(),
            client_addr: self.addr,
            timestamp,
        };
        crypto::seal(&encode(&auth), session_key, &random_nonce(&mut self.rng))
    }

    fn tgs_exchange(
        &mut self,
        net: &mut SimNet,
        realm: &str,
        credential: &CachedTicket,
        service: &Principal,
        now: Tick,
    ) -> Result<CachedTicket, ClientError> {
        let tgs = Principal::tgs(realm).map_err(|e| ClientError::InvalidInput(e.to_string()))?;
        let req = TgsRequest {
            user: self.user.clone(),
            service: service.clone(),
            tgt: credential.ticket.clone(),
            authenticator: self.seal_authenticator(&tgs, &credential.session_key, now),
        };
        let bytes = net.send_tgs(self.addr, realm, &encode(&req), now)?;
        let reply: TgsReply =
            decode(&bytes).map_err(|_| ClientError::UnexpectedReply("TGS reply"))?;
        let plain = crypto::open(&reply.sealed_for_client, &credential.session_key)
            .map_err(|_| ClientError::UnexpectedReply("TGS reply did not open"))?;
        let part: ReplyPart =
            decode(&plain).map_err(|_| ClientError::UnexpectedReply("TGS reply contents"))?;
        Ok(CachedTicket::from_part(part))
    }

    /// Returns a usable ticket for `service`, fetching one only when the
    /// cache has nothing valid.
    ///
    /// A service in another realm takes two TGS exchanges: the home TGS
    /// issues a cross-realm TGT, which the remote TGS trades for the
    /// service ticket. The cross-realm TGT is cached like any other ticket.
    pub fn obtain_service_ticket(
        &mut self,
        net: &mut SimNet,
        service: &Principal,
        now: Tick,
    ) -> Result<CachedTicket, ClientError> {
        let local = self.local_time(now);
        if let Some(hit) = self
            .service_tickets
            .get(service)
            .filter(|t| t.is_valid_at(local))
        {
            return Ok(hit.clone());
        }
        let tgt = self.tgt.clone().ok_or(ClientError::NoTgt)?;
        if !tgt.is_valid_at(local) {
            return Err(ClientError::ExpiredTgt);
        }

        let home = self.user.realm().to_string();
        let ticket = if service.realm() == home {
            self.tgs_exchange(net, &home, &tgt, service, now)?
        } else {
            let remote_tgs = Principal::tgs(service.realm())
                .map_err(|e| ClientError::InvalidInput(e.to_string()))?;
            let cross = match self
                .service_tickets
                .get(&remote_tgs)
                .filter(|t| t.is_valid_at(local))
            {
                Some(c) => c.clone(),
                None => {
                    let c = self.tgs_exchange(net, &home, &tgt, service, now)?;
                    if c.service != remote_tgs {
                        return Err(ClientError::UnexpectedReply(
                            "home TGS did not issue a cross-realm TGT",
                        ));
                    }
                    self.service_tickets.insert(remote_tgs, c.clone());
                    c
                }
            };
            self.tgs_exchange(net, service.realm(), &cross, service, now)?
        };
        if &ticket.service != service {
            return Err(ClientError::UnexpectedReply(
                "ticket issued for a different service",
            ));
        }
        self.service_tickets.insert(service.clone(), ticket.clone());
        Ok(ticket)
    }

    /// Builds an AP request with a fresh authenticator, fetching tickets
    /// as needed.
    pub fn ap_request(
        &mut self,
        net: &mut SimNet,
        service: &Principal,
        query: SensorQuery,
        now: Tick,
    ) -> Result<ApRequest, ClientError> {
        let ticket = self.obtain_service_ticket(net, service, now)?;
        Ok(ApRequest {
            user: self.user.clone(),
            service_ticket: ticket.ticket,
            authenticator: self.seal_authenticator(service, &ticket.session_key, now),
            query,
        })
    }

    pub fn access_base_station(
        &mut self,
        net: &mut SimNet,
        service: &Principal,
        query: SensorQuery,
        now: Tick,
    ) -> Result<SensorResponse, ClientError> {
        let req = self.ap_request(net, service, query, now)?;
        let bytes = net.send_station(self.addr, service, &encode(&req), now)?;
        decode(&bytes).map_err(|_| ClientError::UnexpectedReply("sensor response"))
    }

    #[cfg(test)]
    pub(crate) fn user_key(&self) -> &SecretKey {
        &self.user_key
    }
}
