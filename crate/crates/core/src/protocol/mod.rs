//! Principals, tickets, authenticators and the protocol messages.
//!
//! All sealed payloads and everything that crosses the simulated network use
//! the canonical encoding in [`codec`].

mod codec;

use std::fmt;

use thiserror::Error;

use crate::crypto::{SealedBlob, SecretKey};
use crate::error::ErrorKind;

pub use codec::{decode, encode, peek_tag, DecodeError, Message, Reader, WireField};

/// Simulated time. There is no wall clock anywhere in the crate.
pub type Tick = u64;

/// Name of the ticket-granting service principal in every realm.
pub const TGS_NAME: &str = "krbtgt";

pub mod tag {
    pub const TICKET: u8 = 0x01;
    pub const AUTHENTICATOR: u8 = 0x02;
    pub const AS_REQUEST: u8 = 0x10;
    pub const AS_REPLY: u8 = 0x11;
    pub const TGS_REQUEST: u8 = 0x12;
    pub const TGS_REPLY: u8 = 0x13;
    pub const AP_REQUEST: u8 = 0x14;
    pub const SENSOR_RESPONSE: u8 = 0x15;
    pub const RAW_QUERY: u8 = 0x16;
    pub const REPLY_PART: u8 = 0x20;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid principal: {0}")]
pub struct InvalidPrincipal(pub &'static str);

impl InvalidPrincipal {
    pub fn kind(&self) -> ErrorKind {
        ErrorKind::InvalidInput
    }
}

/// A named identity within a realm.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Principal {
    name: String,
    realm: String,
}

fn check_component(part: &str, what: &'static str) -> Result<(), InvalidPrincipal> {
    if part.is_empty() {
        return Err(InvalidPrincipal(what));
    }
    if part.contains('/') {
        return Err(InvalidPrincipal("'/' is a reserved separator"));
    }
    Ok(())
}

impl Principal {
    pub fn new(
        name: impl Into<String>,
        realm: impl Into<String>,
    ) -> Result<Self, InvalidPrincipal> {
        let name = name.into();
        let realm = realm.into();
        check_component(&name, "empty name")?;
        check_component(&realm, "empty realm")?;
        Ok(Principal { name, realm })
    }

    /// The ticket-granting service of `realm`.
    pub fn tgs(realm: &str) -> Result<Self, InvalidPrincipal> {
        Principal::new(TGS_NAME, realm)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn realm(&self) -> &str {
        &self.realm
    }

    pub fn is_tgs(&self) -> bool {
        self.name == TGS_NAME
    }
}

impl fmt::Display for Principal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.name, self.realm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NetAddress(pub u32);

impl fmt::Display for NetAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "addr:{}", self.0)
    }
}

/// A credential sealed under the target service's key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ticket {
    pub client: Principal,
    pub client_addr: NetAddress,
    pub service: Principal,
    pub session_key: SecretKey,
    pub issued_at: Tick,
    pub lifetime: Tick,
}

impl Ticket {
    pub fn expires_at(&self) -> Tick {
        self.issued_at.saturating_add(self.lifetime)
    }

    /// Valid on the closed interval `[issued_at, issued_at + lifetime]`.
    pub fn is_valid_at(&self, now: Tick) -> bool {
        self.issued_at <= now && now <= self.expires_at()
    }
}

/// Freshness proof sealed under a ticket's session key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Authenticator {
    pub client: Principal,
    pub client_addr: NetAddress,
    pub timestamp: Tick,
}

/// Sealed contents of an AS or TGS reply, readable only by the client.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplyPart {
    pub session_key: SecretKey,
    pub service: Principal,
    pub issued_at: Tick,
    pub lifetime: Tick,
    pub ticket: SealedBlob,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsRequest {
    pub user: Principal,
    pub tgs: Principal,
    pub requested_at: Tick,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsReply {
    pub sealed_for_client: SealedBlob,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TgsRequest {
    pub user: Principal,
    pub service: Principal,
    pub tgt: SealedBlob,
    pub authenticator: SealedBlob,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TgsReply {
    pub sealed_for_client: SealedBlob,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SensorQuery {
    pub query_id: u32,
    pub attribute: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApRequest {
    pub user: Principal,
    pub service_ticket: SealedBlob,
    pub authenticator: SealedBlob,
    pub query: SensorQuery,
}

/// A query sent with no credentials at all (the pre-authentication world).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawQuery {
    pub claimed_user: Principal,
    pub query: SensorQuery,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Reading {
    pub node: u32,
    pub value: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SensorResponse {
    pub query_id: u32,
    pub readings: Vec<Reading>,
    pub aggregate: i64,
}
