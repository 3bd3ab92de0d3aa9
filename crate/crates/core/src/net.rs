//! In-process message delivery between clients, KDCs and base stations.
//!
//! Everything crosses the simulated network as canonical bytes, and every
//! message is appended to a transcript that an eavesdropper may read.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::base_station::{BaseStation, BaseStationError, StationRequest};
use crate::error::ErrorKind;
use crate::kdc::{Kdc, KdcError};
use crate::protocol::{decode, encode, peek_tag, tag, DecodeError, NetAddress, Principal, Tick};
use crate::rng::SimRng;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DeliveryError {
    #[error("no KDC for realm {0}")]
    UnknownRealm(String),
    #[error("no base station {0}")]
    UnknownStation(Principal),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Kdc(#[from] KdcError),
    #[error(transparent)]
    Station(#[from] BaseStationError),
}

impl DeliveryError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            DeliveryError::UnknownRealm(_) => ErrorKind::UnknownRealm,
            DeliveryError::UnknownStation(_) => ErrorKind::UnknownService,
            DeliveryError::Decode(e) => e.kind(),
            DeliveryError::Kdc(e) => e.kind(),
            DeliveryError::Station(e) => e.kind(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    Host(NetAddress),
    Kdc(String),
    Station(Principal),
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Host(a) => write!(f, "{a}"),
            Endpoint::Kdc(realm) => write!(f, "kdc:{realm}"),
            Endpoint::Station(p) => write!(f, "station:{p}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireMessage {
    pub tick: Tick,
    pub from: Endpoint,
    pub to: Endpoint,
    pub bytes: Vec<u8>,
}

struct KdcNode {
    kdc: Kdc,
    rng: SimRng,
}

/// KDCs and base stations reachable in one simulated world.
pub struct SimNet {
    kdcs: BTreeMap<String, KdcNode>,
    stations: BTreeMap<Principal, BaseStation>,
    transcript: Vec<WireMessage>,
    recording: bool,
}

impl Default for SimNet {
    fn default() -> Self {
        SimNet::new()
    }
}

impl SimNet {
    pub fn new() -> Self {
        SimNet {
            kdcs: BTreeMap::new(),
            stations: BTreeMap::new(),
            transcript: Vec::new(),
            recording: true,
        }
    }

    /// `rng` supplies the KDC's session keys and nonces.
    pub fn add_kdc(&mut self, kdc: Kdc, rng: SimRng) {
        self.kdcs
            .insert(kdc.realm().to_string(), KdcNode { kdc, rng });
    }

    pub fn add_station(&mut self, station: BaseStation) {
        self.stations.insert(station.service().clone(), station);
    }

    pub fn kdc(&self, realm: &str) -> Option<&Kdc> {
        self.kdcs.get(realm).map(|n| &n.kdc)
    }

    pub fn kdc_mut(&mut self, realm: &str) -> Option<&mut Kdc> {
        self.kdcs.get_mut(realm).map(|n| &mut n.kdc)
    }

    pub fn realms(&self) -> impl Iterator<Item = &str> {
        self.kdcs.keys().map(String::as_str)
    }

    pub fn station(&self, service: &Principal) -> Option<&BaseStation> {
        self.stations.get(service)
    }

    pub fn station_mut(&mut self, service: &Principal) -> Option<&mut BaseStation> {
        self.stations.get_mut(service)
    }

    pub fn stations(&self) -> impl Iterator<Item = &BaseStation> {
        self.stations.values()
    }

    pub fn transcript(&self) -> &[WireMessage] {
        &self.transcript
    }

    pub fn clear_transcript(&mut self) {
        self.transcript.clear();
    }

    /// Long experiment runs switch recording off to bound memory.
    pub fn set_recording(&mut self, on: bool) {
        self.recording = on;
    }

    fn record(&mut self, tick: Tick, from: Endpoint, to: Endpoint, bytes: &[u8]) {
        if self.recording {
            self.transcript.push(WireMessage {
                tick,
                from,
                to,
                bytes: bytes.to_vec(),
            });
        }
    }

    pub fn send_as(
        &mut self,
        from: NetAddress,
        realm: &str,
        bytes: &[u8],
        now: Tick,
    ) -> Result<Vec<u8>, DeliveryError> {
        self.record(
            now,
            Endpoint::Host(from),
            Endpoint::Kdc(realm.to_string()),
            bytes,
        );
        let node = self
            .kdcs
            .get_mut(realm)
            .ok_or_else(|| DeliveryError::UnknownRealm(realm.to_string()))?;
        let req = decode(bytes)?;
        let reply = encode(&node.kdc.as_exchange(&req, from, now, &mut node.rng)?);
        self.record(
            now,
            Endpoint::Kdc(realm.to_string()),
            Endpoint::Host(from),
            &reply,
        );
        Ok(reply)
    }

    pub fn send_tgs(
        &mut self,
        from: NetAddress,
        realm: &str,
        bytes: &[u8],
        now: Tick,
    ) -> Result<Vec<u8>, DeliveryError> {
        self.record(
            now,
            Endpoint::Host(from),
            Endpoint::Kdc(realm.to_string()),
            bytes,
        );
        let node = self
            .kdcs
            .get_mut(realm)
            .ok_or_else(|| DeliveryError::UnknownRealm(realm.to_string()))?;
        let req = decode(bytes)?;
        let reply = encode(&node.kdc.tgs_exchange(&req, from, now, &mut node.rng)?);
        self.record(
            now,
            Endpoint::Kdc(realm.to_string()),
            Endpoint::Host(from),
            &reply,
        );
        Ok(reply)
    }

    /// Delivers an AP request or a raw query to a base station.
    pub fn send_station(
        &mut self,
        from: NetAddress,
        service: &Principal,
        bytes: &[u8],
        now: Tick,
    ) -> Result<Vec<u8>, DeliveryError> {
        self.record(
            now,
            Endpoint::Host(from),
            Endpoint::Station(service.clone()),
            bytes,
        );
        let station = self
            .stations
            .get_mut(service)
            .ok_or_else(|| DeliveryError::UnknownStation(service.clone()))?;
        let req = match peek_tag(bytes) {
            Some(tag::RAW_QUERY) => StationRequest::Raw(decode(bytes)?),
            _ => StationRequest::Ap(decode(bytes)?),
        };
        let reply = encode(&station.handle_request(&req, from, now)?);
        self.record(
            now,
            Endpoint::Station(service.clone()),
            Endpoint::Host(from),
            &reply,
        );
        Ok(reply)
    }
}
