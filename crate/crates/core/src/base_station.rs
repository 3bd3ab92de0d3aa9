//! The WSN gateway. With authentication enabled it serves sensor data only
//! for a verified ticket + authenticator; with it disabled it answers
//! anyone, which is the unprotected baseline.

use std::sync::Arc;

use thiserror::Error;

use crate::crypto::SecretKey;
use crate::energy::{tx_cost, ChargeKind, EnergyParams, EnergyState};
use crate::error::{ErrorKind, Rejection};
use crate::protocol::{
    ApRequest, NetAddress, Principal, RawQuery, SensorQuery, SensorResponse, Tick,
};
use crate::replay::{self, ReplayCache};
use crate::sensor_net::{
    many_to_one_round, one_to_many_flood, CollectionRound, FloodResult, Topology,
};
use crate::verify::{verify_credentials, Expectation};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BaseStationError {
    #[error("access denied: {0}")]
    AccessDenied(Rejection),
    #[error("no sensor nodes behind this base station")]
    EmptyNetwork,
    #[error("base station battery depleted")]
    Depleted,
}

impl BaseStationError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            BaseStationError::AccessDenied(r) => r.kind(),
            BaseStationError::EmptyNetwork => ErrorKind::EmptyNetwork,
            BaseStationError::Depleted => ErrorKind::Depleted,
        }
    }
}

#[derive(Debug, Clone)]
pub enum StationRequest {
    Ap(ApRequest),
    Raw(RawQuery),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StationConfig {
    pub auth_enabled: bool,
    pub max_clock_skew: Tick,
    pub reading_packet_size: u64,
    pub query_packet_size: u64,
    pub energy: EnergyParams,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StationStats {
    pub served: u64,
    pub denied: u64,
    /// Query flood + reading collection + response bytes, summed over
    /// served queries.
    pub network_bytes: u64,
}

#[derive(Debug, Clone)]
pub struct BaseStation {
    service: Principal,
    service_key: SecretKey,
    cfg: StationConfig,
    replay: ReplayCache,
    energy: EnergyState,
    topology: Arc<Topology>,
    // The topology is fixed, so one round's routes and bytes hold for all.
    collection: CollectionRound,
    flood: FloodResult,
    stats: StationStats,
}

impl BaseStation {
    pub fn new(
        service: Principal,
        service_key: SecretKey,
        cfg: StationConfig,
        topology: Arc<Topology>,
    ) -> Self {
        let collection = many_to_one_round(&topology, cfg.reading_packet_size);
        let flood = one_to_many_flood(&topology, cfg.query_packet_size);
        BaseStation {
            service,
            service_key,
            replay: ReplayCache::new(cfg.max_clock_skew, replay::DEFAULT_CAPACITY),
            energy: EnergyState::new(cfg.energy.initial_energy),
            cfg,
            topology,
            collection,
            flood,
            stats: StationStats::default(),
        }
    }

    pub fn service(&self) -> &Principal {
        &self.service
    }

    pub fn auth_enabled(&self) -> bool {
        self.cfg.auth_enabled
    }

    pub fn set_auth_enabled(&mut self, enabled: bool) {
        self.cfg.auth_enabled = enabled;
    }

    pub fn energy(&self) -> &EnergyState {
        &self.energy
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn stats(&self) -> StationStats {
        self.stats
    }

    /// Bytes the station transmits when answering one query.
    pub fn response_bytes(&self) -> u64 {
        self.cfg.reading_packet_size * self.collection.delivered.len() as u64
    }

    pub fn handle_request(
        &mut self,
        req: &StationRequest,
        source: NetAddress,
        now: Tick,
    ) -> Result<SensorResponse, BaseStationError> {
        if self.energy.is_depleted() {
            return Err(BaseStationError::Depleted);
        }
        if !self.cfg.auth_enabled {
            let query = match req {
                StationRequest::Ap(ap) => &ap.query,
                StationRequest::Raw(raw) => &raw.query,
            };
            return self.serve_query(query, now);
        }

        // Checking costs CPU whether or not it succeeds.
        if !self
            .energy
            .charge(now, ChargeKind::Verify, self.cfg.energy.verify_cost)
        {
            return Err(BaseStationError::Depleted);
        }
        let verdict = match req {
            StationRequest::Raw(_) => Err(Rejection::MissingCredentials),
            StationRequest::Ap(ap) => {
                let expect = Expectation {
                    service_key: &self.service_key,
                    service: &self.service,
                    claimed_user: &ap.user,
                    source,
                    now,
                    max_skew: self.cfg.max_clock_skew,
                };
                verify_credentials(
                    &expect,
                    &ap.service_ticket,
                    &ap.authenticator,
                    &mut self.replay,
                )
                .map(|_| &ap.query)
            }
        };
        match verdict {
            Ok(query) => self.serve_query(query, now),
            Err(rejection) => {
                self.stats.denied += 1;
                Err(BaseStationError::AccessDenied(rejection))
            }
        }
    }

    /// Floods the query, collects readings many-to-one, and transmits the
    /// aggregated response. Authorization is the caller's business.
    pub fn serve_query(
        &mut self,
        query: &SensorQuery,
        now: Tick,
    ) -> Result<SensorResponse, BaseStationError> {
        if self.topology.is_empty() {
            return Err(BaseStationError::EmptyNetwork);
        }
        let response_bytes = self.response_bytes();
        if !self.energy.charge(
            now,
            ChargeKind::Transmit,
            tx_cost(&self.cfg.energy, response_bytes),
        ) {
            return Err(BaseStationError::Depleted);
        }
        let readings = self.collection.delivered.clone();
        let aggregate = readings
            .iter()
            .fold(0i64, |acc, r| acc.saturating_add(r.value));
        self.stats.served += 1;
        self.stats.network_bytes +=
            self.flood.total_bytes + self.collection.total_bytes + response_bytes;
        Ok(SensorResponse {
            query_id: query.query_id,
            readings,
            aggregate,
        })
    }
}
