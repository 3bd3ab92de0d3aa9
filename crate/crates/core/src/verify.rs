//! Ticket + authenticator verification common to the TGS and base stations.

use crate::crypto::{self, SealedBlob, SecretKey};
use crate::error::Rejection;
use crate::protocol::{decode, Authenticator, NetAddress, Principal, Tick, Ticket};
use crate::replay::ReplayCache;

pub(crate) struct Expectation<'a> {
    pub service_key: &'a SecretKey,
    pub service: &'a Principal,
    pub claimed_user: &'a Principal,
    pub source: NetAddress,
    pub now: Tick,
    pub max_skew: Tick,
}

/// Checks, in order: ticket seal, ticket target, validity window,
/// authenticator seal, client identity, address binding, skew, replay.
/// The replay cache is only touched once every other check has passed.
pub(crate) fn verify_credentials(
    expect: &Expectation<'_>,
    ticket_blob: &SealedBlob,
    authenticator_blob: &SealedBlob,
    cache: &mut ReplayCache,
) -> Result<Ticket, Rejection> {
    let plain =
        crypto::open(ticket_blob, expect.service_key).map_err(|_| Rejection::IntegrityFailure)?;
    let ticket: Ticket = decode(&plain).map_err(|_| Rejection::Malformed)?;
    if &ticket.service != expect.service {
        return Err(Rejection::WrongService);
    }
    if expect.now < ticket.issued_at {
        return Err(Rejection::NotYetValid);
    }
    if expect.now > ticket.expires_at() {
        return Err(Rejection::ExpiredTicket);
    }

    let plain = crypto::open(authenticator_blob, &ticket.session_key)
        .map_err(|_| Rejection::IntegrityFailure)?;
    let auth: Authenticator = decode(&plain).map_err(|_| Rejection::Malformed)?;
    if auth.client != ticket.client || expect.claimed_user != &ticket.client {
        return Err(Rejection::ClientMismatch);
    }
    if expect.source != ticket.client_addr || auth.client_addr != ticket.client_addr {
        return Err(Rejection::AddressMismatch);
    }
    if auth.timestamp.abs_diff(expect.now) > expect.max_skew {
        return Err(Rejection::StaleAuthenticator);
    }
    cache.check_and_insert(&auth.client, auth.client_addr, auth.timestamp, expect.now)?;
    Ok(ticket)
}
