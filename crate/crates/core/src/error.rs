use std::fmt;

/// Flat classification of every failure the protocol stack can produce.
///
/// Each module keeps its own error type; `kind()` on those maps onto this
/// enum so transcripts and attack reports can compare outcomes uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ErrorKind {
    InvalidInput,
    IntegrityFailure,
    WrongType,
    MalformedEncoding,
    AlreadyRegistered,
    DuplicateKeyId,
    UnknownPrincipal,
    UnknownService,
    UnknownRealm,
    ExpiredTicket,
    NotYetValid,
    ReplayDetected,
    ReplayCacheFull,
    AddressMismatch,
    ClientMismatch,
    WrongService,
    StaleAuthenticator,
    MissingCredentials,
    WrongPassword,
    NoTgt,
    ExpiredTgt,
    EmptyNetwork,
    Depleted,
    UnknownNode,
}

impl ErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::InvalidInput => "InvalidInput",
            ErrorKind::IntegrityFailure => "IntegrityFailure",
            ErrorKind::WrongType => "WrongType",
            ErrorKind::MalformedEncoding => "MalformedEncoding",
            ErrorKind::AlreadyRegistered => "AlreadyRegistered",
            ErrorKind::DuplicateKeyId => "DuplicateKeyId",
            ErrorKind::UnknownPrincipal => "UnknownPrincipal",
            ErrorKind::UnknownService => "UnknownService",
            ErrorKind::UnknownRealm => "UnknownRealm",
            ErrorKind::ExpiredTicket => "ExpiredTicket",
            ErrorKind::NotYetValid => "NotYetValid",
            ErrorKind::ReplayDetected => "ReplayDetected",
            ErrorKind::ReplayCacheFull => "ReplayCacheFull",
            ErrorKind::AddressMismatch => "AddressMismatch",
            ErrorKind::ClientMismatch => "ClientMismatch",
            ErrorKind::WrongService => "WrongService",
            ErrorKind::StaleAuthenticator => "StaleAuthenticator",
            ErrorKind::MissingCredentials => "MissingCredentials",
            ErrorKind::WrongPassword => "WrongPassword",
            ErrorKind::NoTgt => "NoTgt",
            ErrorKind::ExpiredTgt => "ExpiredTgt",
            ErrorKind::EmptyNetwork => "EmptyNetwork",
            ErrorKind::Depleted => "Depleted",
            ErrorKind::UnknownNode => "UnknownNode",
        }
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Why a ticket + authenticator pair was refused, at either the TGS or a
/// base station.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, thiserror::Error)]
pub enum Rejection {
    #[error("seal did not verify")]
    IntegrityFailure,
    #[error("sealed payload is malformed")]
    Malformed,
    #[error("ticket was issued for a different service")]
    WrongService,
    #[error("ticket not yet valid")]
    NotYetValid,
    #[error("ticket expired")]
    ExpiredTicket,
    #[error("authenticator or request names a different client")]
    ClientMismatch,
    #[error("request address does not match the ticket")]
    AddressMismatch,
    #[error("authenticator timestamp outside the allowed skew")]
    StaleAuthenticator,
    #[error("authenticator already seen")]
    ReplayDetected,
    #[error("replay cache full")]
    ReplayCacheFull,
    #[error("request carries no credentials")]
    MissingCredentials,
}

impl Rejection {
    pub fn kind(self) -> ErrorKind {
        match self {
            Rejection::IntegrityFailure => ErrorKind::IntegrityFailure,
            Rejection::Malformed => ErrorKind::MalformedEncoding,
            Rejection::WrongService => ErrorKind::WrongService,
            Rejection::NotYetValid => ErrorKind::NotYetValid,
            Rejection::ExpiredTicket => ErrorKind::ExpiredTicket,
            Rejection::ClientMismatch => ErrorKind::ClientMismatch,
            Rejection::AddressMismatch => ErrorKind::AddressMismatch,
            Rejection::StaleAuthenticator => ErrorKind::StaleAuthenticator,
            Rejection::ReplayDetected => ErrorKind::ReplayDetected,
            Rejection::ReplayCacheFull => ErrorKind::ReplayCacheFull,
            Rejection::MissingCredentials => ErrorKind::MissingCredentials,
        }
    }
}
