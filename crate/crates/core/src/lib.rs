//! Kerberos-style authentication for wireless sensor network base stations.
//!
//! The crate contains the protocol itself (key derivation, sealing, the
//! KDC, the client agent and the base-station verifier), a deterministic
//! fixed-topology sensor network, a base-station energy model with the
//! experiment generators built on top of it, and an adversary harness.
//!
//! Everything is driven by integer ticks and seeded generators, so a
//! scenario plus a seed fully determines every byte a run produces.

pub mod base_station;
pub mod client;
pub mod crypto;
pub mod energy;
pub mod error;
pub mod kdc;
pub mod net;
pub mod protocol;
pub mod replay;
pub mod rng;
pub mod scenario;
pub mod sensor_net;
pub mod threat;
pub mod world;

mod verify;

pub use error::{ErrorKind, Rejection};
pub use protocol::{NetAddress, Principal, Tick};
