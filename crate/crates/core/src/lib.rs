//! Heavy hitters and frequency moments over distributed streams.
//!
//! `k` sites each hold a local frequency vector and talk only to a
//! coordinator. The crate provides the simulated network, static protocols
//! (heavy hitters, covers, `F_p` estimation) and their continuous-tracking
//! counterparts, all charged against a bit-accurate communication ledger.

pub mod cover;
pub mod error;
pub mod fp_tracking;
pub mod freq;
pub mod hh_static;
pub mod hh_tracking;
pub mod ledger;
pub mod netsim;
pub mod recsketch;
pub mod rng;

pub use error::{Error, Result};
pub use freq::{moments, partition_moments, FrequencyVector, ItemId, MomentSummary, PartitionedInput, SiteId};
pub use ledger::CommLedger;
pub use rng::{PublicCoins, SeededRng};
