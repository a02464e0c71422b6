//! Continuous `F_p` estimation.
//!
//! [`threshold`] fires exactly when a distributed counter reaches a target;
//! [`vjp`] tracks one `v_j^p` with randomized phase thresholds built on it;
//! [`weak_cover`] maintains a weak cover of one subsample in rounds;
//! [`fp`] assembles `2 phi` weak covers into the recursive-sketch estimate.

pub mod fp;
pub mod threshold;
pub mod vjp;
pub mod weak_cover;

pub use fp::{FpTracking, FpTrackingConfig};
pub use threshold::ThresholdTracker;
pub use vjp::{min_root_at_least, UnitDraws, VjpTracker};
pub use weak_cover::{RoundEnd, RoundRecord, WeakCoverConfig, WeakCoverTracker};
