//! Continuous heavy-hitter tracking.
//!
//! [`l2`] holds the per-site round/phase/interval automaton and the
//! coordinator that sums its reports; [`lp`] runs one ℓ2 tracker per
//! power-of-two guess of `ℓp'` on shift-sparsified local streams; [`sum`]
//! keeps the coordinator's running estimate of `F_p'`.

pub mod l2;
pub mod lp;
pub mod sum;

pub use l2::{internal_eps, HhCoordinator, ItemTracker, L2HhTracking, L2Instance, SiteTracker, ThresholdSource, TrackMsg};
pub use lp::{tracking_reduced_eps, LpHhTracking};
pub use sum::{LpPrimeTracker, SumTracker};
