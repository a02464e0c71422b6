//! Execution engines that deliver messages and meter every bit.
//!
//! [`run_rounds`] drives coordinator-model protocols round by round;
//! [`run_tracking`] replays a stream event by event for tracking protocols.
//! Delivery is instantaneous, ordered and loss-free.

mod rounds;
mod tracking;

pub use rounds::{run_rounds, Records, RoundProtocol, Step};
pub use tracking::{read_stream, run_tracking, write_stream, StreamEvent, TrackingProtocol};
