//! Master–worker substrate for the parallel and asynchronous methods.
//!
//! Workers evaluate scenario proxes; the master owns all algorithm state and
//! is the only writer of the global iterate. Two interchangeable backends:
//! OS threads with channels, and a deterministic discrete-event simulator
//! whose task durations come from a seeded [`SimSchedule`]. Delays are
//! counted in master updates.

mod delay;
mod messages;
mod pool;
mod schedule;

pub use delay::DelayStats;
pub use messages::{Completion, ResultMessage, TaskMessage};
pub use pool::{PoolMode, WorkerContext, WorkerPool};
pub use schedule::{SimClock, SimSchedule, NEVER};
