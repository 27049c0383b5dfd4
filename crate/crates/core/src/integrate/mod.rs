//! Adaptive propagation of Newton's equations with dense output and events.

mod collar;
pub mod dop853;
mod events;
mod propagate;
mod trajectory;

pub use events::{detect_events, transverse, Event, EventKind, EventSpec};
pub use propagate::{energy_drift_budget, propagate, NBodyOde, PropagateOptions};
pub use trajectory::{ClosestApproach, RunStats, Segment, Termination, Trajectory};
pub use collar::{collar_scan, collar_start, hill_collar_exit_time, CollarExit, CollarOptions, CollarRow};
