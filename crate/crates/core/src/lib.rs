//! Queue-length estimation on a two-lane signalized approach from sparse
//! probe-vehicle reports.
//!
//! - [`model`]: demand, signal timing, geometry, link snapshots.
//! - [`sim`]: Poisson-arrival discrete-event simulator producing ground truth.
//! - [`estimators`]: penetration-ratio and arrival-rate point estimators.
//! - [`bayes`]: prior and probe-conditioned joint queue distributions.
//! - [`control`]: lane-assignment balance laws.
//! - [`harness`]: scenario sweeps, metrics, CSV/SVG reports.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bayes;
pub mod control;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod model;
pub mod sim;

pub use error::{Error, Result};
pub use model::{
    DemandProfile, JointQueueDistribution, Lane, LinkGeometry, LinkState, Movement, ProbeObservation, RedWindow,
    SignalTiming, TurnRatios, VehicleRecord,
};
pub use sim::{AssignmentPolicy, SimConfig, Simulator, Trace, TraceRow};
