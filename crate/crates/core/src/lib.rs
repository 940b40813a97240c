//! Coalescing stochastic flows on the line at lattice resolution, their dual
//! backward flows, and the oracles used to verify them.

pub mod bounds;
pub mod drift;
pub mod dual;
pub mod error;
pub mod exec;
pub mod lattice;
pub mod motion;
pub mod rng;
pub mod stats;
pub mod step_fn;
pub mod web;

pub use drift::DriftSpec;
pub use error::{CoflowError, Result};
pub use exec::Executor;
pub use lattice::{simulate_flow, simulate_flow_replica, FlowRealization, LatticeSpec, MeetingRule, Seeding};
pub use step_fn::{compose, ExtendedReal, MonotoneStepFn};
