//! Finitely supported measures with rational weights, their Lagrangian
//! parametrizations by particle vectors, and couplings between them.

mod coupling;
mod lagrangian;
mod measure;
mod point;

pub use coupling::{common_denominator, interpolate, Coupling};
pub(crate) use coupling::locate;
pub use lagrangian::{expand, iota_project, LagrangianVector};
pub(crate) use lagrangian::expansion_owner;
pub use measure::{measure_stats, Atom, DiscreteMeasure, MeasureStats};
pub use point::Point;

/// Bound on common denominators accepted by transport routines.
pub const MAX_DENOMINATOR: u64 = 1_000_000;

/// Merge tolerance used when projecting particle states during flows.
pub const FLOW_MERGE_EPS: f64 = 1e-9;
