//! Probability vector fields, energy functionals and dissipativity checks.

mod dissipativity;
mod field;
mod functional;
mod spec;

pub use dissipativity::{
    coupling_gap, metric_dissipativity_gap, total_dissipativity_check, CheckMode,
    DissipativityReport, DEFAULT_SAMPLES, EXHAUSTIVE_MAX_N, GAP_TOLERANCE,
};
pub use field::{barycentric_projection, eval_on_measure, FieldEvaluation, SuperpositionField, VelocityField};
pub use functional::{functional_value_and_field, Functional, Kernel, ValueAndField};
pub use spec::{FieldKind, FieldSpec};
