//! The Lagrangian layer: particle operators on `R^{N×d}` with the
//! `(1/N)`-weighted inner product, their resolvents, Yosida approximations
//! and the semigroups they generate.
//!
//! The weight `1/N` is used everywhere, so `|X| = ‖id‖_{L²(ι X)}` and
//! operator norms coincide with the `L²(μ)` norms of the Eulerian side.

mod prox;
mod semigroup;
mod solve;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{Functional, VelocityField};
use crate::measures::{iota_project, locate, LagrangianVector};

pub use semigroup::{
    explicit_trajectory, exponential_semigroup, implicit_trajectory, minimal_selection_estimate,
    operator_dissipativity_check, step_count, yosida, MinimalSelection, OperatorCheck, Trajectory,
};
pub use solve::{resolvent, resolvent_residual};

/// `(B X)_n = f(x_n, ι X)` for a velocity field `f`.
#[derive(Clone, Debug)]
pub struct LagrangianOperator {
    field: VelocityField,
    functional: Option<Functional>,
    lambda: f64,
    lip: Option<f64>,
}

impl LagrangianOperator {
    /// Takes `λ` and the Lipschitz constant from the field's declarations.
    pub fn from_field(field: VelocityField) -> Self {
        Self {
            lambda: field.lambda(),
            lip: field.lip(),
            field,
            functional: None,
        }
    }

    /// `B = −∂ψ` with `ψ(X) = φ(ι X)`; enables the proximal solver.
    pub fn from_functional(phi: Functional) -> Self {
        let mut op = Self::from_field(phi.velocity_field());
        op.functional = Some(phi);
        op
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_lip(mut self, lip: Option<f64>) -> Self {
        self.lip = lip;
        self
    }

    pub fn field(&self) -> &VelocityField {
        &self.field
    }

    pub fn functional(&self) -> Option<&Functional> {
        self.functional.as_ref()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn lip(&self) -> Option<f64> {
        self.lip
    }

    /// Evaluates the field once per atom of `ι X`, so particles sharing a
    /// position always get the same velocity.
    pub fn apply(&self, x: &LagrangianVector) -> Result<LagrangianVector> {
        let mu = iota_project(x, 0.0);
        let vel = self.field.eval_atoms(&mu)?;
        let mut out = Vec::with_capacity(x.as_flat().len());
        for p in x.particles() {
            out.extend_from_slice(&vel[locate(&mu, p)]);
        }
        Ok(LagrangianVector::from_flat_unchecked(x.dim(), out))
    }

    /// Rejects `τ` outside `(0, 1/λ⁺)`.
    pub fn check_step(&self, tau: f64) -> Result<()> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::OutOfRange {
                name: "tau",
                value: tau,
                expected: "tau > 0",
            });
        }
        if self.lambda > 0.0 && tau * self.lambda >= 1.0 {
            return Err(Error::StepTooLarge {
                tau,
                lambda: self.lambda,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    #[default]
    Auto,
    FixedPoint,
    Prox,
    Newton,
}

/// Resolvent solver settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Bound on `|X − τBX − Y|` in the weighted norm.
    pub tol: f64,
    pub max_iter: usize,
    pub solver: SolverKind,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100_000,
            solver: SolverKind::Auto,
        }
    }
}

impl SolverConfig {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_solver(mut self, solver: SolverKind) -> Self {
        self.solver = solver;
        self
    }
}
