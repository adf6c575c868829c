use serde::{Deserialize, Serialize};

use super::VelocityField;
use crate::error::{Error, Result};
use crate::linalg::{norm2, sub};
use crate::measures::{iota_project, DiscreteMeasure, LagrangianVector, Point};

/// Radial convex building blocks for potentials and interactions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "coef", rename_all = "lowercase")]
pub enum Kernel {
    Zero,
    /// `½ a |z|²`; `a` may be negative (semiconvex).
    Quadratic(f64),
    /// `a |z|`, `a ≥ 0`.
    Abs(f64),
    /// `¼ a |z|⁴`, `a ≥ 0`.
    Quartic(f64),
}

impl Kernel {
    pub fn validate(&self) -> Result<()> {
        let (name, a, signed) = match *self {
            Kernel::Zero => return Ok(()),
            Kernel::Quadratic(a) => ("quadratic", a, true),
            Kernel::Abs(a) => ("abs", a, false),
            Kernel::Quartic(a) => ("quartic", a, false),
        };
        if !a.is_finite() || (!signed && a < 0.0) {
            return Err(Error::Domain(format!(
                "{name} kernel coefficient must be {}, got {a}",
                if signed { "finite" } else { "nonnegative" }
            )));
        }
        Ok(())
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        match *self {
            Kernel::Zero => 0.0,
            Kernel::Quadratic(a) => 0.5 * a * norm2(z),
            Kernel::Abs(a) => a * norm2(z).sqrt(),
            Kernel::Quartic(a) => 0.25 * a * norm2(z).powi(2),
        }
    }

    /// Minimal-norm element of the subdifferential (the gradient where smooth).
    pub fn selection(&self, z: &[f64]) -> Vec<f64> {
        let k = match *self {
            Kernel::Zero => 0.0,
            Kernel::Quadratic(a) => a,
            Kernel::Abs(a) => {
                let r = norm2(z).sqrt();
                if r == 0.0 {
                    0.0
                } else {
                    a / r
                }
            }
            Kernel::Quartic(a) => a * norm2(z),
        };
        z.iter().map(|v| k * v).collect()
    }

    /// Whether the kernel is `C²` (so Newton methods apply without smoothing).
    pub fn is_smooth(&self) -> bool {
        !matches!(self, Kernel::Abs(a) if *a != 0.0)
    }

    /// Semiconvexity defect: the kernel is `(−defect)`-convex.
    pub(crate) fn concavity(&self) -> f64 {
        match *self {
            Kernel::Quadratic(a) => (-a).max(0.0),
            _ => 0.0,
        }
    }

    /// Lipschitz constant of the selection, when globally finite.
    pub(crate) fn selection_lip(&self) -> Option<f64> {
        match *self {
            Kernel::Zero => Some(0.0),
            Kernel::Quadratic(a) => Some(a.abs()),
            Kernel::Abs(0.0) => Some(0.0),
            _ => None,
        }
    }

    /// Gradient of the kernel with `|z|` replaced by `sqrt(|z|² + ε²) − ε`
    /// for the abs part; identical to [`Kernel::selection`] otherwise.
    pub(crate) fn smoothed_grad(&self, z: &[f64], eps: f64) -> Vec<f64> {
        match *self {
            Kernel::Abs(a) => {
                let r = (norm2(z) + eps * eps).sqrt();
                z.iter().map(|v| a * v / r).collect()
            }
            _ => self.selection(z),
        }
    }

    pub(crate) fn smoothed_value(&self, z: &[f64], eps: f64) -> f64 {
        match *self {
            Kernel::Abs(a) => a * ((norm2(z) + eps * eps).sqrt() - eps),
            _ => self.value(z),
        }
    }

    /// Hessian of the (smoothed) kernel, row-major `d × d`.
    pub(crate) fn smoothed_hessian(&self, z: &[f64], eps: f64) -> Vec<f64> {
        let d = z.len();
        let mut h = vec![0.0; d * d];
        match *self {
            Kernel::Zero => {}
            Kernel::Quadratic(a) => (0..d).for_each(|i| h[i * d + i] = a),
            Kernel::Quartic(a) => {
                let r2 = norm2(z);
                for i in 0..d {
                    for j in 0..d {
                        h[i * d + j] = a * (2.0 * z[i] * z[j] + if i == j { r2 } else { 0.0 });
                    }
                }
            }
            Kernel::Abs(a) => {
                let r = (norm2(z) + eps * eps).sqrt();
                let r3 = r * r * r;
                for i in 0..d {
                    for j in 0..d {
                        h[i * d + j] = a * ((if i == j { 1.0 / r } else { 0.0 }) - z[i] * z[j] / r3);
                    }
                }
            }
        }
        h
    }
}

/// Potential plus interaction energy
/// `φ(μ) = ∫P dμ + ½ ∫∫ W(x − y) dμ(x) dμ(y)`.
///
/// The associated velocity field is the negative minimal subgradient
/// `−u_P(x) − (u_W ∗ μ)(x)`, with `u_W(0) = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Functional {
    pub potential: Kernel,
    pub interaction: Kernel,
}

/// Energy and per-atom velocity of a functional on a measure.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueAndField {
    pub value: f64,
    pub field: Vec<Point>,
}

impl Functional {
    pub fn new(potential: Kernel, interaction: Kernel) -> Result<Self> {
        potential.validate()?;
        interaction.validate()?;
        Ok(Self {
            potential,
            interaction,
        })
    }

    pub fn potential(p: Kernel) -> Result<Self> {
        Self::new(p, Kernel::Zero)
    }

    pub fn interaction(w: Kernel) -> Result<Self> {
        Self::new(Kernel::Zero, w)
    }

    /// `λ` such that the subgradient field is totally `λ`-dissipative.
    pub fn lambda(&self) -> f64 {
        self.potential.concavity() + self.interaction.concavity()
    }

    /// Lipschitz constant of the particle operator, if the kernels have one.
    pub fn lip(&self) -> Option<f64> {
        Some(self.potential.selection_lip()? + self.interaction.selection_lip()?)
    }

    /// Whether both kernels are `C²`.
    pub fn is_smooth(&self) -> bool {
        self.potential.is_smooth() && self.interaction.is_smooth()
    }

    pub fn value(&self, mu: &DiscreteMeasure) -> f64 {
        let n = mu.denominator() as f64;
        let atoms = mu.atoms();
        let mut pot = 0.0;
        let mut inter = 0.0;
        for a in atoms {
            let wa = a.mult as f64 / n;
            pot += wa * self.potential.value(&a.x);
            if self.interaction != Kernel::Zero {
                for b in atoms {
                    inter += wa * (b.mult as f64 / n) * self.interaction.value(&sub(&a.x, &b.x));
                }
            }
        }
        pot + 0.5 * inter
    }

    /// `ψ(X) = φ(ι X)`; exactly invariant under particle relabelling.
    pub fn lifted_value(&self, x: &LagrangianVector) -> f64 {
        self.value(&iota_project(x, 0.0))
    }

    /// `−u_P(x) − Σ_j (mult_j/N) u_W(x − x_j)`.
    pub fn velocity(&self, x: &[f64], mu: &DiscreteMeasure) -> Vec<f64> {
        let n = mu.denominator() as f64;
        let mut v: Vec<f64> = self.potential.selection(x).iter().map(|u| -u).collect();
        if self.interaction != Kernel::Zero {
            for b in mu.atoms() {
                let w = b.mult as f64 / n;
                let u = self.interaction.selection(&sub(x, &b.x));
                for (vi, ui) in v.iter_mut().zip(u) {
                    *vi -= w * ui;
                }
            }
        }
        v
    }

    /// The subgradient field as a [`VelocityField`].
    pub fn velocity_field(&self) -> VelocityField {
        let phi = *self;
        VelocityField::custom("pw", self.lambda(), self.lip(), move |x, mu| {
            if x.len() != mu.dim() {
                return Err(Error::DimensionMismatch {
                    expected: mu.dim(),
                    found: x.len(),
                });
            }
            Ok(phi.velocity(x, mu))
        })
    }

    pub fn value_and_field(&self, mu: &DiscreteMeasure) -> ValueAndField {
        ValueAndField {
            value: self.value(mu),
            field: mu
                .atoms()
                .iter()
                .map(|a| Point::from_vec_unchecked(self.velocity(&a.x, mu)))
                .collect(),
        }
    }
}

/// Energy and per-atom velocity of `φ` on `μ`.
pub fn functional_value_and_field(phi: &Functional, mu: &DiscreteMeasure) -> ValueAndField {
    phi.value_and_field(mu)
}
