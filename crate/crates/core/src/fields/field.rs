use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::norm2;
use crate::measures::{DiscreteMeasure, Point};

type EvalFn = dyn Fn(&[f64], &DiscreteMeasure) -> Result<Vec<f64>> + Send + Sync;

/// A deterministic probability vector field `(x, μ) ↦ f(x, μ)`.
///
/// Besides the evaluation rule a field carries two declared constants used by
/// the solvers: the dissipativity parameter `λ` and, when known, a Lipschitz
/// constant `L` of the induced particle operator `X ↦ (f(x_n, ι X))_n`.
#[derive(Clone)]
pub struct VelocityField {
    eval: Arc<EvalFn>,
    lambda: f64,
    lip: Option<f64>,
    name: String,
}

impl fmt::Debug for VelocityField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VelocityField")
            .field("name", &self.name)
            .field("lambda", &self.lambda)
            .field("lip", &self.lip)
            .finish()
    }
}

/// Per-atom velocities of a field on a measure.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldEvaluation {
    pub velocities: Vec<Point>,
    /// `‖f[μ]‖_{L²(μ)} = sqrt(Σ (mult_i/N)|v_i|²)`.
    pub norm: f64,
}

impl VelocityField {
    /// A field from an arbitrary rule. `lambda` and `lip` are trusted as given.
    pub fn custom<F>(name: impl Into<String>, lambda: f64, lip: Option<f64>, eval: F) -> Self
    where
        F: Fn(&[f64], &DiscreteMeasure) -> Result<Vec<f64>> + Send + Sync + 'static,
    {
        Self {
            eval: Arc::new(eval),
            lambda,
            lip,
            name: name.into(),
        }
    }

    /// `f(x) = A x + b`. `λ` is the top eigenvalue of `(A + Aᵀ)/2` and `L = ‖A‖₂`.
    pub fn linear(a: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self> {
        let d = b.len();
        if d == 0 || a.len() != d || a.iter().any(|r| r.len() != d) {
            return Err(Error::Domain(format!("linear field needs a {d}x{d} matrix")));
        }
        if a.iter().flatten().chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let m = DMatrix::from_fn(d, d, |i, j| a[i][j]);
        let sym = (&m + m.transpose()) * 0.5;
        let lambda = sym.symmetric_eigen().eigenvalues.max();
        let lip = m.singular_values().max();
        Ok(Self::custom("linear", lambda, Some(lip), move |x, _| {
            check_dim(d, x.len())?;
            Ok((0..d)
                .map(|i| a[i].iter().zip(x).map(|(aij, xj)| aij * xj).sum::<f64>() + b[i])
                .collect())
        }))
    }

    /// `f(x) = c·x` in any dimension.
    pub fn scalar_linear(c: f64) -> Self {
        Self::custom("scalar_linear", c, Some(c.abs()), move |x, _| {
            Ok(x.iter().map(|v| c * v).collect())
        })
    }

    /// `f(x, μ) = a(mean(μ) − x) + v0`, totally dissipative for `a ≥ 0`.
    /// An empty `v0` means no drift, in any dimension.
    pub fn barycentric(a: f64, v0: Vec<f64>) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::OutOfRange {
                name: "a",
                value: a,
                expected: "a > 0",
            });
        }
        Ok(Self::custom("barycentric", 0.0, Some(a), move |x, mu| {
            if !v0.is_empty() {
                check_dim(v0.len(), x.len())?;
            }
            let m = mu.mean();
            Ok((0..x.len())
                .map(|i| a * (m[i] - x[i]) + v0.get(i).copied().unwrap_or(0.0))
                .collect())
        }))
    }

    /// `f ≡ v0`.
    pub fn constant(v0: Vec<f64>) -> Self {
        let d = v0.len();
        Self::custom("constant", 0.0, Some(0.0), move |x, _| {
            check_dim(d, x.len())?;
            Ok(v0.clone())
        })
    }

    /// `f ≡ 0` in any dimension.
    pub fn zero() -> Self {
        Self::custom("zero", 0.0, Some(0.0), |x, _| Ok(vec![0.0; x.len()]))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn lip(&self) -> Option<f64> {
        self.lip
    }

    /// Same rule with a different declared `λ`.
    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_lip(mut self, lip: Option<f64>) -> Self {
        self.lip = lip;
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Velocity at `x` under `μ`. Output is checked for dimension and finiteness.
    pub fn eval(&self, x: &[f64], mu: &DiscreteMeasure) -> Result<Vec<f64>> {
        let v = (self.eval)(x, mu)?;
        check_dim(x.len(), v.len())?;
        if v.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain(format!("{} returned a non-finite velocity", self.name)));
        }
        Ok(v)
    }

    /// Velocities at every atom of `μ`, in atom order.
    pub fn eval_atoms(&self, mu: &DiscreteMeasure) -> Result<Vec<Vec<f64>>> {
        mu.atoms().iter().map(|a| self.eval(&a.x, mu)).collect()
    }

    /// `f − λ·x`, with declared constants shifted accordingly.
    pub fn lambda_transform(&self, lambda: f64) -> Self {
        if lambda == 0.0 {
            return self.clone();
        }
        let inner = self.clone();
        Self {
            lambda: self.lambda - lambda,
            lip: self.lip.map(|l| l + lambda.abs()),
            name: format!("{}-lambda({lambda})", self.name),
            eval: Arc::new(move |x, mu| {
                let v = inner.eval(x, mu)?;
                Ok(v.iter().zip(x).map(|(vi, xi)| vi - lambda * xi).collect())
            }),
        }
    }
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Per-atom velocities and the `L²(μ)` norm of the field.
pub fn eval_on_measure(f: &VelocityField, mu: &DiscreteMeasure) -> Result<FieldEvaluation> {
    let vs = f.eval_atoms(mu)?;
    let n = mu.denominator() as f64;
    let sq: f64 = vs
        .iter()
        .zip(mu.atoms())
        .map(|(v, a)| a.mult as f64 / n * norm2(v))
        .sum();
    Ok(FieldEvaluation {
        velocities: vs.into_iter().map(Point::from_vec_unchecked).collect(),
        norm: sq.sqrt(),
    })
}

/// Convex combination `Σ_θ w_θ f_θ` of velocity fields.
#[derive(Clone, Debug)]
pub struct SuperpositionField {
    components: Vec<(f64, VelocityField)>,
}

impl SuperpositionField {
    /// Weights must be positive; they are normalized to sum to one.
    pub fn new(components: Vec<(f64, VelocityField)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Domain("superposition needs at least one component".into()));
        }
        if components.iter().any(|(w, _)| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::Domain("superposition weights must be positive".into()));
        }
        let total: f64 = components.iter().map(|(w, _)| w).sum();
        Ok(Self {
            components: components.into_iter().map(|(w, f)| (w / total, f)).collect(),
        })
    }

    pub fn components(&self) -> &[(f64, VelocityField)] {
        &self.components
    }
}

/// The barycentric projection `g(x, μ) = Σ_θ w_θ f_θ(x, μ)`.
///
/// Declared constants are the weighted sums of the component constants; the
/// Lipschitz constant is dropped if any component lacks one.
pub fn barycentric_projection(field: &SuperpositionField) -> VelocityField {
    let comps = field.components.clone();
    let lambda = comps.iter().map(|(w, f)| w * f.lambda()).sum();
    let lip = comps
        .iter()
        .map(|(w, f)| f.lip().map(|l| w * l))
        .sum::<Option<f64>>();
    VelocityField::custom("superposition", lambda, lip, move |x, mu| {
        let mut g = vec![0.0; x.len()];
        for (w, f) in &comps {
            for (gi, vi) in g.iter_mut().zip(f.eval(x, mu)?) {
                *gi += w * vi;
            }
        }
        Ok(g)
    })
}
