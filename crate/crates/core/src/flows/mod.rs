//! Measure-valued flows: particle schemes projected back to measures, and the
//! studies run on top of them (EVI residuals, contraction, error tables,
//! JKO steps, mean-field experiments, sticky diagnostics).

mod studies;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{eval_on_measure, Functional, VelocityField};
use crate::linalg::{dist2, dot, lex_cmp, sub, DisjointSets};
use crate::measures::{expand, iota_project, DiscreteMeasure, LagrangianVector, FLOW_MERGE_EPS};
use crate::operators::{resolvent, step_count, LagrangianOperator, SolverConfig};

pub use studies::{
    contraction_check, empirical_sampler, evi_residual, implicit_error_study, jko_objective, jko_step,
    mean_field_study, sticky_diagnostics, ContractionReport, ErrorRow, EviRow, MeanFieldRow, StickyReport,
};

/// What drives a flow.
#[derive(Clone, Debug)]
pub enum Driver {
    Field(VelocityField),
    /// `−∂φ`; implicit steps go through the proximal solver when needed.
    Functional(Functional),
}

impl Driver {
    pub fn operator(&self) -> LagrangianOperator {
        match self {
            Driver::Field(f) => LagrangianOperator::from_field(f.clone()),
            Driver::Functional(phi) => LagrangianOperator::from_functional(*phi),
        }
    }

    pub fn field(&self) -> VelocityField {
        match self {
            Driver::Field(f) => f.clone(),
            Driver::Functional(phi) => phi.velocity_field(),
        }
    }

    pub fn lambda(&self) -> f64 {
        match self {
            Driver::Field(f) => f.lambda(),
            Driver::Functional(phi) => phi.lambda(),
        }
    }
}

impl From<VelocityField> for Driver {
    fn from(f: VelocityField) -> Self {
        Driver::Field(f)
    }
}

impl From<Functional> for Driver {
    fn from(phi: Functional) -> Self {
        Driver::Functional(phi)
    }
}

/// Time discretization. Steps are equalized so the last one lands on `T`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scheme {
    Implicit { tau: f64 },
    Explicit { tau: f64 },
    /// `n` implicit steps of size `T/n`.
    Exponential { n: usize },
}

impl Scheme {
    /// Step count and step size over `[0, T]`.
    pub fn grid(&self, t_final: f64) -> Result<(usize, f64)> {
        if !(t_final >= 0.0 && t_final.is_finite()) {
            return Err(Error::OutOfRange {
                name: "T",
                value: t_final,
                expected: "T >= 0",
            });
        }
        let n = match *self {
            Scheme::Implicit { tau } | Scheme::Explicit { tau } => {
                if !(tau > 0.0 && tau.is_finite()) {
                    return Err(Error::OutOfRange {
                        name: "tau",
                        value: tau,
                        expected: "tau > 0",
                    });
                }
                if t_final == 0.0 {
                    0
                } else {
                    step_count(t_final, tau)
                }
            }
            Scheme::Exponential { n } => {
                if n == 0 {
                    return Err(Error::Domain("exponential scheme needs n >= 1".into()));
                }
                if t_final == 0.0 {
                    0
                } else {
                    n
                }
            }
        };
        Ok((n, if n == 0 { 0.0 } else { t_final / n as f64 }))
    }

    fn implicit(&self) -> bool {
        !matches!(self, Scheme::Explicit { .. })
    }
}

/// Flow settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    /// Approaching particles closer than this are merged after each step,
    /// and the projection merges at the same scale.
    pub merge_eps: f64,
    pub solver: SolverConfig,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            merge_eps: FLOW_MERGE_EPS,
            solver: SolverConfig::default(),
        }
    }
}

impl FlowConfig {
    pub fn with_merge_eps(mut self, eps: f64) -> Self {
        self.merge_eps = eps;
        self
    }

    pub fn with_solver(mut self, solver: SolverConfig) -> Self {
        self.solver = solver;
        self
    }
}

/// Per-time summary of a flow.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub t: f64,
    pub support_cardinality: usize,
    pub diameter: f64,
    pub second_moment: f64,
    /// `‖f[μ_t]‖_{L²(μ_t)}`.
    pub field_norm: f64,
}

/// A computed flow. `measures[k]` is the projection of `lagrangian[k]`.
#[derive(Clone, Debug)]
pub struct FlowResult {
    pub times: Vec<f64>,
    pub measures: Vec<DiscreteMeasure>,
    pub lagrangian: Vec<LagrangianVector>,
    pub diagnostics: Vec<Diagnostics>,
    pub merge_eps: f64,
}

impl FlowResult {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> &DiscreteMeasure {
        self.measures.last().expect("a flow holds its initial state")
    }

    /// Every `stride`-th time, starting from `t = 0`.
    pub fn subsample(&self, stride: usize) -> FlowResult {
        let stride = stride.max(1);
        let keep = |k: &usize| k.is_multiple_of(stride);
        FlowResult {
            times: (0..self.len()).filter(keep).map(|k| self.times[k]).collect(),
            measures: (0..self.len()).filter(keep).map(|k| self.measures[k].clone()).collect(),
            lagrangian: (0..self.len()).filter(keep).map(|k| self.lagrangian[k].clone()).collect(),
            diagnostics: (0..self.len()).filter(keep).map(|k| self.diagnostics[k].clone()).collect(),
            merge_eps: self.merge_eps,
        }
    }

    /// Index of the grid time within `1e-9` (relative) of `t`.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let tol = 1e-9 * t.abs().max(1.0);
        self.times.iter().position(|s| (s - t).abs() <= tol)
    }

    /// Particle trajectories as CSV: `t,particle_index,x_1,…,x_d`.
    pub fn to_csv(&self) -> String {
        let d = self.lagrangian.first().map_or(0, |x| x.dim());
        let mut out = String::from("t,particle_index");
        for i in 1..=d {
            out.push_str(&format!(",x_{i}"));
        }
        out.push('\n');
        for (t, x) in self.times.iter().zip(&self.lagrangian) {
            for (n, p) in x.particles().enumerate() {
                out.push_str(&format!("{t},{n}"));
                for v in p {
                    out.push_str(&format!(",{v}"));
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn diagnostics_json(&self) -> String {
        serde_json::to_string_pretty(&self.diagnostics).expect("diagnostics serialize")
    }
}

/// Runs `scheme` on the canonical lift of `μ₀` up to time `T`.
///
/// ```
/// use wflow::fields::{Functional, Kernel};
/// use wflow::flows::{evolve, FlowConfig, Scheme};
/// use wflow::measures::{DiscreteMeasure, Point};
///
/// let phi = Functional::interaction(Kernel::Quadratic(1.0)).unwrap();
/// let mu0 = DiscreteMeasure::uniform(vec![Point::new(vec![0.0]).unwrap(), Point::new(vec![2.0]).unwrap()]).unwrap();
/// let flow = evolve(&phi.into(), &mu0, Scheme::Implicit { tau: 0.01 }, 1.0, &FlowConfig::default()).unwrap();
/// assert_eq!(flow.times.len(), 101);
/// assert!((flow.last().mean()[0] - 1.0).abs() < 1e-9);
/// ```
pub fn evolve(driver: &Driver, mu0: &DiscreteMeasure, scheme: Scheme, t_final: f64, cfg: &FlowConfig) -> Result<FlowResult> {
    let x0 = expand(mu0, mu0.denominator())?;
    evolve_lagrangian(driver, &x0, scheme, t_final, cfg)
}

/// [`evolve`] from an explicit particle vector.
pub fn evolve_lagrangian(
    driver: &Driver,
    x0: &LagrangianVector,
    scheme: Scheme,
    t_final: f64,
    cfg: &FlowConfig,
) -> Result<FlowResult> {
    if x0.is_empty() {
        return Err(Error::InvalidMeasure("flow needs at least one particle".into()));
    }
    let (n, h) = scheme.grid(t_final)?;
    let op = driver.operator();
    if scheme.implicit() && n > 0 {
        op.check_step(h)?;
    }
    let field = driver.field();
    let mut flow = FlowResult {
        times: Vec::with_capacity(n + 1),
        measures: Vec::with_capacity(n + 1),
        lagrangian: Vec::with_capacity(n + 1),
        diagnostics: Vec::with_capacity(n + 1),
        merge_eps: cfg.merge_eps,
    };
    push_state(&mut flow, &field, 0.0, x0.clone())?;
    for k in 1..=n {
        let cur = flow.lagrangian.last().expect("nonempty");
        let mut next = if scheme.implicit() {
            resolvent(&op, h, cur, &cfg.solver)?
        } else {
            cur.add_scaled(h, &op.apply(cur)?)
        };
        if cfg.merge_eps > 0.0 {
            snap_approaching(cur, &mut next, cfg.merge_eps);
        }
        let t = if k == n { t_final } else { k as f64 * h };
        push_state(&mut flow, &field, t, next)?;
    }
    Ok(flow)
}

fn push_state(flow: &mut FlowResult, field: &VelocityField, t: f64, x: LagrangianVector) -> Result<()> {
    let mu = iota_project(&x, flow.merge_eps);
    flow.diagnostics.push(Diagnostics {
        t,
        support_cardinality: mu.support_len(),
        diameter: mu.diameter(),
        second_moment: mu.second_moment(),
        field_norm: eval_on_measure(field, &mu)?.norm,
    });
    flow.times.push(t);
    flow.measures.push(mu);
    flow.lagrangian.push(x);
    Ok(())
}

/// Merges particles of `next` that ended within `eps` of each other while
/// approaching. Each cluster moves to its mean, summed in lexicographic order
/// so the result does not depend on labels.
fn snap_approaching(prev: &LagrangianVector, next: &mut LagrangianVector, eps: f64) {
    let n = next.len();
    let eps2 = eps * eps;
    let mut sets = DisjointSets::new(n);
    let mut any = false;
    for a in 0..n {
        for b in a + 1..n {
            let (xa, xb) = (next.particle(a), next.particle(b));
            if xa == xb || dist2(xa, xb) > eps2 {
                continue;
            }
            // relative displacement over the step against the final separation
            let rel = sub(&sub(xa, prev.particle(a)), &sub(xb, prev.particle(b)));
            if dot(&rel, &sub(xa, xb)) <= 0.0 {
                sets.union(a, b);
                any = true;
            }
        }
    }
    if !any {
        return;
    }
    let d = next.dim();
    for group in sets.groups().into_iter().filter(|g| g.len() > 1) {
        let mut pts: Vec<Vec<f64>> = group.iter().map(|&i| next.particle(i).to_vec()).collect();
        pts.sort_by(|a, b| lex_cmp(a, b));
        let mut mean = vec![0.0; d];
        for p in &pts {
            mean.iter_mut().zip(p).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= pts.len() as f64);
        for &i in &group {
            next.particle_mut(i).copy_from_slice(&mean);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Kernel;
    use crate::pt;
    use crate::transport::w2;

    fn line(xs: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::uniform(xs.iter().map(|&x| pt![x]).collect()).unwrap()
    }

    #[test]
    fn quadratic_interaction_contracts_to_barycenter() {
        let phi = Functional::interaction(Kernel::Quadratic(1.0)).unwrap();
        let flow = evolve(&phi.into(), &line(&[0.0, 2.0]), Scheme::Implicit { tau: 1e-3 }, 1.0, &FlowConfig::default()).unwrap();
        let mu = flow.last();
        let gap = mu.atoms()[1].x[0] - mu.atoms()[0].x[0];
        // implicit factor (1 + τ)^{-n} against e^{-1}
        assert!((gap - 2.0 * 1.001f64.powi(-1000)).abs() < 1e-8);
        assert!((gap - 2.0 * (-1f64).exp()).abs() < 1e-3);
        let limit = DiscreteMeasure::dirac(pt![1.0]);
        assert!((w2(mu, &limit).unwrap() - gap / 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_field_is_constant() {
        let mu0 = line(&[-1.0, 0.5, 3.0]);
        for scheme in [Scheme::Implicit { tau: 0.1 }, Scheme::Explicit { tau: 0.1 }, Scheme::Exponential { n: 3 }] {
            let flow = evolve(&VelocityField::zero().into(), &mu0, scheme, 1.0, &FlowConfig::default()).unwrap();
            assert!(flow.measures.iter().all(|m| *m == mu0));
        }
    }

    #[test]
    fn sticky_pair_collides_at_two() {
        let phi = Functional::interaction(Kernel::Abs(1.0)).unwrap();
        let cfg = FlowConfig::default().with_merge_eps(1e-6);
        let flow = evolve(&phi.into(), &line(&[-1.0, 1.0]), Scheme::Implicit { tau: 1e-2 }, 3.0, &cfg).unwrap();
        let first_merged = flow.diagnostics.iter().position(|d| d.support_cardinality == 1).unwrap();
        let t = flow.times[first_merged];
        assert!((t - 2.0).abs() <= 0.02, "{t}");
        assert!(flow.diagnostics[first_merged..].iter().all(|d| d.support_cardinality == 1));
        assert!(flow.last().atoms()[0].x[0].abs() < 1e-12);
    }

    #[test]
    fn explicit_sticky_pair_is_snapped() {
        // explicit steps overshoot the collision unless particles are snapped
        let phi = Functional::interaction(Kernel::Abs(1.0)).unwrap();
        let cfg = FlowConfig::default().with_merge_eps(0.1);
        let flow = evolve(&phi.into(), &line(&[-1.0, 1.0]), Scheme::Explicit { tau: 0.03 }, 3.0, &cfg).unwrap();
        assert_eq!(flow.last().support_len(), 1);
    }

    #[test]
    fn separating_particles_are_not_merged() {
        let f = VelocityField::scalar_linear(1.0);
        let cfg = FlowConfig::default().with_merge_eps(0.5);
        let flow = evolve(&f.into(), &line(&[-0.01, 0.01]), Scheme::Explicit { tau: 0.1 }, 1.0, &cfg).unwrap();
        assert!((flow.lagrangian.last().unwrap().particle(0)[0] + 0.01 * 1.1f64.powi(10)).abs() < 1e-15);
    }

    #[test]
    fn shuffled_lift_gives_same_measures() {
        let phi = Functional::new(Kernel::Quadratic(0.5), Kernel::Abs(1.0)).unwrap();
        let mu0 = DiscreteMeasure::new(1, vec![(pt![-1.0], 2), (pt![0.3], 1), (pt![2.0], 1)]).unwrap();
        let x0 = expand(&mu0, 4).unwrap();
        let cfg = FlowConfig::default();
        let scheme = Scheme::Implicit { tau: 0.05 };
        let a = evolve_lagrangian(&phi.into(), &x0, scheme, 1.0, &cfg).unwrap();
        let b = evolve_lagrangian(&phi.into(), &x0.permuted(&[3, 0, 2, 1]), scheme, 1.0, &cfg).unwrap();
        assert_eq!(a.measures, b.measures);
    }

    #[test]
    fn grid_and_subsample() {
        let flow = evolve(&VelocityField::scalar_linear(-1.0).into(), &line(&[1.0]), Scheme::Exponential { n: 8 }, 2.0, &FlowConfig::default()).unwrap();
        assert_eq!(flow.len(), 9);
        assert!((flow.last().atoms()[0].x[0] - 1.25f64.powi(-8)).abs() < 1e-9);
        let s = flow.subsample(4);
        assert_eq!(s.times, vec![0.0, 1.0, 2.0]);
        assert_eq!(flow.index_of(1.5), Some(6));
        assert!(Scheme::Implicit { tau: 0.0 }.grid(1.0).is_err());
        assert!(Scheme::Exponential { n: 0 }.grid(1.0).is_err());
    }

    #[test]
    fn csv_and_json() {
        let flow = evolve(&VelocityField::zero().into(), &line(&[0.5]), Scheme::Explicit { tau: 0.5 }, 1.0, &FlowConfig::default()).unwrap();
        assert_eq!(flow.to_csv(), "t,particle_index,x_1\n0,0,0.5\n0.5,0,0.5\n1,0,0.5\n");
        let v: serde_json::Value = serde_json::from_str(&flow.diagnostics_json()).unwrap();
        assert_eq!(v[2]["support_cardinality"], 1);
    }

    #[test]
    fn scheme_json() {
        let s: Scheme = serde_json::from_str(r#"{"kind":"implicit","tau":0.001}"#).unwrap();
        assert_eq!(s, Scheme::Implicit { tau: 1e-3 });
        let s: Scheme = serde_json::from_str(r#"{"kind":"exponential","n":16}"#).unwrap();
        assert_eq!(s, Scheme::Exponential { n: 16 });
        assert!(serde_json::from_str::<Scheme>(r#"{"kind":"implicit","tau":1,"x":2}"#).is_err());
    }
}
