use super::{resolvent, LagrangianOperator, SolverConfig};
use crate::error::{Error, Result};
use crate::fields::GAP_TOLERANCE;
use crate::measures::LagrangianVector;

/// Number of equal steps of size `≈ τ` covering `[0, T]`.
///
/// `T/τ` is rounded up, with a relative slack so that `1.0 / 0.1` counts as
/// ten steps.
pub fn step_count(t_final: f64, tau: f64) -> usize {
    let r = t_final / tau;
    let n = (r - 1e-9 * r.max(1.0)).ceil();
    n.max(1.0) as usize
}

fn check_horizon(t_final: f64) -> Result<()> {
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(Error::OutOfRange {
            name: "T",
            value: t_final,
            expected: "T >= 0",
        });
    }
    Ok(())
}

/// `B_τ X = (J_τ X − X) / τ`.
pub fn yosida(op: &LagrangianOperator, tau: f64, x: &LagrangianVector, cfg: &SolverConfig) -> Result<LagrangianVector> {
    let j = resolvent(op, tau, x, cfg)?;
    Ok(j.sub(x).scale(1.0 / tau))
}

/// Yosida velocities along a decreasing step grid.
#[derive(Clone, Debug)]
pub struct MinimalSelection {
    /// `B_τ X` at the smallest `τ`.
    pub velocity: LagrangianVector,
    pub taus: Vec<f64>,
    /// `(1 − λτ_i)|B_{τ_i} X|`.
    pub norms: Vec<f64>,
    /// Whether `norms` is nondecreasing up to `2·cfg.tol/τ_min`.
    pub monotone: bool,
}

/// Approximates the minimal selection `B°X` by Yosida approximations on a
/// strictly decreasing grid of steps.
pub fn minimal_selection_estimate(
    op: &LagrangianOperator,
    x: &LagrangianVector,
    taus: &[f64],
    cfg: &SolverConfig,
) -> Result<MinimalSelection> {
    if taus.is_empty() || taus.windows(2).any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Less)) {
        return Err(Error::Domain("step grid must be nonempty and strictly decreasing".into()));
    }
    let lambda = op.lambda();
    let mut norms = Vec::with_capacity(taus.len());
    let mut velocity = None;
    for &tau in taus {
        let v = yosida(op, tau, x, cfg)?;
        norms.push((1.0 - lambda * tau) * v.norm());
        velocity = Some(v);
    }
    // a resolvent residual of `tol` is amplified by `1/τ` in `B_τ`
    let slack = 2.0 * cfg.tol / taus[taus.len() - 1];
    let monotone = norms.windows(2).all(|w| w[1] >= w[0] - slack);
    Ok(MinimalSelection {
        velocity: velocity.expect("nonempty grid"),
        taus: taus.to_vec(),
        norms,
        monotone,
    })
}

/// `(J_{t/n})ⁿ X`.
pub fn exponential_semigroup(
    op: &LagrangianOperator,
    t: f64,
    x: &LagrangianVector,
    n: usize,
    cfg: &SolverConfig,
) -> Result<LagrangianVector> {
    check_horizon(t)?;
    if n == 0 {
        return Err(Error::Domain("n must be positive".into()));
    }
    if t == 0.0 {
        return Ok(x.clone());
    }
    let tau = t / n as f64;
    let mut cur = x.clone();
    for _ in 0..n {
        cur = resolvent(op, tau, &cur, cfg)?;
    }
    Ok(cur)
}

/// Particle states at increasing times.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<LagrangianVector>,
}

impl Trajectory {
    pub fn last(&self) -> &LagrangianVector {
        self.states.last().expect("trajectory starts with the initial state")
    }
}

fn march(
    tau: f64,
    t_final: f64,
    x0: &LagrangianVector,
    mut step: impl FnMut(f64, &LagrangianVector) -> Result<LagrangianVector>,
) -> Result<Trajectory> {
    check_horizon(t_final)?;
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::OutOfRange {
            name: "tau",
            value: tau,
            expected: "tau > 0",
        });
    }
    let mut times = vec![0.0];
    let mut states = vec![x0.clone()];
    if t_final == 0.0 {
        return Ok(Trajectory { times, states });
    }
    let n = step_count(t_final, tau);
    let h = t_final / n as f64;
    for k in 1..=n {
        let next = step(h, states.last().expect("nonempty"))?;
        states.push(next);
        times.push(if k == n { t_final } else { k as f64 * h });
    }
    Ok(Trajectory { times, states })
}

/// Forward Euler `X_{k+1} = X_k + h·B X_k` with `h = T/⌈T/τ⌉`. Meant for
/// Lipschitz fields; divergence is not detected.
pub fn explicit_trajectory(
    op: &LagrangianOperator,
    tau: f64,
    t_final: f64,
    x0: &LagrangianVector,
) -> Result<Trajectory> {
    march(tau, t_final, x0, |h, x| Ok(x.add_scaled(h, &op.apply(x)?)))
}

/// Implicit Euler `X_{k+1} = J_h X_k` with `h = T/⌈T/τ⌉`.
pub fn implicit_trajectory(
    op: &LagrangianOperator,
    tau: f64,
    t_final: f64,
    x0: &LagrangianVector,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    op.check_step(tau)?;
    march(tau, t_final, x0, |h, x| resolvent(op, h, x, cfg))
}

/// Worst `⟨BX − BY, X − Y⟩ − λ|X − Y|²` over sampled pairs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OperatorCheck {
    pub worst_gap: f64,
    pub pass: bool,
}

pub fn operator_dissipativity_check(
    op: &LagrangianOperator,
    lambda: f64,
    pairs: &[(LagrangianVector, LagrangianVector)],
) -> Result<OperatorCheck> {
    let mut worst = f64::NEG_INFINITY;
    for (x, y) in pairs {
        if x.len() != y.len() || x.dim() != y.dim() {
            return Err(Error::DimensionMismatch {
                expected: x.as_flat().len(),
                found: y.as_flat().len(),
            });
        }
        let d = x.sub(y);
        let gap = op.apply(x)?.sub(&op.apply(y)?).inner(&d) - lambda * d.inner(&d);
        worst = worst.max(gap);
    }
    Ok(OperatorCheck {
        worst_gap: worst,
        pass: worst <= GAP_TOLERANCE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{Functional, Kernel, VelocityField};

    fn lv(v: &[f64]) -> LagrangianVector {
        LagrangianVector::new(1, v.to_vec()).unwrap()
    }

    fn contraction() -> LagrangianOperator {
        LagrangianOperator::from_field(VelocityField::scalar_linear(-1.0))
    }

    #[test]
    fn step_counts() {
        assert_eq!(step_count(1.0, 0.1), 10);
        assert_eq!(step_count(1.0, 0.3), 4);
        assert_eq!(step_count(3.0, 1e-3), 3000);
    }

    #[test]
    fn yosida_examples() {
        let cfg = SolverConfig::default();
        let v = yosida(&contraction(), 0.25, &lv(&[1.0]), &cfg).unwrap();
        assert!((v.particle(0)[0] + 0.8).abs() < 1e-9);
        let zero = LagrangianOperator::from_field(VelocityField::zero());
        assert_eq!(yosida(&zero, 0.25, &lv(&[1.0, 2.0]), &cfg).unwrap(), lv(&[0.0, 0.0]));
    }

    #[test]
    fn minimal_selection_at_lambda_zero() {
        let op = contraction().with_lambda(0.0);
        let r = minimal_selection_estimate(&op, &lv(&[1.0]), &[0.5, 0.25, 0.125], &SolverConfig::default()).unwrap();
        for (got, want) in r.norms.iter().zip([2.0 / 3.0, 0.8, 8.0 / 9.0]) {
            assert!((got - want).abs() < 1e-9);
        }
        assert!(r.monotone);
        assert!(minimal_selection_estimate(&op, &lv(&[1.0]), &[0.25, 0.5], &SolverConfig::default()).is_err());
    }

    #[test]
    fn minimal_selection_of_sticky_pair() {
        let op = LagrangianOperator::from_functional(Functional::interaction(Kernel::Abs(1.0)).unwrap());
        let taus: Vec<f64> = (1..=6).map(|k| 0.5f64.powi(k)).collect();
        let r = minimal_selection_estimate(&op, &lv(&[-1.0, 1.0]), &taus, &SolverConfig::default()).unwrap();
        assert!(r.monotone);
        assert!((r.norms.last().unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn exponential_formula() {
        let cfg = SolverConfig::default();
        let x = exponential_semigroup(&contraction(), 1.0, &lv(&[1.0]), 100, &cfg).unwrap();
        let want = 1.01f64.powi(-100);
        assert!((x.particle(0)[0] - want).abs() < 1e-8, "{}", x.particle(0)[0] - want);
        assert!((want - (-1f64).exp()).abs() <= 0.2);
        assert_eq!(exponential_semigroup(&contraction(), 0.0, &lv(&[1.0]), 3, &cfg).unwrap(), lv(&[1.0]));
    }

    #[test]
    fn trajectories() {
        let cfg = SolverConfig::default();
        let e = explicit_trajectory(&contraction(), 0.1, 1.0, &lv(&[1.0])).unwrap();
        assert_eq!(e.states.len(), 11);
        assert!((e.last().particle(0)[0] - 0.9f64.powi(10)).abs() < 1e-12);
        let i = implicit_trajectory(&contraction(), 0.1, 1.0, &lv(&[1.0]), &cfg).unwrap();
        assert!((i.last().particle(0)[0] - 1.1f64.powi(-10)).abs() < 1e-9);
        assert_eq!(*i.times.last().unwrap(), 1.0);

        let drift = LagrangianOperator::from_field(VelocityField::constant(vec![2.0]));
        let e = explicit_trajectory(&drift, 0.3, 1.0, &lv(&[1.0])).unwrap();
        assert!((e.last().particle(0)[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn dissipativity_of_linear_operators() {
        let pairs = vec![(lv(&[1.0, 2.0]), lv(&[0.0, -1.0])), (lv(&[3.0, 3.0]), lv(&[2.5, 3.0]))];
        let r = operator_dissipativity_check(&contraction(), 0.0, &pairs).unwrap();
        assert!(r.pass);
        assert!((r.worst_gap + 0.125).abs() < 1e-15);
        let expand = LagrangianOperator::from_field(VelocityField::scalar_linear(1.0));
        assert!(!operator_dissipativity_check(&expand, 0.0, &pairs).unwrap().pass);
        assert!(operator_dissipativity_check(&expand, 1.0, &pairs).unwrap().pass);
    }
}
