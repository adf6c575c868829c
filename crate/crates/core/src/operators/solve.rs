use nalgebra::{DMatrix, DVector};

use super::{prox, LagrangianOperator, SolverConfig, SolverKind};
use crate::error::{Error, Result};
use crate::measures::LagrangianVector;

/// `J_τ Y`: the solution `X` of `X − τ B X = Y`.
///
/// The system is solved on the lexicographically sorted copy of `Y` and the
/// result is mapped back, with particles that share a position in `Y`
/// snapped to a common position. This makes `J_τ` exactly permutation
/// equivariant whatever the solver.
///
/// Solver routing under [`SolverKind::Auto`]: the fixed-point iteration
/// `X ← Y + τBX` when `τ·lip < 1`, the proximal solver when `B = −∂ψ`,
/// damped Newton otherwise.
///
/// ```
/// use wflow::fields::VelocityField;
/// use wflow::measures::LagrangianVector;
/// use wflow::operators::{resolvent, LagrangianOperator, SolverConfig};
///
/// let op = LagrangianOperator::from_field(VelocityField::scalar_linear(-1.0));
/// let y = LagrangianVector::new(1, vec![1.0]).unwrap();
/// let x = resolvent(&op, 0.5, &y, &SolverConfig::default()).unwrap();
/// assert!((x.particle(0)[0] - 2.0 / 3.0).abs() < 1e-10);
/// ```
pub fn resolvent(
    op: &LagrangianOperator,
    tau: f64,
    y: &LagrangianVector,
    cfg: &SolverConfig,
) -> Result<LagrangianVector> {
    op.check_step(tau)?;
    if y.is_empty() {
        return Ok(y.clone());
    }
    let order = y.canonical_order();
    let ys = y.permuted(&order);
    let xs = solve_sorted(op, tau, &ys, cfg)?;

    // undo the sort; equal inputs get the mean of their outputs
    let d = y.dim();
    let mut out = vec![0.0; y.as_flat().len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && ys.particle(j) == ys.particle(i) {
            j += 1;
        }
        let mut mean = vec![0.0; d];
        for k in i..j {
            for (m, v) in mean.iter_mut().zip(xs.particle(k)) {
                *m += v;
            }
        }
        let cnt = (j - i) as f64;
        mean.iter_mut().for_each(|m| *m /= cnt);
        for &orig in &order[i..j] {
            out[orig * d..(orig + 1) * d].copy_from_slice(&mean);
        }
        i = j;
    }
    Ok(LagrangianVector::from_flat_unchecked(d, out))
}

fn solve_sorted(
    op: &LagrangianOperator,
    tau: f64,
    y: &LagrangianVector,
    cfg: &SolverConfig,
) -> Result<LagrangianVector> {
    let contraction = op.lip().map(|l| tau * l).filter(|q| *q < 1.0);
    match cfg.solver {
        SolverKind::FixedPoint => match contraction {
            Some(q) => fixed_point(op, tau, q, y, cfg),
            None => Err(Error::SolverUnavailable("fixed_point")),
        },
        SolverKind::Prox => match op.functional() {
            Some(phi) => prox::prox(phi, tau, y, cfg),
            None => Err(Error::SolverUnavailable("prox")),
        },
        SolverKind::Newton => newton(op, tau, y, cfg),
        SolverKind::Auto => {
            if let Some(q) = contraction {
                fixed_point(op, tau, q, y, cfg)
            } else if let Some(phi) = op.functional() {
                prox::prox(phi, tau, y, cfg)
            } else {
                newton(op, tau, y, cfg)
            }
        }
    }
}

/// Residual `|X − τBX − Y|` of a candidate resolvent value.
pub fn resolvent_residual(op: &LagrangianOperator, tau: f64, x: &LagrangianVector, y: &LagrangianVector) -> Result<f64> {
    Ok(x.add_scaled(-tau, &op.apply(x)?).dist(y))
}

fn fixed_point(
    op: &LagrangianOperator,
    tau: f64,
    q: f64,
    y: &LagrangianVector,
    cfg: &SolverConfig,
) -> Result<LagrangianVector> {
    // |ΔX| below this bound forces the residual below tol
    let stop = cfg.tol * (1.0 - q) / q.max(f64::EPSILON);
    let mut x = y.clone();
    let mut step = f64::INFINITY;
    for _ in 0..cfg.max_iter {
        let next = y.add_scaled(tau, &op.apply(&x)?);
        step = next.dist(&x);
        x = next;
        if step <= stop {
            return Ok(x);
        }
    }
    Err(Error::NonConvergence {
        iterations: cfg.max_iter,
        residual: q * step,
    })
}

/// Damped Newton on `F(X) = X − τBX − Y` with a forward-difference Jacobian.
fn newton(op: &LagrangianOperator, tau: f64, y: &LagrangianVector, cfg: &SolverConfig) -> Result<LagrangianVector> {
    let n = y.as_flat().len();
    let f_of = |x: &LagrangianVector| -> Result<LagrangianVector> {
        Ok(x.add_scaled(-tau, &op.apply(x)?).sub(y))
    };
    let mut x = y.clone();
    let mut fx = f_of(&x)?;
    let mut res = fx.norm();
    let mut stalled = 0;
    let mut it = 0;
    while res > cfg.tol {
        if it >= cfg.max_iter || stalled >= 8 {
            return Err(Error::NonConvergence {
                iterations: it,
                residual: res,
            });
        }
        it += 1;
        let bx = op.apply(&x)?;
        let mut jac = DMatrix::<f64>::identity(n, n);
        for k in 0..n {
            let h = 1e-7 * (1.0 + x.as_flat()[k].abs());
            let mut xp = x.clone();
            xp.as_flat_mut()[k] += h;
            let bp = op.apply(&xp)?;
            for r in 0..n {
                jac[(r, k)] -= tau * (bp.as_flat()[r] - bx.as_flat()[r]) / h;
            }
        }
        let rhs = -DVector::from_column_slice(fx.as_flat());
        let Some(p) = jac.lu().solve(&rhs) else {
            return Err(Error::NonConvergence {
                iterations: it,
                residual: res,
            });
        };
        let p = LagrangianVector::from_flat_unchecked(x.dim(), p.as_slice().to_vec());
        let mut t = 1.0;
        loop {
            let cand = x.add_scaled(t, &p);
            let fc = f_of(&cand)?;
            let rc = fc.norm();
            if rc < (1.0 - 1e-4 * t) * res || t < 1e-10 {
                stalled = if rc < res { 0 } else { stalled + 1 };
                if rc < res {
                    x = cand;
                    fx = fc;
                    res = rc;
                }
                break;
            }
            t *= 0.5;
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::VelocityField;

    fn lv(v: &[f64]) -> LagrangianVector {
        LagrangianVector::new(1, v.to_vec()).unwrap()
    }

    #[test]
    fn minus_identity_all_solvers() {
        let op = LagrangianOperator::from_field(VelocityField::scalar_linear(-1.0));
        for kind in [SolverKind::Auto, SolverKind::FixedPoint, SolverKind::Newton] {
            let cfg = SolverConfig::default().with_solver(kind);
            let x = resolvent(&op, 0.5, &lv(&[1.0]), &cfg).unwrap();
            assert!((x.particle(0)[0] - 2.0 / 3.0).abs() < 1e-10, "{kind:?}");
        }
        let cfg = SolverConfig::default().with_solver(SolverKind::Prox);
        assert!(matches!(resolvent(&op, 0.5, &lv(&[1.0]), &cfg), Err(Error::SolverUnavailable(_))));
        // τ·lip ≥ 1 cannot use the contraction
        let cfg = SolverConfig::default().with_solver(SolverKind::FixedPoint);
        assert!(resolvent(&op, 2.0, &lv(&[1.0]), &cfg).is_err());
        let x = resolvent(&op, 2.0, &lv(&[1.0]), &SolverConfig::default()).unwrap();
        assert!((x.particle(0)[0] - 1.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn zero_field_is_identity() {
        let op = LagrangianOperator::from_field(VelocityField::zero());
        let y = lv(&[3.0, -1.0, 2.0]);
        assert_eq!(resolvent(&op, 10.0, &y, &SolverConfig::default()).unwrap(), y);
    }

    #[test]
    fn newton_on_field_without_lipschitz_claim() {
        // cubic drift: x + τx³ = y
        let f = VelocityField::custom("cubic", 0.0, None, |x, _| Ok(vec![-x[0].powi(3)]));
        let op = LagrangianOperator::from_field(f);
        let x = resolvent(&op, 1.0, &lv(&[2.0]), &SolverConfig::default()).unwrap();
        let v = x.particle(0)[0];
        assert!((v + v.powi(3) - 2.0).abs() < 1e-9);
        assert!(resolvent_residual(&op, 1.0, &x, &lv(&[2.0])).unwrap() <= 1e-10);
    }
}
