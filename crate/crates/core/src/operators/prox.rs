//! Proximal solver for `B = −∂ψ`, `ψ(X) = φ(ι X)` with `φ` a potential plus
//! interaction energy.
//!
//! `J_τ Y` minimizes
//! `Φ(X) = Σ_n [(1/2τ)|x_n − y_n|² + P(x_n)] + (1/2N) Σ_{n,m} W(x_n − x_m)`,
//! which is `N` times the JKO objective on the lifted space.
//!
//! Smooth kernels: damped Newton with the analytic Hessian.
//!
//! Kernels with an `|z|` part: Newton along a continuation in which `|z|` is
//! replaced by `sqrt(|z|² + ε²) − ε`, `ε` decreasing to `1e−12·scale`. The
//! particles that the smoothed minimizer leaves within `1e−8·scale` of each
//! other (or of the origin for an `|x|` potential) are then merged, the
//! cluster positions are solved exactly, and the result is accepted only if
//! subgradients in the unit balls can be found that make `X − τBX − Y`
//! smaller than the tolerance.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fields::{Functional, Kernel};
use crate::linalg::{dist2, norm2, sub, DisjointSets};
use crate::measures::LagrangianVector;
use crate::operators::SolverConfig;

const STAGES: i32 = 12;
const CLUSTER_REL: f64 = 1e-8;
const BALL_SLACK: f64 = 1e-7;

/// Weighted point masses `k_g` at `c_g`, pulled towards `ȳ_g`; fixed ones do
/// not move.
struct Groups {
    pos: Vec<Vec<f64>>,
    weight: Vec<f64>,
    target: Vec<Vec<f64>>,
    fixed: Vec<bool>,
}

struct Problem<'a> {
    phi: &'a Functional,
    tau: f64,
    /// Total particle count.
    n: f64,
    eps: f64,
}

impl Problem<'_> {
    fn objective(&self, g: &Groups, pos: &[Vec<f64>]) -> f64 {
        let mut v = 0.0;
        for a in 0..pos.len() {
            let k = g.weight[a];
            v += k * (dist2(&pos[a], &g.target[a]) / (2.0 * self.tau) + self.phi.potential.smoothed_value(&pos[a], self.eps));
            if self.phi.interaction != Kernel::Zero {
                for b in 0..pos.len() {
                    if a != b {
                        v += k * g.weight[b] / (2.0 * self.n)
                            * self.phi.interaction.smoothed_value(&sub(&pos[a], &pos[b]), self.eps);
                    }
                }
            }
        }
        v
    }

    fn gradient(&self, g: &Groups, pos: &[Vec<f64>]) -> Vec<Vec<f64>> {
        (0..pos.len())
            .map(|a| {
                let k = g.weight[a];
                let up = self.phi.potential.smoothed_grad(&pos[a], self.eps);
                let mut gr: Vec<f64> = (0..pos[a].len())
                    .map(|i| k * ((pos[a][i] - g.target[a][i]) / self.tau + up[i]))
                    .collect();
                if self.phi.interaction != Kernel::Zero {
                    for b in 0..pos.len() {
                        if a != b {
                            let uw = self.phi.interaction.smoothed_grad(&sub(&pos[a], &pos[b]), self.eps);
                            let c = k * g.weight[b] / self.n;
                            gr.iter_mut().zip(uw).for_each(|(x, u)| *x += c * u);
                        }
                    }
                }
                gr
            })
            .collect()
    }

    /// `|X − τBX − Y|` restricted to free groups, in the weighted norm.
    fn residual(&self, g: &Groups, grad: &[Vec<f64>]) -> f64 {
        let s: f64 = (0..grad.len())
            .filter(|&a| !g.fixed[a])
            .map(|a| norm2(&grad[a]) * self.tau * self.tau / g.weight[a])
            .sum();
        (s / self.n).sqrt()
    }

    fn hessian(&self, g: &Groups, pos: &[Vec<f64>], free: &[usize]) -> DMatrix<f64> {
        let d = pos[0].len();
        let m = free.len() * d;
        let mut h = DMatrix::<f64>::zeros(m, m);
        let slot: Vec<Option<usize>> = {
            let mut s = vec![None; pos.len()];
            free.iter().enumerate().for_each(|(i, &a)| s[a] = Some(i));
            s
        };
        for (ia, &a) in free.iter().enumerate() {
            let k = g.weight[a];
            let hp = self.phi.potential.smoothed_hessian(&pos[a], self.eps);
            for i in 0..d {
                h[(ia * d + i, ia * d + i)] += k / self.tau;
                for j in 0..d {
                    h[(ia * d + i, ia * d + j)] += k * hp[i * d + j];
                }
            }
            if self.phi.interaction == Kernel::Zero {
                continue;
            }
            for b in 0..pos.len() {
                if a == b {
                    continue;
                }
                let hw = self.phi.interaction.smoothed_hessian(&sub(&pos[a], &pos[b]), self.eps);
                let c = k * g.weight[b] / self.n;
                for i in 0..d {
                    for j in 0..d {
                        h[(ia * d + i, ia * d + j)] += c * hw[i * d + j];
                        if let Some(ib) = slot[b] {
                            h[(ia * d + i, ib * d + j)] -= c * hw[i * d + j];
                        }
                    }
                }
            }
        }
        h
    }

    /// Damped Newton on the free groups. Returns the final residual.
    fn newton(&self, g: &mut Groups, target: f64, max_iter: usize) -> f64 {
        let free: Vec<usize> = (0..g.pos.len()).filter(|&a| !g.fixed[a]).collect();
        let mut grad = self.gradient(g, &g.pos);
        let mut res = self.residual(g, &grad);
        if free.is_empty() {
            return res;
        }
        let d = g.pos[0].len();
        let mut f = self.objective(g, &g.pos);
        for _ in 0..max_iter {
            if res <= target {
                break;
            }
            let h = self.hessian(g, &g.pos, &free);
            let rhs = DVector::from_iterator(free.len() * d, free.iter().flat_map(|&a| grad[a].iter().map(|v| -v)));
            let step = match h.clone().cholesky() {
                Some(c) => c.solve(&rhs),
                None => match h.lu().solve(&rhs) {
                    Some(s) => s,
                    None => break,
                },
            };
            let slope: f64 = -rhs.dot(&step);
            let mut t = 1.0;
            let mut moved = false;
            while t > 1e-12 {
                let mut cand = g.pos.clone();
                for (ia, &a) in free.iter().enumerate() {
                    for i in 0..d {
                        cand[a][i] += t * step[ia * d + i];
                    }
                }
                let fc = self.objective(g, &cand);
                let gc = self.gradient(g, &cand);
                let rc = self.residual(g, &gc);
                // near the optimum Φ stops resolving progress; fall back to the residual
                if fc <= f + 1e-4 * t * slope || (rc < res && fc <= f + 1e-14 * f.abs().max(1.0)) {
                    g.pos = cand;
                    f = fc;
                    grad = gc;
                    res = rc;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            if !moved {
                break;
            }
        }
        res
    }
}

pub(crate) fn prox(phi: &Functional, tau: f64, y: &LagrangianVector, cfg: &SolverConfig) -> Result<LagrangianVector> {
    let d = y.dim();
    let n = y.len();
    let singletons = || Groups {
        pos: y.particles().map(|p| p.to_vec()).collect(),
        weight: vec![1.0; n],
        target: y.particles().map(|p| p.to_vec()).collect(),
        fixed: vec![false; n],
    };
    let max_iter = cfg.max_iter.min(500);

    if phi.is_smooth() {
        let mut g = singletons();
        let pb = Problem {
            phi,
            tau,
            n: n as f64,
            eps: 0.0,
        };
        let res = pb.newton(&mut g, cfg.tol, max_iter);
        if res > cfg.tol {
            return Err(Error::NonConvergence {
                iterations: max_iter,
                residual: res,
            });
        }
        return Ok(LagrangianVector::from_flat_unchecked(d, g.pos.concat()));
    }

    let a_p = abs_coef(phi.potential);
    let a_w = abs_coef(phi.interaction);
    let scale = {
        let mut diam2 = 0.0f64;
        for a in y.particles() {
            for b in y.particles() {
                diam2 = diam2.max(dist2(a, b));
            }
        }
        let origin = if a_p > 0.0 {
            y.particles().map(|p| norm2(p).sqrt()).fold(0.0, f64::max)
        } else {
            0.0
        };
        let s = diam2.sqrt().max(tau * (a_p + a_w)).max(origin);
        if s > 0.0 {
            s
        } else {
            1.0
        }
    };

    // continuation on the smoothing parameter
    let mut g = singletons();
    let mut eps = scale;
    for k in 1..=STAGES {
        eps = scale * 10f64.powi(-k);
        let pb = Problem {
            phi,
            tau,
            n: n as f64,
            eps,
        };
        pb.newton(&mut g, cfg.tol * 1e-2, 100);
    }
    let smooth_x = g.pos;

    // clusters of the smoothed minimizer
    let radius = CLUSTER_REL * scale;
    let mut sets = DisjointSets::new(n);
    for a in 0..n {
        for b in a + 1..n {
            if dist2(&smooth_x[a], &smooth_x[b]) <= radius * radius {
                sets.union(a, b);
            }
        }
    }
    let clusters = sets.groups();
    let mut red = Groups {
        pos: Vec::new(),
        weight: Vec::new(),
        target: Vec::new(),
        fixed: Vec::new(),
    };
    for c in &clusters {
        let k = c.len() as f64;
        let mean = |pts: &dyn Fn(usize) -> Vec<f64>| -> Vec<f64> {
            let mut m = vec![0.0; d];
            for &i in c {
                m.iter_mut().zip(pts(i)).for_each(|(a, b)| *a += b / k);
            }
            m
        };
        let pos = mean(&|i| smooth_x[i].clone());
        let pinned = a_p > 0.0 && norm2(&pos).sqrt() <= radius;
        red.pos.push(if pinned { vec![0.0; d] } else { pos });
        red.target.push(mean(&|i| y.particle(i).to_vec()));
        red.weight.push(k);
        red.fixed.push(pinned);
    }
    let pb = Problem {
        phi,
        tau,
        n: n as f64,
        eps: 0.0,
    };
    pb.newton(&mut red, cfg.tol * 1e-3, max_iter);

    let res = certificate(phi, tau, y, &smooth_x, eps, &clusters, &red);
    if res.is_nan() || res > cfg.tol {
        return Err(Error::NonConvergence {
            iterations: max_iter,
            residual: res,
        });
    }
    let mut out = vec![0.0; n * d];
    for (c, p) in clusters.iter().zip(&red.pos) {
        for &i in c {
            out[i * d..(i + 1) * d].copy_from_slice(p);
        }
    }
    Ok(LagrangianVector::from_flat_unchecked(d, out))
}

fn abs_coef(k: Kernel) -> f64 {
    match k {
        Kernel::Abs(a) => a,
        _ => 0.0,
    }
}

/// Builds subgradients for the clustered solution, starting from the forces
/// of the smoothed minimizer, and returns `|X − τv − Y|` for the resulting
/// velocity `v`; `∞` if no admissible subgradients were found.
fn certificate(
    phi: &Functional,
    tau: f64,
    y: &LagrangianVector,
    smooth_x: &[Vec<f64>],
    eps: f64,
    clusters: &[Vec<usize>],
    red: &Groups,
) -> f64 {
    let n = y.len() as f64;
    let d = y.dim();
    let a_p = abs_coef(phi.potential);
    let a_w = abs_coef(phi.interaction);
    let mut total = 0.0;
    for (gi, c) in clusters.iter().enumerate() {
        let pos = &red.pos[gi];
        let k = c.len();
        // external interaction force, common to the cluster
        let mut ext = vec![0.0; d];
        if phi.interaction != Kernel::Zero {
            for (hi, other) in red.pos.iter().enumerate() {
                if hi != gi {
                    let u = phi.interaction.selection(&sub(pos, other));
                    ext.iter_mut().zip(u).for_each(|(e, v)| *e += red.weight[hi] / n * v);
                }
            }
        }
        let p_sel = phi.potential.selection(pos);
        // internal forces ξ_ab from the smoothed solution
        let mut xi: Vec<Vec<Vec<f64>>> = vec![vec![vec![0.0; d]; k]; k];
        if a_w > 0.0 {
            for a in 0..k {
                for b in 0..k {
                    if a != b {
                        xi[a][b] = phi.interaction.smoothed_grad(&sub(&smooth_x[c[a]], &smooth_x[c[b]]), eps);
                    }
                }
            }
        }
        let mut u: Vec<Vec<f64>> = if red.fixed[gi] {
            c.iter().map(|&i| phi.potential.smoothed_grad(&smooth_x[i], eps)).collect()
        } else {
            vec![p_sel.clone(); k]
        };
        // defect D_a = need_a − u_a − (1/N) Σ_b ξ_ab
        let defect: Vec<Vec<f64>> = (0..k)
            .map(|a| {
                let i = c[a];
                (0..d)
                    .map(|j| {
                        let need = -(pos[j] - y.particle(i)[j]) / tau - ext[j];
                        let int: f64 = (0..k).map(|b| xi[a][b][j]).sum::<f64>() / n;
                        need - u[a][j] - int
                    })
                    .collect()
            })
            .collect();
        let mean: Vec<f64> = (0..d).map(|j| defect.iter().map(|v| v[j]).sum::<f64>() / k as f64).collect();
        let mut left = defect.clone();
        if a_w > 0.0 && k > 1 {
            for a in 0..k {
                for b in 0..k {
                    if a != b {
                        for j in 0..d {
                            xi[a][b][j] += n * (defect[a][j] - defect[b][j]) / k as f64;
                        }
                    }
                }
                left[a] = mean.clone();
            }
            for row in &xi {
                for v in row {
                    if norm2(v).sqrt() > a_w * (1.0 + BALL_SLACK) {
                        return f64::INFINITY;
                    }
                }
            }
        }
        if red.fixed[gi] {
            for a in 0..k {
                u[a].iter_mut().zip(&left[a]).for_each(|(x, l)| *x += l);
                left[a] = vec![0.0; d];
                if norm2(&u[a]).sqrt() > a_p * (1.0 + BALL_SLACK) {
                    return f64::INFINITY;
                }
            }
        }
        total += left.iter().map(|l| tau * tau * norm2(l)).sum::<f64>();
    }
    (total / n).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lv(v: &[f64]) -> LagrangianVector {
        LagrangianVector::new(1, v.to_vec()).unwrap()
    }

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    #[test]
    fn abs_interaction_shrinks_gap() {
        let phi = Functional::interaction(Kernel::Abs(1.0)).unwrap();
        let x = prox(&phi, 1.0, &lv(&[-1.0, 1.0]), &cfg()).unwrap();
        assert!((x.particle(0)[0] + 0.5).abs() < 1e-10);
        assert!((x.particle(1)[0] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn abs_interaction_sticks() {
        let phi = Functional::interaction(Kernel::Abs(1.0)).unwrap();
        // closing distance τ·(2/N)·... exceeds the gap: the pair merges at the mean
        let x = prox(&phi, 1.0, &lv(&[-0.2, 0.4]), &cfg()).unwrap();
        assert_eq!(x.particle(0), x.particle(1));
        assert!((x.particle(0)[0] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn abs_potential_pins_at_origin() {
        let phi = Functional::potential(Kernel::Abs(1.0)).unwrap();
        let x = prox(&phi, 0.5, &lv(&[0.3, -2.0, 1.0]), &cfg()).unwrap();
        assert_eq!(x.particle(0)[0], 0.0);
        assert!((x.particle(1)[0] + 1.5).abs() < 1e-10);
        assert!((x.particle(2)[0] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn quadratic_potential_closed_form() {
        let phi = Functional::potential(Kernel::Quadratic(1.0)).unwrap();
        let y = LagrangianVector::new(2, vec![1.0, -2.0, 3.0, 0.5]).unwrap();
        let x = prox(&phi, 0.25, &y, &cfg()).unwrap();
        for (a, b) in x.as_flat().iter().zip(y.as_flat()) {
            assert!((a - b / 1.25).abs() < 1e-12);
        }
    }

    #[test]
    fn quartic_interaction_solves_equation() {
        let phi = Functional::interaction(Kernel::Quartic(1.0)).unwrap();
        let y = lv(&[-1.0, 0.0, 2.0]);
        let x = prox(&phi, 0.3, &y, &cfg()).unwrap();
        let op = crate::operators::LagrangianOperator::from_functional(phi);
        assert!(crate::operators::resolvent_residual(&op, 0.3, &x, &y).unwrap() <= 1e-10);
    }
}
