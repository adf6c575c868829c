use crate::linalg::{dist2, dot};
use crate::measures::{Coupling, Point};

/// Slack on cycle sums: a cycle fails only below `-CYCLE_TOLERANCE`.
pub const CYCLE_TOLERANCE: f64 = 1e-9;

/// Outcome of [`cyclical_monotonicity_check`].
#[derive(Clone, Debug)]
pub struct MonotonicityReport {
    pub pass: bool,
    /// Most negative closed-walk sum found (0 when the support has one point).
    pub min_cycle_sum: f64,
    /// A violating cycle `(x_1,y_1), …, (x_k,y_k)` when `pass` is false.
    pub witness: Option<Vec<(Point, Point)>>,
}

/// Checks `Σ_n ⟨y_n, x_n − x_{n−1}⟩ ≥ 0` over every cycle of support points
/// of length at most `max_cycle`.
///
/// Works on the complete digraph over support points with edge weight
/// `w(p→q) = ⟨y_q, x_q − x_p⟩`: cycle sums are closed-walk weights, and a
/// closed walk of length `≤ k` splits into simple cycles of length `≤ k`, so
/// a length-bounded min-plus recursion decides the condition exactly.
pub fn cyclical_monotonicity_check(gamma: &Coupling, max_cycle: usize) -> MonotonicityReport {
    let pts = gamma.support_points();
    let s = pts.len();
    let k = max_cycle.max(2).min(s.max(1));
    if s < 2 {
        return MonotonicityReport {
            pass: true,
            min_cycle_sum: 0.0,
            witness: None,
        };
    }
    let mut w = vec![vec![0.0; s]; s];
    for p in 0..s {
        for q in 0..s {
            if p != q {
                let (xp, _) = pts[p];
                let (xq, yq) = pts[q];
                let diff: Vec<f64> = xq.iter().zip(xp).map(|(a, b)| a - b).collect();
                w[p][q] = dot(yq, &diff);
            }
        }
    }

    // dist[l][src][v]: min weight of a walk src -> v with exactly l edges
    let inf = f64::INFINITY;
    let mut dist: Vec<Vec<Vec<f64>>> = vec![vec![vec![inf; s]; s]; k + 1];
    let mut pred: Vec<Vec<Vec<usize>>> = vec![vec![vec![usize::MAX; s]; s]; k + 1];
    for (src, row) in dist[0].iter_mut().enumerate() {
        row[src] = 0.0;
    }
    let mut best = (0.0, 0usize, 0usize);
    for l in 1..=k {
        for src in 0..s {
            for v in 0..s {
                let mut m = inf;
                let mut arg = usize::MAX;
                for u in 0..s {
                    let d = dist[l - 1][src][u];
                    if d < inf {
                        let c = d + w[u][v];
                        if c < m {
                            m = c;
                            arg = u;
                        }
                    }
                }
                dist[l][src][v] = m;
                pred[l][src][v] = arg;
            }
            if dist[l][src][src] < best.0 {
                best = (dist[l][src][src], l, src);
            }
        }
    }

    let (min_sum, l, src) = best;
    if min_sum >= -CYCLE_TOLERANCE {
        return MonotonicityReport {
            pass: true,
            min_cycle_sum: min_sum,
            witness: None,
        };
    }

    // walk src -> ... -> src, then the most negative simple cycle inside it
    let mut walk = vec![src];
    let mut v = src;
    for step in (1..=l).rev() {
        v = pred[step][src][v];
        walk.push(v);
    }
    walk.reverse();
    let cycle = most_negative_simple_cycle(&walk, &w);
    let witness = cycle
        .iter()
        .map(|&p| {
            (
                Point::from_slice(pts[p].0).expect("finite"),
                Point::from_slice(pts[p].1).expect("finite"),
            )
        })
        .collect();
    MonotonicityReport {
        pass: false,
        min_cycle_sum: min_sum,
        witness: Some(witness),
    }
}

/// Splits a closed walk `v_0 → … → v_l = v_0` into simple cycles and
/// returns the one with the smallest weight, listed in traversal order.
fn most_negative_simple_cycle(walk: &[usize], w: &[Vec<f64>]) -> Vec<usize> {
    let mut stack: Vec<usize> = Vec::new();
    let mut best: (f64, Vec<usize>) = (f64::INFINITY, Vec::new());
    for &v in walk {
        if let Some(pos) = stack.iter().position(|&u| u == v) {
            let cyc: Vec<usize> = stack[pos..].to_vec();
            let weight: f64 = (0..cyc.len())
                .map(|i| w[cyc[i]][cyc[(i + 1) % cyc.len()]])
                .sum();
            if weight < best.0 {
                best = (weight, cyc);
            }
            stack.truncate(pos);
        }
        stack.push(v);
    }
    best.1
}

/// Result of [`local_optimality_certificate`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Certificate {
    CertifiedOptimal,
    Unknown,
}

/// Sufficient optimality test: if no support point moves farther than half
/// the minimal separation of the source atoms, the plan is optimal.
pub fn local_optimality_certificate(gamma: &Coupling) -> Certificate {
    let delta = gamma.source().min_separation();
    if gamma.max_displacement() <= delta / 2.0 {
        Certificate::CertifiedOptimal
    } else {
        Certificate::Unknown
    }
}

/// Detects whether an optimal plan `gamma` admits a different optimal plan
/// (a tie), by looking for a zero-reduced-cost cycle in the residual graph of
/// the transportation problem that uses an edge outside the support.
pub fn has_alternative_optimal_plan(gamma: &Coupling) -> bool {
    let src = gamma.source().atoms();
    let tgt = gamma.target().atoms();
    let (ns, nt) = (src.len(), tgt.len());
    let nv = ns + nt;
    let cost: Vec<Vec<f64>> = src
        .iter()
        .map(|a| tgt.iter().map(|b| dist2(&a.x, &b.x)).collect())
        .collect();
    let scale = cost.iter().flatten().fold(0.0f64, |m, &c| m.max(c)).max(1e-300);
    let tol = 1e-9 * scale;

    // residual edges: s_i -> t_j always, t_j -> s_i on the support
    let mut edges: Vec<(usize, usize, f64, bool)> = Vec::new();
    for (i, row) in cost.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            let on_support = gamma.mass()[i][j] > 0;
            edges.push((i, ns + j, c, on_support));
            if on_support {
                edges.push((ns + j, i, -c, true));
            }
        }
    }
    // Bellman-Ford potentials from a virtual root
    let mut d = vec![0.0; nv];
    for _ in 0..nv {
        let mut changed = false;
        for &(a, b, c, _) in &edges {
            if d[a] + c < d[b] - tol * 1e-3 {
                d[b] = d[a] + c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let tight: Vec<Vec<usize>> = {
        let mut adj = vec![Vec::new(); nv];
        for &(a, b, c, _) in &edges {
            if c + d[a] - d[b] <= tol {
                adj[a].push(b);
            }
        }
        adj
    };
    for i in 0..ns {
        for j in 0..nt {
            if gamma.mass()[i][j] > 0 || cost[i][j] + d[i] - d[ns + j] > tol {
                continue;
            }
            // can t_j reach s_i through tight edges?
            let mut seen = vec![false; nv];
            let mut stack = vec![ns + j];
            seen[ns + j] = true;
            while let Some(v) = stack.pop() {
                if v == i {
                    return true;
                }
                for &u in &tight[v] {
                    if !seen[u] {
                        seen[u] = true;
                        stack.push(u);
                    }
                }
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{DiscreteMeasure, LagrangianVector};
    use crate::pt;
    use crate::transport::w2_exact;

    fn square() -> (DiscreteMeasure, DiscreteMeasure) {
        (
            DiscreteMeasure::uniform(vec![pt![0, 0], pt![1, 0]]).unwrap(),
            DiscreteMeasure::uniform(vec![pt![0, 1], pt![1, 1]]).unwrap(),
        )
    }

    fn swap_plan() -> Coupling {
        let x = LagrangianVector::from_points(&[pt![0, 0], pt![1, 0]]).unwrap();
        let y = LagrangianVector::from_points(&[pt![1, 1], pt![0, 1]]).unwrap();
        Coupling::from_permutation(&x, &y, &[0, 1]).unwrap()
    }

    #[test]
    fn optimal_plan_is_cyclically_monotone() {
        let (a, b) = square();
        let plan = w2_exact(&a, &b).unwrap().plan;
        let r = cyclical_monotonicity_check(&plan, plan.support().count());
        assert!(r.pass);
    }

    #[test]
    fn swap_plan_fails_with_two_cycle() {
        let plan = swap_plan();
        assert!((plan.cost() - 2.0).abs() < 1e-15);
        let r = cyclical_monotonicity_check(&plan, 2);
        assert!(!r.pass);
        let w = r.witness.unwrap();
        assert_eq!(w.len(), 2);
        let sum: f64 = (0..2)
            .map(|n| {
                let (x, y) = &w[n];
                let (xp, _) = &w[(n + 1) % 2];
                dot(y, &[x[0] - xp[0], x[1] - xp[1]])
            })
            .sum();
        assert!(sum < -CYCLE_TOLERANCE);
    }

    #[test]
    fn identity_plan_passes() {
        let mu = DiscreteMeasure::uniform(vec![pt![0, 0], pt![3, 1], pt![-2, 5]]).unwrap();
        assert!(cyclical_monotonicity_check(&Coupling::identity(&mu), 3).pass);
    }

    #[test]
    fn certificates() {
        let src = DiscreteMeasure::uniform(vec![pt![0], pt![10]]).unwrap();
        let tgt = DiscreteMeasure::uniform(vec![pt![5], pt![6]]).unwrap();
        let g = Coupling::new(src.clone(), tgt, vec![vec![1, 0], vec![0, 1]]).unwrap();
        assert_eq!(local_optimality_certificate(&g), Certificate::CertifiedOptimal);
        assert_eq!(
            local_optimality_certificate(&Coupling::identity(&src)),
            Certificate::CertifiedOptimal
        );
        assert_eq!(local_optimality_certificate(&swap_plan()), Certificate::Unknown);
    }

    #[test]
    fn tie_detection() {
        // square corners to the opposite square corners: two optimal plans
        let a = DiscreteMeasure::uniform(vec![pt![0, 0], pt![1, 1]]).unwrap();
        let b = DiscreteMeasure::uniform(vec![pt![1, 0], pt![0, 1]]).unwrap();
        assert!(has_alternative_optimal_plan(&w2_exact(&a, &b).unwrap().plan));
        let (a, b) = square();
        assert!(!has_alternative_optimal_plan(&w2_exact(&a, &b).unwrap().plan));
        let mu = DiscreteMeasure::new(1, vec![(pt![0], 2), (pt![1], 1)]).unwrap();
        assert!(!has_alternative_optimal_plan(&Coupling::identity(&mu)));
    }
}
