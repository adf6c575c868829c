//! Exact optimal transport between discrete measures.
//!
//! Both measures are lifted to a common denominator `N`, after which every
//! admissible plan with integer masses is a sum of permutation plans and the
//! quadratic transport problem becomes an `N × N` assignment problem. The
//! assignment is solved exactly by the Hungarian method; small instances can
//! be cross-checked against [`w2_bruteforce`].

mod assignment;
pub(crate) use assignment::min_cost_assignment;
mod geodesic;
mod injectivity;
mod monotonicity;

use crate::error::{Error, Result};
use crate::linalg::{dist2, for_each_permutation};
use crate::measures::{
    common_denominator, expand, expansion_owner, Coupling, DiscreteMeasure, LagrangianVector,
    MAX_DENOMINATOR,
};

pub use geodesic::{geodesic_decompose, GeodesicDecomposition, DEFAULT_GEODESIC_TOL};
pub use injectivity::{
    check_chords_alignment, perturb_for_injectivity, s_family_injective, AlignmentResult,
    AlignmentWitness, PERTURB_MAX_ATTEMPTS,
};
pub use monotonicity::{
    cyclical_monotonicity_check, has_alternative_optimal_plan, local_optimality_certificate,
    Certificate, MonotonicityReport, CYCLE_TOLERANCE,
};

/// Largest common denominator accepted by [`w2_bruteforce`].
pub const BRUTEFORCE_MAX_N: usize = 8;
/// Largest common denominator accepted by [`w_infinity`].
pub const BOTTLENECK_MAX_N: usize = 64;

/// Optimal value and an optimal plan.
#[derive(Clone, Debug)]
pub struct W2Result {
    pub distance: f64,
    /// `W₂²`, i.e. the plan cost.
    pub cost: f64,
    pub plan: Coupling,
}

fn check_dims(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(())
}

/// Both measures lifted to their common denominator.
fn lifted(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<(u64, LagrangianVector, LagrangianVector)> {
    check_dims(a, b)?;
    let n = common_denominator(a, b, MAX_DENOMINATOR)?;
    Ok((n, expand(a, n)?, expand(b, n)?))
}

fn cost_matrix(x: &LagrangianVector, y: &LagrangianVector) -> Vec<Vec<f64>> {
    x.particles()
        .map(|p| y.particles().map(|q| dist2(p, q)).collect())
        .collect()
}

fn permutation_cost(costs: &[Vec<f64>], perm: &[usize]) -> f64 {
    perm.iter().enumerate().map(|(i, &j)| costs[i][j]).sum()
}

/// Exact quadratic Wasserstein distance with an optimal plan.
pub fn w2_exact(mu0: &DiscreteMeasure, mu1: &DiscreteMeasure) -> Result<W2Result> {
    let (n, x, y) = lifted(mu0, mu1)?;
    let costs = cost_matrix(&x, &y);
    let perm = assignment::min_cost_assignment(&costs);
    let cost = permutation_cost(&costs, &perm) / n as f64;

    let own_x = expansion_owner(mu0, n);
    let own_y = expansion_owner(mu1, n);
    let mut mass = vec![vec![0u64; mu1.support_len()]; mu0.support_len()];
    for (row, &col) in perm.iter().enumerate() {
        mass[own_x[row]][own_y[col]] += 1;
    }
    let plan = Coupling::new(mu0.clone(), mu1.clone(), mass)?;
    Ok(W2Result {
        distance: cost.max(0.0).sqrt(),
        cost,
        plan,
    })
}

/// `W₂` by enumerating all `N!` permutations of the lifted particle lists.
pub fn w2_bruteforce(mu0: &DiscreteMeasure, mu1: &DiscreteMeasure) -> Result<f64> {
    check_dims(mu0, mu1)?;
    let n = common_denominator(mu0, mu1, MAX_DENOMINATOR)?;
    if n as usize > BRUTEFORCE_MAX_N {
        return Err(Error::TooLarge {
            what: "brute-force transport",
            size: n as usize,
            limit: BRUTEFORCE_MAX_N,
        });
    }
    let (_, x, y) = lifted(mu0, mu1)?;
    let costs = cost_matrix(&x, &y);
    let mut best = f64::INFINITY;
    for_each_permutation(n as usize, |p| {
        best = best.min(permutation_cost(&costs, p));
    });
    Ok((best / n as f64).max(0.0).sqrt())
}

/// `W_∞`: the smallest achievable maximal displacement over all plans.
pub fn w_infinity(mu0: &DiscreteMeasure, mu1: &DiscreteMeasure) -> Result<f64> {
    check_dims(mu0, mu1)?;
    let n = common_denominator(mu0, mu1, MAX_DENOMINATOR)?;
    if n as usize > BOTTLENECK_MAX_N {
        return Err(Error::TooLarge {
            what: "bottleneck matching",
            size: n as usize,
            limit: BOTTLENECK_MAX_N,
        });
    }
    let (_, x, y) = lifted(mu0, mu1)?;
    Ok(assignment::bottleneck_value(&cost_matrix(&x, &y)).sqrt())
}

/// Plain `W₂` distance.
pub fn w2(mu0: &DiscreteMeasure, mu1: &DiscreteMeasure) -> Result<f64> {
    Ok(w2_exact(mu0, mu1)?.distance)
}
