use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::VelocityField;
use crate::error::{Error, Result};
use crate::linalg::{dist2, dot, for_each_permutation, sub};
use crate::measures::{common_denominator, expand, expansion_owner, Coupling, DiscreteMeasure, MAX_DENOMINATOR};
use crate::transport::w2_exact;

/// A gap above this counts as a violation.
pub const GAP_TOLERANCE: f64 = 1e-9;
/// Largest common denominator for [`CheckMode::Exhaustive`].
pub const EXHAUSTIVE_MAX_N: usize = 8;
/// Default number of draws for [`CheckMode::Sampled`].
pub const DEFAULT_SAMPLES: usize = 200;

/// How [`total_dissipativity_check`] explores the couplings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckMode {
    /// All `N!` permutation couplings (`N ≤ 8`).
    Exhaustive,
    /// `k` seeded uniformly random permutation couplings.
    Sampled { k: usize, seed: u64 },
    /// The worst permutation coupling found as a max-weight assignment.
    Assignment,
}

/// Outcome of [`total_dissipativity_check`].
#[derive(Clone, Debug)]
pub struct DissipativityReport {
    pub pass: bool,
    pub worst_gap: f64,
    /// The coupling attaining `worst_gap`, reported on failure.
    pub witness: Option<Coupling>,
    pub couplings_checked: usize,
}

/// `∫⟨f(x,μ₀) − f(y,μ₁), x − y⟩ − λ|x − y|² dγ` on the plan from [`w2_exact`].
pub fn metric_dissipativity_gap(
    f: &VelocityField,
    mu0: &DiscreteMeasure,
    mu1: &DiscreteMeasure,
    lambda: f64,
) -> Result<f64> {
    let plan = w2_exact(mu0, mu1)?.plan;
    coupling_gap(f, &plan, lambda)
}

/// The dissipativity integrand integrated against an arbitrary coupling.
pub fn coupling_gap(f: &VelocityField, gamma: &Coupling, lambda: f64) -> Result<f64> {
    let (mu0, mu1) = (gamma.source(), gamma.target());
    let v0 = f.eval_atoms(mu0)?;
    let v1 = f.eval_atoms(mu1)?;
    let n = gamma.denominator() as f64;
    let mut gap = 0.0;
    for (i, j, m) in gamma.support() {
        let (x, y) = (&mu0.atoms()[i].x, &mu1.atoms()[j].x);
        gap += m as f64 / n * (dot(&sub(&v0[i], &v1[j]), &sub(x, y)) - lambda * dist2(x, y));
    }
    Ok(gap)
}

/// Checks the dissipativity inequality over every coupling of `μ₀` and `μ₁`.
///
/// The gap is linear in the coupling and the couplings with integer masses
/// over the common denominator `N` form a scaled Birkhoff polytope, so the
/// maximum is attained at a permutation coupling of the lifted particle
/// lists. The modes differ only in how those permutations are explored.
pub fn total_dissipativity_check(
    f: &VelocityField,
    mu0: &DiscreteMeasure,
    mu1: &DiscreteMeasure,
    lambda: f64,
    mode: CheckMode,
) -> Result<DissipativityReport> {
    if mu0.dim() != mu1.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu0.dim(),
            found: mu1.dim(),
        });
    }
    let n = common_denominator(mu0, mu1, MAX_DENOMINATOR)?;
    let nu = n as usize;
    if mode == CheckMode::Exhaustive && nu > EXHAUSTIVE_MAX_N {
        return Err(Error::TooLarge {
            what: "exhaustive coupling enumeration",
            size: nu,
            limit: EXHAUSTIVE_MAX_N,
        });
    }
    let g = gap_matrix(f, mu0, mu1, n, lambda)?;
    let value = |perm: &[usize]| perm.iter().enumerate().map(|(a, &b)| g[a][b]).sum::<f64>() / n as f64;

    let mut best = (f64::NEG_INFINITY, Vec::new());
    let mut checked = 0usize;
    match mode {
        CheckMode::Exhaustive => for_each_permutation(nu, |p| {
            checked += 1;
            let v = value(p);
            if v > best.0 {
                best = (v, p.to_vec());
            }
        }),
        CheckMode::Sampled { k, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut perm: Vec<usize> = (0..nu).collect();
            for _ in 0..k.max(1) {
                perm.shuffle(&mut rng);
                checked += 1;
                let v = value(&perm);
                if v > best.0 {
                    best = (v, perm.clone());
                }
            }
        }
        CheckMode::Assignment => {
            let neg: Vec<Vec<f64>> = g.iter().map(|r| r.iter().map(|v| -v).collect()).collect();
            let p = crate::transport::min_cost_assignment(&neg);
            checked = 1;
            best = (value(&p), p);
        }
    }

    let (worst, perm) = best;
    let pass = worst <= GAP_TOLERANCE;
    let witness = if pass {
        None
    } else {
        let x = expand(mu0, n)?;
        let y = expand(mu1, n)?;
        Some(Coupling::from_permutation(&x, &y, &perm)?)
    };
    Ok(DissipativityReport {
        pass,
        worst_gap: worst,
        witness,
        couplings_checked: checked,
    })
}

/// `G[a][b] = ⟨f₀(x_a) − f₁(y_b), x_a − y_b⟩ − λ|x_a − y_b|²` over lifted particles.
fn gap_matrix(
    f: &VelocityField,
    mu0: &DiscreteMeasure,
    mu1: &DiscreteMeasure,
    n: u64,
    lambda: f64,
) -> Result<Vec<Vec<f64>>> {
    let v0 = f.eval_atoms(mu0)?;
    let v1 = f.eval_atoms(mu1)?;
    let o0 = expansion_owner(mu0, n);
    let o1 = expansion_owner(mu1, n);
    Ok(o0
        .iter()
        .map(|&i| {
            let x = &mu0.atoms()[i].x;
            o1.iter()
                .map(|&j| {
                    let y = &mu1.atoms()[j].x;
                    dot(&sub(&v0[i], &v1[j]), &sub(x, y)) - lambda * dist2(x, y)
                })
                .collect()
        })
        .collect())
}
