use rand::distributions::{Distribution, Uniform, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{evolve, Driver, FlowConfig, FlowResult, Scheme};
use crate::error::{Error, Result};
use crate::fields::{eval_on_measure, Functional, VelocityField};
use crate::linalg::{dot, sub};
use crate::measures::{expand, iota_project, DiscreteMeasure, Point};
use crate::operators::{resolvent, LagrangianOperator, SolverConfig};
use crate::transport::{has_alternative_optimal_plan, w2, w2_exact};

/// One interior time of an EVI residual computation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EviRow {
    pub t: f64,
    /// Centered difference of `½W₂²(μ_t, ν)`.
    pub derivative: f64,
    /// `Σ γ ⟨f(y, ν), y − x⟩` over the computed optimal plan from `μ_t` to `ν`.
    pub pairing: f64,
    pub w2_squared: f64,
    /// `derivative + pairing − λ W₂²`; the EVI says this is `≤ 0` for the
    /// exact flow.
    pub residual: f64,
    /// The plan was not unique, so `pairing` is one admissible value.
    pub tie: bool,
}

/// EVI residuals of `flow` against the comparison measure `ν`, at every time
/// that has a neighbour on both sides.
pub fn evi_residual(flow: &FlowResult, f: &VelocityField, lambda: f64, nu: &DiscreteMeasure) -> Result<Vec<EviRow>> {
    if flow.len() < 3 {
        return Err(Error::Domain("EVI residual needs at least three flow times".into()));
    }
    let half_sq: Vec<f64> = flow
        .measures
        .iter()
        .map(|m| Ok(0.5 * w2_exact(m, nu)?.cost))
        .collect::<Result<_>>()?;
    let f_nu = f.eval_atoms(nu)?;
    let mut rows = Vec::with_capacity(flow.len() - 2);
    for k in 1..flow.len() - 1 {
        let derivative = (half_sq[k + 1] - half_sq[k - 1]) / (flow.times[k + 1] - flow.times[k - 1]);
        let res = w2_exact(&flow.measures[k], nu)?;
        let plan = &res.plan;
        let den = plan.denominator() as f64;
        let mut pairing = 0.0;
        for (i, j, m) in plan.support() {
            let x = &plan.source().atoms()[i].x;
            let y = &nu.atoms()[j].x;
            pairing += m as f64 / den * dot(&f_nu[j], &sub(y, x));
        }
        rows.push(EviRow {
            t: flow.times[k],
            derivative,
            pairing,
            w2_squared: res.cost,
            residual: derivative + pairing - lambda * res.cost,
            tie: has_alternative_optimal_plan(plan),
        });
    }
    Ok(rows)
}

/// Outcome of [`contraction_check`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContractionReport {
    pub times: Vec<f64>,
    /// `W₂(S_t μ₀, S_t ν₀) / (e^{λt} W₂(μ₀, ν₀))`, or 0 when the initial
    /// distance is below `1e-14`.
    pub ratios: Vec<f64>,
    /// The initial distance was below `1e-14`.
    pub guarded: bool,
    pub pass: bool,
}

/// Checks `W₂(S_t μ₀, S_t ν₀) ≤ e^{λt} W₂(μ₀, ν₀)` up to `1 + tol` on `t_grid`.
#[allow(clippy::too_many_arguments)]
pub fn contraction_check(
    driver: &Driver,
    mu0: &DiscreteMeasure,
    nu0: &DiscreteMeasure,
    lambda: f64,
    t_grid: &[f64],
    scheme: Scheme,
    tol: f64,
    cfg: &FlowConfig,
) -> Result<ContractionReport> {
    let d0 = w2(mu0, nu0)?;
    let guarded = d0 < 1e-14;
    let t_max = t_grid.iter().cloned().fold(0.0, f64::max);
    let fa = evolve(driver, mu0, scheme, t_max, cfg)?;
    let fb = evolve(driver, nu0, scheme, t_max, cfg)?;
    let mut ratios = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let (a, b) = match (fa.index_of(t), fb.index_of(t)) {
            (Some(i), Some(j)) => (fa.measures[i].clone(), fb.measures[j].clone()),
            // off the common grid: run to t directly
            _ => (
                evolve(driver, mu0, scheme, t, cfg)?.last().clone(),
                evolve(driver, nu0, scheme, t, cfg)?.last().clone(),
            ),
        };
        ratios.push(if guarded { 0.0 } else { w2(&a, &b)? / ((lambda * t).exp() * d0) });
    }
    let pass = ratios.iter().all(|r| *r <= 1.0 + tol);
    Ok(ContractionReport {
        times: t_grid.to_vec(),
        ratios,
        guarded,
        pass,
    })
}

/// `ι(J_τ X)` for a lift `X` of `μ`, with `J_τ` the resolvent of `−∂ψ`.
///
/// ```
/// use wflow::fields::{Functional, Kernel};
/// use wflow::flows::jko_step;
/// use wflow::measures::{DiscreteMeasure, Point};
/// use wflow::operators::SolverConfig;
///
/// let phi = Functional::potential(Kernel::Quadratic(1.0)).unwrap();
/// let mu = DiscreteMeasure::dirac(Point::new(vec![3.0]).unwrap());
/// let next = jko_step(&phi, &mu, 0.5, &SolverConfig::default()).unwrap();
/// assert!((next.atoms()[0].x[0] - 2.0).abs() < 1e-10);
/// ```
pub fn jko_step(phi: &Functional, mu: &DiscreteMeasure, tau: f64, cfg: &SolverConfig) -> Result<DiscreteMeasure> {
    let op = LagrangianOperator::from_functional(*phi);
    let x = expand(mu, mu.denominator())?;
    Ok(iota_project(&resolvent(&op, tau, &x, cfg)?, 0.0))
}

/// `(1/2τ) W₂²(μ, ν) + φ(ν)`.
pub fn jko_objective(phi: &Functional, mu: &DiscreteMeasure, nu: &DiscreteMeasure, tau: f64) -> Result<f64> {
    Ok(w2_exact(mu, nu)?.cost / (2.0 * tau) + phi.value(nu))
}

/// One row of an implicit-scheme error table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorRow {
    pub n: usize,
    pub error: f64,
    pub bound: f64,
    pub pass: bool,
}

/// `W₂((J_{t/n})ⁿ μ₀, S_t μ₀)` against `2t‖f[μ₀]‖/√n` for each `n`.
///
/// Without a `reference`, `S_t μ₀` is a fine implicit run with step
/// `min(t/n)·1e-2`. The bound assumes `λ ≤ 0`; positive `λ` is rejected.
pub fn implicit_error_study(
    driver: &Driver,
    mu0: &DiscreteMeasure,
    t: f64,
    n_list: &[usize],
    reference: Option<&DiscreteMeasure>,
    cfg: &FlowConfig,
) -> Result<Vec<ErrorRow>> {
    if driver.lambda() > 0.0 {
        return Err(Error::OutOfRange {
            name: "lambda",
            value: driver.lambda(),
            expected: "lambda <= 0",
        });
    }
    if n_list.is_empty() || n_list.contains(&0) {
        return Err(Error::Domain("n_list must hold positive step counts".into()));
    }
    let reference = match reference {
        Some(r) => r.clone(),
        None => {
            let n_max = *n_list.iter().max().expect("nonempty");
            let tau_ref = t / n_max as f64 * 1e-2;
            evolve(driver, mu0, Scheme::Implicit { tau: tau_ref }, t, cfg)?.last().clone()
        }
    };
    let f0 = eval_on_measure(&driver.field(), mu0)?.norm;
    n_list
        .iter()
        .map(|&n| {
            let approx = evolve(driver, mu0, Scheme::Exponential { n }, t, cfg)?;
            let error = w2(approx.last(), &reference)?;
            let bound = 2.0 * t * f0 / (n as f64).sqrt();
            Ok(ErrorRow {
                n,
                error,
                bound,
                pass: error <= bound,
            })
        })
        .collect()
}

/// One row of a mean-field table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeanFieldRow {
    pub n: usize,
    /// `W₂(μ₀ᴺ, μ₀)`.
    pub initial: f64,
    /// `W₂(S_t μ₀ᴺ, S_t μ₀)`.
    pub final_error: f64,
    /// `e^{λt}·initial + slack`.
    pub bound: f64,
    pub pass: bool,
}

/// Propagates `N`-particle approximations of `μ₀` and compares them with
/// the flow of `μ₀` itself.
#[allow(clippy::too_many_arguments)]
pub fn mean_field_study(
    driver: &Driver,
    mu0: &DiscreteMeasure,
    mut sampler: impl FnMut(usize) -> Result<DiscreteMeasure>,
    n_list: &[usize],
    t: f64,
    lambda: f64,
    scheme: Scheme,
    slack: f64,
    cfg: &FlowConfig,
) -> Result<Vec<MeanFieldRow>> {
    let reference = evolve(driver, mu0, scheme, t, cfg)?;
    let target = reference.last();
    n_list
        .iter()
        .map(|&n| {
            let sample = sampler(n)?;
            let initial = w2(&sample, mu0)?;
            let final_error = w2(evolve(driver, &sample, scheme, t, cfg)?.last(), target)?;
            let bound = (lambda * t).exp() * initial + slack;
            Ok(MeanFieldRow {
                n,
                initial,
                final_error,
                bound,
                pass: final_error <= bound,
            })
        })
        .collect()
}

/// Draws `N` i.i.d. atoms of `μ₀`, each moved by a uniform offset in
/// `[−jitter, jitter]^d`. The draw for a given `N` depends only on `seed`
/// and `N`.
pub fn empirical_sampler(mu0: &DiscreteMeasure, jitter: f64, seed: u64) -> impl Fn(usize) -> Result<DiscreteMeasure> + '_ {
    move |n| {
        if n == 0 {
            return Err(Error::Domain("sample size must be positive".into()));
        }
        if !(jitter >= 0.0 && jitter.is_finite()) {
            return Err(Error::OutOfRange {
                name: "jitter",
                value: jitter,
                expected: "jitter >= 0",
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let pick = WeightedIndex::new(mu0.atoms().iter().map(|a| a.mult)).expect("positive multiplicities");
        let noise = Uniform::new_inclusive(-jitter, jitter);
        let pts = (0..n)
            .map(|_| {
                let x = &mu0.atoms()[pick.sample(&mut rng)].x;
                Point::new(x.iter().map(|v| v + noise.sample(&mut rng)).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        DiscreteMeasure::uniform(pts)
    }
}

/// Qualitative properties of a sticky flow.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct StickyReport {
    pub cardinality_nonincreasing: bool,
    /// `diam_t ≤ e^{λt}·diam_0·(1 + 1e-6)`.
    pub diameter_bound_ok: bool,
    /// `∫∫|x − y|² dμ_t dμ_t ≤ e^{2λt}·(same at 0)`, with the same slack.
    pub moment_bound_ok: bool,
}

impl StickyReport {
    pub fn all(&self) -> bool {
        self.cardinality_nonincreasing && self.diameter_bound_ok && self.moment_bound_ok
    }
}

pub fn sticky_diagnostics(flow: &FlowResult, lambda: f64) -> StickyReport {
    let slack = 1.0 + 1e-6;
    let Some(first) = flow.measures.first() else {
        return StickyReport {
            cardinality_nonincreasing: true,
            diameter_bound_ok: true,
            moment_bound_ok: true,
        };
    };
    let diam0 = first.diameter();
    let mom0 = first.pairwise_moment();
    let cards: Vec<usize> = flow.measures.iter().map(|m| m.support_len()).collect();
    StickyReport {
        cardinality_nonincreasing: cards.windows(2).all(|w| w[1] <= w[0]),
        diameter_bound_ok: flow
            .times
            .iter()
            .zip(&flow.measures)
            .all(|(t, m)| m.diameter() <= (lambda * t).exp() * diam0 * slack),
        moment_bound_ok: flow
            .times
            .iter()
            .zip(&flow.measures)
            .all(|(t, m)| m.pairwise_moment() <= (2.0 * lambda * t).exp() * mom0 * slack),
    }
}
