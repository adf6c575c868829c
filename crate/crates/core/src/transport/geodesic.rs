use super::w2_exact;
use crate::error::{Error, Result};
use crate::measures::{interpolate, Coupling};

/// Default relative tolerance of [`geodesic_decompose`].
pub const DEFAULT_GEODESIC_TOL: f64 = 1e-7;

/// Bisection stops once the bracket is shorter than this.
const RESOLUTION: f64 = 1e-12;

/// Breakpoints of a coupling interpolation into constant-speed geodesic pieces.
#[derive(Clone, Debug, PartialEq)]
pub struct GeodesicDecomposition {
    /// `0 = t_0 < t_1 < … < t_K = 1`.
    pub breakpoints: Vec<f64>,
    /// `W₂(μ_{t_{k−1}}, μ_{t_k}) / (t_k − t_{k−1})` for each segment.
    pub segment_speeds: Vec<f64>,
    /// Plan cost `C²`.
    pub cost: f64,
}

impl GeodesicDecomposition {
    pub fn segments(&self) -> usize {
        self.breakpoints.len() - 1
    }
}

/// Splits `t ↦ μ_t = interpolate(γ, t)` into segments on which
/// `W₂(μ_s, μ_t) = |t − s|·C`, with `C² = γ.cost()`.
///
/// Starting from `t_n`, the next breakpoint is the largest `t` found by
/// bisection such that `|W₂²(μ_{t_n}, μ_r) − (r − t_n)²C²| ≤ tol·C²` holds at
/// `r = t` and at the midpoint `r = (t_n + t)/2`.
pub fn geodesic_decompose(gamma: &Coupling, tol: f64) -> Result<GeodesicDecomposition> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::OutOfRange {
            name: "tol",
            value: tol,
            expected: "a positive finite real",
        });
    }
    let c2 = gamma.cost();
    if c2 == 0.0 {
        return Ok(GeodesicDecomposition {
            breakpoints: vec![0.0, 1.0],
            segment_speeds: vec![0.0],
            cost: 0.0,
        });
    }

    let mut breaks = vec![0.0];
    let mut t_n = 0.0;
    while t_n < 1.0 {
        let mu_n = interpolate(gamma, t_n)?;
        let on_geodesic = |r: f64| -> Result<bool> {
            let w = w2_exact(&mu_n, &interpolate(gamma, r)?)?.cost;
            Ok((w - (r - t_n).powi(2) * c2).abs() <= tol * c2)
        };
        let pred = |t: f64| -> Result<bool> { Ok(on_geodesic(t)? && on_geodesic(0.5 * (t_n + t))?) };

        let next = if pred(1.0)? {
            1.0
        } else {
            let (mut lo, mut hi) = (t_n, 1.0);
            while hi - lo > RESOLUTION {
                let mid = 0.5 * (lo + hi);
                if pred(mid)? {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            if lo <= t_n {
                return Err(Error::BisectionStalled { lo, hi });
            }
            lo
        };
        breaks.push(next);
        t_n = next;
    }

    let mut speeds = Vec::with_capacity(breaks.len() - 1);
    for w in breaks.windows(2) {
        let d = w2_exact(&interpolate(gamma, w[0])?, &interpolate(gamma, w[1])?)?.distance;
        speeds.push(d / (w[1] - w[0]));
    }
    Ok(GeodesicDecomposition {
        breakpoints: breaks,
        segment_speeds: speeds,
        cost: c2,
    })
}
