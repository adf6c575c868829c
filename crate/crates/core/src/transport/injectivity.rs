use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm2, sub};
use crate::measures::Point;

/// Retry cap of [`perturb_for_injectivity`].
pub const PERTURB_MAX_ATTEMPTS: usize = 64;

/// Relative tolerance on `1 − cos²` when testing two vectors for parallelism.
const PARALLEL_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct AlignmentWitness {
    /// `a_j − a_i` for some `i < j`.
    pub direction: Vec<f64>,
    /// `b_j − b_i` parallel to `direction`.
    pub chord: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlignmentResult {
    pub aligned: bool,
    pub witness: Option<AlignmentWitness>,
}

fn check_dim(points: &[&[Point]]) -> Result<usize> {
    let mut dim = None;
    for p in points.iter().flat_map(|s| s.iter()) {
        match dim {
            None => dim = Some(p.dim()),
            Some(d) if d != p.dim() => {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: p.dim(),
                })
            }
            _ => {}
        }
    }
    match dim {
        Some(d) if d < 2 => Err(Error::Domain(format!(
            "chord alignment needs dimension at least 2, got {d}"
        ))),
        Some(d) => Ok(d),
        None => Ok(2),
    }
}

/// Nonzero differences `p_j − p_i`, `i < j`.
fn chords(points: &[Point]) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for j in 0..points.len() {
        for i in 0..j {
            let c = sub(&points[j], &points[i]);
            if norm2(&c) > 0.0 {
                out.push(c);
            }
        }
    }
    out
}

fn parallel(u: &[f64], v: &[f64]) -> bool {
    let (uu, vv, uv) = (norm2(u), norm2(v), dot(u, v));
    uu * vv - uv * uv <= PARALLEL_TOL * uu * vv
}

/// Whether some chord of `b` is parallel to some chord of `a`.
pub fn check_chords_alignment(a: &[Point], b: &[Point]) -> Result<AlignmentResult> {
    check_dim(&[a, b])?;
    let dirs = chords(a);
    for chord in chords(b) {
        if let Some(w) = dirs.iter().find(|w| parallel(w, &chord)) {
            return Ok(AlignmentResult {
                aligned: true,
                witness: Some(AlignmentWitness {
                    direction: w.clone(),
                    chord,
                }),
            });
        }
    }
    Ok(AlignmentResult {
        aligned: false,
        witness: None,
    })
}

/// Component of `v` orthogonal to `w` (or `v` itself when `w` is `None`).
fn reject(v: &[f64], w: Option<&[f64]>) -> Vec<f64> {
    match w {
        None => v.to_vec(),
        Some(w) => {
            let k = dot(v, w) / norm2(w);
            v.iter().zip(w).map(|(a, b)| a - k * b).collect()
        }
    }
}

/// Whether the affine path `c0 + s·e` meets `span(w)` (or `0` when `w` is
/// `None`) for some `s ∈ (0, 1]`.
fn path_hits(c0: &[f64], e: &[f64], w: Option<&[f64]>) -> bool {
    let p = reject(c0, w);
    let q = reject(e, w);
    let (pp, qq) = (norm2(&p), norm2(&q));
    let scale = pp.sqrt() + qq.sqrt();
    if pp.sqrt() <= PARALLEL_TOL * norm2(c0).sqrt() {
        // on the span at s = 0; the path leaves it unless it moves along it
        return qq.sqrt() <= PARALLEL_TOL * scale.max(f64::MIN_POSITIVE);
    }
    if qq == 0.0 {
        return false;
    }
    let s = -dot(&p, &q) / qq;
    let r: Vec<f64> = p.iter().zip(&q).map(|(a, b)| a + s * b).collect();
    s > 0.0 && s <= 1.0 && norm2(&r).sqrt() <= PARALLEL_TOL * scale
}

/// Exact check that every `B(s) = (1−s)B + sB′`, `s ∈ (0, 1]`, has pairwise
/// distinct points and no chord parallel to a chord of `a`.
pub fn s_family_injective(a: &[Point], b: &[Point], b_new: &[Point]) -> Result<bool> {
    check_dim(&[a, b, b_new])?;
    if b.len() != b_new.len() {
        return Err(Error::DimensionMismatch {
            expected: b.len(),
            found: b_new.len(),
        });
    }
    let dirs = chords(a);
    for j in 0..b.len() {
        for i in 0..j {
            let c0 = sub(&b[j], &b[i]);
            let c1 = sub(&b_new[j], &b_new[i]);
            let e = sub(&c1, &c0);
            if norm2(&c1) == 0.0 || path_hits(&c0, &e, None) {
                return Ok(false);
            }
            if dirs.iter().any(|w| path_hits(&c0, &e, Some(w))) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn ball_sample(rng: &mut ChaCha8Rng, dim: usize, radius: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-radius..radius)).collect();
        if norm2(&v) < radius * radius {
            return v;
        }
    }
}

/// Moves each point of `b` by less than `radius` so that the whole segment
/// from `b` to the result avoids chords aligned with `a` (see
/// [`s_family_injective`]). Deterministic for a given `seed`.
pub fn perturb_for_injectivity(a: &[Point], b: &[Point], radius: f64, seed: u64) -> Result<Vec<Point>> {
    let dim = check_dim(&[a, b])?;
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::OutOfRange {
            name: "radius",
            value: radius,
            expected: "a positive finite real",
        });
    }
    for j in 0..b.len() {
        for i in 0..j {
            if b[i] == b[j] {
                return Err(Error::Domain("points to perturb must be pairwise distinct".into()));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..PERTURB_MAX_ATTEMPTS {
        let candidate: Vec<Point> = b
            .iter()
            .map(|p| {
                let d = ball_sample(&mut rng, dim, radius);
                Point::from_vec_unchecked(p.iter().zip(d).map(|(x, dx)| x + dx).collect())
            })
            .collect();
        if s_family_injective(a, b, &candidate)? {
            return Ok(candidate);
        }
    }
    Err(Error::RetryCapExhausted {
        attempts: PERTURB_MAX_ATTEMPTS,
    })
}
