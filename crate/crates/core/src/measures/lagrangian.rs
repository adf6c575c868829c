use super::{DiscreteMeasure, Point};
use crate::error::{Error, Result};
use crate::linalg::{dist2, lex_cmp, DisjointSets};

/// An ordered list of `N` particles in `R^d`, i.e. a point of `(R^d)^N`
/// carrying the normalized inner product `⟨X,Y⟩ = (1/N) Σ_n ⟨x_n, y_n⟩`.
///
/// With this weighting `|X|` equals the `L²(ι X)` norm of the identity map,
/// and `|X - Y|` bounds `W₂(ι X, ι Y)` from above.
#[derive(Clone, Debug, PartialEq)]
pub struct LagrangianVector {
    dim: usize,
    data: Vec<f64>,
}

impl LagrangianVector {
    /// Flat row-major storage: particle `n` occupies `data[n*dim..(n+1)*dim]`.
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.is_empty() || !data.len().is_multiple_of(dim) {
            return Err(Error::InvalidMeasure(format!(
                "flat length {} is not a positive multiple of dim {dim}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { dim, data })
    }

    pub fn from_points(points: &[Point]) -> Result<Self> {
        let dim = points
            .first()
            .map(Point::dim)
            .ok_or_else(|| Error::InvalidMeasure("empty particle list".into()))?;
        let mut data = Vec::with_capacity(points.len() * dim);
        for p in points {
            if p.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.dim(),
                });
            }
            data.extend_from_slice(p);
        }
        Ok(Self { dim, data })
    }

    pub(crate) fn from_flat_unchecked(dim: usize, data: Vec<f64>) -> Self {
        debug_assert!(dim > 0 && data.len().is_multiple_of(dim));
        Self { dim, data }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            dim: self.dim,
            data: vec![0.0; self.data.len()],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of particles `N`.
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn particle(&self, n: usize) -> &[f64] {
        &self.data[n * self.dim..(n + 1) * self.dim]
    }

    pub fn particle_mut(&mut self, n: usize) -> &mut [f64] {
        &mut self.data[n * self.dim..(n + 1) * self.dim]
    }

    pub fn particles(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn as_flat_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.data
    }

    pub fn to_points(&self) -> Vec<Point> {
        self.particles()
            .map(|p| Point::from_vec_unchecked(p.to_vec()))
            .collect()
    }

    /// Weighted inner product `(1/N) Σ ⟨x_n, y_n⟩`.
    pub fn inner(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.data.len(), other.data.len());
        let s: f64 = self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum();
        s / self.len() as f64
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn dist(&self, other: &Self) -> f64 {
        let s: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        (s / self.len() as f64).sqrt()
    }

    /// `self + s·other`.
    pub fn add_scaled(&self, s: f64, other: &Self) -> Self {
        Self {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + s * b)
                .collect(),
        }
    }

    /// `(self - other)`.
    pub fn sub(&self, other: &Self) -> Self {
        self.add_scaled(-1.0, other)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|a| s * a).collect(),
        }
    }

    /// `(σX)_n = x_{σ(n)}`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for &k in perm {
            data.extend_from_slice(self.particle(k));
        }
        Self {
            dim: self.dim,
            data,
        }
    }

    /// Indices that sort the particles lexicographically (stable).
    pub fn canonical_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| lex_cmp(self.particle(a), self.particle(b)));
        idx
    }

    /// Mean particle position.
    pub fn barycenter(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for p in self.particles() {
            for (mi, pi) in m.iter_mut().zip(p) {
                *mi += pi;
            }
        }
        let n = self.len() as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }
}

/// The empirical projection `ι X = (1/N) Σ δ_{x_n}`.
///
/// Particles closer than `merge_eps` (single linkage) are merged into one
/// atom placed at their mean; with `merge_eps = 0` only exactly equal
/// positions are merged.
pub fn iota_project(x: &LagrangianVector, merge_eps: f64) -> DiscreteMeasure {
    let n = x.len();
    let dim = x.dim();
    let order = x.canonical_order();
    let mut atoms: Vec<(Point, u64)> = Vec::new();
    if merge_eps <= 0.0 {
        let mut i = 0;
        while i < n {
            let mut j = i + 1;
            while j < n && x.particle(order[j]) == x.particle(order[i]) {
                j += 1;
            }
            atoms.push((
                Point::from_vec_unchecked(x.particle(order[i]).to_vec()),
                (j - i) as u64,
            ));
            i = j;
        }
    } else {
        let eps2 = merge_eps * merge_eps;
        // work in canonical order so the grouping and the summation order do
        // not depend on how the particles were labelled
        let mut sets = DisjointSets::new(n);
        for a in 0..n {
            for b in a + 1..n {
                if dist2(x.particle(order[a]), x.particle(order[b])) <= eps2 {
                    sets.union(a, b);
                }
            }
        }
        for group in sets.groups() {
            let mut mean = vec![0.0; dim];
            for &g in &group {
                for (m, v) in mean.iter_mut().zip(x.particle(order[g])) {
                    *m += v;
                }
            }
            let k = group.len() as f64;
            mean.iter_mut().for_each(|m| *m /= k);
            atoms.push((Point::from_vec_unchecked(mean), group.len() as u64));
        }
    }
    DiscreteMeasure::new(dim, atoms).expect("projection of a valid particle vector")
}

/// Lift of `μ` to `N` particles: atom `i` is repeated `(N/denominator)·mult_i`
/// times, atoms in canonical (lexicographic) order.
pub fn expand(mu: &DiscreteMeasure, n: u64) -> Result<LagrangianVector> {
    let scaled = mu.scaled_to(n)?;
    let mut data = Vec::with_capacity(n as usize * mu.dim());
    for a in scaled.atoms() {
        for _ in 0..a.mult {
            data.extend_from_slice(&a.x);
        }
    }
    Ok(LagrangianVector::from_flat_unchecked(mu.dim(), data))
}

/// Atom index of each particle of `expand(mu, n)`.
pub(crate) fn expansion_owner(mu: &DiscreteMeasure, n: u64) -> Vec<usize> {
    let k = n / mu.denominator();
    mu.atoms()
        .iter()
        .enumerate()
        .flat_map(|(i, a)| std::iter::repeat_n(i, (a.mult * k) as usize))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pt;

    fn lv(points: &[f64]) -> LagrangianVector {
        LagrangianVector::new(1, points.to_vec()).unwrap()
    }

    #[test]
    fn projection_collapses_duplicates() {
        let m = iota_project(&lv(&[0.0, 0.0, 1.0]), 0.0);
        assert_eq!(m.denominator(), 3);
        assert_eq!(m.atoms()[0].x.coords(), &[0.0]);
        assert_eq!(m.atoms()[0].mult, 2);
        assert_eq!(m.atoms()[1].mult, 1);

        let m = iota_project(&lv(&[2.0]), 0.0);
        assert_eq!(m, DiscreteMeasure::dirac(pt![2]));
    }

    #[test]
    fn projection_merges_within_eps_at_mean() {
        let m = iota_project(&lv(&[0.0, 1e-12]), 1e-9);
        assert_eq!(m.support_len(), 1);
        assert_eq!(m.atoms()[0].mult, 2);
        assert!((m.atoms()[0].x[0] - 5e-13).abs() < 1e-25);
    }

    #[test]
    fn expand_examples() {
        let mu = DiscreteMeasure::uniform(vec![pt![0], pt![1]]).unwrap();
        assert_eq!(expand(&mu, 4).unwrap().as_flat(), &[0.0, 0.0, 1.0, 1.0]);
        assert_eq!(
            expand(&DiscreteMeasure::dirac(pt![3]), 2).unwrap().as_flat(),
            &[3.0, 3.0]
        );
        let mu = DiscreteMeasure::new(1, vec![(pt![0], 2), (pt![1], 1)]).unwrap();
        assert_eq!(
            expand(&mu, 6).unwrap().as_flat(),
            &[0.0, 0.0, 0.0, 0.0, 1.0, 1.0]
        );
        assert!(matches!(expand(&mu, 4), Err(Error::Divisibility { .. })));
    }

    #[test]
    fn weighted_inner_product() {
        let x = lv(&[1.0, 3.0]);
        assert_eq!(x.norm(), 5.0f64.sqrt());
        assert_eq!(x.inner(&lv(&[1.0, 1.0])), 2.0);
    }
}
