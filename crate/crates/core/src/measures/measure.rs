use serde::{Deserialize, Serialize};

use super::Point;
use crate::error::{Error, Result};
use crate::linalg::{dist2, gcd, lex_cmp, norm2};

/// An atom of a discrete measure: a location and an integer multiplicity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub x: Point,
    pub mult: u64,
}

/// A finitely supported probability measure with rational weights
/// `mult_i / denominator`.
///
/// Atoms are kept pairwise distinct and sorted lexicographically, so two
/// measures built from the same data in any order compare equal. Note that
/// the denominator is not reduced: `½(δ₀+δ₁)` over 2 and over 4 are different
/// values of this type but the same measure, see [`DiscreteMeasure::same_measure`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureRepr", into = "MeasureRepr")]
pub struct DiscreteMeasure {
    dim: usize,
    denominator: u64,
    atoms: Vec<Atom>,
}

/// Summary statistics of a discrete measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureStats {
    pub second_moment: f64,
    pub mean: Point,
    pub diameter: f64,
    pub support_cardinality: usize,
}

impl DiscreteMeasure {
    /// Builds a measure from `(location, multiplicity)` pairs. Duplicate
    /// locations are merged by summing multiplicities; the denominator is the
    /// total multiplicity.
    pub fn new(dim: usize, atoms: impl IntoIterator<Item = (Point, u64)>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidMeasure("dimension must be >= 1".into()));
        }
        let mut raw: Vec<(Point, u64)> = Vec::new();
        for (x, mult) in atoms {
            if x.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: x.dim(),
                });
            }
            if mult == 0 {
                return Err(Error::InvalidMeasure("multiplicities must be >= 1".into()));
            }
            raw.push((x, mult));
        }
        if raw.is_empty() {
            return Err(Error::InvalidMeasure("measure needs at least one atom".into()));
        }
        raw.sort_by(|a, b| lex_cmp(&a.0, &b.0));
        let mut merged: Vec<Atom> = Vec::with_capacity(raw.len());
        let mut denominator: u64 = 0;
        for (x, mult) in raw {
            denominator = denominator
                .checked_add(mult)
                .ok_or_else(|| Error::InvalidMeasure("multiplicity overflow".into()))?;
            match merged.last_mut() {
                Some(last) if last.x.coords() == x.coords() => last.mult += mult,
                _ => merged.push(Atom { x, mult }),
            }
        }
        Ok(Self {
            dim,
            denominator,
            atoms: merged,
        })
    }

    /// Uniform empirical measure `(1/N) Σ δ_{p_n}`.
    pub fn uniform(points: Vec<Point>) -> Result<Self> {
        let dim = points
            .first()
            .map(Point::dim)
            .ok_or_else(|| Error::InvalidMeasure("measure needs at least one atom".into()))?;
        Self::new(dim, points.into_iter().map(|p| (p, 1)))
    }

    pub fn dirac(x: Point) -> Self {
        let dim = x.dim();
        Self {
            dim,
            denominator: 1,
            atoms: vec![Atom { x, mult: 1 }],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn denominator(&self) -> u64 {
        self.denominator
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// Number of distinct atoms.
    pub fn support_len(&self) -> usize {
        self.atoms.len()
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.atoms[i].mult as f64 / self.denominator as f64
    }

    /// Iterator over `(location, weight)`.
    pub fn weighted(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        let n = self.denominator as f64;
        self.atoms.iter().map(move |a| (a.x.coords(), a.mult as f64 / n))
    }

    /// Same measure with every multiplicity multiplied so that the
    /// denominator becomes `n`.
    pub fn scaled_to(&self, n: u64) -> Result<Self> {
        if n == 0 || !n.is_multiple_of(self.denominator) {
            return Err(Error::Divisibility {
                denominator: self.denominator,
                target: n,
            });
        }
        let k = n / self.denominator;
        Ok(Self {
            dim: self.dim,
            denominator: n,
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom {
                    x: a.x.clone(),
                    mult: a.mult * k,
                })
                .collect(),
        })
    }

    /// Same measure over the smallest possible denominator.
    pub fn reduced(&self) -> Self {
        let g = self
            .atoms
            .iter()
            .fold(self.denominator, |g, a| gcd(g, a.mult));
        Self {
            dim: self.dim,
            denominator: self.denominator / g,
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom {
                    x: a.x.clone(),
                    mult: a.mult / g,
                })
                .collect(),
        }
    }

    /// Equality as measures, ignoring how the weights are represented.
    pub fn same_measure(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.atoms.len() == other.atoms.len()
            && self.atoms.iter().zip(&other.atoms).all(|(a, b)| {
                a.x.coords() == b.x.coords()
                    && (a.mult as u128) * (other.denominator as u128)
                        == (b.mult as u128) * (self.denominator as u128)
            })
    }

    pub fn mean(&self) -> Point {
        let mut m = vec![0.0; self.dim];
        for (x, w) in self.weighted() {
            for (mi, xi) in m.iter_mut().zip(x) {
                *mi += w * xi;
            }
        }
        Point::from_vec_unchecked(m)
    }

    /// `∫|x|² dμ`.
    pub fn second_moment(&self) -> f64 {
        self.weighted().map(|(x, w)| w * norm2(x)).sum()
    }

    /// `∫∫|x-y|² dμ(x)dμ(y)`.
    pub fn pairwise_moment(&self) -> f64 {
        let mut s = 0.0;
        for (x, wx) in self.weighted() {
            for (y, wy) in self.weighted() {
                s += wx * wy * dist2(x, y);
            }
        }
        s
    }

    /// Largest distance between two atoms (0 for a Dirac mass).
    pub fn diameter(&self) -> f64 {
        let mut d2: f64 = 0.0;
        for (i, a) in self.atoms.iter().enumerate() {
            for b in &self.atoms[i + 1..] {
                d2 = d2.max(dist2(&a.x, &b.x));
            }
        }
        d2.sqrt()
    }

    /// Smallest distance between two distinct atoms (`+∞` for a Dirac mass).
    pub fn min_separation(&self) -> f64 {
        let mut d2 = f64::INFINITY;
        for (i, a) in self.atoms.iter().enumerate() {
            for b in &self.atoms[i + 1..] {
                d2 = d2.min(dist2(&a.x, &b.x));
            }
        }
        d2.sqrt()
    }

    pub fn stats(&self) -> MeasureStats {
        MeasureStats {
            second_moment: self.second_moment(),
            mean: self.mean(),
            diameter: self.diameter(),
            support_cardinality: self.atoms.len(),
        }
    }

    /// Push-forward through a map of the atom locations (atoms that land on
    /// the same point are merged).
    pub fn pushforward(&self, mut map: impl FnMut(&[f64]) -> Vec<f64>) -> Result<Self> {
        let atoms = self
            .atoms
            .iter()
            .map(|a| Ok((Point::new(map(&a.x))?, a.mult)))
            .collect::<Result<Vec<_>>>()?;
        let dim = atoms[0].0.dim();
        Self::new(dim, atoms)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("measure serializes")
    }
}

/// `measure_stats` as a free function.
pub fn measure_stats(mu: &DiscreteMeasure) -> MeasureStats {
    mu.stats()
}

/// On-disk form: `{"dim": d, "denominator": N, "atoms": [{"x": [...], "mult": k}]}`.
#[derive(Serialize, Deserialize)]
struct MeasureRepr {
    dim: usize,
    denominator: u64,
    atoms: Vec<Atom>,
}

impl TryFrom<MeasureRepr> for DiscreteMeasure {
    type Error = Error;

    fn try_from(r: MeasureRepr) -> Result<Self> {
        let m = DiscreteMeasure::new(r.dim, r.atoms.into_iter().map(|a| (a.x, a.mult)))?;
        if m.denominator != r.denominator {
            return Err(Error::InvalidMeasure(format!(
                "denominator {} does not match total multiplicity {}",
                r.denominator, m.denominator
            )));
        }
        Ok(m)
    }
}

impl From<DiscreteMeasure> for MeasureRepr {
    fn from(m: DiscreteMeasure) -> Self {
        MeasureRepr {
            dim: m.dim,
            denominator: m.denominator,
            atoms: m.atoms,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pt;

    #[test]
    fn duplicates_merge_and_sort() {
        let m = DiscreteMeasure::new(1, vec![(pt![1], 1), (pt![0], 1), (pt![1], 2)]).unwrap();
        assert_eq!(m.denominator(), 4);
        assert_eq!(m.atoms().len(), 2);
        assert_eq!(m.atoms()[0].x.coords(), &[0.0]);
        assert_eq!(m.atoms()[1].mult, 3);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(DiscreteMeasure::new(1, vec![(pt![1], 0)]).is_err());
        assert!(DiscreteMeasure::new(2, vec![(pt![1], 1)]).is_err());
        assert!(DiscreteMeasure::new(1, Vec::<(Point, u64)>::new()).is_err());
        assert!(Point::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn stats_examples() {
        let s = DiscreteMeasure::dirac(pt![0]).stats();
        assert_eq!((s.second_moment, s.diameter, s.support_cardinality), (0.0, 0.0, 1));

        let s = DiscreteMeasure::uniform(vec![pt![0], pt![2]]).unwrap().stats();
        assert_eq!(s.second_moment, 2.0);
        assert_eq!(s.mean.coords(), &[1.0]);
        assert_eq!(s.diameter, 2.0);
        assert_eq!(s.support_cardinality, 2);

        let m = DiscreteMeasure::new(1, vec![(pt![0], 1), (pt![3], 2)]).unwrap();
        assert!((m.second_moment() - 6.0).abs() < 1e-15);
    }

    #[test]
    fn json_reader_validates_denominator() {
        let ok = r#"{"dim":1,"denominator":3,"atoms":[{"x":[0.0],"mult":2},{"x":[1.0],"mult":1}]}"#;
        let m = DiscreteMeasure::from_json_str(ok).unwrap();
        assert_eq!(m.denominator(), 3);
        let bad = r#"{"dim":1,"denominator":4,"atoms":[{"x":[0.0],"mult":2},{"x":[1.0],"mult":1}]}"#;
        assert!(DiscreteMeasure::from_json_str(bad).is_err());
        let back = DiscreteMeasure::from_json_str(&m.to_json_string()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn reduced_and_same_measure() {
        let a = DiscreteMeasure::uniform(vec![pt![0], pt![1]]).unwrap();
        let b = a.scaled_to(6).unwrap();
        assert!(a.same_measure(&b));
        assert_eq!(b.reduced(), a);
        assert!(a.scaled_to(3).is_err());
    }
}
