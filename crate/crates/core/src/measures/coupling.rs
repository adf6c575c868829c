use serde::{Deserialize, Serialize};

use super::{iota_project, DiscreteMeasure, LagrangianVector, Point};
use crate::error::{Error, Result};
use crate::linalg::{dist2, lex_cmp, lcm};

/// A transport plan between two discrete measures with integer masses over a
/// common denominator `N`: `γ = (1/N) Σ_{ij} m_ij δ_{(x_i, y_j)}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Coupling {
    source: DiscreteMeasure,
    target: DiscreteMeasure,
    denominator: u64,
    mass: Vec<Vec<u64>>,
}

impl Coupling {
    /// Validates marginals: row `i` must sum to `mult_i · N / den(source)`,
    /// column `j` to `mult_j · N / den(target)`, with `N = Σ m_ij`.
    pub fn new(source: DiscreteMeasure, target: DiscreteMeasure, mass: Vec<Vec<u64>>) -> Result<Self> {
        if source.dim() != target.dim() {
            return Err(Error::DimensionMismatch {
                expected: source.dim(),
                found: target.dim(),
            });
        }
        if mass.len() != source.support_len()
            || mass.iter().any(|r| r.len() != target.support_len())
        {
            return Err(Error::InvalidCoupling(format!(
                "mass matrix must be {}x{}",
                source.support_len(),
                target.support_len()
            )));
        }
        let n: u64 = mass.iter().flatten().sum();
        if n == 0 || !n.is_multiple_of(source.denominator()) || !n.is_multiple_of(target.denominator()) {
            return Err(Error::InvalidCoupling(format!(
                "total mass {n} is not a common multiple of {} and {}",
                source.denominator(),
                target.denominator()
            )));
        }
        let (ks, kt) = (n / source.denominator(), n / target.denominator());
        for (i, row) in mass.iter().enumerate() {
            let s: u64 = row.iter().sum();
            if s != source.atoms()[i].mult * ks {
                return Err(Error::InvalidCoupling(format!("row {i} sums to {s}")));
            }
        }
        for j in 0..target.support_len() {
            let s: u64 = mass.iter().map(|r| r[j]).sum();
            if s != target.atoms()[j].mult * kt {
                return Err(Error::InvalidCoupling(format!("column {j} sums to {s}")));
            }
        }
        Ok(Self {
            source,
            target,
            denominator: n,
            mass,
        })
    }

    /// The coupling `(x, x)_♯ μ`.
    pub fn identity(mu: &DiscreteMeasure) -> Self {
        let k = mu.support_len();
        let mass = (0..k)
            .map(|i| (0..k).map(|j| if i == j { mu.atoms()[i].mult } else { 0 }).collect())
            .collect();
        Self {
            source: mu.clone(),
            target: mu.clone(),
            denominator: mu.denominator(),
            mass,
        }
    }

    /// The coupling `ι²(X, Y) = (1/N) Σ_n δ_{(x_n, y_{σ(n)})}`.
    pub fn from_permutation(x: &LagrangianVector, y: &LagrangianVector, perm: &[usize]) -> Result<Self> {
        if x.len() != y.len() || perm.len() != x.len() {
            return Err(Error::InvalidCoupling("particle counts differ".into()));
        }
        let pairs: Vec<(&[f64], &[f64])> =
            (0..x.len()).map(|n| (x.particle(n), y.particle(perm[n]))).collect();
        Self::from_particle_pairs(x.dim(), &pairs)
    }

    /// Coupling of the empirical measure of particle pairs.
    pub fn from_particle_pairs(dim: usize, pairs: &[(&[f64], &[f64])]) -> Result<Self> {
        let n = pairs.len();
        let xs = LagrangianVector::new(dim, pairs.iter().flat_map(|p| p.0.iter().copied()).collect())?;
        let ys = LagrangianVector::new(dim, pairs.iter().flat_map(|p| p.1.iter().copied()).collect())?;
        let source = iota_project(&xs, 0.0);
        let target = iota_project(&ys, 0.0);
        let mut mass = vec![vec![0u64; target.support_len()]; source.support_len()];
        for (x, y) in pairs {
            let i = locate(&source, x);
            let j = locate(&target, y);
            mass[i][j] += 1;
        }
        debug_assert_eq!(mass.iter().flatten().sum::<u64>(), n as u64);
        Self::new(source, target, mass)
    }

    pub fn source(&self) -> &DiscreteMeasure {
        &self.source
    }

    pub fn target(&self) -> &DiscreteMeasure {
        &self.target
    }

    pub fn denominator(&self) -> u64 {
        self.denominator
    }

    pub fn mass(&self) -> &[Vec<u64>] {
        &self.mass
    }

    /// `(i, j, m_ij)` for every pair carrying mass.
    pub fn support(&self) -> impl Iterator<Item = (usize, usize, u64)> + '_ {
        self.mass.iter().enumerate().flat_map(|(i, row)| {
            row.iter()
                .enumerate()
                .filter(|(_, &m)| m > 0)
                .map(move |(j, &m)| (i, j, m))
        })
    }

    /// Support as pairs of locations.
    pub fn support_points(&self) -> Vec<(&[f64], &[f64])> {
        self.support()
            .map(|(i, j, _)| (self.source.atoms()[i].x.coords(), self.target.atoms()[j].x.coords()))
            .collect()
    }

    /// `∫|x - y|² dγ`.
    pub fn cost(&self) -> f64 {
        let n = self.denominator as f64;
        self.support()
            .map(|(i, j, m)| {
                m as f64 / n * dist2(&self.source.atoms()[i].x, &self.target.atoms()[j].x)
            })
            .sum()
    }

    /// `max |y - x|` over the support.
    pub fn max_displacement(&self) -> f64 {
        self.support()
            .map(|(i, j, _)| dist2(&self.source.atoms()[i].x, &self.target.atoms()[j].x))
            .fold(0.0, f64::max)
            .sqrt()
    }

    /// Particle lists `(X, Y)` of length `N` with `γ = ι²(X, Y)`, in support order.
    pub fn lift(&self) -> (LagrangianVector, LagrangianVector) {
        let dim = self.source.dim();
        let mut xs = Vec::with_capacity(self.denominator as usize * dim);
        let mut ys = Vec::with_capacity(self.denominator as usize * dim);
        for (i, j, m) in self.support() {
            for _ in 0..m {
                xs.extend_from_slice(&self.source.atoms()[i].x);
                ys.extend_from_slice(&self.target.atoms()[j].x);
            }
        }
        (
            LagrangianVector::from_flat_unchecked(dim, xs),
            LagrangianVector::from_flat_unchecked(dim, ys),
        )
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let repr: CouplingRepr = serde_json::from_str(s)?;
        Self::try_from(repr)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&CouplingRepr::from(self)).expect("coupling serializes")
    }
}

/// Common denominator of two measures, rejected above `bound`.
pub fn common_denominator(a: &DiscreteMeasure, b: &DiscreteMeasure, bound: u64) -> Result<u64> {
    let l = lcm(a.denominator(), b.denominator()).unwrap_or(u64::MAX);
    if l > bound {
        return Err(Error::DenominatorOverflow { lcm: l, bound });
    }
    Ok(l)
}

pub(crate) fn locate(mu: &DiscreteMeasure, x: &[f64]) -> usize {
    mu.atoms()
        .binary_search_by(|a| lex_cmp(&a.x, x))
        .or_else(|_| {
            // -0.0 / 0.0 compare equal but sort apart
            mu.atoms().iter().position(|a| a.x.coords() == x).ok_or(())
        })
        .expect("location is an atom")
}

/// Point-displacement interpolation `μ_t = ((1-t)x + t y)_♯ γ`.
///
/// Atoms landing on the same location are merged exactly; the result has
/// denominator `γ.denominator()`.
pub fn interpolate(gamma: &Coupling, t: f64) -> Result<DiscreteMeasure> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::OutOfRange {
            name: "t",
            value: t,
            expected: "0 <= t <= 1",
        });
    }
    let dim = gamma.source.dim();
    let atoms = gamma.support().map(|(i, j, m)| {
        let x = &gamma.source.atoms()[i].x;
        let y = &gamma.target.atoms()[j].x;
        let p = if t == 0.0 {
            x.to_vec()
        } else if t == 1.0 {
            y.to_vec()
        } else {
            // x + t(y - x) keeps stationary pairs exactly in place
            x.iter().zip(y.iter()).map(|(a, b)| a + t * (b - a)).collect()
        };
        (Point::from_vec_unchecked(p), m)
    });
    DiscreteMeasure::new(dim, atoms)
}

#[derive(Serialize, Deserialize)]
struct CouplingRepr {
    source: serde_json::Value,
    target: serde_json::Value,
    mass: Vec<Vec<u64>>,
}

/// Raw measure as written in a file; atom order may be arbitrary.
#[derive(Deserialize)]
struct RawMeasure {
    dim: usize,
    denominator: u64,
    atoms: Vec<RawAtom>,
}

#[derive(Deserialize)]
struct RawAtom {
    x: Vec<f64>,
    mult: u64,
}

impl TryFrom<CouplingRepr> for Coupling {
    type Error = Error;

    /// Rows and columns of `mass` follow the atom order of the file; they are
    /// remapped to the canonical atom order (merging repeated atoms).
    fn try_from(r: CouplingRepr) -> Result<Self> {
        let rs: RawMeasure = serde_json::from_value(r.source)?;
        let rt: RawMeasure = serde_json::from_value(r.target)?;
        let to_measure = |raw: &RawMeasure| -> Result<DiscreteMeasure> {
            let m = DiscreteMeasure::new(
                raw.dim,
                raw.atoms
                    .iter()
                    .map(|a| Ok((Point::new(a.x.clone())?, a.mult)))
                    .collect::<Result<Vec<_>>>()?,
            )?;
            if m.denominator() != raw.denominator {
                return Err(Error::InvalidMeasure(format!(
                    "denominator {} does not match total multiplicity {}",
                    raw.denominator,
                    m.denominator()
                )));
            }
            Ok(m)
        };
        let source = to_measure(&rs)?;
        let target = to_measure(&rt)?;
        if r.mass.len() != rs.atoms.len() || r.mass.iter().any(|row| row.len() != rt.atoms.len()) {
            return Err(Error::InvalidCoupling("mass matrix shape does not match atoms".into()));
        }
        let mut mass = vec![vec![0u64; target.support_len()]; source.support_len()];
        for (ri, row) in r.mass.iter().enumerate() {
            let i = locate(&source, &rs.atoms[ri].x);
            for (rj, &m) in row.iter().enumerate() {
                let j = locate(&target, &rt.atoms[rj].x);
                mass[i][j] += m;
            }
        }
        Coupling::new(source, target, mass)
    }
}

impl From<&Coupling> for CouplingRepr {
    fn from(c: &Coupling) -> Self {
        CouplingRepr {
            source: serde_json::to_value(&c.source).expect("measure serializes"),
            target: serde_json::to_value(&c.target).expect("measure serializes"),
            mass: c.mass.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pt;

    fn crossing() -> Coupling {
        let x = LagrangianVector::from_points(&[pt![0, 0], pt![1, 1]]).unwrap();
        let y = LagrangianVector::from_points(&[pt![2, 0], pt![1, -1]]).unwrap();
        Coupling::from_permutation(&x, &y, &[0, 1]).unwrap()
    }

    #[test]
    fn marginals_are_validated() {
        let a = DiscreteMeasure::uniform(vec![pt![0], pt![1]]).unwrap();
        let b = DiscreteMeasure::dirac(pt![5]);
        assert!(Coupling::new(a.clone(), b.clone(), vec![vec![1], vec![1]]).is_ok());
        assert!(Coupling::new(a.clone(), b.clone(), vec![vec![2], vec![1]]).is_err());
        assert!(Coupling::new(a, b, vec![vec![1]]).is_err());
    }

    #[test]
    fn interpolation_endpoints_and_midpoint() {
        let d0 = DiscreteMeasure::dirac(pt![0]);
        let d2 = DiscreteMeasure::dirac(pt![2]);
        let g = Coupling::new(d0.clone(), d2.clone(), vec![vec![1]]).unwrap();
        assert_eq!(interpolate(&g, 0.5).unwrap(), DiscreteMeasure::dirac(pt![1]));
        assert!(interpolate(&g, 0.0).unwrap().same_measure(&d0));
        assert!(interpolate(&g, 1.0).unwrap().same_measure(&d2));
        assert!(interpolate(&g, 1.5).is_err());
    }

    #[test]
    fn crossing_coupling_collides_at_half() {
        let mid = interpolate(&crossing(), 0.5).unwrap();
        assert_eq!(mid.support_len(), 1);
        assert_eq!(mid.atoms()[0].x.coords(), &[1.0, 0.0]);
        assert_eq!(mid.atoms()[0].mult, 2);
    }

    #[test]
    fn identity_interpolation_is_constant() {
        let mu = DiscreteMeasure::new(2, vec![(pt![0, 1], 2), (pt![3, -1], 1)]).unwrap();
        let id = Coupling::identity(&mu);
        for t in [0.0, 0.3, 0.77, 1.0] {
            assert_eq!(interpolate(&id, t).unwrap(), mu);
        }
        assert_eq!(id.cost(), 0.0);
    }

    #[test]
    fn json_remaps_to_canonical_order() {
        let s = r#"{
            "source": {"dim":1,"denominator":2,"atoms":[{"x":[1.0],"mult":1},{"x":[0.0],"mult":1}]},
            "target": {"dim":1,"denominator":2,"atoms":[{"x":[5.0],"mult":1},{"x":[3.0],"mult":1}]},
            "mass": [[1,0],[0,1]]
        }"#;
        let c = Coupling::from_json_str(s).unwrap();
        // file pairs 1 -> 5 and 0 -> 3
        let pts = c.support_points();
        assert!(pts.contains(&(&[1.0][..], &[5.0][..])));
        assert!(pts.contains(&(&[0.0][..], &[3.0][..])));
        let back = Coupling::from_json_str(&c.to_json_string()).unwrap();
        assert_eq!(back, c);
    }
}
