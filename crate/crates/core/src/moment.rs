//! Moment-matching residual `R(d) = V(X) w - target`, its analytic Jacobian
//! and the penalty-augmented system used by the Gauss-Newton solver.

use nalgebra::{DMatrix, DVector};

use crate::basis::BasisFamily;
use crate::domain::{penalties_with_jacobian, DomainSpec, PenaltyJacobian};
use crate::error::{Error, Result};
use crate::index_set::MultiIndexSet;

/// Flattened decision variables: `n` node blocks of `dim` coordinates
/// followed by `n` weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionVector {
    n: usize,
    dim: usize,
    data: Vec<f64>,
}

impl DecisionVector {
    pub fn new(dim: usize, coords: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let n = weights.len();
        if coords.len() != n * dim {
            return Err(Error::DimensionMismatch {
                expected: n * dim,
                found: coords.len(),
            });
        }
        let mut data = coords;
        data.extend(weights);
        Ok(DecisionVector { n, dim, data })
    }

    pub fn from_nodes(nodes: &[Vec<f64>], weights: &[f64]) -> Result<Self> {
        let dim = nodes.first().map_or(1, Vec::len);
        if let Some(bad) = nodes.iter().find(|x| x.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        Self::new(dim, nodes.concat(), weights.to_vec())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Total number of decision variables, `(d + 1) n`.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn coords(&self) -> &[f64] {
        &self.data[..self.n * self.dim]
    }

    pub fn weights(&self) -> &[f64] {
        &self.data[self.n * self.dim..]
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        let k = self.n * self.dim;
        &mut self.data[k..]
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn nodes(&self) -> Vec<Vec<f64>> {
        self.coords().chunks_exact(self.dim).map(<[f64]>::to_vec).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scale_weights(&mut self, factor: f64) {
        for w in self.weights_mut() {
            *w *= factor;
        }
    }
}

/// The moment system for a basis, an index set and a domain.
#[derive(Debug, Clone)]
pub struct MomentSystem {
    basis: BasisFamily,
    index_set: MultiIndexSet,
    domain: DomainSpec,
    target0: f64,
    supports: Vec<Vec<(usize, usize)>>,
    max_deg: Vec<usize>,
}

/// Per-node univariate values `p_m(x_j)` divided by `p_0`, with derivatives.
struct NodeTables {
    ratio: Vec<Vec<f64>>,
    dratio: Vec<Vec<f64>>,
}

impl MomentSystem {
    /// Target of the zero moment is `1/pi_0`.
    pub fn new(basis: BasisFamily, index_set: MultiIndexSet, domain: DomainSpec) -> Result<Self> {
        let target0 = 1.0 / basis.pi0();
        Self::with_target(basis, index_set, domain, target0)
    }

    /// Uses `target0` as the zero-moment target (the in-iteration scaling
    /// sets it to `|Lambda|`).
    pub fn with_target(
        basis: BasisFamily,
        index_set: MultiIndexSet,
        domain: DomainSpec,
        target0: f64,
    ) -> Result<Self> {
        let d = basis.dim();
        for (what, got) in [("index set", index_set.dim()), ("domain", domain.dim())] {
            if got != d {
                let _ = what;
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: got,
                });
            }
        }
        if !index_set.contains_zero() {
            return Err(Error::InvalidArgument(
                "index set must contain the zero index".into(),
            ));
        }
        let max_deg: Vec<usize> = index_set
            .max_degree_per_axis()
            .iter()
            .map(|&e| e as usize)
            .collect();
        for (j, &m) in max_deg.iter().enumerate() {
            let lim = basis.table(j).max_degree();
            if m > lim {
                return Err(Error::DegreeOutOfRange { degree: m, max: lim });
            }
        }
        let supports = index_set
            .iter()
            .map(|a| a.support().into_iter().map(|(j, e)| (j, e as usize)).collect())
            .collect();
        Ok(MomentSystem {
            basis,
            index_set,
            domain,
            target0,
            supports,
            max_deg,
        })
    }

    pub fn basis(&self) -> &BasisFamily {
        &self.basis
    }

    pub fn index_set(&self) -> &MultiIndexSet {
        &self.index_set
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// `M = |Lambda|`.
    pub fn num_moments(&self) -> usize {
        self.index_set.len()
    }

    pub fn target0(&self) -> f64 {
        self.target0
    }

    pub fn set_target0(&mut self, t: f64) {
        self.target0 = t;
    }

    fn tables(&self, x: &[f64], with_derivatives: bool) -> NodeTables {
        let d = self.dim();
        let mut ratio = Vec::with_capacity(d);
        let mut dratio = Vec::with_capacity(if with_derivatives { d } else { 0 });
        for j in 0..d {
            let m = self.max_deg[j];
            let t = self.basis.table(j);
            let mut v = vec![0.0; m + 1];
            let p0 = t.p0();
            if with_derivatives {
                let mut g = vec![0.0; m + 1];
                t.eval_all_with_derivative(m, x[j], &mut v, &mut g);
                g.iter_mut().for_each(|e| *e /= p0);
                dratio.push(g);
            } else {
                t.eval_all(m, x[j], &mut v);
            }
            v.iter_mut().for_each(|e| *e /= p0);
            ratio.push(v);
        }
        NodeTables { ratio, dratio }
    }

    fn check(&self, dv: &DecisionVector) -> Result<()> {
        if dv.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: dv.dim(),
            });
        }
        Ok(())
    }

    /// `M x n` matrix with entries `pi_{alpha(k)}(x_j)`.
    pub fn vandermonde(&self, nodes: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        let m = self.num_moments();
        let mut v = DMatrix::zeros(m, nodes.len());
        let pi0 = self.basis.pi0();
        for (j, x) in nodes.iter().enumerate() {
            if x.len() != self.dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.dim(),
                    found: x.len(),
                });
            }
            let t = self.tables(x, false);
            for (k, supp) in self.supports.iter().enumerate() {
                v[(k, j)] = pi0 * supp.iter().map(|&(a, e)| t.ratio[a][e]).product::<f64>();
            }
        }
        Ok(v)
    }

    /// `V(X) w - target`.
    pub fn residual(&self, dv: &DecisionVector) -> Result<DVector<f64>> {
        self.check(dv)?;
        let v = self.vandermonde(&dv.nodes())?;
        let mut r = v * DVector::from_column_slice(dv.weights());
        r[0] -= self.target0;
        Ok(r)
    }

    /// Residual and `M x (d + 1) n` Jacobian in one pass.
    pub fn residual_and_jacobian(&self, dv: &DecisionVector) -> Result<(DVector<f64>, DMatrix<f64>)> {
        self.check(dv)?;
        let (m, n, d) = (self.num_moments(), dv.n(), self.dim());
        let pi0 = self.basis.pi0();
        let mut jac = DMatrix::zeros(m, (d + 1) * n);
        let mut r = DVector::zeros(m);
        r[0] = -self.target0;
        for i in 0..n {
            let x = dv.node(i);
            let w = dv.weights()[i];
            let t = self.tables(x, true);
            for (k, supp) in self.supports.iter().enumerate() {
                let val = pi0 * supp.iter().map(|&(a, e)| t.ratio[a][e]).product::<f64>();
                jac[(k, n * d + i)] = val;
                r[k] += val * w;
                for (s, &(a, e)) in supp.iter().enumerate() {
                    let mut g = pi0 * t.dratio[a][e];
                    for (s2, &(b, f)) in supp.iter().enumerate() {
                        if s2 != s {
                            g *= t.ratio[b][f];
                        }
                    }
                    jac[(k, i * d + a)] = g * w;
                }
            }
        }
        Ok((r, jac))
    }

    pub fn jacobian(&self, dv: &DecisionVector) -> Result<DMatrix<f64>> {
        Ok(self.residual_and_jacobian(dv)?.1)
    }

    /// Penalty values and diagonal Jacobian for the decision vector.
    pub fn penalties(&self, dv: &DecisionVector) -> (Vec<f64>, PenaltyJacobian) {
        penalties_with_jacobian(&self.domain, dv.coords(), dv.weights())
    }

    /// Stacked `[R; c P]` and `[J; c dP/dd]`.
    pub fn augmented(&self, dv: &DecisionVector, c: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let (r, j) = self.residual_and_jacobian(dv)?;
        let (p, pj) = self.penalties(dv);
        Ok(stack_augmented(&r, &j, &p, &pj.diag, c))
    }
}

pub(crate) fn stack_augmented(
    r: &DVector<f64>,
    j: &DMatrix<f64>,
    p: &[f64],
    pdiag: &[f64],
    c: f64,
) -> (DVector<f64>, DMatrix<f64>) {
    let (m, cols) = j.shape();
    let rows = m + p.len();
    let mut ra = DVector::zeros(rows);
    ra.rows_mut(0, m).copy_from(r);
    for (k, &pk) in p.iter().enumerate() {
        ra[m + k] = c * pk;
    }
    let mut ja = DMatrix::zeros(rows, cols);
    ja.view_mut((0, 0), (m, cols)).copy_from(j);
    for (k, &g) in pdiag.iter().enumerate() {
        ja[(m + k, k)] = c * g;
    }
    (ra, ja)
}

/// Default large floor on the penalty constant.
pub const DEFAULT_PENALTY_A: f64 = 1e3;

/// `c = max(A, 1/||R||)`, or `A` when the residual vanishes.
pub fn penalty_constant(r_norm: f64, a: f64) -> f64 {
    if r_norm <= 0.0 {
        a
    } else {
        a.max(1.0 / r_norm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::Family;
    use crate::index_set::total_degree;
    use crate::sparse_grid::gauss_rule_for;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn system(d: usize, r: u32, family: Family) -> MomentSystem {
        let basis = BasisFamily::isotropic(family, d, r as usize).unwrap();
        MomentSystem::new(
            basis,
            total_degree(d, r),
            DomainSpec::for_family(d, family),
        )
        .unwrap()
    }

    fn random_dv(rng: &mut ChaCha8Rng, d: usize, n: usize, lo: f64, hi: f64) -> DecisionVector {
        let coords = (0..n * d).map(|_| rng.random_range(-1.1..1.1)).collect();
        let weights = (0..n).map(|_| rng.random_range(lo..hi)).collect();
        DecisionVector::new(d, coords, weights).unwrap()
    }

    #[test]
    fn vandermonde_examples() {
        let s = system(1, 1, Family::Legendre);
        let v = s.vandermonde(&[vec![0.5]]).unwrap();
        assert_eq!(v[(0, 0)], 1.0);
        assert_relative_eq!(v[(1, 0)], 0.8660254037844386, epsilon = 1e-15);

        let s = system(2, 3, Family::Legendre);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let nodes: Vec<Vec<f64>> = (0..4)
            .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let v = s.vandermonde(&nodes).unwrap();
        let t = s.basis().table(0);
        for (k, a) in s.index_set().iter().enumerate() {
            assert_eq!(v[(k, 0)] * 0.0, 0.0);
            for (j, x) in nodes.iter().enumerate() {
                let e = a.exponents();
                let want = t.eval(e[0] as usize, x[0]).unwrap() * t.eval(e[1] as usize, x[1]).unwrap();
                assert_relative_eq!(v[(k, j)], want, epsilon = 1e-14);
            }
        }
        // Zero-index row is pi_0 everywhere.
        assert!(v.row(0).iter().all(|&e| e == 1.0));
    }

    #[test]
    fn residual_examples() {
        let s = system(1, 1, Family::Legendre);
        let r = s
            .residual(&DecisionVector::new(1, vec![0.0], vec![1.0]).unwrap())
            .unwrap();
        assert_eq!(r.as_slice(), &[0.0, 0.0]);
        let r = s
            .residual(&DecisionVector::new(1, vec![0.5], vec![1.0]).unwrap())
            .unwrap();
        assert_eq!(r[0], 0.0);
        assert_relative_eq!(r[1], 0.8660254037844386, epsilon = 1e-15);
    }

    #[test]
    fn embedded_gauss_rule_is_exact() {
        for n in 1..=8u32 {
            let s = system(1, 2 * n - 1, Family::Legendre);
            let g = gauss_rule_for(Family::Legendre, n as usize).unwrap();
            let dv = DecisionVector::new(1, g.nodes.clone(), g.weights.clone()).unwrap();
            assert!(s.residual(&dv).unwrap().norm() <= 1e-12);
        }
    }

    #[test]
    fn jacobian_structure() {
        let s = system(2, 3, Family::Legendre);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let dv = random_dv(&mut rng, 2, 5, 0.1, 1.0);
        let j = s.jacobian(&dv).unwrap();
        let v = s.vandermonde(&dv.nodes()).unwrap();
        for i in 0..5 {
            assert_eq!(j.column(10 + i), v.column(i));
        }
        for c in 0..10 {
            assert_eq!(j[(0, c)], 0.0);
        }
    }

    #[test]
    fn jacobian_vs_finite_differences() {
        for family in [Family::Legendre, Family::HermiteProbabilist] {
            let s = system(2, 3, family);
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let dv = random_dv(&mut rng, 2, 5, 0.1, 1.0);
            let j = s.jacobian(&dv).unwrap();
            let h = 1e-6;
            for c in 0..dv.len() {
                let mut p = dv.clone();
                let mut m = dv.clone();
                p.as_mut_slice()[c] += h;
                m.as_mut_slice()[c] -= h;
                let fd = (s.residual(&p).unwrap() - s.residual(&m).unwrap()) / (2.0 * h);
                for k in 0..s.num_moments() {
                    assert!((fd[k] - j[(k, c)]).abs() <= 1e-6, "{family} ({k},{c})");
                }
            }
        }
    }

    #[test]
    fn directional_derivative_consistency() {
        let s = system(3, 4, Family::Legendre);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let dv = random_dv(&mut rng, 3, 7, 0.1, 1.0);
        let j = s.jacobian(&dv).unwrap();
        for _ in 0..5 {
            let v = DVector::from_fn(dv.len(), |_, _| rng.random_range(-1.0..1.0));
            let h = 1e-6;
            let mut p = dv.clone();
            let mut m = dv.clone();
            for k in 0..dv.len() {
                p.as_mut_slice()[k] += h * v[k];
                m.as_mut_slice()[k] -= h * v[k];
            }
            let fd = (s.residual(&p).unwrap() - s.residual(&m).unwrap()) / (2.0 * h);
            let an = &j * &v;
            assert!((fd - &an).norm() <= 1e-6 * an.norm().max(1.0));
        }
    }

    #[test]
    fn augmented_system() {
        let s = system(2, 2, Family::Legendre);
        let feasible = DecisionVector::new(2, vec![0.1, 0.2, -0.3, 0.4], vec![0.5, 0.5]).unwrap();
        let (ra, _) = s.augmented(&feasible, 1e3).unwrap();
        let r = s.residual(&feasible).unwrap();
        assert_eq!(ra.rows(0, 6), r.rows(0, 6));
        assert!(ra.rows(6, 6).iter().all(|&v| v == 0.0));

        let bad = DecisionVector::new(2, vec![1.3, 0.2, -0.3, -1.6], vec![0.5, -0.2]).unwrap();
        let c = 1234.5;
        let (ra, ja) = s.augmented(&bad, c).unwrap();
        let r = s.residual(&bad).unwrap();
        let p2 = crate::domain::total_penalty_sq(s.domain(), bad.coords(), bad.weights());
        assert_relative_eq!(ra.norm_squared() - r.norm_squared(), c * c * p2, max_relative = 1e-12);

        let h = 1e-7;
        for k in 0..bad.len() {
            let mut p = bad.clone();
            let mut m = bad.clone();
            p.as_mut_slice()[k] += h;
            m.as_mut_slice()[k] -= h;
            let fd = (s.augmented(&p, c).unwrap().0 - s.augmented(&m, c).unwrap().0) / (2.0 * h);
            for row in 0..ra.len() {
                let tol = 1e-6 * ja[(row, k)].abs().max(1.0);
                assert!((fd[row] - ja[(row, k)]).abs() <= tol, "({row},{k})");
            }
        }
    }

    #[test]
    fn penalty_constant_branches() {
        assert_eq!(penalty_constant(10.0, 1e3), 1e3);
        assert_relative_eq!(penalty_constant(1e-5, 1e3), 1e5, max_relative = 1e-12);
        assert_eq!(penalty_constant(1e-3, 1e3), 1e3);
        assert_eq!(penalty_constant(0.0, 1e3), 1e3);
    }

    #[test]
    fn rejects_set_without_zero() {
        let basis = BasisFamily::isotropic(Family::Legendre, 1, 3).unwrap();
        let set = crate::index_set::MultiIndexSet::from_indices(
            1,
            vec![crate::index_set::MultiIndex::new(vec![1])],
        )
        .unwrap();
        assert!(MomentSystem::new(basis, set, DomainSpec::reference_box(1, Family::Legendre)).is_err());
    }
}
