//! Univariate Gauss rules, tensor products and Smolyak sparse grids.
//!
//! These serve as the baseline the designed rules are compared against and
//! as the reference integrator used by the verifier.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::basis::{standard_recurrence, Family, RecurrenceTable};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnivariateRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub family: Family,
}

impl UnivariateRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// `n`-point Gauss rule of a recurrence, by the Jacobi-matrix eigenproblem.
///
/// Eigenvalues are polished with Newton steps on `p_n` and weights are taken
/// as Christoffel numbers `1 / sum_k p_k(x)^2`, which keeps small weights
/// accurate to full relative precision. Symmetric recurrences (`a_m = 0`)
/// produce exactly symmetric nodes.
pub fn gauss_rule(rec: &RecurrenceTable, n: usize) -> Result<UnivariateRule> {
    if n == 0 {
        return Err(Error::InvalidArgument("Gauss rule needs n >= 1".into()));
    }
    if rec.len() < n + 1 {
        return Err(Error::DegreeOutOfRange {
            degree: n,
            max: rec.len().saturating_sub(1),
        });
    }
    let jacobi = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            rec.a()[i]
        } else if i + 1 == j {
            rec.sqrt_b()[j]
        } else if j + 1 == i {
            rec.sqrt_b()[i]
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::try_new(jacobi, f64::EPSILON, 0)
        .ok_or_else(|| Error::EigenFailure("Jacobi matrix eigen-solve did not converge".into()))?;
    let mut nodes: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    if nodes.iter().any(|x| !x.is_finite()) {
        return Err(Error::EigenFailure("non-finite eigenvalue".into()));
    }
    nodes.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));

    let mut val = vec![0.0; n + 1];
    let mut der = vec![0.0; n + 1];
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            eval_upto(rec, n, *x, &mut val, &mut der);
            if der[n] == 0.0 {
                break;
            }
            let dx = val[n] / der[n];
            *x -= dx;
            if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                break;
            }
        }
    }

    let symmetric = rec.a()[..n].iter().all(|&a| a == 0.0);
    if symmetric {
        for q in 0..n / 2 {
            let m = 0.5 * (nodes[n - 1 - q] - nodes[q]);
            nodes[q] = -m;
            nodes[n - 1 - q] = m;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
    }

    let mut weights: Vec<f64> = nodes
        .iter()
        .map(|&x| {
            eval_upto(rec, n, x, &mut val, &mut der);
            1.0 / val[..n].iter().map(|p| p * p).sum::<f64>()
        })
        .collect();
    if symmetric {
        for q in 0..n / 2 {
            let w = 0.5 * (weights[q] + weights[n - 1 - q]);
            weights[q] = w;
            weights[n - 1 - q] = w;
        }
    }
    Ok(UnivariateRule {
        nodes,
        weights,
        family: rec.family,
    })
}

fn eval_upto(rec: &RecurrenceTable, n: usize, x: f64, val: &mut [f64], der: &mut [f64]) {
    rec.eval_all_with_derivative(n, x, val, der);
}

/// Gauss rule for a classical family.
pub fn gauss_rule_for(family: Family, n: usize) -> Result<UnivariateRule> {
    gauss_rule(&standard_recurrence(family, n)?, n)
}

/// `n`-point Clenshaw-Curtis rule for the uniform probability weight on
/// `[-1, 1]` (nested for `n = 2^l + 1`). Weights are obtained by matching the
/// Legendre moments of degree `< n`.
pub fn clenshaw_curtis(n: usize) -> Result<UnivariateRule> {
    if n == 0 {
        return Err(Error::InvalidArgument("rule needs n >= 1".into()));
    }
    if n == 1 {
        return Ok(UnivariateRule {
            nodes: vec![0.0],
            weights: vec![1.0],
            family: Family::Legendre,
        });
    }
    let mut nodes: Vec<f64> = (0..n)
        .map(|j| -(std::f64::consts::PI * j as f64 / (n - 1) as f64).cos())
        .collect();
    for q in 0..n / 2 {
        let m = 0.5 * (nodes[n - 1 - q] - nodes[q]);
        nodes[q] = -m;
        nodes[n - 1 - q] = m;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    let rec = standard_recurrence(Family::Legendre, n)?;
    let mut v = DMatrix::zeros(n, n);
    let mut buf = vec![0.0; n];
    for (j, &x) in nodes.iter().enumerate() {
        rec.eval_all(n - 1, x, &mut buf);
        for m in 0..n {
            v[(m, j)] = buf[m];
        }
    }
    let mut rhs = DVector::zeros(n);
    rhs[0] = 1.0;
    let w = v
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::LinearSolve("Clenshaw-Curtis moment system".into()))?;
    Ok(UnivariateRule {
        nodes,
        weights: w.iter().copied().collect(),
        family: Family::Legendre,
    })
}

/// Full tensor product of univariate rules with product weights.
pub fn tensor_rule(rules: &[UnivariateRule]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut nodes = vec![Vec::with_capacity(rules.len())];
    let mut weights = vec![1.0];
    for r in rules {
        let mut nn = Vec::with_capacity(nodes.len() * r.len());
        let mut nw = Vec::with_capacity(nodes.len() * r.len());
        for (p, &pw) in nodes.iter().zip(&weights) {
            for (&x, &w) in r.nodes.iter().zip(&r.weights) {
                let mut q = p.clone();
                q.push(x);
                nn.push(q);
                nw.push(pw * w);
            }
        }
        nodes = nn;
        weights = nw;
    }
    (nodes, weights)
}

/// Level-to-size map for the univariate rules of a sparse grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Growth {
    /// Non-nested Gauss rules with `n_i = i` points.
    GaussLinear,
    /// Nested Clenshaw-Curtis: `n_1 = 1`, `n_i = 2^{i-1} + 1`.
    ClenshawCurtis,
}

impl Growth {
    pub fn points(self, level: usize) -> usize {
        match self {
            Growth::GaussLinear => level,
            Growth::ClenshawCurtis if level == 1 => 1,
            Growth::ClenshawCurtis => (1usize << (level - 1)) + 1,
        }
    }

    fn rule(self, family: Family, level: usize) -> Result<UnivariateRule> {
        match self {
            Growth::GaussLinear => gauss_rule_for(family, level),
            Growth::ClenshawCurtis => {
                if family != Family::Legendre {
                    return Err(Error::InvalidArgument(
                        "Clenshaw-Curtis growth is provided for the uniform weight only".into(),
                    ));
                }
                clenshaw_curtis(self.points(level))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseGridRule {
    pub dim: usize,
    pub level: usize,
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl SparseGridRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn negative_weights(&self) -> usize {
        self.weights.iter().filter(|&&w| w < 0.0).count()
    }

    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, &w)| w * f(x))
            .sum()
    }
}

/// Level-`k` Smolyak rule in `d` dimensions via the combination formula
/// `sum_{r=max(0,k-d)}^{k-1} (-1)^{k-1-r} C(d-1, k-1-r) sum_{|i| = d+r} X_{i_1} x ... x X_{i_d}`.
///
/// Coincident nodes are merged (bitwise for Gauss growth, to `1e-12` for
/// nested growth) and their weights summed; nodes whose merged weight
/// cancels to zero are kept, since they are still evaluation points of the
/// construction.
pub fn smolyak(d: usize, k: usize, family: Family, growth: Growth) -> Result<SparseGridRule> {
    if d == 0 || k == 0 {
        return Err(Error::InvalidArgument("Smolyak needs d >= 1 and k >= 1".into()));
    }
    let rules: Vec<UnivariateRule> = (1..=k)
        .map(|l| growth.rule(family, l))
        .collect::<Result<_>>()?;
    let tol = match growth {
        Growth::GaussLinear => 0.0,
        Growth::ClenshawCurtis => 1e-12,
    };
    let mut merged: BTreeMap<Vec<i64>, (Vec<f64>, f64)> = BTreeMap::new();
    let rmin = k.saturating_sub(d);
    for r in rmin..k {
        let sign = if (k - 1 - r).is_multiple_of(2) { 1.0 } else { -1.0 };
        let coeff = sign * binom_f(d - 1, k - 1 - r);
        for levels in compositions(d, d + r) {
            let factors: Vec<UnivariateRule> =
                levels.iter().map(|&l| rules[l - 1].clone()).collect();
            let (nodes, weights) = tensor_rule(&factors);
            for (x, w) in nodes.into_iter().zip(weights) {
                let key = node_key(&x, tol);
                merged
                    .entry(key)
                    .and_modify(|e| e.1 += coeff * w)
                    .or_insert((x, coeff * w));
            }
        }
    }
    let (nodes, weights) = merged.into_values().unzip();
    Ok(SparseGridRule {
        dim: d,
        level: k,
        nodes,
        weights,
    })
}

fn node_key(x: &[f64], tol: f64) -> Vec<i64> {
    if tol == 0.0 {
        x.iter().map(|v| (v + 0.0).to_bits() as i64).collect()
    } else {
        x.iter().map(|v| (v / tol).round() as i64).collect()
    }
}

fn binom_f(n: usize, k: usize) -> f64 {
    crate::index_set::binomial(n as u64, k as u64) as f64
}

/// All `i in N^d` with entries >= 1 summing to `total`.
fn compositions(d: usize, total: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![1; d];
    fn rec(cur: &mut Vec<usize>, axis: usize, left: usize, out: &mut Vec<Vec<usize>>) {
        let d = cur.len();
        if axis == d - 1 {
            cur[axis] = left;
            out.push(cur.clone());
            return;
        }
        let slots_after = d - 1 - axis;
        for v in 1..=(left - slots_after) {
            cur[axis] = v;
            rec(cur, axis + 1, left - v, out);
        }
    }
    if total >= d {
        rec(&mut cur, 0, total, &mut out);
    }
    out
}

/// Largest dimension the tensor oracle accepts.
pub const ORACLE_MAX_DIM: usize = 8;
/// Largest tensor grid the oracle will build.
pub const ORACLE_MAX_POINTS: usize = 20_000_000;

/// Tensor-Gauss reference integral of `f` against the probability weight of
/// `family`, exact for polynomials of per-axis degree `<= degree_budget`.
pub fn oracle_integrate(
    f: impl Fn(&[f64]) -> f64,
    d: usize,
    degree_budget: usize,
    family: Family,
) -> Result<f64> {
    if d > ORACLE_MAX_DIM {
        return Err(Error::OracleRefused(format!(
            "d = {d} exceeds tensorization limit {ORACLE_MAX_DIM}; use analytic moments"
        )));
    }
    let per_axis = (degree_budget + 1).div_ceil(2).max(1);
    let total = (per_axis as f64).powi(d as i32);
    if total > ORACLE_MAX_POINTS as f64 {
        return Err(Error::OracleRefused(format!(
            "tensor grid of {per_axis}^{d} points is too large"
        )));
    }
    let g = gauss_rule_for(family, per_axis)?;
    let mut idx = vec![0usize; d];
    let mut x = vec![0.0; d];
    let mut acc = 0.0;
    loop {
        let mut w = 1.0;
        for j in 0..d {
            x[j] = g.nodes[idx[j]];
            w *= g.weights[idx[j]];
        }
        acc += w * f(&x);
        let mut j = 0;
        loop {
            if j == d {
                return Ok(acc);
            }
            idx[j] += 1;
            if idx[j] < per_axis {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}
