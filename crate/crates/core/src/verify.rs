//! Independent checks of quadrature rules: moment exactness, the
//! perturbation bound, discrete projection and Lebesgue constants.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{BasisFamily, Family};
use crate::design::QuadratureRule;
use crate::error::{Error, Result};
use crate::index_set::{MultiIndex, MultiIndexSet};
use crate::sparse_grid::oracle_integrate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactnessReport {
    /// `sum_q w_q pi_alpha(x_q) - delta_{alpha 0} / pi_0` per index.
    pub errors: Vec<(MultiIndex, f64)>,
    pub max_error: f64,
    /// Euclidean norm of the error vector.
    pub epsilon: f64,
    pub min_weight: f64,
    pub max_weight: f64,
    /// Indices of nodes with non-positive weight.
    pub negative_weights: Vec<usize>,
}

impl ExactnessReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_error <= tol && self.negative_weights.is_empty()
    }

    /// JSON with errors keyed by the comma-joined exponent tuple.
    pub fn to_json(&self) -> serde_json::Value {
        let errors: BTreeMap<String, f64> = self
            .errors
            .iter()
            .map(|(a, e)| {
                let key: Vec<String> = a.exponents().iter().map(u32::to_string).collect();
                (key.join(","), *e)
            })
            .collect();
        serde_json::json!({
            "max_error": self.max_error,
            "epsilon": self.epsilon,
            "min_weight": self.min_weight,
            "max_weight": self.max_weight,
            "negative_weights": self.negative_weights,
            "errors": errors,
        })
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, &self.to_json())?;
        Ok(())
    }
}

fn check_dims(rule: &QuadratureRule, index_set: &MultiIndexSet, basis: &BasisFamily) -> Result<()> {
    for found in [index_set.dim(), basis.dim()] {
        if found != rule.dim {
            return Err(Error::DimensionMismatch {
                expected: rule.dim,
                found,
            });
        }
    }
    if let Some(bad) = rule.nodes.iter().find(|x| x.len() != rule.dim) {
        return Err(Error::DimensionMismatch {
            expected: rule.dim,
            found: bad.len(),
        });
    }
    if rule.nodes.len() != rule.weights.len() {
        return Err(Error::InvalidArgument(format!(
            "{} nodes but {} weights",
            rule.nodes.len(),
            rule.weights.len()
        )));
    }
    Ok(())
}

/// Moment errors of `rule` on every `pi_alpha`, evaluated one basis
/// function at a time from the recurrence (a separate path from the
/// Vandermonde assembly used by the solver).
pub fn exactness(rule: &QuadratureRule, index_set: &MultiIndexSet, basis: &BasisFamily) -> Result<ExactnessReport> {
    check_dims(rule, index_set, basis)?;
    let nodes = rule.reference_nodes();
    let target0 = 1.0 / basis.pi0();
    let mut errors = Vec::with_capacity(index_set.len());
    for a in index_set.iter() {
        let mut s = 0.0;
        for (x, &w) in nodes.iter().zip(&rule.weights) {
            s += w * basis.eval(a, x)?;
        }
        if a.is_zero() {
            s -= target0;
        }
        errors.push((a.clone(), s));
    }
    let max_error = errors.iter().map(|(_, e)| e.abs()).fold(0.0, f64::max);
    let epsilon = errors.iter().map(|(_, e)| e * e).sum::<f64>().sqrt();
    let negative_weights = rule
        .weights
        .iter()
        .enumerate()
        .filter(|(_, &w)| !(w > 0.0))
        .map(|(i, _)| i)
        .collect();
    Ok(ExactnessReport {
        errors,
        max_error,
        epsilon,
        min_weight: rule.weights.iter().copied().fold(f64::INFINITY, f64::min),
        max_weight: rule.weights.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        negative_weights,
    })
}

/// Closed-form `E[x^k]` under the probability weight of a classical family.
pub fn monomial_moment(family: Family, k: u32) -> Option<f64> {
    if k % 2 == 1 {
        return Some(0.0);
    }
    let k = k as u64;
    match family {
        Family::Legendre => Some(1.0 / (k + 1) as f64),
        // (k-1)!!
        Family::HermiteProbabilist => Some((1..k).step_by(2).map(|v| v as f64).product()),
        // C(k, k/2) / 2^k
        Family::ChebyshevFirstKind => {
            let mut v = 1.0;
            for i in 0..k / 2 {
                v *= (k - i) as f64 / (i + 1) as f64 / 4.0;
            }
            Some(v)
        }
        Family::Custom => None,
    }
}

/// Largest error of the rule on raw monomials `x^alpha`, `alpha` in the set
/// with `|alpha| <= max_degree`, against closed-form moments. Returns `None`
/// for custom families.
pub fn monomial_cross_check(rule: &QuadratureRule, index_set: &MultiIndexSet, max_degree: u32) -> Option<f64> {
    let nodes = rule.reference_nodes();
    let mut worst: f64 = 0.0;
    for a in index_set.iter().filter(|a| a.degree() <= max_degree) {
        let mut exact = 1.0;
        for &e in a.exponents() {
            exact *= monomial_moment(rule.family, e)?;
        }
        let q: f64 = nodes
            .iter()
            .zip(&rule.weights)
            .map(|(x, &w)| w * x.iter().zip(a.exponents()).map(|(v, &e)| v.powi(e as i32)).product::<f64>())
            .sum();
        worst = worst.max((q - exact).abs());
    }
    Some(worst)
}

/// Oracle `L^2` projection coefficients of `f` onto the basis over `index_set`.
pub fn oracle_projection(
    f: &dyn Fn(&[f64]) -> f64,
    index_set: &MultiIndexSet,
    basis: &BasisFamily,
    budget: usize,
) -> Result<Vec<f64>> {
    index_set
        .iter()
        .map(|a| {
            oracle_integrate(
                |x| f(x) * basis.eval(a, x).unwrap_or(f64::NAN),
                basis.dim(),
                budget,
                basis.family(),
            )
        })
        .collect()
}

/// Both sides of the perturbation bound
/// `|I(f) - Q(f)| <= eps ||f|| + max_j |f(x_j) - p(x_j)|`, with `p` the
/// oracle projection of `f` onto the span of the index set. `f` takes
/// reference coordinates. The default projection budget is
/// `2 * max_degree + 6`.
pub fn stability_gap(
    rule: &QuadratureRule,
    f: &dyn Fn(&[f64]) -> f64,
    index_set: &MultiIndexSet,
    basis: &BasisFamily,
    projection_budget: Option<usize>,
) -> Result<(f64, f64)> {
    check_dims(rule, index_set, basis)?;
    let d = rule.dim;
    let family = basis.family();
    let max_deg = index_set.max_degree_per_axis().into_iter().max().unwrap_or(0) as usize;
    let budget = projection_budget.unwrap_or(2 * max_deg + 6);
    let exact = oracle_integrate(f, d, budget, family)?;
    let norm = oracle_integrate(|x| f(x).powi(2), d, budget, family)?.sqrt();
    let coef = oracle_projection(f, index_set, basis, budget)?;
    let eps = exactness(rule, index_set, basis)?.epsilon;
    let nodes = rule.reference_nodes();
    let q: f64 = nodes.iter().zip(&rule.weights).map(|(x, &w)| w * f(x)).sum();
    let mut dev: f64 = 0.0;
    for x in &nodes {
        let mut p = 0.0;
        for (a, c) in index_set.iter().zip(&coef) {
            p += c * basis.eval(a, x)?;
        }
        dev = dev.max((f(x) - p).abs());
    }
    Ok(((exact - q).abs(), eps * norm + dev))
}

/// `f_alpha = sum_q pi_alpha(x_q) f(x_q) w_q` for every `alpha` in `theta`.
pub fn discrete_projection(
    f: &dyn Fn(&[f64]) -> f64,
    rule: &QuadratureRule,
    theta: &MultiIndexSet,
    basis: &BasisFamily,
) -> Result<Vec<(MultiIndex, f64)>> {
    check_dims(rule, theta, basis)?;
    let nodes = rule.reference_nodes();
    let fx: Vec<f64> = nodes.iter().map(|x| f(x)).collect();
    theta
        .iter()
        .map(|a| {
            let mut s = 0.0;
            for ((x, &w), &v) in nodes.iter().zip(&rule.weights).zip(&fx) {
                s += basis.eval(a, x)? * v * w;
            }
            Ok((a.clone(), s))
        })
        .collect()
}

/// Default grid resolution per axis for Lebesgue constants.
pub const LEBESGUE_GRID: usize = 200;

/// Equispaced grid over `[lo, hi]` including both ends.
fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Interpolation data for the cardinal functions of `nodes` in the span of
/// `index_set`.
struct Cardinal {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    indices: Vec<MultiIndex>,
}

impl Cardinal {
    fn new(nodes: &[Vec<f64>], index_set: &MultiIndexSet, basis: &BasisFamily) -> Result<Self> {
        let m = index_set.len();
        if nodes.len() != m {
            return Err(Error::InvalidArgument(format!(
                "interpolation needs |nodes| = |index set| ({} vs {m})",
                nodes.len()
            )));
        }
        let mut v = DMatrix::zeros(m, m);
        for (k, a) in index_set.iter().enumerate() {
            for (j, x) in nodes.iter().enumerate() {
                v[(k, j)] = basis.eval(a, x)?;
            }
        }
        let sv = v.clone().singular_values();
        let smax = sv.max();
        let smin = sv.min();
        if !(smin > 1e-13 * smax) {
            return Err(Error::NotUnisolvent);
        }
        Ok(Cardinal {
            lu: v.lu(),
            indices: index_set.indices().to_vec(),
        })
    }

    /// `sum_j |l_j(x)|`.
    fn lebesgue_function(&self, basis: &BasisFamily, x: &[f64]) -> Result<f64> {
        let rhs = DVector::from_iterator(
            self.indices.len(),
            self.indices.iter().map(|a| basis.eval(a, x).unwrap_or(f64::NAN)),
        );
        let l = self.lu.solve(&rhs).ok_or(Error::NotUnisolvent)?;
        Ok(l.iter().map(|v| v.abs()).sum())
    }
}

/// Grid samples of the Lebesgue function, row-major over the tensor grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LebesgueSamples {
    pub axes: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub constant: f64,
}

/// Lebesgue function `sum_j |l_j|` of interpolation at `nodes` from the span
/// of `index_set`, sampled on a tensor grid of the bounded support
/// (`d <= 2`).
pub fn lebesgue_samples(
    nodes: &[Vec<f64>],
    index_set: &MultiIndexSet,
    basis: &BasisFamily,
    grid_resolution: usize,
) -> Result<LebesgueSamples> {
    let d = index_set.dim();
    if d > 2 {
        return Err(Error::InvalidArgument(format!(
            "Lebesgue constants are computed for d <= 2 only (got d = {d})"
        )));
    }
    if grid_resolution == 0 {
        return Err(Error::InvalidArgument("grid resolution must be positive".into()));
    }
    let axes: Vec<Vec<f64>> = (0..d)
        .map(|j| {
            let (lo, hi) = basis
                .table(j)
                .family
                .support()
                .ok_or_else(|| Error::InvalidArgument("Lebesgue constant needs a bounded support".into()))?;
            Ok(linspace(lo, hi, grid_resolution))
        })
        .collect::<Result<_>>()?;
    let card = Cardinal::new(nodes, index_set, basis)?;
    let mut values = Vec::new();
    let mut x = vec![0.0; d];
    if d == 1 {
        for &a in &axes[0] {
            x[0] = a;
            values.push(card.lebesgue_function(basis, &x)?);
        }
    } else {
        for &a in &axes[0] {
            for &b in &axes[1] {
                x[0] = a;
                x[1] = b;
                values.push(card.lebesgue_function(basis, &x)?);
            }
        }
    }
    let constant = values.iter().copied().fold(0.0, f64::max);
    Ok(LebesgueSamples { axes, values, constant })
}

pub fn lebesgue_constant(
    nodes: &[Vec<f64>],
    index_set: &MultiIndexSet,
    basis: &BasisFamily,
    grid_resolution: usize,
) -> Result<f64> {
    Ok(lebesgue_samples(nodes, index_set, basis, grid_resolution)?.constant)
}

/// Padua points of degree `r` (first family): the Chebyshev-Lobatto subgrid
/// `(cos((m-1) pi / r), cos((k-1) pi / (r+1)))` with `m + k` even.
pub fn padua_points(r: usize) -> Vec<Vec<f64>> {
    let xs: Vec<f64> = (0..=r)
        .map(|m| if r == 0 { 1.0 } else { (m as f64 * std::f64::consts::PI / r as f64).cos() })
        .collect();
    let ys: Vec<f64> = (0..=r + 1)
        .map(|k| (k as f64 * std::f64::consts::PI / (r + 1) as f64).cos())
        .collect();
    let mut pts = Vec::with_capacity((r + 1) * (r + 2) / 2);
    for (m, &x) in xs.iter().enumerate() {
        for (k, &y) in ys.iter().enumerate() {
            if (m + k) % 2 == 0 {
                pts.push(vec![x, y]);
            }
        }
    }
    pts
}
