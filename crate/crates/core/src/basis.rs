//! Univariate orthonormal polynomials defined by three-term recurrences, and
//! their tensor products.
//!
//! The recurrence convention is
//! `x p_m = sqrt(b_m) p_{m-1} + a_m p_m + sqrt(b_{m+1}) p_{m+1}` with
//! `p_{-1} = 0` and `p_0 = 1/sqrt(b_0)`. All built-in families use
//! probability-normalized weights, so `b_0 = 1` and `p_0 = 1`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index_set::MultiIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Uniform probability weight on `[-1, 1]`.
    Legendre,
    /// Standard normal weight on the real line.
    HermiteProbabilist,
    /// Arcsine probability weight on `[-1, 1]`.
    ChebyshevFirstKind,
    Custom,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Legendre => "legendre",
            Family::HermiteProbabilist => "hermite",
            Family::ChebyshevFirstKind => "chebyshev",
            Family::Custom => "custom",
        }
    }

    /// Support of the weight, `None` for the whole real line.
    pub fn support(self) -> Option<(f64, f64)> {
        match self {
            Family::Legendre | Family::ChebyshevFirstKind => Some((-1.0, 1.0)),
            Family::HermiteProbabilist | Family::Custom => None,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "legendre" | "uniform" => Ok(Family::Legendre),
            "hermite" | "hermite_probabilist" | "gaussian" | "normal" => {
                Ok(Family::HermiteProbabilist)
            }
            "chebyshev" | "chebyshev_first_kind" => Ok(Family::ChebyshevFirstKind),
            other => Err(Error::UnknownFamily(other.to_string())),
        }
    }
}

/// Recurrence coefficients `a_m`, `b_m` for `m = 0..len`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceTable {
    pub family: Family,
    a: Vec<f64>,
    b: Vec<f64>,
    sqrt_b: Vec<f64>,
}

impl RecurrenceTable {
    pub fn new(family: Family, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.len() != b.len() || a.is_empty() {
            return Err(Error::InvalidArgument(
                "recurrence tables need equal, non-empty a and b".into(),
            ));
        }
        if let Some(m) = b.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "recurrence coefficient b_{m} must be positive"
            )));
        }
        let sqrt_b = b.iter().map(|v| v.sqrt()).collect();
        Ok(RecurrenceTable {
            family,
            a,
            b,
            sqrt_b,
        })
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn sqrt_b(&self) -> &[f64] {
        &self.sqrt_b
    }

    /// Highest degree this table can evaluate.
    pub fn max_degree(&self) -> usize {
        self.len().saturating_sub(2)
    }

    /// `p_0 = 1/sqrt(b_0)`.
    pub fn p0(&self) -> f64 {
        1.0 / self.sqrt_b[0]
    }

    fn check_degree(&self, m: usize) -> Result<()> {
        if self.len() < 2 || m > self.max_degree() {
            return Err(Error::DegreeOutOfRange {
                degree: m,
                max: self.max_degree(),
            });
        }
        Ok(())
    }

    /// Writes `p_0(x), ..., p_m(x)` into `out[..=m]`.
    pub fn eval_all(&self, m: usize, x: f64, out: &mut [f64]) {
        out[0] = self.p0();
        if m == 0 {
            return;
        }
        let mut prev = 0.0;
        for k in 0..m {
            let next = ((x - self.a[k]) * out[k] - self.sqrt_b[k] * prev) / self.sqrt_b[k + 1];
            prev = out[k];
            out[k + 1] = next;
        }
    }

    /// Writes values and first derivatives of `p_0..=p_m` at `x`.
    pub fn eval_all_with_derivative(&self, m: usize, x: f64, val: &mut [f64], der: &mut [f64]) {
        val[0] = self.p0();
        der[0] = 0.0;
        let (mut pv, mut pd) = (0.0, 0.0);
        for k in 0..m {
            let sb = self.sqrt_b[k];
            let nv = ((x - self.a[k]) * val[k] - sb * pv) / self.sqrt_b[k + 1];
            let nd = ((x - self.a[k]) * der[k] - sb * pd + val[k]) / self.sqrt_b[k + 1];
            pv = val[k];
            pd = der[k];
            val[k + 1] = nv;
            der[k + 1] = nd;
        }
    }

    pub fn eval(&self, m: usize, x: f64) -> Result<f64> {
        self.check_degree(m)?;
        let mut buf = vec![0.0; m + 1];
        self.eval_all(m, x, &mut buf);
        Ok(buf[m])
    }

    pub fn eval_derivative(&self, m: usize, x: f64) -> Result<f64> {
        self.check_degree(m)?;
        let mut v = vec![0.0; m + 1];
        let mut d = vec![0.0; m + 1];
        self.eval_all_with_derivative(m, x, &mut v, &mut d);
        Ok(d[m])
    }

    /// Reads a custom table: one `m a_m b_m` triple per line, `m` = 0, 1, ...
    pub fn parse(text: &str) -> Result<Self> {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            let bad = |msg: String| Error::Parse { line: ln + 1, msg };
            if toks.len() != 3 {
                return Err(bad("expected `m a_m b_m`".into()));
            }
            let m: usize = toks[0]
                .parse()
                .map_err(|_| bad(format!("bad index `{}`", toks[0])))?;
            if m != a.len() {
                return Err(bad(format!("expected m = {}, found {m}", a.len())));
            }
            let av: f64 = toks[1]
                .parse()
                .map_err(|_| bad(format!("bad a_m `{}`", toks[1])))?;
            let bv: f64 = toks[2]
                .parse()
                .map_err(|_| bad(format!("bad b_m `{}`", toks[2])))?;
            a.push(av);
            b.push(bv);
        }
        RecurrenceTable::new(Family::Custom, a, b)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// Closed-form recurrence for a classical family, covering `p_0..=p_{m_max}`
/// (the table carries `m_max + 2` entries).
pub fn standard_recurrence(family: Family, m_max: usize) -> Result<RecurrenceTable> {
    let len = m_max + 2;
    let a = vec![0.0; len];
    let b: Vec<f64> = (0..len)
        .map(|m| {
            let mf = m as f64;
            match (family, m) {
                (_, 0) => Ok(1.0),
                (Family::Legendre, _) => Ok(mf * mf / (4.0 * mf * mf - 1.0)),
                (Family::HermiteProbabilist, _) => Ok(mf),
                (Family::ChebyshevFirstKind, 1) => Ok(0.5),
                (Family::ChebyshevFirstKind, _) => Ok(0.25),
                (Family::Custom, _) => Err(Error::UnknownFamily(
                    "custom tables must be loaded from a file".into(),
                )),
            }
        })
        .collect::<Result<_>>()?;
    RecurrenceTable::new(family, a, b)
}

/// Tensor-product orthonormal basis `pi_alpha(x) = prod_j p^{(j)}_{alpha_j}(x_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisFamily {
    per_dimension: Vec<RecurrenceTable>,
    pi0: f64,
}

impl BasisFamily {
    pub fn new(per_dimension: Vec<RecurrenceTable>) -> Result<Self> {
        if per_dimension.is_empty() {
            return Err(Error::InvalidArgument("basis needs d >= 1".into()));
        }
        let pi0 = per_dimension.iter().map(RecurrenceTable::p0).product();
        Ok(BasisFamily { per_dimension, pi0 })
    }

    /// The same classical family along every axis, up to `max_degree`.
    pub fn isotropic(family: Family, dim: usize, max_degree: usize) -> Result<Self> {
        let rec = standard_recurrence(family, max_degree)?;
        Self::new(vec![rec; dim])
    }

    pub fn from_table(table: RecurrenceTable, dim: usize) -> Result<Self> {
        Self::new(vec![table; dim])
    }

    pub fn dim(&self) -> usize {
        self.per_dimension.len()
    }

    pub fn pi0(&self) -> f64 {
        self.pi0
    }

    pub fn table(&self, axis: usize) -> &RecurrenceTable {
        &self.per_dimension[axis]
    }

    pub fn tables(&self) -> &[RecurrenceTable] {
        &self.per_dimension
    }

    /// Family of the first axis (all axes share it for isotropic bases).
    pub fn family(&self) -> Family {
        self.per_dimension[0].family
    }

    /// Smallest per-axis degree limit.
    pub fn max_degree(&self) -> usize {
        self.per_dimension
            .iter()
            .map(RecurrenceTable::max_degree)
            .min()
            .unwrap_or(0)
    }

    fn check(&self, alpha: &MultiIndex, x: &[f64]) -> Result<()> {
        if alpha.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: alpha.dim(),
            });
        }
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        for (t, &e) in self.per_dimension.iter().zip(alpha.exponents()) {
            t.check_degree(e as usize)?;
        }
        Ok(())
    }

    pub fn eval(&self, alpha: &MultiIndex, x: &[f64]) -> Result<f64> {
        self.check(alpha, x)?;
        let mut acc = 1.0;
        for ((t, &e), &xj) in self.per_dimension.iter().zip(alpha.exponents()).zip(x) {
            acc *= t.eval(e as usize, xj)?;
        }
        Ok(acc)
    }

    /// `d pi_alpha / d x_axis`.
    pub fn eval_partial(&self, alpha: &MultiIndex, x: &[f64], axis: usize) -> Result<f64> {
        if axis >= self.dim() {
            return Err(Error::AxisOutOfRange {
                axis,
                dim: self.dim(),
            });
        }
        self.check(alpha, x)?;
        let mut acc = 1.0;
        for (j, ((t, &e), &xj)) in self
            .per_dimension
            .iter()
            .zip(alpha.exponents())
            .zip(x)
            .enumerate()
        {
            acc *= if j == axis {
                t.eval_derivative(e as usize, xj)?
            } else {
                t.eval(e as usize, xj)?
            };
        }
        Ok(acc)
    }
}
