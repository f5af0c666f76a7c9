//! Multi-index sets: total-degree and hyperbolic-cross constructors, set
//! algebra, downward-closure checks and the maximal half-set size that lower
//! bounds the size of any rule exact on the set.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A `d`-variate exponent tuple.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        assert!(!exponents.is_empty(), "multi-index dimension must be >= 1");
        MultiIndex(exponents)
    }

    pub fn zero(dim: usize) -> Self {
        MultiIndex::new(vec![0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    /// Total degree `|alpha|`.
    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&a| a == 0)
    }

    /// Component-wise partial order `self <= other`.
    pub fn le(&self, other: &MultiIndex) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// Nonzero components as `(axis, exponent)` pairs.
    pub fn support(&self) -> Vec<(usize, u32)> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &a)| a > 0)
            .map(|(j, &a)| (j, a))
            .collect()
    }

    /// Graded lexicographic comparison: lower total degree first, then the
    /// larger leading exponent first.
    pub fn grlex_cmp(&self, other: &MultiIndex) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, a) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

/// An ordered, duplicate-free collection of multi-indices of equal dimension.
///
/// Indices are kept in graded lexicographic order, so the zero index (when
/// present) is always first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiIndexSet {
    dim: usize,
    indices: Vec<MultiIndex>,
}

impl MultiIndexSet {
    /// Builds a set from arbitrary indices, sorting and deduplicating.
    pub fn from_indices(dim: usize, indices: Vec<MultiIndex>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be >= 1".into()));
        }
        if let Some(bad) = indices.iter().find(|a| a.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.dim(),
            });
        }
        let mut indices = indices;
        indices.sort_by(|a, b| a.grlex_cmp(b));
        indices.dedup();
        Ok(MultiIndexSet { dim, indices })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn iter(&self) -> std::slice::Iter<'_, MultiIndex> {
        self.indices.iter()
    }

    pub fn contains(&self, alpha: &MultiIndex) -> bool {
        self.indices
            .binary_search_by(|probe| probe.grlex_cmp(alpha))
            .is_ok()
    }

    pub fn contains_zero(&self) -> bool {
        self.indices.first().is_some_and(MultiIndex::is_zero)
    }

    /// Largest exponent appearing along each axis.
    pub fn max_degree_per_axis(&self) -> Vec<u32> {
        let mut out = vec![0; self.dim];
        for a in &self.indices {
            for (o, &e) in out.iter_mut().zip(a.exponents()) {
                *o = (*o).max(e);
            }
        }
        out
    }

    /// Largest total degree in the set.
    pub fn max_total_degree(&self) -> u32 {
        self.indices.iter().map(MultiIndex::degree).max().unwrap_or(0)
    }
}

/// All indices with `|alpha| <= r`.
pub fn total_degree(d: usize, r: u32) -> MultiIndexSet {
    let mut out = Vec::new();
    let mut cur = vec![0u32; d];
    fill_total(&mut cur, 0, r, &mut out);
    MultiIndexSet::from_indices(d, out).expect("valid construction")
}

fn fill_total(cur: &mut Vec<u32>, axis: usize, budget: u32, out: &mut Vec<MultiIndex>) {
    if axis == cur.len() {
        out.push(MultiIndex(cur.clone()));
        return;
    }
    for a in 0..=budget {
        cur[axis] = a;
        fill_total(cur, axis + 1, budget - a, out);
    }
    cur[axis] = 0;
}

/// All indices with `prod_j (alpha_j + 1) <= r + 1`.
pub fn hyperbolic_cross(d: usize, r: u32) -> MultiIndexSet {
    let mut out = Vec::new();
    let mut cur = vec![0u32; d];
    fill_hyperbolic(&mut cur, 0, r as u64 + 1, &mut out);
    MultiIndexSet::from_indices(d, out).expect("valid construction")
}

fn fill_hyperbolic(cur: &mut Vec<u32>, axis: usize, bound: u64, out: &mut Vec<MultiIndex>) {
    if axis == cur.len() {
        out.push(MultiIndex(cur.clone()));
        return;
    }
    let mut a = 0u32;
    while (a as u64 + 1) <= bound {
        cur[axis] = a;
        fill_hyperbolic(cur, axis + 1, bound / (a as u64 + 1), out);
        a += 1;
    }
    cur[axis] = 0;
}

/// Indices with at most two nonzero components, each at most `pair_order`.
///
/// `max_univariate_order` additionally admits single-axis indices up to that
/// order; pass the same value as `pair_order` for the plain pairwise set.
pub fn pairwise_interaction(d: usize, max_univariate_order: u32, pair_order: u32) -> Result<MultiIndexSet> {
    if d < 2 {
        return Err(Error::InvalidArgument(
            "pairwise interaction sets need d >= 2".into(),
        ));
    }
    let mut out = vec![MultiIndex::zero(d)];
    let uni = max_univariate_order.max(pair_order);
    for j in 0..d {
        for a in 1..=uni {
            let mut e = vec![0; d];
            e[j] = a;
            out.push(MultiIndex(e));
        }
    }
    for j in 0..d {
        for k in (j + 1)..d {
            for a in 1..=pair_order {
                for b in 1..=pair_order {
                    let mut e = vec![0; d];
                    e[j] = a;
                    e[k] = b;
                    out.push(MultiIndex(e));
                }
            }
        }
    }
    MultiIndexSet::from_indices(d, out)
}

pub fn union(a: &MultiIndexSet, b: &MultiIndexSet) -> Result<MultiIndexSet> {
    check_same_dim(a, b)?;
    let mut all = a.indices.clone();
    all.extend(b.indices.iter().cloned());
    MultiIndexSet::from_indices(a.dim, all)
}

/// `{alpha + beta : alpha in a, beta in b}`.
pub fn minkowski_sum(a: &MultiIndexSet, b: &MultiIndexSet) -> Result<MultiIndexSet> {
    check_same_dim(a, b)?;
    let mut seen = HashSet::new();
    for x in &a.indices {
        for y in &b.indices {
            seen.insert(x.add(y));
        }
    }
    MultiIndexSet::from_indices(a.dim, seen.into_iter().collect())
}

fn check_same_dim(a: &MultiIndexSet, b: &MultiIndexSet) -> Result<()> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch {
            expected: a.dim,
            found: b.dim,
        });
    }
    Ok(())
}

/// True iff every `beta <= alpha` of every member `alpha` is also a member.
///
/// Checking the immediate predecessors `alpha - e_j` suffices.
pub fn is_downward_closed(s: &MultiIndexSet) -> bool {
    let members: HashSet<&[u32]> = s.indices.iter().map(|a| a.exponents()).collect();
    let mut buf = vec![0u32; s.dim];
    s.indices.iter().all(|a| {
        buf.copy_from_slice(a.exponents());
        (0..s.dim).all(|j| {
            if buf[j] == 0 {
                return true;
            }
            buf[j] -= 1;
            let ok = members.contains(buf.as_slice());
            buf[j] += 1;
            ok
        })
    })
}

/// Default cap on `|s|` for [`half_set_size`].
pub const HALF_SET_SEARCH_CAP: usize = 200;

/// Maximal half-set size `max{|Theta| : Theta + Theta subset of s}`.
///
/// Exhaustive branch-and-bound over downward-closed `Theta` drawn from the
/// candidates `{alpha : 2 alpha in s}`. Restricting to downward-closed sets
/// loses nothing when `s` is itself downward closed.
pub fn half_set_size(s: &MultiIndexSet) -> Result<usize> {
    half_set_size_capped(s, HALF_SET_SEARCH_CAP)
}

pub fn half_set_size_capped(s: &MultiIndexSet, cap: usize) -> Result<usize> {
    if s.len() > cap {
        return Err(Error::SearchInfeasible { size: s.len(), cap });
    }
    let candidates: Vec<MultiIndex> = s
        .indices
        .iter()
        .filter(|a| s.contains(&a.add(a)))
        .cloned()
        .collect();
    let mut search = HalfSetSearch {
        set: s,
        candidates: &candidates,
        chosen: Vec::new(),
        best: 0,
    };
    search.run(0);
    Ok(search.best)
}

struct HalfSetSearch<'a> {
    set: &'a MultiIndexSet,
    candidates: &'a [MultiIndex],
    chosen: Vec<usize>,
    best: usize,
}

impl HalfSetSearch<'_> {
    fn run(&mut self, next: usize) {
        if self.best == self.candidates.len() {
            return;
        }
        let remaining = self.candidates.len() - next;
        if self.chosen.len() + remaining <= self.best {
            return;
        }
        if next == self.candidates.len() {
            self.best = self.best.max(self.chosen.len());
            return;
        }
        if self.can_add(next) {
            self.chosen.push(next);
            self.run(next + 1);
            self.chosen.pop();
        }
        self.run(next + 1);
    }

    fn can_add(&self, idx: usize) -> bool {
        let alpha = &self.candidates[idx];
        // Predecessors precede alpha in graded order, so closure is checked
        // against what is already chosen.
        let closed = alpha.support().iter().all(|&(j, _)| {
            let mut e = alpha.exponents().to_vec();
            e[j] -= 1;
            let pred = MultiIndex(e);
            self.chosen.iter().any(|&c| self.candidates[c] == pred)
        });
        closed
            && self
                .chosen
                .iter()
                .all(|&c| self.set.contains(&alpha.add(&self.candidates[c])))
    }
}

/// Binomial coefficient `C(n, k)` in `u64`.
pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Closed-form half-set size of the total-degree set: `C(d + floor(r/2), d)`.
pub fn half_set_lower_bound_total(d: usize, r: u32) -> usize {
    binomial(d as u64 + (r / 2) as u64, d as u64) as usize
}

/// Reads the plain-text index-set format: a `d M` header followed by `M`
/// lines of `d` non-negative integers.
pub fn parse_index_set(text: &str) -> Result<MultiIndexSet> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (hline, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty index-set file".into(),
    })?;
    let head: Vec<usize> = parse_ints(header, hline + 1)?;
    if head.len() != 2 {
        return Err(Error::Parse {
            line: hline + 1,
            msg: "header must be `d M`".into(),
        });
    }
    let (d, m) = (head[0], head[1]);
    let mut indices = Vec::with_capacity(m);
    for (ln, line) in lines {
        let e: Vec<u32> = parse_ints(line, ln + 1)?;
        if e.len() != d {
            return Err(Error::Parse {
                line: ln + 1,
                msg: format!("expected {d} exponents, found {}", e.len()),
            });
        }
        indices.push(MultiIndex(e));
    }
    if indices.len() != m {
        return Err(Error::Parse {
            line: 1,
            msg: format!("header declares {m} indices, found {}", indices.len()),
        });
    }
    MultiIndexSet::from_indices(d, indices)
}

fn parse_ints<T: std::str::FromStr>(line: &str, lineno: usize) -> Result<Vec<T>> {
    line.split_whitespace()
        .map(|tok| {
            tok.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("not a non-negative integer: `{tok}`"),
            })
        })
        .collect()
}

pub fn read_index_set(path: &Path) -> Result<MultiIndexSet> {
    parse_index_set(&std::fs::read_to_string(path)?)
}

pub fn format_index_set(s: &MultiIndexSet) -> String {
    let mut out = format!("{} {}\n", s.dim, s.len());
    for a in &s.indices {
        let row: Vec<String> = a.exponents().iter().map(u32::to_string).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

/// Serializable description of how an index set was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IndexSetSpec {
    Total { dim: usize, order: u32 },
    Hyperbolic { dim: usize, order: u32 },
    File { path: PathBuf },
    Explicit { dim: usize, indices: Vec<MultiIndex> },
}

impl IndexSetSpec {
    pub fn build(&self) -> Result<MultiIndexSet> {
        match self {
            IndexSetSpec::Total { dim, order } => Ok(total_degree(*dim, *order)),
            IndexSetSpec::Hyperbolic { dim, order } => Ok(hyperbolic_cross(*dim, *order)),
            IndexSetSpec::File { path } => read_index_set(path),
            IndexSetSpec::Explicit { dim, indices } => {
                MultiIndexSet::from_indices(*dim, indices.clone())
            }
        }
    }

    /// Parses the command-line form `total`, `hyperbolic` or `file:<path>`.
    pub fn from_cli(kind: &str, dim: usize, order: u32) -> Result<Self> {
        match kind {
            "total" => Ok(IndexSetSpec::Total { dim, order }),
            "hyperbolic" => Ok(IndexSetSpec::Hyperbolic { dim, order }),
            other => match other.strip_prefix("file:") {
                Some(p) => Ok(IndexSetSpec::File { path: p.into() }),
                None => Err(Error::InvalidArgument(format!(
                    "unknown index set `{other}` (total|hyperbolic|file:<path>)"
                ))),
            },
        }
    }
}
