//! Designed quadrature: initialization, the converge/eliminate/enrich outer
//! loop, and final normalization into a probability-weighted rule.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::basis::{BasisFamily, Family};
use crate::domain::{DomainKind, DomainSpec};
use crate::error::{Error, Result};
use crate::index_set::{IndexSetSpec, MultiIndexSet};
use crate::moment::{DecisionVector, MomentSystem};
use crate::solver::{solve, solve_masked, Outcome, SolveTrace, SolverConfig};
use crate::sparse_grid::{smolyak, Growth};

/// Affine map between a user box and the reference box `[-1, 1]^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineBox {
    pub bounds: Vec<(f64, f64)>,
}

impl AffineBox {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.iter().any(|&(lo, hi)| !(lo < hi) || !lo.is_finite() || !hi.is_finite()) {
            return Err(Error::InvalidArgument("box bounds need finite lo < hi".into()));
        }
        Ok(AffineBox { bounds })
    }

    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![(lo, hi); dim])
    }

    pub fn to_user(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.bounds)
            .map(|(&t, &(lo, hi))| lo + 0.5 * (t + 1.0) * (hi - lo))
            .collect()
    }

    pub fn to_reference(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(&self.bounds)
            .map(|(&v, &(lo, hi))| 2.0 * (v - lo) / (hi - lo) - 1.0)
            .collect()
    }
}

fn null_as_nan<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

/// A positive-weight quadrature rule with probability-normalized weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub dim: usize,
    pub family: Family,
    pub index_set: IndexSetSpec,
    /// `NaN` (serialized as `null`) when unknown, e.g. after a CSV import.
    #[serde(deserialize_with = "null_as_nan")]
    pub tolerance: f64,
    #[serde(deserialize_with = "null_as_nan")]
    pub achieved_residual: f64,
    pub seed: u64,
    /// Present when nodes are in user coordinates of a rescaled box.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<AffineBox>,
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Nodes in the coordinates of the orthonormal basis.
    pub fn reference_nodes(&self) -> Vec<Vec<f64>> {
        match &self.domain {
            Some(b) => self.nodes.iter().map(|x| b.to_reference(x)).collect(),
            None => self.nodes.clone(),
        }
    }

    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, &w)| w * f(x)).sum()
    }

    pub fn min_weight(&self) -> f64 {
        self.weights.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignConfig {
    pub kappa_start: f64,
    pub kappa_min: f64,
    pub kappa_step: f64,
    pub enrichment_fraction: f64,
    pub tol: f64,
    pub seed: u64,
    pub solver: SolverConfig,
    /// Cap on elimination passes of the outer loop.
    pub max_outer: usize,
    /// Overrides the sparse-grid-based starting size.
    pub initial_n: Option<usize>,
    /// Largest rule size tried while enriching (defaults to
    /// `max(2 n_init, |Lambda|)`).
    pub max_n: Option<usize>,
    /// Extra single-node elimination attempts from fresh perturbations
    /// before a size is declared unreachable.
    pub fine_retries: usize,
    /// Descriptor recorded in the output rule.
    pub descriptor: Option<IndexSetSpec>,
    /// User box the reference domain maps onto.
    pub user_box: Option<AffineBox>,
}

impl Default for DesignConfig {
    fn default() -> Self {
        DesignConfig {
            kappa_start: 0.9,
            kappa_min: 0.5,
            kappa_step: 0.1,
            enrichment_fraction: 0.05,
            tol: 1e-8,
            seed: 0,
            solver: SolverConfig::default(),
            max_outer: 20,
            initial_n: None,
            max_n: None,
            fine_retries: 2,
            descriptor: None,
            user_box: None,
        }
    }
}

impl DesignConfig {
    pub fn with_seed(seed: u64) -> Self {
        DesignConfig {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.kappa_min && self.kappa_min <= self.kappa_start && self.kappa_start <= 1.0) {
            return Err(Error::InvalidArgument("need 0 < kappa_min <= kappa_start <= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument("tol must be positive".into()));
        }
        if !(self.enrichment_fraction > 0.0) {
            return Err(Error::InvalidArgument("enrichment fraction must be positive".into()));
        }
        self.solver.validate()
    }
}

/// Everything a design run produced besides the rule.
#[derive(Debug, Clone)]
pub struct Design {
    pub rule: QuadratureRule,
    /// All solver iterations of the run, concatenated.
    pub trace: SolveTrace,
    /// One entry per solve, in order.
    pub history: Vec<SolveSummary>,
    pub outer_passes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub n: usize,
    pub outcome: Outcome,
    pub iterations: usize,
}

impl Design {
    /// Gauss-Newton iterations summed over every solve of the run.
    pub fn total_iterations(&self) -> usize {
        self.trace.iterations()
    }

    /// Iterations of the last converged solve at the returned size.
    pub fn final_solve_iterations(&self) -> usize {
        self.history
            .iter()
            .rev()
            .find(|h| h.outcome == Outcome::Converged && h.n == self.rule.len())
            .map_or(0, |h| h.iterations)
    }
}

/// Sparse-grid level whose Gauss Smolyak rule is exact on total degree `r`.
pub fn smolyak_level_for_order(r: u32) -> usize {
    ((r as usize) + 1).div_ceil(2).max(1)
}

/// `|A_{d,k}|`: the exact non-nested Gauss Smolyak count when enumeration is
/// cheap, otherwise `ceil((2d)^{k-1}/(k-1)!)`.
pub fn estimate_sparse_grid_size(d: usize, k: usize) -> usize {
    estimate_for_family(d, k, Family::Legendre)
}

fn formula_estimate(d: usize, k: usize) -> usize {
    let mut v = 1.0_f64;
    for i in 1..k {
        v *= 2.0 * d as f64 / i as f64;
    }
    v.ceil().min(usize::MAX as f64 / 2.0) as usize
}

fn estimate_for_family(d: usize, k: usize, family: Family) -> usize {
    let k = k.max(1);
    if d == 0 {
        return 1;
    }
    let est = formula_estimate(d, k);
    if d <= 12 && est <= 50_000 {
        let fam = if family == Family::Custom { Family::Legendre } else { family };
        if let Ok(sg) = smolyak(d, k, fam, Growth::GaussLinear) {
            return sg.len();
        }
    }
    est.max(1)
}

/// Starting rule size of the design loop at `kappa`.
fn initial_size(index_set: &MultiIndexSet, family: Family, kappa: f64) -> usize {
    let k = smolyak_level_for_order(index_set.max_total_degree());
    let a = estimate_for_family(index_set.dim(), k, family);
    ((kappa * a as f64).ceil() as usize).clamp(1, index_set.len())
}

fn derived_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Latin hypercube sample in `(0,1)^d`, one point per row.
fn latin_hypercube(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; d]; n];
    for j in 0..d {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        for (i, &p) in perm.iter().enumerate() {
            let u: f64 = rng.random();
            pts[i][j] = (p as f64 + u) / n as f64;
        }
    }
    pts
}

fn sample_nodes(rng: &mut ChaCha8Rng, n: usize, domain: &DomainSpec) -> Vec<Vec<f64>> {
    let d = domain.dim();
    let unit = latin_hypercube(rng, n, d);
    match domain.kind {
        DomainKind::GaussianUnbounded => {
            let normal = Normal::standard();
            unit.into_iter()
                .map(|u| u.into_iter().map(|v| normal.inverse_cdf(v.clamp(1e-12, 1.0 - 1e-12))).collect())
                .collect()
        }
        DomainKind::Box => {
            let map = |u: &[f64]| -> Vec<f64> {
                u.iter()
                    .zip(&domain.bounds)
                    .map(|(&v, &(lo, hi))| lo + v * (hi - lo))
                    .collect()
            };
            unit.iter()
                .map(|u| {
                    let mut x = map(u);
                    let mut tries = 0;
                    while !domain.is_feasible(&x) && tries < 10_000 {
                        let v: Vec<f64> = (0..d).map(|_| rng.random()).collect();
                        x = map(&v);
                        tries += 1;
                    }
                    x
                })
                .collect()
        }
    }
}

fn initial_weights(nodes: &[Vec<f64>], domain: &DomainSpec, total: f64) -> Vec<f64> {
    let raw: Vec<f64> = match domain.kind {
        DomainKind::GaussianUnbounded => nodes
            .iter()
            .map(|x| (-0.5 * x.iter().map(|v| v * v).sum::<f64>()).exp())
            .collect(),
        DomainKind::Box => vec![1.0; nodes.len()],
    };
    let s: f64 = raw.iter().sum();
    raw.iter().map(|w| w * total / s).collect()
}

/// `n` feasible starting nodes with weights summing to `|Lambda|`.
pub fn initialize(n: usize, domain: &DomainSpec, index_set: &MultiIndexSet, seed: u64) -> Result<DecisionVector> {
    if n == 0 {
        return Err(Error::InvalidArgument("initialize needs n >= 1".into()));
    }
    if index_set.dim() != domain.dim() {
        return Err(Error::DimensionMismatch {
            expected: domain.dim(),
            found: index_set.dim(),
        });
    }
    let mut rng = derived_rng(seed, 0);
    let nodes = sample_nodes(&mut rng, n, domain);
    let weights = initial_weights(&nodes, domain, index_set.len() as f64);
    DecisionVector::from_nodes(&nodes, &weights)
}

fn renormalize(dv: &mut DecisionVector, total: f64) {
    let s: f64 = dv.weights().iter().sum();
    if s != 0.0 {
        dv.scale_weights(total / s);
    }
}

/// Drops the `count` smallest-weight nodes (ties drop the larger index) and
/// rescales the remaining weights to sum to `total`.
pub fn eliminate(dv: &DecisionVector, count: usize, total: f64) -> Result<DecisionVector> {
    let n = dv.n();
    if count >= n {
        return Err(Error::InvalidArgument(format!("cannot eliminate {count} of {n} nodes")));
    }
    if count == 0 {
        return Ok(dv.clone());
    }
    let w = dv.weights();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| w[a].total_cmp(&w[b]).then(b.cmp(&a)));
    let mut drop = vec![false; n];
    for &i in &order[..count] {
        drop[i] = true;
    }
    let keep: Vec<usize> = (0..n).filter(|&i| !drop[i]).collect();
    let coords: Vec<f64> = keep.iter().flat_map(|&i| dv.node(i).to_vec()).collect();
    let weights: Vec<f64> = keep.iter().map(|&i| w[i]).collect();
    let mut out = DecisionVector::new(dv.dim(), coords, weights)?;
    renormalize(&mut out, total);
    Ok(out)
}

/// Appends `count` fresh nodes drawn with a stream derived from `seed`;
/// existing nodes keep their positions and all weights are rescaled to `total`.
pub fn enrich(dv: &DecisionVector, count: usize, domain: &DomainSpec, seed: u64, total: f64) -> Result<DecisionVector> {
    if count == 0 {
        return Err(Error::InvalidArgument("enrich needs count >= 1".into()));
    }
    let mut rng = derived_rng(seed, 1);
    let fresh = sample_nodes(&mut rng, count, domain);
    let n_new = dv.n() + count;
    let share = total / n_new as f64;
    let fresh_w = initial_weights(&fresh, domain, share * count as f64);
    let mut nodes = dv.nodes();
    nodes.extend(fresh);
    let mut weights = dv.weights().to_vec();
    weights.extend(fresh_w);
    let mut out = DecisionVector::new(domain.dim(), nodes.concat(), weights)?;
    renormalize(&mut out, total);
    Ok(out)
}

fn mix_seed(seed: u64, counter: u64) -> u64 {
    // SplitMix64 finalizer over the pair.
    let mut z = seed ^ counter.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Run<'a> {
    system: &'a MomentSystem,
    domain: &'a DomainSpec,
    cfg: &'a DesignConfig,
    solver: SolverConfig,
    total: f64,
    trace: SolveTrace,
    history: Vec<SolveSummary>,
    counter: u64,
    best: Option<(f64, usize)>,
}

impl Run<'_> {
    fn next_seed(&mut self) -> u64 {
        self.counter += 1;
        mix_seed(self.cfg.seed, self.counter)
    }

    fn solve(&mut self, dv: DecisionVector) -> Result<(DecisionVector, bool)> {
        let sol = solve(self.system, dv, &self.solver)?;
        self.trace.extend(&sol.trace);
        self.history.push(SolveSummary {
            n: sol.dv.n(),
            outcome: sol.trace.outcome,
            iterations: sol.trace.iterations(),
        });
        let res = sol.trace.final_res_aug;
        if self.best.is_none_or(|(b, _)| res < b) {
            self.best = Some((res, sol.dv.n()));
        }
        if sol.trace.outcome == Outcome::Cancelled {
            return Err(self.failure(sol.dv.n()));
        }
        Ok((sol.dv, sol.trace.converged()))
    }

    fn failure(&self, n: usize) -> Error {
        let (best_residual, n) = self.best.map_or((f64::INFINITY, n), |(r, m)| (r / self.total, m));
        Error::DesignFailed {
            best_residual,
            n,
            trace: Box::new(self.trace.clone()),
        }
    }

    fn enrichment_count(&self, n: usize) -> usize {
        ((self.cfg.enrichment_fraction * n as f64).ceil() as usize).max(1)
    }

    /// Solve, enriching on stagnation, until convergence or `max_n`.
    fn converge(&mut self, mut dv: DecisionVector, max_n: usize) -> Result<DecisionVector> {
        loop {
            let (out, ok) = self.solve(dv)?;
            if ok {
                return Ok(out);
            }
            let n = out.n();
            if n >= max_n {
                return Err(self.failure(n));
            }
            let add = self.enrichment_count(n).min(max_n - n);
            let seed = self.next_seed();
            dv = enrich(&out, add, self.domain, seed, self.total)?;
        }
    }

    /// Attempts a converged rule with `count` fewer nodes. Single-node
    /// attempts are retried from perturbed starts before giving up.
    fn try_smaller(&mut self, converged: &DecisionVector, count: usize) -> Result<Option<DecisionVector>> {
        let first = eliminate(converged, count, self.total)?;
        let (out, ok) = self.solve(first.clone())?;
        if ok {
            return Ok(Some(out));
        }
        if count > 1 {
            return Ok(None);
        }
        for _ in 0..self.cfg.fine_retries {
            let seed = self.next_seed();
            let start = perturb(&first, self.domain, seed, 0.1);
            let (out, ok) = self.solve(start)?;
            if ok {
                return Ok(Some(out));
            }
        }
        Ok(None)
    }
}

/// Jitters node coordinates by a fraction of the box width and weights by
/// a multiplicative factor, keeping nodes feasible.
fn perturb(dv: &DecisionVector, domain: &DomainSpec, seed: u64, scale: f64) -> DecisionVector {
    let mut rng = derived_rng(seed, 2);
    let mut out = dv.clone();
    let d = dv.dim();
    let n = dv.n();
    let total: f64 = dv.weights().iter().sum();
    for i in 0..n {
        for j in 0..d {
            let width = match domain.kind {
                DomainKind::Box => domain.bounds[j].1 - domain.bounds[j].0,
                DomainKind::GaussianUnbounded => 2.0,
            };
            let k = i * d + j;
            let mut v = out.as_slice()[k] + scale * width * rng.random_range(-0.5..0.5);
            if domain.kind == DomainKind::Box {
                let (lo, hi) = domain.bounds[j];
                v = v.clamp(lo, hi);
            }
            out.as_mut_slice()[k] = v;
        }
    }
    for w in out.weights_mut() {
        *w *= 1.0 + scale * rng.random_range(-0.5..0.5);
    }
    renormalize(&mut out, total);
    out
}

/// Moves nodes sitting marginally outside the box onto its boundary, then
/// re-converges with those coordinates frozen so the residual stays below
/// the tolerance.
fn clamp_and_polish(run: &mut Run<'_>, dv: DecisionVector) -> Result<DecisionVector> {
    let d = dv.dim();
    let mut out = dv.clone();
    let mut frozen = vec![false; dv.len()];
    let mut any = false;
    if run.domain.kind == DomainKind::Box {
        for (k, x) in out.as_mut_slice()[..dv.n() * d].iter_mut().enumerate() {
            let (lo, hi) = run.domain.bounds[k % d];
            if *x <= lo || *x >= hi {
                *x = x.clamp(lo, hi);
                frozen[k] = true;
                any = true;
            }
        }
    }
    for (i, x) in out.as_mut_slice()[..dv.n() * d].chunks_exact_mut(d).enumerate() {
        for a in run.domain.project_out_of_regions(x) {
            frozen[i * d + a] = true;
            any = true;
        }
    }
    if !any {
        return Ok(dv);
    }
    let sol = solve_masked(run.system, out, &run.solver, &frozen)?;
    run.trace.extend(&sol.trace);
    Ok(sol.dv)
}

fn finish(
    dv: &DecisionVector,
    system: &MomentSystem,
    index_set: &MultiIndexSet,
    basis: &BasisFamily,
    domain: &DomainSpec,
    cfg: &DesignConfig,
) -> Result<QuadratureRule> {
    let target = 1.0 / basis.pi0();
    // Dividing by |Lambda| leaves the zero moment off by its residual entry;
    // scaling to the exact mass removes that component.
    let sum: f64 = dv.weights().iter().sum();
    let mut out = dv.clone();
    out.scale_weights(target / sum);
    let mut true_sys = system.clone();
    true_sys.set_target0(target);
    let achieved_residual = true_sys.residual(&out)?.norm();
    let mut nodes = out.nodes();
    if let Some(b) = &cfg.user_box {
        nodes = nodes.iter().map(|x| b.to_user(x)).collect();
    }
    let _ = domain;
    Ok(QuadratureRule {
        dim: index_set.dim(),
        family: basis.family(),
        index_set: cfg.descriptor.clone().unwrap_or_else(|| IndexSetSpec::Explicit {
            dim: index_set.dim(),
            indices: index_set.indices().to_vec(),
        }),
        tolerance: cfg.tol,
        achieved_residual,
        seed: cfg.seed,
        domain: cfg.user_box.clone(),
        nodes,
        weights: out.weights().to_vec(),
    })
}

/// Converges from an over-sized start, shrinks by `kappa` backtracking,
/// then removes the smallest-weight nodes in shrinking batches until a
/// single-node removal fails.
pub fn design(index_set: &MultiIndexSet, domain: &DomainSpec, basis: &BasisFamily, cfg: &DesignConfig) -> Result<Design> {
    cfg.validate()?;
    if !index_set.contains_zero() {
        return Err(Error::InvalidArgument("index set must contain the zero index".into()));
    }
    let total = index_set.len() as f64;
    let system = MomentSystem::with_target(basis.clone(), index_set.clone(), domain.clone(), total)?;
    let true_target = 1.0 / basis.pi0();
    let mut solver = cfg.solver.clone();
    // The iteration runs with weights summing to |Lambda|; scale the tolerance
    // so the probability-normalized residual meets `cfg.tol`.
    solver.tol = cfg.tol * total / true_target;

    let family = basis.family();
    let a_size = {
        let k = smolyak_level_for_order(index_set.max_total_degree());
        estimate_for_family(index_set.dim(), k, family)
    };
    let n_init = cfg
        .initial_n
        .unwrap_or_else(|| initial_size(index_set, family, cfg.kappa_start))
        .max(1);
    let max_n = cfg.max_n.unwrap_or((2 * n_init).max(index_set.len())).max(n_init);

    let mut run = Run {
        system: &system,
        domain,
        cfg,
        solver,
        total,
        trace: SolveTrace::empty(),
        history: Vec::new(),
        counter: 0,
        best: None,
    };

    let d0 = initialize(n_init, domain, index_set, cfg.seed)?;
    let mut current = run.converge(d0, max_n)?;

    // Coarse phase: shrink toward kappa |A_{d,k}| in steps, stopping at the
    // first failure.
    let mut kappa = cfg.kappa_start - cfg.kappa_step;
    while kappa >= cfg.kappa_min - 1e-12 && cfg.initial_n.is_none() {
        let target_n = ((kappa * a_size as f64).ceil() as usize).max(1);
        kappa -= cfg.kappa_step;
        if target_n >= current.n() {
            continue;
        }
        let start = eliminate(&current, current.n() - target_n, total)?;
        let (out, ok) = run.solve(start)?;
        if !ok {
            break;
        }
        current = out;
    }

    // Fine phase: eliminate a few nodes per pass, halving the count after a
    // failure. A failed single-node pass would be enriched straight back to
    // n0, so the size is stable and the last converged rule is returned.
    let mut outer = 0;
    let mut count = run.enrichment_count(current.n());
    while outer < cfg.max_outer && current.n() > 1 {
        outer += 1;
        let k = count.min(current.n() - 1);
        match run.try_smaller(&current, k)? {
            Some(out) => current = out,
            None if k == 1 => break,
            None => count = (k / 2).max(1),
        }
    }

    let polished = clamp_and_polish(&mut run, current.clone())?;
    let mut rule = finish(&polished, &system, index_set, basis, domain, cfg)?;
    if rule.achieved_residual > cfg.tol || rule.weights.iter().any(|&w| w <= 0.0) {
        // Polishing lost accuracy; fall back to the unclamped iterate.
        let alt = finish(&current, &system, index_set, basis, domain, cfg)?;
        let feasible = |r: &QuadratureRule| r.reference_nodes().iter().all(|x| !domain.in_forbidden_region(x));
        if alt.achieved_residual < rule.achieved_residual && (feasible(&alt) || !feasible(&rule)) {
            rule = alt;
        }
    }
    Ok(Design {
        rule,
        trace: run.trace,
        history: run.history,
        outer_passes: outer,
    })
}

/// Runs one design per seed on separate threads; the first converged rule
/// wins and the others are cancelled. Seeds are tried in order on ties.
/// Least-squares weights for fixed nodes: minimizes the moment residual
/// `||V w - e_1 / pi_0||` over the index set. Nodes are in reference
/// coordinates.
pub fn fit_weights(nodes: &[Vec<f64>], index_set: &MultiIndexSet, basis: &BasisFamily) -> Result<Vec<f64>> {
    let m = index_set.len();
    let mut v = nalgebra::DMatrix::zeros(m, nodes.len());
    for (k, a) in index_set.iter().enumerate() {
        for (j, x) in nodes.iter().enumerate() {
            v[(k, j)] = basis.eval(a, x)?;
        }
    }
    let mut rhs = nalgebra::DVector::zeros(m);
    if let Some(k0) = index_set.iter().position(|a| a.is_zero()) {
        rhs[k0] = 1.0 / basis.pi0();
    }
    let w = v
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .map_err(|e| Error::LinearSolve(e.to_string()))?;
    Ok(w.iter().copied().collect())
}

/// Solves at a fixed size from caller-supplied nodes (reference
/// coordinates) with no elimination or enrichment. Weights default to
/// equal mass.
pub fn design_fixed(
    index_set: &MultiIndexSet,
    domain: &DomainSpec,
    basis: &BasisFamily,
    cfg: &DesignConfig,
    nodes: &[Vec<f64>],
    weights: Option<&[f64]>,
) -> Result<Design> {
    cfg.validate()?;
    if nodes.is_empty() {
        return Err(Error::InvalidArgument("need at least one starting node".into()));
    }
    let total = index_set.len() as f64;
    let system = MomentSystem::with_target(basis.clone(), index_set.clone(), domain.clone(), total)?;
    let mut solver = cfg.solver.clone();
    solver.tol = cfg.tol * total * basis.pi0();
    let n = nodes.len();
    let w: Vec<f64> = match weights {
        Some(w) => {
            let s: f64 = w.iter().sum();
            w.iter().map(|v| v * total / s).collect()
        }
        None => vec![total / n as f64; n],
    };
    let d0 = DecisionVector::from_nodes(nodes, &w)?;
    let mut run = Run {
        system: &system,
        domain,
        cfg,
        solver,
        total,
        trace: SolveTrace::empty(),
        history: Vec::new(),
        counter: 0,
        best: None,
    };
    let (out, _) = run.solve(d0)?;
    let polished = clamp_and_polish(&mut run, out.clone())?;
    let mut rule = finish(&polished, &system, index_set, basis, domain, cfg)?;
    let alt = finish(&out, &system, index_set, basis, domain, cfg)?;
    let feasible = |r: &QuadratureRule| r.reference_nodes().iter().all(|x| !domain.in_forbidden_region(x));
    if alt.achieved_residual < rule.achieved_residual && (feasible(&alt) || !feasible(&rule)) {
        rule = alt;
    }
    Ok(Design {
        rule,
        trace: run.trace,
        history: run.history,
        outer_passes: 0,
    })
}

pub fn design_race(
    index_set: &MultiIndexSet,
    domain: &DomainSpec,
    basis: &BasisFamily,
    cfg: &DesignConfig,
    seeds: &[u64],
) -> Result<Design> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("need at least one seed".into()));
    }
    let cancel = Arc::new(AtomicBool::new(false));
    let winner: Mutex<Option<Design>> = Mutex::new(None);
    let last_err: Mutex<Option<Error>> = Mutex::new(None);
    std::thread::scope(|s| {
        for &seed in seeds {
            let cancel = Arc::clone(&cancel);
            let winner = &winner;
            let last_err = &last_err;
            s.spawn(move || {
                let mut c = cfg.clone();
                c.seed = seed;
                c.solver.cancel = Some(Arc::clone(&cancel));
                match design(index_set, domain, basis, &c) {
                    Ok(d) => {
                        let mut w = winner.lock().expect("winner lock");
                        if w.is_none() {
                            *w = Some(d);
                            cancel.store(true, Ordering::Relaxed);
                        }
                    }
                    Err(e) => {
                        if !cancel.load(Ordering::Relaxed) {
                            *last_err.lock().expect("error lock") = Some(e);
                        }
                    }
                }
            });
        }
    });
    match winner.into_inner().expect("winner lock") {
        Some(d) => Ok(d),
        None => Err(last_err
            .into_inner()
            .expect("error lock")
            .unwrap_or_else(|| Error::InvalidArgument("all design runs cancelled".into()))),
    }
}

/// Sequential multi-seed retry: returns the smallest converged rule over the
/// given seeds (first seed wins ties).
pub fn design_best_of(
    index_set: &MultiIndexSet,
    domain: &DomainSpec,
    basis: &BasisFamily,
    cfg: &DesignConfig,
    seeds: &[u64],
) -> Result<Design> {
    let mut best: Option<Design> = None;
    let mut err = None;
    for &seed in seeds {
        let mut c = cfg.clone();
        c.seed = seed;
        match design(index_set, domain, basis, &c) {
            Ok(d) => {
                if best.as_ref().is_none_or(|b| d.rule.len() < b.rule.len()) {
                    best = Some(d);
                }
            }
            Err(e) => err = Some(e),
        }
    }
    best.ok_or_else(|| err.unwrap_or_else(|| Error::InvalidArgument("need at least one seed".into())))
}
