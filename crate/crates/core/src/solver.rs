//! Regularized Gauss-Newton iteration on the penalty-augmented moment system.

use std::fmt;
use std::io::Write;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moment::{penalty_constant, stack_augmented, DecisionVector, MomentSystem, DEFAULT_PENALTY_A};

/// Augmented residual below which the shifted step replaces Tikhonov filtering.
pub const SHIFTED_STEP_THRESHOLD: f64 = 1e-2;

/// Relative cutoff under which a singular value counts as zero.
const SIGMA_CUTOFF: f64 = 1e-14;

/// How the regularization parameter is chosen during a solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LambdaSchedule {
    /// Re-select from the singular-value spectrum every update period.
    Auto,
    /// Piecewise-constant in `||R||`: the first band with `res <= upper` wins,
    /// the last value applies above every band.
    ResidualBands { bands: Vec<(f64, f64)> },
}

impl LambdaSchedule {
    /// Illustrative bands: 50 for large residuals, 10 in the mid range.
    pub fn illustrative() -> Self {
        LambdaSchedule::ResidualBands {
            bands: vec![(20.0, 1.0), (200.0, 10.0), (f64::INFINITY, 50.0)],
        }
    }

    fn band_value(bands: &[(f64, f64)], res: f64) -> Option<f64> {
        bands
            .iter()
            .find(|&&(upper, _)| res <= upper)
            .or(bands.last())
            .map(|&(_, v)| v)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iters: usize,
    pub lambda_update_period: usize,
    /// Fixed regularization parameter; disables re-selection.
    pub lambda_override: Option<f64>,
    pub lambda_schedule: LambdaSchedule,
    pub penalty_a: f64,
    pub stagnation_window: usize,
    /// Declares stagnation when `||R~||` fails to shrink by
    /// `progress_factor` over this many iterations (0 disables).
    pub progress_window: usize,
    pub progress_factor: f64,
    /// Regularized normal equations without any SVD.
    pub high_dim_mode: bool,
    /// Scale the regularization up until a step lowers `||R~||`, and relax
    /// it again after immediately successful steps.
    pub adaptive_damping: bool,
    #[serde(skip)]
    pub cancel: Option<Arc<AtomicBool>>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-8,
            max_iters: 1000,
            lambda_update_period: 30,
            lambda_override: None,
            lambda_schedule: LambdaSchedule::Auto,
            penalty_a: DEFAULT_PENALTY_A,
            stagnation_window: 5,
            progress_window: 60,
            progress_factor: 0.5,
            high_dim_mode: false,
            adaptive_damping: true,
            cancel: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument("tol must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
        }
        if let Some(l) = self.lambda_override {
            if !(l >= 0.0) {
                return Err(Error::InvalidArgument("lambda must be non-negative".into()));
            }
        }
        Ok(())
    }

    fn cancelled(&self) -> bool {
        self.cancel.as_ref().is_some_and(|c| c.load(Ordering::Relaxed))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Converged,
    Stagnated,
    IterCap,
    Cancelled,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Converged => "converged",
            Outcome::Stagnated => "stagnated",
            Outcome::IterCap => "iter_cap",
            Outcome::Cancelled => "cancelled",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub res_aug: f64,
    pub res: f64,
    pub eta: f64,
    pub c: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    pub records: Vec<IterRecord>,
    pub outcome: Outcome,
    pub final_res_aug: f64,
    pub final_res: f64,
    /// Iterations where the decrement inner product came out negative.
    pub negative_decrements: usize,
}

impl SolveTrace {
    /// Number of Gauss-Newton steps taken.
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn converged(&self) -> bool {
        self.outcome == Outcome::Converged
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iter,res_aug,res,eta,c,lambda")?;
        for r in &self.records {
            writeln!(w, "{},{:e},{:e},{:e},{:e},{:e}", r.iter, r.res_aug, r.res, r.eta, r.c, r.lambda)?;
        }
        Ok(())
    }

    /// Appends the records of `other`, renumbering iterations.
    pub fn extend(&mut self, other: &SolveTrace) {
        let base = self.records.len();
        self.records.extend(other.records.iter().enumerate().map(|(k, r)| IterRecord {
            iter: base + k,
            ..*r
        }));
        self.outcome = other.outcome;
        self.final_res_aug = other.final_res_aug;
        self.final_res = other.final_res;
        self.negative_decrements += other.negative_decrements;
    }

    pub fn empty() -> Self {
        SolveTrace {
            records: Vec::new(),
            outcome: Outcome::IterCap,
            final_res_aug: f64::INFINITY,
            final_res: f64::INFINITY,
            negative_decrements: 0,
        }
    }
}

/// Thin SVD with singular values sorted in decreasing order.
struct Svd {
    u: DMatrix<f64>,
    sigma: Vec<f64>,
    v: DMatrix<f64>,
}

fn svd(j: &DMatrix<f64>) -> Result<Svd> {
    let s = j
        .clone()
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::LinearSolve("SVD did not converge".into()))?;
    let u = s.u.ok_or_else(|| Error::LinearSolve("missing U".into()))?;
    let v_t = s.v_t.ok_or_else(|| Error::LinearSolve("missing V".into()))?;
    let mut order: Vec<usize> = (0..s.singular_values.len()).collect();
    order.sort_by(|&a, &b| s.singular_values[b].total_cmp(&s.singular_values[a]));
    let sigma = order.iter().map(|&i| s.singular_values[i]).collect();
    let u = DMatrix::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])]);
    let v = DMatrix::from_fn(v_t.ncols(), order.len(), |r, c| v_t[(order[c], r)]);
    Ok(Svd { u, sigma, v })
}

fn filtered_step(s: &Svd, r: &DVector<f64>, filter: impl Fn(f64) -> f64) -> DVector<f64> {
    let smax = s.sigma.first().copied().unwrap_or(0.0);
    let mut step = DVector::zeros(s.v.nrows());
    for (i, &sig) in s.sigma.iter().enumerate() {
        if sig <= smax * SIGMA_CUTOFF {
            continue;
        }
        let coef = filter(sig) * s.u.column(i).dot(r);
        if coef != 0.0 {
            step.axpy(coef, &s.v.column(i), 1.0);
        }
    }
    step
}

fn tikhonov_from_svd(s: &Svd, r: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let l2 = lambda * lambda;
    filtered_step(s, r, |sig| sig / (sig * sig + l2))
}

fn shifted_from_svd(s: &Svd, r: &DVector<f64>, lambda: f64) -> DVector<f64> {
    filtered_step(s, r, |sig| 1.0 / (sig + lambda))
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("lambda must be >= 0, got {lambda}")))
    }
}

/// `sum_i sigma_i/(sigma_i^2 + lambda^2) (u_i^T R) v_i`.
pub fn tikhonov_step(j: &DMatrix<f64>, r: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    check_lambda(lambda)?;
    Ok(tikhonov_from_svd(&svd(j)?, r, lambda))
}

/// `sum_i (u_i^T R)/(sigma_i + lambda) v_i`.
pub fn shifted_step(j: &DMatrix<f64>, r: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    check_lambda(lambda)?;
    Ok(shifted_from_svd(&svd(j)?, r, lambda))
}

/// `(J^T J + lambda I)^{-1} J^T R` by Cholesky on the shifted normal matrix.
pub fn normal_equation_step(j: &DMatrix<f64>, r: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    check_lambda(lambda)?;
    let mut a = j.tr_mul(j);
    for k in 0..a.nrows() {
        a[(k, k)] += lambda;
    }
    let g = j.tr_mul(r);
    a.cholesky()
        .map(|ch| ch.solve(&g))
        .ok_or_else(|| Error::LinearSolve("shifted normal matrix not positive definite".into()))
}

/// Regularization parameter at the first spike of the log-spectrum curvature.
pub fn select_lambda(singular_values: &[f64]) -> f64 {
    let mut s: Vec<f64> = singular_values.iter().copied().filter(|v| v.is_finite()).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    let smax = s.first().copied().unwrap_or(0.0);
    s.retain(|&v| v > smax * SIGMA_CUTOFF && v > 0.0);
    let (Some(&hi), Some(&lo)) = (s.first(), s.last()) else {
        return 0.0;
    };
    let fallback = (hi * lo).sqrt();
    if s.len() < 3 {
        return fallback;
    }
    let logs: Vec<f64> = s.iter().map(|v| v.ln()).collect();
    let mut first: Vec<f64> = logs.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    first.sort_by(f64::total_cmp);
    let median = if first.len() % 2 == 1 {
        first[first.len() / 2]
    } else {
        0.5 * (first[first.len() / 2 - 1] + first[first.len() / 2])
    };
    let threshold = 5.0 * median;
    for i in 1..logs.len() - 1 {
        let curv = logs[i + 1] - 2.0 * logs[i] + logs[i - 1];
        if curv.abs() > threshold && threshold > 0.0 {
            return s[i + 1].clamp(lo, hi);
        }
    }
    fallback
}

/// `eta = (dd^T J^T R)^{1/2}`; the flag is set when the inner product is negative.
pub fn newton_decrement(step: &DVector<f64>, j: &DMatrix<f64>, r: &DVector<f64>) -> (f64, bool) {
    decrement_from_gradient(step, &j.tr_mul(r))
}

fn decrement_from_gradient(step: &DVector<f64>, grad: &DVector<f64>) -> (f64, bool) {
    let ip = step.dot(grad);
    if ip < 0.0 {
        (0.0, true)
    } else {
        (ip.sqrt(), false)
    }
}

/// Sparse view of the moment Jacobian used by the high-dimensional path.
struct SparseRows {
    /// Per row: (column, value) pairs.
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseRows {
    fn from_dense(j: &DMatrix<f64>) -> Self {
        let rows = (0..j.nrows())
            .map(|k| {
                (0..j.ncols())
                    .filter_map(|c| {
                        let v = j[(k, c)];
                        (v != 0.0).then_some((c, v))
                    })
                    .collect()
            })
            .collect();
        SparseRows { rows }
    }

    fn tr_mul(&self, r: &DVector<f64>, cols: usize) -> DVector<f64> {
        let mut g = DVector::zeros(cols);
        for (k, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                g[c] += v * r[k];
            }
        }
        g
    }

    fn mul(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.rows.len(),
            self.rows.iter().map(|row| row.iter().map(|&(c, v)| v * x[c]).sum()),
        )
    }
}

/// `(J^T J + D)^{-1} g` with diagonal `D > 0`, through the `M x M` system
/// `I + J D^{-1} J^T` (Woodbury), which is far smaller than the column space
/// when `(d + 1) n` exceeds `M`.
fn woodbury_solve(j: &SparseRows, diag: &[f64], g: &DVector<f64>) -> Result<DVector<f64>> {
    let m = j.rows.len();
    let dinv_g = DVector::from_iterator(g.len(), g.iter().zip(diag).map(|(a, d)| a / d));
    // Column-major scatter of J D^{-1/2} into per-column lists.
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); diag.len()];
    for (k, row) in j.rows.iter().enumerate() {
        for &(c, v) in row {
            cols[c].push((k, v / diag[c].sqrt()));
        }
    }
    let mut gram = DMatrix::<f64>::identity(m, m);
    for col in &cols {
        for &(a, va) in col {
            for &(b, vb) in col {
                if b <= a {
                    gram[(a, b)] += va * vb;
                }
            }
        }
    }
    for a in 0..m {
        for b in a + 1..m {
            gram[(a, b)] = gram[(b, a)];
        }
    }
    let rhs = j.mul(&dinv_g);
    let y = gram
        .cholesky()
        .ok_or_else(|| Error::LinearSolve("Woodbury system not positive definite".into()))?
        .solve(&rhs);
    let back = j.tr_mul(&y, diag.len());
    Ok(DVector::from_iterator(
        g.len(),
        (0..g.len()).map(|c| dinv_g[c] - back[c] / diag[c]),
    ))
}

/// The augmented system without its identically zero penalty rows, which
/// changes neither the singular triplets with nonzero value nor any step.
fn stack_active(
    r: &DVector<f64>,
    j: &DMatrix<f64>,
    p: &[f64],
    pdiag: &[f64],
    c: f64,
) -> (DVector<f64>, DMatrix<f64>) {
    let active: Vec<usize> = (0..p.len()).filter(|&k| p[k] != 0.0 || pdiag[k] != 0.0).collect();
    if active.len() == p.len() {
        return stack_augmented(r, j, p, pdiag, c);
    }
    let (m, cols) = j.shape();
    let rows = m + active.len();
    let mut ra = DVector::zeros(rows);
    ra.rows_mut(0, m).copy_from(r);
    let mut ja = DMatrix::zeros(rows, cols);
    ja.view_mut((0, 0), (m, cols)).copy_from(j);
    for (q, &k) in active.iter().enumerate() {
        ra[m + q] = c * p[k];
        ja[(m + q, k)] = c * pdiag[k];
    }
    (ra, ja)
}

const MAX_DAMPING_TRIES: usize = 14;
/// Retries are cheap once the SVD exists, so the dense path may sweep the
/// damping all the way up to a multiple of the largest singular value.
const MAX_DENSE_DAMPING_TRIES: usize = 60;
const MU_MIN: f64 = 1e-6;
const MU_MAX: f64 = 1e30;
const MU_INCREASE: f64 = 4.0;
const MU_DECREASE: f64 = 3.0;

/// Regularization actually applied: the selected `lambda` scaled by the
/// damping multiplier, with `floor` standing in when `lambda` is zero.
fn damped(lambda: f64, mu: f64, floor: f64) -> f64 {
    if lambda > 0.0 {
        lambda * mu
    } else if mu > 1.0 {
        floor * mu
    } else {
        0.0
    }
}

/// Whether `dv - step` has a smaller augmented residual at the same `c`.
fn trial_decreases(system: &MomentSystem, dv: &DecisionVector, step: &DVector<f64>, c: f64, current: f64) -> bool {
    let mut trial = dv.clone();
    for (x, s) in trial.as_mut_slice().iter_mut().zip(step.iter()) {
        *x -= s;
    }
    let Ok(r) = system.residual(&trial) else {
        return false;
    };
    let (p, _) = system.penalties(&trial);
    let pen: f64 = p.iter().map(|v| v * v).sum::<f64>().sqrt();
    let aug = r.norm().hypot(c * pen);
    aug.is_finite() && aug < current
}

/// Result of [`solve`].
#[derive(Debug, Clone)]
pub struct Solution {
    pub dv: DecisionVector,
    pub trace: SolveTrace,
}

/// Runs Gauss-Newton from `d0` until convergence, stagnation, the iteration cap
/// or cancellation. The returned decision vector is the last iterate.
pub fn solve(system: &MomentSystem, d0: DecisionVector, cfg: &SolverConfig) -> Result<Solution> {
    solve_inner(system, d0, cfg, None)
}

/// Like [`solve`], but decision variables flagged in `frozen` never move.
pub fn solve_masked(
    system: &MomentSystem,
    d0: DecisionVector,
    cfg: &SolverConfig,
    frozen: &[bool],
) -> Result<Solution> {
    if frozen.len() != d0.len() {
        return Err(Error::DimensionMismatch {
            expected: d0.len(),
            found: frozen.len(),
        });
    }
    solve_inner(system, d0, cfg, Some(frozen))
}

fn solve_inner(
    system: &MomentSystem,
    d0: DecisionVector,
    cfg: &SolverConfig,
    frozen: Option<&[bool]>,
) -> Result<Solution> {
    cfg.validate()?;
    if d0.dim() != system.dim() {
        return Err(Error::DimensionMismatch {
            expected: system.dim(),
            found: d0.dim(),
        });
    }
    let mut dv = d0;
    let mut trace = SolveTrace::empty();
    let mut c_run = 0.0_f64;
    let mut lambda = cfg.lambda_override.unwrap_or(f64::NAN);
    let mut stagnant = 0usize;
    let mut history: Vec<f64> = Vec::new();
    let mut iter = 0usize;
    let mut mu = 1.0_f64;

    loop {
        let (r, mut j) = system.residual_and_jacobian(&dv)?;
        let (p, mut pj) = system.penalties(&dv);
        if let Some(mask) = frozen {
            for (col, _) in mask.iter().enumerate().filter(|(_, &f)| f) {
                j.column_mut(col).fill(0.0);
                pj.diag[col] = 0.0;
            }
        }
        let res = r.norm();
        if !res.is_finite() || !dv.is_finite() {
            return Err(Error::NonFinite { iter });
        }
        let c = c_run.max(penalty_constant(res, cfg.penalty_a));
        c_run = c;
        let pen: f64 = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        let res_aug = res.hypot(c * pen);
        trace.final_res = res;
        trace.final_res_aug = res_aug;

        if res_aug < cfg.tol {
            trace.outcome = Outcome::Converged;
            break;
        }
        if iter >= cfg.max_iters {
            trace.outcome = Outcome::IterCap;
            break;
        }
        if cfg.cancelled() {
            trace.outcome = Outcome::Cancelled;
            break;
        }

        if cfg.lambda_override.is_none() {
            if let LambdaSchedule::ResidualBands { bands } = &cfg.lambda_schedule {
                lambda = LambdaSchedule::band_value(bands, res).unwrap_or(1.0);
            }
        }
        let tries = if cfg.adaptive_damping { MAX_DAMPING_TRIES } else { 1 };
        let mut accepted: Option<(DVector<f64>, f64, bool, f64)> = None;

        if cfg.high_dim_mode {
            if cfg.lambda_override.is_none() && cfg.lambda_schedule == LambdaSchedule::Auto {
                // No spectrum is available; shift proportionally to the residual.
                lambda = res.clamp(1e-10, 1.0);
            }
            let sparse = SparseRows::from_dense(&j);
            let ncols = j.ncols();
            let mut grad = sparse.tr_mul(&r, ncols);
            let mut pen_diag = vec![0.0; ncols];
            for (k, (&pk, &gk)) in p.iter().zip(&pj.diag).enumerate() {
                grad[k] += c * c * gk * pk;
                pen_diag[k] = c * c * gk * gk;
            }
            for t in 0..tries {
                // The normal-equation shift is the square of the Tikhonov one.
                let lam_eff = damped(lambda, mu * mu, 1e-12);
                let diag: Vec<f64> = pen_diag.iter().map(|g| g + lam_eff.max(1e-300)).collect();
                let step = woodbury_solve(&sparse, &diag, &grad)?;
                let (eta, neg) = decrement_from_gradient(&step, &grad);
                if !cfg.adaptive_damping || trial_decreases(system, &dv, &step, c, res_aug) {
                    accepted = Some((step, eta, neg, lam_eff));
                    if t == 0 {
                        mu = (mu / MU_DECREASE).max(MU_MIN);
                    }
                    break;
                }
                mu = (mu * MU_INCREASE).min(MU_MAX);
            }
        } else {
            let (ra, ja) = stack_active(&r, &j, &p, &pj.diag, c);
            let s = svd(&ja)?;
            if cfg.lambda_override.is_none()
                && cfg.lambda_schedule == LambdaSchedule::Auto
                && (iter.is_multiple_of(cfg.lambda_update_period.max(1)) || !lambda.is_finite())
            {
                lambda = select_lambda(&s.sigma);
            }
            let grad = ja.tr_mul(&ra);
            let smax = s.sigma.first().copied().unwrap_or(1.0);
            let floor = smax * 1e-8;
            let dense_tries = if cfg.adaptive_damping { MAX_DENSE_DAMPING_TRIES } else { 1 };
            for t in 0..dense_tries {
                let lam_eff = damped(lambda, mu, floor);
                if t > 0 && lam_eff > smax * 1e8 {
                    break;
                }
                let step = if res_aug < SHIFTED_STEP_THRESHOLD {
                    shifted_from_svd(&s, &ra, lam_eff)
                } else {
                    tikhonov_from_svd(&s, &ra, lam_eff)
                };
                let (eta, neg) = decrement_from_gradient(&step, &grad);
                if !cfg.adaptive_damping || trial_decreases(system, &dv, &step, c, res_aug) {
                    accepted = Some((step, eta, neg, lam_eff));
                    if t == 0 {
                        mu = (mu / MU_DECREASE).max(MU_MIN);
                    }
                    break;
                }
                mu = (mu * MU_INCREASE).min(MU_MAX);
            }
        }

        let Some((step, eta, negative, lam_used)) = accepted else {
            // No damping level reduces the residual: a stationary point.
            trace.records.push(IterRecord {
                iter,
                res_aug,
                res,
                eta: 0.0,
                c,
                lambda: damped(lambda, mu, 0.0),
            });
            trace.outcome = Outcome::Stagnated;
            break;
        };
        if negative {
            trace.negative_decrements += 1;
        }
        trace.records.push(IterRecord {
            iter,
            res_aug,
            res,
            eta,
            c,
            lambda: lam_used,
        });

        if eta < cfg.tol && res_aug >= 10.0 * cfg.tol {
            stagnant += 1;
        } else {
            stagnant = 0;
        }
        history.push(res_aug);
        let no_progress = cfg.progress_window > 0
            && history.len() > cfg.progress_window
            && res_aug >= 10.0 * cfg.tol
            && res_aug > cfg.progress_factor * history[history.len() - 1 - cfg.progress_window];
        if stagnant >= cfg.stagnation_window.max(1) || no_progress {
            trace.outcome = Outcome::Stagnated;
            break;
        }

        for (x, s) in dv.as_mut_slice().iter_mut().zip(step.iter()) {
            *x -= s;
        }
        iter += 1;
    }
    Ok(Solution { dv, trace })
}
