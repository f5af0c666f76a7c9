//! `dquad`: design, verify and compare quadrature rules.
//!
//! Exit codes: 0 success, 1 invalid input, 2 non-convergence or failed
//! verification.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use dquad::basis::{BasisFamily, Family, RecurrenceTable};
use dquad::design::{
    design, design_fixed, design_race, fit_weights, smolyak_level_for_order, AffineBox, Design, DesignConfig, QuadratureRule,
};
use dquad::domain::{DomainSpec, PenaltyRegion};
use dquad::index_set::{IndexSetSpec, MultiIndexSet};
use dquad::io::{self, RuleFormat};
use dquad::solver::LambdaSchedule;
use dquad::sparse_grid::{gauss_rule_for, smolyak, tensor_rule, Growth};
use dquad::verify::{exactness, lebesgue_samples, padua_points, LEBESGUE_GRID};
use dquad::Error;

/// Dimensions above this need `--extended`.
const MAX_DIM_DEFAULT: usize = 20;

#[derive(Parser, Debug)]
#[command(name = "dquad", version, about = "Positive-weight multivariate quadrature by moment matching")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Design a rule and write it with its trace and run manifest.
    Design(DesignArgs),
    /// Check a rule's moment errors and weight signs.
    Verify(VerifyArgs),
    /// Tabulate designed, sparse-grid and tensor rules for an index set.
    Compare(CompareArgs),
    /// Lebesgue constant of interpolation at a node set (d <= 2).
    Lebesgue(LebesgueArgs),
    /// Re-run the command recorded in a manifest.
    Replay {
        manifest: PathBuf,
    },
}

#[derive(Args, Debug, Clone)]
struct ProblemArgs {
    #[arg(long)]
    dim: usize,
    /// Polynomial order `r` of the index set.
    #[arg(long)]
    order: u32,
    /// total | hyperbolic | file:<path>
    #[arg(long, default_value = "total")]
    index_set: String,
    /// uniform | gaussian | chebyshev | file:<recurrence table>
    #[arg(long, default_value = "uniform")]
    weight: String,
    /// Box `lo,hi` the uniform reference domain is rescaled to.
    #[arg(long, allow_hyphen_values = true)]
    domain: Option<String>,
    /// file:<path> with a JSON list of forbidden boxes (user coordinates).
    #[arg(long)]
    region: Option<String>,
    /// Allow d > 20 and long runs.
    #[arg(long)]
    extended: bool,
}

#[derive(Args, Debug, Clone)]
struct DesignArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// Race several seeds; the first converged run wins.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long)]
    max_outer: Option<usize>,
    /// fixed:<value> | auto
    #[arg(long, default_value = "auto")]
    lambda: String,
    /// Start from this many nodes and skip the coarse elimination sweep.
    #[arg(long)]
    initial_n: Option<usize>,
    /// Largest size tried while enriching.
    #[arg(long)]
    max_n: Option<usize>,
    /// Use the normal-equation step instead of the SVD.
    #[arg(long)]
    high_dim: bool,
    #[arg(long, default_value = "json")]
    format: String,
    /// Rule output path; trace and manifest are written next to it.
    #[arg(long, short, default_value = "rule")]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct VerifyArgs {
    /// Rule file (.json or .csv), or `bundled:d4r6` for the shipped table.
    rule: String,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Overrides the order recorded in the rule (required for CSV input).
    #[arg(long)]
    order: Option<u32>,
    #[arg(long)]
    index_set: Option<String>,
    #[arg(long)]
    weight: Option<String>,
    /// Write the per-index report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct CompareArgs {
    #[arg(long)]
    dim: usize,
    /// One or more orders, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    order: Vec<u32>,
    #[arg(long, default_value = "uniform")]
    weight: String,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Seeds tried per order; the smallest converged rule is reported.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    seeds: Vec<u64>,
    /// CSV output path (stdout when absent).
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct LebesgueArgs {
    /// Rule file, `padua:<r>`, or `designed-padua:<r>` (design started near
    /// the Padua points, exact on degree 2r-1).
    nodes: String,
    /// Interpolation space order; defaults to the smallest total degree
    /// with `|Lambda| = n`.
    #[arg(long)]
    order: Option<u32>,
    #[arg(long, default_value = "chebyshev")]
    weight: String,
    #[arg(long, default_value_t = LEBESGUE_GRID)]
    grid: usize,
    /// Treat every CSV column as a coordinate (no weight column).
    #[arg(long)]
    nodes_only: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Relative perturbation of the Padua start for `designed-padua:`.
    #[arg(long, default_value_t = 0.02)]
    jitter: f64,
    /// Write the sampled Lebesgue function as CSV.
    #[arg(long)]
    samples: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RunManifest {
    command: String,
    /// Arguments after the program name; `dquad replay` re-runs them.
    args: Vec<String>,
    config: serde_json::Value,
    seed: Option<u64>,
    wall_time_secs: f64,
    outcome: String,
    artifacts: Vec<PathBuf>,
}

/// Failure classes mapped to exit codes.
enum Fail {
    Input(anyhow::Error),
    Result(String),
}

impl From<anyhow::Error> for Fail {
    fn from(e: anyhow::Error) -> Self {
        Fail::Input(e)
    }
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Input(e.into())
    }
}

type CmdResult = Result<(), Fail>;

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    run(args)
}

fn run(args: Vec<String>) -> ExitCode {
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let rest = args[1..].to_vec();
    let res = match cli.command {
        Command::Design(a) => cmd_design(&a, rest),
        Command::Verify(a) => cmd_verify(&a),
        Command::Compare(a) => cmd_compare(&a),
        Command::Lebesgue(a) => cmd_lebesgue(&a),
        Command::Replay { manifest } => return replay(&manifest),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Fail::Result(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(2)
        }
    }
}

fn replay(path: &Path) -> ExitCode {
    let manifest: RunManifest = match fs::read_to_string(path)
        .context("reading manifest")
        .and_then(|t| serde_json::from_str(&t).context("parsing manifest"))
    {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    let mut args = vec!["dquad".to_string()];
    args.extend(manifest.args);
    run(args)
}

fn parse_family(weight: &str, dim: usize, max_degree: usize) -> anyhow::Result<BasisFamily> {
    if let Some(p) = weight.strip_prefix("file:") {
        let table = RecurrenceTable::read(Path::new(p)).with_context(|| format!("reading recurrence table {p}"))?;
        return Ok(BasisFamily::from_table(table, dim)?);
    }
    let family: Family = weight.parse()?;
    Ok(BasisFamily::isotropic(family, dim, max_degree)?)
}

fn parse_pair(s: &str) -> anyhow::Result<(f64, f64)> {
    let (a, b) = s.split_once(',').ok_or_else(|| anyhow!("expected `lo,hi`, got `{s}`"))?;
    let lo: f64 = a.trim().parse().context("domain lo")?;
    let hi: f64 = b.trim().parse().context("domain hi")?;
    if !(lo < hi) {
        bail!("domain needs lo < hi");
    }
    Ok((lo, hi))
}

struct Problem {
    spec: IndexSetSpec,
    set: MultiIndexSet,
    basis: BasisFamily,
    domain: DomainSpec,
    user_box: Option<AffineBox>,
}

fn build_problem(p: &ProblemArgs) -> anyhow::Result<Problem> {
    if p.dim == 0 {
        bail!("--dim must be at least 1");
    }
    if p.dim > MAX_DIM_DEFAULT && !p.extended {
        bail!("d = {} > {MAX_DIM_DEFAULT} needs --extended", p.dim);
    }
    let spec = IndexSetSpec::from_cli(&p.index_set, p.dim, p.order)?;
    let set = spec.build()?;
    if set.dim() != p.dim {
        bail!("index set has dimension {}, --dim is {}", set.dim(), p.dim);
    }
    let max_deg = set.max_degree_per_axis().into_iter().max().unwrap_or(0) as usize;
    let basis = parse_family(&p.weight, p.dim, max_deg)?;
    let family = basis.family();
    let mut domain = DomainSpec::for_family(p.dim, family);
    let user_box = match &p.domain {
        Some(s) => {
            if family != Family::Legendre {
                bail!("--domain rescaling applies to the uniform weight only");
            }
            let (lo, hi) = parse_pair(s)?;
            Some(AffineBox::uniform(p.dim, lo, hi)?)
        }
        None => None,
    };
    if let Some(r) = &p.region {
        let path = r.strip_prefix("file:").ok_or_else(|| anyhow!("--region expects file:<path>"))?;
        let mut regions: Vec<PenaltyRegion> =
            DomainSpec::read_regions(Path::new(path)).with_context(|| format!("reading regions {path}"))?;
        if let Some(b) = &user_box {
            for reg in &mut regions {
                let lo: Vec<f64> = reg.ranges.iter().map(|r| r.0).collect();
                let hi: Vec<f64> = reg.ranges.iter().map(|r| r.1).collect();
                let (lo, hi) = (b.to_reference(&lo), b.to_reference(&hi));
                reg.ranges = lo.into_iter().zip(hi).collect();
            }
        }
        domain = domain.with_regions(regions)?;
    }
    Ok(Problem {
        spec,
        set,
        basis,
        domain,
        user_box,
    })
}

fn parse_lambda(s: &str) -> anyhow::Result<Option<f64>> {
    if s == "auto" {
        return Ok(None);
    }
    let v = s
        .strip_prefix("fixed:")
        .ok_or_else(|| anyhow!("--lambda expects fixed:<value> or auto"))?;
    let v: f64 = v.parse().context("lambda value")?;
    if !(v >= 0.0) || !v.is_finite() {
        bail!("lambda must be finite and non-negative");
    }
    Ok(Some(v))
}

/// `rule` becomes `rule.json`, `rule.trace.csv`, `rule.manifest.json`.
fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "rule".into());
    out.with_file_name(format!("{stem}.{suffix}"))
}

fn cmd_design(a: &DesignArgs, args: Vec<String>) -> CmdResult {
    let start = Instant::now();
    let prob = build_problem(&a.problem)?;
    let format = RuleFormat::parse(&a.format)?;
    if !(a.tol > 0.0) {
        return Err(Fail::Input(anyhow!("--tol must be positive")));
    }
    let mut cfg = DesignConfig {
        tol: a.tol,
        seed: a.seed.unwrap_or(0),
        initial_n: a.initial_n,
        max_n: a.max_n,
        descriptor: Some(prob.spec.clone()),
        user_box: prob.user_box.clone(),
        ..DesignConfig::default()
    };
    if let Some(m) = a.max_outer {
        cfg.max_outer = m;
    }
    cfg.solver.lambda_override = parse_lambda(&a.lambda)?;
    if cfg.solver.lambda_override.is_some() {
        cfg.solver.lambda_schedule = LambdaSchedule::Auto;
    }
    cfg.solver.high_dim_mode = a.high_dim || prob.set.dim() > MAX_DIM_DEFAULT;
    if a.seed.is_none() && a.seeds.is_empty() {
        eprintln!("note: no --seed given, using seed 0");
    }
    let result = if a.seeds.is_empty() {
        design(&prob.set, &prob.domain, &prob.basis, &cfg)
    } else {
        design_race(&prob.set, &prob.domain, &prob.basis, &cfg, &a.seeds)
    };

    let rule_path = a.out.with_extension(format.extension());
    let trace_path = sibling(&a.out, "trace.csv");
    let manifest_path = sibling(&a.out, "manifest.json");
    let (outcome, seed, artifacts, failure) = match result {
        Ok(des) => {
            let Design { rule, trace, .. } = &des;
            io::write_rule(rule, &rule_path, format)?;
            io::write_trace(trace, &trace_path)?;
            let ok = rule.achieved_residual <= a.tol && rule.weights.iter().all(|&w| w > 0.0);
            println!(
                "n = {}, residual = {:.3e}, min weight = {:.3e}, seed = {}",
                rule.len(),
                rule.achieved_residual,
                rule.min_weight(),
                rule.seed
            );
            let failure = (!ok).then(|| {
                format!(
                    "design did not reach tolerance (residual {:.3e}, min weight {:.3e})",
                    rule.achieved_residual,
                    rule.min_weight()
                )
            });
            let outcome = if ok { "converged" } else { "not converged" };
            (outcome, Some(rule.seed), vec![rule_path.clone(), trace_path.clone()], failure)
        }
        Err(Error::DesignFailed { best_residual, n, trace }) => {
            io::write_trace(&trace, &trace_path)?;
            let msg = format!("design failed to converge (best residual {best_residual:.3e} at n = {n})");
            ("not converged", None, vec![trace_path.clone()], Some(msg))
        }
        Err(e) => return Err(e.into()),
    };
    let manifest = RunManifest {
        command: "design".into(),
        args,
        config: serde_json::to_value(&cfg).map_err(anyhow::Error::from)?,
        seed,
        wall_time_secs: start.elapsed().as_secs_f64(),
        outcome: outcome.into(),
        artifacts,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(anyhow::Error::from)?;
    io::write_atomic(&manifest_path, text.as_bytes())?;
    match failure {
        None => Ok(()),
        Some(msg) => Err(Fail::Result(msg)),
    }
}

fn load_rule(spec: &str) -> anyhow::Result<QuadratureRule> {
    if spec == "bundled:d4r6" {
        return Ok(io::published_d4_r6()?);
    }
    io::read_rule(Path::new(spec)).with_context(|| format!("reading rule {spec}"))
}

fn cmd_verify(a: &VerifyArgs) -> CmdResult {
    let mut rule = load_rule(&a.rule)?;
    if let Some(w) = &a.weight {
        rule.family = w.parse::<Family>()?;
    }
    let spec = match (&a.order, &a.index_set) {
        (Some(r), kind) => IndexSetSpec::from_cli(kind.as_deref().unwrap_or("total"), rule.dim, *r)?,
        (None, Some(kind)) if kind.starts_with("file:") => IndexSetSpec::from_cli(kind, rule.dim, 0)?,
        (None, _) => rule.index_set.clone(),
    };
    let set = spec.build()?;
    if set.len() <= 1 {
        return Err(Fail::Input(anyhow!("rule carries no index set; pass --order")));
    }
    let max_deg = set.max_degree_per_axis().into_iter().max().unwrap_or(0) as usize;
    let basis = BasisFamily::isotropic(rule.family, rule.dim, max_deg)?;
    let rep = exactness(&rule, &set, &basis)?;
    if let Some(p) = &a.report {
        let mut buf = Vec::new();
        rep.write_json(&mut buf)?;
        io::write_atomic(p, &buf)?;
    }
    println!(
        "n = {}, |Lambda| = {}, max moment error = {:.3e}, epsilon = {:.3e}, min weight = {:.3e}",
        rule.len(),
        set.len(),
        rep.max_error,
        rep.epsilon,
        rep.min_weight
    );
    if let Some(&i) = rep.negative_weights.first() {
        return Err(Fail::Result(format!("negative weight at node {i}")));
    }
    if rep.max_error > a.tol {
        return Err(Fail::Result(format!(
            "max moment error {:.3e} exceeds tolerance {:.3e}",
            rep.max_error, a.tol
        )));
    }
    println!("pass");
    Ok(())
}

fn compare_row(method: &str, rule: &QuadratureRule, set: &MultiIndexSet, basis: &BasisFamily) -> anyhow::Result<String> {
    let rep = exactness(rule, set, basis)?;
    Ok(format!("{method},{},{:e},{:e}", rule.len(), rep.max_error, rep.min_weight))
}

fn plain_rule(family: Family, dim: usize, nodes: Vec<Vec<f64>>, weights: Vec<f64>) -> QuadratureRule {
    QuadratureRule {
        dim,
        family,
        index_set: IndexSetSpec::Explicit { dim, indices: vec![] },
        tolerance: f64::NAN,
        achieved_residual: f64::NAN,
        seed: 0,
        domain: None,
        nodes,
        weights,
    }
}

fn cmd_compare(a: &CompareArgs) -> CmdResult {
    if a.dim == 0 || a.dim > 8 {
        return Err(Fail::Input(anyhow!("compare supports 1 <= d <= 8")));
    }
    if a.seeds.is_empty() {
        return Err(Fail::Input(anyhow!("need at least one seed")));
    }
    let family: Family = a.weight.parse()?;
    let mut lines = vec!["method,n,max_moment_error,min_weight".to_string()];
    for &r in &a.order {
        let spec = IndexSetSpec::Total { dim: a.dim, order: r };
        let set = spec.build()?;
        let basis = BasisFamily::isotropic(family, a.dim, r as usize)?;
        let domain = DomainSpec::for_family(a.dim, family);
        let cfg = DesignConfig {
            tol: a.tol,
            descriptor: Some(spec),
            ..DesignConfig::default()
        };
        let mut best: Option<QuadratureRule> = None;
        for &seed in &a.seeds {
            let c = DesignConfig { seed, ..cfg.clone() };
            if let Ok(d) = design(&set, &domain, &basis, &c) {
                let ok = d.rule.achieved_residual <= a.tol && d.rule.min_weight() > 0.0;
                if ok && best.as_ref().is_none_or(|b| d.rule.len() < b.len()) {
                    best = Some(d.rule);
                }
            }
        }
        match &best {
            Some(rule) => lines.push(compare_row(&format!("designed_r{r}"), rule, &set, &basis)?),
            None => lines.push(format!("designed_r{r},0,NaN,NaN")),
        }
        let k = smolyak_level_for_order(r);
        let sg = smolyak(a.dim, k, family, Growth::GaussLinear)?;
        let sg_rule = plain_rule(family, a.dim, sg.nodes, sg.weights);
        lines.push(compare_row(&format!("sparse_grid_r{r}"), &sg_rule, &set, &basis)?);
        let per_axis = (r as usize + 2) / 2;
        let g = gauss_rule_for(family, per_axis)?;
        let (nodes, weights) = tensor_rule(&vec![g; a.dim]);
        let t_rule = plain_rule(family, a.dim, nodes, weights);
        lines.push(compare_row(&format!("tensor_r{r}"), &t_rule, &set, &basis)?);
    }
    let text = lines.join("\n") + "\n";
    match &a.out {
        Some(p) => io::write_atomic(p, text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(())
}

fn smallest_total_order(dim: usize, n: usize) -> anyhow::Result<u32> {
    (0..64u32)
        .find(|&r| dquad::index_set::total_degree(dim, r).len() == n)
        .ok_or_else(|| anyhow!("{n} nodes match no total-degree space in d = {dim}; pass --order"))
}

fn cmd_lebesgue(a: &LebesgueArgs) -> CmdResult {
    let family: Family = a.weight.parse()?;
    let nodes: Vec<Vec<f64>> = if let Some(r) = a.nodes.strip_prefix("padua:") {
        padua_points(r.parse().context("padua degree")?)
    } else if let Some(r) = a.nodes.strip_prefix("designed-padua:") {
        let r: usize = r.parse().context("padua degree")?;
        designed_near_padua(r, family, a.seed, a.jitter)?
    } else if a.nodes_only {
        let text = fs::read_to_string(&a.nodes).with_context(|| format!("reading {}", a.nodes))?;
        io::points_from_csv(&text)?
    } else {
        load_rule(&a.nodes)?.reference_nodes()
    };
    let dim = nodes.first().map_or(0, Vec::len);
    if dim == 0 || dim > 2 {
        return Err(Fail::Input(anyhow!("Lebesgue constants need d = 1 or 2 (got {dim})")));
    }
    let order = match a.order {
        Some(r) => r,
        None => smallest_total_order(dim, nodes.len())?,
    };
    let set = dquad::index_set::total_degree(dim, order);
    let basis = BasisFamily::isotropic(family, dim, order as usize)?;
    let samples = match lebesgue_samples(&nodes, &set, &basis, a.grid) {
        Ok(s) => s,
        Err(Error::NotUnisolvent) => return Err(Fail::Result("nodes are not unisolvent".into())),
        Err(e) => return Err(e.into()),
    };
    println!("L = {:.6}", samples.constant);
    if let Some(p) = &a.samples {
        let mut text = String::new();
        if dim == 1 {
            text.push_str("x,lebesgue\n");
            for (x, v) in samples.axes[0].iter().zip(&samples.values) {
                text.push_str(&format!("{x:?},{v:?}\n"));
            }
        } else {
            text.push_str("x,y,lebesgue\n");
            let ny = samples.axes[1].len();
            for (k, v) in samples.values.iter().enumerate() {
                let (x, y) = (samples.axes[0][k / ny], samples.axes[1][k % ny]);
                text.push_str(&format!("{x:?},{y:?},{v:?}\n"));
            }
        }
        io::write_atomic(p, text.as_bytes())?;
    }
    Ok(())
}

/// Rule of `(r+1)(r+2)/2` nodes exact on total degree `2r - 1`, started
/// from slightly jittered Padua points.
fn designed_near_padua(r: usize, family: Family, seed: u64, jitter_scale: f64) -> anyhow::Result<Vec<Vec<f64>>> {
    if !(0.0..1.0).contains(&jitter_scale) {
        bail!("--jitter must lie in [0, 1)");
    }
    let order = (2 * r).saturating_sub(1) as u32;
    let set = dquad::index_set::total_degree(2, order);
    let basis = BasisFamily::isotropic(family, 2, order as usize)?;
    let domain = DomainSpec::for_family(2, family);
    let mut state = seed.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut jitter = || {
        // SplitMix64 step mapped to [-1, 1).
        state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
        (z >> 11) as f64 / (1u64 << 52) as f64 - 1.0
    };
    let start: Vec<Vec<f64>> = padua_points(r)
        .into_iter()
        .map(|p| p.into_iter().map(|v| ((1.0 - jitter_scale) * v + jitter_scale * jitter()).clamp(-1.0, 1.0)).collect())
        .collect();
    let cfg = DesignConfig {
        seed,
        ..DesignConfig::default()
    };
    // Start from the least-squares weights of the unperturbed points, which
    // already form a positive rule of this degree.
    let w0 = fit_weights(&padua_points(r), &set, &basis)?;
    let des = design_fixed(&set, &domain, &basis, &cfg, &start, Some(&w0))?;
    eprintln!(
        "designed {} nodes, residual {:.3e}, min weight {:.3e}",
        des.rule.len(),
        des.rule.achieved_residual,
        des.rule.min_weight()
    );
    Ok(des.rule.reference_nodes())
}
