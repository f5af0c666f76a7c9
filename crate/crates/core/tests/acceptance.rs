//! End-to-end acceptance checks, one line per criterion.
//!
//! Set `DQUAD_EXTENDED=1` to also run the d = 100 hyperbolic-cross design.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use dquad::basis::{BasisFamily, Family};
use dquad::design::{design, AffineBox, Design, DesignConfig, QuadratureRule};
use dquad::domain::{u_shape_regions, DomainSpec};
use dquad::index_set::{
    half_set_lower_bound_total, half_set_size, hyperbolic_cross, total_degree, IndexSetSpec, MultiIndexSet,
};
use dquad::io::published_d4_r6;
use dquad::sparse_grid::{gauss_rule_for, smolyak, tensor_rule, Growth};
use dquad::verify::{discrete_projection, exactness, lebesgue_constant, padua_points, stability_gap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

enum Status {
    Pass,
    Fail,
    Skipped,
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn legendre(d: usize, r: u32) -> (MultiIndexSet, DomainSpec, BasisFamily) {
    (
        total_degree(d, r),
        DomainSpec::reference_box(d, Family::Legendre),
        BasisFamily::isotropic(Family::Legendre, d, r as usize).unwrap(),
    )
}

fn cfg(seed: u64, tol: f64, d: usize, r: u32) -> DesignConfig {
    DesignConfig {
        tol,
        descriptor: Some(IndexSetSpec::Total { dim: d, order: r }),
        ..DesignConfig::with_seed(seed)
    }
}

/// Rules designed by the size criteria, kept for the lower-bound check.
struct Designed {
    d: usize,
    r: u32,
    n: usize,
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for family in [Family::Legendre, Family::HermiteProbabilist, Family::ChebyshevFirstKind] {
        let basis = BasisFamily::isotropic(family, 1, 40).map_err(|e| e.to_string())?;
        for n in 1..=20 {
            let g = gauss_rule_for(family, n).map_err(|e| e.to_string())?;
            let rule = QuadratureRule {
                dim: 1,
                family,
                index_set: IndexSetSpec::Total { dim: 1, order: 2 * n as u32 - 1 },
                tolerance: 1e-12,
                achieved_residual: 0.0,
                seed: 0,
                domain: None,
                nodes: g.nodes.iter().map(|&x| vec![x]).collect(),
                weights: g.weights.clone(),
            };
            let rep = exactness(&rule, &total_degree(1, 2 * n as u32 - 1), &basis).map_err(|e| e.to_string())?;
            ensure(rep.max_error <= 1e-12, || format!("{family} n={n}: moment error {:.2e}", rep.max_error))?;
            worst = worst.max(rep.max_error);
        }
    }
    let h = gauss_rule_for(Family::HermiteProbabilist, 10).map_err(|e| e.to_string())?;
    let m8 = h.integrate(|x| x.powi(8));
    ensure((m8 - 105.0).abs() <= 1e-10, || format!("Hermite E[x^8] = {m8}"))?;
    let el = t.elapsed();
    ensure(el < Duration::from_secs(1), || format!("took {el:.2?}"))?;
    Ok(format!("max moment error {worst:.1e}, E[x^8] = {m8:.12}, {el:.2?}"))
}

fn criterion_2() -> Outcome {
    let (set, dom, basis) = legendre(2, 2);
    let t = Instant::now();
    let mut good = 0;
    for seed in 0..100 {
        let mut c = cfg(seed, 1e-8, 2, 2);
        c.user_box = Some(AffineBox::uniform(2, 0.0, 1.0).unwrap());
        if let Ok(des) = design(&set, &dom, &basis, &c) {
            let r = &des.rule;
            let inside = r.nodes.iter().flatten().all(|&v| (0.0..=1.0).contains(&v));
            if r.len() == 3 && r.achieved_residual <= 1e-8 && r.min_weight() > 0.0 && inside {
                good += 1;
            }
        }
    }
    let el = t.elapsed();
    ensure(good >= 90, || format!("only {good}/100 seeds gave n=3"))?;
    ensure(el <= Duration::from_secs(60), || format!("took {el:.2?}"))?;
    Ok(format!("{good}/100 seeds reach n=3 on [0,1]^2, {el:.2?}"))
}

/// Multi-seed retries allowed per design.
const SEED_BUDGET: u64 = 10;

fn smallest_over_seeds(d: usize, r: u32, target: usize, tol: f64) -> Result<Design, String> {
    let (set, dom, basis) = legendre(d, r);
    let mut best: Option<Design> = None;
    for seed in 0..SEED_BUDGET {
        let Ok(des) = design(&set, &dom, &basis, &cfg(seed, tol, d, r)) else {
            continue;
        };
        if des.rule.achieved_residual > tol || des.rule.min_weight() <= 0.0 {
            continue;
        }
        let n = des.rule.len();
        if best.as_ref().is_none_or(|b| n < b.rule.len()) {
            best = Some(des);
        }
        if n <= target {
            break;
        }
    }
    best.ok_or_else(|| format!("d={d} r={r}: no seed converged"))
}

fn criterion_3(found: &mut Vec<Designed>) -> Outcome {
    let t = Instant::now();
    let mut summary = Vec::new();
    for d in 2..=6 {
        for (r, want) in [(2, d + 1), (3, 2 * d)] {
            let des = smallest_over_seeds(d, r, want, 1e-8)?;
            let n = des.rule.len();
            found.push(Designed { d, r, n });
            ensure(n == want, || format!("d={d} r={r}: n={n}, want {want}"))?;
            summary.push(format!("{n}"));
        }
    }
    Ok(format!("n = {} (d=2..6, r=2,3), {:.2?}", summary.join(","), t.elapsed()))
}

fn criterion_4(found: &mut Vec<Designed>) -> Outcome {
    let t = Instant::now();
    let mut got = Vec::new();
    for (r, want) in [(2, 4), (3, 6), (4, 10), (5, 13)] {
        let des = smallest_over_seeds(3, r, want, 1e-8)?;
        let n = des.rule.len();
        found.push(Designed { d: 3, r, n });
        ensure(n <= want + 1, || format!("r={r}: n={n}, want {want}(+1)"))?;
        got.push(n.to_string());
    }
    let el = t.elapsed();
    ensure(el <= Duration::from_secs(600), || format!("took {el:.2?}"))?;
    Ok(format!("d=3 counts {} (want 4,6,10,13), {el:.2?}", got.join(",")))
}

fn criterion_5(found: &mut Vec<Designed>) -> Outcome {
    let mut parts = Vec::new();
    for (r, n_ref, it_ref) in [(2u32, 5usize, 9usize), (4, 16, 56), (6, 43, 146)] {
        let t = Instant::now();
        // Seeds are tried in order until one meets the size bound.
        let des = smallest_over_seeds(4, r, n_ref + 1, 1e-12)?;
        let n = des.rule.len();
        let res = des.rule.achieved_residual;
        let it = des.final_solve_iterations();
        found.push(Designed { d: 4, r, n });
        ensure(res <= 1e-12, || format!("r={r}: residual {res:.2e}"))?;
        ensure(n <= n_ref + 1, || format!("r={r}: n={n} > {}", n_ref + 1))?;
        ensure(it <= 10 * it_ref && it * 10 >= it_ref, || {
            format!("r={r}: {it} iterations vs reference {it_ref}")
        })?;
        parts.push(format!("r={r}: n={n} |R|={res:.1e} it={it} ({:.1?})", t.elapsed()));
    }
    Ok(parts.join("; "))
}

fn criterion_6(found: &[Designed]) -> Outcome {
    for f in found {
        let lb = half_set_lower_bound_total(f.d, f.r);
        ensure(f.n >= lb, || format!("d={} r={}: n={} below bound {lb}", f.d, f.r, f.n))?;
    }
    for d in 1..=3 {
        for r in 0..=6 {
            let h = half_set_size(&total_degree(d, r)).map_err(|e| e.to_string())?;
            let want = half_set_lower_bound_total(d, r);
            ensure(h == want, || format!("half-set d={d} r={r}: search {h} vs closed form {want}"))?;
        }
    }
    Ok(format!("{} designed rules above the bound; half-set search matches for d<=3, r<=6", found.len()))
}

fn criterion_7() -> Outcome {
    let rule = published_d4_r6().map_err(|e| e.to_string())?;
    let set = total_degree(4, 6);
    let basis = BasisFamily::isotropic(Family::Legendre, 4, 6).unwrap();
    let rep = exactness(&rule, &set, &basis).map_err(|e| e.to_string())?;
    ensure(rule.len() == 43, || format!("{} rows", rule.len()))?;
    ensure(rep.max_error <= 1e-4, || format!("max moment error {:.2e}", rep.max_error))?;
    ensure(rule.weights.iter().all(|&w| w > 0.0 && w < 1.0), || "weight outside (0,1)".into())?;
    Ok(format!("43 nodes, max moment error {:.1e}", rep.max_error))
}

fn criterion_8() -> Outcome {
    let sg = smolyak(3, 3, Family::Legendre, Growth::GaussLinear).map_err(|e| e.to_string())?;
    let set = total_degree(3, 5);
    let basis = BasisFamily::isotropic(Family::Legendre, 3, 5).unwrap();
    let rule = QuadratureRule {
        dim: 3,
        family: Family::Legendre,
        index_set: IndexSetSpec::Total { dim: 3, order: 5 },
        tolerance: 1e-12,
        achieved_residual: 0.0,
        seed: 0,
        domain: None,
        nodes: sg.nodes.clone(),
        weights: sg.weights.clone(),
    };
    let err = exactness(&rule, &set, &basis).map_err(|e| e.to_string())?.max_error;
    ensure(err <= 1e-12, || format!("Smolyak moment error {err:.2e}"))?;
    let mut flagged = Vec::new();
    for k in 3..=5 {
        let cc = smolyak(2, k, Family::Legendre, Growth::ClenshawCurtis).map_err(|e| e.to_string())?;
        if cc.negative_weights() > 0 {
            flagged.push(format!("k={k}: {}/{}", cc.negative_weights(), cc.len()));
        }
    }
    ensure(!flagged.is_empty(), || "no nested grid with negative weights".into())?;
    Ok(format!(
        "d=3 k=3 Gauss grid ({} nodes) error {err:.1e}; nested d=2 negative weights {}",
        sg.len(),
        flagged.join(", ")
    ))
}

fn gauss_tensor(d: usize, n: usize) -> QuadratureRule {
    let g = gauss_rule_for(Family::Legendre, n).unwrap();
    let (nodes, weights) = tensor_rule(&vec![g; d]);
    QuadratureRule {
        dim: d,
        family: Family::Legendre,
        index_set: IndexSetSpec::Total { dim: d, order: 0 },
        tolerance: 0.0,
        achieved_residual: 0.0,
        seed: 0,
        domain: None,
        nodes,
        weights,
    }
}

fn random_poly(set: &MultiIndexSet, basis: &BasisFamily, rng: &mut ChaCha8Rng) -> (Vec<f64>, impl Fn(&[f64]) -> f64) {
    let coef: Vec<f64> = (0..set.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let c = coef.clone();
    let set = set.clone();
    let basis = basis.clone();
    (coef, move |x: &[f64]| set.iter().zip(&c).map(|(a, v)| v * basis.eval(a, x).unwrap()).sum())
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    // Rules of varying accuracy: designed rules converged only to 1e-6, so
    // that the epsilon term of the bound is exercised, and tensor Gauss rules.
    let mut rules = Vec::new();
    for (d, r, seed) in [(2usize, 4u32, 1u64), (3, 3, 2), (4, 2, 3), (2, 6, 4)] {
        let (set, dom, basis) = legendre(d, r);
        let des = design(&set, &dom, &basis, &cfg(seed, 1e-6, d, r)).map_err(|e| e.to_string())?;
        ensure(des.rule.min_weight() > 0.0, || "non-positive designed weight".into())?;
        rules.push((des.rule, set, basis));
    }
    for (d, n, r) in [(2usize, 3usize, 3u32), (3, 2, 2)] {
        let (set, _, basis) = legendre(d, r);
        rules.push((gauss_tensor(d, n), set, basis));
    }
    let mut worst_ratio: f64 = 0.0;
    let mut pairs = 0;
    while pairs < 20 {
        let (rule, set, basis) = &rules[pairs % rules.len()];
        let d = rule.dim;
        let a: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: f64 = rng.random_range(0.5..3.0);
        let f = move |x: &[f64]| (x.iter().zip(&a).map(|(u, v)| u * v).sum::<f64>()).sin() + b / (2.0 + x[0]);
        let (lhs, rhs) = stability_gap(rule, &f, set, basis, None).map_err(|e| e.to_string())?;
        ensure(lhs <= rhs * (1.0 + 1e-8), || format!("pair {pairs}: {lhs:.3e} > {rhs:.3e}"))?;
        worst_ratio = worst_ratio.max(lhs / rhs);
        pairs += 1;
    }
    // Polynomials in the span: the projection term vanishes.
    let mut poly_worst: f64 = 0.0;
    for (rule, set, basis) in rules.iter().take(4) {
        for _ in 0..5 {
            let (coef, p) = random_poly(set, basis, &mut rng);
            let eps = exactness(rule, set, basis).map_err(|e| e.to_string())?.epsilon;
            let norm = coef.iter().map(|c| c * c).sum::<f64>().sqrt();
            let exact = coef[0] / basis.pi0();
            let lhs = (exact - rule.integrate(&p)).abs();
            ensure(lhs <= eps * norm * (1.0 + 1e-8), || format!("poly: {lhs:.3e} > {:.3e}", eps * norm))?;
            poly_worst = poly_worst.max(lhs / (eps * norm));
        }
    }
    Ok(format!(
        "20 pairs, max lhs/rhs {worst_ratio:.3}; polynomials max lhs/(eps||f||) {poly_worst:.3}"
    ))
}

fn criterion_10() -> Outcome {
    let (set, dom, basis) = legendre(2, 4);
    let des = design(&set, &dom, &basis, &cfg(5, 1e-8, 2, 4)).map_err(|e| e.to_string())?;
    let eps = exactness(&des.rule, &set, &basis).map_err(|e| e.to_string())?.epsilon;
    let theta = total_degree(2, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let (coef, p) = random_poly(&theta, &basis, &mut rng);
        let got = discrete_projection(&p, &des.rule, &theta, &basis).map_err(|e| e.to_string())?;
        for ((_, g), c) in got.iter().zip(&coef) {
            worst = worst.max((g - c).abs());
        }
    }
    ensure(worst <= 100.0 * eps, || format!("coefficient error {worst:.2e} > 100 eps = {:.2e}", 100.0 * eps))?;
    Ok(format!("n={}, eps {eps:.1e}, max coefficient error {worst:.1e}", des.rule.len()))
}

fn criterion_11() -> Outcome {
    let t = Instant::now();
    let set = total_degree(2, 5);
    let basis = BasisFamily::isotropic(Family::ChebyshevFirstKind, 2, 5).unwrap();
    let l = lebesgue_constant(&padua_points(5), &set, &basis, 200).map_err(|e| e.to_string())?;
    let el = t.elapsed();
    ensure((l - 4.9478).abs() <= 0.05, || format!("L = {l}"))?;
    ensure(el < Duration::from_secs(30), || format!("took {el:.2?}"))?;
    Ok(format!("Padua r=5 L = {l:.4}, {el:.2?}"))
}

fn criterion_12_u_shape() -> Outcome {
    let (set, _, basis) = legendre(2, 2);
    let dom = DomainSpec::reference_box(2, Family::Legendre)
        .with_regions(u_shape_regions())
        .map_err(|e| e.to_string())?;
    let mut sizes = Vec::new();
    for seed in 0..10 {
        let des = design(&set, &dom, &basis, &cfg(seed, 1e-8, 2, 2)).map_err(|e| e.to_string())?;
        let r = &des.rule;
        ensure(r.nodes.iter().all(|x| dom.is_feasible(x)), || format!("seed {seed}: node in forbidden region"))?;
        ensure(r.achieved_residual <= 2e-2 && r.len() <= 150, || {
            format!("seed {seed}: n={} residual {:.2e}", r.len(), r.achieved_residual)
        })?;
        sizes.push(r.len());
    }
    Ok(format!("U-shape: 10 seeds feasible, n = {:?}", sizes))
}

fn criterion_12_high_dim() -> Outcome {
    let d = 100;
    let set = hyperbolic_cross(d, 4);
    let dom = DomainSpec::reference_box(d, Family::Legendre);
    let basis = BasisFamily::isotropic(Family::Legendre, d, 4).unwrap();
    let mut c = DesignConfig {
        tol: 1e-6,
        descriptor: Some(IndexSetSpec::Hyperbolic { dim: d, order: 4 }),
        ..DesignConfig::with_seed(0)
    };
    c.solver.high_dim_mode = true;
    let t = Instant::now();
    let des = design(&set, &dom, &basis, &c).map_err(|e| e.to_string())?;
    let n = des.rule.len();
    let el = t.elapsed();
    ensure(des.rule.achieved_residual <= 1e-6, || format!("residual {:.2e}", des.rule.achieved_residual))?;
    ensure((n as f64 - 106.0).abs() <= 0.2 * 106.0, || format!("n={n}"))?;
    ensure(el <= Duration::from_secs(7200), || format!("took {el:.2?}"))?;
    Ok(format!("d=100 H4: n={n}, {el:.1?}"))
}

fn main() -> ExitCode {
    let mut found = Vec::new();
    let mut results: Vec<(&str, Status, String)> = Vec::new();
    let mut run = |name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let (status, msg) = match f() {
            Ok(m) => (Status::Pass, m),
            Err(m) => (Status::Fail, m),
        };
        let tag = match status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skipped => "SKIP",
        };
        println!("[{tag}] {name}: {msg} [{:.1?}]", t.elapsed());
        results.push((name, status, msg));
    };
    run("1 univariate Gauss", &mut criterion_1);
    run("2 small design on [0,1]^2", &mut criterion_2);
    run("3 optimal sizes d+1 and 2d", &mut || criterion_3(&mut found));
    run("4 d=3 node counts", &mut || criterion_4(&mut found));
    run("5 d=4 performance regime", &mut || criterion_5(&mut found));
    run("6 half-set lower bound", &mut || criterion_6(&found));
    run("7 published 43-node rule", &mut criterion_7);
    run("8 Smolyak exactness and signs", &mut criterion_8);
    run("9 stability bound", &mut criterion_9);
    run("10 projection reproduction", &mut criterion_10);
    run("11 Padua Lebesgue constant", &mut criterion_11);
    run("12a U-shape (non-gating)", &mut criterion_12_u_shape);
    if std::env::var("DQUAD_EXTENDED").is_ok_and(|v| v == "1") {
        run("12b d=100 hyperbolic (non-gating)", &mut criterion_12_high_dim);
    } else {
        let msg = "set DQUAD_EXTENDED=1 to run".to_string();
        println!("[SKIP] 12b d=100 hyperbolic (non-gating): {msg}");
        results.push(("12b d=100 hyperbolic (non-gating)", Status::Skipped, msg));
    }
    let failed: Vec<&str> = results
        .iter()
        .filter(|(name, s, _)| matches!(s, Status::Fail) && !name.starts_with("12"))
        .map(|(n, _, _)| *n)
        .collect();
    if failed.is_empty() {
        println!("acceptance: all gating criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failing: {}", failed.join("; "));
        ExitCode::FAILURE
    }
}
