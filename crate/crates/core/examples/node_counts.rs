//! Designs total-degree rules for the uniform weight on `[-1, 1]^d` over a
//! range of seeds and prints the size, residual and iteration counts.
//!
//! `cargo run --release --example node_counts -- <d> <r> [seeds] [tol]`

use std::time::Instant;

use dquad::basis::{BasisFamily, Family};
use dquad::design::{design, DesignConfig};
use dquad::domain::DomainSpec;
use dquad::index_set::total_degree;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    if args.len() < 3 {
        eprintln!("usage: node_counts <d> <r> [seeds] [tol]");
        std::process::exit(1);
    }
    let d: usize = args[1].parse().expect("d");
    let r: u32 = args[2].parse().expect("r");
    let seeds: u64 = args.get(3).map_or(5, |s| s.parse().expect("seeds"));
    let tol: f64 = args.get(4).map_or(1e-8, |s| s.parse().expect("tol"));
    let set = total_degree(d, r);
    let dom = DomainSpec::reference_box(d, Family::Legendre);
    let basis = BasisFamily::isotropic(Family::Legendre, d, r as usize).expect("basis");
    for seed in 0..seeds {
        let t = Instant::now();
        let cfg = DesignConfig {
            tol,
            ..DesignConfig::with_seed(seed)
        };
        match design(&set, &dom, &basis, &cfg) {
            Ok(des) => println!(
                "seed {seed}: n = {}, residual = {:.2e}, iterations = {} (final solve {}), min weight = {:.2e}, {:.2?}",
                des.rule.len(),
                des.rule.achieved_residual,
                des.total_iterations(),
                des.final_solve_iterations(),
                des.rule.min_weight(),
                t.elapsed()
            ),
            Err(e) => println!("seed {seed}: {e} ({:.2?})", t.elapsed()),
        }
    }
}
