use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dquad(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dquad")).args(args).output().expect("run dquad")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn design_d3_order5_gives_thirteen_nodes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r5");
    let o = dquad(&[
        "design", "--dim", "3", "--order", "5", "--index-set", "total", "--weight", "uniform", "--tol", "1e-8",
        "--seed", "7", "--out", path_str(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rule: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("r5.json")).unwrap()).unwrap();
    let w = rule["weights"].as_array().unwrap();
    assert!(w.len() <= 14, "n = {}", w.len());
    assert!(w.iter().all(|v| v.as_f64().unwrap() > 0.0));
    assert!(dir.path().join("r5.trace.csv").exists());
    let trace = fs::read_to_string(dir.path().join("r5.trace.csv")).unwrap();
    assert!(trace.starts_with("iter,res_aug,res,eta,c,lambda\n"));

    // A designed rule verifies at ten times its tolerance.
    let o = dquad(&["verify", path_str(&dir.path().join("r5.json")), "--tol", "1e-7"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn design_on_unit_square_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sq");
    let o = dquad(&[
        "design", "--dim", "2", "--order", "2", "--domain", "0,1", "--tol", "1e-8", "--seed", "3", "--format", "csv",
        "--out", path_str(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv_path = dir.path().join("sq.csv");
    let first = fs::read(&csv_path).unwrap();
    let text = String::from_utf8(first.clone()).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    for row in rows {
        let v: Vec<f64> = row.split(',').map(|s| s.parse().unwrap()).collect();
        assert!(v[..2].iter().all(|x| (0.0..=1.0).contains(x)));
        assert!(v[2] > 0.0);
    }
    let manifest = dir.path().join("sq.manifest.json");
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(&manifest).unwrap()).unwrap();
    assert_eq!(m["command"], "design");
    assert_eq!(m["seed"], 3);
    assert_eq!(m["outcome"], "converged");
    fs::remove_file(&csv_path).unwrap();
    let o = dquad(&["replay", path_str(&manifest)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(fs::read(&csv_path).unwrap(), first);
}

#[test]
fn seed_race_records_winner() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("race");
    let o = dquad(&["design", "--dim", "2", "--order", "3", "--seeds", "4,5,6", "--out", path_str(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("race.manifest.json")).unwrap()).unwrap();
    let seed = m["seed"].as_u64().unwrap();
    assert!([4, 5, 6].contains(&seed));
}

#[test]
fn invalid_input_exits_one() {
    assert_eq!(dquad(&["design", "--dim", "2", "--order", "2", "--weight", "nope"]).status.code(), Some(1));
    assert_eq!(dquad(&["design", "--dim", "30", "--order", "2"]).status.code(), Some(1));
    assert_eq!(dquad(&["design", "--dim", "2", "--order", "2", "--lambda", "sometimes"]).status.code(), Some(1));
    assert_eq!(dquad(&["verify", "/nonexistent/rule.json"]).status.code(), Some(1));
    assert_eq!(dquad(&["bogus"]).status.code(), Some(1));
}

#[test]
fn non_convergence_exits_two_with_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cap");
    // Two nodes cannot be exact on total degree 4 in d = 2, and the size cap
    // forbids enrichment.
    let o = dquad(&[
        "design", "--dim", "2", "--order", "4", "--initial-n", "2", "--max-n", "2", "--seed", "1", "--out",
        path_str(&out),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(dir.path().join("cap.trace.csv").exists());
}

#[test]
fn verify_bundled_table_and_gauss_export() {
    let o = dquad(&["verify", "bundled:d4r6", "--tol", "1e-4"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("pass"));

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("gauss.csv");
    // Three-point Gauss-Legendre rule for the probability measure on [-1, 1].
    let s = (0.6f64).sqrt();
    fs::write(&p, format!("x1,w\n{:?},{:?}\n0.0,{:?}\n{:?},{:?}\n", -s, 5.0 / 18.0, 8.0 / 18.0, s, 5.0 / 18.0)).unwrap();
    let o = dquad(&["verify", path_str(&p), "--order", "5", "--tol", "1e-12"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let report = dir.path().join("report.json");
    fs::write(&p, format!("x1,w\n{:?},{:?}\n0.0,{:?}\n{:?},{:?}\n", -s, 5.0 / 18.0, 8.0 / 18.0, s, -5.0 / 18.0)).unwrap();
    let o = dquad(&["verify", path_str(&p), "--order", "5", "--report", path_str(&report)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("negative weight at node 2"));
    let rep: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert!(rep["errors"]["5"].is_number());
}

#[test]
fn compare_table() {
    let o = dquad(&["compare", "--dim", "2", "--order", "5", "--seeds", "0,1,2,3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("method,n,max_moment_error,min_weight"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    let designed = rows.iter().find(|r| r[0] == "designed_r5").unwrap();
    assert_eq!(designed[1], "7");
    let sparse = rows.iter().find(|r| r[0] == "sparse_grid_r5").unwrap();
    assert!(sparse[1].parse::<usize>().unwrap() > 7);
    assert!(sparse[2].parse::<f64>().unwrap() <= 1e-12);

    let o = dquad(&["compare", "--dim", "1", "--order", "1,2,3,4,5"]);
    let text = stdout(&o);
    for r in 1..=5usize {
        let row = text.lines().find(|l| l.starts_with(&format!("designed_r{r},"))).unwrap();
        let n: usize = row.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(n, (r + 1).div_ceil(2), "r = {r}");
    }
}

#[test]
fn lebesgue_padua_and_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    let samples = dir.path().join("leb.csv");
    let o = dquad(&["lebesgue", "padua:5", "--samples", path_str(&samples)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let l: f64 = stdout(&o).trim().trim_start_matches("L = ").parse().unwrap();
    assert!((l - 4.9478).abs() <= 0.05, "L = {l}");
    assert_eq!(fs::read_to_string(&samples).unwrap().lines().count(), 1 + 200 * 200);

    let p = dir.path().join("two.csv");
    fs::write(&p, "-1.0\n1.0\n").unwrap();
    let o = dquad(&["lebesgue", path_str(&p), "--nodes-only", "--weight", "uniform", "--grid", "101"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let l: f64 = stdout(&o).trim().trim_start_matches("L = ").parse().unwrap();
    assert!((l - 1.0).abs() < 1e-9);

    fs::write(&p, "0.5\n0.5\n").unwrap();
    let o = dquad(&["lebesgue", path_str(&p), "--nodes-only", "--weight", "uniform"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn lebesgue_designed_near_padua() {
    let o = dquad(&["lebesgue", "designed-padua:5", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let l: f64 = stdout(&o).trim().trim_start_matches("L = ").parse().unwrap();
    assert!((l - 5.16).abs() <= 0.3, "L = {l}");
}
