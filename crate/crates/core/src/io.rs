//! Rule and trace files, plus the bundled published rule.

use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::basis::Family;
use crate::design::QuadratureRule;
use crate::error::{Error, Result};
use crate::index_set::IndexSetSpec;
use crate::solver::SolveTrace;

/// On-disk rule encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleFormat {
    Json,
    Csv,
}

impl RuleFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(RuleFormat::Json),
            "csv" => Ok(RuleFormat::Csv),
            other => Err(Error::InvalidArgument(format!("unknown format `{other}` (json|csv)"))),
        }
    }

    /// Guess from the file extension, defaulting to JSON.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => RuleFormat::Csv,
            _ => RuleFormat::Json,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            RuleFormat::Json => "json",
            RuleFormat::Csv => "csv",
        }
    }
}

pub fn rule_to_json(rule: &QuadratureRule) -> Result<String> {
    Ok(serde_json::to_string_pretty(rule)?)
}

pub fn rule_from_json(text: &str) -> Result<QuadratureRule> {
    let rule: QuadratureRule = serde_json::from_str(text)?;
    check_shape(&rule.nodes, &rule.weights, rule.dim)?;
    Ok(rule)
}

fn check_shape(nodes: &[Vec<f64>], weights: &[f64], dim: usize) -> Result<()> {
    if nodes.len() != weights.len() {
        return Err(Error::InvalidArgument(format!(
            "{} nodes but {} weights",
            nodes.len(),
            weights.len()
        )));
    }
    if let Some(x) = nodes.iter().find(|x| x.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: x.len(),
        });
    }
    Ok(())
}

/// `x1,..,xd,w` header, then one row per node. `{:?}` prints the shortest
/// decimal that parses back to the same bits.
pub fn rule_to_csv(rule: &QuadratureRule) -> String {
    let mut out = String::new();
    for j in 1..=rule.dim {
        out.push_str(&format!("x{j},"));
    }
    out.push_str("w\n");
    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
        for v in x {
            out.push_str(&format!("{v:?},"));
        }
        out.push_str(&format!("{w:?}\n"));
    }
    out
}

/// Parses CSV rows of `d + 1` numbers (weight last). A non-numeric first
/// line is taken as a header; blank lines and `#` comments are skipped.
pub fn nodes_from_csv(text: &str) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    let mut width = None;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: std::result::Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        let row = match parsed {
            Ok(r) => r,
            Err(_) if width.is_none() && nodes.is_empty() => {
                width = Some(fields.len());
                continue;
            }
            Err(e) => {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: e.to_string(),
                })
            }
        };
        let w = *width.get_or_insert(row.len());
        if row.len() != w || w < 2 {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("expected {w} columns (at least 2), found {}", row.len()),
            });
        }
        weights.push(row[w - 1]);
        nodes.push(row[..w - 1].to_vec());
    }
    if nodes.is_empty() {
        return Err(Error::Parse {
            line: 0,
            msg: "no node rows".into(),
        });
    }
    Ok((nodes, weights))
}

/// Parses CSV rows where every column is a coordinate.
pub fn points_from_csv(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut points: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> = line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        match row {
            Ok(r) => {
                if points.first().is_some_and(|p| p.len() != r.len()) {
                    return Err(Error::Parse {
                        line: i + 1,
                        msg: "ragged rows".into(),
                    });
                }
                points.push(r);
            }
            Err(_) if points.is_empty() => continue,
            Err(e) => {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: e.to_string(),
                })
            }
        }
    }
    if points.is_empty() {
        return Err(Error::Parse {
            line: 0,
            msg: "no rows".into(),
        });
    }
    Ok(points)
}

/// CSV carries only nodes and weights; the remaining fields come from the
/// caller.
pub fn rule_from_csv(text: &str, family: Family, index_set: IndexSetSpec, tolerance: f64) -> Result<QuadratureRule> {
    let (nodes, weights) = nodes_from_csv(text)?;
    let dim = nodes[0].len();
    Ok(QuadratureRule {
        dim,
        family,
        index_set,
        tolerance,
        achieved_residual: f64::NAN,
        seed: 0,
        domain: None,
        nodes,
        weights,
    })
}

/// Writes via a sibling temporary file and a rename, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

pub fn write_rule(rule: &QuadratureRule, path: &Path, format: RuleFormat) -> Result<()> {
    let text = match format {
        RuleFormat::Json => rule_to_json(rule)?,
        RuleFormat::Csv => rule_to_csv(rule),
    };
    write_atomic(path, text.as_bytes())
}

/// Reads a rule; CSV files get Legendre metadata with an empty index set.
pub fn read_rule(path: &Path) -> Result<QuadratureRule> {
    let text = fs::read_to_string(path)?;
    match RuleFormat::from_path(path) {
        RuleFormat::Json => rule_from_json(&text),
        RuleFormat::Csv => {
            let (nodes, weights) = nodes_from_csv(&text)?;
            let dim = nodes[0].len();
            Ok(QuadratureRule {
                dim,
                family: Family::Legendre,
                index_set: IndexSetSpec::Explicit { dim, indices: vec![] },
                tolerance: f64::NAN,
                achieved_residual: f64::NAN,
                seed: 0,
                domain: None,
                nodes,
                weights,
            })
        }
    }
}

pub fn trace_to_csv(trace: &SolveTrace) -> Result<String> {
    let mut buf = Vec::new();
    trace.write_csv(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::InvalidArgument(e.to_string()))
}

pub fn write_trace(trace: &SolveTrace, path: &Path) -> Result<()> {
    write_atomic(path, trace_to_csv(trace)?.as_bytes())
}

/// Bundled 43-node rule for the uniform weight on `[-1, 1]^4`, exact on
/// total degree 6 up to the precision of its printed digits.
pub const PUBLISHED_D4_R6_CSV: &str = include_str!("../data/designed_d4_r6.csv");

/// SHA-256 of [`PUBLISHED_D4_R6_CSV`].
pub const PUBLISHED_D4_R6_SHA256: &str = "dfdc2c6c3154a527006e5ae49fa769795c5ceba42fbd601c33edd9fad518b810";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Loads the bundled rule after checking its checksum.
pub fn published_d4_r6() -> Result<QuadratureRule> {
    let digest = sha256_hex(PUBLISHED_D4_R6_CSV.as_bytes());
    if digest != PUBLISHED_D4_R6_SHA256 {
        return Err(Error::InvalidArgument(format!(
            "bundled table checksum mismatch: {digest}"
        )));
    }
    let mut rule = rule_from_csv(
        PUBLISHED_D4_R6_CSV,
        Family::Legendre,
        IndexSetSpec::Total { dim: 4, order: 6 },
        1e-4,
    )?;
    rule.achieved_residual = 0.0;
    Ok(rule)
}
