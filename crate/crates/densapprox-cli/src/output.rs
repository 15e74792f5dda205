//! Artifact serialization. The CSV layout is a contract:
//! `n,p,replicate,method,log_approx,log_oracle,oracle_se,rel_error,runtime_ms,error`
//! with floats at 17 significant digits so rereading reproduces the same bits.
//! Error messages are sanitized (commas, quotes and newlines replaced) so the
//! file never needs quoting.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use densapprox::diagnostics::{RatePrediction, ScalingFit};
use serde::Serialize;

use crate::CliError;

pub const CSV_HEADER: &str =
    "n,p,replicate,method,log_approx,log_oracle,oracle_se,rel_error,runtime_ms,error";

/// One grid cell. Failed cells keep their coordinates and carry the error
/// message; the measurement columns stay empty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellRecord {
    pub n: usize,
    pub p: usize,
    pub replicate: usize,
    pub method: String,
    pub log_approx: Option<f64>,
    pub log_oracle: Option<f64>,
    pub oracle_se: Option<f64>,
    /// `|exp(log_approx - log_oracle) - 1|`.
    pub rel_error: Option<f64>,
    pub runtime_ms: u64,
    pub error: Option<String>,
}

/// A grid of cells plus whatever exponent fits the grid supports. `fitted`
/// needs spread in both n and p; `n_exponent` only in n.
#[derive(Debug, Serialize)]
pub struct ScalingRun {
    pub cells: Vec<CellRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fitted: Option<ScalingFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_exponent: Option<NExponentFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prediction: Option<RatePrediction>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct NExponentFit {
    pub slope: f64,
    pub std_error: f64,
}

impl ScalingRun {
    pub fn any_cell_failed(&self) -> bool {
        self.cells.iter().any(|c| c.error.is_some())
    }

    /// Successful cells with strictly positive error, the subset exponent
    /// fits are defined on.
    pub fn fit_cells(&self) -> Vec<(usize, usize, f64)> {
        self.cells
            .iter()
            .filter(|c| c.error.is_none())
            .filter_map(|c| c.rel_error.filter(|&e| e > 0.0).map(|e| (c.n, c.p, e)))
            .collect()
    }

    /// One-paragraph human summary for stderr; the artifact itself stays
    /// machine-oriented.
    pub fn summary(&self) -> String {
        let failed = self.cells.iter().filter(|c| c.error.is_some()).count();
        let mut s = format!("{} cells ({failed} failed)", self.cells.len());
        if let Some(f) = &self.fitted {
            let _ = write!(
                s,
                "; fitted error ~ p^a n^b with a = {:.3} (se {:.3}), b = {:.3} (se {:.3}), R^2 = {:.4}",
                f.a, f.se_a, f.b, f.se_b, f.r_squared
            );
        }
        if let Some(e) = &self.n_exponent {
            let _ = write!(s, "; n-exponent {:.3} (se {:.3})", e.slope, e.std_error);
        }
        s
    }
}

fn push_opt(line: &mut String, v: Option<f64>) {
    match v {
        Some(x) => {
            let _ = write!(line, ",{x:.16e}");
        }
        None => line.push(','),
    }
}

fn sanitize(msg: &str) -> String {
    msg.replace(',', ";")
        .replace('"', "'")
        .replace(['\n', '\r'], " ")
}

pub fn render_csv(cells: &[CellRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for c in cells {
        let mut line = format!("{},{},{},{}", c.n, c.p, c.replicate, c.method);
        push_opt(&mut line, c.log_approx);
        push_opt(&mut line, c.log_oracle);
        push_opt(&mut line, c.oracle_se);
        push_opt(&mut line, c.rel_error);
        let _ = write!(line, ",{}", c.runtime_ms);
        match &c.error {
            Some(msg) => {
                let _ = write!(line, ",{}", sanitize(msg));
            }
            None => line.push(','),
        }
        out.push_str(&line);
        out.push('\n');
    }
    out
}

pub fn write_csv(cells: &[CellRecord], path: &Path) -> Result<(), CliError> {
    fs::write(path, render_csv(cells)).map_err(|e| CliError::io(path, e))
}

/// Parse a CSV produced by [`render_csv`]; the round trip is exact because
/// floats were written with 17 significant digits.
pub fn parse_csv(text: &str) -> Result<Vec<CellRecord>, CliError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => {
            return Err(CliError::Config(format!(
                "unexpected CSV header: {:?}",
                other.unwrap_or("")
            )))
        }
    }
    let mut cells = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(CliError::Config(format!(
                "row {}: expected 10 fields, got {}",
                idx + 2,
                fields.len()
            )));
        }
        let parse_usize = |s: &str, what: &str| {
            s.parse::<usize>()
                .map_err(|e| CliError::Config(format!("row {}: bad {what}: {e}", idx + 2)))
        };
        let parse_opt = |s: &str, what: &str| -> Result<Option<f64>, CliError> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse::<f64>()
                    .map(Some)
                    .map_err(|e| CliError::Config(format!("row {}: bad {what}: {e}", idx + 2)))
            }
        };
        cells.push(CellRecord {
            n: parse_usize(fields[0], "n")?,
            p: parse_usize(fields[1], "p")?,
            replicate: parse_usize(fields[2], "replicate")?,
            method: fields[3].to_string(),
            log_approx: parse_opt(fields[4], "log_approx")?,
            log_oracle: parse_opt(fields[5], "log_oracle")?,
            oracle_se: parse_opt(fields[6], "oracle_se")?,
            rel_error: parse_opt(fields[7], "rel_error")?,
            runtime_ms: parse_usize(fields[8], "runtime_ms")? as u64,
            error: if fields[9].is_empty() {
                None
            } else {
                Some(fields[9].to_string())
            },
        });
    }
    Ok(cells)
}

pub fn render_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("artifact serialization cannot fail");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    fs::write(path, render_json(value)).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(n: usize, rel: f64) -> CellRecord {
        CellRecord {
            n,
            p: 2,
            replicate: 0,
            method: "laplace".into(),
            log_approx: Some(1.25),
            log_oracle: Some(1.25 - rel.ln_1p()),
            oracle_se: Some(0.0),
            rel_error: Some(rel),
            runtime_ms: 3,
            error: None,
        }
    }

    #[test]
    fn empty_run_renders_header_only() {
        assert_eq!(render_csv(&[]), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn two_cells_render_three_lines() {
        let text = render_csv(&[cell(10, 0.1), cell(20, 0.05)]);
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let cells = vec![
            cell(10, 0.123456789123456789),
            CellRecord {
                n: 20,
                p: 3,
                replicate: 1,
                method: "laplace".into(),
                log_approx: None,
                log_oracle: None,
                oracle_se: None,
                rel_error: None,
                runtime_ms: 0,
                error: Some("solver, \"failed\"\non two lines".into()),
            },
        ];
        let parsed = parse_csv(&render_csv(&cells)).unwrap();
        assert_eq!(parsed[0], cells[0]);
        // the error message is sanitized, not preserved verbatim
        assert_eq!(
            parsed[1].error.as_deref(),
            Some("solver; 'failed' on two lines")
        );
        assert_eq!(parsed[1].n, 20);
    }

    #[test]
    fn header_mismatch_is_reported() {
        assert!(parse_csv("nope\n1,2,3").is_err());
    }
}
