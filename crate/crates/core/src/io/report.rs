//! JSON and CSV report emission, plus the heatmap grid.
//!
//! JSON is canonical. Objects are emitted with sorted keys, floats with the
//! shortest round-trip representation, so identical inputs give identical
//! bytes. The top-level keys are `version`, `config`, `inputs` and, depending
//! on the payload, `scores`, `selection`, `strategies`, `metrics` and
//! `summary`.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::harness::{AblationReport, ComparisonReport};
use crate::pruner::PruneResult;
use crate::sensitivity::ScoreVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::config(format!("unknown report format `{other}` (expected json or csv)"))),
        }
    }
}

/// Content digest of one input file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InputDigest {
    pub name: String,
    pub path: String,
    pub sha256: String,
}

impl InputDigest {
    pub fn of_bytes(name: &str, path: &Path, bytes: &[u8]) -> Self {
        InputDigest { name: name.to_string(), path: path.display().to_string(), sha256: super::sha256_hex(bytes) }
    }
}

/// Per-token fake-quantization statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationStats {
    pub scheme: crate::quant::Scheme,
    pub num_groups: usize,
    pub last_group_size: usize,
    pub frobenius_error: f64,
    pub relative_error: f64,
    pub max_scale: f64,
    pub mean_scale: f64,
    /// `||v_i - Q(v_i)||_2` per token.
    pub token_errors: Vec<f64>,
}

#[derive(Debug, Clone)]
pub enum Payload {
    Scores(ScoreVector),
    Prune(PruneResult),
    Comparison(ComparisonReport),
    Ablation(AblationReport),
    Simulation(SimulationStats),
}

#[derive(Debug, Clone)]
pub struct Report {
    pub config: Value,
    pub inputs: Vec<InputDigest>,
    pub payload: Payload,
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize infallibly")
}

impl Report {
    pub fn new(config: Value, inputs: Vec<InputDigest>, payload: Payload) -> Self {
        Report { config, inputs, payload }
    }

    pub fn to_json_value(&self) -> Value {
        let mut doc = json!({
            "version": crate::VERSION,
            "config": self.config,
            "inputs": to_value(&self.inputs),
        });
        let obj = doc.as_object_mut().expect("object literal");
        match &self.payload {
            Payload::Scores(s) => {
                obj.insert("scores".into(), to_value(s));
            }
            Payload::Prune(r) => {
                let rows: Vec<Value> = r
                    .scores
                    .iter()
                    .enumerate()
                    .map(|(i, s)| {
                        json!({
                            "index": i,
                            "semantic_raw": s.semantic_raw,
                            "semantic": s.semantic,
                            "sensitivity": s.sensitivity,
                            "fused": s.fused,
                            "selected": r.selected_indices.binary_search(&i).is_ok(),
                        })
                    })
                    .collect();
                obj.insert("scores".into(), Value::Array(rows));
                obj.insert(
                    "selection".into(),
                    json!({
                        "selected_indices": r.selected_indices,
                        "rank_order": r.rank_order,
                        "clamped": r.clamped,
                        "keep": r.config.keep,
                        "alpha": r.config.alpha,
                        "metric": r.config.metric,
                    }),
                );
            }
            Payload::Comparison(c) => {
                obj.insert("strategies".into(), to_value(&c.rows));
            }
            Payload::Ablation(a) => {
                obj.insert("metrics".into(), to_value(&a.rows));
            }
            Payload::Simulation(s) => {
                obj.insert("summary".into(), to_value(s));
            }
        }
        doc
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_json_value()).expect("serializable");
        s.push('\n');
        s
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let opt = |v: Option<usize>| v.map_or_else(String::new, |n| n.to_string());
        match &self.payload {
            Payload::Scores(s) => {
                out.push_str("index,value\n");
                for (i, v) in s.values.iter().enumerate() {
                    let _ = writeln!(out, "{i},{v}");
                }
            }
            Payload::Prune(r) => {
                out.push_str("index,semantic_raw,semantic,sensitivity,fused,selected\n");
                for (i, s) in r.scores.iter().enumerate() {
                    let sel = r.selected_indices.binary_search(&i).is_ok();
                    let _ = writeln!(
                        out,
                        "{i},{},{},{},{},{}",
                        s.semantic_raw, s.semantic, s.sensitivity, s.fused, sel as u8
                    );
                }
            }
            Payload::Comparison(c) => {
                out.push_str(
                    "strategy,alpha,keep,retained_quant_error,downstream_error,outliers_retained,selected_count\n",
                );
                for r in &c.rows {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{},{}",
                        r.strategy.as_str(),
                        r.alpha,
                        c.keep,
                        r.retained_quant_error,
                        r.downstream_error,
                        opt(r.outliers_retained),
                        r.selected_indices.len()
                    );
                }
            }
            Payload::Ablation(a) => {
                out.push_str(
                    "rank,metric,alpha,retained_quant_error,downstream_error,outliers_retained,selected_count\n",
                );
                for (rank, r) in a.rows.iter().enumerate() {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{},{}",
                        rank + 1,
                        r.metric,
                        a.alpha,
                        r.retained_quant_error,
                        r.downstream_error,
                        opt(r.outliers_retained),
                        r.selected_indices.len()
                    );
                }
            }
            Payload::Simulation(s) => {
                out.push_str("index,error_l2\n");
                for (i, e) in s.token_errors.iter().enumerate() {
                    let _ = writeln!(out, "{i},{e}");
                }
            }
        }
        out
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Json => self.to_json(),
            ReportFormat::Csv => self.to_csv(),
        }
    }
}

pub fn emit_report(report: &Report, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    super::write_atomic(path, report.render(format).as_bytes())
}

/// Row-major grid, token 0 top-left, one CSV line per grid row.
pub fn heatmap_grid(values: &[f64], rows: usize, cols: usize) -> Result<String> {
    if rows * cols != values.len() {
        return Err(Error::data(format!("grid {rows}x{cols} does not match {} scores", values.len())));
    }
    let mut out = String::new();
    for row in values.chunks(cols) {
        let line: Vec<String> = row.iter().map(f64::to_string).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    Ok(out)
}

pub fn emit_heatmap_grid(values: &[f64], grid: (usize, usize), path: impl AsRef<Path>) -> Result<()> {
    super::write_atomic(path, heatmap_grid(values, grid.0, grid.1)?.as_bytes())
}

/// Parses `16x16`.
pub fn parse_grid(s: &str) -> Result<(usize, usize)> {
    let (r, c) =
        s.split_once(['x', 'X']).ok_or_else(|| Error::config(format!("grid `{s}` is not of the form ROWSxCOLS")))?;
    let parse = |v: &str| {
        v.trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::config(format!("bad grid dimension `{v}`")))
    };
    Ok((parse(r)?, parse(c)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensitivity::ScoreKind;

    #[test]
    fn grid_two_by_two() {
        assert_eq!(heatmap_grid(&[1.0, 2.5, -3.0, 0.0], 2, 2).unwrap(), "1,2.5\n-3,0\n");
        assert!(matches!(heatmap_grid(&[1.0; 4], 3, 2), Err(Error::Data(_))));
    }

    #[test]
    fn grid_sixteen_square() {
        let values: Vec<f64> = (0..256).map(f64::from).collect();
        let text = heatmap_grid(&values, 16, 16).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 16);
        assert!(lines.iter().all(|l| l.split(',').count() == 16));
        assert!(lines[0].starts_with("0,1,"));
        assert!(lines[15].ends_with(",255"));
    }

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("16x16").unwrap(), (16, 16));
        assert_eq!(parse_grid("2X8").unwrap(), (2, 8));
        assert!(parse_grid("16").is_err());
        assert!(parse_grid("0x4").is_err());
    }

    #[test]
    fn json_has_sorted_top_level_keys() {
        let sv = ScoreVector::raw(vec![1.0, 2.0], ScoreKind::OutlierR);
        let r = Report::new(json!({"b": 1, "a": 2}), vec![], Payload::Scores(sv));
        let text = r.to_json();
        let keys: Vec<&str> = ["\"config\"", "\"inputs\"", "\"scores\"", "\"version\""].to_vec();
        let pos: Vec<usize> = keys.iter().map(|k| text.find(k).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert!(text.find("\"a\"").unwrap() < text.find("\"b\"").unwrap());
        assert_eq!(r.to_csv(), "index,value\n0,1\n1,2\n");
    }
}
