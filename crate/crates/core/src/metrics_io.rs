//! Text form of per-round metrics.
//!
//! ```text
//! # dlrc-metrics v1
//! round,gap_raw,gap_clamped,delta_h1,...,delta_hH,max_reg,lambda_min,lambda_mean,lambda_max,path_len_mean
//! ```
//!
//! Floats use the shortest representation that parses back to the same bits.

use std::fmt::Write;

use crate::trainer::RoundMetrics;
use crate::{Error, Result};

pub const METRICS_HEADER: &str = "# dlrc-metrics v1";

pub fn metrics_columns(horizon: usize) -> Vec<String> {
    let mut cols = vec!["round".to_string(), "gap_raw".into(), "gap_clamped".into()];
    cols.extend((1..=horizon).map(|h| format!("delta_h{h}")));
    cols.extend(
        ["max_reg", "lambda_min", "lambda_mean", "lambda_max", "path_len_mean"]
            .iter()
            .map(|c| c.to_string()),
    );
    cols
}

pub fn write_metrics_csv(horizon: usize, metrics: &[RoundMetrics]) -> Result<String> {
    let mut out = String::new();
    out.push_str(METRICS_HEADER);
    out.push('\n');
    out.push_str(&metrics_columns(horizon).join(","));
    out.push('\n');
    for m in metrics {
        if m.deltas.len() != horizon {
            return Err(Error::Shape(format!(
                "round {} has {} stage deltas, expected {horizon}",
                m.round,
                m.deltas.len()
            )));
        }
        let _ = write!(out, "{},{},{}", m.round, m.gap_raw, m.gap_clamped);
        for d in &m.deltas {
            let _ = write!(out, ",{d}");
        }
        let _ = writeln!(
            out,
            ",{},{},{},{},{}",
            m.max_reg, m.lambda_min, m.lambda_mean, m.lambda_max, m.path_len_mean
        );
    }
    Ok(out)
}

/// Parses [`write_metrics_csv`] output. Errors name the 1-based line.
pub fn parse_metrics_csv(text: &str) -> Result<Vec<RoundMetrics>> {
    let mut lines = text.lines().enumerate();
    let bad = |line: usize, msg: String| Error::InvalidInput(format!("line {}: {msg}", line + 1));
    match lines.next() {
        Some((_, l)) if l.trim_end() == METRICS_HEADER => {}
        Some((n, l)) => return Err(bad(n, format!("expected `{METRICS_HEADER}`, found `{l}`"))),
        None => return Err(Error::InvalidInput("empty metrics file".into())),
    }
    let (n, cols) = lines
        .next()
        .ok_or_else(|| Error::InvalidInput("metrics file has no column line".into()))?;
    let cols: Vec<&str> = cols.trim_end().split(',').collect();
    if cols.len() < 8 {
        return Err(bad(n, format!("too few columns ({})", cols.len())));
    }
    let horizon = cols.len() - 8;
    if cols != metrics_columns(horizon) {
        return Err(bad(n, "unexpected column names".into()));
    }
    let mut out = Vec::new();
    for (n, line) in lines {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(bad(n, format!("{} fields, expected {}", fields.len(), cols.len())));
        }
        let round = fields[0]
            .parse::<usize>()
            .map_err(|e| bad(n, format!("round `{}`: {e}", fields[0])))?;
        let mut vals = Vec::with_capacity(fields.len() - 1);
        for (k, f) in fields.iter().enumerate().skip(1) {
            vals.push(
                f.parse::<f64>()
                    .map_err(|e| bad(n, format!("{} `{f}`: {e}", cols[k])))?,
            );
        }
        let tail = &vals[2 + horizon..];
        out.push(RoundMetrics {
            round,
            gap_raw: vals[0],
            gap_clamped: vals[1],
            deltas: vals[2..2 + horizon].to_vec(),
            max_reg: tail[0],
            lambda_min: tail[1],
            lambda_mean: tail[2],
            lambda_max: tail[3],
            path_len_mean: tail[4],
        });
    }
    Ok(out)
}
