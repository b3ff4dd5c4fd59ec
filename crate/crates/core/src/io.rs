//! File formats: the line-oriented MDP text format, sweep CSV, and
//! JSON-lines lemma reports.
//!
//! The MDP format is deliberately plain text so desk-scale instances stay
//! inspectable:
//!
//! ```text
//! # anything after '#' is a comment
//! mdp <S> <A> <gamma>
//! r <s> <a> <value>            (one line per state-action pair)
//! p <s> <a> <p_0> ... <p_{S-1}> (one line per state-action pair)
//! ```
//!
//! Tokens are whitespace-delimited. Probability rows must sum to 1 within
//! `1e-9`; accepted rows are renormalized by their sum so the in-memory
//! model meets the tighter internal row-sum invariant exactly.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::harness::{fit_scaling, per_n_medians, ScalingFit, SweepRecord};
use crate::mdp::TabularMdp;
use crate::verify::LemmaReport;

/// Row-sum tolerance for MDP files.
pub const FILE_ROW_SUM_TOL: f64 = 1e-9;

/// Format a float with 17 significant digits, enough to round-trip f64.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_token<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| parse_err(line, format!("cannot parse {what} from '{tok}'")))
}

/// Parse the MDP text format.
pub fn parse_mdp(text: &str) -> Result<TabularMdp> {
    let mut header: Option<(usize, usize, f64)> = None;
    let mut reward: Vec<Option<f64>> = Vec::new();
    let mut rows: Vec<Option<Vec<f64>>> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut toks = line.split_whitespace();
        let kind = toks.next().expect("non-empty line has a first token");
        match kind {
            "mdp" => {
                if header.is_some() {
                    return Err(parse_err(line_no, "duplicate mdp header"));
                }
                let s: usize = parse_token(
                    toks.next().ok_or_else(|| parse_err(line_no, "missing S"))?,
                    line_no,
                    "state count",
                )?;
                let a: usize = parse_token(
                    toks.next().ok_or_else(|| parse_err(line_no, "missing A"))?,
                    line_no,
                    "action count",
                )?;
                let gamma: f64 = parse_token(
                    toks.next()
                        .ok_or_else(|| parse_err(line_no, "missing gamma"))?,
                    line_no,
                    "gamma",
                )?;
                if toks.next().is_some() {
                    return Err(parse_err(line_no, "trailing tokens after mdp header"));
                }
                if s == 0 || a == 0 {
                    return Err(parse_err(line_no, "S and A must be positive"));
                }
                header = Some((s, a, gamma));
                reward = vec![None; s * a];
                rows = vec![None; s * a];
            }
            "r" | "p" => {
                let (s_max, a_max, _) =
                    header.ok_or_else(|| parse_err(line_no, "mdp header must come first"))?;
                let s: usize = parse_token(
                    toks.next().ok_or_else(|| parse_err(line_no, "missing s"))?,
                    line_no,
                    "state index",
                )?;
                let a: usize = parse_token(
                    toks.next().ok_or_else(|| parse_err(line_no, "missing a"))?,
                    line_no,
                    "action index",
                )?;
                if s >= s_max || a >= a_max {
                    return Err(parse_err(
                        line_no,
                        format!("pair ({s},{a}) out of range {s_max}x{a_max}"),
                    ));
                }
                let slot = s * a_max + a;
                if kind == "r" {
                    let v: f64 = parse_token(
                        toks.next()
                            .ok_or_else(|| parse_err(line_no, "missing reward value"))?,
                        line_no,
                        "reward",
                    )?;
                    if toks.next().is_some() {
                        return Err(parse_err(line_no, "trailing tokens after reward"));
                    }
                    if reward[slot].replace(v).is_some() {
                        return Err(parse_err(line_no, format!("duplicate r line for ({s},{a})")));
                    }
                } else {
                    let probs: Vec<f64> = toks
                        .map(|t| parse_token(t, line_no, "probability"))
                        .collect::<Result<_>>()?;
                    if probs.len() != s_max {
                        return Err(parse_err(
                            line_no,
                            format!("expected {s_max} probabilities, got {}", probs.len()),
                        ));
                    }
                    let sum: f64 = probs.iter().sum();
                    if (sum - 1.0).abs() > FILE_ROW_SUM_TOL {
                        return Err(parse_err(
                            line_no,
                            format!("probabilities for ({s},{a}) sum to {sum}, expected 1"),
                        ));
                    }
                    if probs.iter().any(|&p| p < 0.0) {
                        return Err(parse_err(
                            line_no,
                            format!("negative probability in row ({s},{a})"),
                        ));
                    }
                    let normalized = probs.iter().map(|&p| p / sum).collect();
                    if rows[slot].replace(normalized).is_some() {
                        return Err(parse_err(line_no, format!("duplicate p line for ({s},{a})")));
                    }
                }
            }
            other => {
                return Err(parse_err(
                    line_no,
                    format!("unknown directive '{other}' (expected mdp, r, or p)"),
                ));
            }
        }
    }

    let (s, a, gamma) = header.ok_or_else(|| parse_err(0, "missing mdp header"))?;
    let mut reward_vec = DVector::zeros(s * a);
    let mut transition = DMatrix::zeros(s * a, s);
    for si in 0..s {
        for ai in 0..a {
            let slot = si * a + ai;
            reward_vec[slot] = reward[slot]
                .ok_or_else(|| Error::invalid(format!("missing reward for ({si},{ai})")))?;
            let row = rows[slot]
                .as_ref()
                .ok_or_else(|| Error::invalid(format!("missing transition row for ({si},{ai})")))?;
            for (s2, &p) in row.iter().enumerate() {
                transition[(slot, s2)] = p;
            }
        }
    }
    TabularMdp::from_parts(s, a, gamma, reward_vec, transition, false)
}

/// Render an MDP in the text format with full float precision.
pub fn format_mdp(m: &TabularMdp) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "mdp {} {} {}",
        m.n_states(),
        m.n_actions(),
        fmt_f64(m.discount())
    );
    for s in 0..m.n_states() {
        for a in 0..m.n_actions() {
            let _ = writeln!(out, "r {s} {a} {}", fmt_f64(m.reward(s, a)));
        }
    }
    for s in 0..m.n_states() {
        for a in 0..m.n_actions() {
            let _ = write!(out, "p {s} {a}");
            for s2 in 0..m.n_states() {
                let _ = write!(out, " {}", fmt_f64(m.transition_prob(s, a, s2)));
            }
            let _ = writeln!(out);
        }
    }
    out
}

pub fn load_mdp(path: &Path) -> Result<TabularMdp> {
    let text = std::fs::read_to_string(path)?;
    parse_mdp(&text)
}

pub fn save_mdp(m: &TabularMdp, path: &Path) -> Result<()> {
    Ok(std::fs::write(path, format_mdp(m))?)
}

/// Exact header of the sweep CSV.
pub const SWEEP_CSV_HEADER: &str = "n,trial,seed,q_error,v_error,qhat_gap,wall_time_s";

/// Render sweep records as CSV, floats at 17 significant digits.
pub fn sweep_records_csv(records: &[SweepRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.n,
            r.trial,
            r.seed,
            fmt_f64(r.q_error),
            fmt_f64(r.v_error),
            fmt_f64(r.qhat_gap),
            fmt_f64(r.wall_time_s)
        );
    }
    out
}

/// Per-`n` medians plus the scaling fit, serialized alongside the CSV.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SweepSummary {
    pub per_n: Vec<PerNMedians>,
    /// Absent when fewer than three distinct sample sizes were swept.
    pub fit: Option<ScalingFit>,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct PerNMedians {
    pub n: u64,
    pub median_q_error: f64,
    pub median_v_error: f64,
}

pub fn sweep_summary(records: &[SweepRecord]) -> SweepSummary {
    let per_n = per_n_medians(records)
        .into_iter()
        .map(|(n, q, v)| PerNMedians {
            n,
            median_q_error: q,
            median_v_error: v,
        })
        .collect();
    SweepSummary {
        per_n,
        fit: fit_scaling(records).ok(),
    }
}

/// One JSON object per report, newline-terminated.
pub fn reports_jsonl(reports: &[LemmaReport]) -> Result<String> {
    let mut out = String::new();
    for r in reports {
        let line = serde_json::to_string(r)
            .map_err(|e| Error::internal(format!("report serialization failed: {e}")))?;
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}
