//! Text artifacts: six-significant-digit numbers, provenance headers and the
//! comparison and ranking tables.

use serde::Serialize;
use serde_json::Value;

use crate::error::Result;
use crate::flex::{CompareRow, RankResult};

pub const SIGNIFICANT_DIGITS: usize = 6;

/// `%g`-style rendering with six significant digits.
pub fn fmt_sig(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..SIGNIFICANT_DIGITS as i32).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (SIGNIFICANT_DIGITS as i32 - 1 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// `x` rounded to six significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x).parse().expect("round trip")
}

/// Round every float in a JSON tree to six significant digits.
pub fn round_json(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(r) = n.as_f64().map(round_sig).and_then(serde_json::Number::from_f64) {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_json),
        Value::Object(map) => map.values_mut().for_each(round_json),
        _ => {}
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub tol_feas: f64,
    pub tol_gap: f64,
    /// `None` when derived from the system right-hand sides.
    pub big_m: Option<f64>,
}

impl Provenance {
    pub fn new(command: &str, seed: u64, tol_feas: f64, tol_gap: f64, big_m: Option<f64>) -> Self {
        Self {
            tool: "flex".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            tol_feas,
            tol_gap,
            big_m,
        }
    }

    /// One line of `key=value` pairs.
    pub fn line(&self) -> String {
        format!(
            "{} {} command={} seed={} tol_feas={} tol_gap={} big_m={}",
            self.tool,
            self.version,
            self.command,
            self.seed,
            fmt_sig(self.tol_feas),
            fmt_sig(self.tol_gap),
            self.big_m.map_or("auto".into(), fmt_sig)
        )
    }
}

/// `{"provenance": .., "result": ..}` with rounded numbers.
pub fn json_document<T: Serialize>(prov: &Provenance, result: &T) -> Result<String> {
    let mut doc = serde_json::json!({
        "provenance": prov,
        "result": result,
    });
    round_json(&mut doc);
    Ok(serde_json::to_string_pretty(&doc)? + "\n")
}

fn csv_document(prov: &Provenance, header: &[&str], rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_error)?;
    for r in rows {
        w.write_record(&r).map_err(csv_error)?;
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| csv_error(e.into_error().into()))?)
        .expect("csv output is utf-8");
    Ok(format!("# {}\n{body}", prov.line()))
}

fn csv_error(e: csv::Error) -> crate::error::FlexError {
    crate::error::FlexError::Io(std::io::Error::other(e))
}

fn cell(x: Option<f64>) -> String {
    x.map(fmt_sig).unwrap_or_default()
}

pub fn compare_csv(prov: &Provenance, rows: &[CompareRow]) -> Result<String> {
    let body = rows
        .iter()
        .map(|r| {
            vec![
                r.design.clone(),
                cell(r.index_for("hyperbox")),
                cell(r.index_for("ellipsoid")),
                cell(r.alpha_star.map(|a| 100.0 * a)),
                cell(r.sf.as_ref().map(|s| 100.0 * s.estimate)),
            ]
        })
        .collect();
    csv_document(prov, &["design", "F_box", "F_ellip", "alpha_star_pct", "SF_pct"], body)
}

pub fn rank_csv(prov: &Provenance, rank: &RankResult) -> Result<String> {
    let body = rank
        .levels
        .iter()
        .map(|l| {
            vec![
                l.level.to_string(),
                l.constraint_labels.join(";"),
                fmt_sig(l.f_value),
                cell(l.increase_pct),
            ]
        })
        .collect();
    csv_document(prov, &["rank", "active_constraints", "F", "increase_pct"], body)
}
