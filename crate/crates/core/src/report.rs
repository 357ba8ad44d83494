//! CSV products. Column schemas are documented in `docs/formats/csv.md`.

use std::fmt::Write as _;

use crate::analysis::{CoincidenceResult, DelayHistogram, SinglesCount};
use crate::bell::{s_of_theta_ideal, ChVerdict};
use crate::error::{Error, Result};
use crate::experiment::{AngleRecord, P12Row, RunKind, SweepResult};
use crate::model::Angle;

/// `bin_low_ns,count`
pub fn histogram_csv(h: &DelayHistogram, clock_period: f64) -> String {
    let mut out = String::from("bin_low_ns,count\n");
    for (i, c) in h.bins.iter().enumerate() {
        let ns = h.bin_low(i) as f64 * clock_period * 1e9;
        let _ = writeln!(out, "{},{}", fmt_num(ns), c);
    }
    out
}

/// `theta_deg,p12,sigma,p2,p2_sigma,p1,p1_sigma,ideal`
pub fn p12_csv(rows: &[P12Row]) -> String {
    let mut out = String::from("theta_deg,p12,sigma,p2,p2_sigma,p1,p1_sigma,ideal\n");
    for r in rows {
        let (p1, p1s) =
            r.p1.map(|p| (fmt_num(p.value), fmt_num(p.sigma)))
                .unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            fmt_num(r.theta_deg),
            fmt_num(r.p12.value),
            fmt_num(r.p12.sigma),
            fmt_num(r.p2.value),
            fmt_num(r.p2.sigma),
            p1,
            p1s,
            fmt_num(r.ideal)
        );
    }
    out
}

/// `theta_deg,S,sigma,violated`
pub fn verdict_csv(rows: &[(f64, ChVerdict)]) -> String {
    let mut out = String::from("theta_deg,S,sigma,violated\n");
    for (t, v) in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            fmt_num(*t),
            fmt_num(v.s_value),
            fmt_num(v.uncertainty),
            v.violated
        );
    }
    out
}

/// Ideal S(θ) on `(0°, 60°]`: `theta_deg,S_ideal`
pub fn ideal_s_curve_csv(step_deg: f64) -> String {
    let mut out = String::from("theta_deg,S_ideal\n");
    let n = (60.0 / step_deg).round() as usize;
    for i in 1..=n {
        let t = i as f64 * step_deg;
        let _ = writeln!(
            out,
            "{},{}",
            fmt_num(t),
            fmt_num(s_of_theta_ideal(Angle::from_degrees(t)))
        );
    }
    out
}

const COUNTS_HEADER: &str =
    "kind,theta_deg,raw,background,background_sigma,singles_d1,singles_d2,live_time";

/// Reduced sweep counts, one row per recording; enough to recompute every
/// normalized probability without the event files.
pub fn counts_csv(res: &SweepResult) -> String {
    let mut out = format!("{COUNTS_HEADER}\n");
    for r in &res.records {
        let c = &r.coincidence;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.kind,
            r.theta_deg,
            c.raw_coincidences,
            c.background,
            c.background_sigma,
            r.singles_d1.count,
            r.singles_d2.count,
            c.live_time
        );
    }
    out
}

pub fn parse_counts_csv(text: &str) -> Result<SweepResult> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == COUNTS_HEADER => {}
        _ => {
            return Err(Error::Precondition(format!(
                "counts file must start with the header `{COUNTS_HEADER}`"
            )))
        }
    }
    let mut records = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad =
            |what: &str| Error::Precondition(format!("counts file line {}: bad {what}", i + 1));
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 8 {
            return Err(bad("column count"));
        }
        let kind: RunKind = f[0].parse().map_err(|_| bad("kind"))?;
        let num = |j: usize, what: &str| f[j].parse::<f64>().map_err(|_| bad(what));
        let int = |j: usize, what: &str| f[j].parse::<u64>().map_err(|_| bad(what));
        let live = num(7, "live_time")?;
        let (n1, n2) = (int(5, "singles_d1")?, int(6, "singles_d2")?);
        records.push(AngleRecord {
            kind,
            theta_deg: num(1, "theta_deg")?,
            coincidence: CoincidenceResult::from_counts(
                int(2, "raw")?,
                num(3, "background")?,
                num(4, "background_sigma")?,
                n1,
                n2,
                live,
            ),
            singles_d1: SinglesCount {
                count: n1,
                live_time: live,
            },
            singles_d2: SinglesCount {
                count: n2,
                live_time: live,
            },
        });
    }
    Ok(SweepResult { records })
}

/// Shortest round-trip decimal form.
fn fmt_num(x: f64) -> String {
    format!("{x}")
}
