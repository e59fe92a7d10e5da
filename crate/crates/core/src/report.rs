//! Certificate reports: checked inequalities with margins and a verdict.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

/// Outcome of one check or of a whole report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Status {
    Pass,
    Ambiguous,
    Fail,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Status::Pass => write!(f, "pass"),
            Status::Ambiguous => write!(f, "ambiguous"),
            Status::Fail => write!(f, "fail"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub stage: String,
    pub check: String,
    pub location: Vec<f64>,
    pub claimed: f64,
    pub observed: f64,
    pub margin: f64,
    pub status: Status,
}

/// Keeps every failing or ambiguous row (up to a cap) plus the worst
/// passing row of each `(stage, check)` pair, so reports over large grids stay small.
#[derive(Debug, Clone, Default)]
pub struct CertificateReport {
    rows: Vec<Row>,
    worst: BTreeMap<(String, String), Row>,
    counts: BTreeMap<(String, String), usize>,
    dropped: usize,
    worst_ratio: f64,
    fitted: BTreeMap<String, f64>,
    notes: Vec<String>,
}

const MAX_FLAGGED_ROWS: usize = 2000;

/// Formats with 17 significant digits so values round-trip exactly.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

impl CertificateReport {
    pub fn new() -> CertificateReport {
        CertificateReport::default()
    }

    /// Records `observed ≤ claimed`; fails only beyond `margin`.
    pub fn check_le(&mut self, stage: &str, check: &str, location: &[f64], claimed: f64, observed: f64, margin: f64) -> Status {
        let status = if observed.is_nan() || observed > claimed + margin {
            Status::Fail
        } else if observed > claimed {
            Status::Ambiguous
        } else {
            Status::Pass
        };
        if claimed > 0.0 && observed.is_finite() {
            self.worst_ratio = self.worst_ratio.max(observed / claimed);
        } else if observed > 0.0 {
            self.worst_ratio = f64::INFINITY;
        }
        self.push(Row {
            stage: stage.into(),
            check: check.into(),
            location: location.to_vec(),
            claimed,
            observed,
            margin,
            status,
        });
        status
    }

    /// Records a boolean condition.
    pub fn check(&mut self, stage: &str, check: &str, location: &[f64], ok: bool) -> Status {
        self.check_le(stage, check, location, 0.0, if ok { 0.0 } else { 1.0 }, 0.0)
    }

    /// Records a margin-ambiguous observation that is neither a pass nor a failure.
    pub fn ambiguous(&mut self, stage: &str, check: &str, location: &[f64]) {
        self.push(Row {
            stage: stage.into(),
            check: check.into(),
            location: location.to_vec(),
            claimed: 0.0,
            observed: 0.0,
            margin: 0.0,
            status: Status::Ambiguous,
        });
    }

    fn push(&mut self, row: Row) {
        let key = (row.stage.clone(), row.check.clone());
        *self.counts.entry(key.clone()).or_default() += 1;
        if row.status != Status::Pass {
            if self.rows.len() < MAX_FLAGGED_ROWS {
                self.rows.push(row.clone());
            } else {
                self.dropped += 1;
            }
        }
        let replace = match self.worst.get(&key) {
            None => true,
            Some(w) => row.status > w.status || (row.status == w.status && slack(&row) < slack(w)),
        };
        if replace {
            self.worst.insert(key, row);
        }
    }

    pub fn fit(&mut self, name: &str, value: f64) {
        self.fitted.insert(name.into(), value);
    }

    pub fn fitted(&self, name: &str) -> Option<f64> {
        self.fitted.get(name).copied()
    }

    pub fn fitted_all(&self) -> &BTreeMap<String, f64> {
        &self.fitted
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn notes(&self) -> &[String] {
        &self.notes
    }

    pub fn merge(&mut self, other: CertificateReport) {
        for (k, c) in other.counts {
            *self.counts.entry(k).or_default() += c;
        }
        for (k, w) in other.worst {
            let replace = match self.worst.get(&k) {
                None => true,
                Some(cur) => w.status > cur.status || (w.status == cur.status && slack(&w) < slack(cur)),
            };
            if replace {
                self.worst.insert(k, w);
            }
        }
        for r in other.rows {
            if self.rows.len() < MAX_FLAGGED_ROWS {
                self.rows.push(r);
            } else {
                self.dropped += 1;
            }
        }
        self.dropped += other.dropped;
        self.worst_ratio = self.worst_ratio.max(other.worst_ratio);
        self.fitted.extend(other.fitted);
        self.notes.extend(other.notes);
    }

    pub fn verdict(&self) -> Status {
        self.worst.values().map(|r| r.status).max().unwrap_or(Status::Pass)
    }

    pub fn passed(&self) -> bool {
        self.verdict() == Status::Pass
    }

    pub fn worst_ratio(&self) -> f64 {
        self.worst_ratio
    }

    pub fn checked(&self) -> usize {
        self.counts.values().sum()
    }

    /// Failing and ambiguous rows.
    pub fn flagged(&self) -> &[Row] {
        &self.rows
    }

    pub fn failures(&self) -> impl Iterator<Item = &Row> {
        self.rows.iter().filter(|r| r.status == Status::Fail)
    }

    /// One summary row per `(stage, check)` followed by all flagged rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("stage,check,location,claimed,observed,margin,verdict\n");
        let write_row = |out: &mut String, r: &Row| {
            let loc: Vec<String> = r.location.iter().map(|v| fmt_f64(*v)).collect();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.stage,
                r.check,
                loc.join(" "),
                fmt_f64(r.claimed),
                fmt_f64(r.observed),
                fmt_f64(r.margin),
                r.status
            );
        };
        for r in self.worst.values() {
            write_row(&mut out, r);
        }
        for r in &self.rows {
            write_row(&mut out, r);
        }
        for (k, v) in &self.fitted {
            let _ = writeln!(out, "fitted,{k},,,{},,", fmt_f64(*v));
        }
        out
    }
}

fn slack(r: &Row) -> f64 {
    r.claimed - r.observed
}

impl fmt::Display for CertificateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "verdict: {} ({} checks, worst ratio {:.4})", self.verdict(), self.checked(), self.worst_ratio)?;
        for ((stage, check), r) in &self.worst {
            writeln!(f, "  {stage}/{check}: {} (claimed {:.6e}, observed {:.6e})", r.status, r.claimed, r.observed)?;
        }
        for (k, v) in &self.fitted {
            writeln!(f, "  fitted {k} = {v:.6e}")?;
        }
        for n in &self.notes {
            writeln!(f, "  note: {n}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_tracks_margins() {
        let mut r = CertificateReport::new();
        assert_eq!(r.check_le("s", "c", &[0.0], 1.0, 0.5, 0.0), Status::Pass);
        assert!(r.passed());
        assert_eq!(r.check_le("s", "c", &[1.0], 1.0, 1.05, 0.1), Status::Ambiguous);
        assert_eq!(r.verdict(), Status::Ambiguous);
        assert_eq!(r.check_le("s", "c", &[2.0], 1.0, 1.2, 0.1), Status::Fail);
        assert_eq!(r.verdict(), Status::Fail);
        assert!((r.worst_ratio() - 1.2).abs() < 1e-15);
        assert_eq!(r.checked(), 3);
    }

    #[test]
    fn csv_uses_seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(0.1).parse::<f64>().unwrap(), 0.1);
        let mut r = CertificateReport::new();
        r.check_le("a", "b", &[0.5], 2.0, 1.0, 0.0);
        let csv = r.to_csv();
        assert!(csv.starts_with("stage,check,location,claimed,observed,margin,verdict\n"));
        assert!(csv.contains("a,b,5.0000000000000000e-1,2.0000000000000000e0,1.0000000000000000e0,0.0000000000000000e0,pass"));
    }
}
