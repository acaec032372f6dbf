//! Paper-versus-oracle comparison records.

use std::fmt::Write as _;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

/// Relative difference at or below which a printed value counts as matching.
pub const MATCH_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Match,
    Mismatch,
    /// The printed formula cannot be evaluated (division by zero, negative
    /// variance, ...).
    PaperDegenerate,
    /// The numerical oracle itself failed its own consistency check.
    OracleFailure,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Match => "match",
            Verdict::Mismatch => "mismatch",
            Verdict::PaperDegenerate => "paper-degenerate",
            Verdict::OracleFailure => "oracle-failure",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexValue {
    pub re: f64,
    pub im: f64,
}

impl ComplexValue {
    pub fn from_c64(z: C64) -> Option<Self> {
        (z.re.is_finite() && z.im.is_finite()).then_some(ComplexValue { re: z.re, im: z.im })
    }

    pub fn to_c64(self) -> C64 {
        C64::new(self.re, self.im)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyEntry {
    pub id: String,
    /// Printed relation under test.
    pub relation: String,
    pub description: String,
    pub time: Option<f64>,
    pub paper: Option<ComplexValue>,
    pub oracle: Option<ComplexValue>,
    pub rel_diff: Option<f64>,
    pub verdict: Verdict,
}

impl DiscrepancyEntry {
    /// Builds an entry comparing `paper` against `oracle`, deciding the
    /// verdict from the relative difference and `tol`.
    pub fn compare(
        id: impl Into<String>,
        relation: impl Into<String>,
        description: impl Into<String>,
        time: Option<f64>,
        paper: C64,
        oracle: C64,
        tol: f64,
    ) -> Self {
        let paper_v = ComplexValue::from_c64(paper);
        let oracle_v = ComplexValue::from_c64(oracle);
        let (rel_diff, verdict) = match (paper_v, oracle_v) {
            (None, Some(_)) => (None, Verdict::PaperDegenerate),
            (_, None) => (None, Verdict::OracleFailure),
            (Some(_), Some(_)) => {
                let rd = relative_difference(paper, oracle);
                let v = if rd <= tol { Verdict::Match } else { Verdict::Mismatch };
                (Some(rd), v)
            }
        };
        DiscrepancyEntry {
            id: id.into(),
            relation: relation.into(),
            description: description.into(),
            time,
            paper: paper_v,
            oracle: oracle_v,
            rel_diff,
            verdict,
        }
    }

    pub fn with_verdict(mut self, verdict: Verdict) -> Self {
        self.verdict = verdict;
        self
    }
}

/// |a − b| / |b|, falling back to the absolute difference when b = 0.
pub fn relative_difference(a: C64, b: C64) -> f64 {
    let d = (a - b).norm();
    let s = b.norm();
    if s > 0.0 {
        d / s
    } else {
        d
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyReport {
    pub entries: Vec<DiscrepancyEntry>,
}

impl DiscrepancyReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, e: DiscrepancyEntry) {
        self.entries.push(e);
    }

    pub fn extend(&mut self, other: DiscrepancyReport) {
        self.entries.extend(other.entries);
    }

    pub fn count(&self, verdict: Verdict) -> usize {
        self.entries.iter().filter(|e| e.verdict == verdict).count()
    }

    pub fn oracle_failures(&self) -> impl Iterator<Item = &DiscrepancyEntry> {
        self.entries.iter().filter(|e| e.verdict == Verdict::OracleFailure)
    }

    /// True when every entry matched.
    pub fn all_match(&self) -> bool {
        self.entries.iter().all(|e| e.verdict == Verdict::Match)
    }

    pub fn find(&self, id: &str) -> Option<&DiscrepancyEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} entries: {} match, {} mismatch, {} paper-degenerate, {} oracle-failure",
            self.entries.len(),
            self.count(Verdict::Match),
            self.count(Verdict::Mismatch),
            self.count(Verdict::PaperDegenerate),
            self.count(Verdict::OracleFailure)
        );
        for e in &self.entries {
            if e.verdict == Verdict::Match {
                continue;
            }
            let fmt = |v: &Option<ComplexValue>| match v {
                Some(c) if c.im == 0.0 => format!("{:.6e}", c.re),
                Some(c) => format!("{:.6e}{:+.6e}i", c.re, c.im),
                None => "n/a".to_string(),
            };
            let _ = writeln!(
                s,
                "  [{}] {}: paper {} vs oracle {}{}",
                e.verdict.as_str(),
                e.id,
                fmt(&e.paper),
                fmt(&e.oracle),
                e.time.map(|t| format!(" at t = {t:.6}")).unwrap_or_default()
            );
        }
        s
    }
}
