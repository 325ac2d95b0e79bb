//! Report documents and their table rendering.

use std::fmt::Write as _;

use clinch_core::audit::{AuditReport, Verdict};
use clinch_core::rational;
use clinch_core::welfare::LwOptResult;
use clinch_core::{Event, Rational};
use serde::Serialize;

/// Bumped whenever a report or event layout changes.
pub const SCHEMA_VERSION: u32 = 1;

/// Significant digits of the decimal column.
const DECIMAL_DIGITS: usize = 20;

/// An exact rational next to its decimal reading. The rational is normative.
#[derive(Debug, Clone, Serialize)]
pub struct Number {
    pub exact: String,
    pub decimal: String,
}

impl From<&Rational> for Number {
    fn from(value: &Rational) -> Self {
        Number { exact: rational::format(value), decimal: rational::to_decimal(value, DECIMAL_DIGITS) }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Header {
    pub kind: &'static str,
    pub schema_version: u32,
    pub event_schema_version: u32,
}

impl Header {
    pub fn new(kind: &'static str) -> Self {
        Header { kind, schema_version: SCHEMA_VERSION, event_schema_version: SCHEMA_VERSION }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditSection {
    pub passed: bool,
    pub verdicts: Vec<Verdict>,
}

impl From<AuditReport> for AuditSection {
    fn from(report: AuditReport) -> Self {
        AuditSection { passed: report.passed(), verdicts: report.verdicts }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    #[serde(flatten)]
    pub header: Header,
    pub source: String,
    pub x_final: Vec<i64>,
    pub p_final: Vec<String>,
    pub p_final_decimal: Vec<String>,
    pub iterations: usize,
    pub total_payment: Number,
    pub sw_mechanism: Number,
    pub lw_mechanism: Number,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lw_optimum: Option<Number>,
    /// `LW^M / LW^OPT`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lw_ratio: Option<Number>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<Event>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub audit: Option<AuditSection>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub k: i64,
    pub lw_mechanism: Number,
    pub lw_optimum: Number,
    pub ratio: Number,
    /// Whether the ratio equals `k / (2k − 1)` exactly.
    pub matches: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    #[serde(flatten)]
    pub header: Header,
    pub fixture: String,
    pub rows: Vec<SweepRow>,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    #[serde(flatten)]
    pub header: Header,
    pub source: String,
    pub suite: String,
    pub seed: u64,
    pub trials: usize,
    #[serde(flatten)]
    pub audit: AuditSection,
}

#[derive(Debug, Clone, Serialize)]
pub struct LwOptReport {
    #[serde(flatten)]
    pub header: Header,
    pub source: String,
    #[serde(flatten)]
    pub result: LwOptResult,
    pub lw_value_decimal: String,
}

fn list<T: ToString>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

fn verdict_lines(out: &mut String, verdicts: &[Verdict]) {
    for v in verdicts {
        let status = match (v.passed, v.asserted) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "NOTE",
        };
        let _ = writeln!(out, "  {status:<4}  {:<13} {:<18} {}", v.check, v.clause, v.detail);
        if !v.passed {
            if let Some(w) = &v.witness {
                let _ = writeln!(out, "        witness: {w}");
            }
        }
    }
}

impl RunReport {
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "source         {}", self.source);
        let _ = writeln!(out, "x_final        ({})", list(&self.x_final));
        let _ = writeln!(out, "p_final        ({})", list(&self.p_final));
        let _ = writeln!(out, "iterations     {}", self.iterations);
        let mut row = |name: &str, n: &Number| {
            let _ = writeln!(out, "{name:<14} {:<24} {}", n.exact, n.decimal);
        };
        row("payment", &self.total_payment);
        row("SW^M", &self.sw_mechanism);
        row("LW^M", &self.lw_mechanism);
        if let Some(n) = &self.lw_optimum {
            row("LW^OPT", n);
        }
        if let Some(n) = &self.lw_ratio {
            row("LW^M/LW^OPT", n);
        }
        if let Some(trace) = &self.trace {
            let _ = writeln!(out, "trace");
            for e in trace {
                let _ = writeln!(out, "  {}", serde_json::to_string(e).unwrap_or_default());
            }
        }
        if let Some(audit) = &self.audit {
            let _ = writeln!(out, "audit          {}", if audit.passed { "passed" } else { "FAILED" });
            verdict_lines(&mut out, &audit.verdicts);
        }
        out
    }
}

impl SweepReport {
    pub fn table(&self) -> String {
        let mut out = format!("{:>4}  {:>10}  {:>10}  {:>10}  {:<22}  ok\n", "k", "LW^M", "LW^OPT", "ratio", "decimal");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:>4}  {:>10}  {:>10}  {:>10}  {:<22}  {}",
                r.k,
                r.lw_mechanism.exact,
                r.lw_optimum.exact,
                r.ratio.exact,
                r.ratio.decimal,
                if r.matches { "yes" } else { "NO" }
            );
        }
        out
    }
}

impl CheckReport {
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "source  {}", self.source);
        let _ = writeln!(out, "suite   {} (seed {}, trials {})", self.suite, self.seed, self.trials);
        let _ = writeln!(out, "result  {}", if self.audit.passed { "passed" } else { "FAILED" });
        verdict_lines(&mut out, &self.audit.verdicts);
        out
    }
}

impl LwOptReport {
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "source  {}", self.source);
        let _ = writeln!(out, "{:>6}  {:>4}  {:>10}  {:>10}  {:>4}", "parent", "part", "value", "budget", "z*");
        for (v, z) in self.result.virtual_buyers.iter().zip(&self.result.z_star) {
            let part = serde_json::to_value(v.part).ok().and_then(|p| p.as_str().map(str::to_owned)).unwrap_or_default();
            let _ = writeln!(
                out,
                "{:>6}  {:>4}  {:>10}  {:>10}  {:>4}",
                v.parent + 1,
                part,
                rational::format(&v.valuation),
                rational::format(&v.budget),
                z
            );
        }
        let _ = writeln!(out, "x*      ({})", list(&self.result.x_star));
        let _ = writeln!(out, "LW^OPT  {}  {}", rational::format(&self.result.lw_value), self.lw_value_decimal);
        out
    }
}
