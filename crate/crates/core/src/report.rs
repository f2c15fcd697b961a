//! Report documents and their JSON, CSV and aligned-text renderings.
//!
//! Every rendering is produced from the same in-memory document. CSV and
//! text print reals with six significant digits; JSON keeps full precision.

use crate::abft::{CheckerKind, Phase};
use crate::accounting::{OpCountTable, PhaseShare};
use crate::fault_lab::CampaignReport;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Format {
    Json,
    Csv,
    Text,
}

impl Format {
    pub const ALL: [Format; 3] = [Format::Json, Format::Csv, Format::Text];

    pub fn name(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
            Format::Text => "text",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRow {
    pub layer: usize,
    pub phase: Phase,
    pub predicted: f64,
    pub actual: f64,
    pub difference: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRun {
    pub checker: CheckerKind,
    pub verdicts: Vec<VerdictRow>,
    pub flagged: bool,
}

/// Fault-free verification of both checkers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub threshold: f64,
    pub runs: Vec<CheckRun>,
    /// Split phase-2 and fused predicted checksums are identical per layer.
    /// Present when both checkers ran.
    pub checksums_agree: Option<bool>,
    /// Both checkers produced bit-identical logits. Present when both ran.
    pub outputs_agree: Option<bool>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpCountReport {
    pub name: String,
    pub table: OpCountTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub name: String,
    pub layers: Vec<PhaseShare>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "report", rename_all = "lowercase")]
pub enum ReportDocument {
    Check(CheckReport),
    Campaign(CampaignReport),
    Opcount(OpCountReport),
    Phases(PhaseReport),
}

/// Six significant digits, fixed notation for moderate magnitudes.
pub fn fmt_real(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0.00000".into();
    }
    let exponent = x.abs().log10().floor() as i32;
    if (-4..6).contains(&exponent) {
        format!("{:.*}", (5 - exponent) as usize, x)
    } else {
        format!("{x:.5e}")
    }
}

fn fmt_pct(fraction: f64) -> String {
    format!("{}%", fmt_real(fraction * 100.0))
}

fn opt_real(x: Option<f64>) -> String {
    x.map(fmt_real).unwrap_or_default()
}

fn opt_count(x: Option<u64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn phase_name(phase: Phase) -> &'static str {
    match phase {
        Phase::Phase1 => "phase1",
        Phase::Phase2 => "phase2",
        Phase::LayerEnd => "layer-end",
    }
}

struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(headers: &[&str]) -> Self {
        Self {
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn csv(&self) -> String {
        let mut out = String::new();
        for row in std::iter::once(&self.headers).chain(&self.rows) {
            let cells: Vec<String> = row
                .iter()
                .map(|c| {
                    if c.contains([',', '"', '\n']) {
                        format!("\"{}\"", c.replace('"', "\"\""))
                    } else {
                        c.clone()
                    }
                })
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    fn text(&self) -> String {
        let mut widths: Vec<usize> = self.headers.iter().map(|h| h.chars().count()).collect();
        for row in &self.rows {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        for row in std::iter::once(&self.headers).chain(&self.rows) {
            let cells: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, w))| {
                    if i == 0 {
                        format!("{c:<w$}")
                    } else {
                        format!("{c:>w$}")
                    }
                })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}

impl ReportDocument {
    pub fn command(&self) -> &'static str {
        match self {
            ReportDocument::Check(_) => "check",
            ReportDocument::Campaign(_) => "campaign",
            ReportDocument::Opcount(_) => "opcount",
            ReportDocument::Phases(_) => "phases",
        }
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => self.to_json(),
            Format::Csv => self.to_csv(),
            Format::Text => self.to_text(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report types serialize");
        s.push('\n');
        s
    }

    pub fn to_csv(&self) -> String {
        self.tables()
            .iter()
            .map(|(_, t)| t.csv())
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn to_text(&self) -> String {
        let mut out = self.headline();
        for (title, table) in self.tables() {
            out.push('\n');
            if !title.is_empty() {
                out.push_str(&title);
                out.push('\n');
            }
            out.push_str(&table.text());
        }
        out
    }

    fn headline(&self) -> String {
        match self {
            ReportDocument::Check(r) => format!(
                "check {}: threshold {}, {}\n",
                r.name,
                fmt_real(r.threshold),
                if r.passed {
                    "all verdicts clean"
                } else {
                    "FLAGGED"
                }
            ),
            ReportDocument::Campaign(r) => format!(
                "campaign {}: {} trials, {} fault(s) per trial, master seed {}\n",
                r.name, r.trials, r.faults_per_trial, r.master_seed
            ),
            ReportDocument::Opcount(r) => format!("opcount {}\n", r.name),
            ReportDocument::Phases(r) => format!(
                "phases {}: output operations per multiplication step\n",
                r.name
            ),
        }
    }

    fn tables(&self) -> Vec<(String, Table)> {
        match self {
            ReportDocument::Check(r) => check_tables(r),
            ReportDocument::Campaign(r) => campaign_tables(r),
            ReportDocument::Opcount(r) => vec![(String::new(), opcount_table(&r.table))],
            ReportDocument::Phases(r) => vec![(String::new(), phase_table(&r.layers))],
        }
    }
}

fn check_tables(r: &CheckReport) -> Vec<(String, Table)> {
    let mut t = Table::new(&[
        "checker",
        "layer",
        "phase",
        "predicted",
        "actual",
        "difference",
        "flagged",
    ]);
    for run in &r.runs {
        for v in &run.verdicts {
            t.push(vec![
                run.checker.name().into(),
                v.layer.to_string(),
                phase_name(v.phase).into(),
                fmt_real(v.predicted),
                fmt_real(v.actual),
                fmt_real(v.difference),
                v.flagged.to_string(),
            ]);
        }
    }
    let mut s = Table::new(&["property", "value"]);
    let yes_no = |b: Option<bool>| b.map(|b| b.to_string()).unwrap_or_else(|| "n/a".into());
    s.push(vec!["checksums_agree".into(), yes_no(r.checksums_agree)]);
    s.push(vec!["outputs_agree".into(), yes_no(r.outputs_agree)]);
    s.push(vec!["passed".into(), r.passed.to_string()]);
    vec![("Verdicts".into(), t), ("Summary".into(), s)]
}

fn campaign_tables(r: &CampaignReport) -> Vec<(String, Table)> {
    let mut t = Table::new(&[
        "checker",
        "threshold",
        "Detected",
        "False Pos",
        "Silent",
        "Benign",
        "detected",
        "false_pos",
        "silent",
        "benign",
        "golden_flagged",
        "Critical Faults",
        "Avg. Nodes Affected",
    ]);
    for s in &r.checkers {
        for th in &s.thresholds {
            t.push(vec![
                s.checker.name().into(),
                fmt_real(th.threshold),
                fmt_pct(th.rates.detected),
                fmt_pct(th.rates.false_positive),
                fmt_pct(th.rates.silent),
                fmt_pct(th.rates.benign),
                th.counts.detected.to_string(),
                th.counts.false_positive.to_string(),
                th.counts.silent.to_string(),
                th.counts.benign.to_string(),
                th.golden_flagged.to_string(),
                fmt_pct(s.critical_fault_rate),
                fmt_pct(s.avg_nodes_affected),
            ]);
        }
    }
    let mut sites = Table::new(&[
        "checker",
        "phase1 mac",
        "phase1 checksum",
        "phase2 mac",
        "phase2 checksum",
        "mac bit coverage",
        "checksum bit coverage",
    ]);
    for s in &r.checkers {
        let m = s.site_mix;
        sites.push(vec![
            s.checker.name().into(),
            m.phase1_mac.to_string(),
            m.phase1_checksum.to_string(),
            m.phase2_mac.to_string(),
            m.phase2_checksum.to_string(),
            fmt_pct(s.mac_bit_coverage),
            fmt_pct(s.checksum_bit_coverage),
        ]);
    }
    vec![
        ("Fault detection".into(), t),
        ("Fault sites".into(), sites),
        ("Operation counts".into(), opcount_table(&r.op_counts)),
        ("Phase shares".into(), phase_table(&r.phase_shares)),
    ]
}

fn opcount_table(table: &OpCountTable) -> Table {
    let mut t = Table::new(&[
        "True-Out",
        "Check(split)",
        "Total(split)",
        "Check(fused)",
        "Total(fused)",
        "Savings(check %)",
        "Savings(total %)",
        "Formula True-Out",
        "Formula Check(split)",
        "Formula Check(fused)",
    ]);
    let split = table.row(CheckerKind::Split);
    let fused = table.row(CheckerKind::Fused);
    t.push(vec![
        table.output_ops.to_string(),
        opt_count(split.map(|r| r.check_ops)),
        opt_count(split.map(|r| r.total_ops)),
        opt_count(fused.map(|r| r.check_ops)),
        opt_count(fused.map(|r| r.total_ops)),
        opt_real(table.check_savings_pct),
        opt_real(table.total_savings_pct),
        table.formula_output_ops.to_string(),
        opt_count(split.map(|r| r.formula_check_ops)),
        opt_count(fused.map(|r| r.formula_check_ops)),
    ]);
    t
}

fn phase_table(layers: &[PhaseShare]) -> Table {
    let mut t = Table::new(&[
        "layer",
        "phase1_ops",
        "phase2_ops",
        "phase1_share",
        "phase2_share",
    ]);
    for p in layers {
        t.push(vec![
            p.layer.to_string(),
            p.phase1_ops.to_string(),
            p.phase2_ops.to_string(),
            fmt_real(p.phase1_share),
            fmt_real(p.phase2_share),
        ]);
    }
    t
}
