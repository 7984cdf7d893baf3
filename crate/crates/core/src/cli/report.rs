//! Report types and their JSON / CSV / text emission.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{Component, RunConfig};
use crate::engine::{EpochMetrics, ModelConfig};
use crate::error::Result;
use crate::stats::{StatReport, Status, Summary};

/// Bumped whenever a report's shape changes.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Fixed header of the learning-curve CSV.
pub const CURVE_CSV_HEADER: &str = "epoch,mean_acc,ci_low,ci_high,config_hash";

/// Fraction of the total greedy gain annotated as the reduced-configuration cut.
pub const GREEDY_GAIN_THRESHOLD: f64 = 0.92;

/// Per-seed results. Controls that were not evaluated are `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub epochs: Vec<EpochMetrics>,
    #[serde(with = "crate::util::json_f64")]
    pub final_acc: f64,
    pub epoch0_acc: Option<f64>,
    pub fresh_probe_acc: Option<f64>,
    pub frozen_classifier_acc: Option<f64>,
    pub ncm_acc: Option<f64>,
    pub final_checksum: u64,
}

/// One point of the learning curve: probe accuracy across seeds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    #[serde(flatten)]
    pub summary: Summary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub label: String,
    pub config: RunConfig,
    pub config_hash: String,
    pub model: ModelConfig,
    /// Learned-parameter counts per module.
    pub param_counts: Vec<(String, usize)>,
    pub n_train: usize,
    pub n_test: usize,
    pub notes: Vec<String>,
    pub seeds: Vec<SeedRecord>,
    /// Epoch-0 reference row (when the control ran) followed by epochs 1..=E.
    pub curve: Vec<CurvePoint>,
    pub final_summary: Summary,
}

impl RunReport {
    pub fn final_accs(&self) -> Vec<f64> {
        self.seeds.iter().map(|s| s.final_acc).collect()
    }

    pub fn total_params(&self) -> usize {
        self.param_counts.iter().map(|(_, n)| n).sum()
    }

    /// Mean of a control across seeds, when every seed evaluated it.
    pub fn control_mean(&self, pick: impl Fn(&SeedRecord) -> Option<f64>) -> Option<f64> {
        let v: Option<Vec<f64>> = self.seeds.iter().map(pick).collect();
        v.filter(|v| !v.is_empty()).map(|v| crate::stats::mean(&v))
    }
}

/// One ablation cell: the base config with `components` switched off.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub components: Vec<Component>,
    pub label: String,
    pub mapping: Vec<String>,
    pub report: RunReport,
}

/// `I(A, B) = Δ_AB − (Δ_A + Δ_B)`; positive when removing both hurts less
/// than the two single removals add up to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionRow {
    pub a: Component,
    pub b: Component,
    #[serde(with = "crate::util::json_f64")]
    pub delta_a: f64,
    #[serde(with = "crate::util::json_f64")]
    pub delta_b: f64,
    #[serde(with = "crate::util::json_f64")]
    pub delta_ab: f64,
    #[serde(with = "crate::util::json_f64")]
    pub interaction: f64,
    /// Always `Exploratory`: pairwise rows are not multiplicity-corrected.
    pub status: Status,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub schema_version: u32,
    pub base: RunReport,
    pub cells: Vec<AblationCell>,
    /// Single-component rows, Holm-corrected together.
    pub table: Vec<StatReport>,
    pub interactions: Vec<InteractionRow>,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreedyStep {
    pub step: usize,
    pub label: String,
    pub report: RunReport,
    /// Mean gain over step 0 (accuracy points in [0, 1]).
    #[serde(with = "crate::util::json_f64")]
    pub delta: f64,
    /// Paired effect size against step 0 (needs two or more seeds).
    pub d: Option<f64>,
    /// `delta / delta_final`.
    #[serde(with = "crate::util::json_f64")]
    pub gain_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreedyReport {
    pub schema_version: u32,
    pub steps: Vec<GreedyStep>,
    /// First step whose gain fraction reaches [`GREEDY_GAIN_THRESHOLD`] (annotation only).
    pub threshold_step: Option<usize>,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub batch_size: usize,
    pub updates_per_epoch: usize,
    pub summary: Summary,
    /// Difference of means against `B = 4`, when 4 is in the sweep.
    pub delta_vs_b4: Option<f64>,
    pub report: RunReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub schema_version: u32,
    pub rows: Vec<SweepRow>,
}

/// The learning curve as CSV with [`CURVE_CSV_HEADER`].
pub fn curve_csv(r: &RunReport) -> String {
    let mut out = String::from(CURVE_CSV_HEADER);
    out.push('\n');
    for p in &r.curve {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            p.epoch, p.summary.mean, p.summary.ci_low, p.summary.ci_high, r.config_hash
        );
    }
    out
}

fn pct(v: f64) -> String {
    format!("{:.1}", 100.0 * v)
}

fn signed_pp(v: f64) -> String {
    format!("{:+.1}", 100.0 * v)
}

fn opt_pct(v: Option<f64>) -> String {
    v.map_or_else(|| "—".into(), pct)
}

fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

/// Plain-text summary of one run.
pub fn run_text(r: &RunReport) -> String {
    let mut out = String::new();
    let s = &r.final_summary;
    let _ = writeln!(out, "Run: {} (config {})", r.label, &r.config_hash[..12.min(r.config_hash.len())]);
    let _ = writeln!(
        out,
        "Seeds: {}  Train: {}  Test: {}  Params: {}",
        r.seeds.len(),
        r.n_train,
        r.n_test,
        r.total_params()
    );
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<28}{:>10}  {:<18}", "Measure", "Acc. (%)", "95% CI");
    let _ = writeln!(
        out,
        "{:<28}{:>10}  ({}, {})",
        "Co-trained probe",
        pct(s.mean),
        pct(s.ci_low),
        pct(s.ci_high)
    );
    for (name, v) in [
        ("Fixed front end (epoch 0)", r.control_mean(|s| s.epoch0_acc)),
        ("Fresh probe", r.control_mean(|s| s.fresh_probe_acc)),
        ("Random frozen classifier", r.control_mean(|s| s.frozen_classifier_acc)),
        ("NCM", r.control_mean(|s| s.ncm_acc)),
    ] {
        let _ = writeln!(out, "{:<28}{:>10}", name, opt_pct(v));
    }
    if !r.notes.is_empty() {
        let _ = writeln!(out);
        for n in &r.notes {
            let _ = writeln!(out, "note: {n}");
        }
    }
    out
}

/// Component-ablation table: accuracy, Δ, d, power and status per row.
pub fn ablation_text(a: &AblationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<22}{:>10}{:>10}{:>8}{:>8}  {}",
        "Ablation", "Acc. (%)", "Δ", "d", "Power", "Status"
    );
    let _ = writeln!(out, "{:<22}{:>10}{:>10}{:>8}{:>8}  {}", "Full system", pct(a.base.final_summary.mean), "—", "—", "—", "—");
    for (cell, row) in a.cells.iter().filter(|c| c.components.len() == 1).zip(&a.table) {
        let _ = writeln!(
            out,
            "{:<22}{:>10}{:>10}{:>8.1}{:>8.2}  {:?}",
            cell.label,
            pct(cell.report.final_summary.mean),
            format!("{}{}", signed_pp(row.mean), stars(row.p_holm)),
            row.d.abs(),
            row.power,
            row.status
        );
    }
    if !a.interactions.is_empty() {
        let _ = writeln!(out);
        let _ = writeln!(out, "Pairwise interactions (exploratory, uncorrected)");
        let _ = writeln!(out, "{:<14}{:<14}{:>8}{:>8}{:>8}{:>8}", "A", "B", "Δ_A", "Δ_B", "Δ_AB", "I");
        for i in &a.interactions {
            let _ = writeln!(
                out,
                "{:<14}{:<14}{:>8}{:>8}{:>8}{:>8}",
                i.a.name(),
                i.b.name(),
                signed_pp(i.delta_a),
                signed_pp(i.delta_b),
                signed_pp(i.delta_ab),
                signed_pp(i.interaction)
            );
        }
    }
    let _ = writeln!(out);
    for n in &a.notes {
        let _ = writeln!(out, "note: {n}");
    }
    out
}

pub fn greedy_text(g: &GreedyReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<6}{:<30}{:>10}  {:<16}{:>8}{:>8}{:>8}", "Step", "System", "Acc. (%)", "95% CI", "Δ", "d", "Gain");
    for s in &g.steps {
        let sm = &s.report.final_summary;
        let mark = if g.threshold_step == Some(s.step) { "  <- reaches 92% of total gain" } else { "" };
        let _ = writeln!(
            out,
            "{:<6}{:<30}{:>10}  {:<16}{:>8}{:>8}{:>7.0}%{}",
            s.step,
            s.label,
            pct(sm.mean),
            format!("({}, {})", pct(sm.ci_low), pct(sm.ci_high)),
            if s.step == 0 { "—".into() } else { signed_pp(s.delta) },
            s.d.map_or_else(|| "—".into(), |d| format!("{d:.1}")),
            100.0 * s.gain_fraction,
            mark
        );
    }
    let _ = writeln!(out);
    for n in &g.notes {
        let _ = writeln!(out, "note: {n}");
    }
    out
}

pub fn sweep_text(s: &SweepReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<6}{:>10}  {:<16}{:>12}{:>16}", "B", "Acc. (%)", "95% CI", "Δ vs B=4", "Updates/epoch");
    for r in &s.rows {
        let _ = writeln!(
            out,
            "{:<6}{:>10}  {:<16}{:>12}{:>16}",
            r.batch_size,
            pct(r.summary.mean),
            format!("({}, {})", pct(r.summary.ci_low), pct(r.summary.ci_high)),
            match r.delta_vs_b4 {
                Some(_) if r.batch_size == 4 => "—".into(),
                Some(d) => signed_pp(d),
                None => "—".into(),
            },
            r.updates_per_epoch
        );
    }
    out
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Writes `report.json`, `curve.csv` and `summary.txt` into `dir`.
pub fn emit_run(dir: &Path, r: &RunReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_json(&dir.join("report.json"), r)?;
    std::fs::write(dir.join("curve.csv"), curve_csv(r))?;
    std::fs::write(dir.join("summary.txt"), run_text(r))?;
    Ok(())
}
