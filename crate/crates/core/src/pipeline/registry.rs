//! Published reference WERs and side-by-side comparison with simulated runs.
//!
//! The reference values come from full-scale neural systems on real speech.
//! They are kept verbatim as reference data; a comparison only reports
//! whether simulated differences point in the same direction.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

use super::run::RunReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryCell {
    pub column: String,
    /// The cell as printed, e.g. `4.77` or `NA`.
    pub raw: String,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub table: String,
    pub condition: String,
    pub cells: Vec<RegistryCell>,
    /// Row as printed, for locating it in the source.
    pub quote: String,
    /// Always false: the values are reference data, not simulation targets.
    pub reproducible: bool,
}

impl RegistryEntry {
    pub fn value(&self, column: &str) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.column == column)
            .and_then(|c| c.value)
    }
}

fn entry(
    table: &str,
    condition: &str,
    columns: &[&str],
    raw: &[&str],
    quote: &str,
) -> RegistryEntry {
    RegistryEntry {
        table: table.to_string(),
        condition: condition.to_string(),
        cells: columns
            .iter()
            .zip(raw)
            .map(|(c, r)| RegistryCell {
                column: c.to_string(),
                raw: r.to_string(),
                value: r.parse().ok(),
            })
            .collect(),
        quote: quote.to_string(),
        reproducible: false,
    }
}

/// Every published reference value.
pub fn registry() -> Vec<RegistryEntry> {
    const LS: [&str; 2] = ["test-clean", "test-other"];
    const REDUCED: [&str; 4] = ["aug-clean", "aug-other", "source-clean", "source-other"];
    const TRAIN: [&str; 2] = ["IS", "IS+LS"];
    const LEX: [&str; 4] = ["IS/IS-TTS", "IS/LS-TTS", "IS+LS/IS-TTS", "IS+LS/LS-TTS"];
    vec![
        entry("table2", "None", &LS, &["4.77", "13.89"], "None&4.77&13.89"),
        entry(
            "table2",
            "Original",
            &LS,
            &["4.84", "14.75"],
            "Original&4.84&14.75",
        ),
        entry(
            "table2",
            "Random",
            &LS,
            &["4.92", "14.91"],
            "Random&4.92&14.91",
        ),
        entry(
            "table2",
            "Sampled",
            &LS,
            &["4.58", "13.78"],
            "Sampled&4.58&13.78",
        ),
        entry(
            "table2",
            "Single-speaker",
            &LS,
            &["13.55", "24.84"],
            "WERs of 13.55 and 24.84 on test-clean and test-other",
        ),
        entry(
            "table3",
            "0",
            &REDUCED,
            &["32.44", "66.10", "-", "-"],
            "0& 32.44 &66.10&-&-",
        ),
        entry(
            "table3",
            "10-clean",
            &REDUCED,
            &["16.91", "43.10", "NA", "NA"],
            "10-clean&16.91&43.10&NA&NA",
        ),
        entry(
            "table3",
            "100-clean",
            &REDUCED,
            &["9.25", "30.58", "12.46", "34.00"],
            "100-clean&9.25&30.58&12.46&34.00",
        ),
        entry(
            "table3",
            "460-clean",
            &REDUCED,
            &["6.28", "22.52", "6.30", "22.41"],
            "460-clean&6.28&22.52&6.30&22.41",
        ),
        entry(
            "table3",
            "960-all",
            &REDUCED,
            &["4.58", "13.78", "4.77", "13.89"],
            "960-all&4.58&13.78&4.77&13.89",
        ),
        entry(
            "table4",
            "Sampled",
            &LS,
            &["3.2", "11.8"],
            "Sampled&3.2&11.8",
        ),
        entry(
            "table4",
            "Original",
            &LS,
            &["3.1", "11.6"],
            "Original& 3.1&11.6",
        ),
        entry("table5", "0", &LS, &["4.77", "13.89"], "0&4.77&13.89"),
        entry("table5", "100k", &LS, &["4.80", "13.89"], "100k&4.80&13.89"),
        entry("table5", "600k", &LS, &["4.55", "13.64"], "600k&4.55&13.64"),
        entry("table5", "1.1M", &LS, &["4.70", "13.58"], "1.1M&4.70&13.58"),
        entry(
            "table6",
            "None",
            &TRAIN,
            &["32.9", "30.9"],
            "None&32.9&30.9",
        ),
        entry(
            "table6",
            "Isolated-Sentences",
            &TRAIN,
            &["33.0", "29.8"],
            "Isolated-Sentences&33.0&29.8",
        ),
        entry(
            "table6",
            "LibriSpeech",
            &TRAIN,
            &["34.2", "29.6"],
            "LibriSpeech&34.2&29.6",
        ),
        entry(
            "table6",
            "Unsupervised adaptation",
            &["IS"],
            &["35.6"],
            "results in a WER of 35.6",
        ),
        entry(
            "table7",
            "Isolated-Sentences",
            &TRAIN,
            &["24.2", "28.9"],
            "Isolated-Sentences&24.2&28.9",
        ),
        entry(
            "table7",
            "LibriSpeech",
            &TRAIN,
            &["24.5", "29.3"],
            "LibriSpeech&24.5&29.3",
        ),
        entry(
            "table8",
            "0",
            &LEX,
            &["32.9", "32.9", "30.94", "30.94"],
            "0&\\multicolumn{2}{c|}{32.9}&\\multicolumn{2}{c|}{30.94}",
        ),
        entry(
            "table8",
            "100k",
            &LEX,
            &["33.53", "33.02", "29.47", "30.67"],
            "100k& 33.53 & 33.02  &29.47&30.67",
        ),
        entry(
            "table8",
            "200k",
            &LEX,
            &["31.29", "33.11", "29.74", "30.21"],
            "200k& 31.29 & 33.11  &29.74  &30.21",
        ),
        entry(
            "table8",
            "400k",
            &LEX,
            &["30.74", "32.03", "29.51", "30.34"],
            "400k& 30.74 & 32.03 &29.51 &30.34",
        ),
    ]
}

pub fn save_registry(entries: &[RegistryEntry], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(entries)? + "\n")?;
    Ok(())
}

pub fn load_registry(path: impl AsRef<Path>) -> Result<Vec<RegistryEntry>> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub arm: String,
    pub table: String,
    pub condition: String,
    pub column: String,
    pub eval: String,
    /// Mean simulated corpus WER, in percent.
    pub simulated: f64,
    pub reference: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub table: String,
    pub first: String,
    pub second: String,
    pub reference_delta: f64,
    pub simulated_delta: f64,
    /// `None` when the reference values tie.
    pub directional_agreement: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub plan: String,
    pub rows: Vec<ComparisonRow>,
    pub pairs: Vec<PairComparison>,
    pub warnings: Vec<String>,
}

/// Line up every registry-mapped arm with its reference cell and report,
/// for each pair of arms in the same table, whether the simulated difference
/// has the same sign as the reference difference.
pub fn compare_to_registry(report: &RunReport, registry: &[RegistryEntry]) -> Comparison {
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    let eval = report.eval.first().cloned().unwrap_or_default();
    for arm in &report.arms {
        let Some(r) = &arm.registry else {
            warnings.push(format!("arm `{}` has no registry mapping", arm.name));
            continue;
        };
        let Some(&sim) = arm.mean_wer.get(&eval) else {
            warnings.push(format!("arm `{}` has no completed seeds", arm.name));
            continue;
        };
        let found = registry
            .iter()
            .find(|e| e.table == r.table && e.condition == r.condition);
        let reference = found.and_then(|e| e.value(&r.column));
        if found.is_none() {
            warnings.push(format!(
                "arm `{}` maps to unknown entry {}/{}",
                arm.name, r.table, r.condition
            ));
        } else if reference.is_none() {
            warnings.push(format!(
                "arm `{}`: entry {}/{} has no value in column {}",
                arm.name, r.table, r.condition, r.column
            ));
        }
        rows.push(ComparisonRow {
            arm: arm.name.clone(),
            table: r.table.clone(),
            condition: r.condition.clone(),
            column: r.column.clone(),
            eval: eval.clone(),
            simulated: 100.0 * sim,
            reference,
        });
    }

    let mut pairs = Vec::new();
    for (i, a) in rows.iter().enumerate() {
        for b in &rows[i + 1..] {
            let (Some(ra), Some(rb)) = (a.reference, b.reference) else {
                continue;
            };
            if a.table != b.table {
                continue;
            }
            let reference_delta = ra - rb;
            let simulated_delta = a.simulated - b.simulated;
            pairs.push(PairComparison {
                table: a.table.clone(),
                first: a.arm.clone(),
                second: b.arm.clone(),
                reference_delta,
                simulated_delta,
                directional_agreement: (reference_delta != 0.0)
                    .then(|| reference_delta.signum() == simulated_delta.signum()),
            });
        }
    }
    Comparison {
        plan: report.plan.clone(),
        rows,
        pairs,
        warnings,
    }
}

impl Comparison {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "plan: {}", self.plan);
        let _ = writeln!(
            s,
            "Reference WERs come from full-scale systems and are not reproduced; only directions are compared."
        );
        let _ = writeln!(
            s,
            "{:<24} {:<8} {:<20} {:<14} {:>10} {:>10}",
            "arm", "table", "condition", "column", "sim %", "ref %"
        );
        for r in &self.rows {
            let reference = r.reference.map_or("-".to_string(), |v| format!("{v:.2}"));
            let _ = writeln!(
                s,
                "{:<24} {:<8} {:<20} {:<14} {:>10.2} {:>10}",
                r.arm, r.table, r.condition, r.column, r.simulated, reference
            );
        }
        if !self.pairs.is_empty() {
            let _ = writeln!(s, "\npairwise direction (first minus second):");
        }
        for p in &self.pairs {
            let verdict = match p.directional_agreement {
                Some(true) => "agree",
                Some(false) => "disagree",
                None => "reference tie",
            };
            let _ = writeln!(
                s,
                "{:<24} vs {:<24} ref {:+7.2}  sim {:+7.2}  {verdict}",
                p.first, p.second, p.reference_delta, p.simulated_delta
            );
        }
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        s
    }
}
