//! Test accuracy, sample efficiency and cross-run comparison tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::distill::report::{TrainReport, REPORT_SCHEMA_VERSION};
use crate::engine::SequentialModel;
use crate::error::{Error, Result};
use crate::regulation::ParticipationLedger;

/// Fraction of samples whose largest logit matches the label. Logits are
/// compared directly, which is evaluation at temperature 1.
pub fn evaluate(model: &SequentialModel, dataset: &Dataset, batch_size: usize) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::Config("cannot evaluate on an empty dataset".into()));
    }
    let indices: Vec<usize> = (0..dataset.len()).collect();
    let mut correct = 0usize;
    for chunk in indices.chunks(batch_size.max(1)) {
        let logits = model.forward(&dataset.batch(chunk))?;
        correct += chunk
            .iter()
            .enumerate()
            .filter(|&(r, &i)| logits.argmax_row(r) == dataset.labels()[i])
            .count();
    }
    Ok(correct as f64 / dataset.len() as f64)
}

/// Total participations against the visits available to conventional training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyRecord {
    pub participations: u64,
    pub epochs: u64,
    pub samples: u64,
    /// `epochs * samples`.
    pub available: u64,
    pub zeta: f64,
    pub percent: String,
}

impl EfficiencyRecord {
    pub fn new(participations: u64, epochs: u64, samples: u64) -> Result<Self> {
        let available = epochs
            .checked_mul(samples)
            .filter(|&a| a > 0)
            .ok_or_else(|| Error::Config("efficiency needs epochs * samples > 0".into()))?;
        let zeta = participations as f64 / available as f64;
        Ok(Self {
            participations,
            epochs,
            samples,
            available,
            zeta,
            percent: format_percent(participations, available),
        })
    }

    /// Exact rational comparison with another `participations / available`.
    pub fn same_ratio(&self, participations: u64, available: u64) -> bool {
        u128::from(self.participations) * u128::from(available)
            == u128::from(participations) * u128::from(self.available)
    }

    /// `85528/12000000` style rendering.
    pub fn fraction(&self) -> String {
        format!("{}/{}", self.participations, self.available)
    }
}

/// Percentage with three decimals, e.g. `0.713%`.
pub fn format_percent(num: u64, den: u64) -> String {
    format!("{:.3}%", num as f64 * 100.0 / den as f64)
}

pub fn efficiency(ledger: &ParticipationLedger) -> Result<EfficiencyRecord> {
    EfficiencyRecord::new(ledger.total(), ledger.epochs() as u64, ledger.len() as u64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub dataset: String,
    pub role: String,
    pub mode: String,
    pub seed: u64,
    pub test_accuracy: Option<f64>,
    pub participations: u64,
    pub available: u64,
    pub zeta_percent: String,
}

fn mode_rank(mode: &str) -> usize {
    ["conventional", "significance", "regulated", "hybrid"]
        .iter()
        .position(|m| *m == mode)
        .unwrap_or(usize::MAX)
}

/// Collects reports into rows ordered by dataset, role, mode and seed.
/// Duplicate `(dataset, role, mode, seed)` keys are rejected.
pub fn aggregate(reports: &[(String, TrainReport)]) -> Result<Vec<ComparisonRow>> {
    let mut rows: BTreeMap<(String, String, usize, String, u64), ComparisonRow> = BTreeMap::new();
    for (source, r) in reports {
        if r.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::File {
                path: source.clone(),
                reason: format!(
                    "schema version {} (expected {REPORT_SCHEMA_VERSION})",
                    r.schema_version
                ),
            });
        }
        let key = (
            r.dataset.clone(),
            r.role.clone(),
            mode_rank(&r.mode),
            r.mode.clone(),
            r.seed,
        );
        let row = ComparisonRow {
            dataset: r.dataset.clone(),
            role: r.role.clone(),
            mode: r.mode.clone(),
            seed: r.seed,
            test_accuracy: r.final_test_accuracy,
            participations: r.participations,
            available: r.available,
            zeta_percent: r.zeta_percent.clone(),
        };
        if rows.insert(key, row).is_some() {
            return Err(Error::File {
                path: source.clone(),
                reason: format!(
                    "duplicate report for dataset {}, {} mode {}, seed {}",
                    r.dataset, r.role, r.mode, r.seed
                ),
            });
        }
    }
    Ok(rows.into_values().collect())
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from(
        "dataset,role,mode,seed,test_accuracy,participations,available,zeta_percent\n",
    );
    for r in rows {
        let acc = r
            .test_accuracy
            .map_or_else(|| "NA".to_string(), |a| format!("{a:.4}"));
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.dataset, r.role, r.mode, r.seed, acc, r.participations, r.available, r.zeta_percent
        );
    }
    out
}

pub fn load_report(path: &Path) -> Result<TrainReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::file(path, e))?;
    match value.get("schema_version").and_then(serde_json::Value::as_u64) {
        Some(v) if v == u64::from(REPORT_SCHEMA_VERSION) => {}
        other => {
            return Err(Error::file(
                path,
                format!("unsupported report schema version {other:?}"),
            ))
        }
    }
    serde_json::from_value(value).map_err(|e| Error::file(path, e))
}
