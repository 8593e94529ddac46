use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::EfficiencyRecord;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    /// Sample visits that passed the gate this epoch.
    pub included: usize,
    /// Batches that produced an optimiser step.
    pub batches: usize,
    /// Mean batch loss over stepped batches; absent when nothing stepped.
    pub mean_loss: Option<f64>,
    /// Accuracy of the pre-update predictions seen during the epoch.
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub schema_version: u32,
    /// `teacher` or `student`.
    pub role: String,
    pub mode: String,
    pub dataset: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub epochs: Vec<EpochRow>,
    pub final_test_accuracy: Option<f64>,
    pub participations: u64,
    pub available: u64,
    pub zeta: f64,
    pub zeta_percent: String,
}

impl TrainReport {
    pub fn efficiency(&self) -> Result<EfficiencyRecord> {
        let epochs = self.epochs.len() as u64;
        let samples = self.available.checked_div(epochs).unwrap_or(0);
        EfficiencyRecord::new(self.participations, epochs, samples)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::file(path, e))
    }

    /// Header plus one row, for stacking runs into a spreadsheet.
    pub fn summary_csv(&self) -> String {
        let acc = self
            .final_test_accuracy
            .map_or_else(|| "NA".to_string(), |a| a.to_string());
        format!(
            "dataset,role,mode,seed,epochs,test_accuracy,participations,available,zeta,zeta_percent\n\
             {},{},{},{},{},{},{},{},{},{}\n",
            self.dataset,
            self.role,
            self.mode,
            self.seed,
            self.epochs.len(),
            acc,
            self.participations,
            self.available,
            self.zeta,
            self.zeta_percent
        )
    }
}
