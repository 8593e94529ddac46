//! Sample significance: class-wise min-max normalised participation counts,
//! plus per-class histograms for plotting.
//!
//! A class whose members all participated equally has no spread to
//! normalise; every member then gets significance 1, so weighting by it
//! reduces to the unweighted loss for that class.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::ClassPartition;
use crate::regulation::ParticipationLedger;

#[derive(Debug, Error)]
pub enum SignificanceError {
    #[error("ledger has {ledger} samples but the partition covers {partition}")]
    SizeMismatch { ledger: usize, partition: usize },
    #[error("class {0} has no samples")]
    EmptyClass(usize),
    #[error("histogram needs at least one bin")]
    NoBins,
    #[error("significance file: {0}")]
    Parse(String),
    #[error("significance io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceMeta {
    pub alpha: f64,
    pub epochs: usize,
    pub dataset: String,
    /// Classes with constant counts, whose members were all set to 1.
    pub degenerate_classes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignificanceTable {
    values: Vec<f64>,
    counts: Vec<u64>,
    labels: Vec<usize>,
    pub meta: SignificanceMeta,
}

impl SignificanceTable {
    /// A table with the same value for every sample, mainly for tests.
    pub fn uniform(labels: Vec<usize>, value: f64) -> Self {
        Self {
            values: vec![value; labels.len()],
            counts: vec![0; labels.len()],
            labels,
            meta: SignificanceMeta {
                alpha: f64::NAN,
                epochs: 0,
                dataset: String::new(),
                degenerate_classes: Vec::new(),
            },
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, index: usize) -> f64 {
        self.values[index]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// CSV rows `index,label,count,significance`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SignificanceError> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| SignificanceError::Parse(e.to_string());
        w.write_record(["index", "label", "count", "significance"])
            .map_err(csv_err)?;
        for i in 0..self.values.len() {
            w.write_record([
                i.to_string(),
                self.labels[i].to_string(),
                self.counts[i].to_string(),
                self.values[i].to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a table written by [`Self::write_csv`]. Metadata is not part of
    /// the CSV and comes back empty.
    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self, SignificanceError> {
        let mut reader = csv::Reader::from_reader(input);
        let mut table = Self::uniform(Vec::new(), 0.0);
        for (row, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| SignificanceError::Parse(e.to_string()))?;
            let bad = || SignificanceError::Parse(format!("bad row {row}"));
            let index: usize = rec.get(0).and_then(|v| v.parse().ok()).ok_or_else(bad)?;
            if index != row {
                return Err(SignificanceError::Parse(format!("row {row} is out of order")));
            }
            table
                .labels
                .push(rec.get(1).and_then(|v| v.parse().ok()).ok_or_else(bad)?);
            table
                .counts
                .push(rec.get(2).and_then(|v| v.parse().ok()).ok_or_else(bad)?);
            let v: f64 = rec.get(3).and_then(|v| v.parse().ok()).ok_or_else(bad)?;
            if !(0.0..=1.0).contains(&v) {
                return Err(SignificanceError::Parse(format!(
                    "row {row}: significance {v} outside [0, 1]"
                )));
            }
            table.values.push(v);
        }
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<(), SignificanceError> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self, SignificanceError> {
        Self::read_csv(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Normalises each class's counts to `(n - min) / (max - min)`.
pub fn compute_significance(
    ledger: &ParticipationLedger,
    partition: &ClassPartition,
    dataset: &str,
) -> Result<SignificanceTable, SignificanceError> {
    if ledger.len() != partition.total() {
        return Err(SignificanceError::SizeMismatch {
            ledger: ledger.len(),
            partition: partition.total(),
        });
    }
    let counts = ledger.counts();
    let mut values = vec![0.0; counts.len()];
    let mut degenerate = Vec::new();
    for (class, members) in partition.iter() {
        let (lo, hi) = members
            .iter()
            .map(|&i| counts[i])
            .fold(None, |acc: Option<(u64, u64)>, c| match acc {
                None => Some((c, c)),
                Some((lo, hi)) => Some((lo.min(c), hi.max(c))),
            })
            .ok_or(SignificanceError::EmptyClass(class))?;
        if lo == hi {
            degenerate.push(class);
            members.iter().for_each(|&i| values[i] = 1.0);
            continue;
        }
        let span = (hi - lo) as f64;
        for &i in members {
            values[i] = (counts[i] - lo) as f64 / span;
        }
    }
    Ok(SignificanceTable {
        values,
        counts: counts.to_vec(),
        labels: ledger.labels().to_vec(),
        meta: SignificanceMeta {
            alpha: ledger.policy().alpha(),
            epochs: ledger.epochs(),
            dataset: dataset.to_string(),
            degenerate_classes: degenerate,
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignificanceHistogram {
    pub class: usize,
    /// `bins + 1` uniform edges over `[0, 1]`.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

pub const DEFAULT_BINS: usize = 4;

/// Per-class histograms over uniform bins; the last bin is closed on the right.
pub fn histogram(
    table: &SignificanceTable,
    partition: &ClassPartition,
    bins: usize,
) -> Result<Vec<SignificanceHistogram>, SignificanceError> {
    if bins == 0 {
        return Err(SignificanceError::NoBins);
    }
    if table.len() != partition.total() {
        return Err(SignificanceError::SizeMismatch {
            ledger: table.len(),
            partition: partition.total(),
        });
    }
    let edges: Vec<f64> = (0..=bins).map(|k| k as f64 / bins as f64).collect();
    Ok(partition
        .iter()
        .map(|(class, members)| {
            let mut counts = vec![0; bins];
            for &i in members {
                let bin = ((table.values[i] * bins as f64) as usize).min(bins - 1);
                counts[bin] += 1;
            }
            SignificanceHistogram {
                class,
                edges: edges.clone(),
                counts,
            }
        })
        .collect())
}

/// CSV rows `class,bin_lo,bin_hi,count`.
pub fn write_histogram_csv<W: Write>(
    hists: &[SignificanceHistogram],
    out: W,
) -> Result<(), SignificanceError> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| SignificanceError::Parse(e.to_string());
    w.write_record(["class", "bin_lo", "bin_hi", "count"])
        .map_err(csv_err)?;
    for h in hists {
        for (k, &c) in h.counts.iter().enumerate() {
            w.write_record([
                h.class.to_string(),
                h.edges[k].to_string(),
                h.edges[k + 1].to_string(),
                c.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regulation::GatePolicy;

    fn ledger(counts: Vec<u64>, labels: Vec<usize>, epochs: usize) -> ParticipationLedger {
        ParticipationLedger::from_parts(counts, labels, epochs, GatePolicy::Adaptive(0.02)).unwrap()
    }

    #[test]
    fn three_counts_normalise_to_zero_half_one() {
        let l = ledger(vec![3, 7, 11], vec![0, 0, 0], 20);
        let p = ClassPartition::from_labels(l.labels(), 1);
        let t = compute_significance(&l, &p, "x").unwrap();
        assert_eq!(t.values(), &[0.0, 0.5, 1.0]);
        assert!(t.meta.degenerate_classes.is_empty());
    }

    #[test]
    fn constant_class_is_all_ones() {
        let l = ledger(vec![4, 4, 1, 9], vec![0, 0, 1, 1], 10);
        let p = ClassPartition::from_labels(l.labels(), 2);
        let t = compute_significance(&l, &p, "x").unwrap();
        assert_eq!(t.values(), &[1.0, 1.0, 0.0, 1.0]);
        assert_eq!(t.meta.degenerate_classes, vec![0]);
    }

    #[test]
    fn empty_class_and_size_mismatch_error() {
        let l = ledger(vec![1, 2], vec![0, 0], 3);
        let p = ClassPartition::from_labels(l.labels(), 2);
        assert!(matches!(
            compute_significance(&l, &p, "x"),
            Err(SignificanceError::EmptyClass(1))
        ));
        let p3 = ClassPartition::from_labels(&[0, 0, 0], 1);
        assert!(matches!(
            compute_significance(&l, &p3, "x"),
            Err(SignificanceError::SizeMismatch { .. })
        ));
    }

    #[test]
    fn histogram_binning() {
        let l = ledger(vec![3, 7, 11], vec![0, 0, 0], 20);
        let p = ClassPartition::from_labels(l.labels(), 1);
        let t = compute_significance(&l, &p, "x").unwrap();
        let h = histogram(&t, &p, DEFAULT_BINS).unwrap();
        assert_eq!(h[0].counts, vec![1, 0, 1, 1]);
        assert_eq!(h[0].edges, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let ones = SignificanceTable::uniform(vec![0, 0, 0], 1.0);
        assert_eq!(histogram(&ones, &p, 4).unwrap()[0].counts, vec![0, 0, 0, 3]);
        assert!(matches!(histogram(&t, &p, 0), Err(SignificanceError::NoBins)));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let l = ledger(vec![0, 1, 2, 5, 9, 3], vec![0, 0, 0, 1, 1, 1], 9);
        let p = ClassPartition::from_labels(l.labels(), 2);
        let t = compute_significance(&l, &p, "x").unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = SignificanceTable::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.values(), t.values());
        assert_eq!(back.labels(), t.labels());
    }
}
