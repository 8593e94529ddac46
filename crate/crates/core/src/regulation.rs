//! Self-regulation gate: the epoch threshold `η(n) = 1 − exp(−α·n)`, the
//! top-two probability margin `δ`, per-sample inclusion and the participation
//! ledger.
//!
//! A sample takes part in an update when it is misclassified or when its
//! margin is still below the threshold. The threshold grows with the epoch,
//! so confidently learned samples drop out while hard ones keep training.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::argmax;

#[derive(Debug, Error)]
pub enum RegulationError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("margin needs at least two classes, got {0}")]
    TooFewClasses(usize),
    #[error("sample index {index} out of range for ledger of {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("ledger file: {0}")]
    Parse(String),
    #[error("ledger io: {0}")]
    Io(#[from] std::io::Error),
}

/// How the inclusion gate behaves over training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GatePolicy {
    /// Every sample is included every epoch (conventional training, `α = ∞`).
    Open,
    /// Adaptive threshold with rate `α`.
    Adaptive(f64),
}

impl GatePolicy {
    pub fn adaptive(alpha: f64) -> Result<Self, RegulationError> {
        check_alpha(alpha)?;
        Ok(Self::Adaptive(alpha))
    }

    /// Maps `α = +∞` to [`GatePolicy::Open`].
    pub fn from_alpha(alpha: f64) -> Result<Self, RegulationError> {
        if alpha == f64::INFINITY {
            Ok(Self::Open)
        } else {
            Self::adaptive(alpha)
        }
    }

    pub fn alpha(&self) -> f64 {
        match *self {
            GatePolicy::Open => f64::INFINITY,
            GatePolicy::Adaptive(a) => a,
        }
    }

    pub fn is_open(&self) -> bool {
        matches!(self, GatePolicy::Open)
    }

    /// Threshold for `epoch`; `None` for the open gate.
    pub fn threshold(&self, epoch: usize) -> Option<Threshold> {
        match *self {
            GatePolicy::Open => None,
            GatePolicy::Adaptive(a) => Some(Threshold::at(a, epoch)),
        }
    }

    /// Gate decision for one probability row; the open gate always includes.
    pub fn decide(&self, probs: &[f64], label: usize, epoch: usize) -> GateDecision {
        match self.threshold(epoch) {
            Some(eta) => gate_at(probs, label, eta),
            None => {
                let mut d = gate(probs, label, 1.0);
                d.included = true;
                d
            }
        }
    }
}

fn check_alpha(alpha: f64) -> Result<(), RegulationError> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(RegulationError::InvalidParameter(format!(
            "regulation rate must be positive and finite, got {alpha}"
        )))
    }
}

/// `η(n) = 1 − exp(−α·n)` kept together with its complement `exp(−α·n)`.
///
/// In `f64` the value itself rounds to exactly 1 once `α·n` passes about 37,
/// while the complement stays representable (and strictly decreasing) for
/// hundreds of times longer. Comparisons go through whichever form is exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    value: f64,
    complement: f64,
}

impl Threshold {
    pub fn new(alpha: f64, epoch: usize) -> Result<Self, RegulationError> {
        check_alpha(alpha)?;
        Ok(Self::at(alpha, epoch))
    }

    fn at(alpha: f64, epoch: usize) -> Self {
        let x = -alpha * epoch as f64;
        Self {
            value: -x.exp_m1(),
            complement: x.exp(),
        }
    }

    /// `η` rounded to `f64`.
    pub fn value(&self) -> f64 {
        self.value
    }

    /// `1 − η`.
    pub fn complement(&self) -> f64 {
        self.complement
    }

    /// Whether `margin < η`.
    pub fn admits(&self, margin: f64) -> bool {
        if self.complement > 0.5 {
            margin < self.value
        } else {
            // margin >= 0.5 here makes 1 - margin exact
            1.0 - margin > self.complement
        }
    }
}

impl PartialOrd for Threshold {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        other.complement.partial_cmp(&self.complement)
    }
}

/// `η = 1 − exp(−α·epoch)`.
pub fn threshold(alpha: f64, epoch: usize) -> Result<f64, RegulationError> {
    Threshold::new(alpha, epoch).map(|t| t.value())
}

/// Difference between the largest and second-largest probability. Tied
/// maxima give zero.
pub fn margin(probs: &[f64]) -> Result<f64, RegulationError> {
    if probs.len() < 2 {
        return Err(RegulationError::TooFewClasses(probs.len()));
    }
    Ok(top_two_gap(probs))
}

fn top_two_gap(probs: &[f64]) -> f64 {
    let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &p in probs {
        if p > first {
            second = first;
            first = p;
        } else if p > second {
            second = p;
        }
    }
    first - second
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateDecision {
    pub included: bool,
    pub predicted: usize,
    pub margin: f64,
    pub threshold: f64,
}

/// Includes the sample when it is misclassified or its margin is below `eta`.
pub fn gate(probs: &[f64], label: usize, eta: f64) -> GateDecision {
    decision(probs, label, eta, |m| m < eta)
}

/// [`gate`] against a scheduled threshold.
pub fn gate_at(probs: &[f64], label: usize, eta: Threshold) -> GateDecision {
    decision(probs, label, eta.value(), |m| eta.admits(m))
}

fn decision(probs: &[f64], label: usize, eta: f64, below: impl Fn(f64) -> bool) -> GateDecision {
    let predicted = argmax(probs);
    let margin = if probs.len() < 2 { 1.0 } else { top_two_gap(probs) };
    GateDecision {
        included: predicted != label || below(margin),
        predicted,
        margin,
        threshold: eta,
    }
}

/// Per-sample participation counts accumulated over training.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticipationLedger {
    counts: Vec<u64>,
    labels: Vec<usize>,
    epochs: usize,
    policy: GatePolicy,
}

impl ParticipationLedger {
    pub fn new(labels: Vec<usize>, policy: GatePolicy) -> Self {
        Self {
            counts: vec![0; labels.len()],
            labels,
            epochs: 0,
            policy,
        }
    }

    /// Rebuilds a ledger from stored counts, checking `count <= epochs`.
    pub fn from_parts(
        counts: Vec<u64>,
        labels: Vec<usize>,
        epochs: usize,
        policy: GatePolicy,
    ) -> Result<Self, RegulationError> {
        if counts.len() != labels.len() {
            return Err(RegulationError::Parse(format!(
                "{} counts for {} labels",
                counts.len(),
                labels.len()
            )));
        }
        if let Some((i, c)) = counts.iter().enumerate().find(|(_, &c)| c > epochs as u64) {
            return Err(RegulationError::Parse(format!(
                "sample {i} participated {c} times in {epochs} epochs"
            )));
        }
        Ok(Self {
            counts,
            labels,
            epochs,
            policy,
        })
    }

    pub fn record(&mut self, index: usize) -> Result<(), RegulationError> {
        let len = self.counts.len();
        let slot = self
            .counts
            .get_mut(index)
            .ok_or(RegulationError::IndexOutOfRange { index, len })?;
        *slot += 1;
        Ok(())
    }

    pub fn finish_epoch(&mut self) {
        self.epochs += 1;
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn epochs(&self) -> usize {
        self.epochs
    }

    pub fn policy(&self) -> GatePolicy {
        self.policy
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// CSV with a `# epochs=N,alpha=A` line, then `index,label,count` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), RegulationError> {
        writeln!(out, "# epochs={},alpha={}", self.epochs, format_alpha(self.policy))?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "label", "count"])
            .map_err(|e| RegulationError::Parse(e.to_string()))?;
        for (i, (&c, &y)) in self.counts.iter().zip(&self.labels).enumerate() {
            w.write_record([i.to_string(), y.to_string(), c.to_string()])
                .map_err(|e| RegulationError::Parse(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(mut input: R) -> Result<Self, RegulationError> {
        let mut meta = String::new();
        input.read_line(&mut meta)?;
        let (epochs, policy) = parse_meta(meta.trim())?;
        let mut reader = csv::Reader::from_reader(input);
        let mut counts = Vec::new();
        let mut labels = Vec::new();
        for (row, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| RegulationError::Parse(e.to_string()))?;
            let field = |k: usize| -> Result<u64, RegulationError> {
                rec.get(k)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| RegulationError::Parse(format!("bad row {row}")))
            };
            if field(0)? != row as u64 {
                return Err(RegulationError::Parse(format!("row {row} is out of order")));
            }
            labels.push(field(1)? as usize);
            counts.push(field(2)?);
        }
        Self::from_parts(counts, labels, epochs, policy)
    }

    pub fn save(&self, path: &Path) -> Result<(), RegulationError> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(f)
    }

    pub fn load(path: &Path) -> Result<Self, RegulationError> {
        Self::read_csv(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn format_alpha(policy: GatePolicy) -> String {
    match policy {
        GatePolicy::Open => "inf".into(),
        GatePolicy::Adaptive(a) => a.to_string(),
    }
}

fn parse_meta(line: &str) -> Result<(usize, GatePolicy), RegulationError> {
    let bad = || RegulationError::Parse(format!("bad header line {line:?}"));
    let body = line.strip_prefix('#').ok_or_else(bad)?.trim();
    let mut epochs = None;
    let mut policy = None;
    for kv in body.split(',') {
        match kv.split_once('=') {
            Some(("epochs", v)) => epochs = v.parse().ok(),
            Some(("alpha", "inf")) => policy = Some(GatePolicy::Open),
            Some(("alpha", v)) => {
                policy = v.parse().ok().and_then(|a| GatePolicy::adaptive(a).ok())
            }
            _ => return Err(bad()),
        }
    }
    Ok((epochs.ok_or_else(bad)?, policy.ok_or_else(bad)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_values() {
        assert_eq!(threshold(0.5, 0).unwrap(), 0.0);
        assert!((threshold(0.02, 100).unwrap() - 0.864_664_716_763_387_3).abs() < 1e-9);
        assert!(threshold(0.0, 3).is_err());
        assert!(threshold(-1.0, 3).is_err());
    }

    #[test]
    fn threshold_is_strictly_increasing_and_below_one() {
        // Consecutive values stop being distinguishable in f64 once the step
        // alpha * exp(-alpha * n) falls below the spacing of doubles near 1,
        // so strictness over 10^4 epochs holds only for small enough alpha.
        for alpha in [0.0005, 0.002, 0.0025] {
            let mut prev = threshold(alpha, 0).unwrap();
            for n in 1..=10_000 {
                let cur = threshold(alpha, n).unwrap();
                assert!(cur > prev, "alpha={alpha} n={n}");
                assert!(cur < 1.0);
                prev = cur;
            }
        }
    }

    #[test]
    fn threshold_saturates_at_one_never_above() {
        let mut prev = 0.0;
        for n in 0..=10_000 {
            let cur = threshold(0.02, n).unwrap();
            assert!(cur >= prev && cur <= 1.0);
            if n <= 1800 {
                assert!(cur < 1.0);
            }
            prev = cur;
        }
        // a correctly classified one-hot prediction stays excluded
        assert!(!gate(&[1.0, 0.0], 0, threshold(0.02, 10_000).unwrap()).included);
    }

    #[test]
    fn scheduled_threshold_is_strictly_increasing_below_one() {
        for alpha in [0.0005, 0.0036, 0.02, 0.05] {
            let mut prev = Threshold::new(alpha, 0).unwrap();
            assert_eq!(prev.value(), 0.0);
            for n in 1..=10_000 {
                let cur = Threshold::new(alpha, n).unwrap();
                assert!(cur > prev, "alpha={alpha} n={n}");
                assert!(cur.complement() > 0.0 && cur.value() <= 1.0);
                prev = cur;
            }
        }
    }

    #[test]
    fn admits_agrees_with_plain_comparison() {
        for n in [0, 1, 7, 35, 100, 300, 2000] {
            let t = Threshold::new(0.02, n).unwrap();
            for k in 0..=1000 {
                let m = k as f64 / 1000.0;
                if (m - t.value()).abs() > 1e-12 {
                    assert_eq!(t.admits(m), m < t.value(), "n={n} m={m}");
                }
            }
            assert!(!t.admits(1.0));
        }
        // beyond f64 saturation the complement still orders epochs
        let late = Threshold::new(0.02, 5000).unwrap();
        assert_eq!(late.value(), 1.0);
        assert!(late.admits(1.0 - f64::EPSILON));
        assert!(!late.admits(1.0));
    }

    #[test]
    fn margin_examples() {
        assert_eq!(margin(&[0.0, 1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(margin(&[0.25; 4]).unwrap(), 0.0);
        assert!((margin(&[0.5, 0.3, 0.2]).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(margin(&[0.4, 0.4, 0.2]).unwrap(), 0.0);
        assert!(matches!(margin(&[1.0]), Err(RegulationError::TooFewClasses(1))));
    }

    #[test]
    fn gate_examples() {
        // wrong prediction is always included
        assert!(gate(&[0.9, 0.1], 1, 0.0).included);
        let confident = [0.95, 0.05];
        assert!(!gate(&confident, 0, 0.5).included);
        let unsure = [0.55, 0.45];
        let d = gate(&unsure, 0, 0.5);
        assert!(d.included);
        assert_eq!(d.predicted, 0);
    }

    #[test]
    fn open_policy_always_includes() {
        let d = GatePolicy::Open.decide(&[1.0, 0.0], 0, 7);
        assert!(d.included);
    }

    #[test]
    fn ledger_records_and_rejects_out_of_range() {
        let mut l = ParticipationLedger::new(vec![0; 5], GatePolicy::Open);
        l.record(3).unwrap();
        l.record(3).unwrap();
        assert_eq!(l.counts(), &[0, 0, 0, 2, 0]);
        assert!(matches!(
            l.record(5),
            Err(RegulationError::IndexOutOfRange { index: 5, len: 5 })
        ));
    }

    #[test]
    fn ledger_csv_round_trip() {
        let l = ParticipationLedger::from_parts(
            vec![3, 0, 7],
            vec![1, 0, 2],
            7,
            GatePolicy::Adaptive(0.02),
        )
        .unwrap();
        let mut buf = Vec::new();
        l.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text,
            "# epochs=7,alpha=0.02\nindex,label,count\n0,1,3\n1,0,0\n2,2,7\n"
        );
        let back = ParticipationLedger::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, l);
    }

    #[test]
    fn ledger_rejects_counts_above_epochs() {
        assert!(ParticipationLedger::from_parts(vec![4], vec![0], 3, GatePolicy::Open).is_err());
    }
}
