//! Teacher training with self-regulation and the student distillation modes.
//!
//! Both loops share one batch step: a forward pass with the pre-update
//! parameters, a per-sample gate decision, a masked loss averaged over the
//! included samples, and a single Adam step (skipped when the gate excluded
//! the whole batch). Included samples are tallied in the participation
//! ledger.

pub mod loss;
pub mod report;

use serde::{Deserialize, Serialize};

use crate::data::{BatchPlan, Dataset};
use crate::engine::loss::softmax_row;
use crate::engine::{AdamConfig, AdamState, SequentialModel, Tensor};
use crate::error::{Error, Result};
use crate::metrics::{efficiency, evaluate};
use crate::regulation::{GatePolicy, ParticipationLedger};
use crate::significance::SignificanceTable;

pub use loss::{distill_loss, distill_loss_and_grad, hard_loss_and_grad, LossTerms};
pub use report::{EpochRow, TrainReport};

/// Rows per shard in the data-parallel forward/backward.
pub const DEFAULT_SHARD_SIZE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistillMode {
    /// Every sample every epoch, unweighted loss.
    Conventional,
    /// Every sample every epoch, loss scaled by teacher-derived significance.
    Significance,
    /// Student gates itself, unweighted loss.
    Regulated,
    /// Student gates itself and the loss is scaled by significance.
    Hybrid,
}

impl DistillMode {
    pub const ALL: [DistillMode; 4] = [
        DistillMode::Conventional,
        DistillMode::Significance,
        DistillMode::Regulated,
        DistillMode::Hybrid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DistillMode::Conventional => "conventional",
            DistillMode::Significance => "significance",
            DistillMode::Regulated => "regulated",
            DistillMode::Hybrid => "hybrid",
        }
    }

    pub fn needs_table(self) -> bool {
        matches!(self, DistillMode::Significance | DistillMode::Hybrid)
    }

    pub fn is_gated(self) -> bool {
        matches!(self, DistillMode::Regulated | DistillMode::Hybrid)
    }
}

impl std::str::FromStr for DistillMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown distillation mode {s:?}")))
    }
}

/// Epoch/batch/optimiser settings shared by teacher and student training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Seeds the per-epoch shuffles.
    pub seed: u64,
    pub shard_size: usize,
}

impl TrainOptions {
    pub fn new(epochs: usize, batch_size: usize, lr: f64, seed: u64) -> Self {
        Self {
            epochs,
            batch_size,
            adam: AdamConfig::with_lr(lr),
            seed,
            shard_size: DEFAULT_SHARD_SIZE,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be positive".into()));
        }
        if !(self.adam.lr > 0.0 && self.adam.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} is not positive", self.adam.lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistillConfig {
    pub mode: DistillMode,
    pub tau: f64,
    pub lambda: f64,
    /// Gate used by the regulated and hybrid modes; ignored otherwise.
    pub gate: GatePolicy,
    pub train: TrainOptions,
    pub tau_squared: bool,
    /// Compute teacher logits once instead of per batch. Results are identical.
    pub cache_teacher: bool,
}

impl DistillConfig {
    pub fn new(mode: DistillMode, gate: GatePolicy, train: TrainOptions) -> Self {
        Self {
            mode,
            tau: 20.0,
            lambda: 0.3,
            gate,
            train,
            tau_squared: false,
            cache_teacher: false,
        }
    }

    fn terms(&self) -> LossTerms {
        LossTerms {
            tau: self.tau,
            lambda: self.lambda,
            tau_squared: self.tau_squared,
        }
    }

    fn effective_gate(&self) -> GatePolicy {
        if self.mode.is_gated() {
            self.gate
        } else {
            GatePolicy::Open
        }
    }
}

/// What happened in one batch, for external auditing of the loop.
#[derive(Debug, Clone)]
pub struct BatchEvent<'a> {
    pub epoch: usize,
    pub batch: usize,
    pub indices: &'a [usize],
    pub included: &'a [bool],
    pub stepped: bool,
    pub loss: f64,
}

pub trait TrainObserver {
    fn on_batch(&mut self, event: &BatchEvent<'_>);
}

impl<F: FnMut(&BatchEvent<'_>)> TrainObserver for F {
    fn on_batch(&mut self, event: &BatchEvent<'_>) {
        self(event)
    }
}

/// Outcome of a training run; the model is updated in place.
#[derive(Debug, Clone)]
pub struct TrainRun {
    pub ledger: ParticipationLedger,
    pub report: TrainReport,
    pub optimizer: AdamState,
}

enum Objective<'a> {
    Hard,
    Distill {
        terms: LossTerms,
        teacher: &'a SequentialModel,
        cached: Option<Tensor>,
        weights: Option<&'a SignificanceTable>,
    },
}

struct Loop<'a> {
    data: &'a Dataset,
    opts: TrainOptions,
    gate: GatePolicy,
    gate_tau: f64,
    objective: Objective<'a>,
}

impl Loop<'_> {
    fn run(
        &self,
        model: &mut SequentialModel,
        mut observer: Option<&mut dyn TrainObserver>,
    ) -> Result<(ParticipationLedger, Vec<EpochRow>, AdamState)> {
        let data = self.data;
        let plan = BatchPlan::new(self.opts.seed, self.opts.batch_size);
        let mut adam = AdamState::new(self.opts.adam, model.params());
        let mut ledger = ParticipationLedger::new(data.labels().to_vec(), self.gate);
        let mut rows = Vec::with_capacity(self.opts.epochs);
        for epoch in 0..self.opts.epochs {
            let mut row = EpochRow {
                epoch,
                included: 0,
                batches: 0,
                mean_loss: None,
                train_accuracy: 0.0,
            };
            let mut loss_sum = 0.0;
            let mut correct = 0usize;
            for (b, indices) in plan.batches(epoch, data.len()).iter().enumerate() {
                let x = data.batch(indices);
                let labels: Vec<usize> = indices.iter().map(|&i| data.labels()[i]).collect();
                let teacher_logits = self.teacher_logits(&x, indices)?;
                let (_, (loss, included, hits), grads) =
                    model.sharded_gradients(&x, self.opts.shard_size, |logits| {
                        let mut included = Vec::with_capacity(indices.len());
                        let mut hits = 0;
                        for (r, &label) in labels.iter().enumerate() {
                            let probs = softmax_row(logits.row(r), self.gate_tau);
                            let d = self.gate.decide(&probs, label, epoch);
                            hits += usize::from(d.predicted == label);
                            included.push(d.included);
                        }
                        let (loss, grad) = match &self.objective {
                            Objective::Hard => hard_loss_and_grad(logits, &labels, &included)?,
                            Objective::Distill { terms, weights, .. } => {
                                let w: Vec<f64> = match weights {
                                    Some(t) => indices.iter().map(|&i| t.get(i)).collect(),
                                    None => vec![1.0; indices.len()],
                                };
                                let t = teacher_logits.as_ref().expect("distillation has a teacher");
                                distill_loss_and_grad(t, logits, &labels, terms, &w, &included)?
                            }
                        };
                        Ok((grad, included.clone(), (loss, included, hits)))
                    })?;
                correct += hits;
                let n_in = included.iter().filter(|&&c| c).count();
                let stepped = n_in > 0;
                if stepped {
                    if !loss.is_finite() {
                        return Err(Error::NonFiniteLoss {
                            epoch,
                            batch: b,
                            loss,
                        });
                    }
                    adam.step(model.params_mut(), &grads)?;
                    let mut taken: Vec<usize> = indices
                        .iter()
                        .zip(&included)
                        .filter(|(_, &inc)| inc)
                        .map(|(&i, _)| i)
                        .collect();
                    taken.sort_unstable();
                    for i in taken {
                        ledger.record(i)?;
                    }
                    row.included += n_in;
                    row.batches += 1;
                    loss_sum += loss;
                }
                if let Some(obs) = observer.as_deref_mut() {
                    obs.on_batch(&BatchEvent {
                        epoch,
                        batch: b,
                        indices,
                        included: &included,
                        stepped,
                        loss,
                    });
                }
            }
            ledger.finish_epoch();
            row.mean_loss = (row.batches > 0).then(|| loss_sum / row.batches as f64);
            row.train_accuracy = correct as f64 / data.len() as f64;
            rows.push(row);
        }
        Ok((ledger, rows, adam))
    }

    fn teacher_logits(&self, x: &Tensor, indices: &[usize]) -> Result<Option<Tensor>> {
        match &self.objective {
            Objective::Hard => Ok(None),
            Objective::Distill {
                cached: Some(all), ..
            } => Ok(Some(all.select_rows(indices)?)),
            Objective::Distill { teacher, .. } => Ok(Some(teacher.forward(x)?)),
        }
    }
}

/// Logits of `model` for every sample, in index order.
pub fn all_logits(model: &SequentialModel, data: &Dataset, batch_size: usize) -> Result<Tensor> {
    let idx: Vec<usize> = (0..data.len()).collect();
    let parts = idx
        .chunks(batch_size.max(1))
        .map(|c| model.forward(&data.batch(c)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Tensor::concat_rows(&parts)?)
}

fn check_model(model: &SequentialModel, data: &Dataset, what: &str) -> Result<()> {
    if model.classes() != data.classes() {
        return Err(Error::Config(format!(
            "{what} has {} outputs but the dataset has {} classes",
            model.classes(),
            data.classes()
        )));
    }
    if model.input_shape() != data.image_shape() {
        return Err(Error::Config(format!(
            "{what} expects inputs {:?} but samples are {:?}",
            model.input_shape(),
            data.image_shape()
        )));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn finish_report(
    role: &str,
    mode: &str,
    data: &Dataset,
    seed: u64,
    config: serde_json::Value,
    ledger: &ParticipationLedger,
    epochs: Vec<EpochRow>,
    test_accuracy: Option<f64>,
) -> Result<TrainReport> {
    let eff = efficiency(ledger)?;
    Ok(TrainReport {
        schema_version: report::REPORT_SCHEMA_VERSION,
        role: role.into(),
        mode: mode.into(),
        dataset: data.name().to_string(),
        seed,
        config,
        epochs,
        final_test_accuracy: test_accuracy,
        participations: eff.participations,
        available: eff.available,
        zeta: eff.zeta,
        zeta_percent: eff.percent,
    })
}

/// Trains `model` on hard labels with the self-regulation gate. Use
/// [`GatePolicy::Open`] for conventional training.
pub fn train_teacher(
    model: &mut SequentialModel,
    train: &Dataset,
    test: Option<&Dataset>,
    gate: GatePolicy,
    opts: &TrainOptions,
    observer: Option<&mut dyn TrainObserver>,
) -> Result<TrainRun> {
    opts.validate()?;
    check_model(model, train, "teacher")?;
    let run = Loop {
        data: train,
        opts: *opts,
        gate,
        gate_tau: 1.0,
        objective: Objective::Hard,
    };
    let (ledger, epochs, optimizer) = run.run(model, observer)?;
    let test_accuracy = test
        .map(|t| evaluate(model, t, opts.batch_size))
        .transpose()?;
    let mode = if gate.is_open() { "conventional" } else { "regulated" };
    let config = serde_json::json!({
        "alpha": gate_json(gate),
        "train": opts,
    });
    let report = finish_report(
        "teacher",
        mode,
        train,
        opts.seed,
        config,
        &ledger,
        epochs,
        test_accuracy,
    )?;
    Ok(TrainRun {
        ledger,
        report,
        optimizer,
    })
}

fn gate_json(gate: GatePolicy) -> serde_json::Value {
    match gate {
        GatePolicy::Open => serde_json::Value::String("inf".into()),
        GatePolicy::Adaptive(a) => serde_json::json!(a),
    }
}

/// Distils the frozen `teacher` into `student` using `config.mode`.
pub fn distill(
    teacher: &SequentialModel,
    student: &mut SequentialModel,
    train: &Dataset,
    test: Option<&Dataset>,
    config: &DistillConfig,
    table: Option<&SignificanceTable>,
    observer: Option<&mut dyn TrainObserver>,
) -> Result<TrainRun> {
    config.train.validate()?;
    config.terms().validate()?;
    check_model(teacher, train, "teacher")?;
    check_model(student, train, "student")?;
    match (config.mode.needs_table(), table) {
        (true, None) => {
            return Err(Error::Config(format!(
                "{} distillation needs a significance table",
                config.mode.name()
            )))
        }
        (false, Some(_)) => {
            return Err(Error::Config(format!(
                "{} distillation does not take a significance table",
                config.mode.name()
            )))
        }
        (true, Some(t)) if t.len() != train.len() => {
            return Err(Error::Config(format!(
                "significance table has {} entries for {} samples",
                t.len(),
                train.len()
            )))
        }
        _ => {}
    }
    let cached = if config.cache_teacher {
        Some(all_logits(teacher, train, config.train.batch_size)?)
    } else {
        None
    };
    let gate = config.effective_gate();
    let run = Loop {
        data: train,
        opts: config.train,
        gate,
        gate_tau: config.tau,
        objective: Objective::Distill {
            terms: config.terms(),
            teacher,
            cached,
            weights: table,
        },
    };
    let (ledger, epochs, optimizer) = run.run(student, observer)?;
    let test_accuracy = test
        .map(|t| evaluate(student, t, config.train.batch_size))
        .transpose()?;
    let echo = serde_json::json!({
        "mode": config.mode,
        "tau": config.tau,
        "lambda": config.lambda,
        "alpha": gate_json(gate),
        "train": config.train,
        "tau_squared": config.tau_squared,
    });
    let report = finish_report(
        "student",
        config.mode.name(),
        train,
        config.train.seed,
        echo,
        &ledger,
        epochs,
        test_accuracy,
    )?;
    Ok(TrainRun {
        ledger,
        report,
        optimizer,
    })
}
