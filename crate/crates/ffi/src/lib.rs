//! C ABI for `regdistill`.
//!
//! Objects cross the boundary as opaque handles (`RdDataset`, `RdModel`,
//! `RdLedger`, `RdTable`, `RdReport`) created by `rd_*` constructors and
//! released with the matching `rd_*_free`. Every fallible call returns an
//! [`RdStatus`]; on failure `rd_last_error` describes what went wrong on the
//! calling thread. Output pointers are written only on success.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use regdistill::checkpoint::Checkpoint;
use regdistill::data::cifar::load_cifar10;
use regdistill::data::idx::load_idx;
use regdistill::data::{class_partition, synthetic_blobs, BlobSpec, Dataset};
use regdistill::distill::{self, DistillConfig, DistillMode, TrainOptions, TrainReport};
use regdistill::engine::loss::softmax_row;
use regdistill::engine::{arch, AdamState, SequentialModel, Tensor};
use regdistill::metrics::{evaluate, EfficiencyRecord};
use regdistill::regulation::{self, GatePolicy, ParticipationLedger};
use regdistill::significance::{compute_significance, SignificanceTable};
use regdistill::{exit, Error};

/// Result of a fallible call. `Config`, `Data` and `Numeric` mirror the
/// command-line exit codes; unreadable or malformed files report `Data`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Data = 4,
    Numeric = 5,
    Io = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RdMode {
    Conventional = 0,
    Significance = 1,
    Regulated = 2,
    Hybrid = 3,
}

impl From<RdMode> for DistillMode {
    fn from(m: RdMode) -> Self {
        match m {
            RdMode::Conventional => DistillMode::Conventional,
            RdMode::Significance => DistillMode::Significance,
            RdMode::Regulated => DistillMode::Regulated,
            RdMode::Hybrid => DistillMode::Hybrid,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RdTrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Seeds the per-epoch shuffles.
    pub seed: u64,
    /// Rows per parallel shard; 0 selects the default.
    pub shard_size: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RdDistillOptions {
    pub mode: RdMode,
    pub tau: f64,
    pub lambda: f64,
    /// Regulation rate for regulated/hybrid; `INFINITY` opens the gate.
    pub alpha: f64,
    pub tau_squared: bool,
    pub train: RdTrainOptions,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RdGateDecision {
    pub included: bool,
    pub predicted: usize,
    pub margin: f64,
    pub threshold: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RdEfficiency {
    pub participations: u64,
    pub available: u64,
    pub zeta: f64,
}

pub struct RdDataset(Dataset);

pub struct RdModel {
    model: SequentialModel,
    seed: u64,
    optimizer: Option<AdamState>,
    epochs: u64,
}

pub struct RdLedger(ParticipationLedger);

pub struct RdTable(SignificanceTable);

pub struct RdReport(TrainReport);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Fail(RdStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match (&e, e.exit_code()) {
            (Error::Io(_), _) => RdStatus::Io,
            (_, exit::CONFIG) => RdStatus::Config,
            (_, exit::NUMERIC) => RdStatus::Numeric,
            _ => RdStatus::Data,
        };
        Fail(status, e.to_string())
    }
}

macro_rules! impl_fail_from {
    ($($t:ty),*) => {$(
        impl From<$t> for Fail {
            fn from(e: $t) -> Self {
                Error::from(e).into()
            }
        }
    )*};
}

impl_fail_from!(
    regdistill::engine::EngineError,
    regdistill::data::DataError,
    regdistill::regulation::RegulationError,
    regdistill::significance::SignificanceError
);

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(RdStatus::InvalidArgument, msg.into())
}

/// Runs `body`, converting errors and panics into a status plus message.
fn guard(body: impl FnOnce() -> Result<(), Fail>) -> RdStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error("");
            RdStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            RdStatus::Panic
        }
    }
}

unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref()
        .ok_or_else(|| Fail(RdStatus::NullPointer, format!("{what} is null")))
}

unsafe fn get_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut()
        .ok_or_else(|| Fail(RdStatus::NullPointer, format!("{what} is null")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail(RdStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Fail(RdStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    let p = get(p, what)?;
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail(RdStatus::NullPointer, "output pointer is null".into()));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

fn policy(alpha: f64) -> Result<GatePolicy, Fail> {
    Ok(GatePolicy::from_alpha(alpha)?)
}

fn train_options(o: &RdTrainOptions) -> TrainOptions {
    let mut t = TrainOptions::new(o.epochs, o.batch_size, o.lr, o.seed);
    if o.shard_size > 0 {
        t.shard_size = o.shard_size;
    }
    t
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next `rd_*` call on the same thread.
#[no_mangle]
pub extern "C" fn rd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Frees a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn rd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ---- datasets ----

#[no_mangle]
pub unsafe extern "C" fn rd_dataset_blobs(
    classes: usize,
    per_class: usize,
    dim: usize,
    separation: f64,
    seed: u64,
    out: *mut *mut RdDataset,
) -> RdStatus {
    guard(|| {
        let ds = synthetic_blobs(&BlobSpec {
            classes,
            per_class,
            dim,
            separation,
            seed,
        })?;
        put(out, RdDataset(ds))
    })
}

/// Builds a dataset from `count` row-major samples of `sample_shape`.
#[no_mangle]
pub unsafe extern "C" fn rd_dataset_from_arrays(
    name: *const c_char,
    classes: usize,
    sample_shape: *const usize,
    rank: usize,
    images: *const f64,
    labels: *const usize,
    count: usize,
    out: *mut *mut RdDataset,
) -> RdStatus {
    guard(|| {
        let name = text(name, "name")?;
        let shape = slice(sample_shape, rank, "sample_shape")?;
        let per: usize = shape.iter().product();
        let images = slice(images, count * per, "images")?;
        let labels = slice(labels, count, "labels")?;
        let mut full = vec![count];
        full.extend_from_slice(shape);
        let tensor = Tensor::new(full, images.to_vec())?;
        put(out, RdDataset(Dataset::new(name, classes, tensor, labels.to_vec())?))
    })
}

/// Loads an IDX image/label pair (optionally gzip-compressed).
#[no_mangle]
pub unsafe extern "C" fn rd_dataset_load_idx(
    images: *const c_char,
    labels: *const c_char,
    name: *const c_char,
    out: *mut *mut RdDataset,
) -> RdStatus {
    guard(|| {
        let ds = load_idx(
            &PathBuf::from(text(images, "images")?),
            &PathBuf::from(text(labels, "labels")?),
            text(name, "name")?,
        )?;
        put(out, RdDataset(ds))
    })
}

/// Loads and concatenates CIFAR-10 binary batch files.
#[no_mangle]
pub unsafe extern "C" fn rd_dataset_load_cifar10(
    paths: *const *const c_char,
    n: usize,
    out: *mut *mut RdDataset,
) -> RdStatus {
    guard(|| {
        let ptrs = slice(paths, n, "paths")?;
        let files = ptrs
            .iter()
            .map(|&p| text(p, "path").map(PathBuf::from))
            .collect::<Result<Vec<_>, _>>()?;
        put(out, RdDataset(load_cifar10(&files, "cifar10")?))
    })
}

#[no_mangle]
pub unsafe extern "C" fn rd_dataset_len(ds: *const RdDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.len())
}

#[no_mangle]
pub unsafe extern "C" fn rd_dataset_classes(ds: *const RdDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.classes())
}

/// Values per sample.
#[no_mangle]
pub unsafe extern "C" fn rd_dataset_sample_len(ds: *const RdDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.images().row_len())
}

#[no_mangle]
pub unsafe extern "C" fn rd_dataset_free(ds: *mut RdDataset) {
    free(ds)
}

// ---- models ----

/// Builds a named architecture (`mlp:64,64`, `linear`, `lenet5`,
/// `lenet5-half`, `alexnet`, `alexnet-half`) for the given input and classes.
#[no_mangle]
pub unsafe extern "C" fn rd_model_new(
    arch_name: *const c_char,
    input_shape: *const usize,
    rank: usize,
    classes: usize,
    seed: u64,
    out: *mut *mut RdModel,
) -> RdStatus {
    guard(|| {
        let a = arch::build(text(arch_name, "arch")?, slice(input_shape, rank, "input_shape")?, classes)?;
        put(
            out,
            RdModel {
                model: SequentialModel::new(a, seed)?,
                seed,
                optimizer: None,
                epochs: 0,
            },
        )
    })
}

#[no_mangle]
pub unsafe extern "C" fn rd_model_load(path: *const c_char, out: *mut *mut RdModel) -> RdStatus {
    guard(|| {
        let ck = Checkpoint::load(&PathBuf::from(text(path, "path")?))?;
        put(
            out,
            RdModel {
                model: ck.model,
                seed: ck.seed,
                optimizer: ck.optimizer,
                epochs: ck.epochs_completed,
            },
        )
    })
}

#[no_mangle]
pub unsafe extern "C" fn rd_model_save(model: *const RdModel, path: *const c_char) -> RdStatus {
    guard(|| {
        let m = get(model, "model")?;
        Checkpoint {
            model: m.model.clone(),
            optimizer: m.optimizer.clone(),
            seed: m.seed,
            epochs_completed: m.epochs,
        }
        .save(&PathBuf::from(text(path, "path")?))?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rd_model_classes(model: *const RdModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.classes())
}

#[no_mangle]
pub unsafe extern "C" fn rd_model_param_count(model: *const RdModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.param_count())
}

/// Logits for `batch` samples laid out row-major in `input`; writes
/// `batch * classes` values to `logits`.
#[no_mangle]
pub unsafe extern "C" fn rd_model_forward(
    model: *const RdModel,
    input: *const f64,
    batch: usize,
    logits: *mut f64,
    logits_len: usize,
) -> RdStatus {
    guard(|| {
        let m = get(model, "model")?;
        let per: usize = m.model.input_shape().iter().product();
        let x = slice(input, batch * per, "input")?;
        let classes = m.model.classes();
        if logits_len != batch * classes {
            return Err(invalid(format!(
                "logits buffer holds {logits_len}, need {}",
                batch * classes
            )));
        }
        let out = slice_mut(logits, logits_len, "logits")?;
        if batch == 0 {
            return Ok(());
        }
        let mut shape = vec![batch];
        shape.extend_from_slice(m.model.input_shape());
        let z = m.model.forward(&Tensor::new(shape, x.to_vec())?)?;
        out.copy_from_slice(z.data());
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rd_model_free(model: *mut RdModel) {
    free(model)
}

// ---- numerics ----

/// Softmax of `logits / tau` into `out` (both of length `n`).
#[no_mangle]
pub unsafe extern "C" fn rd_softmax(logits: *const f64, n: usize, tau: f64, out: *mut f64) -> RdStatus {
    guard(|| {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(invalid(format!("temperature must be positive, got {tau}")));
        }
        let z = slice(logits, n, "logits")?;
        let o = slice_mut(out, n, "out")?;
        o.copy_from_slice(&softmax_row(z, tau));
        Ok(())
    })
}

/// `1 - exp(-alpha * epoch)`.
#[no_mangle]
pub unsafe extern "C" fn rd_threshold(alpha: f64, epoch: usize, out: *mut f64) -> RdStatus {
    guard(|| {
        let v = regulation::threshold(alpha, epoch)?;
        *get_mut(out, "out")? = v;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rd_margin(probs: *const f64, n: usize, out: *mut f64) -> RdStatus {
    guard(|| {
        let v = regulation::margin(slice(probs, n, "probs")?)?;
        *get_mut(out, "out")? = v;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rd_gate(
    probs: *const f64,
    n: usize,
    label: usize,
    eta: f64,
    out: *mut RdGateDecision,
) -> RdStatus {
    guard(|| {
        let p = slice(probs, n, "probs")?;
        if label >= n {
            return Err(invalid(format!("label {label} out of range for {n} classes")));
        }
        let d = regulation::gate(p, label, eta);
        *get_mut(out, "out")? = RdGateDecision {
            included: d.included,
            predicted: d.predicted,
            margin: d.margin,
            threshold: d.threshold,
        };
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rd_efficiency(
    participations: u64,
    epochs: u64,
    samples: u64,
    out: *mut RdEfficiency,
) -> RdStatus {
    guard(|| {
        let e = EfficiencyRecord::new(participations, epochs, samples)?;
        *get_mut(out, "out")? = RdEfficiency {
            participations: e.participations,
            available: e.available,
            zeta: e.zeta,
        };
        Ok(())
    })
}

// ---- training ----

/// Trains `model` in place with gate rate `alpha` (`INFINITY` for
/// conventional training). `test` may be null. Either output may be null.
#[no_mangle]
pub unsafe extern "C" fn rd_train_teacher(
    model: *mut RdModel,
    train: *const RdDataset,
    test: *const RdDataset,
    alpha: f64,
    options: *const RdTrainOptions,
    ledger_out: *mut *mut RdLedger,
    report_out: *mut *mut RdReport,
) -> RdStatus {
    guard(|| {
        let m = get_mut(model, "model")?;
        let train = &get(train, "train")?.0;
        let test = test.as_ref().map(|t| &t.0);
        let opts = train_options(get(options, "options")?);
        let run = distill::train_teacher(&mut m.model, train, test, policy(alpha)?, &opts, None)?;
        m.optimizer = Some(run.optimizer);
        m.epochs += opts.epochs as u64;
        if !ledger_out.is_null() {
            put(ledger_out, RdLedger(run.ledger))?;
        }
        if !report_out.is_null() {
            put(report_out, RdReport(run.report))?;
        }
        Ok(())
    })
}

/// Class-wise min-max normalised participation counts.
#[no_mangle]
pub unsafe extern "C" fn rd_significance(
    ledger: *const RdLedger,
    dataset: *const RdDataset,
    out: *mut *mut RdTable,
) -> RdStatus {
    guard(|| {
        let l = &get(ledger, "ledger")?.0;
        let d = &get(dataset, "dataset")?.0;
        if l.labels() != d.labels() {
            return Err(invalid("ledger labels do not match the dataset"));
        }
        let t = compute_significance(l, &class_partition(d), d.name())?;
        put(out, RdTable(t))
    })
}

/// Distils the frozen `teacher` into `student`. `table` is required for the
/// significance and hybrid modes and must be null otherwise.
#[no_mangle]
pub unsafe extern "C" fn rd_distill(
    teacher: *const RdModel,
    student: *mut RdModel,
    train: *const RdDataset,
    test: *const RdDataset,
    options: *const RdDistillOptions,
    table: *const RdTable,
    ledger_out: *mut *mut RdLedger,
    report_out: *mut *mut RdReport,
) -> RdStatus {
    guard(|| {
        let t = &get(teacher, "teacher")?.model;
        let s = get_mut(student, "student")?;
        let train = &get(train, "train")?.0;
        let test = test.as_ref().map(|d| &d.0);
        let o = get(options, "options")?;
        let mode: DistillMode = o.mode.into();
        let gate = if mode.is_gated() { policy(o.alpha)? } else { GatePolicy::Open };
        let cfg = DistillConfig {
            tau: o.tau,
            lambda: o.lambda,
            tau_squared: o.tau_squared,
            ..DistillConfig::new(mode, gate, train_options(&o.train))
        };
        let table = table.as_ref().map(|t| &t.0);
        let run = distill::distill(t, &mut s.model, train, test, &cfg, table, None)?;
        s.optimizer = Some(run.optimizer);
        s.epochs += o.train.epochs as u64;
        if !ledger_out.is_null() {
            put(ledger_out, RdLedger(run.ledger))?;
        }
        if !report_out.is_null() {
            put(report_out, RdReport(run.report))?;
        }
        Ok(())
    })
}

/// Fraction of samples whose largest logit is the label.
#[no_mangle]
pub unsafe extern "C" fn rd_evaluate(
    model: *const RdModel,
    dataset: *const RdDataset,
    accuracy: *mut f64,
) -> RdStatus {
    guard(|| {
        let m = &get(model, "model")?.model;
        let d = &get(dataset, "dataset")?.0;
        if m.input_shape() != d.image_shape() || m.classes() != d.classes() {
            return Err(Fail(RdStatus::Config, "model does not fit the dataset".into()));
        }
        let acc = evaluate(m, d, 512)?;
        *get_mut(accuracy, "accuracy")? = acc;
        Ok(())
    })
}

// ---- ledgers ----

#[no_mangle]
pub unsafe extern "C" fn rd_ledger_len(ledger: *const RdLedger) -> usize {
    ledger.as_ref().map_or(0, |l| l.0.len())
}

#[no_mangle]
pub unsafe extern "C" fn rd_ledger_epochs(ledger: *const RdLedger) -> usize {
    ledger.as_ref().map_or(0, |l| l.0.epochs())
}

#[no_mangle]
pub unsafe extern "C" fn rd_ledger_total(ledger: *const RdLedger) -> u64 {
    ledger.as_ref().map_or(0, |l| l.0.total())
}

/// Copies the per-sample counts into `out`, which must hold `len` entries.
#[no_mangle]
pub unsafe extern "C" fn rd_ledger_counts(ledger: *const RdLedger, out: *mut u64, len: usize) -> RdStatus {
    guard(|| {
        let l = &get(ledger, "ledger")?.0;
        if len != l.len() {
            return Err(invalid(format!("buffer holds {len}, ledger has {}", l.len())));
        }
        slice_mut(out, len, "out")?.copy_from_slice(l.counts());
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rd_ledger_save(ledger: *const RdLedger, path: *const c_char) -> RdStatus {
    guard(|| {
        get(ledger, "ledger")?.0.save(&PathBuf::from(text(path, "path")?))?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rd_ledger_load(path: *const c_char, out: *mut *mut RdLedger) -> RdStatus {
    guard(|| {
        let l = ParticipationLedger::load(&PathBuf::from(text(path, "path")?))?;
        put(out, RdLedger(l))
    })
}

#[no_mangle]
pub unsafe extern "C" fn rd_ledger_free(ledger: *mut RdLedger) {
    free(ledger)
}

// ---- significance tables ----

#[no_mangle]
pub unsafe extern "C" fn rd_table_len(table: *const RdTable) -> usize {
    table.as_ref().map_or(0, |t| t.0.len())
}

#[no_mangle]
pub unsafe extern "C" fn rd_table_values(table: *const RdTable, out: *mut f64, len: usize) -> RdStatus {
    guard(|| {
        let t = &get(table, "table")?.0;
        if len != t.len() {
            return Err(invalid(format!("buffer holds {len}, table has {}", t.len())));
        }
        slice_mut(out, len, "out")?.copy_from_slice(t.values());
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rd_table_save(table: *const RdTable, path: *const c_char) -> RdStatus {
    guard(|| {
        get(table, "table")?.0.save(&PathBuf::from(text(path, "path")?))?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rd_table_load(path: *const c_char, out: *mut *mut RdTable) -> RdStatus {
    guard(|| {
        let t = SignificanceTable::load(&PathBuf::from(text(path, "path")?))?;
        put(out, RdTable(t))
    })
}

#[no_mangle]
pub unsafe extern "C" fn rd_table_free(table: *mut RdTable) {
    free(table)
}

// ---- reports ----

#[no_mangle]
pub unsafe extern "C" fn rd_report_efficiency(report: *const RdReport, out: *mut RdEfficiency) -> RdStatus {
    guard(|| {
        let r = &get(report, "report")?.0;
        *get_mut(out, "out")? = RdEfficiency {
            participations: r.participations,
            available: r.available,
            zeta: r.zeta,
        };
        Ok(())
    })
}

/// Fails with `Config` when the run had no test set.
#[no_mangle]
pub unsafe extern "C" fn rd_report_test_accuracy(report: *const RdReport, out: *mut f64) -> RdStatus {
    guard(|| {
        let r = &get(report, "report")?.0;
        let acc = r
            .final_test_accuracy
            .ok_or_else(|| Fail(RdStatus::Config, "run had no test set".into()))?;
        *get_mut(out, "out")? = acc;
        Ok(())
    })
}

/// The report as JSON; release with `rd_string_free`.
#[no_mangle]
pub unsafe extern "C" fn rd_report_json(report: *const RdReport) -> *mut c_char {
    match report.as_ref() {
        Some(r) => CString::new(r.0.to_json()).map_or(ptr::null_mut(), CString::into_raw),
        None => ptr::null_mut(),
    }
}

#[no_mangle]
pub unsafe extern "C" fn rd_report_save(report: *const RdReport, path: *const c_char) -> RdStatus {
    guard(|| {
        get(report, "report")?.0.save_json(&PathBuf::from(text(path, "path")?))?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rd_report_free(report: *mut RdReport) {
    free(report)
}
