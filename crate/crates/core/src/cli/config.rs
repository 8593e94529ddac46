//! Flat run configuration: a JSON file whose keys double as command-line
//! flags. Flags win over the file; unset keys take the documented defaults.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::cifar::load_cifar10;
use crate::data::idx::load_idx;
use crate::data::{synthetic_blobs, BlobSpec, Dataset};
use crate::distill::{DistillMode, TrainOptions, DEFAULT_SHARD_SIZE};
use crate::engine::AdamConfig;
use crate::error::{Error, Result};
use crate::regulation::GatePolicy;

/// Environment variable naming the directory that holds MNIST/CIFAR files.
pub const DATA_DIR_ENV: &str = "REGDISTILL_DATA_DIR";

/// A regulation rate: a positive number, or `inf` for the always-open gate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alpha(pub GatePolicy);

impl FromStr for Alpha {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinity") {
            return Ok(Alpha(GatePolicy::Open));
        }
        let v: f64 = s.parse().map_err(|_| format!("alpha must be a number or \"inf\", got {s:?}"))?;
        GatePolicy::from_alpha(v).map(Alpha).map_err(|e| e.to_string())
    }
}

impl Serialize for Alpha {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0 {
            GatePolicy::Open => s.serialize_str("inf"),
            GatePolicy::Adaptive(a) => s.serialize_f64(a),
        }
    }
}

impl<'de> Deserialize<'de> for Alpha {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        let text = match Raw::deserialize(d)? {
            Raw::Num(v) => v.to_string(),
            Raw::Text(t) => t,
        };
        text.parse().map_err(serde::de::Error::custom)
    }
}

macro_rules! run_config {
    ($( $(#[$doc:meta])* $field:ident : $ty:ty ),* $(,)?) => {
        /// Every key is optional; see [`Resolved`] for defaults.
        #[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
        #[serde(deny_unknown_fields)]
        pub struct RunConfig {
            $( $(#[$doc])* #[arg(long)] #[serde(default, skip_serializing_if = "Option::is_none")] pub $field: Option<$ty>, )*
        }

        impl RunConfig {
            /// Fields set in `over` replace those in `self`.
            pub fn merge(mut self, over: RunConfig) -> RunConfig {
                $( if over.$field.is_some() { self.$field = over.$field; } )*
                self
            }
        }
    };
}

run_config! {
    /// `blobs`, `mnist`, `cifar10` or `file`.
    dataset: String,
    /// Directory with the MNIST or CIFAR-10 files; falls back to REGDISTILL_DATA_DIR.
    data_dir: PathBuf,
    /// Training set container (dataset `file`).
    train_file: PathBuf,
    /// Test set container (dataset `file`).
    test_file: PathBuf,
    blob_classes: usize,
    blob_per_class: usize,
    blob_test_per_class: usize,
    blob_dim: usize,
    blob_separation: f64,
    /// Seed of the training blobs; the test blobs use this plus one.
    blob_seed: u64,
    teacher_arch: String,
    student_arch: String,
    /// Regulation rate of the teacher; defaults to `alpha`.
    teacher_alpha: Alpha,
    /// Regulation rate of regulated and hybrid students.
    alpha: Alpha,
    /// `conventional`, `significance`, `regulated` or `hybrid`.
    mode: String,
    tau: f64,
    lambda: f64,
    tau_squared: bool,
    epochs: usize,
    /// Defaults to `epochs`.
    teacher_epochs: usize,
    batch_size: usize,
    lr: f64,
    /// Defaults to `lr`.
    teacher_lr: f64,
    seed: u64,
    shard_size: usize,
    cache_teacher: bool,
    out_dir: PathBuf,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlobSettings {
    pub classes: usize,
    pub per_class: usize,
    pub test_per_class: usize,
    pub dim: usize,
    pub separation: f64,
    pub seed: u64,
}

/// A configuration with every default filled in. This is what gets echoed
/// into run directories and reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolved {
    pub dataset: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_file: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_file: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blobs: Option<BlobSettings>,
    pub teacher_arch: String,
    pub student_arch: String,
    pub teacher_alpha: Option<Alpha>,
    pub alpha: Option<Alpha>,
    pub mode: Option<DistillMode>,
    pub tau: f64,
    pub lambda: f64,
    pub tau_squared: bool,
    pub epochs: usize,
    pub teacher_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub teacher_lr: f64,
    pub seed: u64,
    pub shard_size: usize,
    pub cache_teacher: bool,
    pub out_dir: PathBuf,
}

pub const DEFAULT_BATCH_SIZE: usize = 512;
pub const DEFAULT_TAU: f64 = 20.0;
pub const DEFAULT_LAMBDA: f64 = 0.3;
pub const DEFAULT_LR: f64 = 1e-3;
pub const DEFAULT_EPOCHS: usize = 200;

impl Resolved {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        let dataset = cfg
            .dataset
            .ok_or_else(|| Error::Config("dataset is required".into()))?;
        let blobs = (dataset == "blobs").then(|| BlobSettings {
            classes: cfg.blob_classes.unwrap_or(3),
            per_class: cfg.blob_per_class.unwrap_or(200),
            test_per_class: cfg.blob_test_per_class.unwrap_or(100),
            dim: cfg.blob_dim.unwrap_or_else(|| cfg.blob_classes.unwrap_or(3)),
            separation: cfg.blob_separation.unwrap_or(6.0),
            seed: cfg.blob_seed.unwrap_or_else(|| cfg.seed.unwrap_or(0)),
        });
        let mode = cfg.mode.as_deref().map(str::parse).transpose()?;
        let (default_teacher, default_student) = match dataset.as_str() {
            "mnist" => ("lenet5", "lenet5-half"),
            "cifar10" => ("alexnet", "alexnet-half"),
            _ => ("mlp:64,64", "mlp:16"),
        };
        let epochs = cfg.epochs.unwrap_or(DEFAULT_EPOCHS);
        let lr = cfg.lr.unwrap_or(DEFAULT_LR);
        let r = Resolved {
            dataset,
            data_dir: cfg.data_dir,
            train_file: cfg.train_file,
            test_file: cfg.test_file,
            blobs,
            teacher_arch: cfg.teacher_arch.unwrap_or_else(|| default_teacher.into()),
            student_arch: cfg.student_arch.unwrap_or_else(|| default_student.into()),
            teacher_alpha: cfg.teacher_alpha.or(cfg.alpha),
            alpha: cfg.alpha,
            mode,
            tau: cfg.tau.unwrap_or(DEFAULT_TAU),
            lambda: cfg.lambda.unwrap_or(DEFAULT_LAMBDA),
            tau_squared: cfg.tau_squared.unwrap_or(false),
            epochs,
            teacher_epochs: cfg.teacher_epochs.unwrap_or(epochs),
            batch_size: cfg.batch_size.unwrap_or(DEFAULT_BATCH_SIZE),
            lr,
            teacher_lr: cfg.teacher_lr.unwrap_or(lr),
            seed: cfg.seed.unwrap_or(0),
            shard_size: cfg.shard_size.unwrap_or(DEFAULT_SHARD_SIZE),
            cache_teacher: cfg.cache_teacher.unwrap_or(false),
            out_dir: cfg.out_dir.unwrap_or_else(|| PathBuf::from(".")),
        };
        if !["blobs", "mnist", "cifar10", "file"].contains(&r.dataset.as_str()) {
            return Err(Error::Config(format!("unknown dataset {:?}", r.dataset)));
        }
        if r.epochs == 0 || r.teacher_epochs == 0 || r.batch_size == 0 || r.shard_size == 0 {
            return Err(Error::Config(
                "epochs, batch_size and shard_size must be positive".into(),
            ));
        }
        Ok(r)
    }

    pub fn teacher_gate(&self) -> Result<GatePolicy> {
        self.teacher_alpha.map(|a| a.0).ok_or_else(|| {
            Error::Config("teacher training needs alpha (a number, or \"inf\" for conventional)".into())
        })
    }

    pub fn mode(&self) -> Result<DistillMode> {
        self.mode
            .ok_or_else(|| Error::Config("distillation needs mode".into()))
    }

    /// Gate for the student; regulated and hybrid modes must set alpha.
    pub fn student_gate(&self) -> Result<GatePolicy> {
        let mode = self.mode()?;
        if !mode.is_gated() {
            return Ok(GatePolicy::Open);
        }
        self.alpha.map(|a| a.0).ok_or_else(|| {
            Error::Config(format!("mode {} needs alpha", mode.name()))
        })
    }

    pub fn teacher_options(&self) -> TrainOptions {
        TrainOptions {
            epochs: self.teacher_epochs,
            batch_size: self.batch_size,
            adam: AdamConfig::with_lr(self.teacher_lr),
            seed: self.seed,
            shard_size: self.shard_size,
        }
    }

    pub fn student_options(&self) -> TrainOptions {
        TrainOptions {
            epochs: self.epochs,
            batch_size: self.batch_size,
            adam: AdamConfig::with_lr(self.lr),
            seed: self.seed,
            shard_size: self.shard_size,
        }
    }

    /// The configuration as stored in reports: location-only keys are
    /// dropped so that identical runs in different places report identically.
    pub fn report_echo(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serialises");
        if let Some(map) = v.as_object_mut() {
            for key in ["data_dir", "train_file", "test_file", "out_dir"] {
                map.remove(key);
            }
        }
        v
    }

    fn data_dir(&self) -> Result<PathBuf> {
        self.data_dir
            .clone()
            .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
            .ok_or_else(|| {
                Error::Config(format!(
                    "dataset {} needs data_dir or {DATA_DIR_ENV}",
                    self.dataset
                ))
            })
    }

    /// Training split and, when one exists, the test split.
    pub fn load_data(&self) -> Result<(Dataset, Option<Dataset>)> {
        match self.dataset.as_str() {
            "blobs" => {
                let b = self.blobs.as_ref().expect("blob settings resolved");
                let spec = |per_class, seed| BlobSpec {
                    classes: b.classes,
                    per_class,
                    dim: b.dim,
                    separation: b.separation,
                    seed,
                };
                let train = synthetic_blobs(&spec(b.per_class, b.seed))?;
                let test = (b.test_per_class > 0)
                    .then(|| synthetic_blobs(&spec(b.test_per_class, b.seed.wrapping_add(1))))
                    .transpose()?;
                Ok((train, test))
            }
            "mnist" => {
                let dir = self.data_dir()?;
                let train = load_idx(
                    &find(&dir, "train-images-idx3-ubyte")?,
                    &find(&dir, "train-labels-idx1-ubyte")?,
                    "mnist",
                )?;
                let test = load_idx(
                    &find(&dir, "t10k-images-idx3-ubyte")?,
                    &find(&dir, "t10k-labels-idx1-ubyte")?,
                    "mnist",
                )?;
                Ok((train, Some(test)))
            }
            "cifar10" => {
                let mut dir = self.data_dir()?;
                if dir.join("cifar-10-batches-bin").is_dir() {
                    dir = dir.join("cifar-10-batches-bin");
                }
                let batches: Vec<PathBuf> = (1..=5)
                    .map(|i| dir.join(format!("data_batch_{i}.bin")))
                    .collect();
                let train = load_cifar10(&batches, "cifar10")?;
                let test = load_cifar10(&[dir.join("test_batch.bin")], "cifar10")?;
                Ok((train, Some(test)))
            }
            "file" => {
                let read = |p: &Path| -> Result<Dataset> {
                    let bytes = std::fs::read(p).map_err(|e| Error::file(p, e))?;
                    crate::checkpoint::dataset_from_bytes(&bytes).map_err(|e| Error::file(p, e))
                };
                let train_path = self
                    .train_file
                    .as_deref()
                    .ok_or_else(|| Error::Config("dataset file needs train_file".into()))?;
                let test = self.test_file.as_deref().map(read).transpose()?;
                Ok((read(train_path)?, test))
            }
            other => Err(Error::Config(format!("unknown dataset {other:?}"))),
        }
    }
}

/// `name` or `name.gz` inside `dir`.
fn find(dir: &Path, name: &str) -> Result<PathBuf> {
    let plain = dir.join(name);
    if plain.is_file() {
        return Ok(plain);
    }
    let gz = dir.join(format!("{name}.gz"));
    if gz.is_file() {
        return Ok(gz);
    }
    Err(Error::file(&plain, "not found (also tried .gz)"))
}
