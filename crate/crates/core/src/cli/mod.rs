//! The `regdistill` command line: train-teacher, significance, distill,
//! evaluate and report.

pub mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::checkpoint::Checkpoint;
use crate::data::{class_partition, Dataset};
use crate::distill::{distill, train_teacher, DistillConfig, TrainReport};
use crate::engine::{arch, SequentialModel};
use crate::error::{Error, Result};
use crate::metrics::{aggregate, comparison_csv, evaluate, load_report};
use crate::regulation::ParticipationLedger;
use crate::significance::{
    compute_significance, histogram, write_histogram_csv, SignificanceTable, DEFAULT_BINS,
};

pub use config::{Alpha, Resolved, RunConfig, DATA_DIR_ENV};

#[derive(Debug, Parser)]
#[command(name = "regdistill", version, about = "Self-regulated teacher training and significance-weighted distillation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Stage {
    /// JSON run configuration; flags override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: RunConfig,
    /// Replace existing output files.
    #[arg(long)]
    pub overwrite: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the teacher with the self-regulation gate.
    TrainTeacher(Stage),
    /// Turn a participation ledger into sample significances.
    Significance {
        #[command(flatten)]
        stage: Stage,
        /// Defaults to `<out_dir>/teacher_ledger.csv`.
        #[arg(long)]
        ledger: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
    },
    /// Distil the teacher into a student.
    Distill {
        #[command(flatten)]
        stage: Stage,
        /// Defaults to `<out_dir>/teacher.ckpt`.
        #[arg(long)]
        teacher: Option<PathBuf>,
        /// Defaults to `<out_dir>/significance.csv` for modes that need one.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Accuracy of a checkpoint on one split.
    Evaluate {
        #[command(flatten)]
        stage: Stage,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value_t = Split::Test)]
        split: Split,
    },
    /// Aggregate reports from run directories into one CSV table.
    Report {
        /// Run directories (every `*_report.json` inside) or report files.
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// Write here instead of standard output.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        overwrite: bool,
    },
}

impl Stage {
    fn resolve(&self) -> Result<Resolved> {
        let base = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        Resolved::new(base.merge(self.overrides.clone()))
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::TrainTeacher(stage) => cmd_train_teacher(&stage, out),
        Command::Significance {
            stage,
            ledger,
            bins,
        } => cmd_significance(&stage, ledger, bins, out),
        Command::Distill {
            stage,
            teacher,
            table,
        } => cmd_distill(&stage, teacher, table, out),
        Command::Evaluate {
            stage,
            checkpoint,
            split,
        } => cmd_evaluate(&stage, &checkpoint, split, out),
        Command::Report {
            paths,
            output,
            overwrite,
        } => cmd_report(&paths, output.as_deref(), overwrite, out),
    }
}

/// Refuses to touch existing outputs unless `overwrite` is set.
fn prepare(dir: &Path, files: &[&str], overwrite: bool) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    let paths: Vec<PathBuf> = files.iter().map(|f| dir.join(f)).collect();
    if !overwrite {
        if let Some(p) = paths.iter().find(|p| p.exists()) {
            return Err(Error::Config(format!(
                "{} exists; pass --overwrite to replace it",
                p.display()
            )));
        }
    }
    Ok(paths)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("serialisable");
    s.push('\n');
    fs::write(path, s).map_err(|e| Error::file(path, e))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::file(path, e))
}

fn build_model(name: &str, data: &Dataset, seed: u64) -> Result<SequentialModel> {
    let a = arch::build(name, data.image_shape(), data.classes())?;
    Ok(SequentialModel::new(a, seed)?)
}

fn accuracy_text(acc: Option<f64>) -> String {
    acc.map_or_else(|| "NA".into(), |a| format!("{a:.4}"))
}

fn cmd_train_teacher(stage: &Stage, out: &mut dyn Write) -> Result<()> {
    let cfg = stage.resolve()?;
    let gate = cfg.teacher_gate()?;
    let (train, test) = cfg.load_data()?;
    let mut model = build_model(&cfg.teacher_arch, &train, cfg.seed)?;
    let paths = prepare(
        &cfg.out_dir,
        &[
            "teacher.ckpt",
            "teacher_ledger.csv",
            "teacher_report.json",
            "teacher_config.json",
        ],
        stage.overwrite,
    )?;
    let opts = cfg.teacher_options();
    let mut run = train_teacher(&mut model, &train, test.as_ref(), gate, &opts, None)?;
    run.report.config = cfg.report_echo();
    Checkpoint {
        model,
        optimizer: Some(run.optimizer),
        seed: cfg.seed,
        epochs_completed: opts.epochs as u64,
    }
    .save(&paths[0])?;
    run.ledger.save(&paths[1])?;
    run.report.save_json(&paths[2])?;
    write_json(&paths[3], &cfg)?;
    writeln!(
        out,
        "teacher {}: test accuracy {}, participations {}/{} ({})",
        run.report.mode,
        accuracy_text(run.report.final_test_accuracy),
        run.report.participations,
        run.report.available,
        run.report.zeta_percent
    )?;
    Ok(())
}

fn cmd_significance(
    stage: &Stage,
    ledger: Option<PathBuf>,
    bins: usize,
    out: &mut dyn Write,
) -> Result<()> {
    let cfg = stage.resolve()?;
    if bins == 0 {
        return Err(Error::Config("bins must be at least 1".into()));
    }
    let (train, _) = cfg.load_data()?;
    let ledger_path = ledger.unwrap_or_else(|| cfg.out_dir.join("teacher_ledger.csv"));
    let ledger = ParticipationLedger::load(&ledger_path).map_err(|e| Error::file(&ledger_path, e))?;
    if ledger.len() == train.len() && ledger.labels() != train.labels() {
        return Err(Error::file(&ledger_path, "labels do not match the dataset"));
    }
    let partition = class_partition(&train);
    let table = compute_significance(&ledger, &partition, train.name())?;
    let hists = histogram(&table, &partition, bins)?;
    let paths = prepare(
        &cfg.out_dir,
        &["significance.csv", "histogram.csv"],
        stage.overwrite,
    )?;
    table.save(&paths[0])?;
    let mut buf = Vec::new();
    write_histogram_csv(&hists, &mut buf)?;
    write_file(&paths[1], buf)?;
    let degenerate = &table.meta.degenerate_classes;
    writeln!(
        out,
        "significance for {} samples in {} classes ({} degenerate)",
        table.len(),
        partition.classes(),
        degenerate.len()
    )?;
    Ok(())
}

fn cmd_distill(
    stage: &Stage,
    teacher: Option<PathBuf>,
    table: Option<PathBuf>,
    out: &mut dyn Write,
) -> Result<()> {
    let cfg = stage.resolve()?;
    let mode = cfg.mode()?;
    let gate = cfg.student_gate()?;
    let (train, test) = cfg.load_data()?;
    let teacher_path = teacher.unwrap_or_else(|| cfg.out_dir.join("teacher.ckpt"));
    let teacher = Checkpoint::load(&teacher_path)?.model;
    let table_path = match (mode.needs_table(), table) {
        (_, Some(p)) => Some(p),
        (true, None) => Some(cfg.out_dir.join("significance.csv")),
        (false, None) => None,
    };
    let table = table_path
        .as_deref()
        .map(|p| -> Result<SignificanceTable> {
            let t = SignificanceTable::load(p).map_err(|e| Error::file(p, e))?;
            if t.labels() != train.labels() {
                return Err(Error::file(p, "labels do not match the dataset"));
            }
            Ok(t)
        })
        .transpose()?;
    let stem = format!("student_{}", mode.name());
    let names: Vec<String> = ["ckpt", "ledger.csv", "report.json", "summary.csv", "config.json"]
        .iter()
        .enumerate()
        .map(|(i, ext)| if i == 0 { format!("{stem}.{ext}") } else { format!("{stem}_{ext}") })
        .collect();
    let names: Vec<&str> = names.iter().map(String::as_str).collect();
    let paths = prepare(&cfg.out_dir, &names, stage.overwrite)?;
    let student_seed = cfg.seed.wrapping_add(1);
    let mut student = build_model(&cfg.student_arch, &train, student_seed)?;
    let dc = DistillConfig {
        tau: cfg.tau,
        lambda: cfg.lambda,
        tau_squared: cfg.tau_squared,
        cache_teacher: cfg.cache_teacher,
        ..DistillConfig::new(mode, gate, cfg.student_options())
    };
    let mut run = distill(&teacher, &mut student, &train, test.as_ref(), &dc, table.as_ref(), None)?;
    run.report.config = cfg.report_echo();
    Checkpoint {
        model: student,
        optimizer: Some(run.optimizer),
        seed: student_seed,
        epochs_completed: cfg.epochs as u64,
    }
    .save(&paths[0])?;
    run.ledger.save(&paths[1])?;
    run.report.save_json(&paths[2])?;
    write_file(&paths[3], run.report.summary_csv())?;
    write_json(&paths[4], &cfg)?;
    writeln!(
        out,
        "student {}: test accuracy {}, participations {}/{} ({})",
        mode.name(),
        accuracy_text(run.report.final_test_accuracy),
        run.report.participations,
        run.report.available,
        run.report.zeta_percent
    )?;
    Ok(())
}

fn cmd_evaluate(stage: &Stage, checkpoint: &Path, split: Split, out: &mut dyn Write) -> Result<()> {
    let cfg = stage.resolve()?;
    let (train, test) = cfg.load_data()?;
    let data = match split {
        Split::Train => train,
        Split::Test => test.ok_or_else(|| Error::Config("dataset has no test split".into()))?,
    };
    let model = Checkpoint::load(checkpoint)?.model;
    if model.classes() != data.classes() || model.input_shape() != data.image_shape() {
        return Err(Error::Config(format!(
            "{} does not fit dataset {}",
            checkpoint.display(),
            data.name()
        )));
    }
    let acc = evaluate(&model, &data, cfg.batch_size)?;
    writeln!(out, "{acc:.6}")?;
    Ok(())
}

fn collect_reports(paths: &[PathBuf]) -> Result<Vec<(String, TrainReport)>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| Error::file(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| {
                    f.file_name()
                        .and_then(|n| n.to_str())
                        .is_some_and(|n| n.ends_with("_report.json"))
                })
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    files
        .into_iter()
        .map(|f| Ok((f.display().to_string(), load_report(&f)?)))
        .collect()
}

fn cmd_report(
    paths: &[PathBuf],
    output: Option<&Path>,
    overwrite: bool,
    out: &mut dyn Write,
) -> Result<()> {
    let reports = collect_reports(paths)?;
    if reports.is_empty() {
        return Err(Error::Config("no reports found".into()));
    }
    let csv = comparison_csv(&aggregate(&reports)?);
    match output {
        Some(p) => {
            if p.exists() && !overwrite {
                return Err(Error::Config(format!(
                    "{} exists; pass --overwrite to replace it",
                    p.display()
                )));
            }
            write_file(p, csv)
        }
        None => Ok(out.write_all(csv.as_bytes())?),
    }
}
