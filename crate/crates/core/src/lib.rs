//! Self-regulated training and data-efficient knowledge distillation.
//!
//! A teacher trained with a per-sample inclusion gate records how often
//! each sample took part in an update. Those participation counts, normalised
//! per class, become sample significances that can weight a student's
//! distillation loss; the student can also gate itself. The crate carries
//! its own small deterministic CPU engine so every run is bit-reproducible.

pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod distill;
pub mod engine;
mod error;
pub mod metrics;
pub mod regulation;
pub mod significance;

pub use error::{exit, Error, Result};
