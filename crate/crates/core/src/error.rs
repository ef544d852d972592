use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("corrupt data: {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("input height {height} and width {width} must both be divisible by 32; resize or pad the input")]
    IndivisibleInput { height: usize, width: usize },

    #[error("pretrained parameters do not match the configured layout: {}", .0.join(", "))]
    PretrainedMismatch(Vec<String>),

    #[error("checkpoint manifest does not match the built architecture:\n{}", .0.join("\n"))]
    ManifestMismatch(Vec<String>),

    #[error("unpaired files: {}", .0.join(", "))]
    Unpaired(Vec<String>),

    #[error("path not found: {}", .0.display())]
    MissingPath(PathBuf),

    #[error("unknown ablation row {name:?}; valid rows: {}", .valid.join(" | "))]
    UnknownRow { name: String, valid: Vec<String> },

    #[error("non-finite loss at step {step}; batch: {}", .identifiers.join(", "))]
    NonFiniteLoss { step: u64, identifiers: Vec<String> },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("malformed file {path}: {reason}")]
    Format { path: String, reason: String },

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
