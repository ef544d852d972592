use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::postprocess::PostprocessParams;

/// Service settings, loadable from JSON. Every field has a default.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    /// Checkpoint directory (model.bin + manifest.txt).
    pub model_path: PathBuf,
    /// Largest accepted image payload, inline or fetched.
    pub max_bytes: usize,
    pub pool_size: usize,
    /// Requests allowed to wait for a replica before 503s start.
    pub queue_capacity: usize,
    pub storage_root: PathBuf,
    /// Prefix for stored-result URLs; defaults to `http://host:port`.
    pub public_base_url: Option<String>,
    pub input_size: usize,
    pub fetch_timeout_ms: u64,
    pub retry_after_s: u64,
    pub unsharp_sigma: f64,
    pub unsharp_amount: f64,
    pub mask_threshold: f64,
    pub morphology_radius: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        let p = PostprocessParams::default();
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            model_path: PathBuf::from("model"),
            max_bytes: 10 * 1024 * 1024,
            pool_size: 1,
            queue_capacity: 16,
            storage_root: PathBuf::from("storage"),
            public_base_url: None,
            input_size: basnet::inference::DEFAULT_INPUT_SIZE,
            fetch_timeout_ms: 10_000,
            retry_after_s: 1,
            unsharp_sigma: p.unsharp_sigma,
            unsharp_amount: p.unsharp_amount,
            mask_threshold: p.threshold,
            morphology_radius: p.radius,
        }
    }
}

impl ServiceConfig {
    pub fn from_json(text: &str) -> basnet::Result<Self> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| basnet::Error::Config(e.to_string()))?;
        cfg.postprocess().validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> basnet::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|_| basnet::Error::MissingPath(path.to_path_buf()))?;
        Self::from_json(&text)
    }

    pub fn postprocess(&self) -> PostprocessParams {
        PostprocessParams {
            unsharp_sigma: self.unsharp_sigma,
            unsharp_amount: self.unsharp_amount,
            threshold: self.mask_threshold,
            radius: self.morphology_radius,
        }
    }
}
