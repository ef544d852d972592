//! Background-removal HTTP service: validate, ingest, infer, post-process,
//! then return the result inline or as a stored URL.

pub mod app;
pub mod config;
pub mod pool;
pub mod postprocess;
pub mod storage;

pub use app::{router, AppState, Server};
pub use config::ServiceConfig;
pub use postprocess::{postprocess_mask, PostprocessParams};
