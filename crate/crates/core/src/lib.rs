pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod error;
pub mod imageops;
pub mod inference;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod prednet;
pub mod rrm;
pub mod training;
pub mod types;
pub mod unet;

pub use error::{Error, Result};
