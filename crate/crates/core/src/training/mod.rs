//! Training loop, ablation grid and the single-pair fitting experiment.

mod ablation;
mod config;
mod overfit;
mod trainer;

pub use ablation::{build_ablation_config, ABLATION_ROWS};
pub use config::{TrainConfig, FULL_SCALE_ITERATIONS};
pub use overfit::{
    overfit_single_pair, smoothed, EarlyStop, OverfitConfig, OverfitResult, Snapshot,
};
pub use trainer::{
    batch_objective, checkpoint_dir, latest_checkpoint, StepRecord, Trainer, CHECKPOINT_DIR,
    LOG_FILE, OPTIMIZER_FILE,
};

use crate::data::{scan_pairs, Dataset};
use crate::error::{Error, Result};

/// Scans the configured corpus and trains, resuming from the newest
/// checkpoint under `out_dir` when `resume` is set.
pub fn train(config: &TrainConfig, resume: bool) -> Result<Vec<StepRecord>> {
    let spec = config
        .dataset
        .as_ref()
        .ok_or_else(|| Error::Config("image_dir and mask_dir are required".into()))?;
    let dataset = Dataset::from_pairs(scan_pairs(spec)?, config.hflip);
    let mut trainer = match latest_checkpoint(&config.out_dir)? {
        Some(dir) if resume => Trainer::resume(config.clone(), dataset, &dir)?,
        _ => Trainer::new(config.clone(), dataset)?,
    };
    std::fs::create_dir_all(&config.out_dir)?;
    std::fs::write(config.out_dir.join("run.txt"), config.describe() + "\n")?;
    trainer.run(|r| {
        if r.step % 10 == 0 {
            log::info!("{r}");
        }
    })
}
