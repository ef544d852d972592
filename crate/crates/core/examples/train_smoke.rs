//! A complete, tiny training run: writes a synthetic corpus to disk, trains
//! a narrow network for a few dozen steps with checkpoints, then resumes.
//!
//!     cargo run --example train_smoke -- [run_dir]

use std::path::PathBuf;

use basnet::data::{synthetic_scene, TrainTransform};
use basnet::io::{write_image_png, write_mask_png};
use basnet::model::ModelConfig;
use basnet::training::{train, TrainConfig};

fn main() -> basnet::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let root = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("basnet-smoke"));
    let (images, masks) = (root.join("data/images"), root.join("data/masks"));
    std::fs::create_dir_all(&images)?;
    std::fs::create_dir_all(&masks)?;
    for i in 0..6 {
        let (image, mask) = synthetic_scene(80, 96, i);
        write_image_png(&images.join(format!("scene{i:02}.png")), &image)?;
        write_mask_png(&masks.join(format!("scene{i:02}.png")), &mask)?;
    }

    let text = format!(
        "# desk-scale run on synthetic scenes\n\
         arch = basnet\nloss = bsi\nwidth_divisor = 16\n\
         lr = 0.002\nbatch_size = 2\nmax_iterations = 20\ncheckpoint_every = 10\n\
         resize = 72\ncrop = 64\n\
         image_dir = {}\nmask_dir = {}\nout_dir = {}\n",
        images.display(),
        masks.display(),
        root.join("run").display()
    );
    let mut cfg = TrainConfig::parse(&text, &root)?;
    println!("{}", cfg.describe());
    for r in train(&cfg, false)? {
        println!("{r}");
    }

    // Extend the same run: picks up step 20 and continues to 30.
    cfg.max_iterations = 30;
    let more = train(&cfg, true)?;
    println!(
        "resumed for {} more steps, last total {:.4}",
        more.len(),
        more.last().map_or(f64::NAN, |r| r.total)
    );
    assert_eq!(
        cfg.transform,
        TrainTransform {
            resize: 72,
            crop: 64
        }
    );
    assert_eq!(cfg.model, ModelConfig::default().with_width_divisor(16));
    println!("run directory: {}", cfg.out_dir.display());
    Ok(())
}
