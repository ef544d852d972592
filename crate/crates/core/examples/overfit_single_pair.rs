//! Fit one image/mask pair from scratch and watch the refined output
//! sharpen, the desk-scale version of the "train on a single pair" sanity
//! check.
//!
//!     cargo run --release --example overfit_single_pair -- [loss] [iterations] [out_dir]
//!
//! `loss` is one of b, s, i, bs, bi, si, bsi (default bsi).

use std::path::PathBuf;
use std::time::Instant;

use basnet::data::synthetic_scene;
use basnet::io::write_mask_png;
use basnet::losses::LossVariant;
use basnet::model::ModelConfig;
use basnet::training::{overfit_single_pair, smoothed, EarlyStop, OverfitConfig};

fn main() -> basnet::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let loss: LossVariant = args
        .first()
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(LossVariant::BSI);
    let iterations = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let out = args.get(2).map(PathBuf::from);

    let (image, mask) = synthetic_scene(128, 128, 7);
    let mut cfg = OverfitConfig::new(
        ModelConfig::default().with_width_divisor(8),
        loss,
        iterations,
        128,
    );
    cfg.adam.lr = 1e-3;
    cfg.early_stop = Some(EarlyStop {
        mae_below: 0.02,
        fw_beta_above: 0.95,
        check_every: 25,
    });

    let start = Instant::now();
    let res = overfit_single_pair(&image, &mask, &cfg)?;
    let secs = start.elapsed().as_secs_f64();

    let smooth = smoothed(&res.losses, 50);
    println!("loss {loss}: {} iterations in {secs:.1}s", res.iterations);
    for i in (0..smooth.len()).step_by(smooth.len().div_ceil(10).max(1)) {
        println!("  iter {:>5}  smoothed loss {:.4}", i + 50, smooth[i]);
    }
    let r = &res.report;
    println!(
        "final: MAE {:.4}  F^w {:.4}  relaxed F^b {:.4}  S {:.4}  E {:.4}",
        r.mae,
        r.fw_beta.unwrap_or(f64::NAN),
        r.fb_beta,
        r.s_alpha,
        r.e_phi
    );

    if let Some(dir) = out {
        std::fs::create_dir_all(&dir)?;
        for s in &res.snapshots {
            write_mask_png(&dir.join(format!("iter-{:05}.png", s.iteration)), &s.map)?;
        }
        println!("snapshots written to {}", dir.display());
    }
    Ok(())
}
