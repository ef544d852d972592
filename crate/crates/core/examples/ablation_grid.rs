//! The ablation grid at desk scale: every row's configuration, and
//! optionally a short training run per row scored on held-out scenes.
//!
//!     cargo run --release --example ablation_grid            # list rows
//!     cargo run --release --example ablation_grid -- 60      # train 60 steps per row

use basnet::data::{synthetic_scene, Dataset, TrainTransform};
use basnet::inference::evaluate_model;
use basnet::metrics::MetricConfig;
use basnet::model::BasNet;
use basnet::nn::parameter_count;
use basnet::training::{build_ablation_config, Trainer, ABLATION_ROWS};
use basnet::types::Sample;

fn main() -> basnet::Result<()> {
    let steps: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    let train: Vec<Sample> = (0..8)
        .map(|i| {
            let (im, m) = synthetic_scene(64, 64, i);
            Sample::new(im, m, format!("train{i}")).unwrap()
        })
        .collect();
    let test: Vec<_> = (100..104).map(|i| synthetic_scene(64, 64, i)).collect();
    let out = std::env::temp_dir().join("basnet-ablation");

    println!(
        "{:<24} {:>7} {:>9} {:>8} {:>8}",
        "row", "outputs", "params", "MAE", "F^w"
    );
    for row in ABLATION_ROWS {
        let mut cfg = build_ablation_config(row)?;
        cfg.model = cfg.model.with_width_divisor(16);
        let params = parameter_count(&mut BasNet::new(&cfg.model, 0)?);
        if steps == 0 {
            println!("{row:<24} {:>7} {params:>9}", cfg.model.output_count());
            continue;
        }
        cfg.max_iterations = steps;
        cfg.batch_size = 4;
        cfg.adam.lr = 2e-3;
        cfg.checkpoint_every = 0;
        cfg.transform = TrainTransform {
            resize: 64,
            crop: 64,
        };
        cfg.out_dir = out.join(row.replace([' ', '+'], "_"));
        let mut trainer = Trainer::new(cfg.clone(), Dataset::from_samples(train.clone(), true))?;
        trainer.run(|_| {})?;
        let mut model = trainer.into_model();
        let eval = evaluate_model(
            &mut model,
            &test,
            None,
            64,
            &cfg.normalization,
            &MetricConfig::default(),
        )?;
        println!(
            "{row:<24} {:>7} {params:>9} {:>8.4} {:>8.4}",
            cfg.model.output_count(),
            eval.overall.mae,
            eval.overall.fw_beta.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
