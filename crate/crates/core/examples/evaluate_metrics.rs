//! Scores a handful of predictions of one ground truth with all five
//! measures, then aggregates them with attribute groups.
//!
//!     cargo run --example evaluate_metrics

use basnet::data::synthetic_scene;
use basnet::metrics::{evaluate_dataset, evaluate_pair, render_report, MetricConfig};
use basnet::types::{BinaryMask, Mask};

fn main() -> basnet::Result<()> {
    let (_, mask) = synthetic_scene(64, 64, 4);
    let g = BinaryMask::threshold(&mask, 0.5);
    let blur = |m: &Mask, k: i64| {
        Mask::from_fn(64, 64, |r, c| {
            let mut acc = 0.0;
            for dr in -k..=k {
                for dc in -k..=k {
                    let (rr, cc) = ((r as i64 + dr).clamp(0, 63), (c as i64 + dc).clamp(0, 63));
                    acc += m.get(rr as usize, cc as usize);
                }
            }
            acc / ((2 * k + 1) * (2 * k + 1)) as f64
        })
    };
    let soft = blur(&mask, 3);
    let eroded = Mask::from_fn(64, 64, |r, c| if soft.get(r, c) > 0.9 { 1.0 } else { 0.0 });
    let preds = vec![
        ("exact", mask.clone(), vec!["clean"]),
        ("blurred edges", blur(&mask, 2), vec!["soft"]),
        ("heavily blurred", blur(&mask, 5), vec!["soft"]),
        ("eroded", eroded, vec!["clean", "thin"]),
        ("inverted", mask.complement(), vec!["failure"]),
    ];

    let cfg = MetricConfig::default();
    println!(
        "{:<20} {:>7} {:>7} {:>7} {:>7} {:>7}",
        "prediction", "F^w", "F^b", "MAE", "S", "E"
    );
    for (name, s, _) in &preds {
        let r = evaluate_pair(s, &g, &cfg)?;
        println!(
            "{name:<20} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>7.4}",
            r.fw_beta.unwrap_or(f64::NAN),
            r.fb_beta,
            r.mae,
            r.s_alpha,
            r.e_phi
        );
    }

    let pairs: Vec<(Mask, BinaryMask)> = preds
        .iter()
        .map(|(_, s, _)| (s.clone(), g.clone()))
        .collect();
    let attrs: Vec<Vec<String>> = preds
        .iter()
        .map(|(_, _, a)| a.iter().map(|s| s.to_string()).collect())
        .collect();
    let eval = evaluate_dataset(&pairs, Some(&attrs), &cfg)?;
    println!("\n{}", render_report("toy", &eval));
    Ok(())
}
