//! The three loss terms on hand-sized maps, and how each reacts to the same
//! kind of mistake.
//!
//!     cargo run --example loss_terms

use basnet::losses::{
    bce_loss, hybrid_loss, iou_loss, ssim_loss, LossConfig, LossVariant, SsimParams,
};
use basnet::types::Mask;

fn square(n: usize, lo: usize, hi: usize, inside: f64, outside: f64) -> Mask {
    Mask::from_fn(n, n, |r, c| {
        if (lo..hi).contains(&r) && (lo..hi).contains(&c) {
            inside
        } else {
            outside
        }
    })
}

fn main() -> basnet::Result<()> {
    let g = square(16, 4, 12, 1.0, 0.0);
    let ssim = SsimParams::default();
    let cases = [
        ("perfect", g.clone()),
        ("uniformly unsure (0.5)", Mask::filled(16, 16, 0.5)),
        ("soft everywhere (0.8 / 0.2)", square(16, 4, 12, 0.8, 0.2)),
        (
            "boundary blurred",
            Mask::from_fn(16, 16, |r, c| {
                let d = [
                    r as f64 - 3.5,
                    11.5 - r as f64,
                    c as f64 - 3.5,
                    11.5 - c as f64,
                ]
                .into_iter()
                .fold(f64::INFINITY, f64::min);
                1.0 / (1.0 + (-1.5 * d).exp())
            }),
        ),
        (
            "object shifted by 2px",
            Mask::from_fn(16, 16, |r, c| g.get(r, c.saturating_sub(2))),
        ),
        ("missed entirely", Mask::filled(16, 16, 0.0)),
    ];

    println!(
        "{:<30} {:>8} {:>8} {:>8} {:>8}",
        "prediction", "bce", "ssim", "iou", "hybrid"
    );
    let cfg = LossConfig::uniform(LossVariant::BSI, 1);
    for (name, s) in &cases {
        let h = hybrid_loss(s, &g, &cfg)?;
        println!(
            "{name:<30} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            bce_loss(s, &g)?,
            ssim_loss(s, &g, &ssim)?,
            iou_loss(s, &g)?,
            h.hybrid
        );
    }
    Ok(())
}
