//! Builds every ablation architecture and prints its outputs, parameter
//! count and (for the refinement variants) receptive field.
//!
//!     cargo run --example forward_shapes -- [width_divisor]

use basnet::data::{synthetic_scene, Normalization};
use basnet::model::{Architecture, BasNet, ModelConfig};
use basnet::nn::{parameter_count, Mode};

fn main() -> basnet::Result<()> {
    let divisor = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(8);
    let (image, _) = synthetic_scene(96, 96, 1);
    let input = Normalization::default().batch(&[&image])?;

    for arch in Architecture::ALL {
        let cfg = ModelConfig::for_architecture(arch).with_width_divisor(divisor);
        let mut net = BasNet::new(&cfg, 0)?;
        let outputs = net.forward(&input, Mode::Eval)?;
        let shapes: Vec<String> = outputs.iter().map(|t| format!("{}×{}", t.h, t.w)).collect();
        let rf = net
            .refinement()
            .map(|r| format!("  refinement RF {}px", r.receptive_field()));
        println!(
            "{:<14} {} outputs [{}]  {} params{}",
            arch.label(),
            outputs.len(),
            shapes.join(", "),
            parameter_count(&mut net),
            rf.unwrap_or_default()
        );
    }
    Ok(())
}
