//! Background removal end to end: load a checkpoint (or fit a quick one on
//! a synthetic scene), predict, and write the grayscale map and an RGBA
//! cutout at the source resolution.
//!
//!     cargo run --release --example predict_cutout -- [checkpoint_dir] [image] [out_dir]

use std::path::PathBuf;

use basnet::data::{synthetic_scene, Normalization};
use basnet::inference::predict;
use basnet::io::{encode_cutout_png, read_image, write_image_png, write_mask_png};
use basnet::losses::LossVariant;
use basnet::model::{BasNet, ModelConfig};
use basnet::training::{overfit_single_pair, OverfitConfig};

fn main() -> basnet::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let out = args
        .get(2)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("basnet-cutout"));
    std::fs::create_dir_all(&out)?;

    let (mut model, image, size) = match (args.first(), args.get(1)) {
        (Some(ck), Some(img)) => (
            BasNet::load(&PathBuf::from(ck))?.0,
            read_image(&PathBuf::from(img))?,
            320,
        ),
        _ => {
            // No checkpoint given: fit a narrow model to one scene so the
            // example runs on its own in under a minute.
            let (image, mask) = synthetic_scene(150, 200, 11);
            let mut cfg = OverfitConfig::new(
                ModelConfig::default().with_width_divisor(16),
                LossVariant::BSI,
                60,
                64,
            );
            cfg.adam.lr = 3e-3;
            (overfit_single_pair(&image, &mask, &cfg)?.model, image, 64)
        }
    };

    let map = predict(&mut model, &image, size, &Normalization::default())?;
    write_image_png(&out.join("input.png"), &image)?;
    write_mask_png(&out.join("mask.png"), &map)?;
    std::fs::write(out.join("cutout.png"), encode_cutout_png(&image, &map)?)?;
    println!(
        "{}×{} map and cutout written to {}",
        map.width(),
        map.height(),
        out.display()
    );
    Ok(())
}
