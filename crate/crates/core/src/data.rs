//! Corpus scanning, flip augmentation and the train/eval transforms.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imageops::{crop_image, crop_mask, hflip_image, hflip_mask, resize_image, resize_mask};
use crate::io::{read_image, read_mask};
use crate::nn::Tensor;
use crate::types::{Image, Mask, Sample};

const IMAGE_EXTENSIONS: [&str; 3] = ["jpg", "jpeg", "png"];
const MASK_EXTENSIONS: [&str; 1] = ["png"];
pub const FLIP_SUFFIX: &str = "#hflip";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Image and mask directories paired by file stem.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetSpec {
    pub image_dir: PathBuf,
    pub mask_dir: PathBuf,
    pub split: Split,
}

/// One image/mask file pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairEntry {
    pub stem: String,
    pub image: PathBuf,
    pub mask: PathBuf,
}

impl PairEntry {
    pub fn load(&self) -> Result<Sample> {
        let image = read_image(&self.image)?;
        let mask = read_mask(&self.mask)?;
        Sample::new(image, mask, self.stem.clone()).map_err(|e| match e {
            Error::Shape(m) => Error::Shape(format!("{}: {m}", self.stem)),
            other => other,
        })
    }
}

/// Files in `dir` with one of `extensions`, keyed by stem.
pub fn files_by_stem(dir: &Path, extensions: &[&str]) -> Result<BTreeMap<String, PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::MissingPath(dir.to_path_buf()));
    }
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if !ext.is_some_and(|e| extensions.contains(&e.as_str())) {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            if let Some(prev) = out.insert(stem.to_string(), path.clone()) {
                return Err(Error::Unpaired(vec![format!(
                    "duplicate stem {stem}: {} and {}",
                    prev.display(),
                    path.display()
                )]));
            }
        }
    }
    Ok(out)
}

/// Pairs every image with the mask of the same stem, sorted by stem.
pub fn scan_pairs(spec: &DatasetSpec) -> Result<Vec<PairEntry>> {
    let images = files_by_stem(&spec.image_dir, &IMAGE_EXTENSIONS)?;
    let masks = files_by_stem(&spec.mask_dir, &MASK_EXTENSIONS)?;
    let mut offenders: Vec<String> = images
        .keys()
        .filter(|s| !masks.contains_key(*s))
        .map(|s| format!("image {s} has no mask"))
        .collect();
    offenders.extend(
        masks
            .keys()
            .filter(|s| !images.contains_key(*s))
            .map(|s| format!("mask {s} has no image")),
    );
    if !offenders.is_empty() {
        return Err(Error::Unpaired(offenders));
    }
    if images.is_empty() {
        log::warn!(
            "no image/mask pairs under {} and {}",
            spec.image_dir.display(),
            spec.mask_dir.display()
        );
    }
    let pairs: Vec<PairEntry> = images
        .into_iter()
        .map(|(stem, image)| {
            let mask = masks[&stem].clone();
            PairEntry { stem, image, mask }
        })
        .collect();
    log::info!("found {} pairs", pairs.len());
    Ok(pairs)
}

/// Mirrors image and mask left to right.
pub fn flip_sample(s: &Sample) -> Sample {
    Sample {
        image: hflip_image(&s.image),
        mask: hflip_mask(&s.mask),
        identifier: format!("{}{FLIP_SUFFIX}", s.identifier),
        original_size: s.original_size,
    }
}

/// Originals followed by their mirrored copies.
pub fn augment_hflip(samples: &[Sample]) -> Vec<Sample> {
    samples
        .iter()
        .cloned()
        .chain(samples.iter().map(flip_sample))
        .collect()
}

/// Per-channel input normalization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Normalization {
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl Default for Normalization {
    /// Statistics of the classification corpus the encoder was pretrained on.
    fn default() -> Self {
        Self {
            mean: [0.485, 0.456, 0.406],
            std: [0.229, 0.224, 0.225],
        }
    }
}

impl Normalization {
    /// Stacks images of equal size into a normalized N×3×H×W tensor.
    pub fn batch(&self, images: &[&Image]) -> Result<Tensor> {
        let Some(first) = images.first() else {
            return Err(Error::Empty("no images to batch".into()));
        };
        let (h, w) = first.size();
        let mut t = Tensor::zeros(images.len(), 3, h, w);
        for (n, img) in images.iter().enumerate() {
            if img.size() != (h, w) {
                return Err(Error::Shape(format!(
                    "batch mixes {:?} and {:?}",
                    (h, w),
                    img.size()
                )));
            }
            let dst = t.sample_mut(n);
            for (p, px) in img.data().chunks_exact(3).enumerate() {
                for ch in 0..3 {
                    dst[ch * h * w + p] = (px[ch] - self.mean[ch]) / self.std[ch];
                }
            }
        }
        Ok(t)
    }
}

/// Resize then random crop, identical for image and mask.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrainTransform {
    pub resize: usize,
    pub crop: usize,
}

impl Default for TrainTransform {
    fn default() -> Self {
        Self {
            resize: 320,
            crop: 288,
        }
    }
}

impl TrainTransform {
    pub fn validate(&self) -> Result<()> {
        if self.crop == 0 || self.crop > self.resize {
            return Err(Error::Config(format!(
                "crop {} must lie in 1..={}",
                self.crop, self.resize
            )));
        }
        Ok(())
    }

    /// `(top, left)`, each uniform on `0..=resize-crop`.
    pub fn crop_offsets(&self, rng: &mut impl Rng) -> (usize, usize) {
        let slack = self.resize - self.crop;
        let top = rng.gen_range(0..=slack);
        (top, rng.gen_range(0..=slack))
    }

    pub fn apply(&self, sample: &Sample, rng: &mut impl Rng) -> (Image, Mask) {
        let image = resize_image(&sample.image, self.resize, self.resize);
        let mask = resize_mask(&sample.mask, self.resize, self.resize);
        let (top, left) = self.crop_offsets(rng);
        (
            crop_image(&image, top, left, self.crop, self.crop),
            crop_mask(&mask, top, left, self.crop, self.crop),
        )
    }
}

/// Maps a network-size probability map back to the source resolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InverseResize {
    pub height: usize,
    pub width: usize,
}

impl InverseResize {
    pub fn restore(&self, map: &Mask) -> Mask {
        resize_mask(map, self.height, self.width)
    }
}

/// Bilinear resize to a square network input.
pub fn eval_transform(image: &Image, size: usize) -> (Image, InverseResize) {
    let (height, width) = image.size();
    (
        resize_image(image, size, size),
        InverseResize { height, width },
    )
}

#[derive(Clone, Debug)]
enum Source {
    Files(Vec<PairEntry>),
    Memory(Arc<Vec<Sample>>),
}

/// Indexable training corpus. With flipping enabled indices `len..2·len`
/// address mirrored copies, produced on access.
#[derive(Clone, Debug)]
pub struct Dataset {
    source: Source,
    hflip: bool,
}

impl Dataset {
    pub fn from_pairs(pairs: Vec<PairEntry>, hflip: bool) -> Self {
        Self {
            source: Source::Files(pairs),
            hflip,
        }
    }

    pub fn from_samples(samples: Vec<Sample>, hflip: bool) -> Self {
        Self {
            source: Source::Memory(Arc::new(samples)),
            hflip,
        }
    }

    /// Decodes every file once and keeps the samples in memory.
    pub fn preload(self) -> Result<Self> {
        match self.source {
            Source::Files(pairs) => {
                let samples = pairs
                    .par_iter()
                    .map(PairEntry::load)
                    .collect::<Result<Vec<_>>>()?;
                Ok(Self::from_samples(samples, self.hflip))
            }
            Source::Memory(_) => Ok(self),
        }
    }

    fn base_len(&self) -> usize {
        match &self.source {
            Source::Files(p) => p.len(),
            Source::Memory(s) => s.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.base_len() * if self.hflip { 2 } else { 1 }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, index: usize) -> Result<Sample> {
        let n = self.base_len();
        if index >= self.len() {
            return Err(Error::Shape(format!(
                "sample index {index} out of {}",
                self.len()
            )));
        }
        let base = match &self.source {
            Source::Files(p) => p[index % n].load()?,
            Source::Memory(s) => s[index % n].clone(),
        };
        Ok(if index >= n { flip_sample(&base) } else { base })
    }
}

/// Seed for one sample slot of one step, so every crop is reproducible
/// regardless of which worker thread builds it.
pub fn slot_seed(seed: u64, step: u64, slot: usize) -> u64 {
    let mut x = seed
        ^ step.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (slot as u64).wrapping_mul(0xD1B5_4A32_D192_ED03);
    // splitmix64 finalizer
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// One prepared minibatch.
#[derive(Clone, Debug)]
pub struct Batch {
    pub input: Tensor,
    pub masks: Vec<Mask>,
    pub identifiers: Vec<String>,
}

/// Deterministic epoch-shuffled minibatch sampler.
#[derive(Clone, Debug)]
pub struct BatchLoader {
    pub dataset: Dataset,
    pub transform: TrainTransform,
    pub normalization: Normalization,
    pub batch_size: usize,
    pub seed: u64,
}

impl BatchLoader {
    /// Dataset indices drawn at `step`: position `step·B + j` of the
    /// concatenation of per-epoch permutations.
    pub fn indices(&self, step: u64) -> Vec<usize> {
        let n = self.dataset.len();
        let mut cached: Option<(u64, Vec<usize>)> = None;
        (0..self.batch_size)
            .map(|j| {
                let pos = step * self.batch_size as u64 + j as u64;
                let epoch = pos / n as u64;
                if cached.as_ref().is_none_or(|(e, _)| *e != epoch) {
                    let mut perm: Vec<usize> = (0..n).collect();
                    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(slot_seed(
                        self.seed,
                        epoch,
                        usize::MAX,
                    )));
                    cached = Some((epoch, perm));
                }
                cached.as_ref().expect("permutation").1[(pos % n as u64) as usize]
            })
            .collect()
    }

    /// The crop offsets `batch(step)` uses, slot by slot.
    pub fn crop_offsets(&self, step: u64) -> Vec<(usize, usize)> {
        (0..self.batch_size)
            .map(|slot| {
                let mut rng = ChaCha8Rng::seed_from_u64(slot_seed(self.seed, step, slot));
                self.transform.crop_offsets(&mut rng)
            })
            .collect()
    }

    pub fn batch(&self, step: u64) -> Result<Batch> {
        if self.dataset.is_empty() {
            return Err(Error::Empty("training dataset is empty".into()));
        }
        let prepared = self
            .indices(step)
            .into_par_iter()
            .enumerate()
            .map(|(slot, index)| {
                let sample = self.dataset.get(index)?;
                let mut rng = ChaCha8Rng::seed_from_u64(slot_seed(self.seed, step, slot));
                let (image, mask) = self.transform.apply(&sample, &mut rng);
                Ok((image, mask, sample.identifier))
            })
            .collect::<Result<Vec<_>>>()?;
        let images: Vec<&Image> = prepared.iter().map(|p| &p.0).collect();
        let input = self.normalization.batch(&images)?;
        let (masks, identifiers) = prepared.into_iter().map(|(_, m, id)| (m, id)).unzip();
        Ok(Batch {
            input,
            masks,
            identifiers,
        })
    }
}

/// A seeded toy scene: a soft-edged blob with a striped texture on a
/// smooth gradient background, plus its exact binary mask. Handy for
/// smoke runs and tests that need no corpus on disk.
pub fn synthetic_scene(height: usize, width: usize, seed: u64) -> (Image, Mask) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = (height as f64, width as f64);
    let cy = h * rng.gen_range(0.35..0.65);
    let cx = w * rng.gen_range(0.35..0.65);
    let ry = h * rng.gen_range(0.18..0.3);
    let rx = w * rng.gen_range(0.18..0.3);
    let lobes = rng.gen_range(2..5) as f64;
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let fg: [f32; 3] = [
        rng.gen_range(0.55..0.95),
        rng.gen_range(0.1..0.5),
        rng.gen_range(0.1..0.4),
    ];
    let bg: [f32; 3] = [
        rng.gen_range(0.05..0.3),
        rng.gen_range(0.3..0.6),
        rng.gen_range(0.5..0.9),
    ];
    let inside = |r: usize, c: usize| {
        let (dy, dx) = ((r as f64 + 0.5 - cy) / ry, (c as f64 + 0.5 - cx) / rx);
        let radius = 1.0 + 0.2 * (lobes * dy.atan2(dx) + phase).sin();
        dy * dy + dx * dx <= radius * radius
    };
    let image = Image::from_fn(height, width, |r, c| {
        let t = (r + c) as f32 / (height + width) as f32;
        if inside(r, c) {
            let stripe = if (r / 3 + c / 5) % 2 == 0 {
                0.08
            } else {
                -0.08
            };
            fg.map(|v| (v + stripe).clamp(0.0, 1.0))
        } else {
            bg.map(|v| (v * (0.7 + 0.3 * t)).clamp(0.0, 1.0))
        }
    });
    let mask = Mask::from_fn(height, width, |r, c| if inside(r, c) { 1.0 } else { 0.0 });
    (image, mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(h: usize, w: usize, id: &str) -> Sample {
        let image = Image::from_fn(h, w, |r, c| [r as f32 / h as f32, c as f32 / w as f32, 0.5]);
        let mask = Mask::from_fn(h, w, |r, c| if c > w / 2 && r > 2 { 1.0 } else { 0.0 });
        Sample::new(image, mask, id).unwrap()
    }

    #[test]
    fn flip_doubles_and_is_an_involution() {
        let s = vec![sample(6, 5, "a"), sample(4, 7, "b")];
        let aug = augment_hflip(&s);
        assert_eq!(aug.len(), 4);
        assert_eq!(aug[2].identifier, "a#hflip");
        let twice = flip_sample(&flip_sample(&s[0]));
        assert_eq!(twice.image, s[0].image);
        assert_eq!(twice.mask, s[0].mask);
        let (r, c) = (3, 4);
        assert_eq!(aug[2].mask.get(r, 5 - 1 - c), s[0].mask.get(r, c));
    }

    #[test]
    fn train_transform_shapes_and_offsets() {
        let t = TrainTransform::default();
        let s = sample(480, 640, "x");
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (img, mask) = t.apply(&s, &mut rng);
        assert_eq!(img.size(), (288, 288));
        assert_eq!(mask.size(), (288, 288));
        let mut a = ChaCha8Rng::seed_from_u64(5);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(t.apply(&s, &mut a), t.apply(&s, &mut b));
    }

    #[test]
    fn eval_round_trip_preserves_constants() {
        let img = Image::filled(384, 512, [0.3, 0.3, 0.3]);
        let (input, inv) = eval_transform(&img, 320);
        assert_eq!(input.size(), (320, 320));
        let restored = inv.restore(&Mask::filled(320, 320, 0.25));
        assert_eq!(restored.size(), (384, 512));
        assert!(restored.data().iter().all(|v| *v == 0.25));
    }

    #[test]
    fn normalization_touches_images_only() {
        let img = Image::filled(2, 2, [0.485, 0.456, 0.406]);
        let t = Normalization::default().batch(&[&img]).unwrap();
        assert!(t.data.iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn loader_is_deterministic_and_covers_each_epoch() {
        let ds =
            Dataset::from_samples((0..5).map(|i| sample(8, 8, &i.to_string())).collect(), true);
        let loader = BatchLoader {
            dataset: ds,
            transform: TrainTransform { resize: 8, crop: 4 },
            normalization: Normalization::default(),
            batch_size: 5,
            seed: 3,
        };
        let mut seen: Vec<usize> = loader
            .indices(0)
            .into_iter()
            .chain(loader.indices(1))
            .collect();
        seen.sort();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
        let a = loader.batch(4).unwrap();
        let b = loader.batch(4).unwrap();
        assert_eq!(a.input, b.input);
        assert_eq!(a.identifiers, b.identifiers);
    }

    #[test]
    fn scan_reports_unpaired_stems() {
        let dir = tempfile::tempdir().unwrap();
        let (imgs, masks) = (dir.path().join("im"), dir.path().join("gt"));
        std::fs::create_dir_all(&imgs).unwrap();
        std::fs::create_dir_all(&masks).unwrap();
        for stem in ["b", "a", "c"] {
            crate::io::write_image_png(
                &imgs.join(format!("{stem}.png")),
                &Image::filled(2, 2, [0.0; 3]),
            )
            .unwrap();
            crate::io::write_mask_png(&masks.join(format!("{stem}.png")), &Mask::filled(2, 2, 1.0))
                .unwrap();
        }
        let spec = DatasetSpec {
            image_dir: imgs.clone(),
            mask_dir: masks.clone(),
            split: Split::Train,
        };
        let pairs = scan_pairs(&spec).unwrap();
        assert_eq!(
            pairs.iter().map(|p| p.stem.as_str()).collect::<Vec<_>>(),
            ["a", "b", "c"]
        );
        crate::io::write_image_png(&imgs.join("d.jpg.png"), &Image::filled(2, 2, [0.0; 3]))
            .unwrap();
        match scan_pairs(&spec) {
            Err(Error::Unpaired(list)) => {
                assert_eq!(list, vec!["image d.jpg has no mask".to_string()])
            }
            other => panic!("{other:?}"),
        }
    }
}
