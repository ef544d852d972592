//! The `basnet` command line: train, predict, evaluate, overfit-demo, export.
//!
//! Exit status is 0 on success, 2 for a missing path, bad configuration or
//! unpaired data, and 1 for anything else.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::checkpoint::TensorArchive;
use crate::data::{files_by_stem, Normalization};
use crate::error::{Error, Result};
use crate::inference::{predict_side_outputs, DEFAULT_INPUT_SIZE};
use crate::io::{
    encode_cutout_png, encode_pfm, read_image, read_mask, write_image_png, write_mask_png,
};
use crate::losses::LossVariant;
use crate::metrics::{evaluate_dataset, evaluate_pair, render_report, MetricConfig};
use crate::model::{Architecture, BasNet, ModelConfig};
use crate::training::{
    self, build_ablation_config, latest_checkpoint, overfit_single_pair, OverfitConfig, TrainConfig,
};
use crate::types::{BinaryMask, Image, Mask};

/// Root for relative run and checkpoint paths.
pub const HOME_ENV: &str = "BASNET_HOME";

const PREDICTION_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

#[derive(Debug, Parser)]
#[command(
    name = "basnet",
    version,
    about = "Boundary-aware salient object segmentation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model from a run config or an ablation row.
    Train(TrainArgs),
    /// Predict probability maps for an image or a directory of images.
    Predict(PredictArgs),
    /// Score predictions (or a checkpoint) against ground-truth masks.
    Evaluate(EvaluateArgs),
    /// Fit one image/mask pair and record intermediate predictions.
    OverfitDemo(OverfitArgs),
    /// Package a checkpoint for inference, or convert a raw tensor archive.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Ablation row name such as "EDS+RRM_Ours + l_bsi".
    #[arg(long)]
    pub row: Option<String>,
    #[arg(long)]
    pub arch: Option<Architecture>,
    #[arg(long)]
    pub loss: Option<LossVariant>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long)]
    pub masks: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<u64>,
    /// Run directory (checkpoints, train.log).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Continue from the newest checkpoint under the run directory.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Emit {
    Probmap,
    Cutout,
    #[value(name = "side_outputs", alias = "side-outputs")]
    SideOutputs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Checkpoint directory, or a run directory (its newest checkpoint is used).
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "probmap")]
    pub emit: Vec<Emit>,
    /// Expected architecture; the checkpoint manifest must match it.
    #[arg(long)]
    pub arch: Option<Architecture>,
    /// Also write the unquantized map as `<stem>.pfm`.
    #[arg(long)]
    pub float_sidecar: bool,
    #[arg(long, default_value_t = DEFAULT_INPUT_SIZE)]
    pub input_size: usize,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Prediction directory, or image directory when --checkpoint is given.
    #[arg(long)]
    pub input: PathBuf,
    /// Ground-truth mask directory.
    #[arg(long)]
    pub gt: PathBuf,
    /// Report CSV path.
    #[arg(long)]
    pub out: PathBuf,
    /// Lines of `stem attr attr ...` (whitespace or comma separated).
    #[arg(long)]
    pub attributes: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value = "dataset")]
    pub dataset: String,
    #[arg(long, default_value_t = DEFAULT_INPUT_SIZE)]
    pub input_size: usize,
    /// Object-score dispersion weight of the S-measure.
    #[arg(long)]
    pub s_lambda: Option<f64>,
}

#[derive(Debug, Args)]
pub struct OverfitArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub mask: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// A loss variant, or `all` for the seven variants side by side.
    #[arg(long, default_value = "bsi")]
    pub loss: String,
    #[arg(long, default_value_t = 500)]
    pub iterations: usize,
    #[arg(long, default_value_t = 128)]
    pub resolution: usize,
    #[arg(long, default_value_t = 8)]
    pub width_divisor: usize,
    #[arg(long)]
    pub arch: Option<Architecture>,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Checkpoint to re-package without optimizer state.
    #[arg(long, conflicts_with = "input")]
    pub checkpoint: Option<PathBuf>,
    /// Raw tensor archive whose names follow this crate's parameter layout.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value = "basnet")]
    pub arch: Architecture,
    #[arg(long, default_value_t = 1)]
    pub width_divisor: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// Exit status for an error: 2 for user-fixable input problems, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::MissingPath(_)
        | Error::Config(_)
        | Error::Unpaired(_)
        | Error::UnknownRow { .. } => 2,
        _ => 1,
    }
}

/// Parses `std::env::args`, runs the command and returns the exit status.
pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => cmd_train(&a).map(|p| println!("{}", p.display())),
        Command::Predict(a) => cmd_predict(&a)
            .map(|files| println!("wrote {} files to {}", files.len(), a.out.display())),
        Command::Evaluate(a) => cmd_evaluate(&a).map(|csv| print!("{csv}")),
        Command::OverfitDemo(a) => cmd_overfit_demo(&a).map(|dirs| {
            for d in dirs {
                println!("{}", d.display());
            }
        }),
        Command::Export(a) => {
            cmd_export(&a).map(|sha| println!("{} sha256={sha}", a.out.display()))
        }
    }
}

fn home_relative(path: &Path) -> PathBuf {
    match std::env::var_os(HOME_ENV) {
        Some(home) if path.is_relative() && !path.exists() => PathBuf::from(home).join(path),
        _ => path.to_path_buf(),
    }
}

/// A checkpoint directory, a run directory holding `checkpoints/`, or either
/// of those relative to `BASNET_HOME`.
pub fn resolve_checkpoint(path: &Path) -> Result<PathBuf> {
    let path = home_relative(path);
    if path.join(crate::model::MANIFEST_FILE).is_file() {
        return Ok(path);
    }
    match latest_checkpoint(&path)? {
        Some(p) => Ok(p),
        None => Err(Error::MissingPath(path)),
    }
}

/// Builds the run config from flags layered over the config file and row.
pub fn train_config(a: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = match &a.config {
        Some(p) => TrainConfig::from_file(p)?,
        None => TrainConfig::default(),
    };
    if let Some(row) = &a.row {
        let r = build_ablation_config(row)?;
        cfg.model = cfg.model.with_architecture(r.model.architecture);
        cfg.loss = r.loss;
    }
    if let Some(arch) = a.arch {
        cfg.model = cfg.model.with_architecture(arch);
    }
    if let Some(loss) = a.loss {
        cfg.loss = loss;
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(n) = a.iterations {
        cfg.max_iterations = n;
    }
    match (&a.images, &a.masks) {
        (Some(image_dir), Some(mask_dir)) => {
            cfg.dataset = Some(crate::data::DatasetSpec {
                image_dir: image_dir.clone(),
                mask_dir: mask_dir.clone(),
                split: crate::data::Split::Train,
            })
        }
        (None, None) => {}
        _ => {
            return Err(Error::Config(
                "--images and --masks must be given together".into(),
            ))
        }
    }
    cfg.out_dir = match &a.out {
        Some(o) => o.clone(),
        None if cfg.out_dir.is_relative() => match std::env::var_os(HOME_ENV) {
            Some(home) => PathBuf::from(home).join(&cfg.out_dir),
            None => cfg.out_dir,
        },
        None => cfg.out_dir,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Trains and returns the final checkpoint directory.
pub fn cmd_train(a: &TrainArgs) -> Result<PathBuf> {
    let cfg = train_config(a)?;
    let spec = cfg.dataset.as_ref().ok_or_else(|| {
        Error::Config("no dataset: set image_dir/mask_dir or pass --images/--masks".into())
    })?;
    for dir in [&spec.image_dir, &spec.mask_dir] {
        if !dir.is_dir() {
            return Err(Error::MissingPath(dir.clone()));
        }
    }
    log::info!("{}", cfg.describe());
    training::train(&cfg, a.resume)?;
    latest_checkpoint(&cfg.out_dir)?
        .ok_or_else(|| Error::Empty("training wrote no checkpoint".into()))
}

fn list_inputs(path: &Path) -> Result<Vec<(String, PathBuf)>> {
    if path.is_file() {
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("image")
            .to_string();
        return Ok(vec![(stem, path.to_path_buf())]);
    }
    let files = files_by_stem(path, &PREDICTION_EXTENSIONS)?;
    if files.is_empty() {
        return Err(Error::Empty(format!("no images in {}", path.display())));
    }
    Ok(files.into_iter().collect())
}

fn load_model(checkpoint: &Path, arch: Option<Architecture>) -> Result<BasNet> {
    let dir = resolve_checkpoint(checkpoint)?;
    let (model, sha) = match arch {
        None => BasNet::load(&dir)?,
        Some(arch) => {
            // Build what the caller asked for so a mismatch is reported as a
            // parameter diff against that architecture.
            let manifest_text = fs::read_to_string(dir.join(crate::model::MANIFEST_FILE))?;
            let manifest = crate::checkpoint::Manifest::parse(&manifest_text)?;
            let stored = ModelConfig::parse(&manifest.config)?;
            BasNet::new(&stored.with_architecture(arch), 0)?.load_weights(&dir, Some(&manifest))?
        }
    };
    log::info!(
        "loaded {} ({}) sha256={sha}",
        dir.display(),
        model.config().architecture.label()
    );
    Ok(model)
}

fn mask_image(m: &Mask) -> Image {
    Image::from_fn(m.height(), m.width(), |r, c| [m.get(r, c) as f32; 3])
}

/// Tiles images left to right on a mid-gray canvas with a small gutter.
pub fn contact_sheet(tiles: &[Image]) -> Image {
    const GAP: usize = 4;
    let h = tiles.iter().map(Image::height).max().unwrap_or(0);
    let offsets: Vec<usize> = tiles
        .iter()
        .scan(0, |x, t| {
            let at = *x;
            *x += t.width() + GAP;
            Some(at)
        })
        .collect();
    let w = tiles
        .iter()
        .map(|t| t.width() + GAP)
        .sum::<usize>()
        .saturating_sub(GAP);
    Image::from_fn(h, w, |r, c| {
        let i = offsets.partition_point(|o| *o <= c).saturating_sub(1);
        let (t, x) = (&tiles[i], c - offsets[i]);
        if r < t.height() && x < t.width() {
            t.pixel(r, x)
        } else {
            [0.5; 3]
        }
    })
}

/// Writes the requested outputs per image; returns every file written.
pub fn cmd_predict(a: &PredictArgs) -> Result<Vec<PathBuf>> {
    let inputs = list_inputs(&a.input)?;
    let mut model = load_model(&a.checkpoint, a.arch)?;
    let norm = Normalization::default();
    fs::create_dir_all(&a.out)?;
    let mut written = Vec::new();
    for (stem, path) in inputs {
        let image = read_image(&path)?;
        let sides = predict_side_outputs(&mut model, &image, a.input_size, &norm)?;
        let map = sides.final_map();
        for emit in &a.emit {
            let target = match emit {
                Emit::Probmap => {
                    let p = a.out.join(format!("{stem}.png"));
                    write_mask_png(&p, map)?;
                    p
                }
                Emit::Cutout => {
                    let p = a.out.join(format!("{stem}_cutout.png"));
                    fs::write(&p, encode_cutout_png(&image, map)?)?;
                    p
                }
                Emit::SideOutputs => {
                    let p = a.out.join(format!("{stem}_sides.png"));
                    let mut tiles = vec![image.clone()];
                    tiles.extend(sides.maps().iter().map(mask_image));
                    write_image_png(&p, &contact_sheet(&tiles))?;
                    p
                }
            };
            written.push(target);
        }
        if a.float_sidecar {
            let p = a.out.join(format!("{stem}.pfm"));
            fs::write(&p, encode_pfm(map))?;
            written.push(p);
        }
    }
    Ok(written)
}

/// `stem attr attr ...` per line; `#` starts a comment.
pub fn parse_attributes(text: &str) -> BTreeMap<String, Vec<String>> {
    let mut out = BTreeMap::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("");
        let mut fields = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty());
        if let Some(stem) = fields.next() {
            out.entry(stem.to_string())
                .or_insert_with(Vec::new)
                .extend(fields.map(str::to_string));
        }
    }
    out
}

fn read_prediction(
    pngs: &BTreeMap<String, PathBuf>,
    pfms: &BTreeMap<String, PathBuf>,
    stem: &str,
) -> Result<Mask> {
    match pfms.get(stem) {
        Some(p) => crate::io::decode_pfm(&fs::read(p)?),
        None => read_mask(&pngs[stem]),
    }
}

/// Writes the metric table and returns it.
pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<String> {
    let gts = files_by_stem(&a.gt, &PREDICTION_EXTENSIONS)?;
    let mut metrics = MetricConfig::default();
    if let Some(l) = a.s_lambda {
        metrics.structure.lambda = l;
    }
    let mut pairs = Vec::with_capacity(gts.len());
    let stems: Vec<String>;
    match &a.checkpoint {
        Some(ck) => {
            let images = files_by_stem(&a.input, &PREDICTION_EXTENSIONS)?;
            check_paired(images.keys(), gts.keys(), "image")?;
            let mut model = load_model(ck, None)?;
            let norm = Normalization::default();
            for (stem, path) in &images {
                let s = predict_side_outputs(&mut model, &read_image(path)?, a.input_size, &norm)?
                    .into_maps()
                    .swap_remove(0);
                pairs.push((s, BinaryMask::threshold(&read_mask(&gts[stem])?, 0.5)));
            }
            stems = images.into_keys().collect();
        }
        None => {
            let pngs = files_by_stem(&a.input, &PREDICTION_EXTENSIONS)?;
            let pfms = files_by_stem(&a.input, &["pfm"])?;
            let mut preds: Vec<&String> = pngs.keys().chain(pfms.keys()).collect();
            preds.sort();
            preds.dedup();
            check_paired(preds.iter().copied(), gts.keys(), "prediction")?;
            for stem in &preds {
                let s = read_prediction(&pngs, &pfms, stem)?;
                let g = read_mask(&gts[*stem])?;
                if s.size() != g.size() {
                    return Err(Error::Shape(format!(
                        "{stem}: prediction {:?} vs ground truth {:?}",
                        s.size(),
                        g.size()
                    )));
                }
                pairs.push((s, BinaryMask::threshold(&g, 0.5)));
            }
            stems = preds.into_iter().cloned().collect();
        }
    }
    let attributes = match &a.attributes {
        Some(p) => {
            let table = parse_attributes(
                &fs::read_to_string(p).map_err(|_| Error::MissingPath(p.clone()))?,
            );
            Some(
                stems
                    .iter()
                    .map(|s| table.get(s).cloned().unwrap_or_default())
                    .collect::<Vec<_>>(),
            )
        }
        None => None,
    };
    let eval = evaluate_dataset(&pairs, attributes.as_deref(), &metrics)?;
    let csv = render_report(&a.dataset, &eval);
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(&a.out, &csv)?;
    Ok(csv)
}

fn check_paired<'a>(
    left: impl Iterator<Item = &'a String>,
    gts: impl Iterator<Item = &'a String>,
    what: &str,
) -> Result<()> {
    let left: std::collections::BTreeSet<&String> = left.collect();
    let right: std::collections::BTreeSet<&String> = gts.collect();
    let mut offenders: Vec<String> = left
        .difference(&right)
        .map(|s| format!("{what} {s} has no ground truth"))
        .collect();
    offenders.extend(
        right
            .difference(&left)
            .map(|s| format!("ground truth {s} has no {what}")),
    );
    if offenders.is_empty() {
        Ok(())
    } else {
        Err(Error::Unpaired(offenders))
    }
}

/// Runs one or all loss variants; returns the per-variant output directories.
pub fn cmd_overfit_demo(a: &OverfitArgs) -> Result<Vec<PathBuf>> {
    let image = read_image(&a.input)?;
    let mask = read_mask(&a.mask)?;
    let variants: Vec<LossVariant> = if a.loss.eq_ignore_ascii_case("all") {
        LossVariant::ALL.to_vec()
    } else {
        vec![a.loss.parse()?]
    };
    let mut model = ModelConfig::default().with_width_divisor(a.width_divisor);
    if let Some(arch) = a.arch {
        model = model.with_architecture(arch);
    }
    let metrics = MetricConfig::default();
    let mut dirs = Vec::new();
    for loss in variants {
        let mut cfg = OverfitConfig::new(model.clone(), loss, a.iterations, a.resolution);
        cfg.adam.lr = a.lr;
        cfg.seed = a.seed;
        let res = overfit_single_pair(&image, &mask, &cfg)?;
        let dir = a.out.join(loss.name());
        fs::create_dir_all(&dir)?;

        let small_image = crate::imageops::resize_image(&image, a.resolution, a.resolution);
        let small_mask = crate::imageops::resize_mask(&mask, a.resolution, a.resolution);
        let gt = BinaryMask::threshold(&small_mask, 0.5);
        let mut tiles = vec![small_image, mask_image(&small_mask)];
        tiles.extend(res.snapshots.iter().map(|s| mask_image(&s.map)));
        write_image_png(&dir.join("grid.png"), &contact_sheet(&tiles))?;

        let mut trace = String::from("iteration,loss\n");
        for (i, l) in res.losses.iter().enumerate() {
            let _ = writeln!(trace, "{},{l:.8}", i + 1);
        }
        fs::write(dir.join("trace.csv"), trace)?;

        let mut snaps = String::from("iteration,fw_beta,fb_beta,mae,s_alpha,e_phi\n");
        for s in &res.snapshots {
            let r = evaluate_pair(&s.map, &gt, &metrics)?;
            let fw = r
                .fw_beta
                .map_or_else(|| "nan".into(), |v| format!("{v:.6}"));
            let _ = writeln!(
                snaps,
                "{},{fw},{:.6},{:.6},{:.6},{:.6}",
                s.iteration, r.fb_beta, r.mae, r.s_alpha, r.e_phi
            );
        }
        fs::write(dir.join("snapshots.csv"), snaps)?;
        log::info!(
            "{loss}: MAE {:.4} after {} iterations",
            res.report.mae,
            res.iterations
        );
        dirs.push(dir);
    }
    Ok(dirs)
}

/// Writes an inference checkpoint (model.bin + manifest.txt); returns its SHA-256.
pub fn cmd_export(a: &ExportArgs) -> Result<String> {
    let mut model = match (&a.checkpoint, &a.input) {
        (Some(ck), None) => load_model(ck, None)?,
        (None, Some(raw)) => {
            let (archive, _) = TensorArchive::read(&home_relative(raw))?;
            let cfg = ModelConfig::default()
                .with_width_divisor(a.width_divisor)
                .with_architecture(a.arch);
            let mut model = BasNet::new(&cfg, 0)?;
            archive.load_into(&mut model)?;
            model
        }
        _ => {
            return Err(Error::Config(
                "export needs exactly one of --checkpoint or --input".into(),
            ))
        }
    };
    model.save(&a.out)
}
