//! One line per acceptance criterion. Exits nonzero if any criterion fails.
//!
//! Criterion 10 needs full-scale weights and the ECSSD test set:
//! `BASNET_ECSSD_CHECKPOINT=<checkpoint dir> BASNET_ECSSD_ROOT=<dir with images/ and masks/>`.

#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use std::io::Cursor;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::Instant;

use basnet::data::{
    scan_pairs, synthetic_scene, BatchLoader, Dataset, DatasetSpec, Normalization, Split,
    TrainTransform,
};
use basnet::inference::evaluate_model;
use basnet::losses::{
    bce_loss, bce_loss_with_grad, hybrid_loss, iou_loss, iou_loss_with_grad, ssim_background_loss,
    ssim_index, ssim_loss, ssim_loss_with_grad, total_loss, total_loss_from_logits, LossConfig,
    LossVariant, SsimParams,
};
use basnet::metrics::{
    e_measure_curve, e_measure_max, e_measure_mean, mae, relaxed_boundary_fbeta, s_measure,
    weighted_fbeta, BoundaryParams, MetricConfig, StructureParams,
};
use basnet::model::{split_logits, Architecture, BasNet, ModelConfig};
use basnet::nn::Mode;
use basnet::rrm::RrmKind;
use basnet::training::{overfit_single_pair, EarlyStop, OverfitConfig, TrainConfig, Trainer};
use basnet::types::{BinaryMask, LogitMap, Mask, Sample, SideOutputSet};
use basnet_service::{Server, ServiceConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(name: &str, got: f64, want: f64, tol: f64) -> Result<(), String> {
    ensure((got - want).abs() <= tol, || {
        format!("{name}: got {got:.15}, want {want:.15} (tol {tol:e})")
    })
}

fn m(h: usize, w: usize, v: &[f64]) -> Mask {
    Mask::new(h, w, v.to_vec()).unwrap()
}

// ---- 1. gradients ---------------------------------------------------------

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

fn fd_worst(f: &dyn Fn(&Mask) -> (f64, Vec<f64>), s: &Mask) -> f64 {
    const H: f64 = 1e-5;
    let (_, grad) = f(s);
    let nudged = |i: usize, d: f64| {
        let mut v = s.data().to_vec();
        v[i] += d;
        f(&Mask::new(s.height(), s.width(), v).unwrap()).0
    };
    (0..s.len())
        .map(|i| rel_err(grad[i], (nudged(i, H) - nudged(i, -H)) / (2.0 * H)))
        .fold(0.0, f64::max)
}

fn gradients() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = SsimParams::default();
    let mut worst = [0.0f64; 4];
    for trial in 0..4 {
        let s = Mask::from_fn(8, 8, |_, _| rng.gen_range(0.05..0.95));
        let g = Mask::from_fn(8, 8, |_, _| {
            if trial % 2 == 0 {
                (rng.gen::<f64>() < 0.4) as u8 as f64
            } else {
                rng.gen()
            }
        });
        worst[0] = worst[0].max(fd_worst(&|s| bce_loss_with_grad(s, &g).unwrap(), &s));
        worst[1] = worst[1].max(fd_worst(&|s| ssim_loss_with_grad(s, &g, &p).unwrap(), &s));
        worst[2] = worst[2].max(fd_worst(&|s| iou_loss_with_grad(s, &g).unwrap(), &s));
    }
    // Total over eight weighted outputs, differentiated through the logits.
    let mut cfg = LossConfig::uniform(LossVariant::BSI, 8);
    cfg.alpha = (0..8).map(|k| 0.5 + 0.25 * k as f64).collect();
    let g = Mask::from_fn(8, 8, |_, _| (rng.gen::<f64>() < 0.5) as u8 as f64);
    let zs: Vec<LogitMap> = (0..8)
        .map(|_| LogitMap::new(8, 8, (0..64).map(|_| rng.gen_range(-3.0..3.0)).collect()).unwrap())
        .collect();
    let (_, grads) = total_loss_from_logits(&zs, &g, &cfg).unwrap();
    let f = |zs: &[LogitMap]| total_loss_from_logits(zs, &g, &cfg).unwrap().0.total;
    for k in 0..8 {
        for i in 0..64 {
            let (mut up, mut down) = (zs.clone(), zs.clone());
            up[k].data[i] += 1e-5;
            down[k].data[i] -= 1e-5;
            worst[3] = worst[3].max(rel_err(grads[k][i], (f(&up) - f(&down)) / 2e-5));
        }
    }
    for (name, w) in ["bce", "ssim", "iou", "total"].iter().zip(worst) {
        ensure(w < 1e-3, || format!("{name}: max relative error {w:e}"))?;
    }
    Ok(format!(
        "max rel err bce {:.1e}, ssim {:.1e}, iou {:.1e}, total {:.1e}",
        worst[0], worst[1], worst[2], worst[3]
    ))
}

// ---- 2. loss values --------------------------------------------------------

fn loss_values() -> Check {
    let p = SsimParams::default();
    let g22 = m(2, 2, &[1.0, 0.0, 0.0, 1.0]);
    let s22 = m(2, 2, &[0.9, 0.1, 0.2, 0.8]);
    let mut n = 0;
    let mut check = |name: &str, got: f64, want: f64| {
        n += 1;
        close(name, got, want, 1e-9)
    };

    // Binary cross-entropy.
    check("bce S=G", bce_loss(&g22, &g22).unwrap(), 0.0)?;
    check(
        "bce G=1 S=0.5",
        bce_loss(&Mask::filled(3, 3, 0.5), &Mask::filled(3, 3, 1.0)).unwrap(),
        2f64.ln(),
    )?;
    let bce22 = -(2.0 * 0.9f64.ln() + 2.0 * 0.8f64.ln()) / 4.0;
    check("bce 2x2", bce_loss(&s22, &g22).unwrap(), bce22)?;

    // SSIM: identical maps, constant patches, background patch.
    let soft = Mask::from_fn(9, 9, |r, c| ((r * 5 + c * 3) % 7) as f64 / 7.0);
    check("ssim S=G", ssim_loss(&soft, &soft, &p).unwrap(), 0.0)?;
    let w = p.window_weights();
    let half = vec![0.5; w.len()];
    let one = vec![1.0; w.len()];
    let zero = vec![0.0; w.len()];
    let want = (1.0 + p.c1) * p.c2 / ((1.25 + p.c1) * p.c2);
    check(
        "ssim x=0.5 y=1",
        1.0 - ssim_index(&half, &one, &w, &p),
        1.0 - want,
    )?;
    check(
        "ssim x=0.5 y=1 value",
        1.0 - ssim_index(&half, &one, &w, &p),
        0.19998400127989763,
    )?;
    check("ssim x=0 y=0", 1.0 - ssim_index(&zero, &zero, &w, &p), 0.0)?;

    // IoU.
    check("iou S=G", iou_loss(&g22, &g22).unwrap(), 0.0)?;
    check(
        "iou 2x2",
        iou_loss(
            &m(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            &m(2, 2, &[1.0, 1.0, 0.0, 0.0]),
        )
        .unwrap(),
        0.5,
    )?;
    check("iou S=1-G", iou_loss(&g22.complement(), &g22).unwrap(), 1.0)?;

    // Hybrid: vanishes on S=G, ℓ_b is BCE alone, ℓ_bsi adds the three.
    let cfg = |v| LossConfig::uniform(v, 1);
    check(
        "hybrid S=G",
        hybrid_loss(&g22, &g22, &cfg(LossVariant::BSI))
            .unwrap()
            .hybrid,
        0.0,
    )?;
    check(
        "hybrid l_b",
        hybrid_loss(&s22, &g22, &cfg(LossVariant::B))
            .unwrap()
            .hybrid,
        bce22,
    )?;
    let sum = bce22 + ssim_loss(&s22, &g22, &p).unwrap() + iou_loss(&s22, &g22).unwrap();
    check(
        "hybrid l_bsi additivity",
        hybrid_loss(&s22, &g22, &cfg(LossVariant::BSI))
            .unwrap()
            .hybrid,
        sum,
    )?;
    let inter = 0.9 + 0.8;
    let union = (0.9 + 0.1 + 0.2 + 0.8) + 2.0 - inter;
    check(
        "iou 2x2 soft",
        iou_loss(&s22, &g22).unwrap(),
        1.0 - inter / union,
    )?;

    // Total over eight outputs.
    let c8 = LossConfig::uniform(LossVariant::BSI, 8);
    let all_g = SideOutputSet::new(vec![g22.clone(); 8]).unwrap();
    check(
        "total outputs=G",
        total_loss(&all_g, &g22, &c8).unwrap().total,
        0.0,
    )?;
    let eight = SideOutputSet::new(vec![s22.clone(); 8]).unwrap();
    let single = hybrid_loss(&s22, &g22, &cfg(LossVariant::BSI))
        .unwrap()
        .hybrid;
    check(
        "total 8 identical",
        total_loss(&eight, &g22, &c8).unwrap().total,
        8.0 * single,
    )?;
    Ok(format!("{n} worked examples within 1e-9"))
}

// ---- 3. background SSIM ----------------------------------------------------

fn background_ssim() -> Check {
    let p = SsimParams::default();
    let w = p.window_weights();
    let zero = vec![0.0; w.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for trial in 0..200 {
        let scale = [1.0, 0.1, 1e-3, 1e-6][trial % 4];
        let x: Vec<f64> = (0..w.len()).map(|_| scale * rng.gen::<f64>()).collect();
        let full = 1.0 - ssim_index(&x, &zero, &w, &p);
        let approx = ssim_background_loss(&x, &w, &p);
        worst = worst.max((full - approx).abs());
    }
    ensure(worst <= 1e-12, || {
        format!("max |full − approx| = {worst:e}")
    })?;
    let z_full = 1.0 - ssim_index(&zero, &zero, &w, &p);
    let z_approx = ssim_background_loss(&zero, &w, &p);
    ensure(z_full == 0.0 && z_approx == 0.0, || {
        format!("all-zero patch: full {z_full:e}, approx {z_approx:e}")
    })?;
    Ok(format!(
        "200 background patches, max diff {worst:.1e}; zero patch gives 0"
    ))
}

// ---- 4. shapes -----------------------------------------------------------

fn shapes() -> Check {
    let images: Vec<_> = (0..2).map(|i| synthetic_scene(288, 288, i).0).collect();
    let refs: Vec<_> = images.iter().collect();
    let input = Normalization::default().batch(&refs).unwrap();
    let mut lines = Vec::new();
    for (arch, want) in [
        (Architecture::EdsRrm(RrmKind::Ours), 8),
        (Architecture::Eds, 7),
        (Architecture::Ed, 1),
    ] {
        let mut net = BasNet::new(&ModelConfig::for_architecture(arch), 0).unwrap();
        let out = net.forward(&input, Mode::Eval).unwrap();
        ensure(out.len() == want, || {
            format!("{}: {} outputs, want {want}", arch.label(), out.len())
        })?;
        for t in &out {
            ensure(t.shape() == [2, 1, 288, 288], || {
                format!("{}: shape {:?}", arch.label(), t.shape())
            })?;
        }
        for maps in split_logits(&out) {
            for z in maps {
                let s = z.sigmoid();
                ensure(s.data().iter().all(|v| *v > 0.0 && *v < 1.0), || {
                    format!("{}: probability outside (0,1)", arch.label())
                })?;
            }
        }
        lines.push(format!("{} {want}", arch.label()));
    }
    Ok(format!(
        "2×3×288×288 batch at full width: {}",
        lines.join(", ")
    ))
}

// ---- 5. zero residual ------------------------------------------------------

fn zero_residual() -> Check {
    let cfg = ModelConfig::default().with_width_divisor(4);
    let mut net = BasNet::new(&cfg, 9).unwrap();
    net.refinement().unwrap().zero_residual();
    let (image, _) = synthetic_scene(64, 64, 2);
    let input = Normalization::default().batch(&[&image]).unwrap();
    let out = net.forward(&input, Mode::Eval).unwrap();
    let maps = split_logits(&out).pop().unwrap();
    let (refined, coarse) = (maps[0].sigmoid(), maps[1].sigmoid());
    let same = refined
        .data()
        .iter()
        .zip(coarse.data())
        .all(|(a, b)| a.to_bits() == b.to_bits());
    ensure(same, || "refined differs from sigmoid(coarse)".into())?;
    ensure(out[0].data == out[1].data, || {
        "refined logits differ from coarse logits".into()
    })?;
    Ok("refined == sigmoid(coarse) bit for bit on a 64×64 input".into())
}

// ---- 6. metrics ----------------------------------------------------------

fn metric_oracles() -> Check {
    let suite = oracles::soft_suite(3, 3, 20, 6);
    let sp = StructureParams::default();
    let bp = BoundaryParams::default();
    let mut worst = [0.0f64; 5];
    let mut cases = 0;
    for g in oracles::all_grids() {
        let gm = g.to_mask();
        for s in &suite {
            cases += 1;
            let oracle_mae = s
                .data()
                .iter()
                .zip(gm.data())
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                / 9.0;
            let diffs = [
                (weighted_fbeta(s, &g).unwrap().unwrap()
                    - oracles::oracle_weighted_fbeta(s, &g).unwrap())
                .abs(),
                (relaxed_boundary_fbeta(s, &g, &bp).unwrap()
                    - oracles::oracle_relaxed(s, &g, bp.rho as f64, bp.threshold))
                .abs(),
                (mae(s, &gm).unwrap() - oracle_mae).abs(),
                (s_measure(s, &g, &sp).unwrap() - oracles::oracle_s_measure(s, &g, sp.lambda))
                    .abs(),
                (e_measure_mean(s, &g).unwrap() - oracles::oracle_e_measure(s, &g)).abs(),
            ];
            for (w, d) in worst.iter_mut().zip(diffs) {
                *w = w.max(d);
            }
        }
        // Ideal values on S = G.
        ensure(mae(&gm, &gm).unwrap() == 0.0, || "MAE(G, G) != 0".into())?;
        close(
            "F^w(G, G)",
            weighted_fbeta(&gm, &g).unwrap().unwrap(),
            1.0,
            1e-9,
        )?;
        close(
            "F^b(G, G)",
            relaxed_boundary_fbeta(&gm, &g, &bp).unwrap(),
            1.0,
            0.0,
        )?;
        close("S(G, G)", s_measure(&gm, &g, &sp).unwrap(), 1.0, 1e-9)?;
        let curve = e_measure_curve(&gm, &g).unwrap();
        ensure(curve[1..].iter().all(|e| (e - 1.0).abs() < 1e-12), || {
            "E(t) != 1 for some t > 0".into()
        })?;
        close(
            "E(G, G)",
            e_measure_mean(&gm, &g).unwrap(),
            e_measure_max(&g),
            1e-12,
        )?;
    }
    for (name, w) in ["F^w", "F^b", "MAE", "S", "E"].iter().zip(worst) {
        ensure(w < 1e-9, || format!("{name}: max oracle difference {w:e}"))?;
    }
    Ok(format!(
        "{cases} (G, S) pairs, max diff {:.1e}; ideal on S=G (E at its ceiling {:.5})",
        worst.iter().cloned().fold(0.0, f64::max),
        e_measure_max(&oracles::grid(3, 3, 1))
    ))
}

// ---- 7. single-pair overfit -------------------------------------------------

const BLOCK: usize = 25;

fn overfit() -> Check {
    let (image, mask) = synthetic_scene(128, 128, 7);
    let mut cfg = OverfitConfig::new(
        ModelConfig::default().with_width_divisor(8),
        LossVariant::BSI,
        2000,
        128,
    );
    cfg.adam.lr = 1e-3;
    cfg.early_stop = Some(EarlyStop {
        mae_below: 0.02,
        fw_beta_above: 0.95,
        check_every: BLOCK,
    });
    let mut res = overfit_single_pair(&image, &mask, &cfg).map_err(|e| e.to_string())?;
    // Boundary quality of the refined map against the coarse one it refines.
    let input = Normalization::default().batch(&[&image]).unwrap();
    let out = res.model.forward(&input, Mode::Eval).unwrap();
    let maps = split_logits(&out).pop().unwrap();
    let g = BinaryMask::threshold(&mask, 0.5);
    let fb = |z: &LogitMap| {
        relaxed_boundary_fbeta(&z.sigmoid(), &g, &BoundaryParams::default()).unwrap()
    };
    let (fb_refined, fb_coarse) = (fb(&maps[0]), fb(&maps[1]));
    let r = &res.report;
    let fw = r.fw_beta.unwrap_or(0.0);
    // Smoothed trend: means over consecutive blocks never rise.
    let blocks: Vec<f64> = res
        .losses
        .chunks(BLOCK)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    let rising = blocks.windows(2).position(|w| w[1] > w[0]);
    ensure(r.mae < 0.02, || {
        format!("MAE {:.4} after {} iterations", r.mae, res.iterations)
    })?;
    ensure(fw > 0.95, || {
        format!("F^w {fw:.4} after {} iterations", res.iterations)
    })?;
    ensure(rising.is_none(), || {
        format!(
            "block-mean loss rises at block {}: {blocks:?}",
            rising.unwrap()
        )
    })?;
    Ok(format!(
        "{} iterations: MAE {:.4}, F^w {:.4}, {}-iteration block means {}; F^b refined {:.4} vs coarse {:.4}",
        res.iterations,
        r.mae,
        fw,
        BLOCK,
        blocks.iter().map(|b| format!("{b:.3}")).collect::<Vec<_>>().join(" > "),
        fb_refined,
        fb_coarse
    ))
}

// ---- 8. determinism --------------------------------------------------------

fn determinism() -> Check {
    let samples: Vec<Sample> = (0..3)
        .map(|i| {
            let (im, m) = synthetic_scene(72, 60, i);
            Sample::new(im, m, format!("s{i}")).unwrap()
        })
        .collect();
    let data = Dataset::from_samples(samples, true);
    let transform = TrainTransform {
        resize: 72,
        crop: 64,
    };
    let first_step = |seed: u64| {
        let dir = tempfile::tempdir().unwrap();
        let mut model = ModelConfig::default().with_width_divisor(32);
        model.prednet.stage_blocks = [1; 6];
        let cfg = TrainConfig {
            model,
            batch_size: 2,
            max_iterations: 1,
            transform,
            out_dir: dir.path().to_path_buf(),
            seed,
            ..TrainConfig::default()
        };
        Trainer::new(cfg, data.clone())
            .unwrap()
            .train_step()
            .unwrap()
            .total
    };
    let (a, b) = (first_step(42), first_step(42));
    ensure(a.to_bits() == b.to_bits(), || {
        format!("first-step loss {a} vs {b}")
    })?;
    let loader = |seed| BatchLoader {
        dataset: data.clone(),
        transform,
        normalization: Normalization::default(),
        batch_size: 2,
        seed,
    };
    let offsets: Vec<_> = (0..6).flat_map(|s| loader(42).crop_offsets(s)).collect();
    let again: Vec<_> = (0..6).flat_map(|s| loader(42).crop_offsets(s)).collect();
    ensure(offsets == again, || {
        "crop offsets differ between runs".into()
    })?;
    ensure(
        loader(42).batch(3).unwrap().input == loader(42).batch(3).unwrap().input,
        || "batch contents differ between runs".into(),
    )?;
    let other: Vec<_> = (0..6).flat_map(|s| loader(43).crop_offsets(s)).collect();
    ensure(other != offsets, || {
        "a different seed gave the same crops".into()
    })?;
    Ok(format!(
        "first-step loss {a:.12} twice; 12 crop offsets identical, e.g. {:?}",
        &offsets[..3]
    ))
}

// ---- 9. service ----------------------------------------------------------

fn png(h: usize, w: usize) -> Vec<u8> {
    let (image, _) = synthetic_scene(h, w, 5);
    let bytes = image
        .data()
        .iter()
        .map(|v| (v * 255.0).round() as u8)
        .collect();
    let rgb = image::RgbImage::from_raw(w as u32, h as u32, bytes).unwrap();
    let mut out = Vec::new();
    rgb.write_to(&mut Cursor::new(&mut out), image::ImageFormat::Png)
        .unwrap();
    out
}

async fn service_round_trip() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ck = dir.path().join("ck");
    BasNet::new(&ModelConfig::default().with_width_divisor(16), 0)
        .and_then(|mut m| m.save(&ck))
        .map_err(|e| e.to_string())?;
    let server = Server::bind(ServiceConfig {
        port: 0,
        model_path: ck,
        storage_root: dir.path().join("storage"),
        input_size: 96,
        max_bytes: 10 << 20,
        pool_size: 2,
        ..ServiceConfig::default()
    })
    .await
    .map_err(|e| e.to_string())?;
    let base = format!("http://{}", server.addr);
    tokio::spawn(server.run());
    let client = reqwest::Client::new();
    let post = |body: Vec<u8>| {
        client
            .post(format!("{base}/v1/remove"))
            .header("content-type", "image/png")
            .body(body)
            .send()
    };

    let r = post(png(75, 110)).await.map_err(|e| e.to_string())?;
    ensure(r.status() == 200, || {
        format!("round trip status {}", r.status())
    })?;
    let out = image::load_from_memory(&r.bytes().await.map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    ensure(matches!(out, image::DynamicImage::ImageRgba8(_)), || {
        format!("output {:?}", out.color())
    })?;
    ensure((out.width(), out.height()) == (110, 75), || {
        format!("output {}×{}", out.width(), out.height())
    })?;

    let inferences = |client: reqwest::Client| {
        let url = format!("{base}/v1/health");
        async move {
            let h = client.get(url).send().await.unwrap().bytes().await.unwrap();
            serde_json::from_slice::<serde_json::Value>(&h).unwrap()["inferences"]
                .as_u64()
                .unwrap()
        }
    };
    let before = inferences(client.clone()).await;
    let r = post(vec![7u8; 50 << 20]).await.map_err(|e| e.to_string())?;
    ensure(r.status() == 413, || {
        format!("50 MB payload got {}", r.status())
    })?;
    let after = inferences(client.clone()).await;
    ensure(before == after, || {
        format!("inference ran on the oversized payload ({before} → {after})")
    })?;

    let body = png(64, 64);
    let jobs: Vec<_> = (0..4)
        .map(|_| {
            let (client, body, url) = (client.clone(), body.clone(), format!("{base}/v1/remove"));
            tokio::spawn(async move {
                let r = client
                    .post(url)
                    .header("content-type", "image/png")
                    .body(body)
                    .send()
                    .await
                    .unwrap();
                r.bytes().await.unwrap()
            })
        })
        .collect();
    let mut outs = Vec::new();
    for j in jobs {
        outs.push(j.await.map_err(|e| e.to_string())?);
    }
    ensure(outs.windows(2).all(|w| w[0] == w[1]), || {
        "concurrent responses differ".into()
    })?;
    Ok(format!("110×75 PNG → 110×75 RGBA; 50 MB → 413 with no inference; 4 concurrent responses identical ({} bytes)", outs[0].len()))
}

fn service() -> Check {
    tokio::runtime::Builder::new_multi_thread()
        .worker_threads(4)
        .enable_all()
        .build()
        .map_err(|e| e.to_string())?
        .block_on(service_round_trip())
}

// ---- 10. published numbers ---------------------------------------------------

fn published_numbers() -> Outcome {
    let (Some(ck), Some(root)) = (
        std::env::var_os("BASNET_ECSSD_CHECKPOINT"),
        std::env::var_os("BASNET_ECSSD_ROOT"),
    ) else {
        return Outcome::Skip("set BASNET_ECSSD_CHECKPOINT and BASNET_ECSSD_ROOT to run".into());
    };
    let run = || -> Result<String, String> {
        let root = PathBuf::from(root);
        let (mut model, _) = BasNet::load(&PathBuf::from(ck)).map_err(|e| e.to_string())?;
        let spec = DatasetSpec {
            image_dir: root.join("images"),
            mask_dir: root.join("masks"),
            split: Split::Test,
        };
        let mut samples = Vec::new();
        for pair in scan_pairs(&spec).map_err(|e| e.to_string())? {
            let s = pair.load().map_err(|e| e.to_string())?;
            samples.push((s.image, s.mask));
        }
        let eval = evaluate_model(
            &mut model,
            &samples,
            None,
            320,
            &Normalization::default(),
            &MetricConfig::default(),
        )
        .map_err(|e| e.to_string())?;
        let fw = eval.overall.fw_beta.unwrap_or(0.0);
        let mae = eval.overall.mae;
        ensure(
            (fw - 0.912).abs() <= 0.01 && (mae - 0.034).abs() <= 0.01,
            || format!("F^w {fw:.4} (want 0.912±0.01), MAE {mae:.4} (want 0.034±0.01)"),
        )?;
        Ok(format!(
            "{} images: F^w {fw:.4}, MAE {mae:.4}",
            samples.len()
        ))
    };
    match run() {
        Ok(m) => Outcome::Pass(m),
        Err(m) => Outcome::Fail(m),
    }
}

fn main() {
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("1 gradient correctness", wrap(gradients)),
        ("2 loss value examples", wrap(loss_values)),
        ("3 background SSIM approximation", wrap(background_ssim)),
        ("4 output shapes and ranges", wrap(shapes)),
        ("5 zero-residual identity", wrap(zero_residual)),
        ("6 metric oracle equivalence", wrap(metric_oracles)),
        ("7 single-pair overfit", wrap(overfit)),
        ("8 determinism", wrap(determinism)),
        ("9 service round trip", wrap(service)),
        ("10 published ECSSD numbers", Box::new(published_numbers)),
    ];
    let only: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (name, run) in &criteria {
        if only
            .as_ref()
            .is_some_and(|o| !name.starts_with(&format!("{o} ")))
        {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::Fail(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("[{tag}] criterion {name}: {detail} ({secs:.1}s)");
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn wrap(f: fn() -> Check) -> Box<dyn Fn() -> Outcome> {
    Box::new(move || match f() {
        Ok(m) => Outcome::Pass(m),
        Err(m) => Outcome::Fail(m),
    })
}
