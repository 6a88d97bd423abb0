//! Oracles and fixtures shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use num::{BigInt, BigRational, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rslcad::network::{LayerSpec, Model, NetworkSpec, Padding};
use rslcad::ops::{
    conv_backward, conv_forward, fc_backward, fc_forward, pool_backward, pool_forward, relu, relu_backward,
    softmax_cross_entropy, ConvParams, FcParams, GradCheck, GradCheckReport,
};
use rslcad::harness::{generate_synthetic, SyntheticSpec};
use rslcad::preprocess::{largest_component, mirror_if_right, preprocess_detailed, BinaryMask, GrayImage, Laterality};
use rslcad::rsl::{PiecewiseEpochMap, RslRunLog};
use rslcad::Tensor;

pub const LAYER_TOL: f64 = 1e-4;
pub const NETWORK_TOL: f64 = 1e-3;
pub const GRAD_SEEDS: u64 = 20;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let len = shape.iter().product();
    Tensor::new(shape, (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Finite-difference reports for every layer op at one seed.
///
/// Each op is reduced to `L = Σ r ⊙ op(θ)` with a random fixed `r`, so the
/// op's backward pass with upstream `r` must equal `∂L/∂θ`. ReLU and pooling
/// skip coordinates whose ±ε probes change the active region.
pub fn layer_reports(seed: u64) -> Vec<(&'static str, GradCheckReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let check = GradCheck::default();
    let mut out = Vec::new();

    let pad = (seed % 2) as usize;
    let input = random(&[2, 6, 5], &mut rng);
    let params = ConvParams::new(random(&[3, 2, 3, 3], &mut rng), random(&[3], &mut rng)).unwrap();
    let r = random(conv_forward(&input, &params, pad).unwrap().shape(), &mut rng);
    let (gx, gp) = conv_backward(&input, &params, pad, &r).unwrap();
    let mut theta = params.kernel.data().to_vec();
    out.push((
        "conv kernel",
        check.check(&mut theta, gp.kernel.data(), |t| {
            let p = ConvParams::new(Tensor::new(params.kernel.shape(), t.to_vec()).unwrap(), params.bias.clone()).unwrap();
            dot(&conv_forward(&input, &p, pad).unwrap(), &r)
        }),
    ));
    let mut theta = params.bias.data().to_vec();
    out.push((
        "conv bias",
        check.check(&mut theta, gp.bias.data(), |t| {
            let p = ConvParams::new(params.kernel.clone(), Tensor::new(&[3], t.to_vec()).unwrap()).unwrap();
            dot(&conv_forward(&input, &p, pad).unwrap(), &r)
        }),
    ));
    let mut theta = input.data().to_vec();
    out.push((
        "conv input",
        check.check(&mut theta, gx.data(), |t| {
            dot(&conv_forward(&Tensor::new(input.shape(), t.to_vec()).unwrap(), &params, pad).unwrap(), &r)
        }),
    ));

    let window = if seed.is_multiple_of(2) { (2, 2) } else { (3, 3) };
    let input = random(&[2, 7, 8], &mut rng);
    let (y, index) = pool_forward(&input, window).unwrap();
    let r = random(y.shape(), &mut rng);
    let gx = pool_backward(&index, &r).unwrap();
    let mut theta = input.data().to_vec();
    out.push((
        "max pool input",
        check.check_piecewise(&mut theta, gx.data(), |t| {
            let (y, idx) = pool_forward(&Tensor::new(input.shape(), t.to_vec()).unwrap(), window).unwrap();
            (dot(&y, &r), idx.argmax().to_vec())
        }),
    ));

    let input = random(&[3, 4, 4], &mut rng);
    let r = random(input.shape(), &mut rng);
    let gx = relu_backward(&input, &r).unwrap();
    let mut theta = input.data().to_vec();
    out.push((
        "relu input",
        check.check_piecewise(&mut theta, gx.data(), |t| {
            let x = Tensor::new(input.shape(), t.to_vec()).unwrap();
            (dot(&relu(&x), &r), t.iter().map(|&v| v > 0.0).collect::<Vec<_>>())
        }),
    ));

    let input = random(&[4, 2, 2], &mut rng);
    let params = FcParams::new(random(&[5, 16], &mut rng), random(&[5], &mut rng)).unwrap();
    let r = random(&[5], &mut rng);
    let (gx, gp) = fc_backward(&input, &params, &r).unwrap();
    let mut theta = params.weights.data().to_vec();
    out.push((
        "fc weights",
        check.check(&mut theta, gp.weights.data(), |t| {
            let p = FcParams::new(Tensor::new(&[5, 16], t.to_vec()).unwrap(), params.bias.clone()).unwrap();
            dot(&fc_forward(&input, &p).unwrap(), &r)
        }),
    ));
    let mut theta = params.bias.data().to_vec();
    out.push((
        "fc bias",
        check.check(&mut theta, gp.bias.data(), |t| {
            let p = FcParams::new(params.weights.clone(), Tensor::new(&[5], t.to_vec()).unwrap()).unwrap();
            dot(&fc_forward(&input, &p).unwrap(), &r)
        }),
    ));
    let mut theta = input.data().to_vec();
    out.push((
        "fc input",
        check.check(&mut theta, gx.data(), |t| {
            dot(&fc_forward(&Tensor::new(input.shape(), t.to_vec()).unwrap(), &params).unwrap(), &r)
        }),
    ));

    let logits = Tensor::new(&[2], vec![rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)]).unwrap();
    let label = (seed % 2) as usize;
    let grad = softmax_cross_entropy(&logits, label).unwrap().logit_grad;
    let mut theta = logits.data().to_vec();
    out.push((
        "softmax cross-entropy",
        check.check(&mut theta, grad.data(), |t| {
            softmax_cross_entropy(&Tensor::new(&[2], t.to_vec()).unwrap(), label).unwrap().loss
        }),
    ));
    out
}

/// Conv/pool/conv/pool/FC/FC stack on 12×12 inputs; small enough to
/// finite-difference every parameter.
pub fn tiny_network() -> NetworkSpec {
    NetworkSpec::new(
        vec![
            LayerSpec::conv(3, 3),
            LayerSpec::pool(2),
            LayerSpec::conv(3, 4),
            LayerSpec::pool(2),
            LayerSpec::fc(3),
            LayerSpec::fc(2),
            LayerSpec::Loss,
        ],
        (12, 12),
        Padding::Valid,
    )
    .unwrap()
}

/// Whole-network check of the loss gradient over every parameter. Probes
/// that flip any ReLU or pooling decision are skipped.
pub fn network_report(seed: u64) -> (GradCheckReport, usize) {
    let model = Model::new(tiny_network(), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
    let image = Tensor::new(&[1, 12, 12], (0..144).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
    let label = (seed % 2) as usize;
    let (_, grads, _) = model.loss_and_gradients(&image, label).unwrap();
    let mut probe = model.clone();
    let mut theta = model.flat_params();
    let report = GradCheck::default().check_piecewise(&mut theta, &grads.flatten(), |t| {
        probe.set_flat_params(t).unwrap();
        let loss = probe.loss_and_gradients(&image, label).unwrap().0;
        (loss, probe.activation_pattern(&image).unwrap())
    });
    (report, model.param_count())
}

/// Exhaustive Otsu in exact rationals: for every level t, the between-class
/// variance w0·w1·(μ0 − μ1)² of the split {≤ t} / {> t}; first maximum wins.
pub fn otsu_oracle(hist: &[u64; 256]) -> Option<u8> {
    let total: u64 = hist.iter().sum();
    let r = |x: u64| BigRational::from_integer(BigInt::from(x));
    let n = r(total);
    let mut best: Option<(u8, BigRational)> = None;
    for t in 0..256 {
        let (mut n0, mut s0, mut s1) = (0u64, 0u64, 0u64);
        for (v, &c) in hist.iter().enumerate() {
            if v <= t {
                n0 += c;
                s0 += v as u64 * c;
            } else {
                s1 += v as u64 * c;
            }
        }
        let n1 = total - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let diff = r(s0) / r(n0) - r(s1) / r(n1);
        let var = (r(n0) / n.clone()) * (r(n1) / n.clone()) * diff.clone() * diff;
        if var.is_zero() {
            continue;
        }
        if best.as_ref().is_none_or(|(_, b)| var > *b) {
            best = Some((t as u8, var));
        }
    }
    best.map(|(t, _)| t)
}

pub fn random_histogram(rng: &mut ChaCha8Rng) -> [u64; 256] {
    let mut hist = [0u64; 256];
    match rng.gen_range(0..4) {
        // Dense noise.
        0 => hist.iter_mut().for_each(|c| *c = rng.gen_range(0..1000)),
        // A handful of occupied levels: flat stretches and ties.
        1 => {
            for _ in 0..rng.gen_range(1..6) {
                hist[rng.gen_range(0..256)] += rng.gen_range(1..50);
            }
        }
        // Two-mode, mammogram-like.
        2 => {
            for _ in 0..5000 {
                let centre = if rng.gen_bool(0.4) { 20.0 } else { 150.0 };
                let v: f64 = centre + rng.gen_range(-15.0..15.0);
                hist[v.clamp(0.0, 255.0) as usize] += 1;
            }
        }
        // Large counts, to exercise the wide integer path.
        _ => {
            for _ in 0..rng.gen_range(2..20) {
                hist[rng.gen_range(0..256)] += rng.gen_range(1..5_000_000);
            }
        }
    }
    hist
}

/// 8-connected components in scan order of their first pixel, by
/// depth-first flood fill.
pub fn components(mask: &BinaryMask) -> Vec<Vec<(usize, usize)>> {
    let (w, h) = (mask.width(), mask.height());
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    for y0 in 0..h {
        for x0 in 0..w {
            if !mask.get(x0, y0) || seen[y0 * w + x0] {
                continue;
            }
            let mut stack = vec![(x0, y0)];
            let mut comp = Vec::new();
            seen[y0 * w + x0] = true;
            while let Some((x, y)) = stack.pop() {
                comp.push((x, y));
                for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                    for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                        if mask.get(nx, ny) && !seen[ny * w + nx] {
                            seen[ny * w + nx] = true;
                            stack.push((nx, ny));
                        }
                    }
                }
            }
            out.push(comp);
        }
    }
    out
}

pub fn random_mask(rng: &mut ChaCha8Rng) -> BinaryMask {
    let (w, h) = (rng.gen_range(1..20), rng.gen_range(1..20));
    let density = rng.gen_range(0.0..0.7);
    BinaryMask::new(w, h, (0..w * h).map(|_| rng.gen_bool(density)).collect()).unwrap()
}

pub fn random_image(rng: &mut ChaCha8Rng) -> GrayImage {
    let (w, h) = (rng.gen_range(1..24), rng.gen_range(1..24));
    let lat = if rng.gen_bool(0.5) { Laterality::Right } else { Laterality::Left };
    GrayImage::new(w, h, (0..w * h).map(|_| rng.gen()).collect(), lat).unwrap()
}

/// Mirroring twice is the identity; `mirror_if_right` flips exactly the
/// right-laterality images and is idempotent.
pub fn check_mirror(img: &GrayImage) -> Result<(), String> {
    if img.flip_horizontal().flip_horizontal() != *img {
        return Err("double flip changed the image".into());
    }
    let once = mirror_if_right(img);
    if img.laterality == Laterality::Right {
        if once.flip_horizontal().pixels() != img.pixels() {
            return Err("right image was not flipped".into());
        }
        if mirror_if_right(&once) != once {
            return Err("mirroring a mirrored image changed it".into());
        }
    } else if once != *img {
        return Err("non-right image was modified".into());
    }
    Ok(())
}

/// The kept region is a subset of the mask and equals the first
/// maximum-size component found by the flood-fill oracle.
pub fn check_largest_component(mask: &BinaryMask) -> Result<(), String> {
    let components = components(mask);
    match largest_component(mask) {
        Err(_) if components.is_empty() => Ok(()),
        Err(e) => Err(format!("failed on a non-empty mask: {e}")),
        Ok(_) if components.is_empty() => Err("returned a region for an empty mask".into()),
        Ok((kept, bbox)) => {
            if !kept.is_subset_of(mask) {
                return Err("kept region is not a subset of the mask".into());
            }
            let best = components.iter().map(Vec::len).max().unwrap();
            let expected = components.iter().find(|c| c.len() == best).unwrap();
            if kept.count() != expected.len() || expected.iter().any(|&(x, y)| !kept.get(x, y)) {
                return Err(format!("kept {} pixels, expected the {}-pixel component", kept.count(), best));
            }
            if Some(bbox) != kept.bounding_box() {
                return Err("bounding box does not enclose the kept region".into());
            }
            Ok(())
        }
    }
}

/// Segmentation IoU against generator ground truth for `count` images
/// (half per class).
pub fn segmentation_ious(seed: u64, count: usize) -> Vec<f64> {
    let spec = SyntheticSpec { seed, ..SyntheticSpec::default() };
    generate_synthetic(&spec, count / 2)
        .unwrap()
        .iter()
        .map(|s| {
            let out = preprocess_detailed(&s.image, (64, 64)).unwrap();
            // The detected region lives in the mirrored frame.
            let truth = if out.mirrored { s.mask.flip_horizontal() } else { s.mask.clone() };
            out.region.iou(&truth).unwrap()
        })
        .collect()
}

/// Every scheduler invariant, checked epoch by epoch: C within the batch
/// error range, remedial steps for exactly the batches strictly above C with
/// the map's count, and the update-pass accounting.
pub fn check_log(log: &RslRunLog, batches: usize, map: &PiecewiseEpochMap) -> Result<(), String> {
    let (mut remedial_total, mut passes_total) = (0, 0);
    for (i, r) in log.records.iter().enumerate() {
        let fail = |what: String| Err(format!("epoch {}: {what}", r.epoch));
        if r.epoch != i + 1 {
            return fail(format!("expected epoch {}", i + 1));
        }
        if r.report.batch_count() != batches {
            return fail(format!("{} batch errors for {batches} batches", r.report.batch_count()));
        }
        let lo = r.report.errors.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = r.report.errors.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(lo <= r.threshold.c && r.threshold.c <= hi) {
            return fail(format!("C = {} outside [{lo}, {hi}]", r.threshold.c));
        }

        let expected: Vec<(usize, u32)> = r
            .report
            .errors
            .iter()
            .enumerate()
            .filter(|(_, &e)| e > r.threshold.c)
            .map(|(b, &e)| (b, map.epochs_for(e - r.threshold.c)))
            .filter(|&(_, n)| n > 0)
            .collect();
        let got: Vec<(usize, u32)> = r.remedial.iter().map(|a| (a.batch, a.epochs)).collect();
        if got != expected {
            return fail(format!("remedial assignments {got:?}, expected {expected:?}"));
        }

        let sum: u64 = r.remedial.iter().map(|a| u64::from(a.epochs)).sum();
        remedial_total += sum;
        passes_total += r.update_passes;
        if r.remedial_epochs != sum || r.update_passes != batches as u64 + sum {
            return fail(format!(
                "{} remedial / {} passes recorded, expected {sum} / {}",
                r.remedial_epochs,
                r.update_passes,
                batches as u64 + sum
            ));
        }
        if r.cumulative_remedial_epochs != remedial_total || r.cumulative_update_passes != passes_total {
            return fail("cumulative counters drifted".into());
        }
    }
    Ok(())
}
