//! Synthetic mammogram-like images.
//!
//! Each image is a dark, noisy field with a bright half-ellipse "breast"
//! anchored on the chest-wall edge and a small bright label mark in the
//! opposite corner, which segmentation must ignore. Malignant images add a
//! Gaussian mass and a cluster of bright speckles (the microcalcification
//! analog) inside the breast. Right-breast images are mirrored copies, so the
//! chest wall sits on the right.

use std::ops::RangeInclusive;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::harness::manifest::{DatasetManifest, ManifestEntry, Split};
use crate::preprocess::pgm::write_pgm;
use crate::preprocess::{BinaryMask, GrayImage, Laterality};

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    /// (width, height) in pixels.
    pub image_size: (usize, usize),
    /// Peak brightness the mass adds over the tissue.
    pub mass_intensity: RangeInclusive<f64>,
    /// Gaussian sigma of the mass, in pixels.
    pub mass_radius: RangeInclusive<f64>,
    pub speckle_count: RangeInclusive<usize>,
    /// Standard deviation of the additive Gaussian noise.
    pub background_noise: f64,
    /// Mean brightness at the breast's centre.
    pub tissue_intensity: RangeInclusive<f64>,
    pub background_intensity: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            image_size: (96, 96),
            mass_intensity: 50.0..=90.0,
            mass_radius: 4.0..=7.0,
            speckle_count: 4..=10,
            background_noise: 6.0,
            tissue_intensity: 136.0..=144.0,
            background_intensity: 15.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let (w, h) = self.image_size;
        let range_ok = |r: &RangeInclusive<f64>| r.start().is_finite() && r.end().is_finite() && r.start() <= r.end();
        let problem = if w < 16 || h < 16 {
            Some(format!("image size {w}x{h} is below 16x16"))
        } else if !range_ok(&self.mass_intensity) || *self.mass_intensity.start() <= 0.0 {
            Some(format!("mass intensity range {:?} is invalid", self.mass_intensity))
        } else if !range_ok(&self.mass_radius) || *self.mass_radius.start() <= 0.0 {
            Some(format!("mass radius range {:?} is invalid", self.mass_radius))
        } else if self.speckle_count.start() > self.speckle_count.end() {
            Some(format!("speckle count range {:?} is empty", self.speckle_count))
        } else if !(self.background_noise >= 0.0 && self.background_noise.is_finite()) {
            Some(format!("background noise {} is invalid", self.background_noise))
        } else if !range_ok(&self.tissue_intensity) || *self.tissue_intensity.end() > 255.0 {
            Some(format!("tissue intensity range {:?} is invalid", self.tissue_intensity))
        } else if !(0.0..=255.0).contains(&self.background_intensity) {
            Some(format!("background intensity {} is invalid", self.background_intensity))
        } else {
            None
        };
        problem.map_or(Ok(()), |p| Err(Error::Domain(p)))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticImage {
    pub image: GrayImage,
    pub label: usize,
    /// True breast region, in the same frame as `image`.
    pub mask: BinaryMask,
}

/// `count_per_class` benign and `count_per_class` malignant images, labels
/// alternating 0, 1, 0, …. Image `i` depends only on the seed and `i`.
pub fn generate_synthetic(spec: &SyntheticSpec, count_per_class: usize) -> Result<Vec<SyntheticImage>> {
    generate_range(spec, 0, 2 * count_per_class)
}

fn generate_range(spec: &SyntheticSpec, start: usize, count: usize) -> Result<Vec<SyntheticImage>> {
    spec.validate()?;
    if count == 0 {
        return Err(Error::Domain("synthetic count per class must be at least 1".into()));
    }
    Ok((start..start + count).map(|i| generate_one(spec, i as u64, i % 2)).collect())
}

/// Image number `index` of the stream for `spec.seed`.
pub fn generate_one(spec: &SyntheticSpec, index: u64, label: usize) -> SyntheticImage {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index);
    let (w, h) = spec.image_size;
    let (wf, hf) = (w as f64, h as f64);

    let laterality = if rng.gen_bool(0.5) { Laterality::Left } else { Laterality::Right };
    let semi_x = wf * rng.gen_range(0.40..0.55);
    let semi_y = hf * rng.gen_range(0.38..0.46);
    let centre_y = hf / 2.0 + hf * rng.gen_range(-0.04..0.04);
    let tissue = rng.gen_range(spec.tissue_intensity.clone());
    // Squared normalized elliptical radius of a pixel centre; the chest wall is x = 0.
    let radius2 = |x: f64, y: f64| (x / semi_x).powi(2) + ((y - centre_y) / semi_y).powi(2);

    let mut field = vec![spec.background_intensity; w * h];
    let mut mask = BinaryMask::empty(w, h);
    for y in 0..h {
        for x in 0..w {
            let r2 = radius2(x as f64 + 0.5, y as f64 + 0.5);
            if r2 <= 1.0 {
                field[y * w + x] = tissue * (1.0 - 0.25 * r2);
                mask.set(x, y, true);
            }
        }
    }

    if label == 1 {
        let angle = rng.gen_range(-std::f64::consts::FRAC_PI_2..std::f64::consts::FRAC_PI_2);
        let reach = rng.gen_range(0.0..0.6);
        let (mx, my) = (semi_x * reach * angle.cos(), centre_y + semi_y * reach * angle.sin());
        let amplitude = rng.gen_range(spec.mass_intensity.clone());
        let sigma = rng.gen_range(spec.mass_radius.clone());
        for y in 0..h {
            for x in 0..w {
                let d2 = (x as f64 + 0.5 - mx).powi(2) + (y as f64 + 0.5 - my).powi(2);
                if mask.get(x, y) {
                    field[y * w + x] += amplitude * (-d2 / (2.0 * sigma * sigma)).exp();
                }
            }
        }
        let speckles = rng.gen_range(spec.speckle_count.clone());
        for _ in 0..speckles {
            let sx = (mx + rng.gen_range(-3.0..3.0) * sigma).floor();
            let sy = (my + rng.gen_range(-3.0..3.0) * sigma).floor();
            let boost = rng.gen_range(60.0..100.0);
            for (dx, dy) in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)] {
                let (x, y) = (sx + dx, sy + dy);
                if x >= 0.0 && y >= 0.0 && (x as usize) < w && (y as usize) < h && mask.get(x as usize, y as usize) {
                    field[y as usize * w + x as usize] += boost;
                }
            }
        }
    }

    // Film label mark in the far corner, away from the chest wall.
    let (mark_w, mark_h) = ((w / 8).max(2), (h / 24).max(1));
    let (mark_x, mark_y) = (w - mark_w - w / 24, h / 24);
    for y in mark_y..mark_y + mark_h {
        for x in mark_x..mark_x + mark_w {
            if !mask.get(x, y) {
                field[y * w + x] = 220.0;
            }
        }
    }

    let noise = Normal::new(0.0, spec.background_noise).expect("validated noise level");
    let pixels: Vec<u8> = field
        .iter()
        .map(|&v| (v + noise.sample(&mut rng)).round().clamp(0.0, 255.0) as u8)
        .collect();
    let image = GrayImage::new(w, h, pixels, Laterality::Left).expect("pixel count matches size");
    match laterality {
        Laterality::Right => SyntheticImage {
            image: image.flip_horizontal().with_laterality(Laterality::Right),
            label,
            mask: mask.flip_horizontal(),
        },
        _ => SyntheticImage { image, label, mask },
    }
}

/// Training and validation sets; validation images continue the training
/// stream, so the splits never share an image.
pub fn generate_splits(
    spec: &SyntheticSpec,
    train_per_class: usize,
    val_per_class: usize,
) -> Result<(Vec<SyntheticImage>, Vec<SyntheticImage>)> {
    Ok((
        generate_range(spec, 0, 2 * train_per_class)?,
        generate_range(spec, 2 * train_per_class, 2 * val_per_class)?,
    ))
}

/// Writes a train and a validation split as PGM files under `dir/images`,
/// plus `dir/manifest.csv`, as produced by [`generate_splits`].
pub fn write_synthetic_dataset(
    dir: impl AsRef<Path>,
    spec: &SyntheticSpec,
    train_per_class: usize,
    val_per_class: usize,
) -> Result<DatasetManifest> {
    let dir = dir.as_ref();
    let images_dir = dir.join("images");
    std::fs::create_dir_all(&images_dir).map_err(|e| Error::io(&images_dir, e))?;
    let (train, val) = generate_splits(spec, train_per_class, val_per_class)?;

    let mut entries = Vec::with_capacity(train.len() + val.len());
    let splits = train.iter().map(|s| (s, Split::Train)).chain(val.iter().map(|s| (s, Split::Validation)));
    for (i, (sample, split)) in splits.enumerate() {
        let relative = Path::new("images").join(format!("{split}_{i:05}.pgm"));
        write_pgm(&sample.image, dir.join(&relative))?;
        entries.push(ManifestEntry {
            path: relative,
            label: sample.label,
            laterality: sample.image.laterality,
            split,
        });
    }
    let manifest = DatasetManifest {
        entries,
        base_dir: dir.to_path_buf(),
    };
    manifest.save(dir.join("manifest.csv"))?;
    Ok(manifest)
}
