//! Breast-region extraction and input normalization.
//!
//! The pipeline mirrors right-breast images so every breast sits on the
//! left, segments the image with a global Otsu threshold, keeps the largest
//! 8-connected component, and crops its bounding box to the network's fixed
//! input size.

mod image;
pub mod pgm;
mod segment;

pub use image::{BinaryMask, BoundingBox, GrayImage, Laterality};
pub use segment::{largest_component, otsu_threshold, threshold_segment, MAX_OTSU_PIXELS};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Flips right-breast images so the breast lies on the left and relabels
/// them `Left`. Left and unknown images pass through unchanged.
pub fn mirror_if_right(image: &GrayImage) -> GrayImage {
    match image.laterality {
        Laterality::Right => image.flip_horizontal().with_laterality(Laterality::Left),
        Laterality::Unknown => {
            log::info!("image laterality unknown; not mirrored");
            image.clone()
        }
        Laterality::Left => image.clone(),
    }
}

/// Crops `bbox`, resizes bilinearly to `target` = (height, width), and scales
/// intensities by 1/255. The result has shape (1, height, width).
///
/// Sample positions use pixel-center alignment:
/// `src = (dst + 0.5) · (in / out) − 0.5`, clamped to the crop.
pub fn crop_normalize(image: &GrayImage, bbox: BoundingBox, target: (usize, usize)) -> Result<Tensor> {
    let (out_h, out_w) = target;
    if out_h == 0 || out_w == 0 {
        return Err(Error::Domain(format!("target size {out_h}x{out_w} is empty")));
    }
    if !bbox.is_valid_for(image.width(), image.height()) {
        return Err(Error::Domain(format!(
            "crop box {bbox:?} is degenerate or outside the {}x{} image",
            image.width(),
            image.height()
        )));
    }
    let (in_w, in_h) = (bbox.width(), bbox.height());
    let xs = sample_positions(in_w, out_w);
    let ys = sample_positions(in_h, out_h);
    let px = |x: usize, y: usize| image.get(bbox.x0 + x, bbox.y0 + y) as f64;

    let mut out = Vec::with_capacity(out_h * out_w);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let top = px(x0, y0) * (1.0 - fx) + px(x1, y0) * fx;
            let bottom = px(x0, y1) * (1.0 - fx) + px(x1, y1) * fx;
            out.push((top * (1.0 - fy) + bottom * fy) / 255.0);
        }
    }
    Tensor::new(&[1, out_h, out_w], out)
}

/// For each output index: the two source indices and the weight of the second.
fn sample_positions(input: usize, output: usize) -> Vec<(usize, usize, f64)> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|i| {
            let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (input - 1) as f64);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(input - 1);
            (lo, hi, src - lo as f64)
        })
        .collect()
}

/// Every intermediate product of [`preprocess_pipeline`].
#[derive(Clone, Debug)]
pub struct Preprocessed {
    /// Normalized (1, H, W) network input.
    pub tensor: Tensor,
    /// The image after mirroring, in whose frame `region` and `bbox` live.
    pub oriented: GrayImage,
    pub mirrored: bool,
    /// Largest foreground component.
    pub region: BinaryMask,
    pub bbox: BoundingBox,
}

/// Mirror, segment, keep the largest component, then crop and normalize.
/// Errors carry the name of the stage that failed.
pub fn preprocess_detailed(image: &GrayImage, target: (usize, usize)) -> Result<Preprocessed> {
    let mirrored = image.laterality == Laterality::Right;
    let oriented = mirror_if_right(image);
    let mask = threshold_segment(&oriented).map_err(|e| e.context("threshold stage"))?;
    let (region, bbox) = largest_component(&mask).map_err(|e| e.context("component stage"))?;
    let tensor = crop_normalize(&oriented, bbox, target).map_err(|e| e.context("crop stage"))?;
    Ok(Preprocessed {
        tensor,
        oriented,
        mirrored,
        region,
        bbox,
    })
}

pub fn preprocess_pipeline(image: &GrayImage, target: (usize, usize)) -> Result<Tensor> {
    Ok(preprocess_detailed(image, target)?.tensor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn right_image_is_flipped_and_relabelled() {
        let img = GrayImage::new(2, 2, vec![1, 2, 3, 4], Laterality::Right).unwrap();
        let out = mirror_if_right(&img);
        assert_eq!(out.pixels(), &[2, 1, 4, 3]);
        assert_eq!(out.laterality, Laterality::Left);
        let back = mirror_if_right(&out.with_laterality(Laterality::Right));
        assert_eq!(back.pixels(), img.pixels());
    }

    #[test]
    fn left_and_unknown_pass_through() {
        let img = GrayImage::new(3, 1, vec![9, 8, 7], Laterality::Left).unwrap();
        assert_eq!(mirror_if_right(&img), img);
        let unknown = img.clone().with_laterality(Laterality::Unknown);
        assert_eq!(mirror_if_right(&unknown), unknown);
    }

    #[test]
    fn identity_resize_divides_by_255() {
        let img = GrayImage::new(3, 2, vec![0, 51, 102, 153, 204, 255], Laterality::Left).unwrap();
        let t = crop_normalize(&img, BoundingBox::full(3, 2), (2, 3)).unwrap();
        let expected: Vec<f64> = img.pixels().iter().map(|&p| p as f64 / 255.0).collect();
        assert_eq!(t.shape(), &[1, 2, 3]);
        assert_eq!(t.data(), expected.as_slice());
    }

    #[test]
    fn checkerboard_downscale_averages() {
        let pixels = (0..16).map(|i| if (i % 4 + i / 4) % 2 == 0 { 0 } else { 255 }).collect();
        let img = GrayImage::new(4, 4, pixels, Laterality::Left).unwrap();
        let t = crop_normalize(&img, BoundingBox::full(4, 4), (2, 2)).unwrap();
        // Each output samples the centre of a 2x2 block: two 0s and two 255s.
        assert_eq!(t.data(), &[0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn degenerate_box_is_rejected() {
        let img = GrayImage::filled(4, 4, 0);
        let bad = BoundingBox { x0: 2, y0: 0, x1: 1, y1: 3 };
        assert!(matches!(crop_normalize(&img, bad, (2, 2)), Err(Error::Domain(_))));
        let outside = BoundingBox { x0: 0, y0: 0, x1: 4, y1: 3 };
        assert!(crop_normalize(&img, outside, (2, 2)).is_err());
    }

    #[test]
    fn constant_image_fails_in_component_stage() {
        let err = preprocess_pipeline(&GrayImage::filled(16, 16, 40), (8, 8)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("component stage") && msg.contains("no breast region found"), "{msg}");
    }

    #[test]
    fn upscaled_crop_stays_in_unit_range() {
        let mut img = GrayImage::filled(20, 20, 5);
        for y in 3..12 {
            for x in 0..7 {
                img.set(x, y, 250 - (x * 10) as u8);
            }
        }
        let t = preprocess_pipeline(&img.with_laterality(Laterality::Left), (32, 32)).unwrap();
        assert_eq!(t.shape(), &[1, 32, 32]);
        assert!(t.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
