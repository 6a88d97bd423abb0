//! Global Otsu thresholding and 8-connected component selection.

use std::cmp::Ordering;
use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::preprocess::image::{BinaryMask, BoundingBox, GrayImage};

/// Otsu's threshold over a 256-bin histogram.
///
/// Every level `t` splits the histogram into `<= t` and `> t`; the returned
/// level maximizes the between-class variance, with ties going to the lowest
/// level. Returns `None` when no split has positive variance (fewer than two
/// occupied levels).
///
/// Between-class variance for a split with `n0` pixels summing to `s0`, out
/// of `n` pixels summing to `s`, is proportional to
/// `(n·s0 − n0·s)² / (n0·(n − n0))`. Splits are compared in exact integer
/// arithmetic so near-ties cannot flip on rounding; this is exact for up to
/// [`MAX_OTSU_PIXELS`] pixels.
pub fn otsu_threshold(histogram: &[u64; 256]) -> Option<u8> {
    let n: u64 = histogram.iter().sum();
    assert!(n <= MAX_OTSU_PIXELS, "histogram holds {n} pixels, more than {MAX_OTSU_PIXELS}");
    let s: u128 = histogram.iter().enumerate().map(|(v, &c)| v as u128 * c as u128).sum();

    let mut best: Option<(u8, Score)> = None;
    let (mut n0, mut s0) = (0u64, 0u128);
    for (t, &count) in histogram.iter().enumerate() {
        n0 += count;
        s0 += t as u128 * count as u128;
        if n0 == 0 || n0 == n {
            continue;
        }
        let diff = (n as i128) * (s0 as i128) - (n0 as i128) * (s as i128);
        let score = Score {
            numerator: diff.unsigned_abs().pow(2),
            denominator: n0 as u128 * (n - n0) as u128,
        };
        if score.numerator == 0 {
            continue;
        }
        if best.as_ref().is_none_or(|(_, b)| score.cmp(b) == Ordering::Greater) {
            best = Some((t as u8, score));
        }
    }
    best.map(|(t, _)| t)
}

/// Largest histogram mass [`otsu_threshold`] accepts (2^28 pixels).
pub const MAX_OTSU_PIXELS: u64 = 1 << 28;

/// Non-negative rational `numerator / denominator`.
#[derive(Clone, Copy, Debug)]
struct Score {
    numerator: u128,
    denominator: u128,
}

impl Score {
    fn cmp(&self, other: &Score) -> Ordering {
        let (q1, r1) = (self.numerator / self.denominator, self.numerator % self.denominator);
        let (q2, r2) = (other.numerator / other.denominator, other.numerator % other.denominator);
        // Remainders are below their denominators (< 2^64 each), so the
        // cross products fit in u128.
        q1.cmp(&q2).then_with(|| (r1 * other.denominator).cmp(&(r2 * self.denominator)))
    }
}

/// Foreground is every pixel strictly brighter than the Otsu level. A
/// constant image has no level and yields an empty mask.
pub fn threshold_segment(image: &GrayImage) -> Result<BinaryMask> {
    if image.is_empty() {
        return Err(Error::Domain("cannot segment a zero-area image".into()));
    }
    if image.pixels().len() as u64 > MAX_OTSU_PIXELS {
        return Err(Error::Domain(format!(
            "{}x{} image exceeds the {MAX_OTSU_PIXELS}-pixel segmentation limit",
            image.width(),
            image.height()
        )));
    }
    let (w, h) = (image.width(), image.height());
    let Some(level) = otsu_threshold(&image.histogram()) else {
        return Ok(BinaryMask::empty(w, h));
    };
    BinaryMask::new(w, h, image.pixels().iter().map(|&p| p > level).collect())
}

/// Keeps only the largest 8-connected foreground component.
///
/// Equal-sized components are ranked by their first pixel in row-major
/// scan order; the earliest wins.
pub fn largest_component(mask: &BinaryMask) -> Result<(BinaryMask, BoundingBox)> {
    let (w, h) = (mask.width(), mask.height());
    let bits = mask.bits();
    let mut label = vec![0u32; bits.len()];
    let mut sizes: Vec<usize> = vec![0];
    let mut queue = VecDeque::new();

    for start in 0..bits.len() {
        if !bits[start] || label[start] != 0 {
            continue;
        }
        let id = sizes.len() as u32;
        let mut size = 0;
        label[start] = id;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if bits[j] && label[j] == 0 {
                        label[j] = id;
                        queue.push_back(j);
                    }
                }
            }
        }
        sizes.push(size);
    }

    // Labels are issued in scan order, so the first maximum is the tie winner.
    let winner = (1..sizes.len())
        .fold(None::<usize>, |best, id| match best {
            Some(b) if sizes[b] >= sizes[id] => Some(b),
            _ => Some(id),
        })
        .ok_or_else(|| Error::Domain("no breast region found".into()))? as u32;

    let kept = BinaryMask::new(w, h, label.iter().map(|&l| l == winner).collect())?;
    let bbox = kept.bounding_box().expect("winning component is non-empty");
    Ok((kept, bbox))
}
