//! Seven-segment clock digits, their test-time transforms and context masks.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::task::ImageObservation;

/// Side length of every digit image.
pub const IMAGE_SIZE: usize = 64;
/// Vertical extent of an untransformed glyph.
pub const GLYPH_HEIGHT: usize = 56;
const GLYPH_WIDTH: usize = 30;
const STROKE: usize = 6;

/// Segment order is `a b c d e f g`: top, upper right, lower right, bottom,
/// lower left, upper left, middle.
const SEGMENTS: [[bool; 7]; 10] = [
    [true, true, true, true, true, true, false],
    [false, true, true, false, false, false, false],
    [true, true, false, true, true, false, true],
    [true, true, true, true, false, false, true],
    [false, true, true, false, false, true, true],
    [true, false, true, true, false, true, true],
    [true, false, true, true, true, true, true],
    [true, true, true, false, false, false, false],
    [true; 7],
    [true, true, true, true, false, true, true],
];

/// Rectangles `(row0, row1, col0, col1)` in glyph coordinates.
fn segment_rect(s: usize) -> (usize, usize, usize, usize) {
    let (h, w, t) = (GLYPH_HEIGHT, GLYPH_WIDTH, STROKE);
    let mid = (h - t) / 2;
    match s {
        0 => (0, t, 0, w),
        1 => (0, mid + t, w - t, w),
        2 => (mid, h, w - t, w),
        3 => (h - t, h, 0, w),
        4 => (mid, h, 0, t),
        5 => (0, mid + t, 0, t),
        6 => (mid, mid + t, 0, w),
        _ => unreachable!(),
    }
}

/// Number of lit segments of `label`.
pub fn lit_segments(label: u8) -> usize {
    SEGMENTS[label as usize].iter().filter(|&&on| on).count()
}

/// A single-channel `64 x 64` image, row-major, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DigitImage {
    pub pixels: Vec<f64>,
    pub label: u8,
    pub scale: f64,
    /// Radians, counter-clockwise.
    pub angle: f64,
}

impl DigitImage {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * IMAGE_SIZE + col]
    }

    /// Rows `(first, last)` holding a pixel brighter than `threshold`.
    pub fn row_extent(&self, threshold: f64) -> Option<(usize, usize)> {
        let rows: Vec<usize> = (0..IMAGE_SIZE)
            .filter(|&r| (0..IMAGE_SIZE).any(|c| self.get(r, c) > threshold))
            .collect();
        Some((*rows.first()?, *rows.last()?))
    }

    /// Columns `(first, last)` holding a pixel brighter than `threshold`.
    pub fn col_extent(&self, threshold: f64) -> Option<(usize, usize)> {
        let cols: Vec<usize> = (0..IMAGE_SIZE)
            .filter(|&c| (0..IMAGE_SIZE).any(|r| self.get(r, c) > threshold))
            .collect();
        Some((*cols.first()?, *cols.last()?))
    }

    /// Glyph height in pixels, counting pixels above half intensity.
    pub fn glyph_height(&self) -> usize {
        self.row_extent(0.5).map_or(0, |(a, b)| b - a + 1)
    }

    pub fn observe(&self, mask: Vec<f64>) -> Result<ImageObservation> {
        ImageObservation::new(1, IMAGE_SIZE, IMAGE_SIZE, self.pixels.clone(), mask)
    }
}

/// Rasterises `label` white on black, glyph vertically and horizontally
/// centred.
pub fn render_digit(label: u8) -> Result<DigitImage> {
    if label > 9 {
        return Err(Error::Domain(format!("digit label {label} is not in 0..=9")));
    }
    let on = SEGMENTS[label as usize];
    let rects: Vec<_> = (0..7).filter(|&s| on[s]).map(segment_rect).collect();
    let c0 = rects.iter().map(|r| r.2).min().unwrap();
    let c1 = rects.iter().map(|r| r.3).max().unwrap();
    let top = (IMAGE_SIZE - GLYPH_HEIGHT) / 2;
    let left = (IMAGE_SIZE - (c1 - c0)) / 2;
    let mut pixels = vec![0.0; IMAGE_SIZE * IMAGE_SIZE];
    for (r0, r1, a, b) in rects {
        for r in r0..r1 {
            for c in a..b {
                pixels[(top + r) * IMAGE_SIZE + left + c - c0] = 1.0;
            }
        }
    }
    Ok(DigitImage {
        pixels,
        label,
        scale: 1.0,
        angle: 0.0,
    })
}

/// All ten untransformed digits.
pub fn digit_set() -> Vec<DigitImage> {
    (0..10).map(|d| render_digit(d).unwrap()).collect()
}

fn sample_bilinear(img: &[f64], row: f64, col: f64) -> f64 {
    let n = IMAGE_SIZE as isize;
    let (r0, c0) = (row.floor(), col.floor());
    let (fr, fc) = (row - r0, col - c0);
    let (r0, c0) = (r0 as isize, c0 as isize);
    let at = |r: isize, c: isize| {
        if r < 0 || c < 0 || r >= n || c >= n {
            0.0
        } else {
            img[(r * n + c) as usize]
        }
    };
    (1.0 - fr) * ((1.0 - fc) * at(r0, c0) + fc * at(r0, c0 + 1))
        + fr * ((1.0 - fc) * at(r0 + 1, c0) + fc * at(r0 + 1, c0 + 1))
}

/// Scales by `scale` and rotates by `angle` radians (counter-clockwise) about
/// the image centre. Each output pixel is sampled bilinearly from the inverse
/// image of its centre; sources off the canvas read as background.
pub fn transform_image(img: &DigitImage, scale: f64, angle: f64) -> Result<DigitImage> {
    if !(scale > 0.0) || !scale.is_finite() || !angle.is_finite() {
        return Err(Error::Domain(format!(
            "transform needs a positive scale and finite angle, got {scale} and {angle}"
        )));
    }
    let centre = (IMAGE_SIZE as f64 - 1.0) / 2.0;
    let (sin, cos) = angle.sin_cos();
    let mut pixels = vec![0.0; IMAGE_SIZE * IMAGE_SIZE];
    for r in 0..IMAGE_SIZE {
        for c in 0..IMAGE_SIZE {
            // y points up
            let x = c as f64 - centre;
            let y = centre - r as f64;
            let xs = (cos * x + sin * y) / scale;
            let ys = (-sin * x + cos * y) / scale;
            let v = sample_bilinear(&img.pixels, centre - ys, xs + centre);
            pixels[r * IMAGE_SIZE + c] = v.clamp(0.0, 1.0);
        }
    }
    Ok(DigitImage {
        pixels,
        label: img.label,
        scale: img.scale * scale,
        angle: img.angle + angle,
    })
}

/// Which test-time transforms are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformMode {
    None,
    Scale,
    Rotate,
    Both,
}

/// Range of test transforms: scale in `[0.15, 0.5]`, angle in `[-90, 90]`
/// degrees.
pub const TEST_SCALE_RANGE: [f64; 2] = [0.15, 0.5];
pub const TEST_ANGLE_RANGE_DEG: [f64; 2] = [-90.0, 90.0];

/// Draws `(scale, angle)` for `mode`; components that are off stay at identity.
pub fn random_transform<R: Rng + ?Sized>(mode: TransformMode, rng: &mut R) -> (f64, f64) {
    let scale = match mode {
        TransformMode::Scale | TransformMode::Both => {
            rng.random_range(TEST_SCALE_RANGE[0]..=TEST_SCALE_RANGE[1])
        }
        _ => 1.0,
    };
    let angle = match mode {
        TransformMode::Rotate | TransformMode::Both => rng
            .random_range(TEST_ANGLE_RANGE_DEG[0]..=TEST_ANGLE_RANGE_DEG[1])
            .to_radians(),
        _ => 0.0,
    };
    (scale, angle)
}

/// Range of the per-image context rate.
pub const MASK_RATE_RANGE: [f64; 2] = [0.01, 0.5];

/// i.i.d. Bernoulli(`rate`) mask over the pixels.
pub fn bernoulli_mask<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::Domain(format!("mask rate {rate} is not in [0, 1]")));
    }
    Ok((0..IMAGE_SIZE * IMAGE_SIZE)
        .map(|_| if rng.random::<f64>() < rate { 1.0 } else { 0.0 })
        .collect())
}

/// Masks `img` with a rate drawn from `U(0.01, 0.5)`; every pixel is a target.
pub fn sample_image_task<R: Rng + ?Sized>(img: &DigitImage, rng: &mut R) -> Result<ImageObservation> {
    let rate = rng.random_range(MASK_RATE_RANGE[0]..MASK_RATE_RANGE[1]);
    img.observe(bernoulli_mask(rate, rng)?)
}

/// Masks `img` at a fixed context rate.
pub fn image_task_with_rate<R: Rng + ?Sized>(
    img: &DigitImage,
    rate: f64,
    rng: &mut R,
) -> Result<ImageObservation> {
    img.observe(bernoulli_mask(rate, rng)?)
}
