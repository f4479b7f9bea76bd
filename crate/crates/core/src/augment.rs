//! Rotation augmentation with bilinear resampling.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::image::{ImageSource, TextureImage};
use crate::rng::StreamRng;

/// Distribution of augmentation angles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RotationRange {
    /// Uniform on `[0, 360)` degrees.
    Full,
    /// Uniform on `[-d, +d]` degrees.
    Symmetric(f64),
}

impl RotationRange {
    pub fn sample(&self, rng: &mut StreamRng) -> f64 {
        match *self {
            RotationRange::Full => rng.random_range(0.0..360.0),
            RotationRange::Symmetric(d) if d > 0.0 => rng.random_range(-d..=d),
            RotationRange::Symmetric(_) => 0.0,
        }
    }
}

/// Mean that is exact for constant buffers.
fn stable_mean(values: &[f64]) -> f64 {
    match values.first() {
        None => 0.0,
        Some(&first) => first + values.iter().map(|v| v - first).sum::<f64>() / values.len() as f64,
    }
}

/// Rotates every channel by `angle_degrees` (counter-clockwise in image
/// coordinates) about the image center. Pixels that map outside the source
/// frame take the channel's mean intensity.
pub fn rotate_image(image: &TextureImage, angle_degrees: f64) -> TextureImage {
    let (h, w) = (image.height, image.width);
    let theta = angle_degrees.to_radians();
    let (s, c) = (libm::sin(theta), libm::cos(theta));
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let max_x = w as f64 - 1.0;
    let max_y = h as f64 - 1.0;

    let mut pixels = Vec::with_capacity(image.pixels.len());
    for ch in 0..image.channels {
        let plane = image.plane(ch);
        let fill = stable_mean(plane);
        for y in 0..h {
            let dy = y as f64 - cy;
            for x in 0..w {
                let dx = x as f64 - cx;
                // inverse map: output pixel -> source coordinate
                let sx = c * dx + s * dy + cx;
                let sy = -s * dx + c * dy + cy;
                let value = if sx < -1e-9 || sy < -1e-9 || sx > max_x + 1e-9 || sy > max_y + 1e-9 {
                    fill
                } else {
                    bilinear(plane, w, h, sx.clamp(0.0, max_x), sy.clamp(0.0, max_y))
                };
                pixels.push(value.clamp(0.0, 1.0));
            }
        }
    }
    TextureImage::new(
        pixels,
        h,
        w,
        image.channels,
        image.fabric_id.clone(),
        format!("{}@{:.6}", image.image_id, angle_degrees),
        ImageSource::Augmented { parent_id: image.image_id.clone(), angle_degrees },
    )
}

fn bilinear(plane: &[f64], w: usize, h: usize, x: f64, y: f64) -> f64 {
    let x0 = (libm::floor(x) as usize).min(w.saturating_sub(2));
    let y0 = (libm::floor(y) as usize).min(h.saturating_sub(2));
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let at = |yy: usize, xx: usize| plane[yy * w + xx];
    let top = at(y0, x0) + fx * (at(y0, x1) - at(y0, x0));
    let bottom = at(y1, x0) + fx * (at(y1, x1) - at(y1, x0));
    top + fy * (bottom - top)
}

/// Returns exactly `copies` rotated versions of `image`; the original is not
/// among them. Each angle is drawn independently from `range`.
pub fn augment_rotations(
    image: &TextureImage,
    copies: usize,
    range: RotationRange,
    rng: &mut StreamRng,
) -> Vec<TextureImage> {
    (0..copies).map(|_| rotate_image(image, range.sample(rng))).collect()
}
