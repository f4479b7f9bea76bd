use alloc::string::String;
use alloc::vec::Vec;

use crate::dataset::SyntheticClassParams;

/// Where a tactile image came from.
#[derive(Debug, Clone, PartialEq)]
pub enum ImageSource {
    File { path: String },
    Synthetic { params: SyntheticClassParams, draw_index: u64 },
    Augmented { parent_id: String, angle_degrees: f64 },
}

/// A single tactile observation.
///
/// Pixels are stored channel-major (`c * h * w + y * w + x`) with every
/// intensity in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TextureImage {
    pub pixels: Vec<f64>,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub fabric_id: String,
    /// Unique within a dataset or trial, used as parent id for augmented copies.
    pub image_id: String,
    pub source: ImageSource,
}

impl TextureImage {
    pub fn new(
        pixels: Vec<f64>,
        height: usize,
        width: usize,
        channels: usize,
        fabric_id: impl Into<String>,
        image_id: impl Into<String>,
        source: ImageSource,
    ) -> Self {
        assert_eq!(pixels.len(), height * width * channels, "pixel buffer does not match shape");
        Self { pixels, height, width, channels, fabric_id: fabric_id.into(), image_id: image_id.into(), source }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn plane(&self, channel: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.pixels[channel * n..(channel + 1) * n]
    }

    pub fn mean_intensity(&self) -> f64 {
        if self.pixels.is_empty() {
            return 0.0;
        }
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }

    pub fn in_unit_range(&self) -> bool {
        self.pixels.iter().all(|p| (0.0..=1.0).contains(p))
    }

    /// Rotation angle recorded on an augmented copy.
    pub fn rotation_angle(&self) -> Option<f64> {
        match self.source {
            ImageSource::Augmented { angle_degrees, .. } => Some(angle_degrees),
            _ => None,
        }
    }
}
