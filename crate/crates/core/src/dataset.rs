//! Fabric datasets and the touch-sampling primitive.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::image::{ImageSource, TextureImage};
use crate::rng::{self, StreamRng};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DatasetError {
    #[error("dataset is empty or missing")]
    DatasetEmpty,
    #[error("fabric `{0}` has no images")]
    FabricEmpty(String),
    #[error("fabric `{0}` appears more than once")]
    DuplicateFabric(String),
    #[error("cannot decode image {path}: {reason}")]
    Decode { path: String, reason: String },
    #[error("unknown fabric `{0}`")]
    UnknownFabric(String),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("image {image} has shape {found:?}, dataset expects {expected:?}")]
    ShapeMismatch { image: String, expected: (usize, usize, usize), found: (usize, usize, usize) },
    #[error("image {0} has intensities outside [0, 1]")]
    Range(String),
}

/// Generator parameters for one synthetic fabric: a noisy sinusoidal grating.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticClassParams {
    pub orientation_degrees: f64,
    pub frequency_cycles_per_image: f64,
    /// Maximum absolute phase offset in radians.
    pub phase_jitter: f64,
    pub placement_rotation_jitter_degrees: f64,
    pub noise_sigma: f64,
}

impl SyntheticClassParams {
    pub fn grating(orientation_degrees: f64, frequency_cycles_per_image: f64) -> Self {
        Self {
            orientation_degrees,
            frequency_cycles_per_image,
            phase_jitter: 0.0,
            placement_rotation_jitter_degrees: 0.0,
            noise_sigma: 0.0,
        }
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    pub fn with_rotation_jitter(mut self, degrees: f64) -> Self {
        self.placement_rotation_jitter_degrees = degrees;
        self
    }

    pub fn with_phase_jitter(mut self, radians: f64) -> Self {
        self.phase_jitter = radians;
        self
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let finite = [
            self.orientation_degrees,
            self.frequency_cycles_per_image,
            self.phase_jitter,
            self.placement_rotation_jitter_degrees,
            self.noise_sigma,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(DatasetError::Param("synthetic parameters must be finite".into()));
        }
        if self.frequency_cycles_per_image <= 0.0 {
            return Err(DatasetError::Param(format!("frequency must be > 0, got {}", self.frequency_cycles_per_image)));
        }
        if self.noise_sigma < 0.0 {
            return Err(DatasetError::Param(format!("noise_sigma must be >= 0, got {}", self.noise_sigma)));
        }
        if self.phase_jitter < 0.0 || self.placement_rotation_jitter_degrees < 0.0 {
            return Err(DatasetError::Param("jitters must be >= 0".into()));
        }
        Ok(())
    }

    /// Renders one draw. Consumes randomness only for nonzero jitters and noise.
    pub fn render(&self, height: usize, width: usize, rng: &mut StreamRng) -> Vec<f64> {
        let jitter = self.placement_rotation_jitter_degrees;
        let angle = if jitter > 0.0 {
            self.orientation_degrees + rng.random_range(-jitter..=jitter)
        } else {
            self.orientation_degrees
        };
        let phase =
            if self.phase_jitter > 0.0 { rng.random_range(-self.phase_jitter..=self.phase_jitter) } else { 0.0 };
        let theta = angle.to_radians();
        let (s, c) = (libm::sin(theta), libm::cos(theta));
        let k = 2.0 * PI * self.frequency_cycles_per_image / width as f64;
        let cy = (height as f64 - 1.0) / 2.0;
        let cx = (width as f64 - 1.0) / 2.0;
        let noise = (self.noise_sigma > 0.0).then(|| Normal::new(0.0, self.noise_sigma).expect("validated sigma"));

        let mut out = Vec::with_capacity(height * width);
        for y in 0..height {
            let v = y as f64 - cy;
            for x in 0..width {
                let u = x as f64 - cx;
                let mut value = 0.5 + 0.5 * libm::sin(k * (u * c + v * s) + phase);
                if let Some(n) = &noise {
                    value += n.sample(rng);
                }
                out.push(value.clamp(0.0, 1.0));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fabric {
    pub id: String,
    pub images: Vec<TextureImage>,
    /// Generator for fresh touches, present for synthetic fabrics.
    pub generator: Option<SyntheticClassParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetOrigin {
    Files { root: String },
    Synthetic { seed: u64, n_per_class: usize },
}

/// Immutable collection of tactile images grouped by fabric.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    fabrics: Vec<Fabric>,
    height: usize,
    width: usize,
    channels: usize,
    origin: DatasetOrigin,
}

impl Dataset {
    pub fn new(fabrics: Vec<Fabric>, origin: DatasetOrigin) -> Result<Self, DatasetError> {
        let first = fabrics.iter().flat_map(|f| f.images.first()).next().ok_or(DatasetError::DatasetEmpty)?;
        let expected = first.shape();
        for (i, fabric) in fabrics.iter().enumerate() {
            if fabrics[..i].iter().any(|f| f.id == fabric.id) {
                return Err(DatasetError::DuplicateFabric(fabric.id.clone()));
            }
            if fabric.images.is_empty() {
                return Err(DatasetError::FabricEmpty(fabric.id.clone()));
            }
            for img in &fabric.images {
                if img.shape() != expected {
                    return Err(DatasetError::ShapeMismatch {
                        image: img.image_id.clone(),
                        expected,
                        found: img.shape(),
                    });
                }
                if !img.in_unit_range() {
                    return Err(DatasetError::Range(img.image_id.clone()));
                }
            }
            if let Some(g) = &fabric.generator {
                g.validate()?;
            }
        }
        let (height, width, channels) = expected;
        Ok(Self { fabrics, height, width, channels, origin })
    }

    pub fn fabrics(&self) -> &[Fabric] {
        &self.fabrics
    }

    pub fn fabric(&self, id: &str) -> Option<&Fabric> {
        self.fabrics.iter().find(|f| f.id == id)
    }

    pub fn fabric_index(&self, id: &str) -> Option<usize> {
        self.fabrics.iter().position(|f| f.id == id)
    }

    pub fn fabric_ids(&self) -> impl Iterator<Item = &str> {
        self.fabrics.iter().map(|f| f.id.as_str())
    }

    pub fn sample_counts(&self) -> Vec<(&str, usize)> {
        self.fabrics.iter().map(|f| (f.id.as_str(), f.images.len())).collect()
    }

    pub fn image_count(&self) -> usize {
        self.fabrics.iter().map(|f| f.images.len()).sum()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn origin(&self) -> &DatasetOrigin {
        &self.origin
    }

    /// Largest placement rotation jitter among synthetic generators, if any.
    pub fn max_rotation_jitter(&self) -> Option<f64> {
        self.fabrics.iter().filter_map(|f| f.generator.map(|g| g.placement_rotation_jitter_degrees)).reduce(f64::max)
    }
}

/// Builds a synthetic corpus, fabric ids `fabric_00`, `fabric_01`, ...
///
/// Draw `k` of class `c` is rendered from a stream seeded by `(seed, c, k)`,
/// so the corpus is a pure function of its arguments.
pub fn generate_synthetic(
    classes: &[SyntheticClassParams],
    n_per_class: usize,
    image_size: (usize, usize),
    seed: u64,
) -> Result<Dataset, DatasetError> {
    if classes.is_empty() {
        return Err(DatasetError::Param("at least one class is required".into()));
    }
    if n_per_class == 0 {
        return Err(DatasetError::Param("n_per_class must be >= 1".into()));
    }
    let (height, width) = image_size;
    if height < 2 || width < 2 {
        return Err(DatasetError::Param(format!("image size {height}x{width} is too small")));
    }
    let mut fabrics = Vec::with_capacity(classes.len());
    for (c, params) in classes.iter().enumerate() {
        params.validate()?;
        let id = format!("fabric_{c:02}");
        let images = (0..n_per_class as u64)
            .map(|k| {
                let mut rng = rng::stream(seed, &[c as u64, k]);
                TextureImage::new(
                    params.render(height, width, &mut rng),
                    height,
                    width,
                    1,
                    id.clone(),
                    format!("{id}/{k}"),
                    ImageSource::Synthetic { params: *params, draw_index: k },
                )
            })
            .collect();
        fabrics.push(Fabric { id, images, generator: Some(*params) });
    }
    Dataset::new(fabrics, DatasetOrigin::Synthetic { seed, n_per_class })
}

/// Result of one touch.
#[derive(Debug, Clone, PartialEq)]
pub struct Touch {
    pub image: TextureImage,
    /// Set when a file-backed fabric ran out of unseen images.
    pub reused: bool,
}

/// Per-trial draw state. Owned by exactly one trial.
#[derive(Debug, Clone)]
pub struct TouchSampler<'a> {
    dataset: &'a Dataset,
    unseen: Vec<Vec<usize>>,
    draws: Vec<u64>,
}

impl<'a> TouchSampler<'a> {
    pub fn new(dataset: &'a Dataset) -> Self {
        let unseen = dataset.fabrics.iter().map(|f| (0..f.images.len()).collect()).collect();
        Self { dataset, unseen, draws: alloc::vec![0; dataset.fabrics.len()] }
    }

    /// Draws one observation of `fabric_id`.
    ///
    /// Synthetic fabrics render a fresh draw. File fabrics draw uniformly
    /// without replacement and fall back to drawing with replacement once
    /// every image has been touched in this trial.
    pub fn sample(&mut self, fabric_id: &str, rng: &mut StreamRng) -> Result<Touch, DatasetError> {
        let idx = self.dataset.fabric_index(fabric_id).ok_or_else(|| DatasetError::UnknownFabric(fabric_id.into()))?;
        let fabric = &self.dataset.fabrics[idx];
        let draw = self.draws[idx];
        self.draws[idx] += 1;

        if let Some(params) = &fabric.generator {
            let pixels = params.render(self.dataset.height, self.dataset.width, rng);
            let image = TextureImage::new(
                pixels,
                self.dataset.height,
                self.dataset.width,
                1,
                fabric.id.clone(),
                format!("{}/touch{}", fabric.id, draw),
                ImageSource::Synthetic { params: *params, draw_index: draw },
            );
            return Ok(Touch { image, reused: false });
        }

        let unseen = &mut self.unseen[idx];
        let (image_idx, reused) = if unseen.is_empty() {
            (rng.random_range(0..fabric.images.len()), true)
        } else {
            let pick = rng.random_range(0..unseen.len());
            (unseen.swap_remove(pick), false)
        };
        Ok(Touch { image: fabric.images[image_idx].clone(), reused })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::SeedableRng;

    fn file_dataset(counts: &[usize]) -> Dataset {
        let fabrics = counts
            .iter()
            .enumerate()
            .map(|(f, &n)| {
                let id = format!("f{f}");
                let images = (0..n)
                    .map(|k| {
                        TextureImage::new(
                            vec![k as f64 / 10.0; 4],
                            2,
                            2,
                            1,
                            id.clone(),
                            format!("{id}/{k}"),
                            ImageSource::File { path: format!("{id}/{k}.png") },
                        )
                    })
                    .collect();
                Fabric { id, images, generator: None }
            })
            .collect();
        Dataset::new(fabrics, DatasetOrigin::Files { root: "mem".into() }).unwrap()
    }

    #[test]
    fn rejects_empty_fabric_and_empty_dataset() {
        let mut ds = file_dataset(&[2, 1]);
        let mut fabrics = ds.fabrics.clone();
        fabrics.push(Fabric { id: "empty".into(), images: vec![], generator: None });
        assert_eq!(Dataset::new(fabrics, ds.origin.clone()), Err(DatasetError::FabricEmpty("empty".into())));
        assert_eq!(Dataset::new(vec![], ds.origin.clone()), Err(DatasetError::DatasetEmpty));
        ds.fabrics[1].id = "f0".into();
        assert!(matches!(Dataset::new(ds.fabrics, ds.origin), Err(DatasetError::DuplicateFabric(_))));
    }

    #[test]
    fn file_touches_exhaust_then_reuse() {
        let ds = file_dataset(&[3]);
        let mut sampler = TouchSampler::new(&ds);
        let mut rng = StreamRng::seed_from_u64(5);
        let mut seen: Vec<String> = (0..3)
            .map(|_| {
                let t = sampler.sample("f0", &mut rng).unwrap();
                assert!(!t.reused);
                t.image.image_id
            })
            .collect();
        seen.sort();
        assert_eq!(seen, ["f0/0", "f0/1", "f0/2"]);
        let fourth = sampler.sample("f0", &mut rng).unwrap();
        assert!(fourth.reused);
        assert!(seen.contains(&fourth.image.image_id));
    }

    #[test]
    fn unknown_fabric() {
        let ds = file_dataset(&[1]);
        let mut rng = StreamRng::seed_from_u64(0);
        assert_eq!(TouchSampler::new(&ds).sample("nope", &mut rng), Err(DatasetError::UnknownFabric("nope".into())));
    }

    #[test]
    fn synthetic_touches_replay_under_seed() {
        let classes = [SyntheticClassParams::grating(30.0, 4.0).with_noise(0.1).with_rotation_jitter(5.0)];
        let ds = generate_synthetic(&classes, 1, (8, 8), 1).unwrap();
        let pair = |seed| {
            let mut sampler = TouchSampler::new(&ds);
            let mut rng = StreamRng::seed_from_u64(seed);
            let a = sampler.sample("fabric_00", &mut rng).unwrap().image;
            let b = sampler.sample("fabric_00", &mut rng).unwrap().image;
            (a, b)
        };
        let (a1, b1) = pair(3);
        let (a2, b2) = pair(3);
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);
        assert_ne!(a1.pixels, b1.pixels);
    }

    #[test]
    fn zero_randomness_draws_are_identical() {
        let classes = [SyntheticClassParams::grating(10.0, 3.0)];
        let ds = generate_synthetic(&classes, 2, (16, 16), 42).unwrap();
        let imgs = &ds.fabrics()[0].images;
        assert_eq!(imgs[0].pixels, imgs[1].pixels);
    }

    #[test]
    fn generation_is_deterministic_and_validated() {
        let classes = [
            SyntheticClassParams::grating(0.0, 5.0).with_noise(0.2).with_phase_jitter(1.0),
            SyntheticClassParams::grating(60.0, 5.0).with_noise(0.2),
        ];
        let a = generate_synthetic(&classes, 3, (12, 10), 11).unwrap();
        let b = generate_synthetic(&classes, 3, (12, 10), 11).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.height(), a.width(), a.channels()), (12, 10, 1));
        assert!(a.fabrics().iter().flat_map(|f| &f.images).all(TextureImage::in_unit_range));

        let bad = [SyntheticClassParams::grating(0.0, 0.0)];
        assert!(matches!(generate_synthetic(&bad, 1, (8, 8), 0), Err(DatasetError::Param(_))));
        let bad = [SyntheticClassParams::grating(0.0, 1.0).with_noise(-0.1)];
        assert!(matches!(generate_synthetic(&bad, 1, (8, 8), 0), Err(DatasetError::Param(_))));
        assert!(matches!(generate_synthetic(&classes, 0, (8, 8), 0), Err(DatasetError::Param(_))));
    }
}
