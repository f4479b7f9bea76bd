//! Plain supervised classification over every fabric of a dataset, with a
//! stratified train/validation split.

use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::augment::augment_rotations;
use crate::classifier::{ClassifierConfig, ClassifierError, ConvClassifier, ProbabilisticClassifier};
use crate::dataset::Dataset;
use crate::engine::Augmentation;
use crate::image::TextureImage;
use crate::rng;

pub type LabelledImages = Vec<(TextureImage, usize)>;

#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedParams {
    /// Share of every fabric held out for validation.
    pub validation_fraction: f64,
    pub epochs: usize,
    /// Applied to training images only.
    pub augmentation: Augmentation,
    pub seed: u64,
}

impl Default for SupervisedParams {
    fn default() -> Self {
        Self { validation_fraction: 0.2, epochs: 30, augmentation: Augmentation::Off, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub validation_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedReport {
    pub train_size: usize,
    pub validation_size: usize,
    pub epochs: Vec<EpochRecord>,
}

/// Labels are fabric indices. Every fabric with at least two images keeps
/// at least one image on each side of the split.
pub fn split_dataset(dataset: &Dataset, validation_fraction: f64, seed: u64) -> (LabelledImages, LabelledImages) {
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (label, fabric) in dataset.fabrics().iter().enumerate() {
        let mut order: Vec<usize> = (0..fabric.images.len()).collect();
        order.shuffle(&mut rng::stream(seed, &[rng::tag("split"), label as u64]));
        let n = order.len();
        let n_val =
            if n < 2 { 0 } else { libm::round(validation_fraction * n as f64).clamp(1.0, (n - 1) as f64) as usize };
        for (rank, &i) in order.iter().enumerate() {
            let item = (fabric.images[i].clone(), label);
            if rank < n_val {
                val.push(item);
            } else {
                train.push(item);
            }
        }
    }
    (train, val)
}

pub fn run_supervised(
    dataset: &Dataset,
    config: &ClassifierConfig,
    params: &SupervisedParams,
) -> Result<SupervisedReport, ClassifierError> {
    if !(0.0..1.0).contains(&params.validation_fraction) {
        return Err(ClassifierError::Param("validation_fraction must lie in [0, 1)".into()));
    }
    let mut config = config.clone();
    config.input_shape = (dataset.height(), dataset.width(), dataset.channels());
    config.num_classes = dataset.fabrics().len();
    let mut classifier = ConvClassifier::new(config, rng::derive_seed(params.seed, &[rng::tag("init")]))?;

    let (mut train, val) = split_dataset(dataset, params.validation_fraction, params.seed);
    if let Augmentation::Rotations { copies, range } = params.augmentation {
        let mut aug_rng = rng::stream(params.seed, &[rng::tag("augment")]);
        let extra: LabelledImages = train
            .iter()
            .flat_map(|(img, label)| {
                augment_rotations(img, copies, range, &mut aug_rng).into_iter().map(move |a| (a, *label))
            })
            .collect();
        train.extend(extra);
    }

    let mut train_rng = rng::stream(params.seed, &[rng::tag("train")]);
    let mut epochs = Vec::with_capacity(params.epochs);
    for epoch in 1..=params.epochs {
        let stats = classifier.train_epochs(&train, 1, &mut train_rng)?;
        let validation_accuracy = if val.is_empty() { f64::NAN } else { classifier.evaluate(&val)?.1 };
        epochs.push(EpochRecord {
            epoch,
            train_loss: stats.final_loss,
            train_accuracy: stats.final_train_accuracy,
            validation_accuracy,
        });
    }
    Ok(SupervisedReport { train_size: train.len(), validation_size: val.len(), epochs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, SyntheticClassParams};

    #[test]
    fn split_is_stratified_and_disjoint() {
        let classes = [SyntheticClassParams::grating(0.0, 3.0), SyntheticClassParams::grating(90.0, 3.0)];
        let ds = generate_synthetic(&classes, 10, (8, 8), 1).unwrap();
        let (train, val) = split_dataset(&ds, 0.3, 5);
        assert_eq!((train.len(), val.len()), (14, 6));
        for label in 0..2 {
            assert_eq!(val.iter().filter(|(_, l)| *l == label).count(), 3);
        }
        for (v, _) in &val {
            assert!(train.iter().all(|(t, _)| t.image_id != v.image_id));
        }
        assert_eq!(split_dataset(&ds, 0.3, 5), (train, val));
    }

    #[test]
    fn separable_gratings_are_learned() {
        let classes = [
            SyntheticClassParams::grating(0.0, 3.0).with_noise(0.05),
            SyntheticClassParams::grating(90.0, 3.0).with_noise(0.05),
        ];
        let ds = generate_synthetic(&classes, 12, (16, 16), 2).unwrap();
        let config = ClassifierConfig {
            input_shape: (16, 16, 1),
            conv_channels: alloc::vec![4],
            dense_hidden_units: 16,
            ..Default::default()
        };
        let report = run_supervised(&ds, &config, &SupervisedParams { epochs: 25, ..Default::default() }).unwrap();
        assert_eq!(report.epochs.len(), 25);
        assert_eq!(report.epochs.last().unwrap().validation_accuracy, 1.0);
    }
}
