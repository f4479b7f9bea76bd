//! Probabilistic classifiers over platform labels.
//!
//! [`ConvClassifier`] is the built-in dropout CNN. The trial engine only
//! depends on [`ProbabilisticClassifier`], so other models can be plugged in.

mod checkpoint;
mod config;
mod gemm;
mod gradcheck;
mod network;

use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::image::TextureImage;
use crate::rng::StreamRng;

pub use checkpoint::CHECKPOINT_MAGIC;
pub use config::{ClassifierConfig, InitRule};
pub use gradcheck::{GradCheckOptions, GradCheckReport, TensorCheck};
pub use network::{softmax, ConvClassifier, DropoutMask, LayerKind, TensorInfo};

/// Tolerance on the sum of a probability vector.
pub const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifierError {
    #[error("invalid classifier configuration: {0}")]
    Param(String),
    #[error("input shape {found:?} does not match expected {expected:?}")]
    InputShape { expected: (usize, usize, usize), found: (usize, usize, usize) },
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("training diverged (non-finite loss) in epoch {epoch}")]
    NumericalDivergence { epoch: usize },
    #[error("classifier was invalidated by an earlier divergence")]
    Invalidated,
    #[error("training set is empty")]
    EmptyBatch,
    #[error("reference set is empty")]
    EmptyReference,
    #[error("reference images must share one fabric id")]
    MixedReference,
    #[error("probability vector is not a distribution: {0}")]
    NotADistribution(String),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
}

/// One probability vector over class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveSample {
    probs: Vec<f64>,
}

impl PredictiveSample {
    /// Validates nonnegativity and unit sum within [`SUM_TOLERANCE`].
    pub fn new(probs: Vec<f64>) -> Result<Self, ClassifierError> {
        if probs.is_empty() {
            return Err(ClassifierError::NotADistribution("empty".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(ClassifierError::NotADistribution(alloc::format!("{probs:?}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(ClassifierError::NotADistribution(alloc::format!("sum {sum}")));
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Augmented copies of the reference touches.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSet {
    images: Vec<TextureImage>,
}

impl ReferenceSet {
    pub fn new(images: Vec<TextureImage>) -> Result<Self, ClassifierError> {
        let first = images.first().ok_or(ClassifierError::EmptyReference)?;
        if images.iter().any(|i| i.fabric_id != first.fabric_id) {
            return Err(ClassifierError::MixedReference);
        }
        Ok(Self { images })
    }

    pub fn images(&self) -> &[TextureImage] {
        &self.images
    }

    pub fn n_ref(&self) -> usize {
        self.images.len()
    }

    pub fn extend(&mut self, images: impl IntoIterator<Item = TextureImage>) -> Result<(), ClassifierError> {
        for img in images {
            if img.fabric_id != self.images[0].fabric_id {
                return Err(ClassifierError::MixedReference);
            }
            self.images.push(img);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainStats {
    /// Cross-entropy over the whole sample set after the last epoch, dropout off.
    pub final_loss: f64,
    /// Accuracy over the whole sample set after the last epoch, dropout off.
    pub final_train_accuracy: f64,
    /// Mean minibatch loss observed during each epoch, dropout on.
    pub epoch_losses: Vec<f64>,
}

/// Interface the trial engine needs from a classifier.
pub trait ProbabilisticClassifier {
    fn num_classes(&self) -> usize;

    /// Runs `epochs` further passes over `samples`, continuing from the
    /// current parameters.
    fn train_epochs(
        &mut self,
        samples: &[(TextureImage, usize)],
        epochs: usize,
        rng: &mut StreamRng,
    ) -> Result<TrainStats, ClassifierError>;

    /// Forward pass with dropout disabled.
    fn predict_deterministic(&self, image: &TextureImage) -> Result<PredictiveSample, ClassifierError>;

    /// `n_mc` forward passes, each under an independently sampled dropout mask.
    fn predict_mc(
        &self,
        image: &TextureImage,
        n_mc: usize,
        rng: &mut StreamRng,
    ) -> Result<Vec<PredictiveSample>, ClassifierError>;

    /// Restores the initial parameters (used when retraining from scratch).
    fn reinitialize(&mut self);
}

/// Averages deterministic predictions over the reference set and returns the
/// argmax (lowest index on ties) together with the mean vector.
pub fn predict_reference<C: ProbabilisticClassifier + ?Sized>(
    classifier: &C,
    reference: &ReferenceSet,
) -> Result<(usize, Vec<f64>), ClassifierError> {
    if reference.images.is_empty() {
        return Err(ClassifierError::EmptyReference);
    }
    let mut mean = alloc::vec![0.0; classifier.num_classes()];
    for img in &reference.images {
        let sample = classifier.predict_deterministic(img)?;
        for (m, p) in mean.iter_mut().zip(sample.probs()) {
            *m += p;
        }
    }
    let n = reference.images.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok((crate::acquisition::argmax_first(&mean), mean))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ImageSource;
    use alloc::vec;

    /// Returns a fixed probability row per image, keyed by the first pixel.
    struct TableClassifier(Vec<Vec<f64>>);

    impl ProbabilisticClassifier for TableClassifier {
        fn num_classes(&self) -> usize {
            self.0[0].len()
        }
        fn train_epochs(
            &mut self,
            _: &[(TextureImage, usize)],
            _: usize,
            _: &mut StreamRng,
        ) -> Result<TrainStats, ClassifierError> {
            unreachable!()
        }
        fn predict_deterministic(&self, image: &TextureImage) -> Result<PredictiveSample, ClassifierError> {
            Ok(PredictiveSample { probs: self.0[image.pixels[0] as usize].clone() })
        }
        fn predict_mc(
            &self,
            image: &TextureImage,
            n: usize,
            _: &mut StreamRng,
        ) -> Result<Vec<PredictiveSample>, ClassifierError> {
            Ok(vec![self.predict_deterministic(image)?; n])
        }
        fn reinitialize(&mut self) {}
    }

    fn refs(n: usize) -> ReferenceSet {
        ReferenceSet::new(
            (0..n)
                .map(|k| TextureImage::new(vec![k as f64], 1, 1, 1, "ref", "r", ImageSource::File { path: "r".into() }))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_reference_argmax() {
        let c = TableClassifier(vec![vec![0.1, 0.2, 0.6, 0.1]]);
        let (label, mean) = predict_reference(&c, &refs(1)).unwrap();
        assert_eq!(label, 2);
        assert_eq!(mean, vec![0.1, 0.2, 0.6, 0.1]);
    }

    #[test]
    fn tie_breaks_to_lowest_label() {
        let c = TableClassifier(vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 0.0, 0.0, 1.0]]);
        let (label, mean) = predict_reference(&c, &refs(2)).unwrap();
        assert_eq!(label, 0);
        assert_eq!(mean, vec![0.5, 0.0, 0.0, 0.5]);
    }

    #[test]
    fn ten_copy_table_matches_direct_summation() {
        // hand-fixed table; oracle sums columns in a separate loop order
        let table: Vec<Vec<f64>> = vec![
            vec![0.10, 0.40, 0.30, 0.20],
            vec![0.25, 0.25, 0.25, 0.25],
            vec![0.05, 0.60, 0.15, 0.20],
            vec![0.30, 0.30, 0.20, 0.20],
            vec![0.40, 0.10, 0.10, 0.40],
            vec![0.20, 0.50, 0.10, 0.20],
            vec![0.70, 0.10, 0.10, 0.10],
            vec![0.15, 0.35, 0.35, 0.15],
            vec![0.10, 0.20, 0.30, 0.40],
            vec![0.22, 0.28, 0.26, 0.24],
        ];
        let mut oracle = [0.0f64; 4];
        for class in 0..4 {
            let mut s = 0.0;
            for row in table.iter().rev() {
                s += row[class];
            }
            oracle[class] = s / 10.0;
        }
        // column sums 2.47, 3.08, 2.11, 2.34
        assert!((oracle[1] - 0.308).abs() < 1e-12);
        let c = TableClassifier(table);
        let (label, mean) = predict_reference(&c, &refs(10)).unwrap();
        assert_eq!(label, 1);
        for (m, o) in mean.iter().zip(oracle) {
            assert!((m - o).abs() < 1e-12);
        }
        // argmax is invariant under positive rescaling of the returned vector
        let scaled: Vec<f64> = mean.iter().map(|m| m * 7.5).collect();
        assert_eq!(crate::acquisition::argmax_first(&scaled), label);
    }

    #[test]
    fn reference_validation() {
        assert_eq!(ReferenceSet::new(vec![]), Err(ClassifierError::EmptyReference));
        let a = TextureImage::new(vec![0.0], 1, 1, 1, "a", "a", ImageSource::File { path: "a".into() });
        let b = TextureImage::new(vec![0.0], 1, 1, 1, "b", "b", ImageSource::File { path: "b".into() });
        assert_eq!(ReferenceSet::new(vec![a, b]), Err(ClassifierError::MixedReference));
    }

    #[test]
    fn sample_validation() {
        assert!(PredictiveSample::new(vec![0.5, 0.5]).is_ok());
        assert!(PredictiveSample::new(vec![0.5, 0.6]).is_err());
        assert!(PredictiveSample::new(vec![1.5, -0.5]).is_err());
        assert!(PredictiveSample::new(vec![f64::NAN, 1.0]).is_err());
    }
}
