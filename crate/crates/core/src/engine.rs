//! The trial state machine.
//!
//! Phase 0 touches the reference and each comparison platform once. Every
//! touch is expanded into rotated copies; comparison copies become training
//! samples labelled by platform, reference copies form the reference set.
//! After baseline training, each round selects one comparison platform,
//! touches it, retrains and re-predicts the reference.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;
use thiserror::Error;

use crate::acquisition::{acquisition_scores, argmax_first, AcquisitionError, AcquisitionScores};
use crate::augment::{augment_rotations, RotationRange};
use crate::classifier::{
    predict_reference, ClassifierConfig, ClassifierError, ConvClassifier, PredictiveSample, ProbabilisticClassifier,
    ReferenceSet,
};
use crate::dataset::{Dataset, DatasetError, TouchSampler};
use crate::image::TextureImage;
use crate::rng::{self, StreamRng};

/// Number of comparison platforms.
pub const COMPARISONS: usize = 4;
/// Reference plus comparisons.
pub const OBJECTS: usize = COMPARISONS + 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Acquisition(#[from] AcquisitionError),
    #[error("invalid trial spec: {0}")]
    InvalidSpec(String),
    #[error("strategy {0} does not select platforms")]
    StrategyMisuse(StrategyKind),
    #[error("internal error: {0}")]
    Internal(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StrategyKind {
    Random,
    Variance,
    Entropy,
    /// You Only Touch Once: predict right after the initial five touches.
    Yoto,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [Self::Variance, Self::Entropy, Self::Random, Self::Yoto];

    pub fn name(self) -> &'static str {
        match self {
            Self::Random => "random",
            Self::Variance => "variance",
            Self::Entropy => "entropy",
            Self::Yoto => "yoto",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "random" | "rand" => Ok(Self::Random),
            "variance" | "var" => Ok(Self::Variance),
            "entropy" | "entr" => Ok(Self::Entropy),
            "yoto" => Ok(Self::Yoto),
            other => Err(format!("unknown strategy `{other}`")),
        }
    }
}

/// One of the five touchable objects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Platform {
    Reference,
    /// Comparison platform `1..=4`.
    Comparison(usize),
}

impl Platform {
    /// 0 for the reference, 1..=4 for comparisons.
    pub fn object_index(self) -> usize {
        match self {
            Self::Reference => 0,
            Self::Comparison(p) => p,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSpec {
    pub reference_fabric: String,
    /// Fabrics on platforms 1..=4, in order.
    pub comparison_fabrics: [String; COMPARISONS],
    pub max_rounds: usize,
    pub seed: u64,
}

impl TrialSpec {
    pub fn new(reference: impl Into<String>, comparisons: [&str; COMPARISONS], max_rounds: usize, seed: u64) -> Self {
        Self { reference_fabric: reference.into(), comparison_fabrics: comparisons.map(String::from), max_rounds, seed }
    }

    /// Platform (1..=4) that holds the reference fabric.
    pub fn correct_platform(&self) -> Option<usize> {
        self.comparison_fabrics.iter().position(|f| *f == self.reference_fabric).map(|i| i + 1)
    }

    /// Exactly one comparison must equal the reference. Distractors may repeat.
    pub fn validate(&self) -> Result<(), EngineError> {
        let matches = self.comparison_fabrics.iter().filter(|f| **f == self.reference_fabric).count();
        if matches != 1 {
            return Err(EngineError::InvalidSpec(format!(
                "reference `{}` appears on {matches} comparison platforms, expected exactly 1",
                self.reference_fabric
            )));
        }
        Ok(())
    }

    fn fabric_on(&self, platform: Platform) -> &str {
        match platform {
            Platform::Reference => &self.reference_fabric,
            Platform::Comparison(p) => &self.comparison_fabrics[p - 1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Augmentation {
    /// Use each raw touch image once, unrotated.
    Off,
    Rotations {
        copies: usize,
        range: RotationRange,
    },
}

impl Augmentation {
    pub fn copies(&self) -> usize {
        match self {
            Self::Off => 1,
            Self::Rotations { copies, .. } => *copies,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RetrainMode {
    /// Continue training the current parameters every round.
    WarmStart,
    /// Re-initialise every round and train for the cumulative epoch budget.
    FromScratch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineParams {
    pub epochs_baseline: usize,
    pub epochs_per_round: usize,
    pub augmentation: Augmentation,
    pub n_mc: usize,
    pub retrain: RetrainMode,
}

impl Default for EngineParams {
    fn default() -> Self {
        Self {
            epochs_baseline: 10,
            epochs_per_round: 10,
            augmentation: Augmentation::Rotations { copies: 10, range: RotationRange::Full },
            n_mc: 30,
            retrain: RetrainMode::WarmStart,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TouchRecord {
    /// 0 for the initial phase.
    pub round: usize,
    pub platform: Platform,
    pub image_id: String,
    pub augmented_ids: Vec<String>,
    pub reused: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundMetrics {
    pub round: usize,
    /// Predicted platform, 1..=4.
    pub predicted: usize,
    pub correct: bool,
    pub train_accuracy: f64,
    pub train_loss: f64,
    /// Variance score averaged over platforms.
    pub mean_variance: f64,
    /// Entropy score summed over platforms.
    pub mean_entropy: f64,
    pub mean_probs: Vec<f64>,
    /// Platform touched in this round; `None` for the baseline and for YOTO.
    pub touched: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub spec: TrialSpec,
    pub strategy: StrategyKind,
    /// State after phase 0 (round 0).
    pub baseline: RoundMetrics,
    /// Rounds `1..=max_rounds`. YOTO repeats its baseline in every row.
    pub rounds: Vec<RoundMetrics>,
    pub touches: Vec<TouchRecord>,
    /// Index 0 is the reference, 1..=4 the comparison platforms.
    pub touch_counts: [usize; OBJECTS],
    pub final_prediction: usize,
    pub total_epochs: usize,
    pub training_pool_size: usize,
    pub reference_set_size: usize,
    pub n_mc: usize,
}

impl TrialResult {
    pub fn final_correct(&self) -> bool {
        self.rounds.last().unwrap_or(&self.baseline).correct
    }

    /// Number of active rounds actually executed (0 for YOTO).
    pub fn rounds_executed(&self) -> usize {
        self.touches.iter().filter(|t| t.round > 0).count()
    }
}

/// Callbacks for inspecting intermediate quantities of a trial.
pub trait TrialObserver {
    fn on_predictive_sample(&mut self, _sample: &PredictiveSample) {}
    fn on_mean_probs(&mut self, _round: usize, _probs: &[f64]) {}
    fn on_selection(&mut self, _round: usize, _platform: usize, _scores: &AcquisitionScores) {}
    fn on_training(&mut self, _round: usize, _epochs: usize, _pool_size: usize) {}
}

impl TrialObserver for () {}

fn choose(strategy: StrategyKind, scores: &AcquisitionScores, rng: &mut StreamRng) -> Result<usize, EngineError> {
    let index = match strategy {
        StrategyKind::Random => rng.random_range(0..COMPARISONS),
        StrategyKind::Variance => argmax_first(&scores.variance),
        StrategyKind::Entropy => argmax_first(&scores.entropy),
        StrategyKind::Yoto => return Err(EngineError::StrategyMisuse(strategy)),
    };
    if index >= COMPARISONS {
        return Err(EngineError::Internal(format!("strategy chose class {index}")));
    }
    Ok(index + 1)
}

fn mc_samples<C: ProbabilisticClassifier + ?Sized>(
    classifier: &C,
    reference: &ReferenceSet,
    n_mc: usize,
    rng: &mut StreamRng,
) -> Result<Vec<Vec<PredictiveSample>>, ClassifierError> {
    reference.images().iter().map(|img| classifier.predict_mc(img, n_mc, rng)).collect()
}

/// Picks the next comparison platform (1..=4) for `strategy`.
///
/// Variance and Entropy score the MC-dropout predictions on every reference
/// image and take the argmax, lowest platform on ties.
pub fn select_next<C: ProbabilisticClassifier + ?Sized>(
    strategy: StrategyKind,
    classifier: &C,
    reference: &ReferenceSet,
    n_mc: usize,
    rng: &mut StreamRng,
) -> Result<usize, EngineError> {
    match strategy {
        StrategyKind::Yoto => Err(EngineError::StrategyMisuse(strategy)),
        StrategyKind::Random => Ok(rng.random_range(0..COMPARISONS) + 1),
        StrategyKind::Variance | StrategyKind::Entropy => {
            let scores = acquisition_scores(&mc_samples(classifier, reference, n_mc, rng)?)?;
            choose(strategy, &scores, rng)
        }
    }
}

/// Builds the default CNN for `dataset` and runs one trial.
pub fn run_trial(
    spec: &TrialSpec,
    dataset: &Dataset,
    strategy: StrategyKind,
    config: &ClassifierConfig,
    params: &EngineParams,
) -> Result<TrialResult, EngineError> {
    run_trial_observed(spec, dataset, strategy, config, params, &mut ())
}

/// [`run_trial`] with an observer attached.
pub fn run_trial_observed(
    spec: &TrialSpec,
    dataset: &Dataset,
    strategy: StrategyKind,
    config: &ClassifierConfig,
    params: &EngineParams,
    observer: &mut dyn TrialObserver,
) -> Result<TrialResult, EngineError> {
    let mut config = config.clone();
    config.input_shape = (dataset.height(), dataset.width(), dataset.channels());
    config.num_classes = COMPARISONS;
    let classifier = ConvClassifier::new(config, rng::derive_seed(spec.seed, &[rng::tag("init")]))?;
    run_trial_with(spec, dataset, strategy, classifier, params, observer)
}

struct Streams {
    touch: StreamRng,
    augment: StreamRng,
    train: StreamRng,
    mc: StreamRng,
    select: StreamRng,
}

impl Streams {
    /// Strategies share every stream except selection, so their initial
    /// phases are identical.
    fn new(seed: u64, strategy: StrategyKind) -> Self {
        Self {
            touch: rng::stream(seed, &[rng::tag("touch")]),
            augment: rng::stream(seed, &[rng::tag("augment")]),
            train: rng::stream(seed, &[rng::tag("train")]),
            mc: rng::stream(seed, &[rng::tag("mc")]),
            select: rng::stream(seed, &[rng::tag("select"), rng::tag(strategy.name())]),
        }
    }
}

fn expand(image: TextureImage, augmentation: &Augmentation, rng: &mut StreamRng) -> Vec<TextureImage> {
    match augmentation {
        Augmentation::Off => alloc::vec![image],
        Augmentation::Rotations { copies, range } => augment_rotations(&image, *copies, *range, rng),
    }
}

/// Runs one trial with a caller-supplied classifier.
pub fn run_trial_with<C: ProbabilisticClassifier>(
    spec: &TrialSpec,
    dataset: &Dataset,
    strategy: StrategyKind,
    mut classifier: C,
    params: &EngineParams,
    observer: &mut dyn TrialObserver,
) -> Result<TrialResult, EngineError> {
    spec.validate()?;
    if classifier.num_classes() != COMPARISONS {
        return Err(EngineError::InvalidSpec(format!(
            "classifier has {} classes, trials need {COMPARISONS}",
            classifier.num_classes()
        )));
    }
    for fabric in core::iter::once(&spec.reference_fabric).chain(&spec.comparison_fabrics) {
        if dataset.fabric(fabric).is_none() {
            return Err(DatasetError::UnknownFabric(fabric.clone()).into());
        }
    }
    if params.augmentation.copies() == 0 {
        return Err(EngineError::InvalidSpec("augmentation needs at least one copy".into()));
    }
    if params.n_mc == 0 {
        return Err(EngineError::InvalidSpec("n_mc must be >= 1".into()));
    }

    let mut streams = Streams::new(spec.seed, strategy);
    let mut sampler = TouchSampler::new(dataset);
    let mut touches = Vec::new();
    let mut touch_counts = [0usize; OBJECTS];
    let mut pool: Vec<(TextureImage, usize)> = Vec::new();
    let mut reference_images = Vec::new();

    let mut touch =
        |platform: Platform, round: usize, streams: &mut Streams| -> Result<Vec<TextureImage>, EngineError> {
            let t = sampler.sample(spec.fabric_on(platform), &mut streams.touch)?;
            let image_id = t.image.image_id.clone();
            let copies = expand(t.image, &params.augmentation, &mut streams.augment);
            let augmented_ids = match params.augmentation {
                Augmentation::Off => Vec::new(),
                Augmentation::Rotations { .. } => copies.iter().map(|c| c.image_id.clone()).collect(),
            };
            touches.push(TouchRecord { round, platform, image_id, augmented_ids, reused: t.reused });
            touch_counts[platform.object_index()] += 1;
            Ok(copies)
        };

    reference_images.extend(touch(Platform::Reference, 0, &mut streams)?);
    for p in 1..=COMPARISONS {
        pool.extend(touch(Platform::Comparison(p), 0, &mut streams)?.into_iter().map(|img| (img, p - 1)));
    }
    let reference = ReferenceSet::new(reference_images)?;

    let mut total_epochs = params.epochs_baseline;
    observer.on_training(0, params.epochs_baseline, pool.len());
    let stats = classifier.train_epochs(&pool, params.epochs_baseline, &mut streams.train)?;
    let (mut metrics, mut scores) = evaluate(
        &classifier,
        &reference,
        spec,
        0,
        (stats.final_train_accuracy, stats.final_loss),
        params.n_mc,
        &mut streams.mc,
        observer,
    )?;
    let baseline = metrics.clone();
    let mut rounds = Vec::with_capacity(spec.max_rounds);

    if strategy == StrategyKind::Yoto {
        rounds.extend((1..=spec.max_rounds).map(|round| RoundMetrics { round, ..baseline.clone() }));
    } else {
        for round in 1..=spec.max_rounds {
            let platform = choose(strategy, &scores, &mut streams.select)?;
            observer.on_selection(round, platform, &scores);
            let copies = touch(Platform::Comparison(platform), round, &mut streams)?;
            pool.extend(copies.into_iter().map(|img| (img, platform - 1)));

            let epochs = match params.retrain {
                RetrainMode::WarmStart => params.epochs_per_round,
                RetrainMode::FromScratch => {
                    classifier.reinitialize();
                    params.epochs_baseline + round * params.epochs_per_round
                }
            };
            observer.on_training(round, epochs, pool.len());
            let stats = classifier.train_epochs(&pool, epochs, &mut streams.train)?;
            total_epochs += epochs;
            (metrics, scores) = evaluate(
                &classifier,
                &reference,
                spec,
                round,
                (stats.final_train_accuracy, stats.final_loss),
                params.n_mc,
                &mut streams.mc,
                observer,
            )?;
            metrics.touched = Some(platform);
            rounds.push(metrics.clone());
        }
    }

    Ok(TrialResult {
        spec: spec.clone(),
        strategy,
        final_prediction: metrics.predicted,
        baseline,
        rounds,
        touches,
        touch_counts,
        total_epochs,
        training_pool_size: pool.len(),
        reference_set_size: reference.n_ref(),
        n_mc: params.n_mc,
    })
}

#[allow(clippy::too_many_arguments)]
fn evaluate<C: ProbabilisticClassifier>(
    classifier: &C,
    reference: &ReferenceSet,
    spec: &TrialSpec,
    round: usize,
    (train_accuracy, train_loss): (f64, f64),
    n_mc: usize,
    rng: &mut StreamRng,
    observer: &mut dyn TrialObserver,
) -> Result<(RoundMetrics, AcquisitionScores), EngineError> {
    let (label, mean_probs) = predict_reference(classifier, reference)?;
    observer.on_mean_probs(round, &mean_probs);
    let samples = mc_samples(classifier, reference, n_mc, rng)?;
    samples.iter().flatten().for_each(|s| observer.on_predictive_sample(s));
    let scores = acquisition_scores(&samples)?;
    let predicted = label + 1;
    let metrics = RoundMetrics {
        round,
        predicted,
        correct: spec.correct_platform() == Some(predicted),
        train_accuracy,
        train_loss,
        mean_variance: scores.mean_variance(),
        mean_entropy: scores.total_entropy(),
        mean_probs,
        touched: None,
    };
    Ok((metrics, scores))
}

impl fmt::Display for Platform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Platform::Reference => f.write_str("reference"),
            Platform::Comparison(p) => f.write_str(&p.to_string()),
        }
    }
}
