//! Engine for active texture recognition from tactile images.
//!
//! A trial places one reference fabric and four comparison fabrics on five
//! platforms. The agent touches every platform once, trains a small dropout
//! CNN that maps comparison touches to platform labels, and then spends each
//! further round touching the platform chosen by an acquisition strategy
//! (random, MC-dropout variance, MC-dropout entropy, or none at all for the
//! touch-once baseline). The reference is recognised as the platform with the
//! highest averaged class probability over its rotated copies.
//!
//! The crate is `no_std` and only needs `alloc`. File IO, configuration and
//! the command line live in the companion `active-texture` crate.
#![no_std]
#![forbid(unsafe_op_in_unsafe_fn)]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod acquisition;
pub mod augment;
pub mod classifier;
pub mod dataset;
pub mod engine;
pub mod image;
pub mod metrics;
pub mod rng;
pub mod supervised;

pub use acquisition::{acquisition_scores, argmax_first, AcquisitionError, AcquisitionScores};
pub use augment::{augment_rotations, rotate_image, RotationRange};
pub use classifier::{
    predict_reference, ClassifierConfig, ClassifierError, ConvClassifier, InitRule, PredictiveSample,
    ProbabilisticClassifier, ReferenceSet, TrainStats,
};
pub use dataset::{
    generate_synthetic, Dataset, DatasetError, DatasetOrigin, Fabric, SyntheticClassParams, Touch, TouchSampler,
};
pub use engine::{
    run_trial, run_trial_observed, run_trial_with, select_next, Augmentation, EngineError, EngineParams, Platform,
    RetrainMode, RoundMetrics, StrategyKind, TouchRecord, TrialObserver, TrialResult, TrialSpec,
};
pub use image::{ImageSource, TextureImage};
pub use metrics::{
    compare_strategies, confusion_from_outcomes, confusion_matrix, exploration_profile, fabric_universe, js_distance,
    mean_std, most_touched_equals_prediction, summarize, summarize_rounds, summarize_values, ConfusionMatrix,
    Explorable, ExplorationProfile, HumanLog, MetricKind, MetricsError, ProfileSource, RoundValues, SummaryRow,
    VisitEvent,
};
pub use supervised::{run_supervised, split_dataset, EpochRecord, SupervisedParams, SupervisedReport};
