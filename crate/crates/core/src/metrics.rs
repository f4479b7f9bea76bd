//! Confusion matrices, per-round summaries and exploration-profile analysis.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::engine::{RoundMetrics, TrialResult, TrialSpec, COMPARISONS, OBJECTS};

/// Normalisation slack accepted by [`js_distance`].
pub const INPUT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("not a probability distribution: {0}")]
    Distribution(String),
    #[error("length mismatch: {0} vs {1}")]
    Length(usize, usize),
    #[error("source has no touches or visits")]
    EmptyProfile,
    #[error("profiles are not trial-aligned: {0}")]
    Alignment(String),
    #[error("unknown fabric `{0}`")]
    UnknownFabric(String),
    #[error("no inputs")]
    Empty,
    #[error("invalid human log: {0}")]
    InvalidLog(String),
}

fn check_distribution(p: &[f64]) -> Result<(), MetricsError> {
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(MetricsError::Distribution(format!("{p:?}")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > INPUT_TOLERANCE {
        return Err(MetricsError::Distribution(format!("sums to {sum}")));
    }
    Ok(())
}

fn kl_to_mixture(p: &[f64], m: &[f64]) -> f64 {
    p.iter().zip(m).filter(|(pi, _)| **pi > 0.0).map(|(pi, mi)| pi * libm::log2(pi / mi)).sum()
}

/// Jensen-Shannon distance: the square root of the base-2 Jensen-Shannon
/// divergence. Lies in `[0, 1]`; 0 iff `p == q`, 1 iff the supports are disjoint.
pub fn js_distance(p: &[f64], q: &[f64]) -> Result<f64, MetricsError> {
    if p.len() != q.len() {
        return Err(MetricsError::Length(p.len(), q.len()));
    }
    check_distribution(p)?;
    check_distribution(q)?;
    if p.iter().zip(q).all(|(a, b)| *a == 0.0 || *b == 0.0) {
        return Ok(1.0);
    }
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    let divergence = 0.5 * kl_to_mixture(p, &m) + 0.5 * kl_to_mixture(q, &m);
    Ok(libm::sqrt(divergence.clamp(0.0, 1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileSource {
    RobotTouchCounts,
    HumanTimeFractions,
}

/// Share of attention on the reference (index 0) and comparisons 1..=4.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationProfile {
    pub weights: [f64; OBJECTS],
    pub source: ProfileSource,
}

impl ExplorationProfile {
    pub fn from_amounts(amounts: [f64; OBJECTS], source: ProfileSource) -> Result<Self, MetricsError> {
        let total: f64 = amounts.iter().sum();
        if total <= 0.0 || amounts.iter().any(|a| *a < 0.0 || !a.is_finite()) {
            return Err(MetricsError::EmptyProfile);
        }
        Ok(Self { weights: amounts.map(|a| a / total), source })
    }

    /// Comparison platforms (1..=4) that share the largest weight.
    pub fn most_attended_comparisons(&self) -> Vec<usize> {
        let comps = &self.weights[1..];
        let max = comps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        comps.iter().enumerate().filter(|(_, w)| **w == max).map(|(i, _)| i + 1).collect()
    }
}

/// A source of exploration behaviour: a robot trial or a human log.
pub trait Explorable {
    fn exploration_profile(&self) -> Result<ExplorationProfile, MetricsError>;
    /// Platform (1..=4) finally chosen as the reference match.
    fn final_choice(&self) -> usize;
}

impl Explorable for TrialResult {
    fn exploration_profile(&self) -> Result<ExplorationProfile, MetricsError> {
        ExplorationProfile::from_amounts(self.touch_counts.map(|c| c as f64), ProfileSource::RobotTouchCounts)
    }

    fn final_choice(&self) -> usize {
        self.final_prediction
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisitEvent {
    /// 0 = reference, 1..=4 = comparisons.
    pub object_index: usize,
    pub duration_s: f64,
}

/// One participant's behaviour in one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct HumanLog {
    pub participant_id: String,
    pub trial_id: String,
    pub visits: Vec<VisitEvent>,
    pub final_answer: usize,
    /// Known when the trial layout is available.
    pub correct: Option<bool>,
}

impl HumanLog {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if !(1..=COMPARISONS).contains(&self.final_answer) {
            return Err(MetricsError::InvalidLog(format!("final answer {} not in 1..=4", self.final_answer)));
        }
        for v in &self.visits {
            if v.object_index >= OBJECTS {
                return Err(MetricsError::InvalidLog(format!("object index {} not in 0..=4", v.object_index)));
            }
            if !(v.duration_s > 0.0 && v.duration_s.is_finite()) {
                return Err(MetricsError::InvalidLog(format!("duration {} must be > 0", v.duration_s)));
            }
        }
        Ok(())
    }
}

impl Explorable for HumanLog {
    fn exploration_profile(&self) -> Result<ExplorationProfile, MetricsError> {
        self.validate()?;
        let mut amounts = [0.0; OBJECTS];
        for v in &self.visits {
            amounts[v.object_index] += v.duration_s;
        }
        ExplorationProfile::from_amounts(amounts, ProfileSource::HumanTimeFractions)
    }

    fn final_choice(&self) -> usize {
        self.final_answer
    }
}

pub fn exploration_profile<S: Explorable + ?Sized>(source: &S) -> Result<ExplorationProfile, MetricsError> {
    source.exploration_profile()
}

/// Mean per-trial JS distance between two trial-aligned profile lists.
pub fn compare_strategies<K: PartialEq + fmt::Debug>(
    a: &[(K, ExplorationProfile)],
    b: &[(K, ExplorationProfile)],
) -> Result<f64, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::Alignment(format!("{} vs {} trials", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut total = 0.0;
    for ((ka, pa), (kb, pb)) in a.iter().zip(b) {
        if ka != kb {
            return Err(MetricsError::Alignment(format!("{ka:?} paired with {kb:?}")));
        }
        total += js_distance(&pa.weights, &pb.weights)?;
    }
    Ok(total / a.len() as f64)
}

/// Fraction of trials whose final choice is among the most attended comparisons.
pub fn most_touched_equals_prediction<S: Explorable>(sources: &[S]) -> Result<f64, MetricsError> {
    if sources.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut hits = 0usize;
    for s in sources {
        if s.exploration_profile()?.most_attended_comparisons().contains(&s.final_choice()) {
            hits += 1;
        }
    }
    Ok(hits as f64 / sources.len() as f64)
}

/// Counts indexed by (true fabric, predicted fabric).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn total(&self) -> u64 {
        self.row_sums().iter().sum()
    }

    pub fn diagonal(&self) -> Vec<u64> {
        (0..self.labels.len()).map(|i| self.counts[i][i]).collect()
    }
}

/// Sorted set of every fabric that appears in `results`.
pub fn fabric_universe(results: &[TrialResult]) -> Vec<String> {
    let mut ids: Vec<String> = results
        .iter()
        .flat_map(|r| core::iter::once(&r.spec.reference_fabric).chain(&r.spec.comparison_fabrics))
        .cloned()
        .collect();
    ids.sort();
    ids.dedup();
    ids
}

/// One count per trial at (reference fabric, fabric on the predicted platform).
pub fn confusion_matrix(results: &[TrialResult], universe: &[String]) -> Result<ConfusionMatrix, MetricsError> {
    confusion_from_outcomes(results.iter().map(|r| (&r.spec, r.final_prediction)), universe)
}

/// Like [`confusion_matrix`] for (trial layout, predicted platform 1..=4) pairs.
pub fn confusion_from_outcomes<'a>(
    outcomes: impl IntoIterator<Item = (&'a TrialSpec, usize)>,
    universe: &[String],
) -> Result<ConfusionMatrix, MetricsError> {
    let n = universe.len();
    let mut counts = vec![vec![0u64; n]; n];
    let index = |id: &str| universe.iter().position(|u| u == id).ok_or_else(|| MetricsError::UnknownFabric(id.into()));
    for (spec, prediction) in outcomes {
        let truth = index(&spec.reference_fabric)?;
        let predicted_fabric = spec
            .comparison_fabrics
            .get(prediction.wrapping_sub(1))
            .ok_or_else(|| MetricsError::Alignment(format!("prediction {prediction} out of range")))?;
        counts[truth][index(predicted_fabric)?] += 1;
    }
    Ok(ConfusionMatrix { labels: universe.to_vec(), counts })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MetricKind {
    Accuracy,
    Variance,
    Entropy,
}

impl MetricKind {
    pub const ALL: [MetricKind; 3] = [Self::Accuracy, Self::Variance, Self::Entropy];

    /// Short tag used in summary file names.
    pub fn tag(self) -> &'static str {
        match self {
            Self::Accuracy => "acc",
            Self::Variance => "var",
            Self::Entropy => "entr",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryRow {
    pub step: usize,
    pub mean: f64,
    pub std: f64,
}

/// Mean and sample (n - 1) standard deviation; std is 0 for one value.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, libm::sqrt(ss / (n - 1.0)))
}

pub fn summarize_values(by_step: &BTreeMap<usize, Vec<f64>>) -> Vec<SummaryRow> {
    by_step
        .iter()
        .map(|(&step, values)| {
            let (mean, std) = mean_std(values);
            SummaryRow { step, mean, std }
        })
        .collect()
}

/// Per-round quantities that [`summarize_rounds`] aggregates.
pub trait RoundValues {
    fn round(&self) -> usize;
    fn correct(&self) -> bool;
    fn mean_variance(&self) -> f64;
    fn mean_entropy(&self) -> f64;
}

impl RoundValues for RoundMetrics {
    fn round(&self) -> usize {
        self.round
    }
    fn correct(&self) -> bool {
        self.correct
    }
    fn mean_variance(&self) -> f64 {
        self.mean_variance
    }
    fn mean_entropy(&self) -> f64 {
        self.mean_entropy
    }
}

impl MetricKind {
    pub fn value<R: RoundValues + ?Sized>(self, row: &R) -> f64 {
        match self {
            Self::Accuracy => f64::from(u8::from(row.correct())),
            Self::Variance => row.mean_variance(),
            Self::Entropy => row.mean_entropy(),
        }
    }
}

/// Per-round mean and sample std of correctness, mean variance and entropy.
/// Each item is one trial's rows; rows are grouped by their round index.
pub fn summarize_rounds<'a, R: RoundValues + 'a>(
    trials: impl IntoIterator<Item = &'a [R]>,
) -> Result<BTreeMap<MetricKind, Vec<SummaryRow>>, MetricsError> {
    let mut by_kind: BTreeMap<MetricKind, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    let mut any = false;
    for rows in trials {
        any = true;
        for row in rows {
            for kind in MetricKind::ALL {
                by_kind.entry(kind).or_default().entry(row.round()).or_default().push(kind.value(row));
            }
        }
    }
    if !any {
        return Err(MetricsError::Empty);
    }
    Ok(MetricKind::ALL.into_iter().map(|k| (k, by_kind.get(&k).map(summarize_values).unwrap_or_default())).collect())
}

/// [`summarize_rounds`] over the active rounds (1..=max_rounds) of each result.
pub fn summarize(results: &[TrialResult]) -> Result<BTreeMap<MetricKind, Vec<SummaryRow>>, MetricsError> {
    summarize_rounds(results.iter().map(|r| r.rounds.as_slice()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn js_identity_and_disjoint() {
        let u = [0.2; 5];
        assert_eq!(js_distance(&u, &u).unwrap(), 0.0);
        assert_eq!(js_distance(&[1.0, 0.0, 0.0, 0.0, 0.0], &[0.0, 1.0, 0.0, 0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(js_distance(&[0.3, 0.7, 0.0], &[0.0, 0.0, 1.0]).unwrap(), 1.0);
    }

    #[test]
    fn js_half_vs_uniform_matches_direct_formula() {
        // m = (0.35, 0.35, 0.1, 0.1, 0.1)
        // KL(p||m) = log2(0.5/0.35)
        // KL(u||m) = 0.4 log2(0.2/0.35) + 0.6 log2(0.2/0.1)
        let p = [0.5, 0.5, 0.0, 0.0, 0.0];
        let q = [0.2; 5];
        let ln2 = core::f64::consts::LN_2;
        let kl_p = libm::log(0.5 / 0.35) / ln2;
        let kl_q = 0.4 * libm::log(0.2 / 0.35) / ln2 + 0.6;
        let want = libm::sqrt(0.5 * kl_p + 0.5 * kl_q);
        let got = js_distance(&p, &q).unwrap();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        assert!((got - 0.629_139).abs() < 1e-6);
    }

    #[test]
    fn js_rejects_bad_input() {
        assert!(matches!(js_distance(&[0.5, 0.6], &[0.5, 0.5]), Err(MetricsError::Distribution(_))));
        assert!(matches!(js_distance(&[1.0], &[0.5, 0.5]), Err(MetricsError::Length(1, 2))));
        assert!(js_distance(&[0.5 + 5e-7, 0.5], &[0.5, 0.5]).is_ok());
    }

    #[test]
    fn mean_std_two_point() {
        let (m, s) = mean_std(&[1.0, 0.0]);
        assert_eq!(m, 0.5);
        assert!((s - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(mean_std(&[0.3]), (0.3, 0.0));
    }

    #[test]
    fn human_profiles() {
        let log = HumanLog {
            participant_id: "p1".into(),
            trial_id: "0".into(),
            visits: (0..5).map(|o| VisitEvent { object_index: o, duration_s: 2.5 }).collect(),
            final_answer: 3,
            correct: None,
        };
        let p = exploration_profile(&log).unwrap();
        assert_eq!(p.weights, [0.2; 5]);
        assert_eq!(p.source, ProfileSource::HumanTimeFractions);
        assert_eq!(most_touched_equals_prediction(core::slice::from_ref(&log)).unwrap(), 1.0);

        let empty = HumanLog { visits: vec![], ..log.clone() };
        assert_eq!(exploration_profile(&empty), Err(MetricsError::EmptyProfile));
        let bad = HumanLog { final_answer: 5, ..log };
        assert!(matches!(exploration_profile(&bad), Err(MetricsError::InvalidLog(_))));
    }

    #[test]
    fn compare_requires_alignment() {
        let u = ExplorationProfile::from_amounts([1.0; 5], ProfileSource::RobotTouchCounts).unwrap();
        let a = vec![(0usize, u.clone()), (1, u.clone())];
        assert_eq!(compare_strategies(&a, &a).unwrap(), 0.0);
        let b = vec![(0usize, u.clone())];
        assert!(matches!(compare_strategies(&a, &b), Err(MetricsError::Alignment(_))));
        let c = vec![(0usize, u.clone()), (2, u)];
        assert!(matches!(compare_strategies(&a, &c), Err(MetricsError::Alignment(_))));
    }
}
