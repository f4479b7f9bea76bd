//! Acquisition scores computed from MC-dropout samples of the reference set.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::classifier::PredictiveSample;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AcquisitionError {
    #[error("no reference images")]
    Empty,
    #[error("reference image {index} has {found} samples, expected {expected}")]
    RaggedSamples { index: usize, expected: usize, found: usize },
    #[error("sample has {found} classes, expected {expected}")]
    RaggedClasses { expected: usize, found: usize },
    #[error("at least one MC sample per reference image is required")]
    NoSamples,
}

/// Per-class scores; index `i` scores platform `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionScores {
    /// Mean over reference images of the population variance over MC samples.
    pub variance: Vec<f64>,
    /// Mean over reference images of `E_m[-p ln p]`.
    pub entropy: Vec<f64>,
}

impl AcquisitionScores {
    /// Variance averaged over classes.
    pub fn mean_variance(&self) -> f64 {
        self.variance.iter().sum::<f64>() / self.variance.len() as f64
    }

    /// Entropy contributions summed over classes.
    pub fn total_entropy(&self) -> f64 {
        self.entropy.iter().sum()
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// `-p ln p` with `0 ln 0 = 0`.
pub fn entropy_term(p: f64) -> f64 {
    if p > 0.0 {
        -p * libm::log(p)
    } else {
        0.0
    }
}

/// Scores every class from `samples[k][m]`, the `m`-th MC sample for the
/// `k`-th reference image. Every image must contribute the same number of
/// samples.
pub fn acquisition_scores(samples: &[Vec<PredictiveSample>]) -> Result<AcquisitionScores, AcquisitionError> {
    let first = samples.first().ok_or(AcquisitionError::Empty)?;
    let m = first.len();
    if m == 0 {
        return Err(AcquisitionError::NoSamples);
    }
    let classes = first[0].len();
    for (index, per_ref) in samples.iter().enumerate() {
        if per_ref.len() != m {
            return Err(AcquisitionError::RaggedSamples { index, expected: m, found: per_ref.len() });
        }
        if let Some(s) = per_ref.iter().find(|s| s.len() != classes) {
            return Err(AcquisitionError::RaggedClasses { expected: classes, found: s.len() });
        }
    }

    let mut variance = vec![0.0; classes];
    let mut entropy = vec![0.0; classes];
    for per_ref in samples {
        let pivot = per_ref[0].probs();
        for i in 0..classes {
            // deviations from the first sample vanish exactly when all samples agree
            let (mut sum, mut sq, mut ent) = (0.0, 0.0, 0.0);
            for s in per_ref {
                let p = s.probs()[i];
                let d = p - pivot[i];
                sum += d;
                sq += d * d;
                ent += entropy_term(p);
            }
            let mean_d = sum / m as f64;
            variance[i] += (sq / m as f64 - mean_d * mean_d).max(0.0);
            entropy[i] += ent / m as f64;
        }
    }
    let n_ref = samples.len() as f64;
    variance.iter_mut().for_each(|v| *v /= n_ref);
    entropy.iter_mut().for_each(|v| *v /= n_ref);
    Ok(AcquisitionScores { variance, entropy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ps(v: &[f64]) -> PredictiveSample {
        PredictiveSample::new(v.to_vec()).unwrap()
    }

    #[test]
    fn identical_samples_have_zero_variance() {
        let s = ps(&[0.1, 0.2, 0.3, 0.4]);
        let scores = acquisition_scores(&[vec![s.clone(); 5], vec![s; 5]]).unwrap();
        assert_eq!(scores.variance, vec![0.0; 4]);
    }

    #[test]
    fn identical_samples_are_exactly_zero_for_any_count() {
        let s = ps(&[0.1, 0.2, 0.3, 0.4]);
        for m in 1..40 {
            assert_eq!(acquisition_scores(&[vec![s.clone(); m]]).unwrap().variance, vec![0.0; 4]);
        }
    }

    #[test]
    fn two_sample_population_variance() {
        // ((0.6-0.4)^2 + (0.2-0.4)^2) / 2 = 0.04
        let scores = acquisition_scores(&[vec![ps(&[0.6, 0.2, 0.1, 0.1]), ps(&[0.2, 0.6, 0.1, 0.1])]]).unwrap();
        for (got, want) in scores.variance.iter().zip([0.04, 0.04, 0.0, 0.0]) {
            assert!((got - want).abs() < 1e-15, "{got} vs {want}");
        }
        assert_eq!(argmax_first(&scores.variance), 0);
    }

    #[test]
    fn single_sample_entropy_terms() {
        // -0.5 ln 0.5 = 0.34657..., -0.25 ln 0.25 = 0.34657..., -0.125 ln 0.125 = 0.25993...
        let scores = acquisition_scores(&[vec![ps(&[0.5, 0.25, 0.125, 0.125])]]).unwrap();
        let want = [
            0.5 * core::f64::consts::LN_2,
            0.25 * 2.0 * core::f64::consts::LN_2,
            0.125 * 3.0 * core::f64::consts::LN_2,
            0.125 * 3.0 * core::f64::consts::LN_2,
        ];
        for (got, w) in scores.entropy.iter().zip(want) {
            assert!((got - w).abs() < 1e-15);
        }
        assert!((scores.entropy[0] - 0.3466).abs() < 1e-4);
        assert!((scores.entropy[2] - 0.2599).abs() < 1e-4);
        assert_eq!(argmax_first(&scores.entropy), 0);
    }

    #[test]
    fn zero_probability_contributes_nothing() {
        let scores = acquisition_scores(&[vec![ps(&[1.0, 0.0, 0.0, 0.0])]]).unwrap();
        assert_eq!(scores.entropy, vec![0.0; 4]);
    }

    #[test]
    fn ragged_inputs_are_rejected() {
        let s = ps(&[0.5, 0.5]);
        assert_eq!(
            acquisition_scores(&[vec![s.clone(); 2], vec![s.clone(); 3]]),
            Err(AcquisitionError::RaggedSamples { index: 1, expected: 2, found: 3 })
        );
        assert_eq!(acquisition_scores(&[]), Err(AcquisitionError::Empty));
        assert_eq!(acquisition_scores(&[vec![]]), Err(AcquisitionError::NoSamples));
        let t = ps(&[0.2, 0.3, 0.5]);
        assert!(matches!(acquisition_scores(&[vec![s, t]]), Err(AcquisitionError::RaggedClasses { .. })));
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax_first(&[0.0, 0.0, 0.0, 0.0]), 0);
        assert_eq!(argmax_first(&[0.1, 0.3, 0.3, 0.2]), 1);
        assert_eq!(argmax_first(&[0.1, 0.2, 0.3, 0.4]), 3);
    }

    fn table() -> impl Strategy<Value = Vec<Vec<Vec<f64>>>> {
        (1usize..4, 1usize..6).prop_flat_map(|(refs, mc)| {
            proptest::collection::vec(proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 4), mc), refs)
        })
    }

    fn normalise(raw: &[Vec<Vec<f64>>]) -> Vec<Vec<PredictiveSample>> {
        raw.iter()
            .map(|per_ref| {
                per_ref
                    .iter()
                    .map(|v| {
                        let shifted: Vec<f64> = v.iter().map(|x| x + 1e-3).collect();
                        let s: f64 = shifted.iter().sum();
                        ps(&shifted.iter().map(|x| x / s).collect::<Vec<_>>())
                    })
                    .collect()
            })
            .collect()
    }

    proptest! {
        #[test]
        fn permutation_equivariant(raw in table(), perm in Just([0usize, 1, 2, 3]).prop_shuffle()) {
            let samples = normalise(&raw);
            let permuted: Vec<Vec<PredictiveSample>> = samples
                .iter()
                .map(|r| r.iter().map(|s| ps(&perm.iter().map(|&j| s.probs()[j]).collect::<Vec<_>>())).collect())
                .collect();
            let a = acquisition_scores(&samples).unwrap();
            let b = acquisition_scores(&permuted).unwrap();
            for (i, &j) in perm.iter().enumerate() {
                prop_assert!((b.variance[i] - a.variance[j]).abs() < 1e-15);
                prop_assert!((b.entropy[i] - a.entropy[j]).abs() < 1e-15);
            }
        }

        #[test]
        fn order_invariant_and_bounded(raw in table()) {
            let samples = normalise(&raw);
            let mut reversed: Vec<Vec<PredictiveSample>> = samples.iter().map(|r| r.iter().rev().cloned().collect()).collect();
            reversed.reverse();
            let a = acquisition_scores(&samples).unwrap();
            let b = acquisition_scores(&reversed).unwrap();
            for i in 0..4 {
                prop_assert!((a.variance[i] - b.variance[i]).abs() < 1e-14);
                prop_assert!((a.entropy[i] - b.entropy[i]).abs() < 1e-14);
                prop_assert!(a.variance[i] >= 0.0);
                prop_assert!(a.entropy[i] >= 0.0 && a.entropy[i] <= 1.0 / core::f64::consts::E + 1e-15);
            }
            prop_assert!(a.total_entropy() <= libm::log(4.0) + 1e-12);
        }
    }
}
