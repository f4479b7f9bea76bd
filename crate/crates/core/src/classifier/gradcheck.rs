//! Central finite-difference check of the hand-written backpropagation.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::network::{ConvClassifier, LayerKind};
use super::ClassifierError;
use crate::image::TextureImage;
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckOptions {
    pub epsilon: f64,
    /// Lower bound on the number of parameters compared.
    pub min_params: usize,
    pub seed: u64,
    /// Test hook: negate the analytic gradient of this tensor index.
    pub corrupt_tensor: Option<usize>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self { epsilon: 1e-5, min_params: 200, seed: 0, corrupt_tensor: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub kind: LayerKind,
    pub checked: usize,
    pub max_relative_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub checked: usize,
    /// Parameters skipped because the perturbation flipped a ReLU or pooling choice.
    pub skipped_kinks: usize,
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn max_for(&self, kind: LayerKind) -> f64 {
        self.tensors.iter().filter(|t| t.kind == kind).map(|t| t.max_relative_error).fold(0.0, f64::max)
    }
}

/// `|a - n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

impl ConvClassifier {
    /// Compares analytic gradients of the mean cross-entropy over `batch`
    /// with central differences on a random, per-tensor stratified subset of
    /// parameters. Dropout masks are sampled once and frozen for both passes.
    pub fn gradient_check(
        &self,
        batch: &[(TextureImage, usize)],
        options: &GradCheckOptions,
    ) -> Result<GradCheckReport, ClassifierError> {
        if batch.is_empty() {
            return Err(ClassifierError::EmptyBatch);
        }
        // evaluate() validates shapes and labels
        self.evaluate(batch)?;
        let mut mask_rng = rng::stream(options.seed, &[rng::tag("gradcheck-mask")]);
        let masks: Vec<_> = batch.iter().map(|_| self.sample_mask(&mut mask_rng)).collect();

        let mut analytic = self.batch_gradient(batch, &masks);
        if let Some(t) = options.corrupt_tensor {
            let range = self.tensors()[t].range.clone();
            analytic[range].iter_mut().for_each(|g| *g = -*g);
        }

        let total = self.parameter_count();
        let (_, base_sigs) = self.batch_loss(self.parameters(), batch, &masks);
        let mut params = self.parameters().to_vec();
        let mut pick_rng = rng::stream(options.seed, &[rng::tag("gradcheck-pick")]);
        let eps = options.epsilon;

        let mut report = GradCheckReport { max_relative_error: 0.0, checked: 0, skipped_kinks: 0, tensors: Vec::new() };
        for tensor in self.tensors() {
            let len = tensor.range.len();
            let share = (options.min_params * len).div_ceil(total.max(1));
            let quota = share.max(len.min(16)).min(len);
            let mut candidates: Vec<usize> = tensor.range.clone().collect();
            candidates.shuffle(&mut pick_rng);

            let mut check =
                TensorCheck { name: tensor.name.clone(), kind: tensor.kind, checked: 0, max_relative_error: 0.0 };
            for idx in candidates {
                if check.checked == quota {
                    break;
                }
                let original = params[idx];
                params[idx] = original + eps;
                let (plus, plus_sigs) = self.batch_loss(&params, batch, &masks);
                params[idx] = original - eps;
                let (minus, minus_sigs) = self.batch_loss(&params, batch, &masks);
                params[idx] = original;
                if plus_sigs != base_sigs || minus_sigs != base_sigs {
                    report.skipped_kinks += 1;
                    continue;
                }
                let numeric = (plus - minus) / (2.0 * eps);
                let err = relative_error(analytic[idx], numeric);
                check.max_relative_error = check.max_relative_error.max(err);
                check.checked += 1;
            }
            report.checked += check.checked;
            report.max_relative_error = report.max_relative_error.max(check.max_relative_error);
            report.tensors.push(check);
        }
        Ok(report)
    }
}
