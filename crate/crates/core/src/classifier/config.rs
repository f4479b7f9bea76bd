use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::ClassifierError;

/// Fan-in scaled Gaussian initialisation rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitRule {
    /// `N(0, 2 / fan_in)` for ReLU layers, `N(0, 1 / fan_in)` for the output head.
    He,
    /// `N(0, 1 / fan_in)` everywhere.
    LeCun,
}

/// Architecture and optimiser settings of [`super::ConvClassifier`].
///
/// The network is `conv_channels.len()` blocks of 3x3 valid convolution,
/// ReLU, 2x2 max-pooling and dropout, followed by one ReLU dense layer and a
/// softmax head.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    /// `(height, width, channels)`.
    pub input_shape: (usize, usize, usize),
    pub conv_channels: Vec<usize>,
    pub dense_hidden_units: usize,
    pub num_classes: usize,
    pub dropout_rate: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub init: InitRule,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            input_shape: (32, 32, 1),
            conv_channels: vec![8, 16],
            dense_hidden_units: 64,
            num_classes: 4,
            dropout_rate: 0.25,
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 16,
            init: InitRule::He,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        let err = |msg: alloc::string::String| Err(ClassifierError::Param(msg));
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return err(format!("dropout_rate must lie in [0, 1), got {}", self.dropout_rate));
        }
        if self.num_classes < 2 {
            return err(format!("num_classes must be >= 2, got {}", self.num_classes));
        }
        let (h, w, c) = self.input_shape;
        if h == 0 || w == 0 || c == 0 {
            return err("input dimensions must be positive".into());
        }
        if self.conv_channels.contains(&0) || self.dense_hidden_units == 0 {
            return err("layer widths must be positive".into());
        }
        if self.batch_size == 0 {
            return err("batch_size must be >= 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return err(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return err(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        let (mut h, mut w) = (h, w);
        for (i, _) in self.conv_channels.iter().enumerate() {
            if h < 4 || w < 4 {
                return err(format!("input too small for conv block {i} ({h}x{w})"));
            }
            h = (h - 2) / 2;
            w = (w - 2) / 2;
        }
        Ok(())
    }
}
