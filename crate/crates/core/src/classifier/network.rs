//! The dropout CNN and its hand-written backpropagation.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::gemm::gemm;
use super::{ClassifierConfig, ClassifierError, InitRule, PredictiveSample, ProbabilisticClassifier, TrainStats};
use crate::image::TextureImage;
use crate::rng::{self, StreamRng};

const KERNEL: usize = 3;
/// Subtracted from every input intensity so the first layer sees centred data.
const INPUT_OFFSET: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    Dense,
    Output,
}

/// A named slice of the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorInfo {
    pub name: String,
    pub kind: LayerKind,
    pub range: Range<usize>,
    pub fan_in: usize,
    pub is_bias: bool,
}

#[derive(Debug, Clone)]
struct Block {
    in_c: usize,
    out_c: usize,
    in_h: usize,
    in_w: usize,
    conv_h: usize,
    conv_w: usize,
    pool_h: usize,
    pool_w: usize,
    weight: Range<usize>,
    bias: Range<usize>,
}

impl Block {
    fn kdim(&self) -> usize {
        self.in_c * KERNEL * KERNEL
    }

    fn area(&self) -> usize {
        self.conv_h * self.conv_w
    }

    fn pooled_len(&self) -> usize {
        self.out_c * self.pool_h * self.pool_w
    }
}

#[derive(Debug, Clone)]
struct Dense {
    inputs: usize,
    outputs: usize,
    weight: Range<usize>,
    bias: Range<usize>,
}

#[derive(Debug, Clone)]
struct Architecture {
    blocks: Vec<Block>,
    hidden: Dense,
    head: Dense,
    tensors: Vec<TensorInfo>,
    total: usize,
}

impl Architecture {
    fn new(cfg: &ClassifierConfig) -> Self {
        let (mut h, mut w, mut c) = cfg.input_shape;
        let mut offset = 0;
        let mut tensors = Vec::new();
        let mut take = |len: usize, name: String, kind: LayerKind, fan_in: usize, is_bias: bool| {
            let range = offset..offset + len;
            offset += len;
            tensors.push(TensorInfo { name, kind, range: range.clone(), fan_in, is_bias });
            range
        };
        let mut blocks = Vec::with_capacity(cfg.conv_channels.len());
        for (i, &out_c) in cfg.conv_channels.iter().enumerate() {
            let kdim = c * KERNEL * KERNEL;
            let weight = take(out_c * kdim, format!("block{i}.conv.weight"), LayerKind::Conv, kdim, false);
            let bias = take(out_c, format!("block{i}.conv.bias"), LayerKind::Conv, kdim, true);
            let (conv_h, conv_w) = (h - (KERNEL - 1), w - (KERNEL - 1));
            let block = Block {
                in_c: c,
                out_c,
                in_h: h,
                in_w: w,
                conv_h,
                conv_w,
                pool_h: conv_h / 2,
                pool_w: conv_w / 2,
                weight,
                bias,
            };
            (h, w, c) = (block.pool_h, block.pool_w, out_c);
            blocks.push(block);
        }
        let flat = h * w * c;
        let units = cfg.dense_hidden_units;
        let hidden = Dense {
            inputs: flat,
            outputs: units,
            weight: take(units * flat, "hidden.weight".into(), LayerKind::Dense, flat, false),
            bias: take(units, "hidden.bias".into(), LayerKind::Dense, flat, true),
        };
        let classes = cfg.num_classes;
        let head = Dense {
            inputs: units,
            outputs: classes,
            weight: take(classes * units, "head.weight".into(), LayerKind::Output, units, false),
            bias: take(classes, "head.bias".into(), LayerKind::Output, units, true),
        };
        Self { blocks, hidden, head, tensors, total: offset }
    }
}

/// Keep/drop indicators for every dropout site (one per conv block).
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    keep: Vec<Vec<bool>>,
    keep_prob: f64,
}

impl DropoutMask {
    pub fn sites(&self) -> &[Vec<bool>] {
        &self.keep
    }

    pub fn keep_prob(&self) -> f64 {
        self.keep_prob
    }

    /// Factor applied to kept activations (inverted dropout).
    pub fn scale(&self) -> f64 {
        1.0 / self.keep_prob
    }
}

pub(crate) enum MaskMode<'a> {
    Off,
    Sample(&'a mut StreamRng),
    Fixed(&'a DropoutMask),
}

struct BlockTrace {
    cols: Vec<f64>,
    /// Post-ReLU convolution output, `out_c x area`.
    activ: Vec<f64>,
    argmax: Vec<u32>,
    mask: Option<Vec<bool>>,
}

pub(crate) struct Trace {
    blocks: Vec<BlockTrace>,
    flat: Vec<f64>,
    hidden: Vec<f64>,
    pub(crate) logits: Vec<f64>,
}

impl Trace {
    /// Fingerprint of every ReLU sign and pooling choice, used to detect
    /// finite-difference steps that cross a kink.
    pub(crate) fn signature(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut mix = |v: u64| h = (h ^ v).wrapping_mul(0x0000_0100_0000_01b3);
        for b in &self.blocks {
            for a in &b.activ {
                mix(u64::from(*a > 0.0));
            }
            for &i in &b.argmax {
                mix(u64::from(i));
            }
        }
        for a in &self.hidden {
            mix(u64::from(*a > 0.0));
        }
        h
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|z| libm::exp(z - max)).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= sum);
    out
}

/// Cross-entropy of `label` under softmax(`logits`) and its gradient with
/// respect to the logits.
pub(crate) fn cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let top = crate::acquisition::argmax_first(logits);
    let max = logits[top];
    let rest: f64 = logits.iter().enumerate().filter(|&(j, _)| j != top).map(|(_, z)| libm::exp(z - max)).sum();
    let loss = libm::log1p(rest) + (max - logits[label]);
    let mut grad = softmax(logits);
    grad[label] -= 1.0;
    (loss, grad)
}

fn im2col(input: &[f64], b: &Block) -> Vec<f64> {
    let area = b.area();
    let mut cols = vec![0.0; b.kdim() * area];
    for c in 0..b.in_c {
        let plane = &input[c * b.in_h * b.in_w..(c + 1) * b.in_h * b.in_w];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &mut cols[((c * KERNEL + ky) * KERNEL + kx) * area..][..area];
                for oy in 0..b.conv_h {
                    let src = &plane[(oy + ky) * b.in_w + kx..][..b.conv_w];
                    row[oy * b.conv_w..(oy + 1) * b.conv_w].copy_from_slice(src);
                }
            }
        }
    }
    cols
}

fn col2im(dcols: &[f64], b: &Block) -> Vec<f64> {
    let area = b.area();
    let mut out = vec![0.0; b.in_c * b.in_h * b.in_w];
    for c in 0..b.in_c {
        let plane = &mut out[c * b.in_h * b.in_w..(c + 1) * b.in_h * b.in_w];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &dcols[((c * KERNEL + ky) * KERNEL + kx) * area..][..area];
                for oy in 0..b.conv_h {
                    let dst = &mut plane[(oy + ky) * b.in_w + kx..][..b.conv_w];
                    for (d, s) in dst.iter_mut().zip(&row[oy * b.conv_w..(oy + 1) * b.conv_w]) {
                        *d += s;
                    }
                }
            }
        }
    }
    out
}

fn maxpool(activ: &[f64], b: &Block) -> (Vec<f64>, Vec<u32>) {
    let mut pooled = Vec::with_capacity(b.pooled_len());
    let mut argmax = Vec::with_capacity(b.pooled_len());
    for c in 0..b.out_c {
        let base = c * b.area();
        for py in 0..b.pool_h {
            for px in 0..b.pool_w {
                let top = base + 2 * py * b.conv_w + 2 * px;
                let mut best = top;
                for idx in [top + 1, top + b.conv_w, top + b.conv_w + 1] {
                    if activ[idx] > activ[best] {
                        best = idx;
                    }
                }
                pooled.push(activ[best]);
                argmax.push(best as u32);
            }
        }
    }
    (pooled, argmax)
}

fn add_assign(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Small convolutional classifier with inverted dropout after every conv
/// block, trained by minibatch SGD with momentum.
#[derive(Debug, Clone)]
pub struct ConvClassifier {
    config: ClassifierConfig,
    arch: Architecture,
    params: Vec<f64>,
    velocity: Vec<f64>,
    init_seed: u64,
    steps: u64,
    valid: bool,
    shuffle: bool,
}

impl ConvClassifier {
    /// Builds a classifier with fan-in scaled Gaussian weights and zero biases.
    pub fn new(config: ClassifierConfig, seed: u64) -> Result<Self, ClassifierError> {
        config.validate()?;
        let arch = Architecture::new(&config);
        let params = init_params(&arch, config.init, seed);
        let velocity = vec![0.0; arch.total];
        Ok(Self { config, arch, params, velocity, init_seed: seed, steps: 0, valid: true, shuffle: true })
    }

    pub(crate) fn from_parts(
        config: ClassifierConfig,
        init_seed: u64,
        steps: u64,
        valid: bool,
        params: Vec<f64>,
        velocity: Vec<f64>,
    ) -> Result<Self, ClassifierError> {
        config.validate()?;
        let arch = Architecture::new(&config);
        if params.len() != arch.total || velocity.len() != arch.total {
            return Err(ClassifierError::Checkpoint(format!(
                "expected {} parameters, found {} / {}",
                arch.total,
                params.len(),
                velocity.len()
            )));
        }
        Ok(Self { config, arch, params, velocity, init_seed, steps, valid, shuffle: true })
    }

    pub fn config(&self) -> &ClassifierConfig {
        &self.config
    }

    pub fn parameters(&self) -> &[f64] {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn velocity(&self) -> &[f64] {
        &self.velocity
    }

    pub fn tensors(&self) -> &[TensorInfo] {
        &self.arch.tensors
    }

    pub fn parameter_count(&self) -> usize {
        self.arch.total
    }

    /// Number of optimiser updates applied so far.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    pub fn is_valid(&self) -> bool {
        self.valid
    }

    /// Disables per-epoch shuffling so minibatches follow sample order.
    pub fn set_shuffle(&mut self, shuffle: bool) {
        self.shuffle = shuffle;
    }

    pub fn sample_mask(&self, rng: &mut StreamRng) -> DropoutMask {
        let keep_prob = 1.0 - self.config.dropout_rate;
        let keep = self
            .arch
            .blocks
            .iter()
            .map(|b| (0..b.pooled_len()).map(|_| rng.random::<f64>() < keep_prob).collect())
            .collect();
        DropoutMask { keep, keep_prob }
    }

    /// Raw logits with dropout disabled.
    pub fn logits(&self, image: &TextureImage) -> Result<Vec<f64>, ClassifierError> {
        self.check_input(image)?;
        Ok(self.forward(&self.params, &image.pixels, MaskMode::Off).logits)
    }

    /// Mean cross-entropy and accuracy over `samples` with dropout disabled.
    pub fn evaluate(&self, samples: &[(TextureImage, usize)]) -> Result<(f64, f64), ClassifierError> {
        if samples.is_empty() {
            return Err(ClassifierError::EmptyBatch);
        }
        let mut loss = 0.0;
        let mut correct = 0usize;
        for (img, label) in samples {
            self.check_sample(img, *label)?;
            let logits = self.forward(&self.params, &img.pixels, MaskMode::Off).logits;
            loss += cross_entropy(&logits, *label).0;
            correct += usize::from(crate::acquisition::argmax_first(&logits) == *label);
        }
        let n = samples.len() as f64;
        Ok((loss / n, correct as f64 / n))
    }

    fn check_input(&self, image: &TextureImage) -> Result<(), ClassifierError> {
        if !self.valid {
            return Err(ClassifierError::Invalidated);
        }
        if image.shape() != self.config.input_shape {
            return Err(ClassifierError::InputShape { expected: self.config.input_shape, found: image.shape() });
        }
        Ok(())
    }

    fn check_sample(&self, image: &TextureImage, label: usize) -> Result<(), ClassifierError> {
        self.check_input(image)?;
        if label >= self.config.num_classes {
            return Err(ClassifierError::Label { label, classes: self.config.num_classes });
        }
        Ok(())
    }

    pub(crate) fn forward(&self, params: &[f64], input: &[f64], mut masks: MaskMode<'_>) -> Trace {
        let arch = &self.arch;
        let keep_prob = 1.0 - self.config.dropout_rate;
        let scale = 1.0 / keep_prob;
        let mut blocks = Vec::with_capacity(arch.blocks.len());
        let mut current: Vec<f64> = input.iter().map(|v| v - INPUT_OFFSET).collect();
        for (bi, b) in arch.blocks.iter().enumerate() {
            let cols = im2col(&current, b);
            let mut activ = vec![0.0; b.out_c * b.area()];
            gemm(b.out_c, b.kdim(), b.area(), &params[b.weight.clone()], false, &cols, false, 0.0, &mut activ);
            for (row, bias) in activ.chunks_exact_mut(b.area()).zip(&params[b.bias.clone()]) {
                for v in row {
                    *v = (*v + bias).max(0.0);
                }
            }
            let (mut pooled, argmax) = maxpool(&activ, b);
            let mask = match &mut masks {
                MaskMode::Off => None,
                MaskMode::Sample(_) if self.config.dropout_rate == 0.0 => None,
                MaskMode::Sample(rng) => Some((0..pooled.len()).map(|_| rng.random::<f64>() < keep_prob).collect()),
                MaskMode::Fixed(m) => Some(m.keep[bi].clone()),
            };
            if let Some(mask) = &mask {
                let scale = match &masks {
                    MaskMode::Fixed(m) => m.scale(),
                    _ => scale,
                };
                for (v, &k) in pooled.iter_mut().zip(mask) {
                    *v = if k { *v * scale } else { 0.0 };
                }
            }
            blocks.push(BlockTrace { cols, activ, argmax, mask });
            current = pooled;
        }
        let flat = current;

        let hid = &arch.hidden;
        let mut hidden = params[hid.bias.clone()].to_vec();
        gemm(hid.outputs, hid.inputs, 1, &params[hid.weight.clone()], false, &flat, false, 1.0, &mut hidden);
        hidden.iter_mut().for_each(|v| *v = v.max(0.0));

        let head = &arch.head;
        let mut logits = params[head.bias.clone()].to_vec();
        gemm(head.outputs, head.inputs, 1, &params[head.weight.clone()], false, &hidden, false, 1.0, &mut logits);
        Trace { blocks, flat, hidden, logits }
    }

    /// Accumulates the parameter gradient for one sample into `grad`, given
    /// the loss gradient with respect to the logits.
    pub(crate) fn backward(&self, params: &[f64], trace: &Trace, dlogits: &[f64], grad: &mut [f64]) {
        let arch = &self.arch;
        let head = &arch.head;
        gemm(head.outputs, 1, head.inputs, dlogits, false, &trace.hidden, false, 1.0, &mut grad[head.weight.clone()]);
        add_assign(&mut grad[head.bias.clone()], dlogits);
        let mut dh = vec![0.0; head.inputs];
        gemm(head.inputs, head.outputs, 1, &params[head.weight.clone()], true, dlogits, false, 0.0, &mut dh);
        for (d, h) in dh.iter_mut().zip(&trace.hidden) {
            if *h <= 0.0 {
                *d = 0.0;
            }
        }

        let hid = &arch.hidden;
        gemm(hid.outputs, 1, hid.inputs, &dh, false, &trace.flat, false, 1.0, &mut grad[hid.weight.clone()]);
        add_assign(&mut grad[hid.bias.clone()], &dh);
        let mut dcur = vec![0.0; hid.inputs];
        gemm(hid.inputs, hid.outputs, 1, &params[hid.weight.clone()], true, &dh, false, 0.0, &mut dcur);

        let scale = 1.0 / (1.0 - self.config.dropout_rate);
        for (bi, b) in arch.blocks.iter().enumerate().rev() {
            let bt = &trace.blocks[bi];
            if let Some(mask) = &bt.mask {
                for (d, &k) in dcur.iter_mut().zip(mask) {
                    *d = if k { *d * scale } else { 0.0 };
                }
            }
            let mut dz = vec![0.0; b.out_c * b.area()];
            for (&idx, d) in bt.argmax.iter().zip(&dcur) {
                dz[idx as usize] += d;
            }
            for (d, a) in dz.iter_mut().zip(&bt.activ) {
                if *a <= 0.0 {
                    *d = 0.0;
                }
            }
            gemm(b.out_c, b.area(), b.kdim(), &dz, false, &bt.cols, true, 1.0, &mut grad[b.weight.clone()]);
            for (g, row) in grad[b.bias.clone()].iter_mut().zip(dz.chunks_exact(b.area())) {
                *g += row.iter().sum::<f64>();
            }
            if bi > 0 {
                let mut dcols = vec![0.0; b.kdim() * b.area()];
                gemm(b.kdim(), b.out_c, b.area(), &params[b.weight.clone()], true, &dz, false, 0.0, &mut dcols);
                dcur = col2im(&dcols, b);
            }
        }
    }

    /// Mean loss over `batch` under fixed masks, plus the kink fingerprint of
    /// every forward pass.
    pub(crate) fn batch_loss(
        &self,
        params: &[f64],
        batch: &[(TextureImage, usize)],
        masks: &[DropoutMask],
    ) -> (f64, Vec<u64>) {
        let mut loss = 0.0;
        let mut sigs = Vec::with_capacity(batch.len());
        for ((img, label), mask) in batch.iter().zip(masks) {
            let trace = self.forward(params, &img.pixels, MaskMode::Fixed(mask));
            loss += cross_entropy(&trace.logits, *label).0;
            sigs.push(trace.signature());
        }
        (loss / batch.len() as f64, sigs)
    }

    /// Analytic gradient of [`Self::batch_loss`].
    pub(crate) fn batch_gradient(&self, batch: &[(TextureImage, usize)], masks: &[DropoutMask]) -> Vec<f64> {
        let mut grad = vec![0.0; self.arch.total];
        let inv = 1.0 / batch.len() as f64;
        for ((img, label), mask) in batch.iter().zip(masks) {
            let trace = self.forward(&self.params, &img.pixels, MaskMode::Fixed(mask));
            let (_, mut d) = cross_entropy(&trace.logits, *label);
            d.iter_mut().for_each(|v| *v *= inv);
            self.backward(&self.params, &trace, &d, &mut grad);
        }
        grad
    }

    fn apply_update(&mut self, grad: &[f64]) {
        let (lr, mu) = (self.config.learning_rate, self.config.momentum);
        for ((p, v), g) in self.params.iter_mut().zip(self.velocity.iter_mut()).zip(grad) {
            *v = mu * *v - lr * g;
            *p += *v;
        }
        self.steps += 1;
    }

    fn diverged(&mut self, epoch: usize) -> ClassifierError {
        self.valid = false;
        ClassifierError::NumericalDivergence { epoch }
    }
}

fn init_params(arch: &Architecture, rule: InitRule, seed: u64) -> Vec<f64> {
    let mut rng = rng::stream(seed, &[rng::tag("init")]);
    let mut params = vec![0.0; arch.total];
    for t in arch.tensors.iter().filter(|t| !t.is_bias) {
        let gain = match (rule, t.kind) {
            (InitRule::He, LayerKind::Conv | LayerKind::Dense) => 2.0,
            _ => 1.0,
        };
        let std = libm::sqrt(gain / t.fan_in as f64);
        for p in &mut params[t.range.clone()] {
            let z: f64 = StandardNormal.sample(&mut rng);
            *p = z * std;
        }
    }
    params
}

impl ProbabilisticClassifier for ConvClassifier {
    fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    fn train_epochs(
        &mut self,
        samples: &[(TextureImage, usize)],
        epochs: usize,
        rng: &mut StreamRng,
    ) -> Result<TrainStats, ClassifierError> {
        if samples.is_empty() {
            return Err(ClassifierError::EmptyBatch);
        }
        for (img, label) in samples {
            self.check_sample(img, *label)?;
        }
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut grad = vec![0.0; self.arch.total];
        let mut epoch_losses = Vec::with_capacity(epochs);
        for epoch in 0..epochs {
            if self.shuffle {
                order.shuffle(rng);
            }
            let mut epoch_loss = 0.0;
            for batch in order.chunks(self.config.batch_size) {
                grad.fill(0.0);
                let inv = 1.0 / batch.len() as f64;
                for &i in batch {
                    let (img, label) = &samples[i];
                    let trace = self.forward(&self.params, &img.pixels, MaskMode::Sample(rng));
                    let (loss, mut d) = cross_entropy(&trace.logits, *label);
                    epoch_loss += loss;
                    d.iter_mut().for_each(|v| *v *= inv);
                    self.backward(&self.params, &trace, &d, &mut grad);
                }
                if !epoch_loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    return Err(self.diverged(epoch));
                }
                self.apply_update(&grad);
            }
            if self.params.iter().any(|p| !p.is_finite()) {
                return Err(self.diverged(epoch));
            }
            epoch_losses.push(epoch_loss / samples.len() as f64);
        }
        let (final_loss, final_train_accuracy) = self.evaluate(samples)?;
        if !final_loss.is_finite() {
            return Err(self.diverged(epochs.saturating_sub(1)));
        }
        Ok(TrainStats { final_loss, final_train_accuracy, epoch_losses })
    }

    fn predict_deterministic(&self, image: &TextureImage) -> Result<PredictiveSample, ClassifierError> {
        let logits = self.logits(image)?;
        PredictiveSample::new(softmax(&logits))
    }

    fn predict_mc(
        &self,
        image: &TextureImage,
        n_mc: usize,
        rng: &mut StreamRng,
    ) -> Result<Vec<PredictiveSample>, ClassifierError> {
        self.check_input(image)?;
        (0..n_mc)
            .map(|_| {
                let trace = self.forward(&self.params, &image.pixels, MaskMode::Sample(rng));
                PredictiveSample::new(softmax(&trace.logits))
            })
            .collect()
    }

    fn reinitialize(&mut self) {
        self.params = init_params(&self.arch, self.config.init, self.init_seed);
        self.velocity.fill(0.0);
        self.valid = true;
    }
}
