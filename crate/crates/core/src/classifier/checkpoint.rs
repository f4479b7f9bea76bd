//! Checkpoint blob: magic, a UTF-8 `key=value` header ending in an empty
//! line, then parameters and momentum buffers as little-endian `f64`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use super::network::ConvClassifier;
use super::{ClassifierConfig, ClassifierError, InitRule};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"ATXCKPT1";

fn bad(msg: impl Into<String>) -> ClassifierError {
    ClassifierError::Checkpoint(msg.into())
}

impl ConvClassifier {
    pub fn to_checkpoint(&self) -> Vec<u8> {
        let c = self.config();
        let mut header = String::new();
        let (h, w, ch) = c.input_shape;
        // f64 Debug output is the shortest string that parses back to the same bits
        let _ = writeln!(header, "input_shape={h},{w},{ch}");
        let channels: Vec<String> = c.conv_channels.iter().map(|v| format!("{v}")).collect();
        let _ = writeln!(header, "conv_channels={}", channels.join(","));
        let _ = writeln!(header, "dense_hidden_units={}", c.dense_hidden_units);
        let _ = writeln!(header, "num_classes={}", c.num_classes);
        let _ = writeln!(header, "dropout_rate={:?}", c.dropout_rate);
        let _ = writeln!(header, "learning_rate={:?}", c.learning_rate);
        let _ = writeln!(header, "momentum={:?}", c.momentum);
        let _ = writeln!(header, "batch_size={}", c.batch_size);
        let init = match c.init {
            InitRule::He => "he",
            InitRule::LeCun => "lecun",
        };
        let _ = writeln!(header, "init={init}");
        let _ = writeln!(header, "init_seed={}", self.init_seed());
        let _ = writeln!(header, "steps={}", self.steps());
        let _ = writeln!(header, "valid={}", self.is_valid());
        for t in self.tensors() {
            let _ = writeln!(header, "tensor={}:{}", t.name, t.range.len());
        }
        let _ = writeln!(header, "parameters={}", self.parameter_count());
        header.push('\n');

        let mut out = Vec::with_capacity(8 + header.len() + 16 * self.parameter_count());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(header.as_bytes());
        for v in self.parameters().iter().chain(self.velocity()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_checkpoint(bytes: &[u8]) -> Result<Self, ClassifierError> {
        let body = bytes.strip_prefix(CHECKPOINT_MAGIC.as_slice()).ok_or_else(|| bad("missing magic"))?;
        let end = body.windows(2).position(|w| w == b"\n\n").ok_or_else(|| bad("unterminated header"))?;
        let header = core::str::from_utf8(&body[..end]).map_err(|_| bad("header is not UTF-8"))?;
        let data = &body[end + 2..];

        let mut config = ClassifierConfig::default();
        let (mut init_seed, mut steps, mut valid, mut count) = (None, None, None, None);
        for line in header.lines() {
            let (key, value) = line.split_once('=').ok_or_else(|| bad(format!("bad header line `{line}`")))?;
            let num = |v: &str| v.parse::<usize>().map_err(|_| bad(format!("bad integer for {key}")));
            let float = |v: &str| v.parse::<f64>().map_err(|_| bad(format!("bad float for {key}")));
            match key {
                "input_shape" => {
                    let dims = value.split(',').map(num).collect::<Result<Vec<_>, _>>()?;
                    let [h, w, c] = dims[..] else { return Err(bad("input_shape needs 3 values")) };
                    config.input_shape = (h, w, c);
                }
                "conv_channels" => config.conv_channels = value.split(',').map(num).collect::<Result<_, _>>()?,
                "dense_hidden_units" => config.dense_hidden_units = num(value)?,
                "num_classes" => config.num_classes = num(value)?,
                "dropout_rate" => config.dropout_rate = float(value)?,
                "learning_rate" => config.learning_rate = float(value)?,
                "momentum" => config.momentum = float(value)?,
                "batch_size" => config.batch_size = num(value)?,
                "init" => {
                    config.init = match value {
                        "he" => InitRule::He,
                        "lecun" => InitRule::LeCun,
                        other => return Err(bad(format!("unknown init rule `{other}`"))),
                    }
                }
                "init_seed" => init_seed = Some(value.parse::<u64>().map_err(|_| bad("bad init_seed"))?),
                "steps" => steps = Some(value.parse::<u64>().map_err(|_| bad("bad steps"))?),
                "valid" => valid = Some(value == "true"),
                "parameters" => count = Some(num(value)?),
                "tensor" => {}
                other => return Err(bad(format!("unknown header key `{other}`"))),
            }
        }
        let count = count.ok_or_else(|| bad("missing parameter count"))?;
        if data.len() != 16 * count {
            return Err(bad(format!("expected {} data bytes, found {}", 16 * count, data.len())));
        }
        let mut values = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
        let params: Vec<f64> = values.by_ref().take(count).collect();
        let velocity: Vec<f64> = values.collect();
        ConvClassifier::from_parts(
            config,
            init_seed.ok_or_else(|| bad("missing init_seed"))?,
            steps.ok_or_else(|| bad("missing steps"))?,
            valid.ok_or_else(|| bad("missing valid flag"))?,
            params,
            velocity,
        )
        .map_err(|e| match e {
            ClassifierError::Param(m) => bad(m),
            other => other,
        })
    }
}
