//! Flat `key = value` experiment configuration with dotted section keys.

use std::fmt;
use std::path::{Path, PathBuf};

use active_texture_core::{
    generate_synthetic, Augmentation, ClassifierConfig, Dataset, EngineParams, InitRule, RetrainMode, RotationRange,
    StrategyKind, SyntheticClassParams,
};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl ConfigError {
    pub fn new(message: impl Into<String>) -> Self {
        Self { line: None, key: None, message: message.into() }
    }

    fn for_key(key: &str, message: impl Into<String>) -> Self {
        Self { line: None, key: Some(key.to_string()), message: message.into() }
    }

    fn at_line(mut self, line: usize) -> Self {
        self.line = Some(line);
        self
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("config error")?;
        if let Some(line) = self.line {
            write!(f, " at line {line}")?;
        }
        if let Some(key) = &self.key {
            write!(f, " (key `{key}`)")?;
        }
        write!(f, ": {}", self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    Synthetic,
    Files,
}

/// Per-class lists; a list of length one applies to every class.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub orientation: Vec<f64>,
    pub frequency: Vec<f64>,
    pub phase_jitter: Vec<f64>,
    pub rotation_jitter: Vec<f64>,
    pub noise_sigma: Vec<f64>,
    pub n_per_class: usize,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            orientation: vec![0.0, 45.0, 90.0, 135.0],
            frequency: vec![8.0],
            phase_jitter: vec![0.0],
            rotation_jitter: vec![0.0],
            noise_sigma: vec![0.05],
            n_per_class: 50,
            height: 32,
            width: 32,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn classes(&self) -> Result<Vec<SyntheticClassParams>, ConfigError> {
        let lists: [(&str, &Vec<f64>); 5] = [
            ("synthetic.orientation", &self.orientation),
            ("synthetic.frequency", &self.frequency),
            ("synthetic.phase_jitter", &self.phase_jitter),
            ("synthetic.rotation_jitter", &self.rotation_jitter),
            ("synthetic.noise_sigma", &self.noise_sigma),
        ];
        let n = lists.iter().map(|(_, l)| l.len()).max().unwrap_or(0);
        for (key, list) in &lists {
            if list.len() != 1 && list.len() != n {
                return Err(ConfigError::for_key(key, format!("expected 1 or {n} values, found {}", list.len())));
            }
        }
        let at = |l: &Vec<f64>, i: usize| if l.len() == 1 { l[0] } else { l[i] };
        (0..n)
            .map(|i| {
                let p = SyntheticClassParams::grating(at(&self.orientation, i), at(&self.frequency, i))
                    .with_phase_jitter(at(&self.phase_jitter, i))
                    .with_rotation_jitter(at(&self.rotation_jitter, i))
                    .with_noise(at(&self.noise_sigma, i));
                p.validate().map_err(|e| ConfigError::for_key("synthetic", format!("class {i}: {e}")))?;
                Ok(p)
            })
            .collect()
    }

    pub fn generate(&self) -> Result<Dataset, crate::HarnessError> {
        let classes = self.classes()?;
        Ok(generate_synthetic(&classes, self.n_per_class, (self.height, self.width), self.seed)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FileSpec {
    pub path: PathBuf,
    /// Target (height, width); `None` keeps the native size.
    pub size: Option<(usize, usize)>,
    pub channels: usize,
}

impl Default for FileSpec {
    fn default() -> Self {
        Self { path: PathBuf::from("data"), size: None, channels: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrialMode {
    /// `count` trials, each on four distinct fabrics drawn uniformly.
    Random,
    /// Every fabric is the reference `placements` times, cycling its platform.
    Balanced,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialDef {
    pub reference: String,
    pub comparisons: [String; 4],
}

impl fmt::Display for TrialDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.reference, self.comparisons.join(","))
    }
}

impl std::str::FromStr for TrialDef {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (reference, rest) = s.split_once(':').ok_or_else(|| format!("`{s}` is not `reference:c1,c2,c3,c4`"))?;
        let comps: Vec<String> = rest.split(',').map(|c| c.trim().to_string()).collect();
        let comparisons: [String; 4] =
            comps.try_into().map_err(|v: Vec<String>| format!("`{s}` lists {} comparisons, expected 4", v.len()))?;
        Ok(Self { reference: reference.trim().to_string(), comparisons })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialPlan {
    pub mode: TrialMode,
    pub count: usize,
    pub placements: usize,
    pub seed: u64,
    pub list: Vec<TrialDef>,
}

impl Default for TrialPlan {
    fn default() -> Self {
        Self { mode: TrialMode::Random, count: 5, placements: 4, seed: 0, list: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RotationSetting {
    /// Symmetric range of the largest synthetic placement jitter; full circle for file data.
    Auto,
    Full,
    Degrees(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineSettings {
    pub epochs_baseline: usize,
    pub epochs_per_round: usize,
    pub augmentation: bool,
    pub copies: usize,
    pub rotation_range: RotationSetting,
    pub n_mc: usize,
    pub retrain: RetrainMode,
}

impl Default for EngineSettings {
    fn default() -> Self {
        let d = EngineParams::default();
        Self {
            epochs_baseline: d.epochs_baseline,
            epochs_per_round: d.epochs_per_round,
            augmentation: true,
            copies: d.augmentation.copies(),
            rotation_range: RotationSetting::Auto,
            n_mc: d.n_mc,
            retrain: d.retrain,
        }
    }
}

impl EngineSettings {
    pub fn resolve(&self, dataset: &Dataset) -> EngineParams {
        let range = match self.rotation_range {
            RotationSetting::Full => RotationRange::Full,
            RotationSetting::Degrees(d) => RotationRange::Symmetric(d),
            RotationSetting::Auto => match dataset.max_rotation_jitter() {
                Some(j) => RotationRange::Symmetric(j),
                None => RotationRange::Full,
            },
        };
        EngineParams {
            epochs_baseline: self.epochs_baseline,
            epochs_per_round: self.epochs_per_round,
            augmentation: if self.augmentation {
                Augmentation::Rotations { copies: self.copies, range }
            } else {
                Augmentation::Off
            },
            n_mc: self.n_mc,
            retrain: self.retrain,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub source: SourceKind,
    pub synthetic: SyntheticSpec,
    pub files: FileSpec,
    pub trials: TrialPlan,
    pub strategies: Vec<StrategyKind>,
    pub runs: usize,
    pub max_rounds: usize,
    pub seed: u64,
    pub engine: EngineSettings,
    pub classifier: ClassifierConfig,
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            source: SourceKind::Synthetic,
            synthetic: SyntheticSpec::default(),
            files: FileSpec::default(),
            trials: TrialPlan::default(),
            strategies: StrategyKind::ALL.to_vec(),
            runs: 1,
            max_rounds: 20,
            seed: 0,
            engine: EngineSettings::default(),
            classifier: ClassifierConfig::default(),
            output_dir: PathBuf::from("results"),
            workers: 0,
        }
    }
}

/// Keys that only affect where and how fast an experiment runs; they are
/// left out of the manifest snapshot.
pub const EXECUTION_KEYS: [&str; 2] = ["experiment.workers", "output.dir"];

fn join<T: fmt::Display>(items: &[T], sep: &str) -> String {
    items.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(sep)
}

fn parse_num<T: std::str::FromStr>(value: &str) -> Result<T, String> {
    value.parse().map_err(|_| format!("`{value}` is not a valid number"))
}

fn parse_list<T: std::str::FromStr>(value: &str) -> Result<Vec<T>, String> {
    value.split(',').map(|v| parse_num(v.trim())).collect()
}

fn parse_bool(value: &str) -> Result<bool, String> {
    match value {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        other => Err(format!("`{other}` is not on/off")),
    }
}

impl ExperimentConfig {
    /// Every key with its current value, in canonical order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let s = &self.synthetic;
        let c = &self.classifier;
        let e = &self.engine;
        vec![
            (
                "dataset.source",
                match self.source {
                    SourceKind::Synthetic => "synthetic".into(),
                    SourceKind::Files => "files".into(),
                },
            ),
            ("dataset.path", self.files.path.display().to_string()),
            ("dataset.height", self.files.size.map_or(0, |s| s.0).to_string()),
            ("dataset.width", self.files.size.map_or(0, |s| s.1).to_string()),
            ("dataset.channels", self.files.channels.to_string()),
            ("synthetic.orientation", join(&s.orientation, ",")),
            ("synthetic.frequency", join(&s.frequency, ",")),
            ("synthetic.phase_jitter", join(&s.phase_jitter, ",")),
            ("synthetic.rotation_jitter", join(&s.rotation_jitter, ",")),
            ("synthetic.noise_sigma", join(&s.noise_sigma, ",")),
            ("synthetic.n_per_class", s.n_per_class.to_string()),
            ("synthetic.height", s.height.to_string()),
            ("synthetic.width", s.width.to_string()),
            ("synthetic.seed", s.seed.to_string()),
            (
                "trials.mode",
                match self.trials.mode {
                    TrialMode::Random => "random".into(),
                    TrialMode::Balanced => "balanced".into(),
                    TrialMode::Explicit => "explicit".into(),
                },
            ),
            ("trials.count", self.trials.count.to_string()),
            ("trials.placements", self.trials.placements.to_string()),
            ("trials.seed", self.trials.seed.to_string()),
            ("trials.list", join(&self.trials.list, ";")),
            ("experiment.strategies", self.strategies.iter().map(|s| s.name()).collect::<Vec<_>>().join(",")),
            ("experiment.runs", self.runs.to_string()),
            ("experiment.max_rounds", self.max_rounds.to_string()),
            ("experiment.seed", self.seed.to_string()),
            ("experiment.workers", self.workers.to_string()),
            ("engine.epochs_baseline", e.epochs_baseline.to_string()),
            ("engine.epochs_per_round", e.epochs_per_round.to_string()),
            ("engine.augmentation", if e.augmentation { "on" } else { "off" }.into()),
            ("engine.copies", e.copies.to_string()),
            (
                "engine.rotation_range",
                match e.rotation_range {
                    RotationSetting::Auto => "auto".into(),
                    RotationSetting::Full => "full".into(),
                    RotationSetting::Degrees(d) => d.to_string(),
                },
            ),
            ("engine.n_mc", e.n_mc.to_string()),
            (
                "engine.retrain",
                match e.retrain {
                    RetrainMode::WarmStart => "warm".into(),
                    RetrainMode::FromScratch => "scratch".into(),
                },
            ),
            ("classifier.conv_channels", join(&c.conv_channels, ",")),
            ("classifier.dense_hidden_units", c.dense_hidden_units.to_string()),
            ("classifier.dropout_rate", c.dropout_rate.to_string()),
            ("classifier.learning_rate", c.learning_rate.to_string()),
            ("classifier.momentum", c.momentum.to_string()),
            ("classifier.batch_size", c.batch_size.to_string()),
            (
                "classifier.init",
                match c.init {
                    InitRule::He => "he".into(),
                    InitRule::LeCun => "lecun".into(),
                },
            ),
            ("output.dir", self.output_dir.display().to_string()),
        ]
    }

    /// Assigns one key. Errors carry the key but no line number.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        self.set_inner(key, value.trim()).map_err(|m| ConfigError::for_key(key, m))
    }

    fn set_inner(&mut self, key: &str, v: &str) -> Result<(), String> {
        let s = &mut self.synthetic;
        let c = &mut self.classifier;
        let e = &mut self.engine;
        match key {
            "dataset.source" => {
                self.source = match v {
                    "synthetic" => SourceKind::Synthetic,
                    "files" => SourceKind::Files,
                    other => return Err(format!("`{other}` is not synthetic/files")),
                }
            }
            "dataset.path" => self.files.path = PathBuf::from(v),
            "dataset.height" | "dataset.width" => {
                let n: usize = parse_num(v)?;
                let (mut h, mut w) = self.files.size.unwrap_or((0, 0));
                if key == "dataset.height" {
                    h = n;
                } else {
                    w = n;
                }
                self.files.size = if h == 0 && w == 0 { None } else { Some((h, w)) };
            }
            "dataset.channels" => self.files.channels = parse_num(v)?,
            "synthetic.orientation" => s.orientation = parse_list(v)?,
            "synthetic.frequency" => s.frequency = parse_list(v)?,
            "synthetic.phase_jitter" => s.phase_jitter = parse_list(v)?,
            "synthetic.rotation_jitter" => s.rotation_jitter = parse_list(v)?,
            "synthetic.noise_sigma" => s.noise_sigma = parse_list(v)?,
            "synthetic.n_per_class" => s.n_per_class = parse_num(v)?,
            "synthetic.height" => s.height = parse_num(v)?,
            "synthetic.width" => s.width = parse_num(v)?,
            "synthetic.seed" => s.seed = parse_num(v)?,
            "trials.mode" => {
                self.trials.mode = match v {
                    "random" => TrialMode::Random,
                    "balanced" => TrialMode::Balanced,
                    "explicit" => TrialMode::Explicit,
                    other => return Err(format!("`{other}` is not random/balanced/explicit")),
                }
            }
            "trials.count" => self.trials.count = parse_num(v)?,
            "trials.placements" => self.trials.placements = parse_num(v)?,
            "trials.seed" => self.trials.seed = parse_num(v)?,
            "trials.list" => {
                self.trials.list =
                    v.split(';').map(str::trim).filter(|t| !t.is_empty()).map(str::parse).collect::<Result<_, _>>()?
            }
            "experiment.strategies" => {
                self.strategies = v
                    .split(',')
                    .map(|s| s.trim().parse::<StrategyKind>().map_err(|e| e.to_string()))
                    .collect::<Result<_, _>>()?
            }
            "experiment.runs" => self.runs = parse_num(v)?,
            "experiment.max_rounds" => self.max_rounds = parse_num(v)?,
            "experiment.seed" => self.seed = parse_num(v)?,
            "experiment.workers" => self.workers = parse_num(v)?,
            "engine.epochs_baseline" => e.epochs_baseline = parse_num(v)?,
            "engine.epochs_per_round" => e.epochs_per_round = parse_num(v)?,
            "engine.augmentation" => e.augmentation = parse_bool(v)?,
            "engine.copies" => e.copies = parse_num(v)?,
            "engine.rotation_range" => {
                e.rotation_range = match v {
                    "auto" => RotationSetting::Auto,
                    "full" => RotationSetting::Full,
                    deg => RotationSetting::Degrees(parse_num(deg)?),
                }
            }
            "engine.n_mc" => e.n_mc = parse_num(v)?,
            "engine.retrain" => {
                e.retrain = match v {
                    "warm" => RetrainMode::WarmStart,
                    "scratch" => RetrainMode::FromScratch,
                    other => return Err(format!("`{other}` is not warm/scratch")),
                }
            }
            "classifier.conv_channels" => c.conv_channels = parse_list(v)?,
            "classifier.dense_hidden_units" => c.dense_hidden_units = parse_num(v)?,
            "classifier.dropout_rate" => c.dropout_rate = parse_num(v)?,
            "classifier.learning_rate" => c.learning_rate = parse_num(v)?,
            "classifier.momentum" => c.momentum = parse_num(v)?,
            "classifier.batch_size" => c.batch_size = parse_num(v)?,
            "classifier.init" => {
                c.init = match v {
                    "he" => InitRule::He,
                    "lecun" => InitRule::LeCun,
                    other => return Err(format!("`{other}` is not he/lecun")),
                }
            }
            "output.dir" => self.output_dir = PathBuf::from(v),
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of the current values. Blank lines
    /// and lines starting with `#` are ignored; a key may appear once.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        let mut seen = std::collections::BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) =
                line.split_once('=').ok_or_else(|| ConfigError::new("expected `key = value`").at_line(i + 1))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::for_key(key, "duplicate key").at_line(i + 1));
            }
            self.set(key, value).map_err(|e| e.at_line(i + 1))?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, crate::HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| crate::HarnessError::io(path, e))?;
        Ok(Self::parse(&text)?)
    }

    /// Applies `key=value` overrides, typically from the command line.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<(), ConfigError> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) =
                o.split_once('=').ok_or_else(|| ConfigError::new(format!("override `{o}` is not key=value")))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    /// Every key except [`EXECUTION_KEYS`], one `key = value` per line.
    pub fn snapshot(&self) -> String {
        self.entries()
            .into_iter()
            .filter(|(k, _)| !EXECUTION_KEYS.contains(k))
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.runs == 0 {
            return Err(ConfigError::for_key("experiment.runs", "must be >= 1"));
        }
        if self.strategies.is_empty() {
            return Err(ConfigError::for_key("experiment.strategies", "at least one strategy is required"));
        }
        let mut sorted = self.strategies.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.strategies.len() {
            return Err(ConfigError::for_key("experiment.strategies", "strategies must be distinct"));
        }
        if self.engine.n_mc == 0 {
            return Err(ConfigError::for_key("engine.n_mc", "must be >= 1"));
        }
        if self.engine.copies == 0 {
            return Err(ConfigError::for_key("engine.copies", "must be >= 1"));
        }
        if let RotationSetting::Degrees(d) = self.engine.rotation_range {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(ConfigError::for_key("engine.rotation_range", "must be auto, full or degrees >= 0"));
            }
        }
        match self.trials.mode {
            TrialMode::Random if self.trials.count == 0 => {
                return Err(ConfigError::for_key("trials.count", "must be >= 1"));
            }
            TrialMode::Balanced if self.trials.placements == 0 => {
                return Err(ConfigError::for_key("trials.placements", "must be >= 1"));
            }
            TrialMode::Explicit if self.trials.list.is_empty() => {
                return Err(ConfigError::for_key("trials.list", "explicit mode needs at least one trial"));
            }
            _ => {}
        }
        match self.source {
            SourceKind::Synthetic => {
                self.synthetic.classes()?;
            }
            SourceKind::Files => {
                if !(self.files.channels == 1 || self.files.channels == 3) {
                    return Err(ConfigError::for_key("dataset.channels", "must be 1 or 3"));
                }
                if let Some((h, w)) = self.files.size {
                    if h == 0 || w == 0 {
                        return Err(ConfigError::for_key("dataset.height", "height and width must both be set"));
                    }
                }
            }
        }
        // input_shape and num_classes are filled in per dataset
        let mut probe = self.classifier.clone();
        probe.num_classes = 4;
        probe.input_shape = match self.source {
            SourceKind::Synthetic => (self.synthetic.height, self.synthetic.width, 1),
            SourceKind::Files => {
                let (h, w) = self.files.size.unwrap_or((probe.input_shape.0, probe.input_shape.1));
                (h, w, self.files.channels)
            }
        };
        probe.validate().map_err(|e| ConfigError::for_key("classifier", e.to_string()))?;
        Ok(())
    }

    /// Loads or generates the configured dataset.
    pub fn dataset(&self) -> Result<Dataset, crate::HarnessError> {
        match self.source {
            SourceKind::Synthetic => self.synthetic.generate(),
            SourceKind::Files => Ok(crate::io::load_dataset(
                &self.files.path,
                &crate::io::LoadOptions { size: self.files.size, channels: self.files.channels },
            )?),
        }
    }
}
