//! Ablation sweeps: one full experiment per setting plus a final-accuracy table.

use std::fmt::{self, Write as _};
use std::path::PathBuf;

use active_texture_core::StrategyKind;

use crate::config::{ConfigError, ExperimentConfig};
use crate::error::Result;
use crate::experiment::{resolve_output_dir, run_experiment, write_atomic, ExperimentOutcome};

pub const TABLE_FILE: &str = "ablation_table.csv";

#[derive(Debug, Clone, PartialEq)]
pub enum SweepAxis {
    DropoutRate(Vec<f64>),
    /// `true` runs with augmentation, `false` with the raw touch only.
    Augmentation(Vec<bool>),
}

impl SweepAxis {
    /// Parses `dropout=0.05,0.25` or `augmentation=on,off`.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let (name, values) =
            text.split_once('=').ok_or_else(|| ConfigError::new(format!("sweep axis `{text}` is not name=values")))?;
        let values: Vec<&str> = values.split(',').map(str::trim).filter(|v| !v.is_empty()).collect();
        if values.is_empty() {
            return Err(ConfigError::new("sweep axis has no values"));
        }
        match name.trim() {
            "dropout" | "classifier.dropout_rate" => values
                .iter()
                .map(|v| v.parse::<f64>().map_err(|_| ConfigError::new(format!("`{v}` is not a dropout rate"))))
                .collect::<Result<_, _>>()
                .map(Self::DropoutRate),
            "augmentation" | "engine.augmentation" => values
                .iter()
                .map(|v| match *v {
                    "on" | "true" => Ok(true),
                    "off" | "false" => Ok(false),
                    other => Err(ConfigError::new(format!("`{other}` is not on/off"))),
                })
                .collect::<Result<_, _>>()
                .map(Self::Augmentation),
            other => Err(ConfigError::new(format!("unknown sweep axis `{other}` (dropout, augmentation)"))),
        }
    }

    fn settings(&self) -> Vec<Setting> {
        match self {
            Self::DropoutRate(v) => v.iter().map(|&r| Setting::Dropout(r)).collect(),
            Self::Augmentation(v) => v.iter().map(|&a| Setting::Augmentation(a)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Setting {
    Dropout(f64),
    Augmentation(bool),
}

impl Setting {
    fn apply(self, cfg: &mut ExperimentConfig) {
        match self {
            Self::Dropout(r) => cfg.classifier.dropout_rate = r,
            Self::Augmentation(a) => cfg.engine.augmentation = a,
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Dropout(r) => write!(f, "dropout_{r}"),
            Self::Augmentation(a) => write!(f, "augmentation_{}", if *a { "on" } else { "off" }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub setting: Setting,
    pub strategy: StrategyKind,
    pub final_mean: f64,
    pub final_std: f64,
    pub n: usize,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub dir: PathBuf,
    pub settings: Vec<(Setting, ExperimentOutcome)>,
    pub table: Vec<TableRow>,
}

impl SweepOutcome {
    pub fn row(&self, setting: Setting, strategy: StrategyKind) -> Option<&TableRow> {
        self.table.iter().find(|r| r.setting == setting && r.strategy == strategy)
    }
}

/// Runs `base` once per axis value, each in `<output>/<setting>/`.
pub fn ablation_sweep(base: &ExperimentConfig, axis: &SweepAxis) -> Result<SweepOutcome> {
    let settings = axis.settings();
    let mut seen = Vec::new();
    for s in &settings {
        if seen.contains(s) {
            return Err(ConfigError::new(format!("sweep setting {s} appears twice")).into());
        }
        seen.push(*s);
    }
    let root = resolve_output_dir(&base.output_dir);
    let mut outcomes = Vec::new();
    let mut table = Vec::new();
    for setting in settings {
        let mut cfg = base.clone();
        setting.apply(&mut cfg);
        cfg.output_dir = root.join(setting.to_string());
        let outcome = run_experiment(&cfg)?;
        for &strategy in &cfg.strategies {
            let (final_mean, final_std, n) = outcome.final_accuracy(strategy);
            table.push(TableRow { setting, strategy, final_mean, final_std, n });
        }
        outcomes.push((setting, outcome));
    }
    let mut text = String::from("setting,strategy,final_mean,final_std,n\n");
    for r in &table {
        let _ = writeln!(text, "{},{},{},{},{}", r.setting, r.strategy.name(), r.final_mean, r.final_std, r.n);
    }
    write_atomic(&root.join(TABLE_FILE), text.as_bytes())?;
    Ok(SweepOutcome { dir: root, settings: outcomes, table })
}
