#![allow(dead_code)]

use std::path::{Path, PathBuf};

use active_texture::config::ExperimentConfig;

pub const TINY: &str = "
synthetic.height = 12
synthetic.width = 12
synthetic.n_per_class = 6
synthetic.frequency = 3
classifier.conv_channels = 2
classifier.dense_hidden_units = 6
engine.n_mc = 4
engine.epochs_baseline = 2
engine.epochs_per_round = 1
engine.copies = 3
experiment.max_rounds = 3
trials.count = 3
";

pub fn tiny(out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::parse(TINY).unwrap();
    cfg.output_dir = out.to_path_buf();
    cfg
}

/// Relative path and contents of every file under `dir`, sorted.
pub fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    fn walk(base: &Path, dir: &Path, out: &mut Vec<(PathBuf, Vec<u8>)>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(base, &path, out);
            } else {
                out.push((path.strip_prefix(base).unwrap().to_path_buf(), std::fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}
