mod common;

use std::fs;

use active_texture::experiment::run_experiment;
use active_texture::sweep::{ablation_sweep, Setting, SweepAxis, TABLE_FILE};
use active_texture_core::StrategyKind;
use common::{tiny, tree};

#[test]
fn axes_parse() {
    assert_eq!(SweepAxis::parse("dropout=0.05, 0.5").unwrap(), SweepAxis::DropoutRate(vec![0.05, 0.5]));
    assert_eq!(SweepAxis::parse("augmentation=on,off").unwrap(), SweepAxis::Augmentation(vec![true, false]));
    for bad in ["dropout", "dropout=", "augmentation=maybe", "lr=0.1"] {
        assert!(SweepAxis::parse(bad).is_err(), "{bad}");
    }
}

#[test]
fn single_setting_sweep_equals_a_plain_run() {
    let sweep_dir = tempfile::tempdir().unwrap();
    let plain_dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(sweep_dir.path());
    cfg.strategies = vec![StrategyKind::Entropy, StrategyKind::Yoto];
    let out = ablation_sweep(&cfg, &SweepAxis::DropoutRate(vec![0.25])).unwrap();
    assert_eq!(out.table.len(), 2);
    cfg.output_dir = plain_dir.path().to_path_buf();
    let plain = run_experiment(&cfg).unwrap();
    let setting_tree: Vec<_> =
        tree(&sweep_dir.path().join("dropout_0.25")).into_iter().filter(|(p, _)| !p.ends_with("timing.txt")).collect();
    let plain_tree: Vec<_> = tree(plain_dir.path()).into_iter().filter(|(p, _)| !p.ends_with("timing.txt")).collect();
    assert_eq!(setting_tree, plain_tree);

    let table = fs::read_to_string(sweep_dir.path().join(TABLE_FILE)).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows[0], "setting,strategy,final_mean,final_std,n");
    assert_eq!(rows.len(), 3);
    let (mean, std, n) = plain.final_accuracy(StrategyKind::Entropy);
    assert_eq!(rows[1], format!("dropout_0.25,entropy,{mean},{std},{n}"));
}

#[test]
fn augmentation_axis_switches_the_training_pool() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    cfg.strategies = vec![StrategyKind::Random];
    cfg.trials.count = 1;
    let out = ablation_sweep(&cfg, &SweepAxis::Augmentation(vec![true, false])).unwrap();
    assert_eq!(out.settings.len(), 2);
    for (setting, exp) in &out.settings {
        let params = exp.manifest.config.engine.resolve(&exp.manifest.config.dataset().unwrap());
        let copies = if *setting == Setting::Augmentation(true) { 3 } else { 1 };
        assert_eq!(params.augmentation.copies(), copies);
    }
    assert!(dir.path().join("augmentation_on/manifest.txt").exists());
    assert!(dir.path().join("augmentation_off/manifest.txt").exists());
    assert!(out.row(Setting::Augmentation(false), StrategyKind::Random).is_some());
    assert!(ablation_sweep(&cfg, &SweepAxis::Augmentation(vec![true, true])).is_err());
}
