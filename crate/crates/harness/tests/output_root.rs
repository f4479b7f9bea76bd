mod common;

use active_texture::experiment::{run_experiment, OUTPUT_ROOT_ENV};
use active_texture_core::StrategyKind;

// Alone in its binary: the test mutates the process environment.
#[test]
fn relative_output_dirs_resolve_under_the_root_variable() {
    let root = tempfile::tempdir().unwrap();
    std::env::set_var(OUTPUT_ROOT_ENV, root.path());
    let mut cfg = common::tiny("nested/out".as_ref());
    cfg.strategies = vec![StrategyKind::Yoto];
    let out = run_experiment(&cfg).unwrap();
    assert_eq!(out.dir, root.path().join("nested/out"));
    assert!(root.path().join("nested/out/manifest.txt").exists());

    let absolute = tempfile::tempdir().unwrap();
    cfg.output_dir = absolute.path().to_path_buf();
    assert_eq!(run_experiment(&cfg).unwrap().dir, absolute.path());
}
