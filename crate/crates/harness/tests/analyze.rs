mod common;

use std::fs;

use active_texture::analyze::{analyze, parse_human_log, trial_index};
use active_texture::experiment::run_experiment;
use active_texture::HarnessError;
use active_texture_core::{Explorable, StrategyKind};
use common::tiny;

const HEADER: &str = "participant_id,trial_id,event_index,object_index,duration_s,final_answer\n";

#[test]
fn analysis_of_a_finished_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&tiny(dir.path())).unwrap();

    // uniform dwell times on trial 0 and 1, a skewed participant on trial 2
    let mut log = String::from(HEADER);
    for (p, t) in [("p1", "0"), ("p1", "trial_001"), ("p2", "0")] {
        for o in 0..5 {
            log.push_str(&format!("{p},{t},{o},{o},2.5,1\n"));
        }
    }
    log.push_str("p2,2,0,3,9.0,3\np2,2,1,0,1.0,3\n");
    let log_path = dir.path().join("log.csv");
    fs::write(&log_path, log).unwrap();

    let a = analyze(dir.path(), Some(&log_path)).unwrap();
    assert_eq!(a.strategies, StrategyKind::ALL);
    for i in 0..4 {
        assert_eq!(a.js_matrix[i][i], 0.0);
        for j in 0..4 {
            assert_eq!(a.js_matrix[i][j], a.js_matrix[j][i]);
            assert!((0.0..=1.0).contains(&a.js_matrix[i][j]));
        }
    }
    // YOTO touches every object once
    let yoto = a.most_touched.iter().find(|(s, _)| *s == StrategyKind::Yoto).unwrap();
    assert_eq!(yoto.1, 1.0);
    let p1_yoto =
        a.human_distances.iter().find(|d| d.participant_id == "p1" && d.strategy == StrategyKind::Yoto).unwrap();
    assert_eq!((p1_yoto.mean_js, p1_yoto.pairs), (0.0, 2));
    let p2_yoto =
        a.human_distances.iter().find(|d| d.participant_id == "p2" && d.strategy == StrategyKind::Yoto).unwrap();
    assert!(p2_yoto.mean_js > 0.0);
    assert_eq!(a.human_most_touched, Some(1.0));

    for name in ["js_matrix.csv", "most_touched.csv", "human_js.csv", "confusion_human.csv", "confusion_yoto.csv"] {
        assert!(dir.path().join("analysis").join(name).exists(), "{name}");
    }
    let human_cm = fs::read_to_string(dir.path().join("analysis/confusion_human.csv")).unwrap();
    let total: u64 = human_cm
        .lines()
        .skip(1)
        .flat_map(|r| r.split(',').skip(1).map(|c| c.parse::<u64>().unwrap()).collect::<Vec<_>>())
        .sum();
    assert_eq!(total, 4);
    assert_eq!(out.records.len(), 12);
}

#[test]
fn analysis_needs_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(analyze(dir.path(), None), Err(HarnessError::Manifest(_))));
    fs::write(dir.path().join("manifest.txt"), "format = 1\n[config]\nbogus.key = 3\n").unwrap();
    assert!(matches!(analyze(dir.path(), None), Err(HarnessError::Manifest(_))));
}

fn parse_err_line(body: &str) -> usize {
    match parse_human_log(&format!("{HEADER}{body}")) {
        Err(HarnessError::LogParse { line, .. }) => line,
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn malformed_logs_report_their_line() {
    assert_eq!(parse_err_line("p,0,0,0,1.0,1\np,0,1,5,1.0,1\n"), 3);
    assert_eq!(parse_err_line("p,0,0,0,0,1\n"), 2);
    assert_eq!(parse_err_line("p,0,0,0,1.0,5\n"), 2);
    assert_eq!(parse_err_line("p,0,0,0,1.0\n"), 2);
    assert_eq!(parse_err_line("p,0,0,0,abc,1\n"), 2);
    assert_eq!(parse_err_line("p,0,0,0,1.0,1\np,0,0,1,1.0,1\n"), 3);
    assert_eq!(parse_err_line("p,0,0,0,1.0,1\n\np,0,1,1,1.0,2\n"), 4);
    assert!(matches!(parse_human_log("a,b\n"), Err(HarnessError::LogParse { line: 1, .. })));
}

#[test]
fn log_events_are_ordered_by_event_index() {
    let logs = parse_human_log(&format!("{HEADER}p,0,1,2,3.0,2\nq,0,0,1,1.0,1\np,0,0,4,1.0,2\n")).unwrap();
    assert_eq!(logs.len(), 2);
    assert_eq!(logs[0].visits.iter().map(|v| v.object_index).collect::<Vec<_>>(), [4, 2]);
    let profile = logs[0].exploration_profile().unwrap();
    assert_eq!(profile.weights, [0.0, 0.0, 0.75, 0.0, 0.25]);
    assert_eq!(trial_index("trial_004", 5), Some(4));
    assert_eq!(trial_index("5", 5), None);
    assert_eq!(trial_index("x", 5), None);
}
