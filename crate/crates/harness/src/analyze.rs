//! Post-hoc analysis of an experiment directory, optionally against human logs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use active_texture_core::{
    compare_strategies, confusion_from_outcomes, js_distance, most_touched_equals_prediction, Explorable,
    ExplorationProfile, HumanLog, StrategyKind, VisitEvent,
};

use crate::error::{HarnessError, Result};
use crate::experiment::{confusion_csv, load_cells, write_atomic, CellRecord, Manifest};

pub const HUMAN_LOG_HEADER: [&str; 6] =
    ["participant_id", "trial_id", "event_index", "object_index", "duration_s", "final_answer"];

/// Parses a human-study log. Rows of one (participant, trial) share a final
/// answer and are ordered by `event_index`; groups keep first-seen order.
pub fn parse_human_log(text: &str) -> Result<Vec<HumanLog>> {
    let bad = |line: usize, message: String| HarnessError::LogParse { line, message };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| bad(1, "empty log".into()))?;
    let header: Vec<&str> = header.split(',').map(str::trim).collect();
    if header != HUMAN_LOG_HEADER {
        return Err(bad(1, format!("expected header {}", HUMAN_LOG_HEADER.join(","))));
    }
    let mut logs: Vec<HumanLog> = Vec::new();
    let mut events: Vec<Vec<(usize, VisitEvent)>> = Vec::new();
    let mut first_line: Vec<usize> = Vec::new();
    for (i, line) in lines {
        let n = i + 1;
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != HUMAN_LOG_HEADER.len() {
            return Err(bad(n, format!("expected {} fields, found {}", HUMAN_LOG_HEADER.len(), f.len())));
        }
        let int = |k: usize| {
            f[k].parse::<usize>().map_err(|_| bad(n, format!("{} `{}` is not an integer", HUMAN_LOG_HEADER[k], f[k])))
        };
        let event_index = int(2)?;
        let object_index = int(3)?;
        let final_answer = int(5)?;
        let duration_s: f64 = f[4].parse().map_err(|_| bad(n, format!("duration_s `{}` is not a number", f[4])))?;
        if object_index > 4 {
            return Err(bad(n, format!("object_index {object_index} not in 0..=4")));
        }
        if !(duration_s > 0.0 && duration_s.is_finite()) {
            return Err(bad(n, format!("duration_s {duration_s} must be positive")));
        }
        if !(1..=4).contains(&final_answer) {
            return Err(bad(n, format!("final_answer {final_answer} not in 1..=4")));
        }
        let pos = logs.iter().position(|l| l.participant_id == f[0] && l.trial_id == f[1]);
        let pos = match pos {
            Some(p) if logs[p].final_answer != final_answer => {
                return Err(bad(n, "final_answer differs within one trial".into()));
            }
            Some(p) => p,
            None => {
                logs.push(HumanLog {
                    participant_id: f[0].to_string(),
                    trial_id: f[1].to_string(),
                    visits: Vec::new(),
                    final_answer,
                    correct: None,
                });
                events.push(Vec::new());
                first_line.push(n);
                logs.len() - 1
            }
        };
        if events[pos].iter().any(|(e, _)| *e == event_index) {
            return Err(bad(n, format!("duplicate event_index {event_index}")));
        }
        events[pos].push((event_index, VisitEvent { object_index, duration_s }));
    }
    for ((log, mut ev), line) in logs.iter_mut().zip(events).zip(first_line) {
        ev.sort_by_key(|(e, _)| *e);
        log.visits = ev.into_iter().map(|(_, v)| v).collect();
        log.validate().map_err(|e| bad(line, e.to_string()))?;
    }
    Ok(logs)
}

/// Maps a log trial id (`3`, `trial_003`) onto a manifest trial index.
pub fn trial_index(trial_id: &str, trials: usize) -> Option<usize> {
    let digits = trial_id.strip_prefix("trial_").unwrap_or(trial_id);
    digits.parse::<usize>().ok().filter(|&t| t < trials)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HumanDistance {
    pub participant_id: String,
    pub strategy: StrategyKind,
    pub mean_js: f64,
    /// (log trial, robot run) pairs averaged.
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub strategies: Vec<StrategyKind>,
    /// Symmetric, zero diagonal, indexed like `strategies`.
    pub js_matrix: Vec<Vec<f64>>,
    pub most_touched: Vec<(StrategyKind, f64)>,
    pub human_most_touched: Option<f64>,
    pub human_distances: Vec<HumanDistance>,
    pub files: Vec<PathBuf>,
}

fn profiles(records: &[&CellRecord]) -> Result<Vec<((usize, usize), ExplorationProfile)>> {
    let mut out: Vec<_> =
        records.iter().map(|r| Ok(((r.key.trial, r.key.run), r.exploration_profile()?))).collect::<Result<_>>()?;
    out.sort_by_key(|(k, _)| *k);
    Ok(out)
}

fn human_distances(
    logs: &[HumanLog],
    manifest: &Manifest,
    by_strategy: &BTreeMap<StrategyKind, Vec<&CellRecord>>,
) -> Result<Vec<HumanDistance>> {
    let mut participants: Vec<&str> = logs.iter().map(|l| l.participant_id.as_str()).collect();
    participants.sort();
    participants.dedup();
    let mut out = Vec::new();
    for p in participants {
        for &strategy in &manifest.config.strategies {
            let records = &by_strategy[&strategy];
            let mut total = 0.0;
            let mut pairs = 0;
            for log in logs.iter().filter(|l| l.participant_id == p) {
                let Some(t) = trial_index(&log.trial_id, manifest.trials.len()) else { continue };
                let human = log.exploration_profile()?;
                for r in records.iter().filter(|r| r.key.trial == t) {
                    total += js_distance(&human.weights, &r.exploration_profile()?.weights)?;
                    pairs += 1;
                }
            }
            if pairs > 0 {
                out.push(HumanDistance {
                    participant_id: p.to_string(),
                    strategy,
                    mean_js: total / pairs as f64,
                    pairs,
                });
            }
        }
    }
    Ok(out)
}

/// Reads an experiment directory and writes its analyses under `analysis/`.
pub fn analyze(results_dir: &Path, human_log: Option<&Path>) -> Result<Analysis> {
    let manifest = Manifest::read(results_dir)?;
    let records = load_cells(results_dir, &manifest, false)?;
    let strategies = manifest.config.strategies.clone();
    let mut by_strategy: BTreeMap<StrategyKind, Vec<&CellRecord>> = BTreeMap::new();
    for r in &records {
        by_strategy.entry(r.key.strategy).or_default().push(r);
    }
    let out_dir = results_dir.join("analysis");
    let mut files = Vec::new();
    let mut emit = |name: String, text: String| -> Result<()> {
        let path = out_dir.join(name);
        write_atomic(&path, text.as_bytes())?;
        files.push(path);
        Ok(())
    };

    let n = strategies.len();
    let mut js_matrix = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d =
                compare_strategies(&profiles(&by_strategy[&strategies[i]])?, &profiles(&by_strategy[&strategies[j]])?)?;
            js_matrix[i][j] = d;
            js_matrix[j][i] = d;
        }
    }
    let names: Vec<&str> = strategies.iter().map(|s| s.name()).collect();
    let mut text = format!("strategy,{}\n", names.join(","));
    for (name, row) in names.iter().zip(&js_matrix) {
        let cells: Vec<String> = row.iter().map(f64::to_string).collect();
        let _ = writeln!(text, "{name},{}", cells.join(","));
    }
    emit("js_matrix.csv".into(), text)?;

    let universe = manifest.fabric_universe();
    let mut most_touched = Vec::new();
    let mut text = String::from("source,fraction,trials\n");
    for &s in &strategies {
        let subset: Vec<CellRecord> = by_strategy[&s].iter().map(|r| (*r).clone()).collect();
        let f = most_touched_equals_prediction(&subset)?;
        let _ = writeln!(text, "{},{f},{}", s.name(), subset.len());
        most_touched.push((s, f));
        let cm = confusion_from_outcomes(subset.iter().map(|r| (&r.spec, r.final_prediction())), &universe)?;
        emit(format!("confusion_{}.csv", s.name()), confusion_csv(&cm))?;
    }

    let mut human_most_touched = None;
    let mut distances = Vec::new();
    if let Some(path) = human_log {
        let log_text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let logs = parse_human_log(&log_text)?;
        if !logs.is_empty() {
            let f = most_touched_equals_prediction(&logs)?;
            let _ = writeln!(text, "human,{f},{}", logs.len());
            human_most_touched = Some(f);
        }
        let mut outcomes = Vec::new();
        for log in &logs {
            if let Some(t) = trial_index(&log.trial_id, manifest.trials.len()) {
                outcomes.push((manifest.spec(t, 0), log.final_answer));
            }
        }
        let cm = confusion_from_outcomes(outcomes.iter().map(|(s, a)| (s, *a)), &universe)?;
        emit("confusion_human.csv".into(), confusion_csv(&cm))?;
        distances = human_distances(&logs, &manifest, &by_strategy)?;
        let mut dt = String::from("participant_id,strategy,mean_js,trials\n");
        for d in &distances {
            let _ = writeln!(dt, "{},{},{},{}", d.participant_id, d.strategy.name(), d.mean_js, d.pairs);
        }
        emit("human_js.csv".into(), dt)?;
    }
    emit("most_touched.csv".into(), text)?;

    Ok(Analysis { strategies, js_matrix, most_touched, human_most_touched, human_distances: distances, files })
}
