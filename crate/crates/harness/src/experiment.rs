//! Experiment orchestration: trial planning, seeded cells, result files,
//! summaries, manifests and resumption.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use active_texture_core::engine::OBJECTS;
use active_texture_core::rng::{self, StreamRng};
use active_texture_core::{
    confusion_from_outcomes, run_trial, summarize_rounds, summarize_values, ConfusionMatrix, Dataset, EngineParams,
    Explorable, ExplorationProfile, MetricKind, MetricsError, ProfileSource, RoundValues, StrategyKind, SummaryRow,
    TrialResult, TrialSpec,
};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::{ConfigError, ExperimentConfig, TrialDef, TrialMode};
use crate::error::{HarnessError, Result};

/// Relative output directories resolve against this variable when set.
pub const OUTPUT_ROOT_ENV: &str = "ACTIVE_TEXTURE_OUTPUT_ROOT";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const INDEX_FILE: &str = "index.csv";
pub const TIMING_FILE: &str = "timing.txt";
pub const FAILURE_FILE: &str = "FAILED";
pub const RESULT_HEADER: [&str; 10] = [
    "trial_id",
    "run_id",
    "strategy",
    "round",
    "predicted",
    "correct",
    "train_acc",
    "mean_variance",
    "mean_entropy",
    "touched_platform",
];
const MANIFEST_FORMAT: &str = "1";

pub fn resolve_output_dir(dir: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if dir.is_relative() => PathBuf::from(root).join(dir),
        _ => dir.to_path_buf(),
    }
}

fn fabric_ids(dataset: &Dataset) -> Vec<String> {
    dataset.fabric_ids().map(str::to_string).collect()
}

fn trial_with(rng: &mut StreamRng, ids: &[String], reference: &str, platform: usize) -> Result<TrialDef, ConfigError> {
    let mut others: Vec<&String> = ids.iter().filter(|f| *f != reference).collect();
    if others.len() < 3 {
        return Err(ConfigError::new(format!("trials need at least 4 fabrics, dataset has {}", ids.len())));
    }
    others.shuffle(rng);
    let mut comps: Vec<String> = others[..3].iter().map(|s| s.to_string()).collect();
    comps.insert(platform - 1, reference.to_string());
    Ok(TrialDef { reference: reference.to_string(), comparisons: comps.try_into().expect("four comparisons") })
}

/// Resolves the configured trial list against the dataset's fabrics.
pub fn plan_trials(cfg: &ExperimentConfig, dataset: &Dataset) -> Result<Vec<TrialDef>> {
    let ids = fabric_ids(dataset);
    let trials = match cfg.trials.mode {
        TrialMode::Explicit => cfg.trials.list.clone(),
        TrialMode::Random => (0..cfg.trials.count as u64)
            .map(|t| {
                let mut r = rng::stream(cfg.trials.seed, &[rng::tag("trial-plan"), t]);
                let reference = ids[r.random_range(0..ids.len())].clone();
                let platform = r.random_range(1..=4);
                trial_with(&mut r, &ids, &reference, platform)
            })
            .collect::<Result<_, _>>()?,
        TrialMode::Balanced => {
            let mut out = Vec::new();
            for (f, reference) in ids.iter().enumerate() {
                for j in 0..cfg.trials.placements {
                    let mut r = rng::stream(cfg.trials.seed, &[rng::tag("trial-plan"), f as u64, j as u64]);
                    out.push(trial_with(&mut r, &ids, reference, j % 4 + 1)?);
                }
            }
            out
        }
    };
    for t in &trials {
        let spec = TrialSpec::new(t.reference.clone(), t.comparisons.each_ref().map(String::as_str), 1, 0);
        spec.validate().map_err(|e| ConfigError::new(format!("trial `{t}`: {e}")))?;
        for f in std::iter::once(&t.reference).chain(&t.comparisons) {
            if dataset.fabric(f).is_none() {
                return Err(ConfigError::new(format!("trial `{t}` uses unknown fabric `{f}`")).into());
            }
        }
    }
    Ok(trials)
}

/// Seed shared by every strategy for one (trial, run).
pub fn cell_seed(master: u64, trial: usize, run: usize) -> u64 {
    rng::derive_seed(master, &[rng::tag("cell"), trial as u64, run as u64])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct CellKey {
    pub strategy: StrategyKind,
    pub trial: usize,
    pub run: usize,
}

impl CellKey {
    pub fn relative_path(&self) -> PathBuf {
        Path::new("trials").join(self.strategy.name()).join(format!("trial_{:03}_run_{:02}.csv", self.trial, self.run))
    }
}

/// One row of a trial result file.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub round: usize,
    pub predicted: usize,
    pub correct: bool,
    pub train_acc: f64,
    pub mean_variance: f64,
    pub mean_entropy: f64,
    pub touched: Option<usize>,
}

impl RoundValues for ResultRow {
    fn round(&self) -> usize {
        self.round
    }
    fn correct(&self) -> bool {
        self.correct
    }
    fn mean_variance(&self) -> f64 {
        self.mean_variance
    }
    fn mean_entropy(&self) -> f64 {
        self.mean_entropy
    }
}

/// A finished (strategy, trial, run) cell as recorded on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct CellRecord {
    pub key: CellKey,
    pub spec: TrialSpec,
    /// Round 0 (after the initial touches) followed by rounds 1..=max_rounds.
    pub rows: Vec<ResultRow>,
}

impl CellRecord {
    pub fn active_rows(&self) -> &[ResultRow] {
        &self.rows[1..]
    }

    pub fn final_prediction(&self) -> usize {
        self.rows.last().expect("at least the baseline row").predicted
    }

    pub fn final_correct(&self) -> bool {
        self.rows.last().expect("at least the baseline row").correct
    }

    /// Touches per object: one initial touch each plus every active touch.
    pub fn touch_counts(&self) -> [usize; OBJECTS] {
        let mut counts = [1; OBJECTS];
        for t in self.rows.iter().filter_map(|r| r.touched) {
            counts[t] += 1;
        }
        counts
    }
}

impl Explorable for CellRecord {
    fn exploration_profile(&self) -> Result<ExplorationProfile, MetricsError> {
        ExplorationProfile::from_amounts(self.touch_counts().map(|c| c as f64), ProfileSource::RobotTouchCounts)
    }

    fn final_choice(&self) -> usize {
        self.final_prediction()
    }
}

fn rows_from_result(result: &TrialResult) -> Vec<ResultRow> {
    std::iter::once(&result.baseline)
        .chain(&result.rounds)
        .map(|m| ResultRow {
            round: m.round,
            predicted: m.predicted,
            correct: m.correct,
            train_acc: m.train_accuracy,
            mean_variance: m.mean_variance,
            mean_entropy: m.mean_entropy,
            touched: m.touched,
        })
        .collect()
}

fn result_csv(key: &CellKey, rows: &[ResultRow]) -> String {
    let mut out = RESULT_HEADER.join(",");
    out.push('\n');
    for r in rows {
        let touched = r.touched.map(|t| t.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            key.trial,
            key.run,
            key.strategy.name(),
            r.round,
            r.predicted,
            u8::from(r.correct),
            r.train_acc,
            r.mean_variance,
            r.mean_entropy,
            touched
        );
    }
    out
}

fn parse_result_csv(path: &Path, key: &CellKey) -> Result<Vec<ResultRow>> {
    let bad = |message: String| HarnessError::ResultFile { path: path.to_path_buf(), message };
    let mut reader = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.iter().ne(RESULT_HEADER) {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let field = |i: usize| record.get(i).unwrap_or_default();
        let num = |i: usize| field(i).parse::<f64>().map_err(|_| bad(format!("bad number `{}`", field(i))));
        let int = |i: usize| field(i).parse::<usize>().map_err(|_| bad(format!("bad integer `{}`", field(i))));
        if int(0)? != key.trial || int(1)? != key.run || field(2) != key.strategy.name() {
            return Err(bad("row does not belong to this cell".into()));
        }
        rows.push(ResultRow {
            round: int(3)?,
            predicted: int(4)?,
            correct: int(5)? == 1,
            train_acc: num(6)?,
            mean_variance: num(7)?,
            mean_entropy: num(8)?,
            touched: if field(9).is_empty() { None } else { Some(int(9)?) },
        });
    }
    Ok(rows)
}

/// Writes `contents` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| HarnessError::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| HarnessError::io(path, e))?;
    tmp.persist(path).map_err(|e| HarnessError::io(path, e.error))?;
    Ok(())
}

/// Resolved description of an experiment: the config snapshot, the trial
/// list and every cell seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub config: ExperimentConfig,
    pub trials: Vec<TrialDef>,
}

impl Manifest {
    pub fn seed(&self, trial: usize, run: usize) -> u64 {
        cell_seed(self.config.seed, trial, run)
    }

    pub fn spec(&self, trial: usize, run: usize) -> TrialSpec {
        let t = &self.trials[trial];
        TrialSpec::new(
            t.reference.clone(),
            t.comparisons.each_ref().map(String::as_str),
            self.config.max_rounds,
            self.seed(trial, run),
        )
    }

    pub fn cells(&self) -> Vec<CellKey> {
        let mut cells = Vec::new();
        for &strategy in &self.config.strategies {
            for trial in 0..self.trials.len() {
                for run in 0..self.config.runs {
                    cells.push(CellKey { strategy, trial, run });
                }
            }
        }
        cells
    }

    pub fn fabric_universe(&self) -> Vec<String> {
        let mut ids: Vec<String> =
            self.trials.iter().flat_map(|t| std::iter::once(&t.reference).chain(&t.comparisons)).cloned().collect();
        ids.sort();
        ids.dedup();
        ids
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# active-texture run manifest");
        let _ = writeln!(out, "format = {MANIFEST_FORMAT}");
        let _ = writeln!(out, "software = {} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"));
        let _ = writeln!(out, "summary_std = sample");
        out.push_str("[config]\n");
        out.push_str(&self.config.snapshot());
        out.push_str("[trials]\ntrial_id,reference,platform_1,platform_2,platform_3,platform_4\n");
        for (i, t) in self.trials.iter().enumerate() {
            let _ = writeln!(out, "{i},{},{}", t.reference, t.comparisons.join(","));
        }
        out.push_str("[seeds]\ntrial_id,run_id,seed\n");
        for trial in 0..self.trials.len() {
            for run in 0..self.config.runs {
                let _ = writeln!(out, "{trial},{run},{}", self.seed(trial, run));
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |m: String| HarnessError::Manifest(m);
        let mut section = "";
        let mut config_text = String::new();
        let mut trials = Vec::new();
        let mut seeds = Vec::new();
        let mut format = None;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                section = match line {
                    "[config]" => "config",
                    "[trials]" => "trials",
                    "[seeds]" => "seeds",
                    other => return Err(bad(format!("line {}: unknown section {other}", i + 1))),
                };
                continue;
            }
            match section {
                "" => {
                    if let Some(v) = line.strip_prefix("format = ") {
                        format = Some(v.to_string());
                    }
                }
                "config" => {
                    config_text.push_str(line);
                    config_text.push('\n');
                }
                "trials" if line.starts_with("trial_id") => {}
                "trials" => {
                    let f: Vec<&str> = line.split(',').collect();
                    if f.len() != 6 || f[0].parse::<usize>().ok() != Some(trials.len()) {
                        return Err(bad(format!("line {}: malformed trial row", i + 1)));
                    }
                    trials.push(TrialDef {
                        reference: f[1].to_string(),
                        comparisons: [f[2], f[3], f[4], f[5]].map(str::to_string),
                    });
                }
                "seeds" if line.starts_with("trial_id") => {}
                _ => {
                    let f: Vec<&str> = line.split(',').collect();
                    let parsed = (f.len() == 3)
                        .then(|| {
                            Some((f[0].parse::<usize>().ok()?, f[1].parse::<usize>().ok()?, f[2].parse::<u64>().ok()?))
                        })
                        .flatten();
                    seeds.push(parsed.ok_or_else(|| bad(format!("line {}: malformed seed row", i + 1)))?);
                }
            }
        }
        if format.as_deref() != Some(MANIFEST_FORMAT) {
            return Err(bad(format!("unsupported or missing format (found {format:?})")));
        }
        let config = ExperimentConfig::parse(&config_text).map_err(|e| bad(format!("config section: {e}")))?;
        let manifest = Self { config, trials };
        for (trial, run, seed) in seeds {
            if trial >= manifest.trials.len() || run >= manifest.config.runs || manifest.seed(trial, run) != seed {
                return Err(bad(format!("seed row ({trial}, {run}, {seed}) does not match the configuration")));
            }
        }
        Ok(manifest)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| HarnessError::Manifest(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

/// Reads every cell file of a finished or partial experiment directory.
/// Missing files are skipped when `allow_missing` is set.
pub fn load_cells(dir: &Path, manifest: &Manifest, allow_missing: bool) -> Result<Vec<CellRecord>> {
    let mut out = Vec::new();
    for key in manifest.cells() {
        let path = dir.join(key.relative_path());
        if !path.exists() {
            if allow_missing {
                continue;
            }
            return Err(HarnessError::ResultFile { path, message: "missing result file".into() });
        }
        let rows = parse_result_csv(&path, &key)?;
        if rows.len() != manifest.config.max_rounds + 1 || rows.iter().enumerate().any(|(i, r)| r.round != i) {
            return Err(HarnessError::ResultFile { path, message: "incomplete or out-of-order rounds".into() });
        }
        out.push(CellRecord { key, spec: manifest.spec(key.trial, key.run), rows });
    }
    Ok(out)
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("step,mean,std\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.step, r.mean, r.std);
    }
    out
}

pub fn confusion_csv(m: &ConfusionMatrix) -> String {
    let mut out = format!("true\\predicted,{}\n", m.labels.join(","));
    for (label, row) in m.labels.iter().zip(&m.counts) {
        let cells: Vec<String> = row.iter().map(u64::to_string).collect();
        let _ = writeln!(out, "{label},{}", cells.join(","));
    }
    out
}

pub type SummaryTable = BTreeMap<MetricKind, Vec<SummaryRow>>;

/// Summaries over all (trial, run) cells, and over per-trial run means.
pub fn strategy_summaries(records: &[&CellRecord]) -> Result<(SummaryTable, SummaryTable)> {
    let pooled = summarize_rounds(records.iter().map(|r| r.active_rows()))?;
    let mut trial_means = BTreeMap::new();
    for kind in MetricKind::ALL {
        let mut per_trial: BTreeMap<usize, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
        for r in records {
            for row in r.active_rows() {
                per_trial.entry(r.key.trial).or_default().entry(row.round).or_default().push(kind.value(row));
            }
        }
        let mut by_step: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for steps in per_trial.values() {
            for (&step, values) in steps {
                by_step.entry(step).or_default().push(values.iter().sum::<f64>() / values.len() as f64);
            }
        }
        trial_means.insert(kind, summarize_values(&by_step));
    }
    Ok((pooled, trial_means))
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub records: Vec<CellRecord>,
    /// Cells loaded from an earlier interrupted execution.
    pub resumed: usize,
}

impl ExperimentOutcome {
    pub fn records_for(&self, strategy: StrategyKind) -> Vec<&CellRecord> {
        self.records.iter().filter(|r| r.key.strategy == strategy).collect()
    }

    /// Mean and sample std of final-round correctness per strategy.
    pub fn final_accuracy(&self, strategy: StrategyKind) -> (f64, f64, usize) {
        let values: Vec<f64> =
            self.records_for(strategy).iter().map(|r| f64::from(u8::from(r.final_correct()))).collect();
        let (mean, std) = active_texture_core::mean_std(&values);
        (mean, std, values.len())
    }
}

fn run_cell(manifest: &Manifest, dataset: &Dataset, params: &EngineParams, key: CellKey, dir: &Path) -> Result<()> {
    let spec = manifest.spec(key.trial, key.run);
    let result = run_trial(&spec, dataset, key.strategy, &manifest.config.classifier, params).map_err(|source| {
        HarnessError::Trial {
            context: format!("strategy {} trial {} run {}", key.strategy, key.trial, key.run),
            source,
        }
    })?;
    write_atomic(&dir.join(key.relative_path()), result_csv(&key, &rows_from_result(&result)).as_bytes())
}

fn unix_seconds() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Writes the summaries, confusion matrices and index for finished cells.
fn write_reports(dir: &Path, manifest: &Manifest, records: &[CellRecord]) -> Result<()> {
    let universe = manifest.fabric_universe();
    for &strategy in &manifest.config.strategies {
        let subset: Vec<&CellRecord> = records.iter().filter(|r| r.key.strategy == strategy).collect();
        let (pooled, trial_means) = strategy_summaries(&subset)?;
        for kind in MetricKind::ALL {
            let name = format!("{}_{}_summary.csv", strategy.name(), kind.tag());
            write_atomic(&dir.join("summaries").join(name), summary_csv(&pooled[&kind]).as_bytes())?;
            let name = format!("{}_{}_trialmean_summary.csv", strategy.name(), kind.tag());
            write_atomic(&dir.join("summaries").join(name), summary_csv(&trial_means[&kind]).as_bytes())?;
        }
        let cm = confusion_from_outcomes(subset.iter().map(|r| (&r.spec, r.final_prediction())), &universe)?;
        write_atomic(
            &dir.join("confusion").join(format!("{}_confusion.csv", strategy.name())),
            confusion_csv(&cm).as_bytes(),
        )?;
    }
    write_index(dir)
}

fn collect_files(dir: &Path, base: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| HarnessError::io(dir, e))? {
        let path = entry.map_err(|e| HarnessError::io(dir, e))?.path();
        if path.is_dir() {
            collect_files(&path, base, out)?;
        } else {
            out.push(path.strip_prefix(base).expect("path under base").to_path_buf());
        }
    }
    Ok(())
}

/// `index.csv`: every output file except itself and the timing sidecar,
/// with size and SHA-256, sorted by path.
pub fn write_index(dir: &Path) -> Result<()> {
    let mut files = Vec::new();
    collect_files(dir, dir, &mut files)?;
    files.retain(|p| p != Path::new(INDEX_FILE) && p != Path::new(TIMING_FILE) && p != Path::new(FAILURE_FILE));
    files.sort();
    let mut out = String::from("path,bytes,sha256\n");
    for rel in files {
        let bytes = fs::read(dir.join(&rel)).map_err(|e| HarnessError::io(dir.join(&rel), e))?;
        let digest = Sha256::digest(&bytes);
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        let rel = rel.to_string_lossy().replace('\\', "/");
        let _ = writeln!(out, "{rel},{},{hex}", bytes.len());
    }
    write_atomic(&dir.join(INDEX_FILE), out.as_bytes())
}

/// Runs every (strategy, trial, run) cell and writes the output tree.
///
/// Cells run on `cfg.workers` threads. Each cell writes its own file, and
/// every aggregate is computed from the files afterwards in a fixed order,
/// so the tree does not depend on scheduling. An existing directory with
/// the same manifest is resumed; finished cells are kept.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let dataset = cfg.dataset()?;
    let trials = plan_trials(cfg, &dataset)?;
    let manifest = Manifest { config: cfg.clone(), trials };
    let dir = resolve_output_dir(&cfg.output_dir);
    run_manifest(&manifest, &dataset, &dir)
}

pub fn run_manifest(manifest: &Manifest, dataset: &Dataset, dir: &Path) -> Result<ExperimentOutcome> {
    let started = (unix_seconds(), Instant::now());
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let manifest_text = manifest.to_text();
    let manifest_path = dir.join(MANIFEST_FILE);
    if manifest_path.exists() {
        let existing = fs::read_to_string(&manifest_path).map_err(|e| HarnessError::io(&manifest_path, e))?;
        if existing != manifest_text {
            return Err(HarnessError::Manifest(format!(
                "{} belongs to a different experiment; choose another output directory",
                dir.display()
            )));
        }
    } else {
        write_atomic(&manifest_path, manifest_text.as_bytes())?;
    }
    let _ = fs::remove_file(dir.join(FAILURE_FILE));

    let existing = load_cells(dir, manifest, true)?;
    let done: Vec<CellKey> = existing.iter().map(|r| r.key).collect();
    let pending: Vec<CellKey> = manifest.cells().into_iter().filter(|k| !done.contains(k)).collect();

    let params = manifest.config.engine.resolve(dataset);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(manifest.config.workers)
        .build()
        .map_err(|e| HarnessError::Manifest(format!("cannot start workers: {e}")))?;
    let outcomes: Vec<(CellKey, Result<()>)> =
        pool.install(|| pending.par_iter().map(|&k| (k, run_cell(manifest, dataset, &params, k, dir))).collect());

    let failures: Vec<&(CellKey, Result<()>)> = outcomes.iter().filter(|(_, r)| r.is_err()).collect();
    if !failures.is_empty() {
        let mut text = String::new();
        for (k, r) in &failures {
            if let Err(e) = r {
                let _ = writeln!(text, "{} trial {} run {}: {e}", k.strategy, k.trial, k.run);
            }
        }
        write_atomic(&dir.join(FAILURE_FILE), text.as_bytes())?;
        let (_, first) = outcomes.into_iter().find(|(_, r)| r.is_err()).expect("a failure");
        return Err(first.expect_err("a failure"));
    }

    let records = load_cells(dir, manifest, false)?;
    write_reports(dir, manifest, &records)?;
    let timing = format!(
        "started_unix = {}\nfinished_unix = {}\nelapsed_seconds = {:.3}\ncells_run = {}\ncells_resumed = {}\n",
        started.0,
        unix_seconds(),
        started.1.elapsed().as_secs_f64(),
        pending.len(),
        done.len()
    );
    write_atomic(&dir.join(TIMING_FILE), timing.as_bytes())?;
    Ok(ExperimentOutcome { dir: dir.to_path_buf(), manifest: manifest.clone(), records, resumed: done.len() })
}
