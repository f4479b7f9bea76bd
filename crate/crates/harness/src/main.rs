use std::path::{Path, PathBuf};
use std::process::ExitCode;

use active_texture::analyze::analyze;
use active_texture::config::{ExperimentConfig, SourceKind};
use active_texture::experiment::{resolve_output_dir, run_experiment, run_manifest, ExperimentOutcome, Manifest};
use active_texture::io::{describe, load_dataset, save_dataset, LoadOptions};
use active_texture::sweep::{ablation_sweep, SweepAxis};
use active_texture::{HarnessError, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "active-texture", version, about = "Active texture recognition experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Configuration file of `key = value` lines.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Overrides one configuration key; repeatable.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Same as `--set output.dir=DIR`.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Same as `--set experiment.workers=N`.
    #[arg(short, long)]
    workers: Option<usize>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        cfg.apply_overrides(&self.set)?;
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate or inspect datasets.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Run every (strategy, trial, run) cell of one experiment.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Re-run a recorded manifest instead of a configuration.
        #[arg(long, conflicts_with_all = ["config", "set"])]
        manifest: Option<PathBuf>,
    },
    /// Run one experiment per value of an ablation axis.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// `dropout=0.05,0.15,0.25,0.5` or `augmentation=on,off`.
        #[arg(long)]
        axis: String,
    },
    /// Exploration and confusion analyses of a finished experiment.
    Analyze {
        results_dir: PathBuf,
        /// Human-study log CSV.
        #[arg(long)]
        human_log: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum DatasetCommand {
    /// Write the configured synthetic dataset as PNG directories.
    Gen {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Summarize a dataset directory.
    Inspect {
        path: PathBuf,
        /// Resample to HEIGHTxWIDTH.
        #[arg(long, value_parser = parse_size)]
        size: Option<(usize, usize)>,
        #[arg(long, default_value_t = 1)]
        channels: usize,
    },
}

fn parse_size(s: &str) -> std::result::Result<(usize, usize), String> {
    let (h, w) = s.split_once('x').ok_or("expected HEIGHTxWIDTH")?;
    Ok((h.parse().map_err(|_| "bad height")?, w.parse().map_err(|_| "bad width")?))
}

fn report(outcome: &ExperimentOutcome) {
    println!("{}: {} cells ({} resumed)", outcome.dir.display(), outcome.records.len(), outcome.resumed);
    for &s in &outcome.manifest.config.strategies {
        let (mean, std, n) = outcome.final_accuracy(s);
        println!("  {:<9} final accuracy {:.4} ± {:.4} (n = {n})", s.name(), mean, std);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Dataset(DatasetCommand::Gen { config }) => {
            let cfg = config.load()?;
            if cfg.source != SourceKind::Synthetic {
                return Err(
                    active_texture::config::ConfigError::new("dataset gen needs dataset.source = synthetic").into()
                );
            }
            let ds = cfg.synthetic.generate()?;
            let dir = resolve_output_dir(&cfg.output_dir);
            save_dataset(&ds, &dir)?;
            print!("{}", describe(&ds));
            println!("written to {}", dir.display());
        }
        Command::Dataset(DatasetCommand::Inspect { path, size, channels }) => {
            let ds = load_dataset(&path, &LoadOptions { size, channels })?;
            print!("{}", describe(&ds));
        }
        Command::Run { config, manifest: Some(path) } => {
            let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
            let mut manifest = Manifest::parse(&text)?;
            let dir = match &config.out {
                Some(out) => resolve_output_dir(out),
                None => path.parent().unwrap_or(Path::new(".")).to_path_buf(),
            };
            manifest.config.workers = config.workers.unwrap_or(0);
            manifest.config.output_dir = dir.clone();
            let ds = manifest.config.dataset()?;
            report(&run_manifest(&manifest, &ds, &dir)?);
        }
        Command::Run { config, manifest: None } => report(&run_experiment(&config.load()?)?),
        Command::Sweep { config, axis } => {
            let cfg = config.load()?;
            let outcome = ablation_sweep(&cfg, &SweepAxis::parse(&axis)?)?;
            println!("setting,strategy,final_mean,final_std,n");
            for r in &outcome.table {
                println!("{},{},{:.4},{:.4},{}", r.setting, r.strategy.name(), r.final_mean, r.final_std, r.n);
            }
        }
        Command::Analyze { results_dir, human_log } => {
            let a = analyze(&results_dir, human_log.as_deref())?;
            for (s, f) in &a.most_touched {
                println!("{:<9} most-touched = prediction in {:.4} of trials", s.name(), f);
            }
            if let Some(f) = a.human_most_touched {
                println!("human     most-touched = answer in {f:.4} of trials");
            }
            for p in &a.files {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
