use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use snr_core::detection::{ratio_grid, write_grid_csv};
use snr_core::harness::{self, aggregate, ExperimentConfig, RunOptions, SweepSpec};
use snr_core::relu_theory::{run_theory, GdMode, TargetSpec, TheoryConfig};
use snr_core::selftest::{self, Scale};

#[derive(Parser)]
#[command(
    name = "snr",
    version,
    about = "Plasticity workbench: neuron-reset experiments and their theory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory holding the MNIST IDX files; beats the config and SNR_DATA_DIR.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Use synthetic data regardless of the config.
    #[arg(long)]
    synthetic: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config.
    Train {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Continue from the checkpoint in --out.
        #[arg(long)]
        resume: bool,
    },
    /// Run every (value, seed) cell of a sweep spec.
    Sweep {
        spec: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Summarize metrics files matching a glob.
    Report {
        pattern: String,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    #[command(subcommand)]
    Theory(Theory),
    /// Run the oracle suites.
    Selftest {
        /// Use the full acceptance sizes (minutes instead of seconds).
        #[arg(long)]
        full: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum Theory {
    /// Population gradient descent on a single ReLU.
    Relu {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Error-ratio grid for the two-neuron detection problem.
    Detect {
        grid: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// `theory relu` job: a theory config plus target placement and seed count.
#[derive(Deserialize)]
struct ReluJob {
    #[serde(flatten)]
    config: TheoryConfig,
    mode: GdMode,
    target: TargetSpec,
    #[serde(default = "one")]
    seeds: u64,
}

fn one() -> u64 {
    1
}

#[derive(Deserialize)]
struct DetectGrid {
    p1: Vec<f64>,
    p2: f64,
    alpha: Vec<f64>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            Box::new(BufWriter::new(
                File::create(p).with_context(|| format!("creating {}", p.display()))?,
            ))
        }
        None => Box::new(io::stdout().lock()),
    })
}

fn train(config: &Path, common: &Common, resume: bool) -> Result<()> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    let out = common.out.clone().unwrap_or_else(|| {
        PathBuf::from("runs")
            .join(&cfg.name)
            .join(format!("seed{}", cfg.seed))
    });
    let opts = RunOptions {
        out: Some(out.clone()),
        data_dir: common.data_dir.clone(),
        force_synthetic: common.synthetic,
        resume,
        stop_after: None,
    };
    let outcome = harness::run_experiment(&cfg, &opts)?;
    let last = outcome.records.last().context("config produced no tasks")?;
    let tail =
        harness::last_fraction_accuracy(&outcome.records, cfg.accuracy, harness::TAIL_FRACTION)
            .unwrap_or(f64::NAN);
    println!(
        "{}: {} tasks, last-10% accuracy {:.4}, final dead {}, resets {} -> {}",
        cfg.name,
        outcome.records.len(),
        tail,
        last.dead_neurons,
        outcome.resets,
        out.join("metrics.jsonl").display()
    );
    Ok(())
}

fn sweep(spec: &Path, common: &Common) -> Result<()> {
    let mut spec: SweepSpec = read_json(spec)?;
    if let Some(s) = common.seed {
        spec.seeds = vec![s];
    }
    let rows = harness::sweep(
        &spec,
        common.out.as_deref(),
        common.data_dir.as_deref(),
        common.synthetic,
    )?;
    let mut out = output(common.out.as_ref().map(|o| o.join("sweep.csv")).as_deref())?;
    writeln!(out, "name,value,runs,failed,mean,std")?;
    for c in aggregate(&rows) {
        let value = c.value.map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{:.6},{:.6}",
            c.name,
            value.replace(',', ";"),
            c.runs,
            c.failed,
            c.mean,
            c.std
        )?;
    }
    for r in rows.iter().filter(|r| r.error.is_some()) {
        eprintln!(
            "{} seed {} failed: {}",
            r.name,
            r.seed,
            r.error.as_deref().unwrap_or("")
        );
    }
    Ok(())
}

fn report(pattern: &str, out: Option<&Path>) -> Result<()> {
    let paths: Vec<PathBuf> = glob::glob(pattern)
        .with_context(|| format!("bad glob {pattern}"))?
        .collect::<std::result::Result<_, _>>()?;
    if paths.is_empty() {
        bail!("no files match {pattern}");
    }
    harness::report(&paths, output(out)?)?;
    Ok(())
}

fn theory_relu(config: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<()> {
    let job: ReluJob = read_json(config)?;
    let base = seed.unwrap_or(job.config.seed);
    if let Some(dir) = out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut summaries = output(out.map(|d| d.join("summary.jsonl")).as_deref())?;
    for s in base..base + job.seeds {
        let mut cfg = job.config.clone();
        cfg.seed = s;
        let run = run_theory(&cfg, job.target, job.mode)?;
        if let Some(dir) = out {
            run.trajectory
                .write_csv(&dir.join(format!("trajectory_seed{s}.csv")))?;
        }
        writeln!(summaries, "{}", serde_json::to_string(&run.summary(s)?)?)?;
    }
    Ok(())
}

fn theory_detect(grid: &Path, out: Option<&Path>) -> Result<()> {
    let g: DetectGrid = read_json(grid)?;
    let rows = ratio_grid(&g.p1, g.p2, &g.alpha)?;
    write_grid_csv(output(out)?, &rows)?;
    Ok(())
}

fn run_selftest(full: bool, seed: u64) -> Result<()> {
    let checks = selftest::run_all(if full { Scale::Full } else { Scale::Quick }, seed)?;
    for c in &checks {
        println!("{c}");
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        bail!("{failed} of {} oracle checks failed", checks.len());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train {
            config,
            common,
            resume,
        } => train(config, common, *resume),
        Command::Sweep { spec, common } => sweep(spec, common),
        Command::Report { pattern, out } => report(pattern, out.as_deref()),
        Command::Theory(Theory::Relu { config, seed, out }) => {
            theory_relu(config, *seed, out.as_deref())
        }
        Command::Theory(Theory::Detect { grid, out }) => theory_detect(grid, out.as_deref()),
        Command::Selftest { full, seed } => run_selftest(*full, *seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
