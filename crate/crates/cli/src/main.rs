mod config;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use bls_core::log::{read_log_file, write_log, LogRecord};
use bls_core::replay::{replay, ReplaySettings};
use bls_core::report::{
    fmt_f64, write_decisions_csv, write_filter_csv, write_metrics_row, write_psd_csv,
    write_scores_csv, write_separation_csv, write_sweep_csv, METRICS_HEADER,
};
use bls_core::signal::{decompose_all, FilterSpec};
use bls_core::spectral::{mean_psd, separation_report};
use bls_core::trainer::{
    alpha_sweep, make_synthetic_dataset, run_experiment_with, LogRecorder, TrainConfig,
};
use clap::{Args, Parser, Subcommand};

use config::{ConfigError, RunConfig, KEYS};

const USAGE: &str = "usage: bls <train|sweep-alpha|replay|psd|filter|keys> [--config PATH] [--set KEY=VALUE]...";

#[derive(Parser)]
#[command(name = "bls", version, about = "Batch Loss Score scoring, pruning and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Config file with `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key; repeatable, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train on the synthetic task and report run metrics.
    Train(Common),
    /// One training run per decay factor in sweep.alphas.
    SweepAlpha(Common),
    /// Rebuild scores and next-cycle decisions from a batch-loss log.
    Replay(Common),
    /// Signal and noise spectra from an instrumented log (or a fresh run).
    Psd(Common),
    /// Magnitude response of the score filter.
    Filter(Common),
    /// List every config key with its default.
    Keys,
}

enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<ConfigError>() {
            Some(c) if c.is_usage() => Failure::Usage(c.to_string()),
            _ => Failure::Runtime(e),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("{}", first.trim());
            eprintln!("{USAGE}");
            return ExitCode::from(2);
        }
    };
    match run(cli.command).map_err(Failure::from) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("{USAGE}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train(c) => train(&load(&c)?),
        Command::SweepAlpha(c) => sweep(&load(&c)?),
        Command::Replay(c) => replay_cmd(&load(&c)?),
        Command::Psd(c) => psd(&load(&c)?),
        Command::Filter(c) => filter(&load(&c)?),
        Command::Keys => {
            let mut out = io::stdout().lock();
            writeln!(out, "key,default,description")?;
            for (k, v, doc) in KEYS {
                writeln!(out, "{k},{v},{doc}")?;
            }
            Ok(())
        }
    }
}

fn load(c: &Common) -> Result<RunConfig> {
    Ok(RunConfig::load(c.config.as_deref(), &c.set)?)
}

fn out_file(cfg: &RunConfig, name: &str) -> Result<BufWriter<File>> {
    let dir = Path::new(cfg.get("io.out_dir"));
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn train_and_log(cfg: &RunConfig, tc: &TrainConfig) -> Result<(bls_core::trainer::RunMetrics, Vec<LogRecord>)> {
    let data = make_synthetic_dataset(&cfg.dataset()?)?;
    let mut rec = LogRecorder::default();
    let metrics = run_experiment_with(&data, &cfg.model()?, tc, &mut rec)?;
    Ok((metrics, rec.records))
}

fn train(cfg: &RunConfig) -> Result<()> {
    let tc = cfg.train()?;
    let (metrics, records) = train_and_log(cfg, &tc)?;
    if let Some(path) = cfg.path("io.log") {
        let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
        let mut w = BufWriter::new(f);
        write_log(&mut w, &records)?;
        w.flush()?;
    }
    let mut m = out_file(cfg, "metrics.csv")?;
    writeln!(m, "{METRICS_HEADER}")?;
    write_metrics_row(&mut m, "train", &metrics)?;
    m.flush()?;
    let mut s = out_file(cfg, "scores.csv")?;
    write_scores_csv(&mut s, &metrics.score_table_final)?;
    s.flush()?;

    let mut out = io::stdout().lock();
    writeln!(out, "{METRICS_HEADER}")?;
    write_metrics_row(&mut out, "train", &metrics)?;
    Ok(())
}

fn sweep(cfg: &RunConfig) -> Result<()> {
    let data = make_synthetic_dataset(&cfg.dataset()?)?;
    let rows = alpha_sweep(&data, &cfg.model()?, &cfg.train()?, &cfg.sweep_alphas()?)?;
    let mut f = out_file(cfg, "sweep.csv")?;
    write_sweep_csv(&mut f, &rows)?;
    f.flush()?;
    write_sweep_csv(io::stdout().lock(), &rows)?;
    Ok(())
}

fn require_log(cfg: &RunConfig) -> Result<Vec<LogRecord>> {
    let Some(path) = cfg.path("io.log") else {
        bail!("io.log is not set");
    };
    read_log_file(path).with_context(|| format!("reading {}", path.display()))
}

fn replay_cmd(cfg: &RunConfig) -> Result<()> {
    let records = require_log(cfg)?;
    let n: usize = cfg.get("replay.n_samples").parse().context("replay.n_samples")?;
    let settings = ReplaySettings {
        ema: cfg.ema()?,
        policy: cfg.policy()?,
        schedule: cfg.schedule()?,
        cycle: cfg.get("replay.cycle").parse().context("replay.cycle")?,
        seed: cfg.get("train.seed").parse().context("train.seed")?,
        n_samples: (n > 0).then_some(n),
    };
    let outcome = replay(&records, &settings)?;
    let mut s = out_file(cfg, "scores.csv")?;
    write_scores_csv(&mut s, &outcome.table.snapshot())?;
    s.flush()?;
    let mut d = out_file(cfg, "decisions.csv")?;
    write_decisions_csv(&mut d, &outcome.active)?;
    d.flush()?;

    let mut out = io::stdout().lock();
    writeln!(out, "records,samples,kept,pruned")?;
    writeln!(
        out,
        "{},{},{},{}",
        outcome.records,
        outcome.table.len(),
        outcome.active.n_kept(),
        outcome.pruned.len()
    )?;
    Ok(())
}

fn psd(cfg: &RunConfig) -> Result<()> {
    let welch = cfg.welch()?;
    let records = match cfg.path("io.log") {
        Some(_) => require_log(cfg)?,
        None => {
            let tc = TrainConfig {
                instrument_per_sample: true,
                ..cfg.train()?
            };
            train_and_log(cfg, &tc)?.1
        }
    };
    let n = records
        .iter()
        .flat_map(|r| r.indices.iter())
        .map(|id| id.index() + 1)
        .max()
        .unwrap_or(0);
    let parts = decompose_all(&records, n)?;
    let signal: Vec<&[f64]> = parts.iter().map(|p| p.signal.as_slice()).collect();
    let noise: Vec<&[f64]> = parts.iter().map(|p| p.noise.as_slice()).collect();
    let s = mean_psd(&signal, &welch)?;
    let z = mean_psd(&noise, &welch)?;
    let report = separation_report(&s.psd, &z.psd)?;

    for (name, est) in [("signal_psd.csv", &s.psd), ("noise_psd.csv", &z.psd)] {
        let mut f = out_file(cfg, name)?;
        write_psd_csv(&mut f, est)?;
        f.flush()?;
    }
    let mut f = out_file(cfg, "separation.csv")?;
    write_separation_csv(&mut f, &s.psd, &z.psd)?;
    f.flush()?;

    let mut out = io::stdout().lock();
    writeln!(out, "sequences,dropped,noise_dominant,high_freq_ratio,low_freq_ratio")?;
    writeln!(
        out,
        "{},{},{},{},{}",
        s.used,
        s.dropped,
        report.all_bins_noise_dominant,
        fmt_f64(report.high_freq_ratio),
        fmt_f64(report.low_freq_ratio)
    )?;
    Ok(())
}

fn filter(cfg: &RunConfig) -> Result<()> {
    let alpha = cfg.ema()?.alpha();
    let points: usize = cfg.get("filter.points").parse().context("filter.points")?;
    if points < 2 {
        bail!("filter.points must be at least 2");
    }
    let spec = FilterSpec::new(alpha)?;
    write_filter_csv(io::stdout().lock(), &spec.magnitude_grid(points))?;
    Ok(())
}
