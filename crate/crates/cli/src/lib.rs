//! Command-line front end: `run`, `validate`, `bench`, `inspect`, `cases`.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use asyncel::cases::{builtin, case_names};
use asyncel::config::{coupling_names, RunConfig};
use asyncel::error::{ConfigError, OutputError, RuntimeError, ValidationError};
use asyncel::output::{submit_run, submit_validation, timing_rows, OutputWriter};
use asyncel::runtime::{run_coupled, RunArtifacts};
use asyncel::validation::{run_extrapolator_study, SeriesMetrics};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "ASYNCEL_OUT";
const DEFAULT_OUT_ROOT: &str = "asyncel-out";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Usage(#[from] clap::Error),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error("cannot write to the console: {0}")]
    Console(#[from] std::io::Error),
}

impl CliError {
    /// 2 for bad input, 1 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(e) => e.exit_code(),
            CliError::Config(_) => 2,
            CliError::Validation(ValidationError::Config(_)) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "asyncel", version, about = "Asynchronous two-way coupled Euler-Lagrange runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a case and write time series, timings, ledgers and snapshots.
    Run(Common),
    /// Momentum relaxation study over the coupling modes.
    Validate(Common),
    /// Timing study of the phase overlap.
    Bench(Common),
    /// Print the resolved configuration as TOML.
    Inspect(Common),
    /// List the shipped cases.
    Cases,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, value_name = "PATH", conflicts_with = "case")]
    config: Option<PathBuf>,
    /// Shipped case to start from.
    #[arg(long, value_name = "NAME")]
    case: Option<String>,
    /// Dot-path override, e.g. `--set mesh.dims=[16,16,16]`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Seeded single-threaded scheduling and zeroed timings.
    #[arg(long)]
    deterministic: bool,
    /// Output directory (default: $ASYNCEL_OUT/<case> or asyncel-out/<case>).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// synchronous | zero | constant | linear (validate also takes `all`).
    #[arg(long)]
    mode: Option<String>,
}

impl Common {
    fn resolve(&self, default_case: &str) -> Result<RunConfig, CliError> {
        let base = match (&self.config, &self.case) {
            (Some(p), _) => RunConfig::load(p)?,
            (None, Some(c)) => builtin(c)?,
            (None, None) => builtin(default_case)?,
        };
        let mut cfg = base.with_overrides(&self.overrides)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if self.deterministic {
            cfg.runtime.scheduler = "deterministic".into();
        }
        if let Some(m) = &self.mode {
            if m != "all" {
                cfg.coupling = m.clone();
            }
        }
        if let Some(o) = &self.out {
            cfg.output.dir = Some(o.display().to_string());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn modes(&self) -> Vec<String> {
        match self.mode.as_deref() {
            None | Some("all") => coupling_names(),
            Some(m) => vec![m.to_string()],
        }
    }
}

fn out_dir(cfg: &RunConfig) -> PathBuf {
    match &cfg.output.dir {
        Some(d) => PathBuf::from(d),
        None => {
            let root = std::env::var_os(OUT_ENV).unwrap_or_else(|| DEFAULT_OUT_ROOT.into());
            PathBuf::from(root).join(&cfg.case)
        }
    }
}

// the copy lives in the output directory, so that entry is dropped to keep
// runs into different directories byte-identical
fn write_config(w: &OutputWriter, cfg: &RunConfig) {
    let mut c = cfg.clone();
    c.output.dir = None;
    w.submit("config.toml", c.to_toml_string().into_bytes());
}

#[derive(Debug, Serialize)]
struct BenchReport {
    steps: usize,
    hardware_threads: usize,
    mean_euler_compute_s: f64,
    mean_lagrange_compute_s: f64,
    mean_wall_s: f64,
    /// Wall time over the summed compute times; below 1 means overlap.
    overlap_ratio: Option<f64>,
}

fn bench_report(art: &RunArtifacts) -> BenchReport {
    // the first step is synchronous and carries start-up cost
    let recs = if art.records.len() > 1 { &art.records[1..] } else { &art.records[..] };
    let n = recs.len().max(1) as f64;
    let e = recs.iter().map(|r| r.euler_compute_s).sum::<f64>() / n;
    let l = recs.iter().map(|r| r.lagrange_compute_s).sum::<f64>() / n;
    let w = recs.iter().map(|r| r.wall_s).sum::<f64>() / n;
    BenchReport {
        steps: recs.len(),
        hardware_threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
        mean_euler_compute_s: e,
        mean_lagrange_compute_s: l,
        mean_wall_s: w,
        overlap_ratio: (e + l > 0.0).then(|| w / (e + l)),
    }
}

fn json(v: &impl Serialize) -> Result<Vec<u8>, CliError> {
    let mut b = serde_json::to_vec_pretty(v).map_err(|e| OutputError::Serialize(e.to_string()))?;
    b.push(b'\n');
    Ok(b)
}

/// Parses `args` (program name first) and executes the command, printing
/// a short report to `console`.
pub fn run<I, T>(args: I, console: &mut dyn Write) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    match cli.command {
        Command::Cases => {
            for c in case_names() {
                writeln!(console, "{c}")?;
            }
        }
        Command::Inspect(a) => {
            let cfg = a.resolve("mini-chamber")?;
            write!(console, "{}", cfg.to_toml_string())?;
        }
        Command::Run(a) => {
            let cfg = a.resolve("mini-chamber")?;
            let setup = cfg.build()?;
            let art = run_coupled(&setup, &cfg.run_options())?;
            let dir = out_dir(&cfg);
            let w = OutputWriter::new(&dir)?;
            write_config(&w, &cfg);
            submit_run(&w, &cfg.case, &cfg.coupling, &art)?;
            let files = w.finish()?;
            writeln!(
                console,
                "{}: {} steps, {} coupling, max skew {}, vapor budget {:.3e}, momentum drift {:.3e}",
                cfg.case,
                art.records.len(),
                cfg.coupling,
                art.max_skew,
                art.max_vapor_residual(),
                art.final_momentum_drift.norm()
            )?;
            writeln!(console, "wrote {} files to {}", files.len(), dir.display())?;
        }
        Command::Validate(a) => {
            let cfg = a.resolve("analytical-momentum")?;
            let modes = a.modes();
            let series = run_extrapolator_study(&cfg, &modes, &cfg.run_options())?;
            let dir = out_dir(&cfg);
            let w = OutputWriter::new(&dir)?;
            write_config(&w, &cfg);
            submit_validation(&w, &series)?;
            let metrics: Vec<(String, SeriesMetrics)> = series.iter().map(|s| (s.mode.clone(), s.metrics())).collect();
            w.submit("validation_summary.json", json(&metrics)?);
            w.finish()?;
            for (mode, m) in &metrics {
                writeln!(
                    console,
                    "{mode:>12}: max |e| euler {:.3e} lagrange {:.3e}, early peak {:.3e}, tail peak {:.3e}, sign changes {:.0}%",
                    m.max_euler,
                    m.max_lagrange,
                    m.early_peak_euler,
                    m.tail_peak_euler,
                    100.0 * m.sign_change_fraction
                )?;
            }
            writeln!(console, "wrote {} series to {}", series.len(), dir.display())?;
        }
        Command::Bench(a) => {
            let cfg = a.resolve("overlap-bench")?;
            let setup = cfg.build()?;
            let art = run_coupled(&setup, &cfg.run_options())?;
            let report = bench_report(&art);
            let dir = out_dir(&cfg);
            let w = OutputWriter::new(&dir)?;
            write_config(&w, &cfg);
            w.submit_csv("timing.csv", &timing_rows(&art))?;
            w.submit("bench.json", json(&report)?);
            w.finish()?;
            writeln!(
                console,
                "euler {:.4} s/step, lagrange {:.4} s/step, wall {:.4} s/step, ratio {}, {} hardware threads",
                report.mean_euler_compute_s,
                report.mean_lagrange_compute_s,
                report.mean_wall_s,
                report.overlap_ratio.map_or("n/a".into(), |r| format!("{r:.3}")),
                report.hardware_threads
            )?;
        }
    }
    Ok(())
}
