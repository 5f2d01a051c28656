//! Command-line front end: single runs, sweeps, oracle checks and table
//! inspection.
//!
//! Exit codes: 0 success, 1 oracle gap above tolerance, 2 bad arguments or
//! configuration, 3 I/O failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use srstream::config::ConfigDocument;
use srstream::sim::{self, Axis, TraceError};
use srstream::{ConfigError, Mode, SimConfig, SystemState};

/// Largest relative objective gap `oracle-check` accepts.
pub const ORACLE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Parser)]
#[command(name = "srstream", version, about = "Super-resolution streaming control simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one run and write trace.csv and summary.csv.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// One run per (value, seed); writes sweep.csv and sweep_means.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_axis)]
        axis: Axis,
        /// `start:stop:step` or a comma list.
        #[arg(long, value_parser = parse_values)]
        values: Values,
        /// Comma-separated seeds; defaults to the configured seed.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Compare the fast controller with the exhaustive oracle on random states.
    OracleCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1000)]
        states: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the loaded PSNR table.
    Table {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// TOML configuration; defaults apply to every missing key.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `KEY=VALUE`, applied after the file; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
}

#[derive(Debug, Clone)]
struct Values(Vec<f64>);

fn parse_axis(s: &str) -> Result<Axis, String> {
    s.parse()
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse()
}

/// `start:stop:step` (inclusive of `stop` up to rounding) or `a,b,c`.
fn parse_values(s: &str) -> Result<Values, String> {
    let num = |x: &str| {
        x.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| format!("`{x}` is not a number"))
    };
    let parts: Vec<&str> = s.split(':').collect();
    let values = match parts.as_slice() {
        [start, stop, step] => {
            let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
            if step <= 0.0 || stop < start {
                return Err(format!("range `{s}` needs start <= stop and step > 0"));
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            (0..count).map(|i| start + step * i as f64).collect()
        }
        [_] => s.split(',').map(num).collect::<Result<Vec<_>, _>>()?,
        _ => return Err(format!("`{s}` is neither start:stop:step nor a comma list")),
    };
    if values.is_empty() {
        return Err("no values given".into());
    }
    Ok(Values(values))
}

#[derive(Debug)]
enum CliError {
    Config(ConfigError),
    Trace(TraceError),
    Io { path: PathBuf, source: std::io::Error },
    Usage(String),
    Gap(f64),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(e) if e.is_io() => 3,
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Trace(TraceError::Header { .. } | TraceError::Field { .. }) => 2,
            CliError::Trace(_) | CliError::Io { .. } => 3,
            CliError::Gap(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Trace(e) => write!(f, "{e}"),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Usage(msg) => f.write_str(msg),
            CliError::Gap(gap) => {
                write!(f, "oracle gap {gap:e} exceeds tolerance {ORACLE_TOLERANCE:e}")
            }
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<TraceError> for CliError {
    fn from(e: TraceError) -> Self {
        CliError::Trace(e)
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code. Diagnostics go to stderr as one line.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("srstream: {e}");
            e.exit_code()
        }
    }
}

fn load_config(common: &Common, extra: &[String]) -> Result<SimConfig, CliError> {
    let mut doc = match &common.config {
        Some(path) => ConfigDocument::load(path)?,
        None => ConfigDocument::default(),
    };
    for o in &common.overrides {
        doc.apply_override(o)?;
    }
    if let Some(mode) = common.mode {
        doc.apply_override(&format!("controller.mode=\"{}\"", mode.name()))?;
    }
    for o in extra {
        doc.apply_override(o)?;
    }
    Ok(doc.parse()?.to_sim_config()?)
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run { common, seed, out } => {
            let extra: Vec<String> = seed.map(|s| format!("seed={s}")).into_iter().collect();
            let cfg = load_config(&common, &extra)?;
            let output = cfg.build()?.run();
            ensure_dir(&out)?;
            sim::write_trace(&out.join("trace.csv"), &output.trace)?;
            sim::write_summary(&out.join("summary.csv"), cfg.seed, &output.summary)?;
            let s = &output.summary;
            println!(
                "mode={} seed={} slots={} avg_q={} avg_z={} avg_psnr={} avg_p={} avg_u={} delay_rate={} throughput={}",
                cfg.controller.mode,
                cfg.seed,
                cfg.horizon_slots,
                s.avg_q_chunks,
                s.avg_z_seconds,
                s.avg_psnr_db,
                s.avg_power_w,
                s.avg_cores,
                s.delay_occurrence_rate,
                s.throughput_chunks_per_slot
            );
            Ok(())
        }
        Command::Sweep {
            common,
            axis,
            values,
            seeds,
            jobs,
            out,
        } => {
            let cfg = load_config(&common, &[])?;
            let seeds = if seeds.is_empty() { vec![cfg.seed] } else { seeds };
            if jobs == 0 {
                return Err(CliError::Usage("--jobs must be at least 1".into()));
            }
            let rows = sim::sweep(&cfg, axis, &values.0, &seeds, jobs)?;
            let means = sim::aggregate(&rows);
            ensure_dir(&out)?;
            sim::write_sweep(&out.join("sweep.csv"), &rows)?;
            sim::write_sweep_means(&out.join("sweep_means.csv"), &means)?;
            for m in &means {
                println!(
                    "{axis}={} runs={} avg_psnr={} avg_z={} avg_q={}",
                    m.axis_value, m.runs, m.mean.avg_psnr_db, m.mean.avg_z_seconds, m.mean.avg_q_chunks
                );
            }
            Ok(())
        }
        Command::OracleCheck {
            common,
            states,
            seed,
        } => {
            let cfg = load_config(&common, &[])?;
            let mode = cfg.controller.mode;
            if !matches!(mode, Mode::Proposed | Mode::Buffered | Mode::Comp2) {
                return Err(CliError::Usage(format!(
                    "oracle-check compares the proposed, buffered or comp2 controller, not {mode}"
                )));
            }
            let gap = oracle_gap(&cfg, states, seed)?;
            println!("mode={mode} states={states} max_relative_gap={gap:e}");
            if gap > ORACLE_TOLERANCE {
                return Err(CliError::Gap(gap));
            }
            Ok(())
        }
        Command::Table { common } => {
            let cfg = load_config(&common, &[])?;
            let scenario = cfg.build()?;
            print!("{}", psnr_grid(&scenario.quality.table));
            Ok(())
        }
    }
}

/// Largest `(fast − oracle)/(1 + |oracle|)` over random states with
/// `Q ∈ [0,50]`, `Z ∈ [0,10]`, `W, Θ ∈ [0,20]` and sampled gains.
fn oracle_gap(cfg: &SimConfig, states: usize, seed: u64) -> Result<f64, CliError> {
    let scenario = cfg.build()?;
    let controller = scenario.controller();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..states {
        let state = SystemState {
            q_chunks: rng.random_range(0..=50),
            z_seconds: rng.random_range(0.0..=10.0),
            w_virtual: rng.random_range(0.0..=20.0),
            theta_virtual: rng.random_range(0.0..=20.0),
        };
        let gain_sq = cfg.channel.sample_gain(&mut rng).gain_sq;
        let fast = controller.decide_scored(&state, gain_sq).objective;
        let exact = controller.oracle_scored(&state, gain_sq).objective;
        worst = worst.max((fast - exact) / (1.0 + exact.abs()));
    }
    Ok(worst)
}

fn psnr_grid(table: &srstream::QualityTable) -> String {
    let mut out = String::from("PSNR [dB]\n  r\\d");
    for d in table.depths() {
        out.push_str(&format!("{:>8}", d.to_string()));
    }
    out.push('\n');
    for (ri, r) in table.rates().iter().enumerate() {
        out.push_str(&format!("{:>5}", r.to_string()));
        for di in 0..table.depths().len() {
            out.push_str(&format!("{:>8.2}", table.cell_at(ri, di).psnr_db));
        }
        out.push('\n');
    }
    out
}
