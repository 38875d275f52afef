//! Command-line front end: `check`, `simulate`, `fit` and `sweep`.
//!
//! Exit codes: 0 ok, 1 input error, 2 hypotheses not satisfied,
//! 3 divergence, 4 a certified sweep point failed to synchronize.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::diagnostics::{analyze, diameters, fit_rate, Tolerances};
use crate::error::{Error, Result};
use crate::hypotheses::{certify, default_delta, HypothesisReport};
use crate::integrator::{integrate_partial, IntegratorSettings, Trajectory};
use crate::model::{sample_frequencies, spread, spread_phases, FrequencyDistribution, InitialHistory, OscillatorSystem};
use crate::sweep::{run_sweep, SweepSpec};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INPUT: u8 = 1;
pub const EXIT_HYPOTHESES: u8 = 2;
pub const EXIT_DIVERGED: u8 = 3;
pub const EXIT_THEOREM: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "delaysync", version, about = "Delayed Kuramoto simulation and synchronization certificates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the sufficient conditions and print the report.
    Check {
        #[arg(long)]
        config: PathBuf,
        /// Print the normalized configuration as TOML instead.
        #[arg(long)]
        dump_config: bool,
    },
    /// Integrate, write the trajectory CSV and optionally the diagnostics.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        diag: Option<PathBuf>,
        /// Per-sample `t,D_theta,D_omega,sigma_tau,L` series.
        #[arg(long)]
        series: Option<PathBuf>,
    },
    /// Fit an exponential rate to the frequency diameter of a trajectory CSV.
    Fit {
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
    },
    /// Run a parameter grid, appending JSON lines to `out`.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub n: usize,
    pub kappa: f64,
    pub tau: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequencies: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distribution: Option<FrequencyDistribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HistoryConfig {
    Constant {
        values: Vec<f64>,
    },
    Linear {
        values: Vec<f64>,
        slopes: Vec<f64>,
    },
    Sampled {
        times: Vec<f64>,
        values: Vec<Vec<f64>>,
        slopes: Vec<Vec<f64>>,
    },
    /// Constant phases spread over `diameter`.
    Spread {
        diameter: f64,
        #[serde(default)]
        jitter: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn default_sync_threshold() -> f64 {
    1e-8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub t_end: f64,
    #[serde(default = "default_sync_threshold")]
    pub sync_threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_window: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub system: SystemConfig,
    pub history: HistoryConfig,
    #[serde(default)]
    pub integrator: IntegratorSettings,
    pub run: RunSection,
    #[serde(default)]
    pub tolerances: Tolerances,
}

/// Parsed configuration with every embedded type constructed.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub system: OscillatorSystem,
    pub history: InitialHistory,
    pub delta: f64,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.resolve()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let s = &self.system;
        let freqs = match (&s.frequencies, &s.distribution) {
            (Some(f), None) => {
                if f.len() != s.n {
                    return Err(Error::Config(format!(
                        "system.frequencies has {} entries but system.n = {}",
                        f.len(),
                        s.n
                    )));
                }
                f.clone()
            }
            (None, Some(d)) => sample_frequencies(d, s.n)?,
            _ => {
                return Err(Error::Config(
                    "exactly one of system.frequencies and system.distribution must be given".into(),
                ))
            }
        };
        let system = OscillatorSystem::new(freqs, s.kappa, s.tau)?;
        let history = match &self.history {
            HistoryConfig::Constant { values } => InitialHistory::constant(values.clone()),
            HistoryConfig::Linear { values, slopes } => InitialHistory::linear(values.clone(), slopes.clone())?,
            HistoryConfig::Sampled { times, values, slopes } => {
                InitialHistory::sampled(times.clone(), values.clone(), slopes.clone())?
            }
            HistoryConfig::Spread { diameter, jitter, seed } => {
                InitialHistory::constant(spread_phases(s.n, *diameter, *jitter, *seed)?)
            }
        };
        history.check_against(s.n, s.tau)?;
        if !(self.run.t_end.is_finite() && self.run.t_end > 0.0) {
            return Err(Error::Parameter(format!("run.t_end must be positive, got {}", self.run.t_end)));
        }
        if !(self.run.sync_threshold > 0.0) {
            return Err(Error::Parameter("run.sync_threshold must be positive".into()));
        }
        let delta = match self.delta {
            Some(d) => d,
            None => default_delta(spread(&history.value_at(0.0))),
        };
        Ok(Resolved { system, history, delta })
    }
}

/// Runs one command, writing documented output to `stdout` and logs to
/// standard error. Returns the process exit code.
pub fn run(cli: Cli, stdout: &mut dyn Write) -> u8 {
    let result = match cli.command {
        Command::Check { config, dump_config } => cmd_check(&config, dump_config, stdout),
        Command::Simulate {
            config,
            out,
            diag,
            series,
        } => cmd_simulate(&config, &out, diag.as_deref(), series.as_deref(), stdout),
        Command::Fit { traj, from, to } => cmd_fit(&traj, from, to, stdout),
        Command::Sweep { spec, out, jobs } => cmd_sweep(&spec, &out, jobs, stdout),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}

fn print_json(stdout: &mut dyn Write, value: &impl Serialize) -> Result<()> {
    serde_json::to_writer_pretty(&mut *stdout, value)?;
    writeln!(stdout)?;
    Ok(())
}

pub fn cmd_check(config: &Path, dump_config: bool, stdout: &mut dyn Write) -> Result<u8> {
    let cfg = RunConfig::load(config)?;
    if dump_config {
        write!(stdout, "{}", cfg.to_toml())?;
        return Ok(EXIT_OK);
    }
    let r = cfg.resolve()?;
    let report = certify(&r.system, &r.history, r.delta)?;
    print_json(stdout, &report)?;
    Ok(if report.certified { EXIT_OK } else { EXIT_HYPOTHESES })
}

pub fn cmd_simulate(
    config: &Path,
    out: &Path,
    diag: Option<&Path>,
    series: Option<&Path>,
    stdout: &mut dyn Write,
) -> Result<u8> {
    let cfg = RunConfig::load(config)?;
    let r = cfg.resolve()?;
    let report: HypothesisReport = certify(&r.system, &r.history, r.delta)?;
    if !report.certified {
        eprintln!("note: configuration is not certified ({:?} regime)", report.regime);
    }
    let run = integrate_partial(&r.system, &r.history, cfg.run.t_end, &cfg.integrator)?;
    run.trajectory.write_csv(BufWriter::new(File::create(out)?))?;
    if let Some(t) = run.diverged_at {
        eprintln!("warning: divergence guard fired at t = {t}; partial trajectory kept");
    }
    let bundle = analyze(
        &r.system,
        &report,
        &run.trajectory,
        run.diverged_at,
        cfg.run.sync_threshold,
        cfg.run.fit_window,
        &cfg.tolerances,
    )?;
    if let Some(path) = diag {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, &json!({ "certificate": report, "diagnostics": bundle }))?;
        writeln!(w)?;
    }
    if let Some(path) = series {
        let diam = diameters(&run.trajectory)?;
        let eta = bundle.eta.map_or(0.0, |e| e.eta);
        let s = crate::diagnostics::lyapunov_series(&run.trajectory, &diam, eta, r.system.delay())?;
        s.write_csv(&diam, BufWriter::new(File::create(path)?))?;
    }
    let summary = json!({
        "synced": bundle.synced,
        "diverged": bundle.diverged,
        "t_star": bundle.entry.and_then(|e| e.t_star_measured),
        "gamma": bundle.fit.map(|f| f.gamma),
    });
    writeln!(stdout, "{}", serde_json::to_string(&summary)?)?;
    Ok(if bundle.diverged { EXIT_DIVERGED } else { EXIT_OK })
}

pub fn cmd_fit(traj: &Path, from: f64, to: f64, stdout: &mut dyn Write) -> Result<u8> {
    let t = Trajectory::read_csv(BufReader::new(File::open(traj)?), 0.0)?;
    let fit = fit_rate(&diameters(&t)?, (from, to))?;
    print_json(stdout, &fit)?;
    Ok(EXIT_OK)
}

pub fn cmd_sweep(spec: &Path, out: &Path, jobs: usize, stdout: &mut dyn Write) -> Result<u8> {
    let text = std::fs::read_to_string(spec)?;
    let spec = SweepSpec::from_toml(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", spec.display())),
        other => other,
    })?;
    let summary = run_sweep(&spec, jobs, out)?;
    print_json(stdout, &summary)?;
    Ok(if summary.certified_not_synced > 0 { EXIT_THEOREM } else { EXIT_OK })
}
