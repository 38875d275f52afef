//! Grid sweeps over `(κ, τ, N, seed)` with resumable JSON-lines output.

use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::Path;
use std::sync::mpsc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{analyze, Tolerances};
use crate::error::{Error, Result};
use crate::hypotheses::{certify, default_delta, HypothesisReport, Regime, Threshold};
use crate::integrator::{integrate_partial, IntegratorSettings};
use crate::model::{sample_frequencies, spread_phases, FrequencyDistribution, InitialHistory, OscillatorSystem};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    #[default]
    Linear,
    Log,
}

/// Either explicit values or `count` points from `lo` to `hi` inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Values(Vec<f64>),
    Range {
        lo: f64,
        hi: f64,
        count: usize,
        #[serde(default)]
        scale: Scale,
    },
}

impl Grid {
    pub fn values(&self) -> Result<Vec<f64>> {
        let out = match *self {
            Grid::Values(ref v) => v.clone(),
            Grid::Range { lo, hi, count, scale } => {
                if count == 0 {
                    return Err(Error::Parameter("grid count must be >= 1".into()));
                }
                if scale == Scale::Log && !(lo > 0.0 && hi > 0.0) {
                    return Err(Error::Parameter(format!("log grid needs lo, hi > 0, got [{lo}, {hi}]")));
                }
                if count == 1 {
                    vec![lo]
                } else {
                    let last = (count - 1) as f64;
                    (0..count)
                        .map(|k| {
                            if k == count - 1 {
                                return hi;
                            }
                            let u = k as f64 / last;
                            match scale {
                                Scale::Linear => lo + u * (hi - lo),
                                Scale::Log => (lo.ln() + u * (hi.ln() - lo.ln())).exp(),
                            }
                        })
                        .collect()
                }
            }
        };
        if out.is_empty() {
            return Err(Error::Parameter("grid is empty".into()));
        }
        if out.iter().any(|x| !x.is_finite()) {
            return Err(Error::Parameter("grid values must be finite".into()));
        }
        Ok(out)
    }
}

/// Initial phases equally spaced over `diameter`, interior points jittered,
/// held constant over `[−τ, 0]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpreadRecipe {
    pub diameter: f64,
    #[serde(default)]
    pub jitter: f64,
}

fn default_sync_threshold() -> f64 {
    1e-8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub t_end: f64,
    /// Defaults per point to [`default_delta`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default = "default_sync_threshold")]
    pub sync_threshold: f64,
    pub kappa: Grid,
    pub tau: Grid,
    pub n: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Its seed is replaced by the point seed.
    pub frequencies: FrequencyDistribution,
    pub history: SpreadRecipe,
    #[serde(default)]
    pub integrator: IntegratorSettings,
    #[serde(default)]
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub kappa: f64,
    pub tau: f64,
    pub n: usize,
    pub seed: u64,
}

impl SweepPoint {
    fn key(&self) -> (u64, u64, usize, u64) {
        (self.kappa.to_bits(), self.tau.to_bits(), self.n, self.seed)
    }
}

impl SweepSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(Error::Parameter(format!("t_end must be positive, got {}", self.t_end)));
        }
        if self.n.is_empty() || self.seeds.is_empty() {
            return Err(Error::Parameter("n and seeds must be non-empty".into()));
        }
        if let Some(&n) = self.n.iter().find(|&&n| n < 2) {
            return Err(Error::Parameter(format!("n must be >= 2, got {n}")));
        }
        if !(self.sync_threshold > 0.0) {
            return Err(Error::Parameter("sync_threshold must be positive".into()));
        }
        if !(self.history.diameter >= 0.0 && self.history.diameter < std::f64::consts::PI) {
            return Err(Error::Parameter(format!(
                "history diameter must lie in [0, π), got {}",
                self.history.diameter
            )));
        }
        self.kappa.values()?;
        self.tau.values()?;
        Ok(())
    }

    /// Points in row-major order: κ outermost, then τ, N, seed.
    pub fn expand(&self) -> Result<Vec<SweepPoint>> {
        self.validate()?;
        let kappas = self.kappa.values()?;
        let taus = self.tau.values()?;
        let mut out = Vec::with_capacity(kappas.len() * taus.len() * self.n.len() * self.seeds.len());
        for &kappa in &kappas {
            for &tau in &taus {
                for &n in &self.n {
                    for &seed in &self.seeds {
                        out.push(SweepPoint { kappa, tau, n, seed });
                    }
                }
            }
        }
        Ok(out)
    }

    /// System and history for one point.
    pub fn instantiate(&self, p: &SweepPoint) -> Result<(OscillatorSystem, InitialHistory)> {
        let freqs = sample_frequencies(&self.frequencies.with_seed(p.seed), p.n)?;
        let sys = OscillatorSystem::new(freqs, p.kappa, p.tau)?;
        let jitter_seed = p.seed ^ 0x9e37_79b9_7f4a_7c15;
        let phases = spread_phases(p.n, self.history.diameter, self.history.jitter, jitter_seed)?;
        Ok((sys, InitialHistory::constant(phases)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateSummary {
    pub regime: Regime,
    pub certified: bool,
    pub h1_ok: bool,
    pub h2_ok: bool,
    pub h3_ok: bool,
    pub add_as_ok: bool,
    pub kappa_min: Threshold,
    pub tau_bar: Threshold,
    pub add_as_bound: Threshold,
    pub h1_margin: Threshold,
    pub h2_margin: Threshold,
    pub h3_margin: Threshold,
    pub add_as_margin: Threshold,
}

impl From<&HypothesisReport> for CertificateSummary {
    fn from(r: &HypothesisReport) -> Self {
        Self {
            regime: r.regime,
            certified: r.certified,
            h1_ok: r.h1_ok,
            h2_ok: r.h2_ok,
            h3_ok: r.h3_ok,
            add_as_ok: r.add_as_ok,
            kappa_min: r.kappa_min,
            tau_bar: r.tau_bar,
            add_as_bound: r.add_as_bound,
            h1_margin: r.h1_margin,
            h2_margin: r.h2_margin,
            h3_margin: r.h3_margin,
            add_as_margin: r.add_as_margin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Outcome {
    pub synced: bool,
    pub diverged: bool,
    pub t_star_measured: Option<f64>,
    pub t_star_predicted: Option<f64>,
    pub gamma_fit: Option<f64>,
    pub r_squared: Option<f64>,
    pub max_dini_residual: Option<f64>,
    pub final_d_omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub kappa: f64,
    pub tau: f64,
    pub n: usize,
    pub seed: u64,
    /// Absent when the point could not be set up.
    pub certificate: Option<CertificateSummary>,
    pub outcome: Outcome,
    pub wall_time: f64,
}

impl SweepRecord {
    pub fn point(&self) -> SweepPoint {
        SweepPoint {
            kappa: self.kappa,
            tau: self.tau,
            n: self.n,
            seed: self.seed,
        }
    }

    pub fn certified(&self) -> bool {
        self.certificate.as_ref().is_some_and(|c| c.certified)
    }
}

/// Certifies, integrates and analyzes one point. Never fails: problems are
/// recorded as `diverged` with an error message.
pub fn run_point(spec: &SweepSpec, p: &SweepPoint) -> SweepRecord {
    let start = Instant::now();
    let mut certificate = None;
    let outcome = simulate_point(spec, p, &mut certificate).unwrap_or_else(|e| Outcome {
        diverged: true,
        error: Some(e.to_string()),
        ..Outcome::default()
    });
    SweepRecord {
        kappa: p.kappa,
        tau: p.tau,
        n: p.n,
        seed: p.seed,
        certificate,
        outcome,
        wall_time: start.elapsed().as_secs_f64(),
    }
}

fn simulate_point(spec: &SweepSpec, p: &SweepPoint, cert: &mut Option<CertificateSummary>) -> Result<Outcome> {
    let (sys, hist) = spec.instantiate(p)?;
    let delta = spec.delta.unwrap_or_else(|| default_delta(spec.history.diameter));
    let report = certify(&sys, &hist, delta)?;
    *cert = Some(CertificateSummary::from(&report));
    let run = integrate_partial(&sys, &hist, spec.t_end, &spec.integrator)?;
    let bundle = analyze(
        &sys,
        &report,
        &run.trajectory,
        run.diverged_at,
        spec.sync_threshold,
        None,
        &spec.tolerances,
    )?;
    Ok(Outcome {
        synced: bundle.synced,
        diverged: bundle.diverged,
        t_star_measured: bundle.entry.and_then(|e| e.t_star_measured),
        t_star_predicted: bundle.entry.and_then(|e| e.t_star_predicted),
        gamma_fit: bundle.fit.map(|f| f.gamma),
        r_squared: bundle.fit.map(|f| f.r_squared),
        max_dini_residual: bundle.max_contraction_residual,
        final_d_omega: Some(bundle.final_d_omega),
        error: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SweepSummary {
    pub total: usize,
    pub simulated: usize,
    pub skipped: usize,
    pub certified_synced: usize,
    pub certified_not_synced: usize,
    pub uncertified_synced: usize,
    pub uncertified_not_synced: usize,
    pub diverged: usize,
    /// Along κ at every fixed `(τ, N, seed)`, once a point syncs every
    /// larger κ syncs too.
    pub boundary_monotone: bool,
}

pub fn summarize<'a>(records: impl IntoIterator<Item = &'a SweepRecord>) -> SweepSummary {
    let mut s = SweepSummary::default();
    let mut lines: BTreeMap<(u64, usize, u64), Vec<(f64, bool)>> = BTreeMap::new();
    for r in records {
        s.total += 1;
        match (r.certified(), r.outcome.synced) {
            (true, true) => s.certified_synced += 1,
            (true, false) => s.certified_not_synced += 1,
            (false, true) => s.uncertified_synced += 1,
            (false, false) => s.uncertified_not_synced += 1,
        }
        if r.outcome.diverged {
            s.diverged += 1;
        }
        lines
            .entry((r.tau.to_bits(), r.n, r.seed))
            .or_default()
            .push((r.kappa, r.outcome.synced));
    }
    s.boundary_monotone = lines.into_values().all(|mut line| {
        line.sort_by(|a, b| a.0.total_cmp(&b.0));
        line.windows(2).all(|w| !w[0].1 || w[1].1)
    });
    s
}

/// Reads the records of an existing output file. A torn final line is
/// ignored; any other malformed line is an error.
pub fn read_records(path: &Path) -> Result<Vec<SweepRecord>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let lines: Vec<String> = BufReader::new(file).lines().collect::<std::io::Result<_>>()?;
    let mut out = Vec::with_capacity(lines.len());
    for (k, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(r) => out.push(r),
            Err(_) if k + 1 == lines.len() => {}
            Err(e) => return Err(Error::Config(format!("{}:{}: {e}", path.display(), k + 1))),
        }
    }
    Ok(out)
}

/// Simulates every point of `spec` not already in `out`, appending one JSON
/// record per line in completion order, and summarizes the whole grid.
pub fn run_sweep(spec: &SweepSpec, jobs: usize, out: &Path) -> Result<SweepSummary> {
    if jobs < 1 {
        return Err(Error::Parameter("jobs must be >= 1".into()));
    }
    let points = spec.expand()?;
    let mut file = OpenOptions::new().create(true).read(true).append(true).open(out)?;
    let existing = read_records(out)?;
    let done: HashSet<_> = existing.iter().map(|r| r.point().key()).collect();
    let wanted: HashSet<_> = points.iter().map(SweepPoint::key).collect();
    let todo: Vec<SweepPoint> = points.iter().filter(|p| !done.contains(&p.key())).copied().collect();

    if !todo.is_empty() {
        repair_tail(&mut file)?;
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Parameter(e.to_string()))?;
    let (tx, rx) = mpsc::channel::<SweepRecord>();
    let fresh = std::thread::scope(|scope| -> Result<Vec<SweepRecord>> {
        let writer = scope.spawn(move || -> Result<Vec<SweepRecord>> {
            let mut written = Vec::new();
            for rec in rx {
                let mut line = serde_json::to_string(&rec)?;
                line.push('\n');
                file.write_all(line.as_bytes())?;
                file.flush()?;
                written.push(rec);
            }
            Ok(written)
        });
        pool.install(|| {
            todo.par_iter().for_each_with(tx, |tx, p| {
                // The receiver only disappears if the writer failed; its error
                // is reported below.
                let _ = tx.send(run_point(spec, p));
            })
        });
        writer.join().expect("sweep writer panicked")
    })?;

    let mut seen = HashSet::new();
    let grid_records: Vec<&SweepRecord> = existing
        .iter()
        .chain(&fresh)
        .filter(|r| wanted.contains(&r.point().key()) && seen.insert(r.point().key()))
        .collect();
    let mut summary = summarize(grid_records);
    summary.simulated = fresh.len();
    summary.skipped = points.len() - todo.len();
    Ok(summary)
}

/// Drops a torn final line, or terminates a complete one, so that appended
/// records start on a fresh line.
fn repair_tail(file: &mut File) -> Result<()> {
    let mut text = Vec::new();
    file.seek(SeekFrom::Start(0))?;
    file.read_to_end(&mut text)?;
    if text.is_empty() || text.ends_with(b"\n") {
        return Ok(());
    }
    let start = text.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
    if serde_json::from_slice::<SweepRecord>(&text[start..]).is_ok() {
        file.write_all(b"\n")?;
    } else {
        file.set_len(start as u64)?;
    }
    Ok(())
}
