//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::f64::consts::{FRAC_PI_2, PI};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use clap::Parser;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use delaysync::cli::{run as run_cli, Cli};
use delaysync::diagnostics::{
    check_diameter_contraction, check_frequency_gronwall, check_lyapunov_decay, decay_window, diameters, entry_time,
    fit_rate, lyapunov_series, max_delayed_gap, select_eta,
};
use delaysync::hypotheses::{certify, default_delta, kappa_threshold, tau_bar, HypothesisReport};
use delaysync::integrator::{integrate, IntegratorSettings, Trajectory};
use delaysync::model::{derived_scales, spread_phases, InitialHistory, OscillatorSystem};
use delaysync::sweep::{read_records, run_sweep, Grid, SpreadRecipe, SweepSpec};
use delaysync::{Error, FrequencyDistribution};

const RANDOM_RUNS: usize = 50;
const HORIZON: f64 = 50.0;
const DINI_FACTOR: f64 = 50.0;
/// Smallest delay cap accepted by the generator; keeps meshes bounded.
const MIN_CAP: f64 = 0.03;

/// Seeded configuration satisfying (H1)–(H3). Even indices also satisfy the
/// strengthened delay bound. Draws whose admissible delay range is shorter
/// than `MIN_CAP` are rejected and redrawn.
fn random_config(i: usize) -> (OscillatorSystem, InitialHistory, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + i as u64);
    let n = 3 + i % 8;
    loop {
        let d_theta0 = rng.random_range(FRAC_PI_2 + 0.1..2.6);
        let delta = default_delta(d_theta0);
        let kappa: f64 = rng.random_range(0.5..3.0);
        let factor = rng.random_range(1.2..3.0);
        let per_unit = kappa_threshold(n, 1.0, d_theta0, delta).unwrap();
        let spread = kappa / (factor * per_unit);
        let mut raw: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (lo, hi) = raw.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        for x in &mut raw {
            *x = (*x - 0.5 * (lo + hi)) / (hi - lo) * spread;
        }
        let phases = spread_phases(n, d_theta0, 0.5, rng.random()).unwrap();
        let hist = InitialHistory::constant(phases);

        let probe = OscillatorSystem::new(raw.clone(), kappa, 0.0).unwrap();
        let scales = derived_scales(&probe, &hist).unwrap();
        let tb = tau_bar(delta, scales.r_omega, PI - d_theta0).unwrap();
        let cap = if i % 2 == 0 {
            let r = certify(&probe.with_delay(0.5 * tb).unwrap(), &hist, delta).unwrap();
            tb.min(r.add_as_bound.value())
        } else {
            tb
        };
        let frac: f64 = rng.random_range(0.2..0.9);
        if cap >= MIN_CAP {
            return (OscillatorSystem::new(raw, kappa, frac * cap).unwrap(), hist, delta);
        }
    }
}

struct EntryCheck {
    measured: f64,
    predicted: f64,
    delayed_gap: f64,
}

struct DecayCheck {
    gamma: f64,
    r_squared: f64,
    decade: bool,
    horizon: f64,
    ratio: f64,
}

struct LyapunovCheck {
    dominates: bool,
    max_increase: f64,
    monotone: bool,
}

/// Measurements from one random run. Trajectories are dropped once measured.
struct RunCheck {
    label: String,
    tol: f64,
    hypotheses_ok: bool,
    strengthened: bool,
    excess: f64,
    dini_samples: usize,
    dini_max: f64,
    entry: Result<EntryCheck, String>,
    gronwall: Result<(f64, f64), String>,
    decay: Option<Result<DecayCheck, String>>,
    lyapunov: Option<Result<LyapunovCheck, String>>,
}

fn measure(i: usize, simulate: &mut Duration) -> RunCheck {
    let (sys, hist, delta) = random_config(i);
    let report = certify(&sys, &hist, delta).unwrap();
    let settings = IntegratorSettings::default();
    let tol = DINI_FACTOR * settings.step(sys.delay());
    let start = Instant::now();
    let traj = integrate(&sys, &hist, HORIZON, &settings).unwrap();
    *simulate += start.elapsed();
    let diam = diameters(&traj).unwrap();
    let scales = report.scales();
    let label = format!(
        "run {i} (N={} κ={:.4} τ={:.5} D_θ0={:.4} D(Ω)={:.4})",
        sys.n(),
        sys.coupling(),
        sys.delay(),
        report.d_theta0,
        report.d_omega
    );

    let contraction = check_diameter_contraction(&diam, &sys, &scales, report.delta);
    let entry = entry_time(&diam, report.d_star, &sys, &scales).unwrap();
    let t_star = entry.t_star_measured;
    let entry_check = match (entry.t_star_measured, entry.t_star_predicted) {
        (None, _) => Err("never entered the dual-angle arc".to_string()),
        (_, None) => Err("no predicted entry time".to_string()),
        (Some(measured), Some(predicted)) => max_delayed_gap(&traj, measured)
            .map(|delayed_gap| EntryCheck {
                measured,
                predicted,
                delayed_gap,
            })
            .ok_or_else(|| "no delayed samples after entry".to_string()),
    };

    let gronwall = t_star.ok_or_else(|| "no entry time".to_string()).and_then(|ts| {
        let series = lyapunov_series(&traj, &diam, 0.0, sys.delay()).map_err(|e| e.to_string())?;
        let g = check_frequency_gronwall(&series, report.zeta_star, sys.coupling(), ts);
        if g.times.is_empty() {
            return Err("no samples after entry".to_string());
        }
        Ok((g.max_dini_residual, g.max_rate_residual))
    });

    let strengthened = report.add_as_ok;
    let lyapunov = strengthened.then(|| {
        let ts = t_star.ok_or_else(|| "no entry time".to_string())?;
        let eta = select_eta(sys.coupling(), sys.delay(), report.zeta_star).map_err(|e| e.to_string())?;
        let series = lyapunov_series(&traj, &diam, eta.eta, sys.delay()).map_err(|e| e.to_string())?;
        let d = check_lyapunov_decay(&series, ts, tol).map_err(|e| e.to_string())?;
        Ok(LyapunovCheck {
            dominates: series.lyapunov.iter().zip(&series.d_omega).all(|(l, d)| l >= d),
            max_increase: d.max_increase_rate,
            monotone: d.monotone_after,
        })
    });

    let decay = strengthened.then(|| {
        let ts = t_star.ok_or_else(|| "no entry time".to_string())?;
        let window = decay_window(&diam, ts + sys.delay()).ok_or_else(|| "no decay window".to_string())?;
        let a = traj.index_near(window.0).unwrap();
        let b = traj.index_near(window.1).unwrap();
        let fit = fit_rate(&diam, window).map_err(|e| e.to_string())?;
        let horizon = if fit.gamma > 0.0 { (50.0 / fit.gamma).min(200.0) } else { 200.0 };
        let long = if horizon > HORIZON {
            diameters(&integrate(&sys, &hist, horizon, &settings).unwrap()).unwrap()
        } else {
            diam.clone()
        };
        let k = long.times.partition_point(|&t| t < horizon - 1e-9).min(long.len() - 1);
        Ok(DecayCheck {
            gamma: fit.gamma,
            r_squared: fit.r_squared,
            decade: diam.d_omega[b] <= 0.1 * diam.d_omega[a],
            horizon,
            ratio: long.d_omega[k] / long.d_omega[0],
        })
    });

    RunCheck {
        label,
        tol,
        hypotheses_ok: report.h1_ok && report.h2_ok && report.h3_ok,
        strengthened,
        excess: contraction.bound_excess,
        dini_samples: contraction.residuals.len(),
        dini_max: contraction.max_residual,
        entry: entry_check,
        gronwall,
        decay,
        lyapunov,
    }
}

/// The random runs and the time spent integrating them to `HORIZON`.
fn random_runs() -> &'static (Vec<RunCheck>, Duration) {
    static RUNS: OnceLock<(Vec<RunCheck>, Duration)> = OnceLock::new();
    RUNS.get_or_init(|| {
        let mut simulate = Duration::ZERO;
        let runs = (0..RANDOM_RUNS).map(|i| measure(i, &mut simulate)).collect();
        (runs, simulate)
    })
}

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn c01_two_oscillator_gap() -> Outcome {
    let start = Instant::now();
    let sys = OscillatorSystem::new(vec![0.0, 0.0], 1.0, 0.0).unwrap();
    let hist = InitialHistory::constant(vec![0.5, -0.5]);
    let traj = integrate(&sys, &hist, 1.0, &IntegratorSettings::default()).unwrap();
    let elapsed = start.elapsed();
    let k = traj.len() - 1;
    let gap = traj.phases(k)[0] - traj.phases(k)[1];
    let exact = 2.0 * (0.5f64.tan() * (-1.0f64).exp()).atan();
    let err = (gap - exact).abs();
    ensure(traj.last_time() == 1.0 || (traj.last_time() - 1.0).abs() < 1e-12, || format!("final time {}", traj.last_time()))?;
    ensure(err < 1e-8, || format!("gap error {err:.3e}"))?;
    ensure(elapsed.as_secs_f64() < 0.1, || format!("runtime {elapsed:?}"))?;
    Ok(format!("error {err:.2e}, {elapsed:.1?}"))
}

fn c02_convergence_order() -> Outcome {
    let start = Instant::now();
    let hist = InitialHistory::constant(spread_phases(5, 2.0, 0.5, 11).unwrap());
    let freqs = vec![-0.1, 0.05, 0.1, -0.03, 0.0];
    let delta = default_delta(2.0);
    let kappa_min = kappa_threshold(5, 0.2, 2.0, delta).unwrap();
    let sys = OscillatorSystem::new(freqs, 1.5 * kappa_min, 0.1).unwrap();
    let report = certify(&sys, &hist, delta).unwrap();
    ensure(report.certified, || "configuration not certified".into())?;
    let at_end = |m: usize| {
        let s = IntegratorSettings {
            step_divisor: m,
            ..IntegratorSettings::default()
        };
        let t = integrate(&sys, &hist, 5.0, &s).unwrap();
        assert!((t.last_time() - 5.0).abs() < 1e-9);
        t.phases(t.len() - 1).to_vec()
    };
    let m = 2;
    let reference = at_end(16 * m);
    let dev = |x: &[f64]| x.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let e1 = dev(&at_end(m));
    let e2 = dev(&at_end(2 * m));
    let ratio = e1 / e2;
    let elapsed = start.elapsed();
    ensure((12.0..=20.0).contains(&ratio), || format!("ratio {ratio:.3} (errors {e1:.3e}, {e2:.3e})"))?;
    ensure(elapsed.as_secs_f64() < 5.0, || format!("runtime {elapsed:?}"))?;
    Ok(format!("ratio {ratio:.3} (errors {e1:.2e} → {e2:.2e}), {elapsed:.1?}"))
}

fn c03_uniform_diameter_bound() -> Outcome {
    let (runs, elapsed) = random_runs();
    let mut worst = f64::NEG_INFINITY;
    for run in runs {
        ensure(run.hypotheses_ok, || format!("{} violates a hypothesis", run.label))?;
        worst = worst.max(run.excess);
        ensure(run.excess <= 1e-6, || format!("{}: max D(θ) exceeds D_θ0 by {:.3e}", run.label, run.excess))?;
    }
    ensure(elapsed.as_secs_f64() < 60.0, || format!("runtime {elapsed:?}"))?;
    let strengthened = runs.iter().filter(|r| r.strengthened).count();
    Ok(format!(
        "{} runs ({strengthened} with the strengthened delay bound), worst excess {worst:.2e}, {elapsed:.1?}",
        runs.len()
    ))
}

fn c04_dini_inequality() -> Outcome {
    let (runs, _) = random_runs();
    let mut worst = f64::NEG_INFINITY;
    let mut checked = 0;
    for run in runs {
        checked += run.dini_samples;
        worst = worst.max(run.dini_max / run.tol);
        ensure(run.dini_max <= run.tol, || format!("{}: residual {:.3e} > {:.3e}", run.label, run.dini_max, run.tol))?;
    }
    Ok(format!("{checked} samples, worst residual/tol {worst:.3}"))
}

fn c05_entry_time() -> Outcome {
    let (runs, _) = random_runs();
    let mut worst_ratio = 0.0f64;
    let mut worst_gap = 0.0f64;
    for run in runs {
        let e = run.entry.as_ref().map_err(|e| format!("{}: {e}", run.label))?;
        ensure(e.measured <= e.predicted, || {
            format!("{}: t* {:.5} > predicted {:.5}", run.label, e.measured, e.predicted)
        })?;
        if e.predicted > 0.0 {
            worst_ratio = worst_ratio.max(e.measured / e.predicted);
        }
        worst_gap = worst_gap.max(e.delayed_gap);
        ensure(e.delayed_gap < FRAC_PI_2, || format!("{}: delayed gap {:.5} after t*", run.label, e.delayed_gap))?;
    }
    Ok(format!("worst t*/predicted {worst_ratio:.3}, worst delayed gap {worst_gap:.4}"))
}

fn c06_exponential_decay() -> Outcome {
    let (runs, _) = random_runs();
    let mut count = 0;
    let (mut min_gamma, mut min_r2, mut worst_ratio) = (f64::INFINITY, f64::INFINITY, 0.0f64);
    for run in runs {
        let Some(decay) = &run.decay else { continue };
        count += 1;
        let d = decay.as_ref().map_err(|e| format!("{}: {e}", run.label))?;
        ensure(d.decade, || format!("{}: less than one decade of decay", run.label))?;
        min_gamma = min_gamma.min(d.gamma);
        min_r2 = min_r2.min(d.r_squared);
        worst_ratio = worst_ratio.max(d.ratio);
        ensure(d.gamma > 0.0 && d.r_squared >= 0.99, || {
            format!("{}: γ = {:.4}, r² = {:.5}", run.label, d.gamma, d.r_squared)
        })?;
        ensure(d.ratio < 1e-8, || {
            format!("{}: D(ω({:.1}))/D(ω(0)) = {:.3e}", run.label, d.horizon, d.ratio)
        })?;
    }
    ensure(count > 0, || "no run satisfies the strengthened delay bound".into())?;
    Ok(format!(
        "{count} runs, min γ {min_gamma:.4}, min r² {min_r2:.5}, worst D(ω) ratio {worst_ratio:.2e}"
    ))
}

fn c07_frequency_inequalities() -> Outcome {
    let (runs, _) = random_runs();
    let mut worst = f64::NEG_INFINITY;
    for run in runs {
        let &(dini, rate) = run.gronwall.as_ref().map_err(|e| format!("{}: {e}", run.label))?;
        worst = worst.max(dini.max(rate) / run.tol);
        ensure(dini <= run.tol, || format!("{}: Dini residual {dini:.3e} > {:.3e}", run.label, run.tol))?;
        ensure(rate <= run.tol, || format!("{}: rate residual {rate:.3e} > {:.3e}", run.label, run.tol))?;
    }
    Ok(format!("{} runs, worst residual/tol {worst:.3}", runs.len()))
}

fn c08_lyapunov_monotone() -> Outcome {
    let (runs, _) = random_runs();
    let mut count = 0;
    let mut worst = f64::NEG_INFINITY;
    for run in runs {
        let Some(lyap) = &run.lyapunov else { continue };
        count += 1;
        let l = lyap.as_ref().map_err(|e| format!("{}: {e}", run.label))?;
        ensure(l.dominates, || format!("{}: L < D(ω) at some sample", run.label))?;
        worst = worst.max(l.max_increase / run.tol);
        ensure(l.monotone, || format!("{}: L increases at rate {:.3e}", run.label, l.max_increase))?;
    }
    ensure(count > 0, || "no run satisfies the strengthened delay bound".into())?;
    Ok(format!("{count} runs, worst increase/tol {worst:.3}"))
}

fn c09_eta_algebra() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..1000 {
        let kappa: f64 = rng.random_range(0.01..10.0);
        let zeta: f64 = rng.random_range(0.01..1.0);
        let bound = (zeta / (kappa * (2.0 + zeta))).ln_1p();
        let tau = rng.random_range(0.001..0.999) * bound;
        let e = select_eta(kappa, tau, zeta).map_err(|e| format!("(κ, τ, ζ*) = ({kappa}, {tau}, {zeta}): {e}"))?;
        ensure(e.lower < e.upper.unwrap() && e.eta == e.lower, || {
            format!("(κ, τ, ζ*) = ({kappa}, {tau}, {zeta}): [{}, {:?})", e.lower, e.upper)
        })?;
        let weak = (1.0 / kappa).ln_1p();
        let tau = weak * rng.random_range(1.001..3.0);
        let denom = (-tau).exp() - kappa * -(-tau).exp_m1();
        ensure(denom <= 0.0, || format!("denominator {denom} > 0 at τ = {tau}, κ = {kappa}"))?;
        ensure(matches!(select_eta(kappa, tau, zeta), Err(Error::Infeasible(_))), || {
            format!("select_eta accepted τ = {tau} above ln(1 + 1/κ)")
        })?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed.as_secs_f64() < 1.0, || format!("runtime {elapsed:?}"))?;
    Ok(format!("1000 feasible and 1000 infeasible triples, {elapsed:.1?}"))
}

fn c10_brute_force_diameters() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..1000 {
        let n = rng.random_range(2..=8);
        let len = rng.random_range(1..6);
        let rows = |rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
            (0..len).map(|_| (0..n).map(|_| rng.random_range(-4.0..4.0)).collect()).collect()
        };
        let (th, w, r) = (rows(&mut rng), rows(&mut rng), rows(&mut rng));
        let times = (0..len).map(|k| k as f64 * 0.1).collect();
        let traj = Trajectory::from_rows(0.0, times, th.clone(), w.clone(), r).unwrap();
        let d = diameters(&traj).unwrap();
        let brute = |row: &[f64]| {
            let mut best = 0.0f64;
            for a in row {
                for b in row {
                    best = best.max((a - b).abs());
                }
            }
            best
        };
        for k in 0..len {
            ensure(d.d_theta[k] == brute(&th[k]) && d.d_omega[k] == brute(&w[k]), || {
                format!("mismatch on row {:?}", th[k])
            })?;
            let (i, j) = d.theta_pair[k];
            ensure(th[k][i] - th[k][j] == d.d_theta[k], || "pair does not attain the diameter".into())?;
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed.as_secs_f64() < 1.0, || format!("runtime {elapsed:?}"))?;
    Ok(format!("1000 samples exact, {elapsed:.1?}"))
}

fn sweep_spec() -> (SweepSpec, f64, f64) {
    let n = 6;
    let diameter = 2.0;
    let delta = default_delta(diameter);
    let mut spec = SweepSpec {
        t_end: 60.0,
        delta: Some(delta),
        sync_threshold: 1e-8,
        kappa: Grid::Values(vec![1.0]),
        tau: Grid::Values(vec![0.0]),
        n: vec![n],
        seeds: vec![3],
        frequencies: FrequencyDistribution::Uniform {
            lo: -0.1,
            hi: 0.1,
            seed: 0,
        },
        history: SpreadRecipe { diameter, jitter: 0.5 },
        integrator: IntegratorSettings::default(),
        tolerances: Default::default(),
    };
    let probe = delaysync::sweep::SweepPoint {
        kappa: 1.0,
        tau: 0.0,
        n,
        seed: 3,
    };
    let (sys, hist) = spec.instantiate(&probe).unwrap();
    let scales = derived_scales(&sys, &hist).unwrap();
    let kappa_min = kappa_threshold(n, scales.d_omega, scales.d_theta0, delta).unwrap();
    let kappa_c = 1.5 * kappa_min;
    let r_omega = sys.natural_frequencies().iter().fold(0.0f64, |m, x| m.max(x.abs())) + kappa_c;
    let tau_c = 0.5 * tau_bar(delta, r_omega, PI - scales.d_theta0).unwrap();
    spec.kappa = Grid::Range {
        lo: 0.5 * kappa_c,
        hi: 1.5 * kappa_c,
        count: 6,
        scale: delaysync::sweep::Scale::Linear,
    };
    spec.tau = Grid::Range {
        lo: 0.25 * tau_c,
        hi: 1.75 * tau_c,
        count: 6,
        scale: delaysync::sweep::Scale::Linear,
    };
    (spec, kappa_c, tau_c)
}

fn c11_sweep() -> Outcome {
    let (spec, kappa_c, tau_c) = sweep_spec();
    let dir = tempfile::tempdir().unwrap();
    let out4 = dir.path().join("jobs4.jsonl");
    let out1 = dir.path().join("jobs1.jsonl");
    let start = Instant::now();
    let s4 = run_sweep(&spec, 4, &out4).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let s1 = run_sweep(&spec, 1, &out1).map_err(|e| e.to_string())?;
    let normalize = |path: &std::path::Path| {
        let mut v: Vec<String> = read_records(path)
            .unwrap()
            .into_iter()
            .map(|mut r| {
                r.wall_time = 0.0;
                serde_json::to_string(&r).unwrap()
            })
            .collect();
        v.sort();
        v
    };
    let certified = s4.certified_synced + s4.certified_not_synced;
    ensure(s4.total == 36, || format!("{} records", s4.total))?;
    ensure(certified > 0, || "no certified point in the grid".into())?;
    ensure(s4.certified_not_synced == 0, || format!("certified ∧ ¬synced = {}", s4.certified_not_synced))?;
    ensure(normalize(&out1) == normalize(&out4), || "record sets differ between jobs=1 and jobs=4".into())?;
    ensure(s1 == s4, || "summaries differ between jobs=1 and jobs=4".into())?;
    ensure(elapsed.as_secs_f64() < 120.0, || format!("runtime {elapsed:?}"))?;
    Ok(format!(
        "κ_c = {kappa_c:.4}, τ_c = {tau_c:.5}: {certified} certified, {} uncertified synced, {} not synced, {elapsed:.1?}",
        s4.uncertified_synced, s4.uncertified_not_synced
    ))
}

fn cli(args: &[&str]) -> (u8, String) {
    let cli = Cli::try_parse_from(std::iter::once("delaysync").chain(args.iter().copied())).unwrap();
    let mut out = Vec::new();
    let code = run_cli(cli, &mut out);
    (code, String::from_utf8(out).unwrap())
}

fn c12_zero_delay() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = |kappa: f64| {
        let path = dir.path().join(format!("k{kappa}.toml"));
        let text = format!(
            "[system]\nn = 3\nkappa = {kappa}\ntau = 0.0\nfrequencies = [-0.25, 0.0, 0.25]\n\n\
             [history]\nkind = \"constant\"\nvalues = [{}, 0.0, {}]\n\n[run]\nt_end = 200.0\n",
            -PI / 3.0,
            PI / 3.0
        );
        std::fs::write(&path, text).unwrap();
        path
    };
    let good = config(0.6);
    let (code, out) = cli(&["check", "--config", good.to_str().unwrap()]);
    let report: HypothesisReport = serde_json::from_str(&out).map_err(|e| e.to_string())?;
    ensure(code == 0 && report.certified, || format!("κ = 0.6: exit {code}"))?;
    ensure((report.d_theta0 - 2.0 * PI / 3.0).abs() < 1e-12 && (report.d_omega - 0.5).abs() < 1e-12, || {
        "unexpected scales".into()
    })?;
    let csv = dir.path().join("traj.csv");
    let (code, out) = cli(&["simulate", "--config", good.to_str().unwrap(), "--out", csv.to_str().unwrap()]);
    let summary: serde_json::Value = serde_json::from_str(&out).map_err(|e| e.to_string())?;
    ensure(code == 0 && summary["synced"] == true, || format!("κ = 0.6 simulate: exit {code}, {out}"))?;
    let bad = config(0.5);
    let (code, out) = cli(&["check", "--config", bad.to_str().unwrap()]);
    let report: HypothesisReport = serde_json::from_str(&out).map_err(|e| e.to_string())?;
    ensure(code == 2 && !report.h2_ok, || format!("κ = 0.5: exit {code}"))?;
    Ok(format!("κ_min = {:.5}; κ = 0.6 certified and synced, κ = 0.5 exit 2", report.kappa_min.value()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("two-oscillator closed form", c01_two_oscillator_gap),
        ("fourth-order convergence", c02_convergence_order),
        ("uniform phase-diameter bound", c03_uniform_diameter_bound),
        ("phase-diameter Dini inequality", c04_dini_inequality),
        ("entry time and delayed gaps", c05_entry_time),
        ("exponential frequency decay", c06_exponential_decay),
        ("frequency differential inequalities", c07_frequency_inequalities),
        ("Lyapunov monotonicity", c08_lyapunov_monotone),
        ("weight window algebra", c09_eta_algebra),
        ("brute-force diameters", c10_brute_force_diameters),
        ("sweep: certified implies synced", c11_sweep),
        ("zero-delay reduction", c12_zero_delay),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let id = format!("C{:02}", k + 1);
        if !filter.is_empty() && !filter.iter().any(|p| id.contains(p.as_str()) || name.contains(p.as_str())) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {id} {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {id} {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
