//! Time-dependent functionals evaluated on a [`Trajectory`]: diameters,
//! residuals of the differential inequalities, entry time into the
//! dual-angle arc, the Lyapunov functional, and decay-rate fits.
//!
//! Dini derivatives are approximated by forward differences on the sample
//! mesh; all quadratures are composite trapezoid rules on that mesh.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypotheses::HypothesisReport;
use crate::integrator::{fmt_f64, Trajectory};
use crate::model::{DerivedScales, OscillatorSystem};

/// Per-sample phase and frequency diameters with the attaining pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct DiameterSeries {
    pub times: Vec<f64>,
    pub d_theta: Vec<f64>,
    pub d_omega: Vec<f64>,
    /// `(i, j)` with `θ_i − θ_j = D(θ)`.
    pub theta_pair: Vec<(usize, usize)>,
    /// `(i, j)` with `ω_i − ω_j = D(ω)`.
    pub omega_pair: Vec<(usize, usize)>,
}

impl DiameterSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Max minus min of `row` and the lexicographically smallest attaining
/// ordered pair `(i, j)`, `i ≠ j`.
pub fn diameter_with_pair(row: &[f64]) -> (f64, (usize, usize)) {
    let mut hi = 0;
    let mut lo = 0;
    for (k, &x) in row.iter().enumerate() {
        if x > row[hi] {
            hi = k;
        }
        if x < row[lo] {
            lo = k;
        }
    }
    if hi == lo {
        // All entries equal: the smallest pair with distinct indices.
        return (0.0, (0, 1));
    }
    (row[hi] - row[lo], (hi, lo))
}

pub fn diameters(traj: &Trajectory) -> Result<DiameterSeries> {
    if traj.is_empty() {
        return Err(Error::Empty);
    }
    let len = traj.len();
    let mut out = DiameterSeries {
        times: traj.times().to_vec(),
        d_theta: Vec::with_capacity(len),
        d_omega: Vec::with_capacity(len),
        theta_pair: Vec::with_capacity(len),
        omega_pair: Vec::with_capacity(len),
    };
    for k in 0..len {
        let (dt, pt) = diameter_with_pair(traj.phases(k));
        let (dw, pw) = diameter_with_pair(traj.frequencies(k));
        out.d_theta.push(dt);
        out.theta_pair.push(pt);
        out.d_omega.push(dw);
        out.omega_pair.push(pw);
    }
    Ok(out)
}

/// Right-hand side of the phase-diameter inequality,
/// `D(Ω) − 2κ((N−2)/N) sin(D/2) cos(D/2 + R_ω τ)`.
pub fn diameter_bound_rhs(d_theta: f64, n: usize, kappa: f64, tau: f64, scales: &DerivedScales) -> f64 {
    let frac = (n as f64 - 2.0) / n as f64;
    scales.d_omega - 2.0 * kappa * frac * (0.5 * d_theta).sin() * (0.5 * d_theta + scales.r_omega * tau).cos()
}

/// Residuals of the phase-diameter Dini inequality and the uniform bound
/// `D(θ(t)) ≤ D_θ0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionCheck {
    pub times: Vec<f64>,
    /// Forward difference of `D(θ)` minus the inequality's right-hand side,
    /// at samples where `D(θ) > δ/2`.
    pub residuals: Vec<f64>,
    /// `-inf` is never reported; an empty series gives 0.
    pub max_residual: f64,
    pub max_d_theta: f64,
    /// `max_t D(θ(t)) − D_θ0`.
    pub bound_excess: f64,
}

impl ContractionCheck {
    pub fn bound_holds(&self, tol: f64) -> bool {
        self.bound_excess <= tol
    }
}

pub fn check_diameter_contraction(
    diam: &DiameterSeries,
    sys: &OscillatorSystem,
    scales: &DerivedScales,
    delta: f64,
) -> ContractionCheck {
    let mut times = Vec::new();
    let mut residuals = Vec::new();
    for k in 0..diam.len().saturating_sub(1) {
        let d = diam.d_theta[k];
        if d <= 0.5 * delta {
            continue;
        }
        let dt = diam.times[k + 1] - diam.times[k];
        let slope = (diam.d_theta[k + 1] - d) / dt;
        let rhs = diameter_bound_rhs(d, sys.n(), sys.coupling(), sys.delay(), scales);
        times.push(diam.times[k]);
        residuals.push(slope - rhs);
    }
    let max_d_theta = diam.d_theta.iter().copied().fold(0.0, f64::max);
    ContractionCheck {
        max_residual: if residuals.is_empty() {
            0.0
        } else {
            residuals.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        },
        times,
        residuals,
        max_d_theta,
        bound_excess: max_d_theta - scales.d_theta0,
    }
}

/// Measured and predicted time after which `D(θ) < D*` for good.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntryTimeReport {
    pub t_star_measured: Option<f64>,
    pub t_star_predicted: Option<f64>,
    pub d_star: f64,
}

/// Linear-decrease bound `(D_θ0 − D*) / (2κ((N−2)/N) sin(D_θ0/2) cos(D_θ0/2 + R_ω τ) − D(Ω))`.
pub fn predicted_entry_time(d_star: f64, n: usize, kappa: f64, tau: f64, scales: &DerivedScales) -> Option<f64> {
    let rate = -diameter_bound_rhs(scales.d_theta0, n, kappa, tau, scales);
    (rate > 0.0).then(|| ((scales.d_theta0 - d_star) / rate).max(0.0))
}

pub fn entry_time(diam: &DiameterSeries, d_star: f64, sys: &OscillatorSystem, scales: &DerivedScales) -> Result<EntryTimeReport> {
    if !(d_star > 0.0 && d_star <= std::f64::consts::FRAC_PI_2) {
        return Err(Error::Domain(format!("D* must lie in (0, π/2], got {d_star}")));
    }
    if diam.is_empty() {
        return Err(Error::Empty);
    }
    let t_star_measured = match diam.d_theta.iter().rposition(|&d| d >= d_star) {
        None => Some(diam.times[0]),
        Some(k) if k + 1 == diam.len() => None,
        Some(k) => {
            let (d0, d1) = (diam.d_theta[k], diam.d_theta[k + 1]);
            let (t0, t1) = (diam.times[k], diam.times[k + 1]);
            let frac = if d0 > d1 { (d0 - d_star) / (d0 - d1) } else { 0.0 };
            Some(t0 + frac.clamp(0.0, 1.0) * (t1 - t0))
        }
    };
    Ok(EntryTimeReport {
        t_star_measured,
        t_star_predicted: predicted_entry_time(d_star, sys.n(), sys.coupling(), sys.delay(), scales),
        d_star,
    })
}

/// Lyapunov weight and its admissible window `[lower, upper)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaChoice {
    pub eta: f64,
    pub lower: f64,
    /// `None` when `τ = 0` (no upper restriction).
    pub upper: Option<f64>,
}

/// Picks `η` at the lower end of
/// `[2κ/(e^{−τ} − κ(1−e^{−τ})), ζ*/(1−e^{−τ}))`.
pub fn select_eta(kappa: f64, tau: f64, zeta_star: f64) -> Result<EtaChoice> {
    if !(kappa >= 0.0 && tau >= 0.0) {
        return Err(Error::Parameter(format!("need κ >= 0 and τ >= 0, got ({kappa}, {tau})")));
    }
    if tau == 0.0 {
        let eta = 2.0 * kappa;
        return Ok(EtaChoice {
            eta,
            lower: eta,
            upper: None,
        });
    }
    let decay = (-tau).exp();
    let loss = -(-tau).exp_m1();
    let denom = decay - kappa * loss;
    if !(denom > 0.0) {
        return Err(Error::Infeasible(format!(
            "lower weight bound undefined: τ = {tau} is not below ln(1 + 1/κ) = {}",
            (1.0 / kappa).ln_1p()
        )));
    }
    if !(zeta_star > 0.0) {
        return Err(Error::Infeasible(format!("ζ* = {zeta_star} is not positive")));
    }
    let lower = 2.0 * kappa / denom;
    let upper = zeta_star / loss;
    if !(lower < upper) {
        return Err(Error::Infeasible(format!(
            "empty weight window [{lower}, {upper}): τ = {tau} is not below ln(1 + ζ*/(κ(2+ζ*))) = {}",
            (zeta_star / (kappa * (2.0 + zeta_star))).ln_1p()
        )));
    }
    Ok(EtaChoice {
        eta: lower,
        lower,
        upper: Some(upper),
    })
}

/// `σ_τ(t)` and the Lyapunov functional sampled on the trajectory mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSeries {
    pub eta: f64,
    pub tau: f64,
    pub times: Vec<f64>,
    pub d_omega: Vec<f64>,
    /// `max_j |ω̇_j|` per sample.
    pub max_rate: Vec<f64>,
    /// `M(t) = ∫_0^t max_j |ω̇_j|`.
    pub cumulative_max_rate: Vec<f64>,
    pub sigma_tau: Vec<f64>,
    pub lyapunov: Vec<f64>,
    /// True for samples with `t < τ`, whose window reaches into the history.
    pub partial: Vec<bool>,
}

/// Builds `σ_τ = M(t) − M(t−τ)` and
/// `L(t) = D(ω(t)) + η ∫_{t−τ}^t e^{−(t−s)} (M(t) − M(s)) ds`.
///
/// `ω̇` is taken as zero on the history interval.
pub fn lyapunov_series(traj: &Trajectory, diam: &DiameterSeries, eta: f64, tau: f64) -> Result<LyapunovSeries> {
    if traj.is_empty() {
        return Err(Error::Empty);
    }
    let len = traj.len();
    let dt = traj.sample_spacing();
    let lag = if tau > 0.0 {
        let lag = (tau / dt).round();
        if lag < 1.0 || (lag * dt - tau).abs() > 1e-9 * tau.max(dt) {
            return Err(Error::Domain(format!("sample spacing {dt} does not divide τ = {tau}")));
        }
        lag as usize
    } else {
        0
    };
    let max_rate: Vec<f64> = (0..len)
        .map(|k| traj.frequency_rates(k).iter().fold(0.0, |m: f64, x| m.max(x.abs())))
        .collect();
    let mut cumulative = vec![0.0; len];
    for k in 1..len {
        cumulative[k] = cumulative[k - 1] + 0.5 * dt * (max_rate[k - 1] + max_rate[k]);
    }
    let m_at = |j: isize| if j <= 0 { 0.0 } else { cumulative[j as usize] };

    let weights: Vec<f64> = (0..=lag).map(|q| (-(q as f64) * dt).exp()).collect();
    let mut sigma = vec![0.0; len];
    let mut lyap = vec![0.0; len];
    let mut partial = vec![false; len];
    for k in 0..len {
        partial[k] = k < lag;
        if lag == 0 {
            lyap[k] = diam.d_omega[k];
            continue;
        }
        let kk = k as isize;
        sigma[k] = cumulative[k] - m_at(kk - lag as isize);
        // Trapezoid over s_j = t_k − q·dt, q = 0..lag; the q = 0 term vanishes.
        let mut integral = 0.0;
        for (q, w) in weights.iter().enumerate().skip(1) {
            let f = w * (cumulative[k] - m_at(kk - q as isize));
            integral += if q == lag { 0.5 * f } else { f };
        }
        lyap[k] = diam.d_omega[k] + eta * dt * integral;
    }
    Ok(LyapunovSeries {
        eta,
        tau,
        times: traj.times().to_vec(),
        d_omega: diam.d_omega.clone(),
        max_rate,
        cumulative_max_rate: cumulative,
        sigma_tau: sigma,
        lyapunov: lyap,
        partial,
    })
}

impl LyapunovSeries {
    /// CSV with header `t,D_theta,D_omega,sigma_tau,L`.
    pub fn write_csv<W: std::io::Write>(&self, diam: &DiameterSeries, mut w: W) -> Result<()> {
        writeln!(w, "t,D_theta,D_omega,sigma_tau,L")?;
        for k in 0..self.times.len() {
            writeln!(
                w,
                "{},{},{},{},{}",
                fmt_f64(self.times[k]),
                fmt_f64(diam.d_theta[k]),
                fmt_f64(self.d_omega[k]),
                fmt_f64(self.sigma_tau[k]),
                fmt_f64(self.lyapunov[k])
            )?;
        }
        Ok(())
    }
}

/// Monotonicity of `L` after the entry time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovDecay {
    pub monotone_after: bool,
    /// Largest forward difference quotient of `L` over the checked samples.
    pub max_increase_rate: f64,
    pub checked_samples: usize,
    /// Slope of `−ln L` against `t`; `None` when `L` vanishes.
    pub fitted_rate: Option<f64>,
}

/// Checks `(L(t+Δ) − L(t))/Δ ≤ tol` for non-partial samples with
/// `t ≥ t_star` and fits `ln L` against `t`.
pub fn check_lyapunov_decay(series: &LyapunovSeries, t_star: f64, tol: f64) -> Result<LyapunovDecay> {
    let idx: Vec<usize> = (0..series.times.len())
        .filter(|&k| series.times[k] >= t_star && !series.partial[k])
        .collect();
    if idx.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "{} samples after t* = {t_star}, need at least 10",
            idx.len()
        )));
    }
    let mut max_increase_rate = f64::NEG_INFINITY;
    for w in idx.windows(2) {
        let (a, b) = (w[0], w[1]);
        let q = (series.lyapunov[b] - series.lyapunov[a]) / (series.times[b] - series.times[a]);
        max_increase_rate = max_increase_rate.max(q);
    }
    let first = series.lyapunov[idx[0]];
    let floor = first * 1e-10;
    let (ts, ys): (Vec<f64>, Vec<f64>) = idx
        .iter()
        .filter(|&&k| series.lyapunov[k] > floor && series.lyapunov[k] > 0.0)
        .map(|&k| (series.times[k], series.lyapunov[k].ln()))
        .unzip();
    let fitted_rate = (first > 0.0 && ts.len() >= 10).then(|| -least_squares(&ts, &ys).slope);
    Ok(LyapunovDecay {
        monotone_after: max_increase_rate <= tol,
        max_increase_rate,
        checked_samples: idx.len(),
        fitted_rate,
    })
}

/// Residuals of `D⁺D(ω) ≤ 2κσ_τ − κζ*D(ω)` and of
/// `max|ω̇| ≤ κσ_τ + κD(ω)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GronwallCheck {
    pub times: Vec<f64>,
    pub dini_residuals: Vec<f64>,
    pub rate_residuals: Vec<f64>,
    pub max_dini_residual: f64,
    pub max_rate_residual: f64,
}

/// Evaluated on non-partial samples with `t ≥ t_star`.
pub fn check_frequency_gronwall(series: &LyapunovSeries, zeta_star: f64, kappa: f64, t_star: f64) -> GronwallCheck {
    let mut out = GronwallCheck {
        times: Vec::new(),
        dini_residuals: Vec::new(),
        rate_residuals: Vec::new(),
        max_dini_residual: 0.0,
        max_rate_residual: 0.0,
    };
    let len = series.times.len();
    for k in 0..len.saturating_sub(1) {
        if series.times[k] < t_star || series.partial[k] {
            continue;
        }
        let d = series.d_omega[k];
        let sigma = series.sigma_tau[k];
        let slope = (series.d_omega[k + 1] - d) / (series.times[k + 1] - series.times[k]);
        out.times.push(series.times[k]);
        out.dini_residuals.push(slope - (2.0 * kappa * sigma - kappa * zeta_star * d));
        out.rate_residuals.push(series.max_rate[k] - (kappa * sigma + kappa * d));
    }
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !out.times.is_empty() {
        out.max_dini_residual = max(&out.dini_residuals);
        out.max_rate_residual = max(&out.rate_residuals);
    }
    out
}

/// Least-squares fit `D(ω) ≈ C e^{−γt}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub gamma: f64,
    pub amplitude: f64,
    pub fit_window: (f64, f64),
    pub r_squared: f64,
    pub samples: usize,
}

struct Line {
    slope: f64,
    intercept: f64,
    r_squared: f64,
}

fn least_squares(xs: &[f64], ys: &[f64]) -> Line {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    // Zero response variance: zero slope and r² = 0 by convention.
    let constant = ys.iter().all(|&y| y == ys[0]);
    let (slope, r_squared) = if !constant && syy > 0.0 {
        let ss_res: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| {
                let e = y - (my + slope * (x - mx));
                e * e
            })
            .sum();
        (slope, (1.0 - ss_res / syy).clamp(0.0, 1.0))
    } else {
        (0.0, 0.0)
    };
    Line {
        slope,
        intercept: my - slope * mx,
        r_squared,
    }
}

/// Fits `ln D(ω)` against `t` over samples in `[t_lo, t_hi]` with
/// `D(ω) > 1e−300`.
pub fn fit_rate(diam: &DiameterSeries, window: (f64, f64)) -> Result<RateFit> {
    let (t_lo, t_hi) = window;
    if diam.is_empty() {
        return Err(Error::Empty);
    }
    let first = diam.times[0];
    let last = *diam.times.last().unwrap();
    let slack = 1e-9 * (last - first).abs().max(1.0);
    if !(t_lo < t_hi && t_lo >= first - slack && t_hi <= last + slack) {
        return Err(Error::Domain(format!(
            "fit window [{t_lo}, {t_hi}] is not inside the sampled range [{first}, {last}]"
        )));
    }
    let (ts, ys): (Vec<f64>, Vec<f64>) = diam
        .times
        .iter()
        .zip(&diam.d_omega)
        .filter(|(&t, &d)| t >= t_lo && t <= t_hi && d > 1e-300)
        .map(|(&t, &d)| (t, d.ln()))
        .unzip();
    if ts.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "{} positive samples in [{t_lo}, {t_hi}], need at least 10",
            ts.len()
        )));
    }
    let line = least_squares(&ts, &ys);
    Ok(RateFit {
        gamma: -line.slope,
        amplitude: line.intercept.exp(),
        fit_window: window,
        r_squared: line.r_squared,
        samples: ts.len(),
    })
}

/// Fit window starting at `t_lo` and ending where `D(ω)` first drops below
/// `1e−10·D(ω(t_lo))`, so the round-off floor is excluded.
pub fn decay_window(diam: &DiameterSeries, t_lo: f64) -> Option<(f64, f64)> {
    let start = diam.times.iter().position(|&t| t >= t_lo)?;
    let d0 = diam.d_omega[start];
    if !(d0 > 0.0) {
        return None;
    }
    let end = (start..diam.len())
        .find(|&k| diam.d_omega[k] < 1e-10 * d0)
        .unwrap_or(diam.len() - 1);
    (end > start).then(|| (diam.times[start], diam.times[end]))
}

/// Frequency synchronization verdict: final `D(ω)` below `threshold` and
/// `D(ω)` nonincreasing over the last 10% of the horizon, up to
/// `1e−3·threshold` per sample.
pub fn sync_verdict(diam: &DiameterSeries, threshold: f64) -> bool {
    if diam.is_empty() || !(threshold > 0.0) {
        return false;
    }
    let last = diam.len() - 1;
    if !(diam.d_omega[last] < threshold) {
        return false;
    }
    let t_end = diam.times[last];
    let t_from = t_end - 0.1 * (t_end - diam.times[0]);
    let start = diam.times.partition_point(|&t| t < t_from);
    let tol = 1e-3 * threshold;
    diam.d_omega[start..].windows(2).all(|w| w[1] <= w[0] + tol)
}

/// Tolerances for the residual checks. Each is compared against a forward
/// difference quotient, so they scale with the step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Multiplier `c` in `tol = c·h` for the Dini and Lyapunov checks.
    pub residual_per_step: f64,
    /// Slack on `max D(θ) ≤ D_θ0`.
    pub diameter_bound: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            residual_per_step: 50.0,
            diameter_bound: 1e-6,
        }
    }
}

/// Everything the `simulate` command reports, serialized as one JSON object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticBundle {
    pub diverged: bool,
    pub diverged_at: Option<f64>,
    pub horizon: f64,
    pub samples: usize,
    pub max_d_theta: f64,
    pub final_d_theta: f64,
    pub initial_d_omega: f64,
    pub final_d_omega: f64,
    /// `max |ω_i(t)|` over the run, for comparison with the a-priori `R_ω`.
    pub empirical_r_omega: f64,
    pub r_omega: f64,
    pub entry: Option<EntryTimeReport>,
    pub eta: Option<EtaChoice>,
    pub eta_error: Option<String>,
    pub fit: Option<RateFit>,
    pub fit_error: Option<String>,
    pub tolerance: f64,
    pub max_contraction_residual: Option<f64>,
    pub diameter_bound_excess: f64,
    pub max_gronwall_residual: Option<f64>,
    pub max_rate_residual: Option<f64>,
    pub lyapunov_monotone: Option<bool>,
    pub lyapunov_max_increase_rate: Option<f64>,
    pub lyapunov_rate: Option<f64>,
    pub min_delayed_gap_margin: Option<f64>,
    pub synced: bool,
    pub sync_threshold: f64,
}

/// Largest `|θ_k(t−τ) − θ_i(t)|` over samples with `t ≥ t_from`, using
/// delayed samples that lie on the mesh. Returns `None` when the spacing
/// does not divide `τ` or no sample qualifies.
pub fn max_delayed_gap(traj: &Trajectory, t_from: f64) -> Option<f64> {
    let tau = traj.delay();
    let dt = traj.sample_spacing();
    let lag = if tau > 0.0 {
        let l = (tau / dt).round();
        if (l * dt - tau).abs() > 1e-9 * tau.max(dt) {
            return None;
        }
        l as usize
    } else {
        0
    };
    let mut worst: Option<f64> = None;
    for k in lag..traj.len() {
        if traj.times()[k] < t_from {
            continue;
        }
        let now = traj.phases(k);
        let past = traj.phases(k - lag);
        let lo_now = now.iter().copied().fold(f64::INFINITY, f64::min);
        let hi_now = now.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo_past = past.iter().copied().fold(f64::INFINITY, f64::min);
        let hi_past = past.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let gap = (hi_past - lo_now).abs().max((lo_past - hi_now).abs());
        worst = Some(worst.map_or(gap, |w| w.max(gap)));
    }
    worst
}

/// Runs every diagnostic that applies to `traj` and collects the results.
pub fn analyze(
    sys: &OscillatorSystem,
    report: &HypothesisReport,
    traj: &Trajectory,
    diverged_at: Option<f64>,
    sync_threshold: f64,
    fit_window: Option<(f64, f64)>,
    tolerances: &Tolerances,
) -> Result<DiagnosticBundle> {
    let diam = diameters(traj)?;
    let scales = report.scales();
    let tol = tolerances.residual_per_step * traj.step();
    let last = diam.len() - 1;
    let contraction = check_diameter_contraction(&diam, sys, &scales, report.delta);
    let empirical_r_omega = (0..traj.len())
        .flat_map(|k| traj.frequencies(k).iter().map(|x| x.abs()))
        .fold(0.0, f64::max);

    let entry = (report.d_star > 0.0)
        .then(|| entry_time(&diam, report.d_star, sys, &scales).ok())
        .flatten();
    let t_star = entry.and_then(|e| e.t_star_measured);

    let (eta, eta_error) = match select_eta(sys.coupling(), sys.delay(), report.zeta_star) {
        Ok(e) => (Some(e), None),
        Err(e) => (None, Some(e.to_string())),
    };

    let mut bundle = DiagnosticBundle {
        diverged: diverged_at.is_some(),
        diverged_at,
        horizon: diam.times[last],
        samples: diam.len(),
        max_d_theta: contraction.max_d_theta,
        final_d_theta: diam.d_theta[last],
        initial_d_omega: diam.d_omega[0],
        final_d_omega: diam.d_omega[last],
        empirical_r_omega,
        r_omega: report.r_omega,
        entry,
        eta,
        eta_error,
        fit: None,
        fit_error: None,
        tolerance: tol,
        max_contraction_residual: (!contraction.residuals.is_empty()).then_some(contraction.max_residual),
        diameter_bound_excess: contraction.bound_excess,
        max_gronwall_residual: None,
        max_rate_residual: None,
        lyapunov_monotone: None,
        lyapunov_max_increase_rate: None,
        lyapunov_rate: None,
        min_delayed_gap_margin: None,
        synced: diverged_at.is_none() && sync_verdict(&diam, sync_threshold),
        sync_threshold,
    };

    let t_lo = t_star.map(|t| t + sys.delay()).unwrap_or(diam.times[0]);
    let window = fit_window.or_else(|| decay_window(&diam, t_lo));
    match window {
        Some(w) => match fit_rate(&diam, w) {
            Ok(f) => bundle.fit = Some(f),
            Err(e) => bundle.fit_error = Some(e.to_string()),
        },
        None => bundle.fit_error = Some("no decaying window after the entry time".into()),
    }

    if let Some(ts) = t_star {
        bundle.min_delayed_gap_margin = max_delayed_gap(traj, ts).map(|g| std::f64::consts::FRAC_PI_2 - g);
        let weight = eta.map_or(0.0, |e| e.eta);
        if let Ok(series) = lyapunov_series(traj, &diam, weight, sys.delay()) {
            let g = check_frequency_gronwall(&series, report.zeta_star, sys.coupling(), ts);
            if !g.times.is_empty() {
                bundle.max_gronwall_residual = Some(g.max_dini_residual);
                bundle.max_rate_residual = Some(g.max_rate_residual);
            }
            if eta.is_some() {
                if let Ok(decay) = check_lyapunov_decay(&series, ts, tol) {
                    bundle.lyapunov_monotone = Some(decay.monotone_after);
                    bundle.lyapunov_max_increase_rate = Some(decay.max_increase_rate);
                    bundle.lyapunov_rate = decay.fitted_rate;
                }
            }
        }
    }
    Ok(bundle)
}
