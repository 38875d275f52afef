//! Method-of-steps integration of the delayed Kuramoto system.
//!
//! The step is `h = τ/m`, so every breaking point `kτ` is a mesh node and
//! the delayed argument of each RK4 stage is either a stored node or the
//! midpoint of a stored interval. Midpoints are filled by cubic Hermite
//! interpolation from the node values and slopes.

use std::collections::VecDeque;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::model::{hermite_value, InitialHistory, OscillatorSystem};

/// Right-hand side of the phase equation,
/// `Ω_i + (κ/N) Σ_{k≠i} sin(θ_k(t−τ) − θ_i(t))`.
pub fn rhs_phase(sys: &OscillatorSystem, theta_now: &[f64], theta_delayed: &[f64]) -> Result<Vec<f64>> {
    check_len(sys.n(), theta_now.len())?;
    check_len(sys.n(), theta_delayed.len())?;
    let mut out = vec![0.0; sys.n()];
    rhs_phase_into(sys, theta_now, theta_delayed, &mut out);
    Ok(out)
}

/// Right-hand side of the differentiated system,
/// `(κ/N) Σ_{k≠i} cos(θ_k(t−τ) − θ_i(t)) (ω_k(t−τ) − ω_i(t))`.
pub fn rhs_frequency(
    sys: &OscillatorSystem,
    theta_now: &[f64],
    theta_delayed: &[f64],
    omega_now: &[f64],
    omega_delayed: &[f64],
) -> Result<Vec<f64>> {
    for v in [theta_now, theta_delayed, omega_now, omega_delayed] {
        check_len(sys.n(), v.len())?;
    }
    let mut out = vec![0.0; sys.n()];
    rhs_frequency_into(sys, theta_now, theta_delayed, omega_now, omega_delayed, &mut out);
    Ok(out)
}

pub(crate) fn rhs_phase_into(sys: &OscillatorSystem, now: &[f64], delayed: &[f64], out: &mut [f64]) {
    let scale = sys.coupling() / sys.n() as f64;
    for (i, (o, &w)) in out.iter_mut().zip(sys.natural_frequencies()).enumerate() {
        let ti = now[i];
        let mut acc = 0.0;
        for (k, &tk) in delayed.iter().enumerate() {
            if k != i {
                acc += (tk - ti).sin();
            }
        }
        *o = w + scale * acc;
    }
}

pub(crate) fn rhs_frequency_into(
    sys: &OscillatorSystem,
    now: &[f64],
    delayed: &[f64],
    w_now: &[f64],
    w_delayed: &[f64],
    out: &mut [f64],
) {
    let scale = sys.coupling() / sys.n() as f64;
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for k in 0..delayed.len() {
            if k != i {
                acc += (delayed[k] - now[i]).cos() * (w_delayed[k] - w_now[i]);
            }
        }
        *o = scale * acc;
    }
}

/// Step and sampling controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorSettings {
    /// Steps per delay interval, `h = τ/m`.
    pub step_divisor: usize,
    /// Step used when `τ = 0`.
    pub h0: f64,
    /// Keep every `sample_stride`-th node.
    pub sample_stride: usize,
    /// Abort once any `|θ_i|` exceeds this.
    pub divergence_ceiling: f64,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        Self {
            step_divisor: 20,
            h0: 1e-3,
            sample_stride: 1,
            divergence_ceiling: 1e6,
        }
    }
}

impl IntegratorSettings {
    pub fn step(&self, delay: f64) -> f64 {
        if delay > 0.0 {
            delay / self.step_divisor as f64
        } else {
            self.h0
        }
    }

    fn validate(&self) -> Result<()> {
        if self.step_divisor < 1 {
            return Err(Error::Parameter("step_divisor must be >= 1".into()));
        }
        if self.sample_stride < 1 {
            return Err(Error::Parameter("sample_stride must be >= 1".into()));
        }
        if !(self.h0.is_finite() && self.h0 > 0.0) {
            return Err(Error::Parameter(format!("h0 must be positive, got {}", self.h0)));
        }
        if !(self.divergence_ceiling > 0.0) {
            return Err(Error::Parameter("divergence_ceiling must be positive".into()));
        }
        Ok(())
    }
}

/// Sliding window of solution nodes covering `[t − τ − h, t]`, backed by
/// the prescribed history for negative times.
///
/// Nodes are addressed by their absolute step index `k` (time `k·h`).
#[derive(Debug, Clone)]
pub struct HistoryBuffer {
    n: usize,
    step: f64,
    capacity: usize,
    first_index: usize,
    values: VecDeque<Vec<f64>>,
    slopes: VecDeque<Vec<f64>>,
    history: InitialHistory,
}

impl HistoryBuffer {
    pub fn new(history: InitialHistory, step: f64, steps_per_delay: usize) -> Self {
        Self {
            n: history.n(),
            step,
            capacity: steps_per_delay + 2,
            first_index: 0,
            values: VecDeque::with_capacity(steps_per_delay + 2),
            slopes: VecDeque::with_capacity(steps_per_delay + 2),
            history,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Index of the newest stored node.
    pub fn last_index(&self) -> Option<usize> {
        (!self.values.is_empty()).then(|| self.first_index + self.values.len() - 1)
    }

    /// Appends node `last_index + 1`, evicting the oldest node once the
    /// window is full.
    pub fn push(&mut self, value: Vec<f64>, slope: Vec<f64>) {
        debug_assert_eq!(value.len(), self.n);
        if self.values.len() == self.capacity {
            self.values.pop_front();
            self.slopes.pop_front();
            self.first_index += 1;
        }
        self.values.push_back(value);
        self.slopes.push_back(slope);
    }

    fn slot(&self, k: usize) -> Option<usize> {
        (k >= self.first_index && k < self.first_index + self.values.len()).then(|| k - self.first_index)
    }

    /// Stored value at node `k`.
    pub fn node_value(&self, k: usize) -> Option<&[f64]> {
        self.slot(k).map(|j| self.values[j].as_slice())
    }

    /// Stored slope at node `k`.
    pub fn node_slope(&self, k: usize) -> Option<&[f64]> {
        self.slot(k).map(|j| self.slopes[j].as_slice())
    }

    /// Phases at signed node index `k` (time `k·h`); negative indices come
    /// from the prescribed history.
    fn value_at_index(&self, k: isize, out: &mut [f64]) {
        if k < 0 {
            self.history.value_into(k as f64 * self.step, out);
        } else {
            out.copy_from_slice(&self.values[self.slot(k as usize).expect("node evicted")]);
        }
    }

    /// Phase derivatives at signed node index `k`. At `k = 0` this is the
    /// solution's right derivative.
    fn slope_at_index(&self, k: isize, out: &mut [f64]) {
        if k < 0 {
            self.history.slope_into(k as f64 * self.step, out);
        } else {
            out.copy_from_slice(&self.slopes[self.slot(k as usize).expect("node evicted")]);
        }
    }

    /// Phases at the midpoint of `[k·h, (k+1)·h]`.
    fn midpoint(&self, k: isize, out: &mut [f64]) {
        if k < 0 {
            self.history.value_into((k as f64 + 0.5) * self.step, out);
            return;
        }
        let a = self.slot(k as usize).expect("node evicted");
        let (p0, m0, p1, m1) = (&self.values[a], &self.slopes[a], &self.values[a + 1], &self.slopes[a + 1]);
        for i in 0..self.n {
            // u = 1/2: h00 = h01 = 1/2, h10 = 1/8, h11 = −1/8.
            out[i] = 0.5 * (p0[i] + p1[i]) + 0.125 * self.step * (m0[i] - m1[i]);
        }
    }

    /// Phases at an arbitrary time `s ∈ [t − τ − h, t]` where `t` is the
    /// newest node. Times before 0 come from the prescribed history.
    pub fn lookup(&self, s: f64) -> Result<Vec<f64>> {
        let last = self.last_index().ok_or(Error::Empty)?;
        let hi = last as f64 * self.step;
        let lo = if self.first_index == 0 {
            -(self.capacity as f64 - 2.0) * self.step
        } else {
            self.first_index as f64 * self.step
        };
        let tol = 1e-12 * self.step;
        if !(s >= lo - tol && s <= hi + tol) {
            return Err(Error::Range { time: s, lo, hi });
        }
        let mut out = vec![0.0; self.n];
        if s < 0.0 {
            self.history.value_into(s, &mut out);
            return Ok(out);
        }
        let pos = s / self.step;
        let k = (pos.floor() as usize).min(last);
        if k == last || pos == k as f64 {
            out.copy_from_slice(self.node_value(k).unwrap());
            return Ok(out);
        }
        let a = self.slot(k).unwrap();
        let t0 = k as f64 * self.step;
        for (i, o) in out.iter_mut().enumerate() {
            *o = hermite_value(
                t0,
                self.step,
                self.values[a][i],
                self.slopes[a][i],
                self.values[a + 1][i],
                self.slopes[a + 1][i],
                s,
            );
        }
        Ok(out)
    }
}

/// Sampled solution: phases `θ`, frequencies `ω = θ̇` and rates `ω̇`.
///
/// Per-sample vectors are stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    n: usize,
    delay: f64,
    step: f64,
    stride: usize,
    times: Vec<f64>,
    phases: Vec<f64>,
    frequencies: Vec<f64>,
    frequency_rates: Vec<f64>,
}

impl Trajectory {
    fn empty(n: usize, delay: f64, step: f64, stride: usize) -> Self {
        Self {
            n,
            delay,
            step,
            stride,
            times: Vec::new(),
            phases: Vec::new(),
            frequencies: Vec::new(),
            frequency_rates: Vec::new(),
        }
    }

    /// Assembles a trajectory from per-sample rows. Mostly useful for
    /// synthetic diagnostics inputs.
    pub fn from_rows(
        delay: f64,
        times: Vec<f64>,
        phases: Vec<Vec<f64>>,
        frequencies: Vec<Vec<f64>>,
        frequency_rates: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let len = times.len();
        check_len(len, phases.len())?;
        check_len(len, frequencies.len())?;
        check_len(len, frequency_rates.len())?;
        let n = phases.first().map_or(0, Vec::len);
        for rows in [&phases, &frequencies, &frequency_rates] {
            for r in rows.iter() {
                check_len(n, r.len())?;
            }
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Parameter("trajectory times must be strictly increasing".into()));
        }
        let step = if len > 1 { times[1] - times[0] } else { 0.0 };
        Ok(Self {
            n,
            delay,
            step,
            stride: 1,
            times,
            phases: phases.concat(),
            frequencies: frequencies.concat(),
            frequency_rates: frequency_rates.concat(),
        })
    }

    fn push(&mut self, t: f64, theta: &[f64], omega: &[f64], rate: &[f64]) {
        self.times.push(t);
        self.phases.extend_from_slice(theta);
        self.frequencies.extend_from_slice(omega);
        self.frequency_rates.extend_from_slice(rate);
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn delay(&self) -> f64 {
        self.delay
    }

    /// Integration step `h`.
    pub fn step(&self) -> f64 {
        self.step
    }

    /// Spacing between retained samples, `stride·h`.
    pub fn sample_spacing(&self) -> f64 {
        self.step * self.stride as f64
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn phases(&self, k: usize) -> &[f64] {
        &self.phases[k * self.n..(k + 1) * self.n]
    }

    pub fn frequencies(&self, k: usize) -> &[f64] {
        &self.frequencies[k * self.n..(k + 1) * self.n]
    }

    pub fn frequency_rates(&self, k: usize) -> &[f64] {
        &self.frequency_rates[k * self.n..(k + 1) * self.n]
    }

    pub fn last_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    /// Index of the sample nearest to `t`.
    pub fn index_near(&self, t: f64) -> Option<usize> {
        if self.times.is_empty() {
            return None;
        }
        let j = self.times.partition_point(|&x| x < t);
        if j == 0 {
            return Some(0);
        }
        if j == self.times.len() {
            return Some(j - 1);
        }
        Some(if t - self.times[j - 1] <= self.times[j] - t { j - 1 } else { j })
    }

    /// CSV with header `t,theta_0..,omega_0..,omegadot_0..` and 17
    /// significant digits per value.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = vec!["t".to_string()];
        for prefix in ["theta", "omega", "omegadot"] {
            header.extend((0..self.n).map(|i| format!("{prefix}_{i}")));
        }
        writeln!(w, "{}", header.join(","))?;
        let mut line = String::new();
        for k in 0..self.len() {
            line.clear();
            line.push_str(&fmt_f64(self.times[k]));
            for row in [self.phases(k), self.frequencies(k), self.frequency_rates(k)] {
                for x in row {
                    line.push(',');
                    line.push_str(&fmt_f64(*x));
                }
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    /// Reads the CSV format written by [`Trajectory::write_csv`]. The delay
    /// is not recorded in the file and must be supplied.
    pub fn read_csv<R: Read>(r: R, delay: f64) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Config(format!("missing column `{name}`")))
        };
        let t_col = col("t")?;
        let n = headers.iter().filter(|h| h.starts_with("omega_")).count();
        if n < 2 {
            return Err(Error::Config("missing column `omega_1`".into()));
        }
        let find_all = |prefix: &str| -> Result<Vec<usize>> { (0..n).map(|i| col(&format!("{prefix}_{i}"))).collect() };
        let theta_cols = find_all("theta")?;
        let omega_cols = find_all("omega")?;
        let rate_cols = find_all("omegadot")?;
        let mut times = Vec::new();
        let (mut phases, mut freqs, mut rates) = (Vec::new(), Vec::new(), Vec::new());
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let get = |c: usize| -> Result<f64> {
                rec.get(c)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| Error::Config(format!("row {}: bad value in column `{}`", line + 2, &headers[c])))
            };
            times.push(get(t_col)?);
            phases.push(theta_cols.iter().map(|&c| get(c)).collect::<Result<Vec<_>>>()?);
            freqs.push(omega_cols.iter().map(|&c| get(c)).collect::<Result<Vec<_>>>()?);
            rates.push(rate_cols.iter().map(|&c| get(c)).collect::<Result<Vec<_>>>()?);
        }
        if times.is_empty() {
            return Err(Error::Empty);
        }
        Self::from_rows(delay, times, phases, freqs, rates)
    }
}

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Result of a run that may have stopped early.
#[derive(Debug, Clone)]
pub struct Integration {
    pub trajectory: Trajectory,
    /// Time at which the divergence guard fired, if it did.
    pub diverged_at: Option<f64>,
}

/// Integrates to `t_end`, returning a divergence error if the guard fires.
pub fn integrate(
    sys: &OscillatorSystem,
    hist: &InitialHistory,
    t_end: f64,
    settings: &IntegratorSettings,
) -> Result<Trajectory> {
    let run = integrate_partial(sys, hist, t_end, settings)?;
    match run.diverged_at {
        Some(time) => Err(Error::Divergence { time }),
        None => Ok(run.trajectory),
    }
}

/// Integrates to `t_end`; on divergence returns the samples recorded so far.
///
/// The node count is rounded up to a multiple of the sample stride so the
/// retained samples stay uniformly spaced, hence the final time may exceed
/// `t_end` by less than `stride·h`.
pub fn integrate_partial(
    sys: &OscillatorSystem,
    hist: &InitialHistory,
    t_end: f64,
    settings: &IntegratorSettings,
) -> Result<Integration> {
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(Error::Parameter(format!("t_end must be positive, got {t_end}")));
    }
    settings.validate()?;
    hist.check_against(sys.n(), sys.delay())?;

    let n = sys.n();
    let tau = sys.delay();
    let h = settings.step(tau);
    let stride = settings.sample_stride;
    let mut steps = (t_end / h - 1e-9).ceil().max(1.0) as usize;
    steps = steps.div_ceil(stride) * stride;

    let mut traj = Trajectory::empty(n, tau, h, stride);
    if tau == 0.0 {
        let diverged_at = integrate_ode(sys, hist, h, steps, settings, &mut traj);
        return Ok(Integration { trajectory: traj, diverged_at });
    }

    let m = settings.step_divisor as isize;
    let mut buf = HistoryBuffer::new(hist.clone(), h, settings.step_divisor);

    let mut theta = hist.value_at(0.0);
    let mut delayed = vec![0.0; n];
    let mut delayed_mid = vec![0.0; n];
    let mut delayed_next = vec![0.0; n];
    let mut omega = vec![0.0; n];
    let mut omega_delayed = vec![0.0; n];
    let mut rate = vec![0.0; n];
    let (mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut stage = vec![0.0; n];

    buf.value_at_index(-m, &mut delayed);
    rhs_phase_into(sys, &theta, &delayed, &mut omega);
    buf.push(theta.clone(), omega.clone());

    for step in 0..=steps {
        let idx = step as isize;
        // ω at node idx is already stored; θ(t−τ) sits at node idx − m.
        buf.value_at_index(idx - m, &mut delayed);
        buf.slope_at_index(idx - m, &mut omega_delayed);
        omega.copy_from_slice(buf.node_slope(step).unwrap());
        rhs_frequency_into(sys, &theta, &delayed, &omega, &omega_delayed, &mut rate);
        if step % stride == 0 {
            traj.push(step as f64 * h, &theta, &omega, &rate);
        }
        if step == steps {
            break;
        }

        buf.midpoint(idx - m, &mut delayed_mid);
        buf.value_at_index(idx - m + 1, &mut delayed_next);

        for i in 0..n {
            stage[i] = theta[i] + 0.5 * h * omega[i];
        }
        rhs_phase_into(sys, &stage, &delayed_mid, &mut k2);
        for i in 0..n {
            stage[i] = theta[i] + 0.5 * h * k2[i];
        }
        rhs_phase_into(sys, &stage, &delayed_mid, &mut k3);
        for i in 0..n {
            stage[i] = theta[i] + h * k3[i];
        }
        rhs_phase_into(sys, &stage, &delayed_next, &mut k4);
        for i in 0..n {
            theta[i] += h / 6.0 * (omega[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }

        let t_next = (step + 1) as f64 * h;
        if theta.iter().any(|x| !x.is_finite() || x.abs() > settings.divergence_ceiling) {
            return Ok(Integration {
                trajectory: traj,
                diverged_at: Some(t_next),
            });
        }
        buf.value_at_index(idx + 1 - m, &mut delayed);
        rhs_phase_into(sys, &theta, &delayed, &mut k4);
        buf.push(theta.clone(), k4.clone());
    }
    Ok(Integration {
        trajectory: traj,
        diverged_at: None,
    })
}

/// Plain RK4 for `τ = 0`, where the delayed argument is the current stage.
fn integrate_ode(
    sys: &OscillatorSystem,
    hist: &InitialHistory,
    h: f64,
    steps: usize,
    settings: &IntegratorSettings,
    traj: &mut Trajectory,
) -> Option<f64> {
    let n = sys.n();
    let mut theta = hist.value_at(0.0);
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut stage = vec![0.0; n];
    let mut rate = vec![0.0; n];
    for step in 0..=steps {
        rhs_phase_into(sys, &theta, &theta, &mut k1);
        if step % settings.sample_stride == 0 {
            rhs_frequency_into(sys, &theta, &theta, &k1, &k1, &mut rate);
            traj.push(step as f64 * h, &theta, &k1, &rate);
        }
        if step == steps {
            break;
        }
        for i in 0..n {
            stage[i] = theta[i] + 0.5 * h * k1[i];
        }
        rhs_phase_into(sys, &stage, &stage, &mut k2);
        for i in 0..n {
            stage[i] = theta[i] + 0.5 * h * k2[i];
        }
        rhs_phase_into(sys, &stage, &stage, &mut k3);
        for i in 0..n {
            stage[i] = theta[i] + h * k3[i];
        }
        rhs_phase_into(sys, &stage, &stage, &mut k4);
        for i in 0..n {
            theta[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if theta.iter().any(|x| !x.is_finite() || x.abs() > settings.divergence_ceiling) {
            return Some((step + 1) as f64 * h);
        }
    }
    None
}
