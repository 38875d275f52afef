//! Oscillator system parameters, natural-frequency sampling and initial
//! phase histories.
//!
//! Phases are kept as unwrapped reals throughout; nothing in this crate
//! reduces them modulo 2π.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// All-to-all delayed Kuramoto system
/// `θ̇_i = Ω_i + (κ/N) Σ_{k≠i} sin(θ_k(t−τ) − θ_i(t))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillatorSystem {
    natural_frequencies: Vec<f64>,
    coupling: f64,
    delay: f64,
}

impl OscillatorSystem {
    /// Builds a system from natural frequencies (rad/s), coupling κ (1/s)
    /// and delay τ (s).
    ///
    /// κ = 0 is accepted so that decoupled reference runs can be expressed;
    /// such systems never pass the coupling hypothesis.
    pub fn new(natural_frequencies: Vec<f64>, coupling: f64, delay: f64) -> Result<Self> {
        if natural_frequencies.len() < 2 {
            return Err(Error::Parameter(format!(
                "need at least 2 oscillators, got {}",
                natural_frequencies.len()
            )));
        }
        if let Some(bad) = natural_frequencies.iter().find(|w| !w.is_finite()) {
            return Err(Error::Parameter(format!("natural frequency {bad} is not finite")));
        }
        if !(coupling.is_finite() && coupling >= 0.0) {
            return Err(Error::Parameter(format!("coupling must be finite and >= 0, got {coupling}")));
        }
        if !(delay.is_finite() && delay >= 0.0) {
            return Err(Error::Parameter(format!("delay must be finite and >= 0, got {delay}")));
        }
        Ok(Self {
            natural_frequencies,
            coupling,
            delay,
        })
    }

    pub fn n(&self) -> usize {
        self.natural_frequencies.len()
    }

    pub fn natural_frequencies(&self) -> &[f64] {
        &self.natural_frequencies
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    pub fn delay(&self) -> f64 {
        self.delay
    }

    pub fn with_coupling(&self, coupling: f64) -> Result<Self> {
        Self::new(self.natural_frequencies.clone(), coupling, self.delay)
    }

    pub fn with_delay(&self, delay: f64) -> Result<Self> {
        Self::new(self.natural_frequencies.clone(), self.coupling, delay)
    }
}

/// Distribution `g(Ω)` the natural frequencies are drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FrequencyDistribution {
    Dirac { omega0: f64, #[serde(default)] seed: u64 },
    Uniform { lo: f64, hi: f64, #[serde(default)] seed: u64 },
    Normal { mean: f64, stddev: f64, #[serde(default)] seed: u64 },
}

impl FrequencyDistribution {
    pub fn seed(&self) -> u64 {
        match *self {
            Self::Dirac { seed, .. } | Self::Uniform { seed, .. } | Self::Normal { seed, .. } => seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut out = self.clone();
        match &mut out {
            Self::Dirac { seed: s, .. } | Self::Uniform { seed: s, .. } | Self::Normal { seed: s, .. } => {
                *s = seed
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Self::Dirac { omega0, .. } if !omega0.is_finite() => {
                Err(Error::Parameter("dirac location must be finite".into()))
            }
            Self::Uniform { lo, hi, .. } if !(lo.is_finite() && hi.is_finite() && lo <= hi) => {
                Err(Error::Parameter(format!("uniform needs finite lo <= hi, got [{lo}, {hi}]")))
            }
            Self::Normal { mean, stddev, .. } if !(mean.is_finite() && stddev.is_finite() && stddev >= 0.0) => {
                Err(Error::Parameter(format!("normal needs finite mean and stddev >= 0, got ({mean}, {stddev})")))
            }
            _ => Ok(()),
        }
    }
}

/// Draws `n` i.i.d. natural frequencies. The same seed always yields the
/// same vector.
pub fn sample_frequencies(dist: &FrequencyDistribution, n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::Parameter(format!("need at least 2 oscillators, got {n}")));
    }
    dist.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(dist.seed());
    let out = match *dist {
        FrequencyDistribution::Dirac { omega0, .. } => vec![omega0; n],
        FrequencyDistribution::Uniform { lo, hi, .. } => {
            (0..n).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect()
        }
        FrequencyDistribution::Normal { mean, stddev, .. } => {
            let normal = Normal::new(mean, stddev).map_err(|e| Error::Parameter(e.to_string()))?;
            (0..n).map(|_| normal.sample(&mut rng)).collect()
        }
    };
    Ok(out)
}

/// Prescribed C¹ phase history `θ_i^0` on `[−τ, 0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialHistory {
    /// `θ_i^0(s) = values[i]`.
    Constant { values: Vec<f64> },
    /// `θ_i^0(s) = values[i] + slopes[i]·s`.
    Linear { values: Vec<f64>, slopes: Vec<f64> },
    /// Cubic Hermite interpolation through `(times[j], values[j][i], slopes[j][i])`.
    /// `times` must run from `−τ` to `0`.
    Sampled {
        times: Vec<f64>,
        values: Vec<Vec<f64>>,
        slopes: Vec<Vec<f64>>,
    },
}

impl InitialHistory {
    pub fn constant(values: Vec<f64>) -> Self {
        Self::Constant { values }
    }

    pub fn linear(values: Vec<f64>, slopes: Vec<f64>) -> Result<Self> {
        check_len(values.len(), slopes.len())?;
        Ok(Self::Linear { values, slopes })
    }

    pub fn sampled(times: Vec<f64>, values: Vec<Vec<f64>>, slopes: Vec<Vec<f64>>) -> Result<Self> {
        let hist = Self::Sampled { times, values, slopes };
        hist.validate_shape()?;
        Ok(hist)
    }

    pub fn n(&self) -> usize {
        match self {
            Self::Constant { values } | Self::Linear { values, .. } => values.len(),
            Self::Sampled { values, .. } => values.first().map_or(0, Vec::len),
        }
    }

    fn validate_shape(&self) -> Result<()> {
        match self {
            Self::Constant { values } => finite(values),
            Self::Linear { values, slopes } => {
                check_len(values.len(), slopes.len())?;
                finite(values)?;
                finite(slopes)
            }
            Self::Sampled { times, values, slopes } => {
                if times.is_empty() {
                    return Err(Error::Parameter("sampled history has no nodes".into()));
                }
                check_len(times.len(), values.len())?;
                check_len(times.len(), slopes.len())?;
                let n = values[0].len();
                for (v, d) in values.iter().zip(slopes) {
                    check_len(n, v.len())?;
                    check_len(n, d.len())?;
                    finite(v)?;
                    finite(d)?;
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::Parameter("sampled history times must be strictly increasing".into()));
                }
                Ok(())
            }
        }
    }

    /// Checks that the history has `n` components and that its domain is
    /// exactly `[−τ, 0]`.
    pub fn check_against(&self, n: usize, delay: f64) -> Result<()> {
        self.validate_shape()?;
        check_len(n, self.n())?;
        if let Self::Sampled { times, .. } = self {
            let first = times[0];
            let last = *times.last().unwrap();
            let tol = 1e-12 * delay.max(1.0);
            if last.abs() > tol || (first + delay).abs() > tol {
                return Err(Error::Domain(format!(
                    "sampled history covers [{first}, {last}] but the delay requires [{}, 0]",
                    -delay
                )));
            }
        }
        Ok(())
    }

    /// Phase values at `s ∈ [−τ, 0]` written into `out`.
    pub fn value_into(&self, s: f64, out: &mut [f64]) {
        match self {
            Self::Constant { values } => out.copy_from_slice(values),
            Self::Linear { values, slopes } => {
                for ((o, v), d) in out.iter_mut().zip(values).zip(slopes) {
                    *o = v + d * s;
                }
            }
            Self::Sampled { times, values, slopes } => {
                if times.len() == 1 {
                    out.copy_from_slice(&values[0]);
                    return;
                }
                let j = interval_index(times, s);
                let (t0, t1) = (times[j], times[j + 1]);
                for (i, o) in out.iter_mut().enumerate() {
                    *o = hermite_value(
                        t0,
                        t1 - t0,
                        values[j][i],
                        slopes[j][i],
                        values[j + 1][i],
                        slopes[j + 1][i],
                        s,
                    );
                }
            }
        }
    }

    /// Phase derivatives `dθ_i^0/ds` at `s ∈ [−τ, 0]` written into `out`.
    pub fn slope_into(&self, s: f64, out: &mut [f64]) {
        match self {
            Self::Constant { .. } => out.iter_mut().for_each(|o| *o = 0.0),
            Self::Linear { slopes, .. } => out.copy_from_slice(slopes),
            Self::Sampled { times, values, slopes } => {
                if times.len() == 1 {
                    out.copy_from_slice(&slopes[0]);
                    return;
                }
                let j = interval_index(times, s);
                let (t0, t1) = (times[j], times[j + 1]);
                for (i, o) in out.iter_mut().enumerate() {
                    *o = hermite_slope(
                        t0,
                        t1 - t0,
                        values[j][i],
                        slopes[j][i],
                        values[j + 1][i],
                        slopes[j + 1][i],
                        s,
                    );
                }
            }
        }
    }

    pub fn value_at(&self, s: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        self.value_into(s, &mut out);
        out
    }

    pub fn slope_at(&self, s: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        self.slope_into(s, &mut out);
        out
    }

    /// Largest `|dθ_i^0/ds|` over the history. For sampled histories this is
    /// the maximum over the node slopes.
    pub fn max_abs_slope(&self) -> f64 {
        match self {
            Self::Constant { .. } => 0.0,
            Self::Linear { slopes, .. } => max_abs(slopes),
            Self::Sampled { slopes, .. } => slopes.iter().map(|row| max_abs(row)).fold(0.0, f64::max),
        }
    }

    /// Adds `c` to every history value.
    pub fn shifted(&self, c: f64) -> Self {
        let shift = |v: &Vec<f64>| v.iter().map(|x| x + c).collect::<Vec<_>>();
        match self {
            Self::Constant { values } => Self::Constant { values: shift(values) },
            Self::Linear { values, slopes } => Self::Linear {
                values: shift(values),
                slopes: slopes.clone(),
            },
            Self::Sampled { times, values, slopes } => Self::Sampled {
                times: times.clone(),
                values: values.iter().map(shift).collect(),
                slopes: slopes.clone(),
            },
        }
    }

    /// Reorders oscillators so that new index `i` holds old index `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let apply = |v: &Vec<f64>| perm.iter().map(|&p| v[p]).collect::<Vec<_>>();
        match self {
            Self::Constant { values } => Self::Constant { values: apply(values) },
            Self::Linear { values, slopes } => Self::Linear {
                values: apply(values),
                slopes: apply(slopes),
            },
            Self::Sampled { times, values, slopes } => Self::Sampled {
                times: times.clone(),
                values: values.iter().map(apply).collect(),
                slopes: slopes.iter().map(apply).collect(),
            },
        }
    }
}

/// Equally spaced phases on `[−d/2, d/2]` with seeded jitter on the interior
/// points. The two end points are pinned so the diameter is exactly `d`.
///
/// `jitter ∈ [0, 1)` is the jitter amplitude as a fraction of the spacing.
pub fn spread_phases(n: usize, diameter: f64, jitter: f64, seed: u64) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::Parameter(format!("need at least 2 oscillators, got {n}")));
    }
    if !(diameter.is_finite() && diameter >= 0.0) {
        return Err(Error::Parameter(format!("diameter must be finite and >= 0, got {diameter}")));
    }
    if !(0.0..1.0).contains(&jitter) {
        return Err(Error::Parameter(format!("jitter must lie in [0, 1), got {jitter}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spacing = 1.0 / (n - 1) as f64;
    let half = 0.5 * diameter;
    Ok((0..n)
        .map(|i| {
            let x = if i == 0 {
                0.0
            } else if i == n - 1 {
                1.0
            } else {
                let u: f64 = rng.random::<f64>() - 0.5;
                i as f64 * spacing + jitter * spacing * u
            };
            x * diameter - half
        })
        .collect())
}

/// Closed-form scales the hypotheses are expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedScales {
    /// `D(Ω) = max Ω − min Ω`.
    pub d_omega: f64,
    /// A-priori bound on `|ω_i(t)|` for `t ≥ −τ`.
    pub r_omega: f64,
    /// `D(θ(0))`.
    pub d_theta0: f64,
}

/// `R_ω` is taken as `max(max|Ω_i| + κ, max|dθ^0/ds|)`: the first term bounds
/// `|ω|` for `t > 0`, the second covers the prescribed history.
pub fn derived_scales(sys: &OscillatorSystem, hist: &InitialHistory) -> Result<DerivedScales> {
    hist.check_against(sys.n(), sys.delay())?;
    let freqs = sys.natural_frequencies();
    let d_omega = spread(freqs);
    let r_omega = (max_abs(freqs) + sys.coupling()).max(hist.max_abs_slope());
    let d_theta0 = spread(&hist.value_at(0.0));
    Ok(DerivedScales {
        d_omega,
        r_omega,
        d_theta0,
    })
}

pub(crate) fn spread(xs: &[f64]) -> f64 {
    let (lo, hi) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    hi - lo
}

fn max_abs(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn finite(xs: &[f64]) -> Result<()> {
    match xs.iter().find(|x| !x.is_finite()) {
        Some(x) => Err(Error::Parameter(format!("history entry {x} is not finite"))),
        None => Ok(()),
    }
}

/// Index `j` of the interval `[times[j], times[j+1]]` containing `s`,
/// clamped to the end intervals.
fn interval_index(times: &[f64], s: f64) -> usize {
    let j = times.partition_point(|&t| t <= s);
    j.saturating_sub(1).min(times.len() - 2)
}

/// Cubic Hermite interpolant on `[t0, t0 + h]`. Returns `p0` exactly at `t0`.
#[inline]
pub(crate) fn hermite_value(t0: f64, h: f64, p0: f64, m0: f64, p1: f64, m1: f64, s: f64) -> f64 {
    let u = (s - t0) / h;
    if u == 0.0 {
        return p0;
    }
    if u == 1.0 {
        return p1;
    }
    let u2 = u * u;
    let u3 = u2 * u;
    let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
    let h10 = u3 - 2.0 * u2 + u;
    let h01 = -2.0 * u3 + 3.0 * u2;
    let h11 = u3 - u2;
    h00 * p0 + h10 * h * m0 + h01 * p1 + h11 * h * m1
}

#[inline]
pub(crate) fn hermite_slope(t0: f64, h: f64, p0: f64, m0: f64, p1: f64, m1: f64, s: f64) -> f64 {
    let u = (s - t0) / h;
    let u2 = u * u;
    let d00 = 6.0 * u2 - 6.0 * u;
    let d10 = 3.0 * u2 - 4.0 * u + 1.0;
    let d01 = -6.0 * u2 + 6.0 * u;
    let d11 = 3.0 * u2 - 2.0 * u;
    (d00 * p0 + d01 * p1) / h + d10 * m0 + d11 * m1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dirac_returns_copies() {
        let d = FrequencyDistribution::Dirac { omega0: 0.3, seed: 0 };
        assert_eq!(sample_frequencies(&d, 5).unwrap(), vec![0.3; 5]);
    }

    #[test]
    fn degenerate_uniform() {
        let d = FrequencyDistribution::Uniform { lo: 1.0, hi: 1.0, seed: 9 };
        assert_eq!(sample_frequencies(&d, 3).unwrap(), vec![1.0; 3]);
    }

    #[test]
    fn uniform_golden_vector() {
        let d = FrequencyDistribution::Uniform { lo: -0.05, hi: 0.05, seed: 42 };
        let got = sample_frequencies(&d, 10).unwrap();
        let golden: [u64; 10] = GOLDEN_UNIFORM_SEED42;
        let got_bits: Vec<u64> = got.iter().map(|x| x.to_bits()).collect();
        assert_eq!(got_bits, golden, "values: {got:?}");
        assert!(got.iter().all(|x| (-0.05..0.05).contains(x)));
    }

    const GOLDEN_UNIFORM_SEED42: [u64; 10] = [
        4580900022201335536,
        4586649973542059702,
        13798378848796256536,
        4578495455967370928,
        13805122624836790861,
        13808577482214809728,
        13804562112434496404,
        4584415757606953180,
        4583475435220574008,
        13806564025021096429,
    ];

    #[test]
    fn bad_distributions() {
        let d = FrequencyDistribution::Uniform { lo: 1.0, hi: 0.0, seed: 0 };
        assert!(matches!(sample_frequencies(&d, 3), Err(Error::Parameter(_))));
        let d = FrequencyDistribution::Normal { mean: 0.0, stddev: -1.0, seed: 0 };
        assert!(matches!(sample_frequencies(&d, 3), Err(Error::Parameter(_))));
        let d = FrequencyDistribution::Dirac { omega0: 0.0, seed: 0 };
        assert!(sample_frequencies(&d, 1).is_err());
    }

    #[test]
    fn normal_is_reproducible() {
        let d = FrequencyDistribution::Normal { mean: 0.0, stddev: 0.1, seed: 7 };
        assert_eq!(sample_frequencies(&d, 6).unwrap(), sample_frequencies(&d, 6).unwrap());
        let zero = FrequencyDistribution::Normal { mean: 0.5, stddev: 0.0, seed: 7 };
        assert_eq!(sample_frequencies(&zero, 4).unwrap(), vec![0.5; 4]);
    }

    #[test]
    fn system_invariants() {
        assert!(OscillatorSystem::new(vec![0.0], 1.0, 0.0).is_err());
        assert!(OscillatorSystem::new(vec![0.0, f64::NAN], 1.0, 0.0).is_err());
        assert!(OscillatorSystem::new(vec![0.0, 1.0], -1.0, 0.0).is_err());
        assert!(OscillatorSystem::new(vec![0.0, 1.0], 1.0, -0.1).is_err());
        assert!(OscillatorSystem::new(vec![0.0, 1.0], 1.0, 0.1).is_ok());
    }

    #[test]
    fn scales_identical_constant() {
        let sys = OscillatorSystem::new(vec![1.0; 3], 2.0, 0.1).unwrap();
        let hist = InitialHistory::constant(vec![0.2, -0.3, 0.4]);
        let s = derived_scales(&sys, &hist).unwrap();
        assert_eq!(s.d_omega, 0.0);
        assert_eq!(s.r_omega, 3.0);
        assert!((s.d_theta0 - 0.7).abs() < 1e-15);
    }

    #[test]
    fn scales_direct_arithmetic() {
        let sys = OscillatorSystem::new(vec![-1.0, 2.0], 0.5, 0.0).unwrap();
        let s = derived_scales(&sys, &InitialHistory::constant(vec![0.0, 1.0])).unwrap();
        assert_eq!((s.d_omega, s.r_omega, s.d_theta0), (3.0, 2.5, 1.0));
    }

    #[test]
    fn scales_history_slope_dominates() {
        let sys = OscillatorSystem::new(vec![0.0, 0.0], 1.0, 0.5).unwrap();
        let hist = InitialHistory::linear(vec![0.0, 1.0], vec![4.0, -4.0]).unwrap();
        assert_eq!(derived_scales(&sys, &hist).unwrap().r_omega, 4.0);
    }

    #[test]
    fn sampled_history_domain_mismatch() {
        let hist = InitialHistory::sampled(
            vec![-0.5, 0.0],
            vec![vec![0.0, 1.0], vec![0.0, 1.0]],
            vec![vec![0.0, 0.0], vec![0.0, 0.0]],
        )
        .unwrap();
        let sys = OscillatorSystem::new(vec![0.0, 0.0], 1.0, 1.0).unwrap();
        assert!(matches!(derived_scales(&sys, &hist), Err(Error::Domain(_))));
        let wrong_n = OscillatorSystem::new(vec![0.0; 3], 1.0, 0.5).unwrap();
        assert!(matches!(derived_scales(&wrong_n, &hist), Err(Error::Shape { .. })));
    }

    #[test]
    fn sampled_history_reproduces_cubic() {
        // Hermite interpolation is exact for cubics.
        let f = |s: f64| 0.3 * s * s * s - s * s + 2.0 * s + 0.5;
        let df = |s: f64| 0.9 * s * s - 2.0 * s + 2.0;
        let times = vec![-1.0, -0.6, -0.25, 0.0];
        let values = times.iter().map(|&t| vec![f(t), -f(t)]).collect();
        let slopes = times.iter().map(|&t| vec![df(t), -df(t)]).collect();
        let hist = InitialHistory::sampled(times, values, slopes).unwrap();
        for k in 0..=40 {
            let s = -1.0 + k as f64 / 40.0;
            let v = hist.value_at(s);
            let d = hist.slope_at(s);
            assert!((v[0] - f(s)).abs() < 1e-13 && (v[1] + f(s)).abs() < 1e-13);
            assert!((d[0] - df(s)).abs() < 1e-12 && (d[1] + df(s)).abs() < 1e-12);
        }
        assert_eq!(hist.max_abs_slope(), 4.9);
    }

    #[test]
    fn spread_hits_exact_diameter() {
        for n in 2..12 {
            let p = spread_phases(n, 2.0, 0.6, n as u64).unwrap();
            assert_eq!(spread(&p), 2.0);
            assert!(p.windows(2).all(|w| w[1] > w[0]));
        }
        assert!(spread_phases(4, 1.0, 1.0, 0).is_err());
    }
}
