//! Closed-form sufficient conditions for exponential frequency
//! synchronization and the certificate that bundles them.
//!
//! Every threshold is reported with a signed margin (positive means the
//! condition holds) so sweeps can measure distances to the boundary.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::{derived_scales, DerivedScales, InitialHistory, OscillatorSystem};

/// A threshold that may be unbounded. Serializes as a number or as the
/// string `"unbounded"`, never as a floating-point infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold(pub f64);

impl Threshold {
    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_unbounded(self) -> bool {
        self.0.is_infinite()
    }
}

impl Serialize for Threshold {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else if self.0 > 0.0 {
            s.serialize_str("unbounded")
        } else {
            s.serialize_str("-unbounded")
        }
    }
}

impl<'de> Deserialize<'de> for Threshold {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Tag(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(Threshold(x)),
            Raw::Tag(t) if t == "unbounded" => Ok(Threshold(f64::INFINITY)),
            Raw::Tag(t) if t == "-unbounded" => Ok(Threshold(f64::NEG_INFINITY)),
            Raw::Tag(t) => Err(serde::de::Error::custom(format!("unknown threshold tag `{t}`"))),
        }
    }
}

/// Which set of conditions the certificate applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `N > 2`, `τ > 0`, `D_θ0 ∈ (π/2, π)`.
    Standard,
    /// Two oscillators with `τ > 0`.
    N2,
    /// No delay: reduced coupling condition, no delay conditions.
    TauZero,
    /// `D_θ0 = π/2` exactly; only diameter shrinking is certified.
    BoundaryPiOver2,
    /// `D_θ0 < π/2` with `τ > 0`: thresholds evaluated with `D* = D_θ0`.
    RemarkDstar,
}

/// `D* ∈ (0, π/2]` with `sin D* = sin D_θ0`.
pub fn dual_angle(d_theta0: f64) -> Result<f64> {
    if !(d_theta0 > 0.0 && d_theta0 < PI) {
        return Err(Error::Domain(format!("dual angle needs D_θ0 ∈ (0, π), got {d_theta0}")));
    }
    Ok(if d_theta0 <= FRAC_PI_2 { d_theta0 } else { PI - d_theta0 })
}

/// Coupling threshold
/// `(N/(N−2))·D(Ω) / (2 sin(D_θ0/2) cos((D_θ0 + δ)/2))` for `N > 2`.
pub fn kappa_threshold(n: usize, d_omega: f64, d_theta0: f64, delta: f64) -> Result<f64> {
    if n <= 2 {
        return Err(Error::Domain(format!(
            "coupling threshold needs N > 2 (got {n}); use the two-oscillator variant"
        )));
    }
    if !(delta > 0.0 && delta < FRAC_PI_2) {
        return Err(Error::Domain(format!("δ must lie in (0, π/2), got {delta}")));
    }
    if !(d_theta0 > FRAC_PI_2 && d_theta0 < PI - delta) {
        return Err(Error::Domain(format!("D_θ0 must lie in (π/2, π − δ), got {d_theta0}")));
    }
    Ok(raw_kappa_threshold(n, d_omega, d_theta0, delta))
}

fn n_factor(n: usize) -> f64 {
    n as f64 / (n as f64 - 2.0)
}

fn raw_kappa_threshold(n: usize, d_omega: f64, d_theta0: f64, delta: f64) -> f64 {
    if d_omega == 0.0 {
        return 0.0;
    }
    let denom = 2.0 * (0.5 * d_theta0).sin() * (0.5 * (d_theta0 + delta)).cos();
    if denom > 0.0 {
        n_factor(n) * d_omega / denom
    } else {
        f64::INFINITY
    }
}

/// Delay threshold `min(δ/(2R_ω), (π/2 − D*)/R_ω)`; `+∞` when `R_ω = 0`.
pub fn tau_bar(delta: f64, r_omega: f64, d_star: f64) -> Result<f64> {
    if !(r_omega >= 0.0) {
        return Err(Error::Domain(format!("R_ω must be >= 0, got {r_omega}")));
    }
    if !(d_star > 0.0 && d_star <= FRAC_PI_2) {
        return Err(Error::Domain(format!("D* must lie in (0, π/2], got {d_star}")));
    }
    if r_omega == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((delta / (2.0 * r_omega)).min((FRAC_PI_2 - d_star) / r_omega))
}

/// Strengthened delay bound `ln(1 + ζ̄/(κ(2 + ζ̄)))` with
/// `ζ̄ = cos(D* + R_ω τ̄)`. Returns 0 when `ζ̄ ≤ 0` and `+∞` when `κ = 0`.
pub fn add_as_bound(kappa: f64, d_star: f64, r_omega: f64, tau_bar_val: f64) -> f64 {
    let zeta = zeta_at(d_star, r_omega, tau_bar_val);
    delay_bound_from_zeta(kappa, zeta)
}

/// `ln(1 + ζ/(κ(2+ζ)))`, the largest delay for which the Lyapunov weight
/// window is nonempty.
pub fn delay_bound_from_zeta(kappa: f64, zeta: f64) -> f64 {
    if !(zeta > 0.0) {
        return 0.0;
    }
    if kappa == 0.0 {
        return f64::INFINITY;
    }
    (zeta / (kappa * (2.0 + zeta))).ln_1p()
}

/// `cos(D* + R_ω τ)`, with the product taken as 0 when `R_ω = 0`.
fn zeta_at(d_star: f64, r_omega: f64, tau: f64) -> f64 {
    let drift = if r_omega == 0.0 { 0.0 } else { r_omega * tau };
    (d_star + drift).cos()
}

/// Two-oscillator coupling threshold `D(Ω) / (cos(R_ω τ) sin(D_θ0 + R_ω τ))`.
pub fn kappa_threshold_n2(d_omega: f64, d_theta0: f64, r_omega: f64, tau: f64) -> Result<f64> {
    let drift = r_omega * tau;
    if !(drift >= 0.0 && drift < FRAC_PI_2) {
        return Err(Error::Domain(format!("need 0 <= R_ω τ < π/2, got {drift}")));
    }
    let angle = d_theta0 + drift;
    if !(angle > 0.0 && angle < PI) {
        return Err(Error::Domain(format!("need D_θ0 + R_ω τ ∈ (0, π), got {angle}")));
    }
    if d_omega == 0.0 {
        return Ok(0.0);
    }
    Ok(d_omega / (drift.cos() * angle.sin()))
}

/// Outcome of the `D_θ0 = π/2` check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCase {
    /// `(N/(N−2)) D(Ω) / (cos(R_ω τ) − sin(R_ω τ))`.
    pub kappa_min: Threshold,
    /// Whether some `η ∈ (0, π/2)` satisfies `tan(R_ω τ) > (1 − sin η)/cos η`.
    pub eta_exists: bool,
    /// False when `cos(R_ω τ) ≤ sin(R_ω τ)` and the threshold is undefined.
    pub defined: bool,
}

pub fn boundary_case_pi_over_2(n: usize, d_omega: f64, r_omega: f64, tau: f64, delta: f64) -> Result<BoundaryCase> {
    if n <= 2 {
        return Err(Error::Domain(format!("boundary case needs N > 2, got {n}")));
    }
    if tau < 0.0 || (r_omega > 0.0 && !(tau < delta / (2.0 * r_omega))) {
        return Err(Error::Domain(format!("need τ < δ/(2R_ω), got τ = {tau}")));
    }
    let drift = r_omega * tau;
    let (c, s) = (drift.cos(), drift.sin());
    // (1 − sin η)/cos η decreases from 1 to 0 on (0, π/2), so some η works
    // exactly when tan(R_ω τ) > 0.
    let eta_exists = drift > 0.0;
    if c <= s {
        return Ok(BoundaryCase {
            kappa_min: Threshold(f64::INFINITY),
            eta_exists,
            defined: false,
        });
    }
    let kappa_min = if d_omega == 0.0 { 0.0 } else { n_factor(n) * d_omega / (c - s) };
    Ok(BoundaryCase {
        kappa_min: Threshold(kappa_min),
        eta_exists,
        defined: true,
    })
}

/// Default `δ = min(0.3, 0.9·(π − D_θ0))`, kept inside `(0, π/2)`.
pub fn default_delta(d_theta0: f64) -> f64 {
    let raw = 0.3f64.min(0.9 * (PI - d_theta0));
    if raw > 0.0 {
        raw
    } else {
        0.3
    }
}

/// Machine-readable certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub regime: Regime,
    pub n: usize,
    pub kappa: f64,
    pub tau: f64,
    pub delta: f64,
    pub d_omega: f64,
    pub r_omega: f64,
    pub d_theta0: f64,
    pub d_star: f64,
    pub kappa_min: Threshold,
    pub tau_bar: Threshold,
    /// `cos(D* + R_ω τ)`, lower bound on interaction cosines after entry.
    pub zeta_star: f64,
    /// `cos(D* + R_ω τ̄)`, the value entering the strengthened delay bound.
    pub zeta_bar: f64,
    pub add_as_bound: Threshold,
    /// `ln(1 + 1/κ)`, the weaker delay bound the strengthened one implies.
    pub weak_delay_bound: Threshold,
    /// Coupling threshold with `cos(D_θ0/2 + R_ω τ)` in place of the δ form.
    pub used_threshold: Threshold,
    pub h1_ok: bool,
    pub h2_ok: bool,
    pub h3_ok: bool,
    pub add_as_ok: bool,
    pub used_ok: bool,
    pub h1_margin: Threshold,
    pub h2_margin: Threshold,
    pub h3_margin: Threshold,
    pub add_as_margin: Threshold,
    pub used_margin: Threshold,
    /// Only meaningful in the `boundary_pi_over_2` regime.
    pub eta_exists: Option<bool>,
    /// All conditions that apply to `regime` hold.
    pub certified: bool,
}

impl HypothesisReport {
    pub fn scales(&self) -> DerivedScales {
        DerivedScales {
            d_omega: self.d_omega,
            r_omega: self.r_omega,
            d_theta0: self.d_theta0,
        }
    }
}

/// Evaluates every applicable sufficient condition. Never fails: inputs
/// outside the admissible ranges produce failed flags and margins.
pub fn certify(sys: &OscillatorSystem, hist: &InitialHistory, delta: f64) -> Result<HypothesisReport> {
    let scales = derived_scales(sys, hist)?;
    Ok(certify_scales(sys.n(), sys.coupling(), sys.delay(), &scales, delta))
}

pub fn certify_scales(n: usize, kappa: f64, tau: f64, scales: &DerivedScales, delta: f64) -> HypothesisReport {
    let DerivedScales {
        d_omega,
        r_omega,
        d_theta0,
    } = *scales;

    let regime = if tau == 0.0 {
        Regime::TauZero
    } else if n == 2 {
        Regime::N2
    } else if d_theta0 == FRAC_PI_2 {
        Regime::BoundaryPiOver2
    } else if d_theta0 < FRAC_PI_2 {
        Regime::RemarkDstar
    } else {
        Regime::Standard
    };

    let d_star = dual_angle(d_theta0).unwrap_or(0.0);
    let delta_ok = delta > 0.0 && delta < FRAC_PI_2;
    let tau_bar_val = if d_star > 0.0 && delta_ok {
        tau_bar(delta, r_omega, d_star).unwrap_or(0.0)
    } else {
        0.0
    };
    let zeta_star = zeta_at(d_star, r_omega, tau);
    let zeta_bar = if tau_bar_val.is_finite() {
        zeta_at(d_star, r_omega, tau_bar_val)
    } else {
        d_star.cos()
    };
    let add_as = if d_star > 0.0 { delay_bound_from_zeta(kappa, zeta_bar) } else { 0.0 };
    let weak = if kappa > 0.0 { (1.0 / kappa).ln_1p() } else { f64::INFINITY };

    let half_open = |x: f64, lo: f64, hi: f64| (x - lo).min(hi - x);
    let drift = r_omega * tau;
    let used_threshold = if n > 2 {
        let factor = if tau == 0.0 { 1.0 } else { n_factor(n) };
        let denom = 2.0 * (0.5 * d_theta0).sin() * (0.5 * d_theta0 + drift).cos();
        if d_omega == 0.0 {
            0.0
        } else if denom > 0.0 {
            factor * d_omega / denom
        } else {
            f64::INFINITY
        }
    } else {
        kappa_threshold_n2(d_omega, d_theta0, r_omega, tau).unwrap_or(f64::INFINITY)
    };

    let mut eta_exists = None;
    let (h1_margin, kappa_min, h3_bound) = match regime {
        Regime::TauZero => {
            let k = if d_omega == 0.0 {
                0.0
            } else if d_theta0 > 0.0 && d_theta0 < PI {
                d_omega / d_theta0.sin()
            } else {
                f64::INFINITY
            };
            (half_open(d_theta0, 0.0, PI), k, f64::INFINITY)
        }
        Regime::N2 => {
            let k = kappa_threshold_n2(d_omega, d_theta0, r_omega, tau).unwrap_or(f64::INFINITY);
            (half_open(d_theta0, FRAC_PI_2, PI - delta), k, tau_bar_val)
        }
        Regime::Standard => {
            let k = if delta_ok { raw_kappa_threshold(n, d_omega, d_theta0, delta) } else { f64::INFINITY };
            (half_open(d_theta0, FRAC_PI_2, PI - delta), k, tau_bar_val)
        }
        Regime::RemarkDstar => {
            // D* = D_θ0 here; the headline (H1) is reported as failed.
            let k = if delta_ok { raw_kappa_threshold(n, d_omega, d_theta0, delta) } else { f64::INFINITY };
            (half_open(d_theta0, FRAC_PI_2, PI - delta), k, tau_bar_val)
        }
        Regime::BoundaryPiOver2 => {
            let bound = if r_omega > 0.0 { delta / (2.0 * r_omega) } else { f64::INFINITY };
            let case = if delta_ok && tau < bound {
                boundary_case_pi_over_2(n, d_omega, r_omega, tau, delta).ok()
            } else {
                None
            };
            eta_exists = Some(case.is_some_and(|c| c.eta_exists));
            let k = case.map_or(f64::INFINITY, |c| c.kappa_min.0);
            (0.0, k, bound)
        }
    };

    let h1_ok = h1_margin > 0.0 && delta_ok || (regime == Regime::TauZero && h1_margin > 0.0);
    let h2_margin = kappa - kappa_min;
    let h2_ok = kappa > kappa_min && kappa > 0.0;
    let h3_margin = h3_bound - tau;
    let h3_ok = tau < h3_bound;
    let (add_as_bound_val, add_as_ok) = match regime {
        Regime::TauZero => (f64::INFINITY, true),
        Regime::BoundaryPiOver2 => (0.0, false),
        _ => (add_as, tau < add_as),
    };
    let add_as_margin = add_as_bound_val - tau;
    let used_margin = kappa - used_threshold;
    let used_ok = kappa > used_threshold && kappa > 0.0;

    let certified = match regime {
        Regime::Standard | Regime::N2 => h1_ok && h2_ok && h3_ok && add_as_ok,
        Regime::TauZero => h1_ok && h2_ok,
        Regime::RemarkDstar => d_theta0 > 0.0 && delta_ok && h2_ok && h3_ok && add_as_ok,
        Regime::BoundaryPiOver2 => h2_ok && h3_ok && eta_exists == Some(true),
    };

    HypothesisReport {
        regime,
        n,
        kappa,
        tau,
        delta,
        d_omega,
        r_omega,
        d_theta0,
        d_star,
        kappa_min: Threshold(kappa_min),
        tau_bar: Threshold(if regime == Regime::BoundaryPiOver2 { h3_bound } else { tau_bar_val }),
        zeta_star,
        zeta_bar,
        add_as_bound: Threshold(add_as_bound_val),
        weak_delay_bound: Threshold(weak),
        used_threshold: Threshold(used_threshold),
        h1_ok: h1_ok && regime != Regime::RemarkDstar && regime != Regime::BoundaryPiOver2,
        h2_ok,
        h3_ok,
        add_as_ok,
        used_ok,
        h1_margin: Threshold(h1_margin),
        h2_margin: Threshold(h2_margin),
        h3_margin: Threshold(h3_margin),
        add_as_margin: Threshold(add_as_margin),
        used_margin: Threshold(used_margin),
        eta_exists,
        certified,
    }
}
