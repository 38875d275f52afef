//! Delayed Kuramoto oscillators: simulation by the method of steps,
//! sufficient-condition certificates for frequency synchronization, and
//! numerical checks of the accompanying estimates.

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod hypotheses;
pub mod integrator;
pub mod model;
pub mod sweep;

pub use diagnostics::{analyze, diameters, fit_rate, select_eta, sync_verdict, DiagnosticBundle, RateFit};
pub use error::{Error, Result};
pub use hypotheses::{certify, dual_angle, kappa_threshold, tau_bar, HypothesisReport, Regime};
pub use integrator::{integrate, integrate_partial, IntegratorSettings, Trajectory};
pub use model::{sample_frequencies, FrequencyDistribution, InitialHistory, OscillatorSystem};
pub use sweep::{run_sweep, SweepSpec, SweepSummary};
