//! Sliding surfaces and discrete-time (fast) terminal sliding mode control.
//!
//! For tracking error `s1 = x1 - r` the surfaces are
//!
//! ```text
//! s1[n] = x1[n] - r[n]
//! s2[n] = D s1[n] + alpha s1[n] + beta s1[n]^(q/p)
//! ```
//!
//! with `D` the forward difference `(v[n+1] - v[n]) / T`. On the nominal Euler
//! plant the control law below places the surface on the scalar recursion
//!
//! ```text
//! s2[n+1] = (1 - Phi T) s2[n] - K T sign(s2[n])
//! ```
//!
//! The TSM baseline is the `alpha = 0`, `Phi = 0` special case.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{PlantParams, PlantState};

/// Saturation applied to the linearized terminal term (deg/s^2).
pub const DEFAULT_TERMINAL_LIMIT: f64 = 1e4;
/// Below this `|s1|` the linearized terminal term is switched off.
pub const TERMINAL_DEADZONE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GainsError {
    #[error("q1 and p1 must be odd positive integers with q1 < p1 (got {q1}/{p1})")]
    Exponent { q1: u32, p1: u32 },
    #[error("gain {name} must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("Phi must lie in (0, 1/T) = (0, {limit}), got {phi}")]
    PhiOutOfRange { phi: f64, limit: f64 },
}

/// Real-valued odd root power `sign(x) |x|^(q/p)`.
pub fn odd_pow(x: f64, q: u32, p: u32) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    x.signum() * x.abs().powf(q as f64 / p as f64)
}

/// `sign` with `sign(0) = 0`.
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// How the rate of the terminal term `beta s1^(q/p)` enters the control law.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TerminalRate {
    /// Forward difference of `s1^(q/p)` evaluated at the (already known)
    /// next error `s1 + T Ds1`. Non-singular, and makes the surface
    /// recursion hold exactly on the nominal plant.
    #[default]
    Exact,
    /// Chain-rule form `beta (q/p) |s1|^((q-p)/p) Ds1`, saturated at
    /// `limit` and zeroed for `|s1| < TERMINAL_DEADZONE`. The recursion then
    /// only holds to first order in `T`.
    Linearized { limit: f64 },
}

/// FTSM tuning plus sampling period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FtsmGains {
    pub alpha: f64,
    pub beta: f64,
    pub q1: u32,
    pub p1: u32,
    /// Switching gain.
    pub k: f64,
    /// Linear reaching gain on `s2`.
    pub phi: f64,
    /// Sampling period (s).
    pub period: f64,
    #[serde(default)]
    pub terminal: TerminalRate,
}

impl Default for FtsmGains {
    /// K = 10, alpha = 1, beta = 2, q1/p1 = 7/9, Phi = 70, T = 0.01 s.
    fn default() -> Self {
        FtsmGains {
            alpha: 1.0,
            beta: 2.0,
            q1: 7,
            p1: 9,
            k: 10.0,
            phi: 70.0,
            period: 0.01,
            terminal: TerminalRate::Exact,
        }
    }
}

impl FtsmGains {
    pub fn validate(&self) -> Result<(), GainsError> {
        self.validate_terminal()?;
        positive("alpha", self.alpha)?;
        let limit = 1.0 / self.period;
        if !(self.phi > 0.0 && self.phi < limit) {
            return Err(GainsError::PhiOutOfRange { phi: self.phi, limit });
        }
        Ok(())
    }

    /// Checks shared by FTSM and the TSM baseline, which ignores `alpha` and `Phi`.
    pub fn validate_terminal(&self) -> Result<(), GainsError> {
        let odd = |v: u32| v % 2 == 1;
        if !(odd(self.q1) && odd(self.p1) && self.q1 < self.p1) {
            return Err(GainsError::Exponent { q1: self.q1, p1: self.p1 });
        }
        positive("beta", self.beta)?;
        positive("K", self.k)?;
        positive("T", self.period)?;
        if let TerminalRate::Linearized { limit } = self.terminal {
            positive("terminal limit", limit)?;
        }
        Ok(())
    }

    pub fn exponent(&self) -> f64 {
        self.q1 as f64 / self.p1 as f64
    }

    /// Nominal one-step surface map `(1 - Phi T) s2 - K T sign(s2)`.
    pub fn surface_recursion(&self, sigma2: f64) -> f64 {
        (1.0 - self.phi * self.period) * sigma2 - self.k * self.period * sign(sigma2)
    }

    /// `2 K T`, the quasi-sliding band radius used for band-entry detection.
    pub fn default_band_radius(&self) -> f64 {
        2.0 * self.k * self.period
    }

    /// Conservative bound on `|s2|` after band entry under `|d| <= mu`.
    pub fn disturbed_band_bound(&self, mu: f64) -> f64 {
        let kt = self.k * self.period;
        (kt + mu * self.period) / (self.phi * self.period) + kt
    }

    /// Terminal-only surface of the TSM baseline.
    pub fn tsm(&self) -> FtsmGains {
        FtsmGains { alpha: 0.0, phi: 0.0, ..*self }
    }
}

fn positive(name: &'static str, value: f64) -> Result<(), GainsError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(GainsError::NonPositive { name, value })
    }
}

/// `r[n]`, `r[n+1]`, `r[n+2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceWindow {
    pub current: f64,
    pub next: f64,
    pub after_next: f64,
}

impl ReferenceWindow {
    pub fn new(current: f64, next: f64, after_next: f64) -> Self {
        ReferenceWindow { current, next, after_next }
    }

    pub fn constant(r: f64) -> Self {
        ReferenceWindow { current: r, next: r, after_next: r }
    }

    /// `D r[n]`.
    pub fn rate(&self, t: f64) -> f64 {
        (self.next - self.current) / t
    }

    /// `D^2 r[n]`.
    pub fn accel(&self, t: f64) -> f64 {
        (self.after_next - 2.0 * self.next + self.current) / (t * t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSample {
    pub sigma1: f64,
    pub sigma2: f64,
    pub delta_sigma1: f64,
}

/// FTSM surfaces at sample `n`.
pub fn compute_surfaces(state: &PlantState, reference: &ReferenceWindow, gains: &FtsmGains) -> SurfaceSample {
    surfaces(state, reference, gains, None)
}

fn surfaces(
    state: &PlantState,
    reference: &ReferenceWindow,
    gains: &FtsmGains,
    prev_sigma1: Option<f64>,
) -> SurfaceSample {
    let t = gains.period;
    let sigma1 = state.x1 - reference.current;
    let delta_sigma1 = match prev_sigma1 {
        Some(prev) => (sigma1 - prev) / t,
        None => state.x2 - reference.rate(t),
    };
    let sigma2 = delta_sigma1 + gains.alpha * sigma1 + gains.beta * odd_pow(sigma1, gains.q1, gains.p1);
    SurfaceSample { sigma1, sigma2, delta_sigma1 }
}

fn terminal_term(s: &SurfaceSample, gains: &FtsmGains) -> f64 {
    match gains.terminal {
        TerminalRate::Exact => {
            let next = s.sigma1 + gains.period * s.delta_sigma1;
            gains.beta * (odd_pow(next, gains.q1, gains.p1) - odd_pow(s.sigma1, gains.q1, gains.p1)) / gains.period
        }
        TerminalRate::Linearized { limit } => linearized_terminal(s.sigma1, s.delta_sigma1, gains, limit),
    }
}

fn linearized_terminal(sigma1: f64, rate: f64, gains: &FtsmGains, limit: f64) -> f64 {
    if sigma1.abs() < TERMINAL_DEADZONE {
        return 0.0;
    }
    let e = gains.exponent();
    let term = gains.beta * e * sigma1.abs().powf(e - 1.0) * rate;
    term.clamp(-limit, limit)
}

fn discrete_law(
    state: &PlantState,
    reference: &ReferenceWindow,
    params: &PlantParams,
    gains: &FtsmGains,
    prev_sigma1: Option<f64>,
) -> f64 {
    let s = surfaces(state, reference, gains, prev_sigma1);
    let u0 = -params.a2 * state.x1 - params.a1 * state.x2 - reference.accel(gains.period)
        + gains.alpha * s.delta_sigma1
        + terminal_term(&s, gains)
        + gains.phi * s.sigma2
        + gains.k * sign(s.sigma2);
    -u0 / params.b0
}

/// Discrete FTSM control input.
///
/// `prev_sigma1` switches `Ds1` from `x2 - Dr` to the backward difference
/// of the error history; pass `None` when the rate is measured.
pub fn ftsm_control(
    state: &PlantState,
    reference: &ReferenceWindow,
    params: &PlantParams,
    gains: &FtsmGains,
    prev_sigma1: Option<f64>,
) -> f64 {
    discrete_law(state, reference, params, gains, prev_sigma1)
}

/// Discrete TSM baseline (`alpha = 0`, `Phi = 0`); only `beta`, `q1/p1`, `K`
/// and `T` of `gains` are used.
pub fn tsm_control(state: &PlantState, reference: &ReferenceWindow, params: &PlantParams, gains: &FtsmGains) -> f64 {
    discrete_law(state, reference, params, &gains.tsm(), None)
}

/// Continuous-time FTSM law with analytic reference derivatives. The
/// terminal derivative uses the chain rule with the same saturation as
/// [`TerminalRate::Linearized`].
pub fn continuous_ftsm_control(
    state: &PlantState,
    r: f64,
    r_dot: f64,
    r_ddot: f64,
    params: &PlantParams,
    gains: &FtsmGains,
) -> f64 {
    let limit = match gains.terminal {
        TerminalRate::Linearized { limit } => limit,
        TerminalRate::Exact => DEFAULT_TERMINAL_LIMIT,
    };
    let sigma1 = state.x1 - r;
    let sigma1_dot = state.x2 - r_dot;
    let sigma2 = sigma1_dot + gains.alpha * sigma1 + gains.beta * odd_pow(sigma1, gains.q1, gains.p1);
    let u0 = -params.a2 * state.x1 - params.a1 * state.x2 - r_ddot
        + gains.alpha * sigma1_dot
        + linearized_terminal(sigma1, sigma1_dot, gains, limit)
        + gains.phi * sigma2
        + gains.k * sign(sigma2);
    -u0 / params.b0
}

/// Per-step outcome of the `|s[k+1]| < |s[k]|` reaching condition.
#[derive(Debug, Clone, PartialEq)]
pub struct SarpturkReport {
    /// `holds[k]` is the condition between samples `k` and `k + 1`.
    pub holds: Vec<bool>,
    pub band_radius: f64,
    /// First index with `|s| <= band_radius`.
    pub band_entry: Option<usize>,
    /// Violations strictly before band entry (all violations if never entered).
    pub violations_before_entry: usize,
    pub total_violations: usize,
    /// Largest `|s|` from band entry onward.
    pub post_entry_bound: Option<f64>,
}

impl SarpturkReport {
    pub fn reaching_satisfied(&self) -> bool {
        self.violations_before_entry == 0
    }
}

pub fn sarpturk_check(series: &[f64], band_radius: f64) -> SarpturkReport {
    let holds: Vec<bool> = series.windows(2).map(|w| w[1].abs() < w[0].abs()).collect();
    let band_entry = series.iter().position(|v| v.abs() <= band_radius);
    let pre = band_entry.unwrap_or(holds.len()).min(holds.len());
    let violations_before_entry = holds[..pre].iter().filter(|h| !**h).count();
    let total_violations = holds.iter().filter(|h| !**h).count();
    let post_entry_bound = band_entry.map(|i| series[i..].iter().fold(0.0f64, |m, v| m.max(v.abs())));
    SarpturkReport { holds, band_radius, band_entry, violations_before_entry, total_violations, post_entry_bound }
}
