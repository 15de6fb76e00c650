use std::fmt;

use serde::{Deserialize, Serialize};

use super::Trace;
use crate::sliding::sarpturk_check;

/// Sum of squared tracking errors over the whole trace (no `T` weighting).
pub fn ise(trace: &Trace) -> f64 {
    trace.records.iter().map(|r| r.error().powi(2)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Settling {
    Settled(f64),
    NotSettled,
}

impl Settling {
    pub fn seconds(self) -> Option<f64> {
        match self {
            Settling::Settled(t) => Some(t),
            Settling::NotSettled => None,
        }
    }
}

impl fmt::Display for Settling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Settling::Settled(t) => write!(f, "{t:.3}"),
            Settling::NotSettled => f.write_str("not-settled"),
        }
    }
}

/// Time from `t = 0` after which `|x1 - r_final|` stays within
/// `band_frac * |r_final - x1[0]|`.
pub fn settling_time(trace: &Trace, band_frac: f64) -> Settling {
    let Some(last) = trace.records.last() else {
        return Settling::NotSettled;
    };
    let target = last.r;
    let amplitude = (target - trace.records[0].x1).abs();
    let band = band_frac * amplitude;
    let outside = trace.records.iter().rposition(|r| (r.x1 - target).abs() > band);
    match outside {
        None => Settling::Settled(trace.records[0].t),
        Some(i) if i + 1 < trace.records.len() => Settling::Settled(trace.records[i + 1].t),
        Some(_) => Settling::NotSettled,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsOptions {
    /// Settling band as a fraction of the step size.
    pub band_frac: f64,
    /// Start of the steady-state window for the `sigma2` bound (s).
    pub steady_start: f64,
    /// Quasi-sliding band radius for reaching-condition checks.
    pub band_radius: f64,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        MetricsOptions { band_frac: 0.02, steady_start: 0.5, band_radius: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ise: f64,
    pub settling_time: Settling,
    /// `max |sigma2|` over `t >= steady_start`.
    pub max_abs_sigma2_steady: f64,
    /// Reaching-condition violations before band entry.
    pub sarpturk_violations: usize,
}

pub fn compute_metrics(trace: &Trace, options: &MetricsOptions) -> MetricsReport {
    let steady = trace
        .records
        .iter()
        .filter(|r| r.t >= options.steady_start - 1e-9 * trace.period)
        .fold(0.0f64, |m, r| m.max(r.sigma2.abs()));
    let sarpturk = sarpturk_check(&trace.sigma2(), options.band_radius);
    MetricsReport {
        ise: ise(trace),
        settling_time: settling_time(trace, options.band_frac),
        max_abs_sigma2_steady: steady,
        sarpturk_violations: sarpturk.violations_before_entry,
    }
}
