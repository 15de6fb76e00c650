//! Decoupled second-order axis model of the mirror pointing head.
//!
//! Each axis (elevation, azimuth) is modelled as
//!
//! ```text
//! H(s) = b0 / (s^2 + a1 s + a2)
//! ```
//!
//! with state `x1` = angle (degrees) and `x2` = angular rate (degrees/s):
//!
//! ```text
//! x1' = x2
//! x2' = -a2 x1 - a1 x2 + b0 u + d
//! ```
//!
//! where `d` is a bounded lumped disturbance (cross-axis coupling, unmodelled
//! dynamics). The discrete plant is exactly one forward-Euler step per sample.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("plant parameters must be strictly positive and finite (b0={b0}, a1={a1}, a2={a2})")]
    InvalidParams { b0: f64, a1: f64, a2: f64 },
    #[error("sampling period must be positive and finite, got {0}")]
    InvalidPeriod(f64),
    #[error("step count must be at least 1")]
    NoSteps,
    #[error("disturbance sample {value} at index {index} exceeds bound {bound}")]
    DisturbanceOutOfBound { index: usize, value: f64, bound: f64 },
    #[error("invalid disturbance specification: {0}")]
    InvalidDisturbance(String),
}

/// Identified `(b0, a1, a2)` of one axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantParams {
    /// Input gain (1/s^2 per unit input).
    pub b0: f64,
    /// Damping coefficient, multiplies the rate (1/s).
    pub a1: f64,
    /// Stiffness coefficient, multiplies the angle (1/s^2).
    pub a2: f64,
}

impl PlantParams {
    /// Elevation axis (`H11`) as identified on the pointing head.
    pub const ELEVATION: PlantParams = PlantParams { b0: 3581.0, a1: 59.6, a2: 3568.0 };
    /// Azimuth axis (`H22`) as identified on the pointing head.
    pub const AZIMUTH: PlantParams = PlantParams { b0: 3317.0, a1: 58.6, a2: 3310.0 };

    pub fn new(b0: f64, a1: f64, a2: f64) -> Result<Self, ModelError> {
        let p = PlantParams { b0, a1, a2 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if ok(self.b0) && ok(self.a1) && ok(self.a2) {
            Ok(())
        } else {
            Err(ModelError::InvalidParams { b0: self.b0, a1: self.a1, a2: self.a2 })
        }
    }

    /// Steady-state gain `b0 / a2` of the transfer function.
    pub fn dc_gain(&self) -> f64 {
        self.b0 / self.a2
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.b0, self.a1, self.a2]
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        PlantParams { b0: v[0], a1: v[1], a2: v[2] }
    }
}

/// Angle and angular rate of one axis.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlantState {
    pub x1: f64,
    pub x2: f64,
}

impl PlantState {
    pub const ZERO: PlantState = PlantState { x1: 0.0, x2: 0.0 };

    pub fn new(x1: f64, x2: f64) -> Self {
        PlantState { x1, x2 }
    }

    pub fn is_finite(&self) -> bool {
        self.x1.is_finite() && self.x2.is_finite()
    }
}

/// Sampling period and number of samples of a fixed-step run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingSpec {
    pub period: f64,
    pub n_steps: usize,
}

impl SamplingSpec {
    pub fn new(period: f64, n_steps: usize) -> Result<Self, ModelError> {
        if !(period.is_finite() && period > 0.0) {
            return Err(ModelError::InvalidPeriod(period));
        }
        if n_steps == 0 {
            return Err(ModelError::NoSteps);
        }
        Ok(SamplingSpec { period, n_steps })
    }
}

/// Continuous-time right-hand side `(x1', x2')`.
pub fn continuous_rhs(params: &PlantParams, state: &PlantState, u: f64, d: f64) -> (f64, f64) {
    let accel = -params.a2 * state.x1 - params.a1 * state.x2 + params.b0 * u + d;
    (state.x2, accel)
}

/// One forward-Euler update of the plant over a sampling period `t`.
pub fn euler_step(params: &PlantParams, state: &PlantState, u: f64, d: f64, t: f64) -> PlantState {
    let (dx1, dx2) = continuous_rhs(params, state, u, d);
    PlantState { x1: state.x1 + t * dx1, x2: state.x2 + t * dx2 }
}

/// Zero-initial-condition response of `b0 / (s^2 + a1 s + a2)` to a sampled
/// input, simulated with [`euler_step`]. Returns the angle series, one sample
/// per input sample (the output at index `n` is the state before `u[n]` acts).
pub fn transfer_fn_response(params: &PlantParams, input: &[f64], t: f64) -> Vec<f64> {
    let mut state = PlantState::ZERO;
    let mut out = Vec::with_capacity(input.len());
    for &u in input {
        out.push(state.x1);
        state = euler_step(params, &state, u, 0.0, t);
    }
    out
}

/// Additive disturbance on the acceleration channel.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DisturbanceSpec {
    #[default]
    None,
    Constant {
        value: f64,
    },
    /// Independent uniform draws in `[-bound, bound]`.
    UniformRandom {
        bound: f64,
    },
    /// User-supplied samples; indices past the end read as zero.
    CustomSeries {
        bound: f64,
        samples: Vec<f64>,
    },
}

impl DisturbanceSpec {
    /// Magnitude bound every emitted sample satisfies.
    pub fn bound(&self) -> f64 {
        match self {
            DisturbanceSpec::None => 0.0,
            DisturbanceSpec::Constant { value } => value.abs(),
            DisturbanceSpec::UniformRandom { bound } | DisturbanceSpec::CustomSeries { bound, .. } => *bound,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            DisturbanceSpec::None => Ok(()),
            DisturbanceSpec::Constant { value } if value.is_finite() => Ok(()),
            DisturbanceSpec::Constant { value } => {
                Err(ModelError::InvalidDisturbance(format!("non-finite constant {value}")))
            }
            DisturbanceSpec::UniformRandom { bound } if bound.is_finite() && *bound >= 0.0 => Ok(()),
            DisturbanceSpec::UniformRandom { bound } => {
                Err(ModelError::InvalidDisturbance(format!("bound must be finite and non-negative, got {bound}")))
            }
            DisturbanceSpec::CustomSeries { bound, samples } => {
                if !(bound.is_finite() && *bound >= 0.0) {
                    return Err(ModelError::InvalidDisturbance(format!(
                        "bound must be finite and non-negative, got {bound}"
                    )));
                }
                match samples.iter().position(|v| v.is_nan() || v.abs() > *bound) {
                    Some(index) => {
                        Err(ModelError::DisturbanceOutOfBound { index, value: samples[index], bound: *bound })
                    }
                    None => Ok(()),
                }
            }
        }
    }

    /// Sample source for one run. Seeded so that a `(spec, seed)` pair always
    /// yields the same sequence.
    pub fn source(&self, seed: u64) -> DisturbanceSource<'_> {
        DisturbanceSource { spec: self, rng: ChaCha8Rng::seed_from_u64(seed), index: 0 }
    }
}

#[derive(Debug)]
pub struct DisturbanceSource<'a> {
    spec: &'a DisturbanceSpec,
    rng: ChaCha8Rng,
    index: usize,
}

impl Iterator for DisturbanceSource<'_> {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        let n = self.index;
        self.index += 1;
        let d = match self.spec {
            DisturbanceSpec::None => 0.0,
            DisturbanceSpec::Constant { value } => *value,
            DisturbanceSpec::UniformRandom { bound } => {
                if *bound == 0.0 {
                    0.0
                } else {
                    self.rng.random_range(-*bound..=*bound)
                }
            }
            DisturbanceSpec::CustomSeries { samples, .. } => samples.get(n).copied().unwrap_or(0.0),
        };
        Some(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const H11: PlantParams = PlantParams::ELEVATION;
    const H22: PlantParams = PlantParams::AZIMUTH;

    #[test]
    fn rhs_examples() {
        assert_eq!(continuous_rhs(&H11, &PlantState::ZERO, 0.0, 0.0), (0.0, 0.0));
        assert_eq!(continuous_rhs(&H11, &PlantState::new(1.0, 0.0), 0.0, 0.0), (0.0, -3568.0));
        assert_eq!(continuous_rhs(&H11, &PlantState::ZERO, 1.0, 0.0), (0.0, 3581.0));
    }

    #[test]
    fn rhs_propagates_non_finite() {
        let (_, a) = continuous_rhs(&H11, &PlantState::new(f64::NAN, 0.0), 0.0, 0.0);
        assert!(a.is_nan());
    }

    #[test]
    fn euler_examples() {
        assert_eq!(euler_step(&H11, &PlantState::ZERO, 0.0, 0.0, 0.37), PlantState::ZERO);
        // x2' = 0 + 0.01 * (-3568 * 10) = -356.8
        let s = euler_step(&H11, &PlantState::new(10.0, 0.0), 0.0, 0.0, 0.01);
        assert_eq!(s.x1, 10.0);
        assert_relative_eq!(s.x2, -356.8, max_relative = 1e-14);
        let s = euler_step(&H22, &PlantState::ZERO, 1.0, 0.0, 0.01);
        assert_eq!(s.x1, 0.0);
        assert_relative_eq!(s.x2, 33.17, max_relative = 1e-14);
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let y = transfer_fn_response(&H11, &vec![0.0; 500], 0.001);
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn step_response_reaches_dc_gain() {
        for p in [H11, H22] {
            let y = transfer_fn_response(&p, &vec![1.0; 3000], 0.001);
            let last = *y.last().unwrap();
            assert_relative_eq!(last, p.dc_gain(), max_relative = 1e-3);
        }
        assert_relative_eq!(H11.dc_gain(), 1.0036, max_relative = 1e-4);
        assert_relative_eq!(H22.dc_gain(), 1.0021, max_relative = 1e-4);
    }

    #[test]
    fn euler_error_shrinks_linearly_with_period() {
        // Step response at t = 0.1 s against a T/100 reference trajectory.
        let horizon = 0.1;
        let err = |t: f64| {
            let n = (horizon / t).round() as usize;
            let coarse = transfer_fn_response(&H11, &vec![1.0; n + 1], t)[n];
            let tf = t / 100.0;
            let nf = (horizon / tf).round() as usize;
            let fine = transfer_fn_response(&H11, &vec![1.0; nf + 1], tf)[nf];
            (coarse - fine).abs()
        };
        let e1 = err(0.001);
        let e2 = err(0.0005);
        let ratio = e1 / e2;
        assert!((1.6..2.4).contains(&ratio), "error ratio {ratio}");
    }

    #[test]
    fn params_validation() {
        assert!(PlantParams::new(1.0, 1.0, 1.0).is_ok());
        assert!(PlantParams::new(0.0, 1.0, 1.0).is_err());
        assert!(PlantParams::new(1.0, f64::NAN, 1.0).is_err());
        assert!(SamplingSpec::new(0.0, 10).is_err());
        assert!(SamplingSpec::new(0.01, 0).is_err());
    }

    #[test]
    fn uniform_disturbance_respects_bound_and_seed() {
        let spec = DisturbanceSpec::UniformRandom { bound: 0.1 };
        let a: Vec<f64> = spec.source(7).take(1000).collect();
        let b: Vec<f64> = spec.source(7).take(1000).collect();
        let c: Vec<f64> = spec.source(8).take(1000).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.iter().all(|v| v.abs() <= 0.1));
    }

    #[test]
    fn custom_series_checked_against_bound() {
        let bad = DisturbanceSpec::CustomSeries { bound: 0.1, samples: vec![0.0, 0.2] };
        assert!(matches!(bad.validate(), Err(ModelError::DisturbanceOutOfBound { index: 1, .. })));
        let ok = DisturbanceSpec::CustomSeries { bound: 0.1, samples: vec![0.05] };
        assert_eq!(ok.source(0).take(3).collect::<Vec<_>>(), vec![0.05, 0.0, 0.0]);
    }

    fn params() -> impl Strategy<Value = PlantParams> {
        (1.0..5000.0f64, 0.1..100.0f64, 1.0..5000.0f64).prop_map(|(b0, a1, a2)| PlantParams { b0, a1, a2 })
    }

    proptest! {
        #[test]
        fn equilibrium_is_fixed(p in params(), t in 1e-5..0.1f64) {
            prop_assert_eq!(euler_step(&p, &PlantState::ZERO, 0.0, 0.0, t), PlantState::ZERO);
        }

        #[test]
        fn step_is_linear(
            p in params(),
            t in 1e-4..0.02f64,
            s1 in (-100.0..100.0f64, -1000.0..1000.0f64),
            s2 in (-100.0..100.0f64, -1000.0..1000.0f64),
            u1 in -10.0..10.0f64,
            u2 in -10.0..10.0f64,
            c in -3.0..3.0f64,
        ) {
            let a = PlantState::new(s1.0, s1.1);
            let b = PlantState::new(s2.0, s2.1);
            let combined = PlantState::new(a.x1 + c * b.x1, a.x2 + c * b.x2);
            let lhs = euler_step(&p, &combined, u1 + c * u2, 0.0, t);
            let ra = euler_step(&p, &a, u1, 0.0, t);
            let rb = euler_step(&p, &b, u2, 0.0, t);
            let scale = 1.0 + p.a2 * 100.0 * t + p.b0 * 10.0 * t + lhs.x2.abs();
            prop_assert!((lhs.x1 - (ra.x1 + c * rb.x1)).abs() <= 1e-12 * (1.0 + lhs.x1.abs()) * 10.0);
            prop_assert!((lhs.x2 - (ra.x2 + c * rb.x2)).abs() <= 1e-12 * scale * 10.0);
        }

        #[test]
        fn dc_gain_within_tenth_percent(p in prop_oneof![Just(H11), Just(H22)], amp in 0.1..10.0f64) {
            let y = transfer_fn_response(&p, &vec![amp; 2001], 0.001);
            let last = *y.last().unwrap();
            prop_assert!((last / amp - p.dc_gain()).abs() <= 1e-3 * p.dc_gain());
        }
    }
}
