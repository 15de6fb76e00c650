//! Unconstrained linear MPC baseline on the Euler-discretized axis model.
//!
//! The input `u[n]` first reaches the angle at `x1[n+2]`, so the cost runs
//! over `x1[n+2] .. x1[n+N+1]`:
//!
//! ```text
//! J = sum_{i=1..N} Q (x1[n+1+i] - r[n+1+i])^2 + sum_{i=0..N-1} R u[n+i]^2
//! ```
//!
//! The minimizer is a fixed linear map of `(x[n], r)`; only its first row is
//! kept (receding horizon).

use nalgebra::{DMatrix, DVector, Matrix2, RowVector2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{PlantParams, PlantState};

/// Largest accepted condition number of the stacked least-squares matrix.
pub const MAX_CONDITION: f64 = 1e13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MpcError {
    #[error("invalid MPC configuration: {0}")]
    InvalidConfig(String),
    #[error("reference window has {got} samples, horizon needs {needed}")]
    ShortReference { got: usize, needed: usize },
    #[error("prediction problem is ill-conditioned (condition number {condition:e})")]
    IllConditioned { condition: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpcConfig {
    pub horizon: usize,
    pub state_weight: f64,
    pub input_weight: f64,
    pub period: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        MpcConfig { horizon: 10, state_weight: 1.0, input_weight: 1e-6, period: 0.01 }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<(), MpcError> {
        if self.horizon == 0 {
            return Err(MpcError::InvalidConfig("horizon must be at least 1".into()));
        }
        for (name, v) in [("Q", self.state_weight), ("R", self.input_weight), ("T", self.period)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(MpcError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Precomputed receding-horizon gains for one `(params, config)` pair.
#[derive(Debug, Clone)]
pub struct MpcController {
    config: MpcConfig,
    /// First input as a linear function of the reference targets.
    reference_gain: DVector<f64>,
    /// First input as a linear function of the current state.
    state_gain: RowVector2<f64>,
    condition: f64,
}

impl MpcController {
    pub fn new(params: &PlantParams, config: &MpcConfig) -> Result<Self, MpcError> {
        config.validate()?;
        params.validate().map_err(|e| MpcError::InvalidConfig(e.to_string()))?;
        let n = config.horizon;
        let t = config.period;
        let a = Matrix2::new(1.0, t, -params.a2 * t, 1.0 - params.a1 * t);
        let b = Vector2::new(0.0, params.b0 * t);
        let c = RowVector2::new(1.0, 0.0);

        // powers[k] = A^k, k = 0..=N+1
        let mut powers = vec![Matrix2::identity()];
        for k in 1..=n + 1 {
            powers.push(a * powers[k - 1]);
        }
        // y_i = x1[n+1+i] = C A^{i+1} x + sum_{j<i+1} C A^{i-j} B u_j, i = 1..N
        let mut free = DMatrix::zeros(n, 2);
        let mut forced = DMatrix::zeros(n, n);
        for i in 1..=n {
            let row = c * powers[i + 1];
            free[(i - 1, 0)] = row[0];
            free[(i - 1, 1)] = row[1];
            for j in 0..i {
                forced[(i - 1, j)] = (c * powers[i - j] * b)[0];
            }
        }

        // min || [sqrt(Q) G; sqrt(R) I] u - [sqrt(Q) (r - F x); 0] ||
        let sq = config.state_weight.sqrt();
        let sr = config.input_weight.sqrt();
        let mut stacked = DMatrix::zeros(2 * n, n);
        stacked.view_mut((0, 0), (n, n)).copy_from(&(forced * sq));
        for i in 0..n {
            stacked[(n + i, i)] = sr;
        }
        let svd = stacked.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if !(condition.is_finite() && condition <= MAX_CONDITION) {
            return Err(MpcError::IllConditioned { condition });
        }
        let pinv = svd.pseudo_inverse(0.0).map_err(|_| MpcError::IllConditioned { condition })?;
        // u0 = pinv[0, :n] * sqrt(Q) * (r - F x)
        let first: DVector<f64> = pinv.row(0).columns(0, n).transpose() * sq;
        let state_gain = -(first.transpose() * &free);
        Ok(MpcController {
            config: *config,
            reference_gain: first,
            state_gain: RowVector2::new(state_gain[(0, 0)], state_gain[(0, 1)]),
            condition,
        })
    }

    pub fn config(&self) -> &MpcConfig {
        &self.config
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// `future` holds `r[n+1], r[n+2], ...`; at least `N + 1` samples.
    pub fn control(&self, state: &PlantState, future: &[f64]) -> Result<f64, MpcError> {
        let n = self.config.horizon;
        if future.len() < n + 1 {
            return Err(MpcError::ShortReference { got: future.len(), needed: n + 1 });
        }
        let targets = &future[1..=n];
        let mut u = self.state_gain[0] * state.x1 + self.state_gain[1] * state.x2;
        for (g, r) in self.reference_gain.iter().zip(targets) {
            u += g * r;
        }
        Ok(u)
    }
}

/// One-shot MPC input; see [`MpcController`] for repeated use.
pub fn mpc_control(
    state: &PlantState,
    future: &[f64],
    params: &PlantParams,
    config: &MpcConfig,
) -> Result<f64, MpcError> {
    MpcController::new(params, config)?.control(state, future)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::euler_step;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const H11: PlantParams = PlantParams::ELEVATION;

    #[test]
    fn zero_state_zero_reference() {
        let u = mpc_control(&PlantState::ZERO, &[0.0; 11], &H11, &MpcConfig::default()).unwrap();
        assert_eq!(u, 0.0);
    }

    #[test]
    fn single_step_horizon_matches_scalar_minimizer() {
        let cfg = MpcConfig { horizon: 1, state_weight: 2.0, input_weight: 1e-3, period: 0.01 };
        let state = PlantState::new(1.5, -20.0);
        let future = [3.0, 4.0];
        let u = mpc_control(&state, &future, &H11, &cfg).unwrap();
        // x1[n+2] = x1 + 2 T x2 + T^2 (-a2 x1 - a1 x2) + T^2 b0 u = c + g u
        let t = cfg.period;
        let c = state.x1 + 2.0 * t * state.x2 + t * t * (-H11.a2 * state.x1 - H11.a1 * state.x2);
        let g = t * t * H11.b0;
        // d/du [Q (c + g u - r)^2 + R u^2] = 0
        let expected = cfg.state_weight * g * (future[1] - c) / (cfg.state_weight * g * g + cfg.input_weight);
        assert_relative_eq!(u, expected, max_relative = 1e-10);
        // cross-check the prediction itself by simulating
        let x_next = euler_step(&H11, &state, u, 0.0, t);
        let x_next2 = euler_step(&H11, &x_next, 0.0, 0.0, t);
        assert_relative_eq!(x_next2.x1, c + g * u, max_relative = 1e-12);
    }

    #[test]
    fn long_horizon_approaches_holding_input() {
        let r = 10.0;
        let hold = H11.a2 * r / H11.b0;
        let mut prev_err = f64::INFINITY;
        for n in [5, 20, 60] {
            let cfg = MpcConfig { horizon: n, ..Default::default() };
            let u = mpc_control(&PlantState::new(r, 0.0), &vec![r; n + 1], &H11, &cfg).unwrap();
            let err = (u - hold).abs();
            assert!(err <= prev_err + 1e-12);
            prev_err = err;
        }
        assert!(prev_err / hold < 1e-3, "rel err {}", prev_err / hold);
    }

    #[test]
    fn tiny_input_weight_tracks_next_sample() {
        let cfg = MpcConfig { horizon: 4, input_weight: 1e-9, ..Default::default() };
        let state = PlantState::new(0.3, 2.0);
        let future = [1.0, 2.0, 2.5, 2.7, 2.8];
        let u = mpc_control(&state, &future, &H11, &cfg).unwrap();
        let x1 = euler_step(&H11, &state, u, 0.0, cfg.period);
        let x2 = euler_step(&H11, &x1, 0.0, 0.0, cfg.period);
        // x1[n+2] is the only output u[n] can place on its own
        assert!((x2.x1 - future[1]).abs() < 1e-6, "err {}", x2.x1 - future[1]);
    }

    #[test]
    fn short_window_rejected() {
        let err = mpc_control(&PlantState::ZERO, &[0.0; 5], &H11, &MpcConfig::default()).unwrap_err();
        assert_eq!(err, MpcError::ShortReference { got: 5, needed: 11 });
    }

    #[test]
    fn ill_conditioned_reported() {
        // Euler at T = 0.05 is unstable for this axis, so the prediction
        // matrix grows geometrically along the horizon
        let cfg = MpcConfig { horizon: 40, input_weight: 1e-30, period: 0.05, ..Default::default() };
        assert!(matches!(MpcController::new(&H11, &cfg), Err(MpcError::IllConditioned { .. })));
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(MpcConfig { horizon: 0, ..Default::default() }.validate().is_err());
        assert!(MpcConfig { input_weight: 0.0, ..Default::default() }.validate().is_err());
    }

    proptest! {
        #[test]
        fn weight_scaling_leaves_input_unchanged(
            scale in 1e-3..1e3f64,
            x1 in -20.0..20.0f64,
            x2 in -200.0..200.0f64,
            r in prop::collection::vec(-30.0..30.0f64, 11),
        ) {
            let cfg = MpcConfig::default();
            let scaled = MpcConfig { state_weight: cfg.state_weight * scale, input_weight: cfg.input_weight * scale, ..cfg };
            let s = PlantState::new(x1, x2);
            let a = mpc_control(&s, &r, &H11, &cfg).unwrap();
            let b = mpc_control(&s, &r, &H11, &scaled).unwrap();
            prop_assert!((a - b).abs() <= 1e-8 * (1.0 + a.abs()), "a={} b={}", a, b);
        }

        #[test]
        fn deterministic(x1 in -20.0..20.0f64, r in -30.0..30.0f64) {
            let s = PlantState::new(x1, 0.0);
            let a = mpc_control(&s, &[r; 11], &H11, &MpcConfig::default()).unwrap();
            let b = mpc_control(&s, &[r; 11], &H11, &MpcConfig::default()).unwrap();
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
