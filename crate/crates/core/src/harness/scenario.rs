use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::model::{DisturbanceSpec, PlantParams, PlantState};
use crate::mpc::MpcConfig;
use crate::sliding::{FtsmGains, ReferenceWindow};

/// Pointing-head axis with its identified parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    Elevation,
    Azimuth,
}

impl Axis {
    pub const BOTH: [Axis; 2] = [Axis::Elevation, Axis::Azimuth];

    pub fn params(self) -> PlantParams {
        match self {
            Axis::Elevation => PlantParams::ELEVATION,
            Axis::Azimuth => PlantParams::AZIMUTH,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::Elevation => "elevation",
            Axis::Azimuth => "azimuth",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Reference {
    /// `amplitude` (deg) from `start` (s) on, zero before.
    Step { amplitude: f64, start: f64 },
    /// `amplitude sin(2 pi frequency t)`.
    Sinusoid { amplitude: f64, frequency: f64 },
    /// One sample per step; extended past its end by repeating the last
    /// first difference.
    Custom { samples: Vec<f64> },
}

impl Reference {
    pub fn step(amplitude: f64) -> Self {
        Reference::Step { amplitude, start: 0.0 }
    }

    pub fn sinusoid(amplitude: f64, frequency: f64) -> Self {
        Reference::Sinusoid { amplitude, frequency }
    }

    /// `r[n]` on the grid `t = n T`.
    pub fn sample(&self, n: usize, period: f64) -> f64 {
        match self {
            Reference::Step { amplitude, start } => {
                // first index with n T >= start, robust to rounding of start / T
                let first = (start / period - 1e-9).ceil().max(0.0) as usize;
                if n >= first {
                    *amplitude
                } else {
                    0.0
                }
            }
            Reference::Sinusoid { amplitude, frequency } => {
                amplitude * (2.0 * std::f64::consts::PI * frequency * n as f64 * period).sin()
            }
            Reference::Custom { samples } => match samples.len() {
                0 => 0.0,
                len if n < len => samples[n],
                1 => samples[0],
                len => {
                    let slope = samples[len - 1] - samples[len - 2];
                    samples[len - 1] + slope * (n - (len - 1)) as f64
                }
            },
        }
    }

    pub fn window(&self, n: usize, period: f64) -> ReferenceWindow {
        ReferenceWindow::new(self.sample(n, period), self.sample(n + 1, period), self.sample(n + 2, period))
    }

    fn validate(&self) -> Result<(), HarnessError> {
        let ok = match self {
            Reference::Step { amplitude, start } => amplitude.is_finite() && start.is_finite() && *start >= 0.0,
            Reference::Sinusoid { amplitude, frequency } => amplitude.is_finite() && frequency.is_finite(),
            Reference::Custom { samples } => !samples.is_empty() && samples.iter().all(|v| v.is_finite()),
        };
        if ok {
            Ok(())
        } else {
            Err(HarnessError::InvalidScenario(format!("invalid reference {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ControllerSpec {
    Ftsm(FtsmGains),
    Tsm(FtsmGains),
    Mpc(MpcConfig),
}

impl ControllerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ControllerSpec::Ftsm(_) => "FTSM",
            ControllerSpec::Tsm(_) => "TSM",
            ControllerSpec::Mpc(_) => "MPC",
        }
    }

    pub fn period(&self) -> f64 {
        match self {
            ControllerSpec::Ftsm(g) | ControllerSpec::Tsm(g) => g.period,
            ControllerSpec::Mpc(c) => c.period,
        }
    }

    /// Surface used to record `sigma1`/`sigma2` in traces. MPC has no surface
    /// of its own and is monitored with the default FTSM surface.
    pub fn monitor_gains(&self) -> FtsmGains {
        match self {
            ControllerSpec::Ftsm(g) => *g,
            ControllerSpec::Tsm(g) => g.tsm(),
            ControllerSpec::Mpc(c) => FtsmGains { period: c.period, ..FtsmGains::default() },
        }
    }
}

/// One closed-loop run on one axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub label: String,
    pub params: PlantParams,
    pub controller: ControllerSpec,
    pub reference: Reference,
    pub disturbance: DisturbanceSpec,
    /// Seconds.
    pub duration: f64,
    /// Sampling period (s); must match the controller's.
    pub period: f64,
    pub initial: PlantState,
    pub seed: u64,
}

impl ScenarioConfig {
    /// Zero initial state, no disturbance, 3 s at the controller's period.
    pub fn new(
        label: impl Into<String>,
        params: PlantParams,
        controller: ControllerSpec,
        reference: Reference,
    ) -> Self {
        ScenarioConfig {
            label: label.into(),
            params,
            period: controller.period(),
            controller,
            reference,
            disturbance: DisturbanceSpec::None,
            duration: 3.0,
            initial: PlantState::ZERO,
            seed: 0,
        }
    }

    pub fn with_disturbance(mut self, disturbance: DisturbanceSpec) -> Self {
        self.disturbance = disturbance;
        self
    }

    pub fn with_duration(mut self, duration: f64) -> Self {
        self.duration = duration;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Number of applied control steps, `duration / period`.
    pub fn n_steps(&self) -> Result<usize, HarnessError> {
        let ratio = self.duration / self.period;
        let n = ratio.round();
        if !(ratio.is_finite() && n >= 1.0 && (ratio - n).abs() <= 1e-9 * n.max(1.0)) {
            return Err(HarnessError::InvalidScenario(format!(
                "duration {} is not a positive integer multiple of period {}",
                self.duration, self.period
            )));
        }
        Ok(n as usize)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.params.validate()?;
        self.disturbance.validate()?;
        self.reference.validate()?;
        if !(self.period.is_finite() && self.period > 0.0) {
            return Err(HarnessError::InvalidScenario(format!("invalid period {}", self.period)));
        }
        if self.controller.period() != self.period {
            return Err(HarnessError::InvalidScenario(format!(
                "controller period {} differs from scenario period {}",
                self.controller.period(),
                self.period
            )));
        }
        if !self.initial.is_finite() {
            return Err(HarnessError::InvalidScenario("non-finite initial state".into()));
        }
        match &self.controller {
            ControllerSpec::Ftsm(g) => g.validate()?,
            ControllerSpec::Tsm(g) => g.validate_terminal()?,
            ControllerSpec::Mpc(c) => c.validate()?,
        }
        self.n_steps()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_starts_on_grid() {
        let r = Reference::Step { amplitude: 10.0, start: 0.03 };
        let s: Vec<f64> = (0..5).map(|n| r.sample(n, 0.01)).collect();
        assert_eq!(s, vec![0.0, 0.0, 0.0, 10.0, 10.0]);
        assert_eq!(Reference::step(10.0).sample(0, 0.01), 10.0);
    }

    #[test]
    fn custom_reference_extends_linearly() {
        let r = Reference::Custom { samples: vec![0.0, 1.0, 3.0] };
        let s: Vec<f64> = (0..6).map(|n| r.sample(n, 0.01)).collect();
        assert_eq!(s, vec![0.0, 1.0, 3.0, 5.0, 7.0, 9.0]);
        let w = r.window(2, 0.01);
        assert_eq!(w.accel(0.01), 0.0);
    }

    #[test]
    fn step_count_must_be_integral() {
        let base = ScenarioConfig::new(
            "x",
            PlantParams::ELEVATION,
            ControllerSpec::Ftsm(FtsmGains::default()),
            Reference::step(1.0),
        );
        assert_eq!(base.clone().with_duration(3.0).n_steps().unwrap(), 300);
        assert!(base.clone().with_duration(0.015).n_steps().is_err());
        assert!(base.with_duration(0.0).validate().is_err());
    }

    #[test]
    fn period_mismatch_rejected() {
        let mut cfg = ScenarioConfig::new(
            "x",
            PlantParams::ELEVATION,
            ControllerSpec::Mpc(MpcConfig::default()),
            Reference::step(1.0),
        );
        cfg.period = 0.001;
        cfg.duration = 1.0;
        assert!(cfg.validate().is_err());
    }
}
