use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{ControllerSpec, HarnessError, ScenarioConfig};
use crate::model::{euler_step, PlantState};
use crate::mpc::MpcController;
use crate::sliding::{compute_surfaces, ftsm_control, tsm_control};
use crate::sysid::fmt17;

pub const TRACE_HEADER: [&str; 8] = ["t", "r", "x1", "x2", "u", "sigma1", "sigma2", "d"];

/// Signals at sample `n`. `u` and `d` act over `[nT, (n+1)T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: f64,
    pub r: f64,
    pub x1: f64,
    pub x2: f64,
    pub u: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub d: f64,
}

impl TraceRecord {
    pub fn error(&self) -> f64 {
        self.x1 - self.r
    }

    fn is_finite(&self) -> bool {
        [self.x1, self.x2, self.u, self.sigma1, self.sigma2].iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub period: f64,
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn sigma2(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.sigma2).collect()
    }

    pub fn errors(&self) -> Vec<f64> {
        self.records.iter().map(TraceRecord::error).collect()
    }

    /// CSV with header `t,r,x1,x2,u,sigma1,sigma2,d`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| std::io::Error::other(e);
        w.write_record(TRACE_HEADER).map_err(io)?;
        for r in &self.records {
            w.write_record([r.t, r.r, r.x1, r.x2, r.u, r.sigma1, r.sigma2, r.d].map(fmt17)).map_err(io)?;
        }
        w.flush()
    }
}

enum Law {
    Ftsm,
    Tsm,
    Mpc(MpcController),
}

/// Runs the closed loop for `duration / period` steps and records
/// `duration / period + 1` samples.
pub fn run_scenario(config: &ScenarioConfig) -> Result<Trace, HarnessError> {
    config.validate()?;
    let n_steps = config.n_steps()?;
    let t = config.period;
    let params = &config.params;
    let monitor = config.controller.monitor_gains();
    let law = match &config.controller {
        ControllerSpec::Ftsm(_) => Law::Ftsm,
        ControllerSpec::Tsm(_) => Law::Tsm,
        ControllerSpec::Mpc(c) => Law::Mpc(MpcController::new(params, c)?),
    };
    let mpc_len = match &config.controller {
        ControllerSpec::Mpc(c) => c.horizon + 1,
        _ => 0,
    };

    let mut disturbance = config.disturbance.source(config.seed);
    let mut state = config.initial;
    let mut records: Vec<TraceRecord> = Vec::with_capacity(n_steps + 1);
    let mut future = Vec::with_capacity(mpc_len);

    for n in 0..=n_steps {
        let window = config.reference.window(n, t);
        let surface = compute_surfaces(&state, &window, &monitor);
        let u = match &law {
            Law::Ftsm => ftsm_control(&state, &window, params, &monitor, None),
            Law::Tsm => tsm_control(&state, &window, params, &monitor),
            Law::Mpc(ctrl) => {
                future.clear();
                future.extend((1..=mpc_len).map(|i| config.reference.sample(n + i, t)));
                ctrl.control(&state, &future)?
            }
        };
        let d = disturbance.next().unwrap_or(0.0);
        let record = TraceRecord {
            t: n as f64 * t,
            r: window.current,
            x1: state.x1,
            x2: state.x2,
            u,
            sigma1: surface.sigma1,
            sigma2: surface.sigma2,
            d,
        };
        if !record.is_finite() {
            return Err(HarnessError::Diverged { step: n, last: records.last().copied() });
        }
        records.push(record);
        if n < n_steps {
            state = euler_step(params, &state, u, d, t);
        }
    }
    Ok(Trace { period: t, records })
}

impl From<&TraceRecord> for PlantState {
    fn from(r: &TraceRecord) -> Self {
        PlantState::new(r.x1, r.x2)
    }
}
