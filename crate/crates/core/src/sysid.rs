//! Simulation-error identification of `b0 / (s^2 + a1 s + a2)`.
//!
//! Parameters are fitted in log space (so they stay positive) by a
//! Levenberg-Marquardt iteration with a central-difference Jacobian. The
//! model prediction is the Euler simulation of the candidate on the recorded
//! input, i.e. the same discretization the controller is designed against.

use std::io::{Read, Write};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{transfer_fn_response, PlantParams};

pub const MIN_SAMPLES: usize = 10;

#[derive(Debug, Error)]
pub enum SysidError {
    #[error("dataset needs at least {MIN_SAMPLES} samples, got {0}")]
    TooShort(usize),
    #[error("input and output lengths differ ({input} vs {output})")]
    LengthMismatch { input: usize, output: usize },
    #[error("sampling period must be positive and finite, got {0}")]
    InvalidPeriod(f64),
    #[error("initial guess must be strictly positive and finite: {0:?}")]
    InvalidGuess(PlantParams),
    #[error("NRMSE undefined: actual series is constant")]
    ConstantActual,
    #[error("NRMSE needs equal-length non-empty series ({actual} vs {predicted})")]
    SeriesMismatch { actual: usize, predicted: usize },
    #[error("row {row}: {message}")]
    Schema { row: usize, message: String },
    #[error("non-uniform sampling at row {row}: t={t}, expected {expected}")]
    NonUniform { row: usize, t: f64, expected: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Sampled input/output record of one axis.
#[derive(Debug, Clone, PartialEq)]
pub struct IoDataset {
    pub input: Vec<f64>,
    pub output: Vec<f64>,
    pub period: f64,
}

impl IoDataset {
    pub fn new(input: Vec<f64>, output: Vec<f64>, period: f64) -> Result<Self, SysidError> {
        let d = IoDataset { input, output, period };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), SysidError> {
        if self.input.len() != self.output.len() {
            return Err(SysidError::LengthMismatch { input: self.input.len(), output: self.output.len() });
        }
        if self.input.len() < MIN_SAMPLES {
            return Err(SysidError::TooShort(self.input.len()));
        }
        if !(self.period.is_finite() && self.period > 0.0) {
            return Err(SysidError::InvalidPeriod(self.period));
        }
        Ok(())
    }

    /// Noise-free dataset produced by simulating `params` on `input`.
    pub fn simulate(params: &PlantParams, input: Vec<f64>, period: f64) -> Result<Self, SysidError> {
        let output = transfer_fn_response(params, &input, period);
        IoDataset::new(input, output, period)
    }

    /// Reads `t,u,y` CSV. Sampling must be uniform to within `1e-9 T`.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, SysidError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| schema(1, e))?.clone();
        if headers.iter().collect::<Vec<_>>() != ["t", "u", "y"] {
            return Err(SysidError::Schema {
                row: 1,
                message: format!("expected header `t,u,y`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
            });
        }
        let (mut t, mut u, mut y) = (Vec::new(), Vec::new(), Vec::new());
        for (i, rec) in rdr.records().enumerate() {
            // header is row 1
            let row = i + 2;
            let rec = rec.map_err(|e| schema(row, e))?;
            if rec.len() != 3 {
                return Err(SysidError::Schema { row, message: format!("expected 3 fields, found {}", rec.len()) });
            }
            let field = |k: usize, name: &str| -> Result<f64, SysidError> {
                let v: f64 = rec[k].parse().map_err(|_| SysidError::Schema {
                    row,
                    message: format!("{name} is not a number: `{}`", &rec[k]),
                })?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(SysidError::Schema { row, message: format!("{name} is not finite") })
                }
            };
            t.push(field(0, "t")?);
            u.push(field(1, "u")?);
            y.push(field(2, "y")?);
        }
        if t.len() < MIN_SAMPLES {
            return Err(SysidError::TooShort(t.len()));
        }
        let period = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
        if period.is_nan() || period <= 0.0 {
            return Err(SysidError::InvalidPeriod(period));
        }
        for (i, &ti) in t.iter().enumerate() {
            let expected = t[0] + i as f64 * period;
            if (ti - expected).abs() > 1e-9 * period {
                return Err(SysidError::NonUniform { row: i + 2, t: ti, expected });
            }
        }
        IoDataset::new(u, y, period)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), SysidError> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| SysidError::Io(std::io::Error::other(e));
        w.write_record(["t", "u", "y"]).map_err(io)?;
        for (i, (u, y)) in self.input.iter().zip(&self.output).enumerate() {
            let t = i as f64 * self.period;
            w.write_record([fmt17(t), fmt17(*u), fmt17(*y)]).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn schema(row: usize, e: csv::Error) -> SysidError {
    SysidError::Schema { row, message: e.to_string() }
}

/// Full-precision decimal rendering (17 significant digits).
pub fn fmt17(v: f64) -> String {
    format!("{:.16e}", v)
}

/// Excitation used for identification: a logarithmic chirp from 0.5 Hz to
/// 20 Hz over the record, plus a step of half amplitude held over the
/// middle of the record.
pub fn excitation_signal(n: usize, period: f64) -> Vec<f64> {
    let (f0, f1) = (0.5f64, 20.0f64);
    let duration = (n.max(2) - 1) as f64 * period;
    let k = (f1 / f0).ln() / duration;
    (0..n)
        .map(|i| {
            let t = i as f64 * period;
            let phase = 2.0 * std::f64::consts::PI * f0 * ((k * t).exp() - 1.0) / k;
            let step = if t >= 0.1 * duration && t < 0.6 * duration { 0.5 } else { 0.0 };
            phase.sin() + step
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Converged when an accepted step lowers the cost by less than this fraction.
    pub cost_tolerance: f64,
    /// Converged when the log-space gradient norm drops below this.
    pub gradient_tolerance: f64,
    pub initial_damping: f64,
    /// Relative finite-difference step in log space.
    pub fd_step: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 200,
            cost_tolerance: 1e-10,
            gradient_tolerance: 1e-8,
            initial_damping: 1e-3,
            fd_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: PlantParams,
    pub nrmse: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `||y - y_hat||` at `params`.
    pub residual_norm: f64,
    /// Residual norm after each accepted iterate, starting with the guess.
    pub residual_history: Vec<f64>,
}

struct Problem<'a> {
    data: &'a IoDataset,
}

impl Problem<'_> {
    fn params(theta: &Vector3<f64>) -> PlantParams {
        PlantParams::from_array([theta[0].exp(), theta[1].exp(), theta[2].exp()])
    }

    fn residuals(&self, theta: &Vector3<f64>) -> Option<Vec<f64>> {
        let pred = transfer_fn_response(&Self::params(theta), &self.data.input, self.data.period);
        let r: Vec<f64> = self.data.output.iter().zip(&pred).map(|(y, p)| y - p).collect();
        r.iter().all(|v| v.is_finite()).then_some(r)
    }

    /// Central-difference Jacobian of the residuals, column by column.
    fn jacobian(&self, theta: &Vector3<f64>, rel_step: f64) -> Option<Vec<[f64; 3]>> {
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(3);
        for j in 0..3 {
            let h = rel_step * theta[j].abs().max(1.0);
            let mut plus = *theta;
            let mut minus = *theta;
            plus[j] += h;
            minus[j] -= h;
            let rp = self.residuals(&plus)?;
            let rm = self.residuals(&minus)?;
            cols.push(rp.iter().zip(&rm).map(|(a, b)| (a - b) / (2.0 * h)).collect());
        }
        Some((0..cols[0].len()).map(|i| [cols[0][i], cols[1][i], cols[2][i]]).collect())
    }
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Fits `(b0, a1, a2)` to `data` starting from `guess`.
pub fn identify(data: &IoDataset, guess: &PlantParams, options: &FitOptions) -> Result<FitResult, SysidError> {
    data.validate()?;
    if guess.validate().is_err() {
        return Err(SysidError::InvalidGuess(*guess));
    }
    let problem = Problem { data };
    let mut theta = Vector3::new(guess.b0.ln(), guess.a1.ln(), guess.a2.ln());
    let mut residuals = problem.residuals(&theta).ok_or(SysidError::InvalidGuess(*guess))?;
    let mut cost = sum_sq(&residuals);
    let mut history = vec![cost.sqrt()];
    let mut lambda = options.initial_damping;
    let mut converged = cost == 0.0;
    let mut iterations = 0;

    'outer: while !converged && iterations < options.max_iterations {
        iterations += 1;
        let Some(jac) = problem.jacobian(&theta, options.fd_step) else {
            break;
        };
        // J^T J and J^T r, accumulated in sample order
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for (row, r) in jac.iter().zip(&residuals) {
            let g = Vector3::from(*row);
            jtj += g * g.transpose();
            jtr += g * *r;
        }
        if jtr.norm() < options.gradient_tolerance {
            converged = true;
            break;
        }
        loop {
            let mut damped = jtj;
            for k in 0..3 {
                damped[(k, k)] += lambda * jtj[(k, k)].max(f64::MIN_POSITIVE);
            }
            // residual r = y - y_hat, so J_r = -J_model and the step is -(...)^-1 J_r^T r
            let step = damped.cholesky().map(|c| -c.solve(&jtr));
            let trial = step.map(|s| theta + s);
            let accepted = trial.and_then(|th| problem.residuals(&th).map(|r| (th, r)));
            match accepted {
                Some((th, r)) if sum_sq(&r) < cost => {
                    let new_cost = sum_sq(&r);
                    let rel_drop = (cost - new_cost) / cost;
                    theta = th;
                    residuals = r;
                    cost = new_cost;
                    history.push(cost.sqrt());
                    lambda = (lambda / 10.0).max(1e-12);
                    if rel_drop < options.cost_tolerance || cost == 0.0 {
                        converged = true;
                    }
                    break;
                }
                _ => {
                    lambda *= 10.0;
                    if lambda > 1e16 {
                        break 'outer;
                    }
                }
            }
        }
    }

    let params = Problem::params(&theta);
    let predicted = transfer_fn_response(&params, &data.input, data.period);
    let fit = nrmse(&data.output, &predicted, NrmseForm::Standard)?;
    Ok(FitResult { params, nrmse: fit, iterations, converged, residual_norm: cost.sqrt(), residual_history: history })
}

/// Normalization of the NRMSE fit metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NrmseForm {
    /// `1 - ||y - y_hat|| / ||y - mean(y)||`.
    #[default]
    Standard,
    /// `1 - sqrt(sum (y - y_hat)^2 / N) / sqrt(sum (y - mean(y))^2)`: the
    /// residual is an RMS but the deviation is not divided by `N`, so the
    /// value depends on the sample count.
    RmsOverDeviation,
}

pub fn nrmse(actual: &[f64], predicted: &[f64], form: NrmseForm) -> Result<f64, SysidError> {
    if actual.is_empty() || actual.len() != predicted.len() {
        return Err(SysidError::SeriesMismatch { actual: actual.len(), predicted: predicted.len() });
    }
    let n = actual.len() as f64;
    let mean = actual.iter().sum::<f64>() / n;
    let dev: f64 = actual.iter().map(|y| (y - mean).powi(2)).sum();
    if dev == 0.0 {
        return Err(SysidError::ConstantActual);
    }
    let res: f64 = actual.iter().zip(predicted).map(|(y, p)| (y - p).powi(2)).sum();
    Ok(match form {
        NrmseForm::Standard => 1.0 - (res / dev).sqrt(),
        NrmseForm::RmsOverDeviation => 1.0 - (res / n).sqrt() / dev.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const T: f64 = 0.001;
    const N: usize = 4000;

    fn rel_err(a: &PlantParams, b: &PlantParams) -> f64 {
        a.as_array().iter().zip(b.as_array()).map(|(x, y)| ((x - y) / y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn nrmse_examples() {
        let y = [1.0, 3.0, 2.0, 5.0];
        assert_eq!(nrmse(&y, &y, NrmseForm::Standard).unwrap(), 1.0);
        assert_eq!(nrmse(&y, &[2.75; 4], NrmseForm::Standard).unwrap(), 0.0);
        assert!(matches!(nrmse(&[2.0; 4], &y, NrmseForm::Standard), Err(SysidError::ConstantActual)));
        assert!(nrmse(&y, &y[..3], NrmseForm::Standard).is_err());
        // residual rms = 1/sqrt(4) scaled: res = 4*0.25 = 1 -> rms 0.5 ; dev = 8.75
        let p = [1.5, 2.5, 2.5, 4.5];
        assert_relative_eq!(
            nrmse(&y, &p, NrmseForm::RmsOverDeviation).unwrap(),
            1.0 - 0.5 / 8.75f64.sqrt(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn round_trip_recovers_table_values() {
        for truth in [PlantParams::ELEVATION, PlantParams::AZIMUTH] {
            let data = IoDataset::simulate(&truth, excitation_signal(N, T), T).unwrap();
            let fit =
                identify(&data, &PlantParams::new(1000.0, 10.0, 1000.0).unwrap(), &FitOptions::default()).unwrap();
            assert!(rel_err(&fit.params, &truth) < 5e-3, "{:?}", fit);
            assert!(fit.nrmse >= 0.999);
            assert!(fit.converged);
            assert!(fit.residual_history.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn exact_guess_converges_immediately() {
        let truth = PlantParams::ELEVATION;
        let data = IoDataset::simulate(&truth, excitation_signal(N, T), T).unwrap();
        let fit = identify(&data, &truth, &FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.iterations <= 2);
        assert!(fit.residual_norm < 1e-9);
        assert!(fit.nrmse > 1.0 - 1e-12);
    }

    #[test]
    fn noisy_round_trip_within_ten_percent() {
        let truth = PlantParams::ELEVATION;
        let mut data = IoDataset::simulate(&truth, excitation_signal(N, T), T).unwrap();
        let (lo, hi) = data.output.iter().fold((f64::MAX, f64::MIN), |(l, h), v| (l.min(*v), h.max(*v)));
        let amp = 0.01 * (hi - lo);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for y in data.output.iter_mut() {
            *y += rng.random_range(-amp..=amp);
        }
        let fit = identify(&data, &PlantParams::new(1000.0, 10.0, 1000.0).unwrap(), &FitOptions::default()).unwrap();
        assert!(rel_err(&fit.params, &truth) < 0.1, "{:?}", fit.params);
    }

    #[test]
    fn max_iterations_reports_not_converged() {
        let truth = PlantParams::ELEVATION;
        let data = IoDataset::simulate(&truth, excitation_signal(N, T), T).unwrap();
        let opts = FitOptions { max_iterations: 1, ..Default::default() };
        let guess = PlantParams::new(1000.0, 10.0, 1000.0).unwrap();
        let fit = identify(&data, &guess, &opts).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.iterations, 1);
        assert!(fit.residual_norm <= fit.residual_history[0]);
    }

    #[test]
    fn invalid_inputs() {
        let guess = PlantParams::ELEVATION;
        assert!(matches!(IoDataset::new(vec![0.0; 5], vec![0.0; 5], T), Err(SysidError::TooShort(5))));
        assert!(IoDataset::new(vec![0.0; 20], vec![0.0; 19], T).is_err());
        assert!(IoDataset::new(vec![0.0; 20], vec![0.0; 20], 0.0).is_err());
        let data = IoDataset::simulate(&guess, excitation_signal(100, T), T).unwrap();
        let bad = PlantParams { b0: -1.0, ..guess };
        assert!(matches!(identify(&data, &bad, &FitOptions::default()), Err(SysidError::InvalidGuess(_))));
    }

    #[test]
    fn csv_round_trip_and_schema_errors() {
        let data = IoDataset::simulate(&PlantParams::AZIMUTH, excitation_signal(50, T), T).unwrap();
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let back = IoDataset::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.input, data.input);
        assert_eq!(back.output, data.output);
        assert_relative_eq!(back.period, T, max_relative = 1e-12);

        let text = String::from_utf8(buf).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines[5] = "0.004,1.0";
        let err = IoDataset::read_csv(lines.join("\n").as_bytes()).unwrap_err();
        assert!(matches!(err, SysidError::Schema { row: 6, .. }), "{err}");

        let err = IoDataset::read_csv("a,b,c\n1,2,3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, SysidError::Schema { row: 1, .. }));

        let mut skewed = String::from("t,u,y\n");
        for i in 0..12 {
            let t = if i == 4 { 0.0041 } else { i as f64 * 0.001 };
            skewed.push_str(&format!("{t},0,0\n"));
        }
        assert!(matches!(IoDataset::read_csv(skewed.as_bytes()), Err(SysidError::NonUniform { row: 6, .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn nrmse_bounded(y in prop::collection::vec(-10.0..10.0f64, 3..50), noise in prop::collection::vec(-1.0..1.0f64, 50)) {
            prop_assume!(y.iter().any(|v| (v - y[0]).abs() > 1e-6));
            let p: Vec<f64> = y.iter().zip(&noise).map(|(a, b)| a + b).collect();
            prop_assert!(nrmse(&y, &p, NrmseForm::Standard).unwrap() <= 1.0);
            prop_assert_eq!(nrmse(&y, &y, NrmseForm::Standard).unwrap(), 1.0);
        }

        #[test]
        fn identifiable_from_perturbed_guess(
            b0 in 500.0..5000.0f64,
            a2 in 500.0..5000.0f64,
            zeta in 0.2..0.9f64,
            f in prop::array::uniform3(-2.0..2.0f64),
        ) {
            // a1 = 2 zeta sqrt(a2) keeps a1^2 < 8 a2
            let truth = PlantParams::new(b0, 2.0 * zeta * a2.sqrt(), a2).unwrap();
            let data = IoDataset::simulate(&truth, excitation_signal(N, T), T).unwrap();
            let g = truth.as_array();
            let guess = PlantParams::from_array([g[0] * 2f64.powf(f[0]), g[1] * 2f64.powf(f[1]), g[2] * 2f64.powf(f[2])]);
            let fit = identify(&data, &guess, &FitOptions::default()).unwrap();
            prop_assert!(rel_err(&fit.params, &truth) < 0.01, "truth {:?} guess {:?} fit {:?}", truth, guess, fit.params);
        }
    }
}
