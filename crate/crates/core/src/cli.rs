//! Command-line front end: `identify`, `simulate`, `compare`, `version`.
//!
//! Run configurations are flat TOML files ([`RunConfig`]). Every run writes
//! its effective configuration (defaults and overrides applied) next to the
//! results, and that file re-runs to identical outputs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::{
    compare, compute_metrics, run_scenario, Axis, ControllerSpec, HarnessError, MetricsOptions, Reference,
    ScenarioConfig,
};
use crate::model::{DisturbanceSpec, PlantParams};
use crate::mpc::MpcConfig;
use crate::sliding::{FtsmGains, TerminalRate, DEFAULT_TERMINAL_LIMIT};
use crate::sysid::{identify, nrmse, FitOptions, IoDataset, NrmseForm, SysidError};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

impl From<SysidError> for CliError {
    fn from(e: SysidError) -> Self {
        match e {
            SysidError::Io(e) => CliError::Io(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Diverged { .. } | HarnessError::Mpc(crate::mpc::MpcError::IllConditioned { .. }) => {
                CliError::Numerical(e.to_string())
            }
            HarnessError::Io(e) => CliError::Io(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "mirror-ftsm", version, about = "FTSM pointing-head simulation, identification and benchmarking")]
pub struct Cli {
    /// Override the configured random seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (created if absent).
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Allow overwriting existing output files.
    #[arg(long, global = true)]
    pub force: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit (b0, a1, a2) to a `t,u,y` CSV record.
    Identify {
        data: PathBuf,
        /// Initial guess `b0,a1,a2`.
        #[arg(long, value_delimiter = ',', default_values_t = [1000.0, 10.0, 1000.0])]
        guess: Vec<f64>,
        #[arg(long, default_value_t = 200)]
        max_iterations: usize,
        #[arg(long, value_enum, default_value_t = NrmseArg::Standard)]
        nrmse: NrmseArg,
    },
    /// Run the configured scenario for each axis and controller.
    Simulate {
        config: PathBuf,
        /// Restrict to these controllers.
        #[arg(long, value_enum, value_delimiter = ',')]
        controller: Vec<ControllerKind>,
    },
    /// Run all configured controllers on the same scenario and rank them.
    Compare { config: PathBuf },
    /// Print the version.
    Version,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NrmseArg {
    Standard,
    RmsOverDeviation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    Ftsm,
    Tsm,
    Mpc,
}

impl ControllerKind {
    fn name(self) -> &'static str {
        match self {
            ControllerKind::Ftsm => "ftsm",
            ControllerKind::Tsm => "tsm",
            ControllerKind::Mpc => "mpc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AxisSelect {
    Elevation,
    Azimuth,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceKind {
    Step,
    Sinusoid,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DisturbanceKind {
    None,
    Constant,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminalKind {
    Exact,
    Linearized,
}

/// Flat run configuration. Unset keys take the defaults below (10 deg step,
/// both axes, FTSM with K=10, alpha=1, beta=2, q1/p1=7/9, Phi=70, T=0.01 s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub axis: AxisSelect,
    pub controllers: Vec<ControllerKind>,
    pub reference: ReferenceKind,
    pub amplitude: f64,
    pub start: f64,
    pub frequency: f64,
    /// Single-column CSV (header `r`) for `reference = "custom"`, relative to
    /// the config file.
    pub reference_file: String,
    pub disturbance: DisturbanceKind,
    pub disturbance_bound: f64,
    pub duration: f64,
    pub sample_period: f64,
    pub seed: u64,
    pub initial_angle: f64,
    pub initial_rate: f64,
    pub alpha: f64,
    pub beta: f64,
    pub q1: u32,
    pub p1: u32,
    pub k: f64,
    pub phi: f64,
    pub terminal: TerminalKind,
    pub terminal_limit: f64,
    pub mpc_horizon: usize,
    pub mpc_state_weight: f64,
    pub mpc_input_weight: f64,
    pub steady_start: f64,
    pub settling_band: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let g = FtsmGains::default();
        let m = MpcConfig::default();
        RunConfig {
            name: "run".into(),
            axis: AxisSelect::Both,
            controllers: vec![ControllerKind::Ftsm],
            reference: ReferenceKind::Step,
            amplitude: 10.0,
            start: 0.0,
            frequency: 1.0,
            reference_file: String::new(),
            disturbance: DisturbanceKind::Uniform,
            disturbance_bound: 0.1,
            duration: 3.0,
            sample_period: g.period,
            seed: 1,
            initial_angle: 0.0,
            initial_rate: 0.0,
            alpha: g.alpha,
            beta: g.beta,
            q1: g.q1,
            p1: g.p1,
            k: g.k,
            phi: g.phi,
            terminal: TerminalKind::Exact,
            terminal_limit: DEFAULT_TERMINAL_LIMIT,
            mpc_horizon: m.horizon,
            mpc_state_weight: m.state_weight,
            mpc_input_weight: m.input_weight,
            steady_start: 0.5,
            settling_band: 0.02,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        if cfg.reference == ReferenceKind::Custom && !cfg.reference_file.is_empty() {
            let p = Path::new(&cfg.reference_file);
            if p.is_relative() {
                let joined = path.parent().map_or_else(|| p.to_path_buf(), |dir| dir.join(p));
                let resolved = std::path::absolute(&joined).map_err(|e| io_err(&joined, e))?;
                cfg.reference_file = resolved.to_string_lossy().into_owned();
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }

    pub fn axes(&self) -> Vec<Axis> {
        match self.axis {
            AxisSelect::Elevation => vec![Axis::Elevation],
            AxisSelect::Azimuth => vec![Axis::Azimuth],
            AxisSelect::Both => Axis::BOTH.to_vec(),
        }
    }

    pub fn gains(&self) -> FtsmGains {
        FtsmGains {
            alpha: self.alpha,
            beta: self.beta,
            q1: self.q1,
            p1: self.p1,
            k: self.k,
            phi: self.phi,
            period: self.sample_period,
            terminal: match self.terminal {
                TerminalKind::Exact => TerminalRate::Exact,
                TerminalKind::Linearized => TerminalRate::Linearized { limit: self.terminal_limit },
            },
        }
    }

    pub fn controller(&self, kind: ControllerKind) -> ControllerSpec {
        match kind {
            ControllerKind::Ftsm => ControllerSpec::Ftsm(self.gains()),
            ControllerKind::Tsm => ControllerSpec::Tsm(self.gains()),
            ControllerKind::Mpc => ControllerSpec::Mpc(MpcConfig {
                horizon: self.mpc_horizon,
                state_weight: self.mpc_state_weight,
                input_weight: self.mpc_input_weight,
                period: self.sample_period,
            }),
        }
    }

    fn reference_signal(&self) -> Result<Reference, CliError> {
        Ok(match self.reference {
            ReferenceKind::Step => Reference::Step { amplitude: self.amplitude, start: self.start },
            ReferenceKind::Sinusoid => Reference::Sinusoid { amplitude: self.amplitude, frequency: self.frequency },
            ReferenceKind::Custom => {
                if self.reference_file.is_empty() {
                    return Err(CliError::Usage("reference = \"custom\" needs reference_file".into()));
                }
                Reference::Custom { samples: read_reference_series(Path::new(&self.reference_file))? }
            }
        })
    }

    fn disturbance_spec(&self) -> DisturbanceSpec {
        match self.disturbance {
            DisturbanceKind::None => DisturbanceSpec::None,
            DisturbanceKind::Constant => DisturbanceSpec::Constant { value: self.disturbance_bound },
            DisturbanceKind::Uniform => DisturbanceSpec::UniformRandom { bound: self.disturbance_bound },
        }
    }

    pub fn scenario(&self, axis: Axis, kind: ControllerKind) -> Result<ScenarioConfig, CliError> {
        let mut s = ScenarioConfig::new(
            format!("{}_{}_{}", self.name, axis.name(), kind.name()),
            axis.params(),
            self.controller(kind),
            self.reference_signal()?,
        )
        .with_disturbance(self.disturbance_spec())
        .with_duration(self.duration)
        .with_seed(self.seed);
        s.initial = crate::model::PlantState::new(self.initial_angle, self.initial_rate);
        s.validate()?;
        Ok(s)
    }

    fn metrics_options(&self, kind: ControllerKind) -> MetricsOptions {
        MetricsOptions {
            band_frac: self.settling_band,
            steady_start: self.steady_start,
            band_radius: self.controller(kind).monitor_gains().default_band_radius(),
        }
    }
}

fn read_reference_series(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("r") {
        return Err(CliError::Usage(format!("{}: row 1: expected header `r`", path.display())));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("{}: row {}: not a number: `{l}`", path.display(), i + 2)))
        })
        .collect()
}

/// Output files of one command, checked for collisions before anything is written.
struct OutputSet {
    dir: PathBuf,
    force: bool,
}

impl OutputSet {
    fn new(dir: &Path, force: bool, names: &[String]) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        if !force {
            if let Some(existing) = names.iter().map(|n| dir.join(n)).find(|p| p.exists()) {
                return Err(CliError::Io(format!("{} already exists (use --force to overwrite)", existing.display())));
            }
        }
        Ok(OutputSet { dir: dir.to_path_buf(), force })
    }

    fn write(&self, name: &str, f: impl FnOnce(&mut fs::File) -> std::io::Result<()>) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        if path.exists() && !self.force {
            return Err(CliError::Io(format!("{} already exists (use --force to overwrite)", path.display())));
        }
        let mut file = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
        f(&mut file).map_err(|e| io_err(&path, e))?;
        Ok(path)
    }
}

#[derive(Debug, Serialize)]
struct FitArtifact {
    b0: f64,
    a1: f64,
    a2: f64,
    nrmse: f64,
    nrmse_form: &'static str,
    iterations: usize,
    converged: bool,
    residual_norm: f64,
}

/// Runs a parsed command, writing human-readable progress to `console`.
pub fn run<W: Write>(cli: &Cli, console: &mut W) -> Result<(), CliError> {
    match &cli.command {
        Command::Version => {
            writeln!(console, "mirror-ftsm {}", env!("CARGO_PKG_VERSION")).ok();
            Ok(())
        }
        Command::Identify { data, guess, max_iterations, nrmse: form } => {
            cmd_identify(cli, data, guess, *max_iterations, *form, console)
        }
        Command::Simulate { config, controller } => cmd_simulate(cli, config, controller, console),
        Command::Compare { config } => cmd_compare(cli, config, console),
    }
}

fn cmd_identify<W: Write>(
    cli: &Cli,
    data_path: &Path,
    guess: &[f64],
    max_iterations: usize,
    form: NrmseArg,
    console: &mut W,
) -> Result<(), CliError> {
    let file = fs::File::open(data_path).map_err(|e| io_err(data_path, e))?;
    let data = IoDataset::read_csv(file).map_err(|e| match e {
        SysidError::Io(e) => io_err(data_path, e),
        other => CliError::Usage(format!("{}: {other}", data_path.display())),
    })?;
    let [b0, a1, a2] = <[f64; 3]>::try_from(guess)
        .map_err(|_| CliError::Usage("--guess needs exactly three values b0,a1,a2".into()))?;
    let guess = PlantParams::new(b0, a1, a2).map_err(|e| CliError::Usage(e.to_string()))?;
    let outputs = OutputSet::new(&cli.out, cli.force, &["fit.toml".to_string()])?;

    let options = FitOptions { max_iterations, ..FitOptions::default() };
    let fit = identify(&data, &guess, &options)?;
    let (form, form_name) = match form {
        NrmseArg::Standard => (NrmseForm::Standard, "standard"),
        NrmseArg::RmsOverDeviation => (NrmseForm::RmsOverDeviation, "rms-over-deviation"),
    };
    let predicted = crate::model::transfer_fn_response(&fit.params, &data.input, data.period);
    let fit_value = nrmse(&data.output, &predicted, form)?;
    let artifact = FitArtifact {
        b0: fit.params.b0,
        a1: fit.params.a1,
        a2: fit.params.a2,
        nrmse: fit_value,
        nrmse_form: form_name,
        iterations: fit.iterations,
        converged: fit.converged,
        residual_norm: fit.residual_norm,
    };
    let text = toml::to_string(&artifact).expect("fit artifact serializes");
    let path = outputs.write("fit.toml", |f| f.write_all(text.as_bytes()))?;
    writeln!(
        console,
        "b0={:.6} a1={:.6} a2={:.6} nrmse={:.6} iterations={} converged={}\nwrote {}",
        fit.params.b0,
        fit.params.a1,
        fit.params.a2,
        fit_value,
        fit.iterations,
        fit.converged,
        path.display()
    )
    .ok();
    if fit.converged {
        Ok(())
    } else {
        Err(CliError::Numerical(format!("identification did not converge in {} iterations", fit.iterations)))
    }
}

fn effective_config(cli: &Cli, path: &Path) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn cmd_simulate<W: Write>(
    cli: &Cli,
    config_path: &Path,
    only: &[ControllerKind],
    console: &mut W,
) -> Result<(), CliError> {
    let mut cfg = effective_config(cli, config_path)?;
    if !only.is_empty() {
        cfg.controllers = only.to_vec();
    }
    if cfg.controllers.is_empty() {
        return Err(CliError::Usage("no controllers configured".into()));
    }
    let mut runs = Vec::new();
    for axis in cfg.axes() {
        for &kind in &cfg.controllers {
            runs.push((kind, cfg.scenario(axis, kind)?));
        }
    }
    let mut names: Vec<String> = runs.iter().map(|(_, s)| format!("trace_{}.csv", s.label)).collect();
    names.extend(["metrics.csv".to_string(), "effective_config.toml".to_string()]);
    let outputs = OutputSet::new(&cli.out, cli.force, &names)?;
    outputs.write("effective_config.toml", |f| f.write_all(cfg.to_toml().as_bytes()))?;

    let mut rows =
        vec!["label,controller,status,ise,settling_time,max_abs_sigma2_steady,sarpturk_violations".to_string()];
    let mut failure = None;
    for (kind, scenario) in &runs {
        match run_scenario(scenario) {
            Ok(trace) => {
                outputs.write(&format!("trace_{}.csv", scenario.label), |f| trace.write_csv(f))?;
                let m = compute_metrics(&trace, &cfg.metrics_options(*kind));
                writeln!(
                    console,
                    "{}: ISE={:.6} settling={} max|s2|(t>={})={:.4} reach-violations={}",
                    scenario.label,
                    m.ise,
                    m.settling_time,
                    cfg.steady_start,
                    m.max_abs_sigma2_steady,
                    m.sarpturk_violations
                )
                .ok();
                rows.push(format!(
                    "{},{},ok,{},{},{},{}",
                    scenario.label,
                    scenario.controller.name(),
                    crate::sysid::fmt17(m.ise),
                    m.settling_time.seconds().map(crate::sysid::fmt17).unwrap_or_else(|| "not-settled".into()),
                    crate::sysid::fmt17(m.max_abs_sigma2_steady),
                    m.sarpturk_violations
                ));
            }
            Err(HarnessError::Diverged { step, last }) => {
                let msg = format!("{}: diverged at step {step} (last finite record: {last:?})", scenario.label);
                writeln!(console, "{msg}").ok();
                rows.push(format!("{},{},diverged@{step},,,,", scenario.label, scenario.controller.name()));
                failure.get_or_insert(CliError::Numerical(msg));
            }
            Err(e) => return Err(e.into()),
        }
    }
    let mut table = rows.join("\n");
    table.push('\n');
    outputs.write("metrics.csv", |f| f.write_all(table.as_bytes()))?;
    failure.map_or(Ok(()), Err)
}

fn cmd_compare<W: Write>(cli: &Cli, config_path: &Path, console: &mut W) -> Result<(), CliError> {
    let cfg = effective_config(cli, config_path)?;
    if cfg.controllers.len() < 2 {
        return Err(CliError::Usage("compare needs at least two controllers".into()));
    }
    let axes = cfg.axes();
    let mut names = vec!["effective_config.toml".to_string()];
    for axis in &axes {
        names.push(format!("compare_{}.csv", axis.name()));
        names.push(format!("compare_{}.txt", axis.name()));
    }
    let outputs = OutputSet::new(&cli.out, cli.force, &names)?;
    outputs.write("effective_config.toml", |f| f.write_all(cfg.to_toml().as_bytes()))?;
    for axis in axes {
        let scenarios = cfg.controllers.iter().map(|&k| cfg.scenario(axis, k)).collect::<Result<Vec<_>, _>>()?;
        let report = compare(&scenarios)?;
        let text = report.to_text();
        writeln!(console, "{} ({})\n{}", cfg.name, axis.name(), text).ok();
        outputs.write(&format!("compare_{}.csv", axis.name()), |f| report.write_csv(f))?;
        outputs.write(&format!("compare_{}.txt", axis.name()), |f| f.write_all(text.as_bytes()))?;
    }
    Ok(())
}
