//! Command implementations behind the `netloss` binary.
//!
//! Every command returns a process exit code: 0 success (or a stable loop),
//! 2 configuration error, 3 infeasible or unstable, 4 inconclusive.

pub mod config;
pub mod gains;

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use netloss::format::sig9;
use netloss::model::LossChannel;
use netloss::sim::{self, InitialState, LoopSpec, SimConfig};
use netloss::stability::{self, StabilityCertificate, Verdict};
use netloss::synthesis::{self, DesignMethod};
use netloss::{bounds, performance, Error};

use config::{Axis, GridConfig, Problem, ProblemConfig};
use gains::{AnyController, GainsFile};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_INCONCLUSIVE: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Io(_) => EXIT_CONFIG,
            Self::Core(e) => match e {
                Error::Infeasible { .. } | Error::Unstable { .. } => EXIT_INFEASIBLE,
                Error::Boundary { .. } | Error::Numerical(_) | Error::UnboundedNorm { .. } => EXIT_INCONCLUSIVE,
                _ => EXIT_CONFIG,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Bounds,
    Design,
    Verify,
    Sweep,
    Simulate,
}

/// Command-line overrides of the config file.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub grid: Option<String>,
    pub axis: Option<Axis>,
    pub decoder: Option<String>,
    pub gains: Option<PathBuf>,
}

/// Loads the config, applies overrides and runs `cmd`. Diagnostics go to
/// `err`, results to `out`.
pub fn execute(cmd: Command, config_path: &Path, opts: &Options, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = ProblemConfig::load(config_path).and_then(|mut cfg| {
        if let Some(seed) = opts.seed {
            cfg.sim.seed = seed;
        }
        if let Some(name) = &opts.decoder {
            cfg.decoder = config::DecoderConfig::Name(name.clone());
        }
        if let Some(axis) = opts.axis {
            cfg.sweep.axis = Some(axis);
        }
        if let Some(grid) = &opts.grid {
            cfg.sweep.grid = Some(GridConfig::Range(grid.clone()));
        }
        let problem = cfg.build()?;
        if let Some(dir) = &opts.out {
            std::fs::create_dir_all(dir)?;
        }
        match cmd {
            Command::Bounds => cmd_bounds(&problem, opts, out),
            Command::Design => cmd_design(&problem, opts, out),
            Command::Verify => cmd_verify(&problem, opts, out),
            Command::Sweep => cmd_sweep(&problem, opts, out),
            Command::Simulate => cmd_simulate(&problem, opts, out),
        }
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn round9(x: f64) -> f64 {
    sig9(x).parse().unwrap_or(x)
}

fn write_file(dir: Option<&Path>, name: &str, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = dir {
        std::fs::write(dir.join(name), contents)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct BoundRow {
    name: String,
    value: Option<f64>,
    rigor: String,
    note: String,
}

/// Critical loss probabilities with rigor labels.
pub fn cmd_bounds(problem: &Problem, opts: &Options, out: &mut dyn Write) -> Result<i32, CliError> {
    let a = problem.plant.a();
    let s1 = problem.sensor.schedule.pattern();
    let s2 = problem.actuator.schedule.pattern();
    let mut rows = Vec::new();
    let mut push = |name: &str, b: &bounds::CriticalBound, note: String| {
        rows.push(BoundRow {
            name: name.into(),
            value: Some(b.value),
            rigor: format!("{:?}", b.rigor).to_lowercase(),
            note,
        })
    };
    push("state", &bounds::critical_alpha_state(a)?, "single-rate state feedback".into());
    push("alpha1", &bounds::critical_alpha_for_pattern(a, &s1)?, format!("s1 = {:?}", s1.entries()));
    push("alpha2", &bounds::critical_alpha_for_pattern(a, &s2)?, format!("s2 = {:?}", s2.entries()));
    let invertible = |m: &nalgebra::DMatrix<f64>| m.is_square() && netloss::linalg::rank(m) == m.nrows();
    if problem.plant.p2() > 1 {
        let b = bounds::critical_alpha_mimo(a, s1.period(), s1.transmissions().max(1), invertible(problem.plant.c()))?;
        push("alpha1_mimo", &b, "multi-sensor".into());
    }
    if problem.plant.m2() > 1 {
        let b = bounds::critical_alpha_mimo(a, s2.period(), s2.transmissions().max(1), invertible(problem.plant.b()))?;
        push("alpha2_mimo", &b, "multi-actuator".into());
    }
    if let Some(dec) = &problem.decoder {
        let count = s2.transmissions().max(1);
        match bounds::decoder_adjusted_bound(a, s2.period(), count, Some(dec), false, problem.config.allow_marginal_decoder) {
            Ok(b) => push("alpha2_decoder", &b, "with decoder".into()),
            Err(Error::DecoderRejected { rho, reason }) => rows.push(BoundRow {
                name: "alpha2_decoder".into(),
                value: None,
                rigor: "rejected".into(),
                note: format!("{reason} (rho = {})", sig9(rho)),
            }),
            Err(e) => return Err(e.into()),
        }
    }
    writeln!(out, "bound,value,rigor,note")?;
    for r in &rows {
        writeln!(out, "{},{},{},\"{}\"", r.name, r.value.map(sig9).unwrap_or_default(), r.rigor, r.note)?;
    }
    if !problem.diagnostics.unstable {
        writeln!(out, "# advisory: the plant is stable, so every loss probability below 1 is admissible")?;
    }
    if !problem.diagnostics.controllable || !problem.diagnostics.observable {
        writeln!(
            out,
            "# advisory: (A, B) controllable = {}, (A, C) observable = {}",
            problem.diagnostics.controllable, problem.diagnostics.observable
        )?;
    }
    let json: Vec<_> = rows
        .iter()
        .map(|r| json!({"name": r.name, "value": r.value.map(round9), "rigor": r.rigor, "note": r.note}))
        .collect();
    write_file(opts.out.as_deref(), "bounds.json", &serde_json::to_string_pretty(&json).expect("json"))?;
    Ok(EXIT_OK)
}

/// Closed loop of any controller form without performance channels.
fn closed_loop(problem: &Problem, controller: &AnyController, performance: bool) -> Result<netloss::JumpLinearSystem, CliError> {
    let dec = problem.decoder.as_ref();
    Ok(match controller {
        AnyController::Observer(c) => match dec {
            Some(d) => synthesis::attach_decoder(&problem.plant, c, d, &problem.sensor, &problem.actuator, performance)?,
            None => synthesis::close_loop(&problem.plant, c, &problem.sensor, &problem.actuator, None, performance)?,
        },
        AnyController::General(g) => {
            synthesis::close_loop_general(&problem.plant, g, &problem.sensor, &problem.actuator, dec, performance)?
        }
    })
}

fn certificate_json(cert: &StabilityCertificate, problem: &Problem) -> String {
    let v = json!({
        "verdict": cert.verdict,
        "stable": cert.stable,
        "rho": round9(cert.rho),
        "lyapunov_witness": cert.witnesses.is_some(),
        "alpha1": problem.sensor.loss.alpha(),
        "alpha2": problem.actuator.loss.alpha(),
    });
    serde_json::to_string_pretty(&v).expect("json")
}

fn verdict_code(cert: &StabilityCertificate) -> i32 {
    match cert.verdict {
        Verdict::Stable => EXIT_OK,
        Verdict::Unstable => EXIT_INFEASIBLE,
        Verdict::BoundaryInconclusive => EXIT_INCONCLUSIVE,
    }
}

fn report_certificate(
    cert: &StabilityCertificate,
    problem: &Problem,
    opts: &Options,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    writeln!(out, "verdict: {:?}", cert.verdict)?;
    writeln!(out, "rho: {}", sig9(cert.rho))?;
    writeln!(out, "lyapunov witness: {}", cert.witnesses.is_some())?;
    write_file(opts.out.as_deref(), "certificate.json", &certificate_json(cert, problem))?;
    Ok(verdict_code(cert))
}

fn design(problem: &Problem, method: DesignMethod) -> Result<synthesis::DesignReport, Error> {
    synthesis::design_controller(
        &problem.plant,
        &problem.sensor,
        &problem.actuator,
        problem.decoder.as_ref(),
        method,
    )
}

fn design_failure(e: Error, out: &mut dyn Write) -> Result<i32, CliError> {
    match e {
        Error::Infeasible { alpha, bound } => {
            writeln!(out, "infeasible: alpha = {} is not below the critical bound {}", sig9(alpha), sig9(bound))?;
            Ok(EXIT_INFEASIBLE)
        }
        Error::Boundary { context, .. } => {
            writeln!(out, "inconclusive: {context}")?;
            Ok(EXIT_INCONCLUSIVE)
        }
        other => Err(other.into()),
    }
}

/// Designs gains, writes them and certifies the closed loop.
pub fn cmd_design(problem: &Problem, opts: &Options, out: &mut dyn Write) -> Result<i32, CliError> {
    let report = match design(problem, problem.config.design) {
        Ok(r) => r,
        Err(e) => return design_failure(e, out),
    };
    writeln!(out, "method: {}", format!("{:?}", report.method).to_lowercase())?;
    let gains = GainsFile::from_controller(&report.controller);
    write_file(opts.out.as_deref(), "gains.json", &gains.to_json())?;
    if opts.out.is_none() {
        writeln!(out, "{}", gains.to_json())?;
    }
    let cert = stability::certify(&closed_loop(problem, &AnyController::Observer(report.controller), false)?)?;
    report_certificate(&cert, problem, opts, out)
}

fn load_gains(opts: &Options) -> Result<AnyController, CliError> {
    let path = opts.gains.as_ref().ok_or_else(|| CliError::Config("this command needs --gains <path>".into()))?;
    GainsFile::load(path)?.build()
}

/// Certifies the closed loop with supplied gains.
pub fn cmd_verify(problem: &Problem, opts: &Options, out: &mut dyn Write) -> Result<i32, CliError> {
    let controller = load_gains(opts)?;
    let cert = stability::certify(&closed_loop(problem, &controller, false)?)?;
    report_certificate(&cert, problem, opts, out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub alpha: f64,
    pub feasible: bool,
    pub rho: Option<f64>,
    pub gamma_star: Option<f64>,
}

fn sweep_point(problem: &Problem, axis: Axis, alpha: f64, method: DesignMethod, tol: f64) -> Result<SweepRow, CliError> {
    let (a1, a2) = match axis {
        Axis::Alpha1 => (alpha, problem.actuator.loss.alpha()),
        Axis::Alpha2 => (problem.sensor.loss.alpha(), alpha),
    };
    let p = problem.with_alphas(a1, a2)?;
    let blank = SweepRow { alpha, feasible: false, rho: None, gamma_star: None };
    let report = match design(&p, method) {
        Ok(r) => r,
        Err(Error::Infeasible { .. } | Error::Boundary { .. }) => return Ok(blank),
        Err(e) => return Err(e.into()),
    };
    let performance = p.plant.generalized().is_some();
    let sys = closed_loop(&p, &AnyController::Observer(report.controller), performance)?;
    let rho = stability::second_moment_radius(&sys)?;
    if Verdict::from_rho(rho) != Verdict::Stable {
        return Ok(SweepRow { rho: Some(rho), ..blank });
    }
    let gamma_star = if performance {
        match performance::min_norm(&sys, tol) {
            Ok(g) => Some(g),
            Err(e) => {
                log::warn!("no norm at alpha = {alpha}: {e}");
                None
            }
        }
    } else {
        None
    };
    Ok(SweepRow { alpha, feasible: true, rho: Some(rho), gamma_star })
}

/// Evaluates the sweep grid; points run concurrently, rows stay in grid order.
pub fn sweep_rows(problem: &Problem, axis: Axis, grid: &[f64], threads: usize) -> Result<Vec<SweepRow>, CliError> {
    let method = problem.config.sweep.method.unwrap_or(DesignMethod::Weighted);
    let tol = problem.config.sweep.tol;
    for &alpha in grid {
        LossChannel::new(alpha).map_err(|e| CliError::Config(format!("grid value: {e}")))?;
    }
    sim::parallel_map(grid.len(), threads, |i| sweep_point(problem, axis, grid[i], method, tol))
        .into_iter()
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("alpha,feasible,rho,gamma_star\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{}\n",
            sig9(r.alpha),
            u8::from(r.feasible),
            r.rho.map(sig9).unwrap_or_default(),
            r.gamma_star.map(sig9).unwrap_or_default()
        ));
    }
    s
}

fn threads(problem: &Problem) -> usize {
    problem
        .config
        .sim
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Feasibility, ρ and γ* along a loss-probability grid, as CSV.
pub fn cmd_sweep(problem: &Problem, opts: &Options, out: &mut dyn Write) -> Result<i32, CliError> {
    let axis = problem
        .config
        .sweep
        .axis
        .ok_or_else(|| CliError::Config("sweep needs an axis (--axis alpha1|alpha2)".into()))?;
    let grid = match &problem.config.sweep.grid {
        Some(GridConfig::Range(s)) => config::parse_grid(s)?,
        Some(GridConfig::List(v)) => v.clone(),
        None => return Err(CliError::Config("sweep needs a grid (--grid start:stop:step)".into())),
    };
    if grid.is_empty() {
        return Err(CliError::Config("empty sweep grid".into()));
    }
    if problem.plant.generalized().is_none() {
        log::warn!("no performance channels: gamma_star left blank");
    }
    let csv = sweep_csv(&sweep_rows(problem, axis, &grid, threads(problem))?);
    write!(out, "{csv}")?;
    write_file(opts.out.as_deref(), "sweep.csv", &csv)?;
    Ok(EXIT_OK)
}

/// Simulates the loop and writes the first trajectory and a summary.
pub fn cmd_simulate(problem: &Problem, opts: &Options, out: &mut dyn Write) -> Result<i32, CliError> {
    let controller = match &opts.gains {
        Some(_) => load_gains(opts)?,
        None => match design(problem, problem.config.design) {
            Ok(r) => AnyController::Observer(r.controller),
            Err(e) => return design_failure(e, out),
        },
    };
    let AnyController::Observer(ctrl) = &controller else {
        return Err(CliError::Config("simulation needs observer-form gains".into()));
    };
    let cfg = problem.config.sim_config();
    let spec = LoopSpec {
        plant: &problem.plant,
        sensor: &problem.sensor,
        actuator: &problem.actuator,
        decoder: problem.decoder.as_ref(),
    };
    let trajectories = sim::simulate(spec, ctrl, &cfg, threads(problem))?;
    let csv = trajectories[0].to_csv(problem.config.sim.components);
    write_file(opts.out.as_deref(), "trajectory.csv", &csv)?;
    let diverged = trajectories.iter().filter(|t| t.diverged).count();
    // Second-moment estimate on the closed loop [x; η; e], started from ξ₀ = 0.
    let sys = closed_loop(problem, &controller, false)?;
    let nd = problem.decoder.as_ref().map_or(0, |d| d.nd());
    let mc_cfg = SimConfig {
        initial_state: match &cfg.initial_state {
            InitialState::Fixed(x0) => {
                let mut v = x0.clone();
                v.extend(std::iter::repeat_n(0.0, nd));
                v.extend_from_slice(x0);
                InitialState::Fixed(v)
            }
            InitialState::UnitSphere => InitialState::UnitSphere,
        },
        ..cfg.clone()
    };
    let est = sim::mc_second_moment(&sys, &mc_cfg)?;
    let cert = stability::second_moment_radius(&sys)?;
    let last = est.cumulative.len() - 1;
    let summary = json!({
        "trials": cfg.trials,
        "horizon": cfg.horizon,
        "seed": cfg.seed,
        "diverged": diverged > 0,
        "diverged_fraction": round9(diverged as f64 / cfg.trials as f64),
        "rho_hat": round9(est.rho_hat),
        "rho_hat_ci": [round9(est.rho_ci.0), round9(est.rho_ci.1)],
        "rho": round9(cert),
        "mean_cumulative_sq": round9(est.cumulative[last]),
        "mean_cumulative_sq_ci": round9(est.cumulative_ci[last]),
    });
    let text = serde_json::to_string_pretty(&summary).expect("json");
    writeln!(out, "{text}")?;
    write_file(opts.out.as_deref(), "summary.json", &text)?;
    if opts.out.is_none() {
        write!(out, "{csv}")?;
    }
    Ok(EXIT_OK)
}
