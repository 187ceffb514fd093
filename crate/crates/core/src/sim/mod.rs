//! Closed-loop simulation of the three control schemes and tracking metrics.
//!
//! Every sampling interval the harness reads the full plant state, asks the
//! controller for an input, holds it over the interval while integrating the
//! plant with RK4 substeps, and records one [`TraceRow`].

mod metrics;
mod pid;

pub use metrics::{compute_metrics, ChannelMetrics, Metrics, SegmentMetrics, VIOLATION_TOL};
pub use pid::{step_pid, Action, PidParams};

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::model::{
    augment_delta, discretize_euler, linearize, reduce_minimal_subset, rk4_step, AugmentedModel, Feedthrough,
    ModelError, OperatingPoint, PlantModel, DEFAULT_FD_STEP,
};
use crate::mpc::{build_condensed_qp, extract_first_move, MpcConfig, MpcError};
use crate::solvers::{
    solve_condensed_activeset, solve_sparse_cdal, ActiveSetSettings, ActiveSetWorkspace, CdalSettings, CdalWorkspace,
    QpSolution, SolveStatus,
};

/// Consecutive non-converged solves tolerated before a run is aborted.
pub const MAX_CONSECUTIVE_FAILURES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    MultiPid,
    SlMpc,
    LtiMpc,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::MultiPid, Scheme::SlMpc, Scheme::LtiMpc];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::MultiPid => "multi-pid",
            Scheme::SlMpc => "sl-mpc",
            Scheme::LtiMpc => "lti-mpc",
        }
    }

    pub fn is_mpc(self) -> bool {
        self != Scheme::MultiPid
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown scheme `{s}` (expected multi-pid, sl-mpc or lti-mpc)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolverChoice {
    CdalSparse,
    ActiveSetCondensed,
}

impl SolverChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverChoice::CdalSparse => "cdal-sparse",
            SolverChoice::ActiveSetCondensed => "activeset-condensed",
        }
    }
}

impl fmt::Display for SolverChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SolverChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cdal-sparse" => Ok(SolverChoice::CdalSparse),
            "activeset-condensed" => Ok(SolverChoice::ActiveSetCondensed),
            other => Err(format!("unknown solver `{other}` (expected cdal-sparse or activeset-condensed)")),
        }
    }
}

/// MPC design plus the solver that runs it.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcSetup {
    pub cfg: MpcConfig,
    pub solver: SolverChoice,
    pub tol: f64,
    pub max_iter: usize,
    pub fd_step: f64,
}

impl MpcSetup {
    pub fn new(cfg: MpcConfig) -> Self {
        Self {
            cfg,
            solver: SolverChoice::CdalSparse,
            tol: 1e-6,
            max_iter: 1000,
            fd_step: DEFAULT_FD_STEP,
        }
    }
}

/// Signal a PI loop measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Signal {
    Output(usize),
    State(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SetpointSource {
    Constant(f64),
    /// Component of the scenario setpoint vector.
    Schedule(usize),
    /// Output of the named loop.
    Cascade(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PidLoop {
    pub name: String,
    pub params: PidParams,
    pub measure: Signal,
    pub setpoint: SetpointSource,
    /// Plant input driven by this loop; `None` for a pure outer loop.
    pub drives: Option<usize>,
}

/// Optional additive Gaussian noise on every measured signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Noise {
    pub std_dev: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub duration: f64,
    /// `(time, setpoint)` step changes; the first one is at `t = 0`.
    pub schedule: Vec<(f64, Vec<f64>)>,
    pub scheme: Scheme,
    /// Relinearize every `k` samples; `0` only at `t = 0`.
    pub relin_period: usize,
    pub x0: Vec<f64>,
    pub u0: Vec<f64>,
    pub substeps: usize,
    pub noise: Option<Noise>,
    /// Record wall-clock solve times. Off by default so traces are reproducible.
    pub record_timing: bool,
}

impl Scenario {
    pub fn new(duration: f64, schedule: Vec<(f64, Vec<f64>)>, scheme: Scheme, x0: Vec<f64>, u0: Vec<f64>) -> Self {
        Self {
            duration,
            schedule,
            scheme,
            relin_period: 1,
            x0,
            u0,
            substeps: 10,
            noise: None,
            record_timing: false,
        }
    }

    pub fn setpoint_at(&self, t: f64) -> &[f64] {
        let i = self.schedule.iter().rposition(|(s, _)| *s <= t).unwrap_or(0);
        &self.schedule[i].1
    }

    /// Number of sampling instants for sampling time `ts`.
    pub fn samples(&self, ts: f64) -> usize {
        (self.duration / ts).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub time: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    pub r: Vec<f64>,
    /// `None` for rows without an optimization (multi-PID).
    pub status: Option<SolveStatus>,
    pub iters: usize,
    pub solve_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub scheme: Scheme,
    pub ts: f64,
    pub n_x: usize,
    pub n_u: usize,
    pub n_y: usize,
    pub rows: Vec<TraceRow>,
}

impl Trace {
    pub fn new(scheme: Scheme, ts: f64, n_x: usize, n_u: usize, n_y: usize) -> Self {
        Self {
            scheme,
            ts,
            n_x,
            n_u,
            n_y,
            rows: Vec::new(),
        }
    }

    pub fn output(&self, channel: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(move |r| r.y[channel])
    }

    pub fn input(&self, channel: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(move |r| r.u[channel])
    }

    pub fn iterations(&self) -> Vec<usize> {
        self.rows.iter().filter(|r| r.status.is_some()).map(|r| r.iters).collect()
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SetupError {
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("pid loop `{name}`: {reason}")]
    Pid { name: String, reason: String },
    #[error(transparent)]
    Mpc(#[from] MpcError),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum AbortReason {
    #[error("invalid setup: {0}")]
    Setup(#[from] SetupError),
    #[error("plant diverged at t = {time}")]
    Divergence { time: f64 },
    #[error("{count} consecutive non-converged solves ending at t = {time}")]
    SolverFailures { time: f64, count: usize },
    #[error("model error at t = {time}: {source}")]
    Model { time: f64, source: ModelError },
    #[error("MPC assembly error at t = {time}: {source}")]
    Mpc { time: f64, source: MpcError },
}

/// Aborted run: the rows recorded so far plus the cause.
#[derive(Debug, Clone, Error, PartialEq)]
#[error("{scheme} run aborted: {reason}")]
pub struct SimAbort {
    pub scheme: Scheme,
    pub trace: Trace,
    pub reason: AbortReason,
}

fn check_scenario(plant: &PlantModel, mpc: &MpcSetup, sc: &Scenario) -> Result<(), SetupError> {
    let bad = |m: String| Err(SetupError::Scenario(m));
    let ts = mpc.cfg.ts;
    mpc.cfg.validate(plant.n_u(), plant.n_y())?;
    if !(sc.duration > 0.0) || !sc.duration.is_finite() {
        return bad(format!("duration must be positive, got {}", sc.duration));
    }
    if sc.samples(ts) == 0 {
        return bad(format!("duration {} is shorter than one sample", sc.duration));
    }
    if sc.substeps == 0 {
        return bad("substeps must be at least 1".into());
    }
    if sc.schedule.is_empty() || sc.schedule[0].0 != 0.0 {
        return bad("setpoint schedule must start at t = 0".into());
    }
    for w in sc.schedule.windows(2) {
        if !(w[1].0 > w[0].0) {
            return bad(format!("schedule times must increase strictly ({} then {})", w[0].0, w[1].0));
        }
    }
    for (t, r) in &sc.schedule {
        if *t >= sc.duration {
            return bad(format!("schedule time {t} is not within the duration {}", sc.duration));
        }
        if r.len() != plant.n_y() {
            return bad(format!("setpoint at t = {t} has length {}, expected {}", r.len(), plant.n_y()));
        }
        if r.iter().any(|v| !v.is_finite()) {
            return bad(format!("setpoint at t = {t} is not finite"));
        }
    }
    if sc.x0.len() != plant.n_x() || sc.u0.len() != plant.n_u() {
        return bad(format!(
            "initial state/input have lengths {}/{}, expected {}/{}",
            sc.x0.len(),
            sc.u0.len(),
            plant.n_x(),
            plant.n_u()
        ));
    }
    let cfg = &mpc.cfg;
    if sc.u0.iter().enumerate().any(|(i, u)| *u < cfg.u_min[i] || *u > cfg.u_max[i]) {
        return bad("initial input lies outside [u_min, u_max]".into());
    }
    if let Some(n) = sc.noise {
        if !(n.std_dev >= 0.0) || !n.std_dev.is_finite() {
            return bad(format!("noise standard deviation must be nonnegative, got {}", n.std_dev));
        }
    }
    if sc.scheme.is_mpc() && !(mpc.tol > 0.0 && mpc.max_iter > 0 && mpc.fd_step > 0.0) {
        return bad("solver tolerance, iteration limit and fd_step must be positive".into());
    }
    Ok(())
}

/// Evaluation order of the loops: every loop after the loop feeding its
/// setpoint.
fn pid_order(plant: &PlantModel, loops: &[PidLoop]) -> Result<Vec<usize>, SetupError> {
    let err = |name: &str, reason: String| SetupError::Pid {
        name: name.to_string(),
        reason,
    };
    if loops.is_empty() {
        return Err(SetupError::Scenario("multi-pid scheme needs at least one [pid.*] loop".into()));
    }
    let index: HashMap<&str, usize> = loops.iter().enumerate().map(|(i, l)| (l.name.as_str(), i)).collect();
    if index.len() != loops.len() {
        return Err(SetupError::Scenario("pid loop names must be unique".into()));
    }
    let mut driven = vec![false; plant.n_u()];
    for l in loops {
        l.params.validate().map_err(|r| err(&l.name, r))?;
        match l.measure {
            Signal::Output(i) if i >= plant.n_y() => return Err(err(&l.name, format!("output y{i} does not exist"))),
            Signal::State(i) if i >= plant.n_x() => return Err(err(&l.name, format!("state x{i} does not exist"))),
            _ => {}
        }
        match &l.setpoint {
            SetpointSource::Schedule(i) if *i >= plant.n_y() => {
                return Err(err(&l.name, format!("setpoint r{i} does not exist")))
            }
            SetpointSource::Cascade(src) if !index.contains_key(src.as_str()) => {
                return Err(err(&l.name, format!("cascade source `{src}` is not a loop")))
            }
            SetpointSource::Constant(v) if !v.is_finite() => return Err(err(&l.name, "setpoint must be finite".into())),
            _ => {}
        }
        if let Some(j) = l.drives {
            if j >= plant.n_u() {
                return Err(err(&l.name, format!("input u{j} does not exist")));
            }
            if std::mem::replace(&mut driven[j], true) {
                return Err(err(&l.name, format!("input u{j} is driven by two loops")));
            }
        }
    }
    let mut order = Vec::with_capacity(loops.len());
    let mut state = vec![0u8; loops.len()];
    fn visit(
        i: usize,
        loops: &[PidLoop],
        index: &HashMap<&str, usize>,
        state: &mut [u8],
        order: &mut Vec<usize>,
    ) -> Result<(), SetupError> {
        match state[i] {
            2 => return Ok(()),
            1 => {
                return Err(SetupError::Pid {
                    name: loops[i].name.clone(),
                    reason: "cascade cycle".into(),
                })
            }
            _ => {}
        }
        state[i] = 1;
        if let SetpointSource::Cascade(src) = &loops[i].setpoint {
            visit(index[src.as_str()], loops, index, state, order)?;
        }
        state[i] = 2;
        order.push(i);
        Ok(())
    }
    for i in 0..loops.len() {
        visit(i, loops, &index, &mut state, &mut order)?;
    }
    Ok(order)
}

struct MpcController<'a> {
    setup: &'a MpcSetup,
    cfg: MpcConfig,
    model: Option<(AugmentedModel, Vec<usize>)>,
    cdal: CdalWorkspace,
    active: ActiveSetWorkspace,
}

impl MpcController<'_> {
    fn relinearize(&mut self, plant: &PlantModel, x: &[f64], u: &[f64]) -> Result<(), ModelError> {
        let op = OperatingPoint::at(plant, x, u)?;
        let ct = linearize(plant, &op, self.setup.fd_step)?;
        let (ct, keep) = reduce_minimal_subset(&ct, 0.0)?;
        let dt = discretize_euler(&ct, self.cfg.ts)?;
        let aug = augment_delta(&dt, Feedthrough::Reject)?;
        if self.model.as_ref().is_some_and(|(m, _)| m.n_aug() != aug.n_aug()) {
            self.cdal.reset();
            self.active.reset();
        }
        self.model = Some((aug, keep));
        Ok(())
    }

    fn solve(&mut self, x: &[f64], u_prev: &[f64], r: &[f64]) -> Result<(QpSolution, Option<Vec<f64>>), MpcError> {
        let (aug, keep) = self.model.as_ref().expect("linearized before the first solve");
        self.cfg.r.copy_from_slice(r);
        let x0 = aug.initial_state(x, u_prev, Some(keep));
        let sol = match self.setup.solver {
            SolverChoice::CdalSparse => {
                let settings = CdalSettings {
                    tol: self.setup.tol,
                    max_outer: self.setup.max_iter,
                    ..CdalSettings::default()
                };
                solve_sparse_cdal(aug, &self.cfg, &x0, &mut self.cdal, &settings)?
            }
            SolverChoice::ActiveSetCondensed => {
                let qp = build_condensed_qp(aug, &self.cfg, &x0)?;
                let settings = ActiveSetSettings {
                    tol: self.setup.tol,
                    max_iter: self.setup.max_iter,
                };
                solve_condensed_activeset(&qp, &mut self.active, &settings)
            }
        };
        let u = if sol.converged() {
            Some(extract_first_move(&sol, aug, &self.cfg, u_prev)?)
        } else {
            None
        };
        Ok((sol, u))
    }
}

fn clip_inputs(u: &mut [f64], cfg: &MpcConfig) {
    for (i, v) in u.iter_mut().enumerate() {
        *v = v.max(cfg.u_min[i]).min(cfg.u_max[i]);
    }
}

/// Runs `scenario.scheme` on `plant` from `scenario.x0` with the previous
/// input `scenario.u0`. The PI loops are used by the multi-PID scheme; the
/// MPC setup supplies the sampling time and input bounds for every scheme.
pub fn run_closed_loop(
    plant: &PlantModel,
    mpc: &MpcSetup,
    loops: &[PidLoop],
    scenario: &Scenario,
) -> Result<Trace, SimAbort> {
    let ts = mpc.cfg.ts;
    let mut trace = Trace::new(scenario.scheme, ts, plant.n_x(), plant.n_u(), plant.n_y());
    let abort = |trace: Trace, reason: AbortReason| SimAbort {
        scheme: scenario.scheme,
        trace,
        reason,
    };

    let setup = check_scenario(plant, mpc, scenario).and_then(|_| match scenario.scheme {
        Scheme::MultiPid => pid_order(plant, loops),
        _ => Ok(Vec::new()),
    });
    let order = match setup {
        Ok(o) => o,
        Err(e) => return Err(abort(trace, e.into())),
    };

    let mut noise = scenario.noise.filter(|n| n.std_dev > 0.0).map(|n| {
        (
            ChaCha8Rng::seed_from_u64(n.seed),
            Normal::new(0.0, n.std_dev).expect("validated standard deviation"),
        )
    });
    let mut ctrl = MpcController {
        setup: mpc,
        cfg: mpc.cfg.clone(),
        model: None,
        cdal: CdalWorkspace::new(),
        active: ActiveSetWorkspace::new(),
    };
    let mut integrals = vec![0.0; loops.len()];
    let mut x = scenario.x0.clone();
    let mut u_prev = scenario.u0.clone();
    let mut failures = 0usize;
    let h = ts / scenario.substeps as f64;

    for k in 0..scenario.samples(ts) {
        let time = k as f64 * ts;
        let r = scenario.setpoint_at(time).to_vec();
        let (x_meas, y_meas) = {
            let y = match plant.output(&x, &u_prev) {
                Ok(y) => y,
                Err(source) => return Err(abort(trace, AbortReason::Model { time, source })),
            };
            match noise.as_mut() {
                Some((rng, dist)) => (
                    x.iter().map(|v| v + dist.sample(rng)).collect::<Vec<_>>(),
                    y.iter().map(|v| v + dist.sample(rng)).collect::<Vec<_>>(),
                ),
                None => (x.clone(), y),
            }
        };

        let mut status = None;
        let mut iters = 0;
        let mut solve_ms = 0.0;
        let u = match scenario.scheme {
            Scheme::MultiPid => {
                let mut u = u_prev.clone();
                let mut outputs = vec![0.0; loops.len()];
                for &i in &order {
                    let l = &loops[i];
                    let pv = match l.measure {
                        Signal::Output(j) => y_meas[j],
                        Signal::State(j) => x_meas[j],
                    };
                    let sp = match &l.setpoint {
                        SetpointSource::Constant(v) => *v,
                        SetpointSource::Schedule(j) => r[*j],
                        SetpointSource::Cascade(src) => {
                            outputs[loops.iter().position(|o| &o.name == src).expect("validated cascade")]
                        }
                    };
                    let (out, acc) = step_pid(&l.params, pv, sp, integrals[i], ts);
                    outputs[i] = out;
                    integrals[i] = acc;
                    if let Some(j) = l.drives {
                        u[j] = out;
                    }
                }
                clip_inputs(&mut u, &mpc.cfg);
                u
            }
            scheme => {
                let relin = k == 0 || (scheme == Scheme::SlMpc && scenario.relin_period > 0 && k % scenario.relin_period == 0);
                if relin {
                    if let Err(source) = ctrl.relinearize(plant, &x_meas, &u_prev) {
                        return Err(abort(trace, AbortReason::Model { time, source }));
                    }
                }
                let started = Instant::now();
                let (sol, u) = match ctrl.solve(&x_meas, &u_prev, &r) {
                    Ok(v) => v,
                    Err(source) => return Err(abort(trace, AbortReason::Mpc { time, source })),
                };
                if scenario.record_timing {
                    solve_ms = started.elapsed().as_secs_f64() * 1e3;
                }
                status = Some(sol.status);
                iters = sol.iterations.work();
                match u {
                    Some(u) => {
                        failures = 0;
                        u
                    }
                    None => {
                        failures += 1;
                        u_prev.clone()
                    }
                }
            }
        };

        let y = match plant.output(&x, &u) {
            Ok(y) => y,
            Err(source) => return Err(abort(trace, AbortReason::Model { time, source })),
        };
        trace.rows.push(TraceRow {
            time,
            x: x.clone(),
            y,
            u: u.clone(),
            r,
            status,
            iters,
            solve_ms,
        });
        if failures > MAX_CONSECUTIVE_FAILURES {
            return Err(abort(trace, AbortReason::SolverFailures { time, count: failures }));
        }

        for _ in 0..scenario.substeps {
            x = match rk4_step(plant, &x, &u, h) {
                Ok(next) => next,
                Err(source) => return Err(abort(trace, AbortReason::Model { time, source })),
            };
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(abort(trace, AbortReason::Divergence { time: time + ts }));
        }
        u_prev = u;
    }
    Ok(trace)
}
