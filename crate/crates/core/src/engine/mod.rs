//! Modified nodal analysis: system assembly, Newton iteration, DC operating
//! point and the breakpoint-driven transient loop.
//!
//! Unknown ordering is node voltages (ground eliminated, circuit node order)
//! followed by one branch current per inductor and voltage source, in device
//! order. Branch currents flow from the first terminal through the device to
//! the second, so a source delivering power carries a negative current.

pub mod linalg;

use thiserror::Error;

use crate::devices::{
    capacitor_advance, capacitor_companion, diode_eval, inductor_advance,
    limit_junction_voltage, stamp_into, switch_conductance_at, DeviceError, DeviceState, Method,
    StampContext, StampSink,
};
use crate::netlist::{Circuit, DeviceKind, Probe};

use linalg::{lu_solve, Singular};

/// Name of the resistor whose dissipation is booked as load energy.
pub const LOAD_NAME: &str = "rload";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("singular matrix: unknown {unknown} is undetermined")]
    Singular { unknown: String },
    #[error("Newton iteration failed to converge at t = {time:e} s after {halvings} step halvings")]
    NoConvergence { time: f64, halvings: usize },
    #[error("DC operating point did not converge after gmin stepping")]
    DcNoConvergence,
    #[error("circuit has no .tran directive")]
    MissingTran,
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
    #[error(transparent)]
    Device(#[from] DeviceError),
}

/// How the transient run is initialised.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartMode {
    /// DC operating point with every switch at its t = 0 conductance.
    OperatingPoint,
    /// All capacitor voltages and inductor currents zero; sources switch on at t = 0.
    ZeroState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub reltol: f64,
    pub abstol_i: f64,
    pub vntol: f64,
    pub max_newton: usize,
    /// Integration method away from breakpoints; the first step and the
    /// step after every breakpoint always use backward Euler.
    pub method: Method,
    pub gmin_steps: usize,
    /// Node-to-ground shunt conductance kept in every solve.
    pub gmin: f64,
    /// Step cap applied for `edge_window` seconds after each switch corner.
    pub edge_step: Option<f64>,
    pub edge_window: f64,
    pub start: StartMode,
    pub max_halvings: usize,
    /// Uniformly fine stepping over the tail of the run, for spectra.
    pub capture: Option<Capture>,
}

/// From `start` to the end of the run every step is at most `step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Capture {
    pub start: f64,
    pub step: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            reltol: 1e-3,
            abstol_i: 1e-9,
            vntol: 1e-6,
            max_newton: 50,
            method: Method::Trapezoidal,
            gmin_steps: 10,
            gmin: 1e-12,
            edge_step: None,
            edge_window: 0.0,
            start: StartMode::OperatingPoint,
            max_halvings: 10,
            capture: None,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidOptions(m.to_string()));
        if !(self.reltol > 0.0 && self.abstol_i > 0.0 && self.vntol > 0.0 && self.gmin > 0.0) {
            return bad("tolerances and gmin must be > 0");
        }
        if self.max_newton == 0 {
            return bad("max_newton must be >= 1");
        }
        if self.method == Method::Dc {
            return bad("transient method must be backward Euler or trapezoidal");
        }
        if let Some(h) = self.edge_step {
            if !(h > 0.0) || !(self.edge_window >= 0.0) {
                return bad("edge_step must be > 0 and edge_window >= 0");
            }
        }
        if let Some(c) = self.capture {
            if !(c.step > 0.0) || !(c.start >= 0.0) {
                return bad("capture step must be > 0 and start >= 0");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    kind: DeviceKind,
    a: Option<usize>,
    b: Option<usize>,
    branch: Option<usize>,
    is_load: bool,
}

/// A circuit compiled to MNA indices.
#[derive(Debug, Clone)]
pub struct Topology {
    nodes: Vec<String>,
    branches: Vec<String>,
    elements: Vec<Element>,
    nonlinear: bool,
}

impl Topology {
    pub fn compile(c: &Circuit) -> Self {
        let nodes: Vec<String> = c.nodes()[1..].to_vec();
        let index = |name: &str| nodes.iter().position(|n| n == name);
        let mut branches = Vec::new();
        let mut elements = Vec::new();
        for d in c.devices() {
            let branch = match d.kind {
                DeviceKind::Inductor { .. } | DeviceKind::VSource { .. } => {
                    branches.push(d.key());
                    Some(nodes.len() + branches.len() - 1)
                }
                _ => None,
            };
            elements.push(Element {
                name: d.name.clone(),
                kind: d.kind.clone(),
                a: index(&d.n1),
                b: index(&d.n2),
                branch,
                is_load: d.key() == LOAD_NAME && matches!(d.kind, DeviceKind::Resistor { .. }),
            });
        }
        let nonlinear = elements.iter().any(|e| matches!(e.kind, DeviceKind::Diode(_)));
        Topology {
            nodes,
            branches,
            elements,
            nonlinear,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    pub fn dim(&self) -> usize {
        self.nodes.len() + self.branches.len()
    }

    /// Human-readable name of an unknown, e.g. `v(out)` or `i(l1)`.
    pub fn unknown_name(&self, i: usize) -> String {
        if i < self.nodes.len() {
            format!("v({})", self.nodes[i])
        } else {
            format!("i({})", self.branches[i - self.nodes.len()])
        }
    }

    pub fn node_index(&self, node: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.eq_ignore_ascii_case(node))
    }

    fn voltage(x: &[f64], e: &Element) -> f64 {
        e.a.map_or(0.0, |a| x[a]) - e.b.map_or(0.0, |b| x[b])
    }

    pub fn initial_history(&self) -> Vec<DeviceState> {
        self.elements.iter().map(|e| DeviceState::zero_for(&e.kind)).collect()
    }

    fn assemble(
        &self,
        sys: &mut MnaSystem,
        history: &[DeviceState],
        v_op: &[f64],
        step: &Step,
        gmin: f64,
    ) -> Result<(), DeviceError> {
        sys.clear();
        for (i, e) in self.elements.iter().enumerate() {
            let ctx = StampContext {
                a: e.a,
                b: e.b,
                branch: e.branch,
                t: step.t_eval,
                dt: step.dt,
                method: step.method,
                v_op: v_op[i],
            };
            stamp_into(&e.kind, &history[i], &ctx, sys)?;
        }
        for k in 0..self.nodes.len() {
            sys.add_matrix(k, k, gmin);
        }
        Ok(())
    }

    /// Terminal currents (first → second terminal) of every element at the
    /// solution `x`, with the history each reactive element advances to.
    fn evaluate(
        &self,
        x: &[f64],
        history: &[DeviceState],
        step: &Step,
        currents: &mut [f64],
        next: &mut [DeviceState],
    ) {
        for (i, e) in self.elements.iter().enumerate() {
            let v = Self::voltage(x, e);
            let (cur, st) = match (&e.kind, &history[i]) {
                (DeviceKind::Resistor { r }, _) => (v / r, DeviceState::Memoryless),
                (DeviceKind::Capacitor { c, esr }, DeviceState::Capacitor(st)) => {
                    let n = capacitor_companion(*c, *esr, *st, step.dt, step.method);
                    let st = capacitor_advance(n, *esr, v);
                    if step.method == Method::Dc {
                        (0.0, DeviceState::Capacitor(crate::devices::CapState { v, i: 0.0 }))
                    } else {
                        (st.i, DeviceState::Capacitor(st))
                    }
                }
                (DeviceKind::Inductor { esr, epc, .. }, DeviceState::Inductor { epc: epc_st, .. }) => {
                    let il = x[e.branch.unwrap()];
                    let flux = inductor_advance(*esr, v, il);
                    let (ie, epc_next) = if step.method == Method::Dc || *epc == 0.0 {
                        (0.0, crate::devices::CapState { v, i: 0.0 })
                    } else {
                        let n = capacitor_companion(*epc, 0.0, *epc_st, step.dt, step.method);
                        let st = capacitor_advance(n, 0.0, v);
                        (st.i, st)
                    };
                    (il + ie, DeviceState::Inductor { flux, epc: epc_next })
                }
                (DeviceKind::VSource { dc, rs, .. }, _) => {
                    let i = x[e.branch.unwrap()];
                    (i, DeviceState::Source(inductor_advance(*rs, v - dc, i)))
                }
                (DeviceKind::Diode(p), _) => (diode_eval(v, p).current, DeviceState::Memoryless),
                (DeviceKind::Switch(p), _) => {
                    (v * switch_conductance_at(step.t_eval, p), DeviceState::Memoryless)
                }
                _ => unreachable!("history kind mismatch"),
            };
            currents[i] = cur;
            next[i] = st;
        }
    }

    /// Worst ratio of node-current residual to `abstol_i + reltol·Σ|i|`.
    fn kcl_ratio(&self, x: &[f64], currents: &[f64], gmin: f64, opts: &SolverOptions) -> f64 {
        let n = self.nodes.len();
        let mut residual = vec![0.0; n];
        let mut magnitude = vec![0.0; n];
        for (e, &i) in self.elements.iter().zip(currents) {
            if let Some(a) = e.a {
                residual[a] += i;
                magnitude[a] += i.abs();
            }
            if let Some(b) = e.b {
                residual[b] -= i;
                magnitude[b] += i.abs();
            }
        }
        (0..n)
            .map(|k| {
                let g = gmin * x[k];
                (residual[k] + g).abs() / (opts.abstol_i + opts.reltol * (magnitude[k] + g.abs()))
            })
            .fold(0.0, f64::max)
    }

    fn initial_v_op(&self, x: &[f64]) -> Vec<f64> {
        self.elements.iter().map(|e| Self::voltage(x, e)).collect()
    }
}

/// The assembled linear system `matrix · x = rhs`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MnaSystem {
    pub n: usize,
    pub m: usize,
    pub matrix: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl MnaSystem {
    pub fn new(n: usize, m: usize) -> Self {
        let dim = n + m;
        MnaSystem {
            n,
            m,
            matrix: vec![0.0; dim * dim],
            rhs: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.n + self.m
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.matrix[row * self.dim() + col]
    }

    fn clear(&mut self) {
        self.matrix.iter_mut().for_each(|v| *v = 0.0);
        self.rhs.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Solves a copy of the system.
    pub fn solve(&self) -> Result<Vec<f64>, Singular> {
        let mut a = self.matrix.clone();
        let mut x = self.rhs.clone();
        lu_solve(&mut a, &mut x, self.dim())?;
        Ok(x)
    }
}

impl StampSink for MnaSystem {
    fn add_matrix(&mut self, row: usize, col: usize, value: f64) {
        let dim = self.dim();
        self.matrix[row * dim + col] += value;
    }

    fn add_rhs(&mut self, row: usize, value: f64) {
        self.rhs[row] += value;
    }
}

/// Per-run integration state.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub x: Vec<f64>,
    pub history: Vec<DeviceState>,
    /// Upcoming switch corners, strictly increasing.
    pub breakpoints: Vec<f64>,
}

impl SimState {
    /// Zero solution and zero reactive history at t = 0.
    pub fn zero(c: &Circuit) -> Self {
        let topo = Topology::compile(c);
        SimState {
            t: 0.0,
            x: vec![0.0; topo.dim()],
            history: topo.initial_history(),
            breakpoints: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Step {
    /// Time switches are evaluated at: just inside the step's end, so a
    /// step ending on a corner sees the piece it actually spans.
    t_eval: f64,
    dt: f64,
    method: Method,
}

impl Step {
    fn new(t_end: f64, dt: f64, method: Method) -> Self {
        Step {
            t_eval: t_end - 1e-6 * dt,
            dt,
            method,
        }
    }

    fn dc() -> Self {
        Step {
            t_eval: 0.0,
            dt: 0.0,
            method: Method::Dc,
        }
    }
}

#[derive(Debug)]
enum NewtonFailure {
    Singular(usize),
    NoConvergence,
    Device(DeviceError),
}

struct Workspace {
    sys: MnaSystem,
}

fn newton(
    topo: &Topology,
    ws: &mut Workspace,
    history: &[DeviceState],
    x0: &[f64],
    step: &Step,
    gmin: f64,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, usize), NewtonFailure> {
    let n = topo.node_count();
    let mut x = x0.to_vec();
    let mut v_op = topo.initial_v_op(&x);
    for iter in 1..=opts.max_newton {
        topo.assemble(&mut ws.sys, history, &v_op, step, gmin)
            .map_err(NewtonFailure::Device)?;
        let dim = ws.sys.dim();
        lu_solve(&mut ws.sys.matrix, &mut ws.sys.rhs, dim)
            .map_err(|s| NewtonFailure::Singular(s.column))?;
        let x_new = std::mem::replace(&mut ws.sys.rhs, vec![0.0; dim]);
        if x_new.iter().any(|v| !v.is_finite()) {
            return Err(NewtonFailure::NoConvergence);
        }
        if !topo.nonlinear {
            return Ok((x_new, 1));
        }
        // Besides the voltage test, each diode's linearized current must
        // match its true current at the new voltage.
        let mut settled = true;
        for (i, e) in topo.elements.iter().enumerate() {
            if let DeviceKind::Diode(p) = &e.kind {
                let raw = Topology::voltage(&x_new, e);
                let at_op = diode_eval(v_op[i], p);
                let predicted = at_op.current + at_op.conductance * (raw - v_op[i]);
                let actual = diode_eval(raw, p).current;
                settled &= (actual - predicted).abs()
                    <= opts.abstol_i + opts.reltol * actual.abs().max(predicted.abs());
                let lim = limit_junction_voltage(raw, v_op[i], p);
                settled &= lim == raw;
                v_op[i] = lim;
            }
        }
        let converged = settled
            && x_new.iter().zip(&x).enumerate().all(|(i, (new, old))| {
                let abs = if i < n { opts.vntol } else { opts.abstol_i };
                (new - old).abs() <= abs + opts.reltol * new.abs().max(old.abs())
            });
        x = x_new;
        if converged {
            return Ok((x, iter));
        }
    }
    Err(NewtonFailure::NoConvergence)
}

fn singular_error(topo: &Topology, column: usize) -> SimError {
    SimError::Singular {
        unknown: topo.unknown_name(column),
    }
}

/// Converged Newton solution for one timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonResult {
    pub x: Vec<f64>,
    pub iterations: usize,
}

/// Assembles the linearized system for a step of length `dt` from `state`,
/// with nonlinear devices linearized at `state.x`.
pub fn assemble_system(
    c: &Circuit,
    state: &SimState,
    dt: f64,
    opts: &SolverOptions,
) -> Result<MnaSystem, SimError> {
    let topo = Topology::compile(c);
    let mut sys = MnaSystem::new(topo.node_count(), topo.branch_count());
    let v_op = topo.initial_v_op(&state.x);
    let step = Step::new(state.t + dt, dt, opts.method);
    topo.assemble(&mut sys, &state.history, &v_op, &step, opts.gmin)?;
    Ok(sys)
}

/// Newton iteration for one timestep of length `dt` from `state`, warm
/// started at `state.x`.
pub fn newton_solve(
    c: &Circuit,
    state: &SimState,
    dt: f64,
    opts: &SolverOptions,
) -> Result<NewtonResult, SimError> {
    if !(dt > 0.0) {
        return Err(DeviceError::NonPositiveStep(dt).into());
    }
    let topo = Topology::compile(c);
    let mut ws = Workspace {
        sys: MnaSystem::new(topo.node_count(), topo.branch_count()),
    };
    let step = Step::new(state.t + dt, dt, opts.method);
    newton(&topo, &mut ws, &state.history, &state.x, &step, opts.gmin, opts)
        .map(|(x, iterations)| NewtonResult { x, iterations })
        .map_err(|f| match f {
            NewtonFailure::Singular(col) => singular_error(&topo, col),
            NewtonFailure::NoConvergence => SimError::NoConvergence {
                time: state.t + dt,
                halvings: 0,
            },
            NewtonFailure::Device(e) => e.into(),
        })
}

fn dc_solve(topo: &Topology, ws: &mut Workspace, opts: &SolverOptions) -> Result<Vec<f64>, SimError> {
    let history = topo.initial_history();
    let step = Step::dc();
    let zero = vec![0.0; topo.dim()];
    let map_fail = |f: NewtonFailure| match f {
        NewtonFailure::Singular(col) => Some(singular_error(topo, col)),
        NewtonFailure::Device(e) => Some(e.into()),
        NewtonFailure::NoConvergence => None,
    };
    match newton(topo, ws, &history, &zero, &step, opts.gmin, opts) {
        Ok((x, _)) => return Ok(x),
        Err(f) => {
            if let Some(e) = map_fail(f) {
                return Err(e);
            }
        }
    }
    // gmin ladder from 1e-2 S down to the working gmin, warm starting each rung.
    let steps = opts.gmin_steps.max(1);
    let (hi, lo) = (1e-2f64.ln(), opts.gmin.ln());
    let mut x = zero;
    for k in 0..=steps {
        let g = (hi + (lo - hi) * k as f64 / steps as f64).exp();
        match newton(topo, ws, &history, &x, &step, g, opts) {
            Ok((next, _)) => x = next,
            Err(f) => return Err(map_fail(f).unwrap_or(SimError::DcNoConvergence)),
        }
    }
    Ok(x)
}

/// DC operating point with capacitors open and inductors shorted; switches
/// take their t = 0 conductance.
pub fn dc_operating_point(c: &Circuit, opts: &SolverOptions) -> Result<Vec<f64>, SimError> {
    opts.validate()?;
    let topo = Topology::compile(c);
    let mut ws = Workspace {
        sys: MnaSystem::new(topo.node_count(), topo.branch_count()),
    };
    dc_solve(&topo, &mut ws, opts)
}

/// All switch corners `k·T + phase + {0, trise, D·T, D·T + tfall}` in
/// `[0, tstop]`, sorted and deduplicated within 1e-15 s.
pub fn breakpoint_schedule(c: &Circuit, tstop: f64) -> Vec<f64> {
    let mut times = Vec::new();
    for d in c.devices() {
        if let DeviceKind::Switch(p) = &d.kind {
            let period = p.pwm.period();
            let first = ((0.0 - p.pwm.phase) / period).floor() as i64 - 1;
            let last = ((tstop - p.pwm.phase) / period).ceil() as i64 + 1;
            for k in first..=last {
                let base = k as f64 * period + p.pwm.phase;
                for off in p.pwm.corners() {
                    let t = base + off;
                    if (-1e-15..=tstop + 1e-15).contains(&t) {
                        times.push(t.max(0.0));
                    }
                }
            }
        }
    }
    times.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(times.len());
    for t in times {
        if out.last().map_or(true, |&prev| t - prev > 1e-15) {
            out.push(t);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub name: String,
    pub values: Vec<f64>,
}

/// Energy of one device integrated over the run.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceEnergy {
    pub name: String,
    /// Energy delivered by an ideal source EMF.
    pub delivered: f64,
    /// Energy turned into heat (including energy booked as load).
    pub dissipated: f64,
}

/// Trapezoidal integrals of device powers over every accepted step.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyRecord {
    pub source: f64,
    pub load: f64,
    pub dissipated: f64,
    pub stored_start: f64,
    pub stored_end: f64,
    pub devices: Vec<DeviceEnergy>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunStats {
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub newton_iterations: usize,
    /// Worst node-current residual relative to its tolerance, over all
    /// accepted steps. Values ≤ 1 satisfy the KCL bound.
    pub max_kcl_ratio: f64,
    /// Indices into `times` of samples that landed on a breakpoint.
    pub breakpoint_samples: Vec<usize>,
}

/// Time-stamped record of a transient run.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveforms {
    pub times: Vec<f64>,
    pub channels: Vec<Channel>,
    pub energy: Option<EnergyRecord>,
    pub stats: RunStats,
}

impl Waveforms {
    pub fn new(times: Vec<f64>, channels: Vec<Channel>) -> Self {
        Waveforms {
            times,
            channels,
            energy: None,
            stats: RunStats::default(),
        }
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.channels
            .iter()
            .find(|c| c.name.eq_ignore_ascii_case(name))
            .map(|c| c.values.as_slice())
    }

    pub fn channel_names(&self) -> Vec<&str> {
        self.channels.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn duration(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy)]
enum Source {
    Node(Option<usize>),
    Device(usize),
}

struct EnergyAccumulator {
    source: f64,
    load: f64,
    dissipated: f64,
    stored_start: f64,
    stored_end: f64,
    delivered: Vec<f64>,
    heat: Vec<f64>,
    last_delivered: Vec<f64>,
    last_heat: Vec<f64>,
    last_gmin: f64,
    gmin_heat: f64,
}

impl EnergyAccumulator {
    fn powers(
        topo: &Topology,
        x: &[f64],
        currents: &[f64],
        history: &[DeviceState],
        gmin: f64,
        delivered: &mut [f64],
        heat: &mut [f64],
    ) -> (f64, f64) {
        let mut stored = 0.0;
        for (i, e) in topo.elements.iter().enumerate() {
            let v = Topology::voltage(x, e);
            let cur = currents[i];
            let (p_in, p_heat) = match (&e.kind, &history[i]) {
                (DeviceKind::Resistor { .. }, _)
                | (DeviceKind::Diode(_), _)
                | (DeviceKind::Switch(_), _) => (0.0, v * cur),
                (DeviceKind::Capacitor { c, esr }, DeviceState::Capacitor(st)) => {
                    stored += 0.5 * c * st.v * st.v;
                    (0.0, esr * cur * cur)
                }
                (DeviceKind::Inductor { l, esr, epc }, DeviceState::Inductor { flux, epc: est }) => {
                    stored += 0.5 * l * flux.i * flux.i + 0.5 * epc * est.v * est.v;
                    (0.0, esr * flux.i * flux.i)
                }
                (DeviceKind::VSource { dc, rs, ls }, _) => {
                    stored += 0.5 * ls * cur * cur;
                    (-dc * cur, rs * cur * cur)
                }
                _ => (0.0, 0.0),
            };
            delivered[i] = p_in;
            heat[i] = p_heat;
        }
        let p_gmin: f64 = x[..topo.node_count()].iter().map(|v| gmin * v * v).sum();
        (stored, p_gmin)
    }

    fn start(topo: &Topology, x: &[f64], currents: &[f64], history: &[DeviceState], gmin: f64) -> Self {
        let n = topo.elements.len();
        let mut acc = EnergyAccumulator {
            source: 0.0,
            load: 0.0,
            dissipated: 0.0,
            stored_start: 0.0,
            stored_end: 0.0,
            delivered: vec![0.0; n],
            heat: vec![0.0; n],
            last_delivered: vec![0.0; n],
            last_heat: vec![0.0; n],
            last_gmin: 0.0,
            gmin_heat: 0.0,
        };
        let (stored, p_gmin) = Self::powers(
            topo,
            x,
            currents,
            history,
            gmin,
            &mut acc.last_delivered,
            &mut acc.last_heat,
        );
        acc.stored_start = stored;
        acc.stored_end = stored;
        acc.last_gmin = p_gmin;
        acc
    }

    fn add_step(
        &mut self,
        topo: &Topology,
        x: &[f64],
        currents: &[f64],
        history: &[DeviceState],
        gmin: f64,
        dt: f64,
    ) {
        let n = topo.elements.len();
        let mut delivered = vec![0.0; n];
        let mut heat = vec![0.0; n];
        let (stored, p_gmin) = Self::powers(topo, x, currents, history, gmin, &mut delivered, &mut heat);
        for (i, e) in topo.elements.iter().enumerate() {
            let d = 0.5 * dt * (delivered[i] + self.last_delivered[i]);
            let h = 0.5 * dt * (heat[i] + self.last_heat[i]);
            self.delivered[i] += d;
            self.heat[i] += h;
            self.source += d;
            if e.is_load {
                self.load += h;
            } else {
                self.dissipated += h;
            }
        }
        let g = 0.5 * dt * (p_gmin + self.last_gmin);
        self.gmin_heat += g;
        self.dissipated += g;
        self.last_delivered = delivered;
        self.last_heat = heat;
        self.last_gmin = p_gmin;
        self.stored_end = stored;
    }

    fn finish(self, topo: &Topology) -> EnergyRecord {
        EnergyRecord {
            source: self.source,
            load: self.load,
            dissipated: self.dissipated,
            stored_start: self.stored_start,
            stored_end: self.stored_end,
            devices: topo
                .elements
                .iter()
                .enumerate()
                .map(|(i, e)| DeviceEnergy {
                    name: e.name.clone(),
                    delivered: self.delivered[i],
                    dissipated: self.heat[i],
                })
                .collect(),
        }
    }
}

/// Runs the `.tran` analysis of `c`.
///
/// Every switch corner is hit exactly. Steps never exceed `dtmax`, and are
/// further capped at `opts.edge_step` within `opts.edge_window` after each
/// corner. Probed channels (or every node voltage when nothing is probed)
/// are recorded at every accepted step.
pub fn transient_run(c: &Circuit, opts: &SolverOptions) -> Result<Waveforms, SimError> {
    opts.validate()?;
    let tran = c.directives().tran.ok_or(SimError::MissingTran)?;
    let topo = Topology::compile(c);
    let mut ws = Workspace {
        sys: MnaSystem::new(topo.node_count(), topo.branch_count()),
    };
    let ne = topo.elements.len();

    let mut x = match opts.start {
        StartMode::OperatingPoint => dc_solve(&topo, &mut ws, opts)?,
        StartMode::ZeroState => vec![0.0; topo.dim()],
    };
    let mut history = topo.initial_history();
    let mut next_history = history.clone();
    let mut currents = vec![0.0; ne];
    if opts.start == StartMode::OperatingPoint {
        topo.evaluate(&x, &history, &Step::dc(), &mut currents, &mut next_history);
        std::mem::swap(&mut history, &mut next_history);
    }

    let probes = &c.directives().probes;
    let sources: Vec<(String, Source)> = if probes.is_empty() {
        topo.nodes
            .iter()
            .enumerate()
            .map(|(i, name)| (format!("v({name})"), Source::Node(Some(i))))
            .collect()
    } else {
        probes
            .iter()
            .map(|p| {
                let src = match p {
                    Probe::Voltage(n) => Source::Node(topo.node_index(n)),
                    Probe::Current(d) => Source::Device(
                        topo.elements
                            .iter()
                            .position(|e| e.name.eq_ignore_ascii_case(d))
                            .expect("probe validated at construction"),
                    ),
                };
                (p.to_string(), src)
            })
            .collect()
    };
    let mut channels: Vec<Channel> = sources
        .iter()
        .map(|(name, _)| Channel {
            name: name.clone(),
            values: Vec::new(),
        })
        .collect();
    let mut times = Vec::new();
    let record = |channels: &mut Vec<Channel>, x: &[f64], currents: &[f64], history: &[DeviceState]| {
        for (ch, (_, src)) in channels.iter_mut().zip(&sources) {
            let v = match *src {
                Source::Node(idx) => idx.map_or(0.0, |i| x[i]),
                Source::Device(e) => match &history[e] {
                    DeviceState::Inductor { flux, .. } => flux.i,
                    _ => currents[e],
                },
            };
            ch.values.push(v);
        }
    };
    times.push(0.0);
    record(&mut channels, &x, &currents, &history);

    let mut energy = EnergyAccumulator::start(&topo, &x, &currents, &history, opts.gmin);
    let mut stats = RunStats {
        breakpoint_samples: vec![0],
        ..RunStats::default()
    };

    let breakpoints = breakpoint_schedule(c, tran.tstop);
    let mut bp_iter = breakpoints.iter().copied().filter(|&b| b > 0.0).peekable();
    let mut t = 0.0;
    let mut last_corner = if breakpoints.first() == Some(&0.0) { 0.0 } else { f64::NEG_INFINITY };
    let mut after_breakpoint = true;
    let end_tol = tran.tstop * 1e-12;

    while t < tran.tstop - end_tol {
        while bp_iter.peek().is_some_and(|&b| b <= t + 1e-15) {
            bp_iter.next();
        }
        let next_corner = bp_iter.peek().copied().filter(|&b| b <= tran.tstop + 1e-15);
        let target_is_corner = next_corner.is_some();
        let mut target = next_corner.unwrap_or(tran.tstop).min(tran.tstop);
        let mut target_is_corner = target_is_corner;
        let mut h = tran.dtmax;
        if let Some(edge) = opts.edge_step {
            if t - last_corner < opts.edge_window {
                h = h.min(edge);
            }
        }
        if let Some(cap) = opts.capture {
            if t >= cap.start - end_tol {
                h = h.min(cap.step);
            } else if cap.start < target {
                target = cap.start;
                target_is_corner = false;
            }
        }
        let remaining = target - t;
        let mut hits = false;
        if remaining <= h * (1.0 + 1e-9) {
            h = remaining;
            hits = true;
        } else if remaining < 2.0 * h {
            h = 0.5 * remaining;
        }
        let method = if after_breakpoint { Method::BackwardEuler } else { opts.method };

        let mut halvings = 0;
        let (x_new, iters) = loop {
            let t_end = if hits { target } else { t + h };
            let step = Step::new(t_end, h, method);
            match newton(&topo, &mut ws, &history, &x, &step, opts.gmin, opts) {
                Ok(ok) => break ok,
                Err(NewtonFailure::Singular(col)) => return Err(singular_error(&topo, col)),
                Err(NewtonFailure::Device(e)) => return Err(e.into()),
                Err(NewtonFailure::NoConvergence) => {
                    stats.rejected_steps += 1;
                    if halvings == opts.max_halvings {
                        return Err(SimError::NoConvergence { time: t + h, halvings });
                    }
                    halvings += 1;
                    h *= 0.5;
                    hits = false;
                }
            }
        };
        let t_end = if hits { target } else { t + h };
        let step = Step::new(t_end, h, method);
        topo.evaluate(&x_new, &history, &step, &mut currents, &mut next_history);
        std::mem::swap(&mut history, &mut next_history);
        x = x_new;
        t = t_end;

        stats.accepted_steps += 1;
        stats.newton_iterations += iters;
        stats.max_kcl_ratio = stats.max_kcl_ratio.max(topo.kcl_ratio(&x, &currents, opts.gmin, opts));
        energy.add_step(&topo, &x, &currents, &history, opts.gmin, h);
        times.push(t);
        record(&mut channels, &x, &currents, &history);
        if hits && target_is_corner {
            stats.breakpoint_samples.push(times.len() - 1);
            last_corner = t;
        }
        after_breakpoint = hits && target_is_corner;
    }

    Ok(Waveforms {
        times,
        channels,
        energy: Some(energy.finish(&topo)),
        stats,
    })
}
