//! Device constitutive equations and discrete-time companion models.
//!
//! Every element is stamped through [`stamp_into`], which writes conductance
//! and right-hand-side entries into any [`StampSink`]. The engine stamps
//! straight into its dense matrix; [`companion_stamp`] collects the same
//! entries into a [`CompanionStamp`] for inspection.

use std::f64::consts::PI;

use thiserror::Error;

use crate::netlist::DeviceKind;

/// Thermal voltage at 300 K.
pub const THERMAL_VOLTAGE: f64 = 0.02585;

/// Largest exponent argument evaluated exactly; beyond it the diode
/// current is extrapolated linearly.
pub const EXP_LIMIT: f64 = 80.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DeviceError {
    #[error("timestep must be > 0, got {0}")]
    NonPositiveStep(f64),
    #[error("{0} must be > 0")]
    NonPositive(&'static str),
    #[error("device state does not match its kind")]
    StateMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiodeParams {
    pub is_sat: f64,
    pub ideality: f64,
    pub vt: f64,
    pub gmin: f64,
}

impl Default for DiodeParams {
    fn default() -> Self {
        DiodeParams {
            is_sat: 1e-14,
            ideality: 1.0,
            vt: THERMAL_VOLTAGE,
            gmin: 1e-12,
        }
    }
}

impl DiodeParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.is_sat > 0.0 && self.is_sat.is_finite()) {
            return Err(format!("saturation current must be > 0, got {}", self.is_sat));
        }
        if !(1.0..=2.0).contains(&self.ideality) {
            return Err(format!("ideality must be in [1, 2], got {}", self.ideality));
        }
        if !(self.gmin > 0.0 && self.vt > 0.0) {
            return Err("gmin and vt must be > 0".into());
        }
        Ok(())
    }

    fn nvt(&self) -> f64 {
        self.ideality * self.vt
    }

    /// Junction voltage above which the exponential grows fast enough to
    /// need Newton step limiting.
    pub fn critical_voltage(&self) -> f64 {
        let nvt = self.nvt();
        nvt * (nvt / (std::f64::consts::SQRT_2 * self.is_sat)).ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiodeEval {
    pub current: f64,
    pub conductance: f64,
}

/// Shockley diode with a parallel `gmin`, linearly extrapolated past
/// [`EXP_LIMIT`] so the current stays finite and C¹.
pub fn diode_eval(v: f64, p: &DiodeParams) -> DiodeEval {
    let nvt = p.nvt();
    let x = v / nvt;
    let (current, conductance) = if x > EXP_LIMIT {
        let e = EXP_LIMIT.exp();
        (p.is_sat * (e * (1.0 + x - EXP_LIMIT) - 1.0), p.is_sat * e / nvt)
    } else {
        let e = x.exp();
        (p.is_sat * (e - 1.0), p.is_sat * e / nvt)
    };
    DiodeEval {
        current: current + p.gmin * v,
        conductance: conductance + p.gmin,
    }
}

/// SPICE-style junction limiting: caps the per-iteration growth of a
/// forward-biased junction voltage to a logarithmic step.
pub fn limit_junction_voltage(v_new: f64, v_old: f64, p: &DiodeParams) -> f64 {
    let nvt = p.nvt();
    let vcrit = p.critical_voltage();
    if v_new > vcrit && (v_new - v_old).abs() > 2.0 * nvt {
        if v_old > 0.0 {
            let arg = 1.0 + (v_new - v_old) / nvt;
            if arg > 0.0 {
                v_old + nvt * arg.ln()
            } else {
                vcrit
            }
        } else {
            nvt * (v_new / nvt).ln()
        }
    } else {
        v_new
    }
}

/// Trapezoidal PWM gate timing. Within one period the switch ramps on over
/// `trise`, stays on until `duty/freq`, ramps off over `tfall`, then stays off.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pwm {
    pub freq: f64,
    pub duty: f64,
    pub trise: f64,
    pub tfall: f64,
    pub phase: f64,
}

impl Pwm {
    pub fn period(&self) -> f64 {
        1.0 / self.freq
    }

    /// Offsets of the four gate corners within a period.
    pub fn corners(&self) -> [f64; 4] {
        let on = self.duty * self.period();
        [0.0, self.trise, on, on + self.tfall]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchParams {
    pub ron: f64,
    pub roff: f64,
    pub pwm: Pwm,
}

impl Default for SwitchParams {
    fn default() -> Self {
        SwitchParams {
            ron: 0.05,
            roff: 1e7,
            pwm: Pwm {
                freq: 100e3,
                duty: 0.5,
                trise: 0.0,
                tfall: 0.0,
                phase: 0.0,
            },
        }
    }
}

impl SwitchParams {
    pub fn validate(&self) -> Result<(), String> {
        let pwm = &self.pwm;
        if !(self.ron > 0.0 && self.ron < self.roff && self.roff.is_finite()) {
            return Err(format!("need 0 < ron < roff, got ron={} roff={}", self.ron, self.roff));
        }
        if !(pwm.freq > 0.0 && pwm.freq.is_finite()) {
            return Err(format!("pwm frequency must be > 0, got {}", pwm.freq));
        }
        if !(pwm.duty > 0.0 && pwm.duty < 1.0) {
            return Err(format!("duty must be in (0, 1), got {}", pwm.duty));
        }
        let period = pwm.period();
        if !(pwm.trise >= 0.0 && pwm.tfall >= 0.0 && pwm.phase.is_finite()) {
            return Err("trise, tfall must be >= 0 and phase finite".into());
        }
        if pwm.trise >= pwm.duty * period || pwm.tfall >= (1.0 - pwm.duty) * period {
            return Err("rise/fall edges do not fit inside the on/off intervals".into());
        }
        Ok(())
    }

    /// Switch resistance at time `t`: `roff` when off, `ron` when on and a
    /// log-linear ramp between them during the edges.
    pub fn resistance_at(&self, t: f64) -> f64 {
        let pwm = &self.pwm;
        let period = pwm.period();
        let tau = (t - pwm.phase).rem_euclid(period);
        let [_, rise_end, fall_start, fall_end] = pwm.corners();
        let ramp = |frac: f64| self.ron.powf(frac) * self.roff.powf(1.0 - frac);
        if tau < rise_end {
            ramp(tau / pwm.trise)
        } else if tau < fall_start {
            self.ron
        } else if tau < fall_end {
            ramp(1.0 - (tau - fall_start) / pwm.tfall)
        } else {
            self.roff
        }
    }
}

/// Gate conductance of a PWM switch at time `t`.
pub fn switch_conductance_at(t: f64, p: &SwitchParams) -> f64 {
    1.0 / p.resistance_at(t)
}

/// Parallel capacitance that self-resonates with `l` at `f_res`.
pub fn epc_from_resonance(l: f64, f_res: f64) -> Result<f64, DeviceError> {
    if !(l > 0.0) {
        return Err(DeviceError::NonPositive("inductance"));
    }
    if !(f_res > 0.0) {
        return Err(DeviceError::NonPositive("resonance frequency"));
    }
    let w = 2.0 * PI * f_res;
    Ok(1.0 / (w * w * l))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Operating point: capacitors open, inductors short.
    Dc,
    BackwardEuler,
    Trapezoidal,
}

/// Capacitor history: voltage across the ideal capacitance (excluding ESR)
/// and the current through it.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CapState {
    pub v: f64,
    pub i: f64,
}

/// Inductor history: branch current and the voltage across the ideal
/// inductance (excluding ESR).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IndState {
    pub i: f64,
    pub v: f64,
}

/// Per-device integration history, owned by the engine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeviceState {
    Memoryless,
    Capacitor(CapState),
    Inductor { flux: IndState, epc: CapState },
    Source(IndState),
}

impl DeviceState {
    pub fn zero_for(kind: &DeviceKind) -> Self {
        match kind {
            DeviceKind::Capacitor { .. } => DeviceState::Capacitor(CapState::default()),
            DeviceKind::Inductor { .. } => DeviceState::Inductor {
                flux: IndState::default(),
                epc: CapState::default(),
            },
            DeviceKind::VSource { .. } => DeviceState::Source(IndState::default()),
            _ => DeviceState::Memoryless,
        }
    }
}

/// Norton companion of a capacitor with series ESR: `i = g·v − i_hist`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norton {
    pub g: f64,
    pub i_hist: f64,
}

pub fn capacitor_companion(c: f64, esr: f64, st: CapState, dt: f64, method: Method) -> Norton {
    let (geq, vc_eff) = match method {
        Method::Dc => return Norton { g: 0.0, i_hist: 0.0 },
        Method::BackwardEuler => (c / dt, st.v),
        Method::Trapezoidal => {
            let geq = 2.0 * c / dt;
            (geq, st.v + st.i / geq)
        }
    };
    let g = 1.0 / (esr + 1.0 / geq);
    Norton { g, i_hist: g * vc_eff }
}

/// State after a step given the terminal voltage the solver settled on.
pub fn capacitor_advance(norton: Norton, esr: f64, v: f64) -> CapState {
    let i = norton.g * v - norton.i_hist;
    CapState { v: v - esr * i, i }
}

/// Branch-current companion of a series L–ESR element:
/// `va − vb − r_eq·i = e − v_hist`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchCompanion {
    pub r_eq: f64,
    pub v_hist: f64,
}

pub fn inductor_companion(l: f64, esr: f64, st: IndState, dt: f64, method: Method) -> BranchCompanion {
    match method {
        Method::Dc => BranchCompanion { r_eq: esr, v_hist: 0.0 },
        Method::BackwardEuler => {
            let req = l / dt;
            BranchCompanion { r_eq: esr + req, v_hist: req * st.i }
        }
        Method::Trapezoidal => {
            let req = 2.0 * l / dt;
            BranchCompanion {
                r_eq: esr + req,
                v_hist: req * st.i + st.v,
            }
        }
    }
}

pub fn inductor_advance(esr: f64, v_branch: f64, i: f64) -> IndState {
    IndState { i, v: v_branch - esr * i }
}

/// Receives matrix and right-hand-side contributions.
pub trait StampSink {
    fn add_matrix(&mut self, row: usize, col: usize, value: f64);
    fn add_rhs(&mut self, row: usize, value: f64);
}

/// Collected companion-model contributions of one device.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CompanionStamp {
    pub conductance: Vec<(usize, usize, f64)>,
    pub current: Vec<(usize, f64)>,
}

impl StampSink for CompanionStamp {
    fn add_matrix(&mut self, row: usize, col: usize, value: f64) {
        self.conductance.push((row, col, value));
    }

    fn add_rhs(&mut self, row: usize, value: f64) {
        self.current.push((row, value));
    }
}

/// Where a device sits in the MNA unknown vector, plus the evaluation point.
/// `None` terminals are ground.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StampContext {
    pub a: Option<usize>,
    pub b: Option<usize>,
    /// Branch-current unknown for inductors and sources.
    pub branch: Option<usize>,
    pub t: f64,
    pub dt: f64,
    pub method: Method,
    /// Linearization voltage `va − vb` for nonlinear devices.
    pub v_op: f64,
}

fn stamp_conductance(sink: &mut impl StampSink, a: Option<usize>, b: Option<usize>, g: f64) {
    if let Some(a) = a {
        sink.add_matrix(a, a, g);
    }
    if let Some(b) = b {
        sink.add_matrix(b, b, g);
    }
    if let (Some(a), Some(b)) = (a, b) {
        sink.add_matrix(a, b, -g);
        sink.add_matrix(b, a, -g);
    }
}

/// Current `i` injected into node `a` and drawn from node `b`.
fn stamp_current(sink: &mut impl StampSink, a: Option<usize>, b: Option<usize>, i: f64) {
    if let Some(a) = a {
        sink.add_rhs(a, i);
    }
    if let Some(b) = b {
        sink.add_rhs(b, -i);
    }
}

fn stamp_branch(
    sink: &mut impl StampSink,
    ctx: &StampContext,
    k: usize,
    companion: BranchCompanion,
    emf: f64,
) {
    if let Some(a) = ctx.a {
        sink.add_matrix(a, k, 1.0);
        sink.add_matrix(k, a, 1.0);
    }
    if let Some(b) = ctx.b {
        sink.add_matrix(b, k, -1.0);
        sink.add_matrix(k, b, -1.0);
    }
    sink.add_matrix(k, k, -companion.r_eq);
    sink.add_rhs(k, emf - companion.v_hist);
}

/// Stamps one device. Capacitor ESR and inductor EPC are folded into the
/// same element; nonlinear devices are linearized at `ctx.v_op`.
pub fn stamp_into(
    kind: &DeviceKind,
    state: &DeviceState,
    ctx: &StampContext,
    sink: &mut impl StampSink,
) -> Result<(), DeviceError> {
    if ctx.method != Method::Dc && !(ctx.dt > 0.0) {
        return Err(DeviceError::NonPositiveStep(ctx.dt));
    }
    let branch = || ctx.branch.ok_or(DeviceError::StateMismatch);
    match (kind, state) {
        (DeviceKind::Resistor { r }, _) => stamp_conductance(sink, ctx.a, ctx.b, 1.0 / r),
        (DeviceKind::Capacitor { c, esr }, DeviceState::Capacitor(st)) => {
            let n = capacitor_companion(*c, *esr, *st, ctx.dt, ctx.method);
            stamp_conductance(sink, ctx.a, ctx.b, n.g);
            stamp_current(sink, ctx.a, ctx.b, n.i_hist);
        }
        (DeviceKind::Inductor { l, esr, epc }, DeviceState::Inductor { flux, epc: epc_st }) => {
            let comp = inductor_companion(*l, *esr, *flux, ctx.dt, ctx.method);
            stamp_branch(sink, ctx, branch()?, comp, 0.0);
            if *epc > 0.0 {
                let n = capacitor_companion(*epc, 0.0, *epc_st, ctx.dt, ctx.method);
                stamp_conductance(sink, ctx.a, ctx.b, n.g);
                stamp_current(sink, ctx.a, ctx.b, n.i_hist);
            }
        }
        (DeviceKind::VSource { dc, rs, ls }, DeviceState::Source(st)) => {
            let lead = if *ls > 0.0 {
                inductor_companion(*ls, *rs, *st, ctx.dt, ctx.method)
            } else {
                BranchCompanion { r_eq: *rs, v_hist: 0.0 }
            };
            stamp_branch(sink, ctx, branch()?, lead, *dc);
        }
        (DeviceKind::Diode(p), _) => {
            let e = diode_eval(ctx.v_op, p);
            stamp_conductance(sink, ctx.a, ctx.b, e.conductance);
            stamp_current(sink, ctx.a, ctx.b, e.conductance * ctx.v_op - e.current);
        }
        (DeviceKind::Switch(p), _) => {
            stamp_conductance(sink, ctx.a, ctx.b, switch_conductance_at(ctx.t, p));
        }
        _ => return Err(DeviceError::StateMismatch),
    }
    Ok(())
}

/// Collects the companion-model entries of one device.
pub fn companion_stamp(
    kind: &DeviceKind,
    state: &DeviceState,
    ctx: &StampContext,
) -> Result<CompanionStamp, DeviceError> {
    let mut stamp = CompanionStamp::default();
    stamp_into(kind, state, ctx, &mut stamp)?;
    Ok(stamp)
}
