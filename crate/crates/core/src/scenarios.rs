//! Buck-converter circuits for the six study phases, each built from the
//! previous one by a single pure transformation.
//!
//! Node names: `in` (converter input), `sw` (switching node), `out` (LC
//! output), `vout_f` (after the output filter), `drain` (between the loop
//! inductance and the switch), `rtn` (converter return once the negative
//! rail is lifted). LISN nodes are prefixed `lisnp_` / `lisnn_`.

use thiserror::Error;

use crate::devices::{epc_from_resonance, DiodeParams, Pwm, SwitchParams};
use crate::engine::{Capture, SolverOptions, LOAD_NAME};
use crate::netlist::{Circuit, Device, DeviceKind, Directives, NetlistError, Probe, Tran, GROUND};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("invalid parameter {name}: {msg}")]
    InvalidParameter { name: &'static str, msg: String },
    #[error("converter not in continuous conduction: load current {load:.4} A <= half ripple {half_ripple:.4} A")]
    NotContinuous { load: f64, half_ripple: f64 },
    #[error("circuit has no node '{0}'")]
    MissingNode(String),
    #[error("circuit has no device '{0}'")]
    MissingDevice(String),
    #[error("LISN already present")]
    LisnPresent,
    #[error("no LISN present")]
    LisnMissing,
    #[error("phase must be 1..=6, got {0}")]
    InvalidPhase(u8),
    #[error(transparent)]
    Netlist(#[from] NetlistError),
}

fn positive(name: &'static str, v: f64) -> Result<(), ScenarioError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ScenarioError::InvalidParameter {
            name,
            msg: format!("must be > 0, got {v}"),
        })
    }
}

fn non_negative(name: &'static str, v: f64) -> Result<(), ScenarioError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(ScenarioError::InvalidParameter {
            name,
            msg: format!("must be >= 0, got {v}"),
        })
    }
}

/// Freewheel diode of the ideal circuit: a sharp, low-drop knee.
pub const IDEAL_DIODE: DiodeParams = DiodeParams {
    is_sat: 2e-2,
    ideality: 1.0,
    vt: crate::devices::THERMAL_VOLTAGE,
    gmin: 1e-12,
};

/// Freewheel diode after non-idealities: a Schottky rectifier.
pub const REAL_DIODE: DiodeParams = DiodeParams {
    is_sat: 1e-2,
    ideality: 1.0,
    vt: crate::devices::THERMAL_VOLTAGE,
    gmin: 1e-12,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuckParams {
    pub vin: f64,
    pub fsw: f64,
    pub duty: f64,
    pub l_main: f64,
    pub c_out: f64,
    pub r_load: f64,
    pub c_in: f64,
    pub ron: f64,
    pub roff: f64,
    pub diode: DiodeParams,
    pub tstop: f64,
    pub dtmax: f64,
}

impl Default for BuckParams {
    fn default() -> Self {
        BuckParams {
            vin: 10.0,
            fsw: 100e3,
            duty: 0.5,
            l_main: 100e-6,
            c_out: 100e-6,
            r_load: 5.0,
            c_in: 10e-6,
            ron: 0.01,
            roff: 1e7,
            diode: IDEAL_DIODE,
            tstop: 10e-3,
            dtmax: 50e-9,
        }
    }
}

impl BuckParams {
    pub fn period(&self) -> f64 {
        1.0 / self.fsw
    }

    /// Inductor ripple `vin·D·(1−D)/(L·fsw)` in CCM.
    pub fn inductor_ripple(&self) -> f64 {
        self.vin * self.duty * (1.0 - self.duty) / (self.l_main * self.fsw)
    }

    /// Textbook output ripple `vout·(1−D)/(8·L·C·fsw²)` in CCM.
    pub fn output_ripple(&self) -> f64 {
        let vout = self.vin * self.duty;
        vout * (1.0 - self.duty) / (8.0 * self.l_main * self.c_out * self.fsw * self.fsw)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        positive("vin", self.vin)?;
        positive("fsw", self.fsw)?;
        positive("l_main", self.l_main)?;
        positive("c_out", self.c_out)?;
        positive("r_load", self.r_load)?;
        positive("c_in", self.c_in)?;
        positive("tstop", self.tstop)?;
        positive("dtmax", self.dtmax)?;
        if !(self.duty > 0.0 && self.duty < 1.0) {
            return Err(ScenarioError::InvalidParameter {
                name: "duty",
                msg: format!("must be in (0, 1), got {}", self.duty),
            });
        }
        let load = self.vin * self.duty / self.r_load;
        let half_ripple = self.inductor_ripple() / 2.0;
        if load <= half_ripple {
            return Err(ScenarioError::NotContinuous { load, half_ripple });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonIdealParams {
    pub diode: DiodeParams,
    pub trise: f64,
    pub tfall: f64,
    pub l_esr: f64,
    pub l_epc: f64,
    pub c_esr: f64,
    /// Commutation-loop inductance in series with the switch.
    pub l_loop: f64,
    pub r_loop: f64,
    /// Switch output capacitance (drain to switching node).
    pub c_oss: f64,
    /// Switching-node capacitance to ground.
    pub c_node: f64,
}

impl Default for NonIdealParams {
    fn default() -> Self {
        NonIdealParams {
            diode: REAL_DIODE,
            trise: 20e-9,
            tfall: 20e-9,
            l_esr: 50e-3,
            l_epc: epc_from_resonance(BuckParams::default().l_main, 100e6)
                .expect("positive constants"),
            c_esr: 10e-3,
            l_loop: 25e-9,
            r_loop: 0.01,
            c_oss: 100e-12,
            c_node: 100e-12,
        }
    }
}

impl NonIdealParams {
    /// Parameters under which [`apply_nonidealities`] is the identity on an
    /// ideal buck built with `diode`.
    pub fn ideal(diode: DiodeParams) -> Self {
        NonIdealParams {
            diode,
            trise: 0.0,
            tfall: 0.0,
            l_esr: 0.0,
            l_epc: 0.0,
            c_esr: 0.0,
            l_loop: 0.0,
            r_loop: 0.0,
            c_oss: 0.0,
            c_node: 0.0,
        }
    }

    /// Loop ringing frequency `1/(2π·√(l_loop·c_node))` with the switch on.
    pub fn ring_frequency(&self) -> f64 {
        1.0 / (2.0 * std::f64::consts::PI * (self.l_loop * self.c_node).sqrt())
    }

    /// Snubber from the characteristic-impedance rule: `R = √(l_loop/c_node)`,
    /// `C = 3·c_node`.
    pub fn snubber_design(&self) -> (f64, f64) {
        ((self.l_loop / self.c_node).sqrt(), 3.0 * self.c_node)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.diode.validate().map_err(|msg| ScenarioError::InvalidParameter { name: "diode", msg })?;
        non_negative("trise", self.trise)?;
        non_negative("tfall", self.tfall)?;
        non_negative("l_esr", self.l_esr)?;
        non_negative("l_epc", self.l_epc)?;
        non_negative("c_esr", self.c_esr)?;
        non_negative("l_loop", self.l_loop)?;
        non_negative("r_loop", self.r_loop)?;
        non_negative("c_oss", self.c_oss)?;
        non_negative("c_node", self.c_node)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rails {
    Positive,
    Negative,
    Both,
}

impl Rails {
    fn positive(self) -> bool {
        matches!(self, Rails::Positive | Rails::Both)
    }

    fn negative(self) -> bool {
        matches!(self, Rails::Negative | Rails::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LisnParams {
    pub l_lisn: f64,
    pub c_coupling: f64,
    pub c_bulk: f64,
    pub r_damp: f64,
    pub r_port: f64,
    pub applied_rails: Rails,
    /// Converter return to earth, added when the negative rail is lifted.
    pub c_earth: f64,
}

impl Default for LisnParams {
    fn default() -> Self {
        LisnParams {
            l_lisn: 50e-6,
            c_coupling: 0.1e-6,
            c_bulk: 1e-6,
            r_damp: 5.0,
            r_port: 50.0,
            applied_rails: Rails::Both,
            c_earth: 100e-12,
        }
    }
}

impl LisnParams {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        positive("l_lisn", self.l_lisn)?;
        positive("c_coupling", self.c_coupling)?;
        positive("c_bulk", self.c_bulk)?;
        positive("r_damp", self.r_damp)?;
        positive("r_port", self.r_port)?;
        positive("c_earth", self.c_earth)
    }
}

pub const LISN_PORT_P: &str = "lisnp_port";
pub const LISN_PORT_N: &str = "lisnn_port";
const RTN: &str = "rtn";

fn rebuilt(c: &Circuit, devices: Vec<Device>, extra_probes: &[Probe]) -> Result<Circuit, ScenarioError> {
    let mut directives = c.directives().clone();
    for p in extra_probes {
        if !directives.probes.contains(p) {
            directives.probes.push(p.clone());
        }
    }
    Ok(c.with_parts(devices, directives)?)
}

fn require_node(c: &Circuit, node: &str) -> Result<(), ScenarioError> {
    if c.has_node(node) {
        Ok(())
    } else {
        Err(ScenarioError::MissingNode(node.to_string()))
    }
}

/// The node every converter-side shunt returns to.
fn return_node(c: &Circuit) -> &'static str {
    if c.has_node(RTN) {
        RTN
    } else {
        GROUND
    }
}

fn has_lisn(c: &Circuit) -> bool {
    c.has_node(LISN_PORT_P) || c.has_node(LISN_PORT_N)
}

/// Source, input capacitor, switch, freewheel diode, inductor, output
/// capacitor and load, with every parasitic and edge time at zero.
pub fn build_buck_ideal(p: &BuckParams) -> Result<Circuit, ScenarioError> {
    p.validate()?;
    let sw = SwitchParams {
        ron: p.ron,
        roff: p.roff,
        pwm: Pwm {
            freq: p.fsw,
            duty: p.duty,
            trise: 0.0,
            tfall: 0.0,
            phase: 0.0,
        },
    };
    let devices = vec![
        Device::new("V1", "in", GROUND, DeviceKind::VSource { dc: p.vin, rs: 0.0, ls: 0.0 }),
        Device::new("Cin", "in", GROUND, DeviceKind::Capacitor { c: p.c_in, esr: 0.0 }),
        Device::new("S1", "in", "sw", DeviceKind::Switch(sw)),
        Device::new("D1", GROUND, "sw", DeviceKind::Diode(p.diode)),
        Device::new("L1", "sw", "out", DeviceKind::Inductor { l: p.l_main, esr: 0.0, epc: 0.0 }),
        Device::new("Cout", "out", GROUND, DeviceKind::Capacitor { c: p.c_out, esr: 0.0 }),
        Device::new("Rload", "out", GROUND, DeviceKind::Resistor { r: p.r_load }),
    ];
    let directives = Directives {
        tran: Some(Tran {
            tstop: p.tstop,
            dtmax: p.dtmax,
        }),
        probes: vec![
            Probe::voltage("out"),
            Probe::voltage("sw"),
            Probe::voltage("in"),
            Probe::current("L1"),
        ],
    };
    Ok(Circuit::new("phase1 ideal buck", devices, directives)?)
}

/// Edge times on the switch, a real diode, ESR/EPC on the main inductor,
/// ESR on the output capacitor, plus the commutation loop: `l_loop` between
/// `in` and the switch, `c_oss` across the switch and `c_node` from the
/// switching node to ground. Zero-valued parasitics add nothing.
pub fn apply_nonidealities(c: &Circuit, p: &NonIdealParams) -> Result<Circuit, ScenarioError> {
    p.validate()?;
    let switch = c.device("S1").ok_or_else(|| ScenarioError::MissingDevice("S1".into()))?;
    let (drain, sw_node) = (switch.n1.clone(), switch.n2.clone());
    let loop_node = if p.l_loop > 0.0 { "drain".to_string() } else { drain.clone() };
    let mut devices = Vec::new();
    for d in c.devices() {
        let mut d = d.clone();
        let key = d.key();
        match (&mut d.kind, key.as_str()) {
            (DeviceKind::Switch(s), "s1") => {
                s.pwm.trise = p.trise;
                s.pwm.tfall = p.tfall;
                d.n1 = loop_node.clone();
            }
            (DeviceKind::Diode(dp), "d1") => *dp = p.diode,
            (DeviceKind::Inductor { esr, epc, .. }, "l1") => {
                *esr = p.l_esr;
                *epc = p.l_epc;
            }
            (DeviceKind::Capacitor { esr, .. }, "cout") => *esr = p.c_esr,
            _ => {}
        }
        let is_switch = d.key() == "s1";
        devices.push(d);
        if is_switch {
            if p.l_loop > 0.0 {
                devices.push(Device::new(
                    "Lloop",
                    &drain,
                    &loop_node,
                    DeviceKind::Inductor { l: p.l_loop, esr: p.r_loop, epc: 0.0 },
                ));
            }
            if p.c_oss > 0.0 {
                devices.push(Device::new(
                    "Coss",
                    &loop_node,
                    &sw_node,
                    DeviceKind::Capacitor { c: p.c_oss, esr: 0.0 },
                ));
            }
            if p.c_node > 0.0 {
                devices.push(Device::new(
                    "Csw",
                    &sw_node,
                    return_node(c),
                    DeviceKind::Capacitor { c: p.c_node, esr: 0.0 },
                ));
            }
        }
    }
    rebuilt(c, devices, &[])
}

/// Series `l` from `out` to a new node `vout_f`, shunt `cap` at `vout_f`;
/// the load moves to `vout_f`.
pub fn add_output_lc_filter(c: &Circuit, l: f64, cap: f64) -> Result<Circuit, ScenarioError> {
    positive("l", l)?;
    positive("cap", cap)?;
    require_node(c, "out")?;
    let rtn = return_node(c);
    let mut devices: Vec<Device> = c
        .devices()
        .iter()
        .map(|d| {
            let mut d = d.clone();
            if d.key() == LOAD_NAME && d.n1 == "out" {
                d.n1 = "vout_f".into();
            }
            d
        })
        .collect();
    devices.push(Device::new("Lf", "out", "vout_f", DeviceKind::Inductor { l, esr: 0.0, epc: 0.0 }));
    devices.push(Device::new("Cf", "vout_f", rtn, DeviceKind::Capacitor { c: cap, esr: 0.0 }));
    rebuilt(c, devices, &[Probe::voltage("vout_f")])
}

/// Series R–C from the switching node to ground.
pub fn add_snubber(c: &Circuit, r: f64, cap: f64) -> Result<Circuit, ScenarioError> {
    positive("r", r)?;
    positive("cap", cap)?;
    require_node(c, "sw")?;
    let mut devices = c.devices().to_vec();
    devices.push(Device::new("Rsnub", "sw", "snub", DeviceKind::Resistor { r }));
    devices.push(Device::new(
        "Csnub",
        "snub",
        return_node(c),
        DeviceKind::Capacitor { c: cap, esr: 0.0 },
    ));
    rebuilt(c, devices, &[])
}

/// Gives the supply `V1` series lead resistance `rs` and inductance `ls`.
pub fn add_source_leads(c: &Circuit, rs: f64, ls: f64) -> Result<Circuit, ScenarioError> {
    non_negative("rs", rs)?;
    non_negative("ls", ls)?;
    if c.device("V1").is_none() {
        return Err(ScenarioError::MissingDevice("V1".into()));
    }
    let devices = c
        .devices()
        .iter()
        .map(|d| {
            let mut d = d.clone();
            let key = d.key();
            if let (DeviceKind::VSource { rs: r, ls: l, .. }, "v1") = (&mut d.kind, key.as_str()) {
                *r = rs;
                *l = ls;
            }
            d
        })
        .collect();
    rebuilt(c, devices, &[])
}

fn lisn_rail(
    devices: &mut Vec<Device>,
    p: &LisnParams,
    tag: char,
    source_side: &str,
    converter_side: &str,
) {
    let node = |s: &str| format!("lisn{tag}_{s}");
    let (bulk, port) = (node("bulk"), node("port"));
    devices.push(Device::new(
        format!("Llisn{tag}"),
        source_side,
        converter_side,
        DeviceKind::Inductor { l: p.l_lisn, esr: 0.0, epc: 0.0 },
    ));
    devices.push(Device::new(
        format!("Cbulk{tag}"),
        source_side,
        &bulk,
        DeviceKind::Capacitor { c: p.c_bulk, esr: 0.0 },
    ));
    devices.push(Device::new(format!("Rdamp{tag}"), &bulk, GROUND, DeviceKind::Resistor { r: p.r_damp }));
    devices.push(Device::new(
        format!("Ccoup{tag}"),
        converter_side,
        &port,
        DeviceKind::Capacitor { c: p.c_coupling, esr: 0.0 },
    ));
    devices.push(Device::new(format!("Rport{tag}"), &port, GROUND, DeviceKind::Resistor { r: p.r_port }));
}

/// Inserts a LISN between the supply and the converter on the selected
/// rails. Lifting the negative rail moves every converter connection to
/// ground onto `rtn`, tied to earth only through `c_earth`.
pub fn add_lisn(c: &Circuit, p: &LisnParams) -> Result<Circuit, ScenarioError> {
    p.validate()?;
    if has_lisn(c) {
        return Err(ScenarioError::LisnPresent);
    }
    let source = c.device("V1").ok_or_else(|| ScenarioError::MissingDevice("V1".into()))?;
    let (pos, neg) = (source.n1.clone(), source.n2.clone());
    if neg != GROUND {
        return Err(ScenarioError::MissingNode(GROUND.into()));
    }
    let lift = p.applied_rails.negative();
    let mut devices: Vec<Device> = c
        .devices()
        .iter()
        .map(|d| {
            let mut d = d.clone();
            if d.key() == "v1" {
                if p.applied_rails.positive() {
                    d.n1 = "lisnp_src".into();
                }
                if lift {
                    d.n2 = "lisnn_src".into();
                }
            } else if lift {
                for n in [&mut d.n1, &mut d.n2] {
                    if n == GROUND {
                        *n = RTN.into();
                    }
                }
            }
            d
        })
        .collect();
    let mut probes = Vec::new();
    if p.applied_rails.positive() {
        lisn_rail(&mut devices, p, 'p', "lisnp_src", &pos);
        probes.push(Probe::voltage(LISN_PORT_P));
    }
    if lift {
        lisn_rail(&mut devices, p, 'n', "lisnn_src", RTN);
        devices.push(Device::new(
            "Cearth",
            RTN,
            GROUND,
            DeviceKind::Capacitor { c: p.c_earth, esr: 0.0 },
        ));
        probes.push(Probe::voltage(LISN_PORT_N));
        probes.push(Probe::voltage(RTN));
    }
    rebuilt(c, devices, &probes)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiParams {
    pub l: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for PiParams {
    fn default() -> Self {
        PiParams {
            l: 10e-6,
            c1: 10e-6,
            c2: 10e-6,
        }
    }
}

/// C–L–C network between the positive LISN and the converter input `in`;
/// the LISN's converter-side terminal becomes `pi_in`.
pub fn add_input_pi_filter(c: &Circuit, l: f64, c1: f64, c2: f64) -> Result<Circuit, ScenarioError> {
    positive("l", l)?;
    positive("c1", c1)?;
    positive("c2", c2)?;
    if !c.has_node(LISN_PORT_P) {
        return Err(ScenarioError::LisnMissing);
    }
    require_node(c, "in")?;
    let rtn = return_node(c);
    let mut devices: Vec<Device> = c
        .devices()
        .iter()
        .map(|d| {
            let mut d = d.clone();
            if matches!(d.key().as_str(), "llisnp" | "ccoupp") {
                for n in [&mut d.n1, &mut d.n2] {
                    if n == "in" {
                        *n = "pi_in".into();
                    }
                }
            }
            d
        })
        .collect();
    devices.push(Device::new("Cpi1", "pi_in", rtn, DeviceKind::Capacitor { c: c1, esr: 0.0 }));
    devices.push(Device::new("Lpi", "pi_in", "in", DeviceKind::Inductor { l, esr: 0.0, epc: 0.0 }));
    devices.push(Device::new("Cpi2", "in", rtn, DeviceKind::Capacitor { c: c2, esr: 0.0 }));
    rebuilt(c, devices, &[])
}

/// Parameters of every phase; `None` skips that transformation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseConfig {
    pub buck: BuckParams,
    pub nonideal: NonIdealParams,
    pub lc_filter: (f64, f64),
    /// `None` derives the snubber from [`NonIdealParams::snubber_design`].
    pub snubber: Option<(f64, f64)>,
    pub leads: (f64, f64),
    pub lisn: LisnParams,
    pub pi: Option<PiParams>,
    /// Length of the uniformly fine-stepped tail recorded for spectra.
    pub capture_periods: usize,
    pub capture_step: f64,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        PhaseConfig {
            buck: BuckParams::default(),
            nonideal: NonIdealParams::default(),
            lc_filter: (1e-6, 10e-6),
            snubber: None,
            leads: (0.1, 1e-6),
            lisn: LisnParams::default(),
            pi: Some(PiParams::default()),
            capture_periods: 10,
            capture_step: 0.5e-9,
        }
    }
}

impl PhaseConfig {
    pub fn snubber_values(&self) -> (f64, f64) {
        self.snubber.unwrap_or_else(|| self.nonideal.snubber_design())
    }

    /// Start of the fine-stepped analysis tail.
    pub fn capture_start(&self) -> f64 {
        (self.buck.tstop - self.capture_periods as f64 * self.buck.period()).max(0.0)
    }

    /// Solver options shared by all phases.
    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            capture: (self.capture_periods > 0).then(|| Capture {
                start: self.capture_start(),
                step: self.capture_step,
            }),
            ..SolverOptions::default()
        }
    }
}

/// Phase `n` of the study: 1 ideal buck, 2 non-idealities, 3 output LC
/// filter, 4 snubber, 5 source leads, 6 LISN on both rails and input π
/// filter.
pub fn phase_preset(n: u8, cfg: &PhaseConfig) -> Result<Circuit, ScenarioError> {
    if !(1..=6).contains(&n) {
        return Err(ScenarioError::InvalidPhase(n));
    }
    let mut c = build_buck_ideal(&cfg.buck)?;
    if n >= 2 {
        c = apply_nonidealities(&c, &cfg.nonideal)?;
    }
    if n >= 3 {
        c = add_output_lc_filter(&c, cfg.lc_filter.0, cfg.lc_filter.1)?;
    }
    if n >= 4 {
        let (r, cap) = cfg.snubber_values();
        c = add_snubber(&c, r, cap)?;
    }
    if n >= 5 {
        c = add_source_leads(&c, cfg.leads.0, cfg.leads.1)?;
    }
    if n >= 6 {
        c = add_lisn(&c, &cfg.lisn)?;
        if let Some(pi) = cfg.pi {
            c = add_input_pi_filter(&c, pi.l, pi.c1, pi.c2)?;
        }
    }
    let title = match n {
        1 => "phase1 ideal buck",
        2 => "phase2 non-ideal devices",
        3 => "phase3 output LC filter",
        4 => "phase4 RC snubber",
        5 => "phase5 source leads",
        _ => "phase6 LISN and input pi filter",
    };
    Ok(Circuit::new(title, c.devices().to_vec(), c.directives().clone())?)
}

/// Node carrying the converter output that feeds the load.
pub fn load_node(c: &Circuit) -> Option<&str> {
    c.device(LOAD_NAME).map(|d| d.n1.as_str())
}

/// Voltage channels whose difference is the converter's output voltage:
/// the load node and, once the return is lifted off earth, `rtn`.
pub fn output_channels(c: &Circuit) -> Option<(String, Option<String>)> {
    let load = c.device(LOAD_NAME)?;
    let reference = (load.n2 != GROUND).then(|| format!("v({})", load.n2));
    Some((format!("v({})", load.n1), reference))
}

/// Voltage channels across the converter input capacitor.
pub fn input_channels(c: &Circuit) -> (String, Option<String>) {
    let reference = c.has_node(RTN).then(|| format!("v({RTN})"));
    ("v(in)".to_string(), reference)
}
