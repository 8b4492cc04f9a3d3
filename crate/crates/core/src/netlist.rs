//! Circuit data model and the SPICE-subset netlist format.
//!
//! ```text
//! * comment
//! .title <free text>
//! R<name> n1 n2 <value>
//! C<name> n1 n2 <value> [esr=<ohm>]
//! L<name> n1 n2 <value> [esr=<ohm>] [epc=<farad>]
//! D<name> n+ n- [is=<amp>] [n=<ideality>]
//! S<name> n1 n2 [ron=<ohm>] [roff=<ohm>] ctrl=pwm(<f>,<duty>,<trise>,<tfall>[,<phase>])
//! V<name> n+ n- dc=<volt> [rs=<ohm>] [ls=<henry>]
//! .tran <tstop> <dtmax>
//! .probe v(<node>) i(<device>) ...
//! .end
//! ```
//!
//! Values accept the engineering suffixes `f p n u m k meg g t`, case-insensitive.
//! Ground is the literal node `0`. Node and device names are case-insensitive;
//! node names are stored lower-cased.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

use crate::devices::{DiodeParams, Pwm, SwitchParams};

pub const GROUND: &str = "0";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetlistError {
    #[error("line {line}: syntax error: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown device prefix '{prefix}'")]
    UnknownPrefix { line: usize, prefix: char },
    #[error("line {line}: malformed value '{token}'")]
    MalformedValue { line: usize, token: String },
    #[error("line {line}: duplicate device name '{name}'")]
    DuplicateName { line: usize, name: String },
    #[error("device {name}: {msg}")]
    InvalidParameter { name: String, msg: String },
    #[error("probe {probe} references an unknown node or device")]
    UnknownProbe { probe: String },
    #[error("invalid .tran directive: {0}")]
    InvalidTran(String),
}

/// Error returned by [`parse_value`] when a token is not a number with an
/// optional engineering suffix.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("malformed value '{0}'")]
pub struct ValueError(pub String);

/// Parses a number with an optional engineering suffix into SI units.
///
/// `meg` is 1e6 and `m` is 1e-3; suffixes are case-insensitive.
pub fn parse_value(token: &str) -> Result<f64, ValueError> {
    let err = || ValueError(token.to_string());
    let bytes = token.as_bytes();
    let mut i = 0;
    if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
        i += 1;
    }
    let digits_start = i;
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    let mut mantissa_digits = i - digits_start;
    if i < bytes.len() && bytes[i] == b'.' {
        i += 1;
        let frac_start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        mantissa_digits += i - frac_start;
    }
    if mantissa_digits == 0 {
        return Err(err());
    }
    let mantissa_end = i;
    let mut exponent: i32 = 0;
    // Exponent only if 'e' is followed by an optional sign and at least one digit.
    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
        let mut j = i + 1;
        if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
            j += 1;
        }
        let exp_start = j;
        while j < bytes.len() && bytes[j].is_ascii_digit() {
            j += 1;
        }
        if j == exp_start {
            return Err(err());
        }
        exponent = token[i + 1..j].parse().map_err(|_| err())?;
        i = j;
    }
    let shift = match token[i..].to_ascii_lowercase().as_str() {
        "" => 0,
        "f" => -15,
        "p" => -12,
        "n" => -9,
        "u" => -6,
        "m" => -3,
        "k" => 3,
        "meg" => 6,
        "g" => 9,
        "t" => 12,
        _ => return Err(err()),
    };
    // Folding the suffix into the decimal exponent keeps `10u` == `1e-5` exactly.
    let exponent = exponent.checked_add(shift).ok_or_else(err)?;
    format!("{}e{exponent}", &token[..mantissa_end])
        .parse()
        .map_err(|_| err())
}

/// Formats a value so that [`parse_value`] recovers it bit-exactly.
pub fn format_value(x: f64) -> String {
    format!("{x:e}")
}

#[derive(Debug, Clone, PartialEq)]
pub enum DeviceKind {
    Resistor { r: f64 },
    Capacitor { c: f64, esr: f64 },
    Inductor { l: f64, esr: f64, epc: f64 },
    Diode(DiodeParams),
    Switch(SwitchParams),
    VSource { dc: f64, rs: f64, ls: f64 },
}

impl DeviceKind {
    pub fn prefix(&self) -> char {
        match self {
            DeviceKind::Resistor { .. } => 'R',
            DeviceKind::Capacitor { .. } => 'C',
            DeviceKind::Inductor { .. } => 'L',
            DeviceKind::Diode(_) => 'D',
            DeviceKind::Switch(_) => 'S',
            DeviceKind::VSource { .. } => 'V',
        }
    }

    /// True for elements carrying charge or flux state between timesteps.
    pub fn is_reactive(&self) -> bool {
        match self {
            DeviceKind::Capacitor { .. } | DeviceKind::Inductor { .. } => true,
            DeviceKind::VSource { ls, .. } => *ls > 0.0,
            _ => false,
        }
    }
}

/// A two-terminal circuit element. For diodes and sources `n1` is the
/// positive terminal.
#[derive(Debug, Clone, PartialEq)]
pub struct Device {
    pub name: String,
    pub n1: String,
    pub n2: String,
    pub kind: DeviceKind,
}

impl Device {
    pub fn new(name: impl Into<String>, n1: &str, n2: &str, kind: DeviceKind) -> Self {
        Device {
            name: name.into(),
            n1: n1.to_ascii_lowercase(),
            n2: n2.to_ascii_lowercase(),
            kind,
        }
    }

    pub fn key(&self) -> String {
        self.name.to_ascii_lowercase()
    }

    fn check(&self) -> Result<(), String> {
        fn positive(what: &str, v: f64) -> Result<(), String> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(format!("{what} must be > 0, got {v}"))
            }
        }
        fn non_negative(what: &str, v: f64) -> Result<(), String> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(format!("{what} must be >= 0, got {v}"))
            }
        }
        if self.n1 == self.n2 {
            return Err(format!("both terminals on node {}", self.n1));
        }
        match &self.kind {
            DeviceKind::Resistor { r } => positive("resistance", *r),
            DeviceKind::Capacitor { c, esr } => {
                positive("capacitance", *c)?;
                non_negative("esr", *esr)
            }
            DeviceKind::Inductor { l, esr, epc } => {
                positive("inductance", *l)?;
                non_negative("esr", *esr)?;
                non_negative("epc", *epc)
            }
            DeviceKind::Diode(p) => p.validate(),
            DeviceKind::Switch(p) => p.validate(),
            DeviceKind::VSource { dc, rs, ls } => {
                if !dc.is_finite() {
                    return Err("dc must be finite".into());
                }
                non_negative("rs", *rs)?;
                non_negative("ls", *ls)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Probe {
    Voltage(String),
    Current(String),
}

impl Probe {
    pub fn voltage(node: &str) -> Self {
        Probe::Voltage(node.to_ascii_lowercase())
    }

    pub fn current(device: &str) -> Self {
        Probe::Current(device.to_ascii_lowercase())
    }
}

impl fmt::Display for Probe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Probe::Voltage(n) => write!(f, "v({n})"),
            Probe::Current(d) => write!(f, "i({d})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tran {
    pub tstop: f64,
    pub dtmax: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Directives {
    pub tran: Option<Tran>,
    pub probes: Vec<Probe>,
}

/// A ground-referenced circuit. Immutable after construction; the node list
/// is derived from the devices (ground first, then first-appearance order).
#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    title: String,
    nodes: Vec<String>,
    devices: Vec<Device>,
    directives: Directives,
}

impl Circuit {
    pub fn new(
        title: impl Into<String>,
        devices: Vec<Device>,
        directives: Directives,
    ) -> Result<Self, NetlistError> {
        let mut seen = BTreeSet::new();
        for (i, d) in devices.iter().enumerate() {
            if !seen.insert(d.key()) {
                return Err(NetlistError::DuplicateName {
                    line: i + 1,
                    name: d.name.clone(),
                });
            }
            d.check().map_err(|msg| NetlistError::InvalidParameter {
                name: d.name.clone(),
                msg,
            })?;
        }
        let mut nodes = vec![GROUND.to_string()];
        for d in &devices {
            for n in [&d.n1, &d.n2] {
                if !nodes.contains(n) {
                    nodes.push(n.clone());
                }
            }
        }
        if let Some(tran) = directives.tran {
            if !(tran.tstop > 0.0 && tran.dtmax > 0.0 && tran.dtmax < tran.tstop) {
                return Err(NetlistError::InvalidTran(format!(
                    "need 0 < dtmax < tstop, got tstop={} dtmax={}",
                    tran.tstop, tran.dtmax
                )));
            }
        }
        let circuit = Circuit {
            title: title.into(),
            nodes,
            devices,
            directives,
        };
        for p in &circuit.directives.probes {
            let known = match p {
                Probe::Voltage(n) => circuit.has_node(n),
                Probe::Current(d) => circuit.device(d).is_some(),
            };
            if !known {
                return Err(NetlistError::UnknownProbe {
                    probe: p.to_string(),
                });
            }
        }
        Ok(circuit)
    }

    pub fn title(&self) -> &str {
        &self.title
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn devices(&self) -> &[Device] {
        &self.devices
    }

    pub fn directives(&self) -> &Directives {
        &self.directives
    }

    pub fn has_node(&self, node: &str) -> bool {
        let node = node.to_ascii_lowercase();
        self.nodes.iter().any(|n| *n == node)
    }

    pub fn device(&self, name: &str) -> Option<&Device> {
        let key = name.to_ascii_lowercase();
        self.devices.iter().find(|d| d.key() == key)
    }

    /// Rebuilds the circuit with new devices and directives, re-running validation.
    pub fn with_parts(
        &self,
        devices: Vec<Device>,
        directives: Directives,
    ) -> Result<Circuit, NetlistError> {
        Circuit::new(self.title.clone(), devices, directives)
    }

    pub fn with_directives(&self, directives: Directives) -> Result<Circuit, NetlistError> {
        self.with_parts(self.devices.clone(), directives)
    }

    /// Serializes to the netlist text format; [`parse_netlist`] inverts it exactly.
    pub fn to_netlist(&self) -> String {
        let mut out = String::new();
        if !self.title.is_empty() {
            out.push_str(&format!(".title {}\n", self.title));
        }
        for d in &self.devices {
            out.push_str(&format_device(d));
            out.push('\n');
        }
        if let Some(tran) = self.directives.tran {
            out.push_str(&format!(
                ".tran {} {}\n",
                format_value(tran.tstop),
                format_value(tran.dtmax)
            ));
        }
        if !self.directives.probes.is_empty() {
            let probes: Vec<String> = self.directives.probes.iter().map(|p| p.to_string()).collect();
            out.push_str(&format!(".probe {}\n", probes.join(" ")));
        }
        out.push_str(".end\n");
        out
    }
}

fn format_device(d: &Device) -> String {
    let head = format!("{} {} {}", d.name, d.n1, d.n2);
    let v = format_value;
    match &d.kind {
        DeviceKind::Resistor { r } => format!("{head} {}", v(*r)),
        DeviceKind::Capacitor { c, esr } => format!("{head} {} esr={}", v(*c), v(*esr)),
        DeviceKind::Inductor { l, esr, epc } => {
            format!("{head} {} esr={} epc={}", v(*l), v(*esr), v(*epc))
        }
        DeviceKind::Diode(p) => format!("{head} is={} n={}", v(p.is_sat), v(p.ideality)),
        DeviceKind::Switch(p) => format!(
            "{head} ron={} roff={} ctrl=pwm({},{},{},{},{})",
            v(p.ron),
            v(p.roff),
            v(p.pwm.freq),
            v(p.pwm.duty),
            v(p.pwm.trise),
            v(p.pwm.tfall),
            v(p.pwm.phase)
        ),
        DeviceKind::VSource { dc, rs, ls } => {
            format!("{head} dc={} rs={} ls={}", v(*dc), v(*rs), v(*ls))
        }
    }
}

/// Splits on whitespace but keeps parenthesised groups together, so
/// `ctrl=pwm(100k, 0.5, 0, 0)` is one token.
fn tokenize(line: &str) -> Result<Vec<String>, String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut depth = 0i32;
    for ch in line.chars() {
        match ch {
            '(' => {
                depth += 1;
                current.push(ch);
            }
            ')' => {
                depth -= 1;
                if depth < 0 {
                    return Err("unbalanced ')'".into());
                }
                current.push(ch);
            }
            c if c.is_whitespace() => {
                if depth > 0 {
                    continue;
                }
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
            }
            c => current.push(c),
        }
    }
    if depth != 0 {
        return Err("unbalanced '('".into());
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    Ok(tokens)
}

struct LineParser {
    line: usize,
}

impl LineParser {
    fn syntax(&self, msg: impl Into<String>) -> NetlistError {
        NetlistError::Syntax {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn value(&self, token: &str) -> Result<f64, NetlistError> {
        parse_value(token).map_err(|_| NetlistError::MalformedValue {
            line: self.line,
            token: token.to_string(),
        })
    }

    /// Parses `key=value` tail tokens, rejecting keys outside `allowed`.
    fn keyvals<'a>(
        &self,
        tokens: &'a [String],
        allowed: &[&str],
    ) -> Result<HashMap<String, &'a str>, NetlistError> {
        let mut map = HashMap::new();
        for tok in tokens {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| self.syntax(format!("expected key=value, got '{tok}'")))?;
            let k = k.to_ascii_lowercase();
            if !allowed.contains(&k.as_str()) {
                return Err(self.syntax(format!("unknown parameter '{k}'")));
            }
            if map.insert(k.clone(), v).is_some() {
                return Err(self.syntax(format!("parameter '{k}' given twice")));
            }
        }
        Ok(map)
    }

    fn optional(
        &self,
        map: &HashMap<String, &str>,
        key: &str,
        default: f64,
    ) -> Result<f64, NetlistError> {
        map.get(key).map_or(Ok(default), |tok| self.value(tok))
    }

    fn pwm(&self, ctrl: &str) -> Result<Pwm, NetlistError> {
        let lower = ctrl.to_ascii_lowercase();
        let inner = lower
            .strip_prefix("pwm(")
            .and_then(|s| s.strip_suffix(')'))
            .ok_or_else(|| self.syntax(format!("expected pwm(...), got '{ctrl}'")))?;
        let args = inner
            .split(',')
            .map(|a| self.value(a.trim()))
            .collect::<Result<Vec<_>, _>>()?;
        if !(4..=5).contains(&args.len()) {
            return Err(self.syntax("pwm takes 4 or 5 arguments"));
        }
        Ok(Pwm {
            freq: args[0],
            duty: args[1],
            trise: args[2],
            tfall: args[3],
            phase: args.get(4).copied().unwrap_or(0.0),
        })
    }

    fn device(&self, tokens: &[String]) -> Result<Device, NetlistError> {
        let name = &tokens[0];
        let prefix = name.chars().next().unwrap().to_ascii_uppercase();
        if !"RCLDSV".contains(prefix) {
            return Err(NetlistError::UnknownPrefix {
                line: self.line,
                prefix: name.chars().next().unwrap(),
            });
        }
        if tokens.len() < 3 {
            return Err(self.syntax("device needs two nodes"));
        }
        let (n1, n2) = (&tokens[1], &tokens[2]);
        let rest = &tokens[3..];
        let needs_value = || {
            rest.first()
                .ok_or_else(|| self.syntax("missing value"))
                .and_then(|t| self.value(t))
        };
        let kind = match prefix {
            'R' => {
                let r = needs_value()?;
                self.keyvals(&rest[1..], &[])?;
                DeviceKind::Resistor { r }
            }
            'C' => {
                let c = needs_value()?;
                let kv = self.keyvals(&rest[1..], &["esr"])?;
                DeviceKind::Capacitor {
                    c,
                    esr: self.optional(&kv, "esr", 0.0)?,
                }
            }
            'L' => {
                let l = needs_value()?;
                let kv = self.keyvals(&rest[1..], &["esr", "epc"])?;
                DeviceKind::Inductor {
                    l,
                    esr: self.optional(&kv, "esr", 0.0)?,
                    epc: self.optional(&kv, "epc", 0.0)?,
                }
            }
            'D' => {
                let kv = self.keyvals(rest, &["is", "n"])?;
                let d = DiodeParams::default();
                DeviceKind::Diode(DiodeParams {
                    is_sat: self.optional(&kv, "is", d.is_sat)?,
                    ideality: self.optional(&kv, "n", d.ideality)?,
                    ..d
                })
            }
            'S' => {
                let kv = self.keyvals(rest, &["ron", "roff", "ctrl"])?;
                let ctrl = kv
                    .get("ctrl")
                    .ok_or_else(|| self.syntax("switch needs ctrl=pwm(...)"))?;
                let d = SwitchParams::default();
                DeviceKind::Switch(SwitchParams {
                    ron: self.optional(&kv, "ron", d.ron)?,
                    roff: self.optional(&kv, "roff", d.roff)?,
                    pwm: self.pwm(ctrl)?,
                })
            }
            'V' => {
                let kv = self.keyvals(rest, &["dc", "rs", "ls"])?;
                let dc = kv
                    .get("dc")
                    .ok_or_else(|| self.syntax("source needs dc=<V>"))
                    .and_then(|t| self.value(t))?;
                DeviceKind::VSource {
                    dc,
                    rs: self.optional(&kv, "rs", 0.0)?,
                    ls: self.optional(&kv, "ls", 0.0)?,
                }
            }
            _ => unreachable!(),
        };
        Ok(Device::new(name.clone(), n1, n2, kind))
    }

    fn probe(&self, tok: &str) -> Result<Probe, NetlistError> {
        let lower = tok.to_ascii_lowercase();
        let inner = |p: &str| {
            lower
                .strip_prefix(p)
                .and_then(|s| s.strip_suffix(')'))
                .filter(|s| !s.is_empty())
                .map(str::to_string)
        };
        if let Some(n) = inner("v(") {
            Ok(Probe::Voltage(n))
        } else if let Some(d) = inner("i(") {
            Ok(Probe::Current(d))
        } else {
            Err(self.syntax(format!("bad probe '{tok}'")))
        }
    }
}

/// Parses netlist text into a [`Circuit`], preserving device order.
pub fn parse_netlist(text: &str) -> Result<Circuit, NetlistError> {
    let mut title = String::new();
    let mut devices: Vec<Device> = Vec::new();
    let mut directives = Directives::default();
    let mut names: HashMap<String, usize> = HashMap::new();

    for (idx, raw) in text.lines().enumerate() {
        let p = LineParser { line: idx + 1 };
        let line = raw.trim();
        if line.is_empty() || line.starts_with('*') {
            continue;
        }
        if let Some(rest) = strip_directive(line, ".title") {
            title = rest.trim().to_string();
            continue;
        }
        let tokens = tokenize(line).map_err(|m| p.syntax(m))?;
        let head = tokens[0].to_ascii_lowercase();
        match head.as_str() {
            ".end" => break,
            ".tran" => {
                if tokens.len() != 3 {
                    return Err(p.syntax(".tran takes <tstop> <dtmax>"));
                }
                directives.tran = Some(Tran {
                    tstop: p.value(&tokens[1])?,
                    dtmax: p.value(&tokens[2])?,
                });
            }
            ".probe" => {
                for tok in &tokens[1..] {
                    directives.probes.push(p.probe(tok)?);
                }
            }
            h if h.starts_with('.') => {
                return Err(p.syntax(format!("unknown directive '{h}'")));
            }
            _ => {
                let device = p.device(&tokens)?;
                if names.insert(device.key(), p.line).is_some() {
                    return Err(NetlistError::DuplicateName {
                        line: p.line,
                        name: device.name,
                    });
                }
                device.check().map_err(|msg| NetlistError::InvalidParameter {
                    name: device.name.clone(),
                    msg: format!("line {}: {msg}", p.line),
                })?;
                devices.push(device);
            }
        }
    }
    Circuit::new(title, devices, directives)
}

fn strip_directive<'a>(line: &'a str, directive: &str) -> Option<&'a str> {
    let head = line.get(..directive.len())?;
    if !head.eq_ignore_ascii_case(directive) {
        return None;
    }
    let rest = &line[directive.len()..];
    (rest.is_empty() || rest.starts_with(char::is_whitespace)).then_some(rest)
}

/// A problem found by [`validate_circuit`]. Findings are data; an empty
/// report means the circuit is simulable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Finding {
    MissingGround,
    /// The node cannot carry current to ground: it is unreachable from `0`
    /// or is a dead-end terminal.
    FloatingNode { node: String },
    /// Ideal voltage sources form a closed loop (singular MNA matrix).
    VoltageSourceLoop { devices: Vec<String> },
    FewConnections { node: String, count: usize },
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::MissingGround => write!(f, "missing ground: no device touches node 0"),
            Finding::FloatingNode { node } => write!(f, "floating node: {node}"),
            Finding::VoltageSourceLoop { devices } => {
                write!(f, "voltage-source loop through {}", devices.join(", "))
            }
            Finding::FewConnections { node, count } => {
                write!(f, "node {node} has only {count} connection(s)")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    fn find(&mut self, i: usize) -> usize {
        let mut root = i;
        while self.0[root] != root {
            root = self.0[root];
        }
        let mut cur = i;
        while self.0[cur] != root {
            let next = self.0[cur];
            self.0[cur] = root;
            cur = next;
        }
        root
    }

    /// Returns false if the two were already joined.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.0[ra] = rb;
        true
    }
}

/// Structural checks: ground presence, floating nodes, ideal voltage-source
/// loops and under-connected nodes.
pub fn validate_circuit(c: &Circuit) -> ValidationReport {
    let nodes = c.nodes();
    let index: HashMap<&str, usize> = nodes.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let mut findings = Vec::new();

    let mut degree = vec![0usize; nodes.len()];
    let mut reach = UnionFind::new(nodes.len());
    let mut sources = UnionFind::new(nodes.len());
    let mut loop_devices = Vec::new();
    for d in c.devices() {
        let (a, b) = (index[d.n1.as_str()], index[d.n2.as_str()]);
        degree[a] += 1;
        degree[b] += 1;
        reach.union(a, b);
        if let DeviceKind::VSource { rs, ls, .. } = d.kind {
            if rs == 0.0 && ls == 0.0 && !sources.union(a, b) {
                loop_devices.push(d.name.clone());
            }
        }
    }

    if degree[0] == 0 {
        findings.push(Finding::MissingGround);
    }
    for (i, node) in nodes.iter().enumerate().skip(1) {
        if reach.find(i) != reach.find(0) || degree[i] < 2 {
            findings.push(Finding::FloatingNode { node: node.clone() });
        }
        if degree[i] < 2 {
            findings.push(Finding::FewConnections {
                node: node.clone(),
                count: degree[i],
            });
        }
    }
    if !loop_devices.is_empty() {
        findings.push(Finding::VoltageSourceLoop {
            devices: loop_devices,
        });
    }
    ValidationReport { findings }
}
