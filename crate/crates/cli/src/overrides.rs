//! `key=value` parameter overrides for presets and netlists.

use smpsim_core::netlist::{parse_value, Circuit, DeviceKind};
use smpsim_core::scenarios::{PhaseConfig, PiParams, Rails};

/// Names accepted by [`apply_preset_override`].
pub const PRESET_KEYS: &[&str] = &[
    "vin", "fsw", "duty", "l_main", "c_out", "r_load", "c_in", "ron", "roff", "diode_is",
    "tstop", "dtmax", "trise", "tfall", "l_esr", "l_epc", "c_esr", "l_loop", "r_loop", "c_oss",
    "c_node", "real_diode_is", "lf", "cf", "snub_r", "snub_c", "rs", "ls", "l_lisn",
    "c_coupling", "c_bulk", "r_damp", "r_port", "rails", "c_earth", "pi", "pi_l", "pi_c1",
    "pi_c2", "capture_periods", "capture_step",
];

pub fn split(pair: &str) -> Result<(&str, &str), String> {
    pair.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .filter(|(k, v)| !k.is_empty() && !v.is_empty())
        .ok_or_else(|| format!("override '{pair}' is not key=value"))
}

fn number(key: &str, v: &str) -> Result<f64, String> {
    parse_value(v).map_err(|e| format!("{key}: {e}"))
}

pub fn apply_preset_override(cfg: &mut PhaseConfig, key: &str, value: &str) -> Result<(), String> {
    let key_lc = key.to_ascii_lowercase();
    match key_lc.as_str() {
        "rails" => {
            cfg.lisn.applied_rails = match value.to_ascii_lowercase().as_str() {
                "positive" => Rails::Positive,
                "negative" => Rails::Negative,
                "both" => Rails::Both,
                other => return Err(format!("rails: '{other}' is not positive, negative or both")),
            };
            return Ok(());
        }
        "pi" => {
            cfg.pi = match value.to_ascii_lowercase().as_str() {
                "on" | "true" | "1" => Some(cfg.pi.unwrap_or_default()),
                "off" | "false" | "0" => None,
                other => return Err(format!("pi: '{other}' is not on or off")),
            };
            return Ok(());
        }
        _ => {}
    }
    let x = number(key, value)?;
    let pi = || cfg.pi.unwrap_or_else(PiParams::default);
    match key_lc.as_str() {
        "vin" => cfg.buck.vin = x,
        "fsw" => cfg.buck.fsw = x,
        "duty" => cfg.buck.duty = x,
        "l_main" => cfg.buck.l_main = x,
        "c_out" => cfg.buck.c_out = x,
        "r_load" => cfg.buck.r_load = x,
        "c_in" => cfg.buck.c_in = x,
        "ron" => cfg.buck.ron = x,
        "roff" => cfg.buck.roff = x,
        "diode_is" => cfg.buck.diode.is_sat = x,
        "tstop" => cfg.buck.tstop = x,
        "dtmax" => cfg.buck.dtmax = x,
        "trise" => cfg.nonideal.trise = x,
        "tfall" => cfg.nonideal.tfall = x,
        "l_esr" => cfg.nonideal.l_esr = x,
        "l_epc" => cfg.nonideal.l_epc = x,
        "c_esr" => cfg.nonideal.c_esr = x,
        "l_loop" => cfg.nonideal.l_loop = x,
        "r_loop" => cfg.nonideal.r_loop = x,
        "c_oss" => cfg.nonideal.c_oss = x,
        "c_node" => cfg.nonideal.c_node = x,
        "real_diode_is" => cfg.nonideal.diode.is_sat = x,
        "lf" => cfg.lc_filter.0 = x,
        "cf" => cfg.lc_filter.1 = x,
        "snub_r" => cfg.snubber = Some((x, cfg.snubber_values().1)),
        "snub_c" => cfg.snubber = Some((cfg.snubber_values().0, x)),
        "rs" => cfg.leads.0 = x,
        "ls" => cfg.leads.1 = x,
        "l_lisn" => cfg.lisn.l_lisn = x,
        "c_coupling" => cfg.lisn.c_coupling = x,
        "c_bulk" => cfg.lisn.c_bulk = x,
        "r_damp" => cfg.lisn.r_damp = x,
        "r_port" => cfg.lisn.r_port = x,
        "c_earth" => cfg.lisn.c_earth = x,
        "pi_l" => cfg.pi = Some(PiParams { l: x, ..pi() }),
        "pi_c1" => cfg.pi = Some(PiParams { c1: x, ..pi() }),
        "pi_c2" => cfg.pi = Some(PiParams { c2: x, ..pi() }),
        "capture_periods" => {
            if x < 0.0 || x.fract() != 0.0 {
                return Err(format!("capture_periods: '{value}' is not a whole number"));
            }
            cfg.capture_periods = x as usize;
        }
        "capture_step" => cfg.capture_step = x,
        _ => {
            return Err(format!(
                "unknown preset parameter '{key}' (known: {})",
                PRESET_KEYS.join(", ")
            ))
        }
    }
    Ok(())
}

/// Overrides the primary value of a netlist device: `R1=10`, `C1=1u`,
/// `L1=10u` or `V1=12`.
pub fn apply_netlist_override(c: &Circuit, key: &str, value: &str) -> Result<Circuit, String> {
    let x = number(key, value)?;
    if c.device(key).is_none() {
        return Err(format!("no device '{key}' in netlist"));
    }
    let devices = c
        .devices()
        .iter()
        .map(|d| {
            let mut d = d.clone();
            if d.name.eq_ignore_ascii_case(key) {
                match &mut d.kind {
                    DeviceKind::Resistor { r } => *r = x,
                    DeviceKind::Capacitor { c, .. } => *c = x,
                    DeviceKind::Inductor { l, .. } => *l = x,
                    DeviceKind::VSource { dc, .. } => *dc = x,
                    _ => return Err(format!("device '{key}' has no single primary value")),
                }
            }
            Ok(d)
        })
        .collect::<Result<Vec<_>, String>>()?;
    c.with_parts(devices, c.directives().clone())
        .map_err(|e| e.to_string())
}
