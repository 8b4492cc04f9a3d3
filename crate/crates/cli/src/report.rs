//! Metrics of a single run and the combined phase report.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;
use smpsim_core::analysis::{
    energy_balance, lisn_port_spectrum, ripple_metrics, settling_time, with_difference,
};
use smpsim_core::engine::{transient_run, Waveforms};
use smpsim_core::netlist::Circuit;
use smpsim_core::scenarios::{output_channels, phase_preset, PhaseConfig};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// Settling band as a fraction of the final value.
pub const SETTLING_BAND: f64 = 0.02;

/// Periods at the end of the record used for ripple metrics.
pub const RIPPLE_PERIODS: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub schema_version: u32,
    pub mean_v: f64,
    pub ripple_pp_v: f64,
    pub ripple_rms_v: f64,
    /// `None` when the channel never settles.
    pub settling_time_s: Option<f64>,
    pub energy_source_j: f64,
    pub energy_load_j: f64,
    pub energy_dissipated_j: f64,
    pub residual_frac: f64,
}

/// Channel carrying the converter output: the load node, referenced to
/// `rtn` when the return is lifted. Falls back to the first channel.
pub fn default_channel(c: &Circuit, w: &Waveforms) -> Result<(Waveforms, String), CliError> {
    match output_channels(c) {
        Some((p, Some(n))) => {
            let name = format!("{p}-{n}");
            Ok((with_difference(w, &name, &p, &n)?, name))
        }
        Some((p, None)) if w.channel(&p).is_some() => Ok((w.clone(), p)),
        _ => w
            .channels
            .first()
            .map(|ch| (w.clone(), ch.name.clone()))
            .ok_or_else(|| CliError::Usage("run recorded no channels".into())),
    }
}

/// Ripple over the last [`RIPPLE_PERIODS`] periods (or the last 20% of the
/// record without a period), settling time and the energy summary.
pub fn compute_metrics(
    c: &Circuit,
    w: &Waveforms,
    channel: &str,
    period: Option<f64>,
) -> Result<Metrics, CliError> {
    let end = w.duration();
    let start = match period {
        Some(t) => (end - RIPPLE_PERIODS * t).max(0.5 * end),
        None => 0.8 * end,
    };
    let ripple = ripple_metrics(w, channel, (start, end), period)?;
    let settling = settling_time(w, channel, SETTLING_BAND, period)?;
    let energy = energy_balance(c, w)?;
    Ok(Metrics {
        schema_version: SCHEMA_VERSION,
        mean_v: ripple.mean,
        ripple_pp_v: ripple.ripple_pp,
        ripple_rms_v: ripple.ripple_rms,
        settling_time_s: settling.time(),
        energy_source_j: energy.e_source,
        energy_load_j: energy.e_load,
        energy_dissipated_j: energy.e_dissipated,
        residual_frac: energy.residual_frac,
    })
}

pub fn metrics_json(m: &Metrics) -> String {
    let mut s = serde_json::to_string_pretty(m).expect("metrics serialize");
    s.push('\n');
    s
}

#[derive(Debug, Clone)]
pub struct PhaseRun {
    pub phase: u8,
    pub circuit: Circuit,
    pub waves: Waveforms,
    pub channel: String,
    pub metrics: Metrics,
    /// Largest LISN-port amplitude at the switching frequency.
    pub port_peak_fsw_v: Option<f64>,
}

pub fn run_phase(phase: u8, cfg: &PhaseConfig) -> Result<PhaseRun, CliError> {
    let circuit = phase_preset(phase, cfg)?;
    let raw = transient_run(&circuit, &cfg.solver_options())?;
    let (waves, channel) = default_channel(&circuit, &raw)?;
    let metrics = compute_metrics(&circuit, &waves, &channel, Some(cfg.buck.period()))?;
    let port_peak_fsw_v = match lisn_port_spectrum(&waves, cfg.capture_start()) {
        Ok(spectra) => Some(
            spectra
                .iter()
                .map(|(_, s)| s.amplitude_near(cfg.buck.fsw))
                .fold(0.0, f64::max),
        ),
        Err(smpsim_core::analysis::AnalysisError::MissingChannel(_)) => None,
        Err(e) => return Err(e.into()),
    };
    Ok(PhaseRun {
        phase,
        circuit,
        waves,
        channel,
        metrics,
        port_peak_fsw_v,
    })
}

/// Worker count from `SMPSIM_THREADS`, else the available parallelism.
pub fn thread_count() -> Result<usize, CliError> {
    match std::env::var("SMPSIM_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(CliError::Usage(format!(
                "SMPSIM_THREADS must be a positive integer, got '{v}'"
            ))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// `f` over `items` on at most `threads` workers; results keep input order.
pub fn parallel_map<T, R, F>(items: &[T], threads: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..threads.clamp(1, items.len().max(1)) {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(item) = items.get(k) else { break };
                let r = f(item);
                slots.lock().unwrap()[k] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every item visited"))
        .collect()
}

pub fn run_phases(cfg: &PhaseConfig, threads: usize) -> Result<Vec<PhaseRun>, CliError> {
    let phases: Vec<u8> = (1..=6).collect();
    parallel_map(&phases, threads, |&n| run_phase(n, cfg))
        .into_iter()
        .collect()
}

pub const REPORT_HEADER: [&str; 5] = [
    "phase",
    "mean_v",
    "ripple_pp_v",
    "settling_time_s",
    "port_peak_fsw_v",
];

fn sci(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.12e}")).unwrap_or_default()
}

pub fn report_csv(runs: &[PhaseRun]) -> String {
    let mut out = REPORT_HEADER.join(",");
    out.push('\n');
    for r in runs {
        let m = &r.metrics;
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.phase,
            sci(Some(m.mean_v)),
            sci(Some(m.ripple_pp_v)),
            sci(m.settling_time_s),
            sci(r.port_peak_fsw_v)
        );
    }
    out
}

pub fn report_markdown(runs: &[PhaseRun]) -> String {
    let mut out = String::from(
        "| phase | circuit | mean (V) | ripple p-p (V) | settling (s) | port peak at fsw (V) |\n\
         |---|---|---|---|---|---|\n",
    );
    for r in runs {
        let m = &r.metrics;
        let settle = m
            .settling_time_s
            .map_or("unsettled".to_string(), |t| format!("{t:.4e}"));
        let port = r.port_peak_fsw_v.map_or("-".to_string(), |v| format!("{v:.4e}"));
        let title = r.circuit.title().splitn(2, ' ').nth(1).unwrap_or("");
        let _ = writeln!(
            out,
            "| {} | {} | {:.6} | {:.4e} | {} | {} |",
            r.phase, title, m.mean_v, m.ripple_pp_v, settle, port
        );
    }
    out
}
