//! Python bindings: parse or build circuits, run transients and analyse the
//! recorded waveforms.

use std::collections::HashMap;

use pyo3::exceptions::{PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use smpsim_core::analysis::{
    compute_spectrum, energy_balance, ripple_metrics, settling_time, AnalysisError, WindowKind,
};
use smpsim_core::engine::{transient_run, Capture, SolverOptions, Waveforms as CoreWaves};
use smpsim_core::netlist::{parse_netlist, Circuit as CoreCircuit};
use smpsim_core::scenarios::{phase_preset, PhaseConfig};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn analysis_err(e: AnalysisError) -> PyErr {
    match e {
        AnalysisError::MissingChannel(_) => PyKeyError::new_err(e.to_string()),
        other => value_err(other),
    }
}

#[pyclass(frozen, skip_from_py_object, module = "smpsim")]
#[derive(Clone)]
pub struct Circuit {
    inner: CoreCircuit,
}

#[pymethods]
impl Circuit {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        parse_netlist(text).map(|inner| Circuit { inner }).map_err(value_err)
    }

    #[getter]
    fn title(&self) -> &str {
        self.inner.title()
    }

    #[getter]
    fn nodes(&self) -> Vec<String> {
        self.inner.nodes().to_vec()
    }

    #[getter]
    fn devices(&self) -> Vec<String> {
        self.inner.devices().iter().map(|d| d.name.clone()).collect()
    }

    fn to_netlist(&self) -> String {
        self.inner.to_netlist()
    }

    fn __repr__(&self) -> String {
        format!("Circuit({:?}, {} devices)", self.inner.title(), self.inner.devices().len())
    }
}

#[pyclass(frozen, module = "smpsim")]
pub struct Waveforms {
    inner: CoreWaves,
}

#[pymethods]
impl Waveforms {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.times.clone()
    }

    fn channel_names(&self) -> Vec<String> {
        self.inner.channel_names().into_iter().map(String::from).collect()
    }

    fn channel(&self, name: &str) -> PyResult<Vec<f64>> {
        self.inner
            .channel(name)
            .map(<[f64]>::to_vec)
            .ok_or_else(|| PyKeyError::new_err(name.to_string()))
    }

    /// Solver counters: accepted/rejected steps, Newton iterations and the
    /// worst KCL residual ratio.
    fn stats(&self) -> HashMap<&'static str, f64> {
        let s = &self.inner.stats;
        HashMap::from([
            ("accepted_steps", s.accepted_steps as f64),
            ("rejected_steps", s.rejected_steps as f64),
            ("newton_iterations", s.newton_iterations as f64),
            ("max_kcl_ratio", s.max_kcl_ratio),
        ])
    }

    fn __len__(&self) -> usize {
        self.inner.times.len()
    }
}

/// Parse netlist text into a circuit.
#[pyfunction]
fn parse(text: &str) -> PyResult<Circuit> {
    Circuit::parse(text)
}

/// Circuit for preset phase `n` (1 to 6) with default parameters, optionally
/// overriding the stop time and switching frequency.
#[pyfunction]
#[pyo3(signature = (n, tstop=None, fsw=None))]
fn phase(n: u8, tstop: Option<f64>, fsw: Option<f64>) -> PyResult<Circuit> {
    let cfg = config(tstop, fsw);
    phase_preset(n, &cfg).map(|inner| Circuit { inner }).map_err(value_err)
}

fn config(tstop: Option<f64>, fsw: Option<f64>) -> PhaseConfig {
    let mut cfg = PhaseConfig::default();
    if let Some(t) = tstop {
        cfg.buck.tstop = t;
    }
    if let Some(f) = fsw {
        cfg.buck.fsw = f;
    }
    cfg
}

/// Run the circuit's `.tran`. With `capture_start`, steps from there on are
/// capped at `capture_step`.
#[pyfunction]
#[pyo3(signature = (circuit, capture_start=None, capture_step=1e-9))]
fn transient(py: Python<'_>, circuit: &Circuit, capture_start: Option<f64>, capture_step: f64) -> PyResult<Waveforms> {
    let opts = SolverOptions {
        capture: capture_start.map(|start| Capture { start, step: capture_step }),
        ..SolverOptions::default()
    };
    let c = circuit.inner.clone();
    py.detach(|| transient_run(&c, &opts))
        .map(|inner| Waveforms { inner })
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Simulate preset phase `n` with its own solver settings, including the
/// fine-stepped capture tail.
#[pyfunction]
#[pyo3(signature = (n, tstop=None, fsw=None))]
fn run_phase(py: Python<'_>, n: u8, tstop: Option<f64>, fsw: Option<f64>) -> PyResult<(Circuit, Waveforms)> {
    let cfg = config(tstop, fsw);
    let c = phase_preset(n, &cfg).map_err(value_err)?;
    let w = py
        .detach(|| transient_run(&c, &cfg.solver_options()))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok((Circuit { inner: c }, Waveforms { inner: w }))
}

/// Mean, peak-to-peak and RMS ripple of `channel` over `[t0, t1]`.
#[pyfunction]
#[pyo3(signature = (waves, channel, t0, t1, period=None))]
fn ripple(waves: &Waveforms, channel: &str, t0: f64, t1: f64, period: Option<f64>) -> PyResult<HashMap<&'static str, f64>> {
    let m = ripple_metrics(&waves.inner, channel, (t0, t1), period).map_err(analysis_err)?;
    Ok(HashMap::from([("mean", m.mean), ("ripple_pp", m.ripple_pp), ("ripple_rms", m.ripple_rms)]))
}

/// Time after which `channel` stays within `band` of its final value, or
/// `None` if it never does.
#[pyfunction]
#[pyo3(signature = (waves, channel, band=0.02))]
fn settling(waves: &Waveforms, channel: &str, band: f64) -> PyResult<Option<f64>> {
    settling_time(&waves.inner, channel, band, None)
        .map(|s| s.time())
        .map_err(analysis_err)
}

/// Single-sided amplitude spectrum `(freqs, amplitudes)` of `channel` from
/// `t_start` to the end of the record.
#[pyfunction]
#[pyo3(signature = (waves, channel, window="hann", t_start=0.0))]
fn spectrum(waves: &Waveforms, channel: &str, window: &str, t_start: f64) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let kind: WindowKind = window.parse().map_err(PyValueError::new_err)?;
    let s = compute_spectrum(&waves.inner, channel, kind, t_start).map_err(analysis_err)?;
    Ok((s.freqs, s.amplitudes))
}

/// Source, load and dissipated energy over the run in joules, with the
/// relative residual of the balance.
#[pyfunction]
fn energy(circuit: &Circuit, waves: &Waveforms) -> PyResult<HashMap<&'static str, f64>> {
    let e = energy_balance(&circuit.inner, &waves.inner).map_err(analysis_err)?;
    Ok(HashMap::from([
        ("source", e.e_source),
        ("load", e.e_load),
        ("dissipated", e.e_dissipated),
        ("stored_delta", e.e_stored_delta),
        ("residual_frac", e.residual_frac),
    ]))
}

#[pymodule]
fn smpsim(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Circuit>()?;
    m.add_class::<Waveforms>()?;
    m.add_function(wrap_pyfunction!(parse, m)?)?;
    m.add_function(wrap_pyfunction!(phase, m)?)?;
    m.add_function(wrap_pyfunction!(transient, m)?)?;
    m.add_function(wrap_pyfunction!(run_phase, m)?)?;
    m.add_function(wrap_pyfunction!(ripple, m)?)?;
    m.add_function(wrap_pyfunction!(settling, m)?)?;
    m.add_function(wrap_pyfunction!(spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(energy, m)?)?;
    Ok(())
}
