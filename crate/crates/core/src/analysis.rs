//! Post-processing of recorded waveforms: ripple, settling, spectra,
//! attenuation, energy accounting and ripple compliance.

use std::f64::consts::PI;

use rustfft::{num_complex::Complex, FftPlanner};
use thiserror::Error;

use crate::engine::{DeviceEnergy, Waveforms};
use crate::netlist::Circuit;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("channel '{0}' not in record")]
    MissingChannel(String),
    #[error("window [{start:e}, {end:e}] s outside record [0, {record_end:e}] s")]
    WindowOutsideRecord { start: f64, end: f64, record_end: f64 },
    #[error("window of {length:e} s is shorter than {required:e} s")]
    WindowTooShort { length: f64, required: f64 },
    #[error("record too short: {samples} samples after resampling, need {required}")]
    TooShort { samples: usize, required: usize },
    #[error("spectra have disjoint frequency ranges")]
    DisjointRanges,
    #[error("record carries no energy accounting")]
    MissingEnergy,
    #[error("energy record does not match circuit: {0}")]
    EnergyMismatch(String),
}

pub type Result<T> = std::result::Result<T, AnalysisError>;

/// Minimum resampled record length accepted by [`compute_spectrum`].
pub const MIN_SPECTRUM_SAMPLES: usize = 1 << 12;

fn channel<'a>(w: &'a Waveforms, name: &str) -> Result<&'a [f64]> {
    w.channel(name)
        .ok_or_else(|| AnalysisError::MissingChannel(name.to_string()))
}

/// Copy of `w` with an extra channel `name = a − b`.
pub fn with_difference(w: &Waveforms, name: &str, a: &str, b: &str) -> Result<Waveforms> {
    let (va, vb) = (channel(w, a)?, channel(w, b)?);
    let mut out = w.clone();
    out.channels.push(crate::engine::Channel {
        name: name.to_string(),
        values: va.iter().zip(vb).map(|(x, y)| x - y).collect(),
    });
    Ok(out)
}

/// Linear interpolation of a sampled signal; clamps outside the record.
pub fn interpolate(times: &[f64], values: &[f64], t: f64) -> f64 {
    let k = times.partition_point(|&x| x <= t);
    if k == 0 {
        return values[0];
    }
    if k == times.len() {
        return values[k - 1];
    }
    let (t0, t1) = (times[k - 1], times[k]);
    if t1 == t0 {
        return values[k];
    }
    let f = (t - t0) / (t1 - t0);
    values[k - 1] + f * (values[k] - values[k - 1])
}

/// Samples inside `[start, end]`, with interpolated end points.
fn clip(times: &[f64], values: &[f64], start: f64, end: f64) -> (Vec<f64>, Vec<f64>) {
    let mut ts = vec![start];
    let mut vs = vec![interpolate(times, values, start)];
    let first = times.partition_point(|&x| x <= start);
    for k in first..times.len() {
        if times[k] >= end {
            break;
        }
        ts.push(times[k]);
        vs.push(values[k]);
    }
    ts.push(end);
    vs.push(interpolate(times, values, end));
    (ts, vs)
}

/// Trapezoid weights of a sample grid (sum = span).
fn trapezoid_weights(times: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; times.len()];
    for k in 1..times.len() {
        let h = 0.5 * (times[k] - times[k - 1]);
        w[k - 1] += h;
        w[k] += h;
    }
    w
}

fn check_window(w: &Waveforms, start: f64, end: f64) -> Result<()> {
    let record_end = w.duration();
    let tol = 1e-12 * record_end.max(1e-300);
    if !(start >= -tol && end <= record_end + tol && end > start) {
        return Err(AnalysisError::WindowOutsideRecord { start, end, record_end });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RippleMetrics {
    pub mean: f64,
    pub ripple_pp: f64,
    pub ripple_rms: f64,
    pub window: (f64, f64),
}

/// Mean, peak-to-peak and RMS deviation of `channel` over `window`. With a
/// `period`, the window must span at least five of them.
pub fn ripple_metrics(
    w: &Waveforms,
    channel_name: &str,
    window: (f64, f64),
    period: Option<f64>,
) -> Result<RippleMetrics> {
    let values = channel(w, channel_name)?;
    let (start, end) = window;
    check_window(w, start, end)?;
    if let Some(t) = period {
        let required = 5.0 * t * (1.0 - 1e-9);
        if end - start < required {
            return Err(AnalysisError::WindowTooShort {
                length: end - start,
                required: 5.0 * t,
            });
        }
    }
    let (ts, vs) = clip(&w.times, values, start, end);
    let weights = trapezoid_weights(&ts);
    let span: f64 = weights.iter().sum();
    let mean = vs.iter().zip(&weights).map(|(v, w)| v * w).sum::<f64>() / span;
    let var = vs
        .iter()
        .zip(&weights)
        .map(|(v, w)| (v - mean).powi(2) * w)
        .sum::<f64>()
        / span;
    let (lo, hi) = vs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    Ok(RippleMetrics {
        mean,
        ripple_pp: hi - lo,
        ripple_rms: var.sqrt(),
        window,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Settling {
    Settled(f64),
    Unsettled,
}

impl Settling {
    pub fn time(self) -> Option<f64> {
        match self {
            Settling::Settled(t) => Some(t),
            Settling::Unsettled => None,
        }
    }
}

/// Cumulative trapezoid integral at every sample.
fn cumulative_integral(times: &[f64], values: &[f64]) -> Vec<f64> {
    let mut acc = vec![0.0; times.len()];
    for k in 1..times.len() {
        acc[k] = acc[k - 1] + 0.5 * (times[k] - times[k - 1]) * (values[k] + values[k - 1]);
    }
    acc
}

/// Earliest time after which the signal, averaged over one `period` (raw
/// when `None`), stays within `±band_frac·|final|` of its final value (the
/// mean of the last 10% of the record).
pub fn settling_time(
    w: &Waveforms,
    channel_name: &str,
    band_frac: f64,
    period: Option<f64>,
) -> Result<Settling> {
    let values = channel(w, channel_name)?;
    let times = &w.times;
    let end = w.duration();
    if let Some(t) = period {
        if end < 10.0 * t * (1.0 - 1e-9) {
            return Err(AnalysisError::WindowTooShort {
                length: end,
                required: 10.0 * t,
            });
        }
    }
    let tail_start = 0.9 * end;
    let final_value = ripple_metrics(w, channel_name, (tail_start, end), None)?.mean;
    let averaged: Vec<f64> = match period {
        None => values.to_vec(),
        Some(t) => {
            let integral = cumulative_integral(times, values);
            times
                .iter()
                .enumerate()
                .map(|(k, &tk)| {
                    if tk <= 0.0 {
                        return values[k];
                    }
                    let t0 = (tk - t).max(0.0);
                    (integral[k] - interpolate(times, &integral, t0)) / (tk - t0)
                })
                .collect()
        }
    };
    let band = band_frac * final_value.abs();
    let last_bad = averaged.iter().rposition(|v| (v - final_value).abs() > band);
    match last_bad {
        None => Ok(Settling::Settled(0.0)),
        Some(k) if k + 1 >= times.len() || times[k + 1] >= tail_start => Ok(Settling::Unsettled),
        Some(k) => Ok(Settling::Settled(times[k + 1])),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    Rect,
    Hann,
}

impl WindowKind {
    fn weights(self, n: usize) -> Vec<f64> {
        match self {
            WindowKind::Rect => vec![1.0; n],
            WindowKind::Hann => (0..n)
                .map(|k| 0.5 * (1.0 - (2.0 * PI * k as f64 / n as f64).cos()))
                .collect(),
        }
    }
}

impl std::str::FromStr for WindowKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "rect" => Ok(WindowKind::Rect),
            "hann" => Ok(WindowKind::Hann),
            other => Err(format!("unknown window '{other}' (rect, hann)")),
        }
    }
}

/// Single-sided peak-amplitude spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub freqs: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub resolution: f64,
    pub window_kind: WindowKind,
}

impl Spectrum {
    /// Largest amplitude within one bin of `f`.
    pub fn amplitude_near(&self, f: f64) -> f64 {
        let k = (f / self.resolution).round() as isize;
        (k - 1..=k + 1)
            .filter(|&i| i >= 0 && (i as usize) < self.amplitudes.len())
            .map(|i| self.amplitudes[i as usize])
            .fold(0.0, f64::max)
    }

    /// Total single-sided power: `A0² + Σ A_k²/2 + A_nyq²` (even lengths).
    pub fn power(&self, record_len: usize) -> f64 {
        let last = self.amplitudes.len() - 1;
        self.amplitudes
            .iter()
            .enumerate()
            .map(|(k, a)| {
                if k == 0 || (k == last && record_len % 2 == 0) {
                    a * a
                } else {
                    a * a / 2.0
                }
            })
            .sum()
    }

    /// Sum of squared amplitudes over bins with `lo <= f <= hi`.
    pub fn band_energy(&self, lo: f64, hi: f64) -> f64 {
        self.freqs
            .iter()
            .zip(&self.amplitudes)
            .filter(|(f, _)| (lo..=hi).contains(*f))
            .map(|(_, a)| a * a)
            .sum()
    }
}

/// Uniform resampling of `values` from `t_start` to the end of the record
/// at step `dt`, `floor(span/dt)` points (the end point is excluded so a
/// whole number of periods stays periodic).
pub fn resample(times: &[f64], values: &[f64], t_start: f64, dt: f64) -> Vec<f64> {
    let span = times.last().copied().unwrap_or(0.0) - t_start;
    let n = (span / dt + 1e-6).floor().max(0.0) as usize;
    (0..n)
        .map(|k| interpolate(times, values, t_start + k as f64 * dt))
        .collect()
}

/// Median of the sample spacing over `t >= t_start`.
pub fn median_step(times: &[f64], t_start: f64) -> Option<f64> {
    let first = times.partition_point(|&t| t < t_start);
    let mut steps: Vec<f64> = times[first..].windows(2).map(|p| p[1] - p[0]).collect();
    if steps.is_empty() {
        return None;
    }
    steps.sort_by(f64::total_cmp);
    Some(steps[steps.len() / 2])
}

/// Amplitude spectrum of uniform samples with coherent-gain correction.
pub fn spectrum_of_samples(samples: &[f64], dt: f64, kind: WindowKind) -> Spectrum {
    let n = samples.len();
    let win = kind.weights(n);
    let gain = win.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = samples
        .iter()
        .zip(&win)
        .map(|(x, w)| Complex::new(x * w, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let half = n / 2;
    let norm = 1.0 / (n as f64 * gain);
    let amplitudes = (0..=half)
        .map(|k| {
            let a = buf[k].norm() * norm;
            if k == 0 || (n % 2 == 0 && k == half) {
                a
            } else {
                2.0 * a
            }
        })
        .collect();
    let resolution = 1.0 / (n as f64 * dt);
    Spectrum {
        freqs: (0..=half).map(|k| k as f64 * resolution).collect(),
        amplitudes,
        resolution,
        window_kind: kind,
    }
}

/// Spectrum of `channel` from `t_start` on, resampled at the median step of
/// that segment.
pub fn compute_spectrum(w: &Waveforms, channel_name: &str, kind: WindowKind, t_start: f64) -> Result<Spectrum> {
    let values = channel(w, channel_name)?;
    let end = w.duration();
    if !(t_start >= 0.0 && t_start < end) {
        return Err(AnalysisError::WindowOutsideRecord {
            start: t_start,
            end,
            record_end: end,
        });
    }
    let dt = median_step(&w.times, t_start).ok_or(AnalysisError::TooShort {
        samples: 0,
        required: MIN_SPECTRUM_SAMPLES,
    })?;
    let samples = resample(&w.times, values, t_start, dt);
    if samples.len() < MIN_SPECTRUM_SAMPLES {
        return Err(AnalysisError::TooShort {
            samples: samples.len(),
            required: MIN_SPECTRUM_SAMPLES,
        });
    }
    Ok(spectrum_of_samples(&samples, dt, kind))
}

pub const PORT_CHANNELS: [&str; 2] = ["v(lisnp_port)", "v(lisnn_port)"];

/// Hann spectra of every LISN measurement port present in the record.
pub fn lisn_port_spectrum(w: &Waveforms, t_start: f64) -> Result<Vec<(String, Spectrum)>> {
    let present: Vec<&str> = PORT_CHANNELS
        .iter()
        .copied()
        .filter(|c| w.channel(c).is_some())
        .collect();
    if present.is_empty() {
        return Err(AnalysisError::MissingChannel(PORT_CHANNELS[0].to_string()));
    }
    present
        .into_iter()
        .map(|c| Ok((c.to_string(), compute_spectrum(w, c, WindowKind::Hann, t_start)?)))
        .collect()
}

pub const AMPLITUDE_FLOOR: f64 = 1e-12;

/// Per-bin `20·log10(a/b)` on `a`'s grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Attenuation {
    pub freqs: Vec<f64>,
    pub db: Vec<f64>,
    /// `b` was linearly re-binned onto `a`'s grid.
    pub rebinned: bool,
}

impl Attenuation {
    /// Value at the bin nearest `f`.
    pub fn at(&self, f: f64) -> Option<f64> {
        let k = self
            .freqs
            .iter()
            .enumerate()
            .min_by(|x, y| (x.1 - f).abs().total_cmp(&(y.1 - f).abs()))?
            .0;
        Some(self.db[k])
    }
}

fn same_grid(a: &Spectrum, b: &Spectrum) -> bool {
    a.freqs.len() == b.freqs.len()
        && a.freqs
            .iter()
            .zip(&b.freqs)
            .all(|(x, y)| (x - y).abs() <= 1e-9 * x.abs().max(y.abs()))
}

pub fn spectrum_attenuation(a: &Spectrum, b: &Spectrum) -> Result<Attenuation> {
    let db = |x: f64, y: f64| 20.0 * (x.max(AMPLITUDE_FLOOR).log10() - y.max(AMPLITUDE_FLOOR).log10());
    if same_grid(a, b) {
        return Ok(Attenuation {
            freqs: a.freqs.clone(),
            db: a.amplitudes.iter().zip(&b.amplitudes).map(|(x, y)| db(*x, *y)).collect(),
            rebinned: false,
        });
    }
    let (lo, hi) = (b.freqs[0], *b.freqs.last().unwrap());
    let (mut freqs, mut out) = (Vec::new(), Vec::new());
    for (f, x) in a.freqs.iter().zip(&a.amplitudes) {
        if (lo..=hi).contains(f) {
            freqs.push(*f);
            out.push(db(*x, interpolate(&b.freqs, &b.amplitudes, *f)));
        }
    }
    if freqs.is_empty() {
        return Err(AnalysisError::DisjointRanges);
    }
    Ok(Attenuation {
        freqs,
        db: out,
        rebinned: true,
    })
}

/// Power-ratio attenuation `10·log10(Σa²/Σb²)` over `[lo, hi]`.
pub fn band_attenuation_db(a: &Spectrum, b: &Spectrum, lo: f64, hi: f64) -> f64 {
    let ea = a.band_energy(lo, hi).max(AMPLITUDE_FLOOR * AMPLITUDE_FLOOR);
    let eb = b.band_energy(lo, hi).max(AMPLITUDE_FLOOR * AMPLITUDE_FLOOR);
    10.0 * (ea / eb).log10()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyBalance {
    pub e_source: f64,
    pub e_load: f64,
    pub e_dissipated: f64,
    pub e_stored_delta: f64,
    pub residual_frac: f64,
    pub devices: Vec<DeviceEnergy>,
}

impl EnergyBalance {
    pub fn dissipated_in(&self, device: &str) -> Option<f64> {
        self.devices
            .iter()
            .find(|d| d.name.eq_ignore_ascii_case(device))
            .map(|d| d.dissipated)
    }
}

pub fn energy_balance(c: &Circuit, w: &Waveforms) -> Result<EnergyBalance> {
    let e = w.energy.as_ref().ok_or(AnalysisError::MissingEnergy)?;
    let names: Vec<&str> = c.devices().iter().map(|d| d.name.as_str()).collect();
    let recorded: Vec<&str> = e.devices.iter().map(|d| d.name.as_str()).collect();
    if names != recorded {
        return Err(AnalysisError::EnergyMismatch(format!(
            "circuit devices {names:?}, record {recorded:?}"
        )));
    }
    let delta = e.stored_end - e.stored_start;
    let residual = (e.source - e.load - e.dissipated - delta).abs();
    Ok(EnergyBalance {
        e_source: e.source,
        e_load: e.load,
        e_dissipated: e.dissipated,
        e_stored_delta: delta,
        residual_frac: residual / e.source.abs(),
        devices: e.devices.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Compliance {
    pub pass_strict: bool,
    pub pass_loose: bool,
}

pub const RIPPLE_LIMIT_LOW: f64 = 50e-6;
pub const RIPPLE_LIMIT_HIGH: f64 = 100e-6;

pub fn ripple_compliance(m: &RippleMetrics, limit_low: f64, limit_high: f64) -> Compliance {
    Compliance {
        pass_strict: m.ripple_pp <= limit_low,
        pass_loose: m.ripple_pp <= limit_high,
    }
}

/// Peak excursion above the plateau after an edge: maximum over
/// `[t_edge, t_edge + window]` minus the mean of the window's last quarter.
pub fn post_edge_overshoot(w: &Waveforms, channel_name: &str, t_edge: f64, window: f64) -> Result<f64> {
    let values = channel(w, channel_name)?;
    check_window(w, t_edge, t_edge + window)?;
    let (_, vs) = clip(&w.times, values, t_edge, t_edge + window);
    let peak = vs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let plateau = ripple_metrics(w, channel_name, (t_edge + 0.75 * window, t_edge + window), None)?.mean;
    Ok(peak - plateau)
}
