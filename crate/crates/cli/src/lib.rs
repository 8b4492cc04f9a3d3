//! `smpsim` command-line front end: run presets or netlists, take spectra,
//! compare them and produce the phase report.

mod error;
pub mod overrides;
pub mod report;
pub mod svg;

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use smpsim_core::analysis::{
    compute_spectrum, settling_time, spectrum_attenuation, Attenuation, Spectrum, WindowKind,
};
use smpsim_core::engine::{transient_run, SolverOptions, Waveforms};
use smpsim_core::io::{read_spectrum, read_waveforms, write_spectrum, write_waveforms};
use smpsim_core::netlist::{parse_netlist, parse_value, Circuit, Directives, Tran};
use smpsim_core::scenarios::{phase_preset, PhaseConfig};

pub use error::CliError;
use report::{compute_metrics, default_channel, metrics_json, SETTLING_BAND};
use svg::{line_plot, Scale};

#[derive(Debug, Parser)]
#[command(
    name = "smpsim",
    version,
    about = "Transient simulation and conducted-EMI analysis of switch-mode power supplies"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a phase preset or a netlist file
    Run(RunArgs),
    /// Amplitude spectrum of one channel of a waveform CSV
    Fft(FftArgs),
    /// Per-bin attenuation of spectrum A relative to spectrum B, in dB
    Compare(CompareArgs),
    /// Run all six phase presets and write report.csv and report.md
    Phases(PhasesArgs),
}

fn parse_eng(s: &str) -> Result<f64, String> {
    parse_value(s).map_err(|e| e.to_string())
}

fn parse_window(s: &str) -> Result<WindowKind, String> {
    s.parse()
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Preset name (phase1 to phase6) or path to a netlist file
    pub input: String,
    /// Parameter override; repeatable. Presets take parameter names (fsw=200k),
    /// netlists take device names (R1=10)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Stop time in seconds
    #[arg(long, value_name = "SECONDS", value_parser = parse_eng)]
    pub tstop: Option<f64>,
    /// Largest time step in seconds
    #[arg(long, value_name = "SECONDS", value_parser = parse_eng)]
    pub dtmax: Option<f64>,
    /// Write every recorded channel to this CSV
    #[arg(long, value_name = "PATH")]
    pub waves: Option<PathBuf>,
    /// Write ripple, settling and energy metrics of the analysed channel as JSON
    #[arg(long, value_name = "PATH")]
    pub metrics: Option<PathBuf>,
    /// Write the spectrum of the analysed channel as CSV
    #[arg(long, value_name = "PATH")]
    pub spectrum: Option<PathBuf>,
    /// Channel to analyse [default: converter output, else the first channel]
    #[arg(long, value_name = "NAME")]
    pub channel: Option<String>,
    /// FFT window for --spectrum: rect or hann
    #[arg(long, value_name = "KIND", default_value = "hann", value_parser = parse_window)]
    pub window: WindowKind,
    /// Plot the analysed channel against time as SVG
    #[arg(long, value_name = "PATH")]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct FftArgs {
    /// Waveform CSV with a `time` column
    pub waves: PathBuf,
    /// Channel to transform
    #[arg(long, value_name = "NAME")]
    pub channel: String,
    /// Window: rect or hann
    #[arg(long, value_name = "KIND", default_value = "hann", value_parser = parse_window)]
    pub window: WindowKind,
    /// Ignore samples before this time, in seconds
    #[arg(long, value_name = "SECONDS", default_value = "0", value_parser = parse_eng)]
    pub t_start: f64,
    /// Spectrum CSV output path
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Also plot the spectrum as SVG with a log-frequency axis
    #[arg(long, value_name = "PATH")]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    /// Spectrum CSV under test
    pub a: PathBuf,
    /// Reference spectrum CSV
    pub b: PathBuf,
    /// Write the per-bin attenuation as CSV
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Number of largest peaks of A listed in the summary
    #[arg(long, value_name = "N", default_value_t = 10)]
    pub peaks: usize,
}

#[derive(Debug, Clone, Args)]
pub struct PhasesArgs {
    /// Output directory, created if missing
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Preset parameter override applied to every phase; repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Switching frequency for every phase, in Hz
    #[arg(long, value_name = "HZ", value_parser = parse_eng)]
    pub fsw: Option<f64>,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Fft(a) => cmd_fft(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Phases(a) => cmd_phases(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(CliError::io(path))?;
    tmp.write_all(bytes).map_err(CliError::io(path))?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        std::fs::set_permissions(tmp.path(), std::fs::Permissions::from_mode(0o644))
            .map_err(CliError::io(path))?;
    }
    tmp.persist(path).map_err(|e| CliError::io(path)(e.error))?;
    Ok(())
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(CliError::io(path))
}

pub fn preset_number(input: &str) -> Option<u8> {
    let n: u8 = input.to_ascii_lowercase().strip_prefix("phase")?.parse().ok()?;
    (1..=6).contains(&n).then_some(n)
}

pub fn preset_config(overrides: &[String]) -> Result<PhaseConfig, CliError> {
    let mut cfg = PhaseConfig::default();
    for pair in overrides {
        let (k, v) = overrides::split(pair).map_err(CliError::Usage)?;
        overrides::apply_preset_override(&mut cfg, k, v).map_err(CliError::Usage)?;
    }
    Ok(cfg)
}

struct Prepared {
    circuit: Circuit,
    opts: SolverOptions,
    period: Option<f64>,
    /// Start of the spectrum window; `None` uses the settling time.
    spectrum_start: Option<f64>,
}

fn prepare(a: &RunArgs) -> Result<Prepared, CliError> {
    if let Some(n) = preset_number(&a.input) {
        let mut cfg = preset_config(&a.overrides)?;
        if let Some(t) = a.tstop {
            cfg.buck.tstop = t;
        }
        if let Some(dt) = a.dtmax {
            cfg.buck.dtmax = dt;
        }
        return Ok(Prepared {
            circuit: phase_preset(n, &cfg)?,
            opts: cfg.solver_options(),
            period: Some(cfg.buck.period()),
            spectrum_start: Some(cfg.capture_start()),
        });
    }
    let path = Path::new(&a.input);
    let mut circuit = parse_netlist(&read_file(path)?)?;
    for pair in &a.overrides {
        let (k, v) = overrides::split(pair).map_err(CliError::Usage)?;
        circuit = overrides::apply_netlist_override(&circuit, k, v).map_err(CliError::Usage)?;
    }
    if a.tstop.is_some() || a.dtmax.is_some() {
        let d = circuit.directives();
        let tran = match (d.tran, a.tstop, a.dtmax) {
            (Some(t), tstop, dtmax) => Tran {
                tstop: tstop.unwrap_or(t.tstop),
                dtmax: dtmax.unwrap_or(t.dtmax),
            },
            (None, Some(tstop), Some(dtmax)) => Tran { tstop, dtmax },
            (None, ..) => {
                return Err(CliError::Usage(
                    "netlist has no .tran; give both --tstop and --dtmax".into(),
                ))
            }
        };
        circuit = circuit.with_directives(Directives {
            tran: Some(tran),
            probes: d.probes.clone(),
        })?;
    }
    Ok(Prepared {
        circuit,
        opts: SolverOptions::default(),
        period: None,
        spectrum_start: None,
    })
}

fn analysed(c: &Circuit, w: &Waveforms, requested: Option<&str>) -> Result<(Waveforms, String), CliError> {
    match requested {
        Some(name) if w.channel(name).is_some() => Ok((w.clone(), name.to_string())),
        Some(name) => Err(CliError::Usage(format!(
            "channel '{name}' not recorded (available: {})",
            w.channel_names().join(", ")
        ))),
        None => default_channel(c, w),
    }
}

pub fn cmd_run(a: &RunArgs) -> Result<(), CliError> {
    let p = prepare(a)?;
    let raw = transient_run(&p.circuit, &p.opts)?;
    let s = &raw.stats;
    println!(
        "{}: {} steps ({} rejected), {} Newton iterations, worst KCL ratio {:.3}",
        p.circuit.title(),
        s.accepted_steps,
        s.rejected_steps,
        s.newton_iterations,
        s.max_kcl_ratio
    );
    if let Some(path) = &a.waves {
        let mut buf = Vec::new();
        write_waveforms(&mut buf, &raw).map_err(CliError::csv(path))?;
        write_atomic(path, &buf)?;
    }
    if a.metrics.is_none() && a.spectrum.is_none() && a.svg.is_none() {
        return Ok(());
    }
    let (w, ch) = analysed(&p.circuit, &raw, a.channel.as_deref())?;
    if let Some(path) = &a.metrics {
        let m = compute_metrics(&p.circuit, &w, &ch, p.period)?;
        println!(
            "{ch}: mean {:.6} V, ripple {:.4e} V p-p, residual {:.2e}",
            m.mean_v, m.ripple_pp_v, m.residual_frac
        );
        write_atomic(path, metrics_json(&m).as_bytes())?;
    }
    if let Some(path) = &a.spectrum {
        let start = match p.spectrum_start {
            Some(t) => t,
            None => settling_time(&w, &ch, SETTLING_BAND, p.period)?.time().unwrap_or(0.0),
        };
        let s = compute_spectrum(&w, &ch, a.window, start)?;
        let mut buf = Vec::new();
        write_spectrum(&mut buf, &s).map_err(CliError::csv(path))?;
        write_atomic(path, &buf)?;
    }
    if let Some(path) = &a.svg {
        let values = w.channel(&ch).expect("analysed channel present");
        let plot = line_plot(&ch, "time (s)", "V or A", &w.times, values, Scale::Linear, Scale::Linear);
        write_atomic(path, plot.as_bytes())?;
    }
    Ok(())
}

fn spectrum_svg(title: &str, s: &Spectrum) -> String {
    line_plot(title, "frequency (Hz)", "amplitude (V)", &s.freqs, &s.amplitudes, Scale::Log, Scale::Log)
}

pub fn cmd_fft(a: &FftArgs) -> Result<(), CliError> {
    let file = std::fs::File::open(&a.waves).map_err(CliError::io(&a.waves))?;
    let w = read_waveforms(std::io::BufReader::new(file)).map_err(CliError::csv(&a.waves))?;
    let s = compute_spectrum(&w, &a.channel, a.window, a.t_start)?;
    let mut buf = Vec::new();
    write_spectrum(&mut buf, &s).map_err(CliError::csv(&a.out))?;
    write_atomic(&a.out, &buf)?;
    if let Some(path) = &a.svg {
        write_atomic(path, spectrum_svg(&a.channel, &s).as_bytes())?;
    }
    println!(
        "{}: {} bins, resolution {:.6e} Hz",
        a.channel,
        s.freqs.len(),
        s.resolution
    );
    Ok(())
}

fn load_spectrum(path: &Path) -> Result<Spectrum, CliError> {
    let file = std::fs::File::open(path).map_err(CliError::io(path))?;
    read_spectrum(std::io::BufReader::new(file), WindowKind::Hann).map_err(CliError::csv(path))
}

/// Indices of the `n` largest local maxima of `amps`, skipping DC, in
/// ascending frequency order.
pub fn largest_peaks(amps: &[f64], n: usize) -> Vec<usize> {
    let mut peaks: Vec<usize> = (1..amps.len())
        .filter(|&k| amps[k] > amps[k - 1] && amps.get(k + 1).map_or(true, |&r| amps[k] >= r))
        .collect();
    peaks.sort_by(|&x, &y| amps[y].total_cmp(&amps[x]).then(x.cmp(&y)));
    peaks.truncate(n);
    peaks.sort_unstable();
    peaks
}

/// Summary lines: one header, one row per peak and a re-binning note.
pub fn compare_summary(a: &Spectrum, att: &Attenuation, n: usize) -> String {
    let mut out = String::from("freq_hz,amplitude_a_v,attenuation_db\n");
    for k in largest_peaks(&a.amplitudes, n) {
        let f = a.freqs[k];
        if let Some(db) = att.at(f) {
            out.push_str(&format!("{f:.6e},{:.6e},{db:.1}\n", a.amplitudes[k]));
        }
    }
    if att.rebinned {
        out.push_str("note: B was re-binned onto A's frequency grid\n");
    }
    out
}

pub fn cmd_compare(a: &CompareArgs) -> Result<(), CliError> {
    let sa = load_spectrum(&a.a)?;
    let sb = load_spectrum(&a.b)?;
    let att = spectrum_attenuation(&sa, &sb)?;
    if let Some(path) = &a.out {
        let mut out = String::from("freq_hz,attenuation_db\n");
        for (f, db) in att.freqs.iter().zip(&att.db) {
            out.push_str(&format!("{f:.12e},{db:.12e}\n"));
        }
        write_atomic(path, out.as_bytes())?;
    }
    print!("{}", compare_summary(&sa, &att, a.peaks));
    Ok(())
}

pub fn cmd_phases(a: &PhasesArgs) -> Result<(), CliError> {
    let mut cfg = preset_config(&a.overrides)?;
    if let Some(f) = a.fsw {
        cfg.buck.fsw = f;
    }
    let threads = report::thread_count()?;
    std::fs::create_dir_all(&a.out).map_err(CliError::io(&a.out))?;
    let runs = report::run_phases(&cfg, threads)?;
    write_atomic(&a.out.join("report.csv"), report::report_csv(&runs).as_bytes())?;
    write_atomic(&a.out.join("report.md"), report::report_markdown(&runs).as_bytes())?;
    println!("wrote {}", a.out.join("report.csv").display());
    println!("wrote {}", a.out.join("report.md").display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_recognised() {
        assert_eq!(preset_number("phase3"), Some(3));
        assert_eq!(preset_number("PHASE6"), Some(6));
        assert_eq!(preset_number("phase7"), None);
        assert_eq!(preset_number("buck.cir"), None);
    }

    #[test]
    fn peaks_skip_dc_and_sort_by_frequency() {
        let amps = [9.0, 1.0, 5.0, 1.0, 3.0, 1.0, 4.0];
        assert_eq!(largest_peaks(&amps, 2), vec![2, 6]);
    }
}
