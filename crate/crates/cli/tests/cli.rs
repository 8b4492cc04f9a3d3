use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use smpsim_core::analysis::WindowKind;
use smpsim_core::engine::{Channel, Waveforms};
use smpsim_core::io::{read_spectrum, read_waveforms, write_waveforms};

fn smpsim(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smpsim"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn smpsim")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Tones centred on bins of an `n`-point record at `dt`. The closing sample
/// at `n·dt` is written too, since resampling excludes the end point.
fn tone_csv(dir: &Path, n: usize, dt: f64, tones: &[(usize, f64)]) -> PathBuf {
    let times: Vec<f64> = (0..=n).map(|k| k as f64 * dt).collect();
    let values = times
        .iter()
        .map(|t| {
            tones
                .iter()
                .map(|&(bin, a)| a * (2.0 * PI * bin as f64 * t / (n as f64 * dt)).sin())
                .sum()
        })
        .collect();
    let w = Waveforms::new(times, vec![Channel { name: "v(x)".into(), values }]);
    let path = dir.join("tone.csv");
    write_waveforms(std::fs::File::create(&path).unwrap(), &w).unwrap();
    path
}

fn spectrum(path: &Path) -> smpsim_core::analysis::Spectrum {
    read_spectrum(std::fs::File::open(path).unwrap(), WindowKind::Hann).unwrap()
}

#[test]
fn run_phase1_metrics_near_five_volts() {
    let dir = tempfile::tempdir().unwrap();
    let o = smpsim(&["run", "phase1", "--metrics", "m.json"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = json(&dir.path().join("m.json"));
    assert_eq!(m["schema_version"], 1);
    let mean = m["mean_v"].as_f64().unwrap();
    assert!((mean - 5.0).abs() <= 0.02 * 5.0, "mean {mean}");
    for key in [
        "ripple_pp_v",
        "ripple_rms_v",
        "settling_time_s",
        "energy_source_j",
        "energy_load_j",
        "energy_dissipated_j",
        "residual_frac",
    ] {
        assert!(m.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn run_phase6_waves_include_port_column() {
    let dir = tempfile::tempdir().unwrap();
    let o = smpsim(&["run", "phase6", "--tstop", "1m", "--waves", "w.csv"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("w.csv")).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.split(',').any(|h| h == "v(lisnp_port)"), "{header}");
}

#[test]
fn waveform_csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let o = smpsim(&["run", "phase1", "--tstop", "200u", "--waves", "w.csv"], dir.path());
    assert_eq!(code(&o), 0);
    let path = dir.path().join("w.csv");
    let first = read_waveforms(std::fs::File::open(&path).unwrap()).unwrap();
    let again = dir.path().join("again.csv");
    write_waveforms(std::fs::File::create(&again).unwrap(), &first).unwrap();
    let second = read_waveforms(std::fs::File::open(&again).unwrap()).unwrap();
    for (a, b) in first.channels.iter().zip(&second.channels) {
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1e-300));
        }
    }
}

#[test]
fn run_netlist_file_with_override() {
    let dir = tempfile::tempdir().unwrap();
    let net = ".title rc\nV1 in 0 dc=1\nR1 in out 1k\nC1 out 0 1u\n.tran 5m 10u\n.probe v(out)\n.end\n";
    std::fs::write(dir.path().join("rc.cir"), net).unwrap();
    let o = smpsim(&["run", "rc.cir", "--set", "V1=2", "--metrics", "m.json"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mean = json(&dir.path().join("m.json"))["mean_v"].as_f64().unwrap();
    assert!((mean - 2.0).abs() < 1e-6, "mean {mean}");
}

#[test]
fn fft_finds_tone_frequency_and_amplitude() {
    let dir = tempfile::tempdir().unwrap();
    let (n, dt) = (8192, 1e-6);
    let csv = tone_csv(dir.path(), n, dt, &[(410, 0.7)]);
    let mut amps = Vec::new();
    for window in ["hann", "rect"] {
        let out = format!("{window}.csv");
        let o = smpsim(
            &["fft", csv.to_str().unwrap(), "--channel", "v(x)", "--window", window, "--out", &out, "--svg", "s.svg"],
            dir.path(),
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let s = spectrum(&dir.path().join(&out));
        let (k, a) = s
            .amplitudes
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.total_cmp(y.1))
            .unwrap();
        let f_expected = 410.0 / (n as f64 * dt);
        assert!((s.freqs[k] - f_expected).abs() < 1e-6 * f_expected);
        assert!((a - 0.7).abs() <= 0.01 * 0.7, "{window}: {a}");
        amps.push(*a);
    }
    assert!((amps[0] - amps[1]).abs() <= 0.01 * amps[1]);
    let svg = std::fs::read_to_string(dir.path().join("s.svg")).unwrap();
    assert!(svg.contains("1e3") || svg.contains("1e4"), "log-frequency ticks");
}

#[test]
fn compare_identical_is_zero_and_rebins_mismatched_grids() {
    let dir = tempfile::tempdir().unwrap();
    let csv = tone_csv(dir.path(), 8192, 1e-6, &[(100, 1.0), (300, 0.2), (700, 0.05)]);
    let csv = csv.to_str().unwrap();
    let run = |args: &[&str]| {
        let o = smpsim(args, dir.path());
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        stdout(&o)
    };
    run(&["fft", csv, "--channel", "v(x)", "--out", "a.csv"]);
    run(&["fft", csv, "--channel", "v(x)", "--t-start", "1m", "--out", "b.csv"]);
    let same = run(&["compare", "a.csv", "a.csv", "--out", "att.csv"]);
    let rows: Vec<&str> = same.lines().skip(1).collect();
    assert!(!rows.is_empty());
    for row in &rows {
        assert!(row.ends_with(",0.0"), "{row}");
    }
    assert!(!same.contains("re-binned"));
    let mixed = run(&["compare", "a.csv", "b.csv"]);
    assert!(mixed.contains("re-binned"), "{mixed}");
}

#[test]
fn pi_filter_attenuates_port_fundamental() {
    let dir = tempfile::tempdir().unwrap();
    let port = ["--channel", "v(lisnp_port)", "--tstop", "2m"];
    for (set, out) in [("pi=off", "nopi.csv"), ("pi=on", "pi.csv")] {
        let mut args = vec!["run", "phase6", "--set", set, "--spectrum", out];
        args.extend(port);
        let o = smpsim(&args, dir.path());
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let o = smpsim(&["compare", "nopi.csv", "pi.csv"], dir.path());
    assert_eq!(code(&o), 0);
    let summary = stdout(&o);
    let fsw_row = summary
        .lines()
        .find(|l| l.starts_with("1.000000e5,"))
        .unwrap_or_else(|| panic!("no fsw row in\n{summary}"));
    let db: f64 = fsw_row.rsplit(',').next().unwrap().parse().unwrap();
    assert!(db >= 20.0, "{fsw_row}");
}

fn report_ripple(dir: &Path, args: &[&str]) -> Vec<f64> {
    let o = smpsim(args, dir);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.join(args[2]).join("report.csv");
    std::fs::read_to_string(out)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn phases_fsw_override_reaches_every_phase() {
    let dir = tempfile::tempdir().unwrap();
    let base = report_ripple(dir.path(), &["phases", "--out", "base"]);
    let fast = report_ripple(dir.path(), &["phases", "--out", "fast", "--fsw", "200k"]);
    assert_eq!((base.len(), fast.len()), (6, 6));
    // Output ripple scales with 1/fsw²: a quarter of the 100 kHz value.
    let expected = 0.5 * (1.0 - 0.5) * 10.0 / (8.0 * 100e-6 * 100e-6 * 200e3f64.powi(2));
    assert!((fast[0] - expected).abs() <= 0.1 * expected, "pp {} vs {expected}", fast[0]);
    for (k, (b, f)) in base.iter().zip(&fast).enumerate() {
        assert!(f < &(0.6 * b), "phase {}: {f} at 200 kHz vs {b}", k + 1);
    }
}

#[test]
fn exit_code_classes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(code(&smpsim(&["run", "missing.cir"], p)), 2);
    assert_eq!(code(&smpsim(&["run"], p)), 2);
    assert_eq!(code(&smpsim(&["run", "phase1", "--set", "nonsense"], p)), 2);
    assert_eq!(code(&smpsim(&["run", "phase1", "--set", "bogus=1"], p)), 2);
    assert_eq!(code(&smpsim(&["frobnicate"], p)), 2);
    let o = smpsim(&["run", "missing.cir"], p);
    assert!(!o.stderr.is_empty());

    let csv = tone_csv(p, 8192, 1e-6, &[(10, 1.0)]);
    let o = smpsim(&["fft", csv.to_str().unwrap(), "--channel", "v(nope)", "--out", "x.csv"], p);
    assert_eq!(code(&o), 2);

    // Two ideal sources in parallel leave the branch currents undetermined.
    let net = ".title bad\nV1 a 0 dc=1\nV2 a 0 dc=1\nR1 a 0 1\n.tran 1u 10n\n.end\n";
    std::fs::write(p.join("bad.cir"), net).unwrap();
    let o = smpsim(&["run", "bad.cir"], p);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));

    assert_eq!(code(&smpsim(&["--help"], p)), 0);
    assert_eq!(code(&smpsim(&["--version"], p)), 0);
}

#[test]
fn bad_thread_count_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_smpsim"))
        .args(["phases", "--out", "rep"])
        .env("SMPSIM_THREADS", "0")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}
