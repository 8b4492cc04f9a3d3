//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero if any fail.
//!
//! Run with `cargo test -p smpsim-cli --test acceptance`.

use std::f64::consts::PI;
use std::time::Instant;

use smpsim_cli::report::{compute_metrics, default_channel, parallel_map, thread_count, Metrics};
use smpsim_cli::{cmd_phases, PhasesArgs};
use smpsim_core::analysis::{
    band_attenuation_db, compute_spectrum, energy_balance, interpolate, lisn_port_spectrum,
    post_edge_overshoot, resample, ripple_metrics, spectrum_of_samples, median_step, Spectrum,
    WindowKind,
};
use smpsim_core::devices::{Method, Pwm, SwitchParams};
use smpsim_core::engine::{
    dc_operating_point, transient_run, Capture, SolverOptions, StartMode, Topology, Waveforms,
};
use smpsim_core::netlist::{
    parse_netlist, Circuit, Device, DeviceKind, Directives, Probe, Tran, GROUND,
};
use smpsim_core::scenarios::{phase_preset, PhaseConfig, LISN_PORT_N, LISN_PORT_P};

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, id: &str, pass: bool, detail: String) {
        println!("{} criterion {id}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failures += 1;
        }
    }
}

fn zero_state() -> SolverOptions {
    SolverOptions {
        start: StartMode::ZeroState,
        ..SolverOptions::default()
    }
}

// ---------------------------------------------------------------- criterion 1

fn rc_circuit(dt: f64) -> Circuit {
    let net = format!(
        ".title rc\nV1 in 0 dc=1\nR1 in out 1k\nC1 out 0 1u\n.tran 2m {dt:e}\n.probe v(out)\n.end\n"
    );
    parse_netlist(&net).unwrap()
}

const RC_TAU: f64 = 1e-3;

fn rc_error(dt: f64, method: Method) -> f64 {
    let opts = SolverOptions { method, ..zero_state() };
    let w = transient_run(&rc_circuit(dt), &opts).unwrap();
    let v = w.channel("v(out)").unwrap();
    w.times
        .iter()
        .zip(v)
        .map(|(t, v)| (v - (1.0 - (-t / RC_TAU).exp())).abs())
        .fold(0.0, f64::max)
}

/// Upward zero crossings of `v − level`, linearly interpolated.
fn crossings(times: &[f64], v: &[f64], level: f64) -> Vec<f64> {
    (1..v.len())
        .filter(|&k| v[k - 1] < level && v[k] >= level)
        .map(|k| {
            let frac = (level - v[k - 1]) / (v[k] - v[k - 1]);
            times[k - 1] + frac * (times[k] - times[k - 1])
        })
        .collect()
}

fn criterion_1(r: &mut Report) {
    let opts = zero_state();
    let w = transient_run(&rc_circuit(RC_TAU / 100.0), &opts).unwrap();
    let v_tau = interpolate(&w.times, w.channel("v(out)").unwrap(), RC_TAU);
    let rc_expected = 1.0 - (-1.0f64).exp();
    let rc_ok = (v_tau - rc_expected).abs() <= opts.reltol * rc_expected;

    let (l, c, res): (f64, f64, f64) = (1e-6, 1e-9, 1.0);
    let f0 = 1.0 / (2.0 * PI * (l * c).sqrt());
    let alpha = res / (2.0 * l);
    let fd = ((1.0 / (l * c)) - alpha * alpha).sqrt() / (2.0 * PI);
    let net = format!(
        ".title rlc\nV1 in 0 dc=1\nR1 in a {res}\nL1 a b {l:e}\nC1 b 0 {c:e}\n.tran {:e} {:e}\n.probe v(b)\n.end\n",
        20.0 / f0,
        1.0 / (100.0 * f0)
    );
    let w = transient_run(&parse_netlist(&net).unwrap(), &opts).unwrap();
    let xs = crossings(&w.times, w.channel("v(b)").unwrap(), 1.0);
    let f_meas = (xs.len() - 1) as f64 / (xs[xs.len() - 1] - xs[0]);
    let rlc_ok = (f_meas - fd).abs() <= 0.01 * fd;

    let div = parse_netlist(".title divider\nV1 in 0 dc=10\nR1 in mid 1k\nR2 mid 0 3k\n.end\n").unwrap();
    let x = dc_operating_point(&div, &SolverOptions::default()).unwrap();
    let v_mid = x[Topology::compile(&div).node_index("mid").unwrap()];
    let div_ok = (v_mid - 7.5).abs() <= 1e-8;

    r.line(
        "1",
        rc_ok && rlc_ok && div_ok,
        format!(
            "RC v(tau) = {v_tau:.6} (expected {rc_expected:.6} +- {:.1e} rel); RLC ring {f_meas:.6e} Hz vs {fd:.6e} Hz ({:+.3}%, limit 1%); divider {v_mid:.10} V vs 7.5 V (limit 1e-8)",
            opts.reltol,
            100.0 * (f_meas / fd - 1.0)
        ),
    );
}

// ------------------------------------------------------------- phase runs

struct Run {
    circuit: Circuit,
    waves: Waveforms,
    channel: String,
    metrics: Metrics,
}

/// Adds probes on both terminals of `Cin` and `L1` plus `i(Cin)`.
fn with_state_probes(c: &Circuit) -> Circuit {
    let mut probes = c.directives().probes.clone();
    let mut want = vec![Probe::current("Cin")];
    for name in ["Cin", "L1"] {
        let d = c.device(name).unwrap();
        for n in [&d.n1, &d.n2] {
            if n != GROUND {
                want.push(Probe::voltage(n));
            }
        }
    }
    for p in want {
        if !probes.contains(&p) {
            probes.push(p);
        }
    }
    c.with_directives(Directives {
        tran: c.directives().tran,
        probes,
    })
    .unwrap()
}

fn run_phase(n: u8, cfg: &PhaseConfig) -> Run {
    let circuit = with_state_probes(&phase_preset(n, cfg).unwrap());
    let raw = transient_run(&circuit, &cfg.solver_options()).unwrap();
    let (waves, channel) = default_channel(&circuit, &raw).unwrap();
    let metrics = compute_metrics(&circuit, &waves, &channel, Some(cfg.buck.period())).unwrap();
    Run {
        circuit,
        waves,
        channel,
        metrics,
    }
}

fn output_spectrum(run: &Run, cfg: &PhaseConfig) -> Spectrum {
    compute_spectrum(&run.waves, &run.channel, WindowKind::Hann, cfg.capture_start()).unwrap()
}

// --------------------------------------------------------- criteria 2 to 4

fn criterion_2(r: &mut Report, runs: &[Run]) {
    let mean = runs[0].metrics.mean_v;
    r.line(
        "2",
        (mean - 5.0).abs() <= 0.02 * 5.0,
        format!("phase-1 mean {mean:.5} V (expected 5.0 V +- 2%)"),
    );
}

fn criterion_3(r: &mut Report, runs: &[Run], cfg: &PhaseConfig) {
    let pp = runs[0].metrics.ripple_pp_v;
    let oracle = cfg.buck.output_ripple();
    r.line(
        "3",
        (pp - oracle).abs() <= 0.1 * oracle,
        format!(
            "phase-1 ripple {:.4} mV vs CCM formula {:.4} mV ({:+.2}%, limit 10%)",
            pp * 1e3,
            oracle * 1e3,
            100.0 * (pp / oracle - 1.0)
        ),
    );
}

fn criterion_4(r: &mut Report, runs: &[Run]) {
    let (m1, m2) = (&runs[0].metrics, &runs[1].metrics);
    let band = (4.85..5.0).contains(&m2.mean_v);
    let below = m2.mean_v < m1.mean_v;
    let (s1, s2) = (m1.settling_time_s, m2.settling_time_s);
    let slower = matches!((s1, s2), (Some(a), Some(b)) if b > a);
    let fmt = |s: Option<f64>| s.map_or("unsettled".to_string(), |t| format!("{:.4} ms", t * 1e3));
    r.line(
        "4",
        band && below && slower,
        format!(
            "phase-2 mean {:.5} V in [4.85, 5.0): {band}; below phase-1 {:.5} V: {below}; settling phase-2 {} > phase-1 {}: {slower}",
            m2.mean_v,
            m1.mean_v,
            fmt(s2),
            fmt(s1)
        ),
    );
}

// ---------------------------------------------------------------- criterion 5

/// Amplitude ratio (dB) between the input and output fundamentals of the
/// output LC filter when a half bridge drives it with a square wave at `f`.
fn lc_attenuation_db(cfg: &PhaseConfig, f: f64) -> f64 {
    let (lf, cf) = cfg.lc_filter;
    let pwm = |phase: f64| Pwm {
        freq: f,
        duty: 0.5,
        trise: 0.0,
        tfall: 0.0,
        phase,
    };
    let sw = |phase| {
        DeviceKind::Switch(SwitchParams {
            ron: cfg.buck.ron,
            roff: cfg.buck.roff,
            pwm: pwm(phase),
        })
    };
    let period = 1.0 / f;
    let tstop = 2e-3;
    let capture = 100.0 * period;
    let devices = vec![
        Device::new("V1", "in", GROUND, DeviceKind::VSource { dc: cfg.buck.vin, rs: 0.0, ls: 0.0 }),
        Device::new("S1", "in", "a", sw(0.0)),
        Device::new("S2", "a", GROUND, sw(0.5 * period)),
        Device::new("Lf", "a", "b", DeviceKind::Inductor { l: lf, esr: 0.0, epc: 0.0 }),
        Device::new("Cf", "b", GROUND, DeviceKind::Capacitor { c: cf, esr: 0.0 }),
        Device::new("Rload", "b", GROUND, DeviceKind::Resistor { r: cfg.buck.r_load }),
    ];
    let directives = Directives {
        tran: Some(Tran {
            tstop,
            dtmax: period / 50.0,
        }),
        probes: vec![Probe::voltage("a"), Probe::voltage("b")],
    };
    let c = Circuit::new("lc two-port", devices, directives).unwrap();
    let opts = SolverOptions {
        capture: Some(Capture {
            start: tstop - capture,
            step: period / 400.0,
        }),
        ..SolverOptions::default()
    };
    let w = transient_run(&c, &opts).unwrap();
    let amp = |ch: &str| {
        compute_spectrum(&w, ch, WindowKind::Hann, tstop - capture)
            .unwrap()
            .amplitude_near(f)
    };
    20.0 * (amp("v(a)") / amp("v(b)")).log10()
}

fn criterion_5(r: &mut Report, runs: &[Run], cfg: &PhaseConfig, threads: usize) {
    let s2 = output_spectrum(&runs[1], cfg);
    let s3 = output_spectrum(&runs[2], cfg);
    let band = band_attenuation_db(&s2, &s3, 10e6, 100e6);
    let fc = 1.0 / (2.0 * PI * (cfg.lc_filter.0 * cfg.lc_filter.1).sqrt());
    let att = parallel_map(&[10.0 * fc, 100.0 * fc], threads, |&f| lc_attenuation_db(cfg, f));
    let slope = att[1] - att[0];
    r.line(
        "5",
        band >= 30.0 && (slope - 40.0).abs() <= 6.0,
        format!(
            "phase-3 vs phase-2 output, 10-100 MHz: {band:.1} dB (limit >= 30 dB); LC slope {slope:.2} dB/decade between {:.3e} and {:.3e} Hz ({:.2} dB, {:.2} dB; limit 40 +- 6)",
            10.0 * fc,
            100.0 * fc,
            att[0],
            att[1]
        ),
    );
}

// ---------------------------------------------------------------- criterion 6

/// Largest switch-node overshoot after the first three turn-on edges of the
/// capture window.
fn turn_on_overshoot(run: &Run, cfg: &PhaseConfig) -> f64 {
    let period = cfg.buck.period();
    (0..3)
        .map(|k| {
            let edge = cfg.capture_start() + k as f64 * period + cfg.nonideal.trise;
            post_edge_overshoot(&run.waves, "v(sw)", edge, 0.1 * period).unwrap()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

fn criterion_6(r: &mut Report, runs: &[Run], cfg: &PhaseConfig) {
    let o3 = turn_on_overshoot(&runs[2], cfg);
    let o4 = turn_on_overshoot(&runs[3], cfg);
    let e4 = energy_balance(&runs[3].circuit, &runs[3].waves).unwrap();
    let snub = e4.dissipated_in("Rsnub").unwrap_or(0.0);
    r.line(
        "6",
        o4 <= 0.5 * o3 && snub > 0.0,
        format!(
            "switch-node overshoot phase-4 {o4:.3} V vs phase-3 {o3:.3} V ({:.1}%, limit 50%); snubber dissipation {snub:.3e} J (limit > 0)",
            100.0 * o4 / o3
        ),
    );
}

// ---------------------------------------------------------------- criterion 7

fn port_peak(w: &Waveforms, cfg: &PhaseConfig) -> f64 {
    lisn_port_spectrum(w, cfg.capture_start())
        .unwrap()
        .iter()
        .map(|(_, s)| s.amplitude_near(cfg.buck.fsw))
        .fold(0.0, f64::max)
}

fn criterion_7(r: &mut Report, runs: &[Run], no_pi: &Run, cfg: &PhaseConfig) {
    let with_pi = port_peak(&runs[5].waves, cfg);
    let without = port_peak(&no_pi.waves, cfg);
    let db = 20.0 * (without / with_pi).log10();
    let window = (cfg.capture_start(), cfg.buck.tstop);
    let dc = [LISN_PORT_P, LISN_PORT_N]
        .iter()
        .map(|p| {
            ripple_metrics(&runs[5].waves, &format!("v({p})"), window, None)
                .unwrap()
                .mean
                .abs()
        })
        .fold(0.0, f64::max);
    let (pp5, pp6) = (runs[4].metrics.ripple_pp_v, runs[5].metrics.ripple_pp_v);
    r.line(
        "7",
        db >= 20.0 && dc < 1e-3 && pp6 <= pp5,
        format!(
            "port peak at fsw {with_pi:.3e} V with pi vs {without:.3e} V without ({db:.1} dB, limit >= 20 dB); port DC |mean| {:.3e} V (limit < 1 mV); output ripple phase-6 {:.4} mV <= phase-5 {:.4} mV",
            dc,
            pp6 * 1e3,
            pp5 * 1e3
        ),
    );
}

// ---------------------------------------------------------------- criterion 8

fn terminal_voltage(w: &Waveforms, node: &str, k: usize) -> f64 {
    if node == GROUND {
        0.0
    } else {
        w.channel(&format!("v({node})")).unwrap()[k]
    }
}

/// Worst mismatch, relative to the Newton tolerance, between the recorded
/// state change and the integration rule over the steps into and out of
/// every breakpoint.
fn breakpoint_continuity(run: &Run, opts: &SolverOptions) -> f64 {
    let w = &run.waves;
    let bps = &w.stats.breakpoint_samples;
    let is_bp = |k: usize| bps.binary_search(&k).is_ok();
    let cin = run.circuit.device("Cin").unwrap();
    let l1 = run.circuit.device("L1").unwrap();
    let DeviceKind::Capacitor { c, .. } = cin.kind else { unreachable!() };
    let DeviceKind::Inductor { l, esr, .. } = l1.kind else { unreachable!() };
    let i_c = w.channel("i(Cin)").unwrap();
    let i_l = w.channel("i(L1)").unwrap();
    let v_c = |k| terminal_voltage(w, &cin.n1, k) - terminal_voltage(w, &cin.n2, k);
    let v_l = |k: usize| terminal_voltage(w, &l1.n1, k) - terminal_voltage(w, &l1.n2, k) - esr * i_l[k];
    // Integrates `rate` from sample k to k + 1 with the method that step used.
    let predicted = |k: usize, rate: &dyn Fn(usize) -> f64| {
        let h = w.times[k + 1] - w.times[k];
        if is_bp(k) || opts.method == Method::BackwardEuler {
            h * rate(k + 1)
        } else {
            0.5 * h * (rate(k) + rate(k + 1))
        }
    };
    let mut worst: f64 = 0.0;
    for &b in bps.iter().filter(|&&b| b > 0 && b + 1 < w.times.len()) {
        for k in [b - 1, b] {
            let dv = v_c(k + 1) - v_c(k);
            let dv_rule = predicted(k, &|j| i_c[j] / c);
            let tol_v = opts.vntol + opts.reltol * v_c(k).abs().max(v_c(k + 1).abs());
            let di = i_l[k + 1] - i_l[k];
            let di_rule = predicted(k, &|j| v_l(j) / l);
            let tol_i = opts.abstol_i + opts.reltol * i_l[k].abs().max(i_l[k + 1].abs());
            worst = worst.max((dv - dv_rule).abs() / tol_v).max((di - di_rule).abs() / tol_i);
        }
    }
    worst
}

fn criterion_8(r: &mut Report, runs: &[Run], cfg: &PhaseConfig) {
    let opts = cfg.solver_options();
    let mut ok = true;
    let mut parts = Vec::new();
    for (k, run) in runs.iter().enumerate() {
        let residual = run.metrics.residual_frac;
        let kcl = run.waves.stats.max_kcl_ratio;
        let cont = breakpoint_continuity(run, &opts);
        ok &= residual < 0.01 && kcl <= 1.0 && cont <= 1.0;
        parts.push(format!(
            "p{}: residual {residual:.2e}, KCL {kcl:.3}, continuity {cont:.1e} over {} breakpoints",
            k + 1,
            run.waves.stats.breakpoint_samples.len() - 1
        ));
    }
    r.line(
        "8",
        ok,
        format!("{} (limits: residual < 1%, ratios <= 1)", parts.join("; ")),
    );
}

// ---------------------------------------------------------------- criterion 9

fn observed_order(method: Method) -> f64 {
    let errs: Vec<f64> = [50.0, 100.0, 200.0]
        .iter()
        .map(|n| rc_error(RC_TAU / n, method))
        .collect();
    0.5 * ((errs[0] / errs[1]).log2() + (errs[1] / errs[2]).log2())
}

fn criterion_9(r: &mut Report, runs: &[Run], cfg: &PhaseConfig) {
    let tr = observed_order(Method::Trapezoidal);
    let be = observed_order(Method::BackwardEuler);

    let w = &runs[1].waves;
    let t0 = cfg.capture_start();
    let dt = median_step(&w.times, t0).unwrap();
    let samples = resample(&w.times, w.channel("v(sw)").unwrap(), t0, dt);
    let mean_square = samples.iter().map(|x| x * x).sum::<f64>() / samples.len() as f64;
    let power = spectrum_of_samples(&samples, dt, WindowKind::Rect).power(samples.len());
    let parseval = (power / mean_square - 1.0).abs();

    let (n, a, bin) = (1 << 14, 0.8, 1234);
    let tone: Vec<f64> = (0..n)
        .map(|k| a * (2.0 * PI * bin as f64 * k as f64 / n as f64).cos())
        .collect();
    let tone_err = [WindowKind::Rect, WindowKind::Hann]
        .iter()
        .map(|&kind| (spectrum_of_samples(&tone, 1e-6, kind).amplitudes[bin] / a - 1.0).abs())
        .fold(0.0, f64::max);

    r.line(
        "9",
        (tr - 2.0).abs() <= 0.2 && (be - 1.0).abs() <= 0.2 && parseval <= 0.01 && tone_err <= 0.01,
        format!(
            "RC observed order trapezoidal {tr:.3} (2 +- 0.2), backward Euler {be:.3} (1 +- 0.2); Parseval mismatch {:.2e} (limit 1%); tone amplitude error {:.2e} (limit 1%)",
            parseval, tone_err
        ),
    );
}

// --------------------------------------------------------------- criterion 10

fn criterion_10(r: &mut Report) {
    let dirs: Vec<tempfile::TempDir> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for d in &dirs {
        cmd_phases(&PhasesArgs {
            out: d.path().to_path_buf(),
            overrides: Vec::new(),
            fsw: None,
        })
        .unwrap();
    }
    let read = |d: &tempfile::TempDir, f: &str| std::fs::read(d.path().join(f)).unwrap();
    let same = ["report.csv", "report.md"]
        .iter()
        .all(|f| read(&dirs[0], f) == read(&dirs[1], f));
    r.line(
        "10",
        same,
        format!(
            "report.csv and report.md of two phase runs are {}",
            if same { "byte-identical" } else { "different" }
        ),
    );
}

fn main() {
    let started = Instant::now();
    let threads = thread_count().unwrap();
    let cfg = PhaseConfig::default();
    let mut r = Report { failures: 0 };

    criterion_1(&mut r);

    let mut no_pi_cfg = cfg;
    no_pi_cfg.pi = None;
    let jobs: Vec<(u8, PhaseConfig)> = (1..=6).map(|n| (n, cfg)).chain([(6, no_pi_cfg)]).collect();
    let mut runs = parallel_map(&jobs, threads, |(n, c)| run_phase(*n, c));
    let no_pi = runs.pop().unwrap();

    criterion_2(&mut r, &runs);
    criterion_3(&mut r, &runs, &cfg);
    criterion_4(&mut r, &runs);
    criterion_5(&mut r, &runs, &cfg, threads);
    criterion_6(&mut r, &runs, &cfg);
    criterion_7(&mut r, &runs, &no_pi, &cfg);
    criterion_8(&mut r, &runs, &cfg);
    criterion_9(&mut r, &runs, &cfg);
    criterion_10(&mut r);

    println!(
        "{} of 10 criteria passed in {:.1} s",
        10 - r.failures,
        started.elapsed().as_secs_f64()
    );
    if r.failures > 0 {
        std::process::exit(1);
    }
}
