//! Acceptance gate. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero when any criterion fails.

use std::f64::consts::PI;
use std::process::Command;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};

use imdrive::design::{bode_table, loop_gain_at, pi_gains, plant_tf};
use imdrive::inverter::{vsi_map, SwitchState};
use imdrive::io::read_key_values;
use imdrive::machine::{ImState, MachineModel};
use imdrive::params::{derive_bases, steady_state_circuit, MachineParams};
use imdrive::regulator::{abc_to_qd, qd_to_abc, SlipCalculator};
use imdrive::sim::{
    design_gains, fundamental_period, overmod_margin, rk4, rk4_step, run_scenario, SimConfig, Simulation,
    Trace,
};

const RATED_SLIP: f64 = 0.03135;

struct Gate {
    failures: Vec<String>,
}

impl Gate {
    fn check(&mut self, id: &str, ok: bool, detail: String) {
        println!("[{}] {id}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failures.push(id.to_string());
        }
    }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_imdrive"))
}

fn cli_key_values(args: &[&str]) -> std::collections::BTreeMap<String, String> {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(args).env("IMDRIVE_OUT", dir.path()).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    read_key_values(&String::from_utf8(out.stdout).unwrap())
}

fn criterion_1(g: &mut Gate) {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let out = bin()
        .args(["steady", "--slip", "0.03135"])
        .env("IMDRIVE_OUT", dir.path())
        .output()
        .unwrap();
    let elapsed = start.elapsed();
    let text = String::from_utf8(out.stdout).unwrap();
    let row: Vec<f64> = text.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    let (i_s, pf) = (row[1], row[2]);
    g.check(
        "1 rated operating point",
        out.status.success()
            && (i_s - 1.244).abs() <= 0.005
            && (pf - 0.861).abs() <= 0.005
            && elapsed < Duration::from_secs(1),
        format!("|i_s| = {i_s:.4} pu (1.244 +/- 0.005), pf = {pf:.4} (0.861 +/- 0.005), {elapsed:?} (< 1 s)"),
    );
}

fn criterion_2(g: &mut Gate) {
    let b = derive_bases(&MachineParams::default()).unwrap();
    let ez = (b.z_b - 14.20).abs() / 14.20;
    let et = (b.t_b - 79.16).abs() / 79.16;
    g.check(
        "2 base consistency",
        ez <= 0.005 && et <= 0.005,
        format!("z_b = {:.3} ohm ({:.2}%), t_b = {:.2} N*m ({:.2}%), limit 0.5%", b.z_b, ez * 100.0, b.t_b, et * 100.0),
    );
}

fn criterion_3(g: &mut Gate) {
    let d = cli_key_values(&["design"]);
    let fc: f64 = d["crossover_hz"].parse().unwrap();
    let pm: f64 = d["phase_margin_deg"].parse().unwrap();
    g.check(
        "3a design crossover and margin",
        (fc - 600.0).abs() <= 0.005 * 600.0 && (pm - 90.0).abs() <= 0.5,
        format!("f_c = {fc:.4} Hz (600 +/- 0.5%), margin = {pm:.4} deg (90 +/- 0.5)"),
    );

    let p = MachineParams::default();
    let plant = plant_tf(&p);
    let wc = 2.0 * PI * 6000.0 / 10.0;
    let gains = pi_gains(&plant, wc).unwrap();
    let table = bode_table(&plant, &gains, wc / 1000.0, wc * 1000.0, 50).unwrap();
    let worst = table
        .iter()
        .map(|(_, cl)| {
            let analytic = -10.0 * (1.0 + (cl.omega / wc).powi(2)).log10();
            (cl.magnitude_db - analytic).abs()
        })
        .fold(0.0, f64::max);
    let at_wc = table
        .iter()
        .find(|(_, cl)| ((cl.omega - wc) / wc).abs() < 1e-9)
        .map(|(_, cl)| cl.magnitude_db)
        .unwrap();
    g.check(
        "3b bode closed loop vs first order",
        (at_wc + 3.01).abs() <= 0.05 && worst <= 0.05,
        format!("|Tcl(j wc)| = {at_wc:.4} dB (-3.01 +/- 0.05), max deviation {worst:.2e} dB"),
    );
}

fn window_mean(trace: &Trace, start: f64, end: f64, f: impl Fn(&imdrive::sim::TraceRow) -> f64) -> f64 {
    let w: Vec<f64> = trace.rows.iter().filter(|r| r.t >= start && r.t < end).map(f).collect();
    w.iter().sum::<f64>() / w.len() as f64
}

fn criterion_4(g: &mut Gate) {
    let p = MachineParams::default();
    let cfg = SimConfig::load_step(&p, 2.5).unwrap();
    let start = Instant::now();
    let (_, m) = run_scenario(&cfg, &p, design_gains(&p, &cfg).unwrap()).unwrap();
    let elapsed = start.elapsed();
    let rise = m.rise_time_10_90;
    g.check(
        "4a linear step rise time",
        (0.3e-3..=1.5e-3).contains(&rise),
        format!("10-90% rise = {:.3} ms, window [0.3, 1.5] ms", rise * 1e3),
    );
    let (o1, o2) = (m.pre.duty_overflow_fraction, m.post.duty_overflow_fraction);
    g.check(
        "4b linear duty overflow",
        o1 < 0.005 && o2 < 0.005,
        format!("overflow pre = {:.3}%, post = {:.3}% (< 0.5%)", o1 * 100.0, o2 * 100.0),
    );
    let (e1, e2) = (m.pre.te_minus_tl_mean, m.post.te_minus_tl_mean);
    g.check(
        "4c torque balance",
        e1.abs() < 0.02 && e2.abs() < 0.02,
        format!("mean(t_e - t_load) pre = {e1:+.4}, post = {e2:+.4} pu (|.| < 0.02)"),
    );
    g.check(
        "4 runtime",
        elapsed < Duration::from_secs(30),
        format!("{elapsed:?} for {} steps (< 30 s)", cfg.steps()),
    );
}

fn criterion_5(g: &mut Gate) {
    let p = MachineParams::default();
    let b = derive_bases(&p).unwrap();
    let sol = steady_state_circuit(&p, RATED_SLIP, 1.0).unwrap();
    let margin = overmod_margin(sol.i_s, sol.psi_s, 1.0, &p, 1.7 * b.v_b).unwrap();
    g.check(
        "5a linear-region margin at rated point",
        margin < 0.0 && (margin + 56.4).abs() < 0.5,
        format!("margin = {margin:.2} V (negative, about -56.4 V)"),
    );

    let cfg = SimConfig::load_step(&p, 1.7).unwrap();
    let (trace, m) = run_scenario(&cfg, &p, design_gains(&p, &cfg).unwrap()).unwrap();
    let o = m.pre.duty_overflow_fraction;
    g.check(
        "5b overmodulated duty overflow",
        o > 0.05,
        format!("pre-step overflow = {:.1}% (> 5%)", o * 100.0),
    );
    let period = fundamental_period(&p);
    let i_qs = window_mean(&trace, cfg.step_time - period, cfg.step_time, |r| r.i_qs);
    let ref_q = cfg.refs_before.i_qs_ref;
    let err = (i_qs - ref_q).abs() / ref_q;
    g.check(
        "5c current recovers under overmodulation",
        err < 0.05,
        format!("mean i_qs over last period before step = {i_qs:.4} pu vs {ref_q} ({:.2}%, < 5%)", err * 100.0),
    );
    let s = &m.spectrum_pre;
    let ratio = s.low_frequency.amplitude / s.fundamental.amplitude;
    g.check(
        "5d low-frequency harmonic present",
        ratio > 0.01,
        format!(
            "largest peak in (1.5 f, 0.9 f_sw) at {:.0} Hz = {:.2}% of fundamental (> 1%)",
            s.low_frequency.freq_hz,
            ratio * 100.0
        ),
    );
}

fn rk4_order() -> f64 {
    let err = |dt: f64| {
        let n = (1.0 / dt).round() as usize;
        let y = (0..n).fold(1.0f64, |y, _| rk4(y, dt, |y| -2.0 * y));
        (y - (-2.0f64).exp()).abs()
    };
    let dts: [f64; 5] = [0.1, 0.05, 0.025, 0.0125, 0.00625];
    let x: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
    let y: Vec<f64> = dts.iter().map(|d| err(*d).ln()).collect();
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let num: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}

/// Field-oriented steady state from the equivalent circuit, rotated onto
/// the current references.
fn oracle_state(p: &MachineParams, cfg: &SimConfig) -> (ImState, Complex64, f64) {
    let b = derive_bases(p).unwrap();
    let sc = SlipCalculator::new(p, b.z_b);
    let refs = cfg.refs_before;
    let slip = sc.slip_speed(sc.xm * refs.i_ds_ref, refs.i_qs_ref);
    let sol = steady_state_circuit(p, slip, 1.0).unwrap();
    let rot = Complex64::new(refs.i_qs_ref, -refs.i_ds_ref) / sol.i_s;
    (ImState::from_phasors(&sol, rot, 1.0 - slip), sol.v_s * rot, sol.torque * rot.norm_sqr())
}

fn flux_error(a: &ImState, b: &ImState) -> f64 {
    let (x, y) = (a.to_array(), b.to_array());
    let num = (0..4).map(|k| (x[k] - y[k]).powi(2)).sum::<f64>().sqrt();
    let den = (0..4).map(|k| y[k].powi(2)).sum::<f64>().sqrt();
    num / den
}

fn criterion_6(g: &mut Gate) {
    let order = rk4_order();
    g.check("6a rk4 order", (order - 4.0).abs() <= 0.2, format!("log-log slope {order:.3} (4.0 +/- 0.2)"));

    let mut rng = rand::rngs::StdRng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let a: f64 = rng.gen_range(-1.0..1.0);
        let b: f64 = rng.gen_range(-1.0..1.0);
        let th: f64 = rng.gen_range(0.0..2.0 * PI);
        let abc = [a, b, -a - b];
        let back = qd_to_abc(abc_to_qd(abc, th), th);
        for k in 0..3 {
            worst = worst.max((back[k] - abc[k]).abs());
        }
    }
    g.check("6b abc-qd round trip", worst <= 1e-12, format!("max error {worst:.2e} over 1000 samples (<= 1e-12)"));

    let mut sum_ok = true;
    for v_dc in [1.0, 376.0, 940.0, 639.2, 1e4] {
        for sw in SwitchState::all() {
            let v = vsi_map(sw, v_dc).unwrap();
            sum_ok &= v.v_an + v.v_bn + v.v_cn == 0.0;
        }
    }
    g.check("6c inverter phase-voltage sum", sum_ok, "v_an + v_bn + v_cn == 0 for all 8 states".into());

    let p = MachineParams::default();
    let plant = plant_tf(&p);
    let gains = pi_gains(&plant, 2.0 * PI * 600.0).unwrap();
    let mut worst_phase = 0.0f64;
    for k in 0..=400 {
        let w = 10f64.powf(-1.0 + 8.0 * f64::from(k) / 400.0);
        let ph = loop_gain_at(&plant, &gains, w).unwrap().arg().to_degrees();
        worst_phase = worst_phase.max((ph + 90.0).abs());
    }
    g.check(
        "6d cancelled loop phase",
        worst_phase <= 1e-9,
        format!("max |phase + 90| = {worst_phase:.2e} deg over 0.1..1e7 rad/s"),
    );

    // Open-loop machine from rest under the oracle voltage converges to the
    // oracle fluxes.
    let cfg = SimConfig::load_step(&p, 2.5).unwrap();
    let (oracle, v, torque) = oracle_state(&p, &cfg);
    let model = MachineModel::new(&p).unwrap();
    let mut s = ImState { omega_r: oracle.omega_r, ..Default::default() };
    let dt = 5e-5;
    for k in 0..(3.0 / dt) as usize {
        s = rk4_step(&model, &s, (v.re, -v.im), 1.0, torque, dt, k as f64 * dt).unwrap();
    }
    let e_open = flux_error(&s, &oracle);

    // Switching closed loop: mean synchronous-frame fluxes over whole periods
    // are the fundamental component.
    let mut sim = Simulation::new(cfg, &p, design_gains(&p, &cfg).unwrap()).unwrap();
    let steps = (cfg.step_time / cfg.dt).round() as usize;
    let mut acc = [0.0; 5];
    for _ in 0..steps {
        sim.advance().unwrap();
        for (a, x) in acc.iter_mut().zip(sim.state().to_array()) {
            *a += x;
        }
    }
    let mean = ImState::from_array(acc.map(|a| a / steps as f64));
    let e_closed = flux_error(&mean, &oracle);
    g.check(
        "6e dynamic steady state vs phasor oracle",
        e_open < 0.01 && e_closed < 0.01,
        format!("flux error: free machine {:.4}%, switching closed loop {:.4}% (< 1%)", e_open * 100.0, e_closed * 100.0),
    );

    let b = derive_bases(&p).unwrap();
    let sc = SlipCalculator::new(&p, b.z_b);
    let i_ds = (1.244f64.powi(2) - 1.184f64.powi(2)).sqrt();
    let slip = sc.slip_speed(sc.xm * i_ds, 1.184);
    let err = (slip - RATED_SLIP).abs() / RATED_SLIP;
    g.check(
        "6f slip calculator at rated references",
        err < 0.03,
        format!("slip = {slip:.5} pu vs 0.03135 ({:.2}%, < 3%)", err * 100.0),
    );
}

fn main() {
    let mut g = Gate { failures: Vec::new() };
    criterion_1(&mut g);
    criterion_2(&mut g);
    criterion_3(&mut g);
    criterion_4(&mut g);
    criterion_5(&mut g);
    criterion_6(&mut g);
    if g.failures.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: {} failed: {}", g.failures.len(), g.failures.join(", "));
        std::process::exit(1);
    }
}
