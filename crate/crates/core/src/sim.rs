//! Fixed-step closed-loop simulation: regulator, modulator, inverter and
//! machine advanced together at one step size.
//!
//! Voltages and the frame speed are held constant over each step while the
//! machine is integrated with classical RK4. Switching instants therefore
//! resolve to the step size; the default step is 1/256 of a carrier period.

use std::f64::consts::{PI, TAU};
use std::ops::{Add, Mul};

use num_complex::Complex64;

use crate::design::{default_omega_c, pi_gains, plant_tf};
use crate::error::{Error, Result};
use crate::inverter::{carrier, duty_from_refs, switch_decision, vsi_map, DutyTriple};
use crate::machine::{ImState, MachineModel};
use crate::metrics::{compute_metrics, Metrics};
use crate::params::{derive_bases, steady_state_circuit, BaseSet, MachineParams};
use crate::regulator::{
    abc_to_qd, angle_step, pi_step, qd_to_abc, CurrentRefs, PiGains, RegulatorState, SlipCalculator,
};

/// Smallest allowed number of integration steps per carrier period.
pub const MIN_STEPS_PER_CARRIER: f64 = 64.0;

/// One classical fourth-order Runge-Kutta step of `dy/dt = f(y)`.
pub fn rk4<S>(y: S, dt: f64, f: impl Fn(S) -> S) -> S
where
    S: Copy + Add<Output = S> + Mul<f64, Output = S>,
{
    let k1 = f(y);
    let k2 = f(y + k1 * (dt / 2.0));
    let k3 = f(y + k2 * (dt / 2.0));
    let k4 = f(y + k3 * dt);
    y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

/// Advances the machine with held stator voltage, frame speed and load.
/// `t` is only used to label a divergence.
pub fn rk4_step(
    model: &MachineModel,
    state: &ImState,
    v_qd: (f64, f64),
    omega_e: f64,
    t_load: f64,
    dt: f64,
    t: f64,
) -> Result<ImState> {
    if dt.is_nan() || dt <= 0.0 {
        return Err(Error::domain(format!("step size must be > 0, got {dt}")));
    }
    let next = rk4(*state, dt, |s| model.state_derivative(&s, v_qd, omega_e, t_load));
    if next.is_finite() {
        Ok(next)
    } else {
        Err(Error::Divergence {
            t,
            msg: format!("non-finite machine state {:?}", next.to_array()),
        })
    }
}

/// Distance to the linear-modulation limit, V: `v_dc/2 - |rs i + j omega psi| * v_b`.
/// Positive inside the linear region. Inputs are per-unit.
pub fn overmod_margin(
    i_qds: Complex64,
    psi_qds: Complex64,
    omega: f64,
    params: &MachineParams,
    v_dc: f64,
) -> Result<f64> {
    let bases = derive_bases(params)?;
    let rs = params.rs / bases.z_b;
    let v = rs * i_qds + Complex64::i() * omega * psi_qds;
    Ok(v_dc / 2.0 - v.norm() * bases.v_b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    /// Start from the steady state matching the pre-step references.
    Analytic,
    /// Start from rest with references ramped over the first fundamental period.
    Zero,
}

impl std::str::FromStr for InitMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "analytic" => Ok(InitMode::Analytic),
            "zero" => Ok(InitMode::Zero),
            other => Err(format!("expected `analytic` or `zero`, got `{other}`")),
        }
    }
}

impl std::fmt::Display for InitMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InitMode::Analytic => "analytic",
            InitMode::Zero => "zero",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    /// DC-link voltage, V.
    pub v_dc: f64,
    pub f_sw: f64,
    pub dt: f64,
    pub duration: f64,
    pub step_time: f64,
    pub refs_before: CurrentRefs,
    pub refs_after: CurrentRefs,
    pub t_load_before: f64,
    pub t_load_after: f64,
    pub init_mode: InitMode,
    /// Current-loop crossover, rad/s.
    pub omega_c: f64,
    /// Record every n-th step.
    pub decimate: usize,
}

/// Magnetizing current for which the field-oriented torque
/// `(xm^2 / xr) i_ds i_qs` equals `t_load` at the given torque current.
pub fn torque_balanced_i_ds(params: &MachineParams, i_qs_ref: f64, t_load: f64) -> Result<f64> {
    let bases = derive_bases(params)?;
    let xm = params.xm / bases.z_b;
    let xr = (params.xm + params.xlr) / bases.z_b;
    if i_qs_ref == 0.0 {
        return Err(Error::domain("torque current must be non-zero"));
    }
    Ok(t_load / (xm * xm / xr * i_qs_ref))
}

impl SimConfig {
    /// Load-step scenario: six fundamental periods, step after three, torque
    /// current 1.184 pu halved and load 1 pu halved at the step.
    pub fn load_step(params: &MachineParams, v_dc_pu: f64) -> Result<Self> {
        let bases = derive_bases(params)?;
        let f_sw = 100.0 * params.f;
        let i_qs = 1.184;
        let i_ds = torque_balanced_i_ds(params, i_qs, 1.0)?;
        Ok(Self {
            v_dc: v_dc_pu * bases.v_b,
            f_sw,
            dt: 1.0 / (f_sw * 256.0),
            duration: 6.0 / params.f,
            step_time: 3.0 / params.f,
            refs_before: CurrentRefs { i_qs_ref: i_qs, i_ds_ref: i_ds },
            refs_after: CurrentRefs { i_qs_ref: i_qs / 2.0, i_ds_ref: i_ds },
            t_load_before: 1.0,
            t_load_after: 0.5,
            init_mode: InitMode::Analytic,
            omega_c: default_omega_c(f_sw),
            decimate: 8,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        if !(self.v_dc.is_finite() && self.v_dc > 0.0) {
            return bad(format!("v_dc must be > 0, got {}", self.v_dc));
        }
        if !(self.f_sw.is_finite() && self.f_sw > 0.0) {
            return bad(format!("f_sw must be > 0, got {}", self.f_sw));
        }
        let dt_max = 1.0 / (self.f_sw * MIN_STEPS_PER_CARRIER);
        if !(self.dt > 0.0 && self.dt <= dt_max) {
            return bad(format!(
                "dt = {} violates 0 < dt <= 1/(f_sw*64) = {dt_max}",
                self.dt
            ));
        }
        if !(self.step_time > 0.0 && self.duration > self.step_time && self.duration.is_finite()) {
            return bad(format!(
                "need duration > step_time > 0, got duration = {}, step_time = {}",
                self.duration, self.step_time
            ));
        }
        if !(self.omega_c.is_finite() && self.omega_c > 0.0) {
            return bad(format!("omega_c must be > 0, got {}", self.omega_c));
        }
        if self.decimate == 0 {
            return bad("decimate must be >= 1".into());
        }
        let finite = [
            self.refs_before.i_qs_ref,
            self.refs_before.i_ds_ref,
            self.refs_after.i_qs_ref,
            self.refs_after.i_ds_ref,
            self.t_load_before,
            self.t_load_after,
        ];
        if finite.iter().any(|x| !x.is_finite()) {
            return bad("references and loads must be finite".into());
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }
}

/// One recorded sample. Field order is the CSV column order.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TraceRow {
    pub t: f64,
    pub i_qs_ref: f64,
    pub i_ds_ref: f64,
    pub i_qs: f64,
    pub i_ds: f64,
    pub v_qs_ref: f64,
    pub v_ds_ref: f64,
    pub d_a: f64,
    pub d_b: f64,
    pub d_c: f64,
    pub s_a: u8,
    pub s_b: u8,
    pub s_c: u8,
    /// Phase-a to neutral voltage, V.
    pub v_an: f64,
    pub i_as: f64,
    pub i_bs: f64,
    pub i_cs: f64,
    pub i_ar: f64,
    pub i_br: f64,
    pub i_cr: f64,
    pub t_e: f64,
    pub t_load: f64,
    pub omega_r: f64,
    pub omega_s: f64,
    pub theta: f64,
    pub overmod: bool,
}

impl TraceRow {
    pub const COLUMNS: [&'static str; 26] = [
        "t", "i_qs_ref", "i_ds_ref", "i_qs", "i_ds", "v_qs_ref", "v_ds_ref", "d_a", "d_b", "d_c",
        "s_a", "s_b", "s_c", "v_an", "i_as", "i_bs", "i_cs", "i_ar", "i_br", "i_cr", "t_e",
        "t_load", "omega_r", "omega_s", "theta", "overmod",
    ];

    /// Values in column order; flags as 0/1.
    pub fn values(&self) -> [f64; 26] {
        [
            self.t,
            self.i_qs_ref,
            self.i_ds_ref,
            self.i_qs,
            self.i_ds,
            self.v_qs_ref,
            self.v_ds_ref,
            self.d_a,
            self.d_b,
            self.d_c,
            f64::from(self.s_a),
            f64::from(self.s_b),
            f64::from(self.s_c),
            self.v_an,
            self.i_as,
            self.i_bs,
            self.i_cs,
            self.i_ar,
            self.i_br,
            self.i_cr,
            self.t_e,
            self.t_load,
            self.omega_r,
            self.omega_s,
            self.theta,
            f64::from(u8::from(self.overmod)),
        ]
    }

    pub fn duties(&self) -> DutyTriple {
        DutyTriple { d_a: self.d_a, d_b: self.d_b, d_c: self.d_c }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    /// Time between recorded rows, s.
    pub sample_dt: f64,
    pub rows: Vec<TraceRow>,
}

/// Closed-loop drive: owns the machine and regulator state of one run.
#[derive(Debug, Clone)]
pub struct Simulation {
    cfg: SimConfig,
    model: MachineModel,
    slip: SlipCalculator,
    bases: BaseSet,
    gains_pu: PiGains,
    state: ImState,
    reg: RegulatorState,
    /// Angle between the synchronous frame and the rotor, for rotor-frame currents.
    theta_slip: f64,
    step: usize,
}

impl Simulation {
    /// `gains` are SI (V/A, V/(A s)).
    pub fn new(cfg: SimConfig, params: &MachineParams, gains: PiGains) -> Result<Self> {
        cfg.validate()?;
        let bases = derive_bases(params)?;
        let model = MachineModel::new(params)?;
        let slip = SlipCalculator::new(params, bases.z_b);
        let mut sim = Self {
            cfg,
            model,
            slip,
            bases,
            gains_pu: gains.to_per_unit(bases.z_b),
            state: ImState::default(),
            reg: RegulatorState::default(),
            theta_slip: 0.0,
            step: 0,
        };
        if cfg.init_mode == InitMode::Analytic {
            sim.init_steady_state(params)?;
        }
        Ok(sim)
    }

    /// Seeds machine, flux estimate and integrators with the field-oriented
    /// steady state of the pre-step references at unit frame speed.
    fn init_steady_state(&mut self, params: &MachineParams) -> Result<()> {
        let refs = self.cfg.refs_before;
        let lambda = self.slip.steady_flux(refs.i_ds_ref);
        let slip = self.slip.slip_speed(lambda, refs.i_qs_ref);
        let sol = steady_state_circuit(params, slip, 1.0)?;
        let target = Complex64::new(refs.i_qs_ref, -refs.i_ds_ref);
        if sol.i_s.norm() == 0.0 || target.norm() == 0.0 {
            // nothing to excite
            self.reg.lambda_r_hat = lambda;
            return Ok(());
        }
        // The circuit is linear: scale and rotate so the stator current lands
        // on the references.
        let rotation = target / sol.i_s;
        self.state = ImState::from_phasors(&sol, rotation, 1.0 - slip);
        let v = sol.v_s * rotation;
        self.reg = RegulatorState {
            int_q: v.re,
            int_d: -v.im,
            theta: 0.0,
            lambda_r_hat: lambda,
        };
        Ok(())
    }

    pub fn state(&self) -> &ImState {
        &self.state
    }

    pub fn regulator(&self) -> &RegulatorState {
        &self.reg
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.cfg.dt
    }

    fn refs_at(&self, t: f64) -> (CurrentRefs, f64) {
        let c = &self.cfg;
        let (refs, load) = if t < c.step_time {
            (c.refs_before, c.t_load_before)
        } else {
            (c.refs_after, c.t_load_after)
        };
        match c.init_mode {
            InitMode::Zero => {
                let period = TAU / self.bases.omega_b;
                let k = (t / period).min(1.0);
                (
                    CurrentRefs { i_qs_ref: k * refs.i_qs_ref, i_ds_ref: k * refs.i_ds_ref },
                    load,
                )
            }
            InitMode::Analytic => (refs, load),
        }
    }

    /// Advances one integration step and returns the sample at its start.
    pub fn advance(&mut self) -> Result<TraceRow> {
        let dt = self.cfg.dt;
        let t = self.time();
        let (refs, t_load) = self.refs_at(t);
        let theta = self.reg.theta;

        let (omega_s, _) = self.slip.step(&mut self.reg, refs, self.state.omega_r, dt);

        let aux = self.model.aux_outputs(&self.state);
        let i_abc = qd_to_abc((aux.i_qs, aux.i_ds), theta);
        let i_meas = abc_to_qd(i_abc, theta);
        let i_r_abc = qd_to_abc((aux.i_qr, aux.i_dr), self.theta_slip);

        let (v_q_ref, v_d_ref) = pi_step(&mut self.reg, refs, i_meas, self.gains_pu, dt);
        let v_ref_abc = qd_to_abc((v_q_ref, v_d_ref), theta).map(|v| v * self.bases.v_b);
        let duty = duty_from_refs(v_ref_abc, self.cfg.v_dc)?;
        let sw = switch_decision(&duty, carrier(t, self.cfg.f_sw));
        let v = vsi_map(sw, self.cfg.v_dc)?;
        let (v_q, v_d) = abc_to_qd([v.v_an, v.v_bn, v.v_cn], theta);
        let v_qd = (v_q / self.bases.v_b, v_d / self.bases.v_b);

        self.state = rk4_step(&self.model, &self.state, v_qd, omega_s, t_load, dt, t).map_err(|e| match e {
            Error::Divergence { t, msg } => Error::Divergence {
                t,
                msg: format!("{msg}; last duties {:?}", duty.as_array()),
            },
            other => other,
        })?;
        self.reg.theta = angle_step(theta, omega_s, self.bases.omega_b, dt);
        self.theta_slip = angle_step(self.theta_slip, omega_s - self.state.omega_r, self.bases.omega_b, dt);
        self.step += 1;

        Ok(TraceRow {
            t,
            i_qs_ref: refs.i_qs_ref,
            i_ds_ref: refs.i_ds_ref,
            i_qs: i_meas.0,
            i_ds: i_meas.1,
            v_qs_ref: v_q_ref,
            v_ds_ref: v_d_ref,
            d_a: duty.d_a,
            d_b: duty.d_b,
            d_c: duty.d_c,
            s_a: u8::from(sw.s_a),
            s_b: u8::from(sw.s_b),
            s_c: u8::from(sw.s_c),
            v_an: v.v_an,
            i_as: i_abc[0],
            i_bs: i_abc[1],
            i_cs: i_abc[2],
            i_ar: i_r_abc[0],
            i_br: i_r_abc[1],
            i_cr: i_r_abc[2],
            t_e: aux.t_e,
            t_load,
            omega_r: self.state.omega_r,
            omega_s,
            theta,
            overmod: duty.overmodulated(),
        })
    }

    /// Runs to the configured duration, keeping every `decimate`-th sample.
    pub fn run(&mut self) -> Result<Trace> {
        let n = self.cfg.steps();
        let dec = self.cfg.decimate;
        let mut rows = Vec::with_capacity(n / dec + 1);
        for k in 0..n {
            let row = self.advance()?;
            if k % dec == 0 {
                rows.push(row);
            }
        }
        Ok(Trace {
            sample_dt: self.cfg.dt * dec as f64,
            rows,
        })
    }
}

/// Gains for a configuration: the cancelling design at `cfg.omega_c`.
pub fn design_gains(params: &MachineParams, cfg: &SimConfig) -> Result<PiGains> {
    pi_gains(&plant_tf(params), cfg.omega_c)
}

pub fn run_scenario(cfg: &SimConfig, params: &MachineParams, gains: PiGains) -> Result<(Trace, Metrics)> {
    let trace = Simulation::new(*cfg, params, gains)?.run()?;
    let metrics = compute_metrics(&trace, cfg, params.f)?;
    Ok((trace, metrics))
}

/// Runs independent scenarios on scoped threads; results keep input order.
pub fn run_many(
    cfgs: &[SimConfig],
    params: &MachineParams,
    gains: impl Fn(&SimConfig) -> Result<PiGains> + Sync,
) -> Vec<Result<(Trace, Metrics)>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = cfgs
            .iter()
            .map(|cfg| {
                let gains = &gains;
                scope.spawn(move || run_scenario(cfg, params, gains(cfg)?))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("scenario thread panicked"))
            .collect()
    })
}

/// Fundamental period at rated frequency, s.
pub fn fundamental_period(params: &MachineParams) -> f64 {
    2.0 * PI / params.omega_b()
}
