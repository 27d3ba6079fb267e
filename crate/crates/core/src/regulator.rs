//! Synchronous-frame PI current regulator, slip calculator and frame angle.
//!
//! Frame transformations are amplitude-invariant with the q axis on phase a
//! at `theta = 0`, so a balanced set of amplitude `A` maps to `|f_qd| = A`.

use std::f64::consts::{PI, TAU};

use crate::params::MachineParams;

/// Lower bound on the rotor flux estimate before it is used as a divisor, pu.
pub const LAMBDA_FLOOR: f64 = 1e-3;

const SHIFT: f64 = 2.0 * PI / 3.0;

pub fn abc_to_qd(f: [f64; 3], theta: f64) -> (f64, f64) {
    let (ca, cb, cc) = (theta.cos(), (theta - SHIFT).cos(), (theta + SHIFT).cos());
    let (sa, sb, sc) = (theta.sin(), (theta - SHIFT).sin(), (theta + SHIFT).sin());
    (
        2.0 / 3.0 * (f[0] * ca + f[1] * cb + f[2] * cc),
        2.0 / 3.0 * (f[0] * sa + f[1] * sb + f[2] * sc),
    )
}

/// Inverse of [`abc_to_qd`]; always returns a zero-sum triple.
pub fn qd_to_abc(qd: (f64, f64), theta: f64) -> [f64; 3] {
    let (q, d) = qd;
    [
        q * theta.cos() + d * theta.sin(),
        q * (theta - SHIFT).cos() + d * (theta - SHIFT).sin(),
        q * (theta + SHIFT).cos() + d * (theta + SHIFT).sin(),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiGains {
    pub k_p: f64,
    pub k_i: f64,
}

impl PiGains {
    /// Converts SI gains (V/A, V/(A s)) to per-unit by the base impedance.
    pub fn to_per_unit(self, z_b: f64) -> PiGains {
        PiGains {
            k_p: self.k_p / z_b,
            k_i: self.k_i / z_b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CurrentRefs {
    pub i_qs_ref: f64,
    pub i_ds_ref: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegulatorState {
    /// Integrator outputs, pu volts.
    pub int_q: f64,
    pub int_d: f64,
    /// Frame angle, rad, in `[0, 2 pi)`.
    pub theta: f64,
    /// Rotor flux estimate, pu.
    pub lambda_r_hat: f64,
}

impl Default for RegulatorState {
    fn default() -> Self {
        Self {
            int_q: 0.0,
            int_d: 0.0,
            theta: 0.0,
            lambda_r_hat: LAMBDA_FLOOR,
        }
    }
}

/// One forward-Euler step of both PI loops. Returns the qd voltage
/// references in the units of the gains (per-unit for per-unit gains).
pub fn pi_step(
    state: &mut RegulatorState,
    refs: CurrentRefs,
    meas: (f64, f64),
    gains: PiGains,
    dt: f64,
) -> (f64, f64) {
    let e_q = refs.i_qs_ref - meas.0;
    let e_d = refs.i_ds_ref - meas.1;
    let v_q = gains.k_p * e_q + state.int_q;
    let v_d = gains.k_p * e_d + state.int_d;
    state.int_q += gains.k_i * e_q * dt;
    state.int_d += gains.k_i * e_d * dt;
    (v_q, v_d)
}

/// Slip calculator constants in per-unit form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlipCalculator {
    /// `xm / z_b`, i.e. `Lm` in per-unit.
    pub xm: f64,
    /// `(xlr + xm) / z_b`.
    pub xr: f64,
    pub rr: f64,
    pub tau_r: f64,
}

impl SlipCalculator {
    pub fn new(params: &MachineParams, z_b: f64) -> Self {
        Self {
            xm: params.xm / z_b,
            xr: (params.xlr + params.xm) / z_b,
            rr: params.rr / z_b,
            tau_r: params.tau_r(),
        }
    }

    /// Steady-state estimate for a magnetizing reference.
    pub fn steady_flux(&self, i_ds_ref: f64) -> f64 {
        (self.xm * i_ds_ref).max(LAMBDA_FLOOR)
    }

    /// Slip speed (pu) for a given flux estimate.
    pub fn slip_speed(&self, lambda_r_hat: f64, i_qs_ref: f64) -> f64 {
        self.rr / self.xr * self.xm / lambda_r_hat.max(LAMBDA_FLOOR) * i_qs_ref
    }

    /// Advances the flux estimate and returns `(omega_s, omega_sl)` in pu.
    /// The slip uses the estimate from before the update.
    pub fn step(&self, state: &mut RegulatorState, refs: CurrentRefs, omega_r: f64, dt: f64) -> (f64, f64) {
        let omega_sl = self.slip_speed(state.lambda_r_hat, refs.i_qs_ref);
        let lam = state.lambda_r_hat;
        state.lambda_r_hat = (lam + dt * (self.xm * refs.i_ds_ref - lam) / self.tau_r).max(LAMBDA_FLOOR);
        (omega_sl + omega_r, omega_sl)
    }
}

/// Advances the frame angle by `omega_s * omega_b * dt`, wrapped to `[0, 2 pi)`.
pub fn angle_step(theta: f64, omega_s: f64, omega_b: f64, dt: f64) -> f64 {
    let t = (theta + omega_s * omega_b * dt).rem_euclid(TAU);
    // rem_euclid may round to TAU for tiny negative inputs
    if t >= TAU {
        0.0
    } else {
        t
    }
}
