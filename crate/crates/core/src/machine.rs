//! Induction machine dynamics in an arbitrary-speed qd frame, per-unit
//! flux-linkage-voltage formulation.
//!
//! States are the four flux-linkage voltages (flux linkage times base
//! frequency) and the rotor electrical speed in per-unit of `omega_b`. Rotor
//! windings are shorted. Complex space vectors use `F = f_q - j f_d`.

use std::ops::{Add, Mul};

use num_complex::Complex64;

use crate::error::Result;
use crate::params::{derive_bases, MachineParams, PhasorSolution, PuCircuit};

/// Parallel combination of magnetizing and both leakage reactances, ohm.
pub fn xm_star(params: &MachineParams) -> f64 {
    1.0 / (1.0 / params.xm + 1.0 / params.xls + 1.0 / params.xlr)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ImState {
    pub psi_qs: f64,
    pub psi_ds: f64,
    pub psi_qr: f64,
    pub psi_dr: f64,
    /// Rotor electrical speed, pu of `omega_b`.
    pub omega_r: f64,
}

impl ImState {
    pub fn to_array(self) -> [f64; 5] {
        [self.psi_qs, self.psi_ds, self.psi_qr, self.psi_dr, self.omega_r]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self {
            psi_qs: a[0],
            psi_ds: a[1],
            psi_qr: a[2],
            psi_dr: a[3],
            omega_r: a[4],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }

    pub fn psi_s(&self) -> Complex64 {
        Complex64::new(self.psi_qs, -self.psi_ds)
    }

    pub fn psi_r(&self) -> Complex64 {
        Complex64::new(self.psi_qr, -self.psi_dr)
    }

    /// Builds a synchronous-frame state from phasors, rotating them by
    /// `rotation` first.
    pub fn from_phasors(sol: &PhasorSolution, rotation: Complex64, omega_r: f64) -> Self {
        let psi_s = sol.psi_s * rotation;
        let psi_r = sol.psi_r * rotation;
        Self {
            psi_qs: psi_s.re,
            psi_ds: -psi_s.im,
            psi_qr: psi_r.re,
            psi_dr: -psi_r.im,
            omega_r,
        }
    }
}

impl Add for ImState {
    type Output = ImState;
    fn add(self, rhs: ImState) -> ImState {
        let (a, b) = (self.to_array(), rhs.to_array());
        ImState::from_array(std::array::from_fn(|k| a[k] + b[k]))
    }
}

impl Mul<f64> for ImState {
    type Output = ImState;
    fn mul(self, k: f64) -> ImState {
        ImState::from_array(self.to_array().map(|x| x * k))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AuxOutputs {
    pub psi_mq: f64,
    pub psi_md: f64,
    pub i_qs: f64,
    pub i_ds: f64,
    pub i_qr: f64,
    pub i_dr: f64,
    pub t_e: f64,
}

impl AuxOutputs {
    pub fn i_s(&self) -> Complex64 {
        Complex64::new(self.i_qs, -self.i_ds)
    }
}

/// Per-unit machine constants ready for integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MachineModel {
    pub circuit: PuCircuit,
    /// `xm_star` in per-unit.
    pub xm_star: f64,
    pub omega_b: f64,
    pub m_mech: f64,
}

impl MachineModel {
    pub fn new(params: &MachineParams) -> Result<Self> {
        let bases = derive_bases(params)?;
        Ok(Self {
            circuit: PuCircuit::new(params, &bases),
            xm_star: xm_star(params) / bases.z_b,
            omega_b: bases.omega_b,
            m_mech: params.m_mech,
        })
    }

    pub fn aux_outputs(&self, s: &ImState) -> AuxOutputs {
        let c = &self.circuit;
        let psi_mq = self.xm_star * (s.psi_qs / c.xls + s.psi_qr / c.xlr);
        let psi_md = self.xm_star * (s.psi_ds / c.xls + s.psi_dr / c.xlr);
        let i_qs = (s.psi_qs - psi_mq) / c.xls;
        let i_ds = (s.psi_ds - psi_md) / c.xls;
        AuxOutputs {
            psi_mq,
            psi_md,
            i_qs,
            i_ds,
            i_qr: (s.psi_qr - psi_mq) / c.xlr,
            i_dr: (s.psi_dr - psi_md) / c.xlr,
            t_e: s.psi_ds * i_qs - s.psi_qs * i_ds,
        }
    }

    /// Time derivative (per second) of the state. `v_qd` is the stator
    /// voltage pair and `omega_e` the frame speed, both per-unit.
    pub fn state_derivative(&self, s: &ImState, v_qd: (f64, f64), omega_e: f64, t_load: f64) -> ImState {
        let c = &self.circuit;
        let a = self.aux_outputs(s);
        let wb = self.omega_b;
        let slip_speed = omega_e - s.omega_r;
        ImState {
            psi_qs: wb * (v_qd.0 - c.rs * a.i_qs - omega_e * s.psi_ds),
            psi_ds: wb * (v_qd.1 - c.rs * a.i_ds + omega_e * s.psi_qs),
            psi_qr: wb * (-c.rr * a.i_qr - slip_speed * s.psi_dr),
            psi_dr: wb * (-c.rr * a.i_dr + slip_speed * s.psi_qr),
            omega_r: (a.t_e - t_load) / self.m_mech,
        }
    }
}
