//! Machine nameplate and equivalent-circuit constants, the peak-valued base
//! system, and a per-phase steady-state equivalent-circuit solver.
//!
//! The base system is amplitude-invariant: `v_b` and `i_b` are peak phase
//! quantities, so a balanced set of 1 pu amplitude maps to a 1 pu qd vector.
//! Base power is `1.5 * v_b * i_b`, which for the default machine coincides
//! with the 20 hp rating.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// One mechanical horsepower in watts.
pub const HORSEPOWER: f64 = 745.699_872;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MachineParams {
    /// Line-to-line RMS voltage, V.
    pub v_ll_rms: f64,
    /// Rated shaft power, W.
    pub p_rated: f64,
    /// Rated (excitation) frequency, Hz.
    pub f: f64,
    pub poles: u32,
    /// Stator resistance, ohm.
    pub rs: f64,
    /// Rotor resistance referred to the stator, ohm.
    pub rr: f64,
    /// Stator leakage reactance at `f`, ohm.
    pub xls: f64,
    /// Rotor leakage reactance at `f`, ohm.
    pub xlr: f64,
    /// Magnetizing reactance at `f`, ohm.
    pub xm: f64,
    /// Mechanical time constant, s.
    pub m_mech: f64,
    /// Peak base current, A. Taken as given rather than derived.
    pub i_b: f64,
}

impl Default for MachineParams {
    /// 460 V, 20 hp, 4-pole, 60 Hz machine.
    fn default() -> Self {
        Self {
            v_ll_rms: 460.0,
            p_rated: 20.0 * HORSEPOWER,
            f: 60.0,
            poles: 4,
            rs: 0.355,
            rr: 0.355,
            xls: 1.42,
            xlr: 1.42,
            xm: 34.1,
            m_mech: 1.4,
            i_b: 26.5,
        }
    }
}

impl MachineParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("v_ll_rms", self.v_ll_rms),
            ("p_rated", self.p_rated),
            ("f", self.f),
            ("rs", self.rs),
            ("rr", self.rr),
            ("xls", self.xls),
            ("xlr", self.xlr),
            ("xm", self.xm),
            ("m_mech", self.m_mech),
            ("i_b", self.i_b),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::domain(format!("{name} must be finite and > 0, got {value}")));
            }
        }
        if self.poles < 2 || !self.poles.is_multiple_of(2) {
            return Err(Error::domain(format!(
                "poles must be even and >= 2, got {}",
                self.poles
            )));
        }
        Ok(())
    }

    pub fn omega_b(&self) -> f64 {
        2.0 * PI * self.f
    }

    /// Magnetizing inductance, H.
    pub fn lm(&self) -> f64 {
        self.xm / self.omega_b()
    }

    /// Stator self inductance, H.
    pub fn ls(&self) -> f64 {
        (self.xls + self.xm) / self.omega_b()
    }

    /// Rotor self inductance, H.
    pub fn lr(&self) -> f64 {
        (self.xlr + self.xm) / self.omega_b()
    }

    /// Rotor time constant `Lr / rr`, s.
    pub fn tau_r(&self) -> f64 {
        self.lr() / self.rr
    }

    /// Peak current implied by equating base power with the rating.
    /// Cross-check for the tabulated `i_b`.
    pub fn i_b_from_rating(&self) -> f64 {
        let v_b = self.v_ll_rms * 2f64.sqrt() / 3f64.sqrt();
        self.p_rated / (1.5 * v_b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaseSet {
    /// Peak line-to-neutral voltage, V.
    pub v_b: f64,
    /// Peak current, A.
    pub i_b: f64,
    pub z_b: f64,
    /// N*m.
    pub t_b: f64,
    /// Electrical rad/s.
    pub omega_b: f64,
}

pub fn derive_bases(params: &MachineParams) -> Result<BaseSet> {
    params.validate()?;
    let v_b = params.v_ll_rms * 2f64.sqrt() / 3f64.sqrt();
    let i_b = params.i_b;
    let omega_b = params.omega_b();
    let pole_pairs = f64::from(params.poles) / 2.0;
    Ok(BaseSet {
        v_b,
        i_b,
        z_b: v_b / i_b,
        t_b: 1.5 * pole_pairs * v_b * i_b / omega_b,
        omega_b,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Voltage,
    Current,
    Impedance,
    Torque,
    Speed,
}

impl BaseSet {
    pub fn base(&self, kind: Quantity) -> f64 {
        match kind {
            Quantity::Voltage => self.v_b,
            Quantity::Current => self.i_b,
            Quantity::Impedance => self.z_b,
            Quantity::Torque => self.t_b,
            Quantity::Speed => self.omega_b,
        }
    }

    pub fn to_per_unit(&self, value: f64, kind: Quantity) -> f64 {
        value / self.base(kind)
    }

    pub fn from_per_unit(&self, value: f64, kind: Quantity) -> f64 {
        value * self.base(kind)
    }
}

/// Equivalent-circuit constants in per-unit of a given base set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PuCircuit {
    pub rs: f64,
    pub rr: f64,
    pub xls: f64,
    pub xlr: f64,
    pub xm: f64,
}

impl PuCircuit {
    pub fn new(params: &MachineParams, bases: &BaseSet) -> Self {
        let z = bases.z_b;
        Self {
            rs: params.rs / z,
            rr: params.rr / z,
            xls: params.xls / z,
            xlr: params.xlr / z,
            xm: params.xm / z,
        }
    }

    pub fn xs(&self) -> f64 {
        self.xls + self.xm
    }

    pub fn xr(&self) -> f64 {
        self.xlr + self.xm
    }
}

/// Steady-state per-phase solution at rated frequency, peak per-unit phasors
/// with the stator voltage on the real axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasorSolution {
    pub slip: f64,
    pub v_s: Complex64,
    pub i_s: Complex64,
    pub i_r: Complex64,
    /// Stator flux-linkage voltage phasor.
    pub psi_s: Complex64,
    /// Rotor flux-linkage voltage phasor.
    pub psi_r: Complex64,
    pub power_factor: f64,
    pub torque: f64,
}

/// Solves `Zin = rs + j xls + (j xm || (rr/slip + j xlr))` at rated frequency.
///
/// `slip == 0` open-circuits the rotor branch. Torque is air-gap power divided
/// by synchronous speed, in per-unit.
pub fn steady_state_circuit(params: &MachineParams, slip: f64, v_pu: f64) -> Result<PhasorSolution> {
    let bases = derive_bases(params)?;
    if !(v_pu.is_finite() && v_pu >= 0.0) {
        return Err(Error::domain(format!("stator voltage must be >= 0, got {v_pu}")));
    }
    if !slip.is_finite() {
        return Err(Error::domain(format!("slip must be finite, got {slip}")));
    }
    let c = PuCircuit::new(params, &bases);
    let j = Complex64::i();
    let v_s = Complex64::new(v_pu, 0.0);
    let z_m = j * c.xm;

    let (i_s, i_r, torque) = if slip == 0.0 {
        let i_s = v_s / (c.rs + j * c.xs());
        (i_s, Complex64::new(0.0, 0.0), 0.0)
    } else {
        let z_rotor = c.rr / slip + j * c.xlr;
        let z_in = c.rs + j * c.xls + z_m * z_rotor / (z_m + z_rotor);
        let i_s = v_s / z_in;
        // rotor mesh: 0 = z_rotor * i_r + z_m * (i_s + i_r)
        let i_r = -z_m * i_s / (z_rotor + z_m);
        let torque = i_r.norm_sqr() * c.rr / slip;
        (i_s, i_r, torque)
    };

    let i_m = i_s + i_r;
    let psi_s = c.xls * i_s + c.xm * i_m;
    let psi_r = c.xlr * i_r + c.xm * i_m;
    let power_factor = if i_s.norm() > 0.0 {
        (v_s.arg() - i_s.arg()).cos()
    } else {
        1.0
    };

    Ok(PhasorSolution {
        slip,
        v_s,
        i_s,
        i_r,
        psi_s,
        psi_r,
        power_factor,
        torque,
    })
}
