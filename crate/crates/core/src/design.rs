//! Current-loop design on the first-order stator plant `1 / (R + s L')`.
//!
//! The PI zero is placed on the plant pole, which turns the loop gain into a
//! pure integrator `k_p / (s L')` with crossover `omega_c` and 90 degrees of
//! phase margin.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::params::MachineParams;
use crate::regulator::PiGains;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantTf {
    /// Equivalent resistance, ohm.
    pub r_eq: f64,
    /// Transient (leakage) inductance, H.
    pub l_sigma: f64,
}

pub fn plant_tf(params: &MachineParams) -> PlantTf {
    let (lm, lr, ls) = (params.lm(), params.lr(), params.ls());
    PlantTf {
        r_eq: params.rs + params.rr * (lm / lr).powi(2),
        l_sigma: ls - lm * lm / lr,
    }
}

/// Default crossover: one tenth of the switching frequency, rad/s.
pub fn default_omega_c(f_sw: f64) -> f64 {
    2.0 * PI * f_sw / 10.0
}

pub fn pi_gains(plant: &PlantTf, omega_c: f64) -> Result<PiGains> {
    if !(omega_c.is_finite() && omega_c > 0.0) {
        return Err(Error::domain(format!("crossover must be > 0, got {omega_c}")));
    }
    Ok(PiGains {
        k_p: omega_c * plant.l_sigma,
        k_i: omega_c * plant.r_eq,
    })
}

pub fn loop_gain_at(plant: &PlantTf, gains: &PiGains, omega: f64) -> Result<Complex64> {
    if !(omega.is_finite() && omega > 0.0) {
        return Err(Error::domain(format!(
            "loop gain needs omega > 0 (integrator pole at DC), got {omega}"
        )));
    }
    let s = Complex64::new(0.0, omega);
    Ok((gains.k_p + gains.k_i / s) / (plant.r_eq + s * plant.l_sigma))
}

pub fn closed_loop_at(plant: &PlantTf, gains: &PiGains, omega: f64) -> Result<Complex64> {
    if !(omega.is_finite() && omega >= 0.0) {
        return Err(Error::domain(format!("omega must be >= 0, got {omega}")));
    }
    let s = Complex64::new(0.0, omega);
    let num = gains.k_p * s + gains.k_i;
    let den = num + s * (plant.r_eq + s * plant.l_sigma);
    if den.norm() == 0.0 {
        // k_i == 0 and omega == 0: static divider
        return Ok(Complex64::new(gains.k_p / (gains.k_p + plant.r_eq), 0.0));
    }
    Ok(num / den)
}

/// Unity-gain crossover (rad/s) and phase margin (degrees).
pub fn margins(plant: &PlantTf, gains: &PiGains) -> Result<(f64, f64)> {
    const LO: f64 = 1e-3;
    const HI: f64 = 1e9;
    let mag = |w: f64| loop_gain_at(plant, gains, w).map(|g| g.norm());

    // Log-grid scan for the first downward unity crossing.
    let per_decade = 50;
    let decades = (HI / LO).log10();
    let n = (decades * f64::from(per_decade)).ceil() as usize;
    let grid = |k: usize| LO * 10f64.powf(k as f64 / f64::from(per_decade));
    let mut bracket = None;
    let mut prev = mag(LO)?;
    for k in 1..=n {
        let w = grid(k);
        let m = mag(w)?;
        if prev >= 1.0 && m < 1.0 {
            bracket = Some((grid(k - 1), w));
            break;
        }
        prev = m;
    }
    let (mut lo, mut hi) = bracket.ok_or(Error::SearchRange { lo: LO, hi: HI })?;

    // Bisection in log frequency.
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if mag(mid)? >= 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-15 {
            break;
        }
    }
    let crossover = (lo * hi).sqrt();
    let phase = loop_gain_at(plant, gains, crossover)?.arg().to_degrees();
    Ok((crossover, 180.0 + phase))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyResponsePoint {
    pub omega: f64,
    pub magnitude_db: f64,
    pub phase_deg: f64,
}

impl FrequencyResponsePoint {
    fn from_complex(omega: f64, g: Complex64) -> Self {
        Self {
            omega,
            magnitude_db: 20.0 * g.norm().log10(),
            phase_deg: g.arg().to_degrees(),
        }
    }
}

/// Log-spaced open- and closed-loop response, endpoints included.
pub fn bode_table(
    plant: &PlantTf,
    gains: &PiGains,
    omega_min: f64,
    omega_max: f64,
    points_per_decade: usize,
) -> Result<Vec<(FrequencyResponsePoint, FrequencyResponsePoint)>> {
    if !(omega_min > 0.0 && omega_max > omega_min && omega_max.is_finite()) {
        return Err(Error::domain(format!(
            "bode range needs 0 < omega_min < omega_max, got [{omega_min}, {omega_max}]"
        )));
    }
    if points_per_decade == 0 {
        return Err(Error::domain("points_per_decade must be >= 1"));
    }
    let decades = (omega_max / omega_min).log10();
    let n = (decades * points_per_decade as f64).round().max(1.0) as usize;
    (0..=n)
        .map(|k| {
            let omega = if k == n {
                omega_max
            } else {
                omega_min * 10f64.powf(decades * k as f64 / n as f64)
            };
            let ol = loop_gain_at(plant, gains, omega)?;
            let cl = closed_loop_at(plant, gains, omega)?;
            Ok((
                FrequencyResponsePoint::from_complex(omega, ol),
                FrequencyResponsePoint::from_complex(omega, cl),
            ))
        })
        .collect()
}
