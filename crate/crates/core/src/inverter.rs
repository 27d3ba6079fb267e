//! Two-level voltage-source inverter and ramp-comparison PWM.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SwitchState {
    pub s_a: bool,
    pub s_b: bool,
    pub s_c: bool,
}

impl SwitchState {
    pub fn new(s_a: bool, s_b: bool, s_c: bool) -> Self {
        Self { s_a, s_b, s_c }
    }

    /// All eight states, `a` as the most significant bit.
    pub fn all() -> impl Iterator<Item = SwitchState> {
        (0u8..8).map(|k| SwitchState::new(k & 4 != 0, k & 2 != 0, k & 1 != 0))
    }
}

/// Per-phase duty commands. Values outside `[0, 1]` are legal.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DutyTriple {
    pub d_a: f64,
    pub d_b: f64,
    pub d_c: f64,
}

impl DutyTriple {
    pub fn as_array(&self) -> [f64; 3] {
        [self.d_a, self.d_b, self.d_c]
    }

    /// True when any phase lies outside the carrier range.
    pub fn overmodulated(&self) -> bool {
        self.as_array().iter().any(|d| *d > 1.0 || *d < 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhaseVoltages {
    pub v_am: f64,
    pub v_bm: f64,
    pub v_cm: f64,
    pub v_nm: f64,
    pub v_an: f64,
    pub v_bn: f64,
    pub v_cn: f64,
}

fn check_dc(v_dc: f64) -> Result<()> {
    if v_dc.is_finite() && v_dc > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("DC-link voltage must be > 0, got {v_dc}")))
    }
}

/// Switch states to pole voltages, neutral shift, and phase voltages.
pub fn vsi_map(sw: SwitchState, v_dc: f64) -> Result<PhaseVoltages> {
    check_dc(v_dc)?;
    let pole = |on: bool| if on { v_dc } else { 0.0 };
    let (v_am, v_bm, v_cm) = (pole(sw.s_a), pole(sw.s_b), pole(sw.s_c));
    // Each phase voltage is an integer multiple of v_dc/3 so the sum cancels
    // exactly in floating point.
    let on = [sw.s_a, sw.s_b, sw.s_c].map(i32::from);
    let total: i32 = on.iter().sum();
    let third = v_dc / 3.0;
    let phase = |k: usize| f64::from(3 * on[k] - total) * third;
    Ok(PhaseVoltages {
        v_am,
        v_bm,
        v_cm,
        v_nm: f64::from(total) * third,
        v_an: phase(0),
        v_bn: phase(1),
        v_cn: phase(2),
    })
}

/// `d = v / v_dc + 1/2` per phase, unclamped.
pub fn duty_from_refs(v_refs: [f64; 3], v_dc: f64) -> Result<DutyTriple> {
    check_dc(v_dc)?;
    let d = v_refs.map(|v| v / v_dc + 0.5);
    Ok(DutyTriple {
        d_a: d[0],
        d_b: d[1],
        d_c: d[2],
    })
}

/// Rising sawtooth in `[0, 1)` with period `1 / f_sw`.
pub fn carrier(t: f64, f_sw: f64) -> f64 {
    let x = t * f_sw;
    let c = x - x.floor();
    // x - floor(x) can round up to exactly 1.0 for x just below an integer
    if c >= 1.0 {
        0.0
    } else {
        c
    }
}

/// Strict comparison: a phase conducts while its duty exceeds the carrier.
pub fn switch_decision(d: &DutyTriple, c: f64) -> SwitchState {
    SwitchState::new(d.d_a > c, d.d_b > c, d.d_c > c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vsi_examples() {
        let v = vsi_map(SwitchState::new(true, true, true), 100.0).unwrap();
        assert_eq!(v.v_nm, 100.0);
        assert_eq!((v.v_an, v.v_bn, v.v_cn), (0.0, 0.0, 0.0));

        let v = vsi_map(SwitchState::new(true, false, false), 100.0).unwrap();
        assert!((v.v_an - 200.0 / 3.0).abs() < 1e-12);
        assert!((v.v_bn + 100.0 / 3.0).abs() < 1e-12);
        assert!((v.v_cn + 100.0 / 3.0).abs() < 1e-12);
        assert!((v.v_nm - 100.0 / 3.0).abs() < 1e-12);

        let v = vsi_map(SwitchState::default(), 100.0).unwrap();
        assert_eq!(v, PhaseVoltages::default());
    }

    #[test]
    fn vsi_matches_neutral_subtraction() {
        for sw in SwitchState::all() {
            let v = vsi_map(sw, 540.0).unwrap();
            let nm = (v.v_am + v.v_bm + v.v_cm) / 3.0;
            assert!((v.v_nm - nm).abs() < 1e-12);
            assert!((v.v_an - (v.v_am - nm)).abs() < 1e-12);
            assert!((v.v_bn - (v.v_bm - nm)).abs() < 1e-12);
            assert!((v.v_cn - (v.v_cm - nm)).abs() < 1e-12);
        }
    }

    #[test]
    fn nonpositive_dc_rejected() {
        assert!(vsi_map(SwitchState::default(), 0.0).is_err());
        assert!(duty_from_refs([0.0; 3], -1.0).is_err());
    }

    #[test]
    fn duty_examples() {
        let d = duty_from_refs([0.0; 3], 600.0).unwrap();
        assert_eq!(d.as_array(), [0.5; 3]);
        assert!(!d.overmodulated());

        let d = duty_from_refs([300.0, 0.0, 0.0], 600.0).unwrap();
        assert_eq!(d.d_a, 1.0);
        assert!(!d.overmodulated());

        let d = duty_from_refs([0.85 * 600.0, 0.0, 0.0], 600.0).unwrap();
        assert!((d.d_a - 1.35).abs() < 1e-12);
        assert!(d.overmodulated());
    }

    #[test]
    fn carrier_examples() {
        let f_sw = 6000.0;
        assert_eq!(carrier(0.0, f_sw), 0.0);
        assert!((carrier(0.5 / f_sw, f_sw) - 0.5).abs() < 1e-12);
        let wrapped = carrier(1.0 / f_sw, f_sw);
        assert!(wrapped < 1e-9 || wrapped > 1.0 - 1e-9 && wrapped < 1.0);
        for k in 0..10_000 {
            let c = carrier(f64::from(k) * 1.37e-6, f_sw);
            assert!((0.0..1.0).contains(&c));
        }
    }

    #[test]
    fn comparison_examples() {
        let half = DutyTriple { d_a: 0.5, d_b: 0.5, d_c: 0.5 };
        assert_eq!(switch_decision(&half, 0.25), SwitchState::new(true, true, true));
        assert_eq!(switch_decision(&half, 0.75), SwitchState::default());
        let over = DutyTriple { d_a: 1.35, d_b: 0.5, d_c: 0.2 };
        assert_eq!(switch_decision(&over, 0.99), SwitchState::new(true, false, false));
        let zero = DutyTriple::default();
        assert_eq!(switch_decision(&zero, 0.0), SwitchState::default());
    }

    #[test]
    fn volt_seconds_over_one_period() {
        let f_sw = 6000.0;
        let v_dc = 600.0;
        let steps = 256;
        let dt = 1.0 / (f_sw * f64::from(steps));
        for duty in [0.1, 0.37, 0.5, 0.9] {
            let d = DutyTriple { d_a: duty, d_b: 0.5, d_c: 0.5 };
            let mut acc = 0.0;
            let mut nm = 0.0;
            for k in 0..steps {
                let sw = switch_decision(&d, carrier(f64::from(k) * dt, f_sw));
                let v = vsi_map(sw, v_dc).unwrap();
                acc += v.v_am * dt;
                nm += v.v_nm * dt;
            }
            let avg = acc * f_sw;
            assert!((avg - duty * v_dc).abs() <= v_dc / f64::from(steps) + 1e-9, "{avg}");
            if duty == 0.5 {
                assert!((nm * f_sw - v_dc / 2.0).abs() < 1e-9);
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn phase_voltages_sum_to_zero(v_dc in 1e-3f64..1e4) {
                for sw in SwitchState::all() {
                    let v = vsi_map(sw, v_dc).unwrap();
                    prop_assert_eq!(v.v_an + v.v_bn + v.v_cn, 0.0);
                    for x in [v.v_an, v.v_bn, v.v_cn] {
                        let level = x / (v_dc / 3.0);
                        prop_assert!([-2.0, -1.0, 0.0, 1.0, 2.0].contains(&level));
                    }
                }
            }

            #[test]
            fn duty_is_affine(v in prop::array::uniform3(-1e3f64..1e3), alpha in -3.0f64..3.0) {
                // exact for power-of-two DC link, where v / v_dc is exact
                let v_dc = 512.0;
                let a = duty_from_refs(v, v_dc).unwrap().as_array();
                let b = duty_from_refs(v.map(|x| alpha * x), v_dc).unwrap().as_array();
                for k in 0..3 {
                    prop_assert!(((b[k] - 0.5) - alpha * (a[k] - 0.5)).abs() <= 1e-12);
                }
            }
        }
    }
}
