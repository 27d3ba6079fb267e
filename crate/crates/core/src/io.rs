//! Flat key-value configuration, CSV trace output and key-value reports.
//!
//! Config files hold one `key = value` per line; `#` starts a comment. Keys
//! not listed in [`KEYS`] are rejected. Every omitted key takes the default
//! machine and load-step scenario.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::design::{default_omega_c, FrequencyResponsePoint};
use crate::error::{Error, Result};
use crate::params::{derive_bases, MachineParams, PhasorSolution};
use crate::regulator::CurrentRefs;
use crate::sim::{torque_balanced_i_ds, InitMode, SimConfig, Trace, TraceRow, MIN_STEPS_PER_CARRIER};

/// Recognized configuration keys.
pub const KEYS: &[&str] = &[
    // machine
    "v_ll_rms", "p_rated", "f", "poles", "rs", "rr", "xls", "xlr", "xm", "m_mech", "i_b",
    // scenario
    "v_dc", "v_dc_pu", "f_sw", "dt", "duration", "step_time", "i_qs_ref_before", "i_qs_ref_after",
    "i_ds_ref", "t_load_before", "t_load_after", "init_mode", "omega_c", "decimate",
];

/// Raw settings with the line each came from (0 for command-line flags).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    values: BTreeMap<String, (usize, String)>,
}

impl Overrides {
    /// Sets or replaces a key. `line` 0 marks a command-line source.
    pub fn set(&mut self, key: &str, value: impl ToString, line: usize) -> Result<()> {
        if !KEYS.contains(&key) {
            return Err(Error::Config {
                line,
                key: key.to_string(),
                msg: "unknown key".into(),
            });
        }
        self.values.insert(key.to_string(), (line, value.to_string()));
        Ok(())
    }

    pub fn is_set(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    fn err(&self, key: &str, msg: impl Into<String>) -> Error {
        Error::Config {
            line: self.values.get(key).map_or(0, |(l, _)| *l),
            key: key.to_string(),
            msg: msg.into(),
        }
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some((_, raw)) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|e| self.err(key, format!("cannot parse `{raw}`: {e}"))),
        }
    }

    fn num(&self, key: &str) -> Result<Option<f64>> {
        let v: Option<f64> = self.get(key)?;
        match v {
            Some(x) if !x.is_finite() => Err(self.err(key, "value must be finite")),
            other => Ok(other),
        }
    }

    fn positive(&self, key: &str) -> Result<Option<f64>> {
        match self.num(key)? {
            Some(x) if x <= 0.0 => Err(self.err(key, format!("must be > 0, got {x}"))),
            other => Ok(other),
        }
    }

    fn machine(&self) -> Result<MachineParams> {
        let mut p = MachineParams::default();
        let slots: [(&str, &mut f64); 10] = [
            ("v_ll_rms", &mut p.v_ll_rms),
            ("p_rated", &mut p.p_rated),
            ("f", &mut p.f),
            ("rs", &mut p.rs),
            ("rr", &mut p.rr),
            ("xls", &mut p.xls),
            ("xlr", &mut p.xlr),
            ("xm", &mut p.xm),
            ("m_mech", &mut p.m_mech),
            ("i_b", &mut p.i_b),
        ];
        for (key, slot) in slots {
            if let Some(v) = self.positive(key)? {
                *slot = v;
            }
        }
        if let Some(poles) = self.get::<u32>("poles")? {
            if poles < 2 || poles % 2 != 0 {
                return Err(self.err("poles", format!("must be even and >= 2, got {poles}")));
            }
            p.poles = poles;
        }
        p.validate()?;
        Ok(p)
    }

    /// Applies defaults and checks every scenario invariant.
    pub fn resolve(&self) -> Result<(MachineParams, SimConfig)> {
        let params = self.machine()?;
        let bases = derive_bases(&params)?;
        let base = SimConfig::load_step(&params, 2.5)?;

        let v_dc = match (self.positive("v_dc")?, self.positive("v_dc_pu")?) {
            (Some(_), Some(_)) => return Err(self.err("v_dc_pu", "conflicts with `v_dc`; set only one")),
            (Some(v), None) => v,
            (None, Some(pu)) => pu * bases.v_b,
            (None, None) => base.v_dc,
        };
        let f_sw = self.positive("f_sw")?.unwrap_or(base.f_sw);
        let dt = self.positive("dt")?.unwrap_or(1.0 / (f_sw * 256.0));
        let dt_max = 1.0 / (f_sw * MIN_STEPS_PER_CARRIER);
        if dt > dt_max {
            return Err(self.err("dt", format!("{dt} exceeds the bound dt <= 1/(f_sw*64) = {dt_max}")));
        }
        let duration = self.positive("duration")?.unwrap_or(base.duration);
        let step_time = self.positive("step_time")?.unwrap_or(base.step_time);
        if step_time >= duration {
            let key = if self.is_set("step_time") { "step_time" } else { "duration" };
            return Err(self.err(key, format!("need duration > step_time, got {duration} <= {step_time}")));
        }

        let i_qs_before = self.num("i_qs_ref_before")?.unwrap_or(base.refs_before.i_qs_ref);
        let i_qs_after = self.num("i_qs_ref_after")?.unwrap_or(i_qs_before / 2.0);
        let t_load_before = self.num("t_load_before")?.unwrap_or(base.t_load_before);
        let t_load_after = self.num("t_load_after")?.unwrap_or(base.t_load_after);
        let i_ds = match self.num("i_ds_ref")? {
            Some(v) => v,
            None if i_qs_before != 0.0 => torque_balanced_i_ds(&params, i_qs_before, t_load_before)?,
            None => base.refs_before.i_ds_ref,
        };
        let init_mode = self.get::<InitMode>("init_mode")?.unwrap_or(InitMode::Analytic);
        let omega_c = self.positive("omega_c")?.unwrap_or_else(|| default_omega_c(f_sw));
        let decimate = self.get::<usize>("decimate")?.unwrap_or(base.decimate);
        if decimate == 0 {
            return Err(self.err("decimate", "must be >= 1"));
        }

        let cfg = SimConfig {
            v_dc,
            f_sw,
            dt,
            duration,
            step_time,
            refs_before: CurrentRefs { i_qs_ref: i_qs_before, i_ds_ref: i_ds },
            refs_after: CurrentRefs { i_qs_ref: i_qs_after, i_ds_ref: i_ds },
            t_load_before,
            t_load_after,
            init_mode,
            omega_c,
            decimate,
        };
        cfg.validate()?;
        Ok((params, cfg))
    }
}

/// Parses a flat `key = value` file.
pub fn parse_config(text: &str) -> Result<Overrides> {
    let mut out = Overrides::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(Error::Config {
                line,
                key: content.to_string(),
                msg: "expected `key = value`".into(),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        if out.is_set(key) {
            return Err(Error::Config {
                line,
                key: key.to_string(),
                msg: "duplicate key".into(),
            });
        }
        out.set(key, value, line)?;
    }
    Ok(out)
}

/// Formats with 9 significant digits, trailing zeros trimmed.
pub fn fmt_sig(x: f64) -> String {
    const DIGITS: i32 = 9;
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    let s = if (-5..DIGITS).contains(&exp) {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let s = format!("{:.*e}", (DIGITS - 1) as usize, x);
        let (mantissa, e) = s.split_once('e').unwrap();
        let mantissa = if mantissa.contains('.') {
            mantissa.trim_end_matches('0').trim_end_matches('.')
        } else {
            mantissa
        };
        format!("{mantissa}e{e}")
    };
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

pub fn trace_csv(trace: &Trace) -> String {
    let mut out = TraceRow::COLUMNS.join(",");
    out.push('\n');
    for row in &trace.rows {
        let vals = row.values();
        for (k, v) in vals.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            out.push_str(&fmt_sig(*v));
        }
        out.push('\n');
    }
    out
}

pub fn emit_trace_csv(trace: &Trace, path: &Path) -> Result<()> {
    fs::write(path, trace_csv(trace))?;
    Ok(())
}

/// Reads a trace written by [`emit_trace_csv`].
pub fn read_trace_csv(path: &Path) -> Result<Trace> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header != TraceRow::COLUMNS.join(",") {
        return Err(Error::Validation(format!("unexpected trace header `{header}`")));
    }
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Validation(format!("trace row {}: {e}", k + 1)))?;
        if vals.len() != TraceRow::COLUMNS.len() {
            return Err(Error::Validation(format!("trace row {}: {} columns", k + 1, vals.len())));
        }
        let flag = |x: f64| x as u8;
        rows.push(TraceRow {
            t: vals[0],
            i_qs_ref: vals[1],
            i_ds_ref: vals[2],
            i_qs: vals[3],
            i_ds: vals[4],
            v_qs_ref: vals[5],
            v_ds_ref: vals[6],
            d_a: vals[7],
            d_b: vals[8],
            d_c: vals[9],
            s_a: flag(vals[10]),
            s_b: flag(vals[11]),
            s_c: flag(vals[12]),
            v_an: vals[13],
            i_as: vals[14],
            i_bs: vals[15],
            i_cs: vals[16],
            i_ar: vals[17],
            i_br: vals[18],
            i_cr: vals[19],
            t_e: vals[20],
            t_load: vals[21],
            omega_r: vals[22],
            omega_s: vals[23],
            theta: vals[24],
            overmod: vals[25] != 0.0,
        });
    }
    let sample_dt = if rows.len() > 1 { rows[1].t - rows[0].t } else { 0.0 };
    Ok(Trace { sample_dt, rows })
}

/// `key = value` lines.
pub fn key_values(entries: &[(String, String)]) -> String {
    entries.iter().fold(String::new(), |mut s, (k, v)| {
        let _ = writeln!(s, "{k} = {v}");
        s
    })
}

pub fn emit_metrics(metrics: &crate::metrics::Metrics, path: &Path) -> Result<()> {
    let entries: Vec<(String, String)> = metrics.entries().into_iter().map(|(k, v)| (k, fmt_sig(v))).collect();
    fs::write(path, key_values(&entries))?;
    Ok(())
}

/// Parses `key = value` text back into pairs.
pub fn read_key_values(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

/// The configuration in config-file form; reparsing it reproduces `cfg`.
pub fn config_entries(params: &MachineParams, cfg: &SimConfig) -> Vec<(String, String)> {
    let mut e: Vec<(String, String)> = vec![
        ("v_ll_rms", params.v_ll_rms),
        ("p_rated", params.p_rated),
        ("f", params.f),
        ("rs", params.rs),
        ("rr", params.rr),
        ("xls", params.xls),
        ("xlr", params.xlr),
        ("xm", params.xm),
        ("m_mech", params.m_mech),
        ("i_b", params.i_b),
        ("v_dc", cfg.v_dc),
        ("f_sw", cfg.f_sw),
        ("dt", cfg.dt),
        ("duration", cfg.duration),
        ("step_time", cfg.step_time),
        ("i_qs_ref_before", cfg.refs_before.i_qs_ref),
        ("i_qs_ref_after", cfg.refs_after.i_qs_ref),
        ("i_ds_ref", cfg.refs_before.i_ds_ref),
        ("t_load_before", cfg.t_load_before),
        ("t_load_after", cfg.t_load_after),
        ("omega_c", cfg.omega_c),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), format!("{v:?}")))
    .collect();
    e.push(("poles".into(), params.poles.to_string()));
    e.push(("init_mode".into(), cfg.init_mode.to_string()));
    e.push(("decimate".into(), cfg.decimate.to_string()));
    e
}

pub fn bode_csv(table: &[(FrequencyResponsePoint, FrequencyResponsePoint)]) -> String {
    let mut out = String::from("omega_rad_s,tol_mag_db,tol_phase_deg,tcl_mag_db,tcl_phase_deg\n");
    for (ol, cl) in table {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            fmt_sig(ol.omega),
            fmt_sig(ol.magnitude_db),
            fmt_sig(ol.phase_deg),
            fmt_sig(cl.magnitude_db),
            fmt_sig(cl.phase_deg)
        );
    }
    out
}

pub fn steady_csv(rows: &[PhasorSolution]) -> String {
    let mut out = String::from("slip,i_s_pu,power_factor,torque_pu,i_r_pu,psi_s_pu\n");
    for s in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_sig(s.slip),
            fmt_sig(s.i_s.norm()),
            fmt_sig(s.power_factor),
            fmt_sig(s.torque),
            fmt_sig(s.i_r.norm()),
            fmt_sig(s.psi_s.norm())
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_defaults() {
        let (p, cfg) = parse_config("# nothing\n\n").unwrap().resolve().unwrap();
        assert_eq!(p, MachineParams::default());
        assert_eq!(cfg, SimConfig::load_step(&p, 2.5).unwrap());
    }

    #[test]
    fn low_dc_link_scenario() {
        let (p, cfg) = parse_config("v_dc_pu = 1.7  # overmodulation\n").unwrap().resolve().unwrap();
        let b = derive_bases(&p).unwrap();
        assert!((cfg.v_dc - 1.7 * b.v_b).abs() < 1e-9);
    }

    #[test]
    fn dt_bound_enforced() {
        let e = parse_config("f_sw = 6000\ndt = 1e-5\n").unwrap().resolve().unwrap_err();
        match e {
            Error::Config { line, key, msg } => {
                assert_eq!(line, 2);
                assert_eq!(key, "dt");
                assert!(msg.contains("1/(f_sw*64)"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_reports_line() {
        match parse_config("f = 60\nbogus = 1\n").unwrap_err() {
            Error::Config { line, key, .. } => assert_eq!((line, key.as_str()), (2, "bogus")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_value_reports_key() {
        let e = parse_config("\n\nrs = abc\n").unwrap().resolve().unwrap_err();
        assert!(matches!(e, Error::Config { line: 3, ref key, .. } if key == "rs"));
        let e = parse_config("init_mode = fast\n").unwrap().resolve().unwrap_err();
        assert!(matches!(e, Error::Config { line: 1, ref key, .. } if key == "init_mode"));
        let e = parse_config("poles = 5\n").unwrap().resolve().unwrap_err();
        assert!(matches!(e, Error::Config { ref key, .. } if key == "poles"));
        assert!(parse_config("just words\n").is_err());
        assert!(parse_config("f = 60\nf = 50\n").is_err());
        let e = parse_config("v_dc = 900\nv_dc_pu = 2\n").unwrap().resolve().unwrap_err();
        assert!(matches!(e, Error::Config { .. }));
    }

    #[test]
    fn config_echo_round_trips() {
        let text = "v_dc_pu = 1.7\nomega_c = 2000\ninit_mode = zero\ndecimate = 3\n";
        let (p, cfg) = parse_config(text).unwrap().resolve().unwrap();
        let echo = key_values(&config_entries(&p, &cfg));
        let (p2, cfg2) = parse_config(&echo).unwrap().resolve().unwrap();
        assert_eq!(p, p2);
        assert_eq!(cfg, cfg2);
    }

    #[test]
    fn significant_digits() {
        assert_eq!(fmt_sig(1.184), "1.184");
        assert_eq!(fmt_sig(0.5), "0.5");
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(-0.0), "0");
        assert_eq!(fmt_sig(123456789.0), "123456789");
        assert_eq!(fmt_sig(2.0 / 3.0), "0.666666667");
        assert_eq!(fmt_sig(1.0 / 3.0 * 1e-7), "3.33333333e-8");
        assert_eq!(fmt_sig(6.5e12), "6.5e12");
        assert_eq!(fmt_sig(-273.15), "-273.15");
        assert_eq!(fmt_sig(0.99999999999), "1");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn formatted_value_within_nine_digits(x in -1e12f64..1e12, scale in -12i32..12) {
                let v = x * 10f64.powi(scale);
                let back: f64 = fmt_sig(v).parse().unwrap();
                prop_assert!((back - v).abs() <= 5e-9 * v.abs().max(1e-300));
            }
        }
    }
}
