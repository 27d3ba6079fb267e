//! Scalar results extracted from a recorded trace.

use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{Error, Result};
use crate::sim::{SimConfig, Trace, TraceRow};

/// Half-width of the exclusion zone around the load step, s.
pub const STEP_GUARD: f64 = 2e-3;

/// Steady-state statistics over one side of the load step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WindowStats {
    pub start: f64,
    pub end: f64,
    /// Fraction of samples with any duty outside `[0, 1]`.
    pub duty_overflow_fraction: f64,
    pub te_minus_tl_mean: f64,
    pub torque_ripple_rms: f64,
    pub i_qs_mean: f64,
    pub i_qs_ref: f64,
    /// Mean of `|i_qs + j i_ds|`.
    pub i_s_mean: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SpectrumPeak {
    pub freq_hz: f64,
    /// Peak amplitude, pu.
    pub amplitude: f64,
}

/// Phase-a stator current spectrum over an integer number of periods.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Spectrum {
    pub start: f64,
    pub periods: usize,
    pub fundamental_hz: f64,
    pub fundamental: SpectrumPeak,
    /// Largest bin other than DC and the fundamental.
    pub largest_harmonic: SpectrumPeak,
    /// Largest bin between 1.5x the fundamental and 0.9x the carrier frequency.
    pub low_frequency: SpectrumPeak,
    /// One-sided amplitudes, bin `k` at `k * resolution_hz`.
    pub amplitudes: Vec<f64>,
    pub resolution_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Metrics {
    /// 10-90 % rise time of the ripple-averaged `i_qs` after the step, s.
    pub rise_time_10_90: f64,
    pub overshoot_pct: f64,
    /// Time after the step until `i_qs` stays within 2 % of the step size, s.
    pub settle_time_2pct: f64,
    pub pre: WindowStats,
    pub post: WindowStats,
    pub spectrum_pre: Spectrum,
    pub spectrum_post: Spectrum,
}

impl Metrics {
    /// Flat `(key, value)` listing for text output.
    pub fn entries(&self) -> Vec<(String, f64)> {
        let mut out = vec![
            ("rise_time_10_90_s".to_string(), self.rise_time_10_90),
            ("overshoot_pct".to_string(), self.overshoot_pct),
            ("settle_time_2pct_s".to_string(), self.settle_time_2pct),
        ];
        for (name, w) in [("pre", &self.pre), ("post", &self.post)] {
            out.extend([
                (format!("{name}.window_start_s"), w.start),
                (format!("{name}.window_end_s"), w.end),
                (format!("{name}.duty_overflow_fraction"), w.duty_overflow_fraction),
                (format!("{name}.te_minus_tl_mean"), w.te_minus_tl_mean),
                (format!("{name}.torque_ripple_rms"), w.torque_ripple_rms),
                (format!("{name}.i_qs_mean"), w.i_qs_mean),
                (format!("{name}.i_qs_ref"), w.i_qs_ref),
                (format!("{name}.i_s_mean"), w.i_s_mean),
            ]);
        }
        for (name, s) in [("spectrum_pre", &self.spectrum_pre), ("spectrum_post", &self.spectrum_post)] {
            out.extend([
                (format!("{name}.fundamental_hz"), s.fundamental.freq_hz),
                (format!("{name}.fundamental_pu"), s.fundamental.amplitude),
                (format!("{name}.largest_harmonic_hz"), s.largest_harmonic.freq_hz),
                (format!("{name}.largest_harmonic_pu"), s.largest_harmonic.amplitude),
                (format!("{name}.low_frequency_hz"), s.low_frequency.freq_hz),
                (format!("{name}.low_frequency_pu"), s.low_frequency.amplitude),
            ]);
        }
        out
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

fn window_stats(rows: &[TraceRow], start: f64, end: f64) -> Result<WindowStats> {
    let w: Vec<&TraceRow> = rows.iter().filter(|r| r.t >= start && r.t < end).collect();
    if w.is_empty() {
        return Err(Error::Validation(format!("no samples in window [{start}, {end})")));
    }
    let n = w.len() as f64;
    let te_mean = mean(w.iter().map(|r| r.t_e));
    let ripple = (w.iter().map(|r| (r.t_e - te_mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok(WindowStats {
        start,
        end,
        duty_overflow_fraction: w.iter().filter(|r| r.overmod).count() as f64 / n,
        te_minus_tl_mean: mean(w.iter().map(|r| r.t_e - r.t_load)),
        torque_ripple_rms: ripple,
        i_qs_mean: mean(w.iter().map(|r| r.i_qs)),
        i_qs_ref: mean(w.iter().map(|r| r.i_qs_ref)),
        i_s_mean: mean(w.iter().map(|r| r.i_qs.hypot(r.i_ds))),
    })
}

/// Centered moving average with an odd window of at least `width` samples.
pub fn moving_average(x: &[f64], width: usize) -> Vec<f64> {
    let half = width / 2;
    let mut prefix = Vec::with_capacity(x.len() + 1);
    prefix.push(0.0);
    for v in x {
        prefix.push(prefix.last().unwrap() + v);
    }
    (0..x.len())
        .map(|k| {
            let lo = k.saturating_sub(half);
            let hi = (k + half + 1).min(x.len());
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Step-response figures of `y` (sampled at `t`) moving from `from` to `to`
/// at `t0`: (rise 10-90, overshoot %, settle 2 %).
pub fn step_response(t: &[f64], y: &[f64], t0: f64, from: f64, to: f64) -> (f64, f64, f64) {
    let span = to - from;
    if span == 0.0 {
        return (0.0, 0.0, 0.0);
    }
    // progress toward the final value, 0 before and 1 after
    let progress = |v: f64| (v - from) / span;
    let after: Vec<(f64, f64)> = t
        .iter()
        .zip(y)
        .filter(|(ti, _)| **ti >= t0)
        .map(|(ti, v)| (*ti, progress(*v)))
        .collect();
    let crossing = |level: f64| after.iter().find(|(_, p)| *p >= level).map(|(ti, _)| *ti);
    let rise = match (crossing(0.1), crossing(0.9)) {
        (Some(a), Some(b)) => b - a,
        _ => f64::INFINITY,
    };
    let peak = after.iter().map(|(_, p)| *p).fold(f64::NEG_INFINITY, f64::max);
    let overshoot = ((peak - 1.0) * 100.0).max(0.0);
    let settle = after
        .iter()
        .rev()
        .find(|(_, p)| (p - 1.0).abs() > 0.02)
        .map_or(0.0, |(ti, _)| ti - t0);
    (rise, overshoot, settle)
}

/// Amplitude spectrum of `x` sampled at `sample_dt` over `periods` periods
/// of `fundamental_hz`, with peak bins located against `f_sw`.
pub fn spectrum(x: &[f64], sample_dt: f64, fundamental_hz: f64, periods: usize, f_sw: f64, start: f64) -> Result<Spectrum> {
    let n = x.len();
    if n < 16 || periods == 0 {
        return Err(Error::Validation(format!(
            "spectrum window too short: {n} samples, {periods} periods"
        )));
    }
    let mut buf: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(*v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let resolution_hz = 1.0 / (n as f64 * sample_dt);
    let half = n / 2;
    let amplitudes: Vec<f64> = (0..=half)
        .map(|k| {
            let scale = if k == 0 || (n.is_multiple_of(2) && k == half) { 1.0 } else { 2.0 };
            scale * buf[k].norm() / n as f64
        })
        .collect();
    let fund_bin = (fundamental_hz / resolution_hz).round() as usize;
    let peak_in = |lo: f64, hi: f64, skip: &dyn Fn(usize) -> bool| {
        let mut best = SpectrumPeak::default();
        for (k, a) in amplitudes.iter().enumerate() {
            let f = k as f64 * resolution_hz;
            if f <= lo || f >= hi || skip(k) {
                continue;
            }
            if *a > best.amplitude {
                best = SpectrumPeak { freq_hz: f, amplitude: *a };
            }
        }
        best
    };
    let near_fundamental = |k: usize| k.abs_diff(fund_bin) <= 1;
    Ok(Spectrum {
        start,
        periods,
        fundamental_hz,
        fundamental: SpectrumPeak {
            freq_hz: fund_bin as f64 * resolution_hz,
            amplitude: amplitudes.get(fund_bin).copied().unwrap_or(0.0),
        },
        largest_harmonic: peak_in(0.0, f64::INFINITY, &|k| k == 0 || near_fundamental(k)),
        low_frequency: peak_in(1.5 * fundamental_hz, 0.9 * f_sw, &near_fundamental),
        amplitudes,
        resolution_hz,
    })
}

/// Phase-a current spectrum over the whole periods of the mean frame
/// frequency that fit in `[start, end)`, aligned to `end`.
fn window_spectrum(trace: &Trace, start: f64, end: f64, f_b: f64, f_sw: f64) -> Result<Spectrum> {
    let rows: Vec<&TraceRow> = trace.rows.iter().filter(|r| r.t >= start && r.t < end).collect();
    let f1 = mean(rows.iter().map(|r| r.omega_s)) * f_b;
    if !(f1.is_finite() && f1 > 0.0) {
        return Err(Error::Validation(format!("no positive fundamental in [{start}, {end})")));
    }
    let periods = ((end - start) * f1 + 1e-9).floor() as usize;
    let n = ((periods as f64 / f1) / trace.sample_dt).round() as usize;
    if periods == 0 || n > rows.len() {
        return Err(Error::Validation(format!(
            "window [{start}, {end}) shorter than one fundamental period"
        )));
    }
    let tail = &rows[rows.len() - n..];
    let x: Vec<f64> = tail.iter().map(|r| r.i_as).collect();
    spectrum(&x, trace.sample_dt, f1, periods, f_sw, tail[0].t)
}

pub fn compute_metrics(trace: &Trace, cfg: &SimConfig, f_b: f64) -> Result<Metrics> {
    let rows = &trace.rows;
    if rows.is_empty() || rows.last().unwrap().t < cfg.step_time {
        return Err(Error::Validation("trace does not span the load step".into()));
    }
    let pre = window_stats(rows, 0.0, cfg.step_time - STEP_GUARD)?;
    let post = window_stats(rows, cfg.step_time + STEP_GUARD, cfg.duration)?;

    let per_carrier = (1.0 / (cfg.f_sw * trace.sample_dt)).round().max(1.0) as usize;
    let t: Vec<f64> = rows.iter().map(|r| r.t).collect();
    let smooth = moving_average(&rows.iter().map(|r| r.i_qs).collect::<Vec<_>>(), per_carrier);
    let (rise, overshoot, settle) = step_response(
        &t,
        &smooth,
        cfg.step_time,
        cfg.refs_before.i_qs_ref,
        cfg.refs_after.i_qs_ref,
    );

    Ok(Metrics {
        rise_time_10_90: rise,
        overshoot_pct: overshoot,
        settle_time_2pct: settle,
        pre,
        post,
        spectrum_pre: window_spectrum(trace, 0.0, cfg.step_time, f_b, cfg.f_sw)?,
        spectrum_post: window_spectrum(trace, cfg.step_time + STEP_GUARD, cfg.duration, f_b, cfg.f_sw)?,
    })
}
