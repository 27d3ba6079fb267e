use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use imdrive::design::{bode_table, margins, pi_gains, plant_tf};
use imdrive::error::{Error, Result};
use imdrive::io::{
    bode_csv, config_entries, emit_metrics, emit_trace_csv, fmt_sig, key_values, parse_config,
    steady_csv, Overrides,
};
use imdrive::metrics::Metrics;
use imdrive::params::{derive_bases, steady_state_circuit, MachineParams};
use imdrive::sim::{design_gains, run_many, SimConfig};

const RATED_SLIP: f64 = 0.03135;

#[derive(Parser, Debug)]
#[command(name = "imdrive", version, about = "Current-regulated induction machine drive: design and switching simulation")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Flat key = value configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (IMDRIVE_OUT takes precedence)
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// DC-link voltage in multiples of the base voltage
    #[arg(long, global = true)]
    vdc_pu: Option<f64>,
    /// Current-loop crossover, rad/s
    #[arg(long, global = true)]
    omega_c: Option<f64>,
    /// Integration step, s
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Simulated time, s
    #[arg(long, global = true)]
    duration: Option<f64>,
    /// Load step instant, s
    #[arg(long, global = true)]
    step_time: Option<f64>,
    /// Record every N-th integration step
    #[arg(long, global = true)]
    decimate: Option<usize>,
    /// Initial condition: analytic | zero
    #[arg(long, global = true)]
    init: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// PI gains, crossover, phase margin and Bode table
    Design,
    /// Steady-state equivalent circuit over a slip grid
    Steady {
        /// Single slip instead of the default grid
        #[arg(long)]
        slip: Option<f64>,
        /// Stator voltage, pu
        #[arg(long, default_value_t = 1.0)]
        v_pu: f64,
    },
    /// Closed-loop load-step simulation
    Run {
        /// Record every integration step
        #[arg(long)]
        full_rate: bool,
    },
    /// Repeat the run over DC-link voltages or crossovers
    Sweep {
        /// Comma-separated DC-link voltages, pu of base voltage
        #[arg(long, value_delimiter = ',')]
        vdc: Vec<f64>,
        /// Comma-separated crossovers, rad/s
        #[arg(long, value_delimiter = ',')]
        omega_c_list: Vec<f64>,
    },
}

fn overrides(common: &Common) -> Result<Overrides> {
    let mut ov = match &common.config {
        Some(path) => parse_config(&fs::read_to_string(path)?)?,
        None => Overrides::default(),
    };
    if let Some(v) = common.vdc_pu {
        ov.set("v_dc_pu", v, 0)?;
    }
    if let Some(v) = common.omega_c {
        ov.set("omega_c", v, 0)?;
    }
    if let Some(v) = common.dt {
        ov.set("dt", v, 0)?;
    }
    if let Some(v) = common.duration {
        ov.set("duration", v, 0)?;
    }
    if let Some(v) = common.step_time {
        ov.set("step_time", v, 0)?;
    }
    if let Some(v) = common.decimate {
        ov.set("decimate", v, 0)?;
    }
    if let Some(v) = &common.init {
        ov.set("init_mode", v, 0)?;
    }
    Ok(ov)
}

fn out_dir(common: &Common) -> Result<PathBuf> {
    let dir = std::env::var_os("IMDRIVE_OUT").map_or_else(|| common.out.clone(), PathBuf::from);
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn design(params: &MachineParams, cfg: &SimConfig, dir: &Path) -> Result<()> {
    let bases = derive_bases(params)?;
    let plant = plant_tf(params);
    let gains = pi_gains(&plant, cfg.omega_c)?;
    let (crossover, pm) = margins(&plant, &gains)?;
    let table = bode_table(&plant, &gains, cfg.omega_c / 1000.0, cfg.omega_c * 1000.0, 50)?;
    let bode_path = dir.join("bode.csv");
    fs::write(&bode_path, bode_csv(&table))?;

    let report = vec![
        ("r_eq_ohm", fmt_sig(plant.r_eq)),
        ("l_sigma_h", fmt_sig(plant.l_sigma)),
        ("omega_c_rad_s", fmt_sig(cfg.omega_c)),
        ("k_p_v_per_a", fmt_sig(gains.k_p)),
        ("k_i_v_per_a_s", fmt_sig(gains.k_i)),
        ("k_p_pu", fmt_sig(gains.k_p / bases.z_b)),
        ("k_i_pu_per_s", fmt_sig(gains.k_i / bases.z_b)),
        ("crossover_rad_s", fmt_sig(crossover)),
        ("crossover_hz", fmt_sig(crossover / (2.0 * PI))),
        ("phase_margin_deg", fmt_sig(pm)),
        ("bode_csv", bode_path.display().to_string()),
    ];
    let report: Vec<(String, String)> = report.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    let text = key_values(&report);
    fs::write(dir.join("design.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn steady(params: &MachineParams, slip: Option<f64>, v_pu: f64, dir: &Path) -> Result<()> {
    let slips: Vec<f64> = match slip {
        Some(s) => vec![s],
        None => {
            let mut grid: Vec<f64> = (0..=40).map(|k| f64::from(k) * 0.0025).collect();
            grid.push(RATED_SLIP);
            grid.sort_by(f64::total_cmp);
            grid
        }
    };
    let rows = slips
        .iter()
        .map(|s| steady_state_circuit(params, *s, v_pu))
        .collect::<Result<Vec<_>>>()?;
    let text = steady_csv(&rows);
    fs::write(dir.join("steady.csv"), &text)?;
    print!("{text}");
    Ok(())
}

fn manifest(
    params: &MachineParams,
    cfg: &SimConfig,
    metrics: &Metrics,
    artifacts: &[(&str, &Path)],
) -> Result<String> {
    let bases = derive_bases(params)?;
    let plant = plant_tf(params);
    let gains = design_gains(params, cfg)?;
    let mut e: Vec<(String, String)> = config_entries(params, cfg)
        .into_iter()
        .map(|(k, v)| (format!("config.{k}"), v))
        .collect();
    e.extend(
        [
            ("plant.r_eq_ohm", plant.r_eq),
            ("plant.l_sigma_h", plant.l_sigma),
            ("gains.k_p_v_per_a", gains.k_p),
            ("gains.k_i_v_per_a_s", gains.k_i),
            ("gains.k_p_pu", gains.k_p / bases.z_b),
            ("gains.k_i_pu_per_s", gains.k_i / bases.z_b),
            ("bases.v_b", bases.v_b),
            ("bases.i_b", bases.i_b),
            ("bases.z_b", bases.z_b),
            ("bases.t_b", bases.t_b),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), format!("{v:?}"))),
    );
    e.extend(metrics.entries().into_iter().map(|(k, v)| (format!("metrics.{k}"), fmt_sig(v))));
    e.extend(artifacts.iter().map(|(k, p)| (format!("artifact.{k}"), p.display().to_string())));
    Ok(key_values(&e))
}

fn run(params: &MachineParams, cfg: &SimConfig, dir: &Path) -> Result<()> {
    let results = run_many(std::slice::from_ref(cfg), params, |c| design_gains(params, c));
    let (trace, metrics) = results.into_iter().next().expect("one run")?;
    let trace_path = dir.join("trace.csv");
    let metrics_path = dir.join("metrics.txt");
    let manifest_path = dir.join("manifest.txt");
    emit_trace_csv(&trace, &trace_path)?;
    emit_metrics(&metrics, &metrics_path)?;
    let text = manifest(
        params,
        cfg,
        &metrics,
        &[("trace", &trace_path), ("metrics", &metrics_path), ("manifest", &manifest_path)],
    )?;
    fs::write(&manifest_path, text)?;
    for (k, v) in metrics.entries() {
        if !k.starts_with("spectrum") {
            println!("{k} = {}", fmt_sig(v));
        }
    }
    println!("trace written to {}", trace_path.display());
    Ok(())
}

fn sweep(params: &MachineParams, base: &SimConfig, vdc: &[f64], omega_cs: &[f64], dir: &Path) -> Result<()> {
    let bases = derive_bases(params)?;
    let mut cfgs: Vec<SimConfig> = vdc.iter().map(|pu| SimConfig { v_dc: pu * bases.v_b, ..*base }).collect();
    cfgs.extend(omega_cs.iter().map(|wc| SimConfig { omega_c: *wc, ..*base }));
    if cfgs.is_empty() {
        return Err(Error::Validation("sweep needs --vdc or --omega-c-list values".into()));
    }
    let results = run_many(&cfgs, params, |c| design_gains(params, c));

    let mut text = String::from(
        "v_dc_pu,omega_c_rad_s,rise_time_s,overshoot_pct,pre_overflow,post_overflow,pre_te_err,post_te_err,pre_i_qs_mean,low_freq_ratio\n",
    );
    for (cfg, result) in cfgs.iter().zip(results) {
        let (_, m) = result?;
        let fields = [
            cfg.v_dc / bases.v_b,
            cfg.omega_c,
            m.rise_time_10_90,
            m.overshoot_pct,
            m.pre.duty_overflow_fraction,
            m.post.duty_overflow_fraction,
            m.pre.te_minus_tl_mean,
            m.post.te_minus_tl_mean,
            m.pre.i_qs_mean,
            m.spectrum_pre.low_frequency.amplitude / m.spectrum_pre.fundamental.amplitude,
        ];
        let line: Vec<String> = fields.iter().map(|v| fmt_sig(*v)).collect();
        text.push_str(&line.join(","));
        text.push('\n');
    }
    fs::write(dir.join("sweep.csv"), &text)?;
    print!("{text}");
    Ok(())
}

fn execute(cli: &Cli) -> Result<()> {
    let (params, cfg) = overrides(&cli.common)?.resolve()?;
    let dir = out_dir(&cli.common)?;
    match &cli.command {
        Command::Design => design(&params, &cfg, &dir),
        Command::Steady { slip, v_pu } => steady(&params, *slip, *v_pu, &dir),
        Command::Run { full_rate } => {
            let cfg = if *full_rate { SimConfig { decimate: 1, ..cfg } } else { cfg };
            run(&params, &cfg, &dir)
        }
        Command::Sweep { vdc, omega_c_list } => sweep(&params, &cfg, vdc, omega_c_list, &dir),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
