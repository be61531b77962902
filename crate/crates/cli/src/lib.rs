//! Batch front-end for squeezed-light HHG ensembles.

pub mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use sqhhg::analytics::{
    birth_phase_grid, cutoff_table, three_step_trajectories, two_channel_fit, write_cutoff_csv, write_yield_csv,
    yield_table, AdkParams, TwoChannelModel,
};
use sqhhg::ensemble::{
    averaged_spectrum, cutoff_statistics, flagged_fraction, mean_cutoff, quality_gate, sql_config, sweep,
    write_shots_csv, write_sweep_csv, DriverKind, Engine, RunConfig, ShotRecord, SweepAxis, SweepRow,
    MAX_FLAGGED_FRACTION,
};
use sqhhg::spectral::{extract_cutoff, hhg_spectrum};
use sqhhg::tdse::{calibrate_softcore, ground_state, GridSpec, Propagator};
use sqhhg::fieldgen::mean_field;
use sqhhg::units;

pub use config::CliConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("quality gate failed: {0}")]
    Quality(String),
    #[error("numerical failure: {0}")]
    Numerical(#[from] sqhhg::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Quality(_) => 3,
            CliError::Numerical(_) | CliError::Io(_) => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "sqhhg", version, about = "Squeezed-light HHG cutoff statistics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON configuration file; omitted keys take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads for the shot ensemble (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Overrides `run.master_seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Dotted-key override, e.g. `--set run.squeeze.r=1.5`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Calibrate the soft-core atom and tabulate grid convergence.
    Calibrate,
    /// Run one ensemble.
    Run,
    /// Run one ensemble per r or θ value against a shared coherent reference.
    Sweep,
    /// Tabulate the closed-form yield and cutoff predictions.
    Analytics,
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("sqhhg: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let config = config::load(cli.config.as_deref(), &cli.overrides, cli.seed)?;
    match cli.command {
        Command::Calibrate => cmd_calibrate(&config, &cli.out).map(|_| ()),
        Command::Run => cmd_run(&config, &cli.out, cli.workers).map(|_| ()),
        Command::Sweep => cmd_sweep(&config, &cli.out, cli.workers).map(|_| ()),
        Command::Analytics => cmd_analytics(&config, &cli.out),
    }
}

fn create(out: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(out.join(name))?))
}

fn write_json<T: Serialize>(out: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let mut w = create(out, name)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(std::io::Error::from)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn prepare_out(config: &CliConfig, out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out)?;
    write_json(out, "config.json", config)
}

fn engine_for(run: &RunConfig) -> Result<Engine, CliError> {
    Engine::new(run).map_err(|e| match e {
        sqhhg::Error::InvalidParameter { .. } => CliError::Config(e.to_string()),
        other => CliError::Numerical(other),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationReport {
    pub softening_a: f64,
    pub ip_target_ev: f64,
    pub ip_achieved_ev: f64,
    pub ip_achieved_au: f64,
    pub convergence: Vec<ConvergenceRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub label: String,
    pub dx: f64,
    pub dt: f64,
    pub half_box: f64,
    pub ip_ev: f64,
    pub mean_field_cutoff_ho: f64,
}

/// Calibrates the atom, then re-evaluates Ip and the mean-field cutoff with
/// the softening fixed while halving dt, halving dx and doubling the box.
pub fn cmd_calibrate(config: &CliConfig, out: &Path) -> Result<CalibrationReport, CliError> {
    prepare_out(config, out)?;
    let run = &config.run;
    let atom = calibrate_softcore(run.atom.ip_target_ev, &run.grid)?;
    let g = run.grid;
    let ladder = [
        ("base", g),
        ("dt/2", GridSpec { dt: g.dt / 2.0, ..g }),
        ("dx/2", GridSpec { nx: 2 * g.nx, ..g }),
        (
            "box*2",
            GridSpec {
                x_min: 2.0 * g.x_min,
                x_max: 2.0 * g.x_max,
                nx: 2 * g.nx,
                absorber_width: 2.0 * g.absorber_width,
                ..g
            },
        ),
    ];
    let pulse = run.pulse;
    let e_vac = run.mode_volume.e_vac_au(&pulse)?;
    let mut convergence = Vec::new();
    for (label, grid) in ladder {
        let gs = ground_state(&atom, &grid)?;
        let ip = -gs.energy;
        let tg = pulse.time_grid(run.window_cycles, grid.dt);
        let trace = Propagator::new(&atom, &grid)?.propagate(&gs.wavefunction, &mean_field(&pulse, e_vac, &tg)?)?;
        let spectrum = hhg_spectrum(&trace, run.spectral_window, pulse.omega_au())?.truncated(run.spectrum_max_ho);
        let hint = sqhhg::analytics::classical_cutoff(pulse.e0_au(), ip, pulse.omega_au());
        let cut = extract_cutoff(&spectrum, &run.protocol, hint)?;
        convergence.push(ConvergenceRow {
            label: label.into(),
            dx: grid.dx(),
            dt: grid.dt,
            half_box: grid.half_width(),
            ip_ev: units::au_to_ev(ip),
            mean_field_cutoff_ho: cut.h_ho,
        });
    }
    let report = CalibrationReport {
        softening_a: atom.softening_a,
        ip_target_ev: atom.ip_target_ev,
        ip_achieved_ev: atom.ip_achieved_ev(),
        ip_achieved_au: atom.ip_achieved_au,
        convergence,
    };
    write_json(out, "calibration.json", &report)?;
    let mut w = create(out, "convergence.csv")?;
    writeln!(w, "label,dx,dt,half_box,ip_ev,mean_field_cutoff_ho")?;
    for r in &report.convergence {
        writeln!(w, "{},{},{},{},{:.9},{:.6}", r.label, r.dx, r.dt, r.half_box, r.ip_ev, r.mean_field_cutoff_ho)?;
    }
    w.flush()?;
    Ok(report)
}

/// Cutoff statistics in eV, atomic units and harmonic orders.
#[derive(Debug, Clone, Serialize)]
pub struct StatsReport {
    pub n_shot: usize,
    pub n_valid: usize,
    pub n_flagged: usize,
    pub flagged_fraction: f64,
    pub mean_h_ev: Option<f64>,
    pub mean_h_au: Option<f64>,
    pub mean_h_ho: Option<f64>,
    pub var_h_ev2: Option<f64>,
    pub var_h_au2: Option<f64>,
    pub var_h_ho2: Option<f64>,
    pub ci95_var_ev2: Option<(f64, f64)>,
    pub yield_weighted_mean_h_ev: Option<f64>,
    pub yield_weighted_mean_h_ho: Option<f64>,
    pub averaged_spectrum_cutoff_ev: Option<f64>,
    pub averaged_spectrum_cutoff_ho: Option<f64>,
}

fn stats_report(records: &[ShotRecord], engine: &Engine, omega: f64) -> StatsReport {
    let ev_to_ho = |ev: f64| units::ev_to_au(ev) / omega;
    let ev2_to_au2 = units::ev_to_au(1.0).powi(2);
    let stats = cutoff_statistics(records).ok();
    let mean = mean_cutoff(records).ok();
    let avg = averaged_spectrum(records)
        .ok()
        .and_then(|s| extract_cutoff(&s, &engine_protocol(engine), engine.hint_au).ok());
    let n_valid = records.iter().filter(|r| r.is_valid()).count();
    StatsReport {
        n_shot: records.len(),
        n_valid,
        n_flagged: records.len() - n_valid,
        flagged_fraction: flagged_fraction(records),
        mean_h_ev: mean,
        mean_h_au: mean.map(units::ev_to_au),
        mean_h_ho: mean.map(ev_to_ho),
        var_h_ev2: stats.as_ref().map(|s| s.var_h),
        var_h_au2: stats.as_ref().map(|s| s.var_h * ev2_to_au2),
        var_h_ho2: stats.as_ref().map(|s| s.var_h * ev2_to_au2 / (omega * omega)),
        ci95_var_ev2: stats.as_ref().map(|s| s.ci95_var),
        yield_weighted_mean_h_ev: stats.as_ref().map(|s| s.yield_weighted_mean_h),
        yield_weighted_mean_h_ho: stats.as_ref().map(|s| ev_to_ho(s.yield_weighted_mean_h)),
        averaged_spectrum_cutoff_ev: avg.map(|c| c.h_ev),
        averaged_spectrum_cutoff_ho: avg.map(|c| c.h_ho),
    }
}

fn engine_protocol(engine: &Engine) -> sqhhg::spectral::CutoffProtocol {
    engine.config().protocol
}

#[derive(Debug, Clone)]
pub struct RunOutputs {
    pub records: Vec<ShotRecord>,
    pub stats: StatsReport,
}

/// Runs the configured ensemble and writes `shots.csv`, `stats.json`,
/// `manifest.json` and, with stored spectra, `mean_spectrum.csv`.
pub fn cmd_run(config: &CliConfig, out: &Path, workers: Option<usize>) -> Result<RunOutputs, CliError> {
    prepare_out(config, out)?;
    let run = &config.run;
    let t0 = Instant::now();
    let engine = engine_for(run)?;
    let t_engine = t0.elapsed().as_secs_f64();
    let records = engine.run(run, workers)?;
    let t_shots = t0.elapsed().as_secs_f64() - t_engine;

    let mut w = create(out, "shots.csv")?;
    write_shots_csv(&records, &mut w)?;
    w.flush()?;
    let omega = run.pulse.omega_au();
    let stats = stats_report(&records, &engine, omega);
    write_json(out, "stats.json", &stats)?;
    let mut outputs = vec!["config.json", "shots.csv", "stats.json", "manifest.json"];
    if run.store_spectra {
        if let Ok(s) = averaged_spectrum(&records) {
            let mut w = create(out, "mean_spectrum.csv")?;
            s.write_csv(&mut w)?;
            w.flush()?;
            outputs.push("mean_spectrum.csv");
        }
    }
    let manifest = json!({
        "schema_version": SCHEMA_VERSION,
        "code_version": env!("CARGO_PKG_VERSION"),
        "command": "run",
        "master_seed": run.master_seed,
        "driver_kind": run.driver_kind,
        "config": config,
        "atom": { "softening_a": engine.atom.softening_a, "ip_achieved_ev": engine.atom.ip_achieved_ev() },
        "e_vac_au": engine.e_vac_au,
        "classical_cutoff_ho": engine.hint_au / omega,
        "timings_s": { "setup": t_engine, "shots": t_shots },
        "outputs": outputs,
    });
    write_json(out, "manifest.json", &manifest)?;
    quality_gate(&records).map_err(|e| CliError::Quality(e.to_string()))?;
    Ok(RunOutputs { records, stats })
}

#[derive(Debug, Clone)]
pub struct SweepOutputs {
    pub sql: StatsReport,
    pub rows: Vec<SweepRow>,
    pub benchmark: Vec<SweepRow>,
    pub fit: Option<TwoChannelModel>,
}

/// Sweeps r or θ. Every point shares one coherent reference ensemble.
pub fn cmd_sweep(config: &CliConfig, out: &Path, workers: Option<usize>) -> Result<SweepOutputs, CliError> {
    prepare_out(config, out)?;
    let run = &config.run;
    let spec = &config.sweep;
    let engine = engine_for(run)?;
    let sql_records = engine.run(&sql_config(run), workers)?;
    let sql_stats = cutoff_statistics(&sql_records)?;
    let omega = run.pulse.omega_au();
    let sql = stats_report(&sql_records, &engine, omega);
    write_json(out, "sql_stats.json", &sql)?;

    let rows = sweep(&engine, run, spec.axis, &spec.values, &sql_stats, workers)?;
    let mut w = create(out, "sweep.csv")?;
    write_sweep_csv(&rows, &mut w)?;
    w.flush()?;

    let benchmark = if spec.include_benchmark {
        let bench = RunConfig { driver_kind: DriverKind::ClassicalBenchmark, ..run.clone() };
        let rows = sweep(&engine, &bench, spec.axis, &spec.values, &sql_stats, workers)?;
        let mut w = create(out, "sweep_benchmark.csv")?;
        write_sweep_csv(&rows, &mut w)?;
        w.flush()?;
        rows
    } else {
        Vec::new()
    };

    let fit = match spec.axis {
        SweepAxis::R => {
            let pts: Vec<(f64, f64)> =
                rows.iter().filter_map(|r| r.stats.as_ref().map(|s| (r.value, s.var_h))).collect();
            two_channel_fit(&pts).ok()
        }
        SweepAxis::Theta => None,
    };
    if let Some(m) = &fit {
        write_json(
            out,
            "twochannel.json",
            &json!({
                "c_x_ev2": m.c_x,
                "c_p_ev2": m.c_p,
                "r_opt": m.r_opt,
                "residual": m.residual,
                "poor_fit": m.poor_fit,
                "boundary": m.boundary,
            }),
        )?;
    }
    let worst = rows.iter().chain(&benchmark).map(|r| r.flagged_fraction).fold(flagged_fraction(&sql_records), f64::max);
    if worst > MAX_FLAGGED_FRACTION {
        return Err(CliError::Quality(format!("{:.1}% of shots flagged at the worst point", 100.0 * worst)));
    }
    Ok(SweepOutputs { sql, rows, benchmark, fit })
}

/// Writes `yield_vs_r.csv`, `cutoff_vs_r.csv` and `three_step.csv`.
pub fn cmd_analytics(config: &CliConfig, out: &Path) -> Result<(), CliError> {
    prepare_out(config, out)?;
    let run = &config.run;
    let pulse = run.pulse;
    let e_vac = run.mode_volume.e_vac_au(&pulse)?;
    let adk = AdkParams::from_ip(units::ev_to_au(run.atom.ip_target_ev))?;
    let rs = &config.analytics.r_values;

    let mut w = create(out, "yield_vs_r.csv")?;
    write_yield_csv(&yield_table(rs, pulse.e0_au(), e_vac, &adk)?, &mut w)?;
    w.flush()?;
    let mut w = create(out, "cutoff_vs_r.csv")?;
    write_cutoff_csv(&cutoff_table(rs, &pulse, e_vac, &adk)?, pulse.omega_au(), &mut w)?;
    w.flush()?;

    let grid = birth_phase_grid(config.analytics.trajectory_points);
    let traj = three_step_trajectories(pulse.e0_au(), pulse.omega_au(), adk.ip_au, &grid)?;
    let mut w = create(out, "three_step.csv")?;
    writeln!(w, "ionization_phase_rad,return_phase_rad,return_energy_over_up,return_energy_ev,dreturn_dtion")?;
    let opt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |v| format!("{v:.9e}"));
    for t in &traj {
        writeln!(
            w,
            "{:.9e},{},{},{},{}",
            t.ionization_phase,
            opt(t.return_phase),
            opt(t.return_energy_over_up),
            opt(t.return_energy_au.map(units::au_to_ev)),
            opt(t.dreturn_dtion)
        )?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/configuration.md")]
    mod configuration {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
