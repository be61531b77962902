//! Shot ensembles: sample, synthesize, propagate, extract, aggregate.

use std::f64::consts::FRAC_PI_2;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::classical_cutoff;
use crate::error::{invalid, Error, Result};
use crate::fieldgen::{synthesize_field, ModeVolumeSpec, PulseSpec, TimeGridSpec};
use crate::quadrature::{
    classical_benchmark_covariance, covariance_of, sample_gaussian, QuadratureCovariance, QuadratureSample, SeedSpec,
};
use crate::spectral::{extract_cutoff, hhg_spectrum, CutoffExtraction, CutoffProtocol, Spectrum, WindowKind};
use crate::tdse::{calibrate_softcore, ground_state, AtomModel, GridSpec, Propagator, Wavefunction, DEFAULT_IP_EV};

/// Largest flagged fraction an ensemble may carry before it is rejected.
pub const MAX_FLAGGED_FRACTION: f64 = 0.05;
pub const BOOTSTRAP_RESAMPLES: usize = 2000;
pub const BOOTSTRAP_SEED: u64 = 0x5eed_b007;
pub const MIN_VALID_FOR_VARIANCE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriverKind {
    #[default]
    Squeezed,
    ClassicalBenchmark,
    Coherent,
}

/// Squeezing of the driving mode. The displacement is fixed by the pulse:
/// `X_c = E₀/E_vac`, `P_c = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SqueezeSpec {
    pub r: f64,
    pub theta: f64,
}

impl Default for SqueezeSpec {
    fn default() -> Self {
        Self { r: 0.0, theta: 0.0 }
    }
}

/// Model atom: calibrated to `ip_target_ev` unless `softening_a` is given.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    pub ip_target_ev: f64,
    pub softening_a: Option<f64>,
}

impl Default for AtomSpec {
    fn default() -> Self {
        Self { ip_target_ev: DEFAULT_IP_EV, softening_a: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub squeeze: SqueezeSpec,
    pub pulse: PulseSpec,
    pub mode_volume: ModeVolumeSpec,
    pub atom: AtomSpec,
    pub grid: GridSpec,
    /// Half-width of the time window in optical cycles.
    pub window_cycles: f64,
    pub spectral_window: WindowKind,
    pub protocol: CutoffProtocol,
    pub n_shot: usize,
    pub master_seed: u64,
    pub driver_kind: DriverKind,
    /// Keep each shot's spectrum (truncated at `spectrum_max_ho`).
    pub store_spectra: bool,
    pub spectrum_max_ho: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            squeeze: SqueezeSpec::default(),
            pulse: PulseSpec::default(),
            mode_volume: ModeVolumeSpec::default(),
            atom: AtomSpec::default(),
            grid: GridSpec::default(),
            window_cycles: 3.0,
            spectral_window: WindowKind::Blackman,
            protocol: CutoffProtocol::default(),
            n_shot: 200,
            master_seed: 0,
            driver_kind: DriverKind::Squeezed,
            store_spectra: false,
            spectrum_max_ho: 250.0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_shot == 0 {
            return Err(invalid("n_shot", "must be >= 1"));
        }
        if !(self.squeeze.r >= 0.0) || !self.squeeze.theta.is_finite() {
            return Err(invalid("squeeze", "need finite theta and r >= 0"));
        }
        if !(self.window_cycles > 0.0) {
            return Err(invalid("window_cycles", "must be > 0"));
        }
        if !(self.spectrum_max_ho > 0.0) {
            return Err(invalid("spectrum_max_ho", "must be > 0"));
        }
        self.pulse.validate()?;
        self.mode_volume.e_vac_au(&self.pulse)?;
        self.grid.validate()?;
        self.protocol.validate()
    }

    /// Quadrature covariance the shots are drawn from.
    pub fn sampling_covariance(&self) -> Result<QuadratureCovariance> {
        let SqueezeSpec { r, theta } = self.squeeze;
        match self.driver_kind {
            DriverKind::Squeezed => covariance_of(r, theta),
            DriverKind::ClassicalBenchmark => classical_benchmark_covariance(r, theta),
            DriverKind::Coherent => Ok(QuadratureCovariance::vacuum()),
        }
    }

    /// Everything except the driver statistics, seed and shot count.
    fn engine_key(&self) -> (PulseSpec, ModeVolumeSpec, AtomSpec, GridSpec, f64, WindowKind, CutoffProtocol, f64) {
        (
            self.pulse,
            self.mode_volume,
            self.atom,
            self.grid,
            self.window_cycles,
            self.spectral_window,
            self.protocol,
            self.spectrum_max_ho,
        )
    }
}

/// Outcome of one shot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub shot_index: u64,
    pub x: f64,
    pub p: f64,
    pub cutoff: Option<CutoffExtraction>,
    pub norm_loss: f64,
    /// Set when the shot could not be completed.
    pub failure: Option<String>,
    #[serde(skip)]
    pub spectrum: Option<Spectrum>,
}

impl ShotRecord {
    pub fn is_valid(&self) -> bool {
        self.failure.is_none() && self.cutoff.is_some_and(|c| c.is_valid())
    }

    pub fn flag_label(&self) -> String {
        match (&self.failure, &self.cutoff) {
            (Some(_), _) => "failed".into(),
            (None, Some(c)) => c.flags.label(),
            (None, None) => "failed".into(),
        }
    }
}

/// Shared, read-only state for every shot of compatible configurations.
#[derive(Debug, Clone)]
pub struct Engine {
    key_config: RunConfig,
    pub atom: AtomModel,
    pub ground: Wavefunction,
    pub ground_energy: f64,
    propagator: Propagator,
    pub e_vac_au: f64,
    pub time_grid: TimeGridSpec,
    /// Classical cutoff at the mean field, a.u.
    pub hint_au: f64,
}

impl Engine {
    pub fn new(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let atom = match config.atom.softening_a {
            None => calibrate_softcore(config.atom.ip_target_ev, &config.grid)?,
            Some(a) => {
                let trial = AtomModel { softening_a: a, ip_target_ev: config.atom.ip_target_ev, ip_achieved_au: 0.0 };
                let gs = ground_state(&trial, &config.grid)?;
                AtomModel { ip_achieved_au: -gs.energy, ..trial }
            }
        };
        let gs = ground_state(&atom, &config.grid)?;
        let pulse = config.pulse;
        Ok(Self {
            key_config: config.clone(),
            atom,
            ground: gs.wavefunction,
            ground_energy: gs.energy,
            propagator: Propagator::new(&atom, &config.grid)?,
            e_vac_au: config.mode_volume.e_vac_au(&pulse)?,
            time_grid: pulse.time_grid(config.window_cycles, config.grid.dt),
            hint_au: classical_cutoff(pulse.e0_au(), atom.ip_achieved_au, pulse.omega_au()),
        })
    }

    /// The configuration the engine was built from.
    pub fn config(&self) -> &RunConfig {
        &self.key_config
    }

    /// Whether `config` can reuse this engine.
    pub fn compatible(&self, config: &RunConfig) -> bool {
        self.key_config.engine_key() == config.engine_key()
    }

    pub fn mean_quadrature(&self) -> (f64, f64) {
        (self.key_config.pulse.e0_au() / self.e_vac_au, 0.0)
    }

    pub fn draw_samples(&self, config: &RunConfig) -> Result<Vec<QuadratureSample>> {
        sample_gaussian(
            &config.sampling_covariance()?,
            self.mean_quadrature(),
            config.n_shot,
            SeedSpec::new(config.master_seed, 0),
        )
    }

    fn try_shot(&self, sample: QuadratureSample) -> Result<(CutoffExtraction, f64, Spectrum)> {
        let cfg = &self.key_config;
        let field = synthesize_field(sample, &cfg.pulse, self.e_vac_au, &self.time_grid)?;
        let trace = self.propagator.propagate(&self.ground, &field)?;
        let spectrum = hhg_spectrum(&trace, cfg.spectral_window, cfg.pulse.omega_au())?.truncated(cfg.spectrum_max_ho);
        let cutoff = extract_cutoff(&spectrum, &cfg.protocol, self.hint_au)?;
        Ok((cutoff, 1.0 - trace.final_norm(), spectrum))
    }

    /// Runs one shot. Failures are recorded, never propagated.
    pub fn run_shot(&self, sample: QuadratureSample, store_spectrum: bool) -> ShotRecord {
        let base = ShotRecord {
            shot_index: sample.shot_index,
            x: sample.x,
            p: sample.p,
            cutoff: None,
            norm_loss: f64::NAN,
            failure: None,
            spectrum: None,
        };
        match self.try_shot(sample) {
            Ok((cutoff, norm_loss, spectrum)) => ShotRecord {
                cutoff: Some(cutoff),
                norm_loss,
                spectrum: store_spectrum.then_some(spectrum),
                ..base
            },
            Err(e) => ShotRecord { failure: Some(e.to_string()), ..base },
        }
    }

    /// Runs every shot of `config` on `workers` threads (all cores if `None`).
    /// Records come back in shot order and do not depend on `workers`.
    pub fn run(&self, config: &RunConfig, workers: Option<usize>) -> Result<Vec<ShotRecord>> {
        if !self.compatible(config) {
            return Err(invalid("config", "engine was built for a different pulse, atom or grid"));
        }
        let samples = self.draw_samples(config)?;
        let store = config.store_spectra;
        let job = || samples.par_iter().map(|&s| self.run_shot(s, store)).collect::<Vec<_>>();
        match workers {
            None => Ok(job()),
            Some(n) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n.max(1))
                    .build()
                    .map_err(|e| invalid("workers", e.to_string()))?;
                Ok(pool.install(job))
            }
        }
    }
}

/// Builds an engine and runs the ensemble.
pub fn run_ensemble(config: &RunConfig, workers: Option<usize>) -> Result<Vec<ShotRecord>> {
    Engine::new(config)?.run(config, workers)
}

pub fn flagged_fraction(records: &[ShotRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().filter(|r| !r.is_valid()).count() as f64 / records.len() as f64
}

/// Rejects ensembles with more than [`MAX_FLAGGED_FRACTION`] flagged shots.
pub fn quality_gate(records: &[ShotRecord]) -> Result<()> {
    let f = flagged_fraction(records);
    if f > MAX_FLAGGED_FRACTION {
        return Err(invalid(
            "ensemble",
            format!("{:.1}% of shots flagged (limit {:.0}%)", 100.0 * f, 100.0 * MAX_FLAGGED_FRACTION),
        ));
    }
    Ok(())
}

/// Cutoff moments over the valid shots, in eV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub mean_h: f64,
    pub var_h: f64,
    pub ci95_var: (f64, f64),
    pub n_valid: usize,
    pub n_flagged: usize,
    /// Mean cutoff weighted by each shot's plateau yield.
    pub yield_weighted_mean_h: f64,
    #[serde(skip)]
    pub h_values: Vec<f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn unbiased_var(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

fn percentile_interval(mut reps: Vec<f64>) -> (f64, f64) {
    reps.sort_by(f64::total_cmp);
    let at = |q: f64| {
        let pos = q * (reps.len() - 1) as f64;
        let (i, f) = (pos.floor() as usize, pos.fract());
        if i + 1 < reps.len() { reps[i] * (1.0 - f) + reps[i + 1] * f } else { reps[i] }
    };
    (at(0.025), at(0.975))
}

fn resample(values: &[f64], rng: &mut ChaCha8Rng, buf: &mut Vec<f64>) {
    buf.clear();
    buf.extend((0..values.len()).map(|_| values[rng.random_range(0..values.len())]));
}

/// Percentile bootstrap CI of the unbiased variance.
pub fn bootstrap_variance_ci(values: &[f64], resamples: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf = Vec::with_capacity(values.len());
    let reps = (0..resamples)
        .map(|_| {
            resample(values, &mut rng, &mut buf);
            unbiased_var(&buf)
        })
        .collect();
    percentile_interval(reps)
}

/// Mean of valid cutoffs (eV); needs one valid shot.
pub fn mean_cutoff(records: &[ShotRecord]) -> Result<f64> {
    let h: Vec<f64> = records.iter().filter(|r| r.is_valid()).map(|r| r.cutoff.unwrap().h_ev).collect();
    if h.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    Ok(mean(&h))
}

pub fn cutoff_statistics(records: &[ShotRecord]) -> Result<EnsembleStats> {
    let valid: Vec<&CutoffExtraction> = records.iter().filter(|r| r.is_valid()).map(|r| r.cutoff.as_ref().unwrap()).collect();
    if valid.len() < MIN_VALID_FOR_VARIANCE {
        return Err(Error::InsufficientData { needed: MIN_VALID_FOR_VARIANCE, got: valid.len() });
    }
    let h: Vec<f64> = valid.iter().map(|c| c.h_ev).collect();
    let wsum: f64 = valid.iter().map(|c| c.plateau_yield).sum();
    let weighted = valid.iter().map(|c| c.plateau_yield * c.h_ev).sum::<f64>() / wsum;
    Ok(EnsembleStats {
        mean_h: mean(&h),
        var_h: unbiased_var(&h),
        ci95_var: bootstrap_variance_ci(&h, BOOTSTRAP_RESAMPLES, BOOTSTRAP_SEED),
        n_valid: h.len(),
        n_flagged: records.len() - h.len(),
        yield_weighted_mean_h: weighted,
        h_values: h,
    })
}

impl EnsembleStats {
    /// Half-width of the variance CI.
    pub fn var_half_width(&self) -> f64 {
        0.5 * (self.ci95_var.1 - self.ci95_var.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WitnessRatio {
    pub ratio: f64,
    pub ci95: (f64, f64),
}

impl WitnessRatio {
    pub fn contains(&self, v: f64) -> bool {
        self.ci95.0 <= v && v <= self.ci95.1
    }
}

/// `var_test/var_sql` with a CI from resampling both ensembles independently.
pub fn witness_ratio(test: &EnsembleStats, sql: &EnsembleStats) -> Result<WitnessRatio> {
    if sql.ci95_var.0 <= 0.0 {
        return Err(Error::UndefinedRatio { lo: sql.ci95_var.0, hi: sql.ci95_var.1 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(BOOTSTRAP_SEED ^ 0x7a7a);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    let reps = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            resample(&test.h_values, &mut rng, &mut a);
            resample(&sql.h_values, &mut rng, &mut b);
            unbiased_var(&a) / unbiased_var(&b)
        })
        .collect();
    Ok(WitnessRatio { ratio: test.var_h / sql.var_h, ci95: percentile_interval(reps) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    R,
    Theta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: f64,
    pub master_seed: u64,
    pub stats: Option<EnsembleStats>,
    pub witness: Option<WitnessRatio>,
    pub n_shot: usize,
    pub flagged_fraction: f64,
}

/// Seed for sweep point `i`; point seeds never coincide with `master`.
pub fn point_seed(master: u64, i: usize) -> u64 {
    master.wrapping_add((i as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// The coherent reference ensemble for `config` (same seed, same shot count).
pub fn sql_config(config: &RunConfig) -> RunConfig {
    RunConfig { driver_kind: DriverKind::Coherent, squeeze: SqueezeSpec::default(), ..config.clone() }
}

/// One ensemble per axis value, each compared with the shared `sql` reference.
pub fn sweep(
    engine: &Engine,
    config: &RunConfig,
    axis: SweepAxis,
    values: &[f64],
    sql: &EnsembleStats,
    workers: Option<usize>,
) -> Result<Vec<SweepRow>> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let mut cfg = config.clone();
            match axis {
                SweepAxis::R => cfg.squeeze.r = v,
                SweepAxis::Theta => cfg.squeeze.theta = v,
            }
            cfg.master_seed = point_seed(config.master_seed, i);
            let records = engine.run(&cfg, workers)?;
            let stats = cutoff_statistics(&records).ok();
            let witness = stats.as_ref().and_then(|s| witness_ratio(s, sql).ok());
            Ok(SweepRow {
                axis,
                value: v,
                master_seed: cfg.master_seed,
                stats,
                witness,
                n_shot: cfg.n_shot,
                flagged_fraction: flagged_fraction(&records),
            })
        })
        .collect()
}

/// Arithmetic mean of the stored spectra of valid shots.
pub fn averaged_spectrum(records: &[ShotRecord]) -> Result<Spectrum> {
    let spectra: Vec<&Spectrum> = records.iter().filter(|r| r.is_valid()).filter_map(|r| r.spectrum.as_ref()).collect();
    let first = *spectra.first().ok_or(Error::InsufficientData { needed: 1, got: 0 })?;
    let mut acc = vec![0.0; first.s.len()];
    for s in &spectra {
        if !s.same_grid(first) {
            return Err(Error::GridMismatch("stored spectra use different frequency grids".into()));
        }
        acc.iter_mut().zip(&s.s).for_each(|(a, v)| *a += v);
    }
    let n = spectra.len() as f64;
    Ok(Spectrum { s: acc.into_iter().map(|a| a / n).collect(), ..first.clone() })
}

/// Per-shot CSV; `omega_au` converts cutoffs to harmonic orders.
pub fn write_shots_csv<W: Write>(records: &[ShotRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "shot_index,x,p,h_au,h_ev,h_ho,plateau_log10,flags,norm_loss")?;
    for r in records {
        let (au, ev, ho, pl) = match r.cutoff {
            Some(c) => (c.h_au, c.h_ev, c.h_ho, c.plateau_level_log10),
            None => (f64::NAN, f64::NAN, f64::NAN, f64::NAN),
        };
        writeln!(
            out,
            "{},{:.12e},{:.12e},{:.12e},{:.9},{:.9},{:.9},{},{:.6e}",
            r.shot_index,
            r.x,
            r.p,
            au,
            ev,
            ho,
            pl,
            r.flag_label(),
            r.norm_loss
        )?;
    }
    Ok(())
}

/// Sweep table with cutoffs in eV.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "axis,value,mean_h_ev,var_h_ev2,ci_lo,ci_hi,witness_ratio,ratio_ci_lo,ratio_ci_hi,n_valid,n_flagged"
    )?;
    for row in rows {
        let axis = match row.axis {
            SweepAxis::R => "r",
            SweepAxis::Theta => "theta",
        };
        let nan = f64::NAN;
        let (m, v, lo, hi, nv, nf) = match &row.stats {
            Some(s) => (s.mean_h, s.var_h, s.ci95_var.0, s.ci95_var.1, s.n_valid, s.n_flagged),
            None => (nan, nan, nan, nan, 0, row.n_shot),
        };
        let (w, wlo, whi) = row.witness.map_or((nan, nan, nan), |w| (w.ratio, w.ci95.0, w.ci95.1));
        writeln!(out, "{axis},{},{m:.9},{v:.9e},{lo:.9e},{hi:.9e},{w:.9e},{wlo:.9e},{whi:.9e},{nv},{nf}", row.value)?;
    }
    Ok(())
}

/// Nine angles evenly spaced over `[0, π/2]`.
pub fn default_theta_axis() -> Vec<f64> {
    (0..9).map(|i| FRAC_PI_2 * i as f64 / 8.0).collect()
}
