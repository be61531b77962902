//! Driving-pulse parameters and per-shot field synthesis.
//!
//! A quadrature pair `(X, P)` maps onto the carrier as
//! `E(t) = E_vac · f(t) · (X cos ωt + P sin ωt)` with the Gaussian envelope
//! `f(t) = exp[−2 ln2 (ωt / 2πN)²]`, whose square has a FWHM of `N` cycles.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, require_positive, Error, Result};
use crate::quadrature::QuadratureSample;
use crate::units;

/// Laser pulse in laboratory units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSpec {
    pub wavelength_nm: f64,
    pub peak_intensity_w_cm2: f64,
    pub n_cycles: f64,
}

impl Default for PulseSpec {
    fn default() -> Self {
        Self {
            wavelength_nm: 1500.0,
            peak_intensity_w_cm2: 1e14,
            n_cycles: 2.0,
        }
    }
}

impl PulseSpec {
    pub fn validate(&self) -> Result<()> {
        require_positive("pulse.wavelength_nm", self.wavelength_nm)?;
        require_positive("pulse.peak_intensity_w_cm2", self.peak_intensity_w_cm2)?;
        if !(self.n_cycles >= 1.0 && self.n_cycles.is_finite()) {
            return Err(invalid("pulse.n_cycles", format!("must be >= 1, got {}", self.n_cycles)));
        }
        Ok(())
    }

    pub fn omega_au(&self) -> f64 {
        units::omega_from_wavelength_nm(self.wavelength_nm)
    }

    /// Mean peak field `E_0`.
    pub fn e0_au(&self) -> f64 {
        units::field_from_intensity(self.peak_intensity_w_cm2)
    }

    pub fn period_au(&self) -> f64 {
        2.0 * PI / self.omega_au()
    }

    pub fn ponderomotive_au(&self) -> f64 {
        units::ponderomotive(self.e0_au(), self.omega_au())
    }

    pub fn envelope(&self, t: f64) -> f64 {
        let s = self.omega_au() * t / (2.0 * PI * self.n_cycles);
        (-2.0 * LN_2 * s * s).exp()
    }

    /// Uniform grid spanning `±half_width_cycles · N` optical periods.
    pub fn time_grid(&self, half_width_cycles: f64, dt: f64) -> TimeGridSpec {
        let half = half_width_cycles * self.n_cycles * self.period_au();
        let n = (2.0 * half / dt).round();
        TimeGridSpec {
            t_min: -0.5 * n * dt,
            t_max: 0.5 * n * dt,
            dt,
        }
    }
}

/// How the vacuum-field amplitude is specified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", deny_unknown_fields)]
pub enum ModeVolumeSpec {
    /// Effective quantization volume in bohr³.
    ExplicitVolume { v_eff_au: f64 },
    /// `E_vac` directly, in a.u.
    ExplicitAmplitude { e_vac_au: f64 },
    /// `E_vac / E_0`.
    Ratio { ratio: f64 },
}

impl Default for ModeVolumeSpec {
    fn default() -> Self {
        ModeVolumeSpec::Ratio { ratio: 1e-2 }
    }
}

impl ModeVolumeSpec {
    pub fn e_vac_au(&self, pulse: &PulseSpec) -> Result<f64> {
        let e = match *self {
            ModeVolumeSpec::ExplicitVolume { v_eff_au } => {
                vacuum_field_amplitude(pulse.omega_au(), v_eff_au)?
            }
            ModeVolumeSpec::ExplicitAmplitude { e_vac_au } => e_vac_au,
            ModeVolumeSpec::Ratio { ratio } => ratio * pulse.e0_au(),
        };
        require_positive("mode_volume (E_vac)", e)
    }
}

/// `E_vac = √(2πω / V_eff)` in atomic units.
pub fn vacuum_field_amplitude(omega_au: f64, v_eff_au: f64) -> Result<f64> {
    require_positive("omega_au", omega_au)?;
    require_positive("v_eff_au", v_eff_au)?;
    Ok((2.0 * PI * omega_au / v_eff_au).sqrt())
}

/// Keldysh parameter `γ = ω √(2 I_p) / E_0`.
pub fn keldysh_gamma(ip_au: f64, e0_au: f64, omega_au: f64) -> f64 {
    omega_au * (2.0 * ip_au).sqrt() / e0_au
}

/// Uniform time grid `t_n = t_min + n·dt`, `n = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGridSpec {
    pub t_min: f64,
    pub t_max: f64,
    pub dt: f64,
}

impl TimeGridSpec {
    pub fn validate(&self) -> Result<()> {
        require_positive("grid.dt", self.dt)?;
        if !(self.t_max > self.t_min) {
            return Err(invalid("grid", "t_max must exceed t_min"));
        }
        let steps = (self.t_max - self.t_min) / self.dt;
        if (steps - steps.round()).abs() > 1e-6 * steps.max(1.0) {
            return Err(invalid("grid", format!("span is not an integral number of steps ({steps})")));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        ((self.t_max - self.t_min) / self.dt).round() as usize
    }

    pub fn len(&self) -> usize {
        self.n_steps() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn time(&self, n: usize) -> f64 {
        self.t_min + n as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|n| self.time(n)).collect()
    }
}

/// One shot's electric field on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldRealization {
    pub grid: TimeGridSpec,
    pub e_au: Vec<f64>,
    pub sample: QuadratureSample,
    pub e_vac_au: f64,
}

impl FieldRealization {
    pub fn t_au(&self) -> Vec<f64> {
        self.grid.times()
    }
}

/// Largest envelope value tolerated at the grid edges.
const EDGE_ENVELOPE_MAX: f64 = 1e-3;

/// Evaluates the field of one quadrature sample on `grid`.
pub fn synthesize_field(
    sample: QuadratureSample,
    pulse: &PulseSpec,
    e_vac_au: f64,
    grid: &TimeGridSpec,
) -> Result<FieldRealization> {
    pulse.validate()?;
    grid.validate()?;
    require_positive("e_vac_au", e_vac_au)?;
    let max_dt = pulse.period_au() / 40.0;
    if grid.dt > max_dt {
        return Err(Error::Resolution { dt: grid.dt, max: max_dt });
    }
    let edge = pulse.envelope(grid.t_min).max(pulse.envelope(grid.t_max));
    if edge > EDGE_ENVELOPE_MAX {
        return Err(invalid(
            "grid",
            format!("does not cover the pulse: envelope at edge is {edge:.3e}"),
        ));
    }
    let w = pulse.omega_au();
    let e_au = (0..grid.len())
        .map(|n| {
            let t = grid.time(n);
            let (s, c) = (w * t).sin_cos();
            e_vac_au * pulse.envelope(t) * (sample.x * c + sample.p * s)
        })
        .collect();
    Ok(FieldRealization {
        grid: *grid,
        e_au,
        sample,
        e_vac_au,
    })
}

/// Deterministic reference pulse: `X = E_0/E_vac`, `P = 0`, peak field `E_0`.
pub fn mean_field(pulse: &PulseSpec, e_vac_au: f64, grid: &TimeGridSpec) -> Result<FieldRealization> {
    let sample = QuadratureSample {
        x: pulse.e0_au() / e_vac_au,
        p: 0.0,
        shot_index: 0,
    };
    synthesize_field(sample, pulse, e_vac_au, grid)
}
