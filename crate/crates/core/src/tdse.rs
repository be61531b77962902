//! One-dimensional length-gauge TDSE for a soft-core model atom.
//!
//! `H = p²/2 + V(x) + x·E(t)` with `V(x) = −1/√(x² + a²)` on a periodic grid.
//! Both real- and imaginary-time evolution use the Strang splitting
//! `e^{−iV dt/2} e^{−iT dt} e^{−iV dt/2}` with the kinetic factor applied in
//! momentum space.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, require_positive, Error, Result};
use crate::fieldgen::{FieldRealization, TimeGridSpec};
use crate::units;

/// Mask profile of the absorbing boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbsorberKind {
    /// `cos^{1/8}` of the penetration depth, reaching zero at the box edge.
    CosEighth,
    None,
}

/// Spatial and temporal discretization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub dt: f64,
    pub absorber_width: f64,
    pub absorber_kind: AbsorberKind,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            x_min: -204.8,
            x_max: 204.8,
            nx: 1024,
            dt: 0.05,
            absorber_width: 40.0,
            absorber_kind: AbsorberKind::CosEighth,
        }
    }
}

impl GridSpec {
    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.nx as f64
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.x_max - self.x_min)
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("grid.dt", self.dt)?;
        if !(self.x_max > self.x_min) || !self.x_min.is_finite() || !self.x_max.is_finite() {
            return Err(invalid("grid.x_max", "box must satisfy x_min < x_max"));
        }
        if self.nx < 1024 {
            return Err(invalid("grid.nx", format!("need >= 1024 points, got {}", self.nx)));
        }
        if self.dx() > 0.5 {
            return Err(invalid("grid.nx", format!("dx = {} exceeds 0.5", self.dx())));
        }
        if self.absorber_kind != AbsorberKind::None && self.absorber_width < 0.1 * self.half_width() {
            return Err(invalid(
                "grid.absorber_width",
                format!("must be >= 10% of the half-box ({})", 0.1 * self.half_width()),
            ));
        }
        if self.absorber_width >= self.half_width() {
            return Err(invalid("grid.absorber_width", "absorber covers the whole box"));
        }
        Ok(())
    }

    pub fn positions(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.nx).map(|j| self.x_min + j as f64 * dx).collect()
    }

    /// Angular wavenumbers in FFT order.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let n = self.nx;
        let dk = 2.0 * PI / (self.x_max - self.x_min);
        (0..n)
            .map(|j| {
                let m = if j < n.div_ceil(2) { j as f64 } else { j as f64 - n as f64 };
                m * dk
            })
            .collect()
    }

    pub fn mask(&self) -> Vec<f64> {
        let inner_lo = self.x_min + self.absorber_width;
        let inner_hi = self.x_max - self.absorber_width;
        self.positions()
            .into_iter()
            .map(|x| match self.absorber_kind {
                AbsorberKind::None => 1.0,
                AbsorberKind::CosEighth => {
                    let depth = if x < inner_lo {
                        inner_lo - x
                    } else if x > inner_hi {
                        x - inner_hi
                    } else {
                        return 1.0;
                    };
                    (0.5 * PI * depth / self.absorber_width).cos().max(0.0).powf(0.125)
                }
            })
            .collect()
    }
}

/// Soft-core model atom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomModel {
    pub softening_a: f64,
    pub ip_target_ev: f64,
    pub ip_achieved_au: f64,
}

impl AtomModel {
    pub fn potential(&self, x: f64) -> f64 {
        -1.0 / (x * x + self.softening_a * self.softening_a).sqrt()
    }

    /// `−∂V/∂x = −x / (x² + a²)^{3/2}`.
    pub fn force(&self, x: f64) -> f64 {
        let s = x * x + self.softening_a * self.softening_a;
        -x / (s * s.sqrt())
    }

    pub fn ip_achieved_ev(&self) -> f64 {
        units::au_to_ev(self.ip_achieved_au)
    }
}

/// Wavefunction samples on a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct Wavefunction {
    pub psi: Vec<Complex64>,
    pub dx: f64,
}

impl Wavefunction {
    pub fn norm(&self) -> f64 {
        self.psi.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.dx
    }

    pub fn normalize(&mut self) {
        let s = self.norm().sqrt().recip();
        self.psi.iter_mut().for_each(|z| *z *= s);
    }

    pub fn expectation(&self, f: impl Fn(usize) -> f64) -> f64 {
        self.psi.iter().enumerate().map(|(j, z)| z.norm_sqr() * f(j)).sum::<f64>() * self.dx
    }

    /// `‖self − other‖₂`.
    pub fn distance(&self, other: &Wavefunction) -> f64 {
        (self.psi.iter().zip(&other.psi).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() * self.dx).sqrt()
    }
}

/// Relaxed bound state.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundState {
    pub wavefunction: Wavefunction,
    pub energy: f64,
    pub kinetic: f64,
    pub iterations: usize,
}

/// Dipole acceleration recorded on the driving field's time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccelerationTrace {
    pub grid: TimeGridSpec,
    pub a_au: Vec<f64>,
    pub norm_history: Vec<f64>,
    /// `⟨x⟩(t)`, only when requested.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dipole_au: Option<Vec<f64>>,
}

impl AccelerationTrace {
    pub fn t_au(&self) -> Vec<f64> {
        self.grid.times()
    }

    pub fn final_norm(&self) -> f64 {
        self.norm_history.last().copied().unwrap_or(1.0)
    }
}

const NORM_INFLATION: f64 = 1e-8;

/// Precomputed propagation kernels for one atom on one grid.
///
/// Immutable after construction and shareable between threads; every call to
/// [`Propagator::propagate`] owns its own work buffers.
#[derive(Clone)]
pub struct Propagator {
    grid: GridSpec,
    atom: AtomModel,
    dt: f64,
    x: Vec<f64>,
    force: Vec<f64>,
    /// `mask · e^{−iV dt}` and `e^{−iV dt/2}` (the latter without mask).
    kick_full: Vec<Complex64>,
    kick_half: Vec<Complex64>,
    mask: Vec<f64>,
    /// `e^{−ik²dt/2} / nx`.
    kinetic: Vec<Complex64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Propagator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Propagator")
            .field("grid", &self.grid)
            .field("atom", &self.atom)
            .field("dt", &self.dt)
            .finish()
    }
}

impl Propagator {
    pub fn new(atom: &AtomModel, grid: &GridSpec) -> Result<Self> {
        grid.validate()?;
        Ok(Self::with_signed_dt(atom, grid, grid.dt))
    }

    fn with_signed_dt(atom: &AtomModel, grid: &GridSpec, dt: f64) -> Self {
        let x = grid.positions();
        let mask = grid.mask();
        let v: Vec<f64> = x.iter().map(|&x| atom.potential(x)).collect();
        let inv_n = 1.0 / grid.nx as f64;
        let mut planner = FftPlanner::new();
        Self {
            force: x.iter().map(|&x| atom.force(x)).collect(),
            kick_full: v.iter().zip(&mask).map(|(v, m)| Complex64::from_polar(*m, -v * dt)).collect(),
            kick_half: v.iter().map(|v| Complex64::from_polar(1.0, -0.5 * v * dt)).collect(),
            kinetic: grid
                .wavenumbers()
                .iter()
                .map(|k| Complex64::from_polar(inv_n, -0.5 * k * k * dt))
                .collect(),
            fwd: planner.plan_fft_forward(grid.nx),
            inv: planner.plan_fft_inverse(grid.nx),
            x,
            mask,
            grid: *grid,
            atom: *atom,
            dt,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// One field-free Strang step, absorber included.
    fn free_step(&self, psi: &mut [Complex64], scratch: &mut [Complex64]) {
        psi.iter_mut().zip(&self.kick_half).for_each(|(p, k)| *p *= k);
        self.fwd.process_with_scratch(psi, scratch);
        psi.iter_mut().zip(&self.kinetic).for_each(|(p, k)| *p *= k);
        self.inv.process_with_scratch(psi, scratch);
        psi.iter_mut().zip(&self.kick_half).for_each(|(p, k)| *p *= k);
        psi.iter_mut().zip(&self.mask).for_each(|(p, m)| *p *= m);
    }

    /// Hann-windowed time average `Σ w_m e^{iλm} U^m ψ` tuned to the
    /// eigenphase `λ` of `ψ`, normalized. Components whose eigenphase differs
    /// by more than a few `2π/span` are suppressed.
    pub fn project_stationary(&self, psi: &Wavefunction, span: f64) -> Wavefunction {
        let steps = (span / self.dt.abs()).ceil().max(2.0) as usize;
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.fwd.get_inplace_scratch_len()];
        let mut cur = psi.psi.clone();
        self.free_step(&mut cur, &mut scratch);
        let overlap: Complex64 = psi.psi.iter().zip(&cur).map(|(a, b)| a.conj() * b).sum();
        let rot = Complex64::from_polar(1.0, -overlap.arg());

        cur.copy_from_slice(&psi.psi);
        let mut acc = vec![Complex64::new(0.0, 0.0); cur.len()];
        let mut phase = Complex64::new(1.0, 0.0);
        for m in 0..=steps {
            let w = 0.5 - 0.5 * (2.0 * PI * m as f64 / steps as f64).cos();
            if w > 0.0 {
                let c = phase * w;
                acc.iter_mut().zip(&cur).for_each(|(a, z)| *a += c * z);
            }
            self.free_step(&mut cur, &mut scratch);
            phase *= rot;
        }
        let mut out = Wavefunction { psi: acc, dx: psi.dx };
        out.normalize();
        out
    }

    pub fn atom(&self) -> &AtomModel {
        &self.atom
    }

    /// Propagates `psi0` through `field` and records the Ehrenfest acceleration
    /// `a(t) = ⟨−∂V/∂x⟩ − E(t)·N(t)`, with `N(t)` the norm left in the box.
    pub fn propagate(&self, psi0: &Wavefunction, field: &FieldRealization) -> Result<AccelerationTrace> {
        self.run(psi0, field, false).map(|(trace, _)| trace)
    }

    /// As [`Propagator::propagate`], also recording `⟨x⟩(t)`.
    pub fn propagate_with_dipole(
        &self,
        psi0: &Wavefunction,
        field: &FieldRealization,
    ) -> Result<AccelerationTrace> {
        self.run(psi0, field, true).map(|(trace, _)| trace)
    }

    /// Returns the trace together with the final wavefunction.
    pub fn propagate_full(
        &self,
        psi0: &Wavefunction,
        field: &FieldRealization,
    ) -> Result<(AccelerationTrace, Wavefunction)> {
        self.run(psi0, field, false)
    }

    fn run(
        &self,
        psi0: &Wavefunction,
        field: &FieldRealization,
        record_dipole: bool,
    ) -> Result<(AccelerationTrace, Wavefunction)> {
        if psi0.psi.len() != self.grid.nx {
            return Err(Error::GridMismatch(format!(
                "wavefunction has {} points, grid has {}",
                psi0.psi.len(),
                self.grid.nx
            )));
        }
        if (field.grid.dt - self.dt.abs()).abs() > 1e-12 * self.dt.abs() {
            return Err(Error::GridMismatch(format!(
                "field dt {} differs from propagation dt {}",
                field.grid.dt, self.dt
            )));
        }
        let e = &field.e_au;
        let n_points = e.len();
        let dx = self.grid.dx();
        let x0 = self.x[0];

        let mut psi = psi0.psi.clone();
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.fwd.get_inplace_scratch_len()];
        let mut a = Vec::with_capacity(n_points);
        let mut norms = Vec::with_capacity(n_points);
        let mut dipole = record_dipole.then(|| Vec::with_capacity(n_points));

        let measure = |psi: &[Complex64]| {
            let (mut n, mut f, mut d) = (0.0, 0.0, 0.0);
            for ((z, fj), xj) in psi.iter().zip(&self.force).zip(&self.x) {
                let p = z.norm_sqr();
                n += p;
                f += p * fj;
                if record_dipole {
                    d += p * xj;
                }
            }
            (n * dx, f * dx, d * dx)
        };

        // e^{−i x E c} along the grid by recurrence: z_{j+1} = z_j · e^{−i dx E c}
        let kick = |psi: &mut [Complex64], base: &[Complex64], field: f64, c: f64| {
            let step = Complex64::from_polar(1.0, -dx * field * c);
            let mut z = Complex64::from_polar(1.0, -x0 * field * c);
            for (p, b) in psi.iter_mut().zip(base) {
                *p *= b * z;
                z *= step;
            }
        };

        let (n0, f0, d0) = measure(&psi);
        a.push(f0 - e[0] * n0);
        norms.push(n0);
        if let Some(d) = dipole.as_mut() {
            d.push(d0);
        }

        kick(&mut psi, &self.kick_half, e[0], 0.5 * self.dt);
        for (n, &en) in e.iter().enumerate().skip(1) {
            self.fwd.process_with_scratch(&mut psi, &mut scratch);
            psi.iter_mut().zip(&self.kinetic).for_each(|(p, k)| *p *= k);
            self.inv.process_with_scratch(&mut psi, &mut scratch);
            if n + 1 < n_points {
                kick(&mut psi, &self.kick_full, en, self.dt);
            } else {
                kick(&mut psi, &self.kick_half, en, 0.5 * self.dt);
                psi.iter_mut().zip(&self.mask).for_each(|(p, m)| *p *= m);
            }
            let (nn, ff, dd) = measure(&psi);
            if !(nn.is_finite() && ff.is_finite()) {
                return Err(Error::Instability { step: n, reason: "non-finite wavefunction".into() });
            }
            if nn > 1.0 + NORM_INFLATION {
                return Err(Error::Instability { step: n, reason: format!("norm inflated to {nn}") });
            }
            a.push(ff - en * nn);
            norms.push(nn);
            if let Some(d) = dipole.as_mut() {
                d.push(dd);
            }
        }
        Ok((
            AccelerationTrace {
                grid: field.grid,
                a_au: a,
                norm_history: norms,
                dipole_au: dipole,
            },
            Wavefunction { psi, dx },
        ))
    }
}

/// Imaginary-time step schedule: coarse relaxation, then a fine polish.
const RELAX_STEPS: [f64; 2] = [0.1, 0.01];
const RELAX_TOL: f64 = 1e-10;
const RELAX_MAX_ITER: usize = 200_000;
const ENERGY_EVERY: usize = 10;

/// Length of the real-time projection window, in a.u. of time.
const FILTER_SPAN: f64 = 200.0;

/// Relaxes the lowest even state by imaginary-time split-operator evolution,
/// then projects it onto the stationary state of the real-time propagator for
/// `grid.dt`.
///
/// The imaginary- and real-time Strang splittings have eigenvectors that
/// differ at `O(dt²)`; without the projection that difference shows up as a
/// continuum admixture that drains into the absorber during field-free
/// propagation.
pub fn ground_state(atom: &AtomModel, grid: &GridSpec) -> Result<GroundState> {
    grid.validate()?;
    let relaxed = relax(atom, grid, None)?;
    let prop = Propagator::new(atom, grid)?;
    let wavefunction = prop.project_stationary(&relaxed.wavefunction, FILTER_SPAN);
    let (energy, kinetic) = hamiltonian_expectation(atom, grid, &wavefunction);
    Ok(GroundState {
        wavefunction,
        energy,
        kinetic,
        iterations: relaxed.iterations,
    })
}

/// `(⟨H⟩, ⟨T⟩)` of a normalized state, kinetic term evaluated spectrally.
pub fn hamiltonian_expectation(atom: &AtomModel, grid: &GridSpec, wf: &Wavefunction) -> (f64, f64) {
    let n = grid.nx;
    let k = grid.wavenumbers();
    let x = grid.positions();
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut buf = wf.psi.clone();
    fft.process(&mut buf);
    let t = buf.iter().zip(&k).map(|(z, k)| 0.5 * k * k * z.norm_sqr()).sum::<f64>() * wf.dx / n as f64;
    let u = wf.expectation(|j| atom.potential(x[j]));
    (t + u, t)
}

fn relax(atom: &AtomModel, grid: &GridSpec, start: Option<&Wavefunction>) -> Result<GroundState> {
    let x = grid.positions();
    let k = grid.wavenumbers();
    let dx = grid.dx();
    let n = grid.nx;
    let v: Vec<f64> = x.iter().map(|&x| atom.potential(x)).collect();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut scratch = vec![Complex64::new(0.0, 0.0); fwd.get_inplace_scratch_len()];

    let mut wf = match start {
        Some(w) => w.clone(),
        None => Wavefunction {
            psi: x.iter().map(|&x| Complex64::new((-0.5 * x * x).exp(), 0.0)).collect(),
            dx,
        },
    };
    wf.normalize();

    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut energy_scratch = scratch.clone();
    let mut energy_of = |wf: &Wavefunction| {
        buf.copy_from_slice(&wf.psi);
        fwd.process_with_scratch(&mut buf, &mut energy_scratch);
        // Parseval: Σ|ψ_j|² dx = Σ|ψ̃_k|² dx / n
        let t = buf.iter().zip(&k).map(|(z, k)| 0.5 * k * k * z.norm_sqr()).sum::<f64>() * dx / n as f64;
        let u = wf.expectation(|j| v[j]);
        (t + u, t)
    };

    let mut iterations = 0;
    let mut last = energy_of(&wf);
    for &tau in &RELAX_STEPS {
        let half: Vec<f64> = v.iter().map(|v| (-0.5 * v * tau).exp()).collect();
        let kin: Vec<f64> = k.iter().map(|k| (-0.5 * k * k * tau).exp() / n as f64).collect();
        let mut converged = false;
        while iterations < RELAX_MAX_ITER {
            for _ in 0..ENERGY_EVERY {
                wf.psi.iter_mut().zip(&half).for_each(|(p, h)| *p *= h);
                fwd.process_with_scratch(&mut wf.psi, &mut scratch);
                wf.psi.iter_mut().zip(&kin).for_each(|(p, h)| *p *= h);
                inv.process_with_scratch(&mut wf.psi, &mut scratch);
                wf.psi.iter_mut().zip(&half).for_each(|(p, h)| *p *= h);
                wf.normalize();
            }
            iterations += ENERGY_EVERY;
            let now = energy_of(&wf);
            if !now.0.is_finite() {
                return Err(Error::NotConverged(iterations));
            }
            let change = (now.0 - last.0).abs() / ENERGY_EVERY as f64;
            last = now;
            if change < RELAX_TOL {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NotConverged(iterations));
        }
    }
    Ok(GroundState {
        wavefunction: wf,
        energy: last.0,
        kinetic: last.1,
        iterations,
    })
}

/// Default ionization potential of the argon-like model atom, in eV.
pub const DEFAULT_IP_EV: f64 = 15.76;

/// Tolerance on the calibrated ionization potential, in eV.
pub const CALIBRATION_TOL_EV: f64 = 0.05;

/// Finds the softening `a` whose grid ground-state energy is `−ip_target_ev`.
pub fn calibrate_softcore(ip_target_ev: f64, grid: &GridSpec) -> Result<AtomModel> {
    if !(ip_target_ev > 1.0 && ip_target_ev < 30.0) {
        return Err(invalid("ip_target_ev", format!("must lie in (1, 30) eV, got {ip_target_ev}")));
    }
    grid.validate()?;
    let target = -units::ev_to_au(ip_target_ev);
    let energy = |a: f64, start: Option<&Wavefunction>| {
        let atom = AtomModel { softening_a: a, ip_target_ev, ip_achieved_au: 0.0 };
        relax(&atom, grid, start)
    };

    let (mut lo, mut hi) = (0.2, 5.0);
    let g_lo = energy(lo, None)?;
    let g_hi = energy(hi, None)?;
    if !(g_lo.energy < target && g_hi.energy > target) {
        return Err(Error::Calibration(format!(
            "target {target:.6} a.u. not bracketed by E(a={lo}) = {:.6}, E(a={hi}) = {:.6}",
            g_lo.energy, g_hi.energy
        )));
    }
    let mut best = g_lo;
    let mut best_a = lo;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let g = energy(mid, Some(&best.wavefunction))?;
        if g.energy < target {
            lo = mid;
        } else {
            hi = mid;
        }
        let hit = (g.energy - target).abs();
        if hit < (best.energy - target).abs() {
            best_a = mid;
            best = g;
        }
        if hit < 1e-7 || hi - lo < 1e-9 {
            break;
        }
    }
    let atom = AtomModel {
        softening_a: best_a,
        ip_target_ev,
        ip_achieved_au: -best.energy,
    };
    if (atom.ip_achieved_ev() - ip_target_ev).abs() > CALIBRATION_TOL_EV {
        return Err(Error::Calibration(format!(
            "achieved {:.4} eV, target {ip_target_ev} eV",
            atom.ip_achieved_ev()
        )));
    }
    Ok(atom)
}
