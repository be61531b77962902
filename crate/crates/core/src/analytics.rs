//! Closed-form statistics of tunnelling under a Gaussian field marginal,
//! classical cutoff laws, and the two-channel variance model.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::Write;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, require_finite, require_positive, Error, Result};
use crate::fieldgen::PulseSpec;
use crate::quadrature::{covariance_of, VACUUM_VARIANCE};
use crate::units;

/// The three-step cutoff coefficient.
pub const CUTOFF_COEFF: f64 = 3.17;

/// Validity bound on the small parameter ε.
pub const EPSILON_GUARD: f64 = 0.2;

/// Gauss–Hermite order used for marginal averages; doubled for the convergence check.
pub const GH_NODES: usize = 64;
pub const GH_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrefactorMode {
    #[default]
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdkParams {
    pub ip_au: f64,
    pub b_au: f64,
    pub prefactor_mode: PrefactorMode,
}

impl AdkParams {
    pub fn from_ip(ip_au: f64) -> Result<Self> {
        require_positive("ip_au", ip_au)?;
        Ok(Self {
            ip_au,
            b_au: 2.0 / 3.0 * (2.0 * ip_au).powf(1.5),
            prefactor_mode: PrefactorMode::Constant,
        })
    }
}

/// Tunnelling rate `exp(−B/|E|)` with unit prefactor.
pub fn adk_rate(e_abs: f64, params: &AdkParams) -> Result<f64> {
    require_positive("e_abs", e_abs)?;
    Ok((-params.b_au / e_abs).exp())
}

/// Gaussian distribution of the peak field amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldMarginal {
    pub mean_e0_au: f64,
    /// `E_vac²·σ_X²`
    pub var_au: f64,
    pub e_vac_au: f64,
}

impl FieldMarginal {
    pub fn squeezed(e0_au: f64, e_vac_au: f64, r: f64, theta: f64) -> Result<Self> {
        require_positive("e0_au", e0_au)?;
        if !(e_vac_au >= 0.0) {
            return Err(invalid("e_vac_au", "must be >= 0"));
        }
        let sxx = covariance_of(r, theta)?.sxx;
        Ok(Self { mean_e0_au: e0_au, var_au: e_vac_au * e_vac_au * sxx, e_vac_au })
    }

    /// The coherent-state marginal with the same mean and `E_vac`.
    pub fn vacuum(&self) -> Self {
        Self { var_au: self.e_vac_au * self.e_vac_au * VACUUM_VARIANCE, ..*self }
    }

    fn validate(&self) -> Result<()> {
        require_positive("mean_e0_au", self.mean_e0_au)?;
        if !(self.var_au >= 0.0) || !self.var_au.is_finite() {
            return Err(invalid("var_au", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Nodes and weights for `∫ f(x) e^{−x²} dx`, by Newton iteration on the
/// orthonormal Hermite recurrence.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let pim4 = PI.powf(-0.25);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / j as f64).sqrt() * p2 - ((j - 1) as f64 / j as f64).sqrt() * p3;
            }
            pp = (2.0 * n as f64).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() <= 3e-14 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

fn gh_rule(n: usize) -> &'static (Vec<f64>, Vec<f64>) {
    static R64: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    static R128: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    match n {
        GH_NODES => R64.get_or_init(|| gauss_hermite(GH_NODES)),
        _ => R128.get_or_init(|| gauss_hermite(2 * GH_NODES)),
    }
}

/// `(⟨Γ⟩, ⟨Γ·E²⟩)` over the marginal, restricted to `E > 0`.
fn rate_moments(m: &FieldMarginal, adk: &AdkParams, n: usize) -> (f64, f64) {
    let (x, w) = gh_rule(n);
    let s = (2.0 * m.var_au).sqrt();
    let mut g = 0.0;
    let mut ge2 = 0.0;
    for (xi, wi) in x.iter().zip(w) {
        let e = m.mean_e0_au + s * xi;
        if e > 0.0 {
            let rate = (-adk.b_au / e).exp();
            g += wi * rate;
            ge2 += wi * rate * e * e;
        }
    }
    (g / PI.sqrt(), ge2 / PI.sqrt())
}

fn converged_moments(m: &FieldMarginal, adk: &AdkParams) -> Result<(f64, f64)> {
    m.validate()?;
    if m.var_au == 0.0 {
        let r = (-adk.b_au / m.mean_e0_au).exp();
        return Ok((r, r * m.mean_e0_au * m.mean_e0_au));
    }
    let (g1, e1) = rate_moments(m, adk, GH_NODES);
    let (g2, e2) = rate_moments(m, adk, 2 * GH_NODES);
    let change = ((g1 - g2) / g2).abs().max(((e1 - e2) / e2).abs());
    if !(change <= GH_TOL) {
        return Err(Error::Quadrature(change));
    }
    Ok((g2, e2))
}

/// Mean tunnelling rate over the marginal, relative to the coherent state.
pub fn yield_numeric(marginal: &FieldMarginal, adk: &AdkParams) -> Result<f64> {
    let (g, _) = converged_moments(marginal, adk)?;
    let (g0, _) = converged_moments(&marginal.vacuum(), adk)?;
    Ok(g / g0)
}

/// Second-order cumulant coefficients at a given operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CumulantCoeffs {
    pub e0_au: f64,
    pub sigma_vac_sq: f64,
    pub eta: f64,
}

impl CumulantCoeffs {
    pub fn new(e0_au: f64, e_vac_au: f64, adk: &AdkParams) -> Result<Self> {
        require_positive("e0_au", e0_au)?;
        require_finite("e_vac_au", e_vac_au)?;
        let sigma_vac_sq = e_vac_au * e_vac_au * VACUUM_VARIANCE;
        let b = adk.b_au;
        let eta = sigma_vac_sq * (b * b / (2.0 * e0_au.powi(4)) - b / e0_au.powi(3));
        Ok(Self { e0_au, sigma_vac_sq, eta })
    }

    pub fn e_vac_au(&self) -> f64 {
        (self.sigma_vac_sq / VACUUM_VARIANCE).sqrt()
    }
}

/// Relative field fluctuation `ε = σ_X·E_vac/E₀`.
pub fn epsilon(r: f64, theta: f64, e0_au: f64, e_vac_au: f64) -> Result<f64> {
    require_positive("e0_au", e0_au)?;
    Ok(covariance_of(r, theta)?.sxx.sqrt() * e_vac_au / e0_au)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YieldPrediction {
    pub ratio: f64,
    pub epsilon: f64,
    /// ε exceeded [`EPSILON_GUARD`]; the value is still computed.
    pub guard_exceeded: bool,
}

/// `exp[η(2σ_X² − 1)]`.
pub fn yield_analytic(r: f64, theta: f64, coeffs: &CumulantCoeffs) -> Result<YieldPrediction> {
    let sxx = covariance_of(r, theta)?.sxx;
    let eps = epsilon(r, theta, coeffs.e0_au, coeffs.e_vac_au())?;
    Ok(YieldPrediction {
        ratio: (coeffs.eta * (2.0 * sxx - 1.0)).exp(),
        epsilon: eps,
        guard_exceeded: eps > EPSILON_GUARD,
    })
}

/// `Ip + 3.17·E²/(4ω²)`.
pub fn classical_cutoff(e_abs: f64, ip_au: f64, omega_au: f64) -> f64 {
    ip_au + CUTOFF_COEFF * units::ponderomotive(e_abs, omega_au)
}

/// `Ip + 3.17·⟨Γ·Up⟩/⟨Γ⟩`.
pub fn rate_weighted_cutoff_numeric(marginal: &FieldMarginal, adk: &AdkParams, ip_au: f64, omega_au: f64) -> Result<f64> {
    require_positive("omega_au", omega_au)?;
    let (g, ge2) = converged_moments(marginal, adk)?;
    Ok(ip_au + CUTOFF_COEFF * ge2 / g / (4.0 * omega_au * omega_au))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffShiftPrediction {
    pub cutoff_au: f64,
    pub shift_au: f64,
    pub epsilon: f64,
    pub guard_exceeded: bool,
}

/// `Ip + 3.17·Up(E₀)·[1 + ε²(1 + 2B/E₀)]`.
pub fn cutoff_shift_analytic(
    r: f64,
    theta: f64,
    pulse: &PulseSpec,
    e_vac_au: f64,
    adk: &AdkParams,
) -> Result<CutoffShiftPrediction> {
    pulse.validate()?;
    let e0 = pulse.e0_au();
    let eps = epsilon(r, theta, e0, e_vac_au)?;
    let base = CUTOFF_COEFF * pulse.ponderomotive_au();
    let shift = base * eps * eps * (1.0 + 2.0 * adk.b_au / e0);
    Ok(CutoffShiftPrediction {
        cutoff_au: adk.ip_au + base + shift,
        shift_au: shift,
        epsilon: eps,
        guard_exceeded: eps > EPSILON_GUARD,
    })
}

/// Leading-order witness ratio `σ_X²/(1/2)`.
pub fn variance_ratio_leading(r: f64, theta: f64) -> Result<f64> {
    Ok(covariance_of(r, theta)?.sxx / VACUUM_VARIANCE)
}

/// Classical electron born at rest at the origin in `E₀cos(ωt)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryResult {
    /// `ωt₀` measured from the field crest.
    pub ionization_phase: f64,
    /// `ωt_r`, or `None` if the electron does not come back within 1.25 cycles.
    pub return_phase: Option<f64>,
    pub return_energy_over_up: Option<f64>,
    pub return_energy_au: Option<f64>,
    /// `∂E_ret/∂E₀` at fixed phase.
    pub dreturn_denergy: Option<f64>,
    /// `∂E_ret/∂t₀` by centred differences on the phase grid.
    pub dreturn_dtion: Option<f64>,
}

const MAX_EXCURSION: f64 = 2.5 * PI;

/// Scaled excursion `ω²x/E₀` at phase `phi` for birth phase `phi0`.
fn excursion(phi: f64, phi0: f64) -> f64 {
    phi.cos() - phi0.cos() + phi0.sin() * (phi - phi0)
}

fn first_return(phi0: f64) -> Option<f64> {
    // x'' ∝ −cos φ₀ near birth, so the electron leaves toward x < 0 when cos φ₀ > 0
    let step = 2.0 * PI / 4096.0;
    let mut a = phi0 + 1e-3;
    let mut fa = excursion(a, phi0);
    while a < phi0 + MAX_EXCURSION {
        let b = (a + step).min(phi0 + MAX_EXCURSION);
        let fb = excursion(b, phi0);
        if fa == 0.0 {
            return Some(a);
        }
        if fa * fb < 0.0 {
            let (mut lo, mut hi, mut flo) = (a, b, fa);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let fm = excursion(mid, phi0);
                if fm * flo <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                    flo = fm;
                }
                if hi - lo < 1e-14 {
                    break;
                }
            }
            return Some(0.5 * (lo + hi));
        }
        a = b;
        fa = fb;
    }
    None
}

fn return_energy_over_up(phi0: f64) -> Option<(f64, f64)> {
    first_return(phi0).map(|phi_r| (phi_r, 2.0 * (phi_r.sin() - phi0.sin()).powi(2)))
}

/// Return phases and energies for each birth phase in `phase_grid` (radians).
pub fn three_step_trajectories(e0: f64, omega: f64, ip: f64, phase_grid: &[f64]) -> Result<Vec<TrajectoryResult>> {
    require_positive("e0", e0)?;
    require_positive("omega", omega)?;
    require_finite("ip", ip)?;
    let up = units::ponderomotive(e0, omega);
    let k: Vec<Option<(f64, f64)>> = phase_grid.iter().map(|&p| return_energy_over_up(p)).collect();
    Ok(phase_grid
        .iter()
        .enumerate()
        .map(|(i, &phi0)| {
            let ret = k[i];
            let deriv = if i > 0 && i + 1 < phase_grid.len() {
                match (k[i - 1], k[i + 1]) {
                    (Some((_, km)), Some((_, kp))) => {
                        Some(up * (kp - km) / (phase_grid[i + 1] - phase_grid[i - 1]) * omega)
                    }
                    _ => None,
                }
            } else {
                None
            };
            TrajectoryResult {
                ionization_phase: phi0,
                return_phase: ret.map(|r| r.0),
                return_energy_over_up: ret.map(|r| r.1),
                return_energy_au: ret.map(|r| r.1 * up),
                dreturn_denergy: ret.map(|r| 2.0 * r.1 * up / e0),
                dreturn_dtion: deriv,
            }
        })
        .collect())
}

/// Uniform grid of `n` birth phases over `[0, π/2]`.
pub fn birth_phase_grid(n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n).map(|i| FRAC_PI_2 * i as f64 / (n - 1) as f64).collect()
}

/// `ΔH²(r) = C_X e^{−2r} + C_P e^{2r}` fitted to ensemble variances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoChannelModel {
    pub c_x: f64,
    pub c_p: f64,
    /// `¼ ln(C_X/C_P)` when both coefficients are positive.
    pub r_opt: Option<f64>,
    /// RMS of relative residuals.
    pub residual: f64,
    pub poor_fit: bool,
    /// A coefficient sits at zero or the minimum lies outside the sampled r range.
    pub boundary: bool,
}

pub const POOR_FIT_RESIDUAL: f64 = 0.3;

/// Non-negative least squares in relative residuals. Needs at least four
/// distinct r values and positive variances.
pub fn two_channel_fit(variance_vs_r: &[(f64, f64)]) -> Result<TwoChannelModel> {
    for &(r, v) in variance_vs_r {
        require_finite("r", r)?;
        require_positive("variance", v)?;
    }
    let mut rs: Vec<f64> = variance_vs_r.iter().map(|p| p.0).collect();
    rs.sort_by(f64::total_cmp);
    rs.dedup();
    if rs.len() < 4 {
        return Err(Error::InsufficientData { needed: 4, got: rs.len() });
    }
    // rows scaled by 1/y: minimise Σ (a_i C_X + b_i C_P − 1)²
    let rows: Vec<(f64, f64)> = variance_vs_r
        .iter()
        .map(|&(r, v)| ((-2.0 * r).exp() / v, (2.0 * r).exp() / v))
        .collect();
    let (mut saa, mut sab, mut sbb, mut sa, mut sb) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(a, b) in &rows {
        saa += a * a;
        sab += a * b;
        sbb += b * b;
        sa += a;
        sb += b;
    }
    let cost = |cx: f64, cp: f64| rows.iter().map(|&(a, b)| (a * cx + b * cp - 1.0).powi(2)).sum::<f64>();
    let det = saa * sbb - sab * sab;
    let mut candidates = vec![(sa / saa, 0.0), (0.0, sb / sbb)];
    if det > 0.0 {
        let cx = (sa * sbb - sb * sab) / det;
        let cp = (sb * saa - sa * sab) / det;
        if cx >= 0.0 && cp >= 0.0 {
            candidates.push((cx, cp));
        }
    }
    let (c_x, c_p) = candidates
        .into_iter()
        .min_by(|p, q| cost(p.0, p.1).total_cmp(&cost(q.0, q.1)))
        .expect("candidate list is never empty");
    let residual = (cost(c_x, c_p) / rows.len() as f64).sqrt();
    let r_opt = (c_x > 0.0 && c_p > 0.0).then(|| 0.25 * (c_x / c_p).ln());
    let inside = r_opt.is_some_and(|r| r >= rs[0] && r <= rs[rs.len() - 1]);
    Ok(TwoChannelModel {
        c_x,
        c_p,
        r_opt,
        residual,
        poor_fit: residual > POOR_FIT_RESIDUAL,
        boundary: !inside,
    })
}

pub fn two_channel_predict(r: f64, model: &TwoChannelModel) -> f64 {
    model.c_x * (-2.0 * r).exp() + model.c_p * (2.0 * r).exp()
}

/// Row of the yield-versus-r table for amplitude (θ=0) and phase (θ=π/2) squeezing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YieldRow {
    pub r: f64,
    pub as_numeric: f64,
    pub as_analytic: f64,
    pub ps_numeric: f64,
    pub ps_analytic: f64,
    pub eps_ps: f64,
    pub guard_exceeded: bool,
}

/// Row of the cutoff-versus-r table for phase squeezing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffRow {
    pub r: f64,
    pub eps: f64,
    pub analytic_au: f64,
    pub numeric_au: f64,
    pub shift_analytic_au: f64,
    pub shift_numeric_au: f64,
    pub guard_exceeded: bool,
}

pub fn yield_table(rs: &[f64], e0: f64, e_vac: f64, adk: &AdkParams) -> Result<Vec<YieldRow>> {
    let coeffs = CumulantCoeffs::new(e0, e_vac, adk)?;
    rs.iter()
        .map(|&r| {
            let num = |th| yield_numeric(&FieldMarginal::squeezed(e0, e_vac, r, th)?, adk);
            let (a, p) = (yield_analytic(r, 0.0, &coeffs)?, yield_analytic(r, FRAC_PI_2, &coeffs)?);
            Ok(YieldRow {
                r,
                as_numeric: num(0.0)?,
                as_analytic: a.ratio,
                ps_numeric: num(FRAC_PI_2)?,
                ps_analytic: p.ratio,
                eps_ps: p.epsilon,
                guard_exceeded: p.guard_exceeded,
            })
        })
        .collect()
}

pub fn cutoff_table(rs: &[f64], pulse: &PulseSpec, e_vac: f64, adk: &AdkParams) -> Result<Vec<CutoffRow>> {
    let (e0, w) = (pulse.e0_au(), pulse.omega_au());
    let base = classical_cutoff(e0, adk.ip_au, w);
    rs.iter()
        .map(|&r| {
            let pred = cutoff_shift_analytic(r, FRAC_PI_2, pulse, e_vac, adk)?;
            let numeric = rate_weighted_cutoff_numeric(&FieldMarginal::squeezed(e0, e_vac, r, FRAC_PI_2)?, adk, adk.ip_au, w)?;
            Ok(CutoffRow {
                r,
                eps: pred.epsilon,
                analytic_au: pred.cutoff_au,
                numeric_au: numeric,
                shift_analytic_au: pred.shift_au,
                shift_numeric_au: numeric - base,
                guard_exceeded: pred.guard_exceeded,
            })
        })
        .collect()
}

pub fn write_yield_csv<W: Write>(rows: &[YieldRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "r,as_numeric,as_analytic,ps_numeric,ps_analytic,eps_ps,guard_exceeded")?;
    for r in rows {
        writeln!(
            out,
            "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.6e},{}",
            r.r, r.as_numeric, r.as_analytic, r.ps_numeric, r.ps_analytic, r.eps_ps, r.guard_exceeded
        )?;
    }
    Ok(())
}

pub fn write_cutoff_csv<W: Write>(rows: &[CutoffRow], omega_au: f64, mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "r,eps,analytic_au,analytic_ev,analytic_ho,numeric_au,numeric_ev,numeric_ho,shift_analytic_ev,shift_numeric_ev,guard_exceeded"
    )?;
    for c in rows {
        writeln!(
            out,
            "{},{:.6e},{:.9},{:.6},{:.6},{:.9},{:.6},{:.6},{:.6e},{:.6e},{}",
            c.r,
            c.eps,
            c.analytic_au,
            units::au_to_ev(c.analytic_au),
            c.analytic_au / omega_au,
            c.numeric_au,
            units::au_to_ev(c.numeric_au),
            c.numeric_au / omega_au,
            units::au_to_ev(c.shift_analytic_au),
            units::au_to_ev(c.shift_numeric_au),
            c.guard_exceeded
        )?;
    }
    Ok(())
}
