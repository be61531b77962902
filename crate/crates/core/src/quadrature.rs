//! Squeezed-state quadrature covariances and Wigner-function sampling.
//!
//! Quadratures are dimensionless with the vacuum variance equal to 1/2.
//! `θ = 0` squeezes the in-phase quadrature `X` (amplitude squeezing) and
//! `θ = π/2` squeezes `P` (phase squeezing).

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, require_finite, Error, Result};

/// Quadrature variance of the vacuum (and of every coherent state).
pub const VACUUM_VARIANCE: f64 = 0.5;

/// Driver state parameters: squeezing `r e^{iθ}` and displacement `|α| e^{iφ}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqueezeParams {
    pub r: f64,
    pub theta: f64,
    pub alpha_mag: f64,
    pub phi: f64,
}

impl SqueezeParams {
    /// Validates `r ≥ 0` and reduces `theta` into `[0, π)`.
    pub fn new(r: f64, theta: f64, alpha_mag: f64, phi: f64) -> Result<Self> {
        require_finite("r", r)?;
        require_finite("theta", theta)?;
        require_finite("alpha_mag", alpha_mag)?;
        require_finite("phi", phi)?;
        if r < 0.0 {
            return Err(invalid("r", format!("squeezing magnitude must be >= 0, got {r}")));
        }
        Ok(Self {
            r,
            theta: reduce_angle(theta),
            alpha_mag,
            phi,
        })
    }

    pub fn coherent(alpha_mag: f64) -> Self {
        Self {
            r: 0.0,
            theta: 0.0,
            alpha_mag,
            phi: 0.0,
        }
    }

    /// Phase-space centre `(X_c, P_c) = |α| (cos φ, sin φ)`.
    pub fn mean(&self) -> (f64, f64) {
        (self.alpha_mag * self.phi.cos(), self.alpha_mag * self.phi.sin())
    }

    pub fn covariance(&self) -> Result<QuadratureCovariance> {
        covariance_of(self.r, self.theta)
    }
}

/// Reduces an angle into `[0, π)`.
pub fn reduce_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(PI);
    // rem_euclid can round up to exactly π for tiny negative inputs
    if t >= PI {
        0.0
    } else {
        t
    }
}

/// Symmetric 2×2 covariance of `(X, P)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureCovariance {
    pub sxx: f64,
    pub spp: f64,
    pub sxp: f64,
}

impl QuadratureCovariance {
    pub fn vacuum() -> Self {
        Self {
            sxx: VACUUM_VARIANCE,
            spp: VACUUM_VARIANCE,
            sxp: 0.0,
        }
    }

    pub fn det(&self) -> f64 {
        // fused form keeps the large-r cancellation at one rounding
        let p = self.sxp * self.sxp;
        let p_err = self.sxp.mul_add(self.sxp, -p);
        self.sxx.mul_add(self.spp, -p) - p_err
    }

    /// Variance of the rotated quadrature `X cos φ + P sin φ`.
    ///
    /// For a squeezed state `covariance_of(r, θ)` this equals
    /// `covariance_of(r, θ + φ).sxx`: the squeezed axis points along `−θ`.
    pub fn rotated_variance(&self, phi: f64) -> f64 {
        let (s, c) = phi.sin_cos();
        self.sxx * c * c + self.spp * s * s + 2.0 * self.sxp * s * c
    }

    /// Lower-triangular Cholesky factor `[[l11, 0], [l21, l22]]`.
    pub fn cholesky(&self) -> Result<[[f64; 2]; 2]> {
        if !(self.sxx > 0.0) {
            return Err(invalid("covariance", format!("sxx must be > 0, got {}", self.sxx)));
        }
        let l11 = self.sxx.sqrt();
        let l21 = self.sxp / l11;
        let rem = self.spp - l21 * l21;
        if rem < 0.0 {
            return Err(invalid("covariance", "matrix is not positive semidefinite"));
        }
        Ok([[l11, 0.0], [l21, rem.sqrt()]])
    }
}

/// Covariance of the squeezed vacuum with squeezing `r` along angle `theta`.
///
/// ```
/// let c = sqhhg::quadrature::covariance_of(1.0, 0.0).unwrap();
/// assert!((c.sxx - 0.5 * (-2.0f64).exp()).abs() < 1e-15);
/// assert!((c.det() - 0.25).abs() < 1e-12);
/// ```
pub fn covariance_of(r: f64, theta: f64) -> Result<QuadratureCovariance> {
    require_finite("r", r)?;
    require_finite("theta", theta)?;
    if r < 0.0 {
        return Err(invalid("r", format!("squeezing magnitude must be >= 0, got {r}")));
    }
    let (s, c) = reduce_angle(theta).sin_cos();
    let (em, ep) = ((-2.0 * r).exp(), (2.0 * r).exp());
    let naive = QuadratureCovariance {
        sxx: 0.5 * (c * c * em + s * s * ep),
        spp: 0.5 * (s * s * em + c * c * ep),
        sxp: 0.5 * s * c * (ep - em),
    };
    // At large r the entries reach ~e^{2r}/2 and their independent roundings
    // move det away from 1/4 by ~1e-12. Re-deriving one diagonal from the
    // other two in double-double leaves a single rounding; keep whichever
    // choice lands closest.
    let (n_hi, n_lo) = quarter_plus_square(naive.sxp);
    let by_spp = QuadratureCovariance { spp: div_dd(n_hi, n_lo, naive.sxx), ..naive };
    let by_sxx = QuadratureCovariance { sxx: div_dd(n_hi, n_lo, naive.spp), ..naive };
    Ok([naive, by_spp, by_sxx]
        .into_iter()
        .filter(|q| q.sxx.is_finite() && q.spp.is_finite())
        .min_by(|a, b| (a.det() - 0.25).abs().total_cmp(&(b.det() - 0.25).abs()))
        .unwrap_or(naive))
}

/// `1/4 + x²` as an unevaluated sum `hi + lo`.
fn quarter_plus_square(x: f64) -> (f64, f64) {
    let sq = x * x;
    let sq_err = x.mul_add(x, -sq);
    let hi = 0.25 + sq;
    let t = hi - 0.25;
    let sum_err = (0.25 - (hi - t)) + (sq - t);
    (hi, sum_err + sq_err)
}

/// `(hi + lo) / d`, correctly rounded up to a final ulp.
fn div_dd(hi: f64, lo: f64, d: f64) -> f64 {
    let q = hi / d;
    let rem = (-q).mul_add(d, hi) + lo;
    q + rem / d
}

/// Covariance of the classical (`P ≥ 0`) benchmark field matched to `(r, θ)`.
///
/// The amplitude variance follows the squeezed state where that is allowed
/// classically and is clipped at the vacuum level otherwise; the conjugate
/// variance sits at the vacuum level and there is no cross-correlation.
pub fn classical_benchmark_covariance(r: f64, theta: f64) -> Result<QuadratureCovariance> {
    let q = covariance_of(r, theta)?;
    Ok(QuadratureCovariance {
        sxx: q.sxx.max(VACUUM_VARIANCE),
        spp: VACUUM_VARIANCE,
        sxp: 0.0,
    })
}

/// One draw from a quadrature distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSample {
    pub x: f64,
    pub p: f64,
    pub shot_index: u64,
}

/// Identifies an independent random substream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub shot_index: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, shot_index: u64) -> Self {
        Self {
            master_seed,
            shot_index,
        }
    }

    /// ChaCha8 keyed by the master seed, on stream `shot_index`.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.shot_index);
        rng
    }
}

/// Draws `n` Gaussian samples; sample `i` comes from substream
/// `seed.shot_index + i`, so a single-shot draw at index `k` reproduces the
/// `k`-th element of a bulk draw.
pub fn sample_gaussian(
    cov: &QuadratureCovariance,
    mean: (f64, f64),
    n: usize,
    seed: SeedSpec,
) -> Result<Vec<QuadratureSample>> {
    if n == 0 {
        return Err(invalid("n", "sample count must be >= 1"));
    }
    require_finite("mean.x", mean.0)?;
    require_finite("mean.p", mean.1)?;
    let [[l11, _], [l21, l22]] = cov.cholesky()?;
    Ok((0..n as u64)
        .map(|i| {
            let idx = seed.shot_index + i;
            let mut rng = SeedSpec::new(seed.master_seed, idx).rng();
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2: f64 = StandardNormal.sample(&mut rng);
            QuadratureSample {
                x: mean.0 + l11 * z1,
                p: mean.1 + l21 * z1 + l22 * z2,
                shot_index: idx,
            }
        })
        .collect())
}

/// Samples the Wigner function of the squeezed coherent state.
pub fn sample_wigner(
    params: &SqueezeParams,
    mean: (f64, f64),
    n: usize,
    seed: SeedSpec,
) -> Result<Vec<QuadratureSample>> {
    sample_gaussian(&params.covariance()?, mean, n, seed)
}

/// Samples the classical benchmark distribution matched to `(r, θ)`.
pub fn sample_classical_benchmark(
    r: f64,
    theta: f64,
    mean: (f64, f64),
    n: usize,
    seed: SeedSpec,
) -> Result<Vec<QuadratureSample>> {
    sample_gaussian(&classical_benchmark_covariance(r, theta)?, mean, n, seed)
}

/// Unbiased sample covariance (divisor `n − 1`).
pub fn estimate_covariance(samples: &[QuadratureSample]) -> Result<QuadratureCovariance> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let nf = n as f64;
    let mx = samples.iter().map(|s| s.x).sum::<f64>() / nf;
    let mp = samples.iter().map(|s| s.p).sum::<f64>() / nf;
    let (mut sxx, mut spp, mut sxp) = (0.0, 0.0, 0.0);
    for s in samples {
        let (dx, dp) = (s.x - mx, s.p - mp);
        sxx += dx * dx;
        spp += dp * dp;
        sxp += dx * dp;
    }
    let d = nf - 1.0;
    Ok(QuadratureCovariance {
        sxx: sxx / d,
        spp: spp / d,
        sxp: sxp / d,
    })
}

/// Standard errors of the three entries of a sample covariance of `n` Gaussian
/// draws with true covariance `cov`: `√((σ_ii σ_jj + σ_ij²)/(n−1))`.
pub fn covariance_standard_errors(cov: &QuadratureCovariance, n: usize) -> (f64, f64, f64) {
    let d = (n as f64 - 1.0).max(1.0);
    (
        (2.0 * cov.sxx * cov.sxx / d).sqrt(),
        (2.0 * cov.spp * cov.spp / d).sqrt(),
        ((cov.sxx * cov.spp + cov.sxp * cov.sxp) / d).sqrt(),
    )
}
