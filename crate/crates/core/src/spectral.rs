//! Windowed HHG spectra and per-shot cutoff extraction.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, require_positive, Error, Result};
use crate::tdse::AccelerationTrace;
use crate::units;

/// Finest spectral bin allowed, in harmonic orders.
pub const MAX_BIN_HO: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    #[default]
    Blackman,
    Hann,
}

impl WindowKind {
    /// Symmetric window of length `len` spanning the whole record.
    pub fn weights(self, len: usize) -> Vec<f64> {
        if len == 1 {
            return vec![1.0];
        }
        let m = (len - 1) as f64;
        (0..len)
            .map(|n| {
                let u = 2.0 * PI * n as f64 / m;
                match self {
                    WindowKind::Blackman => 0.42 - 0.5 * u.cos() + 0.08 * (2.0 * u).cos(),
                    WindowKind::Hann => 0.5 - 0.5 * u.cos(),
                }
            })
            .collect()
    }
}

/// One-sided power spectrum `S(ω) = |∫ a(t) W(t) e^{−iωt} dt|²` on
/// `ω_k = k·dω`, `k = 0..=M/2`, where `M` is the padded transform length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub d_omega: f64,
    pub omega_carrier: f64,
    pub s: Vec<f64>,
    /// Padded transform length; needed for the two-sided Parseval sum.
    pub fft_len: usize,
}

impl Spectrum {
    pub fn omega(&self, k: usize) -> f64 {
        k as f64 * self.d_omega
    }

    pub fn omega_au(&self) -> Vec<f64> {
        (0..self.s.len()).map(|k| self.omega(k)).collect()
    }

    pub fn harmonic_order(&self) -> Vec<f64> {
        (0..self.s.len()).map(|k| self.omega(k) / self.omega_carrier).collect()
    }

    pub fn bin_ho(&self) -> f64 {
        self.d_omega / self.omega_carrier
    }

    pub fn max_ho(&self) -> f64 {
        (self.s.len() - 1) as f64 * self.bin_ho()
    }

    /// `Σ_k S_k dω` over both signs of frequency.
    pub fn two_sided_sum(&self) -> f64 {
        let n = self.s.len();
        let inner: f64 = self.s[1..n - 1].iter().sum();
        let nyquist = if self.fft_len.is_multiple_of(2) { self.s[n - 1] } else { 2.0 * self.s[n - 1] };
        (self.s[0] + 2.0 * inner + nyquist) * self.d_omega
    }

    /// Drops bins above `max_ho` harmonic orders.
    pub fn truncated(&self, max_ho: f64) -> Spectrum {
        let keep = ((max_ho / self.bin_ho()).floor() as usize + 1).min(self.s.len());
        Spectrum {
            s: self.s[..keep].to_vec(),
            ..*self
        }
        .with_len(keep)
    }

    fn with_len(mut self, keep: usize) -> Self {
        self.s.truncate(keep);
        self
    }

    pub fn same_grid(&self, other: &Spectrum) -> bool {
        self.s.len() == other.s.len()
            && self.d_omega == other.d_omega
            && self.omega_carrier == other.omega_carrier
    }

    pub fn log10(&self) -> Vec<f64> {
        self.s.iter().map(|&s| s.max(f64::MIN_POSITIVE).log10()).collect()
    }

    /// Two-column CSV: `harmonic_order,log10_intensity`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "harmonic_order,log10_intensity")?;
        for (h, l) in self.harmonic_order().iter().zip(self.log10()) {
            writeln!(out, "{h:.6},{l:.9}")?;
        }
        Ok(())
    }
}

/// Fourier transform of the windowed acceleration, zero-padded to a power of
/// two fine enough for [`MAX_BIN_HO`].
pub fn hhg_spectrum(trace: &AccelerationTrace, window: WindowKind, omega_carrier: f64) -> Result<Spectrum> {
    require_positive("omega_carrier", omega_carrier)?;
    let len = trace.a_au.len();
    if len != trace.grid.len() {
        return Err(Error::GridMismatch(format!(
            "trace has {len} samples but its time grid has {}",
            trace.grid.len()
        )));
    }
    trace.grid.validate().map_err(|_| invalid("trace.grid", "time grid is not uniform"))?;
    let dt = trace.grid.dt;
    let needed = (2.0 * PI / (MAX_BIN_HO * omega_carrier * dt)).ceil() as usize;
    let m = len.max(needed).next_power_of_two();

    let w = window.weights(len);
    let mut buf: Vec<Complex64> = trace
        .a_au
        .iter()
        .zip(&w)
        .map(|(a, w)| Complex64::new(a * w, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(m)
        .collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let dt2 = dt * dt;
    let s = buf[..=m / 2].iter().map(|z| z.norm_sqr() * dt2).collect();
    Ok(Spectrum {
        d_omega: 2.0 * PI / (m as f64 * dt),
        omega_carrier,
        s,
        fft_len: m,
    })
}

/// Parameters of the decade-drop cutoff rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CutoffProtocol {
    pub drop_decades: f64,
    pub smooth_width_ho: f64,
    /// Plateau window as fractions of the classical-cutoff hint.
    pub plateau_window: (f64, f64),
    pub persistence_ho: f64,
}

impl Default for CutoffProtocol {
    fn default() -> Self {
        Self {
            drop_decades: 3.0,
            smooth_width_ho: 1.0,
            plateau_window: (0.3, 0.8),
            persistence_ho: 2.0,
        }
    }
}

impl CutoffProtocol {
    pub fn validate(&self) -> Result<()> {
        require_positive("protocol.drop_decades", self.drop_decades)?;
        require_positive("protocol.smooth_width_ho", self.smooth_width_ho)?;
        let (lo, hi) = self.plateau_window;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return Err(invalid("protocol.plateau_window", format!("need 0 < lo < hi < 1, got ({lo}, {hi})")));
        }
        if !(self.persistence_ho >= 0.0) {
            return Err(invalid("protocol.persistence_ho", "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutoffFlags {
    /// Plateau window held too few bins; a global median was used.
    pub no_plateau: bool,
    /// The smoothed spectrum never fell below threshold.
    pub no_drop: bool,
    /// The spectrum was already below threshold where the search starts.
    pub noisy: bool,
}

impl CutoffFlags {
    pub fn any(&self) -> bool {
        self.no_plateau || self.no_drop || self.noisy
    }

    /// `|`-separated names of raised flags, empty when clean.
    pub fn label(&self) -> String {
        let mut v = Vec::new();
        if self.no_plateau {
            v.push("no_plateau");
        }
        if self.no_drop {
            v.push("no_drop");
        }
        if self.noisy {
            v.push("noisy");
        }
        v.join("|")
    }
}

/// Extracted cutoff position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffExtraction {
    pub h_au: f64,
    pub h_ev: f64,
    pub h_ho: f64,
    pub plateau_level_log10: f64,
    /// `Σ S dω` over the plateau window; a per-shot yield measure.
    pub plateau_yield: f64,
    pub flags: CutoffFlags,
}

impl CutoffExtraction {
    pub fn is_valid(&self) -> bool {
        !self.flags.any()
    }
}

/// Boxcar average with `half` bins on each side, truncated at the ends.
pub fn boxcar(values: &[f64], half: usize) -> Vec<f64> {
    let n = values.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for v in values {
        prefix.push(prefix.last().unwrap() + v);
    }
    (0..n)
        .map(|k| {
            let lo = k.saturating_sub(half);
            let hi = (k + half + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Locates where the smoothed `log₁₀ S` falls `drop_decades` below the
/// plateau and stays there for `persistence_ho`.
///
/// `classical_cutoff_hint_au` is a photon energy (a.u.) that anchors the
/// plateau window and the start of the search.
pub fn extract_cutoff(
    spectrum: &Spectrum,
    protocol: &CutoffProtocol,
    classical_cutoff_hint_au: f64,
) -> Result<CutoffExtraction> {
    protocol.validate()?;
    require_positive("classical_cutoff_hint", classical_cutoff_hint_au)?;
    let bin = spectrum.bin_ho();
    let hint_ho = classical_cutoff_hint_au / spectrum.omega_carrier;
    if spectrum.max_ho() < 1.5 * hint_ho {
        return Err(invalid(
            "spectrum",
            format!("extends to {:.1} H.O., need 1.5x the hint ({:.1})", spectrum.max_ho(), 1.5 * hint_ho),
        ));
    }
    let half = (protocol.smooth_width_ho / (2.0 * bin)).round() as usize;
    let smooth = boxcar(&spectrum.log10(), half);
    let n = smooth.len();
    let idx = |ho: f64| ((ho / bin).ceil() as usize).min(n - 1);

    let mut flags = CutoffFlags::default();
    let (w_lo, w_hi) = (idx(protocol.plateau_window.0 * hint_ho), idx(protocol.plateau_window.1 * hint_ho));
    let plateau_yield = spectrum.s[w_lo..=w_hi].iter().sum::<f64>() * spectrum.d_omega;
    let (plateau, start) = if w_hi >= w_lo + 3 {
        (median(&mut smooth[w_lo..w_hi].to_vec()), w_hi)
    } else {
        flags.no_plateau = true;
        let first = idx(1.0);
        (median(&mut smooth[first..].to_vec()), first)
    };
    let threshold = plateau - protocol.drop_decades;
    let persist = (protocol.persistence_ho / bin).ceil() as usize;

    // below_run[k]: number of consecutive bins from k that sit at or below threshold
    let mut below_run = vec![0usize; n + 1];
    for k in (0..n).rev() {
        below_run[k] = if smooth[k] <= threshold { below_run[k + 1] + 1 } else { 0 };
    }
    let settled = |k: usize| below_run[k] > persist || k + below_run[k] == n;

    let ho_at = |k: usize| k as f64 * bin;
    let crossing = |k: usize| {
        // linear interpolation between bin k−1 (above) and k (below)
        let (a, b) = (smooth[k - 1], smooth[k]);
        ho_at(k - 1) + (a - threshold) / (a - b) * bin
    };

    let h_ho = match (start..n).find(|&k| settled(k)) {
        None => {
            flags.no_drop = true;
            ho_at(n - 1)
        }
        Some(k) if k > start => crossing(k),
        Some(k) => {
            // already below where the search begins: take the last crossing beneath it
            flags.noisy = true;
            match (1..=k).rev().find(|&j| smooth[j - 1] > threshold) {
                Some(j) => crossing(j),
                None => ho_at(k),
            }
        }
    };
    let h_au = h_ho * spectrum.omega_carrier;
    Ok(CutoffExtraction {
        h_au,
        h_ev: units::au_to_ev(h_au),
        h_ho,
        plateau_level_log10: plateau,
        plateau_yield,
        flags,
    })
}
