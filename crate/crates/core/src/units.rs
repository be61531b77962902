//! SI ↔ atomic-unit conversions.
//!
//! Constants are CODATA 2018. The intensity relation is the cycle-averaged
//! peak intensity of a linearly polarized field, `I = E² · 3.50944758e16 W/cm²`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// 1 a.u. of electric field in V/m.
pub const FIELD_AU_V_PER_M: f64 = 5.142_206_747_63e11;
/// 1 a.u. of energy (Hartree) in eV.
pub const HARTREE_EV: f64 = 27.211_386_245_988;
/// 1 a.u. of time in seconds.
pub const TIME_AU_S: f64 = 2.418_884_326_585_7e-17;
/// Bohr radius in metres.
pub const BOHR_M: f64 = 5.291_772_109_03e-11;
/// Intensity corresponding to a field of 1 a.u., in W/cm².
pub const INTENSITY_AU_W_PER_CM2: f64 = 3.509_447_58e16;
/// Carrier frequency in a.u. is this constant divided by the wavelength in nm.
pub const OMEGA_NM_PRODUCT: f64 = 45.563_352_5;

/// Units understood by [`convert`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    FieldAu,
    VoltPerMetre,
    EnergyAu,
    ElectronVolt,
    TimeAu,
    Second,
    Femtosecond,
    LengthAu,
    Metre,
    Nanometre,
    /// Peak intensity in W/cm²; converts to and from field units.
    WattPerCm2,
    /// Angular frequency in a.u.; converts to and from wavelength units.
    FrequencyAu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dimension {
    Field,
    Energy,
    Time,
    Length,
    Intensity,
    Frequency,
}

impl Unit {
    fn dimension(self) -> Dimension {
        use Unit::*;
        match self {
            FieldAu | VoltPerMetre => Dimension::Field,
            EnergyAu | ElectronVolt => Dimension::Energy,
            TimeAu | Second | Femtosecond => Dimension::Time,
            LengthAu | Metre | Nanometre => Dimension::Length,
            WattPerCm2 => Dimension::Intensity,
            FrequencyAu => Dimension::Frequency,
        }
    }

    /// Size of one of this unit in the atomic unit of its dimension.
    fn in_atomic(self) -> f64 {
        use Unit::*;
        match self {
            FieldAu | EnergyAu | TimeAu | LengthAu | FrequencyAu => 1.0,
            VoltPerMetre => 1.0 / FIELD_AU_V_PER_M,
            ElectronVolt => 1.0 / HARTREE_EV,
            Second => 1.0 / TIME_AU_S,
            Femtosecond => 1e-15 / TIME_AU_S,
            Metre => 1.0 / BOHR_M,
            Nanometre => 1e-9 / BOHR_M,
            WattPerCm2 => 1.0 / INTENSITY_AU_W_PER_CM2,
        }
    }
}

impl FromStr for Unit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        use Unit::*;
        Ok(match s {
            "au_field" => FieldAu,
            "V/m" => VoltPerMetre,
            "au_energy" | "Ha" => EnergyAu,
            "eV" => ElectronVolt,
            "au_time" => TimeAu,
            "s" => Second,
            "fs" => Femtosecond,
            "au_length" | "bohr" => LengthAu,
            "m" => Metre,
            "nm" => Nanometre,
            "W/cm2" => WattPerCm2,
            "au_frequency" => FrequencyAu,
            other => {
                return Err(Error::UnknownUnits {
                    from: other.to_string(),
                    to: String::new(),
                })
            }
        })
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Unit::*;
        let s = match self {
            FieldAu => "au_field",
            VoltPerMetre => "V/m",
            EnergyAu => "au_energy",
            ElectronVolt => "eV",
            TimeAu => "au_time",
            Second => "s",
            Femtosecond => "fs",
            LengthAu => "au_length",
            Metre => "m",
            Nanometre => "nm",
            WattPerCm2 => "W/cm2",
            FrequencyAu => "au_frequency",
        };
        f.write_str(s)
    }
}

/// Converts `value` from one unit to another.
///
/// Same-dimension pairs scale linearly. Two cross-dimension pairs are
/// supported: peak intensity ↔ field amplitude, and wavelength ↔ angular
/// frequency. Anything else is an [`Error::UnknownUnits`].
pub fn convert(value: f64, from: Unit, to: Unit) -> Result<f64> {
    use Dimension::*;
    let unknown = || Error::UnknownUnits {
        from: from.to_string(),
        to: to.to_string(),
    };
    let (df, dt) = (from.dimension(), to.dimension());
    if df == dt {
        return Ok(value * from.in_atomic() / to.in_atomic());
    }
    match (df, dt) {
        (Intensity, Field) => {
            let e_au = (value * from.in_atomic()).sqrt();
            Ok(e_au / to.in_atomic())
        }
        (Field, Intensity) => {
            let e_au = value * from.in_atomic();
            Ok(e_au * e_au / to.in_atomic())
        }
        (Length, Frequency) => {
            let nm = value * from.in_atomic() / Unit::Nanometre.in_atomic();
            Ok(OMEGA_NM_PRODUCT / nm)
        }
        (Frequency, Length) => {
            let nm = OMEGA_NM_PRODUCT / value;
            Ok(nm * Unit::Nanometre.in_atomic() / to.in_atomic())
        }
        _ => Err(unknown()),
    }
}

/// String-keyed variant of [`convert`], used by the command-line front end.
pub fn convert_str(value: f64, from: &str, to: &str) -> Result<f64> {
    let named = |e: Error| match e {
        Error::UnknownUnits { .. } => Error::UnknownUnits {
            from: from.to_string(),
            to: to.to_string(),
        },
        e => e,
    };
    let f: Unit = from.parse().map_err(named)?;
    let t: Unit = to.parse().map_err(named)?;
    convert(value, f, t)
}

pub fn field_from_intensity(intensity_w_cm2: f64) -> f64 {
    (intensity_w_cm2 / INTENSITY_AU_W_PER_CM2).sqrt()
}

pub fn omega_from_wavelength_nm(wavelength_nm: f64) -> f64 {
    OMEGA_NM_PRODUCT / wavelength_nm
}

pub fn au_to_ev(energy_au: f64) -> f64 {
    energy_au * HARTREE_EV
}

pub fn ev_to_au(energy_ev: f64) -> f64 {
    energy_ev / HARTREE_EV
}

/// Photon energy expressed in multiples of the carrier photon `ħω`.
pub fn harmonic_order(energy_au: f64, omega_au: f64) -> f64 {
    energy_au / omega_au
}

/// Ponderomotive energy `E²/(4ω²)` in a.u.
pub fn ponderomotive(e_au: f64, omega_au: f64) -> f64 {
    e_au * e_au / (4.0 * omega_au * omega_au)
}
