//! Buffer/quench gas composition from the pressure shift and pressure
//! broadening of the potassium D1 line.
//!
//! Both effects are linear in the gas densities, so
//! `[shift; width] = M · [He; N₂]` with `M` built from the four per-amagat
//! coefficients.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Unperturbed potassium D1 (4S₁/₂ → 4P₁/₂) line centre, Hz. Corresponds to
/// a vacuum wavelength of 770.108 nm.
pub const K_D1_FREQUENCY_HZ: f64 = 389.286_058_716e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GasCoefficients {
    #[serde(rename = "shift_he_ghz_per_amg")]
    pub shift_he: f64,
    #[serde(rename = "shift_n2_ghz_per_amg")]
    pub shift_n2: f64,
    #[serde(rename = "broaden_he_ghz_per_amg")]
    pub broaden_he: f64,
    #[serde(rename = "broaden_n2_ghz_per_amg")]
    pub broaden_n2: f64,
    pub reference_freq_hz: f64,
}

impl Default for GasCoefficients {
    /// Potassium D1 coefficients for ⁴He and N₂ (GHz/amg).
    fn default() -> Self {
        Self {
            shift_he: 3.9,
            shift_n2: -15.7,
            broaden_he: 13.3,
            broaden_n2: 21.0,
            reference_freq_hz: K_D1_FREQUENCY_HZ,
        }
    }
}

impl GasCoefficients {
    pub fn determinant(&self) -> f64 {
        self.shift_he * self.broaden_n2 - self.shift_n2 * self.broaden_he
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("shift_he", self.shift_he),
            ("shift_n2", self.shift_n2),
            ("broaden_he", self.broaden_he),
            ("broaden_n2", self.broaden_n2),
            ("reference_freq_hz", self.reference_freq_hz),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidCoefficients(format!("{name} is not finite")));
            }
        }
        if self.broaden_he <= 0.0 || self.broaden_n2 <= 0.0 {
            return Err(Error::InvalidCoefficients(
                "broadening coefficients must be positive".into(),
            ));
        }
        let det = self.determinant();
        let scale =
            (self.shift_he.abs() * self.broaden_n2).max(self.shift_n2.abs() * self.broaden_he);
        if det.abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::InvalidCoefficients(
                "shift/broadening matrix is singular".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellComposition {
    pub he_amagat: f64,
    pub n2_amagat: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub alkali_density_cm3: Option<f64>,
}

impl CellComposition {
    pub fn new(he_amagat: f64, n2_amagat: f64) -> Self {
        Self {
            he_amagat,
            n2_amagat,
            alkali_density_cm3: None,
        }
    }

    pub fn with_alkali_density(mut self, n_cm3: f64) -> Self {
        self.alkali_density_cm3 = Some(n_cm3);
        self
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("he_amagat", self.he_amagat)?;
        ensure_finite("n2_amagat", self.n2_amagat)?;
        if self.he_amagat < 0.0 || self.n2_amagat < 0.0 {
            return Err(Error::UnphysicalComposition {
                he_amagat: self.he_amagat,
                n2_amagat: self.n2_amagat,
            });
        }
        if let Some(n) = self.alkali_density_cm3 {
            if !(n.is_finite() && n > 0.0) {
                return Err(Error::param("alkali density must be positive"));
            }
        }
        Ok(())
    }
}

/// Predicted optical line: centre frequency and pressure-broadened width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinePrediction {
    pub center_hz: f64,
    pub shift_ghz: f64,
    pub width_ghz: f64,
}

/// Solves the 2×2 shift/broadening system for the He and N₂ densities.
pub fn solve_composition(
    shift_ghz: f64,
    width_ghz: f64,
    coeffs: &GasCoefficients,
) -> Result<CellComposition> {
    coeffs.validate()?;
    ensure_finite("shift_ghz", shift_ghz)?;
    if !(width_ghz.is_finite() && width_ghz > 0.0) {
        return Err(Error::param(format!(
            "width_ghz must be > 0, got {width_ghz}"
        )));
    }
    let det = coeffs.determinant();
    let he = (coeffs.broaden_n2 * shift_ghz - coeffs.shift_n2 * width_ghz) / det;
    let n2 = (coeffs.shift_he * width_ghz - coeffs.broaden_he * shift_ghz) / det;
    // round-off can leave an exact zero slightly negative
    let tol = 1e-12 * (he.abs() + n2.abs());
    if he < -tol || n2 < -tol {
        return Err(Error::UnphysicalComposition {
            he_amagat: he,
            n2_amagat: n2,
        });
    }
    Ok(CellComposition::new(he.max(0.0), n2.max(0.0)))
}

/// Shift relative to the unperturbed line, from a fitted line centre.
pub fn shift_from_center(center_hz: f64, coeffs: &GasCoefficients) -> f64 {
    (center_hz - coeffs.reference_freq_hz) * 1e-9
}

pub fn predict_line(comp: &CellComposition, coeffs: &GasCoefficients) -> Result<LinePrediction> {
    comp.validate()?;
    coeffs.validate()?;
    let shift_ghz = coeffs.shift_he * comp.he_amagat + coeffs.shift_n2 * comp.n2_amagat;
    let width_ghz = coeffs.broaden_he * comp.he_amagat + coeffs.broaden_n2 * comp.n2_amagat;
    Ok(LinePrediction {
        center_hz: coeffs.reference_freq_hz + 1e9 * shift_ghz,
        shift_ghz,
        width_ghz,
    })
}
