//! Order-of-magnitude field from a thermally prepolarised NMR sample.
//!
//! The sample is treated as a point dipole at its centre, observed on axis:
//! `B = (μ₀/4π)·2m/d³` with `m = N·abundance·P·ħγ/2` and the thermal
//! polarisation `P = tanh(ħγB_p / 2k_BT)`. The spin-½ polarisation form is
//! used for every isotope; for I > ½ this is only indicative.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};

pub const HBAR_J_S: f64 = 1.054_571_817e-34;
pub const BOLTZMANN_J_K: f64 = 1.380_649e-23;
/// μ₀/4π in T·m/A.
pub const MU0_OVER_4PI: f64 = 1e-7;

pub const GEOMETRY_MODEL: &str =
    "on-axis point dipole at sample centre, spin-1/2 tanh polarisation";

/// File name looked up inside `SERFKIT_DATA_DIR`.
pub const ISOTOPE_FILE: &str = "isotopes.toml";
const BUNDLED_ISOTOPES: &str = include_str!("../data/isotopes.toml");

pub fn thermal_polarization(
    gyromag_rad_s_t: f64,
    prepol_field_t: f64,
    temperature_k: f64,
) -> Result<f64> {
    ensure_positive("temperature_k", temperature_k)?;
    if !gyromag_rad_s_t.is_finite() || !prepol_field_t.is_finite() {
        return Err(Error::param("gyromagnetic ratio and field must be finite"));
    }
    Ok(
        (HBAR_J_S * gyromag_rad_s_t * prepol_field_t / (2.0 * BOLTZMANN_J_K * temperature_k))
            .tanh(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub volume_m3: f64,
    pub spin_density_per_m3: f64,
    pub natural_abundance: f64,
    pub gyromag_rad_s_t: f64,
    pub spin: f64,
    pub prepol_field_t: f64,
    pub temperature_k: f64,
    pub distance_m: f64,
}

impl SampleSpec {
    /// 200 µL of water protons, 2 T prepolarisation at 300 K, 1 cm away.
    pub fn water_protons() -> Self {
        Self {
            volume_m3: 200e-9,
            spin_density_per_m3: 1.34e22 / 200e-9,
            natural_abundance: 1.0,
            gyromag_rad_s_t: 2.675e8,
            spin: 0.5,
            prepol_field_t: 2.0,
            temperature_k: 300.0,
            distance_m: 0.01,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("volume_m3", self.volume_m3)?;
        ensure_positive("spin_density_per_m3", self.spin_density_per_m3)?;
        ensure_positive("prepol_field_t", self.prepol_field_t)?;
        ensure_positive("temperature_k", self.temperature_k)?;
        ensure_positive("distance_m", self.distance_m)?;
        ensure_positive("spin", self.spin)?;
        if !(self.natural_abundance > 0.0 && self.natural_abundance <= 1.0) {
            return Err(Error::param(format!(
                "natural_abundance must be in (0, 1], got {}",
                self.natural_abundance
            )));
        }
        if !(self.gyromag_rad_s_t.is_finite() && self.gyromag_rad_s_t != 0.0) {
            return Err(Error::param("gyromag_rad_s_t must be finite and nonzero"));
        }
        Ok(())
    }

    pub fn n_spins(&self) -> f64 {
        self.spin_density_per_m3 * self.volume_m3 * self.natural_abundance
    }

    /// Radius of a sphere with the sample's volume.
    pub fn equivalent_radius_m(&self) -> f64 {
        (3.0 * self.volume_m3 / (4.0 * std::f64::consts::PI)).cbrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmrEstimate {
    pub polarization: f64,
    pub field_t: f64,
    pub magnetic_moment_a_m2: f64,
    pub model: String,
}

pub fn dipole_field(spec: &SampleSpec) -> Result<NmrEstimate> {
    spec.validate()?;
    let r = spec.equivalent_radius_m();
    if spec.distance_m <= r {
        return Err(Error::Geometry(format!(
            "detector distance {} m is inside the sample (radius {r:.3e} m)",
            spec.distance_m
        )));
    }
    let p = thermal_polarization(
        spec.gyromag_rad_s_t,
        spec.prepol_field_t,
        spec.temperature_k,
    )?;
    // P and γ share a sign, so the moment is positive for B_p > 0
    let moment = spec.n_spins() * p * HBAR_J_S * spec.gyromag_rad_s_t / 2.0;
    let field = MU0_OVER_4PI * 2.0 * moment / spec.distance_m.powi(3);
    Ok(NmrEstimate {
        polarization: p,
        field_t: field,
        magnetic_moment_a_m2: moment,
        model: GEOMETRY_MODEL.into(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Isotope {
    pub name: String,
    pub gyromag_rad_s_t: f64,
    pub spin: f64,
    pub natural_abundance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotopeTable {
    pub version: u32,
    #[serde(rename = "isotope")]
    pub isotopes: Vec<Isotope>,
}

impl IsotopeTable {
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_ISOTOPES).expect("bundled isotope table is valid")
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("isotope table: {e}")))
    }

    /// `SERFKIT_DATA_DIR/isotopes.toml` when the variable is set, else the
    /// bundled table.
    pub fn from_env() -> Result<Self> {
        match std::env::var_os("SERFKIT_DATA_DIR") {
            Some(dir) => Self::load(Path::new(&dir).join(ISOTOPE_FILE)),
            None => Ok(Self::bundled()),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, name: &str) -> Option<&Isotope> {
        self.isotopes
            .iter()
            .find(|i| i.name.eq_ignore_ascii_case(name))
    }
}
