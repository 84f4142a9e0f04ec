//! Spin-exchange broadening of the alkali magnetic resonance in the
//! low-field (SERF) regime.
//!
//! At low polarisation the spin-exchange contribution to transverse
//! relaxation is second order in the Larmor frequency:
//!
//! ```text
//! 1/T₂ˢᴱ = ω₀² · T_SE · [1/2 − (2I+1)²/(2q²)] · q²,   ω₀ = 2π·ν₀
//! ```
//!
//! Expressed as a half width in Hz the rate is divided by 2π, so the
//! measured linewidth is linear in `ν₀²` and the fit for `T_SE` is a plain
//! weighted linear regression.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};

/// Low-polarisation slowing-down factor for I = 3/2.
pub const DEFAULT_SLOWING_Q: f64 = 6.0;
pub const POTASSIUM_SPIN: f64 = 1.5;
/// Relative thermal velocity of K-K collisions (m/s).
pub const DEFAULT_VBAR_M_S: f64 = 500.0;
/// K-K spin-exchange cross section (cm²).
pub const DEFAULT_SIGMA_SE_CM2: f64 = 2e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SerfParams {
    pub nuclear_spin: f64,
    pub slowing_q: f64,
    pub t_se_s: f64,
    pub intrinsic_hwhm_hz: f64,
    pub vbar_m_s: f64,
    pub sigma_se_cm2: f64,
}

impl SerfParams {
    pub fn potassium(t_se_s: f64, intrinsic_hwhm_hz: f64) -> Self {
        Self {
            nuclear_spin: POTASSIUM_SPIN,
            slowing_q: DEFAULT_SLOWING_Q,
            t_se_s,
            intrinsic_hwhm_hz,
            vbar_m_s: DEFAULT_VBAR_M_S,
            sigma_se_cm2: DEFAULT_SIGMA_SE_CM2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_spin(self.nuclear_spin)?;
        ensure_positive("slowing_q", self.slowing_q)?;
        ensure_positive("t_se_s", self.t_se_s)?;
        ensure_positive("vbar_m_s", self.vbar_m_s)?;
        ensure_positive("sigma_se_cm2", self.sigma_se_cm2)?;
        if !(self.intrinsic_hwhm_hz.is_finite() && self.intrinsic_hwhm_hz >= 0.0) {
            return Err(Error::param("intrinsic_hwhm_hz must be finite and >= 0"));
        }
        Ok(())
    }
}

fn validate_spin(spin: f64) -> Result<()> {
    let twice = 2.0 * spin;
    if !(spin > 0.0 && twice.is_finite() && twice.fract() == 0.0) {
        return Err(Error::param(format!(
            "nuclear spin must be a positive half-integer, got {spin}"
        )));
    }
    Ok(())
}

/// `[1/2 − (2I+1)²/(2q²)]·q²`, evaluated as `(q² − (2I+1)²)/2`.
pub fn slowing_factor(nuclear_spin: f64, q: f64) -> Result<f64> {
    validate_spin(nuclear_spin)?;
    ensure_positive("slowing_q", q)?;
    let m = 2.0 * nuclear_spin + 1.0;
    let factor = 0.5 * (q * q - m * m);
    if factor < 0.0 {
        return Err(Error::InvalidSlowingFactor {
            spin: nuclear_spin,
            q,
        });
    }
    Ok(factor)
}

/// Spin-exchange relaxation rate 1/T₂ˢᴱ in s⁻¹.
pub fn se_rate(resonance_hz: f64, params: &SerfParams) -> Result<f64> {
    params.validate()?;
    if !(resonance_hz.is_finite() && resonance_hz >= 0.0) {
        return Err(Error::param("resonance_hz must be finite and >= 0"));
    }
    let factor = slowing_factor(params.nuclear_spin, params.slowing_q)?;
    let omega = TAU * resonance_hz;
    Ok(omega * omega * params.t_se_s * factor)
}

/// Resonance HWHM (Hz): intrinsic width plus the spin-exchange term.
pub fn predict_linewidth(resonance_hz: f64, params: &SerfParams) -> Result<f64> {
    Ok(params.intrinsic_hwhm_hz + se_rate(resonance_hz, params)? / TAU)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinewidthPoint {
    pub resonance_hz: f64,
    pub hwhm_hz: f64,
    /// Inverse variance of `hwhm_hz`, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
}

impl LinewidthPoint {
    pub fn new(resonance_hz: f64, hwhm_hz: f64) -> Self {
        Self {
            resonance_hz,
            hwhm_hz,
            weight: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IntrinsicWidth {
    /// Co-fit the zero-field linewidth.
    Fit,
    /// Hold the zero-field linewidth at the given HWHM (Hz).
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TseFit {
    pub t_se_s: f64,
    pub intrinsic_hwhm_hz: f64,
    /// Covariance of `(t_se_s, intrinsic_hwhm_hz)`; the intrinsic row and
    /// column are zero when it was held fixed.
    pub covariance: [[f64; 2]; 2],
}

/// Weighted linear least squares of the linewidth against `ν₀²`.
pub fn fit_tse(
    points: &[LinewidthPoint],
    nuclear_spin: f64,
    q: f64,
    intrinsic: IntrinsicWidth,
) -> Result<TseFit> {
    if points.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "need at least 3 linewidth points, got {}",
            points.len()
        )));
    }
    for p in points {
        if !(p.resonance_hz.is_finite() && p.resonance_hz >= 0.0) {
            return Err(Error::data(format!(
                "bad resonance frequency {}",
                p.resonance_hz
            )));
        }
        if !(p.hwhm_hz.is_finite() && p.hwhm_hz > 0.0) {
            return Err(Error::data(format!("bad linewidth {}", p.hwhm_hz)));
        }
        if let Some(w) = p.weight {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::data(format!("bad weight {w}")));
            }
        }
    }
    let (lo, hi) = points.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), p| {
        (lo.min(p.resonance_hz), hi.max(p.resonance_hz))
    });
    if !(hi > 0.0 && hi >= 2.0 * lo) {
        return Err(Error::InsufficientCoverage(format!(
            "resonance frequencies must span at least a factor of 2 ({lo} to {hi} Hz)"
        )));
    }

    let k = slowing_factor(nuclear_spin, q)? * TAU;
    let all_weighted = points.iter().all(|p| p.weight.is_some());
    let w: Vec<f64> = points.iter().map(|p| p.weight.unwrap_or(1.0)).collect();
    let x: Vec<f64> = points
        .iter()
        .map(|p| k * p.resonance_hz * p.resonance_hz)
        .collect();
    let y: Vec<f64> = points.iter().map(|p| p.hwhm_hz).collect();
    let sw: f64 = w.iter().sum();
    let n = points.len();

    let (t_se, intrinsic_hz, cov) = match intrinsic {
        IntrinsicWidth::Fit => {
            let xm = w.iter().zip(&x).map(|(w, x)| w * x).sum::<f64>() / sw;
            let ym = w.iter().zip(&y).map(|(w, y)| w * y).sum::<f64>() / sw;
            let sxx: f64 = w.iter().zip(&x).map(|(w, x)| w * (x - xm).powi(2)).sum();
            let sxy: f64 = w
                .iter()
                .zip(&x)
                .zip(&y)
                .map(|((w, x), y)| w * (x - xm) * (y - ym))
                .sum();
            let slope = sxy / sxx;
            let icpt = ym - slope * xm;
            let s2 = if all_weighted {
                1.0
            } else {
                residual_ss(&w, &x, &y, slope, icpt) / (n - 2) as f64
            };
            let var_slope = s2 / sxx;
            let var_icpt = s2 * (1.0 / sw + xm * xm / sxx);
            let cov_si = -s2 * xm / sxx;
            (slope, icpt, [[var_slope, cov_si], [cov_si, var_icpt]])
        }
        IntrinsicWidth::Fixed(a) => {
            if !(a.is_finite() && a >= 0.0) {
                return Err(Error::param("fixed intrinsic width must be >= 0"));
            }
            let sxx: f64 = w.iter().zip(&x).map(|(w, x)| w * x * x).sum();
            let sxy: f64 = w
                .iter()
                .zip(&x)
                .zip(&y)
                .map(|((w, x), y)| w * x * (y - a))
                .sum();
            let slope = sxy / sxx;
            let s2 = if all_weighted {
                1.0
            } else {
                residual_ss(&w, &x, &y, slope, a) / (n - 1) as f64
            };
            (slope, a, [[s2 / sxx, 0.0], [0.0, 0.0]])
        }
    };

    if !(t_se.is_finite() && t_se > 0.0) {
        return Err(Error::FitFailure {
            reason: format!("fitted T_SE = {t_se} s is not positive"),
            iterations: 1,
            best_params: vec![t_se, intrinsic_hz],
        });
    }
    Ok(TseFit {
        t_se_s: t_se,
        intrinsic_hwhm_hz: intrinsic_hz,
        covariance: cov,
    })
}

fn residual_ss(w: &[f64], x: &[f64], y: &[f64], slope: f64, icpt: f64) -> f64 {
    w.iter()
        .zip(x)
        .zip(y)
        .map(|((w, x), y)| w * (y - icpt - slope * x).powi(2))
        .sum()
}

/// Alkali number density (cm⁻³) from `1/T_SE = n·v̄·σ_SE`.
pub fn number_density(t_se_s: f64, vbar_m_s: f64, sigma_se_cm2: f64) -> Result<f64> {
    ensure_positive("t_se_s", t_se_s)?;
    ensure_positive("vbar_m_s", vbar_m_s)?;
    ensure_positive("sigma_se_cm2", sigma_se_cm2)?;
    Ok(1.0 / (t_se_s * vbar_m_s * 100.0 * sigma_se_cm2))
}
