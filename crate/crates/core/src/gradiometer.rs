//! Two-channel gradiometric calibration and subtraction.
//!
//! The two channels respond to a common field through first-order low-pass
//! responses with bandwidths `f₁` (top) and `f₂` (bottom). Their phase
//! difference, top minus bottom, is
//!
//! ```text
//! ΔΦ(f) = arctan[f(f₁ − f₂) / (f² + f₁f₂)] = arctan(f/f₂) − arctan(f/f₁)
//! ```
//!
//! which peaks at `f = √(f₁f₂)`. Subtraction is done on the full spectrum:
//! the bottom channel is scaled by the calibrated amplitude ratio and rotated
//! by `ΔΦ(f)` before being removed from the top channel.

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::lm::{self, LeastSquaresProblem, LmConfig};
use crate::record::TwoChannelRecord;
use crate::spectrum::{self, wrap_phase, WindowedSpectrum};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCalibration {
    /// Top/bottom response ratio at the calibration tone.
    pub amplitude_ratio: f64,
    pub f1_hz: f64,
    pub f2_hz: f64,
    pub tone_freq_hz: f64,
    pub tone_amp_t: f64,
}

impl GradCalibration {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("amplitude_ratio", self.amplitude_ratio)?;
        ensure_positive("f1_hz", self.f1_hz)?;
        ensure_positive("f2_hz", self.f2_hz)?;
        if !(self.tone_freq_hz.is_finite() && self.tone_freq_hz >= 0.0) {
            return Err(Error::param("tone_freq_hz must be finite and >= 0"));
        }
        if !(self.tone_amp_t.is_finite() && self.tone_amp_t >= 0.0) {
            return Err(Error::param("tone_amp_t must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub freq_hz: f64,
    pub phase_rad: f64,
}

impl PhasePoint {
    pub fn new(freq_hz: f64, phase_rad: f64) -> Self {
        Self { freq_hz, phase_rad }
    }
}

/// Inter-channel phase, top minus bottom (rad).
#[inline]
pub fn phase_difference(freq_hz: f64, f1_hz: f64, f2_hz: f64) -> f64 {
    (freq_hz * (f1_hz - f2_hz) / (freq_hz * freq_hz + f1_hz * f2_hz)).atan()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseFit {
    pub f1_hz: f64,
    pub f2_hz: f64,
    /// Covariance of `(f1_hz, f2_hz)`.
    pub covariance: [[f64; 2]; 2],
    pub residual_rms: f64,
}

impl PhaseFit {
    /// Frequency and value of the phase extremum.
    pub fn extremum(&self) -> (f64, f64) {
        let f = (self.f1_hz * self.f2_hz).sqrt();
        (f, phase_difference(f, self.f1_hz, self.f2_hz))
    }
}

/// Fit in `(ln f₁, ln f₂)` to keep both bandwidths positive.
struct PhaseProblem<'a> {
    points: &'a [PhasePoint],
}

impl LeastSquaresProblem for PhaseProblem<'_> {
    fn n_params(&self) -> usize {
        2
    }

    fn n_residuals(&self) -> usize {
        self.points.len()
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) -> bool {
        let (f1, f2) = (p[0].exp(), p[1].exp());
        if !(f1.is_finite() && f2.is_finite() && f1 > 0.0 && f2 > 0.0) {
            return false;
        }
        for (o, pt) in out.iter_mut().zip(self.points) {
            *o = phase_difference(pt.freq_hz, f1, f2) - pt.phase_rad;
        }
        true
    }

    fn jacobian(&self, p: &[f64], out: &mut DMatrix<f64>) {
        let (f1, f2) = (p[0].exp(), p[1].exp());
        // ΔΦ = atan(f/f2) − atan(f/f1); d atan(f/fc)/d ln fc = −f·fc/(f² + fc²)
        for (i, pt) in self.points.iter().enumerate() {
            let f = pt.freq_hz;
            out[(i, 0)] = f * f1 / (f * f + f1 * f1);
            out[(i, 1)] = -f * f2 / (f * f + f2 * f2);
        }
    }
}

/// Closed-form start: the largest |phase| sample is taken as the extremum,
/// `√(f₁f₂) = f_ext` and `f₁ − f₂ = 2·f_ext·tan ΔΦ_ext`.
fn initial_bandwidths(points: &[PhasePoint]) -> (f64, f64) {
    let ext = points
        .iter()
        .max_by(|a, b| a.phase_rad.abs().total_cmp(&b.phase_rad.abs()))
        .expect("non-empty");
    let g = ext.freq_hz;
    let d = 2.0 * g * ext.phase_rad.clamp(-1.4, 1.4).tan();
    let f1 = 0.5 * (d + (d * d + 4.0 * g * g).sqrt());
    (f1, f1 - d)
}

pub fn fit_phase_model(points: &[PhasePoint]) -> Result<PhaseFit> {
    if points.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "need at least 4 phase points, got {}",
            points.len()
        )));
    }
    for p in points {
        if !(p.freq_hz.is_finite() && p.freq_hz > 0.0) {
            return Err(Error::data(format!("bad frequency {}", p.freq_hz)));
        }
        if !(p.phase_rad.is_finite() && p.phase_rad.abs() < std::f64::consts::PI) {
            return Err(Error::data(format!(
                "phase {} outside (-pi, pi)",
                p.phase_rad
            )));
        }
    }
    let max_abs = points.iter().map(|p| p.phase_rad.abs()).fold(0.0, f64::max);
    if max_abs < 1e-9 {
        return Err(Error::DegenerateData(
            "all phase differences are zero; bandwidths are unidentifiable".into(),
        ));
    }

    let (f1, f2) = initial_bandwidths(points);
    let problem = PhaseProblem { points };
    let report =
        lm::minimize(&problem, &[f1.ln(), f2.ln()], &LmConfig::default()).map_err(|fail| {
            Error::FitFailure {
                reason: fail.reason,
                iterations: fail.iterations,
                best_params: fail.best_params.iter().map(|v| v.exp()).collect(),
            }
        })?;
    let f = [report.params[0].exp(), report.params[1].exp()];
    let cov_log = report.covariance(points.len());
    let mut covariance = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            covariance[i][j] = cov_log[(i, j)] * (f[i] * f[j]);
        }
    }
    Ok(PhaseFit {
        f1_hz: f[0],
        f2_hz: f[1],
        covariance,
        residual_rms: (report.ssr / points.len() as f64).sqrt(),
    })
}

/// Tone amplitudes and inter-channel phase measured from a record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToneComparison {
    pub freq_hz: f64,
    pub top_amplitude: f64,
    pub bottom_amplitude: f64,
    /// Top minus bottom, wrapped to (−π, π].
    pub phase_rad: f64,
}

/// Both channels must show the tone with power SNR above threshold.
pub fn compare_tone(record: &TwoChannelRecord, tone_freq_hz: f64) -> Result<ToneComparison> {
    let top = WindowedSpectrum::new(&record.top_t, record.sample_rate_hz).tone(tone_freq_hz)?;
    let bottom =
        WindowedSpectrum::new(&record.bottom_t, record.sample_rate_hz).tone(tone_freq_hz)?;
    Ok(ToneComparison {
        freq_hz: top.freq_hz,
        top_amplitude: top.amplitude,
        bottom_amplitude: bottom.amplitude,
        phase_rad: wrap_phase(top.phase_rad - bottom.phase_rad),
    })
}

pub fn amplitude_ratio(record: &TwoChannelRecord, tone_freq_hz: f64) -> Result<f64> {
    let c = compare_tone(record, tone_freq_hz)?;
    Ok(c.top_amplitude / c.bottom_amplitude)
}

/// Measured inter-channel phase at each tone frequency.
pub fn measure_phase_points(
    record: &TwoChannelRecord,
    tone_freqs_hz: &[f64],
) -> Result<Vec<PhasePoint>> {
    let top = WindowedSpectrum::new(&record.top_t, record.sample_rate_hz);
    let bottom = WindowedSpectrum::new(&record.bottom_t, record.sample_rate_hz);
    tone_freqs_hz
        .iter()
        .map(|&f| {
            let t = top.tone(f)?;
            let b = bottom.tone(f)?;
            Ok(PhasePoint::new(
                t.freq_hz,
                wrap_phase(t.phase_rad - b.phase_rad),
            ))
        })
        .collect()
}

/// How the bottom channel is matched to the top before subtraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Correction {
    /// Constant amplitude ratio only.
    AmplitudeOnly,
    /// Constant amplitude ratio and the frequency-dependent phase `ΔΦ(f)`.
    AmplitudeAndPhase,
    /// Full first-order transfer ratio `H₁(f)/H₂(f)`, normalised so its
    /// magnitude equals the amplitude ratio at the calibration tone. Matches
    /// magnitudes as well as phases away from the tone.
    FullTransfer,
}

impl Correction {
    pub fn from_phase_flag(phase_correct: bool) -> Self {
        if phase_correct {
            Correction::AmplitudeAndPhase
        } else {
            Correction::AmplitudeOnly
        }
    }

    /// Complex gain applied to the bottom spectrum at frequency `f ≥ 0`.
    fn gain(self, cal: &GradCalibration, f: f64) -> Complex64 {
        match self {
            Correction::AmplitudeOnly => Complex64::new(cal.amplitude_ratio, 0.0),
            Correction::AmplitudeAndPhase => Complex64::from_polar(
                cal.amplitude_ratio,
                phase_difference(f, cal.f1_hz, cal.f2_hz),
            ),
            Correction::FullTransfer => {
                let ratio = |f: f64| {
                    Complex64::new(1.0, f / cal.f2_hz) / Complex64::new(1.0, f / cal.f1_hz)
                };
                ratio(f) * (cal.amplitude_ratio / ratio(cal.tone_freq_hz).norm())
            }
        }
    }
}

/// `top − C(f)·bottom`, computed on the full spectrum.
pub fn subtract_with(
    record: &TwoChannelRecord,
    cal: &GradCalibration,
    correction: Correction,
) -> Result<Vec<f64>> {
    cal.validate()?;
    if record.top_t.len() != record.bottom_t.len() {
        return Err(Error::Shape("channel lengths differ".into()));
    }
    let n = record.len();
    let top = spectrum::fft_real(&record.top_t);
    let bottom = spectrum::fft_real(&record.bottom_t);
    let half = n / 2;
    let even = n.is_multiple_of(2);
    let diff = top
        .iter()
        .zip(&bottom)
        .enumerate()
        .map(|(k, (t, b))| {
            let f = spectrum::bin_frequency(k, n, record.sample_rate_hz);
            let g = if k == 0 {
                // zero phase at DC
                Complex64::new(correction.gain(cal, 0.0).norm(), 0.0)
            } else if even && k == half {
                // Nyquist bin stays real
                Complex64::new(correction.gain(cal, f.abs()).norm(), 0.0)
            } else if f > 0.0 {
                correction.gain(cal, f)
            } else {
                correction.gain(cal, -f).conj()
            };
            t - g * b
        })
        .collect();
    Ok(spectrum::ifft_real(diff))
}

pub fn subtract(
    record: &TwoChannelRecord,
    cal: &GradCalibration,
    phase_correct: bool,
) -> Result<Vec<f64>> {
    subtract_with(record, cal, Correction::from_phase_flag(phase_correct))
}

/// Tone amplitude in the top channel over that in the subtracted output;
/// `+∞` when the output holds no trace of the tone.
pub fn reduction_ratio(
    record: &TwoChannelRecord,
    cal: &GradCalibration,
    tone_freq_hz: f64,
    correction: Correction,
) -> Result<f64> {
    let top = WindowedSpectrum::new(&record.top_t, record.sample_rate_hz).tone(tone_freq_hz)?;
    let diff = subtract_with(record, cal, correction)?;
    let out = WindowedSpectrum::new(&diff, record.sample_rate_hz).tone_unchecked(tone_freq_hz)?;
    if out.amplitude <= top.amplitude * 1e-14 {
        return Ok(f64::INFINITY);
    }
    Ok(top.amplitude / out.amplitude)
}
