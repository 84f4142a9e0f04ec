//! Lorentzian line evaluation and fitting.
//!
//! One model covers both absorption dips (negative amplitude on a transmission
//! baseline) and magnetometer resonance peaks:
//!
//! ```text
//! L(ν) = c + A·Γ² / ((ν − ν₀)² + Γ²)
//! ```
//!
//! with `Γ` the half width at half maximum. Fits run on an internally
//! normalised copy of the sweep (frequency centred on the sweep midpoint and
//! scaled by the span, values scaled by their peak-to-peak), which keeps the
//! optimiser well conditioned at optical frequencies and makes the result
//! independent of a uniform frequency shift.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_positive, Error, Result};
use crate::lm::{self, LeastSquaresProblem, LmConfig};

/// Sampled scalar curve versus frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencySweep {
    freqs_hz: Vec<f64>,
    values: Vec<f64>,
}

impl FrequencySweep {
    pub const MIN_LEN: usize = 5;

    pub fn new(freqs_hz: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if freqs_hz.len() != values.len() {
            return Err(Error::Shape(format!(
                "{} frequencies vs {} values",
                freqs_hz.len(),
                values.len()
            )));
        }
        if freqs_hz.len() < Self::MIN_LEN {
            return Err(Error::InsufficientData(format!(
                "sweep needs at least {} samples, got {}",
                Self::MIN_LEN,
                freqs_hz.len()
            )));
        }
        if let Some(bad) = freqs_hz.iter().chain(&values).find(|v| !v.is_finite()) {
            return Err(Error::data(format!("non-finite sample {bad}")));
        }
        if freqs_hz.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::data("frequencies must be strictly increasing"));
        }
        Ok(Self { freqs_hz, values })
    }

    pub fn freqs_hz(&self) -> &[f64] {
        &self.freqs_hz
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.freqs_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs_hz.is_empty()
    }

    /// Samples the model at the given frequencies.
    pub fn from_model(params: &LorentzianParams, freqs_hz: Vec<f64>) -> Result<Self> {
        params.validate()?;
        let values = freqs_hz.iter().map(|&f| params.eval(f)).collect();
        Self::new(freqs_hz, values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzianParams {
    pub center_hz: f64,
    pub hwhm_hz: f64,
    pub amplitude: f64,
    pub baseline: f64,
}

impl LorentzianParams {
    pub fn new(center_hz: f64, hwhm_hz: f64, amplitude: f64, baseline: f64) -> Self {
        Self {
            center_hz,
            hwhm_hz,
            amplitude,
            baseline,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("center_hz", self.center_hz)?;
        ensure_positive("hwhm_hz", self.hwhm_hz)?;
        ensure_finite("amplitude", self.amplitude)?;
        ensure_finite("baseline", self.baseline)
    }

    /// Unchecked evaluation; see [`eval_lorentzian`] for the validated entry point.
    #[inline]
    pub fn eval(&self, freq_hz: f64) -> f64 {
        let d = freq_hz - self.center_hz;
        let g2 = self.hwhm_hz * self.hwhm_hz;
        self.baseline + self.amplitude * g2 / (d * d + g2)
    }

    /// Partial derivatives with respect to `(center, hwhm, amplitude, baseline)`.
    #[inline]
    pub fn jacobian(&self, freq_hz: f64) -> [f64; 4] {
        let d = freq_hz - self.center_hz;
        let g = self.hwhm_hz;
        let g2 = g * g;
        let den = d * d + g2;
        let den2 = den * den;
        [
            self.amplitude * g2 * 2.0 * d / den2,
            2.0 * self.amplitude * g * d * d / den2,
            g2 / den,
            1.0,
        ]
    }

    fn as_array(&self) -> [f64; 4] {
        [self.center_hz, self.hwhm_hz, self.amplitude, self.baseline]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorentzianFit {
    pub center_hz: f64,
    pub hwhm_hz: f64,
    pub amplitude: f64,
    pub baseline: f64,
    pub residual_rms: f64,
    /// Covariance of `(center_hz, hwhm_hz, amplitude, baseline)`.
    #[serde(skip)]
    pub covariance: [[f64; 4]; 4],
    #[serde(skip)]
    pub iterations: usize,
}

impl LorentzianFit {
    pub fn params(&self) -> LorentzianParams {
        LorentzianParams::new(self.center_hz, self.hwhm_hz, self.amplitude, self.baseline)
    }

    /// One-sigma parameter uncertainties from the covariance diagonal.
    pub fn std_errors(&self) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.covariance[i][i].max(0.0).sqrt();
        }
        out
    }
}

pub fn eval_lorentzian(
    center_hz: f64,
    hwhm_hz: f64,
    amplitude: f64,
    baseline: f64,
    freq_hz: f64,
) -> Result<f64> {
    let p = LorentzianParams::new(center_hz, hwhm_hz, amplitude, baseline);
    p.validate()?;
    ensure_finite("freq_hz", freq_hz)?;
    Ok(p.eval(freq_hz))
}

/// Affine map between the caller's units and the unit-scale problem the
/// optimiser sees.
#[derive(Debug, Clone, Copy)]
struct Normalization {
    f_mid: f64,
    f_scale: f64,
    y_ref: f64,
    y_scale: f64,
}

impl Normalization {
    fn for_sweep(sweep: &FrequencySweep) -> Self {
        let f = sweep.freqs_hz();
        let f_lo = f[0];
        let f_hi = f[f.len() - 1];
        let (y_min, y_max) = min_max(sweep.values());
        let y_scale = if y_max > y_min { y_max - y_min } else { 1.0 };
        Self {
            f_mid: 0.5 * (f_lo + f_hi),
            f_scale: f_hi - f_lo,
            y_ref: y_min,
            y_scale,
        }
    }

    fn to_internal(self, p: &LorentzianParams) -> [f64; 4] {
        [
            (p.center_hz - self.f_mid) / self.f_scale,
            p.hwhm_hz / self.f_scale,
            p.amplitude / self.y_scale,
            (p.baseline - self.y_ref) / self.y_scale,
        ]
    }

    fn to_external(self, q: &[f64]) -> LorentzianParams {
        LorentzianParams::new(
            self.f_mid + q[0] * self.f_scale,
            q[1] * self.f_scale,
            q[2] * self.y_scale,
            self.y_ref + q[3] * self.y_scale,
        )
    }

    fn scales(&self) -> [f64; 4] {
        [self.f_scale, self.f_scale, self.y_scale, self.y_scale]
    }
}

struct LorentzianProblem {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl LeastSquaresProblem for LorentzianProblem {
    fn n_params(&self) -> usize {
        4
    }

    fn n_residuals(&self) -> usize {
        self.x.len()
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) -> bool {
        if !(p[1] > 0.0) {
            return false;
        }
        let m = LorentzianParams::new(p[0], p[1], p[2], p[3]);
        for ((o, &x), &y) in out.iter_mut().zip(&self.x).zip(&self.y) {
            *o = m.eval(x) - y;
        }
        true
    }

    fn jacobian(&self, p: &[f64], out: &mut DMatrix<f64>) {
        let m = LorentzianParams::new(p[0], p[1], p[2], p[3]);
        for (i, &x) in self.x.iter().enumerate() {
            let row = m.jacobian(x);
            for (j, v) in row.iter().enumerate() {
                out[(i, j)] = *v;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Polarity {
    Peak,
    Auto,
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        })
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn check_not_degenerate(sweep: &FrequencySweep) -> Result<()> {
    let v = sweep.values();
    let (lo, hi) = min_max(v);
    let p2p = hi - lo;
    let diff_rms =
        (v.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
    if p2p <= 0.0 || p2p < 10.0 * diff_rms {
        return Err(Error::DegenerateData(format!(
            "peak-to-peak {p2p:.3e} is below 10x the first-difference RMS {diff_rms:.3e}"
        )));
    }
    Ok(())
}

/// Deterministic starting point: extremum for the centre, median of the outer
/// 10% of samples for the baseline, half-level crossing span for the width.
fn self_initialize(sweep: &FrequencySweep, polarity: Polarity) -> LorentzianParams {
    let f = sweep.freqs_hz();
    let v = sweep.values();
    let n = v.len();

    let edge = ((n as f64 * 0.05).ceil() as usize).max(1);
    let mut outer: Vec<f64> = v[..edge].iter().chain(&v[n - edge..]).copied().collect();
    let baseline = median(&mut outer);

    let (imin, imax) = v.iter().enumerate().fold((0, 0), |(lo, hi), (i, &x)| {
        (
            if x < v[lo] { i } else { lo },
            if x > v[hi] { i } else { hi },
        )
    });
    let use_peak = match polarity {
        Polarity::Peak => true,
        Polarity::Auto => (v[imax] - baseline).abs() >= (v[imin] - baseline).abs(),
    };
    let ipk = if use_peak { imax } else { imin };
    let amplitude = v[ipk] - baseline;

    let half = 0.5 * amplitude.abs();
    let above: Vec<usize> = (0..n).filter(|&i| (v[i] - baseline).abs() > half).collect();
    let span = match (above.first(), above.last()) {
        (Some(&a), Some(&b)) if b > a => f[b] - f[a],
        _ => 0.0,
    };
    let min_step = f
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let hwhm = (0.5 * span).max(min_step);

    LorentzianParams::new(f[ipk], hwhm, amplitude, baseline)
}

fn fit_with_polarity(
    sweep: &FrequencySweep,
    init: Option<&LorentzianParams>,
    polarity: Polarity,
) -> Result<LorentzianFit> {
    check_not_degenerate(sweep)?;
    let start = match init {
        Some(p) => {
            p.validate()?;
            *p
        }
        None => self_initialize(sweep, polarity),
    };

    let norm = Normalization::for_sweep(sweep);
    let problem = LorentzianProblem {
        x: sweep
            .freqs_hz()
            .iter()
            .map(|f| (f - norm.f_mid) / norm.f_scale)
            .collect(),
        y: sweep
            .values()
            .iter()
            .map(|y| (y - norm.y_ref) / norm.y_scale)
            .collect(),
    };

    let report = lm::minimize(&problem, &norm.to_internal(&start), &LmConfig::default()).map_err(
        |fail| Error::FitFailure {
            reason: fail.reason,
            iterations: fail.iterations,
            best_params: norm.to_external(&fail.best_params).as_array().to_vec(),
        },
    )?;

    let p = norm.to_external(&report.params);
    let (f_lo, f_hi) = (sweep.freqs_hz()[0], sweep.freqs_hz()[sweep.len() - 1]);
    if !(p.center_hz >= f_lo && p.center_hz <= f_hi) {
        return Err(Error::FitFailure {
            reason: format!("fitted centre {} Hz lies outside the sweep", p.center_hz),
            iterations: report.iterations,
            best_params: p.as_array().to_vec(),
        });
    }

    let cov_int = report.covariance(sweep.len());
    let scales = norm.scales();
    let mut covariance = [[0.0; 4]; 4];
    for (i, row) in covariance.iter_mut().enumerate() {
        for (j, c) in row.iter_mut().enumerate() {
            *c = cov_int[(i, j)] * (scales[i] * scales[j]);
        }
    }

    let residual_rms = (report.ssr / sweep.len() as f64).sqrt() * norm.y_scale;
    Ok(LorentzianFit {
        center_hz: p.center_hz,
        hwhm_hz: p.hwhm_hz,
        amplitude: p.amplitude,
        baseline: p.baseline,
        residual_rms,
        covariance,
        iterations: report.iterations,
    })
}

/// Fits a single Lorentzian (peak or dip) to the sweep.
pub fn fit_lorentzian(
    sweep: &FrequencySweep,
    init: Option<&LorentzianParams>,
) -> Result<LorentzianFit> {
    fit_with_polarity(sweep, init, Polarity::Auto)
}

/// Fits the absorptive magnitude response of a resonance. The sweep must
/// bracket the peak.
pub fn fit_response_curve(sweep: &FrequencySweep) -> Result<LorentzianFit> {
    let v = sweep.values();
    let imax = v
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    if imax == 0 || imax == v.len() - 1 {
        return Err(Error::InsufficientCoverage(
            "response maximum lies at a sweep endpoint".into(),
        ));
    }
    let fit = fit_with_polarity(sweep, None, Polarity::Peak)?;
    if fit.amplitude <= 0.0 {
        return Err(Error::FitFailure {
            reason: "fitted response amplitude is not positive".into(),
            iterations: fit.iterations,
            best_params: fit.params().as_array().to_vec(),
        });
    }
    Ok(fit)
}
