//! Windowed-DFT helpers shared by the PSD, gradiometer and simulator code.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::lineshape::median;

/// Power SNR a tone bin must exceed to count as detected.
pub const TONE_SNR_THRESHOLD: f64 = 10.0;
/// Half-width (bins) of the neighbourhood used for local noise estimates.
pub const NEIGHBORHOOD_BINS: usize = 20;
/// Half-width (bins) of a Hann main lobe, excluded from noise estimates.
pub const MAIN_LOBE_BINS: usize = 3;
/// Search radius (bins) around the nominal tone bin.
pub const TONE_SEARCH_BINS: usize = 2;

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    let step = std::f64::consts::TAU / n as f64;
    (0..n)
        .map(|i| 0.5 - 0.5 * (step * i as f64).cos())
        .collect()
}

pub(crate) fn forward_fft(len: usize) -> Arc<dyn Fft<f64>> {
    FftPlanner::new().plan_fft_forward(len)
}

pub(crate) fn inverse_fft(len: usize) -> Arc<dyn Fft<f64>> {
    FftPlanner::new().plan_fft_inverse(len)
}

/// Full-length real-to-complex transform (unnormalised).
pub fn fft_real(series: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = series.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    forward_fft(buf.len()).process(&mut buf);
    buf
}

/// Inverse of [`fft_real`], keeping the real part and applying the `1/N`.
pub fn ifft_real(mut spectrum: Vec<Complex64>) -> Vec<f64> {
    let n = spectrum.len();
    inverse_fft(n).process(&mut spectrum);
    let scale = 1.0 / n as f64;
    spectrum.into_iter().map(|c| c.re * scale).collect()
}

/// Signed frequency of FFT bin `k` for a length-`n` transform.
pub fn bin_frequency(k: usize, n: usize, sample_rate_hz: f64) -> f64 {
    let df = sample_rate_hz / n as f64;
    if k <= n / 2 {
        k as f64 * df
    } else {
        (k as f64 - n as f64) * df
    }
}

/// Median of `power[j]` over `center ± NEIGHBORHOOD_BINS`, skipping bins
/// within `exclude` of the centre. Only indices in `range` are used.
pub(crate) fn neighborhood_median(
    power: &[f64],
    center: usize,
    exclude: usize,
    range: std::ops::Range<usize>,
) -> f64 {
    let lo = center.saturating_sub(NEIGHBORHOOD_BINS).max(range.start);
    let hi = (center + NEIGHBORHOOD_BINS + 1).min(range.end);
    let mut v: Vec<f64> = (lo..hi)
        .filter(|&j| j.abs_diff(center) > exclude)
        .map(|j| power[j])
        .collect();
    if v.is_empty() {
        0.0
    } else {
        median(&mut v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToneEstimate {
    pub freq_hz: f64,
    pub bin: usize,
    /// Peak amplitude of the sinusoid, Hann-amplitude corrected.
    pub amplitude: f64,
    pub phase_rad: f64,
    /// Bin power over the local noise median.
    pub snr: f64,
}

/// Hann-windowed spectrum of a whole record, for tone extraction.
#[derive(Debug, Clone)]
pub struct WindowedSpectrum {
    bins: Vec<Complex64>,
    sample_rate_hz: f64,
    len: usize,
    window_sum: f64,
}

impl WindowedSpectrum {
    pub fn new(series: &[f64], sample_rate_hz: f64) -> Self {
        let w = hann(series.len());
        let window_sum: f64 = w.iter().sum();
        let windowed: Vec<f64> = series.iter().zip(&w).map(|(x, w)| x * w).collect();
        let mut bins = fft_real(&windowed);
        bins.truncate(series.len() / 2 + 1);
        Self {
            bins,
            sample_rate_hz,
            len: series.len(),
            window_sum,
        }
    }

    pub fn bin_width_hz(&self) -> f64 {
        self.sample_rate_hz / self.len as f64
    }

    fn power(&self) -> Vec<f64> {
        self.bins.iter().map(|c| c.norm_sqr()).collect()
    }

    /// Tone at the local maximum within ±2 bins of the nominal frequency, no
    /// detection threshold applied.
    pub fn tone_unchecked(&self, freq_hz: f64) -> Result<ToneEstimate> {
        let nyquist_bin = self.bins.len() - 1;
        let nominal = (freq_hz / self.bin_width_hz()).round();
        if !(freq_hz > 0.0) || nominal < 1.0 || nominal as usize >= nyquist_bin {
            return Err(Error::param(format!(
                "tone frequency {freq_hz} Hz is outside (0, Nyquist)"
            )));
        }
        let nominal = nominal as usize;
        let lo = nominal.saturating_sub(TONE_SEARCH_BINS).max(1);
        let hi = (nominal + TONE_SEARCH_BINS).min(nyquist_bin - 1);
        let power = self.power();
        let bin = (lo..=hi)
            .max_by(|&a, &b| power[a].total_cmp(&power[b]))
            .unwrap_or(nominal);
        let noise = neighborhood_median(&power, bin, MAIN_LOBE_BINS, 1..nyquist_bin);
        let snr = if power[bin] == 0.0 {
            0.0
        } else if noise == 0.0 {
            f64::INFINITY
        } else {
            power[bin] / noise
        };
        let c = self.bins[bin];
        Ok(ToneEstimate {
            freq_hz: bin as f64 * self.bin_width_hz(),
            bin,
            amplitude: 2.0 * c.norm() / self.window_sum,
            phase_rad: c.arg(),
            snr,
        })
    }

    /// As [`tone_unchecked`](Self::tone_unchecked), failing when the power
    /// SNR is below [`TONE_SNR_THRESHOLD`].
    pub fn tone(&self, freq_hz: f64) -> Result<ToneEstimate> {
        let t = self.tone_unchecked(freq_hz)?;
        if !(t.snr > TONE_SNR_THRESHOLD) {
            return Err(Error::MissingTone {
                freq_hz,
                snr: t.snr,
                threshold: TONE_SNR_THRESHOLD,
            });
        }
        Ok(t)
    }
}

/// Wraps an angle to (−π, π].
pub fn wrap_phase(x: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut y = x.rem_euclid(TAU);
    if y > PI {
        y -= TAU;
    }
    y
}
