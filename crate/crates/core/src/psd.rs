//! Welch amplitude spectral density, tesla calibration from a known tone and
//! band noise-floor reporting.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::lineshape::median;
use crate::spectrum::{
    self, neighborhood_median, MAIN_LOBE_BINS, TONE_SEARCH_BINS, TONE_SNR_THRESHOLD,
};

pub const DEFAULT_SEGMENT_LEN: usize = 4096;
pub const DEFAULT_OVERLAP: f64 = 0.5;
pub const MIN_SEGMENT_LEN: usize = 64;
/// Bins on either side of a flagged tone bin that are also dropped from
/// floor statistics (Hann main lobe).
const TONE_DILATION_BINS: usize = 2;

/// One-sided amplitude spectral density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdEstimate {
    pub freqs_hz: Vec<f64>,
    pub asd_t_sqrthz: Vec<f64>,
    pub sample_rate_hz: f64,
    pub segment_len: usize,
    pub overlap_fraction: f64,
    pub window_name: String,
    pub n_averages: usize,
    /// Set when the window is power-normalised, so that the PSD integrates to
    /// the time-domain variance.
    pub power_normalized: bool,
}

impl PsdEstimate {
    pub fn bin_width_hz(&self) -> f64 {
        self.sample_rate_hz / self.segment_len as f64
    }

    pub fn psd(&self) -> Vec<f64> {
        self.asd_t_sqrthz.iter().map(|a| a * a).collect()
    }

    pub fn nearest_bin(&self, freq_hz: f64) -> usize {
        let k = (freq_hz / self.bin_width_hz()).round().max(0.0) as usize;
        k.min(self.freqs_hz.len() - 1)
    }

    /// `Σ PSD·Δf` over bins `lo..=hi`.
    pub fn band_power(&self, lo: usize, hi: usize) -> f64 {
        let hi = hi.min(self.asd_t_sqrthz.len() - 1);
        self.asd_t_sqrthz[lo..=hi]
            .iter()
            .map(|a| a * a)
            .sum::<f64>()
            * self.bin_width_hz()
    }

    pub fn total_power(&self) -> f64 {
        self.band_power(0, self.asd_t_sqrthz.len() - 1)
    }

    /// Multiplies the ASD by `scale` (e.g. from [`calibrate_tesla`]).
    pub fn scaled(&self, scale: f64) -> Self {
        Self {
            asd_t_sqrthz: self.asd_t_sqrthz.iter().map(|a| a * scale).collect(),
            ..self.clone()
        }
    }
}

pub fn welch_asd(
    series: &[f64],
    sample_rate_hz: f64,
    segment_len: usize,
    overlap_fraction: f64,
) -> Result<PsdEstimate> {
    ensure_positive("sample_rate_hz", sample_rate_hz)?;
    if segment_len < MIN_SEGMENT_LEN {
        return Err(Error::param(format!(
            "segment length must be >= {MIN_SEGMENT_LEN}, got {segment_len}"
        )));
    }
    if !(0.0..1.0).contains(&overlap_fraction) {
        return Err(Error::param(format!(
            "overlap must be in [0, 1), got {overlap_fraction}"
        )));
    }
    if series.len() < segment_len {
        return Err(Error::InsufficientData(format!(
            "series of {} samples is shorter than one segment ({segment_len})",
            series.len()
        )));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("series contains non-finite samples"));
    }

    let overlap = (overlap_fraction * segment_len as f64).round() as usize;
    let step = (segment_len - overlap).max(1);
    let window = spectrum::hann(segment_len);
    let window_power: f64 = window.iter().map(|w| w * w).sum();
    let fft = spectrum::forward_fft(segment_len);
    let n_bins = segment_len / 2 + 1;

    let mut acc = vec![0.0; n_bins];
    let mut buf = vec![rustfft::num_complex::Complex64::new(0.0, 0.0); segment_len];
    let mut n_averages = 0;
    let mut start = 0;
    while start + segment_len <= series.len() {
        let seg = &series[start..start + segment_len];
        let mean = seg.iter().sum::<f64>() / segment_len as f64;
        for ((b, &x), &w) in buf.iter_mut().zip(seg).zip(&window) {
            *b = rustfft::num_complex::Complex64::new((x - mean) * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, c) in acc.iter_mut().zip(&buf) {
            *a += c.norm_sqr();
        }
        n_averages += 1;
        start += step;
    }

    let norm = 1.0 / (n_averages as f64 * sample_rate_hz * window_power);
    let nyquist_even = segment_len.is_multiple_of(2);
    let df = sample_rate_hz / segment_len as f64;
    let asd = acc
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let one_sided = if k == 0 || (nyquist_even && k == n_bins - 1) {
                1.0
            } else {
                2.0
            };
            (p * norm * one_sided).sqrt()
        })
        .collect();

    Ok(PsdEstimate {
        freqs_hz: (0..n_bins).map(|k| k as f64 * df).collect(),
        asd_t_sqrthz: asd,
        sample_rate_hz,
        segment_len,
        overlap_fraction,
        window_name: "hann".into(),
        n_averages,
        power_normalized: true,
    })
}

/// Amplitude of a sinusoid recovered from the PSD: main-lobe power above the
/// local noise median, `A = √(2P)`.
pub fn tone_amplitude(psd: &PsdEstimate, tone_freq_hz: f64) -> Result<f64> {
    let power = psd.psd();
    let last = power.len() - 1;
    let nominal = psd.nearest_bin(tone_freq_hz);
    if nominal == 0 || nominal >= last {
        return Err(Error::param(format!(
            "tone frequency {tone_freq_hz} Hz is outside (0, Nyquist)"
        )));
    }
    let lo = nominal.saturating_sub(TONE_SEARCH_BINS).max(1);
    let hi = (nominal + TONE_SEARCH_BINS).min(last - 1);
    let peak = (lo..=hi)
        .max_by(|&a, &b| power[a].total_cmp(&power[b]))
        .unwrap_or(nominal);
    let noise = neighborhood_median(&power, peak, MAIN_LOBE_BINS, 1..last);
    let snr = if power[peak] == 0.0 {
        0.0
    } else if noise == 0.0 {
        f64::INFINITY
    } else {
        power[peak] / noise
    };
    if !(snr > TONE_SNR_THRESHOLD) {
        return Err(Error::MissingTone {
            freq_hz: tone_freq_hz,
            snr,
            threshold: TONE_SNR_THRESHOLD,
        });
    }
    let a = peak.saturating_sub(MAIN_LOBE_BINS).max(1);
    let b = (peak + MAIN_LOBE_BINS).min(last - 1);
    let excess: f64 = power[a..=b].iter().map(|p| p - noise).sum::<f64>() * psd.bin_width_hz();
    Ok((2.0 * excess.max(0.0)).sqrt())
}

/// Scale factor that makes the tone at `tone_freq_hz` integrate to
/// `tone_amp_t`. Multiply the ASD (or the raw series) by it.
pub fn calibrate_tesla(psd: &PsdEstimate, tone_freq_hz: f64, tone_amp_t: f64) -> Result<f64> {
    ensure_positive("tone_amp_t", tone_amp_t)?;
    let measured = tone_amplitude(psd, tone_freq_hz)?;
    if measured == 0.0 {
        return Err(Error::MissingTone {
            freq_hz: tone_freq_hz,
            snr: 0.0,
            threshold: TONE_SNR_THRESHOLD,
        });
    }
    Ok(tone_amp_t / measured)
}

/// Bins in `[f_lo, f_hi]` whose power exceeds 10× the median of their ±20-bin
/// neighbourhood, dilated by the Hann main lobe.
pub fn tone_bins(psd: &PsdEstimate, f_lo_hz: f64, f_hi_hz: f64) -> Vec<usize> {
    let power = psd.psd();
    let n = power.len();
    let mut flagged = vec![false; n];
    for k in 0..n {
        let f = psd.freqs_hz[k];
        if f < f_lo_hz || f > f_hi_hz {
            continue;
        }
        let med = neighborhood_median(&power, k, 0, 0..n);
        if power[k] > TONE_SNR_THRESHOLD * med && power[k] > 0.0 {
            let a = k.saturating_sub(TONE_DILATION_BINS);
            let b = (k + TONE_DILATION_BINS).min(n - 1);
            flagged[a..=b].iter_mut().for_each(|x| *x = true);
        }
    }
    (0..n).filter(|&k| flagged[k]).collect()
}

/// Median ASD in `[f_lo, f_hi]` after dropping tone bins.
pub fn band_floor(psd: &PsdEstimate, f_lo_hz: f64, f_hi_hz: f64) -> Result<f64> {
    let nyquist = *psd.freqs_hz.last().unwrap_or(&0.0);
    if !(f_lo_hz >= 0.0 && f_hi_hz > f_lo_hz && f_hi_hz <= nyquist) {
        return Err(Error::InsufficientBand(format!(
            "band [{f_lo_hz}, {f_hi_hz}] Hz is not inside [0, {nyquist}] Hz"
        )));
    }
    let in_band: Vec<usize> = (0..psd.freqs_hz.len())
        .filter(|&k| psd.freqs_hz[k] >= f_lo_hz && psd.freqs_hz[k] <= f_hi_hz)
        .collect();
    if in_band.len() < 5 {
        return Err(Error::InsufficientBand(format!(
            "band spans {} bins, need at least 5",
            in_band.len()
        )));
    }
    let tones = tone_bins(psd, f_lo_hz, f_hi_hz);
    let mut kept: Vec<f64> = in_band
        .iter()
        .filter(|k| tones.binary_search(k).is_err())
        .map(|&k| psd.asd_t_sqrthz[k])
        .collect();
    if kept.len() < 5 {
        return Err(Error::InsufficientBand(
            "fewer than 5 tone-free bins in band".into(),
        ));
    }
    Ok(median(&mut kept))
}
