//! Seeded synthetic two-channel magnetometer records.
//!
//! Each channel sees the common field (tones plus common-mode noise) through
//! its own gain and first-order low-pass response `H(f) = 1/(1 + i·f/f_c)`,
//! plus independent sensor noise and half of a gradient noise term with
//! opposite signs on the two channels. All noise is synthesised directly in
//! the frequency domain as independent Gaussian coefficients, so the
//! configured floors are exact in expectation and the channel responses are
//! applied without edge transients.
//!
//! Every noise component draws from its own ChaCha stream, so zeroing one
//! component leaves the others bit-identical.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::TwoChannelRecord;
use crate::spectrum;

/// Minimum number of samples in a simulated record.
pub const MIN_SAMPLES: usize = 1 << 12;

const STREAM_COMMON: u64 = 1;
const STREAM_GRADIENT: u64 = 2;
const STREAM_SENSOR_TOP: u64 = 3;
const STREAM_SENSOR_BOTTOM: u64 = 4;

/// First-order low-pass response at `freq_hz` (negative frequencies give the
/// complex conjugate).
pub fn channel_transfer(freq_hz: f64, bandwidth_hz: f64) -> Complex64 {
    Complex64::new(1.0, 0.0) / Complex64::new(1.0, freq_hz / bandwidth_hz)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    /// Common-mode field noise seen by both channels (T/√Hz).
    pub common_asd_t_sqrthz: f64,
    /// Gradient noise; `+½` on top, `−½` on bottom (T/√Hz).
    pub gradient_asd_t_sqrthz: f64,
    /// Independent per-channel noise, `[top, bottom]` (T/√Hz).
    pub sensor_asd_t_sqrthz: [f64; 2],
    /// Below this frequency the common-mode ASD rises as `√(corner/f)`.
    /// Zero disables the 1/f component.
    pub one_over_f_corner_hz: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            common_asd_t_sqrthz: 0.0,
            gradient_asd_t_sqrthz: 0.0,
            sensor_asd_t_sqrthz: [0.0, 0.0],
            one_over_f_corner_hz: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tone {
    pub freq_hz: f64,
    pub amp_t: f64,
    #[serde(default)]
    pub phase_rad: f64,
}

impl Tone {
    pub fn new(freq_hz: f64, amp_t: f64) -> Self {
        Self {
            freq_hz,
            amp_t,
            phase_rad: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub sample_rate_hz: f64,
    pub duration_s: f64,
    pub seed: u64,
    pub f1_hz: f64,
    pub f2_hz: f64,
    pub channel_gains: [f64; 2],
    pub tones: Vec<Tone>,
    pub noise: NoiseModel,
}

impl Default for SimConfig {
    /// 60 s at 1 kHz through 49.9/68.8 Hz channels with a 16 pT, 10 Hz
    /// calibration tone, 8 fT/√Hz common floor and an uncorrelated
    /// 1.2 fT/√Hz pair split evenly between the channels.
    fn default() -> Self {
        let sensor = 1.2e-15 / std::f64::consts::SQRT_2;
        Self {
            sample_rate_hz: 1000.0,
            duration_s: 60.0,
            seed: 7,
            f1_hz: 49.9,
            f2_hz: 68.8,
            channel_gains: [1.0, 1.0],
            tones: vec![Tone::new(10.0, 16e-12)],
            noise: NoiseModel {
                common_asd_t_sqrthz: 8e-15,
                gradient_asd_t_sqrthz: 0.0,
                sensor_asd_t_sqrthz: [sensor, sensor],
                one_over_f_corner_hz: 0.0,
            },
        }
    }
}

impl SimConfig {
    pub fn n_samples(&self) -> usize {
        (self.duration_s * self.sample_rate_hz).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return bad(format!(
                "sample_rate_hz must be > 0, got {}",
                self.sample_rate_hz
            ));
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return bad(format!("duration_s must be > 0, got {}", self.duration_s));
        }
        if self.n_samples() < MIN_SAMPLES {
            return bad(format!(
                "record of {} samples is shorter than the minimum {MIN_SAMPLES}",
                self.n_samples()
            ));
        }
        for (name, v) in [("f1_hz", self.f1_hz), ("f2_hz", self.f2_hz)] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be > 0, got {v}"));
            }
        }
        if self.channel_gains.iter().any(|g| !g.is_finite()) {
            return bad("channel gains must be finite".into());
        }
        let nyquist = 0.5 * self.sample_rate_hz;
        for t in &self.tones {
            if !(t.freq_hz.is_finite() && t.freq_hz >= 0.0 && t.freq_hz < nyquist) {
                return bad(format!(
                    "tone frequency {} Hz outside [0, Nyquist)",
                    t.freq_hz
                ));
            }
            if !(t.amp_t.is_finite() && t.phase_rad.is_finite()) {
                return bad("tone amplitude and phase must be finite".into());
            }
        }
        let n = &self.noise;
        let asds = [
            n.common_asd_t_sqrthz,
            n.gradient_asd_t_sqrthz,
            n.sensor_asd_t_sqrthz[0],
            n.sensor_asd_t_sqrthz[1],
        ];
        if asds.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return bad("noise ASDs must be finite and >= 0".into());
        }
        if !(n.one_over_f_corner_hz.is_finite() && n.one_over_f_corner_hz >= 0.0) {
            return bad("one_over_f_corner_hz must be >= 0".into());
        }
        Ok(())
    }
}

/// Hermitian spectrum of real Gaussian noise with one-sided ASD `asd(f)`.
/// The inverse transform (with `1/N`) has variance `∫ asd² df`.
fn noise_spectrum(
    n: usize,
    sample_rate_hz: f64,
    seed: u64,
    stream: u64,
    asd: impl Fn(f64) -> f64,
) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    let df = sample_rate_hz / n as f64;
    let half = n / 2;
    for k in 1..=half {
        let a: f64 = StandardNormal.sample(&mut rng);
        let b: f64 = StandardNormal.sample(&mut rng);
        let s = asd(k as f64 * df);
        if n.is_multiple_of(2) && k == half {
            // real Nyquist coefficient carries the full variance
            out[k] = Complex64::new(s * (n as f64 * sample_rate_hz / 2.0).sqrt() * a, 0.0);
        } else {
            let sigma = s * (n as f64 * sample_rate_hz / 4.0).sqrt();
            out[k] = Complex64::new(sigma * a, sigma * b);
            out[n - k] = out[k].conj();
        }
    }
    out
}

pub fn simulate_record(cfg: &SimConfig) -> Result<TwoChannelRecord> {
    cfg.validate()?;
    let n = cfg.n_samples();
    let fs = cfg.sample_rate_hz;
    let noise = &cfg.noise;

    let tones: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            cfg.tones
                .iter()
                .map(|tone| {
                    tone.amp_t * (std::f64::consts::TAU * tone.freq_hz * t + tone.phase_rad).sin()
                })
                .sum()
        })
        .collect();
    let mut common = spectrum::fft_real(&tones);

    let corner = noise.one_over_f_corner_hz;
    let common_asd = |f: f64| {
        let base = noise.common_asd_t_sqrthz;
        if corner > 0.0 && f < corner {
            base * (corner / f).sqrt()
        } else {
            base
        }
    };
    let common_noise = noise_spectrum(n, fs, cfg.seed, STREAM_COMMON, common_asd);
    for (c, z) in common.iter_mut().zip(&common_noise) {
        *c += z;
    }
    let gradient = noise_spectrum(n, fs, cfg.seed, STREAM_GRADIENT, |_| {
        noise.gradient_asd_t_sqrthz
    });
    let sensor_top = noise_spectrum(n, fs, cfg.seed, STREAM_SENSOR_TOP, |_| {
        noise.sensor_asd_t_sqrthz[0]
    });
    let sensor_bottom = noise_spectrum(n, fs, cfg.seed, STREAM_SENSOR_BOTTOM, |_| {
        noise.sensor_asd_t_sqrthz[1]
    });

    let mut top = Vec::with_capacity(n);
    let mut bottom = Vec::with_capacity(n);
    for k in 0..n {
        let f = spectrum::bin_frequency(k, n, fs);
        let h1 = channel_transfer(f, cfg.f1_hz) * cfg.channel_gains[0];
        let h2 = channel_transfer(f, cfg.f2_hz) * cfg.channel_gains[1];
        let g = gradient[k] * 0.5;
        top.push(h1 * common[k] + sensor_top[k] + g);
        bottom.push(h2 * common[k] + sensor_bottom[k] - g);
    }

    TwoChannelRecord::new(fs, spectrum::ifft_real(top), spectrum::ifft_real(bottom))
}
