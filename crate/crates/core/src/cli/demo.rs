//! End-to-end run of the whole chain on seeded synthetic data.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::cellchem::{self, GasCoefficients};
use crate::error::Result;
use crate::gradiometer::{self, Correction, GradCalibration};
use crate::io::ser_f64_sentinel;
use crate::lineshape::{self, FrequencySweep, LorentzianParams};
use crate::nmr::{self, SampleSpec};
use crate::psd;
use crate::serf::{self, IntrinsicWidth, LinewidthPoint, SerfParams};
use crate::simulator::{self, SimConfig, Tone};

pub const DEFAULT_SEED: u64 = 7;

/// Back-computed shift and fitted width of the D1 absorption line (GHz).
const ABSORPTION_SHIFT_GHZ: f64 = 1.916;
const ABSORPTION_HWHM_GHZ: f64 = 31.878;
const RESPONSE_CENTER_HZ: f64 = 60.0;
const RESPONSE_HWHM_HZ: f64 = 10.45;
const T_SE_S: f64 = 8.6e-6;
const PHASE_TONES_HZ: [f64; 14] = [
    5.0, 10.0, 15.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 85.0, 100.0, 130.0, 160.0, 200.0,
];

#[derive(Debug, Clone, Serialize)]
pub struct AbsorptionReport {
    pub center_hz: f64,
    pub hwhm_ghz: f64,
    pub shift_ghz: f64,
    pub he_amagat: f64,
    pub n2_amagat: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResponseReport {
    pub center_hz: f64,
    pub linewidth_hz: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SerfReport {
    pub t_se_s: f64,
    pub intrinsic_hwhm_hz: f64,
    pub number_density_cm3: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseReport {
    pub f1_hz: f64,
    pub f2_hz: f64,
    pub extremum_freq_hz: f64,
    pub extremum_phase_rad: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradiometryReport {
    pub amplitude_ratio: f64,
    pub tone_phase_rad: f64,
    #[serde(serialize_with = "ser_f64_sentinel")]
    pub reduction_ratio_amplitude_only: f64,
    #[serde(serialize_with = "ser_f64_sentinel")]
    pub reduction_ratio: f64,
    pub single_channel_floor_t_sqrthz: f64,
    pub amplitude_only_floor_t_sqrthz: f64,
    pub phase_corrected_floor_t_sqrthz: f64,
    pub improvement_factor: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NmrReport {
    pub polarization: f64,
    pub field_t: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DemoReport {
    pub seed: u64,
    pub absorption: AbsorptionReport,
    pub response: ResponseReport,
    pub serf: SerfReport,
    pub phase: PhaseReport,
    pub gradiometry: GradiometryReport,
    pub nmr: NmrReport,
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn noisy_sweep(
    params: &LorentzianParams,
    freqs: Vec<f64>,
    sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Result<FrequencySweep> {
    let values = freqs
        .iter()
        .map(|&f| params.eval(f) + sigma * gaussian(rng))
        .collect();
    FrequencySweep::new(freqs, values)
}

fn absorption(seed: u64) -> Result<AbsorptionReport> {
    let coeffs = GasCoefficients::default();
    let center = coeffs.reference_freq_hz + ABSORPTION_SHIFT_GHZ * 1e9;
    let hwhm = ABSORPTION_HWHM_GHZ * 1e9;
    // transmission dip
    let truth = LorentzianParams::new(center, hwhm, -0.6, 1.0);
    let freqs = (0..301)
        .map(|i| center + (i as f64 - 150.0) * 1e9)
        .collect();
    let sweep = noisy_sweep(&truth, freqs, 0.002, &mut rng_for(seed, 11))?;
    let fit = lineshape::fit_lorentzian(&sweep, None)?;
    let shift_ghz = cellchem::shift_from_center(fit.center_hz, &coeffs);
    let hwhm_ghz = fit.hwhm_hz * 1e-9;
    let comp = cellchem::solve_composition(shift_ghz, hwhm_ghz, &coeffs)?;
    Ok(AbsorptionReport {
        center_hz: fit.center_hz,
        hwhm_ghz,
        shift_ghz,
        he_amagat: comp.he_amagat,
        n2_amagat: comp.n2_amagat,
    })
}

fn response(seed: u64) -> Result<ResponseReport> {
    let truth = LorentzianParams::new(RESPONSE_CENTER_HZ, RESPONSE_HWHM_HZ, 1.0, 0.02);
    let freqs = (0..=150).map(|i| i as f64).collect();
    let sweep = noisy_sweep(&truth, freqs, 0.005, &mut rng_for(seed, 12))?;
    let fit = lineshape::fit_response_curve(&sweep)?;
    Ok(ResponseReport {
        center_hz: fit.center_hz,
        linewidth_hz: fit.hwhm_hz,
    })
}

fn serf_fit(seed: u64) -> Result<SerfReport> {
    let params = SerfParams::potassium(T_SE_S, RESPONSE_HWHM_HZ);
    let mut rng = rng_for(seed, 13);
    let points = (1..=10)
        .map(|i| {
            let nu = 20.0 * i as f64;
            let w = serf::predict_linewidth(nu, &params)?;
            Ok(LinewidthPoint::new(
                nu,
                w * (1.0 + 0.005 * gaussian(&mut rng)),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let fit = serf::fit_tse(
        &points,
        params.nuclear_spin,
        params.slowing_q,
        IntrinsicWidth::Fit,
    )?;
    let n = serf::number_density(fit.t_se_s, params.vbar_m_s, params.sigma_se_cm2)?;
    Ok(SerfReport {
        t_se_s: fit.t_se_s,
        intrinsic_hwhm_hz: fit.intrinsic_hwhm_hz,
        number_density_cm3: n,
    })
}

/// Multi-tone record through the two channels, fitted for the bandwidths.
fn phase_calibration(seed: u64) -> Result<(PhaseReport, gradiometer::PhaseFit)> {
    let base = SimConfig::default();
    let cfg = SimConfig {
        duration_s: 20.0,
        seed: seed.wrapping_add(1),
        tones: PHASE_TONES_HZ
            .iter()
            .enumerate()
            .map(|(i, &f)| Tone {
                freq_hz: f,
                amp_t: 16e-12,
                phase_rad: 0.7 * i as f64,
            })
            .collect(),
        ..base
    };
    let rec = simulator::simulate_record(&cfg)?;
    let points = gradiometer::measure_phase_points(&rec, &PHASE_TONES_HZ)?;
    let fit = gradiometer::fit_phase_model(&points)?;
    let (f_ext, p_ext) = fit.extremum();
    Ok((
        PhaseReport {
            f1_hz: fit.f1_hz,
            f2_hz: fit.f2_hz,
            extremum_freq_hz: f_ext,
            extremum_phase_rad: p_ext,
        },
        fit,
    ))
}

fn gradiometry(seed: u64, phase: &gradiometer::PhaseFit) -> Result<GradiometryReport> {
    let cfg = SimConfig {
        seed,
        ..SimConfig::default()
    };
    let tone = cfg.tones[0];
    let rec = simulator::simulate_record(&cfg)?;
    let cmp = gradiometer::compare_tone(&rec, tone.freq_hz)?;
    let cal = GradCalibration {
        amplitude_ratio: cmp.top_amplitude / cmp.bottom_amplitude,
        f1_hz: phase.f1_hz,
        f2_hz: phase.f2_hz,
        tone_freq_hz: tone.freq_hz,
        tone_amp_t: tone.amp_t,
    };
    let fs = rec.sample_rate_hz;
    let seg = psd::DEFAULT_SEGMENT_LEN;
    let ov = psd::DEFAULT_OVERLAP;

    let single = psd::welch_asd(&rec.top_t, fs, seg, ov)?;
    let amp_only = gradiometer::subtract_with(&rec, &cal, Correction::AmplitudeOnly)?;
    let phased = gradiometer::subtract_with(&rec, &cal, Correction::AmplitudeAndPhase)?;
    let single_floor = psd::band_floor(&single, 10.0, 40.0)?;
    let amp_floor = psd::band_floor(&psd::welch_asd(&amp_only, fs, seg, ov)?, 10.0, 40.0)?;
    let phase_floor = psd::band_floor(&psd::welch_asd(&phased, fs, seg, ov)?, 20.0, 30.0)?;

    Ok(GradiometryReport {
        amplitude_ratio: cal.amplitude_ratio,
        tone_phase_rad: cmp.phase_rad,
        reduction_ratio_amplitude_only: gradiometer::reduction_ratio(
            &rec,
            &cal,
            tone.freq_hz,
            Correction::AmplitudeOnly,
        )?,
        reduction_ratio: gradiometer::reduction_ratio(
            &rec,
            &cal,
            tone.freq_hz,
            Correction::AmplitudeAndPhase,
        )?,
        single_channel_floor_t_sqrthz: single_floor,
        amplitude_only_floor_t_sqrthz: amp_floor,
        phase_corrected_floor_t_sqrthz: phase_floor,
        improvement_factor: single_floor / phase_floor,
    })
}

pub fn run(seed: u64) -> Result<DemoReport> {
    let (phase, phase_fit) = phase_calibration(seed)?;
    let est = nmr::dipole_field(&SampleSpec::water_protons())?;
    Ok(DemoReport {
        seed,
        absorption: absorption(seed)?,
        response: response(seed)?,
        serf: serf_fit(seed)?,
        gradiometry: gradiometry(seed, &phase_fit)?,
        phase,
        nmr: NmrReport {
            polarization: est.polarization,
            field_t: est.field_t,
        },
    })
}

pub fn table(r: &DemoReport) -> String {
    let g = &r.gradiometry;
    let rows: Vec<(&str, String, &str)> = vec![
        (
            "D1 centre",
            format!("{:.4} THz", r.absorption.center_hz * 1e-12),
            "389.2879 THz",
        ),
        (
            "D1 HWHM",
            format!("{:.3} GHz", r.absorption.hwhm_ghz),
            "31.98 GHz",
        ),
        (
            "4He density",
            format!("{:.3} amg", r.absorption.he_amagat),
            "1.86 amg",
        ),
        (
            "N2 density",
            format!("{:.3} amg", r.absorption.n2_amagat),
            "0.34 amg",
        ),
        (
            "response linewidth",
            format!("{:.2} Hz", r.response.linewidth_hz),
            "10.45 Hz",
        ),
        ("T_SE", format!("{:.2} us", r.serf.t_se_s * 1e6), "8.6 us"),
        (
            "K density",
            format!("{:.3e} cm^-3", r.serf.number_density_cm3),
            "1.2e14 cm^-3",
        ),
        (
            "bandwidth f1",
            format!("{:.2} Hz", r.phase.f1_hz),
            "49.9 Hz",
        ),
        (
            "bandwidth f2",
            format!("{:.2} Hz", r.phase.f2_hz),
            "68.8 Hz",
        ),
        (
            "max |phase diff|",
            format!(
                "{:.3} rad @ {:.1} Hz",
                r.phase.extremum_phase_rad.abs(),
                r.phase.extremum_freq_hz
            ),
            "0.17 rad",
        ),
        ("amplitude ratio", format!("{:.4}", g.amplitude_ratio), "-"),
        (
            "reduction, amplitude only",
            format!("{:.1}", g.reduction_ratio_amplitude_only),
            "-",
        ),
        (
            "reduction, phase corrected",
            format!("{:.1}", g.reduction_ratio),
            "52.3",
        ),
        (
            "single-channel floor",
            format!("{:.2} fT/rtHz", g.single_channel_floor_t_sqrthz * 1e15),
            "8 fT/rtHz",
        ),
        (
            "amplitude-only floor",
            format!("{:.2} fT/rtHz", g.amplitude_only_floor_t_sqrthz * 1e15),
            "-",
        ),
        (
            "phase-corrected floor",
            format!("{:.2} fT/rtHz", g.phase_corrected_floor_t_sqrthz * 1e15),
            "1.2 fT/rtHz",
        ),
        (
            "floor improvement",
            format!("{:.2}x", g.improvement_factor),
            "-",
        ),
        (
            "water 1H polarisation",
            format!("{:.3e}", r.nmr.polarization),
            "-",
        ),
        (
            "water 1H field @ 1 cm",
            format!("{:.3e} T", r.nmr.field_t),
            "-",
        ),
    ];
    let mut out = format!("serfkit demo-paper, seed {}\n", r.seed);
    out += &format!("{:<28} {:>24}   {}\n", "quantity", "value", "reference");
    for (q, v, p) in rows {
        out += &format!("{q:<28} {v:>24}   {p}\n");
    }
    out
}
