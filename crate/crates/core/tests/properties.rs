//! Property tests for the module invariants.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use serfkit::cellchem::{predict_line, solve_composition, CellComposition, GasCoefficients};
use serfkit::gradiometer::{
    measure_phase_points, phase_difference, subtract_with, Correction, GradCalibration,
};
use serfkit::lineshape::{fit_lorentzian, FrequencySweep, LorentzianParams};
use serfkit::nmr::{dipole_field, thermal_polarization, SampleSpec};
use serfkit::psd::{band_floor, welch_asd};
use serfkit::serf::{
    fit_tse, number_density, predict_linewidth, se_rate, slowing_factor, IntrinsicWidth,
    LinewidthPoint, SerfParams,
};
use serfkit::simulator::{channel_transfer, simulate_record, NoiseModel, SimConfig, Tone};
use serfkit::spectrum::fft_real;
use serfkit::TwoChannelRecord;

fn rel_close(a: f64, b: f64, rel: f64, scale: f64) -> bool {
    (a - b).abs() <= rel * scale
}

fn sweep_around(p: &LorentzianParams, n: usize, half_span: f64, offset: f64) -> FrequencySweep {
    let lo = p.center_hz + offset - half_span;
    let step = 2.0 * half_span / (n - 1) as f64;
    let freqs = (0..n).map(|i| lo + step * i as f64).collect();
    FrequencySweep::from_model(p, freqs).unwrap()
}

fn lorentzian_params() -> impl Strategy<Value = LorentzianParams> {
    (
        -1e4..1e4f64,
        0.5..50.0f64,
        prop_oneof![0.1..10.0f64, -10.0..-0.1f64],
        -5.0..5.0f64,
    )
        .prop_map(|(c, g, a, b)| LorentzianParams::new(c, g, a, b))
}

fn white(n: usize, sigma: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sigma * z
        })
        .collect()
}

/// RMS of the part of `x` between `lo` and `hi` Hz.
fn band_rms(x: &[f64], fs: f64, lo: f64, hi: f64) -> f64 {
    let n = x.len();
    let spec = fft_real(x);
    let df = fs / n as f64;
    let p: f64 = (1..n / 2)
        .filter(|&k| (lo..=hi).contains(&(k as f64 * df)))
        .map(|k| 2.0 * spec[k].norm_sqr())
        .sum();
    (p / (n as f64 * n as f64)).sqrt()
}

fn true_cal(cfg: &SimConfig) -> GradCalibration {
    let tone = cfg.tones[0];
    let h1 = channel_transfer(tone.freq_hz, cfg.f1_hz) * cfg.channel_gains[0];
    let h2 = channel_transfer(tone.freq_hz, cfg.f2_hz) * cfg.channel_gains[1];
    GradCalibration {
        amplitude_ratio: h1.norm() / h2.norm(),
        f1_hz: cfg.f1_hz,
        f2_hz: cfg.f2_hz,
        tone_freq_hz: tone.freq_hz,
        tone_amp_t: tone.amp_t,
    }
}

// lineshape

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lorentzian_round_trip(p in lorentzian_params(), off in -1.0..1.0f64) {
        let sweep = sweep_around(&p, 201, 6.0 * p.hwhm_hz, off * p.hwhm_hz);
        let fit = fit_lorentzian(&sweep, None).unwrap();
        let tol = 1e-9;
        prop_assert!(rel_close(fit.center_hz, p.center_hz, tol, p.center_hz.abs() + p.hwhm_hz), "{fit:?}");
        prop_assert!(rel_close(fit.hwhm_hz, p.hwhm_hz, tol, p.hwhm_hz), "{fit:?}");
        prop_assert!(rel_close(fit.amplitude, p.amplitude, tol, p.amplitude.abs()), "{fit:?}");
        prop_assert!(rel_close(fit.baseline, p.baseline, tol, p.baseline.abs() + p.amplitude.abs()), "{fit:?}");
    }

    #[test]
    fn lorentzian_fit_shift_invariant(p in lorentzian_params(), shift in -1e5..1e5f64) {
        let a = sweep_around(&p, 201, 5.0 * p.hwhm_hz, 0.3 * p.hwhm_hz);
        let b = FrequencySweep::new(
            a.freqs_hz().iter().map(|f| f + shift).collect(),
            a.values().to_vec(),
        ).unwrap();
        let fa = fit_lorentzian(&a, None).unwrap();
        let fb = fit_lorentzian(&b, None).unwrap();
        let fscale = p.center_hz.abs() + shift.abs() + p.hwhm_hz;
        prop_assert!(rel_close(fb.center_hz - shift, fa.center_hz, 1e-9, fscale));
        prop_assert!(rel_close(fb.hwhm_hz, fa.hwhm_hz, 1e-9, fa.hwhm_hz));
        prop_assert!(rel_close(fb.amplitude, fa.amplitude, 1e-9, fa.amplitude.abs()));
        prop_assert!(rel_close(fb.baseline, fa.baseline, 1e-9, fa.amplitude.abs() + fa.baseline.abs()));
    }
}

#[test]
fn lorentzian_jacobian_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut u = |lo: f64, hi: f64| {
        let z: f64 = rand::Rng::random(&mut rng);
        lo + (hi - lo) * z
    };
    for _ in 0..10 {
        let p = [u(-100.0, 100.0), u(0.5, 20.0), u(-5.0, 5.0), u(-2.0, 2.0)];
        let f = p[0] + u(-3.0, 3.0) * p[1];
        let model = |q: [f64; 4]| LorentzianParams::new(q[0], q[1], q[2], q[3]).eval(f);
        let jac = LorentzianParams::new(p[0], p[1], p[2], p[3]).jacobian(f);
        let norm = jac.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..4 {
            let h = 1e-5 * p[i].abs().max(1.0);
            let (mut up, mut dn) = (p, p);
            up[i] += h;
            dn[i] -= h;
            let fd = (model(up) - model(dn)) / (2.0 * h);
            assert!(
                (fd - jac[i]).abs() <= 1e-6 * norm,
                "param {i}: analytic {} vs fd {fd} at {p:?}, f={f}",
                jac[i]
            );
        }
    }
}

// cell-chem

proptest! {
    #[test]
    fn composition_round_trip(he in 0.0..10.0f64, n2 in 0.0..10.0f64) {
        prop_assume!(he + n2 > 1e-6);
        let c = GasCoefficients::default();
        let line = predict_line(&CellComposition::new(he, n2), &c).unwrap();
        let back = solve_composition(line.shift_ghz, line.width_ghz, &c).unwrap();
        let scale = he + n2;
        prop_assert!(rel_close(back.he_amagat, he, 1e-12, scale), "{back:?}");
        prop_assert!(rel_close(back.n2_amagat, n2, 1e-12, scale), "{back:?}");
    }

    #[test]
    fn predict_line_is_linear(
        c1 in (0.0..5.0f64, 0.0..5.0f64),
        c2 in (0.0..5.0f64, 0.0..5.0f64),
        a in 0.0..3.0f64,
        b in 0.0..3.0f64,
    ) {
        let k = GasCoefficients::default();
        let p = |he: f64, n2: f64| predict_line(&CellComposition::new(he, n2), &k).unwrap();
        let mix = p(a * c1.0 + b * c2.0, a * c1.1 + b * c2.1);
        let (p1, p2) = (p(c1.0, c1.1), p(c2.0, c2.1));
        let scale = 1.0 + mix.width_ghz.abs();
        prop_assert!(rel_close(mix.shift_ghz, a * p1.shift_ghz + b * p2.shift_ghz, 1e-12, scale));
        prop_assert!(rel_close(mix.width_ghz, a * p1.width_ghz + b * p2.width_ghz, 1e-12, scale));
    }
}

// serf

proptest! {
    #[test]
    fn se_rate_vanishes_at_zero_field(t_se in 1e-7..1e-3f64, intrinsic in 0.0..50.0f64) {
        prop_assert_eq!(se_rate(0.0, &SerfParams::potassium(t_se, intrinsic)).unwrap(), 0.0);
    }

    #[test]
    fn tse_fit_recovers_noiseless(t_se in 1e-6..1e-4f64, intrinsic in 0.0..50.0f64, fixed in any::<bool>()) {
        let params = SerfParams::potassium(t_se, intrinsic);
        let points: Vec<_> = (1..=8)
            .map(|i| {
                let nu = 25.0 * i as f64;
                LinewidthPoint::new(nu, predict_linewidth(nu, &params).unwrap())
            })
            .collect();
        let mode = if fixed { IntrinsicWidth::Fixed(intrinsic) } else { IntrinsicWidth::Fit };
        let fit = fit_tse(&points, params.nuclear_spin, params.slowing_q, mode).unwrap();
        let wmax = points.iter().fold(0.0f64, |m, p| m.max(p.hwhm_hz));
        prop_assert!(rel_close(fit.t_se_s, t_se, 1e-10, t_se), "{fit:?}");
        prop_assert!(rel_close(fit.intrinsic_hwhm_hz, intrinsic, 1e-10, intrinsic.max(wmax)), "{fit:?}");
    }

    #[test]
    fn number_density_inverts(n in 1e10..1e16f64, vbar in 100.0..1000.0f64, sigma in 1e-15..1e-13f64) {
        let t = 1.0 / (n * vbar * 100.0 * sigma);
        prop_assert!(rel_close(number_density(t, vbar, sigma).unwrap(), n, 1e-12, n));
    }
}

#[test]
fn potassium_slowing_constant_is_ten() {
    assert_eq!(slowing_factor(1.5, 6.0).unwrap(), 10.0);
}

// gradiometer

proptest! {
    #[test]
    fn phase_identity(f1 in 1.0..500.0f64, f2 in 1.0..500.0f64) {
        for i in 0..200 {
            let f = 0.5 * i as f64;
            let alt = (f / f2).atan() - (f / f1).atan();
            prop_assert!((phase_difference(f, f1, f2) - alt).abs() <= 1e-12);
        }
    }

    #[test]
    fn phase_extremum_at_geometric_mean(f1 in 5.0..200.0f64, f2 in 5.0..200.0f64) {
        prop_assume!((f1 - f2).abs() > 1.0);
        let step = 0.01;
        let (fbest, _) = (1..40_000)
            .map(|i| i as f64 * step)
            .map(|f| (f, phase_difference(f, f1, f2).abs()))
            .fold((0.0, -1.0), |b, x| if x.1 > b.1 { x } else { b });
        prop_assert!((fbest - (f1 * f2).sqrt()).abs() <= step);
    }

    #[test]
    fn subtract_is_linear(seed in any::<u64>(), a in -3.0..3.0f64, b in -3.0..3.0f64, phase in any::<bool>()) {
        let n = 512;
        let x = TwoChannelRecord::new(500.0, white(n, 1.0, seed), white(n, 1.0, seed ^ 1)).unwrap();
        let y = TwoChannelRecord::new(500.0, white(n, 1.0, seed ^ 2), white(n, 1.0, seed ^ 3)).unwrap();
        let comb = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(u, v)| a * u + b * v).collect::<Vec<_>>();
        let z = TwoChannelRecord::new(500.0, comb(&x.top_t, &y.top_t), comb(&x.bottom_t, &y.bottom_t)).unwrap();
        let cal = GradCalibration { amplitude_ratio: 0.97, f1_hz: 49.9, f2_hz: 68.8, tone_freq_hz: 10.0, tone_amp_t: 1.0 };
        let corr = Correction::from_phase_flag(phase);
        let sx = subtract_with(&x, &cal, corr).unwrap();
        let sy = subtract_with(&y, &cal, corr).unwrap();
        let sz = subtract_with(&z, &cal, corr).unwrap();
        let scale = sz.iter().chain(&sx).chain(&sy).fold(0.0f64, |m, v| m.max(v.abs())) * (a.abs() + b.abs()).max(1.0);
        for i in 0..n {
            prop_assert!((sz[i] - (a * sx[i] + b * sy[i])).abs() <= 1e-10 * scale);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn common_mode_cancels_in_band(
        seed in any::<u64>(),
        f1 in 20.0..120.0f64,
        f2 in 20.0..120.0f64,
        g2 in 0.8..1.2f64,
    ) {
        let cfg = SimConfig {
            duration_s: 8.192,
            seed,
            f1_hz: f1,
            f2_hz: f2,
            channel_gains: [1.0, g2],
            noise: NoiseModel { common_asd_t_sqrthz: 8e-15, ..NoiseModel::default() },
            ..SimConfig::default()
        };
        let rec = simulate_record(&cfg).unwrap();
        let diff = subtract_with(&rec, &true_cal(&cfg), Correction::FullTransfer).unwrap();
        let fs = cfg.sample_rate_hz;
        let ratio = band_rms(&diff, fs, 5.0, 200.0) / band_rms(&rec.top_t, fs, 5.0, 200.0);
        prop_assert!(ratio <= 0.03, "ratio {ratio}");
    }
}

// simulator

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn simulation_is_deterministic_and_finite(seed in any::<u64>(), corner in 0.0..5.0f64, grad in 0.0..1e-14f64) {
        let cfg = SimConfig {
            duration_s: 4.096,
            seed,
            noise: NoiseModel {
                common_asd_t_sqrthz: 8e-15,
                gradient_asd_t_sqrthz: grad,
                sensor_asd_t_sqrthz: [1e-15, 2e-15],
                one_over_f_corner_hz: corner,
            },
            ..SimConfig::default()
        };
        let a = simulate_record(&cfg).unwrap();
        let b = simulate_record(&cfg).unwrap();
        prop_assert!(a.top_t.iter().zip(&b.top_t).all(|(x, y)| x.to_bits() == y.to_bits()));
        prop_assert!(a.bottom_t.iter().zip(&b.bottom_t).all(|(x, y)| x.to_bits() == y.to_bits()));
        prop_assert!(a.top_t.iter().chain(&a.bottom_t).all(|v| v.is_finite()));
    }

    #[test]
    fn common_only_residual_below_1e3(seed in any::<u64>(), f1 in 20.0..120.0f64, f2 in 20.0..120.0f64) {
        let cfg = SimConfig {
            duration_s: 8.192,
            seed,
            f1_hz: f1,
            f2_hz: f2,
            noise: NoiseModel { common_asd_t_sqrthz: 8e-15, one_over_f_corner_hz: 2.0, ..NoiseModel::default() },
            ..SimConfig::default()
        };
        let rec = simulate_record(&cfg).unwrap();
        let diff = subtract_with(&rec, &true_cal(&cfg), Correction::FullTransfer).unwrap();
        let rms = |x: &[f64]| (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt();
        prop_assert!(rms(&diff) <= 1e-3 * rms(&rec.top_t), "{} vs {}", rms(&diff), rms(&rec.top_t));
    }

    #[test]
    fn tone_phases_follow_channel_model(seed in any::<u64>(), f1 in 30.0..100.0f64, f2 in 30.0..100.0f64) {
        let freqs = [5.0, 10.0, 20.0, 40.0, 60.0, 80.0, 120.0, 160.0, 200.0];
        let cfg = SimConfig {
            duration_s: 8.192,
            seed,
            f1_hz: f1,
            f2_hz: f2,
            tones: freqs.iter().enumerate().map(|(i, &f)| Tone { freq_hz: f, amp_t: 16e-12, phase_rad: i as f64 }).collect(),
            ..SimConfig::default()
        };
        let rec = simulate_record(&cfg).unwrap();
        for p in measure_phase_points(&rec, &freqs).unwrap() {
            let want = phase_difference(p.freq_hz, f1, f2);
            prop_assert!((p.phase_rad - want).abs() <= 0.002, "{} Hz: {} vs {want}", p.freq_hz, p.phase_rad);
        }
    }
}

#[test]
fn common_floor_rises_below_corner() {
    let cfg = SimConfig {
        duration_s: 60.0,
        f1_hz: 1e6,
        f2_hz: 1e6,
        tones: vec![],
        noise: NoiseModel {
            common_asd_t_sqrthz: 8e-15,
            one_over_f_corner_hz: 4.0,
            ..NoiseModel::default()
        },
        ..SimConfig::default()
    };
    let rec = simulate_record(&cfg).unwrap();
    let est = welch_asd(&rec.top_t, cfg.sample_rate_hz, 4096, 0.5).unwrap();
    let white_floor = band_floor(&est, 20.0, 200.0).unwrap();
    assert!((white_floor / 8e-15 - 1.0).abs() < 0.05, "{white_floor}");
    // √(4/1) = 2 at 1 Hz
    let fine = welch_asd(&rec.top_t, cfg.sample_rate_hz, 16384, 0.5).unwrap();
    let low = band_floor(&fine, 0.8, 1.25).unwrap();
    assert!((low / 16e-15 - 1.0).abs() < 0.25, "{low}");
}

// noise-psd

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn welch_parseval(seed in any::<u64>(), sigma in 1e-16..1e-12f64) {
        let x = white(1 << 16, sigma, seed);
        let est = welch_asd(&x, 1000.0, 4096, 0.5).unwrap();
        let var = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        let ratio = est.total_power() / var;
        prop_assert!((ratio - 1.0).abs() < 0.01, "{ratio}");
    }

    #[test]
    fn asd_scales_linearly(seed in any::<u64>(), k in 1e-3..1e3f64) {
        let x = white(1 << 13, 1.0, seed);
        let y: Vec<f64> = x.iter().map(|v| k * v).collect();
        let a = welch_asd(&x, 1000.0, 1024, 0.5).unwrap();
        let b = welch_asd(&y, 1000.0, 1024, 0.5).unwrap();
        for (u, v) in a.asd_t_sqrthz.iter().zip(&b.asd_t_sqrthz) {
            prop_assert!((v - k * u).abs() <= 1e-12 * k * u.abs().max(f64::MIN_POSITIVE));
        }
    }

    #[test]
    fn band_floor_ignores_tones(seed in any::<u64>(), f in 12.0..38.0f64, amp in 1e-13..1e-11f64) {
        let fs = 1000.0;
        let x = white(1 << 16, 1e-15 * (fs / 2.0f64).sqrt(), seed);
        let y: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, v)| v + amp * (std::f64::consts::TAU * f * i as f64 / fs).sin())
            .collect();
        let a = band_floor(&welch_asd(&x, fs, 4096, 0.5).unwrap(), 10.0, 40.0).unwrap();
        let b = band_floor(&welch_asd(&y, fs, 4096, 0.5).unwrap(), 10.0, 40.0).unwrap();
        prop_assert!((b / a - 1.0).abs() < 0.05, "{a} vs {b}");
    }
}

// nmr

fn sample() -> impl Strategy<Value = SampleSpec> {
    (
        1e-9..1e-5f64,
        1e26..1e29f64,
        0.01..1.0f64,
        0.1..5.0f64,
        0.02..0.5f64,
    )
        .prop_map(|(v, rho, ab, b, d)| SampleSpec {
            volume_m3: v,
            spin_density_per_m3: rho,
            natural_abundance: ab,
            prepol_field_t: b,
            distance_m: d,
            ..SampleSpec::water_protons()
        })
}

proptest! {
    #[test]
    fn nmr_linear_in_spins_abundance_and_field(s in sample(), k in 0.1..0.9f64) {
        let base = dipole_field(&s).unwrap().field_t;
        let more = SampleSpec { spin_density_per_m3: s.spin_density_per_m3 * k, ..s };
        prop_assert!(rel_close(dipole_field(&more).unwrap().field_t, k * base, 1e-9, base));
        let less = SampleSpec { natural_abundance: s.natural_abundance * k, ..s };
        prop_assert!(rel_close(dipole_field(&less).unwrap().field_t, k * base, 1e-9, base));
        let lower = SampleSpec { prepol_field_t: s.prepol_field_t * k, ..s };
        prop_assert!(rel_close(dipole_field(&lower).unwrap().field_t, k * base, 1e-9, base));
    }

    #[test]
    fn nmr_inverse_cube(s in sample()) {
        let near = dipole_field(&s).unwrap().field_t;
        let far = dipole_field(&SampleSpec { distance_m: 2.0 * s.distance_m, ..s }).unwrap().field_t;
        prop_assert_eq!(far * 8.0, near);
    }

    #[test]
    fn polarization_below_one(gamma in -3e8..3e8f64, b in 0.0..100.0f64, t in 0.01..1000.0f64) {
        let p = thermal_polarization(gamma, b, t).unwrap();
        prop_assert!(p.abs() < 1.0);
    }
}
