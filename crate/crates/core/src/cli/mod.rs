//! `serfkit` command-line front end.
//!
//! Exit codes: 0 success, 2 validation or I/O error, 3 fit failure, 64 usage
//! error. Every output file gets a `<out>.manifest.json` sibling; when the
//! result goes to stdout the manifest goes to stderr.

pub mod demo;
pub mod manifest;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::cellchem::{self, GasCoefficients};
use crate::error::{Error, Result};
use crate::gradiometer::{self, Correction, GradCalibration};
use crate::io::{self, ser_f64_sentinel, to_json_string};
use crate::lineshape::{self, LorentzianFit};
use crate::nmr::{self, IsotopeTable, SampleSpec};
use crate::psd;
use crate::record::TwoChannelRecord;
use crate::serf::{self, IntrinsicWidth};
use crate::simulator::{self, SimConfig};
use manifest::RunManifest;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_FIT: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(
    name = "serfkit",
    version,
    about = "SERF magnetometer characterization and calibration"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Output {
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic two-channel record (CSV t_s,top_t,bottom_t).
    Simulate {
        /// Simulator config JSON; built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: Output,
    },
    /// Fit a Lorentzian to an absorption sweep (CSV freq_hz,value).
    FitAbsorption {
        #[arg(long = "in")]
        input: PathBuf,
        /// Gas coefficient JSON (for the reference frequency).
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        out: Output,
    },
    /// Solve for He and N2 densities from pressure shift and width.
    GasSolve {
        #[arg(
            long,
            allow_hyphen_values = true,
            requires = "width_ghz",
            conflicts_with = "fit"
        )]
        shift_ghz: Option<f64>,
        /// Pressure-broadened HWHM (GHz).
        #[arg(long, requires = "shift_ghz")]
        width_ghz: Option<f64>,
        /// Output of `fit-absorption`.
        #[arg(long, required_unless_present = "shift_ghz")]
        fit: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        out: Output,
    },
    /// Fit a magnetometer response curve (CSV freq_hz,value) for its linewidth.
    FitResponse {
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        out: Output,
    },
    /// Fit T_SE to linewidths (CSV resonance_hz,hwhm_hz[,weight]).
    FitSerf {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = serf::POTASSIUM_SPIN)]
        spin: f64,
        #[arg(long, default_value_t = serf::DEFAULT_SLOWING_Q)]
        q: f64,
        /// Hold the zero-field HWHM fixed (Hz) instead of fitting it.
        #[arg(long)]
        intrinsic_hz: Option<f64>,
        #[arg(long, default_value_t = serf::DEFAULT_VBAR_M_S)]
        vbar_m_s: f64,
        #[arg(long, default_value_t = serf::DEFAULT_SIGMA_SE_CM2)]
        sigma_se_cm2: f64,
        #[command(flatten)]
        out: Output,
    },
    /// Welch amplitude spectral density of a record channel or a series.
    Psd {
        /// Record CSV (t_s,top_t,bottom_t) or series CSV (t_s,diff_t).
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Channel::Top)]
        channel: Channel,
        #[arg(long, default_value_t = psd::DEFAULT_SEGMENT_LEN)]
        segment_len: usize,
        #[arg(long, default_value_t = psd::DEFAULT_OVERLAP)]
        overlap: f64,
        /// Report the tone-free median floor in `lo:hi` Hz.
        #[arg(long, value_parser = parse_band)]
        band: Option<(f64, f64)>,
        /// Multiply the ASD by this tesla calibration factor.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// Where to write the band summary JSON; stdout when omitted.
        #[arg(long, requires = "band")]
        summary: Option<PathBuf>,
        #[command(flatten)]
        out: Output,
    },
    /// Calibrate amplitude ratio and channel bandwidths from a tone record.
    Calibrate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        tone_hz: f64,
        #[arg(long)]
        tone_amp_t: f64,
        /// Comma-separated tone frequencies for the phase fit.
        #[arg(long, value_delimiter = ',', required_unless_present_all = ["f1_hz", "f2_hz"])]
        phase_tones: Vec<f64>,
        #[arg(long, requires = "f2_hz")]
        f1_hz: Option<f64>,
        #[arg(long, requires = "f1_hz")]
        f2_hz: Option<f64>,
        #[command(flatten)]
        out: Output,
    },
    /// Gradiometric subtraction top − C(f)·bottom (CSV t_s,diff_t).
    Subtract {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        cal: PathBuf,
        /// Apply the frequency-dependent phase correction (default).
        #[arg(long, overrides_with = "no_phase")]
        phase: bool,
        #[arg(long, overrides_with = "phase")]
        no_phase: bool,
        /// Match the full transfer ratio H1/H2 instead of a constant ratio.
        #[arg(long, conflicts_with = "no_phase")]
        full_transfer: bool,
        #[command(flatten)]
        out: Output,
    },
    /// Fit channel bandwidths to phase points (CSV freq_hz,phase_rad).
    PhaseFit {
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        out: Output,
    },
    /// Thermal-polarisation NMR field estimate from a sample JSON.
    NmrEstimate {
        /// Sample spec JSON; 200 uL water protons when omitted.
        #[arg(long = "in")]
        input: Option<PathBuf>,
        /// Take gamma, spin and abundance from the isotope table.
        #[arg(long)]
        isotope: Option<String>,
        #[command(flatten)]
        out: Output,
    },
    /// Run the full chain on seeded synthetic data and print a summary table.
    DemoPaper {
        #[arg(long, default_value_t = demo::DEFAULT_SEED)]
        seed: u64,
        /// Directory for report.json and report.txt.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Channel {
    Top,
    Bottom,
}

fn parse_band(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or("expected lo:hi")?;
    let lo: f64 = lo
        .trim()
        .parse()
        .map_err(|e| format!("bad lower edge: {e}"))?;
    let hi: f64 = hi
        .trim()
        .parse()
        .map_err(|e| format!("bad upper edge: {e}"))?;
    if !(lo >= 0.0 && hi > lo) {
        return Err(format!("need 0 <= lo < hi, got {lo}:{hi}"));
    }
    Ok((lo, hi))
}

pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match run(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::FitFailure { .. } => EXIT_FIT,
        _ => EXIT_VALIDATION,
    }
}

fn json_bytes<T: Serialize + ?Sized>(v: &T) -> Result<Vec<u8>> {
    Ok(to_json_string(v)?.into_bytes())
}

fn to_value<T: Serialize>(v: &T) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(v)?)
}

fn load_coeffs(m: &mut RunManifest, path: Option<&Path>) -> Result<GasCoefficients> {
    match path {
        Some(p) => {
            m.input(p)?;
            let c: GasCoefficients = io::read_json(p)?;
            c.validate()?;
            Ok(c)
        }
        None => Ok(GasCoefficients::default()),
    }
}

#[derive(Serialize)]
struct FitOutput<'a> {
    #[serde(flatten)]
    fit: &'a LorentzianFit,
    std_errors: [f64; 4],
}

#[derive(Serialize)]
struct AbsorptionOutput<'a> {
    fit: FitOutput<'a>,
    shift_ghz: f64,
    width_ghz: f64,
}

#[derive(Serialize, serde::Deserialize)]
struct ShiftWidth {
    shift_ghz: f64,
    width_ghz: f64,
}

#[derive(Serialize)]
struct ResponseOutput<'a> {
    linewidth_hz: f64,
    fit: FitOutput<'a>,
}

#[derive(Serialize)]
struct SerfOutput {
    t_se_s: f64,
    intrinsic_hwhm_hz: f64,
    intrinsic_fixed: bool,
    covariance: [[f64; 2]; 2],
    number_density_cm3: f64,
}

#[derive(Serialize)]
struct PhaseFitOutput {
    f1_hz: f64,
    f2_hz: f64,
    covariance: [[f64; 2]; 2],
    residual_rms: f64,
    extremum_freq_hz: f64,
    extremum_phase_rad: f64,
}

impl From<&gradiometer::PhaseFit> for PhaseFitOutput {
    fn from(f: &gradiometer::PhaseFit) -> Self {
        let (fe, pe) = f.extremum();
        Self {
            f1_hz: f.f1_hz,
            f2_hz: f.f2_hz,
            covariance: f.covariance,
            residual_rms: f.residual_rms,
            extremum_freq_hz: fe,
            extremum_phase_rad: pe,
        }
    }
}

#[derive(Serialize)]
struct BandSummary {
    band_lo_hz: f64,
    band_hi_hz: f64,
    #[serde(serialize_with = "ser_f64_sentinel")]
    floor_t_sqrthz: f64,
    n_averages: usize,
    bin_width_hz: f64,
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate { config, seed, out } => {
            let mut m = RunManifest::start("simulate");
            let mut cfg = match &config {
                Some(p) => {
                    m.input(p)?;
                    io::read_json::<SimConfig>(p)?
                }
                None => SimConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            m.seed = Some(cfg.seed);
            m.set_config(to_value(&cfg)?);
            let rec = simulator::simulate_record(&cfg)?;
            m.emit(out.out.as_deref(), io::record_csv(&rec).as_bytes())
        }

        Command::FitAbsorption { input, config, out } => {
            let mut m = RunManifest::start("fit-absorption");
            m.input(&input)?;
            let coeffs = load_coeffs(&mut m, config.as_deref())?;
            m.set_config(to_value(&coeffs)?);
            let sweep = io::read_sweep(&input)?;
            let fit = lineshape::fit_lorentzian(&sweep, None)?;
            let res = AbsorptionOutput {
                shift_ghz: cellchem::shift_from_center(fit.center_hz, &coeffs),
                width_ghz: fit.hwhm_hz * 1e-9,
                fit: FitOutput {
                    std_errors: fit.std_errors(),
                    fit: &fit,
                },
            };
            m.emit(out.out.as_deref(), &json_bytes(&res)?)
        }

        Command::GasSolve {
            shift_ghz,
            width_ghz,
            fit,
            config,
            out,
        } => {
            let mut m = RunManifest::start("gas-solve");
            let coeffs = load_coeffs(&mut m, config.as_deref())?;
            let sw = match (shift_ghz, width_ghz, &fit) {
                (Some(shift_ghz), Some(width_ghz), _) => ShiftWidth {
                    shift_ghz,
                    width_ghz,
                },
                (_, _, Some(p)) => {
                    m.input(p)?;
                    io::read_json::<ShiftWidth>(p)?
                }
                _ => return Err(Error::param("give --shift-ghz and --width-ghz, or --fit")),
            };
            m.set_config(json!({ "coefficients": to_value(&coeffs)?, "input": to_value(&sw)? }));
            let comp = cellchem::solve_composition(sw.shift_ghz, sw.width_ghz, &coeffs)?;
            m.emit(out.out.as_deref(), &json_bytes(&comp)?)
        }

        Command::FitResponse { input, out } => {
            let mut m = RunManifest::start("fit-response");
            m.input(&input)?;
            m.set_config(json!({}));
            let fit = lineshape::fit_response_curve(&io::read_sweep(&input)?)?;
            let res = ResponseOutput {
                linewidth_hz: fit.hwhm_hz,
                fit: FitOutput {
                    std_errors: fit.std_errors(),
                    fit: &fit,
                },
            };
            m.emit(out.out.as_deref(), &json_bytes(&res)?)
        }

        Command::FitSerf {
            input,
            spin,
            q,
            intrinsic_hz,
            vbar_m_s,
            sigma_se_cm2,
            out,
        } => {
            let mut m = RunManifest::start("fit-serf");
            m.input(&input)?;
            m.set_config(json!({
                "spin": spin,
                "q": q,
                "intrinsic_hz": intrinsic_hz,
                "vbar_m_s": vbar_m_s,
                "sigma_se_cm2": sigma_se_cm2,
            }));
            let points = io::read_linewidth_points(&input)?;
            let mode = intrinsic_hz.map_or(IntrinsicWidth::Fit, IntrinsicWidth::Fixed);
            let fit = serf::fit_tse(&points, spin, q, mode)?;
            let res = SerfOutput {
                t_se_s: fit.t_se_s,
                intrinsic_hwhm_hz: fit.intrinsic_hwhm_hz,
                intrinsic_fixed: intrinsic_hz.is_some(),
                covariance: fit.covariance,
                number_density_cm3: serf::number_density(fit.t_se_s, vbar_m_s, sigma_se_cm2)?,
            };
            m.emit(out.out.as_deref(), &json_bytes(&res)?)
        }

        Command::Psd {
            input,
            channel,
            segment_len,
            overlap,
            band,
            scale,
            summary,
            out,
        } => {
            let mut m = RunManifest::start("psd");
            m.input(&input)?;
            m.set_config(json!({
                "channel": channel,
                "segment_len": segment_len,
                "overlap": overlap,
                "band": band,
                "scale": scale,
            }));
            if !(scale.is_finite() && scale > 0.0) {
                return Err(Error::param(format!("--scale must be > 0, got {scale}")));
            }
            let (fs, series) = read_any_series(&input, channel)?;
            let est = psd::welch_asd(&series, fs, segment_len, overlap)?.scaled(scale);
            let band_summary = match band {
                Some((lo, hi)) => Some(BandSummary {
                    band_lo_hz: lo,
                    band_hi_hz: hi,
                    floor_t_sqrthz: psd::band_floor(&est, lo, hi)?,
                    n_averages: est.n_averages,
                    bin_width_hz: est.bin_width_hz(),
                }),
                None => None,
            };
            match (band_summary, out.out) {
                (Some(b), Some(path)) => {
                    let files = [
                        (path.clone(), io::psd_csv(&est).into_bytes()),
                        (
                            summary.clone().unwrap_or_else(|| summary_path(&path)),
                            json_bytes(&b)?,
                        ),
                    ];
                    m.emit_many(&files, &manifest::manifest_path(&path))
                }
                (Some(b), None) => m.emit(summary.as_deref(), &json_bytes(&b)?),
                (None, path) => m.emit(path.as_deref(), io::psd_csv(&est).as_bytes()),
            }
        }

        Command::Calibrate {
            input,
            tone_hz,
            tone_amp_t,
            phase_tones,
            f1_hz,
            f2_hz,
            out,
        } => {
            let mut m = RunManifest::start("calibrate");
            m.input(&input)?;
            m.set_config(json!({
                "tone_hz": tone_hz,
                "tone_amp_t": tone_amp_t,
                "phase_tones": phase_tones,
                "f1_hz": f1_hz,
                "f2_hz": f2_hz,
            }));
            let rec = io::read_record(&input)?;
            let ratio = gradiometer::amplitude_ratio(&rec, tone_hz)?;
            let (f1, f2) = match (f1_hz, f2_hz) {
                (Some(a), Some(b)) => (a, b),
                _ => {
                    let pts = gradiometer::measure_phase_points(&rec, &phase_tones)?;
                    let fit = gradiometer::fit_phase_model(&pts)?;
                    (fit.f1_hz, fit.f2_hz)
                }
            };
            let cal = GradCalibration {
                amplitude_ratio: ratio,
                f1_hz: f1,
                f2_hz: f2,
                tone_freq_hz: tone_hz,
                tone_amp_t,
            };
            cal.validate()?;
            m.emit(out.out.as_deref(), &json_bytes(&cal)?)
        }

        Command::Subtract {
            input,
            cal,
            phase: _,
            no_phase,
            full_transfer,
            out,
        } => {
            let mut m = RunManifest::start("subtract");
            m.input(&input)?;
            m.input(&cal)?;
            let correction = if full_transfer {
                Correction::FullTransfer
            } else {
                Correction::from_phase_flag(!no_phase)
            };
            m.set_config(json!({ "correction": format!("{correction:?}") }));
            let rec = io::read_record(&input)?;
            let cal: GradCalibration = io::read_json(&cal)?;
            let diff = gradiometer::subtract_with(&rec, &cal, correction)?;
            m.emit(
                out.out.as_deref(),
                io::series_csv(rec.sample_rate_hz, &diff).as_bytes(),
            )
        }

        Command::PhaseFit { input, out } => {
            let mut m = RunManifest::start("phase-fit");
            m.input(&input)?;
            m.set_config(json!({}));
            let fit = gradiometer::fit_phase_model(&io::read_phase_points(&input)?)?;
            m.emit(
                out.out.as_deref(),
                &json_bytes(&PhaseFitOutput::from(&fit))?,
            )
        }

        Command::NmrEstimate {
            input,
            isotope,
            out,
        } => {
            let mut m = RunManifest::start("nmr-estimate");
            let mut spec = match &input {
                Some(p) => {
                    m.input(p)?;
                    io::read_json::<SampleSpec>(p)?
                }
                None => SampleSpec::water_protons(),
            };
            if let Some(name) = &isotope {
                let table = IsotopeTable::from_env()?;
                let iso = table
                    .get(name)
                    .ok_or_else(|| Error::Config(format!("isotope `{name}` not in table")))?;
                spec.gyromag_rad_s_t = iso.gyromag_rad_s_t;
                spec.spin = iso.spin;
                spec.natural_abundance = iso.natural_abundance;
            }
            m.set_config(to_value(&spec)?);
            m.emit(out.out.as_deref(), &json_bytes(&nmr::dipole_field(&spec)?)?)
        }

        Command::DemoPaper { seed, out } => {
            let mut m = RunManifest::start("demo-paper");
            m.seed = Some(seed);
            m.set_config(json!({ "seed": seed }));
            let report = demo::run(seed)?;
            let table = demo::table(&report);
            print!("{table}");
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir)?;
                    let files = [
                        (dir.join("report.json"), json_bytes(&report)?),
                        (dir.join("report.txt"), table.into_bytes()),
                    ];
                    m.emit_many(&files, &dir.join("report.manifest.json"))
                }
                None => m.emit(None, &json_bytes(&report)?),
            }
        }
    }
}

fn summary_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".band.json");
    PathBuf::from(s)
}

/// Reads either a two-channel record or a single series, by header.
fn read_any_series(path: &Path, channel: Channel) -> Result<(f64, Vec<f64>)> {
    let text = std::fs::read_to_string(path)?;
    let header = text.lines().next().unwrap_or("").trim();
    if header.starts_with("t_s,top_t") {
        let TwoChannelRecord {
            sample_rate_hz,
            top_t,
            bottom_t,
        } = io::read_record(path)?;
        Ok(match channel {
            Channel::Top => (sample_rate_hz, top_t),
            Channel::Bottom => (sample_rate_hz, bottom_t),
        })
    } else {
        io::read_series(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_parsing() {
        assert_eq!(parse_band("20:30"), Ok((20.0, 30.0)));
        assert!(parse_band("30:20").is_err());
        assert!(parse_band("20").is_err());
    }

    #[test]
    fn usage_errors_exit_64() {
        assert_eq!(dispatch(["serfkit", "gas-solve", "--bogus"]), EXIT_USAGE);
        assert_eq!(dispatch(["serfkit", "no-such-command"]), EXIT_USAGE);
        assert_eq!(dispatch(["serfkit", "--version"]), EXIT_OK);
    }

    #[test]
    fn fit_failure_maps_to_3() {
        let e = Error::FitFailure {
            reason: "x".into(),
            iterations: 1,
            best_params: vec![],
        };
        assert_eq!(exit_code(&e), EXIT_FIT);
        assert_eq!(exit_code(&Error::param("x")), EXIT_VALIDATION);
    }
}
