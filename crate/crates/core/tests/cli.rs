//! Black-box tests of the `serfkit` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serfkit::cli::manifest::{config_hash, sha256_hex};
use serfkit::io;
use serfkit::TwoChannelRecord;

fn serfkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_serfkit"))
        .args(args)
        .env_remove("SERFKIT_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn manifest_of(out: &Path) -> serde_json::Value {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    json(&PathBuf::from(s))
}

#[test]
fn gas_solve_example() {
    let o = serfkit(&["gas-solve", "--shift-ghz", "1.916", "--width-ghz", "31.878"]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["he_amagat"].as_f64().unwrap() - 1.86).abs() < 1e-9);
    assert!((v["n2_amagat"].as_f64().unwrap() - 0.34).abs() < 1e-9);
    // manifest on stderr when writing to stdout
    let m: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(m["command"], "gas-solve");
    assert_eq!(m["outputs"][0]["sha256"], sha256_hex(&o.stdout));
}

#[test]
fn exit_codes() {
    assert_eq!(serfkit(&["gas-solve", "--bogus"]).status.code(), Some(64));
    assert_eq!(serfkit(&["frobnicate"]).status.code(), Some(64));
    assert_eq!(serfkit(&["--help"]).status.code(), Some(0));
    // negative He density
    let o = serfkit(&["gas-solve", "--shift-ghz", "20", "--width-ghz", "10"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(
        serfkit(&["fit-response", "--in", "/no/such/file.csv"])
            .status
            .code(),
        Some(2)
    );

    // linewidths that fall with frequency give a negative T_SE
    let dir = tempfile::tempdir().unwrap();
    let pts = dir.path().join("pts.csv");
    std::fs::write(&pts, "resonance_hz,hwhm_hz\n20,30\n40,25\n80,15\n160,11\n").unwrap();
    let o = serfkit(&["fit-serf", "--in", p(&pts)]);
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn subtract_identical_channels_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let x: Vec<f64> = (0..1000)
        .map(|i| (i as f64 * 0.37).sin() * 1e-12 + 3e-13)
        .collect();
    let rec = TwoChannelRecord::new(1000.0, x.clone(), x).unwrap();
    let rec_path = dir.path().join("rec.csv");
    std::fs::write(&rec_path, io::record_csv(&rec)).unwrap();
    let cal = dir.path().join("cal.json");
    std::fs::write(
        &cal,
        r#"{"amplitude_ratio":1,"f1_hz":50,"f2_hz":50,"tone_freq_hz":10,"tone_amp_t":1e-12}"#,
    )
    .unwrap();
    let out = dir.path().join("diff.csv");
    let o = serfkit(&[
        "subtract",
        "--in",
        p(&rec_path),
        "--cal",
        p(&cal),
        "--phase",
        "--out",
        p(&out),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let (fs, diff) = io::read_series(&out).unwrap();
    assert_eq!(fs, 1000.0);
    assert_eq!(diff.len(), 1000);
    assert!(diff.iter().all(|v| *v == 0.0));
}

#[test]
fn simulate_calibrate_subtract_psd_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.json");
    std::fs::write(
        &cfg,
        r#"{"duration_s": 16.384, "tones": [
            {"freq_hz": 10, "amp_t": 1.6e-11},
            {"freq_hz": 30, "amp_t": 1.6e-11},
            {"freq_hz": 60, "amp_t": 1.6e-11},
            {"freq_hz": 120, "amp_t": 1.6e-11}]}"#,
    )
    .unwrap();
    let rec = dir.path().join("rec.csv");
    let o = serfkit(&[
        "simulate",
        "--config",
        p(&cfg),
        "--seed",
        "3",
        "--out",
        p(&rec),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );

    let m = manifest_of(&rec);
    assert_eq!(m["seed"], 3);
    assert_eq!(
        m["inputs"][0]["sha256"],
        sha256_hex(&std::fs::read(&cfg).unwrap())
    );
    assert_eq!(
        m["outputs"][0]["sha256"],
        sha256_hex(&std::fs::read(&rec).unwrap())
    );
    assert_eq!(m["config_sha256"], config_hash(&m["config"]));

    let rec2 = dir.path().join("rec2.csv");
    serfkit(&[
        "simulate",
        "--config",
        p(&cfg),
        "--seed",
        "3",
        "--out",
        p(&rec2),
    ]);
    assert_eq!(std::fs::read(&rec).unwrap(), std::fs::read(&rec2).unwrap());

    let cal = dir.path().join("cal.json");
    let o = serfkit(&[
        "calibrate",
        "--in",
        p(&rec),
        "--tone-hz",
        "10",
        "--tone-amp-t",
        "1.6e-11",
        "--phase-tones",
        "10,30,60,120",
        "--out",
        p(&cal),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let c = json(&cal);
    assert!((c["f1_hz"].as_f64().unwrap() - 49.9).abs() < 0.5, "{c}");
    assert!((c["f2_hz"].as_f64().unwrap() - 68.8).abs() < 0.5, "{c}");

    let diff = dir.path().join("diff.csv");
    let o = serfkit(&[
        "subtract",
        "--in",
        p(&rec),
        "--cal",
        p(&cal),
        "--out",
        p(&diff),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert_eq!(manifest_of(&diff)["inputs"].as_array().unwrap().len(), 2);

    let asd = dir.path().join("asd.csv");
    let o = serfkit(&[
        "psd",
        "--in",
        p(&diff),
        "--segment-len",
        "2048",
        "--overlap",
        "0.5",
        "--band",
        "20:25",
        "--out",
        p(&asd),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let band = json(&dir.path().join("asd.csv.band.json"));
    let floor = band["floor_t_sqrthz"].as_f64().unwrap();
    assert!(floor > 0.8e-15 && floor < 2e-15, "{floor}");
    assert_eq!(manifest_of(&asd)["outputs"].as_array().unwrap().len(), 2);
}

#[test]
fn fit_commands_on_generated_files() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = dir.path().join("abs.csv");
    let mut text = String::from("freq_hz,value\n");
    let (c, g) = (389.286058716e12 + 1.916e9, 31.878e9);
    for i in 0..241 {
        let f = c + (i as f64 - 120.0) * 1e9;
        let v = 1.0 - 0.5 * g * g / ((f - c).powi(2) + g * g);
        text += &format!("{},{}\n", io::fmt_f64(f), io::fmt_f64(v));
    }
    std::fs::write(&sweep, text).unwrap();
    let fit = dir.path().join("abs.json");
    let o = serfkit(&["fit-absorption", "--in", p(&sweep), "--out", p(&fit)]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let o = serfkit(&["gas-solve", "--fit", p(&fit)]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(
        (v["he_amagat"].as_f64().unwrap() - 1.86).abs() < 1e-3,
        "{v}"
    );
    assert!(
        (v["n2_amagat"].as_f64().unwrap() - 0.34).abs() < 1e-3,
        "{v}"
    );

    let pts = dir.path().join("phase.csv");
    let mut text = String::from("freq_hz,phase_rad\n");
    for f in [5.0, 10.0, 20.0, 40.0, 80.0, 160.0] {
        let ph = serfkit::gradiometer::phase_difference(f, 49.9, 68.8);
        text += &format!("{},{}\n", io::fmt_f64(f), io::fmt_f64(ph));
    }
    std::fs::write(&pts, text).unwrap();
    let o = serfkit(&["phase-fit", "--in", p(&pts)]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["f1_hz"].as_f64().unwrap() - 49.9).abs() < 1e-6, "{v}");
    assert!(
        (v["extremum_freq_hz"].as_f64().unwrap() - 58.6).abs() < 0.1,
        "{v}"
    );
}

#[test]
fn nmr_estimate_and_isotope_table() {
    let o = serfkit(&["nmr-estimate"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["polarization"].as_f64().unwrap() - 6.81e-6).abs() < 1e-8);
    assert!((v["field_t"].as_f64().unwrap() / 2.574e-10 - 1.0).abs() < 0.02);

    let o = serfkit(&["nmr-estimate", "--isotope", "19F"]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let f: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(f["field_t"].as_f64().unwrap() < v["field_t"].as_f64().unwrap());

    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("isotopes.toml"),
        "version = 9\n[[isotope]]\nname = \"Xx\"\ngyromag_rad_s_t = 5.35e8\nspin = 0.5\nnatural_abundance = 1.0\n",
    )
    .unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_serfkit"))
        .args(["nmr-estimate", "--isotope", "xx"])
        .env("SERFKIT_DATA_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let x: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let ratio = x["field_t"].as_f64().unwrap() / v["field_t"].as_f64().unwrap();
    // doubled gamma: twice the polarisation and twice the moment per spin
    assert!((ratio - 4.0).abs() < 1e-6, "{ratio}");
    let o = serfkit(&["nmr-estimate", "--isotope", "xx"]);
    assert_eq!(o.status.code(), Some(2));
}
