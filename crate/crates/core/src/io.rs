//! CSV and JSON file formats.
//!
//! Every floating-point number is written with 17 significant digits
//! (`{:.16e}`), which round-trips any `f64` exactly. Files are written to a
//! temporary sibling and renamed into place.

use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gradiometer::PhasePoint;
use crate::lineshape::FrequencySweep;
use crate::psd::PsdEstimate;
use crate::record::TwoChannelRecord;
use crate::serf::LinewidthPoint;

pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Pretty JSON formatter that prints floats with 17 significant digits.
struct Digits17<'a>(serde_json::ser::PrettyFormatter<'a>);

impl serde_json::ser::Formatter for Digits17<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(fmt_f64(value).as_bytes())
    }
    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(
        &mut buf,
        Digits17(serde_json::ser::PrettyFormatter::new()),
    );
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

/// Serialises non-finite values as the strings `"+inf"`, `"-inf"`, `"nan"`.
pub fn ser_f64_sentinel<S: serde::Serializer>(
    v: &f64,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if v.is_nan() {
        s.serialize_str("nan")
    } else if *v > 0.0 {
        s.serialize_str("+inf")
    } else {
        s.serialize_str("-inf")
    }
}

pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn read_columns(path: &Path, expected: &[&str], optional: usize) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let required = expected.len() - optional;
    let ok = header.len() >= required
        && header.len() <= expected.len()
        && header.iter().zip(expected).all(|(h, e)| h == e);
    if !ok {
        return Err(Error::data(format!(
            "{}: expected header `{}`, found `{}`",
            path.display(),
            expected.join(","),
            header.join(",")
        )));
    }
    let ncols = header.len();
    let mut cols = vec![Vec::new(); ncols];
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != ncols {
            return Err(Error::data(format!(
                "{}: row {} has {} fields, expected {ncols}",
                path.display(),
                line + 2,
                rec.len()
            )));
        }
        for (c, field) in cols.iter_mut().zip(rec.iter()) {
            let v: f64 = field.parse().map_err(|_| {
                Error::data(format!(
                    "{}: row {}: bad number `{field}`",
                    path.display(),
                    line + 2
                ))
            })?;
            c.push(v);
        }
    }
    Ok(cols)
}

/// `freq_hz,value`
pub fn read_sweep(path: &Path) -> Result<FrequencySweep> {
    let mut cols = read_columns(path, &["freq_hz", "value"], 0)?;
    let values = cols.pop().unwrap();
    let freqs = cols.pop().unwrap();
    FrequencySweep::new(freqs, values)
}

pub fn sweep_csv(sweep: &FrequencySweep) -> String {
    let mut s = String::from("freq_hz,value\n");
    for (f, v) in sweep.freqs_hz().iter().zip(sweep.values()) {
        s.push_str(&format!("{},{}\n", fmt_f64(*f), fmt_f64(*v)));
    }
    s
}

/// `t_s,top_t,bottom_t`; the sample rate comes from the time column.
pub fn read_record(path: &Path) -> Result<TwoChannelRecord> {
    let cols = read_columns(path, &["t_s", "top_t", "bottom_t"], 0)?;
    let t = &cols[0];
    if t.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{}: need at least 2 samples",
            path.display()
        )));
    }
    let span = t[t.len() - 1] - t[0];
    if !(span > 0.0) {
        return Err(Error::data("time column must be increasing"));
    }
    let mut fs = (t.len() - 1) as f64 / span;
    let nearest = fs.round();
    if (fs - nearest).abs() <= 1e-9 * fs {
        fs = nearest;
    }
    TwoChannelRecord::new(fs, cols[1].clone(), cols[2].clone())
}

pub fn record_csv(rec: &TwoChannelRecord) -> String {
    let mut s = String::with_capacity(rec.len() * 72);
    s.push_str("t_s,top_t,bottom_t\n");
    for i in 0..rec.len() {
        s.push_str(&fmt_f64(rec.time_s(i)));
        s.push(',');
        s.push_str(&fmt_f64(rec.top_t[i]));
        s.push(',');
        s.push_str(&fmt_f64(rec.bottom_t[i]));
        s.push('\n');
    }
    s
}

/// `t_s,diff_t`
pub fn series_csv(sample_rate_hz: f64, series: &[f64]) -> String {
    let mut s = String::with_capacity(series.len() * 48);
    s.push_str("t_s,diff_t\n");
    for (i, v) in series.iter().enumerate() {
        s.push_str(&fmt_f64(i as f64 / sample_rate_hz));
        s.push(',');
        s.push_str(&fmt_f64(*v));
        s.push('\n');
    }
    s
}

pub fn read_series(path: &Path) -> Result<(f64, Vec<f64>)> {
    let mut cols = read_columns(path, &["t_s", "diff_t"], 0)?;
    let v = cols.pop().unwrap();
    let t = cols.pop().unwrap();
    if t.len() < 2 {
        return Err(Error::InsufficientData("need at least 2 samples".into()));
    }
    Ok(((t.len() - 1) as f64 / (t[t.len() - 1] - t[0]), v))
}

/// `freq_hz,asd_t_sqrthz`
pub fn psd_csv(psd: &PsdEstimate) -> String {
    let mut s = String::from("freq_hz,asd_t_sqrthz\n");
    for (f, a) in psd.freqs_hz.iter().zip(&psd.asd_t_sqrthz) {
        s.push_str(&format!("{},{}\n", fmt_f64(*f), fmt_f64(*a)));
    }
    s
}

/// `resonance_hz,hwhm_hz[,weight]`
pub fn read_linewidth_points(path: &Path) -> Result<Vec<LinewidthPoint>> {
    let cols = read_columns(path, &["resonance_hz", "hwhm_hz", "weight"], 1)?;
    Ok((0..cols[0].len())
        .map(|i| LinewidthPoint {
            resonance_hz: cols[0][i],
            hwhm_hz: cols[1][i],
            weight: cols.get(2).map(|w| w[i]),
        })
        .collect())
}

pub fn linewidth_points_csv(points: &[LinewidthPoint]) -> String {
    let weighted = points.iter().all(|p| p.weight.is_some()) && !points.is_empty();
    let mut s = String::from(if weighted {
        "resonance_hz,hwhm_hz,weight\n"
    } else {
        "resonance_hz,hwhm_hz\n"
    });
    for p in points {
        s.push_str(&fmt_f64(p.resonance_hz));
        s.push(',');
        s.push_str(&fmt_f64(p.hwhm_hz));
        if weighted {
            s.push(',');
            s.push_str(&fmt_f64(p.weight.unwrap()));
        }
        s.push('\n');
    }
    s
}

/// `freq_hz,phase_rad`
pub fn read_phase_points(path: &Path) -> Result<Vec<PhasePoint>> {
    let cols = read_columns(path, &["freq_hz", "phase_rad"], 0)?;
    Ok(cols[0]
        .iter()
        .zip(&cols[1])
        .map(|(&f, &p)| PhasePoint::new(f, p))
        .collect())
}

pub fn phase_points_csv(points: &[PhasePoint]) -> String {
    let mut s = String::from("freq_hz,phase_rad\n");
    for p in points {
        s.push_str(&format!(
            "{},{}\n",
            fmt_f64(p.freq_hz),
            fmt_f64(p.phase_rad)
        ));
    }
    s
}
