//! CSV and JSON serializations of spectral resolutions.

use std::io;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::{json, Value};

use super::{Convention, SpectralResolution};
use crate::scalar::Real;

pub const SPECTRUM_CSV_HEADER: &str = "index,eigenvalue,multiplicity,sector_mu,convention";

/// Seventeen significant digits, round-trip exact for `f64`.
pub fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

/// One row per level. `sector_mu` lists the fiber eigenvalues contributing to a
/// level, `;`-separated; it and `convention` are empty for non-warped spectra.
pub fn spectrum_csv<T: Real>(res: &SpectralResolution<T>, convention: Option<Convention>) -> String {
    let mut out = String::with_capacity(64 * (res.levels.len() + 1));
    out.push_str(SPECTRUM_CSV_HEADER);
    out.push('\n');
    let conv = convention.map_or("", |c| c.as_str());
    for (i, level) in res.levels.iter().enumerate() {
        let mus: Vec<String> = level.sectors.iter().map(|s| format_real(s.mu.to_f64_lossy())).collect();
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            i + 1,
            format_real(level.value.to_f64_lossy()),
            level.multiplicity,
            mus.join(";"),
            conv
        ));
    }
    out
}

/// JSON document with levels, completeness certificate and (when present) masses.
pub fn spectrum_json<T: Real>(res: &SpectralResolution<T>, convention: Option<Convention>) -> Value {
    let levels: Vec<Value> = res
        .levels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            json!({
                "index": i + 1,
                "eigenvalue": l.value.to_f64_lossy(),
                "multiplicity": l.multiplicity,
                "sectors": l.sectors.iter().map(|s| json!({
                    "mu": s.mu.to_f64_lossy(),
                    "multiplicity": s.multiplicity,
                })).collect::<Vec<_>>(),
            })
        })
        .collect();
    let mut doc = json!({
        "cutoff": res.cutoff.to_f64_lossy(),
        "count": res.count(),
        "certificate": serde_json::to_value(&res.certificate).unwrap_or(Value::Null),
        "levels": levels,
    });
    if let Some(c) = convention {
        doc["convention"] = json!(c.as_str());
    }
    if let Some(m) = &res.mass_coeffs {
        doc["mass_coeffs"] = json!(m.iter().map(|v| v.to_f64_lossy()).collect::<Vec<_>>());
    }
    doc
}

/// Pretty JSON whose floating-point numbers use [`format_real`].
pub fn json_string<S: Serialize + ?Sized>(value: &S) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SeventeenDigits(PrettyFormatter::new()));
    value.serialize(&mut ser).expect("serializing to memory cannot fail");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

struct SeventeenDigits(PrettyFormatter<'static>);

impl Formatter for SeventeenDigits {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        w.write_all(format_real(v).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        self.write_f64(w, v as f64)
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{circle_spectrum, Certificate};

    #[test]
    fn json_numbers_keep_seventeen_digits() {
        let text = json_string(&json!({ "x": 0.1, "n": 3, "bad": f64::NAN }));
        let back: Value = serde_json::from_str(&text).unwrap();
        assert!(text.contains("1.0000000000000001e-1"));
        assert_eq!(back["x"].as_f64(), Some(0.1));
        assert_eq!(back["n"].as_u64(), Some(3));
        assert!(back["bad"].is_null());
    }

    #[test]
    fn csv_has_stable_header_and_full_precision() {
        let csv = spectrum_csv(&circle_spectrum(3.0, 1.0), None);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(SPECTRUM_CSV_HEADER));
        assert_eq!(lines.next(), Some("1,0.0000000000000000e0,1,,"));
        let second: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(second[1].parse::<f64>().unwrap(), 1.0 / 9.0);
        assert_eq!(second[2], "2");
    }

    #[test]
    fn json_carries_certificate() {
        let doc = spectrum_json(&circle_spectrum(1.0, 4.0), Some(Convention::Drift));
        assert_eq!(doc["certificate"]["kind"], "closed_form");
        assert_eq!(doc["count"], 5);
        assert_eq!(doc["convention"], "drift");
        let c: Certificate = serde_json::from_value(doc["certificate"].clone()).unwrap();
        assert_eq!(c, Certificate::ClosedForm);
    }
}
