//! Deterministic output emission.
//!
//! Results files (`results.csv`, `summary.json`) must be byte-identical
//! across reruns of the same config, so every float is printed with 17
//! significant digits and rows are ordered by grid coordinates, never by
//! completion time. Wall-clock timings go to `run.log`, which is exempt
//! from the byte-identity guarantee.

use crate::error::Result;
use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter, Serializer};
use sha2::{Digest, Sha256};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

/// 17 significant digits round-trip any f64 exactly.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn config_hash(text: &str) -> String {
    let mut h = Sha256::new();
    h.update(text.as_bytes());
    let digest = h.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Pretty JSON with the same float convention as the CSV files.
struct SciFormatter<'a>(PrettyFormatter<'a>);

impl Formatter for SciFormatter<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            write!(w, "{value:.16e}")
        } else {
            w.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(
        &mut self,
        w: &mut W,
        first: bool,
    ) -> io::Result<()> {
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

    fn begin_object_key<W: ?Sized + io::Write>(
        &mut self,
        w: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json(value: &impl Serialize) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = Serializer::with_formatter(&mut out, SciFormatter(PrettyFormatter::new()));
    value
        .serialize(&mut ser)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
    out.push(b'\n');
    Ok(String::from_utf8(out).expect("serializer emits utf-8"))
}

/// One table: a header line and rows of preformatted cells.
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: Vec<&'static str>) -> Table {
        Table {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        s.push_str(&self.columns.join(","));
        s.push('\n');
        for row in &self.rows {
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }
}

/// Collects wall-clock and bookkeeping lines for `run.log`.
#[derive(Default)]
pub struct RunLog {
    lines: Vec<String>,
}

impl RunLog {
    pub fn note(&mut self, line: impl Into<String>) {
        self.lines.push(line.into());
    }

    pub fn timing(&mut self, what: &str, millis: f64) {
        self.lines.push(format!("{what} wall_ms={millis:.3}"));
    }

    pub fn render(&self) -> String {
        let mut s = self.lines.join("\n");
        s.push('\n');
        s
    }
}

pub struct OutputWriter {
    pub dir: PathBuf,
    formats: Vec<String>,
}

impl OutputWriter {
    pub fn new(dir: &Path, formats: &[String]) -> Result<OutputWriter> {
        fs::create_dir_all(dir)?;
        Ok(OutputWriter {
            dir: dir.to_path_buf(),
            formats: formats.to_vec(),
        })
    }

    pub fn wants(&self, format: &str) -> bool {
        self.formats.iter().any(|f| f == format)
    }

    pub fn write_text(&self, name: &str, content: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, content)?;
        Ok(path)
    }

    pub fn write_table(&self, name: &str, table: &Table) -> Result<Option<PathBuf>> {
        if !self.wants("csv") {
            return Ok(None);
        }
        Ok(Some(self.write_text(name, &table.to_csv())?))
    }

    pub fn write_json(&self, name: &str, value: &impl Serialize) -> Result<Option<PathBuf>> {
        if !self.wants("json") {
            return Ok(None);
        }
        Ok(Some(self.write_text(name, &to_json(value)?)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_formatting_roundtrips() {
        for &x in &[2.0 / 3.0, 0.6640625, 1.0, -3.25e-17, std::f64::consts::PI] {
            let s = fmt_float(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{s}");
        }
    }

    #[test]
    fn json_floats_use_scientific_notation() {
        #[derive(Serialize)]
        struct S {
            a: f64,
            b: Option<f64>,
            v: Vec<f64>,
        }
        let s = to_json(&S {
            a: 2.0 / 3.0,
            b: None,
            v: vec![1.0, 0.5],
        })
        .unwrap();
        assert!(s.contains("6.6666666666666663e-1"), "{s}");
        assert!(s.contains("\"b\": null"), "{s}");
        assert!(s.contains("5.0000000000000000e-1"), "{s}");
        let parsed: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(parsed["v"][0], serde_json::json!(1.0));
    }

    #[test]
    fn config_hash_is_stable() {
        let h = config_hash("hello");
        assert_eq!(h.len(), 64);
        assert_eq!(h, config_hash("hello"));
        assert_ne!(h, config_hash("hello "));
    }

    #[test]
    fn table_renders_csv() {
        let mut t = Table::new(vec!["a", "b"]);
        t.push(vec!["1".into(), fmt_float(0.5)]);
        assert_eq!(t.to_csv(), "a,b\n1,5.0000000000000000e-1\n");
    }
}
