//! Deterministic JSON and CSV emission.
//!
//! Floats are written with 17 significant digits in exponent form so reruns
//! compare byte for byte; non-finite values become `null`.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter, Serializer};

use crate::linalg::SparseHermitian;
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Pretty JSON with fixed-precision floats.
struct FixedFloat<'a>(PrettyFormatter<'a>);

macro_rules! forward {
    ($($name:ident($($arg:ident: $ty:ty),*);)*) => {
        $(fn $name<W: ?Sized + Write>(&mut self, w: &mut W $(, $arg: $ty)*) -> io::Result<()> {
            self.0.$name(w $(, $arg)*)
        })*
    };
}

impl Formatter for FixedFloat<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        write_float(w, v)
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        write_float(w, v as f64)
    }

    forward! {
        begin_array();
        end_array();
        begin_array_value(first: bool);
        end_array_value();
        begin_object();
        end_object();
        begin_object_key(first: bool);
        begin_object_value();
        end_object_value();
    }
}

fn write_float<W: ?Sized + Write>(w: &mut W, v: f64) -> io::Result<()> {
    if v.is_finite() {
        // -0.0 and 0.0 print the same.
        let v = if v == 0.0 { 0.0 } else { v };
        write!(w, "{v:.16e}")
    } else {
        w.write_all(b"null")
    }
}

/// Float in the report format, for CSV cells.
pub fn fmt_float(v: f64) -> String {
    let mut b = Vec::new();
    write_float(&mut b, v).expect("write to Vec");
    String::from_utf8(b).expect("ascii")
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut ser = Serializer::with_formatter(&mut out, FixedFloat(PrettyFormatter::with_indent(b"  ")));
    value.serialize(&mut ser).map_err(|e| Error::InvalidArgument(format!("serialization: {e}")))?;
    out.push(b'\n');
    Ok(out)
}

/// Writes through a temporary file in the same directory and renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io_err = |source| Error::Io { path: path.display().to_string(), source };
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err)?;
    }
    let tmp = path.with_extension(format!("{}.tmp", path.extension().and_then(|e| e.to_str()).unwrap_or("")));
    fs::write(&tmp, bytes).map_err(io_err)?;
    fs::rename(&tmp, path).map_err(io_err)
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Report<'a, T: Serialize> {
    pub schema_version: u32,
    pub subcommand: &'a str,
    pub config_hash: &'a str,
    pub results: &'a T,
}

/// Serialized report envelope around `results`.
pub fn emit_report<T: Serialize>(results: &T, subcommand: &str, config_hash: &str, schema_version: u32) -> Result<Vec<u8>> {
    to_json_bytes(&Report { schema_version, subcommand, config_hash, results })
}

/// One column per entry, header = column names; shorter columns are padded
/// with empty cells.
pub fn columns_csv(columns: &[(String, Vec<f64>)]) -> String {
    let mut s = columns.iter().map(|(h, _)| h.as_str()).collect::<Vec<_>>().join(",");
    s.push('\n');
    let rows = columns.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
    for r in 0..rows {
        let line: Vec<String> = columns.iter().map(|(_, v)| v.get(r).map(|&x| fmt_float(x)).unwrap_or_default()).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

/// Rows of fixed width with a header.
pub fn rows_csv(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        s.push_str(&row.into_iter().map(fmt_float).collect::<Vec<_>>().join(","));
        s.push('\n');
    }
    s
}

/// Coordinate format: row, col, re, im.
pub fn coo_csv(m: &SparseHermitian) -> String {
    let mut s = String::from("row,col,re,im\n");
    for (r, c, v) in m.triplets() {
        s.push_str(&format!("{r},{c},{},{}\n", fmt_float(v.re), fmt_float(v.im)));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_fixed_width() {
        let b = to_json_bytes(&vec![0.1, -0.0, f64::NAN, 1e300]).unwrap();
        let s = String::from_utf8(b).unwrap();
        assert!(s.contains("1.0000000000000001e-1"), "{s}");
        assert!(s.contains("0.0000000000000000e0"));
        assert!(s.contains("null"));
        let back: Vec<Option<f64>> = serde_json::from_str(&s).unwrap();
        assert_eq!(back[0], Some(0.1));
        assert_eq!(back[3], Some(1e300));
    }

    #[test]
    fn padded_columns() {
        let c = columns_csv(&[("a".into(), vec![1.0, 2.0]), ("b".into(), vec![3.0])]);
        let lines: Vec<&str> = c.lines().collect();
        assert_eq!(lines[0], "a,b");
        assert!(lines[2].ends_with(','));
    }
}
