//! CSV and JSON writers. Floats use 17 significant digits so values round-trip.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `header` followed by one row per `(t, values)` pair.
pub fn write_rows<'a, I>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = (f64, &'a [f64])>,
{
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    let mut line = String::new();
    for (t, values) in rows {
        line.clear();
        line.push_str(&fmt_f64(t));
        for v in values {
            line.push(',');
            line.push_str(&fmt_f64(*v));
        }
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Header `t,<prefix>0,<prefix>1,...`.
pub fn indexed_header(prefix: &str, n: usize) -> Vec<String> {
    std::iter::once("t".to_string())
        .chain((0..n).map(|i| format!("{prefix}{i}")))
        .collect()
}

pub fn named_header(names: &[&str]) -> Vec<String> {
    std::iter::once("t").chain(names.iter().copied()).map(String::from).collect()
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads a CSV written by [`write_rows`] back into its header and rows.
pub fn read_rows(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .unwrap_or("")
        .split(',')
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = line
            .split(',')
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::config(format!("{}:{}", path.display(), i + 2), e.to_string()))?;
        rows.push(row);
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        let rows = [vec![1.0, 2.0], vec![0.1, 0.2]];
        write_rows(
            &path,
            &indexed_header("x_", 2),
            [(0.0, rows[0].as_slice()), (0.5, rows[1].as_slice())],
        )
        .unwrap();
        let (header, back) = read_rows(&path).unwrap();
        assert_eq!(header, ["t", "x_0", "x_1"]);
        assert_eq!(back, vec![vec![0.0, 1.0, 2.0], vec![0.5, 0.1, 0.2]]);
    }
}
