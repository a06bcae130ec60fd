//! Plain-text formats.
//!
//! * features: one point per line, fields separated by whitespace or commas
//! * distances: a dense `n × n` table, or `i j dist` triplets (0-based)
//! * labels and predictions: `index class` lines
//!
//! Blank lines and lines starting with `#` are ignored everywhere. Reals are
//! written with 17 significant digits so they read back bit-exact.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::graph::{DistanceMatrix, FeatureMatrix};
use crate::{Error, Result};

/// Fixed 17-significant-digit scientific notation.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Creates `path` and hands a buffered writer to `body`.
pub fn write_file<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>,
{
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    body(&mut out)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

/// Content lines with their 1-based line numbers, split into fields.
fn records<'a>(text: &'a str) -> impl Iterator<Item = (usize, Vec<&'a str>)> + 'a {
    text.lines().enumerate().filter_map(|(k, line)| {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            return None;
        }
        let fields = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        Some((k + 1, fields))
    })
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn parse_f64(path: &Path, line: usize, s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| parse_err(path, line, format!("'{s}' is not a number")))
}

fn parse_index(path: &Path, line: usize, s: &str) -> Result<usize> {
    s.parse::<usize>()
        .map_err(|_| parse_err(path, line, format!("'{s}' is not a non-negative integer")))
}

/// Parses a numeric table with equal-length rows.
pub fn parse_table(text: &str, path: &Path) -> Result<Array2<f64>> {
    let mut width = None;
    let mut values = Vec::new();
    let mut rows = 0;
    for (line, fields) in records(text) {
        if *width.get_or_insert(fields.len()) != fields.len() {
            return Err(parse_err(
                path,
                line,
                format!("expected {} fields, found {}", width.unwrap(), fields.len()),
            ));
        }
        for s in fields {
            values.push(parse_f64(path, line, s)?);
        }
        rows += 1;
    }
    let width = width.ok_or_else(|| parse_err(path, 0, "no data rows"))?;
    Ok(Array2::from_shape_vec((rows, width), values).expect("consistent row widths"))
}

pub fn read_features(path: &Path) -> Result<FeatureMatrix> {
    FeatureMatrix::new(parse_table(&read_text(path)?, path)?)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DistanceFormat {
    /// Dense when the table is square with a zero diagonal, triplets otherwise.
    #[default]
    Auto,
    Dense,
    Triplet,
}

/// Reads a distance file, averaging asymmetric pairs (with a warning).
pub fn read_distances(path: &Path, format: DistanceFormat) -> Result<DistanceMatrix> {
    let text = read_text(path)?;
    let format = match format {
        DistanceFormat::Auto => {
            let rows: Vec<_> = records(&text).collect();
            let square = rows.iter().all(|(_, f)| f.len() == rows.len());
            let zero_diag = rows
                .iter()
                .enumerate()
                .all(|(i, (_, f))| f.get(i).and_then(|s| s.parse::<f64>().ok()) == Some(0.0));
            if square && zero_diag && rows.len() >= 2 {
                DistanceFormat::Dense
            } else {
                DistanceFormat::Triplet
            }
        }
        f => f,
    };
    let (n, values) = match format {
        DistanceFormat::Dense => {
            let t = parse_table(&text, path)?;
            if t.nrows() != t.ncols() {
                return Err(parse_err(
                    path,
                    0,
                    format!(
                        "dense distances must be square, got {}x{}",
                        t.nrows(),
                        t.ncols()
                    ),
                ));
            }
            (t.nrows(), t.into_raw_vec_and_offset().0)
        }
        _ => parse_triplets(&text, path)?,
    };
    let (m, asym) = DistanceMatrix::symmetrized(n, values)?;
    if asym > 0.0 {
        log::warn!(
            "{}: distances are asymmetric (max difference {asym:e}); using the mean of each pair",
            path.display()
        );
    }
    Ok(m)
}

fn parse_triplets(text: &str, path: &Path) -> Result<(usize, Vec<f64>)> {
    let mut entries = Vec::new();
    for (line, fields) in records(text) {
        if fields.len() != 3 {
            return Err(parse_err(path, line, "expected 'i j dist'"));
        }
        let i = parse_index(path, line, fields[0])?;
        let j = parse_index(path, line, fields[1])?;
        let d = parse_f64(path, line, fields[2])?;
        entries.push((line, i, j, d));
    }
    let n = entries
        .iter()
        .map(|&(_, i, j, _)| i.max(j) + 1)
        .max()
        .unwrap_or(0);
    let mut values = vec![f64::NAN; n * n];
    for &(line, i, j, d) in &entries {
        if i == j {
            if d != 0.0 {
                return Err(parse_err(path, line, "self-distance must be zero"));
            }
            continue;
        }
        if !values[i * n + j].is_nan() {
            return Err(parse_err(path, line, format!("duplicate pair ({i}, {j})")));
        }
        values[i * n + j] = d;
    }
    for i in 0..n {
        values[i * n + i] = 0.0;
        for j in 0..n {
            if values[i * n + j].is_nan() {
                if values[j * n + i].is_nan() {
                    return Err(parse_err(
                        path,
                        0,
                        format!("missing distance for pair ({i}, {j})"),
                    ));
                }
                values[i * n + j] = values[j * n + i];
            }
        }
    }
    Ok((n, values))
}

/// Reads `index class` lines.
pub fn read_index_class(path: &Path) -> Result<Vec<(usize, i64)>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (line, fields) in records(&text) {
        if fields.len() != 2 {
            return Err(parse_err(path, line, "expected 'index class'"));
        }
        let i = parse_index(path, line, fields[0])?;
        let c = fields[1].parse::<i64>().map_err(|_| {
            parse_err(
                path,
                line,
                format!("'{}' is not an integer class", fields[1]),
            )
        })?;
        out.push((i, c));
    }
    Ok(out)
}

pub fn write_index_class<W: Write>(pairs: &[(usize, i64)], mut out: W) -> std::io::Result<()> {
    for (i, c) in pairs {
        writeln!(out, "{i} {c}")?;
    }
    Ok(())
}

/// Whitespace-separated rows.
pub fn write_matrix<W: Write>(m: ArrayView2<'_, f64>, mut out: W) -> std::io::Result<()> {
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

/// Triplet lines `i j dist` for `i < j`.
pub fn write_distance_triplets<W: Write>(d: &DistanceMatrix, mut out: W) -> std::io::Result<()> {
    for i in 0..d.n() {
        for j in (i + 1)..d.n() {
            writeln!(out, "{i} {j} {}", fmt_f64(d.get(i, j)))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format() {
        assert_eq!(fmt_f64(0.5), "5.0000000000000000e-1");
        assert_eq!(fmt_f64(25.0), "2.5000000000000000e1");
        let x = 0.1 + 0.2;
        assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn table_with_mixed_delimiters() {
        let t = parse_table("# header\n1, 2\n\n3 4\n5,\t6\n", Path::new("x")).unwrap();
        assert_eq!(t.dim(), (3, 2));
        assert_eq!(t[[2, 1]], 6.0);
        match parse_table("1 2\n3\n", Path::new("x")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        match parse_table("1 2\n3 x\n", Path::new("x")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn distance_formats() {
        let dir = tempfile::tempdir().unwrap();
        let dense = dir.path().join("dense.txt");
        std::fs::write(&dense, "0 1 2\n1 0 3\n2 3 0\n").unwrap();
        let d = read_distances(&dense, DistanceFormat::Auto).unwrap();
        assert_eq!(d.get(1, 2), 3.0);

        let trip = dir.path().join("trip.txt");
        std::fs::write(&trip, "0 1 1\n0 2 2\n1 2 3\n2 1 4\n").unwrap();
        let d = read_distances(&trip, DistanceFormat::Auto).unwrap();
        assert_eq!(d.n(), 3);
        assert_eq!(d.get(0, 2), 2.0);
        assert_eq!(d.get(1, 2), 3.5);
        assert_eq!(d.get(2, 1), 3.5);

        std::fs::write(&trip, "0 1 1\n0 2 2\n").unwrap();
        assert!(read_distances(&trip, DistanceFormat::Triplet).is_err());
    }
}
