//! On-disk formats for built matrices.
//!
//! A matrix directory holds `matrix.json` (spec, shape, flags and scaling
//! constants) and a columnar group file:
//!
//! ```text
//! x1,…,xn,d1,…,dk,multiplicity
//! ```
//!
//! Direction entries are the 16-hex-digit IEEE-754 bit patterns of the `f64`
//! values, so a load/save cycle is byte-identical. JSON is written with
//! sorted keys and shortest round-trip floats.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingSpec, RowGroupMatrix};
use crate::error::{Error, Result};

pub const MATRIX_FORMAT: &str = "permembed-matrix/1";
pub const MANIFEST_FILE: &str = "matrix.json";
pub const GROUPS_FILE: &str = "groups.csv";

/// Largest `N` accepted by [`write_dense_csv`].
pub const DENSE_EXPORT_LIMIT: u64 = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixManifest {
    pub format: String,
    pub spec: EmbeddingSpec,
    pub group_count: usize,
    pub width: usize,
    pub truncated: bool,
    pub groups_file: String,
    /// `M = ‖v‖` keyed by norm descriptor.
    #[serde(default)]
    pub scaling_constants: BTreeMap<String, f64>,
}

impl MatrixManifest {
    pub fn describe(matrix: &RowGroupMatrix<f64>, scaling_constants: BTreeMap<String, f64>) -> Self {
        Self {
            format: MATRIX_FORMAT.to_string(),
            spec: matrix.spec().clone(),
            group_count: matrix.group_count(),
            width: matrix.width(),
            truncated: matrix.is_truncated(),
            groups_file: GROUPS_FILE.to_string(),
            scaling_constants,
        }
    }
}

/// Pretty JSON with object keys sorted at every level and a trailing newline.
pub fn to_sorted_json<S: Serialize>(value: &S) -> Result<String> {
    // serde_json's default Map is a BTreeMap, so a round trip through Value sorts keys.
    let v = serde_json::to_value(value)?;
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

pub fn write_groups<W: Write>(matrix: &RowGroupMatrix<f64>, w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    let xs = (1..=matrix.dim()).map(|i| format!("x{i}"));
    let ds = (1..=matrix.width()).map(|i| format!("d{i}"));
    let header: Vec<String> = xs.chain(ds).chain(std::iter::once("multiplicity".to_string())).collect();
    writeln!(w, "{}", header.join(","))?;
    for g in matrix.groups() {
        for x in g.point {
            write!(w, "{x},")?;
        }
        for d in g.direction {
            write!(w, "{:016x},", d.to_bits())?;
        }
        writeln!(w, "{}", g.multiplicity)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_groups<R: BufRead>(spec: EmbeddingSpec, width: usize, r: R) -> Result<RowGroupMatrix<f64>> {
    let n = spec.n;
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| Error::Format("empty group file".into()))??;
    if header.split(',').count() != n + width + 1 {
        return Err(Error::Format(format!("group header has wrong column count: {header:?}")));
    }
    let (mut points, mut directions, mut multiplicities) = (Vec::new(), Vec::new(), Vec::new());
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        let bad = |what: &str| Error::Format(format!("group file line {}: {what}", lineno + 2));
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != n + width + 1 {
            return Err(bad("wrong column count"));
        }
        for c in &cols[..n] {
            points.push(c.parse::<i32>().map_err(|_| bad("bad coordinate"))?);
        }
        for c in &cols[n..n + width] {
            let bits = u64::from_str_radix(c, 16).map_err(|_| bad("bad direction bits"))?;
            directions.push(f64::from_bits(bits));
        }
        multiplicities.push(cols[n + width].parse::<u64>().map_err(|_| bad("bad multiplicity"))?);
    }
    RowGroupMatrix::from_parts(spec, points, directions, multiplicities, width)
}

/// Write `matrix.json` and the group file into `dir`; returns the paths written.
pub fn save_matrix(
    dir: &Path,
    matrix: &RowGroupMatrix<f64>,
    scaling_constants: BTreeMap<String, f64>,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let manifest = MatrixManifest::describe(matrix, scaling_constants);
    let groups_path = dir.join(&manifest.groups_file);
    write_groups(matrix, fs::File::create(&groups_path)?)?;
    let manifest_path = dir.join(MANIFEST_FILE);
    fs::write(&manifest_path, to_sorted_json(&manifest)?)?;
    Ok(vec![manifest_path, groups_path])
}

/// Load from a matrix directory or directly from its `matrix.json`.
pub fn load_matrix(path: &Path) -> Result<(MatrixManifest, RowGroupMatrix<f64>)> {
    let manifest_path = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
    let manifest: MatrixManifest = serde_json::from_str(&fs::read_to_string(&manifest_path)?)?;
    if manifest.format != MATRIX_FORMAT {
        return Err(Error::Format(format!("unsupported matrix format {:?}", manifest.format)));
    }
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let file = fs::File::open(dir.join(&manifest.groups_file))?;
    let matrix = read_groups(manifest.spec.clone(), manifest.width, BufReader::new(file))?;
    if matrix.group_count() != manifest.group_count {
        return Err(Error::Format(format!(
            "manifest lists {} groups, file has {}",
            manifest.group_count,
            matrix.group_count()
        )));
    }
    Ok((manifest, matrix))
}

/// Every row of `T` written out, `N` lines of `k` shortest-round-trip floats.
pub fn write_dense_csv<W: Write>(matrix: &RowGroupMatrix<f64>, w: W) -> Result<()> {
    if matrix.total() > DENSE_EXPORT_LIMIT {
        return Err(Error::Refused(format!(
            "dense export is limited to N <= {DENSE_EXPORT_LIMIT}, this matrix has N = {}",
            matrix.total()
        )));
    }
    let mut w = BufWriter::new(w);
    for g in matrix.groups() {
        let row: Vec<String> = g.direction.iter().map(|d| format!("{d:?}")).collect();
        let row = row.join(",");
        for _ in 0..g.multiplicity {
            writeln!(w, "{row}")?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{build_matrix, plan_parameters, PlanRequest};

    fn small() -> RowGroupMatrix<f64> {
        build_matrix(&plan_parameters(&PlanRequest::desk(0.1, 3, 5000, 1.0, 3.0)).unwrap()).unwrap()
    }

    #[test]
    fn groups_round_trip_byte_identical() {
        let m = small();
        let mut first = Vec::new();
        write_groups(&m, &mut first).unwrap();
        let back = read_groups(m.spec().clone(), m.width(), first.as_slice()).unwrap();
        assert_eq!(back, m);
        let mut second = Vec::new();
        write_groups(&back, &mut second).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn truncated_round_trip() {
        let m = small().truncate_columns(2).unwrap();
        let mut buf = Vec::new();
        write_groups(&m, &mut buf).unwrap();
        let back = read_groups(m.spec().clone(), 2, buf.as_slice()).unwrap();
        assert!(back.is_truncated());
        assert_eq!(back, m);
    }

    #[test]
    fn malformed_group_files_are_rejected() {
        let m = small();
        let mut buf = Vec::new();
        write_groups(&m, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[1].push('7');
        let broken = lines.join("\n");
        assert!(read_groups(m.spec().clone(), 3, broken.as_bytes()).is_err());
        assert!(read_groups(m.spec().clone(), 3, "x1,x2\n".as_bytes()).is_err());
    }

    #[test]
    fn sorted_json_orders_keys() {
        let mut map = BTreeMap::new();
        map.insert("lp:2".to_string(), 1.5);
        let s = to_sorted_json(&MatrixManifest::describe(&small(), map)).unwrap();
        let keys: Vec<usize> = ["\"format\"", "\"group_count\"", "\"groups_file\"", "\"scaling_constants\"", "\"spec\"", "\"truncated\"", "\"width\""]
            .iter()
            .map(|k| s.find(k).unwrap())
            .collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn dense_export() {
        let m = small();
        let mut buf = Vec::new();
        write_dense_csv(&m, &mut buf).unwrap();
        assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), 5000);
        let big = build_matrix::<f64>(&plan_parameters(&PlanRequest::desk(0.1, 1, 200_000, 1.0, 2.0)).unwrap()).unwrap();
        assert!(matches!(write_dense_csv(&big, Vec::new()), Err(Error::Refused(_))));
    }
}
