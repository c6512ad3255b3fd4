//! File formats.
//!
//! Binary layout: magic `FMSE`, then `u32` format version, `u32` component
//! count `n`, `u32` node count `m`, then `m² · n` little-endian `f64` in
//! row-major pair order with the components of each pair contiguous.
//! Matrices use the same layout with `n = 1`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fields::BivariateVectorField;
use crate::grid::{parse_field, Grid, ScalarField};

pub const MAGIC: &[u8; 4] = b"FMSE";
pub const FORMAT_VERSION: u32 = 1;

fn write_binary(path: &Path, n: usize, m: usize, data: impl Iterator<Item = f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    for v in [FORMAT_VERSION, n as u32, m as u32] {
        w.write_all(&v.to_le_bytes())?;
    }
    for x in data {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_binary(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing FMSE header".into()));
    }
    let word = |k: usize| u32::from_le_bytes(bytes[k..k + 4].try_into().unwrap()) as usize;
    let (version, n, m) = (word(4) as u32, word(8), word(12));
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported format version {version}")));
    }
    let count = m * m * n;
    if bytes.len() != 16 + 8 * count {
        return Err(Error::Format(format!(
            "expected {count} values, file holds {} bytes of payload",
            bytes.len() - 16
        )));
    }
    let data = bytes[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((n, m, data))
}

pub fn write_field_binary(a: &BivariateVectorField, path: impl AsRef<Path>) -> Result<()> {
    let g = a.grid();
    write_binary(path.as_ref(), g.n(), g.node_count(), a.raw().iter().copied())
}

pub fn read_field_binary(grid: Arc<Grid>, path: impl AsRef<Path>) -> Result<BivariateVectorField> {
    let (n, m, data) = read_binary(path.as_ref())?;
    if n != grid.n() || m != grid.node_count() {
        return Err(Error::ShapeMismatch {
            expected: grid.node_count(),
            actual: m,
        });
    }
    BivariateVectorField::from_raw(grid, data)
}

/// CSV with columns `i, j, comp_1..comp_n`, one row per pair.
pub fn write_field_csv(a: &BivariateVectorField, path: impl AsRef<Path>) -> Result<()> {
    let g = a.grid();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["i".to_string(), "j".to_string()];
    header.extend((1..=g.n()).map(|k| format!("comp_{k}")));
    w.write_record(&header)?;
    for i in 0..g.node_count() {
        for j in 0..g.node_count() {
            let mut rec = vec![i.to_string(), j.to_string()];
            rec.extend(a.at(i, j).iter().map(|v| format!("{v:e}")));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a pair CSV; pairs not listed are zero.
pub fn read_field_csv(grid: Arc<Grid>, path: impl AsRef<Path>) -> Result<BivariateVectorField> {
    let mut a = BivariateVectorField::zeros(grid.clone());
    let m = grid.node_count();
    let mut r = csv::Reader::from_path(path)?;
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 2 + grid.n() {
            return Err(Error::Format(format!("expected {} columns", 2 + grid.n())));
        }
        let (i, j): (usize, usize) = (parse_field(&rec, 0)?, parse_field(&rec, 1)?);
        if i >= m || j >= m {
            return Err(Error::Format(format!("pair ({i},{j}) out of range")));
        }
        for k in 0..grid.n() {
            let v: f64 = parse_field(&rec, 2 + k)?;
            if !v.is_finite() {
                return Err(Error::NonFinite(i * m + j));
            }
            a.at_mut(i, j)[k] = v;
        }
    }
    Ok(a)
}

/// CSV with columns `node_index, coord_1..coord_n, value`.
pub fn write_scalar_csv(u: &ScalarField, path: impl AsRef<Path>) -> Result<()> {
    let g = u.grid();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["node_index".to_string()];
    header.extend((1..=g.n()).map(|k| format!("coord_{k}")));
    header.push("value".into());
    w.write_record(&header)?;
    for (i, v) in u.values().iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(g.coord(i).iter().map(|c| format!("{c:e}")));
        rec.push(format!("{v:e}"));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads rows whose first column is a node index and last column a value;
/// unlisted nodes are zero. Accepts the output of [`write_scalar_csv`].
pub fn read_scalar_csv(grid: Arc<Grid>, path: impl AsRef<Path>) -> Result<ScalarField> {
    let mut v = vec![0.0; grid.node_count()];
    let mut r = csv::Reader::from_path(path)?;
    for rec in r.records() {
        let rec = rec?;
        if rec.len() < 2 {
            return Err(Error::Format(format!("record {rec:?} has fewer than two columns")));
        }
        let i: usize = parse_field(&rec, 0)?;
        let x: f64 = parse_field(&rec, rec.len() - 1)?;
        if i >= v.len() {
            return Err(Error::Format(format!("node {i} out of range")));
        }
        v[i] = x;
    }
    ScalarField::new(grid, v)
}

/// CSV triplets `i, j, value`.
pub fn write_matrix_csv(mat: &DMatrix<f64>, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["i", "j", "value"])?;
    for i in 0..mat.nrows() {
        for j in 0..mat.ncols() {
            w.write_record([i.to_string(), j.to_string(), format!("{:e}", mat[(i, j)])])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_matrix_binary(mat: &DMatrix<f64>, path: impl AsRef<Path>) -> Result<()> {
    if !mat.is_square() {
        return Err(Error::InvalidArgument("binary export needs a square matrix".into()));
    }
    let m = mat.nrows();
    write_binary(path.as_ref(), 1, m, (0..m * m).map(|k| mat[(k / m, k % m)]))
}

pub fn read_matrix_binary(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let (n, m, data) = read_binary(path.as_ref())?;
    if n != 1 {
        return Err(Error::Format(format!("expected one component, found {n}")));
    }
    Ok(DMatrix::from_row_slice(m, m, &data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, GridConfig};
    use crate::presets;

    #[test]
    fn binary_round_trip_and_header() {
        let g = build_grid(&GridConfig::square_with_disk(0.5, -1.0, 1.0, 5, 0.5)).unwrap();
        let a = presets::random_field(&g, 1, 2.0, false);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.bin");
        write_field_binary(&a, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"FMSE");
        assert_eq!(bytes.len(), 16 + 25 * 25 * 2 * 8);
        let back = read_field_binary(g.clone(), &path).unwrap();
        assert_eq!(back.raw(), a.raw());

        let g1 = build_grid(&GridConfig::interval(0.5, -1.0, 1.0, 25, -0.5, 0.5)).unwrap();
        assert!(read_field_binary(g1, &path).is_err());
        std::fs::write(&path, b"NOPE").unwrap();
        assert!(matches!(read_field_binary(g, &path), Err(Error::Format(_))));
    }

    #[test]
    fn csv_round_trip() {
        let g = build_grid(&GridConfig::interval(0.5, -1.0, 1.0, 6, -0.5, 0.5)).unwrap();
        let a = presets::random_field(&g, 2, 1.0, false);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        write_field_csv(&a, &path).unwrap();
        assert_eq!(read_field_csv(g.clone(), &path).unwrap().raw(), a.raw());

        let u = presets::random_scalar(&g, 3, 1.0);
        let path = dir.path().join("u.csv");
        write_scalar_csv(&u, &path).unwrap();
        assert_eq!(read_scalar_csv(g, &path).unwrap().values(), u.values());
    }

    #[test]
    fn matrix_round_trip() {
        let m = DMatrix::from_fn(4, 4, |i, j| (i * 4 + j) as f64 - 0.5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        write_matrix_binary(&m, &path).unwrap();
        assert_eq!(read_matrix_binary(&path).unwrap(), m);
        write_matrix_csv(&m, dir.path().join("m.csv")).unwrap();
    }
}
