//! Flat-file formats: FEAT binary features, CSV features, label lists and
//! kNN edge export.
//!
//! FEAT layout: the ASCII magic `FEAT`, then `N` and `M` as little-endian
//! `u32`, then `N*M` little-endian `f32` values in row-major order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, LabelVector};
use crate::knn::KnnGraph;

pub const FEAT_MAGIC: &[u8; 4] = b"FEAT";

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

pub fn read_feat(mut r: impl Read) -> Result<FeatureMatrix> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != FEAT_MAGIC {
        return Err(Error::format("missing FEAT magic"));
    }
    let n = read_u32(&mut r)? as usize;
    let m = read_u32(&mut r)? as usize;
    let len = n
        .checked_mul(m)
        .ok_or_else(|| Error::format("FEAT dimensions overflow"))?;
    let mut bytes = vec![0u8; len * 4];
    r.read_exact(&mut bytes)
        .map_err(|e| Error::format(format!("truncated FEAT payload: {e}")))?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::format("trailing bytes after FEAT payload"));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let data = Array2::from_shape_vec((n, m), values).map_err(|e| Error::format(e.to_string()))?;
    FeatureMatrix::new(data)
}

/// Writes features as FEAT. Values are narrowed to `f32`.
pub fn write_feat(mut w: impl Write, features: &FeatureMatrix) -> Result<()> {
    let n = u32::try_from(features.rows()).map_err(|_| Error::format("too many rows"))?;
    let m = u32::try_from(features.cols()).map_err(|_| Error::format("too many columns"))?;
    w.write_all(FEAT_MAGIC)?;
    w.write_all(&n.to_le_bytes())?;
    w.write_all(&m.to_le_bytes())?;
    for v in features.data().iter() {
        w.write_all(&(*v as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// One row per line, comma separated. Blank lines are skipped.
pub fn read_features_csv(r: impl BufRead) -> Result<FeatureMatrix> {
    let mut rows = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|tok| {
                tok.trim().parse::<f64>().map_err(|e| {
                    Error::format(format!("line {}: bad value {tok:?}: {e}", lineno + 1))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::format("empty feature CSV"));
    }
    FeatureMatrix::from_rows(&rows)
}

/// Loads FEAT if the file starts with the magic, CSV otherwise.
pub fn load_features(path: &Path) -> Result<FeatureMatrix> {
    let mut reader = BufReader::new(File::open(path)?);
    let head = reader.fill_buf()?;
    if head.starts_with(FEAT_MAGIC) {
        read_feat(reader)
    } else {
        read_features_csv(reader)
    }
}

pub fn save_features(path: &Path, features: &FeatureMatrix) -> Result<()> {
    write_feat(BufWriter::new(File::create(path)?), features)
}

/// One non-negative integer per line; line `i` labels node `i`.
pub fn read_labels(r: impl BufRead) -> Result<LabelVector> {
    let mut labels = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let tok = line.trim();
        if tok.is_empty() {
            continue;
        }
        let v = tok
            .parse::<usize>()
            .map_err(|e| Error::format(format!("line {}: bad label {tok:?}: {e}", lineno + 1)))?;
        labels.push(v);
    }
    Ok(LabelVector::new(labels))
}

pub fn write_labels(mut w: impl Write, labels: &LabelVector) -> Result<()> {
    for l in labels.as_slice() {
        writeln!(w, "{l}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_labels(path: &Path) -> Result<LabelVector> {
    read_labels(BufReader::new(File::open(path)?))
}

pub fn save_labels(path: &Path, labels: &LabelVector) -> Result<()> {
    write_labels(BufWriter::new(File::create(path)?), labels)
}

/// CSV `probe,neighbor,score` with six decimals.
pub fn write_knn_csv(mut w: impl Write, graph: &KnnGraph) -> Result<()> {
    writeln!(w, "probe,neighbor,score")?;
    for (p, q, s) in graph.edges() {
        writeln!(w, "{p},{q},{s:.6}")?;
    }
    w.flush()?;
    Ok(())
}
