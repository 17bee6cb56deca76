//! On-disk formats: the `FANN` vector file and JSON Lines metadata/queries.
//!
//! `FANN` layout (little-endian): magic `b"FANN"`, `u32` n, `u32` d, then
//! n·d `f32` values row-major.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde_json::Value;

use super::{Dataset, MetadataRow, QueryRecord};
use crate::error::{Error, Result};

const VECTOR_MAGIC: &[u8; 4] = b"FANN";

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| Error::format("FANN", format!("truncated {what}")))?;
    Ok(u32::from_le_bytes(b))
}

/// Reads a `FANN` file. Returns `(dim, raw row-major values)`; rows are not
/// normalized here.
pub fn read_vectors(path: impl AsRef<Path>) -> Result<(usize, Vec<f32>)> {
    read_vectors_from(BufReader::new(File::open(path)?))
}

pub fn read_vectors_from(mut r: impl Read) -> Result<(usize, Vec<f32>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::format("FANN", "truncated header"))?;
    if &magic != VECTOR_MAGIC {
        return Err(Error::format("FANN", "bad magic"));
    }
    let n = read_u32(&mut r, "header")? as usize;
    let d = read_u32(&mut r, "header")? as usize;
    if d == 0 && n > 0 {
        return Err(Error::format("FANN", "zero dimension"));
    }
    let len = n
        .checked_mul(d)
        .ok_or_else(|| Error::format("FANN", "size overflow"))?;
    let mut bytes = vec![0u8; len * 4];
    r.read_exact(&mut bytes)
        .map_err(|_| Error::format("FANN", format!("expected {len} values, file truncated")))?;
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::format("FANN", "trailing bytes after payload"));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((d, values))
}

pub fn write_vectors(path: impl AsRef<Path>, dim: usize, values: &[f32]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_vectors_to(&mut w, dim, values)?;
    w.flush()?;
    Ok(())
}

pub fn write_vectors_to(w: &mut impl Write, dim: usize, values: &[f32]) -> Result<()> {
    if dim == 0 || !values.len().is_multiple_of(dim) {
        return Err(Error::InvalidParameter(format!(
            "{} values do not form rows of dimension {dim}",
            values.len()
        )));
    }
    w.write_all(VECTOR_MAGIC)?;
    w.write_all(&((values.len() / dim) as u32).to_le_bytes())?;
    w.write_all(&(dim as u32).to_le_bytes())?;
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Reads JSON Lines metadata: one object per point, string values only.
pub fn read_metadata(path: impl AsRef<Path>) -> Result<Vec<MetadataRow>> {
    read_metadata_from(BufReader::new(File::open(path)?))
}

pub fn read_metadata_from(r: impl BufRead) -> Result<Vec<MetadataRow>> {
    let mut rows = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row_id = rows.len();
        let value: Value = serde_json::from_str(&line)?;
        let Value::Object(map) = value else {
            return Err(Error::format(
                "metadata",
                format!("row {row_id} is not a JSON object"),
            ));
        };
        let mut row = MetadataRow::new();
        for (field, v) in map {
            match v {
                Value::String(s) => {
                    row.insert(field, s);
                }
                _ => return Err(Error::NonStringValue { row: row_id, field }),
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_metadata(path: impl AsRef<Path>, rows: &[MetadataRow]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for row in rows {
        serde_json::to_writer(&mut w, row)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_dataset(vectors_path: impl AsRef<Path>, metadata_path: impl AsRef<Path>) -> Result<Dataset> {
    let (dim, values) = read_vectors(vectors_path)?;
    let rows = read_metadata(metadata_path)?;
    Dataset::new(dim, values, rows)
}

pub fn save_dataset(
    ds: &Dataset,
    vectors_path: impl AsRef<Path>,
    metadata_path: impl AsRef<Path>,
) -> Result<()> {
    write_vectors(vectors_path, ds.dim(), ds.vectors())?;
    let rows: Vec<MetadataRow> = (0..ds.len() as u32).map(|i| ds.metadata_row(i)).collect();
    write_metadata(metadata_path, &rows)
}

pub fn read_queries(path: impl AsRef<Path>) -> Result<Vec<QueryRecord>> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

pub fn write_queries(path: impl AsRef<Path>, queries: &[QueryRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for q in queries {
        serde_json::to_writer(&mut w, q)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fann(n: u32, d: u32, values: &[f32]) -> Vec<u8> {
        let mut b = b"FANN".to_vec();
        b.extend(n.to_le_bytes());
        b.extend(d.to_le_bytes());
        for v in values {
            b.extend(v.to_le_bytes());
        }
        b
    }

    #[test]
    fn reads_header_and_rows() {
        let bytes = fann(3, 2, &[3.0, 4.0, 1.0, 0.0, 0.0, 2.0]);
        let (d, v) = read_vectors_from(bytes.as_slice()).unwrap();
        assert_eq!(d, 2);
        assert_eq!(v, vec![3.0, 4.0, 1.0, 0.0, 0.0, 2.0]);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let mut bytes = fann(2, 2, &[1.0; 4]);
        bytes[0] = b'X';
        assert!(matches!(read_vectors_from(bytes.as_slice()), Err(Error::Format { .. })));
        let bytes = fann(2, 2, &[1.0; 3]);
        assert!(matches!(read_vectors_from(bytes.as_slice()), Err(Error::Format { .. })));
        assert!(read_vectors_from(&b"FAN"[..]).is_err());
    }

    #[test]
    fn metadata_rejects_non_strings() {
        let err = read_metadata_from(&b"{\"a\":\"x\"}\n{\"a\":[\"x\",\"y\"]}\n"[..]);
        assert!(matches!(err, Err(Error::NonStringValue { row: 1, .. })));
        let err = read_metadata_from(&b"{\"a\":3}\n"[..]);
        assert!(matches!(err, Err(Error::NonStringValue { row: 0, .. })));
    }

    #[test]
    fn load_checks_row_counts() {
        let dir = tempfile::tempdir().unwrap();
        let vp = dir.path().join("v.fann");
        let mp = dir.path().join("m.jsonl");
        write_vectors(&vp, 2, &[3.0, 4.0, 1.0, 0.0, 0.0, 2.0]).unwrap();
        std::fs::write(&mp, "{\"a\":\"x\"}\n{\"a\":\"y\"}\n").unwrap();
        assert!(matches!(
            load_dataset(&vp, &mp),
            Err(Error::RowCountMismatch { vectors: 3, metadata: 2 })
        ));
        std::fs::write(&mp, "{\"a\":\"x\"}\n{\"a\":\"y\"}\n{}\n").unwrap();
        let ds = load_dataset(&vp, &mp).unwrap();
        assert_eq!(ds.vector(0), &[0.6, 0.8]);
        assert_eq!(ds.value(0, 2), None);
    }
}
