//! Little-endian binary containers.
//!
//! * `MXV1`: magic, `u32` rows, `u32` cols, then `rows * cols` `f32` values.
//! * `MXT1`: magic, `u32` snapshot count, then that many `MXV1` records.
//! * `MXI1`: magic, `u32` rows, `u32` cols, then `rows * cols` `u32` values.
//!
//! Traces do not carry epoch numbers; a trace read back is numbered `0..count`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::data::{DataMatrix, Embedding, EmbeddingTrace};
use crate::error::{Error, Result};

pub const MATRIX_MAGIC: &[u8; 4] = b"MXV1";
pub const TRACE_MAGIC: &[u8; 4] = b"MXT1";
pub const INDEX_MAGIC: &[u8; 4] = b"MXI1";

fn read_magic<R: Read>(r: &mut R, expected: &[u8; 4]) -> Result<()> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != expected {
        return Err(Error::Format(format!(
            "expected magic {:?}, found {:?}",
            String::from_utf8_lossy(expected),
            String::from_utf8_lossy(&magic)
        )));
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn dims_u32(rows: usize, cols: usize) -> Result<(u32, u32)> {
    let r = u32::try_from(rows).map_err(|_| Error::Format(format!("{rows} rows overflow u32")))?;
    let c = u32::try_from(cols).map_err(|_| Error::Format(format!("{cols} cols overflow u32")))?;
    Ok((r, c))
}

fn write_matrix_body<W: Write>(w: &mut W, rows: usize, cols: usize, values: &[f32]) -> Result<()> {
    let (r, c) = dims_u32(rows, cols)?;
    w.write_all(MATRIX_MAGIC)?;
    w.write_all(&r.to_le_bytes())?;
    w.write_all(&c.to_le_bytes())?;
    let mut buf = Vec::with_capacity(values.len() * 4);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn write_matrix<W: Write>(w: &mut W, m: &DataMatrix) -> Result<()> {
    write_matrix_body(w, m.rows(), m.cols(), m.values())
}

pub fn read_matrix<R: Read>(r: &mut R) -> Result<DataMatrix> {
    read_magic(r, MATRIX_MAGIC)?;
    let rows = read_u32(r)? as usize;
    let cols = read_u32(r)? as usize;
    let mut bytes = vec![0u8; rows * cols * 4];
    r.read_exact(&mut bytes)
        .map_err(|e| Error::Format(format!("truncated {rows}x{cols} matrix: {e}")))?;
    let values = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    DataMatrix::new(rows, cols, values)
}

pub fn write_embedding<W: Write>(w: &mut W, e: &Embedding) -> Result<()> {
    write_matrix_body(w, e.rows(), 2, e.values())
}

pub fn read_embedding<R: Read>(r: &mut R) -> Result<Embedding> {
    Embedding::from_matrix(read_matrix(r)?)
}

pub fn write_trace<W: Write>(w: &mut W, t: &EmbeddingTrace) -> Result<()> {
    let count = u32::try_from(t.len()).map_err(|_| Error::Format("trace too long".into()))?;
    w.write_all(TRACE_MAGIC)?;
    w.write_all(&count.to_le_bytes())?;
    for s in t.snapshots() {
        write_embedding(w, s)?;
    }
    Ok(())
}

pub fn read_trace<R: Read>(r: &mut R) -> Result<EmbeddingTrace> {
    read_magic(r, TRACE_MAGIC)?;
    let count = read_u32(r)? as usize;
    let mut t = EmbeddingTrace::new();
    for i in 0..count {
        t.push(i, read_embedding(r)?)?;
    }
    Ok(t)
}

pub fn write_indices<W: Write>(w: &mut W, rows: usize, cols: usize, values: &[u32]) -> Result<()> {
    if values.len() != rows * cols {
        return Err(Error::Shape(format!(
            "{} indices for a {rows}x{cols} table",
            values.len()
        )));
    }
    let (r, c) = dims_u32(rows, cols)?;
    w.write_all(INDEX_MAGIC)?;
    w.write_all(&r.to_le_bytes())?;
    w.write_all(&c.to_le_bytes())?;
    let mut buf = Vec::with_capacity(values.len() * 4);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Returns `(rows, cols, values)`.
pub fn read_indices<R: Read>(r: &mut R) -> Result<(usize, usize, Vec<u32>)> {
    read_magic(r, INDEX_MAGIC)?;
    let rows = read_u32(r)? as usize;
    let cols = read_u32(r)? as usize;
    let mut bytes = vec![0u8; rows * cols * 4];
    r.read_exact(&mut bytes)
        .map_err(|e| Error::Format(format!("truncated {rows}x{cols} index table: {e}")))?;
    let values = bytes
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Ok((rows, cols, values))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

pub fn save_matrix(path: impl AsRef<Path>, m: &DataMatrix) -> Result<()> {
    let mut w = create(path.as_ref())?;
    write_matrix(&mut w, m)?;
    w.flush()?;
    Ok(())
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<DataMatrix> {
    read_matrix(&mut open(path.as_ref())?)
}

pub fn save_embedding(path: impl AsRef<Path>, e: &Embedding) -> Result<()> {
    let mut w = create(path.as_ref())?;
    write_embedding(&mut w, e)?;
    w.flush()?;
    Ok(())
}

pub fn load_embedding(path: impl AsRef<Path>) -> Result<Embedding> {
    read_embedding(&mut open(path.as_ref())?)
}

pub fn save_trace(path: impl AsRef<Path>, t: &EmbeddingTrace) -> Result<()> {
    let mut w = create(path.as_ref())?;
    write_trace(&mut w, t)?;
    w.flush()?;
    Ok(())
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<EmbeddingTrace> {
    read_trace(&mut open(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn matrix_layout_is_bit_exact() {
        let m = DataMatrix::new(1, 2, vec![1.0, -2.5]).unwrap();
        let mut buf = Vec::new();
        write_matrix(&mut buf, &m).unwrap();
        let mut expected = b"MXV1".to_vec();
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&2u32.to_le_bytes());
        expected.extend_from_slice(&1.0f32.to_le_bytes());
        expected.extend_from_slice(&(-2.5f32).to_le_bytes());
        assert_eq!(buf, expected);
    }

    #[test]
    fn trace_layout_prefixes_count() {
        let mut t = EmbeddingTrace::new();
        t.push(0, Embedding::from_points(&[[1.0, 2.0]])).unwrap();
        t.push(1, Embedding::from_points(&[[3.0, 4.0]])).unwrap();
        let mut buf = Vec::new();
        write_trace(&mut buf, &t).unwrap();
        assert_eq!(&buf[..4], b"MXT1");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 2);
        assert_eq!(&buf[8..12], b"MXV1");
        assert_eq!(buf.len(), 8 + 2 * (12 + 8));
        assert_eq!(read_trace(&mut buf.as_slice()).unwrap(), t);
    }

    #[test]
    fn wrong_magic_and_truncation_are_rejected() {
        let mut buf = Vec::new();
        write_indices(&mut buf, 1, 2, &[3, 4]).unwrap();
        assert!(read_matrix(&mut buf.as_slice()).is_err());
        assert_eq!(read_indices(&mut buf.as_slice()).unwrap(), (1, 2, vec![3, 4]));
        buf.truncate(buf.len() - 1);
        assert!(read_indices(&mut buf.as_slice()).is_err());
    }

    proptest! {
        #[test]
        fn matrix_round_trip(rows in 0usize..6, cols in 0usize..6, seed in any::<u64>()) {
            let values: Vec<f32> = (0..rows * cols)
                .map(|i| f32::from_bits((seed as u32).wrapping_mul(i as u32 + 1) & 0x7f7f_ffff))
                .collect();
            let m = DataMatrix::new(rows, cols, values).unwrap();
            let mut buf = Vec::new();
            write_matrix(&mut buf, &m).unwrap();
            let back = read_matrix(&mut buf.as_slice()).unwrap();
            prop_assert_eq!(back.rows(), rows);
            prop_assert_eq!(back.cols(), cols);
            let same = back.values().iter().zip(m.values()).all(|(a, b)| a.to_bits() == b.to_bits());
            prop_assert!(same);
        }
    }
}
