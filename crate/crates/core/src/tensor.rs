//! Binary tensor container for embedding batches, with a CSV fallback for
//! small 2-D fixtures.
//!
//! Layout: `SEDT` magic, element-type byte (8 = little-endian f64), rank byte,
//! `rank` little-endian u64 dimensions, then the row-major payload.

use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayD, IxDyn};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SEDT";
pub const ELEM_F64: u8 = 8;

pub fn encode_tensor(array: &ArrayD<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(6 + 8 * array.ndim() + 8 * array.len());
    out.extend_from_slice(MAGIC);
    out.push(ELEM_F64);
    out.push(array.ndim() as u8);
    for &d in array.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in array.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_tensor(bytes: &[u8], path: &Path) -> Result<ArrayD<f64>> {
    let bad = |detail: String| Error::UnsupportedEncoding {
        path: path.to_path_buf(),
        detail,
    };
    if bytes.len() < 6 || &bytes[..4] != MAGIC {
        return Err(bad("missing SEDT magic".into()));
    }
    if bytes[4] != ELEM_F64 {
        return Err(bad(format!("element type {} is not f64", bytes[4])));
    }
    let rank = bytes[5] as usize;
    let header = 6 + 8 * rank;
    if bytes.len() < header {
        return Err(bad("truncated header".into()));
    }
    let dims: Vec<usize> = bytes[6..header]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| bad("dimensions overflow".into()))?;
    let payload = &bytes[header..];
    if Some(payload.len()) != count.checked_mul(8) {
        return Err(bad(format!("payload holds {} bytes, dims {dims:?} need {}", payload.len(), count * 8)));
    }
    let data: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ArrayD::from_shape_vec(IxDyn(&dims), data).map_err(|e| bad(e.to_string()))
}

pub fn write_tensor(path: &Path, array: &ArrayD<f64>) -> Result<()> {
    fs::write(path, encode_tensor(array)).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: &Path) -> Result<ArrayD<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensor(&bytes, path)
}

/// Comma-separated rows of numbers; blank lines and `#` comments are skipped.
pub fn read_csv_matrix(path: &Path) -> Result<Array2<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(path, i + 1, e))?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::parse(
                    path,
                    i + 1,
                    format!("{} fields, expected {}", row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    Array2::from_shape_vec((rows.len(), cols), rows.concat()).map_err(|e| Error::parse(path, 0, e))
}

pub fn write_csv_matrix(path: &Path, m: &Array2<f64>) -> Result<()> {
    let mut out = String::new();
    for row in m.rows() {
        let fields: Vec<String> = row.iter().map(f64::to_string).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a tensor by extension: `.csv` as a matrix, anything else as the binary container.
pub fn read_array(path: &Path) -> Result<ArrayD<f64>> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        Ok(read_csv_matrix(path)?.into_dyn())
    } else {
        read_tensor(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.sedt");
        let a = ArrayD::from_shape_fn(IxDyn(&[2, 3, 4]), |i| (i[0] * 12 + i[1] * 4 + i[2]) as f64 * 0.1 - 1.0);
        write_tensor(&p, &a).unwrap();
        assert_eq!(read_array(&p).unwrap(), a);
        let scalar = ArrayD::from_elem(IxDyn(&[]), 2.5);
        write_tensor(&p, &scalar).unwrap();
        assert_eq!(read_tensor(&p).unwrap(), scalar);
    }

    #[test]
    fn rejects_bad_headers() {
        let p = Path::new("x");
        assert!(decode_tensor(b"NOPE\x08\x00", p).is_err());
        let mut bytes = encode_tensor(&array![[1.0, 2.0]].into_dyn());
        bytes.pop();
        assert!(decode_tensor(&bytes, p).is_err());
        let mut bytes = encode_tensor(&array![1.0].into_dyn());
        bytes[4] = 4;
        assert!(decode_tensor(&bytes, p).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let m = array![[1.0, -0.5], [0.25, 3.0]];
        write_csv_matrix(&p, &m).unwrap();
        assert_eq!(read_array(&p).unwrap(), m.into_dyn());
        std::fs::write(&p, "1,2\n3\n").unwrap();
        assert!(read_csv_matrix(&p).is_err());
    }
}
