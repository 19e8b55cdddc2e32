//! NPY v1.0 reader/writer for C-ordered little-endian arrays.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::scalar::Scalar;

const MAGIC: &[u8; 6] = b"\x93NUMPY";

#[derive(Clone, Debug, PartialEq)]
pub enum NpyData {
    F64(Vec<f64>),
    F32(Vec<f32>),
    I64(Vec<i64>),
    I32(Vec<i32>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct NpyArray {
    pub shape: Vec<usize>,
    pub data: NpyData,
}

impl NpyArray {
    pub fn len(&self) -> usize {
        match &self.data {
            NpyData::F64(v) => v.len(),
            NpyData::F32(v) => v.len(),
            NpyData::I64(v) => v.len(),
            NpyData::I32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Values widened to `f64`.
    pub fn to_f64(&self) -> Vec<f64> {
        match &self.data {
            NpyData::F64(v) => v.clone(),
            NpyData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            NpyData::I64(v) => v.iter().map(|&x| x as f64).collect(),
            NpyData::I32(v) => v.iter().map(|&x| x as f64).collect(),
        }
    }
}

fn dtype_width(descr: &str) -> Result<usize> {
    match descr {
        "<f8" | "<i8" => Ok(8),
        "<f4" | "<i4" => Ok(4),
        other => Err(Error::NpyDtype(other.to_string())),
    }
}

/// Parses NPY bytes (format version 1.0).
pub fn parse_npy(bytes: &[u8]) -> Result<NpyArray> {
    if bytes.len() < 6 || &bytes[..6] != MAGIC {
        return Err(Error::NpyMagic);
    }
    if bytes.len() < 10 {
        return Err(Error::NpyTruncated {
            expected: 10,
            found: bytes.len(),
        });
    }
    let (major, minor) = (bytes[6], bytes[7]);
    if (major, minor) != (1, 0) {
        return Err(Error::NpyVersion(major, minor));
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let data_start = 10 + header_len;
    if bytes.len() < data_start {
        return Err(Error::NpyTruncated {
            expected: data_start,
            found: bytes.len(),
        });
    }
    let header = std::str::from_utf8(&bytes[10..data_start])
        .map_err(|_| Error::NpyHeader("header is not valid ASCII".into()))?;
    let header = parse_header(header)?;
    if header.fortran_order {
        return Err(Error::NpyOrder);
    }
    let width = dtype_width(&header.descr)?;
    let count: usize = header.shape.iter().product();
    let expected = data_start + count * width;
    if bytes.len() < expected {
        return Err(Error::NpyTruncated {
            expected,
            found: bytes.len(),
        });
    }
    let payload = &bytes[data_start..expected];
    let data = match header.descr.as_str() {
        "<f8" => NpyData::F64(payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()),
        "<f4" => NpyData::F32(payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect()),
        "<i8" => NpyData::I64(payload.chunks_exact(8).map(|c| i64::from_le_bytes(c.try_into().unwrap())).collect()),
        "<i4" => NpyData::I32(payload.chunks_exact(4).map(|c| i32::from_le_bytes(c.try_into().unwrap())).collect()),
        _ => unreachable!("width checked"),
    };
    Ok(NpyArray {
        shape: header.shape,
        data,
    })
}

struct Header {
    descr: String,
    fortran_order: bool,
    shape: Vec<usize>,
}

/// Parses the Python-literal header dict, e.g.
/// `{'descr': '<f8', 'fortran_order': False, 'shape': (7, 3), }`.
fn parse_header(text: &str) -> Result<Header> {
    let bad = |m: &str| Error::NpyHeader(m.to_string());
    let body = text
        .trim()
        .strip_prefix('{')
        .and_then(|t| t.trim_end().strip_suffix('}'))
        .ok_or_else(|| bad("header is not a dict literal"))?;

    let value_after = |key: &str| -> Result<&str> {
        let needle_single = format!("'{key}'");
        let needle_double = format!("\"{key}\"");
        let pos = body
            .find(&needle_single)
            .map(|p| p + needle_single.len())
            .or_else(|| body.find(&needle_double).map(|p| p + needle_double.len()))
            .ok_or_else(|| bad(&format!("missing key '{key}'")))?;
        let rest = body[pos..].trim_start();
        rest.strip_prefix(':').map(str::trim_start).ok_or_else(|| bad("expected ':'"))
    };

    let descr_raw = value_after("descr")?;
    let quote = descr_raw.chars().next().ok_or_else(|| bad("empty descr"))?;
    if quote != '\'' && quote != '"' {
        return Err(bad("descr is not a string"));
    }
    let end = descr_raw[1..].find(quote).ok_or_else(|| bad("unterminated descr"))?;
    let mut descr = descr_raw[1..1 + end].to_string();
    // single-byte and native-order aliases numpy may emit on little-endian hosts
    if descr.starts_with('=') {
        descr.replace_range(0..1, "<");
    }

    let fortran_raw = value_after("fortran_order")?;
    let fortran_order = if fortran_raw.starts_with("False") {
        false
    } else if fortran_raw.starts_with("True") {
        true
    } else {
        return Err(bad("fortran_order is not a boolean"));
    };

    let shape_raw = value_after("shape")?;
    let shape_raw = shape_raw.strip_prefix('(').ok_or_else(|| bad("shape is not a tuple"))?;
    let close = shape_raw.find(')').ok_or_else(|| bad("unterminated shape"))?;
    let shape = shape_raw[..close]
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.trim_end_matches('L').parse::<usize>().map_err(|_| bad("shape entry is not an integer")))
        .collect::<Result<Vec<_>>>()?;

    Ok(Header {
        descr,
        fortran_order,
        shape,
    })
}

fn header_bytes(descr: &str, shape: &[usize]) -> Vec<u8> {
    let shape_text = match shape {
        [n] => format!("({n},)"),
        dims => format!("({})", dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")),
    };
    let mut dict = format!("{{'descr': '{descr}', 'fortran_order': False, 'shape': {shape_text}, }}");
    // magic + version + length field + dict + '\n' padded to a multiple of 64
    let unpadded = 10 + dict.len() + 1;
    let pad = (64 - unpadded % 64) % 64;
    dict.extend(std::iter::repeat_n(' ', pad));
    dict.push('\n');
    let mut out = Vec::with_capacity(10 + dict.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(dict.len() as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    out
}

/// Serializes `f64` values with the given shape.
pub fn encode_f64(values: &[f64], shape: &[usize]) -> Vec<u8> {
    let mut out = header_bytes("<f8", shape);
    out.reserve(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn encode_i64(values: &[i64], shape: &[usize]) -> Vec<u8> {
    let mut out = header_bytes("<i8", shape);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn read_npy(path: impl AsRef<Path>) -> Result<NpyArray> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
    parse_npy(&bytes)
}

/// Reads a 1-D or 2-D float array as a matrix. A 1-D array of length `n`
/// becomes a single `1 × n` row. 4-byte floats are widened.
pub fn read_matrix<T: Scalar>(path: impl AsRef<Path>) -> Result<Matrix<T>> {
    let arr = read_npy(path)?;
    if matches!(arr.data, NpyData::I32(_) | NpyData::I64(_)) {
        return Err(Error::NpyDtype("integer array where floats were expected".into()));
    }
    let (rows, cols) = match arr.shape.as_slice() {
        [n] => (1, *n),
        [r, c] => (*r, *c),
        other => return Err(Error::NpyHeader(format!("expected 1-D or 2-D array, got shape {other:?}"))),
    };
    Matrix::from_vec(rows, cols, arr.to_f64().into_iter().map(T::lit).collect())
}

/// Reads a vector stored either 1-D or as a 2-D array with one unit dimension.
pub fn read_vector<T: Scalar>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let arr = read_npy(path)?;
    match arr.shape.as_slice() {
        [_] | [1, _] | [_, 1] => {}
        other => return Err(Error::NpyHeader(format!("expected a vector, got shape {other:?}"))),
    }
    let v: Vec<T> = arr.to_f64().into_iter().map(T::lit).collect();
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("vector contains non-finite values"));
    }
    Ok(v)
}

/// Reads non-negative integer labels from an integer (or integral float) array.
pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let arr = read_npy(path)?;
    if arr.shape.len() > 2 || (arr.shape.len() == 2 && arr.shape[0] != 1 && arr.shape[1] != 1) {
        return Err(Error::NpyHeader(format!("expected a label vector, got shape {:?}", arr.shape)));
    }
    arr.to_f64()
        .into_iter()
        .map(|x| {
            if x >= 0.0 && x.fract() == 0.0 && x.is_finite() {
                Ok(x as usize)
            } else {
                Err(Error::invalid(format!("label {x} is not a non-negative integer")))
            }
        })
        .collect()
}

pub fn write_matrix<T: Scalar>(path: impl AsRef<Path>, m: &Matrix<T>) -> Result<()> {
    let values: Vec<f64> = m.as_slice().iter().map(|x| x.to_f64_lossless()).collect();
    write_bytes(path.as_ref(), &encode_f64(&values, &[m.rows(), m.cols()]))
}

pub fn write_vector<T: Scalar>(path: impl AsRef<Path>, v: &[T]) -> Result<()> {
    let values: Vec<f64> = v.iter().map(|x| x.to_f64_lossless()).collect();
    write_bytes(path.as_ref(), &encode_f64(&values, &[v.len()]))
}

pub fn write_labels(path: impl AsRef<Path>, labels: &[usize]) -> Result<()> {
    let values: Vec<i64> = labels.iter().map(|&l| l as i64).collect();
    write_bytes(path.as_ref(), &encode_i64(&values, &[labels.len()]))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::file(path, e))
}
