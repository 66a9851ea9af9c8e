//! NPY version 1.0 reader and writer, restricted to little-endian `f32`,
//! C order, and one or two dimensions.

use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::quant::ensure_finite;

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const PREAMBLE_LEN: usize = 10;
const ALIGN: usize = 64;

/// Decoded tensor payload.
#[derive(Debug, Clone, PartialEq)]
pub struct NpyTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl NpyTensor {
    pub fn into_matrix(self) -> Result<Array2<f64>> {
        match self.shape[..] {
            [rows, cols] => Array2::from_shape_vec((rows, cols), self.data.into_iter().map(f64::from).collect())
                .map_err(|e| Error::format("shape", e.to_string())),
            _ => Err(Error::format("shape", format!("expected a 2-D tensor, found shape {:?}", self.shape))),
        }
    }

    pub fn into_vector(self) -> Result<Vec<f64>> {
        match self.shape[..] {
            [_] => Ok(self.data.into_iter().map(f64::from).collect()),
            _ => Err(Error::format("shape", format!("expected a 1-D tensor, found shape {:?}", self.shape))),
        }
    }
}

fn header_text(shape: &[usize]) -> String {
    let dims = match shape {
        [n] => format!("({n},)"),
        _ => format!("({})", shape.iter().map(usize::to_string).collect::<Vec<_>>().join(", ")),
    };
    let dict = format!("{{'descr': '<f4', 'fortran_order': False, 'shape': {dims}, }}");
    // Pad with spaces so the data section starts on a 64-byte boundary.
    let unpadded = PREAMBLE_LEN + dict.len() + 1;
    let pad = (ALIGN - unpadded % ALIGN) % ALIGN;
    format!("{dict}{}\n", " ".repeat(pad))
}

pub fn encode(shape: &[usize], data: &[f32]) -> Result<Vec<u8>> {
    if shape.is_empty() || shape.len() > 2 {
        return Err(Error::data(format!("only 1-D and 2-D tensors are written, got shape {shape:?}")));
    }
    if shape.contains(&0) {
        return Err(Error::data(format!("refusing to write an empty tensor of shape {shape:?}")));
    }
    if shape.iter().product::<usize>() != data.len() {
        return Err(Error::data(format!("shape {shape:?} does not match {} values", data.len())));
    }
    if let Some(v) = data.iter().find(|v| !v.is_finite()) {
        return Err(Error::data(format!("refusing to write non-finite value {v}")));
    }
    let header = header_text(shape);
    let header_len = u16::try_from(header.len()).map_err(|_| Error::data("NPY header too long"))?;
    let mut out = Vec::with_capacity(PREAMBLE_LEN + header.len() + 4 * data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&header_len.to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn dict_value<'a>(header: &'a str, key: &str) -> Result<&'a str> {
    let needle = format!("'{key}':");
    let start = header.find(&needle).ok_or_else(|| Error::format(key, "missing from header"))? + needle.len();
    Ok(header[start..].trim_start())
}

fn parse_shape(header: &str) -> Result<Vec<usize>> {
    let rest = dict_value(header, "shape")?;
    let inner = rest
        .strip_prefix('(')
        .and_then(|r| r.split_once(')'))
        .map(|(inner, _)| inner)
        .ok_or_else(|| Error::format("shape", "expected a tuple"))?;
    let dims = inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>().map_err(|_| Error::format("shape", format!("bad dimension `{s}`"))))
        .collect::<Result<Vec<_>>>()?;
    if dims.is_empty() || dims.len() > 2 || dims.contains(&0) {
        return Err(Error::format("shape", format!("unsupported shape {dims:?} (need 1-D or 2-D, non-empty)")));
    }
    Ok(dims)
}

pub fn decode(bytes: &[u8]) -> Result<NpyTensor> {
    if bytes.len() < PREAMBLE_LEN || &bytes[..6] != MAGIC {
        return Err(Error::format("magic", "not an NPY file"));
    }
    if bytes[6..8] != [1, 0] {
        return Err(Error::format("version", format!("unsupported NPY version {}.{} (need 1.0)", bytes[6], bytes[7])));
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let data_start = PREAMBLE_LEN + header_len;
    let header = bytes.get(PREAMBLE_LEN..data_start).ok_or_else(|| Error::format("header", "truncated header"))?;
    let header = std::str::from_utf8(header).map_err(|_| Error::format("header", "header is not ASCII"))?;

    let descr = dict_value(header, "descr")?;
    let descr = descr
        .strip_prefix('\'')
        .and_then(|d| d.split_once('\''))
        .map(|(d, _)| d)
        .ok_or_else(|| Error::format("descr", "expected a quoted dtype string"))?;
    if descr != "<f4" {
        return Err(Error::format("descr", format!("unsupported dtype '{descr}' (need '<f4')")));
    }
    let fortran = dict_value(header, "fortran_order")?;
    if fortran.starts_with("True") {
        return Err(Error::format("fortran_order", "unsupported layout: Fortran order"));
    } else if !fortran.starts_with("False") {
        return Err(Error::format("fortran_order", "expected True or False"));
    }
    let shape = parse_shape(header)?;

    let count: usize = shape.iter().product();
    let payload = &bytes[data_start..];
    if payload.len() != 4 * count {
        return Err(Error::format(
            "data",
            format!("expected {} bytes for shape {shape:?}, found {}", 4 * count, payload.len()),
        ));
    }
    let data = payload.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    Ok(NpyTensor { shape, data })
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<NpyTensor> {
    decode(&super::read_bytes(path)?)
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    read_tensor(path)?.into_matrix()
}

pub fn read_vector(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    read_tensor(path)?.into_vector()
}

pub fn write_tensor(path: impl AsRef<Path>, shape: &[usize], data: &[f32]) -> Result<()> {
    super::write_atomic(path, &encode(shape, data)?)
}

/// Values are narrowed to `f32`.
pub fn write_matrix(path: impl AsRef<Path>, matrix: &Array2<f64>) -> Result<()> {
    ensure_finite(matrix.iter(), "matrix")?;
    let data: Vec<f32> = matrix.iter().map(|&v| v as f32).collect();
    write_tensor(path, &[matrix.nrows(), matrix.ncols()], &data)
}

pub fn write_vector(path: impl AsRef<Path>, values: &[f64]) -> Result<()> {
    ensure_finite(values, "vector")?;
    let data: Vec<f32> = values.iter().map(|&v| v as f32).collect();
    write_tensor(path, &[values.len()], &data)
}
