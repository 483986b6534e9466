//! Minimal NPY (version 1.0) reader and writer.
//!
//! Only what the embedding store needs: C-order, little-endian `f4`/`f8`
//! matrices and `i4`/`i8` vectors. Anything else is a format error.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 6] = b"\x93NUMPY";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F4,
    F8,
    I4,
    I8,
}

impl Dtype {
    fn descr(self) -> &'static str {
        match self {
            Dtype::F4 => "<f4",
            Dtype::F8 => "<f8",
            Dtype::I4 => "<i4",
            Dtype::I8 => "<i8",
        }
    }

    fn size(self) -> usize {
        match self {
            Dtype::F4 | Dtype::I4 => 4,
            Dtype::F8 | Dtype::I8 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Header {
    pub dtype: Dtype,
    pub shape: Vec<usize>,
}

/// Raw array payload, already decoded to native values.
#[derive(Debug, Clone, PartialEq)]
pub enum NpyData {
    Float(Vec<f64>),
    Int(Vec<i64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NpyArray {
    pub header: Header,
    pub data: NpyData,
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Value of `'key': ...` in the header dict, up to the next top-level comma.
fn dict_value<'a>(dict: &'a str, key: &str) -> Option<&'a str> {
    let pat_single = format!("'{key}'");
    let pat_double = format!("\"{key}\"");
    let start = dict
        .find(&pat_single)
        .map(|i| i + pat_single.len())
        .or_else(|| dict.find(&pat_double).map(|i| i + pat_double.len()))?;
    let rest = dict[start..].trim_start().strip_prefix(':')?.trim_start();
    let mut depth = 0i32;
    for (i, c) in rest.char_indices() {
        match c {
            '(' | '[' => depth += 1,
            ')' | ']' => depth -= 1,
            ',' | '}' if depth == 0 => return Some(rest[..i].trim()),
            _ => {}
        }
        if depth == 0 && (c == ')' || c == ']') {
            return Some(rest[..=i].trim());
        }
    }
    None
}

fn parse_header_dict(dict: &str, path: &Path) -> Result<Header> {
    let descr = dict_value(dict, "descr").ok_or_else(|| format_err(path, "missing 'descr'"))?;
    let descr = descr.trim_matches(|c| c == '\'' || c == '"');
    let dtype = match descr {
        "<f4" => Dtype::F4,
        "<f8" => Dtype::F8,
        "<i4" => Dtype::I4,
        "<i8" => Dtype::I8,
        d if d.starts_with('>') => {
            return Err(format_err(path, format!("big-endian dtype {d} is not supported")))
        }
        d => return Err(format_err(path, format!("unsupported dtype {d}"))),
    };
    let fortran = dict_value(dict, "fortran_order")
        .ok_or_else(|| format_err(path, "missing 'fortran_order'"))?;
    match fortran {
        "False" => {}
        "True" => return Err(format_err(path, "fortran_order arrays are not supported")),
        other => return Err(format_err(path, format!("bad fortran_order {other}"))),
    }
    let shape = dict_value(dict, "shape").ok_or_else(|| format_err(path, "missing 'shape'"))?;
    let inner = shape
        .strip_prefix('(')
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| format_err(path, format!("bad shape {shape}")))?;
    let shape = inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| format_err(path, format!("bad shape entry {s}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Header { dtype, shape })
}

pub fn read_npy(path: &Path) -> Result<NpyArray> {
    let file = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let mut reader = BufReader::new(file);
    read_npy_from(&mut reader, path)
}

pub fn read_npy_from<R: Read>(reader: &mut R, path: &Path) -> Result<NpyArray> {
    let io_err = |e| Error::io(format!("reading {}", path.display()), e);
    let mut preamble = [0u8; 8];
    reader
        .read_exact(&mut preamble)
        .map_err(|_| format_err(path, "file too short for NPY preamble"))?;
    if &preamble[..6] != MAGIC {
        return Err(format_err(path, "bad magic string"));
    }
    let header_len = match preamble[6] {
        1 => {
            let mut b = [0u8; 2];
            reader.read_exact(&mut b).map_err(io_err)?;
            u16::from_le_bytes(b) as usize
        }
        2 | 3 => {
            let mut b = [0u8; 4];
            reader.read_exact(&mut b).map_err(io_err)?;
            u32::from_le_bytes(b) as usize
        }
        v => return Err(format_err(path, format!("unsupported NPY version {v}"))),
    };
    let mut dict = vec![0u8; header_len];
    reader
        .read_exact(&mut dict)
        .map_err(|_| format_err(path, "truncated header"))?;
    let dict = String::from_utf8(dict).map_err(|_| format_err(path, "header is not text"))?;
    let header = parse_header_dict(&dict, path)?;

    let count: usize = header.shape.iter().product();
    let mut raw = vec![0u8; count * header.dtype.size()];
    reader
        .read_exact(&mut raw)
        .map_err(|_| format_err(path, format!("payload shorter than shape {:?}", header.shape)))?;
    let mut extra = [0u8; 1];
    if reader.read(&mut extra).map_err(io_err)? != 0 {
        return Err(format_err(path, "trailing bytes after payload"));
    }
    let data = match header.dtype {
        Dtype::F4 => NpyData::Float(
            raw.chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
        ),
        Dtype::F8 => NpyData::Float(
            raw.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
        Dtype::I4 => NpyData::Int(
            raw.chunks_exact(4)
                .map(|c| i32::from_le_bytes(c.try_into().unwrap()) as i64)
                .collect(),
        ),
        Dtype::I8 => NpyData::Int(
            raw.chunks_exact(8)
                .map(|c| i64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
    };
    Ok(NpyArray { header, data })
}

fn header_bytes(dtype: Dtype, shape: &[usize]) -> Vec<u8> {
    let shape_str = match shape {
        [n] => format!("({n},)"),
        dims => format!(
            "({})",
            dims.iter().map(usize::to_string).collect::<Vec<_>>().join(", ")
        ),
    };
    let mut dict = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}",
        dtype.descr(),
        shape_str
    );
    // pad so that magic + version + length + dict is a multiple of 64
    let unpadded = MAGIC.len() + 2 + 2 + dict.len() + 1;
    dict.push_str(&" ".repeat((64 - unpadded % 64) % 64));
    dict.push('\n');
    let mut out = Vec::with_capacity(10 + dict.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(dict.len() as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    out
}

fn write_bytes(path: &Path, header: Vec<u8>, payload: impl Iterator<Item = u8>) -> Result<()> {
    let ctx = || format!("writing {}", path.display());
    let file = File::create(path).map_err(|e| Error::io(ctx(), e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&header).map_err(|e| Error::io(ctx(), e))?;
    let payload: Vec<u8> = payload.collect();
    w.write_all(&payload).map_err(|e| Error::io(ctx(), e))?;
    w.flush().map_err(|e| Error::io(ctx(), e))
}

/// Writes a row-major `rows x cols` matrix as `<f4` or `<f8`.
pub fn write_matrix(path: &Path, values: &[f64], rows: usize, cols: usize, dtype: Dtype) -> Result<()> {
    assert_eq!(values.len(), rows * cols, "matrix shape does not fit values");
    let header = header_bytes(dtype, &[rows, cols]);
    match dtype {
        Dtype::F4 => write_bytes(
            path,
            header,
            values.iter().flat_map(|&v| (v as f32).to_le_bytes()),
        ),
        Dtype::F8 => write_bytes(path, header, values.iter().flat_map(|v| v.to_le_bytes())),
        _ => Err(Error::InvalidInput("matrices must be float".into())),
    }
}

/// Writes a label vector as `<i8`.
pub fn write_labels(path: &Path, labels: &[i64]) -> Result<()> {
    write_bytes(
        path,
        header_bytes(Dtype::I8, &[labels.len()]),
        labels.iter().flat_map(|v| v.to_le_bytes()),
    )
}
