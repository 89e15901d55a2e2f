//! Binary tensor interchange format.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic   4 bytes  41 54 4e 53 ("ATNS")
//! version u16      currently 1
//! dtype   u8       0 = f32, 1 = f64
//! rank    u8
//! dims    rank x u32
//! payload product(dims) elements, row-major
//! ```
//!
//! Rank 0 is a single scalar. Several records may be concatenated in one
//! file; [`read_tensor`] consumes exactly one record from the stream.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::Matrix;

const MAGIC: [u8; 4] = *b"ATNS";
const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("bad magic bytes {0:02x?}, not an ATNS tensor")]
    BadMagic([u8; 4]),
    #[error("unsupported ATNS version {0}")]
    BadVersion(u16),
    #[error("unknown dtype tag {0}")]
    BadDtype(u8),
    #[error("dimension {0} does not fit the u32 header field")]
    DimOverflow(u64),
    #[error("truncated tensor: {0}")]
    Truncated(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn tag(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: TensorData,
}

impl Tensor {
    pub fn f32(dims: Vec<usize>, data: Vec<f32>) -> Self {
        assert_eq!(element_count(&dims), data.len(), "payload does not match dims");
        Tensor { dims, data: TensorData::F32(data) }
    }

    pub fn f64(dims: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(element_count(&dims), data.len(), "payload does not match dims");
        Tensor { dims, data: TensorData::F64(data) }
    }

    pub fn dtype(&self) -> Dtype {
        match self.data {
            TensorData::F32(_) => Dtype::F32,
            TensorData::F64(_) => Dtype::F64,
        }
    }

    pub fn len(&self) -> usize {
        match &self.data {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Copy of the payload widened to f64 regardless of stored dtype.
    pub fn to_f64(&self) -> Vec<f64> {
        match &self.data {
            TensorData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::F64(v) => v.clone(),
        }
    }

    pub fn from_matrix(m: &Matrix) -> Self {
        Tensor::f64(vec![m.rows(), m.cols()], m.data().to_vec())
    }

    pub fn into_matrix(&self) -> Result<Matrix, TensorError> {
        if self.dims.len() != 2 {
            return Err(TensorError::Truncated(format!(
                "expected rank 2 for a matrix, got rank {}",
                self.dims.len()
            )));
        }
        Ok(Matrix::from_vec(self.dims[0], self.dims[1], self.to_f64()))
    }
}

fn element_count(dims: &[usize]) -> usize {
    dims.iter().product()
}

pub fn write_tensor<W: Write>(w: &mut W, t: &Tensor) -> Result<(), TensorError> {
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[t.dtype().tag(), dims_rank(&t.dims)?])?;
    for &d in &t.dims {
        let d32 =
            u32::try_from(d).map_err(|_| TensorError::DimOverflow(d as u64))?;
        w.write_all(&d32.to_le_bytes())?;
    }
    match &t.data {
        TensorData::F32(v) => {
            for x in v {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        TensorData::F64(v) => {
            for x in v {
                w.write_all(&x.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

fn dims_rank(dims: &[usize]) -> Result<u8, TensorError> {
    u8::try_from(dims.len()).map_err(|_| TensorError::DimOverflow(dims.len() as u64))
}

pub fn read_tensor<R: Read>(r: &mut R) -> Result<Tensor, TensorError> {
    let mut magic = [0u8; 4];
    read_exact(r, &mut magic, "magic")?;
    if magic != MAGIC {
        return Err(TensorError::BadMagic(magic));
    }
    let mut ver = [0u8; 2];
    read_exact(r, &mut ver, "version")?;
    let version = u16::from_le_bytes(ver);
    if version != VERSION {
        return Err(TensorError::BadVersion(version));
    }
    let mut head = [0u8; 2];
    read_exact(r, &mut head, "dtype/rank")?;
    let dtype = match head[0] {
        0 => Dtype::F32,
        1 => Dtype::F64,
        other => return Err(TensorError::BadDtype(other)),
    };
    let rank = head[1] as usize;
    let mut dims = Vec::with_capacity(rank);
    let mut count: u64 = 1;
    for _ in 0..rank {
        let mut d = [0u8; 4];
        read_exact(r, &mut d, "dims")?;
        let dim = u32::from_le_bytes(d) as u64;
        count = count
            .checked_mul(dim)
            .filter(|&c| c.checked_mul(dtype.size() as u64).is_some_and(|b| b <= isize::MAX as u64))
            .ok_or(TensorError::DimOverflow(dim))?;
        dims.push(dim as usize);
    }
    let count = count as usize;
    let data = match dtype {
        Dtype::F32 => {
            let mut v = vec![0f32; count];
            for x in v.iter_mut() {
                let mut b = [0u8; 4];
                read_exact(r, &mut b, "payload")?;
                *x = f32::from_le_bytes(b);
            }
            TensorData::F32(v)
        }
        Dtype::F64 => {
            let mut v = vec![0f64; count];
            for x in v.iter_mut() {
                let mut b = [0u8; 8];
                read_exact(r, &mut b, "payload")?;
                *x = f64::from_le_bytes(b);
            }
            TensorData::F64(v)
        }
    };
    Ok(Tensor { dims, data })
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<(), TensorError> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            TensorError::Truncated(format!("ran out of bytes while reading {what}"))
        } else {
            TensorError::Io(e)
        }
    })
}

pub fn write_tensor_file<P: AsRef<Path>>(path: P, t: &Tensor) -> Result<(), TensorError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_tensor(&mut w, t)?;
    w.flush()?;
    Ok(())
}

pub fn read_tensor_file<P: AsRef<Path>>(path: P) -> Result<Tensor, TensorError> {
    let mut r = BufReader::new(File::open(path)?);
    read_tensor(&mut r)
}

/// Reads concatenated records until end of file.
pub fn read_all_tensors<P: AsRef<Path>>(path: P) -> Result<Vec<Tensor>, TensorError> {
    let bytes = std::fs::read(path)?;
    let mut cursor = std::io::Cursor::new(&bytes[..]);
    let mut out = Vec::new();
    while (cursor.position() as usize) < bytes.len() {
        out.push(read_tensor(&mut cursor)?);
    }
    Ok(out)
}
