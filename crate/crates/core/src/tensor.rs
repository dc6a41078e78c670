//! Row-major n-dimensional tensors and the binary `.b2dw` container.
//!
//! The NN engine is generic over the element type: f32 for normal runs,
//! f64 for oracle and gradient-check tests.

use std::path::Path;

use crate::error::{Error, Result};

/// Numeric element of a tensor (f32 or f64).
pub trait Element:
    num_traits::Float
    + num_traits::NumAssignOps
    + Copy
    + Default
    + Send
    + Sync
    + std::fmt::Debug
    + std::iter::Sum
    + 'static
{
    /// dtype code in the `.b2dw` container (0 = f32, 1 = f64).
    const DTYPE: u8;
    const BYTES: usize;

    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Element for f32 {
    const DTYPE: u8 = 0;
    const BYTES: usize = 4;

    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes[..4].try_into().unwrap())
    }
}

impl Element for f64 {
    const DTYPE: u8 = 1;
    const BYTES: usize = 8;

    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes[..8].try_into().unwrap())
    }
}

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T: Element = f32> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Element> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Tensor<T> {
        Tensor {
            shape: shape.to_vec(),
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Tensor<T>> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::shape(format!(
                "{} elements for shape {shape:?} (expected {expected})",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn from_f64_slice(shape: &[usize], data: &[f64]) -> Result<Tensor<T>> {
        Tensor::from_vec(shape, data.iter().map(|&v| T::from_f64(v)).collect())
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Flat offset of `[n, h, w, c]` in an NHWC tensor.
    #[inline]
    pub fn idx4(&self, n: usize, h: usize, w: usize, c: usize) -> usize {
        debug_assert_eq!(self.shape.len(), 4);
        ((n * self.shape[1] + h) * self.shape[2] + w) * self.shape[3] + c
    }

    #[inline]
    pub fn at4(&self, n: usize, h: usize, w: usize, c: usize) -> T {
        self.data[self.idx4(n, h, w, c)]
    }

    /// Flat offset of `[i, j]` in a matrix.
    #[inline]
    pub fn idx2(&self, i: usize, j: usize) -> usize {
        debug_assert_eq!(self.shape.len(), 2);
        i * self.shape[1] + j
    }

    pub fn reshaped(mut self, shape: &[usize]) -> Result<Tensor<T>> {
        let expected: usize = shape.iter().product();
        if expected != self.data.len() {
            return Err(Error::shape(format!(
                "cannot reshape {:?} ({} elements) to {shape:?}",
                self.shape,
                self.data.len()
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn to_f64(&self) -> Tensor<f64> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| Element::as_f64(*v)).collect(),
        }
    }
}

/// A tensor of either supported dtype, as stored in a container file.
#[derive(Debug, Clone, PartialEq)]
pub enum DynTensor {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
}

impl DynTensor {
    pub fn shape(&self) -> &[usize] {
        match self {
            DynTensor::F32(t) => &t.shape,
            DynTensor::F64(t) => &t.shape,
        }
    }
}

impl From<Tensor<f32>> for DynTensor {
    fn from(t: Tensor<f32>) -> Self {
        DynTensor::F32(t)
    }
}

impl From<Tensor<f64>> for DynTensor {
    fn from(t: Tensor<f64>) -> Self {
        DynTensor::F64(t)
    }
}

const MAGIC: &[u8; 4] = b"B2DW";
const VERSION: u16 = 1;

/// Serializes named tensors into the little-endian `.b2dw` container.
pub fn write_tensors(path: impl AsRef<Path>, entries: &[(String, DynTensor)]) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, tensor) in entries {
        let name_bytes = name.as_bytes();
        out.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
        out.extend_from_slice(name_bytes);
        match tensor {
            DynTensor::F32(t) => write_entry(&mut out, t),
            DynTensor::F64(t) => write_entry(&mut out, t),
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn write_entry<T: Element>(out: &mut Vec<u8>, t: &Tensor<T>) {
    out.push(T::DTYPE);
    out.push(t.shape.len() as u8);
    for &d in &t.shape {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in &t.data {
        v.write_le(out);
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::parse(0, "truncated tensor container"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
}

/// Reads a `.b2dw` container written by `write_tensors`.
pub fn read_tensors(path: impl AsRef<Path>) -> Result<Vec<(String, DynTensor)>> {
    let bytes = std::fs::read(path)?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
    };
    if r.take(4)? != MAGIC {
        return Err(Error::parse(0, "bad magic, not a .b2dw container"));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::parse(0, format!("unsupported container version {version}")));
    }
    let count = r.u32()? as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| Error::parse(0, "tensor name is not UTF-8"))?;
        let dtype = r.u8()?;
        let rank = r.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let numel: usize = shape.iter().product();
        let tensor = match dtype {
            0 => {
                let raw = r.take(numel * 4)?;
                let data = raw.chunks_exact(4).map(f32::read_le).collect();
                DynTensor::F32(Tensor { shape, data })
            }
            1 => {
                let raw = r.take(numel * 8)?;
                let data = raw.chunks_exact(8).map(f64::read_le).collect();
                DynTensor::F64(Tensor { shape, data })
            }
            other => return Err(Error::parse(0, format!("unknown dtype code {other}"))),
        };
        entries.push((name, tensor));
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_shape() {
        assert!(Tensor::<f32>::from_vec(&[2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::<f32>::from_vec(&[2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn container_round_trip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.b2dw");
        let entries = vec![
            (
                "a.weight".to_string(),
                DynTensor::F32(Tensor::from_vec(&[2, 2], vec![1.5, -2.25, 0.0, 1e-20]).unwrap()),
            ),
            (
                "b.running_mean".to_string(),
                DynTensor::F64(
                    Tensor::from_vec(&[3], vec![std::f64::consts::PI, -1.0, 1e-300]).unwrap(),
                ),
            ),
        ];
        write_tensors(&path, &entries).unwrap();
        let back = read_tensors(&path).unwrap();
        assert_eq!(entries, back);
    }

    #[test]
    fn truncated_container_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.b2dw");
        let entries = vec![(
            "x".to_string(),
            DynTensor::F32(Tensor::from_vec(&[8], vec![1.0; 8]).unwrap()),
        )];
        write_tensors(&path, &entries).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        assert!(read_tensors(&path).is_err());
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.b2dw");
        std::fs::write(&path, b"NOPE\x01\x00\x00\x00\x00\x00").unwrap();
        assert!(read_tensors(&path).is_err());
    }
}
