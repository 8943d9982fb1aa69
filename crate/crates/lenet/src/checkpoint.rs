//! Binary checkpoint format.
//!
//! ```text
//! magic        8 bytes  "VLENET1\0"
//! version      u32      1
//! elem_bytes   u8       4 (f32) or 8 (f64)
//! arch         11 × u32 height, width, channels,
//!                       conv1 filters, kernel, pool,
//!                       conv2 filters, kernel, pool,
//!                       hidden, classes
//! activation   u8       0 = relu, 1 = tanh
//! n_tensors    u32      8
//! per tensor:  u32 ndim, ndim × u32 dims, payload (little-endian elements)
//! ```
//! All integers are little-endian.

use std::io::{Read, Write};

use crate::arch::{Activation, Architecture, ConvSpec};
use crate::error::{LeNetError, Result};
use crate::params::Params;
use crate::real::Real;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"VLENET1\0";
const VERSION: u32 = 1;

pub fn encode<T: Real>(params: &Params<T>) -> Vec<u8> {
    let a = params.arch();
    let mut out = Vec::with_capacity(64 + params.num_params() * T::BYTES);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(T::BYTES as u8);
    for v in [
        a.height,
        a.width,
        a.channels,
        a.conv1.filters,
        a.conv1.kernel,
        a.conv1.pool,
        a.conv2.filters,
        a.conv2.kernel,
        a.conv2.pool,
        a.hidden,
        a.classes,
    ] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.push(match a.activation {
        Activation::Relu => 0,
        Activation::Tanh => 1,
    });
    out.extend_from_slice(&(params.tensors().len() as u32).to_le_bytes());
    for t in params.tensors() {
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            v.write_le(&mut out);
        }
    }
    out
}

pub fn write<T: Real, W: Write>(params: &Params<T>, mut w: W) -> Result<()> {
    w.write_all(&encode(params))?;
    Ok(())
}

/// Header fields common to both precisions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub elem_bytes: u8,
    pub arch: Architecture,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(LeNetError::Checkpoint(format!(
                "truncated at byte {} (need {n} more)",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
}

pub fn read_header(bytes: &[u8]) -> Result<Header> {
    parse_header(&mut Cursor { bytes, pos: 0 })
}

fn parse_header(c: &mut Cursor) -> Result<Header> {
    if c.take(8)? != MAGIC {
        return Err(LeNetError::Checkpoint("bad magic".into()));
    }
    let version = c.u32()?;
    if version != VERSION as usize {
        return Err(LeNetError::Checkpoint(format!(
            "unsupported version {version}"
        )));
    }
    let elem_bytes = c.u8()?;
    let mut dims = [0usize; 11];
    for d in dims.iter_mut() {
        *d = c.u32()?;
    }
    let activation = match c.u8()? {
        0 => Activation::Relu,
        1 => Activation::Tanh,
        other => {
            return Err(LeNetError::Checkpoint(format!(
                "unknown activation {other}"
            )))
        }
    };
    let arch = Architecture {
        height: dims[0],
        width: dims[1],
        channels: dims[2],
        conv1: ConvSpec {
            filters: dims[3],
            kernel: dims[4],
            pool: dims[5],
        },
        conv2: ConvSpec {
            filters: dims[6],
            kernel: dims[7],
            pool: dims[8],
        },
        hidden: dims[9],
        classes: dims[10],
        activation,
    };
    Ok(Header { elem_bytes, arch })
}

pub fn decode<T: Real>(bytes: &[u8]) -> Result<Params<T>> {
    let mut c = Cursor { bytes, pos: 0 };
    let header = parse_header(&mut c)?;
    if header.elem_bytes as usize != T::BYTES {
        return Err(LeNetError::Checkpoint(format!(
            "checkpoint stores {}-byte elements, requested {}",
            header.elem_bytes,
            T::BYTES
        )));
    }
    let n = c.u32()?;
    let mut tensors = Vec::with_capacity(n);
    for _ in 0..n {
        let ndim = c.u32()?;
        let shape = (0..ndim).map(|_| c.u32()).collect::<Result<Vec<_>>>()?;
        let len: usize = shape.iter().product();
        let payload = c.take(len * T::BYTES)?;
        let data = payload.chunks_exact(T::BYTES).map(T::read_le).collect();
        tensors.push(Tensor::from_vec(&shape, data)?);
    }
    if c.pos != bytes.len() {
        return Err(LeNetError::Checkpoint(format!(
            "{} trailing bytes",
            bytes.len() - c.pos
        )));
    }
    Params::from_tensors(&header.arch, tensors)
}

pub fn read<T: Real, R: Read>(mut r: R) -> Result<Params<T>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    decode(&bytes)
}
