//! Versioned binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "CDRL" | u32 version | u64 step | u64 seed | u64 stream | u64 n_records
//! record*: u32 name_len | name (UTF-8) | u8 dtype | u8 rank | u64 dims[rank] | payload
//! ```
//!
//! Dtypes: 0 = f32, 1 = f64, 2 = raw bytes (rank must be 1). Round-trips are
//! bit-exact.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::array::NumArray;
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::NnError;

pub const MAGIC: &[u8; 4] = b"CDRL";
pub const VERSION: u32 = 1;

pub const DTYPE_F32: u8 = 0;
pub const DTYPE_F64: u8 = 1;
pub const DTYPE_BYTES: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CheckpointHeader {
    pub step: u64,
    pub seed: u64,
    pub stream: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RecordPayload {
    F32 { dims: Vec<u64>, data: Vec<f32> },
    F64 { dims: Vec<u64>, data: Vec<f64> },
    Bytes(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub name: String,
    pub payload: RecordPayload,
}

impl Record {
    pub fn from_array<S: Scalar>(name: &str, arr: &NumArray<S>) -> Self {
        let dims: Vec<u64> = arr.shape().iter().map(|&d| d as u64).collect();
        let payload = match S::DTYPE {
            DTYPE_F32 => RecordPayload::F32 {
                dims,
                data: arr.as_slice().iter().map(|v| v.as_f64() as f32).collect(),
            },
            _ => RecordPayload::F64 {
                dims,
                data: arr.as_slice().iter().map(|v| v.as_f64()).collect(),
            },
        };
        Self { name: name.to_string(), payload }
    }

    pub fn bytes(name: &str, data: Vec<u8>) -> Self {
        Self { name: name.to_string(), payload: RecordPayload::Bytes(data) }
    }

    /// Converts a float record back into an array of scalar type `S`,
    /// erroring when the stored dtype does not match.
    pub fn to_array<S: Scalar>(&self) -> Result<NumArray<S>, NnError> {
        let (dims, data): (Vec<usize>, Vec<S>) = match &self.payload {
            RecordPayload::F32 { dims, data } if S::DTYPE == DTYPE_F32 => (
                dims.iter().map(|&d| d as usize).collect(),
                data.iter().map(|&v| S::of(v as f64)).collect(),
            ),
            RecordPayload::F64 { dims, data } if S::DTYPE == DTYPE_F64 => (
                dims.iter().map(|&d| d as usize).collect(),
                data.iter().map(|&v| S::of(v)).collect(),
            ),
            RecordPayload::Bytes(_) => {
                return Err(NnError::Checkpoint(format!(
                    "record {} holds raw bytes, not floats",
                    self.name
                )))
            }
            _ => {
                return Err(NnError::Checkpoint(format!(
                    "record {} dtype does not match requested scalar type",
                    self.name
                )))
            }
        };
        Ok(NumArray::from_vec(&dims, data))
    }
}

pub fn write_checkpoint(
    path: &Path,
    header: CheckpointHeader,
    records: &[Record],
) -> Result<(), NnError> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&header.step.to_le_bytes());
    buf.extend_from_slice(&header.seed.to_le_bytes());
    buf.extend_from_slice(&header.stream.to_le_bytes());
    buf.extend_from_slice(&(records.len() as u64).to_le_bytes());
    for r in records {
        let name = r.name.as_bytes();
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name);
        match &r.payload {
            RecordPayload::F32 { dims, data } => {
                buf.push(DTYPE_F32);
                write_dims(&mut buf, dims);
                for v in data {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
            }
            RecordPayload::F64 { dims, data } => {
                buf.push(DTYPE_F64);
                write_dims(&mut buf, dims);
                for v in data {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
            }
            RecordPayload::Bytes(data) => {
                buf.push(DTYPE_BYTES);
                buf.push(1);
                buf.extend_from_slice(&(data.len() as u64).to_le_bytes());
                buf.extend_from_slice(data);
            }
        }
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| NnError::Checkpoint(format!("{e}")))?;
    }
    let mut f = fs::File::create(path).map_err(|e| NnError::Checkpoint(format!("{e}")))?;
    f.write_all(&buf).map_err(|e| NnError::Checkpoint(format!("{e}")))?;
    Ok(())
}

fn write_dims(buf: &mut Vec<u8>, dims: &[u64]) {
    buf.push(dims.len() as u8);
    for d in dims {
        buf.extend_from_slice(&d.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        if self.pos + n > self.buf.len() {
            return Err(NnError::Checkpoint(format!(
                "truncated checkpoint: wanted {n} bytes at offset {}, file has {}",
                self.pos,
                self.buf.len()
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, NnError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, NnError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_checkpoint(path: &Path) -> Result<(CheckpointHeader, Vec<Record>), NnError> {
    let buf = fs::read(path)
        .map_err(|e| NnError::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
    let mut r = Reader { buf: &buf, pos: 0 };
    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(NnError::Checkpoint(format!(
            "bad magic {magic:?}, not a checkpoint file"
        )));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(NnError::Checkpoint(format!(
            "unsupported checkpoint version {version} (expected {VERSION})"
        )));
    }
    let header = CheckpointHeader { step: r.u64()?, seed: r.u64()?, stream: r.u64()? };
    let n = r.u64()? as usize;
    let mut records = Vec::with_capacity(n);
    for _ in 0..n {
        let name_len = r.u32()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|e| NnError::Checkpoint(format!("record name not UTF-8: {e}")))?;
        let dtype = r.u8()?;
        let rank = r.u8()? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u64()?);
        }
        let count: u64 = dims.iter().product();
        let payload = match dtype {
            DTYPE_F32 => {
                let raw = r.take(count as usize * 4)?;
                let data = raw
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                RecordPayload::F32 { dims, data }
            }
            DTYPE_F64 => {
                let raw = r.take(count as usize * 8)?;
                let data = raw
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                RecordPayload::F64 { dims, data }
            }
            DTYPE_BYTES => {
                if rank != 1 {
                    return Err(NnError::Checkpoint(format!(
                        "byte record {name} has rank {rank}, expected 1"
                    )));
                }
                RecordPayload::Bytes(r.take(count as usize)?.to_vec())
            }
            other => {
                return Err(NnError::Checkpoint(format!(
                    "record {name} has unknown dtype code {other}"
                )))
            }
        };
        records.push(Record { name, payload });
    }
    Ok((header, records))
}

/// Serializes every parameter of a store, preserving insertion order.
pub fn store_to_records<S: Scalar>(store: &ParamStore<S>) -> Vec<Record> {
    store
        .iter()
        .map(|e| Record::from_array(&e.name, &e.value))
        .collect()
}
