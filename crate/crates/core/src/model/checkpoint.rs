//! Binary checkpoint files.
//!
//! Layout: the 8-byte magic `DCRECKPT`, a little-endian `u32` format version,
//! a little-endian `u64` header length, the JSON header, then raw
//! little-endian tensor data. The header holds the model configuration, the
//! catalogue sizes and one entry per tensor with name, dtype, shape and byte
//! offset into the data section.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use super::{ModelConfig, Recommender};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DCRECKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    dtype: String,
    shape: Vec<usize>,
    offset: u64,
    bytes: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    writer: String,
    num_users: usize,
    num_items: usize,
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
}

fn dtype_tag(dt: DType) -> Result<&'static str> {
    match dt {
        DType::F32 => Ok("f32"),
        DType::F64 => Ok("f64"),
        other => Err(Error::Checkpoint(format!("unsupported dtype {other:?}"))),
    }
}

fn tensor_bytes(t: &Tensor) -> Result<Vec<u8>> {
    let flat = t.flatten_all()?;
    Ok(match t.dtype() {
        DType::F32 => flat.to_vec1::<f32>()?.iter().flat_map(|v| v.to_le_bytes()).collect(),
        DType::F64 => flat.to_vec1::<f64>()?.iter().flat_map(|v| v.to_le_bytes()).collect(),
        other => return Err(Error::Checkpoint(format!("unsupported dtype {other:?}"))),
    })
}

fn tensor_from_bytes(bytes: &[u8], dtype: &str, shape: &[usize]) -> Result<Tensor> {
    let dev = Device::Cpu;
    Ok(match dtype {
        "f32" => {
            let v: Vec<f32> = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
                .collect();
            Tensor::from_vec(v, shape, &dev)?
        }
        "f64" => {
            let v: Vec<f64> = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect();
            Tensor::from_vec(v, shape, &dev)?
        }
        other => return Err(Error::Checkpoint(format!("unknown dtype tag `{other}`"))),
    })
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &Recommender) -> Result<()> {
    let path = path.as_ref();
    let mut data = Vec::new();
    let mut tensors = Vec::new();
    for (name, var) in model.params().named() {
        let bytes = tensor_bytes(var.as_tensor())?;
        tensors.push(TensorEntry {
            name: name.clone(),
            dtype: dtype_tag(var.dtype())?.to_string(),
            shape: var.dims().to_vec(),
            offset: data.len() as u64,
            bytes: bytes.len() as u64,
        });
        data.extend_from_slice(&bytes);
    }
    let header = serde_json::to_vec(&Header {
        writer: crate::VERSION.to_string(),
        num_users: model.num_users(),
        num_items: model.num_items(),
        config: model.config().clone(),
        tensors,
    })?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let write = |w: &mut BufWriter<File>, b: &[u8]| w.write_all(b).map_err(|e| Error::io(path, e));
    write(&mut w, CHECKPOINT_MAGIC)?;
    write(&mut w, &CHECKPOINT_VERSION.to_le_bytes())?;
    write(&mut w, &(header.len() as u64).to_le_bytes())?;
    write(&mut w, &header)?;
    write(&mut w, &data)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Recommender> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < 20 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("missing magic bytes".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("format version {version}, expected {CHECKPOINT_VERSION}")));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let header_end = 20usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::Checkpoint("truncated header".into()))?;
    let header: Header = serde_json::from_slice(&bytes[20..header_end])?;
    let data = &bytes[header_end..];

    let model = Recommender::new(header.config, header.num_users, header.num_items, 0)?;
    let named = model.params().named();
    if named.len() != header.tensors.len() {
        return Err(Error::Checkpoint(format!(
            "{} tensors stored, model expects {}",
            header.tensors.len(),
            named.len()
        )));
    }
    for ((name, var), entry) in named.iter().zip(&header.tensors) {
        if *name != entry.name || var.dims() != entry.shape.as_slice() {
            return Err(Error::Checkpoint(format!(
                "tensor `{}` {:?} does not match expected `{name}` {:?}",
                entry.name,
                entry.shape,
                var.dims()
            )));
        }
        let start = entry.offset as usize;
        let end = start
            .checked_add(entry.bytes as usize)
            .filter(|&e| e <= data.len())
            .ok_or_else(|| Error::Checkpoint(format!("tensor `{name}` runs past end of file")))?;
        let t = tensor_from_bytes(&data[start..end], &entry.dtype, &entry.shape)?;
        if t.dtype() != var.dtype() {
            return Err(Error::Checkpoint(format!("tensor `{name}` has dtype {}", entry.dtype)));
        }
        var.set(&t)?;
    }
    Ok(model)
}
