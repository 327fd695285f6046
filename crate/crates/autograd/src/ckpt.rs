//! Self-describing checkpoint container.
//!
//! Layout: an 8-byte magic, a u64 little-endian JSON header length, the JSON
//! header, then raw little-endian f64 tensor data in header order. The header
//! carries a format version, caller metadata, and per-tensor name/shape.
//! Writes go through a temp file and an atomic rename.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use crate::{GradError, Result, Scalar};

const MAGIC: &[u8; 8] = b"TDCKPT01";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    meta: serde_json::Value,
    tensors: Vec<TensorDesc>,
}

#[derive(Serialize, Deserialize)]
struct TensorDesc {
    name: String,
    shape: Vec<usize>,
}

pub struct Archive {
    pub meta: serde_json::Value,
    pub tensors: Vec<(String, ArrayD<f64>)>,
}

impl Archive {
    pub fn tensor_map<F: Scalar>(&self) -> HashMap<String, ArrayD<F>> {
        self.tensors
            .iter()
            .map(|(n, t)| (n.clone(), t.mapv(|x| F::f(x))))
            .collect()
    }
}

/// Writes named tensors plus caller metadata. Tensor values are stored as
/// f64 so f32 round trips are exact.
pub fn save<F: Scalar, P: AsRef<Path>>(
    path: P,
    meta: &serde_json::Value,
    tensors: &[(String, ArrayD<F>)],
) -> Result<()> {
    let path = path.as_ref();
    let header = Header {
        format_version: FORMAT_VERSION,
        meta: meta.clone(),
        tensors: tensors
            .iter()
            .map(|(n, t)| TensorDesc {
                name: n.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let hjson = serde_json::to_vec(&header)
        .map_err(|e| GradError::Checkpoint(format!("header encode: {e}")))?;

    let tmp = path.with_extension("tmp");
    {
        let mut f = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
        f.write_all(MAGIC)?;
        f.write_all(&(hjson.len() as u64).to_le_bytes())?;
        f.write_all(&hjson)?;
        for (_, t) in tensors {
            let std_order = t.as_standard_layout();
            for v in std_order.iter() {
                f.write_all(&v.to64().to_le_bytes())?;
            }
        }
        f.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load<P: AsRef<Path>>(path: P) -> Result<Archive> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path.as_ref())?);
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(GradError::Checkpoint("bad magic".into()));
    }
    let mut lenb = [0u8; 8];
    f.read_exact(&mut lenb)?;
    let hlen = u64::from_le_bytes(lenb) as usize;
    let mut hjson = vec![0u8; hlen];
    f.read_exact(&mut hjson)?;
    let header: Header = serde_json::from_slice(&hjson)
        .map_err(|e| GradError::Checkpoint(format!("header decode: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(GradError::Checkpoint(format!(
            "unsupported format version {}",
            header.format_version
        )));
    }
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for desc in &header.tensors {
        let n: usize = desc.shape.iter().product();
        let mut data = vec![0f64; n];
        let mut buf = [0u8; 8];
        for d in data.iter_mut() {
            f.read_exact(&mut buf)?;
            *d = f64::from_le_bytes(buf);
        }
        let arr = ArrayD::from_shape_vec(IxDyn(&desc.shape), data)
            .map_err(|e| GradError::Checkpoint(format!("tensor {}: {e}", desc.name)))?;
        tensors.push((desc.name.clone(), arr));
    }
    Ok(Archive {
        meta: header.meta,
        tensors,
    })
}
