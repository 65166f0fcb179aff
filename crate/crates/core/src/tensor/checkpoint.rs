//! Checkpoint files: one JSON manifest line, then raw little-endian arrays
//! in manifest order.

use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

const FORMAT: &str = "gineplus-checkpoint";

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    precision: String,
    meta: serde_json::Value,
    tensors: Vec<Entry>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Free-form metadata (model config, run spec, ...).
    pub meta: serde_json::Value,
    pub tensors: IndexMap<String, Tensor>,
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let header = Header {
        format: FORMAT.into(),
        version: 1,
        precision: "f64".into(),
        meta: ckpt.meta.clone(),
        tensors: ckpt
            .tensors
            .iter()
            .map(|(name, t)| Entry {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let mut bytes = serde_json::to_vec(&header)?;
    bytes.push(b'\n');
    for t in ckpt.tensors.values() {
        for v in t.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let split = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Checkpoint("missing manifest line".into()))?;
    let header: Header = serde_json::from_slice(&bytes[..split])
        .map_err(|e| Error::Checkpoint(format!("bad manifest: {e}")))?;
    if header.format != FORMAT {
        return Err(Error::Checkpoint(format!(
            "unknown format `{}`",
            header.format
        )));
    }
    let width = match header.precision.as_str() {
        "f64" => 8,
        "f32" => 4,
        other => {
            return Err(Error::Checkpoint(format!(
                "unsupported precision `{other}`"
            )))
        }
    };
    let mut body = &bytes[split + 1..];
    let mut tensors = IndexMap::with_capacity(header.tensors.len());
    for entry in header.tensors {
        let n: usize = entry.shape.iter().product();
        if body.len() < n * width {
            return Err(Error::Checkpoint(format!(
                "truncated data for `{}`",
                entry.name
            )));
        }
        let (chunk, rest) = body.split_at(n * width);
        body = rest;
        let data = chunk
            .chunks_exact(width)
            .map(|c| match width {
                8 => f64::from_le_bytes(c.try_into().expect("8 bytes")),
                _ => f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))),
            })
            .collect();
        tensors.insert(entry.name, Tensor::new(entry.shape, data)?);
    }
    if !body.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", body.len())));
    }
    Ok(Checkpoint {
        meta: header.meta,
        tensors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(values in proptest::collection::vec(any::<f64>(), 0..40), cols in 1usize..5) {
            let rows = values.len() / cols;
            let t = Tensor::new(vec![rows, cols], values[..rows * cols].to_vec()).unwrap();
            let ckpt = Checkpoint {
                meta: serde_json::json!({"k": "v"}),
                tensors: IndexMap::from([("a".to_string(), t), ("b".to_string(), Tensor::scalar(-0.0))]),
            };
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("c.ckpt");
            save_checkpoint(&path, &ckpt).unwrap();
            let back = load_checkpoint(&path).unwrap();
            prop_assert_eq!(&back.meta, &ckpt.meta);
            for ((n1, t1), (n2, t2)) in back.tensors.iter().zip(&ckpt.tensors) {
                prop_assert_eq!(n1, n2);
                prop_assert_eq!(t1.shape(), t2.shape());
                let b1: Vec<u64> = t1.data().iter().map(|v| v.to_bits()).collect();
                let b2: Vec<u64> = t2.data().iter().map(|v| v.to_bits()).collect();
                prop_assert_eq!(b1, b2);
            }
        }
    }

    #[test]
    fn rejects_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ckpt");
        let ckpt = Checkpoint {
            meta: serde_json::Value::Null,
            tensors: IndexMap::from([("a".to_string(), Tensor::zeros(vec![2, 2]))]),
        };
        save_checkpoint(&path, &ckpt).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.pop();
        fs::write(&path, &bytes).unwrap();
        assert!(load_checkpoint(&path).is_err());
        assert!(load_checkpoint(&dir.path().join("missing")).is_err());
    }

    #[test]
    fn reads_single_precision() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ckpt");
        let mut bytes = br#"{"format":"gineplus-checkpoint","version":1,"precision":"f32","meta":null,"tensors":[{"name":"x","shape":[2]}]}"#.to_vec();
        bytes.push(b'\n');
        bytes.extend_from_slice(&1.5f32.to_le_bytes());
        bytes.extend_from_slice(&(-2.0f32).to_le_bytes());
        fs::write(&path, bytes).unwrap();
        let c = load_checkpoint(&path).unwrap();
        assert_eq!(c.tensors["x"].data(), &[1.5, -2.0]);
    }
}
