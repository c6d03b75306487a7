//! Named tensor bundles stored like trace payloads: a `manifest.json` with a
//! free-form header plus one raw little-endian `f32` file per tensor.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{LocalityError, Result};
use crate::trace::{read_payload, write_payload, MANIFEST};

#[derive(Debug, Serialize, Deserialize)]
struct BundleManifest {
    version: u32,
    header: Value,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    file: String,
    crc32: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn from_f64(name: &str, shape: &[usize], data: impl IntoIterator<Item = f64>) -> Self {
        Self {
            name: name.to_string(),
            shape: shape.to_vec(),
            data: data.into_iter().map(|x| x as f32).collect(),
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&x| x as f64).collect()
    }
}

pub fn write_bundle(dir: &Path, header: Value, tensors: &[Tensor]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| LocalityError::io(dir, e))?;
    let mut entries = Vec::with_capacity(tensors.len());
    for t in tensors {
        let expected: usize = t.shape.iter().product();
        if expected != t.data.len() {
            return Err(LocalityError::Shape(format!(
                "tensor {} has {} values for shape {:?}",
                t.name,
                t.data.len(),
                t.shape
            )));
        }
        let file = format!("{}.f32", t.name);
        let crc32 = write_payload(&dir.join(&file), &t.data)?;
        entries.push(TensorEntry {
            name: t.name.clone(),
            shape: t.shape.clone(),
            file,
            crc32,
        });
    }
    let manifest = BundleManifest {
        version: 1,
        header,
        tensors: entries,
    };
    let path = dir.join(MANIFEST);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| LocalityError::io(&path, e))
}

pub fn read_bundle(dir: &Path) -> Result<(Value, Vec<Tensor>)> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| LocalityError::io(&path, e))?;
    let manifest: BundleManifest = serde_json::from_str(&text)?;
    let tensors = manifest
        .tensors
        .into_iter()
        .map(|e| {
            let len = e.shape.iter().product();
            Ok(Tensor {
                data: read_payload(&dir.join(&e.file), len, e.crc32)?,
                name: e.name,
                shape: e.shape,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest.header, tensors))
}

pub(crate) fn take<'a>(tensors: &'a [Tensor], name: &str) -> Result<&'a Tensor> {
    tensors
        .iter()
        .find(|t| t.name == name)
        .ok_or_else(|| LocalityError::Validation(format!("bundle lacks tensor `{name}`")))
}
