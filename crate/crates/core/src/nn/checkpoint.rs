//! Checkpoint container: a JSON index plus an adjacent blob of raw
//! little-endian `f32` values. The index lists every tensor as
//! `{name, shape, dtype, offset, len}` with byte offsets into the blob; the
//! zerocenter mean comes first, then the trainable tensors in model order.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AvgHead, GruHead, HeadDims, Model, Parameters};
use crate::error::{Error, Result};

const FORMAT: &str = "rnn-iqa-checkpoint";
const VERSION: u32 = 1;
const MEAN_TENSOR: &str = "zerocenter.mean";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Layout {
    Rnn { dims: HeadDims, dropout: f64 },
    Avg { input: usize, hidden: usize, dropout: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    /// Byte offset into the blob.
    pub offset: u64,
    /// Element count.
    pub len: u64,
}

/// Provenance stored alongside the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seed: u64,
    /// Effective configuration of the run that produced the model.
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Index {
    format: String,
    version: u32,
    layout: Layout,
    meta: CheckpointMeta,
    blob: String,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub meta: CheckpointMeta,
}

pub fn blob_path(index_path: &Path) -> PathBuf {
    index_path.with_extension("bin")
}

fn layout_of(model: &Model) -> Layout {
    match model {
        Model::Rnn(h) => Layout::Rnn {
            dims: h.dims,
            dropout: h.dropout,
        },
        Model::Avg(h) => Layout::Avg {
            input: h.mean.len(),
            hidden: h.hidden.outputs(),
            dropout: h.dropout,
        },
    }
}

/// Name and shape of each stored tensor.
type Names = Vec<(String, Vec<usize>)>;

fn named_tensors(model: &Model) -> (Names, Vec<&[f64]>) {
    let (mean, tensors) = match model {
        Model::Rnn(h) => (&h.mean, h.tensors()),
        Model::Avg(h) => (&h.mean, h.tensors()),
    };
    let mut names = vec![(MEAN_TENSOR.to_owned(), vec![mean.len()])];
    let mut data: Vec<&[f64]> = vec![mean];
    for t in tensors {
        names.push((t.name, t.shape));
        data.push(t.data);
    }
    (names, data)
}

/// Serializes to `(index_json, blob)`.
pub fn encode_checkpoint(ckpt: &Checkpoint, blob_name: &str) -> Result<(Vec<u8>, Vec<u8>)> {
    let (names, data) = named_tensors(&ckpt.model);
    let mut blob = Vec::new();
    let mut entries = Vec::with_capacity(names.len());
    for ((name, shape), values) in names.into_iter().zip(data) {
        entries.push(TensorEntry {
            name,
            shape,
            dtype: "f32".into(),
            offset: blob.len() as u64,
            len: values.len() as u64,
        });
        for &v in values {
            blob.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let index = Index {
        format: FORMAT.into(),
        version: VERSION,
        layout: layout_of(&ckpt.model),
        meta: ckpt.meta.clone(),
        blob: blob_name.into(),
        tensors: entries,
    };
    let mut json = serde_json::to_vec_pretty(&index)?;
    json.push(b'\n');
    Ok((json, blob))
}

/// Number of stored values a layout implies, `None` on overflow.
fn layout_len(layout: &Layout) -> Option<u64> {
    let dense = |i: u64, o: u64| i.checked_mul(o)?.checked_add(o);
    let gru = |i: u64, h: u64| h.checked_mul(i.checked_add(h)?.checked_add(1)?)?.checked_mul(3);
    match *layout {
        Layout::Rnn { dims, .. } => {
            let d = dims.input as u64;
            let h = dims.hidden.map(|v| v as u64);
            let stage_in = [d, h[0], h[1], h[2]];
            let mut total = d.checked_add(dense(h[3], 1)?)?;
            for i in 0..4 {
                total = total.checked_add(dense(stage_in[i], stage_in[i])?)?.checked_add(gru(stage_in[i], h[i])?)?;
            }
            Some(total)
        }
        Layout::Avg { input, hidden, .. } => {
            let (i, h) = (input as u64, hidden as u64);
            i.checked_add(dense(i, h)?)?.checked_add(dense(h, 1)?)
        }
    }
}

fn json_offset(text: &[u8], line: usize, column: usize) -> u64 {
    if line == 0 {
        return 0;
    }
    let mut offset = 0usize;
    for (i, l) in text.split(|&b| b == b'\n').enumerate() {
        if i + 1 == line {
            return (offset + column.saturating_sub(1)) as u64;
        }
        offset += l.len() + 1;
    }
    text.len() as u64
}

pub fn decode_checkpoint(index_bytes: &[u8], blob: &[u8]) -> Result<Checkpoint> {
    let index: Index = serde_json::from_slice(index_bytes).map_err(|e| {
        Error::format(json_offset(index_bytes, e.line(), e.column()), format!("checkpoint index: {e}"))
    })?;
    if index.format != FORMAT || index.version != VERSION {
        return Err(Error::format(0, format!("unsupported checkpoint {} v{}", index.format, index.version)));
    }
    let needed = layout_len(&index.layout)
        .filter(|&n| n.checked_mul(4).is_some_and(|b| b <= blob.len() as u64))
        .ok_or_else(|| Error::format(blob.len() as u64, "blob is smaller than the declared layout"))?;
    log::trace!("checkpoint layout holds {needed} values");
    let mut model = match index.layout {
        Layout::Rnn { dims, dropout } => Model::Rnn(GruHead::zeros(dims, dropout)),
        Layout::Avg { input, hidden, dropout } => Model::Avg(AvgHead::zeros(input, hidden, dropout)),
    };
    let (expected, _) = named_tensors(&model);
    if expected.len() != index.tensors.len() {
        return Err(Error::format(
            0,
            format!("index lists {} tensors, layout needs {}", index.tensors.len(), expected.len()),
        ));
    }
    let mut cursor = 0u64;
    let mut values = Vec::with_capacity(expected.len());
    for ((name, shape), e) in expected.iter().zip(&index.tensors) {
        if &e.name != name || &e.shape != shape || e.dtype != "f32" || e.len != shape.iter().product::<usize>() as u64 {
            return Err(Error::format(
                e.offset,
                format!("tensor entry {} {:?} {} does not match layout {name} {shape:?}", e.name, e.shape, e.dtype),
            ));
        }
        if e.offset != cursor {
            return Err(Error::format(e.offset, format!("tensor {name} is not contiguous (expected offset {cursor})")));
        }
        let end = e.offset + 4 * e.len;
        if end > blob.len() as u64 {
            return Err(Error::format(blob.len() as u64, format!("blob truncated inside tensor {name}")));
        }
        let mut v = Vec::with_capacity(e.len as usize);
        for (i, c) in blob[e.offset as usize..end as usize].chunks_exact(4).enumerate() {
            let x = f32::from_le_bytes(c.try_into().unwrap());
            if !x.is_finite() {
                return Err(Error::format(e.offset + 4 * i as u64, format!("non-finite value in {name}")));
            }
            v.push(x as f64);
        }
        values.push(v);
        cursor = end;
    }
    if cursor != blob.len() as u64 {
        return Err(Error::format(cursor, "trailing bytes in blob"));
    }
    let mut values = values.into_iter();
    let mean = values.next().unwrap();
    let fill = |tensors: Vec<super::TensorMut<'_>>, values: &mut dyn Iterator<Item = Vec<f64>>| {
        for (t, v) in tensors.into_iter().zip(values) {
            t.data.copy_from_slice(&v);
        }
    };
    match &mut model {
        Model::Rnn(h) => {
            h.mean = mean;
            fill(h.tensors_mut(), &mut values);
        }
        Model::Avg(h) => {
            h.mean = mean;
            fill(h.tensors_mut(), &mut values);
        }
    }
    Ok(Checkpoint { model, meta: index.meta })
}

/// Writes the index to `path` and the blob next to it (same stem, `.bin`).
pub fn write_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let blob_path = blob_path(path);
    let blob_name = blob_path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::Validation(format!("bad checkpoint path {}", path.display())))?
        .to_owned();
    let (json, blob) = encode_checkpoint(ckpt, &blob_name)?;
    std::fs::write(&blob_path, blob).map_err(|e| Error::io(&blob_path, e))?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let json = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    #[derive(Deserialize)]
    struct BlobRef {
        blob: String,
    }
    let blob_name = serde_json::from_slice::<BlobRef>(&json)
        .map(|b| b.blob)
        .unwrap_or_else(|_| String::new());
    let blob_path = if blob_name.is_empty() {
        blob_path(path)
    } else {
        path.with_file_name(blob_name)
    };
    let blob = std::fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
    decode_checkpoint(&json, &blob)
}
