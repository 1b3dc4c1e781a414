//! `FSEQ` feature-sequence files, all integers and floats little-endian:
//!
//! ```text
//! magic      4 bytes  "FSEQ"
//! version    u16      1
//! id_len     u32      followed by id_len bytes of UTF-8 image id
//! groups     u32
//! per group:
//!   tag      u8       0 = LOW, 1 = HIGH
//!   n        u32      vector count
//!   dim      u32
//!   si       n x f32
//!   values   n*dim x f32, row-major
//! ```
//!
//! Grid positions are not stored; on read, `source_index` is the vector's
//! ordinal within its group.

use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{FeatureSequence, FeatureVector, ScaleGroup};

pub const FSEQ_MAGIC: &[u8; 4] = b"FSEQ";
pub const FSEQ_VERSION: u16 = 1;

pub fn encode_feature_sequence(seq: &FeatureSequence) -> Result<Vec<u8>> {
    seq.validate()?;
    let mut buf = Vec::with_capacity(32 + seq.len() * (seq.dim + 1) * 4);
    buf.extend_from_slice(FSEQ_MAGIC);
    buf.extend_from_slice(&FSEQ_VERSION.to_le_bytes());
    let id = seq.image_id.as_bytes();
    buf.extend_from_slice(&(id.len() as u32).to_le_bytes());
    buf.extend_from_slice(id);
    let groups = [ScaleGroup::Low, ScaleGroup::High];
    buf.extend_from_slice(&(groups.len() as u32).to_le_bytes());
    for group in groups {
        let members: Vec<&FeatureVector> = seq
            .vectors
            .iter()
            .filter(|v| v.scale_group == group)
            .collect();
        buf.push(group.tag());
        buf.extend_from_slice(&(members.len() as u32).to_le_bytes());
        buf.extend_from_slice(&(seq.dim as u32).to_le_bytes());
        for v in &members {
            buf.extend_from_slice(&(v.si as f32).to_le_bytes());
        }
        for v in &members {
            for &x in &v.values {
                buf.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
    }
    Ok(buf)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(
                self.pos as u64,
                format!("truncated {what}: need {n} bytes, {} left", self.bytes.len() - self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let len = n
            .checked_mul(4)
            .ok_or_else(|| Error::format(self.pos as u64, format!("{what} length overflows")))?;
        let start = self.pos;
        let raw = self.take(len, what)?;
        raw.chunks_exact(4)
            .enumerate()
            .map(|(i, c)| {
                let v = f32::from_le_bytes(c.try_into().unwrap()) as f64;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::format((start + 4 * i) as u64, format!("non-finite {what}")))
                }
            })
            .collect()
    }
}

pub fn decode_feature_sequence(bytes: &[u8]) -> Result<FeatureSequence> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4, "magic")? != FSEQ_MAGIC {
        return Err(Error::format(0, "bad magic, expected FSEQ"));
    }
    let version = cur.u16("version")?;
    if version != FSEQ_VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let id_len = cur.u32("id length")? as usize;
    let id_at = cur.pos;
    let image_id = std::str::from_utf8(cur.take(id_len, "image id")?)
        .map_err(|_| Error::format(id_at as u64, "image id is not UTF-8"))?
        .to_owned();
    let n_groups = cur.u32("group count")?;
    let mut dim: Option<usize> = None;
    let mut last_tag: Option<ScaleGroup> = None;
    let mut vectors = Vec::new();
    for _ in 0..n_groups {
        let tag_at = cur.pos as u64;
        let tag = cur.u8("scale tag")?;
        let group = ScaleGroup::from_tag(tag)
            .ok_or_else(|| Error::format(tag_at, format!("unknown scale tag {tag}")))?;
        if last_tag.is_some_and(|t| t >= group) {
            return Err(Error::format(tag_at, "groups must be LOW then HIGH, each at most once"));
        }
        last_tag = Some(group);
        let n = cur.u32("vector count")? as usize;
        let dim_at = cur.pos as u64;
        let d = cur.u32("dimension")? as usize;
        match dim {
            Some(prev) if prev != d => {
                return Err(Error::format(dim_at, format!("group dimension {d} differs from {prev}")));
            }
            _ => dim = Some(d),
        }
        let si = cur.f32s(n, "SI value")?;
        let si_end = cur.pos;
        let values = cur.f32s(
            n.checked_mul(d)
                .ok_or_else(|| Error::format(dim_at, "vector block size overflows"))?,
            "feature value",
        )?;
        for (i, &s) in si.iter().enumerate() {
            if s < 0.0 {
                return Err(Error::format((si_end - 4 * (n - i)) as u64, "negative SI"));
            }
        }
        for (i, s) in si.into_iter().enumerate() {
            vectors.push(FeatureVector {
                values: values[i * d..(i + 1) * d].to_vec(),
                si: s,
                scale_group: group,
                source_index: i,
            });
        }
    }
    if cur.pos != bytes.len() {
        return Err(Error::format(cur.pos as u64, "trailing bytes after last group"));
    }
    Ok(FeatureSequence {
        image_id,
        dim: dim.unwrap_or(0),
        vectors,
    })
}

pub fn write_feature_file(seq: &FeatureSequence, path: &Path) -> Result<()> {
    let bytes = encode_feature_sequence(seq)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_feature_file(path: &Path) -> Result<FeatureSequence> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_feature_sequence(&bytes)
}
