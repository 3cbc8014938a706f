//! TLTF: a little-endian container for feature sets.
//!
//! ```text
//! header   "TLTF" | version u32 = 1 | n_records u64 | feature_dim u32 | meta_len u32 | meta (UTF-8 JSON)
//! record   track_id u32 | session_index u16 | time_norm f32 | variety_id u16
//!          | flags u8 (bit0 fungicide, bit1 rot, bit2 rot-valid) | spatial_tag u8 | feature_dim x f32
//! ```

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{FeatureRecord, FeatureSet, Scale, SpatialTag, StoreError};

const MAGIC: &[u8; 4] = b"TLTF";
const VERSION: u32 = 1;

/// Bytes in the header before the metadata document.
pub const HEADER_FIXED_BYTES: usize = 4 + 4 + 8 + 4 + 4;
/// Bytes in a record before its feature payload.
pub const RECORD_FIXED_BYTES: usize = 4 + 2 + 4 + 2 + 1 + 1;

const FLAG_FUNGICIDE: u8 = 1 << 0;
const FLAG_ROT: u8 = 1 << 1;
const FLAG_ROT_VALID: u8 = 1 << 2;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic {found:?} at offset 0")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported version {version} at offset 4")]
    UnsupportedVersion { version: u32 },
    #[error("stream truncated at offset {offset} while reading {what}")]
    Truncated { offset: usize, what: &'static str },
    #[error("non-finite float at offset {offset}")]
    NonFinite { offset: usize },
    #[error("invalid value at offset {offset}: {reason}")]
    InvalidValue { offset: usize, reason: String },
    #[error("{len} trailing bytes at offset {offset}")]
    TrailingBytes { offset: usize, len: usize },
    #[error("feature set failed validation: {0}")]
    Validation(#[from] StoreError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl FormatError {
    /// Byte offset the error refers to, when it has one.
    pub fn offset(&self) -> Option<usize> {
        match self {
            FormatError::BadMagic { .. } => Some(0),
            FormatError::UnsupportedVersion { .. } => Some(4),
            FormatError::Truncated { offset, .. }
            | FormatError::NonFinite { offset }
            | FormatError::InvalidValue { offset, .. }
            | FormatError::TrailingBytes { offset, .. } => Some(*offset),
            FormatError::Validation(_) | FormatError::Io(_) => None,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Meta {
    span_days: f64,
    class_names: Vec<String>,
    backbone: String,
    scale: Scale,
}

/// Serializes `set` as TLTF. Nothing is written if the set is invalid.
pub fn write_features<W: Write>(set: &FeatureSet, mut sink: W) -> Result<(), FormatError> {
    set.validate()?;
    let meta = serde_json::to_vec(&Meta {
        span_days: set.span_days,
        class_names: set.class_names.clone(),
        backbone: set.backbone.clone(),
        scale: set.scale,
    })
    .expect("metadata serializes");

    let record_bytes = RECORD_FIXED_BYTES + 4 * set.feature_dim;
    let mut buf =
        Vec::with_capacity(HEADER_FIXED_BYTES + meta.len() + record_bytes * set.records.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(set.records.len() as u64).to_le_bytes());
    buf.extend_from_slice(&(set.feature_dim as u32).to_le_bytes());
    buf.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    buf.extend_from_slice(&meta);

    for r in &set.records {
        let mut flags = 0u8;
        if r.fungicide {
            flags |= FLAG_FUNGICIDE;
        }
        if let Some(rot) = r.rot {
            flags |= FLAG_ROT_VALID;
            if rot {
                flags |= FLAG_ROT;
            }
        }
        buf.extend_from_slice(&r.track_id.to_le_bytes());
        buf.extend_from_slice(&r.session_index.to_le_bytes());
        buf.extend_from_slice(&r.time_norm.to_le_bytes());
        buf.extend_from_slice(&r.variety_id.to_le_bytes());
        buf.push(flags);
        buf.push(r.spatial_tag.to_wire());
        for v in &r.features {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    sink.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], FormatError> {
        if self.data.len() - self.pos < n {
            return Err(FormatError::Truncated {
                offset: self.data.len(),
                what,
            });
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn array<const N: usize>(&mut self, what: &'static str) -> Result<[u8; N], FormatError> {
        Ok(self.take(N, what)?.try_into().unwrap())
    }

    fn u8(&mut self, what: &'static str) -> Result<u8, FormatError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &'static str) -> Result<u16, FormatError> {
        self.array(what).map(u16::from_le_bytes)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, FormatError> {
        self.array(what).map(u32::from_le_bytes)
    }

    fn u64(&mut self, what: &'static str) -> Result<u64, FormatError> {
        self.array(what).map(u64::from_le_bytes)
    }

    fn f32(&mut self, what: &'static str) -> Result<f32, FormatError> {
        let offset = self.pos;
        let v = self.array(what).map(f32::from_le_bytes)?;
        if !v.is_finite() {
            return Err(FormatError::NonFinite { offset });
        }
        Ok(v)
    }
}

/// Parses a TLTF stream. Every failure carries the byte offset it refers to.
pub fn read_features<R: Read>(mut source: R) -> Result<FeatureSet, FormatError> {
    let mut data = Vec::new();
    source.read_to_end(&mut data)?;
    parse(&data)
}

fn parse(data: &[u8]) -> Result<FeatureSet, FormatError> {
    let mut cur = Cursor { data, pos: 0 };
    let magic: [u8; 4] = cur.array("magic")?;
    if &magic != MAGIC {
        return Err(FormatError::BadMagic { found: magic });
    }
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion { version });
    }
    let n_records = cur.u64("record count")?;
    let dim_offset = cur.pos;
    let feature_dim = cur.u32("feature_dim")? as usize;
    if feature_dim == 0 {
        return Err(FormatError::InvalidValue {
            offset: dim_offset,
            reason: "feature_dim is zero".into(),
        });
    }
    let meta_len = cur.u32("meta length")? as usize;
    let meta_offset = cur.pos;
    let meta_bytes = cur.take(meta_len, "metadata")?;
    let meta: Meta = serde_json::from_slice(meta_bytes).map_err(|e| FormatError::InvalidValue {
        offset: meta_offset,
        reason: format!("metadata: {e}"),
    })?;
    if !(meta.span_days.is_finite() && meta.span_days > 0.0) {
        return Err(FormatError::InvalidValue {
            offset: meta_offset,
            reason: format!("span_days {}", meta.span_days),
        });
    }

    let record_bytes = RECORD_FIXED_BYTES + 4 * feature_dim;
    let capacity = (n_records as usize).min((data.len() - cur.pos) / record_bytes);
    let mut records = Vec::with_capacity(capacity);
    for _ in 0..n_records {
        let track_id = cur.u32("track_id")?;
        let session_index = cur.u16("session_index")?;
        let time_offset = cur.pos;
        let time_norm = cur.f32("time_norm")?;
        if !(0.0..=1.0).contains(&time_norm) {
            return Err(FormatError::InvalidValue {
                offset: time_offset,
                reason: format!("time_norm {time_norm} outside [0, 1]"),
            });
        }
        let variety_offset = cur.pos;
        let variety_id = cur.u16("variety_id")?;
        if usize::from(variety_id) >= meta.class_names.len() {
            return Err(FormatError::InvalidValue {
                offset: variety_offset,
                reason: format!("variety_id {variety_id} without a class name"),
            });
        }
        let flags_offset = cur.pos;
        let flags = cur.u8("flags")?;
        if flags & !(FLAG_FUNGICIDE | FLAG_ROT | FLAG_ROT_VALID) != 0
            || (flags & FLAG_ROT != 0 && flags & FLAG_ROT_VALID == 0)
        {
            return Err(FormatError::InvalidValue {
                offset: flags_offset,
                reason: format!("flags {flags:#010b}"),
            });
        }
        let rot = (flags & FLAG_ROT_VALID != 0).then_some(flags & FLAG_ROT != 0);
        if rot.is_some() && meta.scale != Scale::Berry {
            return Err(FormatError::InvalidValue {
                offset: flags_offset,
                reason: "rot label in a patch-scale file".into(),
            });
        }
        let tag_offset = cur.pos;
        let tag = cur.u8("spatial_tag")?;
        let spatial_tag = SpatialTag::from_wire(tag).ok_or_else(|| FormatError::InvalidValue {
            offset: tag_offset,
            reason: format!("spatial_tag {tag}"),
        })?;
        let features = (0..feature_dim)
            .map(|_| cur.f32("features"))
            .collect::<Result<Vec<_>, _>>()?;
        records.push(FeatureRecord {
            track_id,
            session_index,
            time_norm,
            variety_id,
            fungicide: flags & FLAG_FUNGICIDE != 0,
            rot,
            spatial_tag,
            features,
        });
    }
    if cur.pos != data.len() {
        return Err(FormatError::TrailingBytes {
            offset: cur.pos,
            len: data.len() - cur.pos,
        });
    }
    Ok(FeatureSet {
        feature_dim,
        span_days: meta.span_days,
        class_names: meta.class_names,
        backbone: meta.backbone,
        scale: meta.scale,
        records,
    })
}
