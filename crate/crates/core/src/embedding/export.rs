//! Comma-separated coordinate rows, one per embedded record.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::EmbedError;
use crate::feature_store::FeatureSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordRow {
    pub track_id: u32,
    pub session_index: u16,
    pub x: f64,
    pub y: f64,
    pub variety_id: u16,
    /// 0 or 1.
    pub fungicide: u8,
    /// 0, 1, or empty when unlabelled.
    pub rot: Option<u8>,
    pub split: Split,
}

/// Pairs each record of `set` with its coordinate.
pub fn coord_rows(set: &FeatureSet, coords: &[[f64; 2]], split: Split) -> Result<Vec<CoordRow>, EmbedError> {
    if coords.len() != set.len() {
        return Err(EmbedError::Input(format!("{} coordinates for {} records", coords.len(), set.len())));
    }
    Ok(set
        .records
        .iter()
        .zip(coords)
        .map(|(r, c)| CoordRow {
            track_id: r.track_id,
            session_index: r.session_index,
            x: c[0],
            y: c[1],
            variety_id: r.variety_id,
            fungicide: u8::from(r.fungicide),
            rot: r.rot.map(u8::from),
            split,
        })
        .collect())
}

pub fn write_coord_rows<W: Write>(rows: &[CoordRow], sink: W) -> Result<(), EmbedError> {
    let mut w = csv::Writer::from_writer(sink);
    for row in rows {
        w.serialize(row).map_err(|e| EmbedError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| EmbedError::Io(e.to_string()))
}

pub fn read_coord_rows<R: Read>(source: R) -> Result<Vec<CoordRow>, EmbedError> {
    let mut r = csv::Reader::from_reader(source);
    let mut rows = Vec::new();
    for (i, row) in r.deserialize::<CoordRow>().enumerate() {
        let row = row.map_err(|e| EmbedError::Input(format!("coordinate row {}: {e}", i + 1)))?;
        if !(row.x.is_finite() && row.y.is_finite()) || row.fungicide > 1 || row.rot.is_some_and(|v| v > 1) {
            return Err(EmbedError::Input(format!("coordinate row {}: invalid value", i + 1)));
        }
        rows.push(row);
    }
    Ok(rows)
}
