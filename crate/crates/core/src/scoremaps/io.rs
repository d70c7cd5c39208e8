//! Detector output files.
//!
//! * ASMF: little-endian `"ASMF"`, `u32` version (1), `u32` width, `u32`
//!   height, `u32` frame count, then one row-major `f32` raster per frame.
//! * Frame scores: CSV with header `frame_index,score`.
//! * Object scores: JSON Lines of `{"frame", "track_id", "bbox", "score"}`.

use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use super::{FrameScoreSeries, ObjectScore, ScoreMap, ScoreMapError};
use crate::annotations::BoundingBox;

pub const ASMF_MAGIC: &[u8; 4] = b"ASMF";
pub const ASMF_VERSION: u32 = 1;

fn format_err(msg: impl Into<String>) -> ScoreMapError {
    ScoreMapError::Format(msg.into())
}

/// Writes maps as ASMF. Values are stored as `f32`; all maps must share one
/// shape.
pub fn write_asmf<W: Write>(mut w: W, maps: &[ScoreMap]) -> Result<(), ScoreMapError> {
    let (width, height) = maps.first().map_or((0, 0), |m| (m.width, m.height));
    if let Some(m) = maps.iter().find(|m| m.width != width || m.height != height) {
        return Err(ScoreMapError::ShapeMismatch(format!(
            "frame {} is {}x{}, expected {width}x{height}",
            m.frame_index, m.width, m.height
        )));
    }
    let mut header = Vec::with_capacity(20);
    header.extend_from_slice(ASMF_MAGIC);
    for v in [ASMF_VERSION, width as u32, height as u32, maps.len() as u32] {
        header.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&header)?;
    let mut buf = Vec::with_capacity(width * height * 4);
    for m in maps {
        buf.clear();
        for v in &m.values {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an ASMF stream; frame indices are assigned in file order.
pub fn read_asmf<R: Read>(mut r: R) -> Result<Vec<ScoreMap>, ScoreMapError> {
    let mut header = [0u8; 20];
    r.read_exact(&mut header)
        .map_err(|_| format_err("truncated ASMF header"))?;
    if &header[0..4] != ASMF_MAGIC {
        return Err(format_err("bad ASMF magic"));
    }
    let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap());
    let version = word(4);
    if version != ASMF_VERSION {
        return Err(format_err(format!("unsupported ASMF version {version}")));
    }
    let (width, height, frames) = (word(8) as usize, word(12) as usize, word(16) as usize);
    let pixels = width
        .checked_mul(height)
        .ok_or_else(|| format_err("raster size overflow"))?;
    let mut buf = vec![0u8; pixels * 4];
    let mut maps = Vec::with_capacity(frames.min(1 << 16));
    for f in 0..frames {
        r.read_exact(&mut buf)
            .map_err(|_| format_err(format!("truncated ASMF data at frame {f}")))?;
        let values = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        maps.push(ScoreMap::new(width, height, f, values)?);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(format_err("trailing bytes after ASMF data"));
    }
    Ok(maps)
}

#[derive(Serialize, Deserialize)]
struct FrameScoreRow {
    frame_index: usize,
    score: f64,
}

pub fn write_frame_scores<W: Write>(w: W, series: &FrameScoreSeries) -> Result<(), ScoreMapError> {
    let mut wr = csv::Writer::from_writer(w);
    for (frame_index, score) in series.scores.iter().enumerate() {
        wr.serialize(FrameScoreRow {
            frame_index,
            score: *score,
        })
        .map_err(|e| format_err(e.to_string()))?;
    }
    wr.flush()?;
    Ok(())
}

/// Reads frame scores. Rows may come in any order but must cover frames
/// `0..n` exactly once.
pub fn read_frame_scores<R: Read>(r: R, video_id: &str) -> Result<FrameScoreSeries, ScoreMapError> {
    let mut rd = csv::Reader::from_reader(r);
    let headers = rd.headers().map_err(|e| format_err(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["frame_index", "score"] {
        return Err(format_err(format!(
            "expected header `frame_index,score`, found `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows: Vec<FrameScoreRow> = Vec::new();
    for row in rd.deserialize() {
        rows.push(row.map_err(|e| format_err(e.to_string()))?);
    }
    let mut scores = vec![None; rows.len()];
    for row in rows {
        match scores.get_mut(row.frame_index) {
            Some(slot @ None) => *slot = Some(row.score),
            Some(Some(_)) => return Err(format_err(format!("duplicate frame {}", row.frame_index))),
            None => {
                return Err(format_err(format!(
                    "frame {} out of range (frames must be contiguous from 0)",
                    row.frame_index
                )))
            }
        }
    }
    FrameScoreSeries::new(video_id, scores.into_iter().map(|s| s.unwrap()).collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ObjectRow {
    frame: usize,
    track_id: u32,
    bbox: [f64; 4],
    score: f64,
}

/// Writes per-frame object lists as JSON Lines, frames in order.
pub fn write_object_scores<W: Write>(mut w: W, frames: &[Vec<ObjectScore>]) -> Result<(), ScoreMapError> {
    for (frame, objs) in frames.iter().enumerate() {
        for o in objs {
            let row = ObjectRow {
                frame,
                track_id: o.track_id,
                bbox: [o.bbox.x1, o.bbox.y1, o.bbox.x2, o.bbox.y2],
                score: o.score,
            };
            serde_json::to_writer(&mut w, &row).map_err(|e| format_err(e.to_string()))?;
            w.write_all(b"\n")?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads JSON Lines object scores into `num_frames` per-frame lists. Within
/// a frame, objects keep file order.
pub fn read_object_scores<R: BufRead>(r: R, num_frames: usize) -> Result<Vec<Vec<ObjectScore>>, ScoreMapError> {
    let mut frames = vec![Vec::new(); num_frames];
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: ObjectRow =
            serde_json::from_str(&line).map_err(|e| format_err(format!("line {}: {e}", lineno + 1)))?;
        if !(row.score.is_finite() && row.score >= 0.0) {
            return Err(format_err(format!("line {}: invalid score {}", lineno + 1, row.score)));
        }
        let slot = frames.get_mut(row.frame).ok_or_else(|| {
            format_err(format!(
                "line {}: frame {} beyond {num_frames} frames",
                lineno + 1,
                row.frame
            ))
        })?;
        let [x1, y1, x2, y2] = row.bbox;
        slot.push(ObjectScore {
            track_id: row.track_id,
            score: row.score,
            bbox: BoundingBox::new(x1, y1, x2, y2),
        });
    }
    Ok(frames)
}
