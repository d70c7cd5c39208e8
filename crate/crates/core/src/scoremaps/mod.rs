//! Anomaly score maps and per-frame scores: reconstruction-error maps,
//! PSNR conversion, Gaussian pseudo maps built from per-object scores, and
//! average-pooling fusion of several detectors.

pub mod io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotations::BoundingBox;

#[derive(Debug, Error)]
pub enum ScoreMapError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("negative input {0}")]
    NegativeInput(f64),
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error("box {bbox:?} of track {track_id} lies outside the {width}x{height} frame")]
    BoxOutOfBounds {
        track_id: u32,
        bbox: [f64; 4],
        width: usize,
        height: usize,
    },
    #[error("series length mismatch: {0}")]
    LengthMismatch(String),
    #[error("no input streams")]
    EmptyInput,
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// PSNR reported for a perfect reconstruction; also an upper clamp.
pub const PSNR_CAP: f64 = 100.0;

/// Row-major image with interleaved channels, intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Raster {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self, ScoreMapError> {
        if channels != 1 && channels != 3 {
            return Err(ScoreMapError::ShapeMismatch(format!("{channels} channels")));
        }
        if data.len() != width * height * channels {
            return Err(ScoreMapError::ShapeMismatch(format!(
                "{} values for {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }
}

/// Ground-truth frame and its reconstruction or prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePair {
    pub ground_truth: Raster,
    pub prediction: Raster,
}

impl FramePair {
    pub fn new(ground_truth: Raster, prediction: Raster) -> Result<Self, ScoreMapError> {
        let shape = |r: &Raster| (r.width, r.height, r.channels);
        if shape(&ground_truth) != shape(&prediction) {
            return Err(ScoreMapError::ShapeMismatch(format!(
                "{:?} vs {:?}",
                shape(&ground_truth),
                shape(&prediction)
            )));
        }
        Ok(Self {
            ground_truth,
            prediction,
        })
    }
}

/// Per-pixel non-negative anomaly scores for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    pub width: usize,
    pub height: usize,
    pub frame_index: usize,
    pub values: Vec<f64>,
}

impl ScoreMap {
    pub fn new(width: usize, height: usize, frame_index: usize, values: Vec<f64>) -> Result<Self, ScoreMapError> {
        if values.len() != width * height {
            return Err(ScoreMapError::ShapeMismatch(format!(
                "{} values for {width}x{height}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(ScoreMapError::InvalidValue(format!("score {v} in frame {frame_index}")));
        }
        Ok(Self {
            width,
            height,
            frame_index,
            values,
        })
    }

    pub fn zeros(width: usize, height: usize, frame_index: usize) -> Self {
        Self {
            width,
            height,
            frame_index,
            values: vec![0.0; width * height],
        }
    }

    pub fn with_frame_index(mut self, frame_index: usize) -> Self {
        self.frame_index = frame_index;
        self
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Row-major sum.
    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.values.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    fn same_shape(&self, other: &ScoreMap) -> Result<(), ScoreMapError> {
        if self.width != other.width || self.height != other.height {
            return Err(ScoreMapError::ShapeMismatch(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }
}

/// Anomaly score of one object at one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectScore {
    pub track_id: u32,
    pub score: f64,
    pub bbox: BoundingBox,
}

/// One scalar score per frame of a video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameScoreSeries {
    pub video_id: String,
    pub scores: Vec<f64>,
}

impl FrameScoreSeries {
    pub fn new(video_id: impl Into<String>, scores: Vec<f64>) -> Result<Self, ScoreMapError> {
        let video_id = video_id.into();
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(ScoreMapError::InvalidValue(format!(
                "non-finite score at frame {i} of {video_id}"
            )));
        }
        Ok(Self { video_id, scores })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Per-video rescaling applied to a score stream before it is concatenated
/// with other videos or fused with other streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizeMode {
    /// `(s - min) / (max - min)`; constant input maps to 0.5.
    #[default]
    PerVideoMinmax,
    /// Min-max followed by `1 - x`, for scores where higher means more normal.
    NegatePsnrMinmax,
    None,
}

/// Squared L2 error over channels per pixel, and its mean over the frame.
pub fn mse_score_map(pair: &FramePair) -> (ScoreMap, f64) {
    let gt = &pair.ground_truth;
    let pred = &pair.prediction;
    let c = gt.channels;
    let values: Vec<f64> = gt
        .data
        .chunks_exact(c)
        .zip(pred.data.chunks_exact(c))
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
        .collect();
    let map = ScoreMap {
        width: gt.width,
        height: gt.height,
        frame_index: 0,
        values,
    };
    let mse = map.mean();
    (map, mse)
}

/// `10 log10(1 / mse)`, clamped to [`PSNR_CAP`] (which is also the value at
/// `mse == 0`).
pub fn psnr_from_mse(mse: f64) -> Result<f64, ScoreMapError> {
    if mse < 0.0 || mse.is_nan() {
        return Err(ScoreMapError::NegativeInput(mse));
    }
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

/// Pseudo score map for object-centric detectors.
///
/// Every object spreads its score over the pixels of its box with an
/// unnormalized Gaussian centered on the box; the variances are `w` and `h`
/// (box width and height in pixels). Pixel membership uses the pixel center.
/// Contributions are accumulated in object order.
pub fn pseudo_score_map(objects: &[ObjectScore], width: usize, height: usize) -> Result<ScoreMap, ScoreMapError> {
    let mut map = ScoreMap::zeros(width, height, 0);
    for o in objects {
        let b = &o.bbox;
        if !(o.score.is_finite() && o.score >= 0.0) {
            return Err(ScoreMapError::InvalidValue(format!(
                "object score {} for track {}",
                o.score, o.track_id
            )));
        }
        if b.check(width as f64, height as f64).is_err() {
            return Err(ScoreMapError::BoxOutOfBounds {
                track_id: o.track_id,
                bbox: [b.x1, b.y1, b.x2, b.y2],
                width,
                height,
            });
        }
        let (cx, cy) = b.center();
        let (w, h) = (b.width(), b.height());
        let xs = BoundingBox::center_span(b.x1, b.x2, width);
        for iy in BoundingBox::center_span(b.y1, b.y2, height) {
            let dy = iy as f64 + 0.5 - cy;
            let ey = dy * dy / (2.0 * h);
            let row = &mut map.values[iy * width..(iy + 1) * width];
            for ix in xs.clone() {
                let dx = ix as f64 + 0.5 - cx;
                row[ix] += o.score * (-(dx * dx) / (2.0 * w) - ey).exp();
            }
        }
    }
    Ok(map)
}

/// Element-wise mean of two maps of equal shape.
pub fn fuse_score_maps(a: &ScoreMap, b: &ScoreMap) -> Result<ScoreMap, ScoreMapError> {
    a.same_shape(b)?;
    Ok(ScoreMap {
        width: a.width,
        height: a.height,
        frame_index: a.frame_index,
        values: a.values.iter().zip(&b.values).map(|(x, y)| (x + y) / 2.0).collect(),
    })
}

/// Per-frame mean across streams of one video.
pub fn fuse_frame_scores(streams: &[FrameScoreSeries]) -> Result<FrameScoreSeries, ScoreMapError> {
    let first = streams.first().ok_or(ScoreMapError::EmptyInput)?;
    for s in &streams[1..] {
        if s.video_id != first.video_id {
            return Err(ScoreMapError::LengthMismatch(format!(
                "streams for different videos: {} vs {}",
                first.video_id, s.video_id
            )));
        }
        if s.len() != first.len() {
            return Err(ScoreMapError::LengthMismatch(format!(
                "{}: {} vs {} frames",
                first.video_id,
                first.len(),
                s.len()
            )));
        }
    }
    let n = streams.len() as f64;
    let scores = (0..first.len())
        .map(|t| streams.iter().map(|s| s.scores[t]).sum::<f64>() / n)
        .collect();
    Ok(FrameScoreSeries {
        video_id: first.video_id.clone(),
        scores,
    })
}

fn minmax(values: &[f64]) -> Option<(f64, f64)> {
    let mut it = values.iter().copied();
    let first = it.next()?;
    Some(it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v))))
}

fn rescale(v: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        0.5
    }
}

pub fn normalize_series(series: &FrameScoreSeries, mode: NormalizeMode) -> FrameScoreSeries {
    let scores = match (mode, minmax(&series.scores)) {
        (NormalizeMode::None, _) | (_, None) => series.scores.clone(),
        (NormalizeMode::PerVideoMinmax, Some((lo, hi))) => series.scores.iter().map(|v| rescale(*v, lo, hi)).collect(),
        (NormalizeMode::NegatePsnrMinmax, Some((lo, hi))) => {
            series.scores.iter().map(|v| 1.0 - rescale(*v, lo, hi)).collect()
        }
    };
    FrameScoreSeries {
        video_id: series.video_id.clone(),
        scores,
    }
}

/// Min-max rescales a video's maps jointly, using the extremes over all
/// pixels of all frames. A constant stream maps to 0.5 everywhere.
pub fn normalize_maps(maps: &[ScoreMap]) -> Vec<ScoreMap> {
    let extremes = maps
        .iter()
        .filter_map(|m| minmax(&m.values))
        .reduce(|(a, b), (c, d)| (a.min(c), b.max(d)));
    let Some((lo, hi)) = extremes else {
        return maps.to_vec();
    };
    maps.iter()
        .map(|m| ScoreMap {
            values: m.values.iter().map(|v| rescale(*v, lo, hi)).collect(),
            ..m.clone()
        })
        .collect()
}
