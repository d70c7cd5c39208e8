//! Metric kernels: true-anomalous-region rate (TARR) over top-N% candidate
//! pixels, ROC and spatio-temporal ROC (STROC) curves, trapezoidal AUC.
//!
//! STROC replaces the true-positive rate with a TARR-weighted one: each true
//! positive frame counts only as much as the share of its (candidate) score
//! mass that falls inside the annotated region. STAUC is therefore never
//! larger than AUC, and equals it when every positive frame has TARR 1.

mod evaluate;

pub use evaluate::{
    evaluate, evaluate_full, evaluate_with, sweep_n, sweep_n_with, ClassMetrics, DetectorOutput, EvalConfig,
    EvalCounts, Evaluation, EvaluationReport, InputsEcho, MapReduce, OverallMetrics, SweepEntry, SweepRow,
};

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::annotations::{AnnotationError, PixelMask};
use crate::scoremaps::{ScoreMap, ScoreMapError};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("annotated region is empty")]
    EmptyMask,
    #[error("top-N percentage {0} not in (0, 100]")]
    InvalidTopN(f64),
    #[error("need at least one positive and one negative frame ({positives} positive, {negatives} negative)")]
    DegenerateLabels { positives: usize, negatives: usize },
    #[error("positive frame {frame_index} of {video_id} has no TARR")]
    MissingTarr { video_id: String, frame_index: usize },
    #[error("non-finite score at frame {frame_index} of {video_id}")]
    InvalidScore { video_id: String, frame_index: usize },
    #[error("coverage gap in {video_id}: {detail}")]
    CoverageGap { video_id: String, detail: String },
    #[error("inconsistent dimensions in {video_id}: {detail}")]
    InconsistentDims { video_id: String, detail: String },
    #[error("video {0} annotated more than once")]
    DuplicateVideo(String),
    #[error("no videos left to evaluate after filtering")]
    NothingToEvaluate,
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error(transparent)]
    ScoreMap(#[from] ScoreMapError),
}

/// Percentage of highest-scoring pixels kept as TARR candidates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TopN {
    /// Per frame, the annotated region's share of the frame in percent.
    Adaptive,
    Fixed(f64),
}

impl TopN {
    pub fn fixed(percent: f64) -> Result<Self, MetricsError> {
        if percent > 0.0 && percent <= 100.0 {
            Ok(TopN::Fixed(percent))
        } else {
            Err(MetricsError::InvalidTopN(percent))
        }
    }

    /// The sweep used for STAUC robustness plots: 1, 5, 10, 20, 50, 100 and
    /// adaptive.
    pub fn default_sweep() -> Vec<TopN> {
        let mut v: Vec<TopN> = [1.0, 5.0, 10.0, 20.0, 50.0, 100.0]
            .into_iter()
            .map(TopN::Fixed)
            .collect();
        v.push(TopN::Adaptive);
        v
    }
}

impl fmt::Display for TopN {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TopN::Adaptive => f.write_str("adaptive"),
            TopN::Fixed(p) => write!(f, "{p}"),
        }
    }
}

impl FromStr for TopN {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("adaptive") {
            return Ok(TopN::Adaptive);
        }
        let p: f64 = s
            .parse()
            .map_err(|_| format!("`{s}` is neither `adaptive` nor a number"))?;
        TopN::fixed(p).map_err(|e| e.to_string())
    }
}

impl Serialize for TopN {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            TopN::Adaptive => s.serialize_str("adaptive"),
            TopN::Fixed(p) => s.serialize_f64(*p),
        }
    }
}

impl<'de> Deserialize<'de> for TopN {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(p) => TopN::fixed(p).map_err(serde::de::Error::custom),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TarrConfig {
    pub top_n: TopN,
}

/// `100 * |mask| / |frame|`.
pub fn adaptive_n(mask: &PixelMask) -> f64 {
    100.0 * mask.count() as f64 / mask.len() as f64
}

/// Number of candidate pixels, `max(1, ceil(N/100 * total))`: the smallest
/// `k` with `100 k >= N * total`. The adaptive case is exactly the mask size.
pub fn candidate_count(top_n: TopN, mask_count: usize, total: usize) -> usize {
    let k = match top_n {
        TopN::Adaptive => mask_count,
        TopN::Fixed(p) => {
            let target = p * total as f64;
            let mut k = (target / 100.0).ceil() as usize;
            // settle rounding at exact multiples
            while k > 0 && (k - 1) as f64 * 100.0 >= target {
                k -= 1;
            }
            while (k as f64) * 100.0 < target {
                k += 1;
            }
            k
        }
    };
    k.clamp(1, total.max(1))
}

/// Fraction of candidate score mass inside the mask.
///
/// Candidates are the `k` highest-scoring pixels, ties at the cut going to
/// the lower row-major index. Both sums accumulate in row-major order. A
/// zero denominator yields 0.
pub fn tarr(map: &ScoreMap, mask: &PixelMask, config: &TarrConfig) -> Result<f64, MetricsError> {
    if map.width != mask.width || map.height != mask.height {
        return Err(MetricsError::ShapeMismatch(format!(
            "map {}x{} vs mask {}x{}",
            map.width, map.height, mask.width, mask.height
        )));
    }
    if let TopN::Fixed(p) = config.top_n {
        TopN::fixed(p)?;
    }
    let in_mask = mask.count();
    if in_mask == 0 {
        return Err(MetricsError::EmptyMask);
    }
    let k = candidate_count(config.top_n, in_mask, map.len());
    Ok(tarr_top_k(&map.values, &mask.bits, k))
}

pub(crate) fn tarr_top_k(values: &[f64], mask: &[bool], k: usize) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    if k >= values.len() {
        for (v, m) in values.iter().zip(mask) {
            den += v;
            if *m {
                num += v;
            }
        }
    } else {
        let mut scratch = values.to_vec();
        let (_, cut, _) = scratch.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
        let cut = *cut;
        let above = values.iter().filter(|v| **v > cut).count();
        let mut at_cut = k - above;
        for (v, m) in values.iter().zip(mask) {
            let take = if *v > cut {
                true
            } else if *v == cut && at_cut > 0 {
                at_cut -= 1;
                true
            } else {
                false
            };
            if take {
                den += v;
                if *m {
                    num += v;
                }
            }
        }
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// One frame's contribution to a (ST)ROC curve.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub video_id: String,
    pub frame_index: usize,
    pub score: f64,
    pub label: bool,
    pub tarr: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    /// TPR for a plain ROC, STTPR for a STROC curve.
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    /// `thresholds[i]` produced `points[i]`; the first is `+inf`.
    pub thresholds: Vec<f64>,
    pub spatial: bool,
    pub positives: usize,
    pub negatives: usize,
}

impl RocCurve {
    /// Writes `threshold,fpr,tpr` rows; the leading threshold is `inf`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "threshold,fpr,tpr")?;
        for (t, p) in self.thresholds.iter().zip(&self.points) {
            writeln!(w, "{t},{},{}", p.fpr, p.tpr)?;
        }
        w.flush()
    }
}

/// Builds a ROC (`spatial == false`) or STROC curve from frame records.
///
/// Records are ordered canonically by `(video_id, frame_index)` and then
/// swept from the highest score down; a frame is predicted positive at
/// threshold `t` iff `score >= t`. One point is emitted per distinct score,
/// after a `(0, 0)` point at `+inf`.
pub fn roc_curve(records: &[FrameRecord], spatial: bool) -> Result<RocCurve, MetricsError> {
    let positives = records.iter().filter(|r| r.label).count();
    let negatives = records.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricsError::DegenerateLabels { positives, negatives });
    }
    for r in records {
        if !r.score.is_finite() {
            return Err(MetricsError::InvalidScore {
                video_id: r.video_id.clone(),
                frame_index: r.frame_index,
            });
        }
        if spatial && r.label && r.tarr.is_none() {
            return Err(MetricsError::MissingTarr {
                video_id: r.video_id.clone(),
                frame_index: r.frame_index,
            });
        }
    }

    let mut order: Vec<&FrameRecord> = records.iter().collect();
    order.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.video_id.cmp(&b.video_id))
            .then(a.frame_index.cmp(&b.frame_index))
    });

    let (p, n) = (positives as f64, negatives as f64);
    let mut points = vec![RocPoint { fpr: 0.0, tpr: 0.0 }];
    let mut thresholds = vec![f64::INFINITY];
    let (mut tp, mut fp, mut weighted) = (0usize, 0usize, 0.0f64);
    let mut i = 0;
    while i < order.len() {
        let score = order[i].score;
        while i < order.len() && order[i].score == score {
            let r = order[i];
            if r.label {
                tp += 1;
                if spatial {
                    weighted += r.tarr.expect("checked above");
                }
            } else {
                fp += 1;
            }
            i += 1;
        }
        let tpr = if spatial { weighted / p } else { tp as f64 / p };
        points.push(RocPoint {
            fpr: fp as f64 / n,
            tpr,
        });
        thresholds.push(score);
    }

    Ok(RocCurve {
        points,
        thresholds,
        spatial,
        positives,
        negatives,
    })
}

/// Trapezoidal area under the curve's points.
pub fn auc(curve: &RocCurve) -> f64 {
    curve
        .points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}
