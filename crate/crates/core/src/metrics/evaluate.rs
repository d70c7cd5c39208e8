//! Corpus-level evaluation: turns annotations plus detector output into
//! frame records, then reports AUC, STAUC and per-class breakdowns.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{auc, candidate_count, roc_curve, tarr_top_k, FrameRecord, MetricsError, RocCurve, TopN};
use crate::annotations::{frame_region_mask, AnomalyCategory, VideoAnnotation};
use crate::exec;
use crate::scoremaps::{
    fuse_score_maps, normalize_maps, normalize_series, pseudo_score_map, FrameScoreSeries, NormalizeMode, ObjectScore,
    ScoreMap,
};

/// How a score map is reduced to a frame score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapReduce {
    #[default]
    Mean,
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub top_n: TopN,
    pub normalize: NormalizeMode,
    pub per_class: bool,
    pub frame_score_from_map: MapReduce,
    /// Drop positive frames that have no annotated box instead of counting
    /// them with TARR 0.
    pub exclude_empty_mask_positives: bool,
    /// Extra top-N values whose STAUC is reported alongside the main one.
    pub n_sweep: Option<Vec<TopN>>,
    /// Worker threads for per-video work (0 = automatic). Not echoed: it
    /// cannot change the result.
    #[serde(skip)]
    pub threads: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            top_n: TopN::Adaptive,
            normalize: NormalizeMode::PerVideoMinmax,
            per_class: false,
            frame_score_from_map: MapReduce::Mean,
            exclude_empty_mask_positives: false,
            n_sweep: None,
            threads: 0,
        }
    }
}

/// Whatever a detector produced for one video. At least one field must be
/// set. With both `maps` and `objects` the evaluated map is the average of
/// the two streams after per-video min-max scaling.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectorOutput {
    pub frame_scores: Option<FrameScoreSeries>,
    pub maps: Option<Vec<ScoreMap>>,
    /// Objects per frame, indexed by frame.
    pub objects: Option<Vec<Vec<ObjectScore>>>,
}

impl DetectorOutput {
    pub fn is_spatial(&self) -> bool {
        self.maps.is_some() || self.objects.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallMetrics {
    pub auc: f64,
    pub stauc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub videos: usize,
    pub frames: usize,
    pub auc: Option<f64>,
    pub stauc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: TopN,
    pub stauc: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCounts {
    pub videos_total: usize,
    pub videos_evaluated: usize,
    pub excluded_unknown_category: usize,
    pub excluded_without_objects: usize,
    pub frames_evaluated: usize,
    pub positive_frames: usize,
    pub negative_frames: usize,
    /// Positive frames without any annotated box.
    pub positives_without_boxes: usize,
}

/// Input locations and detector kind, filled in by the command-line front
/// end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputsEcho {
    pub annotations: String,
    pub scores: String,
    pub kind: String,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub overall: OverallMetrics,
    pub per_class: Option<BTreeMap<String, ClassMetrics>>,
    pub n_sweep: Option<Vec<SweepRow>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub inputs: Option<InputsEcho>,
    pub config: EvalConfig,
    pub counts: EvalCounts,
}

/// Report plus the overall curves it was computed from.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: EvaluationReport,
    pub roc: RocCurve,
    pub stroc: Option<RocCurve>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    pub n: TopN,
    pub auc: f64,
    pub stauc: f64,
    pub stroc: RocCurve,
}

// ---------------------------------------------------------------------------

struct FrameEval {
    frame_index: usize,
    score: f64,
    label: bool,
    has_boxes: bool,
    /// TARR per requested top-N, positives only (0 when there are no boxes).
    tarr: Vec<f64>,
}

struct VideoEval {
    video_id: String,
    category: AnomalyCategory,
    has_objects: bool,
    spatial: bool,
    frames: Vec<FrameEval>,
}

fn coverage(video_id: &str, detail: impl Into<String>) -> MetricsError {
    MetricsError::CoverageGap {
        video_id: video_id.to_string(),
        detail: detail.into(),
    }
}

fn dims(video_id: &str, detail: impl Into<String>) -> MetricsError {
    MetricsError::InconsistentDims {
        video_id: video_id.to_string(),
        detail: detail.into(),
    }
}

/// The map evaluated for each frame, if the detector is spatial.
fn effective_maps(ann: &VideoAnnotation, out: &DetectorOutput) -> Result<Option<Vec<ScoreMap>>, MetricsError> {
    let id = ann.video_id.as_str();
    if let Some(maps) = &out.maps {
        if maps.len() != ann.num_frames {
            return Err(coverage(
                id,
                format!("{} score maps for {} frames", maps.len(), ann.num_frames),
            ));
        }
        if let Some(m) = maps
            .iter()
            .find(|m| m.width != maps[0].width || m.height != maps[0].height)
        {
            return Err(dims(
                id,
                format!(
                    "frame {} is {}x{}, frame 0 is {}x{}",
                    m.frame_index, m.width, m.height, maps[0].width, maps[0].height
                ),
            ));
        }
    }
    let pseudo = match &out.objects {
        None => None,
        Some(objs) => {
            if objs.len() != ann.num_frames {
                return Err(coverage(
                    id,
                    format!("object scores for {} of {} frames", objs.len(), ann.num_frames),
                ));
            }
            let (w, h) = (ann.width as usize, ann.height as usize);
            let maps = objs
                .iter()
                .enumerate()
                .map(|(f, o)| pseudo_score_map(o, w, h).map(|m| m.with_frame_index(f)))
                .collect::<Result<Vec<_>, _>>()?;
            Some(maps)
        }
    };
    Ok(match (&out.maps, pseudo) {
        (None, None) => None,
        (Some(m), None) => Some(m.clone()),
        (None, Some(p)) => Some(p),
        (Some(m), Some(p)) => {
            if m.first().map(|x| (x.width, x.height)) != p.first().map(|x| (x.width, x.height)) {
                return Err(dims(
                    id,
                    format!(
                        "score maps are {}x{} but the video is {}x{}",
                        m[0].width, m[0].height, ann.width, ann.height
                    ),
                ));
            }
            let (m, p) = (normalize_maps(m), normalize_maps(&p));
            let fused = m
                .iter()
                .zip(&p)
                .map(|(a, b)| fuse_score_maps(a, b))
                .collect::<Result<Vec<_>, _>>()?;
            Some(fused)
        }
    })
}

fn eval_video(
    ann: &VideoAnnotation,
    out: &DetectorOutput,
    config: &EvalConfig,
    top_ns: &[TopN],
) -> Result<VideoEval, MetricsError> {
    let id = ann.video_id.as_str();
    if out.frame_scores.is_none() && !out.is_spatial() {
        return Err(coverage(id, "detector output is empty"));
    }
    let maps = effective_maps(ann, out)?;

    let raw = match (&out.frame_scores, &maps) {
        (Some(s), _) => {
            if s.len() != ann.num_frames {
                return Err(coverage(
                    id,
                    format!("{} frame scores for {} frames", s.len(), ann.num_frames),
                ));
            }
            if let Some(i) = s.scores.iter().position(|v| !v.is_finite()) {
                return Err(MetricsError::InvalidScore {
                    video_id: id.to_string(),
                    frame_index: i,
                });
            }
            s.clone()
        }
        (None, Some(maps)) => FrameScoreSeries {
            video_id: ann.video_id.clone(),
            scores: maps
                .iter()
                .map(|m| match config.frame_score_from_map {
                    MapReduce::Mean => m.mean(),
                    MapReduce::Max => m.max(),
                })
                .collect(),
        },
        (None, None) => unreachable!("checked above"),
    };
    let scores = normalize_series(&raw, config.normalize).scores;

    let mut frames = Vec::with_capacity(ann.num_frames);
    for (f, score) in scores.into_iter().enumerate() {
        let label = ann.anomaly_start <= f && f < ann.anomaly_end;
        let has_boxes = label && ann.boxes_at(f).next().is_some();
        let mut tarr = Vec::new();
        if let (true, Some(maps)) = (label, &maps) {
            let map = &maps[f];
            if has_boxes {
                let mask = frame_region_mask(ann, f, map.width, map.height)?;
                let in_mask = mask.count();
                if in_mask > 0 {
                    tarr = top_ns
                        .iter()
                        .map(|n| tarr_top_k(&map.values, &mask.bits, candidate_count(*n, in_mask, map.len())))
                        .collect();
                }
            }
            if tarr.is_empty() {
                tarr = vec![0.0; top_ns.len()];
            }
        }
        frames.push(FrameEval {
            frame_index: f,
            score,
            label,
            has_boxes,
            tarr,
        });
    }
    Ok(VideoEval {
        video_id: ann.video_id.clone(),
        category: ann.category,
        has_objects: ann.has_objects(),
        spatial: maps.is_some(),
        frames,
    })
}

/// Frame records of `videos` using TARR column `col` (if spatial).
fn records<'a>(
    videos: impl Iterator<Item = &'a VideoEval>,
    col: Option<usize>,
    exclude_empty: bool,
) -> Vec<FrameRecord> {
    let mut out = Vec::new();
    for v in videos {
        for f in &v.frames {
            if exclude_empty && f.label && !f.has_boxes {
                continue;
            }
            out.push(FrameRecord {
                video_id: v.video_id.clone(),
                frame_index: f.frame_index,
                score: f.score,
                label: f.label,
                tarr: match (f.label, col) {
                    (true, Some(c)) => Some(f.tarr[c]),
                    _ => None,
                },
            });
        }
    }
    out
}

struct Prepared {
    /// Non-unknown videos in video-id order.
    videos: Vec<VideoEval>,
    spatial: bool,
    counts: EvalCounts,
}

impl Prepared {
    /// Videos entering the overall metrics.
    fn overall(&self) -> impl Iterator<Item = &VideoEval> {
        let spatial = self.spatial;
        self.videos.iter().filter(move |v| !spatial || v.has_objects)
    }
}

fn prepare<F>(
    annotations: &[VideoAnnotation],
    source: F,
    config: &EvalConfig,
    top_ns: &[TopN],
) -> Result<Prepared, MetricsError>
where
    F: Fn(&VideoAnnotation) -> Result<DetectorOutput, MetricsError> + Sync + Send,
{
    let mut sorted: Vec<&VideoAnnotation> = annotations.iter().collect();
    sorted.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    if let Some(w) = sorted.windows(2).find(|w| w[0].video_id == w[1].video_id) {
        return Err(MetricsError::DuplicateVideo(w[0].video_id.clone()));
    }
    for n in top_ns {
        if let TopN::Fixed(p) = n {
            TopN::fixed(*p)?;
        }
    }
    let known: Vec<&VideoAnnotation> = sorted.iter().copied().filter(|a| !a.category.is_unknown()).collect();
    let videos = exec::try_map(&known, config.threads, |_, ann| {
        let out = source(ann)?;
        eval_video(ann, &out, config, top_ns)
    })?;

    let spatial = videos.iter().any(|v| v.spatial);
    if spatial {
        if let Some(v) = videos.iter().find(|v| !v.spatial) {
            return Err(coverage(&v.video_id, "no score maps or object scores"));
        }
    }

    let mut counts = EvalCounts {
        videos_total: annotations.len(),
        excluded_unknown_category: sorted.len() - known.len(),
        ..Default::default()
    };
    for v in &videos {
        if spatial && !v.has_objects {
            counts.excluded_without_objects += 1;
            continue;
        }
        counts.videos_evaluated += 1;
        for f in &v.frames {
            if f.label && !f.has_boxes {
                counts.positives_without_boxes += 1;
                if config.exclude_empty_mask_positives {
                    continue;
                }
            }
            counts.frames_evaluated += 1;
            if f.label {
                counts.positive_frames += 1;
            } else {
                counts.negative_frames += 1;
            }
        }
    }
    if counts.videos_evaluated == 0 {
        return Err(MetricsError::NothingToEvaluate);
    }
    Ok(Prepared {
        videos,
        spatial,
        counts,
    })
}

fn class_metrics(prep: &Prepared, config: &EvalConfig) -> Result<BTreeMap<String, ClassMetrics>, MetricsError> {
    let cats: BTreeSet<AnomalyCategory> = prep.videos.iter().map(|v| v.category).collect();
    let mut out = BTreeMap::new();
    for cat in cats {
        let members = || prep.videos.iter().filter(move |v| v.category == cat);
        let recs = records(members(), None, config.exclude_empty_mask_positives);
        let roc = match roc_curve(&recs, false) {
            Ok(c) => Some(c),
            Err(MetricsError::DegenerateLabels { .. }) => None,
            Err(e) => return Err(e),
        };
        let stauc = if prep.spatial && roc.is_some() && members().any(|v| v.has_objects) {
            let recs = records(members(), Some(0), config.exclude_empty_mask_positives);
            Some(auc(&roc_curve(&recs, true)?))
        } else {
            None
        };
        out.insert(
            cat.to_string(),
            ClassMetrics {
                videos: members().count(),
                frames: recs.len(),
                auc: roc.as_ref().map(auc),
                stauc,
            },
        );
    }
    Ok(out)
}

/// Evaluates with detector output supplied per video by `source`, which may
/// be called concurrently. Unknown-category videos are skipped without
/// calling `source`.
///
/// Unknown-category videos are always excluded. When the detector is
/// spatial, videos without annotated objects are excluded from the overall
/// metrics as well (per-class metrics keep them; a class none of whose
/// videos has objects gets no STAUC).
pub fn evaluate_full<F>(
    annotations: &[VideoAnnotation],
    source: F,
    config: &EvalConfig,
) -> Result<Evaluation, MetricsError>
where
    F: Fn(&VideoAnnotation) -> Result<DetectorOutput, MetricsError> + Sync + Send,
{
    let mut top_ns = vec![config.top_n];
    if let Some(extra) = &config.n_sweep {
        top_ns.extend(extra.iter().copied());
    }
    let prep = prepare(annotations, source, config, &top_ns)?;
    let exclude = config.exclude_empty_mask_positives;

    let roc = roc_curve(&records(prep.overall(), None, exclude), false)?;
    let overall_auc = auc(&roc);
    let mut stroc = None;
    let mut n_sweep = None;
    if prep.spatial {
        let curve = roc_curve(&records(prep.overall(), Some(0), exclude), true)?;
        stroc = Some(curve);
        if let Some(extra) = &config.n_sweep {
            let mut rows = Vec::with_capacity(extra.len());
            for (i, n) in extra.iter().enumerate() {
                let c = roc_curve(&records(prep.overall(), Some(i + 1), exclude), true)?;
                rows.push(SweepRow { n: *n, stauc: auc(&c) });
            }
            n_sweep = Some(rows);
        }
    }
    let overall = OverallMetrics {
        auc: overall_auc,
        stauc: stroc.as_ref().map(auc),
    };
    debug_assert!(overall.stauc.is_none_or(|s| s <= overall.auc + 1e-12));
    let per_class = if config.per_class {
        Some(class_metrics(&prep, config)?)
    } else {
        None
    };
    Ok(Evaluation {
        report: EvaluationReport {
            overall,
            per_class,
            n_sweep,
            inputs: None,
            config: config.clone(),
            counts: prep.counts,
        },
        roc,
        stroc,
    })
}

pub fn evaluate_with<F>(
    annotations: &[VideoAnnotation],
    source: F,
    config: &EvalConfig,
) -> Result<EvaluationReport, MetricsError>
where
    F: Fn(&VideoAnnotation) -> Result<DetectorOutput, MetricsError> + Sync + Send,
{
    evaluate_full(annotations, source, config).map(|e| e.report)
}

/// Evaluates detector outputs keyed by video id.
pub fn evaluate(
    annotations: &[VideoAnnotation],
    outputs: &BTreeMap<String, DetectorOutput>,
    config: &EvalConfig,
) -> Result<EvaluationReport, MetricsError> {
    evaluate_with(annotations, lookup(outputs), config)
}

fn lookup(
    outputs: &BTreeMap<String, DetectorOutput>,
) -> impl Fn(&VideoAnnotation) -> Result<DetectorOutput, MetricsError> + Sync + Send + '_ {
    move |ann| {
        outputs
            .get(&ann.video_id)
            .cloned()
            .ok_or_else(|| coverage(&ann.video_id, "no detector output"))
    }
}

/// AUC, STAUC and the STROC curve for each top-N value. The frame records
/// are shared, so AUC is the same in every entry.
pub fn sweep_n_with<F>(
    annotations: &[VideoAnnotation],
    source: F,
    n_values: &[TopN],
    config: &EvalConfig,
) -> Result<Vec<SweepEntry>, MetricsError>
where
    F: Fn(&VideoAnnotation) -> Result<DetectorOutput, MetricsError> + Sync + Send,
{
    let prep = prepare(annotations, source, config, n_values)?;
    if !prep.spatial {
        return Err(coverage(
            &prep.videos[0].video_id,
            "top-N sweep needs score maps or object scores",
        ));
    }
    let exclude = config.exclude_empty_mask_positives;
    let overall_auc = auc(&roc_curve(&records(prep.overall(), None, exclude), false)?);
    n_values
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let stroc = roc_curve(&records(prep.overall(), Some(i), exclude), true)?;
            Ok(SweepEntry {
                n: *n,
                auc: overall_auc,
                stauc: auc(&stroc),
                stroc,
            })
        })
        .collect()
}

pub fn sweep_n(
    annotations: &[VideoAnnotation],
    outputs: &BTreeMap<String, DetectorOutput>,
    n_values: &[TopN],
    config: &EvalConfig,
) -> Result<Vec<SweepEntry>, MetricsError> {
    sweep_n_with(annotations, lookup(outputs), n_values, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotations::{BoundingBox, ObjectClass, Tracklet};

    fn video(id: &str, cat: &str, frames: usize, window: (usize, usize), boxes: bool) -> VideoAnnotation {
        let tracklets = if boxes {
            vec![Tracklet {
                track_id: 1,
                object_class: ObjectClass::Car,
                boxes: (window.0..window.1)
                    .map(|f| (f, BoundingBox::new(0.0, 0.0, 2.0, 2.0)))
                    .collect(),
            }]
        } else {
            vec![]
        };
        VideoAnnotation {
            video_id: id.into(),
            num_frames: frames,
            width: 4,
            height: 4,
            fps: 10.0,
            anomaly_start: window.0,
            anomaly_end: window.1,
            category: AnomalyCategory::from_code(cat).unwrap(),
            tracklets,
        }
    }

    /// Maps whose mass sits in the top-left 2x2 block (inside) or the
    /// bottom-right block (outside), scaled by `level`.
    fn map(f: usize, level: f64, inside: bool) -> ScoreMap {
        let mut v = vec![0.0; 16];
        let idx: [usize; 4] = if inside { [0, 1, 4, 5] } else { [10, 11, 14, 15] };
        for i in idx {
            v[i] = level;
        }
        ScoreMap::new(4, 4, f, v).unwrap()
    }

    fn output(levels: &[f64], inside: bool) -> DetectorOutput {
        DetectorOutput {
            maps: Some(levels.iter().enumerate().map(|(f, l)| map(f, *l, inside)).collect()),
            ..Default::default()
        }
    }

    fn cfg() -> EvalConfig {
        EvalConfig {
            normalize: NormalizeMode::None,
            ..Default::default()
        }
    }

    #[test]
    fn perfect_localizer_stauc_equals_auc() {
        let anns = vec![video("a", "AH", 6, (2, 5), true), video("b", "OC*", 5, (1, 3), true)];
        let outs = BTreeMap::from([
            ("a".to_string(), output(&[0.1, 0.3, 0.5, 0.2, 0.9, 0.05], true)),
            ("b".to_string(), output(&[0.2, 0.7, 0.4, 0.35, 0.15], true)),
        ]);
        let r = evaluate(&anns, &outs, &cfg()).unwrap();
        assert_eq!(Some(r.overall.auc), r.overall.stauc);
        assert_eq!(r.counts.videos_evaluated, 2);
        assert_eq!(r.counts.frames_evaluated, 11);
        assert_eq!(r.counts.positive_frames, 5);
    }

    #[test]
    fn mislocalized_maps_have_zero_stauc() {
        let anns = vec![video("a", "AH", 4, (2, 4), true)];
        let outs = BTreeMap::from([("a".to_string(), output(&[0.1, 0.2, 0.8, 0.9], false))]);
        let r = evaluate(&anns, &outs, &cfg()).unwrap();
        assert_eq!(r.overall.auc, 1.0);
        assert_eq!(r.overall.stauc, Some(0.0));
    }

    #[test]
    fn frame_scores_only_has_no_stauc() {
        let anns = vec![video("a", "AH", 4, (2, 4), true)];
        let outs = BTreeMap::from([(
            "a".to_string(),
            DetectorOutput {
                frame_scores: Some(FrameScoreSeries::new("a", vec![0.1, 0.4, 0.3, 0.9]).unwrap()),
                ..Default::default()
            },
        )]);
        let r = evaluate(&anns, &outs, &cfg()).unwrap();
        assert_eq!(r.overall.auc, 0.75);
        assert_eq!(r.overall.stauc, None);
    }

    #[test]
    fn filters_unknown_and_objectless() {
        let anns = vec![
            video("a", "AH", 4, (2, 4), true),
            video("u", "UK", 4, (2, 4), true),
            video("o", "OO", 4, (1, 3), false),
        ];
        let outs = BTreeMap::from([
            ("a".to_string(), output(&[0.1, 0.2, 0.8, 0.9], true)),
            ("o".to_string(), output(&[0.3, 0.9, 0.8, 0.1], true)),
        ]);
        let r = evaluate(
            &anns,
            &outs,
            &EvalConfig {
                per_class: true,
                ..cfg()
            },
        )
        .unwrap();
        assert_eq!(r.counts.excluded_unknown_category, 1);
        assert_eq!(r.counts.excluded_without_objects, 1);
        assert_eq!(r.counts.videos_evaluated, 1);
        let pc = r.per_class.unwrap();
        assert_eq!(pc.len(), 2);
        assert_eq!(pc["OO"].auc, Some(1.0));
        assert_eq!(pc["OO"].stauc, None);
        assert_eq!(pc["AH"].stauc, Some(1.0));
    }

    #[test]
    fn positives_without_boxes_count_as_zero() {
        let mut a = video("a", "AH", 4, (1, 4), true);
        a.tracklets[0].boxes.remove(&3);
        let outs = BTreeMap::from([("a".to_string(), output(&[0.1, 0.5, 0.6, 0.9], true))]);
        let r = evaluate(std::slice::from_ref(&a), &outs, &cfg()).unwrap();
        assert_eq!(r.counts.positives_without_boxes, 1);
        // frame 3 ranks first but localizes nothing
        assert_eq!(r.overall.auc, 1.0);
        assert!((r.overall.stauc.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let r = evaluate(
            &[a],
            &outs,
            &EvalConfig {
                exclude_empty_mask_positives: true,
                ..cfg()
            },
        )
        .unwrap();
        assert_eq!(r.counts.frames_evaluated, 3);
        assert_eq!(r.overall.stauc, Some(1.0));
    }

    #[test]
    fn object_scores_become_pseudo_maps() {
        let a = video("a", "VP", 4, (2, 4), true);
        let objs: Vec<Vec<ObjectScore>> = (0..4)
            .map(|f| {
                vec![ObjectScore {
                    track_id: 1,
                    score: [0.1, 0.2, 0.8, 0.9][f],
                    bbox: BoundingBox::new(0.0, 0.0, 2.0, 2.0),
                }]
            })
            .collect();
        let outs = BTreeMap::from([(
            "a".to_string(),
            DetectorOutput {
                objects: Some(objs),
                ..Default::default()
            },
        )]);
        let r = evaluate(&[a], &outs, &cfg()).unwrap();
        assert_eq!(r.overall.auc, 1.0);
        assert_eq!(r.overall.stauc, Some(1.0));
    }

    #[test]
    fn coverage_and_dims_errors() {
        let anns = vec![video("a", "AH", 4, (2, 4), true)];
        let empty = BTreeMap::new();
        assert!(matches!(
            evaluate(&anns, &empty, &cfg()),
            Err(MetricsError::CoverageGap { .. })
        ));
        let short = BTreeMap::from([("a".to_string(), output(&[0.1, 0.2, 0.3], true))]);
        assert!(matches!(
            evaluate(&anns, &short, &cfg()),
            Err(MetricsError::CoverageGap { .. })
        ));
        let mut bad = output(&[0.1, 0.2, 0.3, 0.4], true);
        bad.maps.as_mut().unwrap()[2] = ScoreMap::zeros(2, 2, 2);
        let bad = BTreeMap::from([("a".to_string(), bad)]);
        assert!(matches!(
            evaluate(&anns, &bad, &cfg()),
            Err(MetricsError::InconsistentDims { .. })
        ));
        let dup = vec![anns[0].clone(), anns[0].clone()];
        assert!(matches!(
            evaluate(&dup, &short, &cfg()),
            Err(MetricsError::DuplicateVideo(_))
        ));
    }

    #[test]
    fn sweep_shares_auc() {
        let anns = vec![video("a", "AH", 6, (2, 5), true)];
        let mut out = output(&[0.1, 0.3, 0.5, 0.2, 0.9, 0.05], true);
        // smear some mass outside the box so the sweep varies
        for m in out.maps.as_mut().unwrap() {
            m.values[15] = 0.3;
        }
        let outs = BTreeMap::from([("a".to_string(), out)]);
        let ns = TopN::default_sweep();
        let entries = sweep_n(&anns, &outs, &ns, &cfg()).unwrap();
        assert_eq!(entries.len(), 7);
        assert!(entries.iter().all(|e| e.auc == entries[0].auc));
        let full = evaluate(
            &anns,
            &outs,
            &EvalConfig {
                top_n: TopN::Fixed(100.0),
                n_sweep: Some(ns.clone()),
                ..cfg()
            },
        )
        .unwrap();
        assert_eq!(full.overall.stauc, Some(entries[5].stauc));
        let rows = full.n_sweep.unwrap();
        for (row, e) in rows.iter().zip(&entries) {
            assert_eq!(row.stauc, e.stauc);
        }
    }

    #[test]
    fn video_order_does_not_matter() {
        let anns = vec![video("a", "AH", 6, (2, 5), true), video("b", "OC*", 5, (1, 3), true)];
        let outs = BTreeMap::from([
            ("a".to_string(), output(&[0.1, 0.3, 0.5, 0.2, 0.9, 0.05], true)),
            ("b".to_string(), output(&[0.2, 0.7, 0.4, 0.35, 0.15], false)),
        ]);
        let r1 = evaluate(&anns, &outs, &cfg()).unwrap();
        let rev: Vec<_> = anns.iter().rev().cloned().collect();
        assert_eq!(r1, evaluate(&rev, &outs, &cfg()).unwrap());
    }
}
