//! Video anomaly annotations: temporal windows, anomaly categories and
//! per-object tracklets, plus the JSON document format, multi-annotator
//! merging and rasterization of the annotated region of a frame.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("malformed annotation document: {0}")]
    MalformedDocument(String),
    #[error("schema violation at `{path}`: {message}")]
    SchemaViolation { path: String, message: String },
    #[error("no annotations given")]
    EmptyInput,
    #[error("annotation drafts disagree on {0}")]
    MismatchedVideo(String),
    #[error("frame {frame} out of range for video with {num_frames} frames")]
    FrameOutOfRange { frame: usize, num_frames: usize },
}

fn violation(path: impl Into<String>, message: impl Into<String>) -> AnnotationError {
    AnnotationError::SchemaViolation {
        path: path.into(),
        message: message.into(),
    }
}

/// Short codes of the nine base categories, indexed by `base_id - 1`.
pub const CATEGORY_CODES: [&str; 9] = ["ST", "AH", "LA", "OC", "TC", "VP", "VO", "OO", "UK"];

/// Base id of the "unknown" category.
pub const UNKNOWN_BASE_ID: u8 = 9;

/// One of the 18 anomaly categories: a base category crossed with whether
/// the ego vehicle is involved. Non-ego categories print with a `*` suffix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AnomalyCategory {
    pub base_id: u8,
    pub ego_involved: bool,
}

impl AnomalyCategory {
    pub fn new(base_id: u8, ego_involved: bool) -> Result<Self, AnnotationError> {
        if !(1..=9).contains(&base_id) {
            return Err(violation("category.base_id", format!("{base_id} not in 1..=9")));
        }
        Ok(Self { base_id, ego_involved })
    }

    /// All 18 categories, ego-involved first within each base id.
    pub fn all() -> impl Iterator<Item = AnomalyCategory> {
        (1..=9u8).flat_map(|b| {
            [true, false].into_iter().map(move |ego| AnomalyCategory {
                base_id: b,
                ego_involved: ego,
            })
        })
    }

    pub fn short_code(&self) -> &'static str {
        CATEGORY_CODES[(self.base_id - 1) as usize]
    }

    pub fn is_unknown(&self) -> bool {
        self.base_id == UNKNOWN_BASE_ID
    }

    /// Parses codes like `AH` (ego-involved) or `OC*` (non-ego).
    pub fn from_code(code: &str) -> Option<Self> {
        let (base, ego) = match code.strip_suffix('*') {
            Some(b) => (b, false),
            None => (code, true),
        };
        let idx = CATEGORY_CODES.iter().position(|c| *c == base)?;
        Some(Self {
            base_id: idx as u8 + 1,
            ego_involved: ego,
        })
    }
}

impl fmt::Display for AnomalyCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_code())?;
        if !self.ego_involved {
            f.write_str("*")?;
        }
        Ok(())
    }
}

/// Axis-aligned box in pixel coordinates, origin top-left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BoundingBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self { x1, y1, x2, y2 }
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let ix = (self.x2.min(other.x2) - self.x1.max(other.x1)).max(0.0);
        let iy = (self.y2.min(other.y2) - self.y1.max(other.y1)).max(0.0);
        let inter = ix * iy;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    /// Whether a point lies in the box, lower edges inclusive and upper
    /// edges exclusive.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x1 && x < self.x2 && y >= self.y1 && y < self.y2
    }

    /// Checks ordering, finiteness and that the box lies in `[0,w] x [0,h]`.
    pub fn check(&self, width: f64, height: f64) -> Result<(), String> {
        let c = [self.x1, self.y1, self.x2, self.y2];
        if c.iter().any(|v| !v.is_finite()) {
            return Err("non-finite coordinate".into());
        }
        if !(self.x1 < self.x2 && self.y1 < self.y2) {
            return Err(format!("degenerate box {:?}", c));
        }
        if self.x1 < 0.0 || self.y1 < 0.0 || self.x2 > width || self.y2 > height {
            return Err(format!("box {:?} outside {}x{} frame", c, width, height));
        }
        Ok(())
    }

    /// Range of pixel indices along one axis whose centers `i + 0.5` fall in
    /// `[lo, hi)`, clamped to `[0, len)`.
    pub(crate) fn center_span(lo: f64, hi: f64, len: usize) -> std::ops::Range<usize> {
        let mut start = (lo - 0.5).ceil().max(0.0).min(len as f64) as usize;
        while start > 0 && (start - 1) as f64 + 0.5 >= lo {
            start -= 1;
        }
        while start < len && (start as f64 + 0.5) < lo {
            start += 1;
        }
        let mut end = (hi - 0.5).ceil().max(0.0).min(len as f64) as usize;
        while end > 0 && (end - 1) as f64 + 0.5 >= hi {
            end -= 1;
        }
        while end < len && (end as f64 + 0.5) < hi {
            end += 1;
        }
        start..end.max(start)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectClass {
    Person,
    Car,
    Truck,
    Bus,
    Motorcycle,
    Bicycle,
    Rider,
}

impl ObjectClass {
    pub const ALL: [ObjectClass; 7] = [
        ObjectClass::Person,
        ObjectClass::Car,
        ObjectClass::Truck,
        ObjectClass::Bus,
        ObjectClass::Motorcycle,
        ObjectClass::Bicycle,
        ObjectClass::Rider,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ObjectClass::Person => "person",
            ObjectClass::Car => "car",
            ObjectClass::Truck => "truck",
            ObjectClass::Bus => "bus",
            ObjectClass::Motorcycle => "motorcycle",
            ObjectClass::Bicycle => "bicycle",
            ObjectClass::Rider => "rider",
        }
    }
}

/// Boxes of one anomalous object, keyed by frame index.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracklet {
    pub track_id: u32,
    pub object_class: ObjectClass,
    pub boxes: BTreeMap<usize, BoundingBox>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoAnnotation {
    pub video_id: String,
    pub num_frames: usize,
    pub width: u32,
    pub height: u32,
    pub fps: f64,
    /// First anomalous frame.
    pub anomaly_start: usize,
    /// One past the last anomalous frame.
    pub anomaly_end: usize,
    pub category: AnomalyCategory,
    pub tracklets: Vec<Tracklet>,
}

impl VideoAnnotation {
    pub fn anomalous_frames(&self) -> usize {
        self.anomaly_end - self.anomaly_start
    }

    pub fn has_objects(&self) -> bool {
        self.tracklets.iter().any(|t| !t.boxes.is_empty())
    }

    /// Boxes of every tracklet present at `frame`, in tracklet order.
    pub fn boxes_at(&self, frame: usize) -> impl Iterator<Item = &BoundingBox> {
        self.tracklets.iter().filter_map(move |t| t.boxes.get(&frame))
    }

    pub fn validate(&self) -> Result<(), AnnotationError> {
        if self.video_id.is_empty() {
            return Err(violation("video_id", "empty"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(violation("width", "frame dimensions must be positive"));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(violation("fps", "must be positive and finite"));
        }
        if self.anomaly_start >= self.anomaly_end {
            return Err(violation(
                "anomaly_start",
                format!("window [{}, {}) is empty", self.anomaly_start, self.anomaly_end),
            ));
        }
        if self.anomaly_end > self.num_frames {
            return Err(violation(
                "anomaly_end",
                format!("{} exceeds num_frames {}", self.anomaly_end, self.num_frames),
            ));
        }
        AnomalyCategory::new(self.category.base_id, self.category.ego_involved)?;
        let mut ids = BTreeSet::new();
        for (ti, t) in self.tracklets.iter().enumerate() {
            if !ids.insert(t.track_id) {
                return Err(violation(
                    format!("tracklets[{ti}].track_id"),
                    format!("duplicate track id {}", t.track_id),
                ));
            }
            if t.boxes.is_empty() {
                return Err(violation(format!("tracklets[{ti}].boxes"), "tracklet has no boxes"));
            }
            for (frame, b) in &t.boxes {
                let path = format!("tracklets[{ti}].boxes.{frame}");
                if *frame < self.anomaly_start || *frame >= self.anomaly_end {
                    return Err(violation(path, "frame outside the anomaly window"));
                }
                b.check(self.width as f64, self.height as f64)
                    .map_err(|m| violation(path, m))?;
            }
        }
        Ok(())
    }
}

/// Row-major boolean raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelMask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl PixelMask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![true; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    /// Sets every pixel whose center lies inside `b` (coordinates already in
    /// mask pixel units).
    pub fn fill_box(&mut self, b: &BoundingBox) {
        let xs = BoundingBox::center_span(b.x1, b.x2, self.width);
        let ys = BoundingBox::center_span(b.y1, b.y2, self.height);
        for y in ys {
            let row = y * self.width;
            self.bits[row + xs.start..row + xs.end].fill(true);
        }
    }
}

// ---------------------------------------------------------------------------
// JSON document

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrackletDoc {
    track_id: u32,
    object_class: ObjectClass,
    boxes: BTreeMap<usize, [f64; 4]>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnnotationDoc {
    video_id: String,
    num_frames: usize,
    width: u32,
    height: u32,
    fps: f64,
    anomaly_start: usize,
    anomaly_end: usize,
    category: AnomalyCategory,
    tracklets: Vec<TrackletDoc>,
}

/// Parses and validates one annotation document.
pub fn parse_annotation(bytes: &[u8]) -> Result<VideoAnnotation, AnnotationError> {
    let value: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|e| AnnotationError::MalformedDocument(e.to_string()))?;
    let doc: AnnotationDoc = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        violation(path, e.into_inner().to_string())
    })?;

    let mut tracklets = Vec::with_capacity(doc.tracklets.len());
    for t in doc.tracklets {
        let boxes = t
            .boxes
            .into_iter()
            .map(|(f, [x1, y1, x2, y2])| (f, BoundingBox::new(x1, y1, x2, y2)))
            .collect();
        tracklets.push(Tracklet {
            track_id: t.track_id,
            object_class: t.object_class,
            boxes,
        });
    }

    let ann = VideoAnnotation {
        video_id: doc.video_id,
        num_frames: doc.num_frames,
        width: doc.width,
        height: doc.height,
        fps: doc.fps,
        anomaly_start: doc.anomaly_start,
        anomaly_end: doc.anomaly_end,
        category: doc.category,
        tracklets,
    };
    ann.validate()?;
    Ok(ann)
}

/// Serializes to the pretty-printed JSON document format.
pub fn serialize_annotation(ann: &VideoAnnotation) -> String {
    let doc = AnnotationDoc {
        video_id: ann.video_id.clone(),
        num_frames: ann.num_frames,
        width: ann.width,
        height: ann.height,
        fps: ann.fps,
        anomaly_start: ann.anomaly_start,
        anomaly_end: ann.anomaly_end,
        category: ann.category,
        tracklets: ann
            .tracklets
            .iter()
            .map(|t| TrackletDoc {
                track_id: t.track_id,
                object_class: t.object_class,
                boxes: t.boxes.iter().map(|(f, b)| (*f, [b.x1, b.y1, b.x2, b.y2])).collect(),
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("annotation serializes");
    s.push('\n');
    s
}

// ---------------------------------------------------------------------------
// Merging

/// IoU threshold above which two tracklets from different annotators are
/// considered the same object.
pub const TRACK_MATCH_IOU: f64 = 0.5;

/// Mean of `values` computed as an offset from the first value, so that
/// identical inputs reproduce the input exactly.
fn anchored_mean(values: &[f64]) -> f64 {
    let first = values[0];
    let offset: f64 = values.iter().map(|v| v - first).sum();
    first + offset / values.len() as f64
}

/// Integer mean rounded half-up.
fn mean_half_up(values: &[usize]) -> usize {
    let n = values.len() as u128;
    let sum: u128 = values.iter().map(|v| *v as u128).sum();
    ((2 * sum + n) / (2 * n)) as usize
}

/// Most frequent category; ties go to the lowest base id, then to the
/// ego-involved variant.
fn category_mode(cats: &[AnomalyCategory]) -> AnomalyCategory {
    let mut counts: BTreeMap<(u8, bool), usize> = BTreeMap::new();
    for c in cats {
        *counts.entry((c.base_id, !c.ego_involved)).or_default() += 1;
    }
    // BTreeMap order is (base_id asc, ego first); keep the first maximum.
    let mut best: Option<((u8, bool), usize)> = None;
    for (k, n) in counts {
        if best.is_none_or(|(_, bn)| n > bn) {
            best = Some((k, n));
        }
    }
    let ((base_id, non_ego), _) = best.expect("non-empty");
    AnomalyCategory {
        base_id,
        ego_involved: !non_ego,
    }
}

/// Mean per-frame IoU over frames both tracklets cover; 0 when disjoint.
fn tracklet_iou(a: &Tracklet, b: &Tracklet) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (f, ba) in &a.boxes {
        if let Some(bb) = b.boxes.get(f) {
            sum += ba.iou(bb);
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Merges several annotators' drafts of one video.
///
/// The window endpoints are averaged (rounded half-up), the category is the
/// mode, and tracklets are matched across drafts greedily by descending
/// mean IoU (at least [`TRACK_MATCH_IOU`]) against the first-seen member of
/// each match group. Matched boxes are averaged per frame; unmatched
/// tracklets pass through unchanged. Boxes that fall outside the merged
/// window are dropped, and colliding track ids are renumbered.
pub fn merge_annotations(drafts: &[VideoAnnotation]) -> Result<VideoAnnotation, AnnotationError> {
    let first = drafts.first().ok_or(AnnotationError::EmptyInput)?;
    for d in &drafts[1..] {
        if d.video_id != first.video_id {
            return Err(AnnotationError::MismatchedVideo(format!(
                "video_id ({} vs {})",
                first.video_id, d.video_id
            )));
        }
        if d.num_frames != first.num_frames {
            return Err(AnnotationError::MismatchedVideo("num_frames".into()));
        }
        if d.width != first.width || d.height != first.height {
            return Err(AnnotationError::MismatchedVideo("frame dimensions".into()));
        }
    }

    let starts: Vec<usize> = drafts.iter().map(|d| d.anomaly_start).collect();
    let ends: Vec<usize> = drafts.iter().map(|d| d.anomaly_end).collect();
    let anomaly_start = mean_half_up(&starts);
    let anomaly_end = mean_half_up(&ends);
    let cats: Vec<AnomalyCategory> = drafts.iter().map(|d| d.category).collect();
    let category = category_mode(&cats);

    // groups[g] = member tracklets, anchor first
    let mut groups: Vec<Vec<&Tracklet>> = first.tracklets.iter().map(|t| vec![t]).collect();
    for d in &drafts[1..] {
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (gi, g) in groups.iter().enumerate() {
            for (ti, t) in d.tracklets.iter().enumerate() {
                let iou = tracklet_iou(g[0], t);
                if iou >= TRACK_MATCH_IOU {
                    pairs.push((iou, gi, ti));
                }
            }
        }
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let n_groups = groups.len();
        let mut group_used = vec![false; n_groups];
        let mut track_used = vec![false; d.tracklets.len()];
        for (_, gi, ti) in pairs {
            if !group_used[gi] && !track_used[ti] {
                group_used[gi] = true;
                track_used[ti] = true;
                groups[gi].push(&d.tracklets[ti]);
            }
        }
        for (ti, t) in d.tracklets.iter().enumerate() {
            if !track_used[ti] {
                groups.push(vec![t]);
            }
        }
    }

    let mut used_ids = BTreeSet::new();
    let mut next_id = groups
        .iter()
        .flat_map(|g| g.iter().map(|t| t.track_id))
        .max()
        .map_or(0, |m| m + 1);
    let mut tracklets = Vec::new();
    for g in groups {
        let frames: BTreeSet<usize> = g.iter().flat_map(|t| t.boxes.keys().copied()).collect();
        let mut boxes = BTreeMap::new();
        for f in frames {
            if f < anomaly_start || f >= anomaly_end {
                continue;
            }
            let present: Vec<&BoundingBox> = g.iter().filter_map(|t| t.boxes.get(&f)).collect();
            let avg = |sel: fn(&BoundingBox) -> f64| anchored_mean(&present.iter().map(|b| sel(b)).collect::<Vec<_>>());
            boxes.insert(
                f,
                BoundingBox::new(avg(|b| b.x1), avg(|b| b.y1), avg(|b| b.x2), avg(|b| b.y2)),
            );
        }
        if boxes.is_empty() {
            continue;
        }
        let mut class_counts: Vec<(ObjectClass, usize)> = Vec::new();
        for t in &g {
            match class_counts.iter_mut().find(|(c, _)| *c == t.object_class) {
                Some(e) => e.1 += 1,
                None => class_counts.push((t.object_class, 1)),
            }
        }
        let object_class = class_counts
            .iter()
            .fold(None::<(ObjectClass, usize)>, |best, &(c, n)| match best {
                Some((_, bn)) if bn >= n => best,
                _ => Some((c, n)),
            })
            .expect("non-empty group")
            .0;
        let mut track_id = g[0].track_id;
        if !used_ids.insert(track_id) {
            track_id = next_id;
            next_id += 1;
            used_ids.insert(track_id);
        }
        tracklets.push(Tracklet {
            track_id,
            object_class,
            boxes,
        });
    }

    let merged = VideoAnnotation {
        video_id: first.video_id.clone(),
        num_frames: first.num_frames,
        width: first.width,
        height: first.height,
        fps: first.fps,
        anomaly_start,
        anomaly_end,
        category,
        tracklets,
    };
    merged.validate()?;
    Ok(merged)
}

// ---------------------------------------------------------------------------
// Labels and masks

/// Whether `frame_index` lies inside the anomaly window.
pub fn frame_label(ann: &VideoAnnotation, frame_index: usize) -> Result<bool, AnnotationError> {
    if frame_index >= ann.num_frames {
        return Err(AnnotationError::FrameOutOfRange {
            frame: frame_index,
            num_frames: ann.num_frames,
        });
    }
    Ok(ann.anomaly_start <= frame_index && frame_index < ann.anomaly_end)
}

/// Rasterizes the union of annotated boxes at `frame_index` onto a
/// `width x height` grid. Box coordinates are rescaled from the video's
/// resolution when the grid differs from it.
pub fn frame_region_mask(
    ann: &VideoAnnotation,
    frame_index: usize,
    width: usize,
    height: usize,
) -> Result<PixelMask, AnnotationError> {
    if frame_index >= ann.num_frames {
        return Err(AnnotationError::FrameOutOfRange {
            frame: frame_index,
            num_frames: ann.num_frames,
        });
    }
    let sx = width as f64 / ann.width as f64;
    let sy = height as f64 / ann.height as f64;
    let mut mask = PixelMask::empty(width, height);
    for b in ann.boxes_at(frame_index) {
        let scaled = BoundingBox::new(b.x1 * sx, b.y1 * sy, b.x2 * sx, b.y2 * sy);
        mask.fill_box(&scaled);
    }
    Ok(mask)
}

// ---------------------------------------------------------------------------
// Dataset statistics

/// Histograms describing an annotation corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub videos: usize,
    pub precursor_duration: BTreeMap<usize, usize>,
    pub anomaly_duration: BTreeMap<usize, usize>,
    pub post_anomaly_duration: BTreeMap<usize, usize>,
    pub categories: BTreeMap<String, usize>,
    pub objects_per_video: BTreeMap<usize, usize>,
    pub object_classes: BTreeMap<String, usize>,
    pub ego_involved: usize,
    pub non_ego: usize,
}

pub fn dataset_stats(annotations: &[VideoAnnotation]) -> Result<StatsReport, AnnotationError> {
    if annotations.is_empty() {
        return Err(AnnotationError::EmptyInput);
    }
    let mut r = StatsReport {
        videos: annotations.len(),
        precursor_duration: BTreeMap::new(),
        anomaly_duration: BTreeMap::new(),
        post_anomaly_duration: BTreeMap::new(),
        categories: BTreeMap::new(),
        objects_per_video: BTreeMap::new(),
        object_classes: BTreeMap::new(),
        ego_involved: 0,
        non_ego: 0,
    };
    for a in annotations {
        *r.precursor_duration.entry(a.anomaly_start).or_default() += 1;
        *r.anomaly_duration.entry(a.anomalous_frames()).or_default() += 1;
        *r.post_anomaly_duration.entry(a.num_frames - a.anomaly_end).or_default() += 1;
        *r.categories.entry(a.category.to_string()).or_default() += 1;
        *r.objects_per_video.entry(a.tracklets.len()).or_default() += 1;
        for t in &a.tracklets {
            *r.object_classes.entry(t.object_class.name().to_string()).or_default() += 1;
        }
        if a.category.ego_involved {
            r.ego_involved += 1;
        } else {
            r.non_ego += 1;
        }
    }
    Ok(r)
}
