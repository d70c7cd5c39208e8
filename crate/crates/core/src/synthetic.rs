//! Deterministic synthetic corpora and brute-force oracles.
//!
//! Each video draws from its own ChaCha8 stream seeded with
//! `splitmix64(seed + (index + 1) * 0x9E3779B97F4A7C15)`, so videos can be
//! generated in any order or in parallel with identical results.
//!
//! Per video, draws happen in this order: window length, window start, base
//! category, ego flag, object class, then for each anomalous frame the mask
//! area fraction and box position; then one level jitter per frame; then
//! per-pixel noise frame by frame (skipped when `noise_sigma == 0`). The
//! localization quality `q` never influences what is drawn, so corpora that
//! differ only in `q` share windows, masks and frame levels.
//!
//! Positive frames put a share `q` of the frame's mass uniformly inside the
//! box and the rest uniformly outside it; negative frames are uniform.
//! Values are rounded to `f32` so a corpus survives the ASMF round trip
//! unchanged.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotations::{
    serialize_annotation, AnomalyCategory, BoundingBox, ObjectClass, PixelMask, Tracklet, VideoAnnotation,
};
use crate::exec;
use crate::scoremaps::io::{write_asmf, write_frame_scores};
use crate::scoremaps::{FrameScoreSeries, ScoreMap, ScoreMapError};

#[derive(Debug, Error)]
pub enum SyntheticError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("need at least one positive and one negative ({positives} positive, {negatives} negative)")]
    DegenerateLabels { positives: usize, negatives: usize },
    #[error("oracle input: {0}")]
    BadInput(String),
    #[error(transparent)]
    ScoreMap(#[from] ScoreMapError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Smallest mean frame level; keeps every frame's mass positive.
pub const LEVEL_FLOOR: f64 = 0.01;

fn default_jitter() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub num_videos: usize,
    pub frames_per_video: usize,
    /// `[width, height]` in pixels.
    pub frame_size: (usize, usize),
    /// Inclusive range of anomaly window lengths in frames.
    pub anomaly_window_range: (usize, usize),
    /// Range of the box area as a fraction of the frame.
    pub mask_fraction_range: (f64, f64),
    /// Mean frame-level gap between anomalous and normal frames.
    pub separation: f64,
    /// Share of an anomalous frame's score mass placed inside the box.
    pub localization_quality: f64,
    /// Std-dev of per-pixel Gaussian noise (clipped at zero).
    pub noise_sigma: f64,
    /// Std-dev of the per-frame level around its class mean.
    #[serde(default = "default_jitter")]
    pub frame_jitter: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_videos: 8,
            frames_per_video: 40,
            frame_size: (32, 32),
            anomaly_window_range: (8, 20),
            mask_fraction_range: (0.15, 0.4),
            separation: 1.0,
            localization_quality: 1.0,
            noise_sigma: 0.0,
            frame_jitter: default_jitter(),
            seed: 2020,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), SyntheticError> {
        let bad = |m: &str| Err(SyntheticError::InvalidSpec(m.to_string()));
        let (w, h) = self.frame_size;
        let (lmin, lmax) = self.anomaly_window_range;
        let (fmin, fmax) = self.mask_fraction_range;
        if self.num_videos == 0 {
            return bad("num_videos must be positive");
        }
        if w == 0 || h == 0 {
            return bad("frame_size must be positive");
        }
        if lmin == 0 || lmin > lmax {
            return bad("anomaly_window_range must satisfy 1 <= min <= max");
        }
        if lmax >= self.frames_per_video {
            return bad("anomaly windows must leave at least one normal frame");
        }
        if !(fmin > 0.0 && fmin <= fmax && fmax <= 1.0) {
            return bad("mask_fraction_range must satisfy 0 < min <= max <= 1");
        }
        if !(0.0..=1.0).contains(&self.localization_quality) {
            return bad("localization_quality must be in [0, 1]");
        }
        for (name, v) in [
            ("separation", self.separation),
            ("noise_sigma", self.noise_sigma),
            ("frame_jitter", self.frame_jitter),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(&format!("{name} must be finite and non-negative"));
            }
        }
        Ok(())
    }

    pub fn video_id(&self, index: usize) -> String {
        format!("synth_{index:05}")
    }
}

/// The splitmix64 output function.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn video_seed(seed: u64, index: usize) -> u64 {
    splitmix64(seed.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticVideo {
    pub annotation: VideoAnnotation,
    pub maps: Vec<ScoreMap>,
    pub frame_scores: FrameScoreSeries,
}

/// Ground-truth tallies recorded while generating.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GeneratorTally {
    pub videos: usize,
    pub anomaly_duration: BTreeMap<usize, usize>,
    pub categories: BTreeMap<String, usize>,
    pub object_classes: BTreeMap<String, usize>,
    pub ego_involved: usize,
    pub non_ego: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub videos: Vec<SyntheticVideo>,
    pub tally: GeneratorTally,
}

impl SyntheticCorpus {
    pub fn annotations(&self) -> Vec<VideoAnnotation> {
        self.videos.iter().map(|v| v.annotation.clone()).collect()
    }
}

fn draw_annotation(spec: &SyntheticSpec, index: usize, rng: &mut ChaCha8Rng) -> VideoAnnotation {
    let (w, h) = spec.frame_size;
    let (lmin, lmax) = spec.anomaly_window_range;
    let (fmin, fmax) = spec.mask_fraction_range;
    let len = rng.random_range(lmin..=lmax);
    let start = rng.random_range(0..=spec.frames_per_video - len);
    let base_id = rng.random_range(1..=8u8);
    let ego_involved = rng.random_bool(0.5);
    let object_class = ObjectClass::ALL[rng.random_range(0..ObjectClass::ALL.len())];
    let mut boxes = BTreeMap::new();
    for f in start..start + len {
        let frac = if fmax > fmin {
            rng.random_range(fmin..=fmax)
        } else {
            fmin
        };
        let side = frac.sqrt();
        let bw = ((w as f64 * side).round() as usize).clamp(1, w);
        let bh = ((h as f64 * side).round() as usize).clamp(1, h);
        let x0 = rng.random_range(0..=w - bw);
        let y0 = rng.random_range(0..=h - bh);
        boxes.insert(
            f,
            BoundingBox::new(x0 as f64, y0 as f64, (x0 + bw) as f64, (y0 + bh) as f64),
        );
    }
    VideoAnnotation {
        video_id: spec.video_id(index),
        num_frames: spec.frames_per_video,
        width: w as u32,
        height: h as u32,
        fps: 10.0,
        anomaly_start: start,
        anomaly_end: start + len,
        category: AnomalyCategory { base_id, ego_involved },
        tracklets: vec![Tracklet {
            track_id: 1,
            object_class,
            boxes,
        }],
    }
}

/// Annotation of video `index` without generating its maps.
pub fn generate_annotation(spec: &SyntheticSpec, index: usize) -> Result<VideoAnnotation, SyntheticError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(video_seed(spec.seed, index));
    Ok(draw_annotation(spec, index, &mut rng))
}

pub fn generate_video(spec: &SyntheticSpec, index: usize) -> Result<SyntheticVideo, SyntheticError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(video_seed(spec.seed, index));
    let annotation = draw_annotation(spec, index, &mut rng);
    let (w, h) = spec.frame_size;
    let total = w * h;
    let q = spec.localization_quality;

    let levels: Vec<f64> = (0..spec.frames_per_video)
        .map(|f| {
            let label = annotation.anomaly_start <= f && f < annotation.anomaly_end;
            let jitter: f64 = StandardNormal.sample(&mut rng);
            let mean = 1.0 + if label { spec.separation } else { 0.0 };
            (mean + spec.frame_jitter * jitter).max(LEVEL_FLOOR)
        })
        .collect();

    let mut maps = Vec::with_capacity(spec.frames_per_video);
    for (f, level) in levels.iter().enumerate() {
        let mut values = vec![*level; total];
        if let Some(b) = annotation.tracklets[0].boxes.get(&f) {
            let mut mask = PixelMask::empty(w, h);
            mask.fill_box(b);
            let inside_n = mask.count();
            if inside_n < total {
                let mass = level * total as f64;
                let inside = q * mass / inside_n as f64;
                let outside = (1.0 - q) * mass / (total - inside_n) as f64;
                for (v, m) in values.iter_mut().zip(&mask.bits) {
                    *v = if *m { inside } else { outside };
                }
            }
        }
        if spec.noise_sigma > 0.0 {
            for v in values.iter_mut() {
                let n: f64 = StandardNormal.sample(&mut rng);
                *v = (*v + spec.noise_sigma * n).max(0.0);
            }
        }
        for v in values.iter_mut() {
            *v = *v as f32 as f64;
        }
        maps.push(ScoreMap::new(w, h, f, values)?);
    }
    let frame_scores = FrameScoreSeries::new(annotation.video_id.clone(), maps.iter().map(ScoreMap::mean).collect())?;
    Ok(SyntheticVideo {
        annotation,
        maps,
        frame_scores,
    })
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticCorpus, SyntheticError> {
    generate_with_threads(spec, 0)
}

pub fn generate_with_threads(spec: &SyntheticSpec, threads: usize) -> Result<SyntheticCorpus, SyntheticError> {
    spec.validate()?;
    let indices: Vec<usize> = (0..spec.num_videos).collect();
    let videos = exec::try_map(&indices, threads, |_, i| generate_video(spec, *i))?;
    let mut tally = GeneratorTally {
        videos: videos.len(),
        ..Default::default()
    };
    for v in &videos {
        let a = &v.annotation;
        *tally.anomaly_duration.entry(a.anomalous_frames()).or_default() += 1;
        *tally.categories.entry(a.category.to_string()).or_default() += 1;
        *tally
            .object_classes
            .entry(a.tracklets[0].object_class.name().to_string())
            .or_default() += 1;
        if a.category.ego_involved {
            tally.ego_involved += 1;
        } else {
            tally.non_ego += 1;
        }
    }
    Ok(SyntheticCorpus { videos, tally })
}

/// Writes `annotations/<id>.json`, `scores/<id>.asmf`, `scores/<id>.csv`,
/// plus `spec.json` and `tally.json`.
pub fn write_corpus(corpus: &SyntheticCorpus, spec: &SyntheticSpec, dir: &Path) -> Result<(), SyntheticError> {
    let ann_dir = dir.join("annotations");
    let score_dir = dir.join("scores");
    fs::create_dir_all(&ann_dir)?;
    fs::create_dir_all(&score_dir)?;
    for v in &corpus.videos {
        let id = &v.annotation.video_id;
        fs::write(ann_dir.join(format!("{id}.json")), serialize_annotation(&v.annotation))?;
        let mut asmf = Vec::new();
        write_asmf(&mut asmf, &v.maps)?;
        fs::write(score_dir.join(format!("{id}.asmf")), asmf)?;
        let mut csv = Vec::new();
        write_frame_scores(&mut csv, &v.frame_scores)?;
        fs::write(score_dir.join(format!("{id}.csv")), csv)?;
    }
    fs::write(dir.join("spec.json"), pretty_json(spec))?;
    fs::write(dir.join("tally.json"), pretty_json(&corpus.tally))?;
    Ok(())
}

fn pretty_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("plain data serializes");
    s.push('\n');
    s
}

// ---------------------------------------------------------------------------
// Oracles

/// AUC by enumerating every (positive, negative) pair; ties count 1/2.
pub fn brute_force_auc(scores: &[f64], labels: &[bool]) -> Result<f64, SyntheticError> {
    if scores.len() != labels.len() {
        return Err(SyntheticError::BadInput(format!(
            "{} scores, {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let positives = labels.iter().filter(|l| **l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(SyntheticError::DegenerateLabels { positives, negatives });
    }
    let mut wins = 0u64; // counted in half-units
    for (sp, _) in scores.iter().zip(labels).filter(|(_, l)| **l) {
        for (sn, _) in scores.iter().zip(labels).filter(|(_, l)| !**l) {
            if sp > sn {
                wins += 2;
            } else if sp == sn {
                wins += 1;
            }
        }
    }
    Ok(wins as f64 / 2.0 / (positives as f64 * negatives as f64))
}

/// TARR by full sort: rank pixels by (score desc, index asc), keep the first
/// the smallest `k >= 1` with `100 k >= n |M|`, and sum candidates in
/// row-major order.
pub fn brute_force_tarr(map: &ScoreMap, mask: &PixelMask, n_percent: f64) -> Result<f64, SyntheticError> {
    if map.width != mask.width || map.height != mask.height {
        return Err(SyntheticError::BadInput("map and mask shapes differ".into()));
    }
    if !mask.bits.iter().any(|b| *b) {
        return Err(SyntheticError::BadInput("empty mask".into()));
    }
    if !(n_percent > 0.0 && n_percent <= 100.0) {
        return Err(SyntheticError::BadInput(format!("N = {n_percent}")));
    }
    let total = map.values.len();
    let mut order: Vec<usize> = (0..total).collect();
    order.sort_by(|&a, &b| {
        map.values[b]
            .partial_cmp(&map.values[a])
            .expect("finite scores")
            .then(a.cmp(&b))
    });
    let k = (1..=total)
        .find(|k| *k as f64 * 100.0 >= n_percent * total as f64)
        .unwrap_or(total);
    let mut chosen = vec![false; total];
    for &i in &order[..k] {
        chosen[i] = true;
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for ((v, c), m) in map.values.iter().zip(&chosen).zip(&mask.bits) {
        if *c {
            den += v;
            if *m {
                num += v;
            }
        }
    }
    Ok(if den == 0.0 { 0.0 } else { num / den })
}
