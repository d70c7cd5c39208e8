//! Command-line front end.
//!
//! Score directories hold one set of files per video, named by video id:
//! `<id>.csv` (frame scores), `<id>.asmf` (score maps) and `<id>.jsonl`
//! (object scores). Which files are required depends on `--kind`; a `.csv`
//! that is present always supplies the frame scores, otherwise they are the
//! per-frame map means.
//!
//! Exit codes: 0 success, 1 usage, 2 data or schema error, 3 coverage gap.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use walkdir::WalkDir;

use crate::annotations::{dataset_stats, merge_annotations, parse_annotation, AnnotationError, VideoAnnotation};
use crate::exec;
use crate::metrics::{
    evaluate_full, sweep_n_with, DetectorOutput, EvalConfig, InputsEcho, MetricsError, RocCurve, TopN,
};
use crate::scoremaps::io::{read_asmf, read_frame_scores, read_object_scores, write_asmf, write_frame_scores};
use crate::scoremaps::{
    fuse_frame_scores, fuse_score_maps, normalize_maps, normalize_series, pseudo_score_map, FrameScoreSeries,
    NormalizeMode, ScoreMap, ScoreMapError,
};
use crate::synthetic::{generate_with_threads, write_corpus, SyntheticError, SyntheticSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_COVERAGE: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "stroc-bench",
    version,
    about = "Frame-level AUC and spatio-temporal STAUC for video anomaly detectors"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate one detector and write a JSON report.
    Evaluate(EvaluateArgs),
    /// STAUC for several top-N values; writes a CSV table and STROC curves.
    SweepN(SweepArgs),
    /// Average several score streams per video.
    Fuse(FuseArgs),
    /// Generate a synthetic corpus from a JSON spec.
    Synth(SynthArgs),
    /// Dataset statistics of an annotation directory.
    Stats(StatsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Frame,
    Map,
    Object,
    Mixed,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kind::Frame => "frame",
            Kind::Map => "map",
            Kind::Object => "object",
            Kind::Mixed => "mixed",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Normalize {
    Minmax,
    Psnr,
    None,
}

impl From<Normalize> for NormalizeMode {
    fn from(n: Normalize) -> Self {
        match n {
            Normalize::Minmax => NormalizeMode::PerVideoMinmax,
            Normalize::Psnr => NormalizeMode::NegatePsnrMinmax,
            Normalize::None => NormalizeMode::None,
        }
    }
}

#[derive(Debug, Args)]
pub struct InputArgs {
    #[arg(long, value_name = "DIR")]
    pub annotations: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub scores: PathBuf,
    #[arg(long, value_enum, default_value_t = Kind::Map)]
    pub kind: Kind,
    /// Candidate percentage for TARR.
    #[arg(long, value_name = "adaptive|FLOAT")]
    pub top_n: Option<TopN>,
    #[arg(long, value_enum, default_value_t = Normalize::Minmax)]
    pub normalize: Normalize,
    #[arg(long)]
    pub per_class: bool,
    #[arg(long, value_name = "PATH")]
    pub output: PathBuf,
    /// Worker threads, 0 for automatic.
    #[arg(long, env = "STROC_BENCH_THREADS", default_value_t = 0)]
    pub threads: usize,
    /// Recorded in the report; evaluation itself draws no randomness.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for ROC/STROC curve CSVs.
    #[arg(long, value_name = "DIR")]
    pub curves: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Extra top-N values reported next to the main STAUC.
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    pub n_values: Vec<TopN>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Defaults to 1,5,10,20,50,100,adaptive.
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    pub n_values: Vec<TopN>,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// Score directory; repeat for each frame-score stream.
    #[arg(long, value_name = "DIR", required = true)]
    pub scores: Vec<PathBuf>,
    /// `frame` averages `.csv` streams; `mixed` fuses `.asmf` maps with
    /// pseudo maps from `.jsonl` objects in a single directory.
    #[arg(long, value_enum, default_value_t = Kind::Frame)]
    pub kind: Kind,
    /// Applied to each frame-score stream before averaging.
    #[arg(long, value_enum, default_value_t = Normalize::None)]
    pub normalize: Normalize,
    #[arg(long, value_name = "DIR")]
    pub output: PathBuf,
    #[arg(long, env = "STROC_BENCH_THREADS", default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_name = "PATH")]
    pub spec: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub output: PathBuf,
    /// Overrides the spec's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, env = "STROC_BENCH_THREADS", default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long, value_name = "DIR")]
    pub annotations: PathBuf,
    /// JSON histograms; CSV plot data goes next to it with a `.csv` extension.
    #[arg(long, value_name = "PATH")]
    pub output: PathBuf,
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn data(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DATA,
            message: message.into(),
        }
    }

    fn coverage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_COVERAGE,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::CoverageGap { .. } => CliError::coverage(e.to_string()),
            _ => CliError::data(e.to_string()),
        }
    }
}

impl From<SyntheticError> for CliError {
    fn from(e: SyntheticError) -> Self {
        CliError::data(e.to_string())
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(out, "{text}");
                EXIT_OK
            };
        }
    };
    let result = match cli.command {
        Command::Evaluate(a) => cmd_evaluate(&a, out, err),
        Command::SweepN(a) => cmd_sweep_n(&a, out),
        Command::Fuse(a) => cmd_fuse(&a, out),
        Command::Synth(a) => cmd_synth(&a, out),
        Command::Stats(a) => cmd_stats(&a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.code
        }
    }
}

// ---------------------------------------------------------------------------
// Loading

fn require_dir(path: &Path, flag: &str) -> Result<(), CliError> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::usage(format!(
            "{flag} {} is not a readable directory",
            path.display()
        )))
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

/// Parses every `*.json` under `dir`. Several drafts of one video are merged.
pub fn load_annotations(dir: &Path) -> Result<Vec<VideoAnnotation>, CliError> {
    require_dir(dir, "--annotations")?;
    let mut drafts: BTreeMap<String, Vec<VideoAnnotation>> = BTreeMap::new();
    for entry in WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| CliError::data(e.to_string()))?;
        let path = entry.path();
        if !entry.file_type().is_file() || path.extension().is_none_or(|x| x != "json") {
            continue;
        }
        let ann =
            parse_annotation(&read_file(path)?).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        drafts.entry(ann.video_id.clone()).or_default().push(ann);
    }
    if drafts.is_empty() {
        return Err(CliError::data(format!(
            "{}: {}",
            dir.display(),
            AnnotationError::EmptyInput
        )));
    }
    drafts
        .into_iter()
        .map(|(id, group)| merge_annotations(&group).map_err(|e| CliError::data(format!("video {id}: {e}"))))
        .collect()
}

fn with_path(path: &Path, e: ScoreMapError) -> MetricsError {
    MetricsError::ScoreMap(ScoreMapError::Format(format!("{}: {e}", path.display())))
}

fn open_required(path: &Path, video_id: &str) -> Result<File, MetricsError> {
    File::open(path).map_err(|e| MetricsError::CoverageGap {
        video_id: video_id.to_string(),
        detail: format!("cannot open {}: {e}", path.display()),
    })
}

/// Reads one video's detector output from `scores`.
pub fn load_detector_output(scores: &Path, kind: Kind, ann: &VideoAnnotation) -> Result<DetectorOutput, MetricsError> {
    let id = ann.video_id.as_str();
    let csv = scores.join(format!("{id}.csv"));
    let asmf = scores.join(format!("{id}.asmf"));
    let jsonl = scores.join(format!("{id}.jsonl"));
    let mut out = DetectorOutput::default();
    if kind == Kind::Frame || csv.is_file() {
        let f = open_required(&csv, id)?;
        out.frame_scores = Some(read_frame_scores(BufReader::new(f), id).map_err(|e| with_path(&csv, e))?);
    }
    if matches!(kind, Kind::Map | Kind::Mixed) {
        let f = open_required(&asmf, id)?;
        out.maps = Some(read_asmf(BufReader::new(f)).map_err(|e| with_path(&asmf, e))?);
    }
    if matches!(kind, Kind::Object | Kind::Mixed) {
        let f = open_required(&jsonl, id)?;
        out.objects = Some(read_object_scores(BufReader::new(f), ann.num_frames).map_err(|e| with_path(&jsonl, e))?);
    }
    Ok(out)
}

fn write_output(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::data(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn pretty_json<T: serde::Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("plain data serializes");
    s.push(b'\n');
    s
}

fn curve_csv(curve: &RocCurve) -> Vec<u8> {
    let mut buf = Vec::new();
    curve.write_csv(&mut buf).expect("writing to memory");
    buf
}

fn config_from(input: &InputArgs) -> EvalConfig {
    EvalConfig {
        top_n: input.top_n.unwrap_or(TopN::Adaptive),
        normalize: input.normalize.into(),
        per_class: input.per_class,
        threads: input.threads,
        ..EvalConfig::default()
    }
}

fn fmt_metric(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.6}"))
}

// ---------------------------------------------------------------------------
// Commands

pub fn cmd_evaluate(args: &EvaluateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let input = &args.input;
    require_dir(&input.scores, "--scores")?;
    let anns = load_annotations(&input.annotations)?;
    if input.kind == Kind::Frame && (input.top_n.is_some() || !args.n_values.is_empty()) {
        let _ = writeln!(
            err,
            "warning: top-N settings ignored; frame-score input has no spatial scores, so no STAUC is reported"
        );
    }
    let mut config = config_from(input);
    if !args.n_values.is_empty() {
        config.n_sweep = Some(args.n_values.clone());
    }
    let scores = input.scores.clone();
    let kind = input.kind;
    let mut eval = evaluate_full(&anns, |a| load_detector_output(&scores, kind, a), &config)?;
    eval.report.inputs = Some(InputsEcho {
        annotations: input.annotations.display().to_string(),
        scores: input.scores.display().to_string(),
        kind: kind.to_string(),
        seed: input.seed,
    });
    write_output(&input.output, &pretty_json(&eval.report))?;
    if let Some(dir) = &input.curves {
        write_output(&dir.join("roc.csv"), &curve_csv(&eval.roc))?;
        if let Some(st) = &eval.stroc {
            write_output(&dir.join("stroc.csv"), &curve_csv(st))?;
        }
    }
    let r = &eval.report;
    let _ = writeln!(out, "videos evaluated: {}", r.counts.videos_evaluated);
    let _ = writeln!(out, "AUC   {}", fmt_metric(Some(r.overall.auc)));
    let _ = writeln!(out, "STAUC {}", fmt_metric(r.overall.stauc));
    Ok(())
}

pub fn cmd_sweep_n(args: &SweepArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let input = &args.input;
    if input.kind == Kind::Frame {
        return Err(CliError::usage(
            "sweep-n needs spatial scores (--kind map, object or mixed)",
        ));
    }
    require_dir(&input.scores, "--scores")?;
    let anns = load_annotations(&input.annotations)?;
    let n_values = if args.n_values.is_empty() {
        TopN::default_sweep()
    } else {
        args.n_values.clone()
    };
    let config = config_from(input);
    let scores = input.scores.clone();
    let kind = input.kind;
    let entries = sweep_n_with(&anns, |a| load_detector_output(&scores, kind, a), &n_values, &config)?;

    let mut table = csv::Writer::from_writer(Vec::new());
    let io_err = |e: csv::Error| CliError::data(e.to_string());
    table.write_record(["n", "auc", "stauc"]).map_err(io_err)?;
    for e in &entries {
        table
            .write_record([e.n.to_string(), e.auc.to_string(), e.stauc.to_string()])
            .map_err(io_err)?;
    }
    let bytes = table.into_inner().map_err(|e| CliError::data(e.to_string()))?;
    write_output(&input.output, &bytes)?;

    let curve_dir = input
        .curves
        .clone()
        .unwrap_or_else(|| input.output.parent().map(Path::to_path_buf).unwrap_or_default());
    for e in &entries {
        write_output(&curve_dir.join(format!("stroc_n_{}.csv", e.n)), &curve_csv(&e.stroc))?;
    }
    for e in &entries {
        let _ = writeln!(out, "N={:<9} AUC {:.6}  STAUC {:.6}", e.n.to_string(), e.auc, e.stauc);
    }
    Ok(())
}

/// Video ids with a file of extension `ext` in `dir`, sorted.
fn ids_with_extension(dir: &Path, ext: &str) -> Result<Vec<String>, CliError> {
    let mut ids = Vec::new();
    let entries = fs::read_dir(dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?;
    for entry in entries {
        let path = entry.map_err(|e| CliError::data(e.to_string()))?.path();
        if path.is_file() && path.extension().is_some_and(|x| x == ext) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();
    Ok(ids)
}

fn fuse_frame_video(dirs: &[PathBuf], id: &str, mode: NormalizeMode) -> Result<FrameScoreSeries, CliError> {
    let mut streams = Vec::with_capacity(dirs.len());
    for d in dirs {
        let path = d.join(format!("{id}.csv"));
        let f = File::open(&path)
            .map_err(|e| CliError::coverage(format!("video {id}: cannot open {}: {e}", path.display())))?;
        let s =
            read_frame_scores(BufReader::new(f), id).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        streams.push(normalize_series(&s, mode));
    }
    fuse_frame_scores(&streams).map_err(|e| CliError::data(format!("video {id}: {e}")))
}

fn fuse_mixed_video(dir: &Path, id: &str) -> Result<(Vec<ScoreMap>, FrameScoreSeries), CliError> {
    let asmf = dir.join(format!("{id}.asmf"));
    let jsonl = dir.join(format!("{id}.jsonl"));
    let maps = read_asmf(BufReader::new(File::open(&asmf).map_err(|e| {
        CliError::coverage(format!("video {id}: cannot open {}: {e}", asmf.display()))
    })?))
    .map_err(|e| CliError::data(format!("{}: {e}", asmf.display())))?;
    let f = File::open(&jsonl)
        .map_err(|e| CliError::coverage(format!("video {id}: cannot open {}: {e}", jsonl.display())))?;
    let objects = read_object_scores(BufReader::new(f), maps.len())
        .map_err(|e| CliError::data(format!("{}: {e}", jsonl.display())))?;
    let (w, h) = maps.first().map_or((0, 0), |m| (m.width, m.height));
    let pseudo = objects
        .iter()
        .enumerate()
        .map(|(i, o)| pseudo_score_map(o, w, h).map(|m| m.with_frame_index(i)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::data(format!("{}: {e}", jsonl.display())))?;
    let fused = normalize_maps(&maps)
        .iter()
        .zip(&normalize_maps(&pseudo))
        .map(|(a, b)| fuse_score_maps(a, b))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::data(format!("video {id}: {e}")))?;
    let series = FrameScoreSeries::new(id, fused.iter().map(ScoreMap::mean).collect())
        .map_err(|e| CliError::data(format!("video {id}: {e}")))?;
    Ok((fused, series))
}

fn write_series(path: &Path, s: &FrameScoreSeries) -> Result<(), CliError> {
    let mut buf = Vec::new();
    write_frame_scores(&mut buf, s).map_err(|e| CliError::data(e.to_string()))?;
    write_output(path, &buf)
}

pub fn cmd_fuse(args: &FuseArgs, out: &mut dyn Write) -> Result<(), CliError> {
    for d in &args.scores {
        require_dir(d, "--scores")?;
    }
    let ids = match args.kind {
        Kind::Frame => {
            if args.scores.len() < 2 {
                return Err(CliError::usage(
                    "fuse --kind frame needs at least two --scores directories",
                ));
            }
            let ids = ids_with_extension(&args.scores[0], "csv")?;
            for d in &args.scores[1..] {
                if let Some(extra) = ids_with_extension(d, "csv")?.into_iter().find(|i| !ids.contains(i)) {
                    return Err(CliError::coverage(format!(
                        "video {extra}: present in {} but not in {}",
                        d.display(),
                        args.scores[0].display()
                    )));
                }
            }
            let mode = args.normalize.into();
            let fused = exec::try_map(&ids, args.threads, |_, id| fuse_frame_video(&args.scores, id, mode))?;
            for s in &fused {
                write_series(&args.output.join(format!("{}.csv", s.video_id)), s)?;
            }
            ids
        }
        Kind::Mixed => {
            if args.scores.len() != 1 {
                return Err(CliError::usage(
                    "fuse --kind mixed takes exactly one --scores directory",
                ));
            }
            let dir = &args.scores[0];
            let ids = ids_with_extension(dir, "asmf")?;
            let fused = exec::try_map(&ids, args.threads, |_, id| fuse_mixed_video(dir, id))?;
            for (id, (maps, series)) in ids.iter().zip(&fused) {
                let mut buf = Vec::new();
                write_asmf(&mut buf, maps).map_err(|e| CliError::data(e.to_string()))?;
                write_output(&args.output.join(format!("{id}.asmf")), &buf)?;
                write_series(&args.output.join(format!("{id}.csv")), series)?;
            }
            ids
        }
        Kind::Map | Kind::Object => {
            return Err(CliError::usage("fuse supports --kind frame or --kind mixed"));
        }
    };
    if ids.is_empty() {
        return Err(CliError::data("no score files to fuse"));
    }
    let _ = writeln!(out, "fused {} videos into {}", ids.len(), args.output.display());
    Ok(())
}

pub fn cmd_synth(args: &SynthArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let bytes = read_file(&args.spec)?;
    let mut spec: SyntheticSpec =
        serde_json::from_slice(&bytes).map_err(|e| CliError::data(format!("{}: {e}", args.spec.display())))?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let corpus = generate_with_threads(&spec, args.threads)?;
    write_corpus(&corpus, &spec, &args.output)?;
    let _ = writeln!(out, "wrote {} videos to {}", corpus.videos.len(), args.output.display());
    Ok(())
}

pub fn cmd_stats(args: &StatsArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let anns = load_annotations(&args.annotations)?;
    let stats = dataset_stats(&anns).map_err(|e| CliError::data(e.to_string()))?;
    write_output(&args.output, &pretty_json(&stats))?;

    let mut table = csv::Writer::from_writer(Vec::new());
    let mut rows: Vec<[String; 3]> = Vec::new();
    let mut hist = |name: &str, entries: Vec<(String, usize)>| {
        rows.extend(entries.into_iter().map(|(k, c)| [name.to_string(), k, c.to_string()]));
    };
    let keyed = |m: &BTreeMap<usize, usize>| m.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    hist("precursor_duration", keyed(&stats.precursor_duration));
    hist("anomaly_duration", keyed(&stats.anomaly_duration));
    hist("post_anomaly_duration", keyed(&stats.post_anomaly_duration));
    hist("category", stats.categories.clone().into_iter().collect());
    hist("objects_per_video", keyed(&stats.objects_per_video));
    hist("object_class", stats.object_classes.clone().into_iter().collect());
    hist(
        "ego",
        vec![
            ("ego_involved".to_string(), stats.ego_involved),
            ("non_ego".to_string(), stats.non_ego),
        ],
    );
    let csv_err = |e: csv::Error| CliError::data(e.to_string());
    table.write_record(["histogram", "key", "count"]).map_err(csv_err)?;
    for r in &rows {
        table.write_record(r).map_err(csv_err)?;
    }
    let bytes = table.into_inner().map_err(|e| CliError::data(e.to_string()))?;
    write_output(&args.output.with_extension("csv"), &bytes)?;
    let _ = writeln!(out, "{} videos, {} histogram rows", stats.videos, rows.len());
    Ok(())
}
