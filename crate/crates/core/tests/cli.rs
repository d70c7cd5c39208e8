use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use stroc_bench::annotations::BoundingBox;
use stroc_bench::cli::{run, EXIT_COVERAGE, EXIT_DATA, EXIT_OK, EXIT_USAGE};
use stroc_bench::metrics::EvaluationReport;
use stroc_bench::scoremaps::io::{read_asmf, read_frame_scores, write_asmf, write_frame_scores, write_object_scores};
use stroc_bench::scoremaps::{normalize_maps, pseudo_score_map, FrameScoreSeries, ObjectScore, ScoreMap};
use tempfile::TempDir;

fn root() -> &'static Path {
    Path::new(env!("CARGO_MANIFEST_DIR"))
}

fn example(sub: &str) -> String {
    root().join("tests/fixtures/example").join(sub).display().to_string()
}

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn cli(args: &[&str]) -> Run {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let mut full = vec!["stroc-bench"];
    full.extend_from_slice(args);
    let code = run(full, &mut out, &mut err);
    Run {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for e in fs::read_dir(from).unwrap() {
        let e = e.unwrap();
        fs::copy(e.path(), to.join(e.file_name())).unwrap();
    }
}

fn report(path: &Path) -> EvaluationReport {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

#[test]
fn evaluate_reports_metrics_and_echoes_config() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("r.json");
    let curves = dir.path().join("curves");
    let r = cli(&[
        "evaluate",
        "--annotations",
        &example("annotations"),
        "--scores",
        &example("scores"),
        "--output",
        p(&out),
        "--curves",
        p(&curves),
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    assert!(r.stdout.contains("AUC   0.851562"), "{}", r.stdout);
    let rep = report(&out);
    assert_eq!(rep.overall.stauc, Some(0.451171875));
    let inputs = rep.inputs.unwrap();
    assert_eq!(inputs.kind, "map");
    assert_eq!(inputs.seed, None);
    assert!(rep.per_class.is_none());
    let roc = fs::read_to_string(curves.join("roc.csv")).unwrap();
    assert!(roc.starts_with("threshold,fpr,tpr\ninf,0,0\n"), "{roc}");
    assert!(fs::read_to_string(curves.join("stroc.csv"))
        .unwrap()
        .ends_with("0,1,0.5234375\n"));
}

#[test]
fn golden_is_reproduced_by_the_python_oracle() {
    let python = Command::new("python3").arg("--version").output();
    if python.is_err() {
        eprintln!("python3 not available; skipping oracle re-run");
        return;
    }
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("golden.json");
    let status = Command::new("python3")
        .arg(root().join("tests/oracle/golden_oracle.py"))
        .arg(example(""))
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(
        fs::read(&out).unwrap(),
        fs::read(root().join("tests/fixtures/example/golden_report.json")).unwrap()
    );
}

#[test]
fn missing_score_file_is_a_coverage_gap() {
    let dir = TempDir::new().unwrap();
    let scores = dir.path().join("scores");
    copy_dir(Path::new(&example("scores")), &scores);
    fs::remove_file(scores.join("v02.asmf")).unwrap();
    let r = cli(&[
        "evaluate",
        "--annotations",
        &example("annotations"),
        "--scores",
        p(&scores),
        "--output",
        p(&dir.path().join("r.json")),
    ]);
    assert_eq!(r.code, EXIT_COVERAGE);
    assert!(r.stderr.contains("v02"), "{}", r.stderr);
}

#[test]
fn short_frame_file_names_video() {
    let dir = TempDir::new().unwrap();
    let scores = dir.path().join("scores");
    copy_dir(Path::new(&example("scores")), &scores);
    fs::write(scores.join("v01.csv"), "frame_index,score\n0,1\n1,2\n").unwrap();
    let r = cli(&[
        "evaluate",
        "--annotations",
        &example("annotations"),
        "--scores",
        p(&scores),
        "--output",
        p(&dir.path().join("r.json")),
    ]);
    assert_eq!(r.code, EXIT_COVERAGE);
    assert!(
        r.stderr.contains("v01") && r.stderr.contains("2 frame scores"),
        "{}",
        r.stderr
    );
}

#[test]
fn frame_only_input_with_top_n_warns_and_omits_stauc() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("r.json");
    // v02 has no csv; give it one so frame-only input is complete
    let scores = dir.path().join("scores");
    copy_dir(Path::new(&example("scores")), &scores);
    let maps = read_asmf(fs::File::open(scores.join("v02.asmf")).unwrap()).unwrap();
    let series = FrameScoreSeries::new("v02", maps.iter().map(ScoreMap::mean).collect()).unwrap();
    write_frame_scores(fs::File::create(scores.join("v02.csv")).unwrap(), &series).unwrap();
    let r = cli(&[
        "evaluate",
        "--annotations",
        &example("annotations"),
        "--scores",
        p(&scores),
        "--kind",
        "frame",
        "--top-n",
        "10",
        "--output",
        p(&out),
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    assert!(r.stderr.contains("warning"), "{}", r.stderr);
    let rep = report(&out);
    assert_eq!(rep.overall.stauc, None);
    assert_eq!(rep.overall.auc, 0.8515625);
    assert!(fs::read_to_string(&out).unwrap().contains("\"stauc\": null"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(cli(&["evaluate"]).code, EXIT_USAGE);
    assert_eq!(cli(&["frobnicate"]).code, EXIT_USAGE);
    let r = cli(&[
        "evaluate",
        "--annotations",
        &example("annotations"),
        "--scores",
        &example("scores"),
        "--top-n",
        "150",
        "--output",
        "/tmp/never.json",
    ]);
    assert_eq!(r.code, EXIT_USAGE);
    assert!(r.stderr.contains("150"), "{}", r.stderr);
    let r = cli(&[
        "evaluate",
        "--annotations",
        "/nonexistent/dir",
        "--scores",
        &example("scores"),
        "--output",
        "/tmp/never.json",
    ]);
    assert_eq!(r.code, EXIT_USAGE);
    assert_eq!(cli(&["--help"]).code, EXIT_OK);
}

#[test]
fn schema_error_names_the_file() {
    let dir = TempDir::new().unwrap();
    let anns = dir.path().join("ann");
    copy_dir(Path::new(&example("annotations")), &anns);
    let text = fs::read_to_string(anns.join("v02.json")).unwrap();
    fs::write(
        anns.join("v02.json"),
        text.replace("\"anomaly_end\": 10", "\"anomaly_end\": 40"),
    )
    .unwrap();
    let r = cli(&[
        "evaluate",
        "--annotations",
        p(&anns),
        "--scores",
        &example("scores"),
        "--output",
        p(&dir.path().join("r.json")),
    ]);
    assert_eq!(r.code, EXIT_DATA);
    assert!(
        r.stderr.contains("v02.json") && r.stderr.contains("anomaly_end"),
        "{}",
        r.stderr
    );
}

#[test]
fn annotator_drafts_are_merged() {
    let dir = TempDir::new().unwrap();
    let anns = dir.path().join("ann");
    copy_dir(Path::new(&example("annotations")), &anns);
    let sub = anns.join("second_annotator");
    fs::create_dir(&sub).unwrap();
    // identical second draft: merging must not change the result
    fs::copy(anns.join("v01.json"), sub.join("v01.json")).unwrap();
    let out = dir.path().join("r.json");
    let r = cli(&[
        "evaluate",
        "--annotations",
        p(&anns),
        "--scores",
        &example("scores"),
        "--output",
        p(&out),
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    assert_eq!(report(&out).counts.videos_total, 2);
    assert_eq!(report(&out).overall.stauc, Some(0.451171875));
}

fn synth_corpus(dir: &Path, q: f64) -> PathBuf {
    let spec = dir.join(format!("spec_{q}.json"));
    fs::write(
        &spec,
        format!(
            r#"{{"num_videos": 4, "frames_per_video": 20, "frame_size": [16, 16],
               "anomaly_window_range": [4, 10], "mask_fraction_range": [0.1, 0.3],
               "separation": 1.0, "localization_quality": {q}, "noise_sigma": 0.0, "seed": 11}}"#
        ),
    )
    .unwrap();
    let out = dir.join(format!("corpus_{q}"));
    let r = cli(&["synth", "--spec", p(&spec), "--output", p(&out)]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    out
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = walkdir(dir)
        .into_iter()
        .map(|f| {
            (
                f.strip_prefix(dir).unwrap().display().to_string(),
                fs::read(&f).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn walkdir(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let path = e.unwrap().path();
        if path.is_dir() {
            out.extend(walkdir(&path));
        } else {
            out.push(path);
        }
    }
    out
}

#[test]
fn synth_is_byte_identical_across_runs() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let ta = tree(&synth_corpus(a.path(), 0.5));
    let tb = tree(&synth_corpus(b.path(), 0.5));
    assert_eq!(ta.len(), 4 * 3 + 2);
    assert_eq!(ta, tb);
}

#[test]
fn synth_rejects_invalid_spec() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("bad.json");
    fs::write(&spec, r#"{"num_videos": 0}"#).unwrap();
    let r = cli(&["synth", "--spec", p(&spec), "--output", p(dir.path())]);
    assert_eq!(r.code, EXIT_DATA);
}

fn sweep_rows(path: &Path) -> Vec<(String, f64, f64)> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect()
}

#[test]
fn sweep_n_defaults_to_seven_rows_with_constant_auc() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("sweep.csv");
    let r = cli(&[
        "sweep-n",
        "--annotations",
        &example("annotations"),
        "--scores",
        &example("scores"),
        "--output",
        p(&out),
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let rows = sweep_rows(&out);
    let ns: Vec<&str> = rows.iter().map(|r| r.0.as_str()).collect();
    assert_eq!(ns, ["1", "5", "10", "20", "50", "100", "adaptive"]);
    assert!(rows.iter().all(|r| r.1 == rows[0].1));
    assert_eq!(rows[6].2, 0.451171875);
    for n in &ns {
        assert!(dir.path().join(format!("stroc_n_{n}.csv")).is_file());
    }
}

#[test]
fn sweep_single_n_matches_evaluate() {
    let dir = TempDir::new().unwrap();
    for n in ["10", "37.5", "adaptive"] {
        let sweep = dir.path().join(format!("s{n}.csv"));
        let eval = dir.path().join(format!("e{n}.json"));
        let common = [
            "--annotations",
            &example("annotations"),
            "--scores",
            &example("scores"),
            "--top-n",
            n,
        ];
        let mut a = vec!["sweep-n", "--n-values", n, "--output", p(&sweep)];
        a.extend(common);
        assert_eq!(cli(&a).code, EXIT_OK);
        let mut b = vec!["evaluate", "--output", p(&eval)];
        b.extend(common);
        assert_eq!(cli(&b).code, EXIT_OK);
        assert_eq!(Some(sweep_rows(&sweep)[0].2), report(&eval).overall.stauc, "N={n}");
    }
}

#[test]
fn sweep_on_perfect_corpus_is_flat() {
    let dir = TempDir::new().unwrap();
    let corpus = synth_corpus(dir.path(), 1.0);
    let out = dir.path().join("sweep.csv");
    let r = cli(&[
        "sweep-n",
        "--annotations",
        p(&corpus.join("annotations")),
        "--scores",
        p(&corpus.join("scores")),
        "--n-values",
        "1,5,10,adaptive",
        "--output",
        p(&out),
        "--curves",
        p(&dir.path().join("curves")),
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let rows = sweep_rows(&out);
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.2 == rows[0].2 && r.2 == r.1), "{rows:?}");
}

#[test]
fn sweep_rejects_frame_kind() {
    let r = cli(&[
        "sweep-n",
        "--annotations",
        &example("annotations"),
        "--scores",
        &example("scores"),
        "--kind",
        "frame",
        "--output",
        "/tmp/never.csv",
    ]);
    assert_eq!(r.code, EXIT_USAGE);
}

fn write_stream(dir: &Path, id: &str, scores: &[f64]) {
    fs::create_dir_all(dir).unwrap();
    let s = FrameScoreSeries::new(id, scores.to_vec()).unwrap();
    write_frame_scores(fs::File::create(dir.join(format!("{id}.csv"))).unwrap(), &s).unwrap();
}

fn read_stream(dir: &Path, id: &str) -> Vec<f64> {
    read_frame_scores(fs::File::open(dir.join(format!("{id}.csv"))).unwrap(), id)
        .unwrap()
        .scores
}

#[test]
fn fuse_identical_streams_is_identity() {
    let dir = TempDir::new().unwrap();
    let (a, b, out) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("out"));
    let s = [0.1, 0.7, 0.3, 0.9];
    write_stream(&a, "x", &s);
    write_stream(&b, "x", &s);
    let r = cli(&["fuse", "--scores", p(&a), "--scores", p(&b), "--output", p(&out)]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    assert_eq!(read_stream(&out, "x"), s);
}

#[test]
fn fuse_three_streams_matches_mean() {
    let dir = TempDir::new().unwrap();
    let streams = [[1.0, 2.0, 3.0], [4.0, 0.5, 3.0], [0.25, 2.0, 9.0]];
    let dirs: Vec<PathBuf> = (0..3).map(|i| dir.path().join(format!("s{i}"))).collect();
    for (d, s) in dirs.iter().zip(&streams) {
        write_stream(d, "v", s);
    }
    let out = dir.path().join("out");
    let mut args = vec!["fuse"];
    for d in &dirs {
        args.extend(["--scores", p(d)]);
    }
    args.extend(["--output", p(&out)]);
    assert_eq!(cli(&args).code, EXIT_OK);
    let got = read_stream(&out, "v");
    for t in 0..3 {
        let want = (streams[0][t] + streams[1][t] + streams[2][t]) / 3.0;
        assert!((got[t] - want).abs() < 1e-12);
    }
}

#[test]
fn fuse_length_mismatch_exits_two_and_gap_exits_three() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    write_stream(&a, "x", &[1.0, 2.0]);
    write_stream(&b, "x", &[1.0, 2.0, 3.0]);
    let out = dir.path().join("out");
    assert_eq!(
        cli(&["fuse", "--scores", p(&a), "--scores", p(&b), "--output", p(&out)]).code,
        EXIT_DATA
    );
    write_stream(&b, "x", &[1.0, 2.0]);
    write_stream(&b, "y", &[1.0, 2.0]);
    let r = cli(&["fuse", "--scores", p(&a), "--scores", p(&b), "--output", p(&out)]);
    assert_eq!(r.code, EXIT_COVERAGE);
    assert!(r.stderr.contains('y'));
}

#[test]
fn fuse_maps_with_objects_matches_elementwise_mean() {
    let dir = TempDir::new().unwrap();
    let scores = dir.path().join("scores");
    fs::create_dir_all(&scores).unwrap();
    let maps: Vec<ScoreMap> = (0..3)
        .map(|f| ScoreMap::new(6, 4, f, (0..24).map(|i| ((i * 7 + f * 3) % 11) as f64).collect()).unwrap())
        .collect();
    let objects = vec![
        vec![ObjectScore {
            track_id: 1,
            score: 2.0,
            bbox: BoundingBox::new(0.0, 0.0, 3.0, 2.0),
        }],
        vec![],
        vec![
            ObjectScore {
                track_id: 1,
                score: 1.0,
                bbox: BoundingBox::new(1.0, 1.0, 5.0, 4.0),
            },
            ObjectScore {
                track_id: 2,
                score: 0.5,
                bbox: BoundingBox::new(2.0, 0.0, 6.0, 3.0),
            },
        ],
    ];
    write_asmf(fs::File::create(scores.join("m.asmf")).unwrap(), &maps).unwrap();
    write_object_scores(fs::File::create(scores.join("m.jsonl")).unwrap(), &objects).unwrap();
    let out = dir.path().join("out");
    let r = cli(&["fuse", "--kind", "mixed", "--scores", p(&scores), "--output", p(&out)]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);

    let fused = read_asmf(fs::File::open(out.join("m.asmf")).unwrap()).unwrap();
    let pseudo: Vec<ScoreMap> = objects.iter().map(|o| pseudo_score_map(o, 6, 4).unwrap()).collect();
    let (nm, np) = (normalize_maps(&maps), normalize_maps(&pseudo));
    for f in 0..3 {
        for i in 0..24 {
            let want = (nm[f].values[i] + np[f].values[i]) / 2.0;
            assert_eq!(fused[f].values[i], want as f32 as f64, "frame {f} pixel {i}");
        }
    }
    let frame = read_stream(&out, "m");
    assert_eq!(frame.len(), 3);
}

#[test]
fn stats_on_example_matches_hand_tally() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("stats.json");
    let r = cli(&["stats", "--annotations", &example("annotations"), "--output", p(&out)]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let v: serde_json::Value = serde_json::from_slice(&fs::read(&out).unwrap()).unwrap();
    // v01: 12 frames, window 4..8, ST, one car; v02: 12 frames, window 6..10, OC*, one motorcycle
    assert_eq!(v["videos"], 2);
    assert_eq!(v["precursor_duration"], serde_json::json!({"4": 1, "6": 1}));
    assert_eq!(v["anomaly_duration"], serde_json::json!({"4": 2}));
    assert_eq!(v["post_anomaly_duration"], serde_json::json!({"2": 1, "4": 1}));
    assert_eq!(v["categories"], serde_json::json!({"OC*": 1, "ST": 1}));
    assert_eq!(v["objects_per_video"], serde_json::json!({"1": 2}));
    assert_eq!(v["object_classes"], serde_json::json!({"car": 1, "motorcycle": 1}));
    assert_eq!((v["ego_involved"].as_u64(), v["non_ego"].as_u64()), (Some(1), Some(1)));
    let csv = fs::read_to_string(out.with_extension("csv")).unwrap();
    assert!(csv.starts_with("histogram,key,count\n"));
    assert!(csv.contains("category,OC*,1\n") && csv.contains("ego,non_ego,1\n"));
}

#[test]
fn stats_on_empty_directory_exits_two() {
    let dir = TempDir::new().unwrap();
    let r = cli(&[
        "stats",
        "--annotations",
        p(dir.path()),
        "--output",
        p(&dir.path().join("s.json")),
    ]);
    assert_eq!(r.code, EXIT_DATA);
}

#[test]
fn binary_honours_thread_env_and_exit_codes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("r.json");
    let bin = env!("CARGO_BIN_EXE_stroc-bench");
    let status = Command::new(bin)
        .current_dir(root())
        .env("STROC_BENCH_THREADS", "3")
        .args([
            "evaluate",
            "--annotations",
            "tests/fixtures/example/annotations",
            "--scores",
            "tests/fixtures/example/scores",
            "--per-class",
            "--seed",
            "2020",
            "--output",
            p(&out),
        ])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0));
    assert_eq!(
        fs::read(&out).unwrap(),
        fs::read(root().join("tests/fixtures/example/golden_report.json")).unwrap()
    );
    let bad = Command::new(bin)
        .env("STROC_BENCH_THREADS", "many")
        .args(["synth", "--spec", "x", "--output", "y"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
}
