//! End-to-end tests of the `wristarc` binary: every subcommand, the exit
//! code contract, and determinism of the machine-readable outputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

/// Outcome of one binary invocation.
struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn wristarc(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_wristarc"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs");
    Run {
        code: out.status.code().expect("no signal"),
        stdout: String::from_utf8(out.stdout).expect("utf-8 stdout"),
        stderr: String::from_utf8(out.stderr).expect("utf-8 stderr"),
    }
}

fn assert_ok(run: &Run) {
    assert_eq!(
        run.code, 0,
        "expected success\nstdout: {}\nstderr: {}",
        run.stdout, run.stderr
    );
}

fn s(path: &Path) -> String {
    path.to_str().expect("utf-8 path").to_string()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("pipeline.toml");
    fs::write(&path, text).unwrap();
    s(&path)
}

/// `start_ms,end_ms,class` rows of a segments or labels CSV.
fn read_rows(path: &Path) -> Vec<(f64, f64, String)> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("start_ms,end_ms,class"), "{}", path.display());
    lines
        .map(|line| {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields.len(), 3, "row {line:?}");
            (
                fields[0].parse().unwrap(),
                fields[1].parse().unwrap(),
                fields[2].to_string(),
            )
        })
        .collect()
}

/// Config shared by the segmentation tests: one subject, drift removal wide
/// enough not to distort pulses, and a rest detector tuned so detected
/// boundaries sit well inside ±0.25 s of the planted ones.
const SEGMENT_CONFIG: &str = "seed = 1

[drift]
highpass_window_s = 20.0

[rest]
energy_threshold = 0.2
energy_window_s = 0.75

[synth]
subjects = 1
l1_sessions = 1
l2_sessions = 0
";

/// Generate, preprocess, and return (corpus, preprocessed) dirs.
fn synth_and_preprocess(root: &Path, config: &str) -> (PathBuf, PathBuf) {
    let corpus = root.join("corpus");
    let pre = root.join("pre");
    assert_ok(&wristarc(&["synth", "--config", config, "--out", &s(&corpus)]));
    assert_ok(&wristarc(&[
        "preprocess",
        "--config",
        config,
        "--in",
        &s(&corpus),
        "--out",
        &s(&pre),
    ]));
    (corpus, pre)
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

#[test]
fn synth_writes_the_default_corpus_file_count() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("corpus");
    let run = wristarc(&["synth", "--out", &s(&out)]);
    assert_ok(&run);
    assert!(run.stdout.contains("250 recordings"), "{}", run.stdout);

    // 25 subjects × 5 sessions × 2 wrists × 3 files, plus the manifest.
    let n_files = fs::read_dir(&out).unwrap().count();
    assert_eq!(n_files, 751);
    assert!(out.join("manifest.csv").is_file());
}

#[test]
fn synth_repeats_byte_identically_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        "seed = 3\n[synth]\nsubjects = 1\nl1_sessions = 1\nl2_sessions = 1\n",
    );
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    assert_ok(&wristarc(&["synth", "--config", &config, "--out", &s(&a)]));
    assert_ok(&wristarc(&["synth", "--config", &config, "--out", &s(&b)]));
    assert_ok(&wristarc(&[
        "synth", "--config", &config, "--seed", "4", "--out", &s(&c),
    ]));

    for name in ["manifest.csv", "H01_L1-1_right.csv", "H01_L2-1_left.labels.csv"] {
        let first = fs::read(a.join(name)).unwrap();
        assert_eq!(first, fs::read(b.join(name)).unwrap(), "{name} differs across reruns");
    }
    // A different seed changes the data, not just the manifest bookkeeping.
    assert_ne!(
        fs::read(a.join("H01_L1-1_right.csv")).unwrap(),
        fs::read(c.join("H01_L1-1_right.csv")).unwrap()
    );
}

#[test]
fn synth_into_an_unwritable_path_fails_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("occupied");
    fs::write(&file, "not a directory").unwrap();
    let out = file.join("corpus");
    let run = wristarc(&["synth", "--out", &s(&out)]);
    assert_eq!(run.code, 3, "stderr: {}", run.stderr);
    assert!(run.stderr.contains("error:"), "{}", run.stderr);
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

#[test]
fn ingest_rewrites_a_corpus_canonically() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        "[synth]\nsubjects = 1\nl1_sessions = 1\nl2_sessions = 1\n",
    );
    let corpus = tmp.path().join("corpus");
    let ingested = tmp.path().join("ingested");
    assert_ok(&wristarc(&["synth", "--config", &config, "--out", &s(&corpus)]));
    let run = wristarc(&[
        "ingest", "--config", &config, "--in", &s(&corpus), "--out", &s(&ingested),
    ]);
    assert_ok(&run);
    assert!(run.stdout.contains("2 sessions"), "{}", run.stdout);
    // Already-canonical input survives unchanged.
    for name in ["manifest.csv", "H01_L1-1_left.csv", "H01_L2-1_right.meta"] {
        assert_eq!(
            fs::read(corpus.join(name)).unwrap(),
            fs::read(ingested.join(name)).unwrap(),
            "{name} differs"
        );
    }
}

#[test]
fn ingest_rejects_a_corrupt_recording() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        "[synth]\nsubjects = 1\nl1_sessions = 1\nl2_sessions = 0\n",
    );
    let corpus = tmp.path().join("corpus");
    assert_ok(&wristarc(&["synth", "--config", &config, "--out", &s(&corpus)]));
    fs::write(corpus.join("H01_L1-1_left.csv"), "t_ms,broken\n1,2\n").unwrap();
    let run = wristarc(&[
        "ingest",
        "--config",
        &config,
        "--in",
        &s(&corpus),
        "--out",
        &s(&tmp.path().join("ingested")),
    ]);
    assert_eq!(run.code, 3, "stderr: {}", run.stderr);
    assert!(run.stderr.contains("error:"), "{}", run.stderr);
}

// ---------------------------------------------------------------------------
// segment
// ---------------------------------------------------------------------------

#[test]
fn segment_recovers_planted_l1_events_within_a_quarter_second() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), SEGMENT_CONFIG);
    let (corpus, pre) = synth_and_preprocess(tmp.path(), &config);
    let segs = tmp.path().join("segs");
    assert_ok(&wristarc(&[
        "segment", "--config", &config, "--in", &s(&pre), "--out", &s(&segs),
    ]));

    let mut recovered: Vec<(String, String)> = Vec::new();
    for wrist in ["left", "right"] {
        let truth = read_rows(&corpus.join(format!("H01_L1-1_{wrist}.labels.csv")));
        let found = read_rows(&segs.join(format!("H01_L1-1_{wrist}.segments.csv")));
        // The protocol plants 8 labeled pulses per wrist; all of them (and
        // nothing else) must come back labeled.
        assert_eq!(found.len(), 8, "{wrist}: {found:?}");
        for (start, end, class) in &found {
            assert!(!class.is_empty(), "unlabeled segment on {wrist}");
            let (t_start, t_end, _) = truth
                .iter()
                .find(|(ts, te, tc)| {
                    tc == class && (ts - start).abs() <= 250.0 && (te - end).abs() <= 250.0
                })
                .unwrap_or_else(|| {
                    panic!("{wrist} segment [{start}, {end}) {class} matches no planted event")
                });
            recovered.push((format!("{t_start}:{t_end}"), class.clone()));
        }
    }
    // Both-wrist events share one extent, so the distinct recovered events
    // are exactly the 12 of the constrained protocol.
    recovered.sort();
    recovered.dedup();
    assert_eq!(recovered.len(), 12, "{recovered:?}");
}

#[test]
fn segment_tiles_unconstrained_sessions_into_floor_windows() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        "seed = 1\n[synth]\nsubjects = 1\nl1_sessions = 0\nl2_sessions = 1\n",
    );
    let (corpus, pre) = synth_and_preprocess(tmp.path(), &config);
    let segs = tmp.path().join("segs");
    assert_ok(&wristarc(&[
        "segment", "--config", &config, "--in", &s(&pre), "--out", &s(&segs),
    ]));

    let data = fs::read_to_string(corpus.join("H01_L2-1_right.csv")).unwrap();
    let t_samples = data.lines().count() - 1;
    let rows = read_rows(&segs.join("H01_L2-1_right.segments.csv"));
    assert_eq!(rows.len(), t_samples / 300, "T = {t_samples}");
    for (i, (start, end, _)) in rows.iter().enumerate() {
        assert_eq!(*start, i as f64 * 3000.0);
        assert_eq!(*end, (i + 1) as f64 * 3000.0);
    }
}

#[test]
fn segment_on_an_empty_corpus_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let run = wristarc(&[
        "segment", "--in", &s(&empty), "--out", &s(&tmp.path().join("segs")),
    ]);
    assert_eq!(run.code, 3, "stderr: {}", run.stderr);
    assert!(run.stderr.contains("no recordings"), "{}", run.stderr);
}

// ---------------------------------------------------------------------------
// features
// ---------------------------------------------------------------------------

#[test]
fn features_exports_the_configured_channel_subset() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        &format!("{SEGMENT_CONFIG}\n[features]\nchannels = [\"acc_x\", \"acc_y\", \"acc_z\"]\n"),
    );
    let (_, pre) = synth_and_preprocess(tmp.path(), &config);
    let out = tmp.path().join("features");
    assert_ok(&wristarc(&[
        "features",
        "--config",
        &config,
        "--in",
        &s(&pre),
        "--scenario",
        "L1",
        "--segmentation",
        "action",
        "--out",
        &s(&out),
    ]));

    let text = fs::read_to_string(out.join("L1_action.features.csv")).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("acc_x_mean,acc_x_min,acc_x_max,acc_x_std,acc_y_mean"));
    assert!(header.ends_with("acc_z_std,label"));
    assert_eq!(header.split(',').count(), 13);
    let rows: Vec<&str> = lines.collect();
    // 8 labeled pulses per wrist.
    assert_eq!(rows.len(), 16);
    for row in rows {
        let label = row.rsplit(',').next().unwrap();
        assert!(matches!(label, "M1" | "M2" | "M3" | "M4"), "{row}");
    }
}

// ---------------------------------------------------------------------------
// train / eval / report
// ---------------------------------------------------------------------------

/// Config of the miniature end-to-end experiment: four subjects, both
/// scenarios, and a CNN small enough to train in seconds.
const PIPELINE_CONFIG: &str = "seed = 1

[drift]
highpass_window_s = 20.0

[rest]
energy_threshold = 0.2
energy_window_s = 0.75

[synth]
subjects = 4
l1_sessions = 2
l2_sessions = 2

[cnn]
temporal_filters = 4
depth_multiplier = 1
separable_filters = 4
temporal_kernel = 25
separable_kernel = 8
epochs = 2
batch_size = 16
patience = 0
";

#[test]
fn full_pipeline_produces_the_eight_cell_report_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), PIPELINE_CONFIG);
    let (_, pre) = synth_and_preprocess(tmp.path(), &config);
    let models = tmp.path().join("models");
    let results = tmp.path().join("results");

    for scenario in ["L1", "L2"] {
        for segmentation in ["action", "spotting"] {
            for classifier in ["svm", "cnn"] {
                assert_ok(&wristarc(&[
                    "train", "--config", &config, "--in", &s(&pre),
                    "--scenario", scenario, "--segmentation", segmentation,
                    "--classifier", classifier, "--out", &s(&models),
                ]));
                let model = models.join(format!("{scenario}_{segmentation}_{classifier}.model"));
                assert!(model.is_file());
                assert_ok(&wristarc(&[
                    "eval", "--config", &config, "--in", &s(&pre),
                    "--model", &s(&model), "--scenario", scenario,
                    "--segmentation", segmentation, "--out", &s(&results),
                ]));
            }
        }
    }
    // CNN cells also leave a training log.
    assert!(models.join("L1_action_cnn.train.csv").is_file());

    let report = tmp.path().join("report");
    let run = wristarc(&["report", &s(&results), "--out", &s(&report)]);
    assert_ok(&run);

    let csv = fs::read_to_string(report.join("report.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "scenario,population,segmentation,classifier,accuracy,n_test");
    assert_eq!(lines.len(), 9, "{csv}");
    assert_eq!(lines.iter().skip(1).filter(|l| l.contains(",healthy,")).count(), 8);

    let text = fs::read_to_string(report.join("report.txt")).unwrap();
    assert!(text.contains('%'), "{text}");
    assert!(text.contains("L1") && text.contains("L2"), "{text}");
    // The rendered table is also the command's stdout.
    assert_eq!(run.stdout, text);

    // Reruns against the same corpus and seed reproduce artifacts
    // byte-identically.
    let (models2, results2) = (tmp.path().join("models2"), tmp.path().join("results2"));
    assert_ok(&wristarc(&[
        "train", "--config", &config, "--in", &s(&pre), "--scenario", "L1",
        "--segmentation", "action", "--classifier", "svm", "--out", &s(&models2),
    ]));
    assert_ok(&wristarc(&[
        "eval", "--config", &config, "--in", &s(&pre),
        "--model", &s(&models2.join("L1_action_svm.model")),
        "--scenario", "L1", "--segmentation", "action", "--out", &s(&results2),
    ]));
    for (dir, name) in [
        (&models, "L1_action_svm.model"),
        (&results, "L1_action_svm.cell.csv"),
        (&results, "L1_action_svm.confusion.csv"),
    ] {
        let (dir2, _) = if name.ends_with(".model") {
            (&models2, name)
        } else {
            (&results2, name)
        };
        assert_eq!(
            fs::read(dir.join(name)).unwrap(),
            fs::read(dir2.join(name)).unwrap(),
            "{name} differs across reruns"
        );
    }
    let report2 = tmp.path().join("report2");
    assert_ok(&wristarc(&["report", &s(&results), "--out", &s(&report2)]));
    assert_eq!(
        fs::read(report.join("report.csv")).unwrap(),
        fs::read(report2.join("report.csv")).unwrap()
    );
}

#[test]
fn eval_without_a_model_file_is_a_clean_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.model");
    let run = wristarc(&[
        "eval",
        "--in",
        &s(&tmp.path().join("unused")),
        "--model",
        &s(&missing),
        "--scenario",
        "L1",
        "--segmentation",
        "action",
        "--out",
        &s(&tmp.path().join("results")),
    ]);
    assert_eq!(run.code, 3, "stderr: {}", run.stderr);
    assert!(run.stderr.contains("nope.model"), "{}", run.stderr);
}

#[test]
fn report_formats_a_single_cell_as_a_percentage() {
    let tmp = tempfile::tempdir().unwrap();
    let cell = tmp.path().join("one.cell.csv");
    fs::write(
        &cell,
        "scenario,population,segmentation,classifier,accuracy,n_test\nL1,healthy,action,svm,0.84,50\n",
    )
    .unwrap();
    let report = tmp.path().join("report");
    let run = wristarc(&["report", &s(&cell), "--out", &s(&report)]);
    assert_ok(&run);
    assert!(run.stdout.contains("84%"), "{}", run.stdout);
    assert!(fs::read_to_string(report.join("report.txt")).unwrap().contains("84%"));
}

// ---------------------------------------------------------------------------
// config handling
// ---------------------------------------------------------------------------

#[test]
fn unknown_config_keys_are_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "[rest]\nbogus = 1\n");
    let run = wristarc(&["synth", "--config", &config, "--out", &s(&tmp.path().join("c"))]);
    assert_eq!(run.code, 2, "stderr: {}", run.stderr);
    assert!(run.stderr.contains("bogus"), "{}", run.stderr);
    assert!(run.stderr.contains("line"), "{}", run.stderr);
}

#[test]
fn invalid_split_ratios_are_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        &format!("{PIPELINE_CONFIG}\n[split]\ntrain = 0.9\nval = 0.2\ntest = 0.2\n"),
    );
    let (_, pre) = synth_and_preprocess(tmp.path(), &config);
    let run = wristarc(&[
        "train", "--config", &config, "--in", &s(&pre), "--scenario", "L1",
        "--segmentation", "action", "--classifier", "svm",
        "--out", &s(&tmp.path().join("models")),
    ]);
    assert_eq!(run.code, 2, "stderr: {}", run.stderr);
    assert!(run.stderr.contains("sum to 1"), "{}", run.stderr);
}
