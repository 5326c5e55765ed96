//! The eight pipeline commands.
//!
//! Each command reads a corpus (or earlier artifacts) from one directory
//! and writes its own artifacts into another; all state lives on disk, so
//! commands compose by pointing the next `--in` at the previous `--out`.
//! The fixed stage order is ingest → drift removal (→ attitude fusion when
//! enabled) → segmentation → features/windows → classification → evaluation.
//! Every command is deterministic given config + seed: rerunning produces
//! byte-identical machine-readable outputs.

use std::collections::BTreeSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::Axis;

use wristarc::cnn::{parse_cnn_model, predict_cnn, serialize_cnn_model, serialize_training_log};
use wristarc::data_model::{MovementClass, Population, Scenario, Session, Wrist};
use wristarc::error::{Error, Result};
use wristarc::eval::{
    build_dataset, center_window, run_cell, split, target_label, CellKey, CellResult, Classifier,
    ConfusionMatrix, LabeledDataset, ModelArtifact, ResultsTable, Segmentation,
};
use wristarc::features::{extract_features, serialize_features};
use wristarc::preprocess::{fuse_attitude, remove_drift_session};
use wristarc::segment::{segment_by_rest, sliding_windows, spot_gesture};
use wristarc::svm::{parse_svm_model, predict_svm, serialize_svm_model};
use wristarc::synth::{synth_corpus, write_corpus};

use crate::config::PipelineConfig;
use crate::corpus::{load_corpus, recording_stem, session_refs, write_sessions, LoadedSession};

/// Header of cell result CSVs, matching [`ResultsTable::to_csv`].
const CELL_HEADER: &str = "scenario,population,segmentation,classifier,accuracy,n_test";

// ---------------------------------------------------------------------------
// synth / ingest / preprocess
// ---------------------------------------------------------------------------

/// Generate a synthetic corpus with ground-truth labels into `out`.
pub fn cmd_synth(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let template = cfg.synth_template()?;
    let subjects = synth_corpus(cfg.synth.subjects, &template)?;
    let rows = write_corpus(&subjects, out)?;
    println!("wrote {} recordings to {}", rows.len(), out.display());
    Ok(())
}

/// Parse, validate, and align every session in `input`, rewriting it
/// canonically into `out`.
pub fn cmd_ingest(input: &Path, out: &Path) -> Result<()> {
    let sessions = load_corpus(input)?;
    write_sessions(&sessions, out)?;
    println!("ingested {} sessions into {}", sessions.len(), out.display());
    Ok(())
}

/// Remove drift from every recording (and re-derive attitude when fusion is
/// enabled), writing the corpus into `out`.
pub fn cmd_preprocess(cfg: &PipelineConfig, input: &Path, out: &Path) -> Result<()> {
    let drift = cfg.drift_config()?;
    let sessions = load_corpus(input)?;
    let mut processed = Vec::with_capacity(sessions.len());
    for loaded in sessions {
        let mut session = remove_drift_session(&loaded.session, &drift)?;
        if cfg.fusion.enabled {
            let fusion = cfg.fusion_config();
            session.left = fuse_attitude(&session.left, &fusion)?;
            session.right = fuse_attitude(&session.right, &fusion)?;
        }
        processed.push(LoadedSession {
            session,
            seed: loaded.seed,
        });
    }
    write_sessions(&processed, out)?;
    println!(
        "preprocessed {} sessions into {}",
        processed.len(),
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// segment
// ---------------------------------------------------------------------------

/// Carve every recording into candidate segments and write one
/// `<stem>.segments.csv` per recording: `start_ms,end_ms,class` rows with
/// an empty class for unlabeled segments.
///
/// Constrained (L1) sessions are carved by rest-energy segmentation,
/// unconstrained (L2) ones by non-overlapping windows. With `spot`, each
/// segment is narrowed to the margin around its acceleration peak; the
/// label is still decided on the full extent, which is what the narrowed
/// window stands for.
pub fn cmd_segment(cfg: &PipelineConfig, input: &Path, out: &Path, spot: bool) -> Result<()> {
    let rest = cfg.rest_config();
    let window = cfg.window_config();
    let spot_cfg = cfg.spot_config()?;
    let sessions = load_corpus(input)?;
    fs::create_dir_all(out)?;

    let mut n_files = 0usize;
    let mut n_segments = 0usize;
    for loaded in &sessions {
        let session = &loaded.session;
        for (rec, track, wrist) in [
            (&session.left, &session.labels_left, Wrist::Left),
            (&session.right, &session.labels_right, Wrist::Right),
        ] {
            let segments = match session.scenario() {
                Scenario::L1 => segment_by_rest(rec, &rest)?,
                Scenario::L2 => sliding_windows(rec, &window)?,
            };
            let period = 1000.0 / rec.sample_rate_hz;
            let mut text = String::from("start_ms,end_ms,class\n");
            for seg in &segments {
                let label = target_label(track, seg.start(), seg.end());
                let extent = if spot {
                    spot_gesture(rec, seg, &spot_cfg)?
                } else {
                    seg.clone()
                };
                text.push_str(&format!(
                    "{:.3},{:.3},{}\n",
                    extent.start() as f64 * period,
                    extent.end() as f64 * period,
                    label.map(|c| c.to_string()).unwrap_or_default(),
                ));
            }
            let path = out.join(format!("{}.segments.csv", recording_stem(session, wrist)));
            fs::write(path, text)?;
            n_files += 1;
            n_segments += segments.len();
        }
    }
    println!(
        "wrote {n_files} segment files ({n_segments} segments) to {}",
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// features
// ---------------------------------------------------------------------------

/// Assemble the labeled dataset of one (scenario, segmentation) pair and
/// export its statistical features as one CSV, restricted to the configured
/// channel subset.
pub fn cmd_features(
    cfg: &PipelineConfig,
    input: &Path,
    out: &Path,
    scenario: Scenario,
    segmentation: Segmentation,
) -> Result<()> {
    let channels = cfg.feature_channels()?;
    let ds = load_dataset(cfg, input, scenario, segmentation)?;
    let columns: Vec<usize> = channels.iter().map(|c| c.index()).collect();
    let mut features = Vec::with_capacity(ds.len());
    for item in &ds.items {
        let window = item.window.select(Axis(1), &columns);
        let mut v = extract_features(window.view())?;
        v.label = Some(item.label);
        features.push(v);
    }
    fs::create_dir_all(out)?;
    let path = out.join(format!("{scenario}_{segmentation}.features.csv"));
    let mut file = io::BufWriter::new(fs::File::create(&path)?);
    serialize_features(&features, &channels, &mut file)?;
    println!("wrote {} feature vectors to {}", features.len(), path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// train / eval / report
// ---------------------------------------------------------------------------

/// Train one cell and save the model (plus the CNN training log) under
/// `out`, named `<scenario>_<segmentation>_<classifier>.model`.
pub fn cmd_train(
    cfg: &PipelineConfig,
    input: &Path,
    out: &Path,
    scenario: Scenario,
    segmentation: Segmentation,
    classifier: Classifier,
) -> Result<()> {
    let ds = load_dataset(cfg, input, scenario, segmentation)?;
    let outcome = run_cell(&ds, classifier, &cfg.split_spec()?, &cfg.cell_config())?;

    fs::create_dir_all(out)?;
    let stem = format!("{scenario}_{segmentation}_{classifier}");
    let path = out.join(format!("{stem}.model"));
    let mut file = io::BufWriter::new(fs::File::create(&path)?);
    match &outcome.model {
        ModelArtifact::Svm(model) => serialize_svm_model(model, &mut file)?,
        ModelArtifact::Cnn(model) => serialize_cnn_model(model, &mut file)?,
    }
    println!("wrote {}", path.display());
    if let Some(log) = &outcome.training_log {
        let log_path = out.join(format!("{stem}.train.csv"));
        fs::write(&log_path, serialize_training_log(log))?;
        println!("wrote {}", log_path.display());
    }
    Ok(())
}

/// Score a saved model on the held-out test part of the same deterministic
/// split the `train` command used, writing the cell result and confusion
/// matrix under `out`.
pub fn cmd_eval(
    cfg: &PipelineConfig,
    input: &Path,
    model_path: &Path,
    out: &Path,
    scenario: Scenario,
    segmentation: Segmentation,
) -> Result<()> {
    let text = fs::read_to_string(model_path).map_err(|e| {
        Error::Io(io::Error::new(
            e.kind(),
            format!("{}: {e}", model_path.display()),
        ))
    })?;
    let (classifier, model) = match text.lines().next().unwrap_or_default() {
        "format,svm.v1" => (
            Classifier::Svm,
            ModelArtifact::Svm(parse_svm_model(text.as_bytes())?),
        ),
        "format,cnn.v1" => (
            Classifier::Cnn,
            ModelArtifact::Cnn(Box::new(parse_cnn_model(text.as_bytes())?)),
        ),
        first => {
            return Err(Error::MalformedModel(format!(
                "{}: unrecognized format line {first:?}",
                model_path.display()
            )))
        }
    };

    let ds = load_dataset(cfg, input, scenario, segmentation)?;
    let (_, _, test) = split(&ds, &cfg.split_spec()?)?;

    // The matrix covers every class the data or the model can produce, so
    // a model evaluated off its training distribution still fits.
    let mut classes: BTreeSet<MovementClass> = ds.class_set().into_iter().collect();
    match &model {
        ModelArtifact::Svm(m) => classes.extend(m.classes.iter().copied()),
        ModelArtifact::Cnn(m) => classes.extend(m.classes().iter().copied()),
    }
    let mut confusion = ConfusionMatrix::new(classes.into_iter().collect())?;
    for item in &test.items {
        let predicted = match &model {
            ModelArtifact::Svm(m) => {
                let v = extract_features(item.window.view())?;
                predict_svm(m, &v)?.0
            }
            ModelArtifact::Cnn(m) => {
                let frame = center_window(&item.window, m.config().time_points)?;
                predict_cnn(m, &frame)?.0
            }
        };
        confusion.record(item.label, predicted)?;
    }

    let key = CellKey {
        scenario,
        population: ds.population,
        segmentation,
        classifier,
    };
    let result = CellResult {
        accuracy: confusion.accuracy(),
        n_test: test.len(),
    };
    let mut table = ResultsTable::new();
    table.insert(key, result)?;

    fs::create_dir_all(out)?;
    let stem = format!("{scenario}_{segmentation}_{classifier}");
    let cell_path = out.join(format!("{stem}.cell.csv"));
    fs::write(&cell_path, table.to_csv())?;
    fs::write(
        out.join(format!("{stem}.confusion.csv")),
        confusion.to_csv(),
    )?;
    println!(
        "{scenario}/{}/{segmentation}/{classifier}: accuracy {} on {} test items",
        ds.population, result.accuracy, result.n_test
    );
    Ok(())
}

/// Merge cell result CSVs (files, or directories of `*.cell.csv`) into the
/// accuracy table, writing `report.csv` and `report.txt` under `out` and
/// printing the text table.
pub fn cmd_report(inputs: &[PathBuf], out: &Path) -> Result<()> {
    let mut table = ResultsTable::new();
    let mut n_files = 0usize;
    for input in inputs {
        for path in cell_files(input)? {
            let text = fs::read_to_string(&path).map_err(|e| {
                Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display())))
            })?;
            for (key, result) in parse_cells(&text, &path)? {
                table.insert(key, result)?;
            }
            n_files += 1;
        }
    }
    if n_files == 0 {
        return Err(Error::InvalidInput(format!(
            "no cell results found under {}",
            inputs
                .iter()
                .map(|p| p.display().to_string())
                .collect::<Vec<_>>()
                .join(", ")
        )));
    }

    fs::create_dir_all(out)?;
    let rendered = table.render_text();
    fs::write(out.join("report.csv"), table.to_csv())?;
    fs::write(out.join("report.txt"), &rendered)?;
    print!("{rendered}");
    Ok(())
}

/// Cell result files under one input: the file itself, or every
/// `*.cell.csv` in a directory, sorted by name.
fn cell_files(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    let entries = fs::read_dir(input)
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", input.display())))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry?.path();
        if path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.ends_with(".cell.csv"))
        {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Parse the rows of one cell result CSV.
fn parse_cells(text: &str, path: &Path) -> Result<Vec<(CellKey, CellResult)>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == CELL_HEADER => {}
        _ => {
            return Err(Error::InvalidInput(format!(
                "{}: expected header {CELL_HEADER:?}",
                path.display()
            )))
        }
    }
    let mut cells = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let bad = |what: &str| {
            Error::InvalidInput(format!("{} line {}: {what}", path.display(), i + 1))
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(bad(&format!("expected 6 fields, got {}", fields.len())));
        }
        let key = CellKey {
            scenario: Scenario::from_str(fields[0])?,
            population: Population::from_str(fields[1])?,
            segmentation: Segmentation::from_str(fields[2])?,
            classifier: Classifier::from_str(fields[3])?,
        };
        let accuracy = fields[4]
            .parse::<f64>()
            .map_err(|_| bad(&format!("bad accuracy {:?}", fields[4])))?;
        let n_test = fields[5]
            .parse::<usize>()
            .map_err(|_| bad(&format!("bad n_test {:?}", fields[5])))?;
        cells.push((key, CellResult { accuracy, n_test }));
    }
    Ok(cells)
}

// ---------------------------------------------------------------------------
// Shared loading
// ---------------------------------------------------------------------------

/// Load a corpus and assemble the labeled dataset of one cell's scenario
/// and segmentation.
fn load_dataset(
    cfg: &PipelineConfig,
    input: &Path,
    scenario: Scenario,
    segmentation: Segmentation,
) -> Result<LabeledDataset> {
    let sessions = load_corpus(input)?;
    let in_scenario: Vec<&Session> = session_refs(&sessions)
        .into_iter()
        .filter(|s| s.scenario() == scenario)
        .collect();
    if in_scenario.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no {scenario} sessions in {}",
            input.display()
        )));
    }
    build_dataset(&in_scenario, scenario, segmentation, &cfg.dataset_config()?)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_header_matches_the_results_table() {
        assert_eq!(ResultsTable::new().to_csv(), format!("{CELL_HEADER}\n"));
    }

    #[test]
    fn cell_rows_round_trip_through_the_parser() {
        let mut table = ResultsTable::new();
        let key = CellKey {
            scenario: Scenario::L1,
            population: Population::Healthy,
            segmentation: Segmentation::Action,
            classifier: Classifier::Svm,
        };
        table.insert(key, CellResult { accuracy: 0.84, n_test: 50 }).unwrap();
        let parsed = parse_cells(&table.to_csv(), Path::new("x.cell.csv")).unwrap();
        assert_eq!(parsed.len(), 1);
        assert_eq!(parsed[0].0, key);
        assert_eq!(parsed[0].1.accuracy, 0.84);
        assert_eq!(parsed[0].1.n_test, 50);
    }

    #[test]
    fn malformed_cell_rows_name_the_line() {
        let text = format!("{CELL_HEADER}\nL1,healthy,action,svm,0.84\n");
        let err = parse_cells(&text, Path::new("x.cell.csv")).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        let err = parse_cells("bogus\n", Path::new("x.cell.csv")).unwrap_err();
        assert!(err.to_string().contains("expected header"), "{err}");
    }
}
