//! On-disk corpus handling: load a directory of recordings into aligned
//! sessions and write sessions back in the same layout.
//!
//! A corpus directory holds one `<subject>_<session>_<wrist>` triple of
//! files per recording — data CSV, `key=value` metadata sidecar, and label
//! CSV — plus an optional `manifest.csv` naming them. Loading prefers the
//! manifest and falls back to scanning for `*.meta` stems; either way the
//! result is sorted by (subject, session), so every command sees the same
//! corpus order regardless of directory enumeration order.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;
use std::str::FromStr;

use wristarc::data_model::{
    align_session, parse_labels, parse_meta, parse_recording, serialize_labels, serialize_meta,
    serialize_recording, LabelTrack, Recording, Session, Wrist,
};
use wristarc::error::{Error, Result};
use wristarc::synth::MANIFEST_HEADER;

/// One aligned session plus the manifest bookkeeping that travels with it.
#[derive(Debug, Clone)]
pub struct LoadedSession {
    pub session: Session,
    /// Protocol seed from the manifest; 0 when the corpus has none.
    pub seed: u64,
}

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

/// Wrist halves of one session, collected before alignment.
#[derive(Default)]
struct PendingSession {
    left: Option<(Recording, LabelTrack)>,
    right: Option<(Recording, LabelTrack)>,
    seed: u64,
}

/// Load every session in `dir`, via `manifest.csv` when present.
pub fn load_corpus(dir: &Path) -> Result<Vec<LoadedSession>> {
    let manifest = dir.join("manifest.csv");
    let stems = if manifest.is_file() {
        manifest_stems(&manifest)?
    } else {
        scanned_stems(dir)?
    };
    if stems.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no recordings found in {}",
            dir.display()
        )));
    }

    let mut pending: BTreeMap<(String, String), PendingSession> = BTreeMap::new();
    for (subject_id, session_id, wrist, stem, seed) in stems {
        let meta = parse_meta(open(&dir.join(format!("{stem}.meta")))?)?;
        if meta.wrist != wrist {
            return Err(Error::MetadataMismatch(format!(
                "{stem}.meta says wrist {}, expected {wrist}",
                meta.wrist
            )));
        }
        if meta.subject_id != subject_id {
            return Err(Error::MetadataMismatch(format!(
                "{stem}.meta says subject {:?}, expected {subject_id:?}",
                meta.subject_id
            )));
        }
        let recording = parse_recording(open(&dir.join(format!("{stem}.csv")))?, &meta)?;
        let labels = parse_labels(
            open(&dir.join(format!("{stem}.labels.csv")))?,
            meta.sample_rate_hz,
        )?;
        let slot = pending.entry((subject_id, session_id)).or_default();
        let half = match wrist {
            Wrist::Left => &mut slot.left,
            Wrist::Right => &mut slot.right,
        };
        if half.is_some() {
            return Err(Error::MetadataMismatch(format!(
                "duplicate {wrist}-wrist recording {stem:?}"
            )));
        }
        *half = Some((recording, labels));
        slot.seed = seed;
    }

    let mut sessions = Vec::with_capacity(pending.len());
    for ((subject_id, session_id), slot) in pending {
        let missing = |wrist: &str| {
            Error::InvalidInput(format!(
                "session {subject_id}/{session_id} has no {wrist}-wrist recording"
            ))
        };
        let (left, labels_left) = slot.left.ok_or_else(|| missing("left"))?;
        let (right, labels_right) = slot.right.ok_or_else(|| missing("right"))?;
        sessions.push(LoadedSession {
            session: align_session(left, right, labels_left, labels_right, session_id)?,
            seed: slot.seed,
        });
    }
    Ok(sessions)
}

/// Recording stems listed by a manifest: (subject, session, wrist, stem, seed).
fn manifest_stems(path: &Path) -> Result<Vec<(String, String, Wrist, String, u64)>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == MANIFEST_HEADER => {}
        Some((_, header)) => {
            return Err(Error::InvalidInput(format!(
                "manifest header mismatch: expected {MANIFEST_HEADER:?}, got {header:?}"
            )))
        }
        None => return Err(Error::EmptyStream),
    }
    let mut stems = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(Error::MalformedRow {
                line: i + 1,
                expected: 9,
                got: fields.len(),
            });
        }
        let wrist = Wrist::from_str(fields[4])?;
        let seed = fields[5].parse::<u64>().map_err(|_| Error::NonFiniteValue {
            line: i + 1,
            value: fields[5].to_string(),
        })?;
        let stem = fields[6]
            .strip_suffix(".csv")
            .ok_or_else(|| Error::InvalidInput(format!(
                "manifest line {}: data file {:?} does not end in .csv",
                i + 1,
                fields[6]
            )))?;
        stems.push((
            fields[0].to_string(),
            fields[1].to_string(),
            wrist,
            stem.to_string(),
            seed,
        ));
    }
    Ok(stems)
}

/// Recording stems found by scanning `dir` for `*.meta` files.
fn scanned_stems(dir: &Path) -> Result<Vec<(String, String, Wrist, String, u64)>> {
    let entries = fs::read_dir(dir)
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", dir.display())))?;
    let mut stems = Vec::new();
    for entry in entries {
        let name = entry?.file_name();
        let Some(name) = name.to_str() else { continue };
        let Some(stem) = name.strip_suffix(".meta") else {
            continue;
        };
        // Stem layout: <subject>_<session>_<wrist>; subject and session ids
        // carry no underscores of their own.
        let Some((rest, wrist)) = stem.rsplit_once('_') else {
            continue;
        };
        let Ok(wrist) = Wrist::from_str(wrist) else {
            continue;
        };
        let Some((subject_id, session_id)) = rest.split_once('_') else {
            continue;
        };
        stems.push((
            subject_id.to_string(),
            session_id.to_string(),
            wrist,
            stem.to_string(),
            0,
        ));
    }
    stems.sort_by(|a, b| a.3.cmp(&b.3));
    Ok(stems)
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path)
        .map_err(|e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

// ---------------------------------------------------------------------------
// Writing
// ---------------------------------------------------------------------------

/// File stem of one recording.
pub fn recording_stem(session: &Session, wrist: Wrist) -> String {
    let subject = match wrist {
        Wrist::Left => &session.left.subject_id,
        Wrist::Right => &session.right.subject_id,
    };
    format!("{subject}_{}_{wrist}", session.session_id)
}

/// Write sessions into `dir` in the corpus layout (data + meta + labels per
/// wrist, plus `manifest.csv`), mirroring the synth corpus writer.
pub fn write_sessions(sessions: &[LoadedSession], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut manifest = String::from(MANIFEST_HEADER);
    manifest.push('\n');
    for loaded in sessions {
        let session = &loaded.session;
        for (rec, track, wrist) in [
            (&session.left, &session.labels_left, Wrist::Left),
            (&session.right, &session.labels_right, Wrist::Right),
        ] {
            let stem = recording_stem(session, wrist);
            let mut f = io::BufWriter::new(fs::File::create(dir.join(format!("{stem}.csv")))?);
            serialize_recording(rec, &mut f)?;
            let mut f = io::BufWriter::new(fs::File::create(dir.join(format!("{stem}.meta")))?);
            serialize_meta(&rec.meta(), &mut f)?;
            let mut f =
                io::BufWriter::new(fs::File::create(dir.join(format!("{stem}.labels.csv")))?);
            serialize_labels(track, rec.sample_rate_hz, &mut f)?;
            manifest.push_str(&format!(
                "{},{},{},{},{wrist},{},{stem}.csv,{stem}.meta,{stem}.labels.csv\n",
                rec.subject_id,
                session.session_id,
                session.scenario(),
                rec.population,
                loaded.seed,
            ));
        }
    }
    fs::write(dir.join("manifest.csv"), manifest)?;
    Ok(())
}

/// Borrowed session views, as the dataset builder wants them.
pub fn session_refs(sessions: &[LoadedSession]) -> Vec<&Session> {
    sessions.iter().map(|s| &s.session).collect()
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use wristarc::data_model::Scenario;
    use wristarc::synth::{synth_corpus, write_corpus, CorpusTemplate, SynthSubject};

    fn tiny_corpus() -> Vec<SynthSubject> {
        let mut template = CorpusTemplate::default();
        template.n_l1_sessions = 1;
        template.n_l2_sessions = 1;
        synth_corpus(2, &template).unwrap()
    }

    #[test]
    fn synth_corpus_round_trips_through_the_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let subjects = tiny_corpus();
        write_corpus(&subjects, dir.path()).unwrap();

        let loaded = load_corpus(dir.path()).unwrap();
        assert_eq!(loaded.len(), 4);
        // Sorted by (subject, session): H01/L1-1, H01/L2-1, H02/L1-1, H02/L2-1.
        let ids: Vec<(String, String)> = loaded
            .iter()
            .map(|s| (s.session.left.subject_id.clone(), s.session.session_id.clone()))
            .collect();
        assert_eq!(ids[0], ("H01".to_string(), "L1-1".to_string()));
        assert_eq!(ids[3], ("H02".to_string(), "L2-1".to_string()));
        assert_eq!(loaded[1].session.scenario(), Scenario::L2);

        let original = &subjects[0].sessions[0];
        assert_eq!(loaded[0].seed, original.seed);
        assert_eq!(
            loaded[0].session.labels_right.intervals(),
            original.session.labels_right.intervals()
        );
        // Samples survive the 6-decimal CSV round trip within quantization.
        let a = &loaded[0].session.right.samples;
        let b = &original.session.right.samples;
        assert_eq!(a.dim(), b.dim());
        let max_err = a
            .iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(max_err <= 5e-7, "max quantization error {max_err}");
    }

    #[test]
    fn loading_without_a_manifest_scans_stems() {
        let dir = tempfile::tempdir().unwrap();
        write_corpus(&tiny_corpus(), dir.path()).unwrap();
        fs::remove_file(dir.path().join("manifest.csv")).unwrap();

        let loaded = load_corpus(dir.path()).unwrap();
        assert_eq!(loaded.len(), 4);
        assert_eq!(loaded[0].session.left.subject_id, "H01");
        // Scanned corpora carry no seed column.
        assert!(loaded.iter().all(|s| s.seed == 0));
    }

    #[test]
    fn empty_directory_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_corpus(dir.path()).unwrap_err();
        assert!(err.to_string().contains("no recordings"), "{err}");
    }

    #[test]
    fn missing_wrist_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        write_corpus(&tiny_corpus(), dir.path()).unwrap();
        fs::remove_file(dir.path().join("manifest.csv")).unwrap();
        for name in ["H01_L1-1_left.csv", "H01_L1-1_left.meta", "H01_L1-1_left.labels.csv"] {
            fs::remove_file(dir.path().join(name)).unwrap();
        }
        let err = load_corpus(dir.path()).unwrap_err();
        assert!(err.to_string().contains("no left-wrist"), "{err}");
    }

    #[test]
    fn written_sessions_reload_byte_identically() {
        let dir = tempfile::tempdir().unwrap();
        write_corpus(&tiny_corpus(), dir.path()).unwrap();
        let loaded = load_corpus(dir.path()).unwrap();

        let out1 = tempfile::tempdir().unwrap();
        let out2 = tempfile::tempdir().unwrap();
        write_sessions(&loaded, out1.path()).unwrap();
        write_sessions(&load_corpus(out1.path()).unwrap(), out2.path()).unwrap();

        for name in ["manifest.csv", "H01_L1-1_right.csv", "H02_L2-1_left.labels.csv"] {
            let a = fs::read(out1.path().join(name)).unwrap();
            let b = fs::read(out2.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs");
        }
    }
}
