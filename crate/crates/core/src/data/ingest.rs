//! Session CSV ingestion.
//!
//! Schema: `timestamp,participant_id,game_id,arousal,<feature_1>,...,<feature_d>`,
//! one file per session, timestamps in seconds. Rows are resampled onto a
//! 1 Hz grid starting at the first timestamp by nearest-sample selection
//! (ties go to the earlier row).

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::SessionTrace;
use crate::{Error, Result};

const REQUIRED: [&str; 4] = ["timestamp", "participant_id", "game_id", "arousal"];

/// Loads every `*.csv` under `path` (sorted by file name), or `path` itself
/// when it is a file.
pub fn load_sessions(path: impl AsRef<Path>) -> Result<Vec<SessionTrace>> {
    let path = path.as_ref();
    let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if meta.is_file() {
        return Ok(vec![load_session_file(path)?]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Pipeline(format!(
            "no session CSV files in {}",
            path.display()
        )));
    }
    files.iter().map(load_session_file).collect()
}

pub fn load_session_file(path: impl AsRef<Path>) -> Result<SessionTrace> {
    let path = path.as_ref();
    let ingest = |row: usize, msg: String| Error::Ingest {
        file: path.to_path_buf(),
        row,
        msg,
    };
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| ingest(0, e.to_string()))?;
    let header = reader.headers().map_err(|e| ingest(1, e.to_string()))?.clone();
    let cols: Vec<&str> = header.iter().collect();
    if cols.len() < REQUIRED.len() || cols[..REQUIRED.len()] != REQUIRED {
        let missing: Vec<&str> = REQUIRED
            .iter()
            .copied()
            .filter(|r| !cols.contains(r))
            .collect();
        let msg = if missing.is_empty() {
            format!("header must start with {}", REQUIRED.join(","))
        } else {
            format!("missing required columns: {}", missing.join(", "))
        };
        return Err(ingest(1, msg));
    }
    let feature_names: Vec<String> = cols[REQUIRED.len()..].iter().map(|s| s.to_string()).collect();
    let width = cols.len();

    let mut participant: Option<String> = None;
    let mut game: Option<String> = None;
    let mut times: Vec<f64> = Vec::new();
    let mut arousal = Vec::new();
    let mut flat = Vec::new();

    for (i, rec) in reader.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| ingest(row, e.to_string()))?;
        if rec.len() != width {
            return Err(ingest(
                row,
                format!("expected {width} fields, found {}", rec.len()),
            ));
        }
        let number = |j: usize| -> Result<f64> {
            let cell = &rec[j];
            if cell.is_empty() {
                return Err(ingest(row, format!("missing value in column {}", cols[j])));
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| ingest(row, format!("cannot parse {cell:?} in column {}", cols[j])))?;
            if !v.is_finite() {
                return Err(ingest(row, format!("non-finite value in column {}", cols[j])));
            }
            Ok(v)
        };

        let t = number(0)?;
        if let Some(&prev) = times.last() {
            if t == prev {
                return Err(ingest(row, format!("duplicate timestamp {t}")));
            }
            if t < prev {
                return Err(ingest(row, format!("timestamp {t} goes backwards from {prev}")));
            }
        }
        for (slot, j, name) in [(&mut participant, 1, "participant_id"), (&mut game, 2, "game_id")] {
            let cell = &rec[j];
            match slot {
                None => *slot = Some(cell.to_string()),
                Some(seen) if seen != cell => {
                    return Err(ingest(
                        row,
                        format!("{name} changes from {seen:?} to {cell:?} within one session"),
                    ))
                }
                _ => {}
            }
        }
        times.push(t);
        arousal.push(number(3)?);
        for j in REQUIRED.len()..width {
            flat.push(number(j)?);
        }
    }

    if times.is_empty() {
        return Err(ingest(1, "file has no data rows".into()));
    }
    let raw = Array2::from_shape_vec((times.len(), feature_names.len()), flat)
        .map_err(|e| Error::Shape(e.to_string()))?;
    let (grid, picks) = resample_1hz(&times);
    let features = raw.select(ndarray::Axis(0), &picks);
    let arousal = picks.iter().map(|&i| arousal[i]).collect();
    let trace = SessionTrace {
        participant_id: participant.unwrap_or_default(),
        game_id: game.unwrap_or_default(),
        timestamps: grid,
        features,
        feature_names,
        arousal,
    };
    trace.validate()?;
    Ok(trace)
}

/// Grid `t0, t0+1, ...` up to the last timestamp, and for each grid point
/// the index of the nearest raw sample.
fn resample_1hz(times: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let t0 = times[0];
    let span = times[times.len() - 1] - t0;
    let steps = (span + 1e-9).floor() as usize;
    let mut grid = Vec::with_capacity(steps + 1);
    let mut picks = Vec::with_capacity(steps + 1);
    let mut j = 0;
    for k in 0..=steps {
        let g = t0 + k as f64;
        while j + 1 < times.len() && (times[j + 1] - g).abs() < (times[j] - g).abs() {
            j += 1;
        }
        grid.push(g);
        picks.push(j);
    }
    (grid, picks)
}

/// Writes one CSV per session into `dir` as `<participant>_<game>.csv`.
pub fn write_sessions(sessions: &[SessionTrace], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::with_capacity(sessions.len());
    for s in sessions {
        s.validate()?;
        let path = dir.join(format!("{}_{}.csv", s.participant_id, s.game_id));
        let mut w = csv::Writer::from_path(&path)?;
        let mut header: Vec<String> = REQUIRED.iter().map(|s| s.to_string()).collect();
        header.extend(s.feature_names.iter().cloned());
        w.write_record(&header)?;
        for t in 0..s.len() {
            let mut rec = vec![
                s.timestamps[t].to_string(),
                s.participant_id.clone(),
                s.game_id.clone(),
                s.arousal[t].to_string(),
            ];
            rec.extend(s.features.row(t).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
