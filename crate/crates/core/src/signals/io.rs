//! Session-directory ingestion and emission.
//!
//! Layout: `manifest.txt` (key=value lines: subject_id, eeg_fs, fnirs_fs,
//! pupil_fs, eeg_channels, fnirs_channels, pupil_channels), one CSV per
//! modality (`eeg.csv`, `fnirs_hbo2.csv`, `fnirs_hbr.csv`, `pupil.csv`) with
//! a leading monotonically increasing `t_s` column and one column per
//! channel, and `events.csv` (label,start_s,end_s). Empty CSV cells mark
//! missing samples. All files are UTF-8 with LF line endings and `.` decimal
//! separators.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{ChannelStream, EventSchedule, Label, LabeledInterval, MultimodalRecording, SignalError};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("{file}:{row}: malformed CSV: {reason}")]
    MalformedCsv { file: String, row: usize, reason: String },
    #[error("{file}: manifest rate {manifest_hz} Hz inconsistent with time column ({implied_hz:.3} Hz implied)")]
    InconsistentRate { file: String, manifest_hz: f64, implied_hz: f64 },
    #[error("manifest: {0}")]
    BadManifest(String),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn read_to_string(path: &Path) -> Result<String, IoError> {
    if !path.exists() {
        return Err(IoError::MissingFile(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|source| IoError::Io { path: path.to_path_buf(), source })
}

fn parse_manifest(text: &str) -> Result<BTreeMap<String, String>, IoError> {
    let mut map = BTreeMap::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| IoError::BadManifest(format!("line without '=': {line}")))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn manifest_f64(map: &BTreeMap<String, String>, key: &str) -> Result<f64, IoError> {
    map.get(key)
        .ok_or_else(|| IoError::BadManifest(format!("missing key '{key}'")))?
        .parse()
        .map_err(|_| IoError::BadManifest(format!("key '{key}' is not a number")))
}

fn manifest_usize(map: &BTreeMap<String, String>, key: &str) -> Result<usize, IoError> {
    map.get(key)
        .ok_or_else(|| IoError::BadManifest(format!("missing key '{key}'")))?
        .parse()
        .map_err(|_| IoError::BadManifest(format!("key '{key}' is not an integer")))
}

struct ModalityCsv {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    masks: Vec<Vec<bool>>,
    t_first: f64,
    t_last: f64,
    rows: usize,
}

/// Parse one modality CSV: header `t_s,<ch>,...`, then one row per sample.
fn read_modality_csv(path: &Path) -> Result<ModalityCsv, IoError> {
    let file = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    let text = read_to_string(path)?;
    let mut lines = text.lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| IoError::MalformedCsv { file: file.clone(), row: 1, reason: "empty file".into() })?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.first() != Some(&"t_s") {
        return Err(IoError::MalformedCsv { file, row: 1, reason: "first column must be t_s".into() });
    }
    let names: Vec<String> = cols[1..].iter().map(|s| s.to_string()).collect();
    if names.is_empty() {
        return Err(IoError::MalformedCsv { file, row: 1, reason: "no channel columns".into() });
    }

    let n_ch = names.len();
    let mut columns = vec![Vec::new(); n_ch];
    let mut masks = vec![Vec::new(); n_ch];
    let mut t_prev = f64::NEG_INFINITY;
    let mut t_first = 0.0;
    let mut rows = 0usize;

    for (idx, line) in lines {
        let row = idx + 1; // 1-based, counting the header
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != n_ch + 1 {
            return Err(IoError::MalformedCsv {
                file,
                row,
                reason: format!("expected {} cells, got {}", n_ch + 1, cells.len()),
            });
        }
        let t: f64 = cells[0].parse().map_err(|_| IoError::MalformedCsv {
            file: file.clone(),
            row,
            reason: format!("bad t_s value '{}'", cells[0]),
        })?;
        if t <= t_prev {
            return Err(IoError::MalformedCsv {
                file,
                row,
                reason: "t_s must be strictly increasing".into(),
            });
        }
        if rows == 0 {
            t_first = t;
        }
        t_prev = t;
        for (c, cell) in cells[1..].iter().enumerate() {
            if cell.is_empty() {
                columns[c].push(0.0);
                masks[c].push(true);
            } else {
                let v: f64 = cell.parse().map_err(|_| IoError::MalformedCsv {
                    file: file.clone(),
                    row,
                    reason: format!("bad value '{cell}' in column {}", names[c]),
                })?;
                columns[c].push(v);
                masks[c].push(false);
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(IoError::MalformedCsv { file, row: 2, reason: "no data rows".into() });
    }
    Ok(ModalityCsv { names, columns, masks, t_first, t_last: t_prev, rows })
}

fn csv_to_streams(csv: ModalityCsv, fs_hz: f64, file: &str) -> Result<Vec<ChannelStream>, IoError> {
    // The time column must agree with the manifest rate to within 1%.
    if csv.rows > 1 {
        let implied = (csv.rows - 1) as f64 / (csv.t_last - csv.t_first);
        if ((implied - fs_hz) / fs_hz).abs() > 0.01 {
            return Err(IoError::InconsistentRate { file: file.to_string(), manifest_hz: fs_hz, implied_hz: implied });
        }
    }
    csv.names
        .iter()
        .zip(csv.columns.into_iter().zip(csv.masks))
        .map(|(name, (samples, mask))| {
            ChannelStream::with_mask(name.clone(), fs_hz, samples, mask).map_err(IoError::from)
        })
        .collect()
}

fn read_events(path: &Path) -> Result<EventSchedule, IoError> {
    let file = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    let text = read_to_string(path)?;
    let mut intervals = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let row = idx + 1;
        if idx == 0 {
            if line != "label,start_s,end_s" {
                return Err(IoError::MalformedCsv { file, row, reason: "expected header label,start_s,end_s".into() });
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 3 {
            return Err(IoError::MalformedCsv { file, row, reason: format!("expected 3 cells, got {}", cells.len()) });
        }
        let label = Label::parse(cells[0]).ok_or_else(|| IoError::MalformedCsv {
            file: file.clone(),
            row,
            reason: format!("unknown label '{}'", cells[0]),
        })?;
        let parse = |cell: &str| -> Result<f64, IoError> {
            cell.parse().map_err(|_| IoError::MalformedCsv {
                file: file.clone(),
                row,
                reason: format!("bad number '{cell}'"),
            })
        };
        intervals.push(LabeledInterval { label, start_s: parse(cells[1])?, end_s: parse(cells[2])? });
    }
    Ok(EventSchedule::new(intervals)?)
}

/// Load a session directory into a validated recording. Empty CSV cells set
/// the corresponding missing_mask bits.
pub fn load_recording(session_dir: &Path) -> Result<MultimodalRecording, IoError> {
    let manifest = parse_manifest(&read_to_string(&session_dir.join("manifest.txt"))?)?;
    let subject_id = manifest
        .get("subject_id")
        .ok_or_else(|| IoError::BadManifest("missing key 'subject_id'".into()))?
        .clone();
    let eeg_fs = manifest_f64(&manifest, "eeg_fs")?;
    let fnirs_fs = manifest_f64(&manifest, "fnirs_fs")?;
    let pupil_fs = manifest_f64(&manifest, "pupil_fs")?;
    let eeg_n = manifest_usize(&manifest, "eeg_channels")?;
    let fnirs_n = manifest_usize(&manifest, "fnirs_channels")?;
    let pupil_n = manifest_usize(&manifest, "pupil_channels")?;

    let load = |file: &str, fs: f64, expect_n: usize| -> Result<Vec<ChannelStream>, IoError> {
        let path = session_dir.join(file);
        let csv = read_modality_csv(&path)?;
        if csv.names.len() != expect_n {
            return Err(IoError::MalformedCsv {
                file: file.to_string(),
                row: 1,
                reason: format!("manifest declares {} channels, file has {}", expect_n, csv.names.len()),
            });
        }
        csv_to_streams(csv, fs, file)
    };

    let rec = MultimodalRecording {
        subject_id,
        eeg: load("eeg.csv", eeg_fs, eeg_n)?,
        fnirs_hbo2: load("fnirs_hbo2.csv", fnirs_fs, fnirs_n)?,
        fnirs_hbr: load("fnirs_hbr.csv", fnirs_fs, fnirs_n)?,
        pupil: load("pupil.csv", pupil_fs, pupil_n)?,
        events: read_events(&session_dir.join("events.csv"))?,
    };
    rec.validate()?;
    Ok(rec)
}

fn write_file(path: &Path, contents: &str) -> Result<(), IoError> {
    fs::write(path, contents).map_err(|source| IoError::Io { path: path.to_path_buf(), source })
}

fn render_modality_csv(channels: &[ChannelStream]) -> String {
    let fs = channels[0].fs_hz;
    let n = channels[0].len();
    let mut out = String::from("t_s");
    for c in channels {
        out.push(',');
        out.push_str(&c.name);
    }
    out.push('\n');
    for i in 0..n {
        let _ = write!(out, "{:.6}", i as f64 / fs);
        for c in channels {
            out.push(',');
            if c.missing_mask[i] {
                // empty cell = missing
            } else {
                let _ = write!(out, "{:.6}", c.samples[i]);
            }
        }
        out.push('\n');
    }
    out
}

/// Write a recording as a session directory in the exact format
/// [`load_recording`] reads. Deterministic: identical recordings produce
/// identical bytes.
pub fn write_recording(session_dir: &Path, rec: &MultimodalRecording) -> Result<(), IoError> {
    rec.validate()?;
    fs::create_dir_all(session_dir)
        .map_err(|source| IoError::Io { path: session_dir.to_path_buf(), source })?;

    let manifest = format!(
        "subject_id={}\neeg_fs={}\nfnirs_fs={}\npupil_fs={}\neeg_channels={}\nfnirs_channels={}\npupil_channels={}\n",
        rec.subject_id,
        rec.eeg_fs(),
        rec.fnirs_fs(),
        rec.pupil_fs(),
        rec.eeg.len(),
        rec.fnirs_hbo2.len(),
        rec.pupil.len(),
    );
    write_file(&session_dir.join("manifest.txt"), &manifest)?;
    write_file(&session_dir.join("eeg.csv"), &render_modality_csv(&rec.eeg))?;
    write_file(&session_dir.join("fnirs_hbo2.csv"), &render_modality_csv(&rec.fnirs_hbo2))?;
    write_file(&session_dir.join("fnirs_hbr.csv"), &render_modality_csv(&rec.fnirs_hbr))?;
    write_file(&session_dir.join("pupil.csv"), &render_modality_csv(&rec.pupil))?;

    let mut events = String::from("label,start_s,end_s\n");
    for iv in rec.events.intervals() {
        let _ = writeln!(events, "{},{:.6},{:.6}", iv.label, iv.start_s, iv.end_s);
    }
    write_file(&session_dir.join("events.csv"), &events)?;
    Ok(())
}
