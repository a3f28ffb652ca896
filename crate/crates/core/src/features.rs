//! Sliding-window segmentation and feature assembly.
//!
//! A preprocessed recording (filtered, imputed, resampled, standardized) is
//! cut into fixed-length windows inside each labeled schedule interval. Each
//! window becomes one 848-value feature vector: the EEG channel mean over
//! 400 samples, the fNIRS channel mean over the same 400 samples, and the
//! eye-averaged pupil trace over the matching 0.8 s at 60 Hz (48 samples).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::impute::{impute_pupil, FcmConfig, ImputeError};
use crate::rng::seeded_rng;
use crate::signals::filter::FilterError;
use crate::signals::resample::ResampleError;
use crate::signals::{
    design_butterworth_highpass, filter_forward, resample, Label, MultimodalRecording,
};
use crate::util::{mean, pop_std};

/// Samples contributed by the pupil block of each feature vector.
pub const PUPIL_BLOCK_LEN: usize = 48;
/// Pupil rate the pipeline resamples to before segmentation.
pub const PUPIL_FEATURE_RATE_HZ: f64 = 60.0;
/// Total feature vector length: 400 EEG + 400 fNIRS + 48 pupil.
pub const FEATURE_LEN: usize = 848;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("invalid window spec: {0}")]
    InvalidSpec(String),
    #[error("labeled region '{label}' has {samples} samples, shorter than the {window}-sample window")]
    RegionTooShort { label: Label, samples: usize, window: usize },
    #[error("label {0} has no windows; cannot stratify")]
    ClassEmpty(Label),
    #[error("{0}")]
    Malformed(String),
    #[error(transparent)]
    Impute(#[from] ImputeError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Resample(#[from] ResampleError),
}

/// How a window inside a labeled region receives its label. Because windows
/// that straddle region boundaries are dropped, every sample in a kept
/// window shares one region label and both rules agree; the knob exists so
/// a future overlap-tolerant policy has a place to live.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelRule {
    Majority,
    Center,
}

#[derive(Debug, Clone)]
pub struct WindowSpec {
    pub window_samples: usize,
    pub stride_samples: usize,
    pub label_rule: LabelRule,
    /// Feed HbR instead of HbO2 into the fNIRS block.
    pub use_hbr: bool,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self { window_samples: 400, stride_samples: 200, label_rule: LabelRule::Majority, use_hbr: false }
    }
}

impl WindowSpec {
    fn validate(&self) -> Result<(), FeatureError> {
        if self.stride_samples == 0 || self.stride_samples > self.window_samples {
            return Err(FeatureError::InvalidSpec(format!(
                "stride {} must satisfy 0 < stride <= window {}",
                self.stride_samples, self.window_samples
            )));
        }
        Ok(())
    }
}

/// Task-present / task-absent label for the detector stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryLabel {
    NoTask,
    Cwl,
}

impl BinaryLabel {
    pub fn class_index(self) -> usize {
        match self {
            BinaryLabel::NoTask => 0,
            BinaryLabel::Cwl => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BinaryLabel::NoTask => "NoTask",
            BinaryLabel::Cwl => "CWL",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "NoTask" => Some(BinaryLabel::NoTask),
            "CWL" => Some(BinaryLabel::Cwl),
            _ => None,
        }
    }
}

impl From<Label> for BinaryLabel {
    fn from(l: Label) -> Self {
        if l.is_task() {
            BinaryLabel::Cwl
        } else {
            BinaryLabel::NoTask
        }
    }
}

#[derive(Debug, Clone)]
pub struct FeatureWindow {
    pub vector: Vec<f64>,
    pub binary_label: BinaryLabel,
    pub task_label: Label,
    pub t_start_s: f64,
    pub subject_id: String,
}

/// Standardize every channel to mean 0, population std 1 over the session.
/// Constant channels become all zeros. Missing samples must already be
/// imputed; masks are carried through untouched.
pub fn zscore_per_channel(rec: &MultimodalRecording) -> MultimodalRecording {
    let mut out = rec.clone();
    let groups: [&mut Vec<crate::signals::ChannelStream>; 4] =
        [&mut out.eeg, &mut out.fnirs_hbo2, &mut out.fnirs_hbr, &mut out.pupil];
    for group in groups {
        for ch in group.iter_mut() {
            debug_assert!(!ch.has_missing(), "zscore requires imputed input");
            let m = mean(&ch.samples);
            let s = pop_std(&ch.samples);
            if s == 0.0 {
                ch.samples.iter_mut().for_each(|v| *v = 0.0);
            } else {
                ch.samples.iter_mut().for_each(|v| *v = (*v - m) / s);
            }
        }
    }
    out
}

/// Cut each labeled schedule interval into overlapping windows and assemble
/// feature vectors. Expects EEG and fNIRS at 500 Hz and pupil at 60 Hz, all
/// imputed. Every region must be at least one window long.
pub fn segment(rec: &MultimodalRecording, spec: &WindowSpec) -> Result<Vec<FeatureWindow>, FeatureError> {
    spec.validate()?;
    let eeg_fs = rec.eeg_fs();
    let pupil_fs = rec.pupil_fs();
    let w = spec.window_samples;
    let s = spec.stride_samples;
    let eeg_len = rec.eeg[0].len();
    let pupil_len = rec.pupil[0].len();
    let pupil_block = ((w as f64 / eeg_fs) * pupil_fs).round() as usize;

    let fnirs = if spec.use_hbr { &rec.fnirs_hbr } else { &rec.fnirs_hbo2 };

    let mut out = Vec::new();
    for interval in rec.events.intervals() {
        let r0 = (interval.start_s * eeg_fs).round() as usize;
        let r1 = ((interval.end_s * eeg_fs).round() as usize).min(eeg_len);
        let n = r1.saturating_sub(r0);
        if n < w {
            return Err(FeatureError::RegionTooShort { label: interval.label, samples: n, window: w });
        }
        let count = (n - w) / s + 1;
        for k in 0..count {
            let start = r0 + k * s;
            let t_start_s = start as f64 / eeg_fs;
            let p0 = (t_start_s * pupil_fs).round() as usize;
            if p0 + pupil_block > pupil_len {
                continue; // rounding ran past the pupil stream at the session tail
            }

            let mut vector = Vec::with_capacity(2 * w + pupil_block);
            channel_mean_into(&rec.eeg, start, w, &mut vector);
            channel_mean_into(fnirs, start, w, &mut vector);
            channel_mean_into(&rec.pupil, p0, pupil_block, &mut vector);
            debug_assert_eq!(vector.len(), 2 * w + pupil_block); // 848 for the default spec

            let task_label = interval.label;
            out.push(FeatureWindow {
                vector,
                binary_label: task_label.into(),
                task_label,
                t_start_s,
                subject_id: rec.subject_id.clone(),
            });
        }
    }
    Ok(out)
}

fn channel_mean_into(channels: &[crate::signals::ChannelStream], start: usize, len: usize, out: &mut Vec<f64>) {
    let k = channels.len() as f64;
    for t in start..start + len {
        let mut acc = 0.0;
        for ch in channels {
            acc += ch.samples[t];
        }
        out.push(acc / k);
    }
}

/// Stratified train/test split by task label, deterministic under `seed`,
/// returned as indices into `windows`. Every label must be represented;
/// strata with at least two windows keep at least one window on each side.
pub fn split_indices(
    windows: &[FeatureWindow],
    train_frac: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), FeatureError> {
    assert!(train_frac > 0.0 && train_frac < 1.0, "train_frac must be in (0,1)");
    let mut rng = seeded_rng(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for &label in Label::ALL.iter() {
        let mut idx: Vec<usize> =
            (0..windows.len()).filter(|&i| windows[i].task_label == label).collect();
        if idx.is_empty() {
            return Err(FeatureError::ClassEmpty(label));
        }
        idx.shuffle(&mut rng);
        let n = idx.len();
        let mut n_train = (n as f64 * train_frac).round() as usize;
        n_train = n_train.max(1);
        if n >= 2 {
            n_train = n_train.min(n - 1);
        }
        for (pos, &i) in idx.iter().enumerate() {
            if pos < n_train {
                train.push(i);
            } else {
                test.push(i);
            }
        }
    }
    Ok((train, test))
}

/// `split_indices` with the selected windows cloned out.
pub fn split_train_test(
    windows: &[FeatureWindow],
    train_frac: f64,
    seed: u64,
) -> Result<(Vec<FeatureWindow>, Vec<FeatureWindow>), FeatureError> {
    let (train, test) = split_indices(windows, train_frac, seed)?;
    Ok((
        train.iter().map(|&i| windows[i].clone()).collect(),
        test.iter().map(|&i| windows[i].clone()).collect(),
    ))
}

/// Knobs of the fixed preprocessing chain. Defaults match the recording
/// contract: 5th-order 0.5 Hz high-pass, neuro channels to 500 Hz, pupil
/// to 60 Hz, default imputation and windowing.
#[derive(Debug, Clone)]
pub struct PreprocessConfig {
    pub highpass_order: usize,
    pub highpass_cutoff_hz: f64,
    pub neuro_fs_out: f64,
    pub pupil_fs_out: f64,
    pub fcm: FcmConfig,
    pub window: WindowSpec,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            highpass_order: 5,
            highpass_cutoff_hz: 0.5,
            neuro_fs_out: 500.0,
            pupil_fs_out: 60.0,
            fcm: FcmConfig::default(),
            window: WindowSpec::default(),
        }
    }
}

/// The full chain in its fixed order: impute pupil gaps, high-pass the
/// neuro channels, resample, z-score per channel, segment into windows.
/// Pupil is not high-passed; its baseline level is part of the signal.
pub fn preprocess_recording(
    rec: &MultimodalRecording,
    cfg: &PreprocessConfig,
) -> Result<Vec<FeatureWindow>, FeatureError> {
    let mut rec = rec.clone();
    for p in &mut rec.pupil {
        *p = impute_pupil(p, &cfg.fcm)?;
    }
    let hp_eeg = design_butterworth_highpass(cfg.highpass_order, cfg.highpass_cutoff_hz, rec.eeg_fs())?;
    for c in &mut rec.eeg {
        *c = filter_forward(&hp_eeg, c)?;
        *c = resample(c, cfg.neuro_fs_out)?;
    }
    let hp_fnirs = design_butterworth_highpass(cfg.highpass_order, cfg.highpass_cutoff_hz, rec.fnirs_fs())?;
    for c in rec.fnirs_hbo2.iter_mut().chain(rec.fnirs_hbr.iter_mut()) {
        *c = filter_forward(&hp_fnirs, c)?;
        *c = resample(c, cfg.neuro_fs_out)?;
    }
    for p in &mut rec.pupil {
        *p = resample(p, cfg.pupil_fs_out)?;
    }
    let rec = zscore_per_channel(&rec);
    segment(&rec, &cfg.window)
}

/// Write windows as CSV: subject_id, t_start_s, task_label, binary_label, v0..v847.
pub fn write_features_csv(path: &Path, windows: &[FeatureWindow]) -> std::io::Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    write!(f, "subject_id,t_start_s,task_label,binary_label")?;
    for j in 0..FEATURE_LEN {
        write!(f, ",v{j}")?;
    }
    writeln!(f)?;
    for w in windows {
        write!(f, "{},{:.6},{},{}", w.subject_id, w.t_start_s, w.task_label, w.binary_label.as_str())?;
        for v in &w.vector {
            write!(f, ",{v:.6}")?;
        }
        writeln!(f)?;
    }
    f.flush()
}

/// Read back a `write_features_csv` file.
pub fn read_features_csv(path: &Path) -> Result<Vec<FeatureWindow>, FeatureError> {
    let f = File::open(path).map_err(|e| FeatureError::Malformed(format!("{}: {e}", path.display())))?;
    let mut lines = BufReader::new(f).lines();
    let header = lines
        .next()
        .ok_or_else(|| FeatureError::Malformed("empty features file".into()))?
        .map_err(|e| FeatureError::Malformed(e.to_string()))?;
    let expected_cols = 4 + FEATURE_LEN;
    if header.split(',').count() != expected_cols {
        return Err(FeatureError::Malformed("unexpected features header".into()));
    }
    let mut out = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.map_err(|e| FeatureError::Malformed(e.to_string()))?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected_cols {
            return Err(FeatureError::Malformed(format!("row {}: {} fields", lineno + 2, fields.len())));
        }
        let task_label = Label::parse(fields[2])
            .ok_or_else(|| FeatureError::Malformed(format!("row {}: bad label {}", lineno + 2, fields[2])))?;
        let binary_label = BinaryLabel::parse(fields[3])
            .ok_or_else(|| FeatureError::Malformed(format!("row {}: bad binary label", lineno + 2)))?;
        let t_start_s: f64 = fields[1]
            .parse()
            .map_err(|_| FeatureError::Malformed(format!("row {}: bad t_start_s", lineno + 2)))?;
        let mut vector = Vec::with_capacity(FEATURE_LEN);
        for v in &fields[4..] {
            vector.push(
                v.parse()
                    .map_err(|_| FeatureError::Malformed(format!("row {}: bad value", lineno + 2)))?,
            );
        }
        out.push(FeatureWindow { vector, binary_label, task_label, t_start_s, subject_id: fields[0].to_string() });
    }
    Ok(out)
}
