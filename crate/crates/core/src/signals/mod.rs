//! Domain types for multimodal recordings, session-directory ingestion,
//! Butterworth high-pass filtering, and resampling.

pub mod filter;
pub mod io;
pub mod resample;

use thiserror::Error;

pub use filter::{design_butterworth_highpass, design_butterworth_lowpass, filter_forward, FilterCoefficients};
pub use io::{load_recording, write_recording};
pub use resample::resample;

/// Task condition labels. `NoTask` marks rest intervals between task blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    NoTask,
    Task1,
    Task2,
    Task3,
    Task4,
}

impl Label {
    pub const ALL: [Label; 5] = [Label::NoTask, Label::Task1, Label::Task2, Label::Task3, Label::Task4];

    /// The four task labels, in index order.
    pub const TASKS: [Label; 4] = [Label::Task1, Label::Task2, Label::Task3, Label::Task4];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::NoTask => "NoTask",
            Label::Task1 => "Task1",
            Label::Task2 => "Task2",
            Label::Task3 => "Task3",
            Label::Task4 => "Task4",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        match s {
            "NoTask" => Some(Label::NoTask),
            "Task1" => Some(Label::Task1),
            "Task2" => Some(Label::Task2),
            "Task3" => Some(Label::Task3),
            "Task4" => Some(Label::Task4),
            _ => None,
        }
    }

    /// Multiclass index: Task1..Task4 map to 0..3, NoTask to 4.
    pub fn class_index(self) -> usize {
        match self {
            Label::Task1 => 0,
            Label::Task2 => 1,
            Label::Task3 => 2,
            Label::Task4 => 3,
            Label::NoTask => 4,
        }
    }

    pub fn from_class_index(i: usize) -> Option<Label> {
        match i {
            0 => Some(Label::Task1),
            1 => Some(Label::Task2),
            2 => Some(Label::Task3),
            3 => Some(Label::Task4),
            4 => Some(Label::NoTask),
            _ => None,
        }
    }

    pub fn is_task(self) -> bool {
        self != Label::NoTask
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SignalError {
    #[error("sampling rate must be positive, got {0}")]
    NonPositiveRate(f64),
    #[error("samples ({samples}) and missing_mask ({mask}) lengths differ")]
    MaskLengthMismatch { samples: usize, mask: usize },
    #[error("interval {index}: start {start_s} must satisfy 0 <= start < end ({end_s})")]
    BadInterval { index: usize, start_s: f64, end_s: f64 },
    #[error("intervals {first} and {second} overlap or are out of order")]
    OverlappingIntervals { first: usize, second: usize },
    #[error("{modality} channels disagree on rate or length")]
    InconsistentChannels { modality: &'static str },
    #[error("pupil must have exactly 2 channels, got {0}")]
    PupilChannelCount(usize),
}

/// One named channel: a uniformly sampled series plus a per-sample missing
/// mask. A sample whose mask bit is true carries no information; its stored
/// value is a placeholder and must not be read before imputation.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStream {
    pub name: String,
    pub fs_hz: f64,
    pub samples: Vec<f64>,
    pub missing_mask: Vec<bool>,
}

impl ChannelStream {
    /// Fully observed stream (mask all false).
    pub fn new(name: impl Into<String>, fs_hz: f64, samples: Vec<f64>) -> Self {
        let mask = vec![false; samples.len()];
        Self { name: name.into(), fs_hz, samples, missing_mask: mask }
    }

    pub fn with_mask(
        name: impl Into<String>,
        fs_hz: f64,
        samples: Vec<f64>,
        missing_mask: Vec<bool>,
    ) -> Result<Self, SignalError> {
        if fs_hz <= 0.0 {
            return Err(SignalError::NonPositiveRate(fs_hz));
        }
        if samples.len() != missing_mask.len() {
            return Err(SignalError::MaskLengthMismatch { samples: samples.len(), mask: missing_mask.len() });
        }
        Ok(Self { name: name.into(), fs_hz, samples, missing_mask })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn missing_count(&self) -> usize {
        self.missing_mask.iter().filter(|&&m| m).count()
    }

    pub fn has_missing(&self) -> bool {
        self.missing_mask.iter().any(|&m| m)
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.fs_hz
    }
}

/// One labeled interval of the session timeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledInterval {
    pub label: Label,
    pub start_s: f64,
    pub end_s: f64,
}

/// Boxcar of labeled intervals: non-overlapping, sorted by start time.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSchedule {
    intervals: Vec<LabeledInterval>,
}

impl EventSchedule {
    pub fn new(intervals: Vec<LabeledInterval>) -> Result<Self, SignalError> {
        for (i, iv) in intervals.iter().enumerate() {
            if !(iv.start_s >= 0.0 && iv.start_s < iv.end_s) {
                return Err(SignalError::BadInterval { index: i, start_s: iv.start_s, end_s: iv.end_s });
            }
        }
        for i in 1..intervals.len() {
            if intervals[i].start_s < intervals[i - 1].end_s {
                return Err(SignalError::OverlappingIntervals { first: i - 1, second: i });
            }
        }
        Ok(Self { intervals })
    }

    pub fn intervals(&self) -> &[LabeledInterval] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Label of the interval containing time `t_s`, if any.
    pub fn label_at(&self, t_s: f64) -> Option<Label> {
        self.intervals
            .iter()
            .find(|iv| iv.start_s <= t_s && t_s < iv.end_s)
            .map(|iv| iv.label)
    }

    /// The single interval fully containing the span [t0, t1), if any.
    pub fn containing(&self, t0_s: f64, t1_s: f64) -> Option<&LabeledInterval> {
        self.intervals.iter().find(|iv| iv.start_s <= t0_s && t1_s <= iv.end_s)
    }
}

/// One session: all channels of all modalities plus the event schedule.
///
/// Invariants (checked by [`MultimodalRecording::validate`]): all channels of
/// one modality share a sampling rate and length, and there are exactly two
/// pupil channels (left, right).
#[derive(Debug, Clone, PartialEq)]
pub struct MultimodalRecording {
    pub subject_id: String,
    pub eeg: Vec<ChannelStream>,
    pub fnirs_hbo2: Vec<ChannelStream>,
    pub fnirs_hbr: Vec<ChannelStream>,
    pub pupil: Vec<ChannelStream>,
    pub events: EventSchedule,
}

impl MultimodalRecording {
    pub fn validate(&self) -> Result<(), SignalError> {
        fn check(modality: &'static str, chans: &[ChannelStream]) -> Result<(), SignalError> {
            if let Some(first) = chans.first() {
                for c in chans {
                    if c.fs_hz != first.fs_hz || c.len() != first.len() {
                        return Err(SignalError::InconsistentChannels { modality });
                    }
                }
            }
            Ok(())
        }
        check("eeg", &self.eeg)?;
        check("fnirs_hbo2", &self.fnirs_hbo2)?;
        check("fnirs_hbr", &self.fnirs_hbr)?;
        check("pupil", &self.pupil)?;
        if self.pupil.len() != 2 {
            return Err(SignalError::PupilChannelCount(self.pupil.len()));
        }
        Ok(())
    }

    pub fn eeg_fs(&self) -> f64 {
        self.eeg.first().map_or(0.0, |c| c.fs_hz)
    }

    pub fn fnirs_fs(&self) -> f64 {
        self.fnirs_hbo2.first().map_or(0.0, |c| c.fs_hz)
    }

    pub fn pupil_fs(&self) -> f64 {
        self.pupil.first().map_or(0.0, |c| c.fs_hz)
    }
}
