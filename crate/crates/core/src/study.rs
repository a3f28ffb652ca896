//! Study instruments surrounding the classifier: pairwise-weighted
//! subjective workload scoring and task-onset-locked hemodynamic epoch
//! averaging with summary statistics.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::signals::{Label, MultimodalRecording};
use crate::util::mean;

/// The six rated workload dimensions, in rating-column order.
pub const DIMENSIONS: [&str; 6] = [
    "mental_demand",
    "physical_demand",
    "temporal_demand",
    "task_complexity",
    "situational_stress",
    "distractions",
];

/// Number of unordered dimension pairs, C(6, 2).
pub const N_PAIRS: usize = 15;

pub const RATING_MAX: f64 = 20.0;

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("pair ({0}, {1}) appears more than once")]
    DuplicatePair(usize, usize),
    #[error("pair ({0}, {1}) is missing")]
    MissingPair(usize, usize),
    #[error("rating {value} for {} outside [0, {RATING_MAX}]", DIMENSIONS[*dim])]
    RatingOutOfRange { dim: usize, value: f64 },
    #[error("malformed pair entry: {0}")]
    BadPair(String),
    #[error("task {0} has no usable epochs")]
    NoEpochs(Label),
    #[error("invalid epoch window: {0}")]
    InvalidWindow(String),
    #[error("row {row}: {source}")]
    InRow {
        row: usize,
        #[source]
        source: Box<StudyError>,
    },
    #[error("{0}")]
    Malformed(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl StudyError {
    fn at_row(self, row: usize) -> StudyError {
        StudyError::InRow { row, source: Box::new(self) }
    }
}

/// One pairwise comparison: dimension `winner` (either `a` or `b`) was
/// judged the larger workload contributor of the unordered pair `{a, b}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairChoice {
    pub a: usize,
    pub b: usize,
    pub winner: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurgTlxResponse {
    pub ratings: [f64; 6],
    pub pairwise: Vec<PairChoice>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurgTlxScore {
    /// Pairs won per dimension; always sums to 15.
    pub weights: [u32; 6],
    pub weighted_score: f64,
    pub raw_mean: f64,
}

/// The canonical pair enumeration used by the CSV format.
pub fn canonical_pairs() -> [(usize, usize); N_PAIRS] {
    let mut pairs = [(0, 0); N_PAIRS];
    let mut k = 0;
    for a in 0..6 {
        for b in a + 1..6 {
            pairs[k] = (a, b);
            k += 1;
        }
    }
    pairs
}

/// Score one questionnaire response: each dimension's weight is the number
/// of pairwise comparisons it won, so the weights always sum to 15, and the
/// weighted score is the weight-averaged rating.
pub fn surgtlx_score(r: &SurgTlxResponse) -> Result<SurgTlxScore, StudyError> {
    for (dim, &value) in r.ratings.iter().enumerate() {
        if !(value >= 0.0 && value <= RATING_MAX) {
            return Err(StudyError::RatingOutOfRange { dim, value });
        }
    }
    let mut seen = [[false; 6]; 6];
    let mut weights = [0u32; 6];
    for p in &r.pairwise {
        if p.a >= 6 || p.b >= 6 || p.a == p.b {
            return Err(StudyError::BadPair(format!("({}, {})", p.a, p.b)));
        }
        if p.winner != p.a && p.winner != p.b {
            return Err(StudyError::BadPair(format!(
                "winner {} is not in pair ({}, {})",
                p.winner, p.a, p.b
            )));
        }
        let (lo, hi) = (p.a.min(p.b), p.a.max(p.b));
        if seen[lo][hi] {
            return Err(StudyError::DuplicatePair(lo, hi));
        }
        seen[lo][hi] = true;
        weights[p.winner] += 1;
    }
    for (a, b) in canonical_pairs() {
        if !seen[a][b] {
            return Err(StudyError::MissingPair(a, b));
        }
    }
    let weighted_score =
        r.ratings.iter().zip(&weights).map(|(r, &w)| r * f64::from(w)).sum::<f64>() / N_PAIRS as f64;
    Ok(SurgTlxScore { weights, weighted_score, raw_mean: mean(&r.ratings) })
}

/// One participant-task questionnaire row.
#[derive(Debug, Clone, PartialEq)]
pub struct SurgTlxRecord {
    pub participant: String,
    pub task: Label,
    pub response: SurgTlxResponse,
}

/// Read `surgtlx.csv`: header then one row per (participant, task) with six
/// ratings and fifteen `a>b` pair cells (dimension `a` beat dimension `b`).
pub fn read_surgtlx_csv(path: &Path) -> Result<Vec<SurgTlxRecord>, StudyError> {
    let io = |source| StudyError::Io { path: path.to_path_buf(), source };
    let text = std::fs::read_to_string(path).map_err(io)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let row = i + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 2 + 6 + N_PAIRS {
            return Err(StudyError::Malformed(format!(
                "{} fields; expected {}",
                fields.len(),
                2 + 6 + N_PAIRS
            ))
            .at_row(row));
        }
        let task = Label::parse(fields[1])
            .ok_or_else(|| StudyError::Malformed(format!("unknown task '{}'", fields[1])).at_row(row))?;
        let mut ratings = [0.0; 6];
        for (d, slot) in ratings.iter_mut().enumerate() {
            *slot = fields[2 + d]
                .parse()
                .map_err(|_| StudyError::Malformed(format!("bad rating '{}'", fields[2 + d])).at_row(row))?;
        }
        let mut pairwise = Vec::with_capacity(N_PAIRS);
        for cell in &fields[8..] {
            let (w, l) = cell
                .split_once('>')
                .ok_or_else(|| StudyError::BadPair(format!("'{cell}' (want 'a>b')")).at_row(row))?;
            let parse = |s: &str| {
                s.parse::<usize>()
                    .ok()
                    .filter(|&d| d < 6)
                    .ok_or_else(|| StudyError::BadPair(format!("'{cell}'")).at_row(row))
            };
            let winner = parse(w)?;
            let loser = parse(l)?;
            pairwise.push(PairChoice { a: winner, b: loser, winner });
        }
        let response = SurgTlxResponse { ratings, pairwise };
        // surface scoring-level problems (duplicates, ranges) with the row
        surgtlx_score(&response).map_err(|e| e.at_row(row))?;
        rows.push(SurgTlxRecord { participant: fields[0].to_string(), task, response });
    }
    Ok(rows)
}

/// Task-onset-locked averages of the hemoglobin channels: one baseline-
/// corrected mean time course per (task, channel, modality).
#[derive(Debug, Clone)]
pub struct EpochAverage {
    pub pre_s: f64,
    pub post_s: f64,
    pub fs_hz: f64,
    /// `hbo2[task_index][channel]` with `task_index` = `Label::class_index`
    /// of Task1..Task4; each course has `n_samples` values.
    pub hbo2: Vec<Vec<Vec<f64>>>,
    pub hbr: Vec<Vec<Vec<f64>>>,
    pub n_samples: usize,
    /// Sample offset of task onset inside each course (= round(pre_s·fs)).
    pub onset_sample: usize,
    pub epochs_used: [usize; 4],
    pub epochs_dropped: [usize; 4],
}

/// Cut `[onset - pre_s, onset + post_s)` segments around every task-block
/// onset, subtract each segment's pre-onset mean, and average per task and
/// channel. Epochs that would cross the recording bounds are dropped and
/// counted.
pub fn epoch_average(rec: &MultimodalRecording, pre_s: f64, post_s: f64) -> Result<EpochAverage, StudyError> {
    if !(pre_s >= 0.0 && post_s >= 0.0) || !(pre_s + post_s > 0.0) {
        return Err(StudyError::InvalidWindow(format!(
            "pre {pre_s}s / post {post_s}s must be nonnegative and span > 0"
        )));
    }
    if rec.events.intervals().is_empty() {
        return Err(StudyError::InvalidWindow("recording has no labeled events".into()));
    }
    let fs = rec.fnirs_fs();
    let pre_n = (pre_s * fs).round() as usize;
    let post_n = (post_s * fs).round() as usize;
    let n_samples = pre_n + post_n;
    let n_ch = rec.fnirs_hbo2.len();
    let len = rec.fnirs_hbo2[0].len();

    let mut out = EpochAverage {
        pre_s,
        post_s,
        fs_hz: fs,
        hbo2: vec![vec![vec![0.0; n_samples]; n_ch]; 4],
        hbr: vec![vec![vec![0.0; n_samples]; n_ch]; 4],
        n_samples,
        onset_sample: pre_n,
        epochs_used: [0; 4],
        epochs_dropped: [0; 4],
    };

    for iv in rec.events.intervals() {
        if !iv.label.is_task() {
            continue;
        }
        let t = iv.label.class_index();
        let onset = (iv.start_s * fs).round() as i64;
        let start = onset - pre_n as i64;
        if start < 0 || (start as usize) + n_samples > len {
            out.epochs_dropped[t] += 1;
            continue;
        }
        let start = start as usize;
        for (channels, acc) in [(&rec.fnirs_hbo2, &mut out.hbo2), (&rec.fnirs_hbr, &mut out.hbr)] {
            for (c, ch) in channels.iter().enumerate() {
                let seg = &ch.samples[start..start + n_samples];
                let baseline = if pre_n > 0 { mean(&seg[..pre_n]) } else { 0.0 };
                for (dst, &v) in acc[t][c].iter_mut().zip(seg) {
                    *dst += v - baseline;
                }
            }
        }
        out.epochs_used[t] += 1;
    }

    for t in 0..4 {
        if out.epochs_used[t] == 0 {
            return Err(StudyError::NoEpochs(Label::from_class_index(t).unwrap()));
        }
        let k = out.epochs_used[t] as f64;
        for courses in [&mut out.hbo2[t], &mut out.hbr[t]] {
            for course in courses.iter_mut() {
                for v in course.iter_mut() {
                    *v /= k;
                }
            }
        }
    }
    Ok(out)
}

impl EpochAverage {
    /// Within-recording channel mean of one task's course.
    pub fn channel_mean(&self, modality: Modality, task_index: usize) -> Vec<f64> {
        let courses = match modality {
            Modality::HbO2 => &self.hbo2[task_index],
            Modality::HbR => &self.hbr[task_index],
        };
        let mut out = vec![0.0; self.n_samples];
        for course in courses {
            for (o, v) in out.iter_mut().zip(course) {
                *o += v;
            }
        }
        for o in &mut out {
            *o /= courses.len() as f64;
        }
        out
    }
}

/// Element-wise average of epoch averages across recordings, keeping the
/// channel dimension. Recordings are weighted equally; epoch counts
/// accumulate. All inputs must share window, rate and channel counts.
pub fn average_epoch_averages(eas: &[EpochAverage]) -> Result<EpochAverage, StudyError> {
    let first = eas.first().ok_or_else(|| StudyError::InvalidWindow("no recordings".into()))?;
    let mut out = first.clone();
    for ea in &eas[1..] {
        let same_shape = ea.n_samples == out.n_samples
            && ea.onset_sample == out.onset_sample
            && ea.fs_hz == out.fs_hz
            && ea.hbo2[0].len() == out.hbo2[0].len();
        if !same_shape {
            return Err(StudyError::InvalidWindow("recordings disagree on epoch shape".into()));
        }
        for t in 0..4 {
            for (acc, course) in [(&mut out.hbo2[t], &ea.hbo2[t]), (&mut out.hbr[t], &ea.hbr[t])] {
                for (a, c) in acc.iter_mut().zip(course) {
                    for (x, y) in a.iter_mut().zip(c) {
                        *x += y;
                    }
                }
            }
            out.epochs_used[t] += ea.epochs_used[t];
            out.epochs_dropped[t] += ea.epochs_dropped[t];
        }
    }
    let k = eas.len() as f64;
    for t in 0..4 {
        for courses in [&mut out.hbo2[t], &mut out.hbr[t]] {
            for course in courses.iter_mut() {
                for v in course.iter_mut() {
                    *v /= k;
                }
            }
        }
    }
    Ok(out)
}

/// Channel-mean courses averaged across recordings: channels are combined
/// within each recording first, then recordings are weighted equally.
pub fn grand_average(eas: &[EpochAverage], modality: Modality) -> Result<Vec<Vec<f64>>, StudyError> {
    let first = eas.first().ok_or_else(|| StudyError::InvalidWindow("no recordings".into()))?;
    let n = first.n_samples;
    if eas.iter().any(|ea| ea.n_samples != n) {
        return Err(StudyError::InvalidWindow("epoch windows differ across recordings".into()));
    }
    let mut out = vec![vec![0.0; n]; 4];
    for ea in eas {
        for (t, course) in out.iter_mut().enumerate() {
            for (o, v) in course.iter_mut().zip(ea.channel_mean(modality, t)) {
                *o += v;
            }
        }
    }
    for course in &mut out {
        for v in course.iter_mut() {
            *v /= eas.len() as f64;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    HbO2,
    HbR,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::HbO2 => "HbO2",
            Modality::HbR => "HbR",
        }
    }
}

/// One `hemo_summary.csv` row: post-onset descriptive statistics of an
/// averaged course. `peak` is the sample of largest magnitude (signed, so
/// HbR dips report negative peaks); `time_to_peak_s` is relative to onset.
#[derive(Debug, Clone, PartialEq)]
pub struct HemoStat {
    pub task: Label,
    pub channel: usize,
    pub modality: Modality,
    pub mean: f64,
    pub peak: f64,
    pub time_to_peak_s: f64,
}

fn post_onset_stats(course: &[f64], onset: usize, fs: f64) -> (f64, f64, f64) {
    let post = &course[onset..];
    let m = mean(post);
    let mut peak = 0.0f64;
    let mut at = 0;
    for (i, &v) in post.iter().enumerate() {
        if v.abs() > peak.abs() {
            peak = v;
            at = i;
        }
    }
    (m, peak, at as f64 / fs)
}

/// Per-(task, channel, modality) statistics over the post-onset span.
pub fn task_summary_stats(ea: &EpochAverage) -> Vec<HemoStat> {
    let mut rows = Vec::new();
    for t in 0..4 {
        let task = Label::from_class_index(t).unwrap();
        for modality in [Modality::HbO2, Modality::HbR] {
            let courses = match modality {
                Modality::HbO2 => &ea.hbo2[t],
                Modality::HbR => &ea.hbr[t],
            };
            for (channel, course) in courses.iter().enumerate() {
                let (mean, peak, time_to_peak_s) = post_onset_stats(course, ea.onset_sample, ea.fs_hz);
                rows.push(HemoStat { task, channel, modality, mean, peak, time_to_peak_s });
            }
        }
    }
    rows
}

/// Write `hemo_summary.csv` (task, channel, modality, mean, peak,
/// time_to_peak_s), deterministic for a fixed input.
pub fn write_hemo_summary_csv(path: &Path, stats: &[HemoStat]) -> Result<(), StudyError> {
    let mut out = String::from("task,channel,modality,mean,peak,time_to_peak_s\n");
    for s in stats {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            s.task.as_str(),
            s.channel,
            s.modality.as_str(),
            s.mean,
            s.peak,
            s.time_to_peak_s
        );
    }
    std::fs::write(path, out).map_err(|source| StudyError::Io { path: path.to_path_buf(), source })
}

/// Write per-(participant, task) questionnaire scores as CSV.
pub fn write_surgtlx_scores_csv(path: &Path, rows: &[SurgTlxRecord]) -> Result<(), StudyError> {
    let mut out = String::from("participant,task,weighted_score,raw_mean");
    for d in DIMENSIONS {
        let _ = write!(out, ",weight_{d}");
    }
    out.push('\n');
    for rec in rows {
        let score = surgtlx_score(&rec.response)?;
        let _ = write!(out, "{},{},{},{}", rec.participant, rec.task.as_str(), score.weighted_score, score.raw_mean);
        for w in score.weights {
            let _ = write!(out, ",{w}");
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|source| StudyError::Io { path: path.to_path_buf(), source })
}
