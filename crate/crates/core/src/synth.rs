//! Seeded synthetic multimodal session generator.
//!
//! Produces EEG (pink noise plus task-gated band oscillations), fNIRS
//! (baseline drift plus task boxcars convolved with a double-gamma
//! hemodynamic response), and pupil diameter (slow baseline, task dilation
//! with first-order onset dynamics, blink gaps marked missing), all driven
//! from one seed so sessions are bit-reproducible. A `GroundTruth` rides
//! along with the exact schedule, the HRF parameters, and the pre-mask
//! pupil traces so recovery-quality tests have an uncorrupted reference.
//!
//! Also generates the scalogram pretraining set: two tone-mixture texture
//! classes (low- vs high-frequency-dominant) rendered through the real CWT,
//! used as the surrogate source domain for the transfer-learning stage.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::cwt::{cwt_morlet, CwtConfig};
use crate::rng::{derive_seed, stream_rng};
use crate::signals::{
    ChannelStream, EventSchedule, Label, LabeledInterval, MultimodalRecording, SignalError,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error("{path}: {source}")]
    Io { path: std::path::PathBuf, source: std::io::Error },
}

/// Double-gamma hemodynamic response: a gamma-density peak minus a scaled,
/// later gamma-density undershoot. With the defaults the peak sits near
/// 6 s and the undershoot near 16 s after stimulus onset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hrf {
    pub peak_shape: f64,
    pub peak_rate: f64,
    pub undershoot_shape: f64,
    pub undershoot_rate: f64,
    pub undershoot_ratio: f64,
}

impl Default for Hrf {
    fn default() -> Self {
        Self {
            peak_shape: 7.0,
            peak_rate: 1.0,
            undershoot_shape: 17.0,
            undershoot_rate: 1.0,
            undershoot_ratio: 1.0 / 6.0,
        }
    }
}

fn gamma_pdf(t: f64, shape: f64, rate: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    (shape * rate.ln() + (shape - 1.0) * t.ln() - rate * t - libm::lgamma(shape)).exp()
}

impl Hrf {
    /// Impulse response at `t` seconds after onset (zero for t < 0).
    pub fn value(&self, t: f64) -> f64 {
        gamma_pdf(t, self.peak_shape, self.peak_rate)
            - self.undershoot_ratio * gamma_pdf(t, self.undershoot_shape, self.undershoot_rate)
    }

    /// Cumulative response table on a uniform grid: entry i is
    /// ∫₀^{i·dt} value(τ) dτ by trapezoidal accumulation.
    pub fn cumulative_table(&self, dt: f64, t_max: f64) -> Vec<f64> {
        let n = (t_max / dt).ceil() as usize + 1;
        let mut table = Vec::with_capacity(n);
        let mut acc = 0.0;
        let mut prev = self.value(0.0);
        table.push(0.0);
        for i in 1..n {
            let cur = self.value(i as f64 * dt);
            acc += 0.5 * (prev + cur) * dt;
            table.push(acc);
            prev = cur;
        }
        table
    }

    /// Response at time `t` to a boxcar stimulus spanning [t0, t1) with unit
    /// amplitude, evaluated from a cumulative table (linear interpolation).
    pub fn boxcar_response(table: &[f64], dt: f64, t: f64, t0: f64, t1: f64) -> f64 {
        let lookup = |x: f64| -> f64 {
            if x <= 0.0 {
                return 0.0;
            }
            let pos = x / dt;
            let i = pos.floor() as usize;
            if i + 1 >= table.len() {
                return *table.last().unwrap();
            }
            let frac = pos - i as f64;
            table[i] * (1.0 - frac) + table[i + 1] * frac
        };
        lookup(t - t0) - lookup(t - t1)
    }
}

/// Per-condition signal modulation: EEG band amplitudes (theta, alpha,
/// beta, in µV of the channel-level oscillation), the HbO₂ response
/// amplitude, and the pupil dilation plateau.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskEffect {
    pub eeg_band_uv: [f64; 3],
    pub hbo2_amp: f64,
    pub pupil_delta_mm: f64,
}

/// Oscillation frequencies of the three modeled EEG bands (Hz).
pub const EEG_BAND_HZ: [f64; 3] = [5.0, 10.0, 20.0];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub subject_id: String,
    /// Total session span; the block schedule is truncated to fit.
    pub session_length_s: f64,
    pub task_block_s: f64,
    pub rest_block_s: f64,
    pub eeg_fs: f64,
    pub fnirs_fs: f64,
    pub pupil_fs: f64,
    pub n_eeg_channels: usize,
    pub n_fnirs_channels: usize,
    /// Modulation during NoTask intervals (and outside any interval).
    pub rest_effect: TaskEffect,
    /// Modulation for Task1..Task4 in label order.
    pub task_effects: [TaskEffect; 4],
    /// Pink-noise amplitude added to every EEG channel (µV).
    pub eeg_noise_uv: f64,
    /// White-noise sigma on fNIRS channels (µmol/L).
    pub fnirs_noise: f64,
    /// Amplitude of the slow sinusoidal fNIRS baseline drift.
    pub fnirs_drift: f64,
    /// HbR response is this multiple of the HbO₂ response (negative).
    pub hbr_ratio: f64,
    pub pupil_baseline_mm: f64,
    pub pupil_noise_mm: f64,
    /// Slow physiological pupil oscillation.
    pub hippus_amp_mm: f64,
    pub hippus_freq_hz: f64,
    /// Dilation onset/offset time constant (s).
    pub pupil_tau_s: f64,
    pub blink_rate_per_min: f64,
    /// Uniform blink gap duration range (s); must stay below 1 s.
    pub blink_gap_s: (f64, f64),
    pub hrf: Hrf,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            subject_id: "synth".into(),
            session_length_s: 780.0,
            task_block_s: 120.0,
            rest_block_s: 60.0,
            eeg_fs: 1000.0,
            fnirs_fs: 1000.0,
            pupil_fs: 120.0,
            n_eeg_channels: 18,
            n_fnirs_channels: 22,
            rest_effect: TaskEffect { eeg_band_uv: [2.0, 9.0, 1.5], hbo2_amp: 0.0, pupil_delta_mm: 0.0 },
            task_effects: [
                TaskEffect { eeg_band_uv: [7.0, 4.5, 2.5], hbo2_amp: 0.8, pupil_delta_mm: 0.25 },
                TaskEffect { eeg_band_uv: [11.0, 3.0, 4.0], hbo2_amp: 1.6, pupil_delta_mm: 0.45 },
                TaskEffect { eeg_band_uv: [8.0, 6.5, 6.0], hbo2_amp: 0.9, pupil_delta_mm: 0.30 },
                TaskEffect { eeg_band_uv: [12.5, 2.0, 7.5], hbo2_amp: 1.7, pupil_delta_mm: 0.55 },
            ],
            eeg_noise_uv: 4.0,
            fnirs_noise: 0.06,
            fnirs_drift: 0.08,
            hbr_ratio: -0.4,
            pupil_baseline_mm: 3.5,
            pupil_noise_mm: 0.015,
            hippus_amp_mm: 0.05,
            hippus_freq_hz: 0.3,
            pupil_tau_s: 1.0,
            blink_rate_per_min: 12.0,
            blink_gap_s: (0.08, 0.3),
            hrf: Hrf::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.into()));
        if !(self.session_length_s > 0.0 && self.task_block_s > 0.0 && self.rest_block_s > 0.0) {
            return bad("block and session lengths must be positive");
        }
        if !(self.eeg_fs > 0.0 && self.fnirs_fs > 0.0 && self.pupil_fs > 0.0) {
            return bad("sampling rates must be positive");
        }
        if self.n_eeg_channels == 0 || self.n_fnirs_channels == 0 {
            return bad("channel counts must be >= 1");
        }
        let effects = self.task_effects.iter().chain(std::iter::once(&self.rest_effect));
        for e in effects {
            let finite = e.eeg_band_uv.iter().all(|v| v.is_finite())
                && e.hbo2_amp.is_finite()
                && e.pupil_delta_mm.is_finite();
            if !finite {
                return bad("effect sizes must be finite");
            }
        }
        let (lo, hi) = self.blink_gap_s;
        if !(lo > 0.0 && lo <= hi) {
            return bad("blink gap range must satisfy 0 < lo <= hi");
        }
        if hi >= 1.0 {
            return bad("blink gaps must be shorter than 1 s");
        }
        if self.blink_rate_per_min < 0.0 {
            return bad("blink rate must be >= 0");
        }
        Ok(())
    }

    /// Modulation active under a given label.
    pub fn effect_for(&self, label: Label) -> &TaskEffect {
        match label {
            Label::NoTask => &self.rest_effect,
            Label::Task1 => &self.task_effects[0],
            Label::Task2 => &self.task_effects[1],
            Label::Task3 => &self.task_effects[2],
            Label::Task4 => &self.task_effects[3],
        }
    }
}

/// What the generator knows and the pipeline must recover.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub schedule: EventSchedule,
    /// Task labels in block order (the seeded randomized order).
    pub task_order: Vec<Label>,
    /// Pre-mask pupil traces, one per eye, at `pupil_fs`.
    pub pupil_clean: Vec<Vec<f64>>,
    pub hrf: Hrf,
}

/// Alternating rest/task blocks starting with rest, tasks in a seeded
/// random order (cycled if the session is long enough to need repeats).
/// Blocks shorter than 2 s after truncation are dropped from the schedule.
fn build_schedule(cfg: &SynthConfig) -> Result<(EventSchedule, Vec<Label>), SynthError> {
    let mut rng = stream_rng(cfg.seed, "synth/task_order");
    let mut base: Vec<Label> = Label::TASKS.to_vec();
    // Fisher-Yates with the derived stream
    for i in (1..base.len()).rev() {
        let j = rng.random_range(0..=i);
        base.swap(i, j);
    }
    let mut intervals = Vec::new();
    let mut order = Vec::new();
    let mut t = 0.0;
    let mut rest_next = true;
    let mut task_i = 0;
    while t < cfg.session_length_s - 1e-9 {
        let (len, label) = if rest_next {
            (cfg.rest_block_s, Label::NoTask)
        } else {
            let l = base[task_i % base.len()];
            task_i += 1;
            (cfg.task_block_s, l)
        };
        let end = (t + len).min(cfg.session_length_s);
        if end - t >= 2.0 {
            intervals.push(LabeledInterval { label, start_s: t, end_s: end });
            if label.is_task() {
                order.push(label);
            }
        }
        t += len;
        rest_next = !rest_next;
    }
    Ok((EventSchedule::new(intervals)?, order))
}

/// Paul Kellet's 1/f filter: white noise shaped to an approximately pink
/// spectrum, unit-ish amplitude.
struct PinkNoise {
    b: [f64; 7],
}

impl PinkNoise {
    fn new() -> Self {
        Self { b: [0.0; 7] }
    }

    fn next(&mut self, white: f64) -> f64 {
        let b = &mut self.b;
        b[0] = 0.99886 * b[0] + white * 0.0555179;
        b[1] = 0.99332 * b[1] + white * 0.0750759;
        b[2] = 0.96900 * b[2] + white * 0.1538520;
        b[3] = 0.86650 * b[3] + white * 0.3104856;
        b[4] = 0.55000 * b[4] + white * 0.5329522;
        b[5] = -0.7616 * b[5] - white * 0.0168980;
        let pink = b[0] + b[1] + b[2] + b[3] + b[4] + b[5] + b[6] + white * 0.5362;
        b[6] = white * 0.115926;
        pink * 0.11
    }
}

/// Per-sample label indices for a stream of `n` samples at `fs`.
fn label_track(schedule: &EventSchedule, n: usize, fs: f64) -> Vec<u8> {
    let mut track = vec![Label::NoTask.class_index() as u8; n];
    for iv in schedule.intervals() {
        let a = (iv.start_s * fs).round() as usize;
        let b = ((iv.end_s * fs).round() as usize).min(n);
        for t in track.iter_mut().take(b).skip(a.min(n)) {
            *t = iv.label.class_index() as u8;
        }
    }
    track
}

fn effect_by_index(cfg: &SynthConfig) -> [&TaskEffect; 5] {
    // indexed by Label::class_index(): Task1..Task4 then NoTask
    [
        &cfg.task_effects[0],
        &cfg.task_effects[1],
        &cfg.task_effects[2],
        &cfg.task_effects[3],
        &cfg.rest_effect,
    ]
}

/// Generate one session and its ground truth. Bit-identical for equal
/// configs (the seed drives every random draw through tagged streams).
pub fn generate_session(cfg: &SynthConfig) -> Result<(MultimodalRecording, GroundTruth), SynthError> {
    cfg.validate()?;
    let (schedule, task_order) = build_schedule(cfg)?;
    let seed = cfg.seed;
    let effects = effect_by_index(cfg);

    // EEG: pink noise + task-gated band oscillations. Bands share a common
    // base phase with small per-channel jitter so the channel mean retains
    // the oscillation.
    let n_eeg = (cfg.session_length_s * cfg.eeg_fs).round() as usize;
    let eeg_track = label_track(&schedule, n_eeg, cfg.eeg_fs);
    let mut phase_rng = stream_rng(seed, "synth/eeg/phase");
    let base_phase: [f64; 3] = std::array::from_fn(|_| phase_rng.random_range(0.0..std::f64::consts::TAU));
    let mut eeg = Vec::with_capacity(cfg.n_eeg_channels);
    for c in 0..cfg.n_eeg_channels {
        let mut rng = stream_rng(seed, &format!("synth/eeg/{c}"));
        let jitter: [f64; 3] = std::array::from_fn(|_| rng.random_range(-0.3..0.3));
        let mut pink = PinkNoise::new();
        let dt = 1.0 / cfg.eeg_fs;
        let mut samples = Vec::with_capacity(n_eeg);
        for (i, &lab) in eeg_track.iter().enumerate() {
            let t = i as f64 * dt;
            let mut v = cfg.eeg_noise_uv * pink.next(rng.random_range(-1.0..1.0));
            let amps = &effects[lab as usize].eeg_band_uv;
            for (b, &f) in EEG_BAND_HZ.iter().enumerate() {
                if amps[b] != 0.0 {
                    v += amps[b] * (std::f64::consts::TAU * f * t + base_phase[b] + jitter[b]).sin();
                }
            }
            samples.push(v);
        }
        eeg.push(ChannelStream::new(format!("eeg{c}"), cfg.eeg_fs, samples));
    }

    // fNIRS: per-block boxcar responses through the cumulative HRF table,
    // channel gain jitter, slow drift, white noise. HbR mirrors HbO2
    // negatively with its own noise.
    let n_fnirs = (cfg.session_length_s * cfg.fnirs_fs).round() as usize;
    let table_dt = 0.05;
    let table = cfg.hrf.cumulative_table(table_dt, 60.0);
    let task_blocks: Vec<(f64, f64, f64)> = schedule
        .intervals()
        .iter()
        .filter(|iv| iv.label.is_task())
        .map(|iv| (iv.start_s, iv.end_s, effects[iv.label.class_index()].hbo2_amp))
        .collect();
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let dt_f = 1.0 / cfg.fnirs_fs;
    let mut response = Vec::with_capacity(n_fnirs);
    for i in 0..n_fnirs {
        let t = i as f64 * dt_f;
        let mut r = 0.0;
        for &(t0, t1, amp) in &task_blocks {
            r += amp * Hrf::boxcar_response(&table, table_dt, t, t0, t1);
        }
        response.push(r);
    }
    let mut hbo2 = Vec::with_capacity(cfg.n_fnirs_channels);
    let mut hbr = Vec::with_capacity(cfg.n_fnirs_channels);
    for c in 0..cfg.n_fnirs_channels {
        let mut rng = stream_rng(seed, &format!("synth/fnirs/{c}"));
        let gain = 1.0 + rng.random_range(-0.15..0.15);
        let drift_phase = rng.random_range(0.0..std::f64::consts::TAU);
        let mut o = Vec::with_capacity(n_fnirs);
        let mut r = Vec::with_capacity(n_fnirs);
        for (i, &resp) in response.iter().enumerate() {
            let t = i as f64 * dt_f;
            let drift = cfg.fnirs_drift * (std::f64::consts::TAU * 0.01 * t + drift_phase).sin();
            o.push(gain * resp + drift + cfg.fnirs_noise * noise.sample(&mut rng));
            r.push(cfg.hbr_ratio * gain * resp - drift + cfg.fnirs_noise * noise.sample(&mut rng));
        }
        hbo2.push(ChannelStream::new(format!("hbo2_{c}"), cfg.fnirs_fs, o));
        hbr.push(ChannelStream::new(format!("hbr_{c}"), cfg.fnirs_fs, r));
    }

    // Pupil: baseline + hippus + first-order dilation tracking + noise,
    // then binocular blink gaps masked out.
    let n_pupil = (cfg.session_length_s * cfg.pupil_fs).round() as usize;
    let pupil_track = label_track(&schedule, n_pupil, cfg.pupil_fs);
    let dt_p = 1.0 / cfg.pupil_fs;
    let alpha = (dt_p / cfg.pupil_tau_s).min(1.0);
    let mut clean = Vec::with_capacity(2);
    for e in 0..2 {
        let mut rng = stream_rng(seed, &format!("synth/pupil/{e}"));
        let hippus_phase = rng.random_range(0.0..std::f64::consts::TAU);
        let mut dilation = 0.0;
        let mut samples = Vec::with_capacity(n_pupil);
        for (i, &lab) in pupil_track.iter().enumerate() {
            let t = i as f64 * dt_p;
            let target = effects[lab as usize].pupil_delta_mm;
            dilation += (target - dilation) * alpha;
            let v = cfg.pupil_baseline_mm
                + dilation
                + cfg.hippus_amp_mm * (std::f64::consts::TAU * cfg.hippus_freq_hz * t + hippus_phase).sin()
                + cfg.pupil_noise_mm * noise.sample(&mut rng);
            samples.push(v);
        }
        clean.push(samples);
    }

    // Blinks are binocular: one arrival process masks both eyes. A short
    // refractory period after each blink keeps gaps from overlapping, so
    // every masked run is one blink of at most blink_gap_s.1 seconds.
    const BLINK_REFRACTORY_S: f64 = 0.25;
    let mut mask = vec![false; n_pupil];
    if cfg.blink_rate_per_min > 0.0 {
        let mut rng = stream_rng(seed, "synth/blinks");
        let rate_per_s = cfg.blink_rate_per_min / 60.0;
        let mut t = 0.0;
        loop {
            // exponential inter-arrival via inverse transform
            let u: f64 = rng.random_range(0.0_f64..1.0).max(1e-12);
            t += -u.ln() / rate_per_s;
            if t >= cfg.session_length_s {
                break;
            }
            let dur = rng.random_range(cfg.blink_gap_s.0..=cfg.blink_gap_s.1);
            let a = (t * cfg.pupil_fs).round() as usize;
            let b = (((t + dur) * cfg.pupil_fs).round() as usize).min(n_pupil);
            for m in mask.iter_mut().take(b).skip(a.min(n_pupil)) {
                *m = true;
            }
            t += dur + BLINK_REFRACTORY_S;
        }
    }
    let pupil: Vec<ChannelStream> = (0..2)
        .map(|e| {
            let samples: Vec<f64> = clean[e]
                .iter()
                .zip(&mask)
                .map(|(&v, &m)| if m { 0.0 } else { v })
                .collect();
            ChannelStream::with_mask(
                if e == 0 { "pupil_left" } else { "pupil_right" },
                cfg.pupil_fs,
                samples,
                mask.clone(),
            )
            .expect("mask length matches by construction")
        })
        .collect();

    let rec = MultimodalRecording {
        subject_id: cfg.subject_id.clone(),
        eeg,
        fnirs_hbo2: hbo2,
        fnirs_hbr: hbr,
        pupil,
        events: schedule.clone(),
    };
    rec.validate()?;
    let gt = GroundTruth { schedule, task_order, pupil_clean: clean, hrf: cfg.hrf };
    Ok((rec, gt))
}

/// The canonical per-subject variation of a base config: subject `index`
/// (0-based) gets id `s01`, `s02`, ... and a seed derived from `root_seed`,
/// so one root seed reproduces a whole multi-subject corpus.
pub fn subject_config(base: &SynthConfig, root_seed: u64, index: usize) -> SynthConfig {
    SynthConfig {
        seed: derive_seed(root_seed, &format!("synth/subject/{index}")),
        subject_id: format!("s{:02}", index + 1),
        ..base.clone()
    }
}

/// One labeled pretraining scalogram: a rendered image and its texture
/// class (0 = low-frequency-dominant, 1 = high-frequency-dominant).
#[derive(Debug, Clone)]
pub struct PretrainImage {
    pub image: Vec<Vec<u8>>,
    pub class: usize,
}

/// Signal length fed to the CWT for pretraining textures; matches the
/// feature-vector length so image statistics transfer.
pub const PRETRAIN_SIGNAL_LEN: usize = 848;

/// Balanced two-class scalogram set rendered through the real CWT:
/// `n` images total, alternating classes, deterministic under `seed`.
pub fn generate_pretraining_set(seed: u64, n: usize) -> Result<Vec<PretrainImage>, SynthError> {
    if n < 4 || n % 2 != 0 {
        return Err(SynthError::InvalidConfig("n must be even and >= 4 (>= 2 per class)".into()));
    }
    let fs = 500.0;
    let cwt_cfg = CwtConfig::default();
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 2;
        let mut rng = stream_rng(seed, &format!("synth/pretrain/{i}"));
        // near-equal tone amplitudes keep per-image normalization
        // comparable, so mean brightness tracks ridge thickness: slow tones
        // smear into wide bands, fast ones stay thin. Tones are stratified
        // across the class band to cap per-image variance.
        let (n_tones, lo, hi) = if class == 0 { (3, 0.8, 3.2) } else { (2, 28.0, 55.0) };
        let sub = (hi - lo) / n_tones as f64;
        let tones: Vec<(f64, f64, f64)> = (0..n_tones)
            .map(|j| {
                (
                    rng.random_range(lo + j as f64 * sub..lo + (j + 1) as f64 * sub),
                    rng.random_range(0.95..1.05),
                    rng.random_range(0.0..std::f64::consts::TAU),
                )
            })
            .collect();
        let x: Vec<f64> = (0..PRETRAIN_SIGNAL_LEN)
            .map(|j| {
                let t = j as f64 / fs;
                let mut v = 0.03 * noise.sample(&mut rng);
                for &(f, a, p) in &tones {
                    v += a * (std::f64::consts::TAU * f * t + p).sin();
                }
                v
            })
            .collect();
        let scalogram = cwt_morlet(&x, fs, &cwt_cfg).expect("pretraining signal length is fixed and valid");
        out.push(PretrainImage { image: scalogram.image, class });
    }
    Ok(out)
}

/// Write the session directory `signals::load_recording` reads, plus
/// `ground_truth.csv` (t_s, pre-mask left/right pupil) with the HRF
/// parameters in comment lines.
pub fn write_session(dir: &Path, rec: &MultimodalRecording, gt: &GroundTruth) -> Result<(), SynthError> {
    crate::signals::write_recording(dir, rec)
        .map_err(|e| SynthError::InvalidConfig(format!("write_recording: {e}")))?;
    let mut s = String::new();
    let h = &gt.hrf;
    let _ = writeln!(
        s,
        "# hrf peak_shape={} peak_rate={} undershoot_shape={} undershoot_rate={} undershoot_ratio={}",
        h.peak_shape, h.peak_rate, h.undershoot_shape, h.undershoot_rate, h.undershoot_ratio
    );
    let _ = writeln!(s, "t_s,pupil_left_clean,pupil_right_clean");
    let fs_hz = rec.pupil_fs();
    for i in 0..gt.pupil_clean[0].len() {
        let _ = writeln!(s, "{:.6},{:.6},{:.6}", i as f64 / fs_hz, gt.pupil_clean[0][i], gt.pupil_clean[1][i]);
    }
    let path = dir.join("ground_truth.csv");
    fs::write(&path, s).map_err(|source| SynthError::Io { path, source })
}
