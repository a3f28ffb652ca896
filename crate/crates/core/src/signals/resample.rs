//! Sample-rate conversion with anti-alias filtering for decimation.

use thiserror::Error;

use super::filter::{design_butterworth_lowpass, filter_samples};
use super::ChannelStream;

#[derive(Debug, Error, PartialEq)]
pub enum ResampleError {
    #[error("cannot resample an empty stream")]
    EmptyInput,
    #[error("target rate must be positive, got {0}")]
    NonPositiveRate(f64),
}

/// Ratio of the lowered anti-alias cutoff to the target rate: conventional
/// guard band below the new Nyquist.
const ANTI_ALIAS_FRACTION: f64 = 0.45;

/// Convert `x` to `target_fs`. Output length is round(len * target_fs / fs).
///
/// Integer-factor decimation low-pass filters at 0.45 * target_fs (6th-order
/// Butterworth) and keeps every k-th sample. Non-integer ratios linearly
/// interpolate the (anti-alias filtered, when decimating) signal. The input
/// must have no missing samples; `target_fs == fs` returns the input
/// unchanged.
pub fn resample(x: &ChannelStream, target_fs: f64) -> Result<ChannelStream, ResampleError> {
    if x.is_empty() {
        return Err(ResampleError::EmptyInput);
    }
    if target_fs <= 0.0 {
        return Err(ResampleError::NonPositiveRate(target_fs));
    }
    debug_assert!(!x.has_missing(), "resample requires imputed input");

    if target_fs == x.fs_hz {
        return Ok(x.clone());
    }

    let n_out = ((x.len() as f64) * target_fs / x.fs_hz).round() as usize;
    let downsampling = target_fs < x.fs_hz;

    let filtered: Vec<f64> = if downsampling {
        let lp = design_butterworth_lowpass(6, ANTI_ALIAS_FRACTION * target_fs, x.fs_hz)
            .expect("anti-alias cutoff is always below Nyquist");
        filter_samples(&lp, &x.samples)
    } else {
        x.samples.clone()
    };

    let ratio = x.fs_hz / target_fs;
    let k = ratio.round();
    let samples = if downsampling && (ratio - k).abs() < 1e-9 {
        // integer decimation: pick every k-th filtered sample
        let k = k as usize;
        (0..n_out).map(|i| filtered[(i * k).min(filtered.len() - 1)]).collect()
    } else {
        // fractional ratio (either direction): linear interpolation
        (0..n_out)
            .map(|i| {
                let pos = i as f64 * ratio;
                let lo = pos.floor() as usize;
                if lo + 1 >= filtered.len() {
                    filtered[filtered.len() - 1]
                } else {
                    let frac = pos - lo as f64;
                    filtered[lo] * (1.0 - frac) + filtered[lo + 1] * frac
                }
            })
            .collect()
    };

    Ok(ChannelStream::new(x.name.clone(), target_fs, samples))
}
