//! Butterworth filter design (bilinear transform with frequency prewarping)
//! and causal IIR application.

use thiserror::Error;

use super::{ChannelStream, SignalError};
use crate::util::Complex64;

#[derive(Debug, Error, PartialEq)]
pub enum FilterError {
    #[error("cutoff {cutoff_hz} Hz invalid for fs {fs_hz} Hz (must satisfy 0 < cutoff < fs/2)")]
    InvalidCutoff { cutoff_hz: f64, fs_hz: f64 },
    #[error("order must be >= 1")]
    InvalidOrder,
    #[error("input '{0}' has missing samples; impute before filtering")]
    UnimputedInput(String),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

/// Digital IIR filter in expanded transfer-function form, plus the factored
/// zero/pole/gain form it was designed in.
///
/// The factored form is kept because expanded polynomials lose several digits
/// for narrow-band designs (e.g. 0.5 Hz at fs 500 Hz): frequency responses
/// are evaluated from the pole/zero product, and the time-domain recursion
/// runs as cascaded second-order sections derived from the same factorization
/// (a single expanded recursion degrades linearity to ~1e-6 relative at that
/// cutoff; sections hold ~1e-13).
#[derive(Debug, Clone, PartialEq)]
pub struct FilterCoefficients {
    pub b: Vec<f64>,
    pub a: Vec<f64>,
    pub order: usize,
    zeros: Vec<Complex64>,
    poles: Vec<Complex64>,
    gain: f64,
    sections: Vec<Biquad>,
}

/// One second-order section, normalized so a0 = 1. First-order factors use
/// b2 = a2 = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Biquad {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
}

/// Group the factored design into second-order sections. All zeros sit at the
/// single real location `zero`; real poles become first-order sections and
/// conjugate pairs become biquads, ordered by ascending pole magnitude. The
/// overall gain is folded into the first section.
fn build_sections(poles: &[Complex64], zero: f64, gain: f64) -> Vec<Biquad> {
    let mut reals: Vec<f64> = poles.iter().filter(|p| p.im.abs() < 1e-12).map(|p| p.re).collect();
    let mut pairs: Vec<Complex64> = poles.iter().filter(|p| p.im > 1e-12).copied().collect();
    reals.sort_by(|x, y| x.abs().partial_cmp(&y.abs()).unwrap());
    pairs.sort_by(|x, y| x.abs().partial_cmp(&y.abs()).unwrap());

    let mut sections = Vec::new();
    for r in reals {
        sections.push(Biquad { b0: 1.0, b1: -zero, b2: 0.0, a1: -r, a2: 0.0 });
    }
    for p in pairs {
        sections.push(Biquad {
            b0: 1.0,
            b1: -2.0 * zero,
            b2: zero * zero,
            a1: -2.0 * p.re,
            a2: p.re * p.re + p.im * p.im,
        });
    }
    if let Some(first) = sections.first_mut() {
        first.b0 *= gain;
        first.b1 *= gain;
        first.b2 *= gain;
    }
    sections
}

impl FilterCoefficients {
    /// |H(e^{j 2 pi f / fs})| via the factored form.
    pub fn magnitude_at(&self, freq_hz: f64, fs_hz: f64) -> f64 {
        let z = Complex64::cis(2.0 * std::f64::consts::PI * freq_hz / fs_hz);
        let mut num = 1.0;
        for zz in &self.zeros {
            num *= (z - *zz).abs();
        }
        let mut den = 1.0;
        for p in &self.poles {
            den *= (z - *p).abs();
        }
        self.gain.abs() * num / den
    }

    /// Largest pole magnitude; < 1 for a stable design.
    pub fn max_pole_magnitude(&self) -> f64 {
        self.poles.iter().map(|p| p.abs()).fold(0.0, f64::max)
    }
}

/// Butterworth analog prototype poles for unit cutoff (left half-plane).
fn prototype_poles(order: usize) -> Vec<Complex64> {
    (1..=order)
        .map(|k| {
            let theta = std::f64::consts::PI * (2 * k + order - 1) as f64 / (2 * order) as f64;
            Complex64::cis(theta)
        })
        .collect()
}

/// Expand a monic polynomial from its roots; returns real coefficients,
/// highest degree first. Roots must be closed under conjugation.
fn poly_from_roots(roots: &[Complex64]) -> Vec<f64> {
    let mut coeffs = vec![Complex64::real(1.0)];
    for r in roots {
        let mut next = vec![Complex64::real(0.0); coeffs.len() + 1];
        for (i, c) in coeffs.iter().enumerate() {
            next[i] = next[i] + *c;
            next[i + 1] = next[i + 1] - *c * *r;
        }
        coeffs = next;
    }
    coeffs.into_iter().map(|c| c.re).collect()
}

/// Binomial coefficients of (z + sign)^n as integers, highest degree first.
fn binomial_expansion(n: usize, sign: f64) -> Vec<f64> {
    let mut c = vec![0.0; n + 1];
    c[0] = 1.0;
    for _ in 0..n {
        for i in (1..c.len()).rev() {
            c[i] = c[i] + sign * c[i - 1];
        }
    }
    c
}

fn validate(order: usize, cutoff_hz: f64, fs_hz: f64) -> Result<(), FilterError> {
    if order < 1 {
        return Err(FilterError::InvalidOrder);
    }
    if !(cutoff_hz > 0.0 && cutoff_hz < fs_hz / 2.0) {
        return Err(FilterError::InvalidCutoff { cutoff_hz, fs_hz });
    }
    Ok(())
}

/// Shared digitization: map analog poles through the bilinear transform and
/// assemble expanded coefficients. `zero` is the common digital zero location
/// (+1 for high-pass, -1 for low-pass); `gain_probe` is the z point where the
/// response is pinned to unit magnitude (-1 for high-pass, +1 for low-pass).
fn digitize(
    analog_poles: Vec<Complex64>,
    order: usize,
    fs_hz: f64,
    zero: f64,
    gain_probe: f64,
) -> FilterCoefficients {
    let two_fs = Complex64::real(2.0 * fs_hz);
    let digital_poles: Vec<Complex64> = analog_poles
        .iter()
        .map(|&q| (two_fs + q) / (two_fs - q))
        .collect();

    // Gain pins |H| = 1 at the probe point. The product is real because the
    // pole set is closed under conjugation.
    let probe = Complex64::real(gain_probe);
    let mut num = Complex64::real(1.0);
    for p in &digital_poles {
        num = num * (probe - *p);
    }
    let gain = num.re / (gain_probe - zero).powi(order as i32);

    // Numerator gain * (z - zero)^order expanded with exact binomials, so the
    // coefficient sum cancels exactly for the high-pass (DC gain identically
    // zero up to one rounding of the gain multiply).
    let b: Vec<f64> = binomial_expansion(order, -zero).iter().map(|c| c * gain).collect();
    let a = poly_from_roots(&digital_poles);
    let sections = build_sections(&digital_poles, zero, gain);

    FilterCoefficients {
        b,
        a,
        order,
        zeros: vec![Complex64::real(zero); order],
        poles: digital_poles,
        gain,
        sections,
    }
}

/// Design a digital Butterworth high-pass: analog prototype, high-pass
/// transform at the prewarped cutoff, bilinear transform. The -3 dB point
/// lands exactly on `cutoff_hz`.
pub fn design_butterworth_highpass(
    order: usize,
    cutoff_hz: f64,
    fs_hz: f64,
) -> Result<FilterCoefficients, FilterError> {
    validate(order, cutoff_hz, fs_hz)?;
    let warped = 2.0 * fs_hz * (std::f64::consts::PI * cutoff_hz / fs_hz).tan();
    // Low-pass prototype pole p maps to high-pass pole warped / p.
    let analog: Vec<Complex64> = prototype_poles(order)
        .into_iter()
        .map(|p| Complex64::real(warped) / p)
        .collect();
    Ok(digitize(analog, order, fs_hz, 1.0, -1.0))
}

/// Design a digital Butterworth low-pass (used for anti-alias filtering).
pub fn design_butterworth_lowpass(
    order: usize,
    cutoff_hz: f64,
    fs_hz: f64,
) -> Result<FilterCoefficients, FilterError> {
    validate(order, cutoff_hz, fs_hz)?;
    let warped = 2.0 * fs_hz * (std::f64::consts::PI * cutoff_hz / fs_hz).tan();
    let analog: Vec<Complex64> = prototype_poles(order)
        .into_iter()
        .map(|p| p.scale(warped))
        .collect();
    Ok(digitize(analog, order, fs_hz, -1.0, 1.0))
}

/// Apply the filter causally (direct form II transposed). Output length
/// equals input length; no missing samples may be present.
pub fn filter_forward(coeffs: &FilterCoefficients, x: &ChannelStream) -> Result<ChannelStream, FilterError> {
    if x.has_missing() {
        return Err(FilterError::UnimputedInput(x.name.clone()));
    }
    let y = filter_samples(coeffs, &x.samples);
    Ok(ChannelStream::new(x.name.clone(), x.fs_hz, y))
}

/// Recursion on a bare sample slice (shared by resampling): cascaded
/// direct-form-II-transposed second-order sections.
pub(crate) fn filter_samples(coeffs: &FilterCoefficients, x: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    let mut s1;
    let mut s2;
    for q in &coeffs.sections {
        s1 = 0.0;
        s2 = 0.0;
        for v in y.iter_mut() {
            let xn = *v;
            let yn = q.b0 * xn + s1;
            s1 = q.b1 * xn - q.a1 * yn + s2;
            s2 = q.b2 * xn - q.a2 * yn;
            *v = yn;
        }
    }
    y
}
