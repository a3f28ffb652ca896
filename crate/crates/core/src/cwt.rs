//! Morlet continuous wavelet transform and scalogram rendering.
//!
//! Each feature vector is correlated with a bank of scaled complex Morlet
//! wavelets; the magnitude grid (one row per scale) is rendered to a fixed
//! grayscale image for the detector stage. Convolution is direct (no FFT):
//! desk-scale inputs keep it cheap, and kernels are folded into symmetric
//! (cosine) and antisymmetric (sine) halves so each lag costs one pass.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use thiserror::Error;

/// Default rendered image height and width.
pub const DEFAULT_IMAGE_SIZE: usize = 128;

#[derive(Debug, Error, PartialEq)]
pub enum CwtError {
    #[error("input has {len} samples; at least {min} required")]
    InputTooShort { len: usize, min: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone)]
pub struct CwtConfig {
    pub n_scales: usize,
    pub freq_min_hz: f64,
    pub freq_max_hz: f64,
    /// Morlet center frequency ω₀ (radians per unit of the unit-variance envelope).
    pub omega0: f64,
}

impl Default for CwtConfig {
    fn default() -> Self {
        Self { n_scales: 64, freq_min_hz: 0.5, freq_max_hz: 60.0, omega0: 6.0 }
    }
}

#[derive(Debug, Clone)]
pub struct Scalogram {
    /// n_scales × n_time nonnegative coefficient magnitudes, row 0 = highest frequency.
    pub magnitudes: Vec<Vec<f64>>,
    /// Pseudo-frequency of each row, descending.
    pub scale_freqs_hz: Vec<f64>,
    /// Default-size rendering of `magnitudes` (see `render_image`).
    pub image: Vec<Vec<u8>>,
}

struct ScaleKernel {
    freq_hz: f64,
    scale: f64,
    /// Center tap (cosine part at lag 0; sine part is 0 there).
    c0: f64,
    /// Folded cosine taps for lags 1..=half.
    cr: Vec<f64>,
    /// Folded sine taps for lags 1..=half.
    ci: Vec<f64>,
}

/// A reusable wavelet bank for one (sample rate, config) pair.
pub struct CwtPlan {
    kernels: Vec<ScaleKernel>,
    max_half: usize,
}

impl CwtPlan {
    pub fn new(fs_hz: f64, cfg: &CwtConfig) -> Result<Self, CwtError> {
        if !(cfg.freq_min_hz > 0.0 && cfg.freq_min_hz < cfg.freq_max_hz && cfg.freq_max_hz <= fs_hz / 2.0) {
            return Err(CwtError::InvalidConfig(format!(
                "need 0 < freq_min ({}) < freq_max ({}) <= fs/2 ({})",
                cfg.freq_min_hz,
                cfg.freq_max_hz,
                fs_hz / 2.0
            )));
        }
        if cfg.n_scales < 2 {
            return Err(CwtError::InvalidConfig(format!("n_scales {} < 2", cfg.n_scales)));
        }
        if cfg.omega0 <= 0.0 {
            return Err(CwtError::InvalidConfig("omega0 must be positive".into()));
        }

        let center = cfg.omega0 / (2.0 * std::f64::consts::PI); // cycles per envelope unit
        let norm_quarter_pi = std::f64::consts::PI.powf(-0.25);
        let log_max = cfg.freq_max_hz.ln();
        let log_min = cfg.freq_min_hz.ln();
        let n = cfg.n_scales;

        let mut kernels = Vec::with_capacity(n);
        let mut max_half = 0usize;
        for k in 0..n {
            let frac = k as f64 / (n - 1) as f64;
            let freq_hz = (log_max + frac * (log_min - log_max)).exp();
            let scale = center * fs_hz / freq_hz; // in samples
            let half = (2.0 * scale).ceil() as usize;
            let amp = norm_quarter_pi / scale.sqrt();
            let mut cr = Vec::with_capacity(half);
            let mut ci = Vec::with_capacity(half);
            for t in 1..=half {
                let arg = t as f64 / scale;
                let env = amp * (-0.5 * arg * arg).exp();
                cr.push(env * (cfg.omega0 * arg).cos());
                ci.push(env * (cfg.omega0 * arg).sin());
            }
            kernels.push(ScaleKernel { freq_hz, scale, c0: amp, cr, ci });
            max_half = max_half.max(half);
        }
        Ok(Self { kernels, max_half })
    }

    pub fn scale_freqs_hz(&self) -> Vec<f64> {
        self.kernels.iter().map(|k| k.freq_hz).collect()
    }

    /// Scale factor (in samples) of each row's wavelet; edge effects reach
    /// `2 * scale` samples from either end of the input.
    pub fn scales(&self) -> Vec<f64> {
        self.kernels.iter().map(|k| k.scale).collect()
    }

    pub fn transform(&self, x: &[f64]) -> Result<Scalogram, CwtError> {
        const MIN_LEN: usize = 8;
        let len = x.len();
        if len < MIN_LEN {
            return Err(CwtError::InputTooShort { len, min: MIN_LEN });
        }

        // zero-padded copy shared by every scale
        let pad = self.max_half;
        let mut xp = vec![0.0; len + 2 * pad];
        xp[pad..pad + len].copy_from_slice(x);

        // lag-major accumulation keeps every stream contiguous
        let mut re = vec![0.0; len];
        let mut im = vec![0.0; len];
        let mut magnitudes = Vec::with_capacity(self.kernels.len());
        for kern in &self.kernels {
            for (r, &xv) in re.iter_mut().zip(&xp[pad..pad + len]) {
                *r = kern.c0 * xv;
            }
            im.iter_mut().for_each(|v| *v = 0.0);
            for (t, (&cr, &ci)) in kern.cr.iter().zip(&kern.ci).enumerate() {
                let fwd = &xp[pad + t + 1..pad + t + 1 + len];
                let bwd = &xp[pad - t - 1..pad - t - 1 + len];
                for i in 0..len {
                    let a = fwd[i];
                    let b = bwd[i];
                    re[i] += cr * (a + b);
                    im[i] += ci * (a - b);
                }
            }
            let row: Vec<f64> = re.iter().zip(&im).map(|(r, i)| (r * r + i * i).sqrt()).collect();
            magnitudes.push(row);
        }

        let image = resize_normalize(&magnitudes, DEFAULT_IMAGE_SIZE, DEFAULT_IMAGE_SIZE);
        Ok(Scalogram { magnitudes, scale_freqs_hz: self.scale_freqs_hz(), image })
    }
}

/// One-shot transform; build a `CwtPlan` instead when transforming many
/// windows with the same configuration.
pub fn cwt_morlet(x: &[f64], fs_hz: f64, cfg: &CwtConfig) -> Result<Scalogram, CwtError> {
    CwtPlan::new(fs_hz, cfg)?.transform(x)
}

/// Render a scalogram's magnitude grid to grayscale bytes: bilinear resize
/// (corner-aligned) to (out_h, out_w), then min-max normalize so the
/// rendered extremes hit exactly 0 and 255. A zero-range grid renders as
/// all zeros.
pub fn render_image(s: &Scalogram, out_h: usize, out_w: usize) -> Vec<Vec<u8>> {
    resize_normalize(&s.magnitudes, out_h, out_w)
}

fn resize_normalize(grid: &[Vec<f64>], out_h: usize, out_w: usize) -> Vec<Vec<u8>> {
    assert!(!grid.is_empty() && !grid[0].is_empty(), "magnitudes must be non-empty");
    assert!(out_h > 0 && out_w > 0);
    let in_h = grid.len();
    let in_w = grid[0].len();

    let coord = |o: usize, out_n: usize, in_n: usize| -> (usize, usize, f64) {
        if out_n == 1 || in_n == 1 {
            return (0, 0, 0.0);
        }
        let pos = o as f64 * (in_n - 1) as f64 / (out_n - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(in_n - 1);
        (lo, hi, pos - lo as f64)
    };

    let mut resized = vec![vec![0.0; out_w]; out_h];
    let mut lo_v = f64::INFINITY;
    let mut hi_v = f64::NEG_INFINITY;
    for (r, row_out) in resized.iter_mut().enumerate() {
        let (r0, r1, fr) = coord(r, out_h, in_h);
        for (c, v) in row_out.iter_mut().enumerate() {
            let (c0, c1, fc) = coord(c, out_w, in_w);
            let top = grid[r0][c0] * (1.0 - fc) + grid[r0][c1] * fc;
            let bot = grid[r1][c0] * (1.0 - fc) + grid[r1][c1] * fc;
            *v = top * (1.0 - fr) + bot * fr;
            lo_v = lo_v.min(*v);
            hi_v = hi_v.max(*v);
        }
    }

    let range = hi_v - lo_v;
    let mut out = vec![vec![0u8; out_w]; out_h];
    if range > 0.0 {
        for r in 0..out_h {
            for c in 0..out_w {
                out[r][c] = ((resized[r][c] - lo_v) / range * 255.0).round() as u8;
            }
        }
    }
    out
}

/// Write a grayscale image as binary PGM (P5, maxval 255).
pub fn write_pgm(path: &Path, image: &[Vec<u8>]) -> std::io::Result<()> {
    assert!(!image.is_empty() && !image[0].is_empty());
    let mut f = BufWriter::new(File::create(path)?);
    write!(f, "P5\n{} {}\n255\n", image[0].len(), image.len())?;
    for row in image {
        f.write_all(row)?;
    }
    f.flush()
}
