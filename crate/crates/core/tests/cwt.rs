use cwl_core::cwt::{cwt_morlet, render_image, write_pgm, CwtConfig, CwtError, CwtPlan, Scalogram};

fn tone(freq: f64, fs: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / fs).sin()).collect()
}

/// Row whose mean magnitude is largest.
fn argmax_row(s: &Scalogram) -> usize {
    let mut best = 0;
    let mut best_mean = f64::NEG_INFINITY;
    for (r, row) in s.magnitudes.iter().enumerate() {
        let m: f64 = row.iter().sum::<f64>() / row.len() as f64;
        if m > best_mean {
            best_mean = m;
            best = r;
        }
    }
    best
}

#[test]
fn tones_localize_within_one_scale_step() {
    let fs = 500.0;
    let cfg = CwtConfig::default();
    // adjacent rows differ by this log-frequency step
    let step = (cfg.freq_max_hz / cfg.freq_min_hz).ln() / (cfg.n_scales - 1) as f64;
    for f in [2.0, 8.0, 10.0, 32.0] {
        let s = cwt_morlet(&tone(f, fs, 4096), fs, &cfg).unwrap();
        let r = argmax_row(&s);
        let got = s.scale_freqs_hz[r];
        let dist = (got / f).ln().abs();
        assert!(dist <= step * 1.0001, "{f} Hz localized to {got:.3} Hz ({} steps)", dist / step);
    }
}

#[test]
fn zero_input_gives_zero_magnitudes_and_black_image() {
    let s = cwt_morlet(&vec![0.0; 600], 500.0, &CwtConfig::default()).unwrap();
    assert!(s.magnitudes.iter().flatten().all(|&v| v == 0.0));
    assert!(s.image.iter().flatten().all(|&b| b == 0));
}

#[test]
fn magnitudes_are_nonnegative_and_full_width() {
    let x: Vec<f64> = (0..900).map(|i| ((i * 37 % 101) as f64 - 50.0) * 0.02).collect();
    let cfg = CwtConfig::default();
    let s = cwt_morlet(&x, 500.0, &cfg).unwrap();
    assert_eq!(s.magnitudes.len(), cfg.n_scales);
    for row in &s.magnitudes {
        assert_eq!(row.len(), x.len());
        assert!(row.iter().all(|&v| v >= 0.0));
    }
}

#[test]
fn doubling_the_input_doubles_magnitudes_exactly() {
    let x: Vec<f64> = (0..700).map(|i| (i as f64 * 0.05).sin() + 0.3 * (i as f64 * 0.21).cos()).collect();
    let x2: Vec<f64> = x.iter().map(|v| v * 2.0).collect();
    let cfg = CwtConfig::default();
    let a = cwt_morlet(&x, 500.0, &cfg).unwrap();
    let b = cwt_morlet(&x2, 500.0, &cfg).unwrap();
    for (ra, rb) in a.magnitudes.iter().zip(&b.magnitudes) {
        for (va, vb) in ra.iter().zip(rb) {
            assert_eq!(*vb, va * 2.0);
        }
    }
}

#[test]
fn arbitrary_scaling_is_linear_to_rounding() {
    let x: Vec<f64> = (0..512).map(|i| (i as f64 * 0.11).sin()).collect();
    let k = std::f64::consts::PI;
    let xk: Vec<f64> = x.iter().map(|v| v * k).collect();
    let cfg = CwtConfig::default();
    let a = cwt_morlet(&x, 500.0, &cfg).unwrap();
    let b = cwt_morlet(&xk, 500.0, &cfg).unwrap();
    for (ra, rb) in a.magnitudes.iter().zip(&b.magnitudes) {
        for (va, vb) in ra.iter().zip(rb) {
            let want = va * k;
            assert!((vb - want).abs() <= 1e-12 * want.abs().max(1e-30), "{vb} vs {want}");
        }
    }
}

#[test]
fn shift_covariance_away_from_edges() {
    let n = 1200;
    let k = 37;
    let x: Vec<f64> = (0..n).map(|i| ((i * i) % 211) as f64 * 0.01 - 1.0).collect();
    let mut y = vec![0.0; n];
    y[k..].copy_from_slice(&x[..n - k]);

    let fs = 500.0;
    let cfg = CwtConfig::default();
    let plan = CwtPlan::new(fs, &cfg).unwrap();
    let sx = plan.transform(&x).unwrap();
    let sy = plan.transform(&y).unwrap();
    let scales = plan.scales();

    let mut rows_checked = 0;
    for (r, &scale) in scales.iter().enumerate() {
        let margin = (2.0 * scale).ceil() as usize;
        let lo = k + margin;
        let hi = n.saturating_sub(margin);
        if lo + 8 >= hi {
            continue; // wavelet wider than the usable interior
        }
        rows_checked += 1;
        for c in lo..hi {
            let d = (sy.magnitudes[r][c] - sx.magnitudes[r][c - k]).abs();
            assert!(d <= 1e-6, "row {r} col {c}: |Δ| = {d}");
        }
    }
    assert!(rows_checked >= 40, "only {rows_checked} rows had usable interior");
}

#[test]
fn scale_freqs_descend_and_cover_the_band() {
    let cfg = CwtConfig::default();
    let plan = CwtPlan::new(500.0, &cfg).unwrap();
    let freqs = plan.scale_freqs_hz();
    assert_eq!(freqs.len(), 64);
    assert!((freqs[0] - 60.0).abs() < 1e-9);
    assert!((freqs[63] - 0.5).abs() < 1e-9);
    for w in freqs.windows(2) {
        assert!(w[1] < w[0]);
    }
    // log-spaced: constant ratio between neighbors
    let ratio = freqs[0] / freqs[1];
    for w in freqs.windows(2) {
        assert!((w[0] / w[1] - ratio).abs() < 1e-9);
    }
}

#[test]
fn short_input_is_rejected() {
    let cfg = CwtConfig::default();
    assert!(matches!(
        cwt_morlet(&vec![1.0; 7], 500.0, &cfg),
        Err(CwtError::InputTooShort { len: 7, min: 8 })
    ));
    assert!(cwt_morlet(&vec![1.0; 8], 500.0, &cfg).is_ok());
}

#[test]
fn bad_configs_are_rejected() {
    let fs = 500.0;
    let bad_band = CwtConfig { freq_max_hz: 300.0, ..CwtConfig::default() }; // > fs/2
    assert!(matches!(CwtPlan::new(fs, &bad_band), Err(CwtError::InvalidConfig(_))));
    let inverted = CwtConfig { freq_min_hz: 70.0, freq_max_hz: 60.0, ..CwtConfig::default() };
    assert!(matches!(CwtPlan::new(fs, &inverted), Err(CwtError::InvalidConfig(_))));
    let one_scale = CwtConfig { n_scales: 1, ..CwtConfig::default() };
    assert!(matches!(CwtPlan::new(fs, &one_scale), Err(CwtError::InvalidConfig(_))));
}

fn scalogram_from_grid(grid: Vec<Vec<f64>>) -> Scalogram {
    Scalogram { scale_freqs_hz: vec![0.0; grid.len()], image: vec![vec![0; 1]; 1], magnitudes: grid }
}

#[test]
fn constant_grid_renders_all_zero() {
    let s = scalogram_from_grid(vec![vec![7.5; 10]; 4]);
    let img = render_image(&s, 8, 8);
    assert!(img.iter().flatten().all(|&b| b == 0));
}

#[test]
fn two_by_two_grid_anchors_corners() {
    let s = scalogram_from_grid(vec![vec![0.0, 1.0], vec![2.0, 3.0]]);
    let img = render_image(&s, 4, 4);
    assert_eq!(img[0][0], 0);
    assert_eq!(img[3][3], 255);
    // bilinear interior stays within the corner range and increases along the diagonal
    assert!(img[1][1] > img[0][0] && img[1][1] < img[3][3]);
}

#[test]
fn rendered_bytes_span_full_range() {
    let mut grid = vec![vec![0.0; 30]; 20];
    for (r, row) in grid.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = ((r * 31 + c * 17) % 97) as f64 * 0.1 + 1.0;
        }
    }
    let s = scalogram_from_grid(grid);
    for (h, w) in [(128, 128), (64, 200), (17, 13)] {
        let img = render_image(&s, h, w);
        assert_eq!(img.len(), h);
        assert_eq!(img[0].len(), w);
        let lo = img.iter().flatten().min().unwrap();
        let hi = img.iter().flatten().max().unwrap();
        assert_eq!(*lo, 0, "{h}x{w}");
        assert_eq!(*hi, 255, "{h}x{w}");
    }
}

#[test]
fn default_image_is_128_square() {
    let s = cwt_morlet(&tone(10.0, 500.0, 848), 500.0, &CwtConfig::default()).unwrap();
    assert_eq!(s.image.len(), 128);
    assert!(s.image.iter().all(|r| r.len() == 128));
    let hi = s.image.iter().flatten().max().unwrap();
    assert_eq!(*hi, 255);
}

#[test]
fn pgm_writer_emits_p5_header_and_payload() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s01_1200_Task1.pgm");
    let image: Vec<Vec<u8>> = (0..3).map(|r| (0..5).map(|c| (r * 5 + c) as u8).collect()).collect();
    write_pgm(&path, &image).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    let header = b"P5\n5 3\n255\n";
    assert_eq!(&bytes[..header.len()], header);
    assert_eq!(&bytes[header.len()..], &(0u8..15).collect::<Vec<_>>()[..]);
}
