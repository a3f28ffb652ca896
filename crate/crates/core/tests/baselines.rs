use nalgebra::DMatrix;
use rand::Rng;

use cwl_core::baselines::{
    autoencoder_layer, elm_fit, melm_fit, pca_fit_transform, BaselineError,
};
use cwl_core::rng::seeded_rng;

fn random_rows(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = seeded_rng(seed);
    (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

fn blob_data(per_class: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = seeded_rng(seed);
    let centers = [[2.0, 0.0, -1.0], [-2.0, 1.5, 0.5], [0.0, -2.0, 2.0]];
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..per_class {
            x.push(center.iter().map(|&m| m + rng.random_range(-0.4..0.4)).collect());
            y.push(c);
        }
    }
    (x, y)
}

fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    hits as f64 / truth.len() as f64
}

#[test]
fn interpolation_regime_fits_training_set_exactly() {
    let x = random_rows(8, 5, 1);
    let y: Vec<usize> = (0..8).map(|i| i % 3).collect();
    let m = elm_fit(&x, &y, 3, 32, 1e-8, 2).unwrap();
    assert_eq!(accuracy(&m.predict(&x).unwrap(), &y), 1.0);
}

#[test]
fn huge_ridge_shrinks_beta_and_makes_predictions_constant() {
    let (x, y) = blob_data(10, 3);
    // growing ridge monotonically crushes the readout weights
    let mut last = f64::INFINITY;
    for lambda in [1e2, 1e6, 1e10] {
        let m = elm_fit(&x, &y, 3, 16, lambda, 4).unwrap();
        let mag = m.beta.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(mag < last, "beta magnitude must shrink as lambda grows");
        last = mag;
    }
    let mut m = elm_fit(&x, &y, 3, 16, 1e12, 4).unwrap();
    assert!(m.beta.iter().all(|v| v.abs() < 1e-9), "beta should shrink to ~0");
    // argmax is scale-invariant, so only the exact limit beta = 0 collapses
    // the labeling; check the limit object itself
    m.beta.fill(0.0);
    let preds = m.predict(&x).unwrap();
    assert!(preds.iter().all(|&p| p == preds[0]), "zero readout must predict one class");
}

#[test]
fn solved_beta_beats_random_perturbations() {
    let (x, y) = blob_data(14, 5);
    let m = elm_fit(&x, &y, 3, 16, 1e-8, 6).unwrap();

    // recompute H independently from the public fields
    let xm = DMatrix::from_fn(x.len(), x[0].len(), |i, j| x[i][j]);
    let mut h = &xm * m.w_in.transpose();
    for i in 0..h.nrows() {
        for j in 0..h.ncols() {
            h[(i, j)] = 1.0 / (1.0 + (-(h[(i, j)] + m.b[j])).exp());
        }
    }
    let mut ym = DMatrix::zeros(y.len(), 3);
    for (i, &c) in y.iter().enumerate() {
        ym[(i, c)] = 1.0;
    }
    let resid = |beta: &DMatrix<f64>| (&h * beta - &ym).iter().map(|v| v * v).sum::<f64>().sqrt();
    let base = resid(&m.beta);
    let mut rng = seeded_rng(7);
    for _ in 0..100 {
        let perturbed = m.beta.map(|v| v + rng.random_range(-0.05..0.05));
        assert!(base <= resid(&perturbed) + 1e-9, "a perturbed beta had smaller residual");
    }
}

#[test]
fn unregularized_rank_deficient_system_is_rejected() {
    // 4 samples cannot span 32 hidden units; with no ridge the normal
    // equations are singular
    let x = random_rows(4, 6, 8);
    let y = vec![0, 1, 0, 1];
    match elm_fit(&x, &y, 2, 32, 0.0, 9) {
        Err(BaselineError::SingularSystem) => {}
        other => panic!("expected SingularSystem, got {other:?}"),
    }
}

#[test]
fn hidden_layer_depends_only_on_seed_and_fit_solves_beta_only() {
    let (x, y) = blob_data(8, 10);
    let flipped: Vec<usize> = y.iter().map(|&c| (c + 1) % 3).collect();
    let a = elm_fit(&x, &y, 3, 24, 1e-6, 11).unwrap();
    let b = elm_fit(&x, &flipped, 3, 24, 1e-6, 11).unwrap();
    let bits = |m: &DMatrix<f64>| m.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.w_in), bits(&b.w_in), "hidden weights must depend only on the seed");
    assert_eq!(
        a.b.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
    assert_ne!(bits(&a.beta), bits(&b.beta), "different targets must give different beta");
}

#[test]
fn same_seed_gives_identical_predictions() {
    let (x, y) = blob_data(12, 13);
    let test = random_rows(20, 3, 14);
    let e1 = elm_fit(&x, &y, 3, 32, 1e-6, 5).unwrap();
    let e2 = elm_fit(&x, &y, 3, 32, 1e-6, 5).unwrap();
    assert_eq!(e1.predict(&test).unwrap(), e2.predict(&test).unwrap());
    let m1 = melm_fit(&x, &y, 3, &[8, 6], 32, 1e-6, 5).unwrap();
    let m2 = melm_fit(&x, &y, 3, &[8, 6], 32, 1e-6, 5).unwrap();
    assert_eq!(m1.predict(&test).unwrap(), m2.predict(&test).unwrap());
}

#[test]
fn melm_with_no_stacked_layers_reduces_to_elm() {
    let (x, y) = blob_data(12, 15);
    let test = random_rows(30, 3, 16);
    let elm = elm_fit(&x, &y, 3, 24, 1e-6, 17).unwrap();
    let melm = melm_fit(&x, &y, 3, &[], 24, 1e-6, 17).unwrap();
    assert!(melm.encoders.is_empty());
    assert_eq!(elm.predict(&test).unwrap(), melm.predict(&test).unwrap());
    let bits = |m: &DMatrix<f64>| m.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&elm.beta), bits(&melm.classifier.beta));
}

#[test]
fn autoencoder_reconstructs_interpolable_data() {
    // n <= dim puts the decoder in the interpolation regime
    let rows = random_rows(10, 12, 18);
    let x = DMatrix::from_fn(10, 12, |i, j| rows[i][j]);
    let (enc, rmse) = autoencoder_layer(&x, 12, 1e-9, 19).unwrap();
    assert_eq!(enc.shape(), (12, 12));
    assert!(rmse < 1e-3, "reconstruction rmse {rmse}");
}

#[test]
fn melm_encoder_dimensions_follow_layer_dims() {
    let (x, y) = blob_data(15, 20);
    let m = melm_fit(&x, &y, 3, &[7, 4], 16, 1e-6, 21).unwrap();
    assert_eq!(m.encoders.len(), 2);
    assert_eq!(m.encoders[0].shape(), (3, 7));
    assert_eq!(m.encoders[1].shape(), (7, 4));
    assert_eq!(m.classifier.w_in.ncols(), 4);
}

#[test]
fn pca_on_a_line_explains_everything_with_one_axis() {
    let mut rng = seeded_rng(22);
    let dir = [0.6, -0.64, 0.48];
    let x: Vec<Vec<f64>> = (0..40)
        .map(|_| {
            let t: f64 = rng.random_range(-3.0..3.0);
            dir.iter().map(|&d| 1.0 + t * d).collect()
        })
        .collect();
    let p = pca_fit_transform(&x, 1).unwrap();
    let total: f64 = {
        // total variance equals the trace of the covariance
        let full = pca_fit_transform(&x, 3).unwrap();
        full.explained_variance.iter().sum()
    };
    assert!(p.explained_variance[0] / total > 0.999, "explained ratio too small");
}

#[test]
fn full_rank_projection_reconstructs_input() {
    let x = random_rows(25, 4, 23);
    let p = pca_fit_transform(&x, 4).unwrap();
    let recon = &p.projected * &p.components;
    for i in 0..x.len() {
        for j in 0..4 {
            assert!((recon[(i, j)] + p.mean[j] - x[i][j]).abs() < 1e-8);
        }
    }
}

#[test]
fn components_are_orthonormal_and_variances_sorted() {
    let x = random_rows(60, 7, 24);
    let p = pca_fit_transform(&x, 5).unwrap();
    let gram = &p.components * p.components.transpose();
    for i in 0..5 {
        for j in 0..5 {
            let expected = if i == j { 1.0 } else { 0.0 };
            assert!((gram[(i, j)] - expected).abs() < 1e-9, "gram[{i},{j}] = {}", gram[(i, j)]);
        }
    }
    for w in p.explained_variance.windows(2) {
        assert!(w[0] >= w[1], "explained variance must be nonincreasing");
    }
    assert!(p.explained_variance.iter().all(|&v| v >= 0.0));
}

#[test]
fn pca_rejects_out_of_range_k() {
    let x = random_rows(6, 4, 25);
    for bad in [0, 5, 10] {
        match pca_fit_transform(&x, bad) {
            Err(BaselineError::KOutOfRange { k, max }) => {
                assert_eq!(k, bad);
                assert_eq!(max, 4);
            }
            other => panic!("expected KOutOfRange, got {other:?}"),
        }
    }
}
