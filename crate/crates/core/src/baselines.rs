//! Classical comparators: extreme learning machine (ELM), its stacked
//! autoencoder variant (MELM), and PCA projection.
//!
//! An ELM draws a random hidden layer once, maps inputs through a sigmoid,
//! and solves the output weights in closed form with ridge-regularized least
//! squares. MELM first stacks ELM autoencoders (random projection, least
//! squares decode, encode with the decoder transposed) and fits an ELM on
//! the deepest representation. Both are deterministic under their seed and
//! orders of magnitude faster to fit than gradient training.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use thiserror::Error;

use crate::rng::{derive_seed, seeded_rng};

pub const DEFAULT_HIDDEN: usize = 256;
pub const DEFAULT_RIDGE: f64 = 1e-6;
pub const DEFAULT_MELM_DIMS: [usize; 2] = [256, 128];

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("normal equations are singular; supply a ridge term")]
    SingularSystem,
    #[error("k = {k} out of range, must lie in 1..={max}")]
    KOutOfRange { k: usize, max: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone)]
pub struct ElmModel {
    /// Random hidden weights, hidden x input; fixed at construction.
    pub w_in: DMatrix<f64>,
    /// Hidden biases; fixed at construction.
    pub b: DVector<f64>,
    /// Solved output weights, hidden x classes.
    pub beta: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct MelmModel {
    /// Per-layer linear encoders (prev_dim x layer_dim), applied left to right.
    pub encoders: Vec<DMatrix<f64>>,
    pub classifier: ElmModel,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn to_matrix(x: &[Vec<f64>]) -> Result<DMatrix<f64>, BaselineError> {
    if x.is_empty() {
        return Err(BaselineError::InvalidInput("no samples".into()));
    }
    let d = x[0].len();
    if d == 0 || x.iter().any(|r| r.len() != d) {
        return Err(BaselineError::InvalidInput("ragged or empty rows".into()));
    }
    Ok(DMatrix::from_fn(x.len(), d, |i, j| x[i][j]))
}

fn onehot(y: &[usize], n_classes: usize) -> Result<DMatrix<f64>, BaselineError> {
    if n_classes == 0 {
        return Err(BaselineError::InvalidInput("n_classes must be >= 1".into()));
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= n_classes) {
        return Err(BaselineError::InvalidInput(format!("label {bad} >= n_classes {n_classes}")));
    }
    let mut m = DMatrix::zeros(y.len(), n_classes);
    for (i, &c) in y.iter().enumerate() {
        m[(i, c)] = 1.0;
    }
    Ok(m)
}

/// Solve (AᵀA + λI) β = AᵀB.
fn ridge_solve(a: &DMatrix<f64>, b: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>, BaselineError> {
    let mut gram = a.transpose() * a;
    for i in 0..gram.nrows() {
        gram[(i, i)] += lambda;
    }
    let chol = gram.cholesky().ok_or(BaselineError::SingularSystem)?;
    Ok(chol.solve(&(a.transpose() * b)))
}

fn random_projection(input_dim: usize, hidden: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
    let mut rng = seeded_rng(seed);
    // uniform weights scaled by fan-in keep sigmoid inputs in its active range
    let limit = (6.0 / input_dim as f64).sqrt();
    let w = DMatrix::from_fn(hidden, input_dim, |_, _| rng.random_range(-limit..limit));
    let b = DVector::from_fn(hidden, |_, _| rng.random_range(-1.0..1.0));
    (w, b)
}

fn hidden_activations(x: &DMatrix<f64>, w: &DMatrix<f64>, b: &DVector<f64>) -> DMatrix<f64> {
    let mut h = x * w.transpose();
    for i in 0..h.nrows() {
        for j in 0..h.ncols() {
            h[(i, j)] = sigmoid(h[(i, j)] + b[j]);
        }
    }
    h
}

impl ElmModel {
    /// Class scores H·β for each row of `x`.
    pub fn decision(&self, x: &[Vec<f64>]) -> Result<DMatrix<f64>, BaselineError> {
        let x = to_matrix(x)?;
        if x.ncols() != self.w_in.ncols() {
            return Err(BaselineError::InvalidInput(format!(
                "expected {} features, got {}",
                self.w_in.ncols(),
                x.ncols()
            )));
        }
        Ok(hidden_activations(&x, &self.w_in, &self.b) * &self.beta)
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<usize>, BaselineError> {
        let scores = self.decision(x)?;
        Ok((0..scores.nrows()).map(|i| row_argmax(&scores, i)).collect())
    }
}

fn row_argmax(m: &DMatrix<f64>, row: usize) -> usize {
    let mut best = 0;
    for j in 1..m.ncols() {
        if m[(row, j)] > m[(row, best)] {
            best = j;
        }
    }
    best
}

/// Fit an ELM: random sigmoid hidden layer, ridge least-squares readout.
pub fn elm_fit(
    x: &[Vec<f64>],
    y: &[usize],
    n_classes: usize,
    hidden: usize,
    lambda: f64,
    seed: u64,
) -> Result<ElmModel, BaselineError> {
    if hidden == 0 {
        return Err(BaselineError::InvalidInput("hidden must be >= 1".into()));
    }
    if !(lambda >= 0.0) {
        return Err(BaselineError::InvalidInput("lambda must be >= 0".into()));
    }
    if x.len() != y.len() {
        return Err(BaselineError::InvalidInput("x and y lengths differ".into()));
    }
    let xm = to_matrix(x)?;
    let ym = onehot(y, n_classes)?;
    let (w_in, b) = random_projection(xm.ncols(), hidden, seed);
    let h = hidden_activations(&xm, &w_in, &b);
    let beta = ridge_solve(&h, &ym, lambda)?;
    Ok(ElmModel { w_in, b, beta })
}

/// One ELM autoencoder layer: random sigmoid features of `x`, a least
/// squares decoder back to `x`, and the transposed decoder as the layer's
/// linear encoder. Returns the encoder and the decode reconstruction RMSE.
pub fn autoencoder_layer(
    x: &DMatrix<f64>,
    dim: usize,
    lambda: f64,
    seed: u64,
) -> Result<(DMatrix<f64>, f64), BaselineError> {
    if dim == 0 {
        return Err(BaselineError::InvalidInput("layer dim must be >= 1".into()));
    }
    let (w, b) = random_projection(x.ncols(), dim, seed);
    let h = hidden_activations(x, &w, &b);
    let beta_dec = ridge_solve(&h, x, lambda)?; // dim x prev_dim
    let recon = &h * &beta_dec;
    let diff = &recon - x;
    let rmse = (diff.iter().map(|v| v * v).sum::<f64>() / diff.len() as f64).sqrt();
    Ok((beta_dec.transpose(), rmse))
}

impl MelmModel {
    fn encode(&self, x: DMatrix<f64>) -> DMatrix<f64> {
        self.encoders.iter().fold(x, |acc, enc| acc * enc)
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<usize>, BaselineError> {
        let xm = self.encode(to_matrix(x)?);
        let rows: Vec<Vec<f64>> = (0..xm.nrows()).map(|i| xm.row(i).iter().cloned().collect()).collect();
        self.classifier.predict(&rows)
    }
}

/// Fit a stack of ELM autoencoders, then an ELM classifier (hidden size
/// `hidden`) on the deepest representation. With empty `layer_dims` this is
/// exactly `elm_fit` with the same seed.
pub fn melm_fit(
    x: &[Vec<f64>],
    y: &[usize],
    n_classes: usize,
    layer_dims: &[usize],
    hidden: usize,
    lambda: f64,
    seed: u64,
) -> Result<MelmModel, BaselineError> {
    let mut cur = to_matrix(x)?;
    let mut encoders = Vec::with_capacity(layer_dims.len());
    for (i, &dim) in layer_dims.iter().enumerate() {
        let layer_seed = derive_seed(seed, &format!("melm/ae/{i}"));
        let (enc, _rmse) = autoencoder_layer(&cur, dim, lambda, layer_seed)?;
        cur = &cur * &enc;
        encoders.push(enc);
    }
    let rows: Vec<Vec<f64>> = (0..cur.nrows()).map(|i| cur.row(i).iter().cloned().collect()).collect();
    let classifier = elm_fit(&rows, y, n_classes, hidden, lambda, seed)?;
    Ok(MelmModel { encoders, classifier })
}

#[derive(Debug, Clone)]
pub struct Pca {
    /// Principal axes, k x d, rows orthonormal.
    pub components: DMatrix<f64>,
    /// Input projected onto the axes, n x k.
    pub projected: DMatrix<f64>,
    /// Covariance eigenvalues of the kept axes, nonincreasing.
    pub explained_variance: Vec<f64>,
    /// Column means removed before projection.
    pub mean: Vec<f64>,
}

/// Project onto the top-k eigenvectors of the centered covariance.
pub fn pca_fit_transform(x: &[Vec<f64>], k: usize) -> Result<Pca, BaselineError> {
    let xm = to_matrix(x)?;
    let (n, d) = (xm.nrows(), xm.ncols());
    let max_k = n.min(d);
    if k == 0 || k > max_k {
        return Err(BaselineError::KOutOfRange { k, max: max_k });
    }
    let mean: Vec<f64> = (0..d).map(|j| xm.column(j).sum() / n as f64).collect();
    let centered = DMatrix::from_fn(n, d, |i, j| xm[(i, j)] - mean[j]);
    let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
    let cov = centered.transpose() * &centered / denom;

    let eig = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());

    let mut components = DMatrix::zeros(k, d);
    let mut explained = Vec::with_capacity(k);
    for (row, &idx) in order.iter().take(k).enumerate() {
        let col = eig.eigenvectors.column(idx);
        // covariance is PSD; clamp eigenvalue rounding noise at zero
        explained.push(eig.eigenvalues[idx].max(0.0));
        // fix sign so the largest-magnitude entry is positive (deterministic)
        let lead = col.iter().cloned().fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        let flip = if lead < 0.0 { -1.0 } else { 1.0 };
        for j in 0..d {
            components[(row, j)] = flip * col[j];
        }
    }
    let projected = centered * components.transpose();
    Ok(Pca { components, projected, explained_variance: explained, mean })
}
