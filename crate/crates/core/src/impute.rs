//! Blink-gap imputation by fuzzy c-means clustering of incomplete data.
//!
//! Pupil streams arrive with missing runs wherever the eye tracker lost the
//! pupil. The stream is embedded into overlapping delay vectors, clustered
//! with a partial-distance fuzzy c-means that ignores missing components,
//! and each missing entry is replaced by its membership-weighted centroid
//! estimate (optimal completion).

use thiserror::Error;

use crate::rng::seeded_rng;
use crate::signals::ChannelStream;
use rand::seq::SliceRandom;

#[derive(Debug, Error, PartialEq)]
pub enum ImputeError {
    #[error("row {0} has no observed components")]
    EmptyRow(usize),
    #[error("cannot seed {wanted} distinct centroids from the data ({found} distinct rows)")]
    DegenerateData { wanted: usize, found: usize },
    #[error("data shape {rows}x{cols} does not match fitted state ({state_rows}x{state_cols})")]
    ShapeMismatch { rows: usize, cols: usize, state_rows: usize, state_cols: usize },
    #[error("{missing} of {total} samples missing (>= 50%)")]
    TooManyMissing { missing: usize, total: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone)]
pub struct FcmConfig {
    pub n_clusters: usize,
    pub fuzzifier: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for FcmConfig {
    fn default() -> Self {
        Self { n_clusters: 3, fuzzifier: 2.0, tol: 1e-5, max_iter: 100, seed: 0 }
    }
}

impl FcmConfig {
    fn validate(&self) -> Result<(), ImputeError> {
        if self.n_clusters < 2 {
            return Err(ImputeError::InvalidConfig("n_clusters must be >= 2".into()));
        }
        if self.fuzzifier <= 1.0 {
            return Err(ImputeError::InvalidConfig("fuzzifier must be > 1".into()));
        }
        if self.tol <= 0.0 {
            return Err(ImputeError::InvalidConfig("tol must be > 0".into()));
        }
        Ok(())
    }
}

/// Fitted clustering: centroids (c x d), memberships (c x n, columns sum
/// to 1), the final objective value, and the objective after every
/// iteration (nonincreasing).
#[derive(Debug, Clone)]
pub struct FcmState {
    pub centroids: Vec<Vec<f64>>,
    pub memberships: Vec<Vec<f64>>,
    pub objective: f64,
    pub objective_history: Vec<f64>,
    /// Fuzzifier the state was fitted with; reused by [`fcm_impute`].
    pub fuzzifier: f64,
}

/// Partial squared distance between row i and centroid k: sum over observed
/// components, rescaled by d / |observed| so rows with different missing
/// counts stay comparable.
fn partial_sq_dist(row: &[f64], mask: &[bool], centroid: &[f64]) -> f64 {
    let d = row.len();
    let mut acc = 0.0;
    let mut observed = 0usize;
    for j in 0..d {
        if !mask[j] {
            let diff = row[j] - centroid[j];
            acc += diff * diff;
            observed += 1;
        }
    }
    acc * d as f64 / observed as f64
}

/// Alternating-optimization fuzzy c-means on incomplete data.
///
/// Distances use the partial-distance rescaling above. Membership update is
/// the standard u_ik = 1 / sum_j (D_ik / D_jk)^(1/(m-1)) on squared
/// distances; the centroid update is the exact minimizer of the objective,
/// i.e. a U^m-weighted mean over observed entries that keeps each row's
/// partial-distance weight d/|observed|. Both half-steps minimize the same
/// objective, so it is nonincreasing by construction. Iteration stops when
/// the largest membership change drops below `tol` or after `max_iter`.
pub fn fcm_fit_incomplete(
    data: &[Vec<f64>],
    missing_mask: &[Vec<bool>],
    cfg: &FcmConfig,
) -> Result<FcmState, ImputeError> {
    cfg.validate()?;
    let n = data.len();
    let c = cfg.n_clusters;
    let d = data.first().map_or(0, Vec::len);
    for (i, mask) in missing_mask.iter().enumerate() {
        if mask.iter().all(|&m| m) {
            return Err(ImputeError::EmptyRow(i));
        }
    }

    // Column means of observed entries fill the gaps of seed rows.
    let mut col_mean = vec![0.0; d];
    let mut col_count = vec![0usize; d];
    for (row, mask) in data.iter().zip(missing_mask) {
        for j in 0..d {
            if !mask[j] {
                col_mean[j] += row[j];
                col_count[j] += 1;
            }
        }
    }
    for j in 0..d {
        if col_count[j] > 0 {
            col_mean[j] /= col_count[j] as f64;
        }
    }
    let filled = |i: usize| -> Vec<f64> {
        (0..d).map(|j| if missing_mask[i][j] { col_mean[j] } else { data[i][j] }).collect()
    };

    // Seed centroids: walk a seeded permutation of rows, keep the first c
    // pairwise-distinct filled rows.
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded_rng(cfg.seed));
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(c);
    for &i in &order {
        let cand = filled(i);
        if !centroids.contains(&cand) {
            centroids.push(cand);
            if centroids.len() == c {
                break;
            }
        }
    }
    if centroids.len() < c {
        return Err(ImputeError::DegenerateData { wanted: c, found: centroids.len() });
    }

    let expo = 1.0 / (cfg.fuzzifier - 1.0);
    let mut memberships = vec![vec![0.0; n]; c];
    let mut objective_history = Vec::new();
    let mut dist = vec![0.0; c];
    // rescale weight d/|observed| per row, fixed across iterations
    let row_weight: Vec<f64> = missing_mask
        .iter()
        .map(|mask| d as f64 / mask.iter().filter(|&&m| !m).count() as f64)
        .collect();
    let mut um = vec![vec![0.0; n]; c];

    for _ in 0..cfg.max_iter {
        // membership half-step
        let mut max_delta = 0.0f64;
        for i in 0..n {
            for (k, centroid) in centroids.iter().enumerate() {
                dist[k] = partial_sq_dist(&data[i], &missing_mask[i], centroid);
            }
            if let Some(zero_k) = dist.iter().position(|&v| v == 0.0) {
                // coincident centroid: hard membership to the first
                // zero-distance centroid
                for k in 0..c {
                    let u: f64 = if k == zero_k { 1.0 } else { 0.0 };
                    max_delta = max_delta.max((memberships[k][i] - u).abs());
                    memberships[k][i] = u;
                }
            } else {
                for k in 0..c {
                    let mut inv = 0.0;
                    for j in 0..c {
                        inv += (dist[k] / dist[j]).powf(expo);
                    }
                    let u = 1.0 / inv;
                    max_delta = max_delta.max((memberships[k][i] - u).abs());
                    memberships[k][i] = u;
                }
            }
        }

        // centroid half-step: exact minimizer given memberships
        for k in 0..c {
            for i in 0..n {
                um[k][i] = memberships[k][i].powf(cfg.fuzzifier) * row_weight[i];
            }
        }
        for (k, centroid) in centroids.iter_mut().enumerate() {
            let mut num = vec![0.0; d];
            let mut den = vec![0.0; d];
            for i in 0..n {
                let w = um[k][i];
                let row = &data[i];
                let mask = &missing_mask[i];
                for j in 0..d {
                    if !mask[j] {
                        num[j] += w * row[j];
                        den[j] += w;
                    }
                }
            }
            for j in 0..d {
                if den[j] > 0.0 {
                    centroid[j] = num[j] / den[j];
                }
            }
        }

        let mut j_val = 0.0;
        for i in 0..n {
            for (k, centroid) in centroids.iter().enumerate() {
                j_val += memberships[k][i].powf(cfg.fuzzifier)
                    * partial_sq_dist(&data[i], &missing_mask[i], centroid);
            }
        }
        objective_history.push(j_val);

        if max_delta < cfg.tol {
            break;
        }
    }

    let objective = objective_history.last().copied().unwrap_or(0.0);
    Ok(FcmState { centroids, memberships, objective, objective_history, fuzzifier: cfg.fuzzifier })
}

/// Replace each missing entry by its optimal-completion estimate
/// sum_k u_ik^m * centroid_k[j] / sum_k u_ik^m. Observed entries pass
/// through bit-exactly.
pub fn fcm_impute(
    data: &[Vec<f64>],
    missing_mask: &[Vec<bool>],
    state: &FcmState,
) -> Result<Vec<Vec<f64>>, ImputeError> {
    let n = data.len();
    let d = data.first().map_or(0, Vec::len);
    let state_n = state.memberships.first().map_or(0, Vec::len);
    let state_d = state.centroids.first().map_or(0, Vec::len);
    if n != state_n || (n > 0 && d != state_d) || missing_mask.len() != n {
        return Err(ImputeError::ShapeMismatch { rows: n, cols: d, state_rows: state_n, state_cols: state_d });
    }

    let c = state.centroids.len();
    let mut out = data.to_vec();
    for i in 0..n {
        for j in 0..d {
            if missing_mask[i][j] {
                let mut num = 0.0;
                let mut den = 0.0;
                for k in 0..c {
                    let w = state.memberships[k][i].powf(state.fuzzifier);
                    num += w * state.centroids[k][j];
                    den += w;
                }
                out[i][j] = num / den;
            }
        }
    }
    Ok(out)
}

/// Delay-embedding dimension for pupil imputation.
pub const PUPIL_EMBED_DIM: usize = 8;

/// Fill a pupil stream's missing samples and clear its mask.
///
/// The stream is embedded as overlapping length-8 stride-1 delay vectors.
/// Rows with at least one observed sample are clustered and completed; each
/// missing sample takes the average of the estimates from every window
/// covering it. Samples deep inside long gaps (beyond reach of any window
/// holding an observed sample) are resolved by repeating the procedure with
/// previously imputed samples counted as observed; each pass shrinks every
/// remaining gap from both sides, so termination is guaranteed.
pub fn impute_pupil(x: &ChannelStream, cfg: &FcmConfig) -> Result<ChannelStream, ImputeError> {
    cfg.validate()?;
    let n = x.len();
    let missing = x.missing_count();
    if 2 * missing >= n {
        return Err(ImputeError::TooManyMissing { missing, total: n });
    }
    if missing == 0 {
        return Ok(x.clone());
    }
    let d = PUPIL_EMBED_DIM;
    assert!(n >= d, "stream shorter than the embedding dimension");

    let mut samples = x.samples.clone();
    let mut mask = x.missing_mask.clone();

    while mask.iter().any(|&m| m) {
        // embed every row that contains an observed sample; complete rows
        // anchor the cluster fit even though they contribute no write-backs
        let mut rows = Vec::new();
        let mut row_masks = Vec::new();
        let mut offsets = Vec::new();
        for start in 0..=(n - d) {
            let rmask = &mask[start..start + d];
            if rmask.iter().any(|&m| !m) {
                rows.push(samples[start..start + d].to_vec());
                row_masks.push(rmask.to_vec());
                offsets.push(start);
            }
        }
        if rows.is_empty() {
            break; // defensive: nothing imputable remains
        }

        let state = fcm_fit_incomplete(&rows, &row_masks, cfg)?;
        let completed = fcm_impute(&rows, &row_masks, &state)?;

        let mut sum = vec![0.0; n];
        let mut count = vec![0usize; n];
        for (r, &start) in offsets.iter().enumerate() {
            for j in 0..d {
                if row_masks[r][j] {
                    sum[start + j] += completed[r][j];
                    count[start + j] += 1;
                }
            }
        }
        let mut progressed = false;
        for t in 0..n {
            if count[t] > 0 {
                samples[t] = sum[t] / count[t] as f64;
                mask[t] = false;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }

    Ok(ChannelStream::new(x.name.clone(), x.fs_hz, samples))
}
