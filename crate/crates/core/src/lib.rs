//! Core library for multimodal cognitive-workload classification.
//!
//! The pipeline ingests EEG, fNIRS, and pupil-diameter recordings, fills
//! blink-induced gaps by fuzzy clustering, high-pass filters and resamples the
//! streams, segments them into 848-element feature vectors, and classifies
//! workload with a two-stage cascade: a transfer-learning binary detector on
//! wavelet scalogram images gating a 1D-CNN task classifier. Classical
//! baselines (ELM, MELM, PCA), study instruments (SURG-TLX scoring,
//! hemodynamic epoch averaging), and a seeded synthetic data generator
//! round out the toolkit.

pub mod baselines;
pub mod cascade;
pub mod cwt;
pub mod features;
pub mod impute;
pub mod nn;
pub mod rng;
pub mod signals;
pub mod study;
pub mod synth;

mod util;
