//! Two-stage workload classifier and its evaluation harness.
//!
//! Stage 1 is a 2D network, pretrained on surrogate scalogram textures with
//! its early layers frozen, that detects workload versus rest from the
//! wavelet scalogram of a feature window. Windows it flags as workload are
//! passed to stage 2, a 1D network that names the task; rest windows never
//! reach stage 2. The module also provides confusion-matrix metrics, flat
//! (un-gated) and baseline evaluations for comparison, and a repeated
//! stratified-split experiment with CSV reports.

use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

use crate::baselines::{elm_fit, melm_fit, BaselineError};
use crate::cwt::{render_image, CwtConfig, CwtError, CwtPlan};
use crate::features::{split_indices, FeatureError, FeatureWindow};
use crate::nn::{
    argmax, binary_arch, multiclass_arch, pretrain_and_freeze, train, Model, NnError, Tensor,
    TrainConfig, TrainHistory,
};
use crate::rng::derive_seed;
use crate::signals::Label;
use crate::synth::{generate_pretraining_set, SynthError};

#[derive(Debug, Error)]
pub enum CascadeError {
    #[error("cascade stages are not trained")]
    ModelNotTrained,
    #[error("no windows to evaluate")]
    EmptyInput,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("stage shape: {0}")]
    StageShape(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Cwt(#[from] CwtError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CascadeError + '_ {
    move |source| CascadeError::Io { path: path.to_path_buf(), source }
}

/// Row-major count grid, rows = true class, columns = predicted class.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
    pub class_names: Vec<String>,
}

impl ConfusionMatrix {
    pub fn new(class_names: Vec<String>) -> Self {
        let k = class_names.len();
        Self { counts: vec![vec![0; k]; k], class_names }
    }

    pub fn k(&self) -> usize {
        self.class_names.len()
    }

    pub fn record(&mut self, true_class: usize, predicted: usize) {
        self.counts[true_class][predicted] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Row sum: how many evaluated windows truly belong to class `k`.
    pub fn support(&self, k: usize) -> u64 {
        self.counts[k].iter().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let trace: u64 = (0..self.k()).map(|i| self.counts[i][i]).sum();
        trace as f64 / self.total() as f64
    }

    /// Column-wise: fraction of `k` predictions that were right. A class
    /// never predicted has precision 0 by convention.
    pub fn precision(&self, k: usize) -> f64 {
        let col: u64 = self.counts.iter().map(|row| row[k]).sum();
        if col == 0 {
            0.0
        } else {
            self.counts[k][k] as f64 / col as f64
        }
    }

    /// Row-wise: fraction of true `k` windows recovered. A class with no
    /// support has recall 0 by convention.
    pub fn recall(&self, k: usize) -> f64 {
        let row = self.support(k);
        if row == 0 {
            0.0
        } else {
            self.counts[k][k] as f64 / row as f64
        }
    }
}

/// Multiclass names in class-index order.
pub fn task_class_names() -> Vec<String> {
    (0..5).map(|i| Label::from_class_index(i).unwrap().as_str().to_string()).collect()
}

/// Detector names in class-index order (rest = 0, workload = 1).
pub fn binary_class_names() -> Vec<String> {
    vec!["NoTask".into(), "CWL".into()]
}

/// Rescale an 8-bit image into a `[1, h, w]` network input in `[0, 1]`.
pub fn image_tensor(img: &[Vec<u8>]) -> Tensor {
    let h = img.len();
    let w = img[0].len();
    let mut data = Vec::with_capacity(h * w);
    for row in img {
        for &p in row {
            data.push(f64::from(p) / 255.0);
        }
    }
    Tensor::new(vec![1, h, w], data)
}

/// Render one feature vector's scalogram as a stage-1 input tensor.
pub fn scalogram_tensor(plan: &CwtPlan, vector: &[f64], size: usize) -> Result<Tensor, CascadeError> {
    let s = plan.transform(vector)?;
    Ok(image_tensor(&render_image(&s, size, size)))
}

/// Precompute stage-1 input tensors for a batch of windows.
pub fn compute_images(
    windows: &[FeatureWindow],
    fs_hz: f64,
    cwt: &CwtConfig,
    size: usize,
) -> Result<Vec<Tensor>, CascadeError> {
    let plan = CwtPlan::new(fs_hz, cwt)?;
    windows.iter().map(|w| scalogram_tensor(&plan, &w.vector, size)).collect()
}

#[derive(Debug, Clone)]
pub struct CascadePrediction {
    pub label: Label,
    /// Detector probabilities in class-index order `[NoTask, CWL]`.
    pub stage1_probs: [f64; 2],
    /// Stage-2 probabilities over all five classes; `None` when the
    /// detector gated the window out and stage 2 never ran.
    pub stage2_probs: Option<Vec<f64>>,
}

/// The two trained stages plus the scalogram recipe that feeds stage 1.
#[derive(Debug, Clone)]
pub struct CascadeModel {
    pub cwt_cfg: CwtConfig,
    /// Sample rate the feature vector is treated as for its scalogram.
    pub fs_hz: f64,
    pub image_size: usize,
    stage1: Option<Model>,
    stage2: Option<Model>,
}

impl CascadeModel {
    pub fn new(cwt_cfg: CwtConfig, fs_hz: f64, image_size: usize) -> Self {
        Self { cwt_cfg, fs_hz, image_size, stage1: None, stage2: None }
    }

    /// Install the binary detector; must map `[1, size, size]` to 2 classes.
    pub fn set_stage1(&mut self, m: Model) -> Result<(), CascadeError> {
        let out = m.output_shape()?;
        if out != [2] {
            return Err(CascadeError::StageShape(format!("stage1 must emit 2 classes, got {out:?}")));
        }
        let want = vec![1, self.image_size, self.image_size];
        if m.input_shape != want {
            return Err(CascadeError::StageShape(format!(
                "stage1 input {:?} does not match scalogram shape {want:?}",
                m.input_shape
            )));
        }
        self.stage1 = Some(m);
        Ok(())
    }

    /// Install the task classifier; must map `[1, n]` to 5 classes.
    pub fn set_stage2(&mut self, m: Model) -> Result<(), CascadeError> {
        let out = m.output_shape()?;
        if out != [5] {
            return Err(CascadeError::StageShape(format!("stage2 must emit 5 classes, got {out:?}")));
        }
        if m.input_shape.len() != 2 || m.input_shape[0] != 1 {
            return Err(CascadeError::StageShape(format!(
                "stage2 expects a [1, n] vector input, got {:?}",
                m.input_shape
            )));
        }
        self.stage2 = Some(m);
        Ok(())
    }

    pub fn stage1(&self) -> Option<&Model> {
        self.stage1.as_ref()
    }

    pub fn stage2(&self) -> Option<&Model> {
        self.stage2.as_ref()
    }

    pub fn is_trained(&self) -> bool {
        self.stage1.is_some() && self.stage2.is_some()
    }

    /// Classify one window: scalogram into stage 1, and only if it flags
    /// workload, the raw vector into stage 2 with the rest class masked.
    pub fn predict(&self, w: &FeatureWindow) -> Result<CascadePrediction, CascadeError> {
        let plan = CwtPlan::new(self.fs_hz, &self.cwt_cfg)?;
        let img = scalogram_tensor(&plan, &w.vector, self.image_size)?;
        self.predict_with_image(&img, &w.vector)
    }

    /// `predict` with the scalogram tensor already computed.
    pub fn predict_with_image(&self, image: &Tensor, vector: &[f64]) -> Result<CascadePrediction, CascadeError> {
        let s1 = self.stage1.as_ref().ok_or(CascadeError::ModelNotTrained)?;
        let s2 = self.stage2.as_ref().ok_or(CascadeError::ModelNotTrained)?;
        let p1 = s1.forward(image)?;
        let stage1_probs = [p1.data[0], p1.data[1]];
        if argmax(&p1.data) == 0 {
            return Ok(CascadePrediction { label: Label::NoTask, stage1_probs, stage2_probs: None });
        }
        let x = Tensor::new(vec![1, vector.len()], vector.to_vec());
        let p2 = s2.forward(&x)?;
        // rest is stage 1's call: mask its logit and pick among the tasks
        let label = Label::from_class_index(argmax(&p2.data[..4])).unwrap();
        Ok(CascadePrediction { label, stage1_probs, stage2_probs: Some(p2.data) })
    }
}

/// Cascade metrics over one window set: the end-to-end confusion, the
/// detector's own confusion, and the gating counters.
#[derive(Debug, Clone)]
pub struct CascadeEval {
    pub confusion: ConfusionMatrix,
    pub stage1_confusion: ConfusionMatrix,
    pub stage1_positives: u64,
    pub stage2_calls: u64,
}

/// Evaluate the gated cascade window by window. `images` may carry
/// precomputed stage-1 tensors parallel to `windows`.
pub fn evaluate_cascade(
    model: &CascadeModel,
    windows: &[FeatureWindow],
    images: Option<&[Tensor]>,
) -> Result<CascadeEval, CascadeError> {
    if windows.is_empty() {
        return Err(CascadeError::EmptyInput);
    }
    if let Some(imgs) = images {
        if imgs.len() != windows.len() {
            return Err(CascadeError::InvalidConfig(format!(
                "{} cached images for {} windows",
                imgs.len(),
                windows.len()
            )));
        }
    }
    let plan = match images {
        Some(_) => None,
        None => Some(CwtPlan::new(model.fs_hz, &model.cwt_cfg)?),
    };
    let mut eval = CascadeEval {
        confusion: ConfusionMatrix::new(task_class_names()),
        stage1_confusion: ConfusionMatrix::new(binary_class_names()),
        stage1_positives: 0,
        stage2_calls: 0,
    };
    for (i, w) in windows.iter().enumerate() {
        let pred = match images {
            Some(imgs) => model.predict_with_image(&imgs[i], &w.vector)?,
            None => {
                let img = scalogram_tensor(plan.as_ref().unwrap(), &w.vector, model.image_size)?;
                model.predict_with_image(&img, &w.vector)?
            }
        };
        let s1_pred = if pred.stage1_probs[1] > pred.stage1_probs[0] { 1 } else { 0 };
        eval.stage1_positives += u64::from(s1_pred == 1);
        eval.stage2_calls += u64::from(pred.stage2_probs.is_some());
        eval.stage1_confusion.record(w.binary_label.class_index(), s1_pred);
        eval.confusion.record(w.task_label.class_index(), pred.label.class_index());
    }
    Ok(eval)
}

/// Evaluate a 5-class network directly (no gating), for the ablation row.
pub fn evaluate_multiclass(net: &Model, windows: &[FeatureWindow]) -> Result<ConfusionMatrix, CascadeError> {
    if windows.is_empty() {
        return Err(CascadeError::EmptyInput);
    }
    let mut cm = ConfusionMatrix::new(task_class_names());
    for w in windows {
        let x = Tensor::new(vec![1, w.vector.len()], w.vector.clone());
        let p = net.forward(&x)?;
        cm.record(w.task_label.class_index(), argmax(&p.data));
    }
    Ok(cm)
}

/// Which model families an experiment trains and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelSelection {
    pub cnn: bool,
    pub elm: bool,
    pub melm: bool,
}

impl Default for ModelSelection {
    fn default() -> Self {
        Self { cnn: true, elm: true, melm: true }
    }
}

impl ModelSelection {
    /// Parse a comma list of `cnn1d`, `elm`, `melm`; unknown names error.
    pub fn parse(s: &str) -> Result<Self, CascadeError> {
        let mut sel = Self { cnn: false, elm: false, melm: false };
        for tok in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            match tok {
                "cnn1d" => sel.cnn = true,
                "elm" => sel.elm = true,
                "melm" => sel.melm = true,
                other => {
                    return Err(CascadeError::InvalidConfig(format!("unknown model '{other}'")))
                }
            }
        }
        if sel == (Self { cnn: false, elm: false, melm: false }) {
            return Err(CascadeError::InvalidConfig("no models selected".into()));
        }
        Ok(sel)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub repeats: usize,
    pub train_frac: f64,
    pub cwt: CwtConfig,
    /// Rate the 848-sample window is treated as when building scalograms.
    pub fs_hz: f64,
    pub image_size: usize,
    pub pretrain_images: usize,
    pub pretrain_epochs: usize,
    /// Trainable parameterized layers at the tail of stage 1; everything
    /// earlier stays frozen at its pretrained values.
    pub freeze_k: usize,
    pub finetune_epochs: usize,
    pub stage2_epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub elm_hidden: usize,
    pub melm_dims: Vec<usize>,
    pub melm_hidden: usize,
    pub ridge: f64,
    pub models: ModelSelection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            repeats: 5,
            train_frac: 0.7,
            cwt: CwtConfig::default(),
            fs_hz: 500.0,
            image_size: 128,
            pretrain_images: 240,
            pretrain_epochs: 15,
            freeze_k: 1,
            finetune_epochs: 50,
            stage2_epochs: 12,
            lr: 1e-3,
            batch_size: 32,
            elm_hidden: 256,
            melm_dims: vec![256, 128],
            melm_hidden: 256,
            ridge: 1e-6,
            models: ModelSelection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), CascadeError> {
        let bad = |m: &str| Err(CascadeError::InvalidConfig(m.into()));
        if self.repeats == 0 {
            return bad("repeats must be >= 1");
        }
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            return bad("train_frac must lie in (0, 1)");
        }
        if self.models.cnn {
            if self.image_size == 0 {
                return bad("image_size must be positive");
            }
            if self.pretrain_images < 4 || self.pretrain_images % 2 != 0 {
                return bad("pretrain_images must be an even count >= 4");
            }
            if self.pretrain_epochs == 0 || self.finetune_epochs == 0 || self.stage2_epochs == 0 {
                return bad("epoch counts must be >= 1");
            }
            if !(self.lr.is_finite() && self.lr > 0.0) {
                return bad("lr must be positive and finite");
            }
            if self.batch_size == 0 {
                return bad("batch_size must be >= 1");
            }
        }
        if (self.models.elm || self.models.melm) && self.elm_hidden == 0 {
            return bad("elm_hidden must be >= 1");
        }
        if self.models.melm && (self.melm_hidden == 0 || self.melm_dims.iter().any(|&d| d == 0)) {
            return bad("melm layer sizes must be >= 1");
        }
        Ok(())
    }
}

/// Per-repeat cascade results.
#[derive(Debug, Clone)]
pub struct CascadeParts {
    pub train: CascadeEval,
    pub test: CascadeEval,
    /// Un-gated stage-2 evaluation over all five classes.
    pub flat_train: ConfusionMatrix,
    pub flat_test: ConfusionMatrix,
    pub stage1_history: TrainHistory,
    pub stage2_history: TrainHistory,
    /// Checksum of the frozen prefix after fine-tuning; must equal the
    /// pretrained value in `PretrainParts`.
    pub frozen_checksum_after: u64,
    pub stage1_finetune_s: f64,
    pub stage2_train_s: f64,
}

/// Per-repeat baseline results.
#[derive(Debug, Clone)]
pub struct BaselineParts {
    pub train: ConfusionMatrix,
    pub test: ConfusionMatrix,
    pub fit_s: f64,
}

#[derive(Debug, Clone)]
pub struct RepeatOutcome {
    pub split_seed: u64,
    pub cnn: Option<CascadeParts>,
    pub elm: Option<BaselineParts>,
    pub melm: Option<BaselineParts>,
}

/// Shared stage-1 pretraining artifacts (computed once per experiment).
#[derive(Debug, Clone)]
pub struct PretrainParts {
    pub history: TrainHistory,
    pub frozen_checksum: u64,
    /// Layer index of the freeze boundary; layers before it never change
    /// during fine-tuning.
    pub boundary: usize,
    pub pretrain_s: f64,
    /// Scalogram rendering plus frozen-prefix forward pass for the corpus.
    pub cache_build_s: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub repeats: Vec<RepeatOutcome>,
    pub pretrain: Option<PretrainParts>,
    /// The trained model of the last repeat, for downstream prediction.
    pub final_model: Option<CascadeModel>,
}

/// Repeat the stratified split/train/evaluate cycle `cfg.repeats` times
/// with split seeds `cfg.seed .. cfg.seed + repeats`. Stage 1 is pretrained
/// once on the surrogate corpus; each repeat fine-tunes its trainable tail
/// on cached frozen-prefix features, which matches full-model training
/// with a frozen prefix exactly because the layer computation sequence is
/// unchanged.
pub fn run_experiment(dataset: &[FeatureWindow], cfg: &ExperimentConfig) -> Result<ExperimentReport, CascadeError> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(CascadeError::EmptyInput);
    }
    let vec_len = dataset[0].vector.len();

    // shared stage-1 artifacts: pretrained base + per-window prefix features
    let mut pretrain = None;
    let mut pretrained: Option<Model> = None;
    let mut prefix_feats: Vec<Tensor> = Vec::new();
    let mut xs: Vec<Tensor> = Vec::new();
    if cfg.models.cnn {
        let t0 = Instant::now();
        let corpus = generate_pretraining_set(derive_seed(cfg.seed, "cascade/pretrain/data"), cfg.pretrain_images)?;
        if corpus[0].image.len() != cfg.image_size {
            return Err(CascadeError::InvalidConfig(format!(
                "image_size {} does not match the {}-pixel pretraining corpus",
                cfg.image_size,
                corpus[0].image.len()
            )));
        }
        let surrogate: Vec<(Tensor, usize)> =
            corpus.iter().map(|p| (image_tensor(&p.image), p.class)).collect();
        let base = Model::new(
            vec![1, cfg.image_size, cfg.image_size],
            &binary_arch(),
            derive_seed(cfg.seed, "cascade/stage1/init"),
        )?;
        let pre_cfg = TrainConfig {
            epochs: cfg.pretrain_epochs,
            lr: cfg.lr,
            batch_size: cfg.batch_size,
            seed: derive_seed(cfg.seed, "cascade/stage1/pretrain"),
            ..TrainConfig::default()
        };
        let (model, history) = pretrain_and_freeze(&surrogate, base, &pre_cfg, cfg.freeze_k)?;
        let boundary = model.frozen_prefix;
        let frozen_checksum = model.param_checksum(boundary);
        let pretrain_s = t0.elapsed().as_secs_f64();

        let t1 = Instant::now();
        let plan = CwtPlan::new(cfg.fs_hz, &cfg.cwt)?;
        prefix_feats.reserve(dataset.len());
        xs.reserve(dataset.len());
        for w in dataset {
            let img = scalogram_tensor(&plan, &w.vector, cfg.image_size)?;
            prefix_feats.push(model.forward_prefix(&img, boundary)?);
            xs.push(Tensor::new(vec![1, vec_len], w.vector.clone()));
        }
        let cache_build_s = t1.elapsed().as_secs_f64();

        pretrain = Some(PretrainParts { history, frozen_checksum, boundary, pretrain_s, cache_build_s });
        pretrained = Some(model);
    }

    let mut repeats = Vec::with_capacity(cfg.repeats);
    let mut final_model = None;
    for r in 0..cfg.repeats {
        let split_seed = cfg.seed + r as u64;
        let (tr, te) = split_indices(dataset, cfg.train_frac, split_seed)?;

        let mut cnn = None;
        if let (Some(pre), Some(base)) = (&pretrain, &pretrained) {
            // stage 2: fresh 1D net per repeat on the raw vectors
            let t0 = Instant::now();
            let train2: Vec<(Tensor, usize)> =
                tr.iter().map(|&i| (xs[i].clone(), dataset[i].task_label.class_index())).collect();
            let mut stage2 = Model::new(
                vec![1, vec_len],
                &multiclass_arch(),
                derive_seed(cfg.seed, &format!("cascade/stage2/init/{r}")),
            )?;
            let stage2_history = train(
                &mut stage2,
                &train2,
                &TrainConfig {
                    epochs: cfg.stage2_epochs,
                    lr: cfg.lr,
                    batch_size: cfg.batch_size,
                    seed: derive_seed(cfg.seed, &format!("cascade/stage2/train/{r}")),
                    ..TrainConfig::default()
                },
            )?;
            let stage2_train_s = t0.elapsed().as_secs_f64();

            // stage 1: fine-tune the trainable tail on frozen features
            let t1 = Instant::now();
            let mut tail = base.split_tail(pre.boundary)?;
            let tail_data: Vec<(Tensor, usize)> = tr
                .iter()
                .map(|&i| (prefix_feats[i].clone(), dataset[i].binary_label.class_index()))
                .collect();
            let stage1_history = train(
                &mut tail,
                &tail_data,
                &TrainConfig {
                    epochs: cfg.finetune_epochs,
                    lr: cfg.lr,
                    batch_size: cfg.batch_size,
                    seed: derive_seed(cfg.seed, &format!("cascade/stage1/finetune/{r}")),
                    ..TrainConfig::default()
                },
            )?;
            let mut stage1 = base.clone();
            stage1.write_tail_params(pre.boundary, &tail);
            let stage1_finetune_s = t1.elapsed().as_secs_f64();
            let frozen_checksum_after = stage1.param_checksum(pre.boundary);

            let eval_split = |idx: &[usize]| -> Result<(CascadeEval, ConfusionMatrix), CascadeError> {
                let mut eval = CascadeEval {
                    confusion: ConfusionMatrix::new(task_class_names()),
                    stage1_confusion: ConfusionMatrix::new(binary_class_names()),
                    stage1_positives: 0,
                    stage2_calls: 0,
                };
                let mut flat = ConfusionMatrix::new(task_class_names());
                for &i in idx {
                    let p1 = tail.forward(&prefix_feats[i])?;
                    let s1_pred = argmax(&p1.data);
                    eval.stage1_confusion.record(dataset[i].binary_label.class_index(), s1_pred);
                    let p2 = stage2.forward(&xs[i])?;
                    flat.record(dataset[i].task_label.class_index(), argmax(&p2.data));
                    let label = if s1_pred == 1 {
                        eval.stage1_positives += 1;
                        eval.stage2_calls += 1;
                        Label::from_class_index(argmax(&p2.data[..4])).unwrap()
                    } else {
                        Label::NoTask
                    };
                    eval.confusion.record(dataset[i].task_label.class_index(), label.class_index());
                }
                Ok((eval, flat))
            };
            let (train_eval, flat_train) = eval_split(&tr)?;
            let (test_eval, flat_test) = eval_split(&te)?;

            if r + 1 == cfg.repeats {
                let mut m = CascadeModel::new(cfg.cwt.clone(), cfg.fs_hz, cfg.image_size);
                m.set_stage1(stage1)?;
                m.set_stage2(stage2)?;
                final_model = Some(m);
            }

            cnn = Some(CascadeParts {
                train: train_eval,
                test: test_eval,
                flat_train,
                flat_test,
                stage1_history,
                stage2_history,
                frozen_checksum_after,
                stage1_finetune_s,
                stage2_train_s,
            });
        }

        let confusions = |predict: &dyn Fn(&[Vec<f64>]) -> Result<Vec<usize>, BaselineError>|
         -> Result<(ConfusionMatrix, ConfusionMatrix), CascadeError> {
            let mut cms = Vec::new();
            for idx in [&tr, &te] {
                let x: Vec<Vec<f64>> = idx.iter().map(|&i| dataset[i].vector.clone()).collect();
                let preds = predict(&x)?;
                let mut cm = ConfusionMatrix::new(task_class_names());
                for (&i, &p) in idx.iter().zip(&preds) {
                    cm.record(dataset[i].task_label.class_index(), p);
                }
                cms.push(cm);
            }
            let test = cms.pop().unwrap();
            let train = cms.pop().unwrap();
            Ok((train, test))
        };

        let xtr: Vec<Vec<f64>> = tr.iter().map(|&i| dataset[i].vector.clone()).collect();
        let ytr: Vec<usize> = tr.iter().map(|&i| dataset[i].task_label.class_index()).collect();

        let mut elm = None;
        if cfg.models.elm {
            let t0 = Instant::now();
            let m = elm_fit(&xtr, &ytr, 5, cfg.elm_hidden, cfg.ridge, derive_seed(cfg.seed, &format!("cascade/elm/{r}")))?;
            let fit_s = t0.elapsed().as_secs_f64();
            let (train_cm, test_cm) = confusions(&|x| m.predict(x))?;
            elm = Some(BaselineParts { train: train_cm, test: test_cm, fit_s });
        }

        let mut melm = None;
        if cfg.models.melm {
            let t0 = Instant::now();
            let m = melm_fit(
                &xtr,
                &ytr,
                5,
                &cfg.melm_dims,
                cfg.melm_hidden,
                cfg.ridge,
                derive_seed(cfg.seed, &format!("cascade/melm/{r}")),
            )?;
            let fit_s = t0.elapsed().as_secs_f64();
            let (train_cm, test_cm) = confusions(&|x| m.predict(x))?;
            melm = Some(BaselineParts { train: train_cm, test: test_cm, fit_s });
        }

        repeats.push(RepeatOutcome { split_seed, cnn, elm, melm });
    }

    Ok(ExperimentReport { repeats, pretrain, final_model })
}

fn mean(vals: &[f64]) -> f64 {
    vals.iter().sum::<f64>() / vals.len() as f64
}

/// One (matrix, names) pair per repeat for a given report row.
fn collect<'a>(
    report: &'a ExperimentReport,
    row: &str,
    split: &str,
) -> Vec<&'a ConfusionMatrix> {
    report
        .repeats
        .iter()
        .filter_map(|r| match (row, split) {
            ("stage1", "train") => r.cnn.as_ref().map(|c| &c.train.stage1_confusion),
            ("stage1", "test") => r.cnn.as_ref().map(|c| &c.test.stage1_confusion),
            ("cascade", "train") => r.cnn.as_ref().map(|c| &c.train.confusion),
            ("cascade", "test") => r.cnn.as_ref().map(|c| &c.test.confusion),
            ("stage2_flat", "train") => r.cnn.as_ref().map(|c| &c.flat_train),
            ("stage2_flat", "test") => r.cnn.as_ref().map(|c| &c.flat_test),
            ("elm", "train") => r.elm.as_ref().map(|b| &b.train),
            ("elm", "test") => r.elm.as_ref().map(|b| &b.test),
            ("melm", "train") => r.melm.as_ref().map(|b| &b.train),
            ("melm", "test") => r.melm.as_ref().map(|b| &b.test),
            _ => None,
        })
        .collect()
}

const REPORT_ROWS: [&str; 5] = ["stage1", "cascade", "stage2_flat", "elm", "melm"];
const SPLITS: [&str; 2] = ["train", "test"];

/// Write `report.csv`, averaged `confusion_<split>.csv`, `loss_history.csv`,
/// and a plain-text summary into `dir`. All content is deterministic for a
/// fixed dataset and config; timings never appear in these files.
pub fn write_reports(dir: &Path, report: &ExperimentReport) -> Result<(), CascadeError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;

    // report.csv: long format, one metric value per row
    let mut csv = String::from("model,repeat,split,metric,class,value\n");
    for row in REPORT_ROWS {
        for split in SPLITS {
            let cms = collect(report, row, split);
            if cms.is_empty() {
                continue;
            }
            let names = &cms[0].class_names;
            for (r, cm) in cms.iter().enumerate() {
                csv.push_str(&format!("{row},{r},{split},accuracy,,{}\n", cm.accuracy()));
                for (k, name) in names.iter().enumerate() {
                    csv.push_str(&format!("{row},{r},{split},precision,{name},{}\n", cm.precision(k)));
                    csv.push_str(&format!("{row},{r},{split},recall,{name},{}\n", cm.recall(k)));
                }
            }
            let accs: Vec<f64> = cms.iter().map(|cm| cm.accuracy()).collect();
            csv.push_str(&format!("{row},mean,{split},accuracy,,{}\n", mean(&accs)));
            for (k, name) in names.iter().enumerate() {
                let ps: Vec<f64> = cms.iter().map(|cm| cm.precision(k)).collect();
                let rs: Vec<f64> = cms.iter().map(|cm| cm.recall(k)).collect();
                csv.push_str(&format!("{row},mean,{split},precision,{name},{}\n", mean(&ps)));
                csv.push_str(&format!("{row},mean,{split},recall,{name},{}\n", mean(&rs)));
            }
        }
    }
    let path = dir.join("report.csv");
    std::fs::write(&path, csv).map_err(io_err(&path))?;

    // averaged cascade confusion matrices
    for split in SPLITS {
        let cms = collect(report, "cascade", split);
        if cms.is_empty() {
            continue;
        }
        let names = &cms[0].class_names;
        let k = names.len();
        let mut out = String::from("true\\pred");
        for n in names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for i in 0..k {
            out.push_str(&names[i]);
            for j in 0..k {
                let vals: Vec<f64> = cms.iter().map(|cm| cm.counts[i][j] as f64).collect();
                out.push_str(&format!(",{}", mean(&vals)));
            }
            out.push('\n');
        }
        let path = dir.join(format!("confusion_{split}.csv"));
        std::fs::write(&path, out).map_err(io_err(&path))?;
    }

    // loss histories: shared pretraining plus per-repeat fine-tune/train
    let mut hist = String::from("model,repeat,epoch,loss,accuracy\n");
    let push_hist = |name: &str, repeat: &str, h: &TrainHistory, out: &mut String| {
        for (e, (l, a)) in h.loss.iter().zip(&h.accuracy).enumerate() {
            out.push_str(&format!("{name},{repeat},{e},{l},{a}\n"));
        }
    };
    if let Some(pre) = &report.pretrain {
        push_hist("stage1_pretrain", "shared", &pre.history, &mut hist);
    }
    for (r, rep) in report.repeats.iter().enumerate() {
        if let Some(c) = &rep.cnn {
            push_hist("stage1_finetune", &r.to_string(), &c.stage1_history, &mut hist);
            push_hist("stage2", &r.to_string(), &c.stage2_history, &mut hist);
        }
    }
    let path = dir.join("loss_history.csv");
    std::fs::write(&path, hist).map_err(io_err(&path))?;

    // plain-text summary
    let mut s = String::new();
    s.push_str(&format!("repeats: {}\n", report.repeats.len()));
    if let Some(pre) = &report.pretrain {
        s.push_str(&format!(
            "stage1 freeze boundary: layer {} (frozen checksum {:016x})\n",
            pre.boundary, pre.frozen_checksum
        ));
        let drifted = report
            .repeats
            .iter()
            .filter_map(|r| r.cnn.as_ref())
            .any(|c| c.frozen_checksum_after != pre.frozen_checksum);
        s.push_str(&format!("frozen prefix unchanged across repeats: {}\n", !drifted));
    }
    for row in REPORT_ROWS {
        let cms = collect(report, row, "test");
        if cms.is_empty() {
            continue;
        }
        let accs: Vec<f64> = cms.iter().map(|cm| cm.accuracy()).collect();
        s.push_str(&format!("{row} mean test accuracy: {:.4}\n", mean(&accs)));
    }
    for (r, rep) in report.repeats.iter().enumerate() {
        if let Some(c) = &rep.cnn {
            s.push_str(&format!(
                "repeat {r}: test gate positives {} / stage2 calls {}\n",
                c.test.stage1_positives, c.test.stage2_calls
            ));
        }
    }
    let path = dir.join("summary.txt");
    std::fs::write(&path, s).map_err(io_err(&path))?;
    Ok(())
}
