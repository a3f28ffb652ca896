//! One-off calibration probe for the experiment defaults: stage-1 accuracy
//! under tail-only fine-tuning, stage-2 epoch requirements, baseline
//! ordering at several widths, and phase timings on the 5-subject corpus.

use std::time::Instant;

use cwl_core::baselines::{elm_fit, melm_fit};
use cwl_core::cascade::{image_tensor, scalogram_tensor};
use cwl_core::cwt::{CwtConfig, CwtPlan};
use cwl_core::features::{preprocess_recording, split_indices, FeatureWindow, PreprocessConfig};
use cwl_core::nn::{argmax, binary_arch, multiclass_arch, pretrain_and_freeze, train, Model, Tensor, TrainConfig};
use cwl_core::rng::derive_seed;
use cwl_core::synth::{generate_pretraining_set, generate_session, subject_config, SynthConfig};

fn main() {
    let root_seed = 7u64;
    let t_all = Instant::now();

    // corpus: 5 subjects, preprocessed
    let t0 = Instant::now();
    let mut windows: Vec<FeatureWindow> = Vec::new();
    for i in 0..5 {
        let cfg = subject_config(&SynthConfig::default(), root_seed, i);
        let (rec, _) = generate_session(&cfg).unwrap();
        windows.extend(preprocess_recording(&rec, &PreprocessConfig::default()).unwrap());
    }
    println!("corpus: {} windows in {:.1}s", windows.len(), t0.elapsed().as_secs_f64());

    // scalogram cache
    let t0 = Instant::now();
    let plan = CwtPlan::new(500.0, &CwtConfig::default()).unwrap();
    let images: Vec<Tensor> =
        windows.iter().map(|w| scalogram_tensor(&plan, &w.vector, 128).unwrap()).collect();
    println!("scalograms: {:.1}s", t0.elapsed().as_secs_f64());

    // stage-1 pretraining on the surrogate corpus
    let t0 = Instant::now();
    let corpus = generate_pretraining_set(derive_seed(root_seed, "cascade/pretrain/data"), 240).unwrap();
    let surrogate: Vec<(Tensor, usize)> =
        corpus.iter().map(|p| (image_tensor(&p.image), p.class)).collect();
    let base = Model::new(vec![1, 128, 128], &binary_arch(), derive_seed(root_seed, "cascade/stage1/init")).unwrap();
    let pre_cfg = TrainConfig {
        epochs: 15,
        seed: derive_seed(root_seed, "cascade/stage1/pretrain"),
        ..TrainConfig::default()
    };
    for k in [1usize, 2] {
        let (pretrained, hist) = pretrain_and_freeze(&surrogate, base.clone(), &pre_cfg, k).unwrap();
        let boundary = pretrained.frozen_prefix;
        println!(
            "pretrain k={k}: {:.1}s, final surrogate acc {:.3}, boundary {boundary}",
            t0.elapsed().as_secs_f64(),
            hist.accuracy.last().unwrap()
        );

        let t1 = Instant::now();
        let feats: Vec<Tensor> =
            images.iter().map(|im| pretrained.forward_prefix(im, boundary).unwrap()).collect();
        println!("  prefix features: {:.1}s", t1.elapsed().as_secs_f64());

        for split_seed in [root_seed, root_seed + 1] {
            let (tr, te) = split_indices(&windows, 0.7, split_seed).unwrap();
            let tail_data: Vec<(Tensor, usize)> = tr
                .iter()
                .map(|&i| (feats[i].clone(), windows[i].binary_label.class_index()))
                .collect();
            let t2 = Instant::now();
            let mut tail = pretrained.split_tail(boundary).unwrap();
            train(
                &mut tail,
                &tail_data,
                &TrainConfig {
                    epochs: 40,
                    seed: derive_seed(root_seed, "cascade/stage1/finetune/0"),
                    ..TrainConfig::default()
                },
            )
            .unwrap();
            let ft_s = t2.elapsed().as_secs_f64();
            let acc = |idx: &[usize]| {
                let hit = idx
                    .iter()
                    .filter(|&&i| {
                        argmax(&tail.forward(&feats[i]).unwrap().data)
                            == windows[i].binary_label.class_index()
                    })
                    .count();
                hit as f64 / idx.len() as f64
            };
            println!(
                "  k={k} split {split_seed}: finetune {ft_s:.1}s, train acc {:.4}, test acc {:.4}",
                acc(&tr),
                acc(&te)
            );
        }
    }

    // stage 2: multiclass accuracy by epoch count
    let (tr, te) = split_indices(&windows, 0.7, root_seed).unwrap();
    let xs: Vec<Tensor> =
        windows.iter().map(|w| Tensor::new(vec![1, 848], w.vector.clone())).collect();
    let train2: Vec<(Tensor, usize)> =
        tr.iter().map(|&i| (xs[i].clone(), windows[i].task_label.class_index())).collect();
    let mut stage2 =
        Model::new(vec![1, 848], &multiclass_arch(), derive_seed(root_seed, "cascade/stage2/init/0")).unwrap();
    let mut trained_epochs = 0;
    for target in [4usize, 8, 12, 16] {
        let t0 = Instant::now();
        train(
            &mut stage2,
            &train2,
            &TrainConfig {
                epochs: target - trained_epochs,
                seed: derive_seed(root_seed, &format!("cascade/stage2/train/chunk{target}")),
                ..TrainConfig::default()
            },
        )
        .unwrap();
        trained_epochs = target;
        let acc = |idx: &[usize]| {
            let hit = idx
                .iter()
                .filter(|&&i| {
                    argmax(&stage2.forward(&xs[i]).unwrap().data)
                        == windows[i].task_label.class_index()
                })
                .count();
            hit as f64 / idx.len() as f64
        };
        println!(
            "stage2 @{target} epochs (+{:.0}s): train {:.4}, test {:.4}",
            t0.elapsed().as_secs_f64(),
            acc(&tr),
            acc(&te)
        );
    }

    // baselines: ELM vs MELM orderings at several widths
    let xtr: Vec<Vec<f64>> = tr.iter().map(|&i| windows[i].vector.clone()).collect();
    let ytr: Vec<usize> = tr.iter().map(|&i| windows[i].task_label.class_index()).collect();
    let xte: Vec<Vec<f64>> = te.iter().map(|&i| windows[i].vector.clone()).collect();
    let yte: Vec<usize> = te.iter().map(|&i| windows[i].task_label.class_index()).collect();
    let score = |preds: &[usize]| {
        preds.iter().zip(&yte).filter(|(a, b)| a == b).count() as f64 / yte.len() as f64
    };
    for hidden in [16usize, 32, 64, 128, 256] {
        let t0 = Instant::now();
        let elm = elm_fit(&xtr, &ytr, 5, hidden, 1e-6, derive_seed(root_seed, "cascade/elm/0")).unwrap();
        let elm_s = t0.elapsed().as_secs_f64();
        let elm_acc = score(&elm.predict(&xte).unwrap());
        let t0 = Instant::now();
        let melm = melm_fit(&xtr, &ytr, 5, &[256, 128], hidden, 1e-6, derive_seed(root_seed, "cascade/melm/0")).unwrap();
        let melm_s = t0.elapsed().as_secs_f64();
        let melm_acc = score(&melm.predict(&xte).unwrap());
        println!(
            "hidden {hidden}: ELM {elm_acc:.4} ({elm_s:.1}s) vs MELM {melm_acc:.4} ({melm_s:.1}s)"
        );
    }

    println!("total {:.1}s", t_all.elapsed().as_secs_f64());
}
