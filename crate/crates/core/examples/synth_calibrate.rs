//! Calibration sweep for the synthetic generator: pretraining texture
//! separability, HRF cumulative shape, and end-to-end ELM accuracy on a
//! default session.

use std::time::Instant;

use cwl_core::baselines::elm_fit;
use cwl_core::features::{segment, split_train_test, zscore_per_channel, BinaryLabel, WindowSpec};
use cwl_core::impute::{impute_pupil, FcmConfig};
use cwl_core::signals::{design_butterworth_highpass, filter_forward, resample, MultimodalRecording};
use cwl_core::synth::{generate_pretraining_set, generate_session, Hrf, SynthConfig};

fn preprocess(rec: &MultimodalRecording) -> MultimodalRecording {
    let mut rec = rec.clone();
    let fcm = FcmConfig::default();
    for p in &mut rec.pupil {
        *p = impute_pupil(p, &fcm).unwrap();
    }
    let hp = design_butterworth_highpass(5, 0.5, rec.eeg_fs()).unwrap();
    for c in rec.eeg.iter_mut().chain(rec.fnirs_hbo2.iter_mut()).chain(rec.fnirs_hbr.iter_mut()) {
        *c = filter_forward(&hp, c).unwrap();
    }
    for c in rec.eeg.iter_mut().chain(rec.fnirs_hbo2.iter_mut()).chain(rec.fnirs_hbr.iter_mut()) {
        *c = resample(c, 500.0).unwrap();
    }
    for p in rec.pupil.iter_mut() {
        *p = resample(p, 60.0).unwrap();
    }
    zscore_per_channel(&rec)
}

fn main() {
    // HRF cumulative shape
    let hrf = Hrf::default();
    let table = hrf.cumulative_table(0.01, 60.0);
    let (mut smax, mut argmax) = (0.0f64, 0usize);
    for (i, &v) in table.iter().enumerate() {
        if v > smax {
            smax = v;
            argmax = i;
        }
    }
    println!("HRF cumulative: max {smax:.4} at t = {:.2} s, plateau {:.4}", argmax as f64 * 0.01, table.last().unwrap());

    // pretraining texture separability by pixel mean
    let set = generate_pretraining_set(7, 200).unwrap();
    let means: Vec<(f64, usize)> = set
        .iter()
        .map(|p| {
            let s: u64 = p.image.iter().flatten().map(|&v| v as u64).sum();
            (s as f64 / (128.0 * 128.0), p.class)
        })
        .collect();
    let lo: Vec<f64> = means.iter().filter(|(_, c)| *c == 0).map(|(m, _)| *m).collect();
    let hi: Vec<f64> = means.iter().filter(|(_, c)| *c == 1).map(|(m, _)| *m).collect();
    let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    println!("pixel means: class0 avg {:.2} [{:.2}..{:.2}], class1 avg {:.2} [{:.2}..{:.2}]",
        avg(&lo), lo.iter().cloned().fold(f64::INFINITY, f64::min), lo.iter().cloned().fold(0.0, f64::max),
        avg(&hi), hi.iter().cloned().fold(f64::INFINITY, f64::min), hi.iter().cloned().fold(0.0, f64::max));
    // threshold sweep
    let mut best = 0.0f64;
    for t in 0..256 {
        let t = t as f64;
        let acc_a = means.iter().filter(|(m, c)| (*m > t) == (*c == 1)).count() as f64 / means.len() as f64;
        let acc_b = 1.0 - acc_a;
        best = best.max(acc_a.max(acc_b));
    }
    println!("best pixel-mean threshold accuracy: {best:.3}");

    // end-to-end ELM on one default session
    let t0 = Instant::now();
    let cfg = SynthConfig::default();
    let (rec, _gt) = generate_session(&cfg).unwrap();
    println!("generate: {:.2} s", t0.elapsed().as_secs_f64());

    let t0 = Instant::now();
    let rec = preprocess(&rec);
    println!("preprocess: {:.2} s", t0.elapsed().as_secs_f64());

    let t0 = Instant::now();
    let wins = segment(&rec, &WindowSpec::default()).unwrap();
    println!("segment: {} windows in {:.2} s", wins.len(), t0.elapsed().as_secs_f64());

    let (train, test) = split_train_test(&wins, 0.7, 42).unwrap();
    let to_xy = |ws: &[cwl_core::features::FeatureWindow]| {
        let x: Vec<Vec<f64>> = ws.iter().map(|w| w.vector.clone()).collect();
        let y: Vec<usize> = ws.iter().map(|w| BinaryLabel::from(w.task_label).class_index()).collect();
        (x, y)
    };
    let (xtr, ytr) = to_xy(&train);
    let (xte, yte) = to_xy(&test);
    let t0 = Instant::now();
    let m = elm_fit(&xtr, &ytr, 2, 256, 1e-6, 1).unwrap();
    println!("elm fit: {:.2} s", t0.elapsed().as_secs_f64());
    let acc = |p: &[usize], y: &[usize]| p.iter().zip(y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64;
    println!(
        "ELM binary: train {:.3}, test {:.3}",
        acc(&m.predict(&xtr).unwrap(), &ytr),
        acc(&m.predict(&xte).unwrap(), &yte)
    );

    // multiclass ELM as a difficulty probe
    let (xtr5, ytr5): (Vec<_>, Vec<_>) = (
        train.iter().map(|w| w.vector.clone()).collect(),
        train.iter().map(|w| w.task_label.class_index()).collect(),
    );
    let (xte5, yte5): (Vec<_>, Vec<_>) = (
        test.iter().map(|w| w.vector.clone()).collect(),
        test.iter().map(|w| w.task_label.class_index()).collect(),
    );
    let m5 = elm_fit(&xtr5, &ytr5, 5, 256, 1e-6, 1).unwrap();
    println!(
        "ELM multiclass: train {:.3}, test {:.3}",
        acc(&m5.predict(&xtr5).unwrap(), &ytr5),
        acc(&m5.predict(&xte5).unwrap(), &yte5)
    );
}
