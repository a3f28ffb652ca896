//! Times per-sample forward and train-step costs of both classifier
//! architectures to size experiment epoch budgets.

use std::time::Instant;

use rand::Rng;

use cwl_core::nn::{backward, binary_arch, multiclass_arch, train, Model, Tensor, TrainConfig};
use cwl_core::rng::seeded_rng;

fn random_batch(shape: &[usize], n_classes: usize, n: usize, seed: u64) -> Vec<(Tensor, usize)> {
    let mut rng = seeded_rng(seed);
    (0..n)
        .map(|_| {
            let numel: usize = shape.iter().product();
            let data = (0..numel).map(|_| rng.random_range(-1.0..1.0)).collect();
            (Tensor::new(shape.to_vec(), data), rng.random_range(0..n_classes))
        })
        .collect()
}

fn main() {
    // stage 2: 1-D CNN on 848-sample vectors
    let m2 = Model::new(vec![1, 848], &multiclass_arch(), 0).unwrap();
    let batch = random_batch(&[1, 848], 5, 32, 1);

    let t0 = Instant::now();
    for (x, _) in &batch {
        m2.forward(x).unwrap();
    }
    let fwd = t0.elapsed().as_secs_f64() / batch.len() as f64;

    let t0 = Instant::now();
    backward(&m2, &batch, 0).unwrap();
    let bwd = t0.elapsed().as_secs_f64() / batch.len() as f64;
    println!("stage2 per-sample: fwd {:.3} ms, fwd+bwd {:.3} ms", fwd * 1e3, bwd * 1e3);

    let n = 640;
    let data = random_batch(&[1, 848], 5, n, 2);
    let mut m = Model::new(vec![1, 848], &multiclass_arch(), 0).unwrap();
    let cfg = TrainConfig { epochs: 1, batch_size: 32, ..TrainConfig::default() };
    let t0 = Instant::now();
    train(&mut m, &data, &cfg).unwrap();
    let per_epoch = t0.elapsed().as_secs_f64();
    println!("stage2 epoch over {n} samples: {per_epoch:.2} s ({:.3} ms/sample)", per_epoch / n as f64 * 1e3);

    // stage 1: 2-D CNN on 128x128 scalograms
    let m1 = Model::new(vec![1, 128, 128], &binary_arch(), 0).unwrap();
    let imgs = random_batch(&[1, 128, 128], 2, 8, 3);

    let t0 = Instant::now();
    for (x, _) in &imgs {
        m1.forward(x).unwrap();
    }
    let fwd1 = t0.elapsed().as_secs_f64() / imgs.len() as f64;

    let t0 = Instant::now();
    backward(&m1, &imgs, 0).unwrap();
    let bwd1 = t0.elapsed().as_secs_f64() / imgs.len() as f64;
    println!("stage1 per-sample: fwd {:.3} ms, fwd+bwd {:.3} ms", fwd1 * 1e3, bwd1 * 1e3);

    // frozen-prefix feature extraction (through the 32-unit dense + relu)
    let t0 = Instant::now();
    for (x, _) in &imgs {
        m1.forward_prefix(x, 8).unwrap();
    }
    let feat = t0.elapsed().as_secs_f64() / imgs.len() as f64;
    println!("stage1 frozen-feature fwd: {:.3} ms/sample", feat * 1e3);

    // fine-tune cost on cached 32-dim features (tail = dense(2) + softmax)
    let tail = m1.split_tail(8).unwrap();
    let feats = random_batch(&[32], 2, 2000, 4);
    let mut tail_m = tail.clone();
    let cfg = TrainConfig { epochs: 1, batch_size: 32, ..TrainConfig::default() };
    let t0 = Instant::now();
    train(&mut tail_m, &feats, &cfg).unwrap();
    println!("stage1 tail epoch over 2000 cached features: {:.3} s", t0.elapsed().as_secs_f64());
}
