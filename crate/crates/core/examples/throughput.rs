//! Quick throughput probe for the desk model on this machine.

use std::time::Instant;

use asrd_core::model::LossKind;
use asrd_core::{Classifier, NetworkSpec, Tensor, TrainedModel};

fn main() {
    let spec = NetworkSpec::desk((3, 32, 32), 10);
    let model = TrainedModel::build(&spec, 0).unwrap();
    let b = 64;
    let mut data = vec![0.0f32; b * 3 * 32 * 32];
    for (i, v) in data.iter_mut().enumerate() {
        *v = ((i * 2654435761) % 1000) as f32 / 1000.0;
    }
    let batch = Tensor::new(vec![b, 3, 32, 32], data).unwrap();
    let labels: Vec<usize> = (0..b).map(|i| i % 10).collect();

    let t = Instant::now();
    let mut n = 0;
    while t.elapsed().as_secs_f64() < 2.0 {
        let _ = model.forward(&batch).unwrap();
        n += b;
    }
    println!("forward: {:.2} ms/image", t.elapsed().as_secs_f64() * 1000.0 / n as f64);

    let t = Instant::now();
    let mut n = 0;
    while t.elapsed().as_secs_f64() < 2.0 {
        let _ = model.loss_and_input_gradient(&batch, &labels, LossKind::CrossEntropy).unwrap();
        n += b;
    }
    println!("fwd+input grad: {:.2} ms/image", t.elapsed().as_secs_f64() * 1000.0 / n as f64);

    let t = Instant::now();
    let mut n = 0;
    while t.elapsed().as_secs_f64() < 4.0 {
        let _ = model.input_jacobian(&batch).unwrap();
        n += b;
    }
    println!("full jacobian (10 classes): {:.2} ms/image", t.elapsed().as_secs_f64() * 1000.0 / n as f64);

    // one training step equivalent: fwd + backward with param grads
    let mut m2 = TrainedModel::build(&spec, 1).unwrap();
    let hyper = asrd_core::TrainHyper { epochs: 1, batch_size: 32, lr: 0.01, momentum: 0.9, seed: 0 };
    let t = Instant::now();
    m2.fit(&batch, &labels, &hyper).unwrap();
    println!("train step: {:.2} ms/image", t.elapsed().as_secs_f64() * 1000.0 / b as f64);
}
