//! Throwaway timing probe (deleted before release).

use std::time::Instant;

use asrd_core::spectral::{DetectorHyper, DetectorKind, FeatureSource};
use asrd_core::{
    run_cell, synth_dataset, AttackConfig, AttackMethod, CellOptions, Dataset, NetworkSpec,
    TrainHyper, TrainedModel,
};

fn lab(res: usize, n_train: usize, epochs: usize, lr: f32) -> (TrainedModel, Dataset, f32) {
    let data = synth_dataset(res, 4, n_train + 300, 0).unwrap();
    let train = data.subset(&(0..n_train).collect::<Vec<_>>()).unwrap();
    let pool = data.subset(&(n_train..n_train + 300).collect::<Vec<_>>()).unwrap();
    let net = NetworkSpec::desk(data.dims(), 4);
    let mut model = TrainedModel::build(&net, 0).unwrap();
    let hyper = TrainHyper { epochs, batch_size: 32, lr, momentum: 0.9, seed: 0 };
    model.fit(&train.images, &train.labels, &hyper).unwrap();
    let acc = model.accuracy(&pool.images, &pool.labels).unwrap();
    (model, pool, acc)
}

fn cell(model: &TrainedModel, pool: &Dataset, method: AttackMethod, eps: Option<f32>) -> String {
    let options = CellOptions { pairs_budget: 100, test_fraction: 0.25 };
    let mut cfg = AttackConfig::new(method);
    cfg.square.n_queries = 300;
    if let Some(e) = eps {
        cfg.epsilon = e;
        cfg.alpha = e / 4.0;
    }
    let t = Instant::now();
    let row = run_cell(
        model,
        pool,
        &cfg,
        DetectorKind::RandomForest,
        &FeatureSource::Bb,
        &DetectorHyper::default(),
        &options,
        0,
    )
    .unwrap();
    format!(
        "{}@{:?}: asr={:.1?} fnr={:.1?} asrd={:.1?} note={:?} ({:.0}s)",
        method.name(),
        eps,
        row.asr,
        row.fnr,
        row.asrd,
        row.note,
        t.elapsed().as_secs_f32()
    )
}

#[test]
#[ignore]
fn recipe64() {
    let t0 = Instant::now();
    for (epochs, lr) in [(15usize, 0.01f32), (15, 0.0025), (12, 0.005)] {
        let t1 = Instant::now();
        let (m, p, acc) = lab(64, 800, epochs, lr);
        eprintln!(
            "res64 epochs={epochs} lr={lr}: acc={acc:.3} ({:.0}s)",
            t1.elapsed().as_secs_f32()
        );
        if acc >= 0.95 {
            eprintln!("  {}", cell(&m, &p, AttackMethod::Pgd, None));
            eprintln!("  {}", cell(&m, &p, AttackMethod::Deepfool, None));
            break;
        }
    }
    eprintln!("grand total {:.0}s", t0.elapsed().as_secs_f32());
}
