//! Core library: a small differentiable CNN, adversarial attack generators,
//! a Fourier-magnitude adversarial-example detector, and the evaluation
//! harness that scores attacks by detection-weighted success rate.

pub mod attacks;
pub mod bench;
pub mod error;
pub mod model;
pub mod rng;
pub mod spdf;
pub mod spectral;
pub mod tensor;

pub use attacks::{run_attack, AdversarialBatch, AttackConfig, AttackMethod, NormKind, StageTag};
pub use bench::{
    asr, asrd, downsample, emit_csv, emit_svg_bars, load_cifar10, load_ppm_dir, parse_csv,
    run_cell, run_sweep, score_batch, synth_dataset, CellOptions, Dataset, DetectorBackend,
    EvalReport, EvalRow, GroupBy, LearnedDetector, SweepOutcome, SweepSpec,
};
pub use error::{Error, Result};
pub use model::{Classifier, LayerDesc, LossKind, NetworkSpec, TrainHyper, TrainedModel};
pub use spectral::{
    evaluate_detector, pair_features, stratified_split, train_detector, DetectionScore,
    DetectorHyper, DetectorKind, DetectorModel, FeatureSource, SpectralFeatureSet,
};
pub use tensor::Tensor;
