//! Evaluation harness: datasets, per-cell attack→detect→score runs, sweep
//! orchestration with a content-addressed result cache, and the reference
//! score tables the suite is checked against.

mod data;
pub mod published;
mod report;

pub use data::{
    downsample, load_cifar10, load_ppm_dir, synth_dataset, Dataset, SYNTH_RESOLUTIONS,
};
pub use report::{
    csv_string, emit_csv, emit_svg_bars, parse_csv, round2, svg_string, EvalReport, EvalRow,
    GroupBy, CSV_HEADER,
};

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::attacks::{run_attack, AdversarialBatch, AttackConfig, AttackMethod, NormKind};
use crate::error::{Error, Result};
use crate::model::{NetworkSpec, TrainHyper, TrainedModel};
use crate::rng::stream_rng;
use crate::spectral::{
    evaluate_detector, pair_features, stratified_split, train_detector, DetectionScore,
    DetectorHyper, DetectorKind, FeatureSource, SpectralFeatureSet,
};

/// Environment variable naming a cache directory; when set it overrides any
/// directory configured on the sweep itself.
pub const CACHE_ENV: &str = "SPECTRAL_ASRD_CACHE";

/// Bumped whenever a change invalidates previously cached cells.
const CACHE_VERSION: u32 = 1;

/// Attack success rate in percent: the share of samples misclassified after
/// the attack. Samples that were already misclassified clean count toward it,
/// matching the 100 − robust-accuracy reading.
pub fn asr(batch: &AdversarialBatch) -> f64 {
    if batch.is_empty() {
        return 0.0;
    }
    100.0 * batch.success.iter().filter(|&&s| s).count() as f64 / batch.len() as f64
}

/// Share of attacks that both succeed and evade detection, in percent:
/// detector false-negative rate (fraction in [0,1]) × ASR (percent).
pub fn asrd(fnr: f64, asr: f64) -> f64 {
    fnr * asr
}

/// Anything that can fit a detector on training rows and score it on held-out
/// rows. The learned detectors implement this; tests substitute oracles.
pub trait DetectorBackend {
    fn name(&self) -> &str;
    fn train_and_score(
        &self,
        train: &SpectralFeatureSet,
        test: &SpectralFeatureSet,
        seed: u64,
    ) -> Result<DetectionScore>;
}

/// The standard backend: train the configured detector kind, score it on the
/// held-out rows.
pub struct LearnedDetector {
    pub kind: DetectorKind,
    pub hyper: DetectorHyper,
}

impl DetectorBackend for LearnedDetector {
    fn name(&self) -> &str {
        self.kind.name()
    }

    fn train_and_score(
        &self,
        train: &SpectralFeatureSet,
        test: &SpectralFeatureSet,
        seed: u64,
    ) -> Result<DetectionScore> {
        let model = train_detector(train, self.kind, &self.hyper, seed)?;
        evaluate_detector(&model, test)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellOptions {
    /// Clean images attacked per cell (each successful one yields a
    /// clean/adversarial feature pair).
    pub pairs_budget: usize,
    /// Share of feature rows held out for detector scoring.
    pub test_fraction: f64,
}

impl Default for CellOptions {
    fn default() -> Self {
        CellOptions { pairs_budget: 300, test_fraction: 0.2 }
    }
}

/// Deterministic choice of `budget` indices from `0..n` (everything when the
/// budget covers n), ascending. Keyed by its own stream so the selection is
/// independent of attack-internal randomness.
pub fn sample_indices(n: usize, budget: usize, seed: u64) -> Vec<usize> {
    if budget >= n {
        return (0..n).collect();
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = stream_rng(seed, 0x5000_0000);
    for i in 0..budget {
        let j = rand::Rng::gen_range(&mut rng, i..n);
        idx.swap(i, j);
    }
    idx.truncate(budget);
    idx.sort_unstable();
    idx
}

/// Evaluate one (dataset, attack, source, detector) cell with the learned
/// detector of the given kind.
#[allow(clippy::too_many_arguments)]
pub fn run_cell(
    model: &TrainedModel,
    dataset: &Dataset,
    attack: &AttackConfig,
    kind: DetectorKind,
    source: &FeatureSource,
    hyper: &DetectorHyper,
    options: &CellOptions,
    seed: u64,
) -> Result<EvalRow> {
    let backend = LearnedDetector { kind, hyper: hyper.clone() };
    run_cell_with(model, dataset, attack, &backend, source, options, seed)
}

/// Full cell pipeline: sample the pool, attack, then [`score_batch`].
pub fn run_cell_with(
    model: &TrainedModel,
    dataset: &Dataset,
    attack: &AttackConfig,
    backend: &dyn DetectorBackend,
    source: &FeatureSource,
    options: &CellOptions,
    seed: u64,
) -> Result<EvalRow> {
    if options.pairs_budget == 0 {
        return Err(Error::config("pairs budget must be at least 1"));
    }
    if dataset.is_empty() {
        return Err(Error::contract("cannot evaluate a cell on an empty dataset"));
    }
    let picked = sample_indices(dataset.len(), options.pairs_budget, seed);
    let subset = dataset.subset(&picked)?;
    let mut config = attack.clone();
    config.seed = seed;
    let batch = run_attack(model, &config, &subset.images, &subset.labels)?;
    score_batch(model, &batch, backend, source, options.test_fraction, seed, &dataset.name)
}

/// Score an existing attack batch: extract paired spectra, split, train and
/// score the detector. Detector-stage failures and zero-success batches yield
/// rows with absent metrics rather than errors, so a sweep can record them.
pub fn score_batch(
    model: &TrainedModel,
    batch: &AdversarialBatch,
    backend: &dyn DetectorBackend,
    source: &FeatureSource,
    test_fraction: f64,
    seed: u64,
    dataset_name: &str,
) -> Result<EvalRow> {
    let asr_pct = asr(batch);
    let mut row = EvalRow {
        dataset: dataset_name.to_string(),
        attack: batch.method.name().to_string(),
        epsilon: match batch.norm {
            NormKind::Linf => Some(batch.epsilon as f64),
            NormKind::L2 => None,
        },
        source: source.name().to_string(),
        detector: backend.name().to_string(),
        asr: Some(asr_pct),
        f1: None,
        fnr: None,
        asrd: None,
        n_samples: batch.len(),
        seed,
        note: None,
    };
    let set = pair_features(batch, source, Some(model))?;
    if set.is_empty() {
        // Nothing succeeded, so nothing can evade detection either.
        row.asrd = Some(0.0);
        row.note = Some("attack produced no successful adversarial samples".to_string());
        return Ok(row);
    }
    let (train_rows, test_rows) = stratified_split(set.labels(), test_fraction, seed)?;
    let train = set.subset(&train_rows)?;
    let test = set.subset(&test_rows)?;
    match backend.train_and_score(&train, &test, seed) {
        Ok(score) => {
            row.f1 = Some(100.0 * score.f1);
            row.fnr = Some(100.0 * score.fnr);
            row.asrd = Some(asrd(score.fnr, asr_pct));
        }
        Err(e) => row.note = Some(format!("detector stage failed: {e}")),
    }
    Ok(row)
}

/// Grid of cells evaluated over synthesized datasets, one model per
/// resolution. l∞ budgets apply to the budgeted attacks only; the minimal-l2
/// methods contribute a single cell per (source, detector, seed) combination.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub resolutions: Vec<usize>,
    pub n_classes: usize,
    pub attacks: Vec<AttackMethod>,
    /// l∞ budgets in [0,1] pixel scale.
    pub epsilons: Vec<f64>,
    pub sources: Vec<FeatureSource>,
    pub detectors: Vec<DetectorKind>,
    pub seeds: Vec<u64>,
    pub options: CellOptions,
    pub train: TrainHyper,
    pub detector_hyper: DetectorHyper,
    /// Leading samples of each synthesized dataset, used to fit the model.
    pub synth_train: usize,
    /// Trailing samples forming the attack pool.
    pub synth_pool: usize,
    pub data_seed: u64,
    /// Cell cache directory; `SPECTRAL_ASRD_CACHE` overrides it, and with
    /// neither set nothing is cached.
    pub cache_dir: Option<PathBuf>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            resolutions: vec![16, 32, 64],
            n_classes: 4,
            attacks: vec![
                AttackMethod::Fgsm,
                AttackMethod::Bim,
                AttackMethod::Pgd,
                AttackMethod::Deepfool,
                AttackMethod::Cw,
                AttackMethod::Autoattack,
            ],
            epsilons: [8.0, 4.0, 2.0, 1.0, 0.5].iter().map(|e| e / 255.0).collect(),
            sources: vec![FeatureSource::Bb],
            detectors: vec![DetectorKind::Logreg, DetectorKind::RandomForest],
            seeds: vec![0],
            options: CellOptions::default(),
            train: TrainHyper::default(),
            detector_hyper: DetectorHyper::default(),
            synth_train: 2000,
            synth_pool: 600,
            data_seed: 0,
            cache_dir: None,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, empty) in [
            ("resolutions", self.resolutions.is_empty()),
            ("attacks", self.attacks.is_empty()),
            ("sources", self.sources.is_empty()),
            ("detectors", self.detectors.is_empty()),
            ("seeds", self.seeds.is_empty()),
        ] {
            if empty {
                return Err(Error::config(format!("sweep {name} list must not be empty")));
            }
        }
        for &res in &self.resolutions {
            if !SYNTH_RESOLUTIONS.contains(&res) {
                return Err(Error::config(format!(
                    "resolution {res} is not synthesizable; pick from {SYNTH_RESOLUTIONS:?}"
                )));
            }
        }
        if self.n_classes < 2 {
            return Err(Error::config("sweeps need at least two classes"));
        }
        let needs_dlr = self
            .attacks
            .iter()
            .any(|m| matches!(m, AttackMethod::ApgdDlr | AttackMethod::Autoattack));
        if needs_dlr && self.n_classes < 4 {
            return Err(Error::config(
                "the logit-ratio ensemble stages need at least four classes",
            ));
        }
        let has_linf = self.attacks.iter().any(|m| m.norm() == NormKind::Linf);
        if has_linf {
            if self.epsilons.is_empty() {
                return Err(Error::config("l-inf attacks need at least one epsilon"));
            }
            if self.epsilons.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
                return Err(Error::config("sweep epsilons must lie in (0, 1]"));
            }
        }
        if self.synth_train == 0 || self.synth_pool == 0 {
            return Err(Error::config("synth_train and synth_pool must be at least 1"));
        }
        if self.options.pairs_budget == 0 {
            return Err(Error::config("pairs budget must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub report: EvalReport,
    pub computed_cells: usize,
    pub cached_cells: usize,
}

/// Everything that determines a cell's row. Hashed into the cache key, so any
/// configuration change computes fresh cells instead of reusing stale ones.
#[derive(Serialize)]
struct CellKey<'a> {
    version: u32,
    resolution: usize,
    n_classes: usize,
    synth_train: usize,
    synth_pool: usize,
    data_seed: u64,
    train: &'a TrainHyper,
    detector_hyper: &'a DetectorHyper,
    attack: &'a AttackConfig,
    source: &'a FeatureSource,
    detector: DetectorKind,
    pairs_budget: usize,
    test_fraction: f64,
    seed: u64,
}

/// Everything the trained weights depend on. The synthesizer draws each
/// sample from its own stream, so the training prefix — and therefore the
/// model — is independent of the pool size.
#[derive(Serialize)]
struct ModelKey<'a> {
    version: u32,
    resolution: usize,
    n_classes: usize,
    synth_train: usize,
    data_seed: u64,
    train: &'a TrainHyper,
}

fn short_hash(key: &impl Serialize) -> Result<String> {
    let json = serde_json::to_string(key)
        .map_err(|e| Error::format(format!("encoding cache key: {e}")))?;
    let digest = Sha256::digest(json.as_bytes());
    Ok(digest.iter().take(8).map(|b| format!("{b:02x}")).collect())
}

fn resolve_cache_dir(spec: &SweepSpec) -> Result<Option<PathBuf>> {
    let chosen = match std::env::var_os(CACHE_ENV) {
        Some(v) if !v.is_empty() => Some(PathBuf::from(v)),
        _ => spec.cache_dir.clone(),
    };
    if let Some(dir) = &chosen {
        std::fs::create_dir_all(dir)?;
    }
    Ok(chosen)
}

fn write_cell(dir: &Path, key: &str, row: &EvalRow) -> Result<()> {
    let text = serde_json::to_string_pretty(row)
        .map_err(|e| Error::format(format!("encoding cached cell: {e}")))?;
    let tmp = dir.join(format!("{key}.json.tmp{}", std::process::id()));
    std::fs::write(&tmp, text)?;
    std::fs::rename(&tmp, dir.join(format!("{key}.json")))?;
    Ok(())
}

fn read_cell(dir: &Path, key: &str) -> Result<Option<EvalRow>> {
    let path = dir.join(format!("{key}.json"));
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path)?;
    let row = serde_json::from_str(&text)
        .map_err(|e| Error::format(format!("cached cell {key} is unreadable: {e}")))?;
    Ok(Some(row))
}

fn obtain_model(
    spec: &SweepSpec,
    resolution: usize,
    train_data: &Dataset,
    cache_dir: Option<&Path>,
) -> Result<TrainedModel> {
    let net = NetworkSpec::desk(train_data.dims(), spec.n_classes);
    let weights_path = match cache_dir {
        Some(dir) => {
            let key = short_hash(&ModelKey {
                version: CACHE_VERSION,
                resolution,
                n_classes: spec.n_classes,
                synth_train: spec.synth_train,
                data_seed: spec.data_seed,
                train: &spec.train,
            })?;
            Some(dir.join(format!("weights-{key}.spdf")))
        }
        None => None,
    };
    if let Some(path) = &weights_path {
        if path.exists() {
            return TrainedModel::load_weights(&net, path);
        }
    }
    let mut model = TrainedModel::build(&net, spec.train.seed)?;
    model.fit(&train_data.images, &train_data.labels, &spec.train)?;
    if let Some(path) = &weights_path {
        model.save_weights(path)?;
    }
    Ok(model)
}

/// Run every cell of the grid, reusing cached rows where the key matches.
/// Cell identity is content-addressed, so resuming an interrupted sweep or
/// reordering the spec's lists never recomputes finished work. Failed cells
/// are recorded as rows with absent metrics and an explanatory note.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepOutcome> {
    spec.validate()?;
    let cache_dir = resolve_cache_dir(spec)?;
    let mut rows = Vec::new();
    let mut computed = 0usize;
    let mut cached = 0usize;
    for &res in &spec.resolutions {
        let total = spec.synth_train + spec.synth_pool;
        let data = synth_dataset(res, spec.n_classes, total, spec.data_seed)?;
        let train_rows: Vec<usize> = (0..spec.synth_train).collect();
        let pool_rows: Vec<usize> = (spec.synth_train..total).collect();
        let train_data = data.subset(&train_rows)?;
        let pool = data.subset(&pool_rows)?;
        let model = obtain_model(spec, res, &train_data, cache_dir.as_deref())?;
        for &method in &spec.attacks {
            let eps_choices: Vec<Option<f64>> = if method.norm() == NormKind::L2 {
                vec![None]
            } else {
                spec.epsilons.iter().copied().map(Some).collect()
            };
            for eps in eps_choices {
                let mut base = AttackConfig::new(method);
                if let Some(e) = eps {
                    base.epsilon = e as f32;
                    // keep the multi-step cap alpha ≤ ε satisfied at small budgets
                    base.alpha = base.epsilon / 4.0;
                }
                for source in &spec.sources {
                    for &detector in &spec.detectors {
                        for &seed in &spec.seeds {
                            let mut config = base.clone();
                            config.seed = seed;
                            let key = short_hash(&CellKey {
                                version: CACHE_VERSION,
                                resolution: res,
                                n_classes: spec.n_classes,
                                synth_train: spec.synth_train,
                                synth_pool: spec.synth_pool,
                                data_seed: spec.data_seed,
                                train: &spec.train,
                                detector_hyper: &spec.detector_hyper,
                                attack: &config,
                                source,
                                detector,
                                pairs_budget: spec.options.pairs_budget,
                                test_fraction: spec.options.test_fraction,
                                seed,
                            })?;
                            if let Some(dir) = &cache_dir {
                                if let Some(row) = read_cell(dir, &key)? {
                                    rows.push(row);
                                    cached += 1;
                                    continue;
                                }
                            }
                            let row = match run_cell(
                                &model,
                                &pool,
                                &config,
                                detector,
                                source,
                                &spec.detector_hyper,
                                &spec.options,
                                seed,
                            ) {
                                Ok(row) => row,
                                Err(e) => EvalRow {
                                    dataset: pool.name.clone(),
                                    attack: method.name().to_string(),
                                    epsilon: eps.map(|_| config.epsilon as f64),
                                    source: source.name().to_string(),
                                    detector: detector.name().to_string(),
                                    asr: None,
                                    f1: None,
                                    fnr: None,
                                    asrd: None,
                                    n_samples: 0,
                                    seed,
                                    note: Some(format!("cell failed: {e}")),
                                },
                            };
                            if let Some(dir) = &cache_dir {
                                write_cell(dir, &key, &row)?;
                            }
                            rows.push(row);
                            computed += 1;
                        }
                    }
                }
            }
        }
    }
    Ok(SweepOutcome {
        report: EvalReport { pairs_budget: spec.options.pairs_budget, rows },
        computed_cells: computed,
        cached_cells: cached,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::DEFAULT_EPSILON;
    use crate::spectral::score_from_confusion;
    use crate::tensor::Tensor;

    fn untrained(res: usize, classes: usize) -> TrainedModel {
        TrainedModel::build(&NetworkSpec::desk((3, res, res), classes), 5).unwrap()
    }

    /// Scores the held-out rows as if every prediction were right.
    struct Clairvoyant;

    impl DetectorBackend for Clairvoyant {
        fn name(&self) -> &str {
            "oracle"
        }

        fn train_and_score(
            &self,
            _train: &SpectralFeatureSet,
            test: &SpectralFeatureSet,
            _seed: u64,
        ) -> Result<DetectionScore> {
            let pos = test.labels().iter().filter(|&&l| l == 1).count();
            Ok(score_from_confusion(pos, 0, test.len() - pos, 0))
        }
    }

    struct Defeatist;

    impl DetectorBackend for Defeatist {
        fn name(&self) -> &str {
            "defeatist"
        }

        fn train_and_score(
            &self,
            _train: &SpectralFeatureSet,
            _test: &SpectralFeatureSet,
            _seed: u64,
        ) -> Result<DetectionScore> {
            Err(Error::contract("induced detector failure"))
        }
    }

    /// Flips a fair coin per held-out row.
    struct CoinFlip;

    impl DetectorBackend for CoinFlip {
        fn name(&self) -> &str {
            "coin"
        }

        fn train_and_score(
            &self,
            _train: &SpectralFeatureSet,
            test: &SpectralFeatureSet,
            seed: u64,
        ) -> Result<DetectionScore> {
            let mut rng = stream_rng(seed, 0x7000_0000);
            let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
            for &label in test.labels() {
                let guess = u8::from(rand::Rng::gen_bool(&mut rng, 0.5));
                match (label, guess) {
                    (1, 1) => tp += 1,
                    (0, 1) => fp += 1,
                    (0, 0) => tn += 1,
                    _ => fn_ += 1,
                }
            }
            Ok(score_from_confusion(tp, fp, tn, fn_))
        }
    }

    #[test]
    fn asr_is_the_success_percentage() {
        let clean = Tensor::new(vec![4, 1, 2, 2], vec![0.5; 16]).unwrap();
        let batch = AdversarialBatch {
            method: AttackMethod::Fgsm,
            epsilon: DEFAULT_EPSILON,
            norm: NormKind::Linf,
            seed: 0,
            clean: clean.clone(),
            adversarial: clean,
            labels: vec![0, 1, 0, 1],
            success: vec![true, false, true, false],
            counts: vec![1; 4],
            stages: None,
        };
        assert_eq!(asr(&batch), 50.0);
        assert_eq!(asrd(0.25, 50.0), 12.5);
        assert_eq!(asrd(0.0, 100.0), 0.0);
    }

    #[test]
    fn index_sampling_is_a_sorted_deterministic_subset() {
        let picked = sample_indices(50, 10, 3);
        assert_eq!(picked.len(), 10);
        assert!(picked.windows(2).all(|w| w[0] < w[1]));
        assert!(picked.iter().all(|&i| i < 50));
        assert_eq!(picked, sample_indices(50, 10, 3));
        assert_ne!(picked, sample_indices(50, 10, 4));
        assert_eq!(sample_indices(5, 10, 0), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn perfect_detection_zeroes_asrd_whatever_the_asr() {
        let data = synth_dataset(16, 4, 24, 9).unwrap();
        let model = untrained(16, 4);
        let config = AttackConfig::new(AttackMethod::Fgsm);
        let options = CellOptions { pairs_budget: 16, test_fraction: 0.25 };
        let row = run_cell_with(
            &model,
            &data,
            &config,
            &Clairvoyant,
            &FeatureSource::Bb,
            &options,
            1,
        )
        .unwrap();
        let asr_pct = row.asr.unwrap();
        assert!(asr_pct > 0.0, "an untrained model should be beatable, got asr {asr_pct}");
        assert_eq!(row.fnr, Some(0.0));
        assert_eq!(row.asrd, Some(0.0));
        assert_eq!(row.f1, Some(100.0));
        assert_eq!(row.detector, "oracle");
        assert_eq!(row.dataset, "synth16");
        assert_eq!(row.n_samples, 16);
        assert_eq!(row.epsilon, Some(f64::from(DEFAULT_EPSILON)));
    }

    #[test]
    fn chance_detection_halves_the_asr() {
        let data = synth_dataset(16, 4, 64, 9).unwrap();
        let model = untrained(16, 4);
        let config = AttackConfig::new(AttackMethod::Fgsm);
        let options = CellOptions { pairs_budget: 64, test_fraction: 0.5 };
        let row = run_cell_with(
            &model,
            &data,
            &config,
            &CoinFlip,
            &FeatureSource::Bb,
            &options,
            1,
        )
        .unwrap();
        let asr_pct = row.asr.unwrap();
        assert!(asr_pct > 50.0, "need a healthy sample for the binomial bound");
        let fnr = row.fnr.unwrap() / 100.0;
        assert!((fnr - 0.5).abs() <= 0.25, "a coin should miss about half, got fnr {fnr}");
        let asrd_pct = row.asrd.unwrap();
        assert!(
            (asrd_pct - asr_pct / 2.0).abs() <= 0.25 * asr_pct,
            "chance detection leaves about half the successes, got {asrd_pct} of {asr_pct}"
        );
    }

    #[test]
    fn detector_failures_star_the_metrics_but_keep_the_asr() {
        let data = synth_dataset(16, 4, 24, 9).unwrap();
        let model = untrained(16, 4);
        let config = AttackConfig::new(AttackMethod::Fgsm);
        let options = CellOptions { pairs_budget: 16, test_fraction: 0.25 };
        let row = run_cell_with(
            &model,
            &data,
            &config,
            &Defeatist,
            &FeatureSource::Bb,
            &options,
            1,
        )
        .unwrap();
        assert!(row.asr.unwrap() > 0.0);
        assert_eq!(row.f1, None);
        assert_eq!(row.fnr, None);
        assert_eq!(row.asrd, None);
        assert!(row.note.as_deref().unwrap().contains("induced detector failure"));
    }

    #[test]
    fn zero_success_cells_report_zero_asrd_without_detector_metrics() {
        let data = synth_dataset(16, 2, 40, 2).unwrap();
        let model = untrained(16, 2);
        let preds = model.predict(&data.images).unwrap();
        let correct: Vec<usize> =
            (0..data.len()).filter(|&i| preds[i] == data.labels[i]).collect();
        assert!(correct.len() >= 4, "even an untrained two-class model gets some right");
        let sub = data.subset(&correct).unwrap();
        // a zero-budget step leaves every image in place, so nothing flips
        let mut config = AttackConfig::new(AttackMethod::Fgsm);
        config.epsilon = 0.0;
        let options = CellOptions { pairs_budget: correct.len(), test_fraction: 0.2 };
        let row = run_cell_with(
            &model,
            &sub,
            &config,
            &Clairvoyant,
            &FeatureSource::Bb,
            &options,
            0,
        )
        .unwrap();
        assert_eq!(row.asr, Some(0.0));
        assert_eq!(row.asrd, Some(0.0));
        assert_eq!(row.f1, None);
        assert_eq!(row.fnr, None);
        assert!(row.note.is_some());
    }

    #[test]
    fn sweep_specs_are_validated() {
        assert!(SweepSpec::default().validate().is_ok());
        let mut spec = SweepSpec::default();
        spec.resolutions.clear();
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
        let mut spec = SweepSpec::default();
        spec.n_classes = 2; // default attacks include the 4-class ensemble
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
        let mut spec = SweepSpec::default();
        spec.epsilons = vec![0.0];
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
        let mut spec = SweepSpec::default();
        spec.resolutions = vec![48];
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
    }

    /// One sequential test covers caching, resumption, the epsilon-axis
    /// collapse for minimal-l2 methods, order independence, and the cache
    /// environment override — sequential because the override is process
    /// global.
    #[test]
    fn sweeps_cache_collapse_and_honor_the_env_override() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = SweepSpec {
            resolutions: vec![16],
            n_classes: 2,
            attacks: vec![AttackMethod::Fgsm],
            epsilons: vec![8.0 / 255.0, 4.0 / 255.0],
            sources: vec![FeatureSource::Bb],
            detectors: vec![DetectorKind::Logreg],
            seeds: vec![0],
            options: CellOptions { pairs_budget: 12, test_fraction: 0.25 },
            train: TrainHyper { epochs: 2, batch_size: 8, ..TrainHyper::default() },
            detector_hyper: DetectorHyper::default(),
            synth_train: 32,
            synth_pool: 24,
            data_seed: 0,
            cache_dir: Some(dir.path().to_path_buf()),
        };

        let first = run_sweep(&spec).unwrap();
        assert_eq!(first.report.rows.len(), 2);
        assert_eq!((first.computed_cells, first.cached_cells), (2, 0));
        assert_eq!(first.report.pairs_budget, 12);
        for row in &first.report.rows {
            assert_eq!(row.dataset, "synth16");
            assert_eq!(row.n_samples, 12);
        }

        let again = run_sweep(&spec).unwrap();
        assert_eq!((again.computed_cells, again.cached_cells), (0, 2));
        assert_eq!(again.report.rows, first.report.rows);

        // reordering the epsilon list reuses the same cells
        spec.epsilons.reverse();
        let flipped = run_sweep(&spec).unwrap();
        assert_eq!((flipped.computed_cells, flipped.cached_cells), (0, 2));
        let sort_key =
            |r: &EvalRow| (r.attack.clone(), r.epsilon.map(f64::to_bits), r.detector.clone());
        let mut a = first.report.rows.clone();
        let mut b = flipped.report.rows.clone();
        a.sort_by_key(sort_key);
        b.sort_by_key(sort_key);
        assert_eq!(a, b);

        // minimal-l2 methods ignore the epsilon axis entirely, and the env
        // var redirects caching away from the configured directory
        let env_dir = tempfile::tempdir().unwrap();
        std::env::set_var(CACHE_ENV, env_dir.path());
        spec.attacks = vec![AttackMethod::Fgsm, AttackMethod::Deepfool];
        spec.cache_dir = None;
        let out = run_sweep(&spec);
        std::env::remove_var(CACHE_ENV);
        let out = out.unwrap();
        assert_eq!(out.report.rows.len(), 3, "two budgeted cells plus one deepfool cell");
        let df: Vec<&EvalRow> =
            out.report.rows.iter().filter(|r| r.attack == "deepfool").collect();
        assert_eq!(df.len(), 1);
        assert_eq!(df[0].epsilon, None);
        let cached_files = std::fs::read_dir(env_dir.path()).unwrap().count();
        assert!(cached_files >= 4, "expected cells plus weights in the override dir");
    }
}
