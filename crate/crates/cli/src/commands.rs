//! The five commands. Config mistakes surface as `Error::Config` (exit 2);
//! everything else that fails is a runtime error (exit 1).

use std::path::PathBuf;

use asrd_core::attacks::{CwParams, DeepFoolParams, SquareParams};
use asrd_core::bench::{round2, sample_indices, score_batch, CSV_HEADER};
use asrd_core::{
    downsample, emit_csv, emit_svg_bars, load_cifar10, load_ppm_dir, parse_csv, run_attack,
    run_cell, run_sweep, synth_dataset, AdversarialBatch, AttackConfig, AttackMethod,
    CellOptions, Dataset, DetectorHyper, DetectorKind, Error, EvalReport, FeatureSource,
    GroupBy, LearnedDetector, NetworkSpec, Result, SweepSpec, TrainHyper, TrainedModel,
};

use crate::config::{parse_epsilon, RunConfig};

struct DataPlan {
    full: Dataset,
    n_train: usize,
    n_eval: usize,
}

impl DataPlan {
    fn train(&self) -> Result<Dataset> {
        if self.n_train == 0 {
            return Err(Error::config(
                "dataset.train_samples must be at least 1 for this command",
            ));
        }
        self.full.subset(&(0..self.n_train).collect::<Vec<_>>())
    }

    fn eval(&self) -> Result<Dataset> {
        if self.n_eval == 0 {
            return Err(Error::config(
                "dataset.eval_samples must be at least 1 for this command",
            ));
        }
        self.full.subset(&(self.n_train..self.n_train + self.n_eval).collect::<Vec<_>>())
    }
}

fn build_dataset(cfg: &RunConfig) -> Result<DataPlan> {
    let kind = cfg.require("dataset.kind")?;
    let n_train = cfg.usize("dataset.train_samples")?;
    let n_eval = cfg.usize("dataset.eval_samples")?;
    let full = match kind {
        "synth" => {
            let resolution = cfg.usize("dataset.resolution")?;
            let classes = cfg.usize("dataset.classes")?;
            let seed = cfg.u64("dataset.seed")?;
            synth_dataset(resolution, classes, n_train + n_eval, seed)?
        }
        "cifar10" | "ppm" => {
            let raw = cfg.get("dataset.path").ok_or_else(|| {
                Error::config(format!(
                    "configuration key 'dataset.path' is required when dataset.kind={kind}"
                ))
            })?;
            let path = cfg.resolve(raw);
            if !path.exists() {
                return Err(Error::config(format!(
                    "dataset.path {} does not exist",
                    path.display()
                )));
            }
            if kind == "cifar10" {
                load_cifar10(&path)?
            } else {
                load_ppm_dir(&path, None)?
            }
        }
        other => {
            return Err(Error::config(format!(
                "dataset.kind must be synth, cifar10 or ppm, got {other:?}"
            )))
        }
    };
    let factor = cfg.usize("dataset.downsample")?;
    let full = if factor > 1 { downsample(&full, factor)? } else { full };
    if full.len() < n_train + n_eval {
        return Err(Error::config(format!(
            "dataset holds {} samples but dataset.train_samples + dataset.eval_samples = {}",
            full.len(),
            n_train + n_eval
        )));
    }
    Ok(DataPlan { full, n_train, n_eval })
}

fn network_for(dataset: &Dataset) -> NetworkSpec {
    NetworkSpec::desk(dataset.dims(), dataset.n_classes)
}

fn load_model(cfg: &RunConfig, dataset: &Dataset) -> Result<TrainedModel> {
    let raw = cfg.get("model.path").ok_or_else(|| {
        Error::config("configuration key 'model.path' is required (the train command writes one)")
    })?;
    let path = cfg.resolve(raw);
    if !path.exists() {
        return Err(Error::config(format!("model.path {} does not exist", path.display())));
    }
    TrainedModel::load_weights(&network_for(dataset), &path)
}

fn train_hyper(cfg: &RunConfig) -> Result<TrainHyper> {
    Ok(TrainHyper {
        epochs: cfg.usize("model.epochs")?,
        batch_size: cfg.usize("model.batch_size")?,
        lr: cfg.f64("model.lr")? as f32,
        momentum: cfg.f64("model.momentum")? as f32,
        seed: cfg.u64("model.seed")?,
    })
}

fn attack_config(cfg: &RunConfig) -> Result<AttackConfig> {
    let method = AttackMethod::parse(cfg.require("attack.method")?)?;
    let mut config = AttackConfig::new(method);
    config.epsilon = cfg.epsilon("attack.epsilon")? as f32;
    config.alpha = match cfg.get("attack.alpha") {
        Some(raw) => parse_epsilon(raw).ok_or_else(|| {
            Error::config("attack.alpha must be a float or a ratio like 2/255")
        })? as f32,
        None => config.epsilon / 4.0,
    };
    if let Some(raw) = cfg.get("attack.iters") {
        config.n_iters = raw
            .parse()
            .map_err(|_| Error::config("attack.iters must be a positive integer"))?;
    }
    config.seed = cfg.u64("attack.seed")?;
    config.cw = CwParams {
        c_init: cfg.f64("attack.cw_c_init")?,
        binary_search_steps: cfg.usize("attack.cw_steps")?,
        inner_iters: cfg.usize("attack.cw_iters")?,
        lr: cfg.f64("attack.cw_lr")? as f32,
    };
    config.deepfool = DeepFoolParams {
        overshoot: cfg.f64("attack.deepfool_overshoot")? as f32,
        max_iter: cfg.usize("attack.deepfool_iters")?,
    };
    config.square = SquareParams {
        n_queries: cfg.usize("attack.square_queries")?,
        p_init: cfg.f64("attack.square_p_init")?,
    };
    config.validate()?;
    Ok(config)
}

fn check_class_count(method: AttackMethod, n_classes: usize) -> Result<()> {
    let needs_four =
        matches!(method, AttackMethod::Autoattack | AttackMethod::ApgdDlr);
    if needs_four && n_classes < 4 {
        return Err(Error::config(format!(
            "{} uses the logit-ratio loss and needs at least four classes; the dataset has {n_classes}",
            method.name()
        )));
    }
    Ok(())
}

fn detector_hyper(cfg: &RunConfig) -> Result<DetectorHyper> {
    let mut hyper = DetectorHyper::default();
    hyper.forest.n_trees = cfg.usize("detector.trees")?;
    hyper.forest.max_depth = match cfg.get("detector.max_depth") {
        Some(raw) => Some(
            raw.parse()
                .map_err(|_| Error::config("detector.max_depth must be a positive integer"))?,
        ),
        None => None,
    };
    hyper.forest.min_leaf = cfg.f64("detector.min_leaf")?;
    hyper.logreg.l2 = cfg.f64("detector.l2")?;
    hyper.logreg.max_epochs = cfg.usize("detector.epochs")?;
    Ok(hyper)
}

fn configured_taps(cfg: &RunConfig) -> Result<Option<Vec<usize>>> {
    match cfg.get("detector.taps") {
        Some(raw) => raw
            .split(',')
            .map(|t| {
                t.trim().parse::<usize>().map_err(|_| {
                    Error::config("detector.taps must be comma-separated layer ids")
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(Some),
        None => Ok(None),
    }
}

fn feature_source(cfg: &RunConfig, default_taps: &[usize]) -> Result<FeatureSource> {
    match cfg.require("detector.source")? {
        "bb" => Ok(FeatureSource::Bb),
        "wb" => {
            let tap_ids =
                configured_taps(cfg)?.unwrap_or_else(|| default_taps.to_vec());
            Ok(FeatureSource::Wb { tap_ids })
        }
        other => Err(Error::config(format!(
            "detector.source must be bb or wb, got {other:?}"
        ))),
    }
}

struct OutputPlan {
    dir: PathBuf,
    stem: String,
}

fn output_plan(cfg: &RunConfig, default_stem: &str) -> Result<OutputPlan> {
    let dir = cfg.path("output.dir")?;
    std::fs::create_dir_all(&dir)?;
    let stem = cfg.get("output.stem").unwrap_or(default_stem).to_string();
    Ok(OutputPlan { dir, stem })
}

fn write_resolved(cfg: &RunConfig, plan: &OutputPlan) -> Result<()> {
    std::fs::write(plan.dir.join(format!("{}.conf", plan.stem)), cfg.render())?;
    Ok(())
}

fn emit_outputs(cfg: &RunConfig, plan: &OutputPlan, report: &EvalReport) -> Result<()> {
    let (want_csv, want_svg) = match cfg.require("output.format")? {
        "csv" => (true, false),
        "svg" => (false, true),
        "both" => (true, true),
        other => {
            return Err(Error::config(format!(
                "output.format must be csv, svg or both, got {other:?}"
            )))
        }
    };
    if want_csv {
        let path = plan.dir.join(format!("{}.csv", plan.stem));
        emit_csv(report, &path)?;
        println!("wrote {}", path.display());
    }
    if want_svg {
        if report.rows.iter().any(|r| r.asrd.is_some()) {
            let group = GroupBy::parse(cfg.require("output.group_by")?)?;
            let path = plan.dir.join(format!("{}.svg", plan.stem));
            emit_svg_bars(report, group, &path)?;
            println!("wrote {}", path.display());
        } else {
            println!("svg skipped: no plottable asrd values");
        }
    }
    Ok(())
}

fn print_report(report: &EvalReport) {
    let metric = |v: Option<f64>| match v {
        Some(x) => format!("{:.2}", round2(x)),
        None => "*".to_string(),
    };
    let mut lines: Vec<Vec<String>> =
        vec![CSV_HEADER.split(',').map(str::to_string).collect()];
    for r in &report.rows {
        lines.push(vec![
            r.dataset.clone(),
            r.attack.clone(),
            r.epsilon.map_or("-".to_string(), |e| format!("{e:.6}")),
            r.source.clone(),
            r.detector.clone(),
            metric(r.asr),
            metric(r.f1),
            metric(r.fnr),
            metric(r.asrd),
            r.n_samples.to_string(),
            r.seed.to_string(),
        ]);
    }
    let n_cols = lines[0].len();
    let widths: Vec<usize> = (0..n_cols)
        .map(|c| lines.iter().map(|l| l[c].len()).max().unwrap_or(0))
        .collect();
    for line in &lines {
        let padded: Vec<String> = line
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect();
        println!("{}", padded.join("  ").trim_end());
    }
}

pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let plan = build_dataset(cfg)?;
    let train = plan.train()?;
    let out = output_plan(cfg, "model")?;
    let weights_path = match cfg.get("model.path") {
        Some(raw) => cfg.resolve(raw),
        None => out.dir.join(format!("{}.spdf", out.stem)),
    };
    let hyper = train_hyper(cfg)?;
    let mut model = TrainedModel::build(&network_for(&train), hyper.seed)?;
    if hyper.epochs > 0 {
        let result = model.fit(&train.images, &train.labels, &hyper)?;
        if let Some(last) = result.epoch_losses.last() {
            println!("final_epoch_loss={last:.6}");
        }
    }
    if let Some(parent) = weights_path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    model.save_weights(&weights_path)?;
    let train_acc = model.accuracy(&train.images, &train.labels)?;
    let eval_acc = if plan.n_eval > 0 {
        let eval = plan.eval()?;
        format!("{:.4}", model.accuracy(&eval.images, &eval.labels)?)
    } else {
        "-".to_string()
    };
    println!(
        "train_accuracy={train_acc:.4} eval_accuracy={eval_acc} saved={}",
        weights_path.display()
    );
    write_resolved(cfg, &out)?;
    Ok(())
}

pub fn cmd_attack(cfg: &RunConfig) -> Result<()> {
    let plan = build_dataset(cfg)?;
    let eval = plan.eval()?;
    let config = attack_config(cfg)?;
    check_class_count(config.method, eval.n_classes)?;
    let model = load_model(cfg, &eval)?;
    let budget = cfg.usize("attack.samples")?;
    if budget == 0 {
        return Err(Error::config("attack.samples must be at least 1"));
    }
    let picked = sample_indices(eval.len(), budget, config.seed);
    let subset = eval.subset(&picked)?;
    let batch = run_attack(&model, &config, &subset.images, &subset.labels)?;
    let out = output_plan(cfg, &format!("attack-{}", config.method.name()))?;
    let stem_path = out.dir.join(&out.stem);
    batch.save(&stem_path)?;
    println!(
        "asr={:.2} samples={} saved={}",
        round2(asrd_core::asr(&batch)),
        batch.len(),
        stem_path.display()
    );
    write_resolved(cfg, &out)?;
    Ok(())
}

pub fn cmd_evaluate(cfg: &RunConfig) -> Result<()> {
    let plan = build_dataset(cfg)?;
    let eval = plan.eval()?;
    let model = load_model(cfg, &eval)?;
    let kind = DetectorKind::parse(cfg.require("detector.kind")?)?;
    let source = feature_source(cfg, &model.tap_ids().to_vec())?;
    let hyper = detector_hyper(cfg)?;
    let test_fraction = cfg.f64("detector.test_fraction")?;
    let (row, budget) = match cfg.get("attack.artifacts") {
        Some(raw) => {
            let stem = cfg.resolve(raw);
            if !stem.with_extension("json").exists() || !stem.with_extension("spdf").exists() {
                return Err(Error::config(format!(
                    "attack artifacts {} not found (expected a .json/.spdf pair)",
                    stem.display()
                )));
            }
            let batch = AdversarialBatch::load(&stem)?;
            let backend = LearnedDetector { kind, hyper };
            let name = stem
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "artifact".to_string());
            let budget = batch.len();
            let row = score_batch(
                &model,
                &batch,
                &backend,
                &source,
                test_fraction,
                cfg.u64("detector.seed")?,
                &name,
            )?;
            (row, budget)
        }
        None => {
            let config = attack_config(cfg)?;
            check_class_count(config.method, eval.n_classes)?;
            let options = CellOptions {
                pairs_budget: cfg.usize("attack.samples")?,
                test_fraction,
            };
            let row =
                run_cell(&model, &eval, &config, kind, &source, &hyper, &options, config.seed)?;
            (row, options.pairs_budget)
        }
    };
    let report = EvalReport { pairs_budget: budget, rows: vec![row] };
    let out = output_plan(cfg, "report")?;
    emit_outputs(cfg, &out, &report)?;
    print_report(&report);
    write_resolved(cfg, &out)?;
    Ok(())
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<()> {
    let out = output_plan(cfg, "sweep")?;
    let parse_items = |key: &str| -> Result<Vec<String>> { cfg.list(key) };
    let desk_taps = NetworkSpec::desk((3, 16, 16), 4).relu_layers();
    let mut spec = SweepSpec::default();
    spec.resolutions = parse_items("sweep.resolutions")?
        .iter()
        .map(|s| {
            s.parse()
                .map_err(|_| Error::config("sweep.resolutions must be integers"))
        })
        .collect::<Result<_>>()?;
    spec.n_classes = cfg.usize("sweep.classes")?;
    spec.attacks = parse_items("sweep.attacks")?
        .iter()
        .map(|s| AttackMethod::parse(s))
        .collect::<Result<_>>()?;
    spec.epsilons = parse_items("sweep.epsilons")?
        .iter()
        .map(|s| {
            parse_epsilon(s).ok_or_else(|| {
                Error::config("sweep.epsilons entries must be floats or ratios like 8/255")
            })
        })
        .collect::<Result<_>>()?;
    spec.sources = parse_items("sweep.sources")?
        .iter()
        .map(|s| match s.as_str() {
            "bb" => Ok(FeatureSource::Bb),
            "wb" => {
                let tap_ids =
                    configured_taps(cfg)?.unwrap_or_else(|| desk_taps.clone());
                Ok(FeatureSource::Wb { tap_ids })
            }
            other => Err(Error::config(format!(
                "sweep.sources entries must be bb or wb, got {other:?}"
            ))),
        })
        .collect::<Result<_>>()?;
    spec.detectors = parse_items("sweep.detectors")?
        .iter()
        .map(|s| DetectorKind::parse(s))
        .collect::<Result<_>>()?;
    spec.seeds = parse_items("sweep.seeds")?
        .iter()
        .map(|s| s.parse().map_err(|_| Error::config("sweep.seeds must be integers")))
        .collect::<Result<_>>()?;
    spec.options = CellOptions {
        pairs_budget: cfg.usize("sweep.pairs")?,
        test_fraction: cfg.f64("sweep.test_fraction")?,
    };
    spec.train = train_hyper(cfg)?;
    spec.detector_hyper = detector_hyper(cfg)?;
    spec.synth_train = cfg.usize("sweep.train_samples")?;
    spec.synth_pool = cfg.usize("sweep.pool_samples")?;
    spec.data_seed = cfg.u64("sweep.data_seed")?;
    spec.cache_dir = match cfg.get("sweep.cache") {
        Some("off") => None,
        Some(raw) => Some(cfg.resolve(raw)),
        None => Some(out.dir.join("cache")),
    };
    spec.validate()?;
    let outcome = run_sweep(&spec)?;
    println!(
        "cells={} computed={} cached={}",
        outcome.report.rows.len(),
        outcome.computed_cells,
        outcome.cached_cells
    );
    emit_outputs(cfg, &out, &outcome.report)?;
    print_report(&outcome.report);
    write_resolved(cfg, &out)?;
    Ok(())
}

pub fn cmd_report(cfg: &RunConfig) -> Result<()> {
    let raw = cfg
        .get("report.input")
        .ok_or_else(|| Error::config("configuration key 'report.input' is required"))?;
    let input = cfg.resolve(raw);
    if !input.exists() {
        return Err(Error::config(format!("report.input {} does not exist", input.display())));
    }
    let text = std::fs::read_to_string(&input)?;
    let report = parse_csv(&text)?;
    let out = output_plan(cfg, "chart")?;
    emit_outputs(cfg, &out, &report)?;
    print_report(&report);
    write_resolved(cfg, &out)?;
    Ok(())
}
