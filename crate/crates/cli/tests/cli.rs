//! End-to-end tests of the compiled binary: exit codes, printed values,
//! artifact round-trips, and byte-level idempotency.

use std::path::Path;
use std::process::{Command, Output};

use asrd_core::{synth_dataset, NetworkSpec, TrainedModel};

fn run(workdir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_asrd"))
        .arg("--workdir")
        .arg(workdir)
        .args(args)
        .output()
        .expect("the binary should run")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no exit code")
}

/// Small synthetic run shared by most tests: 2-class 16×16, 48 training and
/// 24 evaluation samples, 2 epochs.
const TINY: &[&str] = &[
    "--set",
    "dataset.resolution=16",
    "--set",
    "dataset.classes=2",
    "--set",
    "dataset.train_samples=48",
    "--set",
    "dataset.eval_samples=24",
    "--set",
    "model.epochs=2",
    "--set",
    "model.batch_size=8",
];

fn tiny<'a>(extra: &'a [&'a str]) -> Vec<&'a str> {
    let mut args = Vec::new();
    args.extend_from_slice(TINY);
    args.extend_from_slice(extra);
    args
}

#[test]
fn train_writes_deterministic_weights_and_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &[&["train"], &tiny(&[])[..]].concat());
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("train_accuracy="));
    let weights = dir.path().join("out/model.spdf");
    let conf = dir.path().join("out/model.conf");
    assert!(weights.exists() && conf.exists());
    let conf_text = std::fs::read_to_string(&conf).unwrap();
    assert!(conf_text.contains("model.epochs=2"));
    assert!(conf_text.contains("dataset.classes=2"));

    // identical run into a second directory produces identical weight bytes
    let out2 = run(dir.path(), &[&["train"], &tiny(&["--set", "output.dir=out2"])[..]].concat());
    assert_eq!(code(&out2), 0);
    assert_eq!(
        std::fs::read(&weights).unwrap(),
        std::fs::read(dir.path().join("out2/model.spdf")).unwrap(),
        "training is seed-deterministic"
    );
}

#[test]
fn train_with_zero_epochs_saves_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &[&["train", "--epochs", "0"], &tiny(&[])[..]].concat(),
    );
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let fresh = TrainedModel::build(&NetworkSpec::desk((3, 16, 16), 2), 0).unwrap();
    let reference = dir.path().join("reference.spdf");
    fresh.save_weights(&reference).unwrap();
    assert_eq!(
        std::fs::read(dir.path().join("out/model.spdf")).unwrap(),
        std::fs::read(&reference).unwrap(),
        "zero epochs must save the untouched initialization"
    );
}

#[test]
fn attack_at_zero_epsilon_reports_the_clean_error_rate() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &[&["train"], &tiny(&[])[..]].concat())), 0);
    let out = run(
        dir.path(),
        &[
            &["attack", "--method", "fgsm", "--epsilon", "0"],
            &tiny(&[
                "--set",
                "model.path=out/model.spdf",
                "--set",
                "attack.samples=24",
            ])[..],
        ]
        .concat(),
    );
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    let printed: f64 = text
        .split("asr=")
        .nth(1)
        .and_then(|s| s.split_whitespace().next())
        .and_then(|s| s.parse().ok())
        .unwrap_or_else(|| panic!("no asr in {text:?}"));

    // recompute the clean error rate on the same evaluation split
    let data = synth_dataset(16, 2, 72, 0).unwrap();
    let eval = data.subset(&(48..72).collect::<Vec<_>>()).unwrap();
    let model = TrainedModel::load_weights(
        &NetworkSpec::desk((3, 16, 16), 2),
        &dir.path().join("out/model.spdf"),
    )
    .unwrap();
    let preds = model.predict(&eval.images).unwrap();
    let missed = preds.iter().zip(&eval.labels).filter(|(p, l)| p != l).count();
    let clean_error = 100.0 * missed as f64 / eval.labels.len() as f64;
    assert!(
        (printed - clean_error).abs() < 0.005,
        "asr at epsilon 0 should equal the clean error rate: {printed} vs {clean_error}"
    );

    // the saved batch reloads and round-trips bit-identically
    let stem = dir.path().join("out/attack-fgsm");
    let batch = asrd_core::AdversarialBatch::load(&stem).unwrap();
    let copy = dir.path().join("copy");
    batch.save(&copy).unwrap();
    for ext in ["json", "spdf"] {
        assert_eq!(
            std::fs::read(stem.with_extension(ext)).unwrap(),
            std::fs::read(copy.with_extension(ext)).unwrap(),
            "batch .{ext} round-trip must be bit-identical"
        );
    }
}

#[test]
fn attack_usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();

    // unknown method names the valid ones
    let out = run(
        dir.path(),
        &[&["attack", "--method", "warp"], &tiny(&[])[..]].concat(),
    );
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("fgsm"), "should list valid methods: {}", stderr(&out));

    // the 4-class ensemble is refused on a 2-class dataset
    let out = run(
        dir.path(),
        &[&["attack", "--method", "autoattack"], &tiny(&[])[..]].concat(),
    );
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("four classes"), "got: {}", stderr(&out));

    // a missing model is a config error naming the key
    let out = run(
        dir.path(),
        &[&["attack", "--method", "fgsm"], &tiny(&[])[..]].concat(),
    );
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("model.path"));

    // as is a model path that does not exist
    let out = run(
        dir.path(),
        &[
            &["attack", "--method", "fgsm"],
            &tiny(&["--set", "model.path=nope.spdf"])[..],
        ]
        .concat(),
    );
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("does not exist"));
}

#[test]
fn unknown_configuration_keys_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["train", "--set", "bogus.key=1"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("bogus.key"));
}

#[test]
fn evaluate_writes_one_row_and_repeats_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &[&["train"], &tiny(&[])[..]].concat())), 0);
    let eval_args = tiny(&[
        "--set",
        "model.path=out/model.spdf",
        "--set",
        "attack.method=fgsm",
        "--set",
        "attack.samples=16",
        "--set",
        "detector.kind=lr",
    ]);
    let out = run(dir.path(), &[&["evaluate"], &eval_args[..]].concat());
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let csv = dir.path().join("out/report.csv");
    assert!(csv.exists() && dir.path().join("out/report.svg").exists());
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 3, "comment + header + one row: {text}");
    assert!(text.lines().nth(2).unwrap().starts_with("synth16,fgsm,"));

    let out2 = run(dir.path(), &[&["evaluate"], &eval_args[..]].concat());
    assert_eq!(code(&out2), 0);
    assert_eq!(text, std::fs::read_to_string(&csv).unwrap(), "evaluation is idempotent");

    // csv-only format leaves no svg behind
    let mut csv_only = eval_args.clone();
    csv_only.extend_from_slice(&["--set", "output.stem=r2"]);
    let out3 = run(
        dir.path(),
        &[&["evaluate", "--format", "csv"], &csv_only[..]].concat(),
    );
    assert_eq!(code(&out3), 0);
    assert!(dir.path().join("out/r2.csv").exists());
    assert!(!dir.path().join("out/r2.svg").exists());
}

#[test]
fn evaluate_scores_saved_artifacts_and_rejects_missing_ones() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &[&["train"], &tiny(&[])[..]].concat())), 0);
    let attack_args = tiny(&[
        "--set",
        "model.path=out/model.spdf",
        "--set",
        "attack.samples=16",
    ]);
    let out = run(
        dir.path(),
        &[&["attack", "--method", "fgsm"], &attack_args[..]].concat(),
    );
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let eval_args = tiny(&[
        "--set",
        "model.path=out/model.spdf",
        "--set",
        "attack.artifacts=out/attack-fgsm",
        "--set",
        "detector.kind=lr",
    ]);
    let out = run(dir.path(), &[&["evaluate"], &eval_args[..]].concat());
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = std::fs::read_to_string(dir.path().join("out/report.csv")).unwrap();
    assert!(
        text.lines().nth(2).unwrap().starts_with("attack-fgsm,fgsm,"),
        "artifact evaluations are named for their stem: {text}"
    );

    let bad = tiny(&[
        "--set",
        "model.path=out/model.spdf",
        "--set",
        "attack.artifacts=out/never-ran",
    ]);
    let out = run(dir.path(), &[&["evaluate"], &bad[..]].concat());
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("not found"));
}

#[test]
fn sweep_resumes_from_cache_and_report_rerenders() {
    let dir = tempfile::tempdir().unwrap();
    let args: Vec<&str> = vec![
        "--set",
        "sweep.resolutions=16",
        "--set",
        "sweep.classes=2",
        "--set",
        "sweep.attacks=fgsm",
        "--set",
        "sweep.epsilons=8/255,4/255",
        "--set",
        "sweep.detectors=lr",
        "--set",
        "sweep.pairs=10",
        "--set",
        "sweep.test_fraction=0.25",
        "--set",
        "sweep.train_samples=24",
        "--set",
        "sweep.pool_samples=16",
        "--set",
        "model.epochs=1",
        "--set",
        "model.batch_size=8",
    ];
    let out = run(dir.path(), &[&["sweep"], &args[..]].concat());
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("computed=2 cached=0"), "got: {}", stdout(&out));
    let csv = dir.path().join("out/sweep.csv");
    let first = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(first.lines().count(), 4, "comment + header + two rows");

    let out2 = run(dir.path(), &[&["sweep"], &args[..]].concat());
    assert_eq!(code(&out2), 0);
    assert!(stdout(&out2).contains("computed=0 cached=2"), "got: {}", stdout(&out2));
    assert_eq!(first, std::fs::read_to_string(&csv).unwrap(), "warm rerun is byte-identical");

    // report re-renders the CSV without recomputation
    let out3 = run(
        dir.path(),
        &[
            "report",
            "--input",
            "out/sweep.csv",
            "--set",
            "output.stem=again",
        ],
    );
    assert_eq!(code(&out3), 0, "stderr: {}", stderr(&out3));
    assert_eq!(
        first,
        std::fs::read_to_string(dir.path().join("out/again.csv")).unwrap(),
        "parse → emit is a fixed point"
    );
    assert!(dir.path().join("out/again.svg").exists());

    // a missing input is a config error
    let out4 = run(dir.path(), &["report", "--input", "out/ghost.csv"]);
    assert_eq!(code(&out4), 2);
}

#[test]
fn help_lists_the_configuration_keys() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["train", "--help"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("dataset.kind"));
    assert!(text.contains("model.epochs"));
    let out = run(dir.path(), &["sweep", "--help"]);
    assert!(stdout(&out).contains("sweep.pairs"));
    let out = run(dir.path(), &["evaluate", "--help"]);
    assert!(stdout(&out).contains("detector.kind"));
}
