//! Plain key=value run configuration: a registry of documented keys with
//! defaults, a line parser for config files, and typed accessors. Unknown
//! keys are rejected wherever they appear, and every run can render its
//! fully-resolved state back to disk.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use asrd_core::{Error, Result};

pub struct KeyDef {
    pub name: &'static str,
    /// None means the key has no value until someone sets it.
    pub default: Option<&'static str>,
    pub help: &'static str,
}

pub const KEYS: &[KeyDef] = &[
    // dataset.*
    KeyDef { name: "dataset.kind", default: Some("synth"), help: "synth | cifar10 | ppm" },
    KeyDef { name: "dataset.path", default: None, help: "directory of CIFAR-10 .bin files, or a PPM class tree" },
    KeyDef { name: "dataset.resolution", default: Some("32"), help: "synthetic image side: 16, 32, 64 or 128" },
    KeyDef { name: "dataset.classes", default: Some("4"), help: "synthetic class count (>= 2)" },
    KeyDef { name: "dataset.train_samples", default: Some("2000"), help: "leading samples used to fit the model" },
    KeyDef { name: "dataset.eval_samples", default: Some("600"), help: "following samples held out for attacks" },
    KeyDef { name: "dataset.seed", default: Some("0"), help: "synthesis seed" },
    KeyDef { name: "dataset.downsample", default: Some("1"), help: "box-average factor applied after loading" },
    // model.*
    KeyDef { name: "model.path", default: None, help: "weights file; train writes {output.dir}/{output.stem}.spdf when unset, other commands require it" },
    KeyDef { name: "model.epochs", default: Some("30"), help: "training epochs (0 saves the initialization untouched)" },
    KeyDef { name: "model.batch_size", default: Some("32"), help: "SGD minibatch size" },
    KeyDef { name: "model.lr", default: Some("0.05"), help: "SGD learning rate" },
    KeyDef { name: "model.momentum", default: Some("0.9"), help: "SGD momentum in [0, 1)" },
    KeyDef { name: "model.seed", default: Some("0"), help: "weight initialization / shuffle seed" },
    // attack.*
    KeyDef { name: "attack.method", default: Some("pgd"), help: "fgsm | bim | pgd | deepfool | cw | apgd_ce | apgd_dlr | square | autoattack" },
    KeyDef { name: "attack.epsilon", default: Some("8/255"), help: "l-inf budget; accepts n/255 or a plain float" },
    KeyDef { name: "attack.alpha", default: None, help: "step size for bim/pgd (defaults to epsilon/4)" },
    KeyDef { name: "attack.iters", default: None, help: "iteration count (defaults per method)" },
    KeyDef { name: "attack.samples", default: Some("300"), help: "images attacked (the clean/adversarial pair budget)" },
    KeyDef { name: "attack.seed", default: Some("0"), help: "attack randomness seed; also drives inline evaluation" },
    KeyDef { name: "attack.artifacts", default: None, help: "stem of a saved attack batch; evaluate scores it instead of attacking" },
    KeyDef { name: "attack.cw_c_init", default: Some("0.001"), help: "Carlini-Wagner initial c" },
    KeyDef { name: "attack.cw_steps", default: Some("5"), help: "Carlini-Wagner binary-search steps" },
    KeyDef { name: "attack.cw_iters", default: Some("40"), help: "Carlini-Wagner inner iterations" },
    KeyDef { name: "attack.cw_lr", default: Some("0.02"), help: "Carlini-Wagner optimizer step size" },
    KeyDef { name: "attack.deepfool_iters", default: Some("50"), help: "DeepFool iteration cap" },
    KeyDef { name: "attack.deepfool_overshoot", default: Some("0.02"), help: "DeepFool overshoot factor" },
    KeyDef { name: "attack.square_queries", default: Some("2000"), help: "square-attack query budget" },
    KeyDef { name: "attack.square_p_init", default: Some("0.8"), help: "square-attack initial patch share" },
    // detector.*
    KeyDef { name: "detector.kind", default: Some("rf"), help: "lr | rf" },
    KeyDef { name: "detector.source", default: Some("bb"), help: "bb (input spectra) | wb (plus tapped feature-map spectra)" },
    KeyDef { name: "detector.taps", default: None, help: "comma-separated relu layer ids for wb (defaults to all)" },
    KeyDef { name: "detector.test_fraction", default: Some("0.2"), help: "held-out share of detection rows" },
    KeyDef { name: "detector.seed", default: Some("0"), help: "detector seed; also scores pre-built artifacts" },
    KeyDef { name: "detector.trees", default: Some("100"), help: "random-forest size" },
    KeyDef { name: "detector.max_depth", default: None, help: "random-forest depth cap (unset = unlimited)" },
    KeyDef { name: "detector.min_leaf", default: Some("1"), help: "random-forest minimum leaf weight" },
    KeyDef { name: "detector.l2", default: Some("0.0001"), help: "logistic-regression l2 penalty" },
    KeyDef { name: "detector.epochs", default: Some("400"), help: "logistic-regression epoch cap" },
    // sweep.*
    KeyDef { name: "sweep.resolutions", default: Some("16,32,64"), help: "synthetic resolutions, comma separated" },
    KeyDef { name: "sweep.classes", default: Some("4"), help: "synthetic class count" },
    KeyDef { name: "sweep.attacks", default: Some("fgsm,bim,pgd,deepfool,cw,autoattack"), help: "attack methods, comma separated" },
    KeyDef { name: "sweep.epsilons", default: Some("8/255,4/255,2/255,1/255,0.5/255"), help: "l-inf budgets, comma separated" },
    KeyDef { name: "sweep.sources", default: Some("bb"), help: "feature sources, comma separated" },
    KeyDef { name: "sweep.detectors", default: Some("lr,rf"), help: "detector kinds, comma separated" },
    KeyDef { name: "sweep.seeds", default: Some("0"), help: "cell seeds, comma separated" },
    KeyDef { name: "sweep.pairs", default: Some("300"), help: "pair budget per cell" },
    KeyDef { name: "sweep.test_fraction", default: Some("0.2"), help: "held-out share per cell" },
    KeyDef { name: "sweep.train_samples", default: Some("2000"), help: "synthetic training samples per resolution" },
    KeyDef { name: "sweep.pool_samples", default: Some("600"), help: "synthetic attack-pool samples per resolution" },
    KeyDef { name: "sweep.data_seed", default: Some("0"), help: "synthesis seed" },
    KeyDef { name: "sweep.cache", default: None, help: "cell cache dir; unset = {output.dir}/cache, 'off' disables, SPECTRAL_ASRD_CACHE overrides" },
    // report.*
    KeyDef { name: "report.input", default: None, help: "CSV report to re-render (report command)" },
    // output.*
    KeyDef { name: "output.dir", default: Some("out"), help: "output directory" },
    KeyDef { name: "output.stem", default: None, help: "artifact base name (defaults per command)" },
    KeyDef { name: "output.format", default: Some("both"), help: "csv | svg | both" },
    KeyDef { name: "output.group_by", default: Some("attack"), help: "SVG bar grouping: dataset | attack | epsilon | source | detector" },
];

fn lookup(name: &str) -> Option<&'static KeyDef> {
    KEYS.iter().find(|k| k.name == name)
}

/// Help block listing every key under the given prefixes, with defaults.
pub fn keys_help(prefixes: &[&str]) -> String {
    let mut out = String::from("Configuration keys (from --config file and --set overrides):\n");
    for key in KEYS {
        if !prefixes.iter().any(|p| key.name.starts_with(p)) {
            continue;
        }
        let default = match key.default {
            Some(d) => format!(" [default: {d}]"),
            None => String::new(),
        };
        out.push_str(&format!("  {:<26} {}{}\n", key.name, key.help.trim(), default));
    }
    out
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
    workdir: PathBuf,
}

impl RunConfig {
    /// Defaults, then the config file, then --set overrides; later wins.
    pub fn load(file: Option<&Path>, sets: &[String], workdir: &Path) -> Result<RunConfig> {
        let mut values = BTreeMap::new();
        for key in KEYS {
            if let Some(d) = key.default {
                values.insert(key.name.to_string(), d.to_string());
            }
        }
        let mut cfg = RunConfig { values, workdir: workdir.to_path_buf() };
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Error::config(format!("cannot read config {}: {e}", path.display()))
            })?;
            for (lineno, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| {
                    Error::config(format!(
                        "{}:{}: expected key=value, got {raw:?}",
                        path.display(),
                        lineno + 1
                    ))
                })?;
                cfg.set(key.trim(), value.trim())?;
            }
        }
        for pair in sets {
            let (key, value) = pair.split_once('=').ok_or_else(|| {
                Error::config(format!("--set expects key=value, got {pair:?}"))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if lookup(key).is_none() {
            return Err(Error::config(format!(
                "unknown configuration key '{key}' (see --help for the accepted keys)"
            )));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::config(format!("configuration key '{key}' is required")))
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        self.require(key)?
            .parse()
            .map_err(|_| Error::config(format!("{key} must be a nonnegative integer")))
    }

    pub fn u64(&self, key: &str) -> Result<u64> {
        self.require(key)?
            .parse()
            .map_err(|_| Error::config(format!("{key} must be a nonnegative integer")))
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        self.require(key)?
            .parse()
            .map_err(|_| Error::config(format!("{key} must be a number")))
    }

    /// Budget syntax: either a plain float or a ratio like `8/255`.
    pub fn epsilon(&self, key: &str) -> Result<f64> {
        parse_epsilon(self.require(key)?)
            .ok_or_else(|| Error::config(format!("{key} must be a float or a ratio like 8/255")))
    }

    pub fn list(&self, key: &str) -> Result<Vec<String>> {
        let items: Vec<String> = self
            .require(key)?
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
        if items.is_empty() {
            return Err(Error::config(format!("{key} must list at least one item")));
        }
        Ok(items)
    }

    /// Paths resolve against the working directory unless absolute.
    pub fn path(&self, key: &str) -> Result<PathBuf> {
        Ok(self.resolve(self.require(key)?))
    }

    pub fn resolve(&self, raw: &str) -> PathBuf {
        let p = PathBuf::from(raw);
        if p.is_absolute() {
            p
        } else {
            self.workdir.join(p)
        }
    }

    /// Full resolved state, ready to write next to a run's outputs.
    pub fn render(&self) -> String {
        let mut out = String::from("# resolved configuration\n");
        for key in KEYS {
            if let Some(v) = self.values.get(key.name) {
                out.push_str(&format!("{}={v}\n", key.name));
            }
        }
        out
    }
}

pub fn parse_epsilon(s: &str) -> Option<f64> {
    if let Some((num, den)) = s.split_once('/') {
        let num: f64 = num.trim().parse().ok()?;
        let den: f64 = den.trim().parse().ok()?;
        if den == 0.0 {
            return None;
        }
        return Some(num / den);
    }
    s.trim().parse().ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_files_and_overrides_stack_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.conf");
        std::fs::write(&file, "# comment line\nmodel.epochs = 3  # inline comment\nattack.method=fgsm\n").unwrap();
        let cfg = RunConfig::load(
            Some(&file),
            &["attack.method=pgd".to_string()],
            dir.path(),
        )
        .unwrap();
        assert_eq!(cfg.get("model.epochs"), Some("3"));
        assert_eq!(cfg.get("attack.method"), Some("pgd"), "--set outranks the file");
        assert_eq!(cfg.get("dataset.kind"), Some("synth"), "untouched keys keep defaults");
        assert_eq!(cfg.get("model.path"), None, "defaultless keys stay unset");
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_name() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.conf");
        std::fs::write(&file, "dataset.color=blue\n").unwrap();
        let err = RunConfig::load(Some(&file), &[], dir.path()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("dataset.color"));
        let err = RunConfig::load(None, &["nosuch=1".to_string()], dir.path()).unwrap_err();
        assert!(err.to_string().contains("nosuch"));
    }

    #[test]
    fn epsilon_accepts_ratios_and_floats() {
        assert_eq!(parse_epsilon("8/255"), Some(8.0 / 255.0));
        assert_eq!(parse_epsilon("0.5/255"), Some(0.5 / 255.0));
        assert_eq!(parse_epsilon("0.03"), Some(0.03));
        assert_eq!(parse_epsilon("1/0"), None);
        assert_eq!(parse_epsilon("x"), None);
    }

    #[test]
    fn rendered_config_is_stable_and_complete() {
        let dir = tempfile::tempdir().unwrap();
        let cfg =
            RunConfig::load(None, &["model.epochs=1".to_string()], dir.path()).unwrap();
        let rendered = cfg.render();
        assert!(rendered.contains("model.epochs=1\n"));
        assert!(rendered.contains("dataset.kind=synth\n"));
        assert!(!rendered.contains("model.path"), "unset keys are omitted");
        assert_eq!(rendered, cfg.render(), "rendering is deterministic");
    }

    #[test]
    fn every_registry_key_is_unique_and_prefixed() {
        let mut names: Vec<&str> = KEYS.iter().map(|k| k.name).collect();
        names.sort_unstable();
        let before = names.len();
        names.dedup();
        assert_eq!(names.len(), before, "duplicate key in the registry");
        for name in names {
            assert!(
                ["dataset.", "model.", "attack.", "detector.", "sweep.", "report.", "output."]
                    .iter()
                    .any(|p| name.starts_with(p)),
                "key {name} lacks a documented prefix"
            );
        }
    }

    #[test]
    fn help_text_filters_by_prefix() {
        let text = keys_help(&["dataset."]);
        assert!(text.contains("dataset.kind"));
        assert!(!text.contains("sweep.pairs"));
    }
}
