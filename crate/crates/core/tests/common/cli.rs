//! Running the `bdisc` binary on a small synthetic setup.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use super::fixtures::small_spec;

pub fn bdisc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bdisc"))
        .args(args)
        .current_dir(dir)
        .env("NO_COLOR", "1")
        .output()
        .expect("bdisc runs")
}

/// Writes `small.json` (a 3-class synthetic definition) and `config.json`
/// (fast stage settings that read it) into `dir`.
pub fn write_small_setup(dir: &Path) {
    std::fs::write(dir.join("small.json"), serde_json::to_string_pretty(&small_spec()).unwrap()).unwrap();
    let config = serde_json::json!({
        "synth": "small.json",
        "trial": {
            "encoder": {"epochs": 5, "learning_rate": 3e-3, "batch_size": 32},
            "tsne": {"n_iter": 300, "exaggeration_iters": 100},
            "density": {"mc_samples": 500}
        },
        "deploy": {"window": 40, "stride": 40, "k": 4},
        "stream": {"windows": 3, "novel_window": 1}
    });
    std::fs::write(dir.join("config.json"), serde_json::to_string_pretty(&config).unwrap()).unwrap();
}

/// Every file under `root`, keyed by relative path.
pub fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

/// The command lines exercised for reproducibility, run inside a directory
/// prepared by [`write_small_setup`].
pub fn command_lines() -> Vec<Vec<&'static str>> {
    vec![
        vec!["synth", "--spec", "small.json", "--seed", "4", "--out", "out/synth.csv"],
        vec!["discover", "--config", "config.json", "--withhold", "3", "--seed", "1", "--out", "out/discover"],
        vec!["control", "--config", "config.json", "--withhold", "3", "--seed", "1", "--out", "out/control"],
        vec!["suite", "--config", "config.json", "--seed", "2", "--out", "out/suite"],
        vec!["deploy", "--config", "config.json", "--seed", "3", "--out", "out/deploy"],
        vec!["plot", "--trial", "out/suite"],
    ]
}
