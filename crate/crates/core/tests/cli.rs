mod common;

use common::cli::{bdisc, command_lines, snapshot, write_small_setup};
use serde_json::Value;

fn read_json(p: impl AsRef<std::path::Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn discover_without_withheld_class_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    write_small_setup(dir.path());
    let out = bdisc(dir.path(), &["discover", "--config", "config.json"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("existing-novel requires withheld class"), "{err}");
    assert!(err.contains("Usage"), "{err}");
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    write_small_setup(dir.path());
    let out = bdisc(dir.path(), &["control", "--config", "config.json", "--set", "trial.density.beta=1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown config key"));
    let out = bdisc(dir.path(), &["discover", "--synth", "5class", "--data", "x.csv", "--withhold", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unreadable_data_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.csv"), "not,a,snippet\n1,2,3\n").unwrap();
    let out = bdisc(dir.path(), &["control", "--data", "bad.csv"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn control_report_carries_metadata_and_null_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    write_small_setup(dir.path());
    let out = bdisc(
        dir.path(),
        &["control", "--config", "config.json", "--withhold", "1", "--alpha", "0.9", "--mc", "700", "--out", "ctrl"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = read_json(dir.path().join("ctrl/report.json"));
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["kind"], "control");
    assert!(r["table_row"]["acc"].is_null());
    assert_eq!(r["metadata"]["alpha"], 0.9);
    assert_eq!(r["metadata"]["mc_samples"], 700);
    assert_eq!(r["metadata"]["withheld_class"], 1);
    for f in ["rows.csv", "confusion.csv", "containment.csv", "trial_1_panels.svg", "trial_1_confusion.svg"] {
        assert!(dir.path().join("ctrl").join(f).is_file(), "{f}");
    }
}

#[test]
fn synth_output_loads_back() {
    let dir = tempfile::tempdir().unwrap();
    write_small_setup(dir.path());
    let out = bdisc(dir.path(), &["synth", "--spec", "small.json", "--seed", "7", "--out", "s.csv"]);
    assert_eq!(out.status.code(), Some(0));
    let d = behavior_discovery::data::load_csv(dir.path().join("s.csv")).unwrap();
    assert_eq!(d.len(), 130);
    let direct = common::fixtures::small_spec().generate(7).unwrap();
    assert_eq!(d.snippets.len(), direct.snippets.len());
    for (a, b) in d.snippets.iter().zip(&direct.snippets) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.label, b.label);
        assert_eq!(a.values, b.values);
    }
}

#[test]
fn deploy_defaults_to_window_100_and_ten_clusters() {
    let dir = tempfile::tempdir().unwrap();
    let out = bdisc(
        dir.path(),
        &[
            "deploy", "--synth", "9class", "--windows", "1", "--epochs", "3", "--set", "trial.tsne.n_iter=300",
            "--set", "trial.tsne.exaggeration_iters=100", "--mc", "300", "--out", "dep",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = read_json(dir.path().join("dep/deploy.json"));
    assert_eq!(r["metadata"]["window"], 100);
    assert_eq!(r["metadata"]["stride"], 100);
    assert_eq!(r["metadata"]["k"], 10);
    assert_eq!(r["metadata"]["n_known"], 9);
    assert_eq!(r["metadata"]["n_free"], 1);
}

#[test]
fn every_command_is_byte_reproducible() {
    let runs: Vec<_> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            write_small_setup(dir.path());
            for args in command_lines() {
                let out = bdisc(dir.path(), &args);
                assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
            }
            let snap = snapshot(&dir.path().join("out"));
            (dir, snap)
        })
        .collect();
    let (a, b) = (&runs[0].1, &runs[1].1);
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (path, bytes) in a {
        assert!(bytes == &b[path], "{} differs", path.display());
    }
    let suite_csv = String::from_utf8(a[std::path::Path::new("suite/suite.csv")].clone()).unwrap();
    assert_eq!(suite_csv.lines().count(), 1 + 6);
}
