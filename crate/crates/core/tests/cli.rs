use std::path::Path;
use std::process::{Command, Output};

fn tagguard(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tagguard"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

const SMALL: &str = "seed = 3\n[synth]\nusers = 50\n[attack]\npopular_resource_pool = 25\n\
[train]\nmax_epochs = 2\nhidden_units = 8\n\
[run]\nrepetitions = 1\nfolds = 2\ninjection_ratios = [0.05, 0.1]\nclassifiers = [\"none\", \"nb\", \"oracle\"]\n";

#[test]
fn stats_on_three_lines() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("d.tsv"), "alice\tr1\tcar,red\nbob\tr1\tcar\ncarol\tr2\tdog,pet,car\n").unwrap();
    let out = tagguard(&["stats", "d.tsv"], dir.path());
    ok(&out);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["folksonomies"], 3);
    assert_eq!(v["users"], 3);
    assert_eq!(v["unique_tags"], 4);
    assert_eq!(v["size_histogram"]["1"], 1);
    assert_eq!(v["size_histogram"]["2"], 1);
    assert_eq!(v["size_histogram"]["3"], 1);
}

#[test]
fn data_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("empty.tsv"), "").unwrap();
    std::fs::write(dir.path().join("bad.tsv"), "alice\tr1\n").unwrap();
    for args in [&["stats", "empty.tsv"][..], &["stats", "bad.tsv"], &["stats", "missing.tsv"]] {
        let out = tagguard(args, dir.path());
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
    let out = tagguard(&["stats", "bad.tsv"], dir.path());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}

#[test]
fn config_errors_exit_2_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "[run]\nrepetitons = 2\n").unwrap();
    let out = tagguard(&["evaluate", "--config", "c.toml", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("repetitons"));
    assert!(!dir.path().join("o").exists());

    std::fs::write(dir.path().join("c.toml"), "[run]\nfolds = 1\n").unwrap();
    let out = tagguard(&["evaluate", "--config", "c.toml", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(2));

    let out = tagguard(&["evaluate", "--bogus-flag"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = tagguard(&["evaluate"], dir.path());
    assert_eq!(out.status.code(), Some(2), "missing output directory");
}

#[test]
fn evaluate_report_and_rerun() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), SMALL).unwrap();
    ok(&tagguard(&["evaluate", "--config", "c.toml", "--out", "a"], dir.path()));
    ok(&tagguard(&["evaluate", "--config", "c.toml", "--out", "b"], dir.path()));
    let read = |p: &str| std::fs::read(dir.path().join(p)).unwrap();
    assert_eq!(read("a/report.json"), read("b/report.json"));
    assert_eq!(read("a/manifest.json"), read("b/manifest.json"));

    let report: serde_json::Value = serde_json::from_slice(&read("a/report.json")).unwrap();
    let runs = report["runs"].as_array().unwrap();
    // None baseline once per attack, then nb and oracle.
    assert_eq!(runs.len(), 2 * 3);
    let none = &runs[0];
    assert_eq!(none["classifier"], "none");
    assert!(none["classification"].is_null());
    assert!(none["ratios"][0]["impact"]["affected_population"].is_number());

    let manifest: serde_json::Value = serde_json::from_slice(&read("a/manifest.json")).unwrap();
    assert_eq!(manifest["seeds"]["master"], 3);
    assert!(manifest["seeds"]["repetition_0"].is_u64());
    assert!(manifest["config"].as_str().unwrap().contains("repetitions = 1"));
    let artifacts = manifest["artifacts"].as_object().unwrap();
    assert_eq!(artifacts.len(), 5);
    for (name, hash) in artifacts {
        let bytes = read(&format!("a/{name}"));
        assert_eq!(hash.as_str().unwrap(), tagguard::report::sha256_hex(&bytes), "{name}");
    }

    ok(&tagguard(&["report", "a/report.json", "--out", "csv"], dir.path()));
    for name in ["classification_f.csv", "affected_population.csv", "bogus_rank.csv", "baseline_deltas.csv"] {
        assert_eq!(read(&format!("csv/{name}")), read(&format!("a/{name}")), "{name}");
    }
}

#[test]
fn seed_flag_changes_the_run() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), SMALL).unwrap();
    ok(&tagguard(&["attack-gen", "--config", "c.toml", "--out", "a"], dir.path()));
    ok(&tagguard(&["attack-gen", "--config", "c.toml", "--out", "b", "--seed", "4"], dir.path()));
    let a = std::fs::read_to_string(dir.path().join("a/batch.tsv")).unwrap();
    let b = std::fs::read_to_string(dir.path().join("b/batch.tsv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn attack_train_recommend_chain() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), SMALL).unwrap();
    ok(&tagguard(&["synth", "--config", "c.toml", "--out", "data"], dir.path()));
    let with_data = format!("{SMALL}[dataset]\npath = \"data/corpus.tsv\"\n");
    std::fs::write(dir.path().join("d.toml"), with_data).unwrap();

    ok(&tagguard(&["attack-gen", "--config", "d.toml", "--out", "atk"], dir.path()));
    let sidecar: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("atk/batch.json")).unwrap()).unwrap();
    for key in ["kind", "ratio", "seed", "popular_tag_pool", "popular_resource_pool", "bogus_resource", "target_resource"] {
        assert!(sidecar.get(key).is_some(), "{key}");
    }
    let batch = std::fs::read_to_string(dir.path().join("atk/batch.tsv")).unwrap();
    assert_eq!(batch.lines().count() as u64, sidecar["folksonomies"].as_u64().unwrap());
    assert!(batch.lines().all(|l| l.split('\t').nth(1) == Some("bogus-resource")));

    ok(&tagguard(&["train", "--config", "d.toml", "--classifier", "svm", "--out", "model"], dir.path()));
    let model: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("model/model.json")).unwrap()).unwrap();
    assert_eq!(model["kind"], "svm");
    assert!(model["vocabulary_fingerprint"].is_string());

    ok(&tagguard(
        &["recommend", "--config", "d.toml", "--out", "rec", "--batch", "atk/batch.tsv", "--model", "model/model.json"],
        dir.path(),
    ));
    let lists: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("rec/topk.json")).unwrap()).unwrap();
    let lists = lists.as_object().unwrap();
    assert!(!lists.is_empty() && lists.len() <= 50);
    for items in lists.values() {
        let items = items.as_array().unwrap();
        assert!(items.len() <= 15);
        let sims: Vec<f64> = items.iter().map(|i| i["similarity"].as_f64().unwrap()).collect();
        assert!(sims.windows(2).all(|w| w[0] >= w[1]));
    }

    let out = tagguard(&["train", "--config", "d.toml", "--classifier", "forest", "--out", "m2"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}
