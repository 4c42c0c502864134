//! The CLI commands against files on disk, and the binary itself.

use std::path::Path;
use std::process::Command;

use hyperlocal::app::commands::{cmd_eval, cmd_gazetteer_validate, cmd_replay, cmd_stamp, cmd_synth, ReplayInputs};
use hyperlocal::app::AppConfig;
use hyperlocal::stamper::RuleHistogram;

fn synth_config(dir: &Path) -> AppConfig {
    let mut cfg = AppConfig::load(Some(&dir.join("hyperlocal.toml"))).unwrap();
    let defaults = AppConfig::default();
    cfg.paths.gazetteer = defaults.paths.gazetteer;
    cfg.paths.geocoder_gazetteer = defaults.paths.geocoder_gazetteer;
    cfg.paths.cities = defaults.paths.cities;
    cfg
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

#[test]
fn synth_is_byte_identical_per_seed_and_fires_every_rule() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (_, summary) = cmd_synth(&AppConfig::default(), 11, a.path(), true).unwrap();
    cmd_synth(&AppConfig::default(), 11, b.path(), true).unwrap();
    for f in ["corpus.jsonl", "impressions.jsonl", "truth.jsonl", "requests.jsonl", "dma.json", "publishers.json", "affinity.jsonl", "stamps.jsonl"] {
        assert_eq!(read(&a.path().join(f)), read(&b.path().join(f)), "{f} differs");
    }
    let hist = summary.histogram.unwrap();
    assert!(hist.all_fired(), "{hist}");
}

#[test]
fn empty_corpus_stamps_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    std::fs::write(&corpus, "").unwrap();
    let mut cfg = AppConfig::default();
    cfg.paths.affinity = dir.path().join("affinity.jsonl");
    std::fs::write(&cfg.paths.affinity, "").unwrap();
    let out = dir.path().join("stamps.jsonl");
    let run = cmd_stamp(&cfg, &corpus, &out).unwrap();
    assert_eq!(run.histogram, RuleHistogram::default());
    assert!(read(&out).is_empty());
}

#[test]
fn stamp_needs_an_affinity_file() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = AppConfig::default();
    cfg.paths.affinity = dir.path().join("missing.jsonl");
    let corpus = dir.path().join("corpus.jsonl");
    std::fs::write(&corpus, "").unwrap();
    assert!(cmd_stamp(&cfg, &corpus, &dir.path().join("out.jsonl")).is_err());
}

#[test]
fn eval_skips_malformed_impressions_and_pairs_the_arms() {
    let dir = tempfile::tempdir().unwrap();
    cmd_synth(&AppConfig::default(), 5, dir.path(), true).unwrap();
    let cfg = synth_config(dir.path());
    let p = &cfg.paths;
    let clean = cmd_eval(&cfg, &p.stamps, &p.impressions, &p.dma, &p.corpus).unwrap();

    let dirty = dir.path().join("dirty.jsonl");
    let mut text = String::from_utf8(read(&p.impressions)).unwrap();
    text.push_str("{\"lat\": 91, \"lon\": 0, \"article_id\": \"x\"}\nnot json\n");
    std::fs::write(&dirty, text).unwrap();
    let with_junk = cmd_eval(&cfg, &p.stamps, &dirty, &p.dma, &p.corpus).unwrap();
    assert_eq!(clean, with_junk);
    assert!(clean.treatment.p50_km <= clean.treatment.p75_km);
    assert_eq!(clean.treatment.n, clean.baseline.n);
}

#[test]
fn replay_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    cmd_synth(&AppConfig::default(), 6, dir.path(), true).unwrap();
    let cfg = synth_config(dir.path());
    let inputs = ReplayInputs::from_config(&cfg);
    let a = cmd_replay(&cfg, &inputs).unwrap();
    assert_eq!(a, cmd_replay(&cfg, &inputs).unwrap());
    assert!(a.treatment.impressions >= 2000);
    assert_eq!(a.treatment.unknown_articles, 0);
}

#[test]
fn bundled_gazetteer_validates() {
    let report = cmd_gazetteer_validate(&AppConfig::default(), &[]).unwrap();
    assert!(report.records > 100);
    assert!(report.per_level["county_or_district"] > 20);
    assert!(report.shared_aliases.contains(&"glendale".to_string()));
}

#[test]
fn binary_runs_synth_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_hyperlocal");
    let synth = Command::new(bin)
        .args(["synth", "--seed", "3", "--out-dir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(synth.status.success());
    let config = dir.path().join("hyperlocal.toml");
    let out = Command::new(bin).arg("--config").arg(&config).args(["eval", "--replay", "--json"]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["evaluation"]["treatment"]["n"].as_u64().unwrap() >= 2000);

    let bad = Command::new(bin)
        .arg("--config")
        .arg(&config)
        .args(["eval", "--impressions"])
        .arg(dir.path().join("corpus.jsonl"))
        .output()
        .unwrap();
    assert!(!bad.status.success());
}

#[test]
fn binary_rejects_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "geohash_len = 5\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_hyperlocal"))
        .arg("--config")
        .arg(&config)
        .arg("gazetteer-validate")
        .output()
        .unwrap();
    assert!(!out.status.success());
}
