use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use a2s::dsp::{write_wav, AudioClip, SAMPLE_RATE};
use a2s::pipeline::{Manifest, Split};
use tempfile::TempDir;

fn a2s(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_a2s")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn toy_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/toy")
}

/// A small corpus and a config with a very small model.
fn setup(sources: usize, extra: &str) -> (TempDir, PathBuf) {
    let dir = TempDir::new().unwrap();
    let corpus = dir.path().join("corpus");
    fs::create_dir(&corpus).unwrap();
    for i in 0..sources {
        let name = format!("toy{i:02}.krn");
        fs::copy(toy_dir().join(&name), corpus.join(&name)).unwrap();
    }
    let config = dir.path().join("config.json");
    fs::write(
        &config,
        format!(
            r#"{{
  "seed": 3,
  "split": {{"train": 0.5, "validation": 0.25, "test": 0.25}},
  "model": {{"conv_filters": 2, "conv_layers": 1, "recurrent_layers": 1, "hidden_units": 4}},
  "train": {{"epochs": 1, "learning_rate": {{"base": 0.01, "decay": 1.1, "cycle": 50}}}}{extra}
}}"#
        ),
    )
    .unwrap();
    (dir, config)
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&a2s(&[])), 1);
    assert_eq!(code(&a2s(&["frobnicate"])), 1);
    assert_eq!(code(&a2s(&["--help"])), 0);
    assert_eq!(code(&a2s(&["build", "--config", "/nonexistent/config.json"])), 1);
}

#[test]
fn empty_corpus_is_a_data_error() {
    let (dir, config) = setup(0, "");
    let out = a2s(&["build", "--config", arg(&config)]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!dir.path().join("build/manifest.jsonl").exists());
}

#[test]
fn build_is_deterministic_and_split_by_source() {
    let (dir, config) = setup(8, "");
    let snapshot = || -> HashMap<PathBuf, Vec<u8>> {
        let out = a2s(&["build", "--config", arg(&config)]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let mut files = HashMap::new();
        for sub in ["tokens", "wav"] {
            for e in fs::read_dir(dir.path().join("build").join(sub)).unwrap() {
                let p = e.unwrap().path();
                files.insert(p.clone(), fs::read(&p).unwrap());
            }
        }
        let m = dir.path().join("build/manifest.jsonl");
        files.insert(m.clone(), fs::read(&m).unwrap());
        files
    };
    let first = snapshot();
    fs::remove_dir_all(dir.path().join("build")).unwrap();
    assert_eq!(snapshot(), first);

    let manifest = Manifest::load(&dir.path().join("build/manifest.jsonl")).unwrap();
    let mut split_of: HashMap<&str, Split> = HashMap::new();
    for r in &manifest.records {
        assert!(manifest.resolve(&r.audio).is_file());
        assert!(manifest.resolve(&r.tokens).is_file());
        let s = *split_of.entry(r.source.as_str()).or_insert(r.split);
        assert_eq!(s, r.split, "{} spans two splits", r.source);
    }
    // 8 sources at 50/25/25
    let count = |s: Split| split_of.values().filter(|&&v| v == s).count();
    assert_eq!((count(Split::Train), count(Split::Validation), count(Split::Test)), (4, 2, 2));
    assert!(manifest.records.len() > 8, "fragmenting produces several samples per source");
}

#[test]
fn seed_flag_changes_the_dataset() {
    let (dir, config) = setup(4, "");
    a2s(&["build", "--config", arg(&config)]);
    let a = fs::read(dir.path().join("build/manifest.jsonl")).unwrap();
    a2s(&["build", "--config", arg(&config), "--seed", "99"]);
    let b = fs::read(dir.path().join("build/manifest.jsonl")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn train_transcribe_evaluate() {
    let (dir, config) = setup(4, "");
    assert_eq!(code(&a2s(&["build", "--config", arg(&config)])), 0);
    let out = a2s(&["train", "--config", arg(&config)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let ckdir = dir.path().join("build/checkpoints");
    let ckpt = ckdir.join("last.ckpt");
    assert!(ckpt.is_file());
    assert!(ckdir.join("best.ckpt").is_file());
    let log = fs::read_to_string(ckdir.join("train_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 1);
    let row: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert_eq!(row["epoch"], 1);

    // silent audio: some output, no crash
    let wav = dir.path().join("silence.wav");
    write_wav(&wav, &AudioClip::new(vec![0.0; 4000], SAMPLE_RATE).unwrap()).unwrap();
    let out = a2s(&["transcribe", "--checkpoint", arg(&ckpt), arg(&wav)]);
    assert!([0, 3].contains(&code(&out)), "{}", String::from_utf8_lossy(&out.stderr));

    // a corrupt checkpoint is a data error, not a decoding failure
    let bad = dir.path().join("bad.ckpt");
    let mut bytes = fs::read(&ckpt).unwrap();
    bytes.truncate(bytes.len() / 2);
    fs::write(&bad, bytes).unwrap();
    assert_eq!(code(&a2s(&["transcribe", "--checkpoint", arg(&bad), arg(&wav)])), 2);

    let manifest = dir.path().join("build/manifest.jsonl");
    let out = a2s(&[
        "evaluate", "--checkpoint", arg(&ckpt), "--manifest", arg(&manifest), "--split", "train", "--json",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["corpus"]["cer"].as_f64().unwrap() >= 0.0);
    assert!(!report["samples"].as_array().unwrap().is_empty());
}

#[test]
fn oracle_evaluation_is_perfect() {
    let (_dir, config) = setup(4, "");
    assert_eq!(code(&a2s(&["build", "--config", arg(&config)])), 0);
    let out = a2s(&["evaluate", "--config", arg(&config), "--split", "train", "--oracle", "--json"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["corpus"]["wer"], 0.0);
    assert_eq!(report["corpus"]["cer"], 0.0);
    assert_eq!(report["corpus"]["decodable_fraction"], 1.0);
    let text = a2s(&["evaluate", "--config", arg(&config), "--split", "train", "--oracle"]);
    assert!(String::from_utf8_lossy(&text.stdout).contains("corpus (micro-average)\twer=0.0000\tcer=0.0000"));
}

#[test]
fn empty_split_and_missing_files() {
    let (dir, config) = setup(2, r#", "split": {"train": 1.0, "validation": 0.0, "test": 0.0}"#);
    // the duplicate key is rejected as a config error
    assert_eq!(code(&a2s(&["build", "--config", arg(&config)])), 1);
    let text = fs::read_to_string(&config).unwrap().replace(
        r#""split": {"train": 0.5, "validation": 0.25, "test": 0.25},"#,
        "",
    );
    fs::write(&config, text).unwrap();
    assert_eq!(code(&a2s(&["build", "--config", arg(&config)])), 0);
    let out = a2s(&["evaluate", "--config", arg(&config), "--split", "test", "--oracle"]);
    assert_eq!(code(&out), 2);

    let manifest = Manifest::load(&dir.path().join("build/manifest.jsonl")).unwrap();
    fs::remove_file(manifest.resolve(&manifest.records[0].tokens)).unwrap();
    let out = a2s(&["evaluate", "--config", arg(&config), "--split", "train", "--oracle", "--json"]);
    assert_eq!(code(&out), 0);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["failures"][0]["id"], manifest.records[0].id.as_str());
    assert_eq!(report["samples"].as_array().unwrap().len(), manifest.records.len() - 1);
}

#[test]
fn resume_matches_uninterrupted_run() {
    let (dir, config) = setup(2, "");
    let text = fs::read_to_string(&config).unwrap().replace(r#""epochs": 1"#, r#""epochs": 2"#);
    fs::write(&config, text).unwrap();
    assert_eq!(code(&a2s(&["build", "--config", arg(&config)])), 0);
    let ckdir = dir.path().join("build/checkpoints");

    assert_eq!(code(&a2s(&["train", "--config", arg(&config)])), 0);
    let straight = fs::read(ckdir.join("last.ckpt")).unwrap();
    let straight_log = fs::read_to_string(ckdir.join("train_log.jsonl")).unwrap();
    assert_eq!(straight_log.lines().count(), 2);
    // identical reruns are bitwise identical
    assert_eq!(code(&a2s(&["train", "--config", arg(&config)])), 0);
    assert_eq!(fs::read(ckdir.join("last.ckpt")).unwrap(), straight);

    let one = fs::read_to_string(&config).unwrap().replace(r#""epochs": 2"#, r#""epochs": 1"#);
    fs::write(&config, &one).unwrap();
    assert_eq!(code(&a2s(&["train", "--config", arg(&config)])), 0);
    let saved = dir.path().join("epoch1.ckpt");
    fs::copy(ckdir.join("last.ckpt"), &saved).unwrap();
    fs::write(&config, one.replace(r#""epochs": 1"#, r#""epochs": 2"#)).unwrap();
    let out = a2s(&["train", "--config", arg(&config), "--checkpoint", arg(&saved)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read(ckdir.join("last.ckpt")).unwrap(), straight);
    assert_eq!(fs::read_to_string(ckdir.join("train_log.jsonl")).unwrap(), straight_log);

    // a different seed may not resume this run
    let out = a2s(&["train", "--config", arg(&config), "--checkpoint", arg(&saved), "--seed", "4"]);
    assert_ne!(code(&out), 0);
}
