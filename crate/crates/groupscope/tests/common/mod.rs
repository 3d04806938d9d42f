#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use groupscope::config::Config;
use groupscope::pipeline::{Pipeline, RunOptions};

/// Files whose content legitimately differs between runs (wall-clock
/// timestamps).
pub const VOLATILE: [&str; 2] = ["run_log.jsonl", "transcripts.jsonl"];

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic")
}

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// The bundled fixture configuration writing to `out`.
pub fn fixture_config(out: &Path) -> Config {
    let mut cfg = Config::load(&fixture_dir().join("config.toml")).expect("fixture config loads");
    cfg.pipeline.output.dir = out.to_path_buf();
    cfg
}

pub fn pipeline(cfg: Config) -> Pipeline {
    Pipeline::new(cfg, RunOptions::default()).expect("pipeline builds")
}

/// Every regular, non-hidden, non-volatile file directly under `dir`.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).expect("output dir readable") {
        let entry = entry.unwrap();
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.starts_with('.') || VOLATILE.contains(&name.as_str()) || !entry.file_type().unwrap().is_file() {
            continue;
        }
        out.insert(name, std::fs::read(entry.path()).unwrap());
    }
    out
}
