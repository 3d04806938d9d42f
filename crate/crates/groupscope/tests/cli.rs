mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use common::{fixture_config, fixture_dir, pipeline, snapshot};
use groupscope::manifest::RunManifest;
use groupscope_core::digest::sha256_hex;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_groupscope"))
}

/// Copy the fixture inputs into `dir` and return the config path; outputs go
/// to `dir/out`.
fn staged_fixture(dir: &Path) -> PathBuf {
    for name in ["config.toml", "corpus.jsonl", "gold.jsonl", "vote_history.csv"] {
        std::fs::copy(fixture_dir().join(name), dir.join(name)).unwrap();
    }
    dir.join("config.toml")
}

#[test]
fn help_lists_every_stage() {
    let out = bin().arg("--help").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for cmd in [
        "run", "ingest", "label-dict", "extract-llm", "embed", "esf-fit", "esf-filter", "expand-dict", "salience",
        "similarity", "keyness", "panel", "regress", "eval", "serve",
    ] {
        assert!(text.lines().any(|l| l.trim_start().starts_with(cmd)), "{cmd} missing from\n{text}");
    }
}

#[test]
fn regress_before_panel_fails_with_guidance() {
    let dir = tempfile::tempdir().unwrap();
    let config = staged_fixture(dir.path());
    let out = bin().args(["regress", "--config"]).arg(&config).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("run panel first"), "{err}");
}

#[test]
fn bad_config_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = staged_fixture(dir.path());
    std::fs::write(&config, "[corpus]\npath = \"corpus.jsonl\"\n[output]\ndir = \"out\"\n[esf]\nnu = 0.0\n").unwrap();
    let out = bin().args(["ingest", "-c"]).arg(&config).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("esf.nu"));
}

#[test]
fn stage_by_stage_equals_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = staged_fixture(dir.path());
    for stage in [
        "ingest", "label-dict", "extract-llm", "embed", "esf-fit", "esf-filter", "expand-dict", "salience",
        "similarity", "keyness", "panel", "regress", "eval",
    ] {
        let out = bin().arg(stage).arg("-c").arg(&config).output().unwrap();
        assert!(out.status.success(), "{stage}: {}", String::from_utf8_lossy(&out.stderr));
        let stdout = String::from_utf8(out.stdout).unwrap();
        assert!(stdout.starts_with(&format!("{stage}: ")), "{stdout}");
    }
    let reference = tempfile::tempdir().unwrap();
    pipeline(fixture_config(reference.path())).run_all().unwrap();
    assert_eq!(snapshot(&dir.path().join("out")), snapshot(reference.path()));
}

/// Kill the CLI at staggered points during a full run. Whatever is visible
/// afterwards must be a complete output and the manifest must describe the
/// files on disk.
#[test]
fn interrupted_runs_leave_only_complete_files() {
    let reference = tempfile::tempdir().unwrap();
    pipeline(fixture_config(reference.path())).run_all().unwrap();
    let golden = snapshot(reference.path());

    // time a full run to spread the kill points over it
    let probe = tempfile::tempdir().unwrap();
    let config = staged_fixture(probe.path());
    let started = std::time::Instant::now();
    assert!(bin().arg("run").arg("-c").arg(&config).stdout(Stdio::null()).stderr(Stdio::null()).status().unwrap().success());
    let full = started.elapsed();

    for i in 1..=8u32 {
        let dir = tempfile::tempdir().unwrap();
        let config = staged_fixture(dir.path());
        let mut child = bin()
            .arg("run")
            .arg("-c")
            .arg(&config)
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .unwrap();
        std::thread::sleep(full * i / 9);
        let _ = child.kill();
        child.wait().unwrap();

        let out = dir.path().join("out");
        if !out.exists() {
            continue;
        }
        for (name, bytes) in snapshot(&out) {
            if name == "manifest.json" {
                continue;
            }
            assert!(bytes == golden[&name], "kill point {i}: {name} is partial or wrong");
        }
        if let Some(m) = RunManifest::load(&out).unwrap() {
            for rec in m.stages.values() {
                for (name, digest) in &rec.outputs {
                    let bytes = std::fs::read(out.join(name)).unwrap();
                    assert_eq!(&sha256_hex(&bytes), digest, "kill point {i}: {name}");
                }
            }
        }
        // resuming finishes the run with identical results
        assert!(bin().arg("run").arg("-c").arg(&config).stdout(Stdio::null()).stderr(Stdio::null()).status().unwrap().success());
        assert_eq!(snapshot(&out), golden, "kill point {i}: resumed run differs");
    }
}
