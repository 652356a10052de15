//! End-to-end checks of the binary: exit codes, cache behavior, output
//! determinism, and the shapes promised by the interface contract.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dicke-memory"));
    // isolate from any ambient result-root override
    cmd.env_remove("DICKE_MEMORY_RESULTS");
    cmd
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read_dir_file(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("reading {name}: {e}"))
}

#[test]
fn list_names_every_experiment() {
    let out = bin().arg("list").output().unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    for id in [
        "fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "fig9", "fig10", "fig11",
        "fig12", "table1", "table2", "custom",
    ] {
        assert!(text.contains(id), "list output missing {id}");
    }
}

#[test]
fn validate_accepts_ids_and_flags_bad_configs_with_field_diagnostics() {
    let ok = bin().args(["validate", "fig8"]).output().unwrap();
    assert!(ok.status.success(), "{}", stderr(&ok));
    assert!(stdout(&ok).contains("ok:"));

    let missing = bin().args(["validate", "nosuch"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "experiment = \"fig4\"\n[grid]\nbanana = 3\n").unwrap();
    let out = bin().args(["validate", bad.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let msg = stderr(&out);
    assert!(msg.contains("banana"), "diagnostic should name the field: {msg}");
    assert!(msg.contains("line"), "diagnostic should carry a line number: {msg}");

    let invalid = dir.path().join("invalid.toml");
    std::fs::write(&invalid, "experiment = \"custom\"\n[state]\nkind = \"dicke\"\nj = 1.0\nm = 7.0\n")
        .unwrap();
    let out = bin().args(["validate", invalid.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "m > j must fail validation");
}

#[test]
fn run_caches_results_and_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    let first = bin().args(["run", "fig4", "--out", root.to_str().unwrap()]).output().unwrap();
    assert!(first.status.success(), "{}", stderr(&first));
    assert!(stdout(&first).contains("wrote"));

    let hash_dir = std::fs::read_dir(root).unwrap().next().unwrap().unwrap().path();
    let csv1 = read_dir_file(&hash_dir, "dicke_early_landscape.csv");
    let manifest1 = read_dir_file(&hash_dir, "manifest.json");

    let second = bin().args(["run", "fig4", "--out", root.to_str().unwrap()]).output().unwrap();
    assert!(second.status.success());
    assert!(stdout(&second).contains("cached"), "unchanged config must be a no-op");
    assert_eq!(read_dir_file(&hash_dir, "dicke_early_landscape.csv"), csv1);

    let forced = bin()
        .args(["run", "fig4", "--out", root.to_str().unwrap(), "--force"])
        .output()
        .unwrap();
    assert!(forced.status.success());
    assert!(stdout(&forced).contains("wrote"), "--force must recompute");
    assert_eq!(
        read_dir_file(&hash_dir, "dicke_early_landscape.csv"),
        csv1,
        "recomputed CSV must be byte-identical"
    );

    // manifest content is identical up to the wall time field
    let m1: serde_json::Value = serde_json::from_slice(&manifest1).unwrap();
    let m2: serde_json::Value =
        serde_json::from_slice(&read_dir_file(&hash_dir, "manifest.json")).unwrap();
    assert_eq!(m1["config_hash"], m2["config_hash"]);
    assert_eq!(m1["files"], m2["files"]);
    assert_eq!(m1["headline"], m2["headline"]);
}

#[test]
fn manifest_lists_every_file_and_the_hash_keys_the_directory() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let out = bin().args(["run", "table1", "--out", root.to_str().unwrap()]).output().unwrap();
    assert!(out.status.success(), "{}", stderr(&out));

    let hash_dir = std::fs::read_dir(root).unwrap().next().unwrap().unwrap().path();
    let manifest: serde_json::Value =
        serde_json::from_slice(&read_dir_file(&hash_dir, "manifest.json")).unwrap();
    assert_eq!(
        manifest["config_hash"].as_str().unwrap(),
        hash_dir.file_name().unwrap().to_str().unwrap()
    );
    let files = manifest["files"].as_array().unwrap();
    assert!(!files.is_empty());
    for f in files {
        assert!(hash_dir.join(f.as_str().unwrap()).is_file(), "missing listed file {f}");
    }
    // every emitted CSV carries a header row naming columns with units
    for f in files {
        let text = std::fs::read_to_string(hash_dir.join(f.as_str().unwrap())).unwrap();
        let header = text.lines().next().unwrap();
        assert!(header.contains('('), "header must name units: {header}");
        assert!(text.ends_with('\n'));
    }
}

#[test]
fn env_var_overrides_the_result_root() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("env-root");
    let out = bin()
        .args(["run", "table2"])
        .env("DICKE_MEMORY_RESULTS", root.to_str().unwrap())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let entries: Vec<_> = std::fs::read_dir(&root).unwrap().collect();
    assert_eq!(entries.len(), 1, "results must land under the env root");
}

#[test]
fn run_accepts_config_files_and_custom_ground_state_yields_zero_headline() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("ground.toml");
    std::fs::write(
        &config,
        "experiment = \"custom\"\n\
         [system]\nn_atoms = 2\ngamma_over_g = 0.5\n\
         [state]\nkind = \"ground\"\n\
         [window]\nt_window = 1.0\n\
         [grid]\npoints = 5\nrefine = false\n",
    )
    .unwrap();
    let root = dir.path().join("out");
    let out = bin()
        .args(["run", config.to_str().unwrap(), "--out", root.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));

    let hash_dir = std::fs::read_dir(&root).unwrap().next().unwrap().unwrap().path();
    let manifest: serde_json::Value =
        serde_json::from_slice(&read_dir_file(&hash_dir, "manifest.json")).unwrap();
    let headline = manifest["headline"].as_object().unwrap();
    assert!(!headline.is_empty());
    for (key, value) in headline {
        assert_eq!(value.as_f64().unwrap(), 0.0, "headline {key} must vanish for the ground state");
    }
}

#[test]
fn capacity_overruns_exit_3_with_a_suggestion() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("big.toml");
    std::fs::write(&config, "experiment = \"fig2\"\n[system]\nn_atoms = 3\n").unwrap();
    let out = bin()
        .args(["run", config.to_str().unwrap(), "--out", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let msg = stderr(&out);
    assert!(msg.contains("long_running"), "must suggest a way out: {msg}");
}

#[test]
fn measure_emits_single_line_json_with_the_contract_keys() {
    let out = bin()
        .args(["measure", "--state", "ground", "--n-atoms", "2", "--window", "0.5", "--grid", "5"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 1, "measure output must be a single line");
    let v: serde_json::Value = serde_json::from_str(text.trim()).unwrap();
    for key in ["n_m", "n_m_ind", "enhancement", "n_p", "s", "regime"] {
        assert!(v.get(key).is_some(), "missing key {key}");
    }
    for key in ["n_m", "n_m_ind", "enhancement", "n_p", "s"] {
        assert_eq!(v[key].as_f64().unwrap(), 0.0, "{key} must vanish for the ground state");
    }

    let bad = bin().args(["measure", "--state", "squeezed:1"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));

    let clash = bin()
        .args(["measure", "--state", "dicke:1,0", "--n-atoms", "4", "--window", "0.1"])
        .output()
        .unwrap();
    assert_eq!(clash.status.code(), Some(2), "state/atom-count clash is a config error");
}
