//! End-to-end checks of the command-line front end: determinism of emitted
//! artifacts (the eighth acceptance criterion), manifest round-trips, config
//! validation, and the channel-info report.

use std::path::{Path, PathBuf};
use std::process::Command;

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_adrate")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("adrate-test-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

const THEOREM_CONFIG: &str = r#"
kind = "theorem-check"
seed = 7

[channel]
eta = 0.8

[povm]
family = "kennedy"

[energy]
value = 0.1

[amplitudes]
re = { min = -1.2, max = 1.2, count = 25 }

[lambda]
re = { min = -0.6, max = 0.6, count = 9 }
rounds = 2

[adaptive]
n_modes = 2
random_policies = 25
optimized_policies = 1

[theorem]
certificate = { min = 0.0, max = 0.6, count = 5 }
"#;

fn run_ok(args: &[&str]) {
    let output = Command::new(binary()).args(args).output().unwrap();
    assert!(
        output.status.success(),
        "command {:?} failed: {}\n{}",
        args,
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("cannot read {}: {e}", path.display()))
}

#[test]
fn theorem_check_is_bit_deterministic() {
    let dir = scratch("determinism");
    let config = write_config(&dir, "exp.toml", THEOREM_CONFIG);
    let out_a = dir.join("a");
    let out_b = dir.join("b");
    run_ok(&[
        "theorem-check",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_a.to_str().unwrap(),
        "--threads",
        "4",
    ]);
    run_ok(&[
        "theorem-check",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_b.to_str().unwrap(),
        "--threads",
        "2",
    ]);
    for name in ["theorem_report.csv", "theorem_certificate.csv"] {
        let a = read(&out_a.join(name));
        let b = read(&out_b.join(name));
        assert_eq!(a, b, "{name} differs between identical runs");
        assert!(!a.is_empty());
    }
    println!("[8/8] command-line determinism: PASS (bit-identical report and certificate)");

    // manifest round-trip: re-running from the emitted manifest reproduces
    // the same artifacts
    let out_c = dir.join("c");
    run_ok(&[
        "theorem-check",
        "--config",
        out_a.join("manifest.json").to_str().unwrap(),
        "--out",
        out_c.to_str().unwrap(),
    ]);
    for name in ["theorem_report.csv", "theorem_certificate.csv"] {
        assert_eq!(
            read(&out_a.join(name)),
            read(&out_c.join(name)),
            "{name} differs after a manifest round-trip"
        );
    }

    // seed override must change the random instances
    let out_d = dir.join("d");
    run_ok(&[
        "theorem-check",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_d.to_str().unwrap(),
        "--seed",
        "8",
    ]);
    assert_ne!(
        read(&out_a.join("theorem_report.csv")),
        read(&out_d.join("theorem_report.csv")),
        "different seeds must produce different random instances"
    );
}

#[test]
fn csv_numbers_carry_full_precision() {
    let dir = scratch("precision");
    let config = write_config(
        &dir,
        "info.toml",
        "kind = \"channel-info\"\n[channel]\nmu1 = 1.0\nmu2 = 2.0\n",
    );
    let out = dir.join("out");
    run_ok(&["channel-info", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let csv = String::from_utf8(read(&out.join("channel_info.csv"))).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "mu1,mu2,nbar,classification,amplifier");
    let row = lines.next().unwrap();
    assert!(row.starts_with("1.0000000000000000e0,2.0000000000000000e0,1.0000000000000000e0"));
    assert!(row.ends_with("additive-noise,false"));
    assert!(csv.ends_with('\n'));
}

#[test]
fn channel_info_reports_identity() {
    let dir = scratch("chinfo");
    let config = write_config(
        &dir,
        "info.toml",
        "kind = \"channel-info\"\n[channel]\nmu1 = 1.0\nmu2 = 0.0\n",
    );
    let out = dir.join("out");
    run_ok(&["channel-info", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let manifest: serde_json::Value =
        serde_json::from_slice(&read(&out.join("manifest.json"))).unwrap();
    assert_eq!(manifest["summary"]["nbar"], 0.0);
    assert_eq!(manifest["summary"]["classification"], "identity");
    assert_eq!(manifest["summary"]["amplifier"], false);
}

#[test]
fn validate_accepts_good_and_names_offending_keys() {
    let dir = scratch("validate");
    let good = write_config(&dir, "good.toml", THEOREM_CONFIG);
    let output = Command::new(binary())
        .args(["validate", "--config", good.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(output.status.success());
    assert!(String::from_utf8_lossy(&output.stdout).contains("valid"));

    // negative noise parameter: the physicality constraint is named
    let bad = write_config(
        &dir,
        "bad.toml",
        &THEOREM_CONFIG.replace("eta = 0.8", "mu1 = 1.0\nmu2 = -0.5"),
    );
    let output = Command::new(binary())
        .args(["validate", "--config", bad.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let text = String::from_utf8_lossy(&output.stdout).into_owned();
    assert!(text.contains("channel.mu2"), "violation must name the key: {text}");

    // randomized experiment without a seed
    let unseeded = write_config(&dir, "unseeded.toml", &THEOREM_CONFIG.replace("seed = 7\n", ""));
    let output = Command::new(binary())
        .args(["validate", "--config", unseeded.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let text = String::from_utf8_lossy(&output.stdout).into_owned();
    assert!(text.contains("seed"), "violation must mention the seed: {text}");
}

#[test]
fn picture_equivalence_exits_cleanly() {
    let dir = scratch("equivalence");
    let config = write_config(
        &dir,
        "eq.toml",
        r#"
kind = "picture-equivalence"
seed = 11

[channel]
eta = 0.8

[energy]
value = 0.2

[equivalence]
instances = 10
n_modes = [2, 3]
dump_tables = true
"#,
    );
    let out = dir.join("out");
    run_ok(&[
        "picture-equivalence",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let csv = String::from_utf8(read(&out.join("picture_equivalence.csv"))).unwrap();
    assert_eq!(csv.lines().count(), 11); // header + 10 instances
    // joint-table export contract: message id, outcome string, probability
    let table = String::from_utf8(read(&out.join("table_0.csv"))).unwrap();
    assert!(table.starts_with("message_id,outcome,probability\n"));
    assert!(table.lines().nth(1).unwrap().split(',').nth(1).unwrap().contains('-'));
}
