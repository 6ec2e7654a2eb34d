//! Exit-code and output contracts of the command-line interface.

use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_sks")
}

#[test]
fn missing_config_exits_one_and_names_the_path() {
    let out = Command::new(bin())
        .args(["convergence", "--config", "/no/such/config.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("/no/such/config.json"),
        "stderr must name the path: {stderr}"
    );
}

#[test]
fn unknown_flag_exits_one_with_usage() {
    let out = Command::new(bin())
        .args(["convergence", "--definitely-not-a-flag"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.to_lowercase().contains("usage"), "got: {stderr}");
}

#[test]
fn bad_config_json_exits_one() {
    let tmp = std::env::temp_dir().join(format!("sks-cli-{}", std::process::id()));
    std::fs::create_dir_all(&tmp).unwrap();
    let cfg = tmp.join("bad.json");
    std::fs::write(&cfg, "{ not json").unwrap();
    let out = Command::new(bin())
        .args(["convergence", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let _ = std::fs::remove_dir_all(&tmp);
}

#[test]
fn selftest_passes_and_prints_suites() {
    let out = Command::new(bin()).arg("selftest").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    for suite in ["assembly-oracle", "mass-conservation", "heat-reduction"] {
        assert!(stdout.contains(suite), "missing {suite} in: {stdout}");
    }
    assert!(stdout.matches("PASS").count() >= 3);
}

#[test]
fn seed_env_fallback_is_used() {
    let tmp = std::env::temp_dir().join(format!("sks-env-{}", std::process::id()));
    std::fs::create_dir_all(&tmp).unwrap();
    let cfg = tmp.join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{
            "params": {"nu": 1.0, "chi": 1.0, "delta": 1.0},
            "levels": [{"n": 2, "k": 0.25}],
            "samples": 2,
            "base_seed": 0,
            "initial_data": "sine_product"
        }"#,
    )
    .unwrap();
    let run = |dir: &str, env_seed: Option<&str>| {
        let mut cmd = Command::new(bin());
        cmd.args([
            "convergence",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            tmp.join(dir).to_str().unwrap(),
            "-q",
        ]);
        if let Some(s) = env_seed {
            cmd.env("SKS_SEED", s);
        }
        let out = cmd.output().unwrap();
        assert_eq!(out.status.code(), Some(0));
        std::fs::read(tmp.join(dir).join("convergence.csv")).unwrap()
    };
    let a = run("a", Some("33"));
    let b = run("b", Some("33"));
    let c = run("c", Some("44"));
    assert_eq!(a, b);
    assert_ne!(a, c);
    let _ = std::fs::remove_dir_all(&tmp);
}
