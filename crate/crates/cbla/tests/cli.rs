//! End-to-end smoke tests against the compiled binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cbla"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn tmpdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cbla-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

#[test]
fn parse_emits_canonical_json() {
    let out = run(&["parse", "--case", "case14"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["case"]["buses"].as_array().unwrap().len(), 14);
}

#[test]
fn bad_inputs_exit_with_code_one() {
    let out = run(&["parse", "--case", "/nonexistent/case.m"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());

    let out = run(&["fit", "--data", "/nope.csv", "--quantity", "pslack", "--loss", "ols"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn infeasible_opf_exits_with_code_three() {
    // demand far above total capacity
    let dir = tmpdir("infeasible");
    let case_path = dir.join("case.json");
    let parsed = run(&["parse", "--case", "case6ww"]);
    let mut case: serde_json::Value = serde_json::from_slice(&parsed.stdout).unwrap();
    for bus in case["case"]["buses"].as_array_mut().unwrap() {
        let p = bus["p_load"].as_f64().unwrap();
        bus["p_load"] = serde_json::json!(p * 50.0);
    }
    std::fs::write(&case_path, serde_json::to_string(&case).unwrap()).unwrap();

    let out = run(&["opf", "--case", case_path.to_str().unwrap(), "--model", "dc"]);
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn sample_fit_opf_pipeline_round_trips() {
    let dir = tmpdir("pipeline");
    let data = dir.join("data.csv");
    let out = run(&[
        "sample",
        "--case",
        "case6ww",
        "--quantities",
        "v:all,pslack",
        "-n",
        "200",
        "--seed",
        "7",
        "--range",
        "0.7:1.3",
        "--vary",
        "generators",
        "--out",
        data.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(data.exists());
    // CSV artifacts carry a metadata sidecar recording seed and config hash
    let meta: serde_json::Value =
        serde_json::from_str(&read(&dir.join("data.csv.meta.json"))).unwrap();
    assert_eq!(meta["seed"], 7);
    assert!(meta["config_hash"].as_str().unwrap().len() >= 16);

    // fit both voltage directions for every load bus, plus the slack power
    let models = dir.join("models");
    std::fs::create_dir_all(&models).unwrap();
    for bus in ["4", "5", "6"] {
        for dirn in ["over", "under"] {
            let out = run(&[
                "fit",
                "--data",
                data.to_str().unwrap(),
                "--quantity",
                &format!("v:{bus}"),
                "--loss",
                "quad",
                "--alpha",
                "100",
                "--direction",
                dirn,
                "--out",
                models.join(format!("v{bus}-{dirn}.json")).to_str().unwrap(),
            ]);
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        }
    }
    let out = run(&[
        "fit",
        "--data",
        data.to_str().unwrap(),
        "--quantity",
        "pslack",
        "--loss",
        "ols",
        "--out",
        models.join("pslack.json").to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = run(&[
        "opf",
        "--case",
        "case6ww",
        "--model",
        "cbla",
        "--models-dir",
        models.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["result"]["status"], "OPTIMAL");
    assert!(v["result"]["objective_value"].as_f64().unwrap() > 0.0);
    assert!(v["result"]["audit"]["ac_converged"].as_bool().unwrap());
}

#[test]
fn seed_precedence_flag_beats_config_beats_env() {
    let dir = tmpdir("seed");
    let cfg = dir.join("config.json");
    std::fs::write(&cfg, r#"{"seed": 111}"#).unwrap();

    let sample = |extra_flag_seed: Option<&str>, env_seed: Option<&str>, name: &str| {
        let out_path = dir.join(name);
        let mut cmd = bin();
        cmd.args([
            "sample", "--case", "case6ww", "--quantities", "pslack", "-n", "10",
            "--config", cfg.to_str().unwrap(), "--out", out_path.to_str().unwrap(),
        ]);
        if let Some(s) = extra_flag_seed {
            cmd.args(["--seed", s]);
        }
        if let Some(s) = env_seed {
            cmd.env("CBLA_SEED", s);
        }
        let out = cmd.output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        serde_json::from_str::<serde_json::Value>(&read(
            &dir.join(format!("{name}.meta.json")),
        ))
        .unwrap()["seed"]
            .clone()
    };

    assert_eq!(sample(Some("222"), Some("333"), "a.csv"), 222);
    assert_eq!(sample(None, Some("333"), "b.csv"), 111);

    // env only wins when neither flag nor config provide a seed
    let out_path = dir.join("c.csv");
    let out = bin()
        .args([
            "sample", "--case", "case6ww", "--quantities", "pslack", "-n", "10",
            "--out", out_path.to_str().unwrap(),
        ])
        .env("CBLA_SEED", "333")
        .output()
        .unwrap();
    assert!(out.status.success());
    let meta: serde_json::Value =
        serde_json::from_str(&read(&dir.join("c.csv.meta.json"))).unwrap();
    assert_eq!(meta["seed"], 333);
}

#[test]
fn pf_reports_convergence_and_non_convergence() {
    let out = run(&["pf", "--case", "case14"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["converged"].as_bool().unwrap());

    // an absurd load scaling cannot converge; exit code 2
    let out = run(&["pf", "--case", "case14", "--scale", "20"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn reproduce_outputs_are_deterministic() {
    let dir_a = tmpdir("repro-a");
    let dir_b = tmpdir("repro-b");
    for d in [&dir_a, &dir_b] {
        let out = run(&["reproduce", "fig5", "--out-dir", d.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(read(&dir_a.join("fig5.csv")), read(&dir_b.join("fig5.csv")));
    assert_eq!(
        read(&dir_a.join("fig4_scatter.csv")),
        read(&dir_b.join("fig4_scatter.csv"))
    );
}
