use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

const SMALL: &str = r#"
seed = 11

[selftest]
n_functionals = 4
dim_h = 3
dim_v = 2
max_order = 3
n_mc = 3000

[breuer_major]
horizons = [8.0, 16.0, 32.0, 64.0]
k_nodes = 6
n_mc = 200
dictionary_size = 16
majorization_horizon = 2.0
"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_chaoslab"));
    c.env_remove("CHAOSLAB_THREADS");
    c
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn missing_seed_exits_2_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "threads = 2\n");
    let out = tmp.path().join("out");
    let status = bin()
        .args(["selftest", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn unknown_key_and_bad_env_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(tmp.path(), "seed = 1\n[spde]\nradius = [2.0]\n");
    let status = bin().args(["spde", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(2));

    let cfg = write_config(tmp.path(), "seed = 1\n");
    let status = bin()
        .args(["spde", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .env("CHAOSLAB_THREADS", "lots")
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    assert!(!out.exists());

    let status = bin().args(["nonsense", "--config"]).arg(&cfg).status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn selftest_passes_and_writes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("out");
    let status = bin()
        .args(["selftest", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .env("CHAOSLAB_THREADS", "3")
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["schema"], 1);
    assert_eq!(summary["passed"], true);
    let checks = summary["experiments"]["selftest"]["checks"].as_array().unwrap();
    for name in ["generator equals", "semigroup", "orthogonal", "variance below", "Mehler"] {
        let hit: Vec<_> = checks.iter().filter(|c| c["name"].as_str().unwrap().contains(name)).collect();
        assert!(!hit.is_empty(), "{name}");
        assert!(hit.iter().all(|c| c["pass"] == true), "{name}");
    }
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["threads"], 3);
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert!(!out.join("failures.json").exists());

    let csv = std::fs::read_to_string(out.join("selftest.csv")).unwrap();
    assert!(!csv.contains('\r'));
    assert!(csv.starts_with("check,value,limit,margin,verdict\n"));
}

#[test]
fn breuer_major_rows_and_verdicts_match_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("out");
    let status = bin()
        .args(["breuer-major", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(["--threads", "2", "--seed", "5"])
        .env("CHAOSLAB_THREADS", "7")
        .status()
        .unwrap();
    let summary = read_json(&out.join("summary.json"));
    assert_eq!(status.code(), Some(if summary["passed"] == true { 0 } else { 1 }));
    assert_eq!(read_json(&out.join("manifest.json"))["threads"], 2);
    assert_eq!(summary["seed"], 5);

    let csv = std::fs::read_to_string(out.join("breuer_major.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "T,bound,d2_lower,d2_stderr,hs_CT_Cinf,sigma2,verdict");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4);

    let bm = &summary["experiments"]["breuer_major"];
    let slope = bm["report"]["bound_slope"].as_f64().unwrap();
    assert!((slope + 0.5).abs() < 1e-10);
    let json_rows = bm["report"]["rows"].as_array().unwrap();
    let checks = bm["checks"].as_array().unwrap();
    for (row, jr) in rows.iter().zip(json_rows) {
        let t: f64 = row[0].parse().unwrap();
        let d2: f64 = row[2].parse().unwrap();
        assert_eq!(t, jr["horizon"].as_f64().unwrap());
        assert_eq!(d2, jr["d2_lower"].as_f64().unwrap());
        let check = checks
            .iter()
            .find(|c| c["name"] == format!("d2 lower estimate below bound at T = {t}"))
            .unwrap();
        if row[6] == "pass" {
            assert_eq!(check["pass"], true);
        }
        if check["pass"] == false {
            assert_eq!(row[6], "fail");
        }
    }
    assert!(out.join("breuer_major.svg").exists());
}
