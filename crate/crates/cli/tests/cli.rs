use std::process::{Command, Output};

fn sccsp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sccsp")).args(args).output().unwrap()
}

#[test]
fn usage_errors_exit_with_2() {
    assert_eq!(sccsp(&["--bogus"]).status.code(), Some(2));
    assert_eq!(sccsp(&["de-xorsat", "--k", "three"]).status.code(), Some(2));
}

#[test]
fn invalid_parameters_exit_with_1() {
    let out = sccsp(&["vdw-ksat", "--k", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn dry_run_prints_config_and_writes_nothing() {
    let dir = std::env::temp_dir().join(format!("sccsp-dry-{}", std::process::id()));
    let path = dir.join("out.csv");
    let out = sccsp(&["--dry-run", "--seed", "9", "--out", path.to_str().unwrap(), "de-qcore", "--q", "4"]);
    assert!(out.status.success());
    let cfg: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(cfg["command"], "de-qcore");
    assert_eq!(cfg["seed"], 9);
    assert_eq!(cfg["args"]["q"], 4);
    assert!(!path.exists());
}

#[test]
fn csv_and_json_carry_the_same_threshold() {
    let csv = sccsp(&["de-xorsat", "--k", "3", "--individual"]);
    assert!(csv.status.success());
    let text = String::from_utf8(csv.stdout).unwrap();
    let row: Vec<&str> = text.lines().find(|l| l.starts_with("leaf-removal")).unwrap().split(',').collect();
    let from_csv: f64 = row[1].parse().unwrap();
    assert!((from_csv - 0.818).abs() < 1e-3);

    let json = sccsp(&["--format", "json", "de-xorsat", "--k", "3", "--individual"]);
    let v: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(v["rows"][0]["estimate"].as_f64(), Some(from_csv));
    assert_eq!(v["summary"]["threshold"].as_f64(), Some(from_csv));
}

#[test]
fn out_file_receives_the_artifact() {
    let path = std::env::temp_dir().join(format!("sccsp-out-{}.csv", std::process::id()));
    let out = sccsp(&["--out", path.to_str().unwrap(), "de-pureliteral", "--k", "3", "--individual"]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::remove_file(&path).unwrap();
    assert!(text.starts_with("# command: de-pureliteral"));
    assert!(text.contains("kind,estimate"));
}
