use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use loansim_core::config::{Layout, Preset};

fn loansim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_loansim"))
        .args(args)
        .env_remove("LOANSIM_OUT")
        .output()
        .expect("binary runs")
}

fn run_case(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--case", "app", "--seed", "3", "--scale", "0.005", "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    loansim(&args)
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn repeated_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(run_case(a.path(), &["--threads", "1"]).status.success());
    assert!(run_case(b.path(), &["--threads", "4"]).status.success());
    let files = manifest(a.path())["files"].as_array().unwrap().clone();
    assert!(files.len() > 20);
    for f in files {
        let f = f.as_str().unwrap();
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    assert_eq!(manifest(a.path())["layout_digest"], manifest(b.path())["layout_digest"]);
}

#[test]
fn digest_follows_the_layout() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(run_case(a.path(), &["--reports", "none"]).status.success());
    assert!(loansim(&["run", "--case", "app", "--seed", "4", "--scale", "0.005", "--reports", "none", "--out", b.path().to_str().unwrap()])
        .status
        .success());
    let (ma, mb) = (manifest(a.path()), manifest(b.path()));
    assert_ne!(ma["layout_digest"], mb["layout_digest"]);
    assert_eq!(ma["layout_digest"].as_str().unwrap().len(), 64);
    assert_eq!(ma["files"].as_array().unwrap().len(), 4);
    assert!(!a.path().join("reports").exists());
}

#[test]
fn report_list_selects_files() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_case(dir.path(), &["--reports", "vintage,flow_rate"]).status.success());
    let mut names: Vec<String> = fs::read_dir(dir.path().join("reports"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names.len(), 8);
    assert!(names.contains(&"vintage.csv".to_string()) && names.contains(&"flow_rate_23.csv".to_string()));
    let bad = run_case(dir.path(), &["--reports", "roll_rates"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn bad_matrix_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut layout = Preset::BehCase.layout();
    layout.migration.set(2, 2, 0.5);
    let text = layout.to_toml_string().unwrap();
    let path = dir.path().join("custom.cfg");
    fs::write(&path, text).unwrap();
    let out = loansim(&["run", "--config", path.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("row 2 not stochastic"), "{err}");
}

#[test]
fn case_and_config_are_exclusive() {
    let out = loansim(&["run", "--case", "app", "--config", "x.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(loansim(&["run"]).status.code(), Some(1));
    assert_eq!(loansim(&["run", "--case", "nope"]).status.code(), Some(1));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("taken");
    fs::write(&file, "").unwrap();
    let out = run_case(&file, &[]);
    assert_eq!(out.status.code(), Some(2));
    let missing = loansim(&["run", "--config", dir.path().join("absent.toml").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn preset_prints_a_loadable_layout() {
    let out = loansim(&["preset", "beh"]);
    assert!(out.status.success());
    let layout = Layout::from_toml_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(layout, Preset::BehCase.layout());
}

#[test]
fn verify_accepts_a_fresh_run() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_case(dir.path(), &["--reports", "none"]).status.success());
    let out = loansim(&["verify", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("PASS"));
}

#[test]
fn verify_flags_an_n_due_jump() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_case(dir.path(), &["--reports", "none"]).status.success());
    let path = dir.path().join("transaction.csv");
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let header: Vec<&str> = lines[0].split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let (id_col, due_col) = (col("app_id"), col("n_due"));
    let mut last: HashMap<String, u8> = HashMap::new();
    let mut target = None;
    for (k, line) in lines.iter().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let due: u8 = f[due_col].parse().unwrap();
        if let Some(&prev) = last.get(f[id_col]) {
            if due >= prev && due <= 4 {
                target = Some(k);
                break;
            }
        }
        last.insert(f[id_col].to_string(), due);
    }
    let k = target.expect("some account has two rows");
    let mut f: Vec<String> = lines[k].split(',').map(String::from).collect();
    f[due_col] = (f[due_col].parse::<u8>().unwrap() + 2).to_string();
    lines[k] = f.join(",");
    fs::write(&path, lines.join("\n") + "\n").unwrap();

    let out = loansim(&["verify", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stdout).contains("n_due step"));
}

#[test]
fn verify_reports_missing_datasets() {
    let dir = tempfile::tempdir().unwrap();
    let out = loansim(&["verify", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stdout).contains("missing dataset"));
}
