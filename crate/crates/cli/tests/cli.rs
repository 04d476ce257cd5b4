use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use spsim_core::choice::{simulate_choices, synthetic_profiles, write_dataset};
use spsim_core::experiment::Stage;

fn spsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spsim")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn bench_reports_throughput() {
    let o = spsim(&["bench", "--agents", "100", "--seconds", "0.5", "--seed", "3", "--json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["agents"], 100);
    assert!(report["mean_steps_per_s"].as_f64().unwrap() > 0.0);

    assert_eq!(spsim::bench::checksum_after(100, 45, 3), spsim::bench::checksum_after(100, 45, 3));
    assert_ne!(spsim::bench::checksum_after(100, 45, 3), spsim::bench::checksum_after(100, 45, 4));
}

#[test]
fn bench_rejects_zero_agents() {
    let o = spsim(&["bench", "--agents", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_scene_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = spsim(&["run-batch", "--scene", "/no/such/scene.json", "--synthetic", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("scene"));
    assert_eq!(spsim(&["validate-scene", "/no/such/scene.json"]).status.code(), Some(2));
}

#[test]
fn validate_scene_accepts_builtin_document() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/scenes/laurier_rivard.json");
    let o = spsim(&["validate-scene", path]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("ok"));
}

#[test]
fn batch_is_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let oa = spsim(&["--threads", "1", "run-batch", "--synthetic", "3", "--seed", "21", "--out", a.to_str().unwrap()]);
    assert!(oa.status.success(), "{}", String::from_utf8_lossy(&oa.stderr));
    let ob = spsim(&["--threads", "4", "run-batch", "--synthetic", "3", "--seed", "21", "--out", b.to_str().unwrap()]);
    assert!(ob.status.success());

    let files = files_under(&a);
    assert_eq!(files, files_under(&b));
    let logs = files.iter().filter(|p| p.starts_with("logs")).count();
    assert_eq!(logs, 3 * 20);
    assert_eq!(files.iter().filter(|p| p.starts_with("sessions")).count(), 9);
    for f in &files {
        assert!(fs::read(a.join(f)).unwrap() == fs::read(b.join(f)).unwrap(), "{} differs", f.display());
    }
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["trials_run"], 60);
}

fn synthetic_csv(dir: &Path, stage: Stage, n: usize, scale: f64, seed: u64) -> PathBuf {
    let beta = [0.4, -0.3, 0.5, -0.8, 0.6, 0.9];
    let scales = BTreeMap::from([(stage, scale)]);
    let data = simulate_choices(&synthetic_profiles(n, stage, seed), &beta, &scales, seed + 1);
    let path = dir.join(format!("{}.csv", stage.label()));
    write_dataset(&data, fs::File::create(&path).unwrap()).unwrap();
    path
}

#[test]
fn joint_estimate_reports_relative_scales() {
    let dir = tempfile::tempdir().unwrap();
    let paths: Vec<PathBuf> = [(Stage::Text, 0.7), (Stage::Visual, 1.3), (Stage::Vire, 1.0)]
        .into_iter()
        .enumerate()
        .map(|(i, (g, mu))| synthetic_csv(dir.path(), g, 3000, mu, 100 + i as u64))
        .collect();
    let report_path = dir.path().join("report.txt");
    let mut args = vec!["estimate", "--joint", "--reference", "vire", "--out", report_path.to_str().unwrap(), "--data"];
    args.extend(paths.iter().map(|p| p.to_str().unwrap()));
    let o = spsim(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert_eq!(text, fs::read_to_string(&report_path).unwrap());
    for row in ["μ text", "μ visual", "μ vire", "1 (fixed)", "ρ²", "Obs."] {
        assert!(text.contains(row), "missing {row}:\n{text}");
    }
}

#[test]
fn single_dataset_report_has_no_scales() {
    let dir = tempfile::tempdir().unwrap();
    let path = synthetic_csv(dir.path(), Stage::Vire, 500, 1.0, 7);
    let o = spsim(&["estimate", "--data", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("β HMD"));
    assert!(!text.contains("μ "));
}

#[test]
fn constant_choice_column_fails_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let path = synthetic_csv(dir.path(), Stage::Text, 50, 1.0, 9);
    let text = fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    let mut flat = format!("{}\n", lines.next().unwrap());
    for line in lines {
        let mut cells: Vec<&str> = line.split(',').collect();
        let n = cells.len();
        cells[n - 2] = "1";
        flat.push_str(&cells.join(","));
        flat.push('\n');
    }
    fs::write(&path, flat).unwrap();
    let o = spsim(&["estimate", "--data", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("separation"));
}
