use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use retarda::pure_delay_series;
use retarda_cli::run_cli;
use tempfile::TempDir;

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

fn no_env(_: &str) -> Option<String> {
    None
}

fn run(args: &[&str]) -> (i32, String, String) {
    run_env(args, &no_env)
}

fn run_env(args: &[&str], env: &dyn Fn(&str) -> Option<String>) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv = std::iter::once("retarda").chain(args.iter().copied());
    let code = run_cli(argv, env, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

const ZERO_KERNEL: &str = r#"{
    "task": "solve",
    "grid": {"r": 1.0, "h": 0.125, "T": 2.0},
    "kernel": {"dim": 2},
    "history": {"type": "constant", "value": [1.5, -0.25]}
}"#;

#[test]
fn zero_kernel_keeps_the_constant() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "zero.json", ZERO_KERNEL);
    let out = dir.path().join("out");
    let (code, stdout, _) = run(&["run", &cfg, "--assert", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{stdout}");
    let (header, rows) = read_csv(&out.join("trace.csv"));
    assert_eq!(header, ["t", "x_1", "x_2"]);
    assert_eq!(rows.len(), 8 + 16 + 1);
    for row in &rows {
        assert_eq!(&row[1..], [1.5, -0.25]);
    }
}

#[test]
fn fundamental_csv_matches_the_delay_series() {
    let dir = TempDir::new().unwrap();
    let cfg = scenarios().join("pure_delay_fundamental.json");
    let (code, _, err) = run(&["run", cfg.to_str().unwrap(), "--assert", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let (header, rows) = read_csv(&dir.path().join("fundamental.csv"));
    assert_eq!(header, ["t", "X_11"]);
    assert_eq!(rows.len(), 3 * 1024 + 1);
    for row in rows {
        assert!((row[1] - pure_delay_series(-1.0, 1.0, row[0])).abs() <= 1e-4);
    }
}

#[test]
fn off_grid_delay_is_a_validation_error() {
    let dir = TempDir::new().unwrap();
    let text = ZERO_KERNEL.replace(r#""dim": 2}"#, r#""dim": 2, "jumps": [{"theta": -0.3, "matrix": [[1, 0], [0, 1]]}]}"#);
    let cfg = write_config(dir.path(), "bad.json", &text);
    let (code, _, err) = run(&["run", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("jumps[0].theta"), "{err}");
}

#[test]
fn malformed_json_names_the_key() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "bad.json", &ZERO_KERNEL.replace("0.125", "\"fine\""));
    let (code, _, err) = run(&["run", &cfg]);
    assert_eq!(code, 2);
    assert!(err.contains("grid.h"), "{err}");
    let (code, _, err) = run(&["run", "/nonexistent/config.json"]);
    assert_eq!(code, 2, "{err}");
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    for name in ["two_delay_solve", "voc_check", "simulate_cubic", "stability", "convolve_check"] {
        let cfg = scenarios().join(format!("{name}.json"));
        let mut files = Vec::new();
        for k in 0..2 {
            let out = dir.path().join(format!("{name}_{k}"));
            let (code, _, err) = run(&["run", cfg.to_str().unwrap(), "--assert", "--out", out.to_str().unwrap()]);
            assert_eq!(code, 0, "{name}: {err}");
            let mut entries: Vec<_> = std::fs::read_dir(&out).unwrap().map(|e| e.unwrap().path()).collect();
            entries.sort();
            files.push(entries.iter().map(|p| std::fs::read(p).unwrap()).collect::<Vec<_>>());
        }
        assert!(!files[0].is_empty());
        assert_eq!(files[0], files[1], "{name}");
        assert!(files[0].iter().all(|f| !f.contains(&b'\r')));
    }
}

#[test]
fn trace_round_trips_as_history_and_forcing() {
    let dir = TempDir::new().unwrap();
    let first = dir.path().join("first");
    let text = ZERO_KERNEL
        .replace(r#""dim": 2}"#, r#""dim": 2, "jumps": [{"theta": -0.5, "matrix": [[-1, 0.5], [0, -2]]}]}"#)
        .replace(
            r#"{"type": "constant", "value": [1.5, -0.25]}"#,
            r#"{"type": "instantaneous", "value": [0.1, 0.7]}"#,
        );
    let cfg = write_config(dir.path(), "a.json", &text);
    assert_eq!(run(&["run", &cfg, "--out", first.to_str().unwrap()]).0, 0);
    let trace = first.join("trace.csv");
    let original = std::fs::read_to_string(&trace).unwrap();

    // history rows (with the left limit at 0) come back unchanged
    let again = text.replace(
        r#"{"type": "instantaneous", "value": [0.1, 0.7]}"#,
        &format!(r#"{{"type": "csv", "path": {:?}}}"#, trace.to_str().unwrap()),
    );
    let cfg = write_config(dir.path(), "b.json", &again);
    let second = dir.path().join("second");
    assert_eq!(run(&["run", &cfg, "--out", second.to_str().unwrap()]).0, 0);
    let replay = std::fs::read_to_string(second.join("trace.csv")).unwrap();
    assert_eq!(original, replay);

    // the horizon rows as G: with a zero kernel and zero history, x = G
    let (_, rows) = read_csv(&trace);
    let x0: Vec<f64> = rows.iter().rev().find(|r| r[0] == 0.0).unwrap()[1..].to_vec();
    let shifted: Vec<String> = std::iter::once("t,x_1,x_2".to_string())
        .chain(rows.iter().filter(|r| r[0] >= 0.0).skip(1).map(|r| {
            format!("{:.16e},{:.16e},{:.16e}", r[0], r[1] - x0[0], r[2] - x0[1])
        }))
        .collect();
    let g_path = dir.path().join("g.csv");
    std::fs::write(&g_path, shifted.join("\n") + "\n").unwrap();
    let forced = ZERO_KERNEL
        .replace(
            r#"{"type": "constant", "value": [1.5, -0.25]}"#,
            &format!(
                r#"{{"type": "constant", "value": [0, 0]}}, "forcing": {{"type": "csv", "kind": "G", "path": {:?}}}"#,
                g_path.to_str().unwrap()
            ),
        );
    let cfg = write_config(dir.path(), "c.json", &forced);
    let third = dir.path().join("third");
    let (code, _, err) = run(&["run", &cfg, "--out", third.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let (_, out_rows) = read_csv(&third.join("trace.csv"));
    let (_, g_rows) = read_csv(&g_path);
    let horizon: Vec<_> = out_rows.iter().filter(|r| r[0] >= 0.0).collect();
    assert_eq!(horizon.len(), g_rows.len());
    // x = G up to the summation of increments
    for (x, g) in horizon.iter().zip(&g_rows) {
        assert_eq!(x[0], g[0]);
        assert!((x[1] - g[1]).abs() < 1e-14 && (x[2] - g[2]).abs() < 1e-14);
    }
}

#[test]
fn stability_json_has_the_fit_fields() {
    let dir = TempDir::new().unwrap();
    let cfg = scenarios().join("stability.json");
    assert_eq!(run(&["run", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]).0, 0);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("fit.json")).unwrap()).unwrap();
    assert!(v["M"].as_f64().unwrap() >= 1.0);
    assert!((v["alpha"].as_f64().unwrap() - 1.588).abs() < 0.03);
    assert!(v["residual"].is_f64());
    assert_eq!(v["window"].as_array().unwrap().len(), 2);
}

#[test]
fn failed_assertion_exits_with_4() {
    let dir = TempDir::new().unwrap();
    let text = r#"{
        "task": "stability",
        "grid": {"r": 1.0, "h": 0.0625, "T": 6.0},
        "kernel": {"dim": 1, "jumps": [{"theta": 0.0, "matrix": [[0.5]]}]}
    }"#;
    let cfg = write_config(dir.path(), "unstable.json", text);
    let (code, out, _) = run(&["run", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(out.contains("note:"));
    let (code, _, err) = run(&["run", &cfg, "--assert", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 4, "{err}");
}

#[test]
fn simulate_trace_has_norm_and_bound() {
    let dir = TempDir::new().unwrap();
    let cfg = scenarios().join("simulate_cubic.json");
    assert_eq!(run(&["run", cfg.to_str().unwrap(), "--assert", "--out", dir.path().to_str().unwrap()]).0, 0);
    let (header, rows) = read_csv(&dir.path().join("trace.csv"));
    assert_eq!(header, ["t", "x_1", "norm", "bound"]);
    for row in rows {
        assert!(row[2] <= row[3]);
    }
}

#[test]
fn batch_runs_each_scenario_into_its_own_directory() {
    let dir = TempDir::new().unwrap();
    let batch = format!(
        "[{}, {}]",
        ZERO_KERNEL.replace("\"task\"", "\"name\": \"a\", \"task\""),
        ZERO_KERNEL.replace("\"task\"", "\"name\": \"b\", \"task\"").replace("1.5", "3.0")
    );
    let cfg = write_config(dir.path(), "batch.json", &batch);
    let (code, out, _) = run(&["run", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 0, "{out}");
    assert!(dir.path().join("a/trace.csv").exists());
    assert!(dir.path().join("b/trace.csv").exists());
}

#[test]
fn quick_selftest_is_fast_and_deterministic() {
    let env = |k: &str| (k == "RETARDA_SEED").then(|| "7".to_string());
    let start = Instant::now();
    let (code, first, err) = run_env(&["selftest", "--quick"], &env);
    assert!(start.elapsed().as_secs_f64() < 10.0);
    assert_eq!(code, 0, "{first}{err}");
    assert!(first.starts_with("seed 7\n"));
    let (_, second, _) = run_env(&["selftest", "--quick"], &env);
    assert_eq!(first, second);
}

#[test]
fn corrupted_tolerance_fails_visibly() {
    let env = |k: &str| (k == "RETARDA_TOL_SCALE").then(|| "1e-6".to_string());
    let (code, out, _) = run_env(&["selftest", "--quick"], &env);
    assert_eq!(code, 4);
    assert!(out.contains("FAIL"));
    let env = |k: &str| (k == "RETARDA_TOL_SCALE").then(|| "lots".to_string());
    let (code, _, err) = run_env(&["selftest", "--quick"], &env);
    assert_eq!(code, 2);
    assert!(err.contains("RETARDA_TOL_SCALE"));
}

#[test]
fn binary_reports_exit_codes() {
    let exe = env!("CARGO_BIN_EXE_retarda");
    let status = Command::new(exe).args(["run", "/nonexistent.json"]).status().unwrap();
    assert_eq!(status.code(), Some(2));
    let out = Command::new(exe).arg("--help").output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("selftest"));
}
