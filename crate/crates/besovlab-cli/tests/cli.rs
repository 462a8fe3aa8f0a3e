//! End-to-end checks of the binary: exit codes, artifact determinism, and
//! the file-format round trip.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn besovlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_besovlab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

#[test]
fn malformed_config_exits_2_and_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    write(&cfg, "schema = 1\nfield.gallery = step1d\nfield.cells\n");
    let out = besovlab(&["besov", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("bad.cfg:3"), "diagnostic names the line: {msg}");
    assert!(msg.contains("key = value"), "diagnostic explains the grammar: {msg}");
}

#[test]
fn unknown_key_exits_2_with_a_hint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("typo.cfg");
    write(&cfg, "field.galery = step1d\n");
    let out = besovlab(&["besov", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("typo.cfg:1"), "{msg}");
    assert!(msg.contains("field.gallery"), "hint suggests the fix: {msg}");
}

#[test]
fn schedule_guard_exits_3_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("guard.cfg");
    // Tail 0.02 * 0.7^4 = 0.0048 sits far below the pair floor 8/256.
    write(
        &cfg,
        "field.gallery = step1d\nfield.cells = 256\n\
         schedule.top = 0.02\nschedule.ratio = 0.7\nschedule.count = 5\n",
    );
    let out_dir = dir.path().join("artifacts");
    let out = besovlab(&[
        "besov",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("pair-radius floor"), "{msg}");
    assert!(msg.contains("schedule.top"), "remediation hint present: {msg}");
    assert!(!out_dir.exists(), "a rejected run must not create artifacts");
}

#[test]
fn verify_step_passes_with_exit_0() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("verify.cfg");
    write(
        &cfg,
        "schema = 1\nfield.gallery = step1d\nfield.cells = 2048\nq = 2\n\
         schedule.top = 0.2\nschedule.ratio = 0.7\nschedule.count = 9\n",
    );
    let out_dir = dir.path().join("artifacts");
    let out = besovlab(&[
        "verify",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    let verdict = &report["results"]["verdict"];
    assert_eq!(verdict["pass"], serde_json::Value::Bool(true));
    let ratio = verdict["ratio"].as_f64().unwrap();
    assert!((0.95..=1.05).contains(&ratio), "ratio {ratio}");
    assert_eq!(verdict["gamma_check"], serde_json::Value::Bool(true));
}

#[test]
fn failing_verdict_exits_4_but_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("fail.cfg");
    // A short, coarse schedule stops while the functional still carries the
    // O(eps) boundary deficit, so the lower constant undershoots the jump term.
    write(
        &cfg,
        "field.gallery = stepNd\nfield.dim = 2\nfield.cells = 64,64\nq = 2\n\
         schedule.top = 0.4\nschedule.ratio = 0.8\nschedule.count = 4\n",
    );
    let out_dir = dir.path().join("artifacts");
    let out = besovlab(&[
        "verify",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("verdict failure"), "{msg}");
    // The report is still written so the failure can be diagnosed.
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["results"]["verdict"]["pass"], serde_json::Value::Bool(false));
    let ratio = report["results"]["verdict"]["ratio"].as_f64().unwrap();
    assert!(ratio > 1.05, "ratio {ratio}");
}

#[test]
fn reports_are_bitwise_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("besov.cfg");
    write(
        &cfg,
        "field.gallery = step1d\nfield.cells = 1024\nq = 2\n\
         schedule.top = 0.2\nschedule.ratio = 0.7\nschedule.count = 7\n",
    );
    let mut reports = Vec::new();
    let mut csvs = Vec::new();
    for run in 0..2 {
        let out_dir = dir.path().join(format!("run{run}"));
        let out = besovlab(&[
            "besov",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        reports.push(fs::read(out_dir.join("report.json")).unwrap());
        csvs.push(fs::read(out_dir.join("besov_entries.csv")).unwrap());
        // Wall-clock timings live in the sidecar, away from the report.
        assert!(out_dir.join("timings.json").exists());
    }
    assert_eq!(reports[0], reports[1], "report.json must be bitwise stable");
    assert_eq!(csvs[0], csvs[1], "plot data must be bitwise stable");
}

#[test]
fn export_import_round_trip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("field_a.bin");
    let second = dir.path().join("field_b.bin");
    let cfg_a = dir.path().join("export_a.cfg");
    write(
        &cfg_a,
        &format!(
            "field.gallery = loglog\nfield.dim = 1\nfield.cells = 512\n\
             export.path = {}\nexport.format = binary\n",
            first.display()
        ),
    );
    let out = besovlab(&["export", "--config", cfg_a.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    // Re-export the imported file: the payload must survive unchanged.
    let cfg_b = dir.path().join("export_b.cfg");
    write(
        &cfg_b,
        &format!(
            "field.import = {}\nexport.path = {}\nexport.format = binary\n",
            first.display(),
            second.display()
        ),
    );
    let out = besovlab(&["export", "--config", cfg_b.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read(&first).unwrap(), fs::read(&second).unwrap());

    let out = besovlab(&["import", first.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("dim 1"), "{text}");
    assert!(text.contains("[512]"), "{text}");
}

#[test]
fn constants_match_the_closed_forms() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("artifacts");
    let out = besovlab(&["constants", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    let rows = report["results"].as_array().unwrap();
    assert_eq!(rows.len(), 5);
    // C_1 = C_2 = 2, C_3 = (2/3) * pi; quadrature agrees to a relative 1e-3.
    for (n, expect) in [(0usize, 2.0), (1, 2.0), (2, 2.0 * std::f64::consts::PI / 3.0)] {
        let closed = rows[n]["closed_form"].as_f64().unwrap();
        assert!((closed - expect).abs() < 1e-12, "N={} closed {closed}", n + 1);
        for method in ["sphere", "ball"] {
            let v = rows[n][method].as_f64().unwrap();
            assert!((v - expect).abs() / expect < 1e-3, "N={} {method} {v}", n + 1);
        }
        let gamma = rows[n]["gamma_weak"].as_f64().unwrap();
        assert!(gamma > 0.0 && gamma < closed, "weak constant sits below C_N");
    }
    assert!(out_dir.join("constants.csv").exists());
}

#[test]
fn gallery_list_is_stable_and_names_the_edge_cases() {
    let first = besovlab(&["gallery-list"]);
    assert_eq!(first.status.code(), Some(0));
    let text = String::from_utf8_lossy(&first.stdout).to_string();
    assert!(
        text.contains("J = empty, J' contains 0"),
        "h_combo's expected classification is listed: {text}"
    );
    assert!(
        text.contains("box inside the ball of radius 1/2"),
        "loglog validity domain is listed: {text}"
    );
    let second = besovlab(&["gallery-list"]);
    assert_eq!(text, String::from_utf8_lossy(&second.stdout), "ordering is stable");
}
