use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fracfocus::io::{read_depth, read_stack};

fn fracfocus(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fracfocus"))
        .args(args)
        .env_remove("FRACFOCUS_THREADS")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = fracfocus(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small stack that resolves its texture at 48 pixels; 9 slides unless
/// `extra` sets `--slices`.
fn small_synth(out: &Path, extra: &[&str]) {
    let mut args = vec![
        "synth",
        "--size",
        "48",
        "--wavelength",
        "0.15",
        "--out",
        s(out),
    ];
    if !extra.contains(&"--slices") {
        args.extend_from_slice(&["--slices", "9"]);
    }
    args.extend_from_slice(extra);
    ok(&args);
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn kernel_csv_prints_reference_entry() {
    let out = ok(&["kernel", "--alpha", "1.0", "--zeta", "4", "--format", "csv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 9);
    assert!(rows.iter().all(|r| r.len() == 9));
    let w: f64 = rows[4][5].parse().unwrap();
    assert_eq!(format!("{w:.6}"), "0.294441");
    assert!(rows[4][4].starts_with("1.0000000"));
}

#[test]
fn kernel_zero_order_is_delta() {
    let out = ok(&["kernel", "--alpha", "0", "--zeta", "2"]);
    let text = String::from_utf8(out.stdout).unwrap();
    for (i, line) in text.lines().enumerate() {
        for (j, cell) in line.split(',').enumerate() {
            let v: f64 = cell.parse().unwrap();
            assert_eq!(v, if i == 2 && j == 2 { 1.0 } else { 0.0 });
        }
    }
    let json = ok(&[
        "kernel", "--alpha", "0.5", "--zeta", "1", "--format", "json",
    ]);
    let doc: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(doc["alpha"], 0.5);
    assert_eq!(doc["weights"][1][1], 1.0);
}

#[test]
fn kernel_rejects_out_of_range_order() {
    let out = fracfocus(&["kernel", "--alpha", "3.0", "--zeta", "4"]);
    assert!(!out.status.success());
    assert!(out.stdout.is_empty());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("[0, 2]"), "{err}");
    assert!(!fracfocus(&["kernel", "--alpha", "1", "--zeta", "0"])
        .status
        .success());
}

#[test]
fn synth_is_byte_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    small_synth(&a, &["--seed", "11"]);
    small_synth(&b, &["--seed", "11"]);
    assert_eq!(dir_bytes(&a), dir_bytes(&b));
    let names: Vec<String> = dir_bytes(&a).into_iter().map(|(n, _)| n).collect();
    assert!(names.contains(&"slide_008.pgm".to_string()));
    assert!(names.contains(&"stack.json".to_string()));
    assert!(names.contains(&"truth.csv".to_string()));
}

#[test]
fn thread_count_does_not_change_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    small_synth(&a, &["--threads", "1", "--lossless"]);
    let out = Command::new(env!("CARGO_BIN_EXE_fracfocus"))
        .args([
            "synth",
            "--size",
            "48",
            "--slices",
            "9",
            "--wavelength",
            "0.15",
            "--lossless",
        ])
        .args(["--out", s(&b), "--threads", "1"])
        .env("FRACFOCUS_THREADS", "3")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(dir_bytes(&a), dir_bytes(&b));

    let bad = Command::new(env!("CARGO_BIN_EXE_fracfocus"))
        .args(["kernel", "--alpha", "1", "--zeta", "1"])
        .env("FRACFOCUS_THREADS", "many")
        .output()
        .unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("FRACFOCUS_THREADS"));
}

#[test]
fn plane_truth_is_constant() {
    let tmp = tempfile::tempdir().unwrap();
    small_synth(tmp.path(), &["--scene", "plane", "--height", "0.5"]);
    let truth = fs::read_to_string(tmp.path().join("truth.csv")).unwrap();
    assert!(truth.lines().all(|l| l.split(',').all(|c| c == "0.5")));
    assert_eq!(truth.lines().count(), 48);
}

#[test]
fn sphere_preset_writes_example_planes() {
    let tmp = tempfile::tempdir().unwrap();
    small_synth(tmp.path(), &["--slices", "21"]);
    let dir = tmp.path();
    let (stack, meta) = read_stack(dir).unwrap();
    assert_eq!(meta.n, 21);
    assert!((stack.z(9) - 0.45).abs() < 1e-12 && (stack.z(16) - 0.8).abs() < 1e-12);
    assert_eq!(
        fs::read(dir.join("preview_z0.45.pgm")).unwrap(),
        fs::read(dir.join("slide_009.pgm")).unwrap()
    );
    assert_eq!(
        fs::read(dir.join("preview_z0.80.pgm")).unwrap(),
        fs::read(dir.join("slide_016.pgm")).unwrap()
    );
}

#[test]
fn nonlocal_order_zero_equals_local_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let stack = tmp.path().join("stack");
    small_synth(&stack, &[]);
    let local = tmp.path().join("local.csv");
    let nonlocal = tmp.path().join("nonlocal.csv");
    ok(&[
        "recover",
        "--stack",
        s(&stack),
        "--method",
        "local",
        "--q",
        "2",
        "--out",
        s(&local),
    ]);
    ok(&[
        "recover",
        "--stack",
        s(&stack),
        "--method",
        "nonlocal",
        "--q",
        "2",
        "--alpha",
        "0",
        "--zeta",
        "3",
        "--out",
        s(&nonlocal),
    ]);
    assert_eq!(fs::read(&local).unwrap(), fs::read(&nonlocal).unwrap());
    let side = read_depth(&local).unwrap().source.unwrap();
    assert_eq!(side.method, "local");
    assert_eq!(side.alpha, None);
    assert_eq!(side.q, 2);
}

#[test]
fn missing_slide_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    small_synth(tmp.path(), &[]);
    fs::remove_file(tmp.path().join("slide_004.pgm")).unwrap();
    let out = fracfocus(&[
        "recover",
        "--stack",
        s(tmp.path()),
        "--out",
        s(&tmp.path().join("d.csv")),
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("slide_004.pgm"), "{err}");
}

#[test]
fn plane_end_to_end_and_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let stack = tmp.path().join("stack");
    small_synth(
        &stack,
        &["--scene", "plane", "--height", "0.5", "--lossless"],
    );
    let depth = tmp.path().join("depth.csv");
    ok(&[
        "recover",
        "--stack",
        s(&stack),
        "--alpha",
        "1",
        "--zeta",
        "2",
        "--out",
        s(&depth),
        "--preview",
        s(&tmp.path().join("depth.pgm")),
        "--volume-out",
        s(&tmp.path().join("vol")),
        "--lossless",
    ]);
    assert!(tmp.path().join("vol/focus_008.csv").exists());
    assert!(tmp.path().join("depth.pgm").exists());

    let report = tmp.path().join("report.json");
    ok(&[
        "eval",
        "--depth",
        s(&depth),
        "--truth",
        s(&stack.join("truth.csv")),
        "--stack",
        s(&stack),
        "--report",
        s(&report),
        "--table",
        s(&tmp.path().join("table.csv")),
        "--alphas",
        "0,0.5,1,1.5,2",
        "--zetas",
        "1,2,3,4",
        "--profile",
        s(&tmp.path().join("profile.csv")),
    ]);
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert!(doc["error"]["rms_percent"].as_f64().unwrap() < 0.5);
    assert_eq!(doc["z_range"], 1.0);
    assert_eq!(doc["table"]["cells"].as_array().unwrap().len(), 4);
    assert_eq!(doc["table"]["cells"][0].as_array().unwrap().len(), 5);

    let table = fs::read_to_string(tmp.path().join("table.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines.iter().all(|l| l.split(',').count() == 7));

    let profile = fs::read_to_string(tmp.path().join("profile.csv")).unwrap();
    assert_eq!(
        profile.lines().next(),
        Some("coordinate,recovered_z,true_z")
    );
}

#[test]
fn eval_of_truth_against_itself_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    small_synth(tmp.path(), &[]);
    let truth = tmp.path().join("truth.csv");
    let report = tmp.path().join("r.json");
    ok(&[
        "eval",
        "--depth",
        s(&truth),
        "--truth",
        s(&truth),
        "--z-range",
        "1",
        "--report",
        s(&report),
    ]);
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(doc["error"]["rms_percent"], 0.0);
}

#[test]
fn eval_rejects_dimension_mismatch() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a.csv");
    let b = tmp.path().join("b.csv");
    fs::write(&a, "0.1,0.2\n0.3,0.4\n").unwrap();
    fs::write(&b, "0.1,0.2,0.3\n").unwrap();
    let out = fracfocus(&[
        "eval",
        "--depth",
        s(&a),
        "--truth",
        s(&b),
        "--z-range",
        "1",
        "--report",
        s(&tmp.path().join("r.json")),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("dimension mismatch"));
}

#[test]
fn selftest_passes() {
    let out = ok(&["selftest"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() >= 4);
    assert!(text.lines().all(|l| l.starts_with("PASS")));
}
