use std::path::Path;
use std::process::Command;

use mpcproto::config::RunSpec;
use mpcproto::report::trace_from_csv;
use mpcproto::sim::{compute_metrics, Scheme};

const BIN: &str = env!("CARGO_BIN_EXE_mpcproto");

fn spec_path() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/cstr_step.cfg"))
}

fn run(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(BIN).args(args).output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

#[test]
fn compare_writes_traces_whose_metrics_match_the_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, _, stderr) = run(&["compare", spec_path().to_str().unwrap(), "--out", out, "--plot"]);
    assert_eq!(code, 0, "{stderr}");
    let spec = RunSpec::parse_file(spec_path()).unwrap();
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(dir.path().join("plot.gp").exists());
    for scheme in Scheme::ALL {
        let text = std::fs::read_to_string(dir.path().join(format!("{scheme}.csv"))).unwrap();
        let trace = trace_from_csv(&text, scheme, spec.mpc.cfg.ts).unwrap();
        assert_eq!(trace.rows.len(), 300);
        let m = compute_metrics(&trace, &spec.scenario.schedule, &spec.mpc.cfg.y_min, &spec.mpc.cfg.y_max);
        let row = summary.lines().find(|l| l.starts_with(&format!("{scheme},0,"))).unwrap();
        let ise: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
        assert!((ise - m.channels[0].ise).abs() <= 1e-9, "{scheme}: {ise} vs {}", m.channels[0].ise);
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let (code, _, stderr) = run(&[
            "run",
            spec_path().to_str().unwrap(),
            "--out",
            d.path().to_str().unwrap(),
            "--seed",
            "3",
            "--relin-period",
            "2",
        ]);
        assert_eq!(code, 0, "{stderr}");
    }
    for f in ["sl-mpc.csv", "summary.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap());
    }
}

#[test]
fn missing_output_directory_fails_without_writing() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    let (code, _, stderr) = run(&["compare", spec_path().to_str().unwrap(), "--out", missing.to_str().unwrap()]);
    assert_eq!(code, 3);
    assert!(stderr.contains("does not exist"));
    assert!(!missing.exists());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn parse_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "[plant]\nname = cstr\n[mpc]\nw_y = 1, 2\n").unwrap();
    let (code, _, stderr) = run(&["run", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(stderr.contains("w_y") && stderr.contains("line 4"), "{stderr}");
    let (code, _, _) = run(&["run"]);
    assert_eq!(code, 1);
}

#[test]
fn aborted_run_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("pid.cfg");
    // multi-PID with no loops configured cannot drive the plant.
    std::fs::write(&cfg, "[plant]\nname = tank\n[scenario]\nscheme = multi-pid\n").unwrap();
    let (code, _, stderr) = run(&["run", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 2, "{stderr}");
    assert!(stderr.contains("aborted"));
}

#[test]
fn show_prints_a_complete_spec() {
    let (code, stdout, _) = run(&["show", spec_path().to_str().unwrap()]);
    assert_eq!(code, 0);
    let spec = RunSpec::parse_str(&stdout).unwrap();
    assert_eq!(spec, RunSpec::parse_file(spec_path()).unwrap());
    assert!(stdout.contains("fd_step = "));
}

#[test]
fn equilibrium_hold_has_zero_ise() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("hold.cfg");
    std::fs::write(&cfg, "[plant]\nname = tank\n[scenario]\nscheme = sl-mpc\nduration = 0.5\n").unwrap();
    let out = dir.path().join("out");
    std::fs::create_dir(&out).unwrap();
    let (code, _, stderr) = run(&["compare", cfg.to_str().unwrap(), "--schemes", "sl-mpc", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{stderr}");
    let mut files: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    files.sort();
    assert_eq!(files, ["sl-mpc.csv", "summary.csv"]);
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    let ise: f64 = summary.lines().nth(1).unwrap().split(',').nth(2).unwrap().parse().unwrap();
    assert_eq!(ise, 0.0);
}
