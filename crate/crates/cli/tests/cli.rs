//! Black-box tests of the `entswap` binary: exit codes, CSV shapes,
//! config overrides, and thread-count determinism.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_entswap"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// A small, fast configuration: low brightness, lossy detectors, tight box.
fn small_cfg(dir: &tempfile::TempDir) -> PathBuf {
    let path = dir.path().join("small.cfg");
    std::fs::write(
        &path,
        "chi = 0.1\n\
         alpha = 45\n\
         bell.eta.1 = 0.2\nbell.eta.2 = 0.2\nbell.eta.3 = 0.3\nbell.eta.4 = 0.3\n\
         bell.pdc.1 = 1e-5\nbell.pdc.2 = 1e-5\nbell.pdc.3 = 2e-5\nbell.pdc.4 = 2e-5\n\
         analysis.eta.1 = 0.25\nanalysis.eta.2 = 0.25\n\
         analysis.eta.3 = 0.25\nanalysis.eta.4 = 0.25\n\
         analysis.pdc.1 = 1e-5\nanalysis.pdc.2 = 1e-5\n\
         analysis.pdc.3 = 1e-5\nanalysis.pdc.4 = 1e-5\n\
         trunc.n_max = 5\n",
    )
    .unwrap();
    path
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(code(&run(&["scan", "--set", "chi=0.1", "--delta-grid", "0:90"])), 1);
    assert_eq!(code(&run(&["scan", "--set", "chi=0.1", "--delta-grid", "0:90:0"])), 1);
    assert_eq!(code(&run(&["scan", "--set", "chi"])), 1);
    assert_eq!(
        code(&run(&["posterior", "--set", "chi=0.1", "--readout", "click,2,click,0"])),
        1
    );
    assert_eq!(code(&run(&["no-such-command"])), 1);
    // help is not a usage error
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn config_errors_exit_2() {
    assert_eq!(code(&run(&["scan", "--config", "/nonexistent/path.cfg"])), 2);
    // chi is required
    assert_eq!(code(&run(&["scan"])), 2);
    let out = run(&["scan", "--set", "chi=0.1", "--set", "frobnicate=1"]);
    assert_eq!(code(&out), 2);
    assert_eq!(code(&run(&["scan", "--set", "chi=0.1", "--set", "bell.eta.1=1.5"])), 2);
}

#[test]
fn scan_writes_curve_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_cfg(&dir);
    let out = run(&["scan", "--config", cfg.to_str().unwrap(), "--delta-grid", "0:180:5"]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("# chi = 0.1"));
    assert!(text.contains("# visibility = "));
    let mut lines = text.lines().skip_while(|l| l.starts_with('#'));
    assert_eq!(lines.next(), Some("delta_deg,anticorr,corr"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 5);
    for row in rows {
        assert_eq!(row.split(',').count(), 3);
        for field in row.split(',') {
            field.parse::<f64>().expect("numeric CSV field");
        }
    }
}

#[test]
fn scan_out_file_and_summary_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_cfg(&dir);
    let csv = dir.path().join("scan.csv");
    let out = run(&[
        "scan",
        "--config",
        cfg.to_str().unwrap(),
        "--delta-grid",
        "0:180:3",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).starts_with("V = "));
    let written = std::fs::read_to_string(&csv).unwrap();
    assert!(written.contains("delta_deg,anticorr,corr"));
}

#[test]
fn set_overrides_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_cfg(&dir);
    let out = run(&[
        "sweep-chi",
        "--config",
        cfg.to_str().unwrap(),
        "--set",
        "chi=0.05",
        "--chi-grid",
        "0.05:0.1:2",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("# chi = 0.05"), "override must appear in the header");
    let mut lines = text.lines().skip_while(|l| l.starts_with('#'));
    assert_eq!(lines.next(), Some("chi,visibility"));
    assert_eq!(lines.count(), 2);
}

#[test]
fn scan_is_thread_count_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_cfg(&dir);
    let args = ["scan", "--config", cfg.to_str().unwrap(), "--delta-grid", "0:180:7"];
    let one = run(&[&args[..], &["--threads", "1"]].concat());
    let four = run(&[&args[..], &["--threads", "4"]].concat());
    assert_eq!(code(&one), 0);
    assert_eq!(code(&four), 0);
    // drop the header line that records the thread setting itself
    let strip = |out: &Output| -> String {
        stdout(out)
            .lines()
            .filter(|l| !l.starts_with("# threads"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(&one), strip(&four), "output must be bitwise thread-count independent");
}

#[test]
fn posterior_csv_for_count_and_threshold_readouts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_cfg(&dir);
    for readout in ["click,no_click,click,no_click", "1,0,1,0"] {
        let out = run(&[
            "posterior",
            "--config",
            cfg.to_str().unwrap(),
            "--readout",
            readout,
        ]);
        assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
        let text = stdout(&out);
        assert!(text.contains("# tail_bound = "));
        let mut lines = text.lines().skip_while(|l| l.starts_with('#'));
        assert_eq!(lines.next(), Some("i,j,k,l,weight"));
        let mut total = 0.0f64;
        for row in lines {
            let fields: Vec<&str> = row.split(',').collect();
            assert_eq!(fields.len(), 5);
            total += fields[4].parse::<f64>().unwrap();
        }
        assert!(total > 0.9 && total <= 1.0 + 1e-9, "weights sum to {total}");
    }
}

#[test]
fn state_postselection_reports_success_prob() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_cfg(&dir);
    let out = run(&[
        "state",
        "--config",
        cfg.to_str().unwrap(),
        "--postselect",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("# postselected = true"));
    assert!(text.contains("# success_prob = "));
}

#[test]
fn verify_passes_and_uses_exit_4_semantics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_cfg(&dir);
    let out = run(&["verify", "--config", cfg.to_str().unwrap()]);
    let text = stdout(&out);
    assert_eq!(
        code(&out),
        0,
        "verification failed:\n{text}\nstderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(text.lines().count() >= 4, "expected one line per check:\n{text}");
    for line in text.lines() {
        assert!(line.starts_with("PASS"), "check did not pass: {line}");
    }
}
