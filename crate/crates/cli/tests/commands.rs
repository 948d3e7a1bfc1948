use std::path::Path;
use std::process::{Command, Output};

fn memkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_memkit")).args(args).output().expect("binary runs")
}

fn stdout_ok(args: &[&str]) -> String {
    let out = memkit(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// Data rows of a CSV with `#` comments and one header line.
fn rows(csv: &str) -> Vec<Vec<f64>> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap_or(f64::NAN)).collect())
        .collect()
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let head: Vec<&str> = csv.lines().find(|l| !l.starts_with('#')).unwrap().split(',').collect();
    let k = head.iter().position(|h| *h == name).unwrap();
    rows(csv).iter().map(|r| r[k]).collect()
}

#[test]
fn choi_of_identity_is_the_maximally_entangled_projector() {
    let v: serde_json::Value = serde_json::from_str(&stdout_ok(&["choi", "--c", "1.0"])).unwrap();
    let data = v["data"].as_array().unwrap();
    assert_eq!(data.len(), 16);
    for (k, z) in data.iter().enumerate() {
        let want = if [0, 3, 12, 15].contains(&k) { 0.5 } else { 0.0 };
        assert_eq!(z[0].as_f64().unwrap(), want, "entry {k}");
        assert_eq!(z[1].as_f64().unwrap(), 0.0);
    }
}

#[test]
fn choi_rejects_amplitude_above_one() {
    assert!(!memkit(&["choi", "--c", "1.5"]).status.success());
}

#[test]
fn nm_at_small_ratio_is_below_bound() {
    let csv = stdout_ok(&["nm", "--model", "lorentzian", "--R", "0.01"]);
    let nm = column(&csv, "n_m")[0];
    assert!(nm > 0.0 && nm < 0.006, "{nm}");
}

#[test]
fn scan_is_nondecreasing_in_r() {
    let csv = stdout_ok(&["scan", "--param", "R", "--log-range", "1e-3", "1e3", "--points", "7", "--grid", "96"]);
    let nm = column(&csv, "n_m");
    assert_eq!(nm.len(), 7);
    for w in nm.windows(2) {
        assert!(w[1] >= w[0] - 1e-4, "{nm:?}");
    }
}

#[test]
fn amplitude_starts_at_one_with_nonnegative_rate() {
    let csv = stdout_ok(&["amplitude", "--R", "0.4"]);
    let r = rows(&csv);
    assert_eq!((r[0][0], r[0][1], r[0][2]), (0.0, 1.0, 0.0));
    assert!(column(&csv, "gamma").iter().all(|&g| g >= 0.0));
    assert!(column(&csv, "s_shift").iter().all(|&s| s == 0.0));
}

#[test]
fn ohmic_amplitude_plateaus_above_threshold() {
    let csv = stdout_ok(&["amplitude", "--model", "ohmic", "--alpha", "2", "--omega0", "1"]);
    let r = rows(&csv);
    let moduli: Vec<f64> = r.iter().map(|x| x[1].hypot(x[2])).collect();
    let tail = &moduli[moduli.len() * 9 / 10..];
    let (lo, hi) = tail.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &m| (a.min(m), b.max(m)));
    assert!(lo > 0.1 && hi - lo < 1e-3, "tail range [{lo}, {hi}]");
}

#[test]
fn demo_columns_agree_when_restarting_at_zero() {
    let csv = stdout_ok(&["demo", "--R", "0.4", "--t1", "0", "--t2", "10"]);
    for r in rows(&csv) {
        assert_eq!(r[1], r[2], "t = {}", r[0]);
    }
}

#[test]
fn demo_columns_diverge_after_restart() {
    let csv = stdout_ok(&["demo", "--R", "0.4", "--t1", "2.5", "--t2", "10"]);
    let r = rows(&csv);
    assert!(r.iter().filter(|x| x[0] < 2.5).all(|x| x[1] == x[2]));
    assert!(r.iter().any(|x| (x[1] - x[2]).abs() > 1e-3));
}

#[test]
fn demo_columns_nearly_agree_when_nearly_memoryless() {
    let csv = stdout_ok(&["demo", "--R", "1e-4", "--t1", "1", "--t2", "5"]);
    for r in rows(&csv) {
        assert!((r[1] - r[2]).abs() < 1e-3);
    }
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let path = dir.path().join(name);
        let p = path.to_str().unwrap();
        stdout_ok(&["nm", "--model", "ohmic", "--alpha", "0.5", "--grid", "64", "--out", p]);
        std::fs::read(&path).unwrap()
    };
    assert_eq!(run("a.csv"), run("b.csv"));
    let scan = |threads: &str| {
        let out = Command::new(env!("CARGO_BIN_EXE_memkit"))
            .args(["scan", "--log-range", "0.1", "10", "--points", "5", "--grid", "64", "--format", "json"])
            .env("MEMKIT_THREADS", threads)
            .output()
            .unwrap();
        assert!(out.status.success());
        out.stdout
    };
    assert_eq!(scan("1"), scan("4"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# ohmic run\nmodel=ohmic\nalpha=0.5\nomega_c=2\n").unwrap();
    let c = cfg.to_str().unwrap();
    let from_file = stdout_ok(&["nm", "--config", c, "--grid", "48", "--no-refine"]);
    assert!(from_file.contains("# alpha=5.0000000000000000e-1"));
    assert!(from_file.contains("# omega_c=2.0000000000000000e0"));
    let overridden = stdout_ok(&["nm", "--config", c, "--alpha", "0.25", "--grid", "48", "--no-refine"]);
    assert!(overridden.contains("# alpha=2.5000000000000000e-1"));
}

#[test]
fn bad_config_key_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "alhpa=0.5\n").unwrap();
    let out = memkit(&["nm", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alhpa"));
}

#[test]
fn small_grid_is_rejected() {
    assert_eq!(memkit(&["nm", "--grid", "16"]).status.code(), Some(1));
}

#[test]
fn failed_scan_points_set_the_exit_code_unless_keep_going() {
    // a table with a missing file fails at every point
    let args = [
        "scan",
        "--model",
        "table",
        "--table",
        "/nonexistent/spectrum.txt",
        "--param",
        "omega0",
        "--log-range",
        "1",
        "2",
        "--points",
        "2",
    ];
    let out = memkit(&args);
    assert_ne!(out.status.code(), Some(0));
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.contains("# failed at"));
    let mut kept: Vec<&str> = args.to_vec();
    kept.push("--keep-going");
    assert!(memkit(&kept).status.success());
}

#[test]
fn table_model_runs_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("spectrum.txt");
    let text: String = (0..=60)
        .map(|i| {
            let w = 0.05 * i as f64;
            format!("{w} {}\n", 0.02 / (1.0 + 25.0 * (w - 1.0) * (w - 1.0)))
        })
        .collect();
    std::fs::write(&table, text).unwrap();
    let out_path = dir.path().join("amp.json");
    stdout_ok(&[
        "amplitude",
        "--model",
        "table",
        "--table",
        table.to_str().unwrap(),
        "--format",
        "json",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&out_path).unwrap()).unwrap();
    assert_eq!(v["method"], "volterra");
    assert_eq!(v["re_c"][0], 1.0);
    assert!(Path::new(&out_path).exists());
}
