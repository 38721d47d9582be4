#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::io::Write;
use std::process::{Command, Output, Stdio};

use microstein::output::fmt_g6;

const BIN: &str = env!("CARGO_BIN_EXE_microstein");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn run_with_input(args: &[&str], input: &str) -> Output {
    let mut child = Command::new(BIN)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn values(text: &str) -> Vec<f64> {
    text.lines().map(|l| l.parse().unwrap()).collect()
}

#[test]
fn sample_is_bounded_and_deterministic() {
    let args = ["sample", "--N", "5", "--n", "10", "--seed", "1", "--hypothesis", "h0"];
    let a = stdout(&args);
    assert_eq!(a, stdout(&args));
    let v = values(&a);
    assert_eq!(v.len(), 10);
    assert!(v.iter().all(|x| x.abs() < 5f64.sqrt()));
    assert_ne!(a, stdout(&["sample", "--N", "5", "--n", "10", "--seed", "2"]));
}

#[test]
fn gaussian_sample_tail_fraction() {
    let v = values(&stdout(&[
        "sample",
        "--N",
        "5",
        "--n",
        "100000",
        "--seed",
        "4",
        "--hypothesis",
        "h1",
    ]));
    let frac = v.iter().filter(|x| x.abs() > 1.0).count() as f64 / v.len() as f64;
    assert!((frac - 0.3173).abs() < 0.006, "{frac}");
    assert!(v.iter().any(|x| x.abs() > 5f64.sqrt()));
}

#[test]
fn missing_seed_is_reported_on_stderr() {
    let out = run(&["sample", "--N", "5", "--n", "3"]);
    assert!(out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    let seed: u64 = err.trim().strip_prefix("seed: ").unwrap().parse().unwrap();
    let replay = stdout(&["sample", "--N", "5", "--n", "3", "--seed", &seed.to_string()]);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), replay);
}

#[test]
fn sigma_table_matches_quadrature_at_n10() {
    let text = stdout(&["sigma-table", "--N", "10", "--m", "10"]);
    let mut prev = 0.0;
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let k: usize = f[2].parse().unwrap();
        let sigma: f64 = f[3].parse().unwrap();
        assert!(sigma > prev);
        prev = sigma;
        let alpha = 3.5;
        let e = common::expect(10.0, |x| common::jacobi_explicit(alpha, k, x / 10f64.sqrt()).powi(2));
        let want = 2.0 * k as f64 * e.sqrt();
        assert!((sigma - want).abs() <= 1e-8, "k={k}: {sigma} vs {want}");
    }
}

#[test]
fn density_and_quantile_queries() {
    let text = stdout(&["density", "--N", "5", "--x", "-1,0,3"]);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "x,density,cdf");
    assert!(lines[2].starts_with("0,0.33541019662496"));
    assert_eq!(lines[3], "3,0,1");
    let q = stdout(&["quantile", "--N", "5", "--p", "0.5,0.975"]);
    let x: f64 = q.lines().nth(2).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!(x > 1.5 && x < 5f64.sqrt());
}

#[test]
fn test_report_json_and_csv() {
    let data = stdout(&["sample", "--N", "5", "--n", "200", "--seed", "9"]);
    let out = run_with_input(&["test", "--N", "5", "--m", "8", "--format", "json"], &data);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in ["statistic", "dof", "cutoff", "p_value", "reject", "coefficients"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert_eq!(v["dof"], 3);
    assert_eq!(v["coefficients"].as_object().unwrap().len(), 3);
    let out = run_with_input(&["test", "--N", "5", "--modes", "4,3"], &data);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("statistic,dof,cutoff,p_value,reject,mu_3,mu_4\n"));
}

#[test]
fn test_reads_input_file_and_explicit_cutoff() {
    let dir = std::env::temp_dir().join(format!("microstein-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("sample.txt");
    std::fs::write(&path, "0.1 -0.4\n1.2\n\n-0.8 0.3 0.05\n").unwrap();
    let p = path.to_str().unwrap();
    let out = run(&["test", "--N", "6", "--input", p, "--cutoff", "1e6", "--format", "json"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["cutoff"], 1e6);
    assert_eq!(v["reject"], false);
    let out = run(&[
        "test",
        "--N",
        "6",
        "--input",
        p,
        "--cutoff",
        "calibrated",
        "--reps",
        "1000",
        "--seed",
        "3",
    ]);
    assert!(out.status.success());
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn malformed_input_exits_2_without_output() {
    let out = run_with_input(&["test", "--N", "5"], "0.1\n0.2\nabc\n0.3\n");
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1);
    assert!(err.contains("line 3"));
}

#[test]
fn usage_errors_exit_2_with_one_line() {
    for args in [
        vec!["sample", "--N", "5"],
        vec!["sample", "--N", "2", "--n", "5", "--seed", "1"],
        vec!["frobnicate"],
        vec!["test", "--N", "5", "--m", "3"],
        vec!["grid", "--N", "5", "--n", "10", "--calib-reps", "10", "--seed", "1"],
        vec!["power-boundary", "--target", "1.5"],
        vec!["test", "--N", "5", "--cutoff", "bogus"],
    ] {
        let out = run_with_input(&args, "0.1 0.2 0.3\n");
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        let err = String::from_utf8(out.stderr).unwrap();
        assert_eq!(err.lines().count(), 1, "{args:?}: {err}");
        assert!(out.stdout.is_empty());
    }
}

#[test]
fn constant_sample_is_rejected_as_degenerate() {
    let out = run_with_input(&["test", "--N", "5"], "1 1 1 1\n");
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("degenerate"));
}

#[test]
fn fail_on_reject_gates_the_exit_status() {
    let data = stdout(&["sample", "--N", "5", "--n", "2000", "--seed", "5", "--hypothesis", "h1"]);
    let gated = run_with_input(
        &["test", "--N", "5", "--standardize", "none", "--fail-on-reject"],
        &data,
    );
    assert_eq!(gated.status.code(), Some(1));
    assert!(String::from_utf8(gated.stdout).unwrap().contains("true"));
    let plain = run_with_input(&["test", "--N", "5", "--standardize", "none"], &data);
    assert_eq!(plain.status.code(), Some(0));
}

fn rejection_rate(hypothesis: &str, n: &str, seeds: u64) -> f64 {
    let mut rejected = 0;
    for seed in 0..seeds {
        let data = stdout(&[
            "sample",
            "--N",
            "5",
            "--n",
            n,
            "--seed",
            &seed.to_string(),
            "--hypothesis",
            hypothesis,
        ]);
        let out = run_with_input(
            &["test", "--N", "5", "--standardize", "none", "--fail-on-reject"],
            &data,
        );
        if out.status.code() == Some(1) {
            rejected += 1;
        }
    }
    rejected as f64 / seeds as f64
}

#[test]
fn test_rejection_rates_across_seeds() {
    let size = rejection_rate("h0", "500", 300);
    // 0.05 ± 3 binomial SE
    assert!((size - 0.05).abs() <= 0.038, "size {size}");
    let power = rejection_rate("h1", "250", 100);
    assert!(power >= 0.97, "power {power}");
}

#[test]
fn sanov_reproduces_known_entries() {
    let text = stdout(&["sanov", "--N", "4,10", "--n", "50,100"]);
    assert_eq!(text, "N,50,100\n4,0.982631,0.999698\n10,0.369811,0.602862\n");
    let json: serde_json::Value =
        serde_json::from_str(&stdout(&["sanov", "--N", "4", "--n", "50", "--format", "json"])).unwrap();
    assert!((json["power"][0][0].as_f64().unwrap() - 0.983).abs() < 5e-4);
}

#[test]
fn power_boundary_and_kl() {
    let text = stdout(&["power-boundary", "--N", "5,20", "--target", "0.8"]);
    assert_eq!(text, "N,target,n_star\n5,0.8,35\n20,0.8,776\n");
    let kl = stdout(&["kl", "--N", "5"]);
    let v: f64 = kl.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!((v - 0.0462).abs() < 1e-4);
}

const GRID: [&str; 13] = [
    "grid",
    "--N",
    "5,8",
    "--n",
    "30,60",
    "--m",
    "4,6",
    "--calib-reps",
    "1000",
    "--eval-reps",
    "300",
    "--seed",
    "2",
];

#[test]
fn grid_csv_round_trips() {
    let text = stdout(&GRID);
    assert!(text.ends_with("# complete=true\n"));
    let body: String = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect();
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        header,
        [
            "N",
            "n",
            "m",
            "modes",
            "cutoff_source",
            "hypothesis",
            "rejection_rate",
            "reps",
            "seed"
        ]
    );
    let mut rows = 0;
    for rec in reader.records() {
        let rec = rec.unwrap();
        rows += 1;
        let m: usize = rec[2].parse().unwrap();
        let modes: Vec<String> = (4..=m).step_by(2).map(|k| k.to_string()).collect();
        assert_eq!(&rec[3], modes.join(";"));
        let reps: f64 = rec[7].parse().unwrap();
        let rate: f64 = rec[6].parse().unwrap();
        let rejections = (rate * reps).round();
        assert_eq!(fmt_g6(rejections / reps), &rec[6]);
        assert_eq!(&rec[8], "2");
    }
    assert_eq!(rows, 32);
}

#[test]
fn grid_json_and_calibration_output() {
    let dir = std::env::temp_dir().join(format!("microstein-grid-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cal = dir.join("cal.csv");
    let mut args = GRID.to_vec();
    args.extend(["--format", "json", "--calibration-output", cal.to_str().unwrap()]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&args)).unwrap();
    assert_eq!(v["complete"], true);
    assert_eq!(v["rows"].as_array().unwrap().len(), 32);
    let cal_text = std::fs::read_to_string(&cal).unwrap();
    assert!(cal_text.starts_with("N,n,m,level,cutoff,reps,seed\n"));
    assert_eq!(cal_text.lines().count(), 9);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn grid_time_limit_marks_output_incomplete() {
    let mut args = GRID.to_vec();
    args.extend(["--time-limit", "0"]);
    let text = stdout(&args);
    assert_eq!(
        text,
        "N,n,m,modes,cutoff_source,hypothesis,rejection_rate,reps,seed\n# complete=false\n"
    );
}

#[test]
fn grid_is_identical_across_worker_counts() {
    let one = stdout(&[&["--workers", "1"], &GRID[..]].concat());
    let three = stdout(&[&["--workers", "3"], &GRID[..]].concat());
    assert_eq!(one, three);
}

#[test]
fn calibrate_output_schema() {
    let text = stdout(&[
        "calibrate",
        "--N",
        "5",
        "--n",
        "50,100",
        "--m",
        "4,6",
        "--reps",
        "1000",
        "--seed",
        "1",
    ]);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "N,n,m,level,cutoff,reps,seed");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("5,50,4,0.05,"));
}

#[test]
fn compare_lists_all_tests_at_each_n() {
    let text = stdout(&[
        "compare",
        "--N",
        "20",
        "--n",
        "60,90",
        "--calib-reps",
        "1000",
        "--eval-reps",
        "100",
        "--seed",
        "3",
    ]);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "N,m,test,n,calibrated_power,null_rate,cutoff");
    let mut seen: Vec<(String, String)> = lines[1..]
        .iter()
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[2].to_string(), f[3].to_string())
        })
        .collect();
    seen.sort();
    let mut want: Vec<(String, String)> = ["ad", "cvm", "ks", "stein"]
        .iter()
        .flat_map(|t| ["60", "90"].map(|n| (t.to_string(), n.to_string())))
        .collect();
    want.sort();
    assert_eq!(seen, want);
}
