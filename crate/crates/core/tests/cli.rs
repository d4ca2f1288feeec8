use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mgcp_rd::cli::{parse_dataset, read_model, read_report, Model};
use mgcp_rd::simulate::{gen_setting1, gen_setting3};
use tempfile::TempDir;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mgcp-rd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = bin(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(dir: &TempDir, setting: &str, seed: &str, name: &str) -> PathBuf {
    let out = path(dir, name);
    ok(&["simulate", "--setting", setting, "--seed", seed, "--out", s(&out)]);
    out
}

/// Fast unpenalized fit with a single restart.
fn quick_fit(data: &Path, target: &str, out: &Path, extra: &[&str]) {
    let mut args = vec![
        "fit",
        "--data",
        s(data),
        "--target",
        target,
        "--out",
        s(out),
        "--penalty",
        "none",
        "--lambda-grid",
        "0",
        "--restarts",
        "1",
    ];
    args.extend_from_slice(extra);
    ok(&args);
}

#[test]
fn simulate_row_counts_and_round_trip() {
    let dir = TempDir::new().unwrap();
    let one = simulate(&dir, "1", "11", "one.csv");
    let text = std::fs::read_to_string(&one).unwrap();
    assert_eq!(text.lines().count(), 51);
    assert_eq!(text.lines().next().unwrap(), "output_id,x1,y");
    let parsed = parse_dataset(text.as_bytes()).unwrap();
    assert_eq!(parsed, gen_setting1(5, 10, 0.1, 11).unwrap().dataset);

    let three = simulate(&dir, "3", "11", "three.csv");
    let text = std::fs::read_to_string(&three).unwrap();
    assert_eq!(text.lines().count(), 57);
    assert_eq!(
        parse_dataset(text.as_bytes()).unwrap(),
        gen_setting3(0.005, 11).unwrap().dataset
    );

    let again = simulate(&dir, "3", "11", "again.csv");
    assert_eq!(std::fs::read(&three).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn simulate_overrides() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "s2.csv");
    ok(&[
        "simulate",
        "--setting",
        "2",
        "--outputs",
        "3",
        "--points",
        "8",
        "--target-points",
        "5",
        "--out",
        s(&out),
    ]);
    let ds = mgcp_rd::cli::read_dataset(&out).unwrap();
    let counts: Vec<usize> = ds.outputs.iter().map(|o| o.len()).collect();
    assert_eq!(counts, vec![8, 8, 5]);
}

#[test]
fn fit_writes_one_entry_per_partner_and_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let data = simulate(&dir, "1", "2", "d.csv");
    let (m1, m4) = (path(&dir, "m1.json"), path(&dir, "m4.json"));
    quick_fit(&data, "5", &m1, &["--parallelism", "1"]);
    quick_fit(&data, "5", &m4, &["--parallelism", "4"]);
    let bytes = std::fs::read(&m1).unwrap();
    assert_eq!(bytes, std::fs::read(&m4).unwrap());

    let model = read_model(&m1).unwrap();
    assert_eq!(model.pairs.len(), 4);
    assert!(model
        .pairs
        .iter()
        .all(|p| p.pair.1 == 4 && p.fit.as_ref().unwrap().lambda_used == 0.0));
    assert!(model.pairs.iter().all(|p| !p.fit.as_ref().unwrap().xi0_zeroed));
    assert!(model.standardized);

    // serialize -> deserialize -> serialize is byte-stable
    let text = String::from_utf8(bytes).unwrap();
    let again = Model::from_json(&text).unwrap().to_json().unwrap();
    assert_eq!(again, text);
}

#[test]
fn predict_reproduces_training_data_and_handles_empty_input() {
    let dir = TempDir::new().unwrap();
    let data = simulate(&dir, "1", "5", "d.csv");
    let model = path(&dir, "m.json");
    quick_fit(&data, "5", &model, &[]);

    let ds = mgcp_rd::cli::read_dataset(&data).unwrap();
    let target = &ds.outputs[4];
    let inputs = path(&dir, "x.csv");
    let mut text = String::from("x1\n");
    for r in 0..target.len() {
        text.push_str(&format!("{}\n", target.x[(r, 0)]));
    }
    std::fs::write(&inputs, text).unwrap();
    let preds = path(&dir, "p.csv");
    ok(&[
        "predict",
        "--model",
        s(&model),
        "--inputs",
        s(&inputs),
        "--out",
        s(&preds),
    ]);
    let out = std::fs::read_to_string(&preds).unwrap();
    let mut lines = out.lines();
    assert_eq!(lines.next().unwrap(), "x1,mean,variance");
    let mut inside = 0;
    for (r, line) in lines.enumerate() {
        let f: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        assert!(f[2] > 0.0);
        if (f[1] - target.y[r]).abs() <= 2.0 * f[2].sqrt() {
            inside += 1;
        }
    }
    assert!(inside * 10 >= 9 * target.len(), "{inside} of {}", target.len());

    let empty = path(&dir, "empty.csv");
    std::fs::write(&empty, "x1\n").unwrap();
    ok(&[
        "predict",
        "--model",
        s(&model),
        "--inputs",
        s(&empty),
        "--out",
        s(&preds),
    ]);
    assert_eq!(std::fs::read_to_string(&preds).unwrap(), "x1,mean,variance\n");

    let wide = path(&dir, "wide.csv");
    std::fs::write(&wide, "x1,x2\n0,1\n").unwrap();
    let out = bin(&[
        "predict",
        "--model",
        s(&model),
        "--inputs",
        s(&wide),
        "--out",
        s(&preds),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn error_exit_codes() {
    let dir = TempDir::new().unwrap();
    let bad = path(&dir, "bad.csv");
    std::fs::write(&bad, "output_id,x1,y\n1,0,1\n1,1,2\n2,0,zz\n").unwrap();
    let out = bin(&[
        "fit",
        "--data",
        s(&bad),
        "--target",
        "1",
        "--out",
        s(&path(&dir, "m.json")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));

    let data = simulate(&dir, "1", "0", "d.csv");
    let out = bin(&[
        "fit",
        "--data",
        s(&data),
        "--target",
        "nine",
        "--out",
        s(&path(&dir, "m.json")),
    ]);
    assert_eq!(out.status.code(), Some(1));

    let out = bin(&[
        "simulate",
        "--setting",
        "1",
        "--out",
        s(&dir.path().join("missing/dir/x.csv")),
    ]);
    assert_eq!(out.status.code(), Some(2));

    let out = bin(&["simulate", "--setting", "7", "--out", "x.csv"]);
    assert!(!out.status.success());

    let big = path(&dir, "r.json");
    let out = bin(&[
        "benchmark",
        "--setting",
        "1",
        "--outputs",
        "6",
        "--points",
        "90",
        "--methods",
        "mgcp",
        "--replicates",
        "1",
        "--out",
        s(&big),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("too large"));
}

#[test]
fn degenerate_partner_is_skipped_with_warning() {
    let dir = TempDir::new().unwrap();
    let data = path(&dir, "d.csv");
    let mut text = String::from("output_id,x1,y\n");
    for k in 0..8 {
        let x = k as f64;
        text.push_str(&format!("a,{x},{}\nflat,{x},2\nb,{x},{}\n", x.sin(), (x + 0.2).sin()));
    }
    std::fs::write(&data, text).unwrap();
    let model = path(&dir, "m.json");
    let stdout = ok(&[
        "fit",
        "--data",
        s(&data),
        "--target",
        "b",
        "--out",
        s(&model),
        "--standardize",
        "off",
        "--penalty",
        "none",
        "--lambda-grid",
        "0",
        "--restarts",
        "1",
    ]);
    assert!(stdout.contains("warning"), "{stdout}");
    let m = read_model(&model).unwrap();
    assert_eq!(m.warnings.len(), 1);
    assert_eq!(m.pairs.iter().filter(|p| p.fit.is_some()).count(), 1);
}

#[test]
fn benchmark_report_and_summary() {
    let dir = TempDir::new().unwrap();
    let (r1, r2) = (path(&dir, "r1.json"), path(&dir, "r2.json"));
    for r in [&r1, &r2] {
        ok(&[
            "benchmark",
            "--setting",
            "1",
            "--methods",
            "gcp",
            "--replicates",
            "2",
            "--seed",
            "9",
            "--out",
            s(r),
        ]);
    }
    let report = read_report(&r1).unwrap();
    assert_eq!(report.methods.len(), 1);
    assert_eq!(report.methods[0].mae.len(), 2);
    assert!(report
        .replicate_records
        .iter()
        .all(|r| r.test_x.len() == 50 && r.truth.len() == 50));
    assert_eq!(report.timing.seconds["gcp"].len(), 2);

    let mut a = read_report(&r1).unwrap();
    let mut b = read_report(&r2).unwrap();
    a.timing = Default::default();
    b.timing = Default::default();
    assert_eq!(a, b);

    let csv = path(&dir, "summary.csv");
    let table = ok(&["report", "--input", s(&r1), "--out", s(&csv)]);
    assert!(table.contains("gcp"));
    let summary = std::fs::read_to_string(&csv).unwrap();
    assert!(summary.starts_with("method,replicates,mae_mean,mae_std,seconds_mean\ngcp,2,"));
}
