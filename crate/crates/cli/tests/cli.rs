use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn pfit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pfit"))
        .args(args)
        .args(["--out", dir.to_str().unwrap()])
        .env("PFIT_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = pfit(dir, args);
    assert!(
        out.status.success(),
        "pfit {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn build_writes_oracle_triplets() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(dir.path(), &["build", "--system", "doubling", "--dims", "4"]);
    assert!(stdout.contains("row sums exact (integer counts): true"));
    let csv = std::fs::read_to_string(dir.path().join("matrix.csv")).unwrap();
    assert_eq!(
        csv,
        "i,j,value\n0,0,0.5\n0,1,0.5\n1,2,0.5\n1,3,0.5\n2,0,0.5\n2,1,0.5\n3,2,0.5\n3,3,0.5\n"
    );

    ok(dir.path(), &["build", "--system", "identity", "--params", "2", "--dims", "3,2", "--samples", "4"]);
    let csv = std::fs::read_to_string(dir.path().join("matrix.csv")).unwrap();
    let expect: String = (0..6).map(|i| format!("{i},{i},1\n")).collect();
    assert_eq!(csv, format!("i,j,value\n{expect}"));
    let meta = json(dir.path().join("matrix.meta.json"));
    assert_eq!(meta["dims"], serde_json::json!([3, 2]));
}

#[test]
fn transfer_reports_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["transfer", "--system", "doubling", "--dims", "4", "--source", "0", "--target", "0"]);
    let report = json(d.join("transfer_report.json"));
    let total = report["total"].as_f64().unwrap();
    assert!((total - 3.0 * 0.5 * 2f64.ln()).abs() < 1e-12);
    assert_eq!(report["n_max"], 3);
    let steps = std::fs::read_to_string(d.join("transfer_steps.csv")).unwrap();
    assert_eq!(steps.lines().count(), 4);

    ok(d, &["transfer", "--system", "rotation", "--params", "0.25", "--dims", "4", "--source", "0", "--target", "2"]);
    assert_eq!(json(d.join("transfer_report.json"))["total"].as_f64(), Some(0.0));

    ok(d, &["transfer", "--system", "identity", "--dims", "4", "--source", "0,1", "--target", "2", "--n-max", "9"]);
    assert_eq!(json(d.join("transfer_report.json"))["total"].as_f64(), Some(0.0));

    ok(d, &["transfer", "--system", "doubling", "--dims", "4", "--source", "0", "--target", "0", "--log-base", "bits"]);
    let bits = json(d.join("transfer_report.json"))["total"].as_f64().unwrap();
    assert!((bits - 1.5).abs() < 1e-12);
}

#[test]
fn saved_matrix_gives_bit_identical_transfer() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let sys = ["--system", "double-gyre", "--dims", "12,6", "--samples", "16", "--n-max", "40"];
    ok(d, &[&["build"], &sys[..]].concat());
    ok(d, &[&["transfer"], &sys[..]].concat());
    let direct = std::fs::read(d.join("transfer_matrix.csv")).unwrap();
    let matrix = d.join("matrix.csv");
    ok(d, &[&["transfer", "--matrix", matrix.to_str().unwrap()], &sys[..]].concat());
    let loaded = std::fs::read(d.join("transfer_matrix.csv")).unwrap();
    assert_eq!(direct, loaded);
}

#[test]
fn classify_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cases: [(&[&str], &str, &str); 3] = [
        (&["--system", "doubling", "--dims", "16", "--all-pairs"], "yes", "yes"),
        (&["--system", "rotation", "--params", "0.3819660112501051", "--dims", "64"], "yes", "no"),
        (&["--system", "identity", "--dims", "16"], "no", "no"),
    ];
    for (args, ergodic, mixing) in cases {
        ok(d, &[&["classify"], args].concat());
        let report = json(d.join("classification.json"));
        assert_eq!(report["ergodic"]["verdict"], ergodic, "{args:?}");
        assert_eq!(report["mixing"]["verdict"], mixing, "{args:?}");
        let dims = args[args.iter().position(|&a| a == "--dims").unwrap() + 1];
        assert_eq!(report["resolution"][0], dims.parse::<u64>().unwrap());
    }
}

#[test]
fn placement_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["place", "--system", "doubling", "--dims", "4", "--count", "1"]);
    let sol = json(d.join("placement.json"));
    assert_eq!(sol["selected"], serde_json::json!([0]));
    assert_eq!(sol["coverage_fraction"], 1.0);
    assert_eq!(sol["solver"], "lp-rounded");
    let heat = std::fs::read_to_string(d.join("coverage_heatmap.csv")).unwrap();
    assert!(heat.starts_with("# dims: 4\nix,iy,cell,coverage,log10_coverage\n"));
    assert_eq!(heat.lines().count(), 6);
    assert!(!d.join("velocity_field.csv").exists());

    ok(d, &["place", "--system", "identity", "--dims", "4", "--count", "2", "--solver", "greedy"]);
    let sol = json(d.join("placement.json"));
    assert_eq!(sol["coverage_fraction"], 0.0);
    assert_eq!(sol["reachability"]["covered"], 2);

    // permutation dynamics: everything reachable, nothing covered by transfer
    ok(d, &["place", "--system", "rotation", "--params", "0.25", "--dims", "4", "--count", "1", "--solver", "exact"]);
    let sol = json(d.join("placement.json"));
    assert_eq!(sol["coverage_fraction"], 0.0);
    assert_eq!(sol["reachability"]["coverage_fraction"], 1.0);

    ok(d, &["place", "--system", "doubling", "--dims", "8", "--count", "1", "--solver", "exact", "--full-cover-max", "2"]);
    let sol = json(d.join("placement.json"));
    assert_eq!(sol["full_cover"]["status"], "achieved");
    assert_eq!(sol["full_cover"]["count"], 1);

    ok(d, &["place", "--system", "double-gyre", "--dims", "4,2", "--samples", "4", "--count", "2"]);
    let field = std::fs::read_to_string(d.join("velocity_field.csv")).unwrap();
    let rows: Vec<Vec<f64>> = field
        .lines()
        .skip(2)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert!(field.starts_with("# dims: 4x2\nix,iy,cell,x,y,u,v\n"));
    assert_eq!(rows.len(), 8);
    // cell (1, 0) is centred at (0.75, 0.25)
    let pi = std::f64::consts::PI;
    let (s, c) = (0.5f64.sqrt(), 0.5f64.sqrt());
    assert_eq!(&rows[1][3..5], &[0.75, 0.25]);
    assert!((rows[1][5] + pi * s * c).abs() < 1e-12 && (rows[1][6] + pi * s * c).abs() < 1e-12);
}

#[test]
fn sensor_mode_and_admissible_cells() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["place", "--system", "doubling", "--dims", "8", "--count", "2", "--mode", "sensor", "--admissible", "3,5,6"]);
    let sol = json(d.join("placement.json"));
    assert_eq!(sol["mode"], "sensor");
    for cell in sol["selected"].as_array().unwrap() {
        assert!([3, 5, 6].contains(&cell.as_u64().unwrap()));
    }
}

#[test]
fn controllability_flags() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let base = ["controllability", "--dims", "4", "--actuators", "0", "--alpha", "0.9", "--n-max", "10"];
    ok(d, &[&base[..], &["--system", "identity"]].concat());
    assert_eq!(json(d.join("controllability.json"))["coarse_controllable"], false);
    ok(d, &[&base[..], &["--system", "doubling"]].concat());
    assert_eq!(json(d.join("controllability.json"))["coarse_controllable"], true);

    ok(d, &["place", "--system", "doubling", "--dims", "4", "--count", "1"]);
    let placement = d.join("placement.json");
    ok(d, &["controllability", "--system", "doubling", "--dims", "4", "--from-placement", placement.to_str().unwrap()]);
    assert_eq!(json(d.join("controllability.json"))["actuators"], serde_json::json!([0]));
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["place", "--system", "baker", "--dims", "8,8", "--samples", "9", "--seed", "11", "--count", "3", "--save-transfer"];
    ok(a.path(), &args);
    ok(b.path(), &args);
    for file in ["placement.json", "coverage_heatmap.csv", "transfer_matrix.csv", "transfer_matrix.meta.json"] {
        let x = std::fs::read(a.path().join(file)).unwrap();
        let y = std::fs::read(b.path().join(file)).unwrap();
        assert_eq!(x, y, "{file} differs between runs");
    }
}

#[test]
fn config_file_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("run.json");
    std::fs::write(
        &cfg,
        r#"{ "system": { "name": "doubling" }, "dims": [8],
             "placement": { "count": 2, "solver": "greedy" } }"#,
    )
    .unwrap();
    ok(d, &["place", "--config", cfg.to_str().unwrap(), "--dims", "4"]);
    let sol = json(d.join("placement.json"));
    assert_eq!(sol["solver"], "greedy");
    assert_eq!(sol["count"], 2);
    assert_eq!(sol["coverage_fraction"], 1.0);
    assert_eq!(sol["coverage_values"].as_array().unwrap().len(), 4);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let code = |args: &[&str]| pfit(d, args).status.code();
    assert_eq!(code(&["build", "--system", "pendulum", "--dims", "4"]), Some(2));
    assert_eq!(code(&["build", "--system", "doubling", "--dims", "0"]), Some(2));
    assert_eq!(code(&["build", "--system", "doubling", "--dims", "1001,1001"]), Some(2));
    assert_eq!(code(&["build", "--config", "/nonexistent/run.json"]), Some(2));
    assert_eq!(code(&["build", "--system", "baker", "--dims", "4,4", "--samples", "10"]), Some(2));
    assert_eq!(code(&["place", "--system", "doubling", "--dims", "64", "--count", "5", "--solver", "exact"]), Some(3));
    assert_eq!(code(&["transfer", "--system", "doubling", "--dims", "4", "--source", "9", "--target", "0"]), Some(2));
    assert_eq!(code(&["frobnicate"]), Some(2));
}
