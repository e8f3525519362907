use std::path::Path;
use std::process::{Command, Output};

fn sdecontract(out_dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdecontract"))
        .arg("--out-dir")
        .arg(out_dir)
        .args(args)
        .env_remove("SDECONTRACT_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn data_rows(csv: &Path) -> usize {
    std::fs::read_to_string(csv)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .count()
        - 1
}

#[test]
fn simulate_writes_one_row_per_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "simulate",
        "--problem",
        "problem1",
        "--scheme",
        "maruyama",
        "--theta",
        "1",
        "--dt",
        "0.25",
        "--seed",
        "42",
    ];
    let o = sdecontract(dir.path(), &args);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = dir.path().join("simulate_problem1_maruyama_theta1_dt0p25.csv");
    assert_eq!(data_rows(&csv), 41);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.lines().next().unwrap().contains("\"seed\":42"));
    assert_eq!(text.lines().nth(1).unwrap(), "t,x_1,y_1");
}

#[test]
fn theta_out_of_range_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = sdecontract(dir.path(), &["simulate", "--theta", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("[0,1]"));
}

#[test]
fn malformed_flags_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        sdecontract(dir.path(), &["simulate", "--scheme", "euler"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        sdecontract(dir.path(), &["region", "--problem", "problem9"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        sdecontract(dir.path(), &["experiment", "--preset", "fig9"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn milstein_on_noncommutative_noise_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let o = sdecontract(
        dir.path(),
        &["simulate", "--problem", "problem3", "--scheme", "milstein"],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("commutative"), "{}", stderr(&o));
}

#[test]
fn region_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (
            vec!["--problem", "problem1", "--scheme", "maruyama", "--theta", "0.5"],
            "R = (0, 7/4)",
        ),
        (
            vec!["--problem", "problem2", "--scheme", "maruyama", "--theta", "0.65"],
            "R = (0, 144/49)",
        ),
        (
            vec!["--problem", "problem1", "--scheme", "maruyama", "--theta", "1"],
            "R = (0, ∞), unconditional",
        ),
        (
            vec!["--problem", "problem1", "--scheme", "milstein", "--theta", "1/2"],
            "R = (0, 28/19)",
        ),
        (
            vec!["--problem", "problem1", "--scheme", "milstein", "--mtilde", "2/3"],
            "R = (0, 14/9)",
        ),
    ];
    for (args, expected) in cases {
        let mut full = vec!["region"];
        full.extend(args);
        let o = sdecontract(dir.path(), &full);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).contains(expected), "{full:?}: {}", stdout(&o));
        assert!(stdout(&o).contains("(preset)"));
    }
}

#[test]
fn non_contractive_verdict_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = sdecontract(dir.path(), &["region", "--mu", "3"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("not mean-square contractive"));
    assert!(stdout(&o).contains("mu = 3 (user-supplied)"));
}

#[test]
fn region_json_is_machine_readable() {
    let dir = tempfile::tempdir().unwrap();
    let o = sdecontract(
        dir.path(),
        &["region", "--json", "--problem", "problem2", "--theta", "13/20"],
    );
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["sup_exact"], "144/49");
    assert_eq!(v["config"]["seed"], 42);
    assert_eq!(v["constants"]["provenance"]["mu"], "preset");
}

#[test]
fn config_file_is_read_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"problem": "problem2", "theta": 0.65}"#).unwrap();
    let o = sdecontract(dir.path(), &["region", "--config", cfg.to_str().unwrap()]);
    assert!(stdout(&o).contains("144/49"));
    let o = sdecontract(
        dir.path(),
        &["region", "--config", cfg.to_str().unwrap(), "--theta", "0.5"],
    );
    assert!(stdout(&o).contains("36/25"));

    std::fs::write(&cfg, r#"{"problem": "problem2", "thta": 0.65}"#).unwrap();
    let o = sdecontract(dir.path(), &["region", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown field"));
}

#[test]
fn output_dir_defaults_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_sdecontract"))
        .args(["simulate", "--dt", "1"])
        .env("SDECONTRACT_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("simulate_problem1_maruyama_theta0p5_dt1.csv").exists());
}

#[test]
fn rerun_from_embedded_config_reproduces_files() {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let o = sdecontract(
        first.path(),
        &[
            "experiment",
            "--preset",
            "fig1",
            "--paths",
            "50",
            "--dt",
            "0.5,2",
            "--seed",
            "3",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(first.path().join("fig1_manifest.json")).unwrap()).unwrap();
    let cfg = first.path().join("embedded.json");
    std::fs::write(&cfg, manifest["config"].to_string()).unwrap();
    let o = sdecontract(second.path(), &["experiment", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));

    for name in ["fig1_dt0p5.csv", "fig1_dt2.csv", "fig1_manifest.json"] {
        let a = std::fs::read(first.path().join(name)).unwrap();
        let b = std::fs::read(second.path().join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }

    // A CSV header works as a config too.
    let third = tempfile::tempdir().unwrap();
    let csv = first.path().join("fig1_dt0p5.csv");
    let o = sdecontract(third.path(), &["experiment", "--config", csv.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        std::fs::read(&csv).unwrap(),
        std::fs::read(third.path().join("fig1_dt0p5.csv")).unwrap()
    );
}

#[test]
fn estimate_prints_constants_json() {
    let dir = tempfile::tempdir().unwrap();
    let o = sdecontract(
        dir.path(),
        &["estimate", "--problem", "problem2", "--paths", "200", "--format", "csv"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["provenance"], "estimated");
    let mu = v["mu"].as_f64().unwrap();
    assert!((mu + 5.0).abs() < 1e-12, "{mu}");
    let l = v["L"].as_f64().unwrap();
    assert!((0.95..=1.0).contains(&l), "{l}");
    assert!(v["M_tilde"].is_null());
    assert!(v["box"]["lower"].is_array());
}

#[test]
fn estimated_constants_feed_back_as_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = sdecontract(dir.path(), &["estimate", "--problem", "problem1", "--paths", "200"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let file = dir.path().join("estimate_problem1_maruyama.json");
    assert!(file.exists());
    let o = sdecontract(
        dir.path(),
        &[
            "region",
            "--constants",
            "file",
            "--constants-file",
            file.to_str().unwrap(),
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("(user-supplied)"));
}

#[test]
fn linear_stability_raster() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "linear-stability",
        "--theta",
        "1",
        "--x-range",
        "-4,0",
        "--y-range",
        "0,2",
        "--nx",
        "5",
        "--ny",
        "3",
    ];
    let o = sdecontract(dir.path(), &args);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = dir.path().join("linear_stability_maruyama_theta1.csv");
    assert_eq!(data_rows(&csv), 15);
    let text = std::fs::read_to_string(&csv).unwrap();
    // x = -4, y = 0: factor 1/25 under implicit Euler.
    assert!(text.lines().any(|l| l == "-4.0,0.0,0.04,true"), "{text}");
    // x = 0, y = 2: 1 + 2 = 3, unstable.
    let row = text.lines().find(|l| l.starts_with("0.0,2.0,")).unwrap();
    let cols: Vec<&str> = row.split(',').collect();
    assert!((cols[2].parse::<f64>().unwrap() - 3.0).abs() < 1e-12);
    assert_eq!(cols[3], "false");
}
