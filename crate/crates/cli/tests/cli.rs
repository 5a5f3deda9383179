use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn nvcav(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nvcav"))
        .args(args)
        .arg("--out")
        .arg(out)
        .arg("--workers")
        .arg("2")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn default_odmr_curve_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = nvcav(&["odmr"], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("odmr.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("detuning_hz,observable"));
    assert_eq!(lines.count(), 401);
    let c = json(&out.join("metrics.json"))["metrics"]["contrast"].as_f64().unwrap();
    assert!((c - 0.58).abs() <= 0.05, "contrast {c}");
    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["command"], "odmr");
    assert_eq!(manifest["files"].as_array().unwrap().len(), 2);
}

#[test]
fn malformed_config_leaves_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    for text in [
        "[cavity\nR1 = 0.9",
        "[cavity]\nlength_m = 1e-3\n",
        "[cavity]\nR1 = 1.5\n",
    ] {
        let cfg = write_config(dir.path(), text);
        let o = nvcav(&["odmr", "--config", &cfg], &out);
        assert_eq!(o.status.code(), Some(2), "{text}");
        assert!(!String::from_utf8_lossy(&o.stderr).is_empty());
        assert!(!out.exists());
    }
}

#[test]
fn saturation_scan_needs_fluorescence() {
    let dir = tempfile::tempdir().unwrap();
    let o = nvcav(&["odmr", "--saturation-scan"], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn single_point_sweep_matches_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[cavity]\nl_c_m = 2e-5\n[sweep]\naxes = [{ parameter = \"l_c_m\", start = 2e-5, stop = 2e-5, points = 1 }]\n",
    );
    let (ev, sw) = (dir.path().join("ev"), dir.path().join("sw"));
    assert_eq!(nvcav(&["evaluate", "--config", &cfg], &ev).status.code(), Some(0));
    assert_eq!(nvcav(&["sweep", "--config", &cfg], &sw).status.code(), Some(0));

    let result = json(&ev.join("evaluation.json"));
    let csv = std::fs::read_to_string(sw.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "x,delta_B,delta_B_spin,I_cir,saturation_ok,spin_noise_ok,failure"
    );
    assert_eq!(lines.len(), 2);
    let row: Vec<&str> = lines[1].split(',').collect();
    let f = |i: usize| row[i].parse::<f64>().unwrap();
    assert_eq!(f(1), result["delta_b"].as_f64().unwrap());
    assert_eq!(f(2), result["delta_b_spin"].as_f64().unwrap());
    assert_eq!(f(3), result["circulating_intensity"].as_f64().unwrap());
    assert_eq!(row[4], result["saturation_ok"].to_string());
    assert_eq!(row[5], result["spin_noise_ok"].to_string());
}

#[test]
fn grid_sweep_with_series_counts_every_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
[evaluation]
points = 101
[sweep]
axes = [
    { parameter = "R1", start = 0.9, stop = 0.99, points = 2 },
    { parameter = "P_in_W", start = 0.01, stop = 1.0, points = 3, scale = "log" },
]
[[sweep.series]]
name = "short"
set = { l_c_m = 1e-5 }
[[sweep.series]]
name = "long"
set = { l_c_m = 1e-4 }
"#,
    );
    let out = dir.path().join("out");
    let o = nvcav(&["sweep", "--config", &cfg], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("series,x,y,delta_B"));
    assert_eq!(lines.len(), 1 + 2 * 2 * 3);
    assert!(lines[1].starts_with("short,") && lines[12].starts_with("long,"));
    let summary = &json(&out.join("manifest.json"))["summary"];
    let counted = ["feasible", "infeasible", "failed"]
        .iter()
        .map(|k| summary[k].as_u64().unwrap())
        .sum::<u64>();
    assert_eq!(counted, 12);
}

#[test]
fn unknown_sweep_parameter_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[sweep]\naxes = [{ parameter = \"finesse\", start = 1, stop = 2, points = 2 }]\n",
    );
    let o = nvcav(&["sweep", "--config", &cfg], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("finesse"));
}

const SMALL_SEARCH: &str = "[evaluation]\npoints = 101\n[optimizer]\npopulation_size = 8\nmax_generations = 2\n";

#[test]
fn optimize_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_SEARCH);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = nvcav(&["optimize", "--config", &cfg, "--seed", "5"], out);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for file in ["optimization.json", "history.csv"] {
        assert_eq!(
            std::fs::read(a.join(file)).unwrap(),
            std::fs::read(b.join(file)).unwrap(),
            "{file}"
        );
    }
    let history = std::fs::read_to_string(a.join("history.csv")).unwrap();
    assert!(history.starts_with("generation,best,mean,evals\n"));
}

#[test]
fn inverted_bounds_are_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!("{SMALL_SEARCH}[optimizer.bounds]\nl_c_m = {{ lower = 1e-2, upper = 1e-7, scale = \"log\" }}\n"),
    );
    let o = nvcav(&["optimize", "--config", &cfg], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("l_c_m"));
}

#[test]
fn validation_detects_perturbed_cross_section() {
    let dir = tempfile::tempdir().unwrap();
    let sigma = nvcav::validation::CALIBRATED_SIGMA_NV * 10.0;
    let cfg = write_config(dir.path(), &format!("[validation]\nsigma_NV_m2 = {sigma:e}\n"));
    let out = dir.path().join("out");
    let o = nvcav(&["validate", "--config", &cfg], &out);
    assert_eq!(o.status.code(), Some(1));
    let report = json(&out.join("validation.json"));
    let long = report["items"]
        .as_array()
        .unwrap()
        .iter()
        .find(|i| i["name"] == "long_cavity_delta_b")
        .unwrap();
    assert_eq!(long["passed"], false);
    assert_eq!(report["setup"]["sigma_nv"].as_f64().unwrap(), sigma);
    assert!(out.join("manifest.json").exists());
}

#[test]
fn default_validation_reports_every_item() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = nvcav(&["validate"], &out);
    let stdout = String::from_utf8_lossy(&o.stdout);
    let report = json(&out.join("validation.json"));
    let items = report["items"].as_array().unwrap();
    assert_eq!(items.len(), 5);
    assert_eq!(
        stdout
            .lines()
            .filter(|l| l.starts_with("PASS") || l.starts_with("FAIL"))
            .count(),
        5
    );
    // the exit code follows the report
    let all = items.iter().all(|i| i["passed"] == true);
    assert_eq!(o.status.code(), Some(if all { 0 } else { 1 }));
    assert!(report["setup"]["thin_cavity"]["R1"].is_number());
}
