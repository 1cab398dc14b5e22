use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn phi4lab(args: &[&str], envs: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_phi4lab"));
    cmd.args(args).env_remove("PHI4_CACHE_DIR");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn out_arg(dir: &TempDir, sub: &str) -> String {
    dir.path().join(sub).to_string_lossy().into_owned()
}

#[test]
fn decompose_smoke_writes_three_payload_files() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", "[lattice]\nd = 4\nl = 2\nn_scales = 2\n");
    let out = out_arg(&dir, "run");
    let o = phi4lab(&["--config", &cfg, "--out", &out, "decompose"], &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["decomposition.bin", "slices.csv", "report.json", "manifest.json"] {
        assert!(Path::new(&out).join(f).exists(), "{f}");
    }
    let manifest = json(&Path::new(&out).join("manifest.json"));
    assert_eq!(manifest["files"].as_array().unwrap().len(), 3);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["code_version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn unreachable_threshold_exits_with_check_failure() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", "[decompose]\nthreshold = 1e-30\n");
    let out = out_arg(&dir, "run");
    let o = phi4lab(&["--config", &cfg, "--out", &out, "decompose"], &[]);
    assert_eq!(o.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&o.stderr);
    let last: serde_json::Value = serde_json::from_str(stderr.lines().last().unwrap()).unwrap();
    assert_eq!(last["error"]["exit_code"], 2);
    assert!(last["error"]["message"].as_str().unwrap().contains("residual"));
    assert_eq!(json(&Path::new(&out).join("report.json"))["passed"], false);
}

#[test]
fn long_range_report_records_neumann_order() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", "[symbol]\neta = 0.5\na_mass = 0.1\na_delta = 0.05\n");
    let out = out_arg(&dir, "run");
    let o = phi4lab(&["--config", &cfg, "--out", &out, "decompose"], &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report = json(&Path::new(&out).join("report.json"));
    assert!(report["neumann_order"].as_u64().unwrap() >= 1);
    assert!(report["residual"].as_f64().unwrap() < 1e-8);
}

#[test]
fn decomposition_cache_is_reused() {
    let dir = TempDir::new().unwrap();
    let cache = dir.path().join("cache");
    let a = out_arg(&dir, "a");
    let b = out_arg(&dir, "b");
    assert_eq!(phi4lab(&["--out", &a, "decompose"], &[("PHI4_CACHE_DIR", &cache)]).status.code(), Some(0));
    assert_eq!(std::fs::read_dir(&cache).unwrap().count(), 1);
    let o = phi4lab(&["--out", &b, "decompose"], &[("PHI4_CACHE_DIR", &cache)]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("cached"));
    let read = |d: &str| std::fs::read(Path::new(d).join("decomposition.bin")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn predict_above_upper_critical_dimension_reports_square_root_growth() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", "[lattice]\nd = 5\n\n[predict]\ng = 0.01\nn_scales = [2, 3, 4]\n");
    let out = out_arg(&dir, "run");
    let o = phi4lab(&["--config", &cfg, "--out", &out, "predict"], &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let p = json(&Path::new(&out).join("predictions.json"));
    assert_eq!(p["chi_exponent"], 0.5);
    assert_eq!(p["upper_critical"], false);
    let chi: Vec<f64> = p["predictions"].as_array().unwrap().iter().map(|r| r["chi_zero"].as_f64().unwrap()).collect();
    for w in chi.windows(2) {
        assert!((w[1] / w[0] - 2f64.powf(2.5)).abs() < 1e-9);
    }
    assert!(Path::new(&out).join("chi_vs_volume.svg").exists());
}

#[test]
fn mc_with_fixed_seed_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", "[mc]\nsweeps = 400\nthermalization = 50\n");
    let runs: Vec<String> = ["a", "b"].iter().map(|s| out_arg(&dir, s)).collect();
    for out in &runs {
        let o = phi4lab(&["--config", &cfg, "--out", out, "--seed", "11", "mc"], &[]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["result.json", "series.csv", "two_point.csv", "histogram.csv", "two_point.svg", "histogram.svg"] {
        let read = |d: &str| std::fs::read(Path::new(d).join(f)).unwrap();
        assert_eq!(read(&runs[0]), read(&runs[1]), "{f}");
    }
    let other = out_arg(&dir, "c");
    phi4lab(&["--config", &cfg, "--out", &other, "--seed", "12", "mc"], &[]);
    let read = |d: &str| std::fs::read(Path::new(d).join("result.json")).unwrap();
    assert_ne!(read(&runs[0]), read(&other));
}

#[test]
fn report_rerenders_identical_charts() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", "[mc]\nsweeps = 200\nthermalization = 20\n");
    let out = out_arg(&dir, "run");
    assert_eq!(phi4lab(&["--config", &cfg, "--out", &out, "mc"], &[]).status.code(), Some(0));
    let before = std::fs::read(Path::new(&out).join("two_point.svg")).unwrap();
    std::fs::remove_file(Path::new(&out).join("two_point.svg")).unwrap();
    assert_eq!(phi4lab(&["--out", &out, "report"], &[]).status.code(), Some(0));
    assert_eq!(std::fs::read(Path::new(&out).join("two_point.svg")).unwrap(), before);

    let empty = out_arg(&dir, "empty");
    std::fs::create_dir_all(&empty).unwrap();
    assert_eq!(phi4lab(&["--out", &empty, "report"], &[]).status.code(), Some(1));
}

#[test]
fn configuration_errors_are_usage_errors() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", "[lattice]\ndimension = 4\n");
    let o = phi4lab(&["--config", &cfg, "decompose"], &[]);
    assert_eq!(o.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_str(String::from_utf8_lossy(&o.stderr).trim()).unwrap();
    assert_eq!(err["error"]["kind"], "usage");

    let missing = dir.path().join("nope.toml");
    assert_eq!(phi4lab(&["--config", missing.to_str().unwrap(), "flow"], &[]).status.code(), Some(1));
    assert_eq!(phi4lab(&["mc", "--bogus"], &[]).status.code(), Some(1));
}

#[test]
fn budget_requires_override() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", "[lattice]\nn_scales = 5\n\n[mc]\nsweeps = 1\nthermalization = 0\n");
    let out = out_arg(&dir, "run");
    let o = phi4lab(&["--config", &cfg, "--out", &out, "mc"], &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("budget"));
}

#[test]
fn printed_defaults_load_in_both_formats() {
    let dir = TempDir::new().unwrap();
    let toml_out = phi4lab(&["--print-config"], &[]);
    assert_eq!(toml_out.status.code(), Some(0));
    let json_out = phi4lab(&["--print-config", "json"], &[]);
    let a = write_config(&dir, "d.toml", &String::from_utf8(toml_out.stdout).unwrap());
    let b = write_config(&dir, "d.json", &String::from_utf8(json_out.stdout).unwrap());
    let again_toml = phi4lab(&["--config", &a, "--print-config"], &[]);
    let again_json = phi4lab(&["--config", &b, "--print-config"], &[]);
    assert_eq!(again_toml.stdout, again_json.stdout);
}
