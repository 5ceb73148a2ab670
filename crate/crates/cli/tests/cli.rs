use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};
use sqlink::{gaussian_to_fock, GaussianDarkPlaneState};
use tempfile::TempDir;

fn sqlink(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sqlink"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, value: Value) {
    fs::write(dir.join(name), value.to_string()).unwrap();
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn simulate_is_deterministic() {
    let dir = TempDir::new().unwrap();
    for out in ["a", "b"] {
        let o = sqlink(dir.path(), &["simulate", "--seed", "1", "--out", out]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["records.csv", "records.meta.json"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(f)).unwrap(),
            fs::read(dir.path().join("b").join(f)).unwrap()
        );
    }
    let o = sqlink(dir.path(), &["simulate", "--seed", "2", "--out", "c"]);
    assert!(o.status.success());
    assert_ne!(
        fs::read(dir.path().join("a/records.csv")).unwrap(),
        fs::read(dir.path().join("c/records.csv")).unwrap()
    );
}

#[test]
fn zero_samples_is_a_validation_error() {
    let dir = TempDir::new().unwrap();
    write_config(
        dir.path(),
        "c.json",
        json!({"simulation": {"samples_per_T": 0}}),
    );
    let o = sqlink(dir.path(), &["--config", "c.json", "simulate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).contains("simulation.samples_per_T"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn malformed_config_and_arguments_exit_2() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("c.json"), "{ not json").unwrap();
    assert_eq!(
        sqlink(dir.path(), &["--config", "c.json", "simulate"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        sqlink(dir.path(), &["simulate", "--bogus"]).status.code(),
        Some(2)
    );
    assert_eq!(
        sqlink(dir.path(), &["bin", "missing.csv"]).status.code(),
        Some(1)
    );
}

#[test]
fn constant_channel_row_count() {
    let dir = TempDir::new().unwrap();
    write_config(
        dir.path(),
        "c.json",
        json!({
            "channel": {"kind": "constant", "value": 0.552},
            "simulation": {"draws": 1, "samples_per_T": 315000, "angles_deg": [0]}
        }),
    );
    let o = sqlink(dir.path(), &["--config", "c.json", "simulate"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("records.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("T,theta_rad,ac_diff,ac_sum,dc_sum"));
    assert_eq!(lines.count(), 315_000);
}

#[test]
fn binning_shows_enhancement_and_squeezed_curvature() {
    let dir = TempDir::new().unwrap();
    assert!(sqlink(dir.path(), &["simulate"]).status.success());
    let o = sqlink(dir.path(), &["bin", "records.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let fit = read_json(&dir.path().join("fit.json"));
    assert!(fit["fit"]["b_diff"].as_f64().unwrap() < 0.0);
    let best = fit["best_bin"]["squeezing_dB"].as_f64().unwrap();
    let agg = fit["aggregate"]["squeezing_dB"].as_f64().unwrap();
    assert!(best < agg, "best {best} vs aggregate {agg}");
    let table = fs::read_to_string(dir.path().join("bin_statistics.csv")).unwrap();
    assert!(table.starts_with(
        "t_center,n_samples,mean_var_diff,stddev_diff,mean_var_sum,stddev_sum,squeezing_dB\n"
    ));
    let hist = fs::read_to_string(dir.path().join("transmission_histogram.csv")).unwrap();
    let mass: f64 = hist
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap() * 0.0019)
        .sum();
    assert!((mass - 1.0).abs() < 1e-9);
    for f in ["fit", "bin_statistics", "transmission_histogram"] {
        assert!(dir.path().join(format!("{f}.meta.json")).exists());
    }
}

#[test]
fn vacuum_input_shows_no_squeezing() {
    let dir = TempDir::new().unwrap();
    write_config(
        dir.path(),
        "c.json",
        json!({"state": {"sq_dB": 0.0, "antisq_dB": 0.0}}),
    );
    assert!(sqlink(dir.path(), &["--config", "c.json", "simulate"])
        .status
        .success());
    let o = sqlink(dir.path(), &["--config", "c.json", "bin", "records.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let agg = &read_json(&dir.path().join("fit.json"))["aggregate"];
    let (db, se) = (
        agg["squeezing_dB"].as_f64().unwrap(),
        agg["stderr_dB"].as_f64().unwrap(),
    );
    assert!(db.abs() < 4.0 * se, "{db} ± {se}");
}

#[test]
fn empty_after_discard_is_a_runtime_error_with_guidance() {
    let dir = TempDir::new().unwrap();
    write_config(
        dir.path(),
        "c.json",
        json!({"protocol": {"min_samples": 10000000}}),
    );
    assert!(sqlink(dir.path(), &["--config", "c.json", "simulate"])
        .status
        .success());
    let o = sqlink(dir.path(), &["--config", "c.json", "bin", "records.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("min_samples"), "{}", stderr(&o));
}

#[test]
fn config_hash_mismatch_is_rejected() {
    let dir = TempDir::new().unwrap();
    assert!(sqlink(dir.path(), &["simulate"]).status.success());
    write_config(
        dir.path(),
        "c.json",
        json!({"protocol": {"block_size": 5000}}),
    );
    let o = sqlink(dir.path(), &["--config", "c.json", "bin", "records.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("config hash mismatch"));
}

#[test]
fn missing_angle_group_is_named() {
    let dir = TempDir::new().unwrap();
    write_config(
        dir.path(),
        "sim.json",
        json!({"tomography": {"angles_deg": [0, 45, 90], "samples_per_angle": 2000}}),
    );
    assert!(
        sqlink(dir.path(), &["--config", "sim.json", "simulate", "--scan"])
            .status
            .success()
    );
    fs::remove_file(dir.path().join("records.meta.json")).unwrap();
    write_config(
        dir.path(),
        "tomo.json",
        json!({"tomography": {"angles_deg": [0, 30, 90], "dim": 20, "photon_cut": 15}}),
    );
    let o = sqlink(
        dir.path(),
        &["--config", "tomo.json", "tomo", "records.csv"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("30 deg"), "{}", stderr(&o));
}

#[test]
fn tomography_pipeline_report() {
    let dir = TempDir::new().unwrap();
    write_config(
        dir.path(),
        "c.json",
        json!({"tomography": {"samples_per_angle": 20000}}),
    );
    assert!(
        sqlink(dir.path(), &["--config", "c.json", "simulate", "--scan"])
            .status
            .success()
    );
    let o = sqlink(dir.path(), &["--config", "c.json", "tomo", "records.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = read_json(&dir.path().join("report.json"));
    assert_eq!(report["n_angles"], 56);
    assert_eq!(report["rho"]["dim"], 54);
    let purity = report["purity"].as_f64().unwrap();
    assert!((purity - report["reference"]["gaussian_purity"].as_f64().unwrap()).abs() < 0.03);
    assert!(report["truncation"]["pass"].is_boolean());
    for k in ["even_even_weight", "odd_odd_weight", "mixed_parity_weight"] {
        assert!(report["parity"][k].as_f64().unwrap() >= 0.0);
    }
    let set = read_json(&dir.path().join("tomograms.json"));
    assert_eq!(set["angles_deg"].as_array().unwrap().len(), 56);
    assert_eq!(set["edges"].as_array().unwrap().len(), 252);
    assert_eq!(set["counts"][0].as_array().unwrap().len(), 253);

    // the written tomogram set feeds back in unchanged once reduced to [0, 90]
    let mut half = set.clone();
    let keep: Vec<usize> = (0..56)
        .filter(|&i| set["angles_deg"][i].as_f64().unwrap() <= 90.0 + 1e-9)
        .collect();
    half["angles_deg"] = keep.iter().map(|&i| set["angles_deg"][i].clone()).collect();
    half["counts"] = keep.iter().map(|&i| set["counts"][i].clone()).collect();
    fs::create_dir(dir.path().join("again")).unwrap();
    fs::write(dir.path().join("again/half.json"), half.to_string()).unwrap();
    let o = sqlink(
        dir.path(),
        &[
            "--config",
            "c.json",
            "tomo",
            "--tomograms",
            "again/half.json",
            "--out",
            "again",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    // angles pass through degrees on disk, so agreement is to rounding
    let (a, b) = (
        read_json(&dir.path().join("again/rho.json")),
        read_json(&dir.path().join("rho.json")),
    );
    for part in ["re", "im"] {
        let flat = |v: &Value| -> Vec<f64> {
            v[part]
                .as_array()
                .unwrap()
                .iter()
                .flat_map(|r| r.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()))
                .collect()
        };
        let worst = flat(&a)
            .iter()
            .zip(flat(&b))
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-10, "{part} differs by {worst}");
    }
}

#[test]
fn exact_tomography_then_wigner_contours() {
    let dir = TempDir::new().unwrap();
    let o = sqlink(dir.path(), &["tomo", "--exact"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = read_json(&dir.path().join("report.json"));
    assert!(report["reference"]["fidelity"].as_f64().unwrap() >= 0.999);
    assert_eq!(report["log_likelihood_monotone"], true);

    let o = sqlink(dir.path(), &["wigner", "rho.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = read_json(&dir.path().join("contours.json"));
    let s = &summary["state"];
    let v = &summary["vacuum"];
    // squeezed axis is x in the reconstruction frame
    assert!(s["half_extent_x"].as_f64().unwrap() < v["half_extent_x"].as_f64().unwrap());
    assert!(s["half_extent_p"].as_f64().unwrap() > v["half_extent_p"].as_f64().unwrap());
    let csv = fs::read_to_string(dir.path().join("contours.csv")).unwrap();
    assert!(
        csv.lines().skip(1).any(|l| l.starts_with("state,"))
            && csv.lines().any(|l| l.starts_with("vacuum,"))
    );
    let grid = fs::read_to_string(dir.path().join("wigner.csv")).unwrap();
    assert_eq!(grid.lines().count(), 202);
}

#[test]
fn vacuum_contour_radius() {
    let dir = TempDir::new().unwrap();
    let vacuum = gaussian_to_fock(&GaussianDarkPlaneState::vacuum(), 8).unwrap();
    fs::write(
        dir.path().join("vac.json"),
        serde_json::to_string(&vacuum.to_json()).unwrap(),
    )
    .unwrap();
    let o = sqlink(dir.path(), &["wigner", "vac.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = read_json(&dir.path().join("contours.json"));
    let step = 2.0 * summary["grid"]["x_max"].as_f64().unwrap() / 200.0;
    let csv = fs::read_to_string(dir.path().join("contours.csv")).unwrap();
    for line in csv.lines().skip(1).filter(|l| l.starts_with("state,")) {
        let f: Vec<f64> = line
            .split(',')
            .skip(2)
            .map(|x| x.parse().unwrap())
            .collect();
        // 1/e level of a vacuum of unit variance per axis
        assert!((f[0].hypot(f[1]) - 2f64.sqrt()).abs() < step, "{line}");
    }
}

#[test]
fn invalid_density_matrix_is_rejected() {
    let dir = TempDir::new().unwrap();
    let id = json!({"dim": 2, "re": [[1.0, 0.0], [0.0, 1.0]], "im": [[0.0, 0.0], [0.0, 0.0]]});
    fs::write(dir.path().join("bad.json"), id.to_string()).unwrap();
    let o = sqlink(dir.path(), &["wigner", "bad.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("invariant"), "{}", stderr(&o));
}
