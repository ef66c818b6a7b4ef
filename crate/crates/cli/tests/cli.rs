use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::Value;

const SPARSE: &str = r#"
seed = 3
preset = "wall_5cm"

[lidar]
kind = "spinning"
beams = 16
vertical_fov_deg = 30.0
horizontal_step_deg = 1.2
points_per_frame = 4800
max_range = 100.0
rosette_rates_hz = [121.6, -77.7]
frame_period = 0.1
"#;

fn nvmap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nvmap"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = nvmap(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR"))
        .join("cli")
        .join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

/// A sparse wall_5cm dataset and the full-method run on it, shared by the tests.
fn fixture() -> &'static (PathBuf, PathBuf, PathBuf) {
    static F: OnceLock<(PathBuf, PathBuf, PathBuf)> = OnceLock::new();
    F.get_or_init(|| {
        let root = scratch("fixture");
        let cfg = root.join("sparse.toml");
        fs::write(&cfg, SPARSE).unwrap();
        let data = root.join("data");
        ok(&["simulate", "--config", s(&cfg), "--out", s(&data)]);
        let run = root.join("run");
        ok(&[
            "run",
            "--dataset",
            s(&data),
            "--config",
            s(&cfg),
            "--out",
            s(&run),
        ]);
        (cfg, data, run)
    })
}

#[test]
fn simulate_writes_matching_scans_and_poses() {
    let (cfg, data, _) = fixture();
    let gt = fs::read_to_string(data.join("gt.txt")).unwrap();
    let n = gt.lines().count();
    assert!(n >= 200);
    assert_eq!(fs::read_dir(data.join("scans")).unwrap().count(), n);
    let meta = json(&data.join("meta.json"));
    assert_eq!(meta["seed"], 3);
    assert_eq!(meta["frames"], n);

    let again = scratch("simulate_again");
    ok(&["simulate", "--config", s(cfg), "--out", s(&again)]);
    assert_eq!(fs::read(again.join("gt.txt")).unwrap(), gt.as_bytes());
    assert_eq!(
        fs::read(again.join("scans/000007.ply")).unwrap(),
        fs::read(data.join("scans/000007.ply")).unwrap()
    );
}

#[test]
fn unknown_preset_lists_the_presets() {
    let out = nvmap(&[
        "simulate",
        "--preset",
        "castle",
        "--out",
        s(&scratch("castle")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("wall_5cm") && err.contains("corridor_loop"),
        "{err}"
    );
}

#[test]
fn full_run_outputs() {
    let (_, _, run) = fixture();
    for f in [
        "trajectory.txt",
        "map.ply",
        "timing.json",
        "report.json",
        "config.toml",
    ] {
        assert!(run.join(f).exists(), "{f}");
    }
    let report = json(&run.join("report.json"));
    assert_eq!(report["failed_frames"].as_array().unwrap().len(), 0);
    assert!(report["ate_rmse_m"].as_f64().unwrap() < 0.1);
    let timing = json(&run.join("timing.json"));
    for k in [
        "map_update",
        "optimize",
        "pose_estimate",
        "process_measurement",
        "total",
    ] {
        assert!(timing[k].as_f64().unwrap() >= 0.0, "{k}");
    }
}

#[test]
fn config_echo_reproduces_the_run() {
    let (_, data, run) = fixture();
    let again = scratch("rerun");
    ok(&[
        "run",
        "--dataset",
        s(data),
        "--config",
        s(&run.join("config.toml")),
        "--out",
        s(&again),
    ]);
    for f in ["trajectory.txt", "map.ply", "report.json", "config.toml"] {
        assert_eq!(
            fs::read(run.join(f)).unwrap(),
            fs::read(again.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn dual_side_off_stores_one_side() {
    let (cfg, data, _) = fixture();
    let out = scratch("single");
    ok(&[
        "run",
        "--dataset",
        s(data),
        "--config",
        s(cfg),
        "--out",
        s(&out),
        "--dual-side=off",
        "--normal-gate=off",
    ]);
    let points = nvmap::ply::read_map(&out.join("map.ply")).unwrap();
    assert!(!points.is_empty());
    assert!(points.iter().all(|p| p.side.label() == 0));
    let echo = fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(echo.contains("dual_side = \"off\""), "{echo}");
}

#[test]
fn eval_trajectory_and_regions() {
    let (_, data, run) = fixture();
    let gt = data.join("gt.txt");
    let out = scratch("eval");
    let metrics = out.join("m.json");
    let stdout = ok(&[
        "eval",
        "--est",
        s(&gt),
        "--gt",
        s(&gt),
        "--out",
        s(&metrics),
    ])
    .stdout;
    assert!(String::from_utf8_lossy(&stdout).contains("ate_rmse"));
    assert!(json(&metrics)["ate_rmse_m"].as_f64().unwrap() < 1e-9);

    ok(&[
        "eval",
        "--map",
        s(&run.join("map.ply")),
        "--regions",
        s(&data.join("regions.json")),
        "--timing",
        s(&run.join("timing.json")),
        "--out",
        s(&metrics),
    ]);
    let m = json(&metrics);
    let rec = &m["per_region_thickness"][0];
    assert!(
        rec["percent_change"].as_f64().unwrap().abs() <= 10.0,
        "{rec}"
    );
    assert!(m["timing"]["total"].as_f64().is_some());

    let far = out.join("far.json");
    fs::write(
        &far,
        r#"[{"id": "nowhere", "selector": {"center": [50.0, 50.0, 0.0], "half_extents": [0.5, 1.0, 1.0]}, "truth_thickness": 0.05}]"#,
    )
    .unwrap();
    let res = nvmap(&[
        "eval",
        "--map",
        s(&run.join("map.ply")),
        "--regions",
        s(&far),
    ]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("nowhere"));
}

#[test]
fn eval_without_overlap_fails() {
    let (_, data, _) = fixture();
    let dir = scratch("eval_shift");
    let shifted = dir.join("late.txt");
    let gt = fs::read_to_string(data.join("gt.txt")).unwrap();
    let late: String = gt
        .lines()
        .map(|l| {
            let (t, rest) = l.split_once(' ').unwrap();
            format!("{:.6} {rest}\n", t.parse::<f64>().unwrap() + 1000.0)
        })
        .collect();
    fs::write(&shifted, late).unwrap();
    let res = nvmap(&[
        "eval",
        "--est",
        s(&shifted),
        "--gt",
        s(&data.join("gt.txt")),
    ]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn ablate_reports_variants_and_lru_timing() {
    let (cfg, data, _) = fixture();
    let out = scratch("ablate");
    ok(&[
        "ablate",
        "--dataset",
        s(data),
        "--config",
        s(cfg),
        "--out",
        s(&out),
        "--variants",
        "full,no_lru",
    ]);
    let c = json(&out.join("comparison.json"));
    let names: Vec<&str> = c["variants"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v["name"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["full", "no_lru"]);
    assert_eq!(c["pairwise"][0]["variant"], "no_lru");
    assert!(c["map_update_ratio"].as_f64().unwrap() > 0.0);
    assert!(c["lru_timing"]["percent_change"]["map_update"].is_number());
    let t_full = fs::read(out.join("full/trajectory.txt")).unwrap();
    let t_nolru = fs::read(out.join("no_lru/trajectory.txt")).unwrap();
    // Capacity is never reached here, so retention cannot change the estimate.
    assert_eq!(t_full, t_nolru);

    let bad = nvmap(&[
        "ablate",
        "--dataset",
        s(data),
        "--out",
        s(&out),
        "--variants",
        "full,no_map",
    ]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn export_ply_writes_normals() {
    let (_, data, _) = fixture();
    let out = scratch("export").join("f3.ply");
    ok(&[
        "export-ply",
        "--dataset",
        s(data),
        "--frame",
        "3",
        "--out",
        s(&out),
    ]);
    let t = nvmap::ply::PlyTable::read(&out).unwrap();
    assert!(t.column("nx").is_ok() && t.column("valid").is_ok());
    assert!(!t.rows.is_empty());
    assert_eq!(
        nvmap(&[
            "export-ply",
            "--dataset",
            s(data),
            "--frame",
            "100000",
            "--out",
            s(&out)
        ])
        .status
        .code(),
        Some(1)
    );
}

#[test]
fn user_errors_exit_with_one() {
    let dir = scratch("errors");
    assert_eq!(nvmap(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        nvmap(&[
            "run",
            "--dataset",
            s(&dir),
            "--out",
            s(&dir),
            "--dual-side=maybe"
        ])
        .status
        .code(),
        Some(1)
    );
    assert_eq!(
        nvmap(&[
            "run",
            "--dataset",
            s(&dir.join("missing")),
            "--out",
            s(&dir)
        ])
        .status
        .code(),
        Some(1)
    );
    let cfg = dir.join("typo.toml");
    fs::write(&cfg, "[ablation]\ndual_sided = \"off\"\n").unwrap();
    let res = nvmap(&["simulate", "--config", s(&cfg), "--out", s(&dir)]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("dual_sided"));
    assert_eq!(nvmap(&["eval"]).status.code(), Some(1));
    assert_eq!(nvmap(&["--help"]).status.code(), Some(0));
}
