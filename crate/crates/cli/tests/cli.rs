//! The `voxwind` binary: outputs, exit codes and config handling.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use voxwind::nn::Checkpoint;
use voxwind::ppo::{TraceRow, TRACE_HEADER};
use voxwind::report::parse_comparison_table;
use voxwind::voxel::pgm::{encode, PgmImage};
use voxwind::voxel::{PgmFormat, VoxelGrid};
use voxwind::windtunnel::{Heatmap, SimResult};
use voxwind_cli::RunConfig;

fn desk_json() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.json")
}

fn voxwind(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_voxwind"))
        .args(args)
        .env("VOXWIND_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Writes the desk config with `ppo.max_training_steps` replaced.
fn desk_with_steps(dir: &Path, steps: usize) -> PathBuf {
    let mut doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(desk_json()).unwrap()).unwrap();
    doc["ppo"]["max_training_steps"] = steps.into();
    doc["ppo"]["buffer_size"] = 32.into();
    doc["ppo"]["batch_size"] = 16.into();
    let path = dir.join(format!("desk_{steps}.json"));
    std::fs::write(&path, doc.to_string()).unwrap();
    path
}

fn write_pgm(path: &Path, width: usize, height: usize, pixels: Vec<u16>) {
    let img = PgmImage {
        width,
        height,
        maxval: 255,
        pixels,
    };
    std::fs::write(path, encode(&img, PgmFormat::Ascii)).unwrap();
}

#[test]
fn voxelize_flat_map_and_round_trip() {
    let dir = TempDir::new().unwrap();
    write_pgm(&dir.path().join("flat.pgm"), 3, 2, vec![0; 6]);
    let out = voxwind(&[
        "voxelize",
        "--input",
        p(&dir.path().join("flat.pgm")),
        "--h-max",
        "8",
        "--voxel-size",
        "0.1",
        "--out",
        p(&dir.path().join("flat.csv")),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("H_s = 0"));

    let pixels = vec![0, 51, 102, 153, 204, 255];
    write_pgm(&dir.path().join("ramp.pgm"), 3, 2, pixels.clone());
    let grid_path = dir.path().join("ramp.csv");
    let out = voxwind(&[
        "voxelize",
        "--input",
        p(&dir.path().join("ramp.pgm")),
        "--h-max",
        "10",
        "--voxel-size",
        "0.05",
        "--out",
        p(&grid_path),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let grid = VoxelGrid::from_csv(&std::fs::read_to_string(&grid_path).unwrap()).unwrap();
    let want: Vec<u32> = pixels
        .iter()
        .map(|&v| (f64::from(v) / 255.0 * 10.0).round() as u32)
        .collect();
    assert_eq!(grid.heights(), want.as_slice());
    assert_eq!(grid.voxel_size(), 0.05);
}

#[test]
fn voxelize_rejects_malformed_input() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.pgm");
    std::fs::write(&bad, "P2\n2 2\n255\n1 2 3\n").unwrap();
    let out = voxwind(&[
        "voxelize",
        "--input",
        p(&bad),
        "--h-max",
        "4",
        "--voxel-size",
        "0.1",
        "--out",
        p(&dir.path().join("g.csv")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("byte"));
}

fn flat_grid(dir: &Path) -> PathBuf {
    let path = dir.join("flat.csv");
    let grid = VoxelGrid::new(16, 16, 16, 0.1, vec![0; 256]).unwrap();
    std::fs::write(&path, grid.to_csv()).unwrap();
    path
}

#[test]
fn simulate_outputs_and_validation() {
    let dir = TempDir::new().unwrap();
    let grid = flat_grid(dir.path());

    let empty = dir.path().join("empty.json");
    std::fs::write(
        &empty,
        r#"{"tunnel": {"particle_count": 0, "domain_size": [3.2, 1.6, 2.0]}}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("sim0");
    let out = voxwind(&[
        "simulate",
        "--grid",
        p(&grid),
        "--config",
        p(&empty),
        "--out",
        p(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics =
        SimResult::metrics_from_csv(&std::fs::read_to_string(out_dir.join("sim_result.csv")).unwrap()).unwrap();
    assert_eq!(metrics, [0.0; 4]);
    let heatmap = Heatmap::from_csv(&std::fs::read_to_string(out_dir.join("heatmap.csv")).unwrap()).unwrap();
    assert_eq!(heatmap.total(), 0);
    assert!(out_dir.join("heatmap.pgm").is_file());

    let fast = dir.path().join("fast.json");
    std::fs::write(&fast, r#"{"tunnel": {"air_speed": 130}}"#).unwrap();
    let out = voxwind(&[
        "simulate",
        "--grid",
        p(&grid),
        "--config",
        p(&fast),
        "--out",
        p(&dir.path().join("x")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tunnel.air_speed"));

    let typo = dir.path().join("typo.json");
    std::fs::write(&typo, r#"{"tunnel": {"air_sped": 50}}"#).unwrap();
    let out = voxwind(&[
        "simulate",
        "--grid",
        p(&grid),
        "--config",
        p(&typo),
        "--out",
        p(&dir.path().join("y")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("air_sped"));

    let out = voxwind(&[
        "simulate",
        "--grid",
        p(&dir.path().join("missing.csv")),
        "--out",
        p(&dir.path().join("z")),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_echo_holds_the_effective_config() {
    let dir = TempDir::new().unwrap();
    let grid = flat_grid(dir.path());
    let out_dir = dir.path().join("sim");
    let out = voxwind(&[
        "simulate",
        "--grid",
        p(&grid),
        "--config",
        p(&desk_json()),
        "--out",
        p(&out_dir),
        "--seed",
        "41",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let echoed: RunConfig =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("config.json")).unwrap()).unwrap();
    assert_eq!(echoed.seed, Some(41));
    assert_eq!(echoed.tunnel.seed, 41);
    assert_eq!(echoed.ppo.seed, 41);
    assert_eq!(echoed.tunnel.particle_count, 128);
    // Defaults are written out explicitly.
    assert_eq!(echoed.ppo.epochs, 5);
    assert_eq!(echoed.env.weights.w_h, 0.1);
}

#[test]
fn train_with_no_steps_keeps_the_initial_checkpoint() {
    let dir = TempDir::new().unwrap();
    let config = desk_with_steps(dir.path(), 0);
    let out_dir = dir.path().join("run");
    let out = voxwind(&["train", "--config", p(&config), "--out", p(&out_dir)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let after = out_dir.join("after/ke_df_vcc");
    let ckpts: Vec<_> = std::fs::read_dir(after.join("checkpoints")).unwrap().collect();
    assert_eq!(ckpts.len(), 1);
    let ckpt =
        Checkpoint::from_json(&std::fs::read_to_string(after.join("checkpoints/ckpt_000000.json")).unwrap()).unwrap();
    assert_eq!(ckpt.env_steps, 0);
    assert_eq!(
        std::fs::read_to_string(after.join("trace.csv")).unwrap(),
        format!("{TRACE_HEADER}\n")
    );
}

#[test]
fn train_smoke_run_outputs_parse() {
    let dir = TempDir::new().unwrap();
    let config = desk_with_steps(dir.path(), 50);
    let out_dir = dir.path().join("run");
    let out = voxwind(&["train", "--config", p(&config), "--mode", "ke", "--out", p(&out_dir)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let after = out_dir.join("after/ke");
    let trace = std::fs::read_to_string(after.join("trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next(), Some(TRACE_HEADER));
    let rows: Vec<TraceRow> = lines.map(|l| TraceRow::parse_csv_line(l).unwrap()).collect();
    assert_eq!(rows.len(), 50);
    assert_eq!(
        rows.iter().map(|r| r.step).collect::<Vec<_>>(),
        (1..=50).collect::<Vec<_>>()
    );

    for dir in [out_dir.join("before"), after.clone()] {
        SimResult::metrics_from_csv(&std::fs::read_to_string(dir.join("sim_result.csv")).unwrap()).unwrap();
        Heatmap::from_csv(&std::fs::read_to_string(dir.join("heatmap.csv")).unwrap()).unwrap();
        VoxelGrid::from_csv(&std::fs::read_to_string(dir.join("grid.csv")).unwrap()).unwrap();
        serde_json::from_str::<RunConfig>(&std::fs::read_to_string(dir.join("config.json")).unwrap()).unwrap();
    }
    Checkpoint::from_json(&std::fs::read_to_string(after.join("checkpoint.json")).unwrap()).unwrap();
    assert!(after.join("heatmap_pair_before.pgm").is_file());
    assert!(after.join("heatmap_pair_after.pgm").is_file());

    // The same checkpoint replayed by `evaluate` reproduces the optimised design.
    let eval_dir = dir.path().join("eval");
    let out = voxwind(&[
        "evaluate",
        "--checkpoint",
        p(&after.join("checkpoint.json")),
        "--config",
        p(&config),
        "--out",
        p(&eval_dir),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        std::fs::read(eval_dir.join("grid.csv")).unwrap(),
        std::fs::read(after.join("grid.csv")).unwrap()
    );
}

#[test]
fn evaluate_rejects_mismatched_checkpoints() {
    let dir = TempDir::new().unwrap();
    let config = desk_with_steps(dir.path(), 0);
    let out_dir = dir.path().join("run");
    assert_eq!(
        voxwind(&["train", "--config", p(&config), "--out", p(&out_dir)])
            .status
            .code(),
        Some(0)
    );
    let other = dir.path().join("other.json");
    let mut doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&config).unwrap()).unwrap();
    doc["env"]["control_grid"] = serde_json::json!([2, 2]);
    std::fs::write(&other, doc.to_string()).unwrap();
    let ckpt = out_dir.join("after/ke_df_vcc/checkpoint.json");
    let out = voxwind(&[
        "evaluate",
        "--checkpoint",
        p(&ckpt),
        "--config",
        p(&other),
        "--out",
        p(&dir.path().join("e")),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

fn write_result(dir: &Path, metrics: [f64; 4]) {
    std::fs::create_dir_all(dir).unwrap();
    let result = SimResult {
        drag_force: metrics[0],
        kinetic_energy: metrics[1],
        collision_count: metrics[2],
        heightmap_sum: metrics[3],
        heatmap: Heatmap::new(1, 1),
    };
    std::fs::write(dir.join("sim_result.csv"), result.to_csv()).unwrap();
}

#[test]
fn report_from_directories() {
    let dir = TempDir::new().unwrap();
    let before = dir.path().join("before");
    write_result(&before, [2004.63, 283.60, 12.0, 400.0]);

    let table = dir.path().join("same.csv");
    let out = voxwind(&[
        "report",
        "--before",
        p(&before),
        "--after",
        p(&before),
        "--out",
        p(&table),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&table).unwrap();
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!([cols[4], cols[6], cols[8]], ["0.00"; 3], "{line}");
    }

    let after = dir.path().join("after");
    write_result(&after.join("ke"), [1786.41, 371.41, 12.0, 400.0]);
    write_result(&after.join("ke_df"), [1752.57, 391.16, 12.0, 400.0]);
    write_result(&after.join("ke_df_vcc"), [1716.85, 402.78, 12.0, 400.0]);
    let table = dir.path().join("f1.csv");
    let out = voxwind(&[
        "report",
        "--before",
        p(&before),
        "--after",
        p(&after),
        "--out",
        p(&table),
        "--car",
        "f1",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&table).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[1],
        "f1,drag_force,2004.63,1786.41,-10.89,1752.57,-12.57,1716.85,-14.36"
    );
    assert_eq!(
        lines[2],
        "f1,kinetic_energy,283.60,371.41,30.96,391.16,37.93,402.78,42.02"
    );
    assert_eq!(parse_comparison_table(&text).unwrap().len(), 4);

    let out = voxwind(&[
        "report",
        "--before",
        p(&before),
        "--after",
        p(&dir.path().join("gone")),
        "--out",
        p(&table),
    ]);
    assert_eq!(out.status.code(), Some(5));
    std::fs::remove_dir_all(after.join("ke_df")).unwrap();
    let out = voxwind(&[
        "report",
        "--before",
        p(&before),
        "--after",
        p(&after),
        "--out",
        p(&table),
    ]);
    assert_eq!(out.status.code(), Some(5));
}

#[test]
fn thread_cap_must_be_positive() {
    let dir = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_voxwind"))
        .args([
            "simulate",
            "--grid",
            p(&flat_grid(dir.path())),
            "--out",
            p(&dir.path().join("s")),
        ])
        .env("VOXWIND_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}
