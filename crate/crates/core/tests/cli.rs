//! The command-line surface and the files it writes.

use std::path::Path;
use std::process::{Command, Output};

use growthopt::config::parse_config;
use growthopt::evolution::read_checkpoint;
use growthopt::output::{read_metrics_csv, read_vtk, CELL_FIELDS, CSV_COLUMNS};

fn growthopt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_growthopt")).args(args).output().unwrap()
}

fn preset(name: &str) -> String {
    format!("{}/../../presets/{name}.cfg", env!("CARGO_MANIFEST_DIR"))
}

fn write_cfg(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn csv_without_timing(path: &Path) -> Vec<Vec<String>> {
    let wall = CSV_COLUMNS.iter().position(|c| *c == "wall_ms").unwrap();
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').enumerate().filter(|(i, _)| *i != wall).map(|(_, f)| f.to_string()).collect())
        .collect()
}

#[test]
fn validate_rejects_unknown_keys_with_their_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "bad.cfg", "preset = \"cantilever\"\n[solver]\ninv2tau = 10\nspeed = 3\n");
    let out = growthopt(&["validate", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("solver.speed"));
}

#[test]
fn validate_prints_a_resolved_document() {
    let out = growthopt(&["validate", &preset("cantilever")]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let sc = parse_config(&text).unwrap();
    assert_eq!(sc.load, 5e-4);
    assert_eq!(sc.n_iter, 30);
}

#[test]
fn run_writes_metrics_snapshots_and_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let o = growthopt(&["run", &preset("doubly_clamped"), "--solver", "analytic", "--out", out_a.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let rows = read_metrics_csv(std::fs::File::open(out_a.join("metrics.csv")).map(std::io::BufReader::new).unwrap(), "csv").unwrap();
    assert_eq!(rows.len(), 31);
    let snaps: Vec<_> = std::fs::read_dir(&out_a)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().ends_with(".vtk"))
        .collect();
    assert_eq!(snaps.len(), 7);

    // the snapshot cell arrays reproduce the growth state bit for bit
    let cp = read_checkpoint(std::io::BufReader::new(std::fs::File::open(out_a.join("checkpoint_final.txt")).unwrap()), "cp").unwrap();
    let vtk = read_vtk(&std::fs::read_to_string(out_a.join("snapshot_00030.vtk")).unwrap(), "vtk").unwrap();
    for name in CELL_FIELDS {
        assert!(vtk.cell_scalars.contains_key(name), "{name}");
    }
    let g = cp.gamma.as_slice();
    for e in 0..cp.mesh.n_elements() {
        assert_eq!(vtk.cell_scalars["Eg11"][e], g[3 * e]);
        assert_eq!(vtk.cell_scalars["Eg22"][e], g[3 * e + 1]);
        assert_eq!(2.0 * vtk.cell_scalars["Eg12"][e], g[3 * e + 2]);
    }
    assert_eq!(vtk.points.len(), cp.mesh.n_nodes());
    assert_eq!(vtk.point_vectors["displacement"].len(), cp.mesh.n_nodes());

    // determinism: everything but the timing column is byte-identical
    let o = growthopt(&["run", &preset("doubly_clamped"), "--solver", "analytic", "--out", out_b.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(csv_without_timing(&out_a.join("metrics.csv")), csv_without_timing(&out_b.join("metrics.csv")));
    for s in ["snapshot_00000.vtk", "snapshot_00015.vtk", "snapshot_00030.vtk", "checkpoint_final.txt"] {
        assert_eq!(std::fs::read(out_a.join(s)).unwrap(), std::fs::read(out_b.join(s)).unwrap(), "{s}");
    }

    let out_n = dir.path().join("n");
    let o = growthopt(&["run", &preset("doubly_clamped"), "--solver", "numerical", "--out", out_n.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let c = growthopt(&["compare", out_a.to_str().unwrap(), out_n.to_str().unwrap()]);
    assert_eq!(c.status.code(), Some(0));
    let text = String::from_utf8(c.stdout).unwrap();
    assert!(text.contains("L2 growth distance"));
    let rel: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("relative objective difference: "))
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!(rel < 0.03);
}

#[test]
fn zero_state_snapshot_is_all_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "p.cfg", "preset = \"perimeter\"\n[geometry]\ntarget_h = 0.1\n[run]\nn_iter = 1\n");
    let out = dir.path().join("o");
    let o = growthopt(&["run", &cfg, "--solver", "numerical", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let vtk = read_vtk(&std::fs::read_to_string(out.join("snapshot_00000.vtk")).unwrap(), "vtk").unwrap();
    for name in CELL_FIELDS {
        assert!(vtk.cell_scalars[name].iter().all(|v| *v == 0.0), "{name}");
    }
}

#[test]
fn restart_continues_from_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let base = "preset = \"perimeter\"\n[geometry]\ntarget_h = 0.1\n[solver]\npath = \"analytic\"\n";
    let short = write_cfg(dir.path(), "short.cfg", &format!("{base}[run]\nn_iter = 2\n"));
    let long = write_cfg(dir.path(), "long.cfg", &format!("{base}[run]\nn_iter = 4\n"));
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert!(growthopt(&["run", &short, "--out", a.to_str().unwrap()]).status.success());
    assert!(growthopt(&["run", &long, "--out", b.to_str().unwrap()]).status.success());
    let cp = a.join("checkpoint_final.txt");
    let o = growthopt(&["run", &long, "--out", c.to_str().unwrap(), "--restart", cp.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        std::fs::read(b.join("checkpoint_final.txt")).unwrap(),
        std::fs::read(c.join("checkpoint_final.txt")).unwrap()
    );
}

#[test]
fn analytic_path_with_inequality_balance_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "i.cfg", "[balance]\nrelation = \"inequality\"\n");
    let o = growthopt(&["run", &cfg, "--solver", "analytic", "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn selftest_passes() {
    let o = growthopt(&["selftest"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).lines().all(|l| !l.starts_with("FAIL")));
}
