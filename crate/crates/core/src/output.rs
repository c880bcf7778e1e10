//! Result files: metrics CSV, legacy VTK snapshots, checkpoints and the run
//! directory layout used by `run` and `compare`.
//!
//! Floats are printed with 17 significant digits so every file round-trips
//! 64-bit values exactly. Files are written to a temporary sibling and renamed
//! into place.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::evolution::{read_checkpoint, write_checkpoint, History, RunSummary, StepRecord};
use crate::fem::AssembledSystem;
use crate::mesh::{element_geometry, TriMesh};
use crate::postprocess::{cauchy_stress, deformed_area_centroid, deformed_centroids, radial_hoop, residual_stress};

pub const METRICS_FILE: &str = "metrics.csv";
pub const FINAL_CHECKPOINT: &str = "checkpoint_final.txt";
pub const SCENARIO_FILE: &str = "scenario.toml";

pub const CSV_COLUMNS: [&str; 10] = [
    "iter",
    "objective",
    "mass",
    "multiplier_norm",
    "kkt_residual",
    "max_psd_violation",
    "perimeter",
    "area",
    "roundness",
    "wall_ms",
];

pub const CELL_FIELDS: [&str; 11] = [
    "Eg11", "Eg22", "Eg12", "T11", "T22", "T12", "T0_11", "T0_22", "T0_12", "sigma_rr", "sigma_tt",
];

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `contents` through a temporary file in the same directory and renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp"));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn metrics_csv(records: &[StepRecord]) -> String {
    let mut s = CSV_COLUMNS.join(",");
    s.push('\n');
    for r in records {
        let row = [
            r.objective,
            r.mass,
            r.multiplier_norm,
            r.kkt_residual,
            r.max_psd_violation,
            r.perimeter,
            r.area,
            r.roundness,
            r.wall_ms,
        ];
        s.push_str(&r.iter.to_string());
        for v in row {
            s.push(',');
            s.push_str(&num(v));
        }
        s.push('\n');
    }
    s
}

pub fn write_metrics_csv(path: &Path, history: &History) -> Result<()> {
    if history.records.is_empty() {
        return Err(Error::InvalidInput("history has no records".into()));
    }
    write_atomic(path, metrics_csv(&history.records).as_bytes())
}

/// One parsed CSV row, keyed by column name; `iter` is kept separately.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub iter: usize,
    pub values: BTreeMap<String, f64>,
}

pub fn read_metrics_csv<R: BufRead>(input: R, source: &str) -> Result<Vec<MetricsRow>> {
    let perr = |line: usize, message: String| Error::Parse {
        file: source.into(),
        line,
        message,
    };
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| perr(1, "empty file".into()))?
        .map_err(|e| Error::io(source, e))?;
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols != CSV_COLUMNS {
        return Err(perr(1, format!("unexpected header `{}`", header.trim())));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != CSV_COLUMNS.len() {
            return Err(perr(i + 2, format!("expected {} fields, found {}", CSV_COLUMNS.len(), fields.len())));
        }
        let iter = fields[0]
            .parse()
            .map_err(|_| perr(i + 2, format!("bad iteration `{}`", fields[0])))?;
        let mut values = BTreeMap::new();
        for (c, f) in CSV_COLUMNS.iter().zip(&fields).skip(1) {
            let v: f64 = f.parse().map_err(|_| perr(i + 2, format!("bad number `{f}` in column {c}")))?;
            values.insert(c.to_string(), v);
        }
        rows.push(MetricsRow { iter, values });
    }
    Ok(rows)
}

/// Per-element cell data of one snapshot, in [`CELL_FIELDS`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct CellFields {
    pub columns: Vec<Vec<f64>>,
}

/// Growth as tensor components, loaded stress, residual stress, and the
/// radial/hoop parts of the residual stress. The polar frame lives in the
/// unloaded configuration `x + û₀`; its default center is that configuration's
/// area centroid. Elements whose centroid hits the center get zeros.
pub fn cell_fields(sys: &AssembledSystem, gamma: &[f64], u_full: &[f64], center: Option<[f64; 2]>) -> CellFields {
    let ne = sys.n_elements();
    let t = cauchy_stress(sys, u_full, gamma);
    let (t0, u0) = residual_stress(sys, gamma);
    let c = center.unwrap_or_else(|| deformed_area_centroid(sys.mesh(), &u0));
    let rh = radial_hoop(&t0, &deformed_centroids(sys.mesh(), &u0), c);
    let mut columns = vec![Vec::with_capacity(ne); CELL_FIELDS.len()];
    for e in 0..ne {
        let row = [
            gamma[3 * e],
            gamma[3 * e + 1],
            0.5 * gamma[3 * e + 2],
            t.values[e][0],
            t.values[e][1],
            t.values[e][2],
            t0.values[e][0],
            t0.values[e][1],
            t0.values[e][2],
            if rh.valid[e] { rh.rr[e] } else { 0.0 },
            if rh.valid[e] { rh.tt[e] } else { 0.0 },
        ];
        for (col, v) in columns.iter_mut().zip(row) {
            col.push(v);
        }
    }
    CellFields { columns }
}

pub fn vtk_string(mesh: &TriMesh, u_full: &[f64], fields: &CellFields, title: &str) -> String {
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\n");
    s.push_str(title.lines().next().unwrap_or(""));
    s.push_str("\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    s.push_str(&format!("POINTS {} double\n", mesh.n_nodes()));
    for p in mesh.nodes() {
        s.push_str(&format!("{} {} {}\n", num(p[0]), num(p[1]), num(0.0)));
    }
    let ne = mesh.n_elements();
    s.push_str(&format!("CELLS {} {}\n", ne, 4 * ne));
    for t in mesh.triangles() {
        s.push_str(&format!("3 {} {} {}\n", t[0], t[1], t[2]));
    }
    s.push_str(&format!("CELL_TYPES {ne}\n"));
    for _ in 0..ne {
        s.push_str("5\n");
    }
    s.push_str(&format!("POINT_DATA {}\nVECTORS displacement double\n", mesh.n_nodes()));
    for n in 0..mesh.n_nodes() {
        s.push_str(&format!("{} {} {}\n", num(u_full[2 * n]), num(u_full[2 * n + 1]), num(0.0)));
    }
    s.push_str(&format!("CELL_DATA {ne}\n"));
    for (name, col) in CELL_FIELDS.iter().zip(&fields.columns) {
        s.push_str(&format!("SCALARS {name} double 1\nLOOKUP_TABLE default\n"));
        for v in col {
            s.push_str(&num(*v));
            s.push('\n');
        }
    }
    s
}

pub fn write_vtk_snapshot(
    path: &Path,
    sys: &AssembledSystem,
    u_full: &[f64],
    gamma: &[f64],
    center: Option<[f64; 2]>,
    iter: usize,
) -> Result<()> {
    let fields = cell_fields(sys, gamma, u_full, center);
    let text = vtk_string(sys.mesh(), u_full, &fields, &format!("growthopt iteration {iter}"));
    write_atomic(path, text.as_bytes())
}

/// The parts of a legacy VTK file this crate writes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VtkData {
    pub points: Vec<[f64; 3]>,
    pub cells: Vec<Vec<usize>>,
    pub point_vectors: BTreeMap<String, Vec<[f64; 3]>>,
    pub cell_scalars: BTreeMap<String, Vec<f64>>,
}

/// Reads legacy ASCII unstructured grids with `POINTS`, `CELLS`, point
/// `VECTORS` and cell `SCALARS` (one component) sections.
pub fn read_vtk(text: &str, source: &str) -> Result<VtkData> {
    let perr = |message: String| Error::Parse {
        file: source.into(),
        line: 0,
        message,
    };
    let mut tok = text.lines().skip(2).flat_map(str::split_whitespace).peekable();
    let mut next = |what: &str| tok.next().ok_or_else(|| perr(format!("unexpected end of file reading {what}")));
    let mut out = VtkData::default();
    let mut location = "";
    macro_rules! number {
        ($t:ty, $what:expr) => {{
            let s = next($what)?;
            s.parse::<$t>().map_err(|_| perr(format!("bad number `{s}` in {}", $what)))?
        }};
    }
    loop {
        let Ok(key) = next("section") else { break };
        match key {
            "ASCII" | "DATASET" | "UNSTRUCTURED_GRID" => {}
            "POINTS" => {
                let n = number!(usize, "POINTS");
                next("POINTS type")?;
                for _ in 0..n {
                    out.points.push([number!(f64, "POINTS"), number!(f64, "POINTS"), number!(f64, "POINTS")]);
                }
            }
            "CELLS" => {
                let n = number!(usize, "CELLS");
                next("CELLS size")?;
                for _ in 0..n {
                    let k = number!(usize, "CELLS");
                    let mut c = Vec::with_capacity(k);
                    for _ in 0..k {
                        c.push(number!(usize, "CELLS"));
                    }
                    out.cells.push(c);
                }
            }
            "CELL_TYPES" => {
                let n = number!(usize, "CELL_TYPES");
                for _ in 0..n {
                    number!(u8, "CELL_TYPES");
                }
            }
            "POINT_DATA" => {
                number!(usize, "POINT_DATA");
                location = "point";
            }
            "CELL_DATA" => {
                number!(usize, "CELL_DATA");
                location = "cell";
            }
            "VECTORS" if location == "point" => {
                let name = next("VECTORS name")?.to_string();
                next("VECTORS type")?;
                let mut v = Vec::with_capacity(out.points.len());
                for _ in 0..out.points.len() {
                    v.push([number!(f64, "VECTORS"), number!(f64, "VECTORS"), number!(f64, "VECTORS")]);
                }
                out.point_vectors.insert(name, v);
            }
            "SCALARS" if location == "cell" => {
                let name = next("SCALARS name")?.to_string();
                next("SCALARS type")?;
                let comps = number!(usize, "SCALARS components");
                if comps != 1 {
                    return Err(perr(format!("SCALARS {name}: only one component is supported")));
                }
                if next("LOOKUP_TABLE")? != "LOOKUP_TABLE" {
                    return Err(perr(format!("SCALARS {name}: expected LOOKUP_TABLE")));
                }
                next("LOOKUP_TABLE name")?;
                let mut v = Vec::with_capacity(out.cells.len());
                for _ in 0..out.cells.len() {
                    v.push(number!(f64, "SCALARS"));
                }
                out.cell_scalars.insert(name, v);
            }
            other => return Err(perr(format!("unsupported section `{other}`"))),
        }
    }
    Ok(out)
}

pub fn snapshot_file_name(iter: usize) -> String {
    format!("snapshot_{iter:05}.vtk")
}

/// Writes the CSV, every snapshot of `history`, and a checkpoint of its
/// final state into `dir` (created if missing). `scenario_toml` is stored
/// alongside for reference.
pub fn write_run_dir(
    dir: &Path,
    sys: &AssembledSystem,
    history: &History,
    center: Option<[f64; 2]>,
    scenario_toml: &str,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_atomic(&dir.join(SCENARIO_FILE), scenario_toml.as_bytes())?;
    write_metrics_csv(&dir.join(METRICS_FILE), history)?;
    for snap in &history.snapshots {
        write_vtk_snapshot(
            &dir.join(snapshot_file_name(snap.iter)),
            sys,
            &snap.displacement,
            &snap.gamma,
            center,
            snap.iter,
        )?;
    }
    let last = history.records.last().map_or(0, |r| r.iter);
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, last, sys.mesh(), &history.final_gamma).map_err(|e| Error::io(dir, e))?;
    write_atomic(&dir.join(FINAL_CHECKPOINT), &buf)
}

/// Objectives, final growth and element areas of a run directory.
pub fn read_run_summary(dir: &Path) -> Result<RunSummary> {
    let csv: PathBuf = dir.join(METRICS_FILE);
    let f = fs::File::open(&csv).map_err(|e| Error::io(&csv, e))?;
    let rows = read_metrics_csv(BufReader::new(f), &csv.display().to_string())?;
    let cp = dir.join(FINAL_CHECKPOINT);
    let f = fs::File::open(&cp).map_err(|e| Error::io(&cp, e))?;
    let checkpoint = read_checkpoint(BufReader::new(f), &cp.display().to_string())?;
    let element_areas = (0..checkpoint.mesh.n_elements())
        .map(|e| element_geometry(&checkpoint.mesh, e).map(|g| g.area))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunSummary {
        objectives: rows.iter().map(|r| r.values["objective"]).collect(),
        final_gamma: checkpoint.gamma.into_vec(),
        element_areas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn csv_header_is_checked() {
        let bad = "iter,objective\n0,1.0\n";
        assert!(read_metrics_csv(bad.as_bytes(), "x").is_err());
    }
}
