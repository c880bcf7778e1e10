//! Derived fields: Cauchy and residual stress, the radial/hoop
//! decomposition, and shape metrics of the deformed boundary.

use std::f64::consts::PI;

use crate::fem::AssembledSystem;
use crate::mesh::TriMesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StressKind {
    Loaded,
    Residual,
}

/// Per-element `(T11, T22, T12)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StressField {
    pub values: Vec<[f64; 3]>,
    pub kind: StressKind,
}

/// `T = C(E(û) − E_g)` per element. The vector strain carries doubled shear,
/// so the third slot of `C(ε − γ)` is `T12` directly.
pub fn cauchy_stress(sys: &AssembledSystem, u_full: &[f64], gamma: &[f64]) -> StressField {
    let law = sys.law();
    let values = (0..sys.n_elements())
        .map(|e| {
            let eps = sys.element_strain(u_full, e);
            law.apply([
                eps[0] - gamma[3 * e],
                eps[1] - gamma[3 * e + 1],
                eps[2] - gamma[3 * e + 2],
            ])
        })
        .collect();
    StressField {
        values,
        kind: StressKind::Loaded,
    }
}

/// Stress with the loads removed: solve `K û₀ = B γ` and evaluate `C(E(û₀) − E_g)`.
pub fn residual_stress(sys: &AssembledSystem, gamma: &[f64]) -> (StressField, Vec<f64>) {
    let u0 = sys.reduction().expand(&sys.solve_reduced(gamma, false));
    let mut s = cauchy_stress(sys, &u0, gamma);
    s.kind = StressKind::Residual;
    (s, u0)
}

/// Radial and hoop components per element.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialHoop {
    pub rr: Vec<f64>,
    pub tt: Vec<f64>,
    pub radius: Vec<f64>,
    /// False where the element point coincides with the center.
    pub valid: Vec<bool>,
}

/// Rotates each element tensor into the polar frame at `points[e]` about `center`.
pub fn radial_hoop(stress: &StressField, points: &[[f64; 2]], center: [f64; 2]) -> RadialHoop {
    let n = stress.values.len();
    let mut out = RadialHoop {
        rr: Vec::with_capacity(n),
        tt: Vec::with_capacity(n),
        radius: Vec::with_capacity(n),
        valid: Vec::with_capacity(n),
    };
    for (t, p) in stress.values.iter().zip(points) {
        let d = [p[0] - center[0], p[1] - center[1]];
        let r = d[0].hypot(d[1]);
        out.radius.push(r);
        if r == 0.0 {
            out.rr.push(f64::NAN);
            out.tt.push(f64::NAN);
            out.valid.push(false);
            continue;
        }
        let (c, s) = (d[0] / r, d[1] / r);
        out.rr.push(t[0] * c * c + t[1] * s * s + 2.0 * t[2] * c * s);
        out.tt.push(t[0] * s * s + t[1] * c * c - 2.0 * t[2] * c * s);
        out.valid.push(true);
    }
    out
}

/// Element centroids in the reference configuration.
pub fn reference_centroids(mesh: &TriMesh) -> Vec<[f64; 2]> {
    (0..mesh.n_elements()).map(|e| mesh.element_centroid(e)).collect()
}

/// Element centroids of the deformed configuration `x + û`.
pub fn deformed_centroids(mesh: &TriMesh, u_full: &[f64]) -> Vec<[f64; 2]> {
    mesh.triangles()
        .iter()
        .map(|t| {
            let mut c = [0.0; 2];
            for &n in t {
                let x = mesh.nodes()[n];
                c[0] += (x[0] + u_full[2 * n]) / 3.0;
                c[1] += (x[1] + u_full[2 * n + 1]) / 3.0;
            }
            c
        })
        .collect()
}

/// Area-weighted centroid of the deformed configuration.
pub fn deformed_area_centroid(mesh: &TriMesh, u_full: &[f64]) -> [f64; 2] {
    let y = |n: usize| {
        let x = mesh.nodes()[n];
        [x[0] + u_full[2 * n], x[1] + u_full[2 * n + 1]]
    };
    let mut acc = [0.0; 2];
    let mut area = 0.0;
    for t in mesh.triangles() {
        let (a, b, c) = (y(t[0]), y(t[1]), y(t[2]));
        let w = 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]));
        acc[0] += w * (a[0] + b[0] + c[0]) / 3.0;
        acc[1] += w * (a[1] + b[1] + c[1]) / 3.0;
        area += w;
    }
    [acc[0] / area, acc[1] / area]
}

/// Area-weighted means over the core (radius ≤ `core_fraction`·r_max) and
/// the boundary band (radius ≥ (1 − `band_fraction`)·r_max).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionMeans {
    pub core_hoop: f64,
    pub core_radial: f64,
    pub band_hoop: f64,
    pub band_radial: f64,
    pub band_abs_hoop: f64,
    pub band_abs_radial: f64,
    pub core_count: usize,
    pub band_count: usize,
}

pub fn region_means(rh: &RadialHoop, weights: &[f64], core_fraction: f64, band_fraction: f64) -> RegionMeans {
    let rmax = rh
        .radius
        .iter()
        .zip(&rh.valid)
        .filter(|(_, &v)| v)
        .fold(0.0f64, |m, (&r, _)| m.max(r));
    let mut core = [0.0; 3];
    let mut band = [0.0; 5];
    let (mut nc, mut nb) = (0, 0);
    for e in 0..rh.rr.len() {
        if !rh.valid[e] {
            continue;
        }
        let w = weights[e];
        let r = rh.radius[e];
        if r <= core_fraction * rmax {
            core[0] += w * rh.tt[e];
            core[1] += w * rh.rr[e];
            core[2] += w;
            nc += 1;
        }
        if r >= (1.0 - band_fraction) * rmax {
            band[0] += w * rh.tt[e];
            band[1] += w * rh.rr[e];
            band[2] += w * rh.tt[e].abs();
            band[3] += w * rh.rr[e].abs();
            band[4] += w;
            nb += 1;
        }
    }
    RegionMeans {
        core_hoop: core[0] / core[2],
        core_radial: core[1] / core[2],
        band_hoop: band[0] / band[4],
        band_radial: band[1] / band[4],
        band_abs_hoop: band[2] / band[4],
        band_abs_radial: band[3] / band[4],
        core_count: nc,
        band_count: nb,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeMetrics {
    pub area: f64,
    pub perimeter: f64,
    /// `4πA/P²`, 1 for a disk.
    pub roundness: f64,
    pub self_intersecting: bool,
}

fn segments_cross(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    let orient = |a: [f64; 2], b: [f64; 2], c: [f64; 2]| (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

/// Shoelace area, perimeter and roundness of a closed polygon.
pub fn polygon_metrics(pts: &[[f64; 2]]) -> ShapeMetrics {
    let n = pts.len();
    let mut area = 0.0;
    let mut perimeter = 0.0;
    for j in 0..n {
        let (a, b) = (pts[j], pts[(j + 1) % n]);
        area += a[0] * b[1] - b[0] * a[1];
        perimeter += (b[0] - a[0]).hypot(b[1] - a[1]);
    }
    area *= 0.5;
    let mut self_intersecting = false;
    'outer: for i in 0..n {
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            if segments_cross(pts[i], pts[(i + 1) % n], pts[j], pts[(j + 1) % n]) {
                self_intersecting = true;
                break 'outer;
            }
        }
    }
    ShapeMetrics {
        area,
        perimeter,
        roundness: 4.0 * PI * area / (perimeter * perimeter),
        self_intersecting,
    }
}

/// Metrics of the deformed boundary loop `x + û`.
pub fn shape_metrics(u_full: &[f64], mesh: &TriMesh) -> ShapeMetrics {
    let pts: Vec<[f64; 2]> = mesh
        .boundary_loop()
        .iter()
        .map(|&n| {
            let x = mesh.nodes()[n];
            [x[0] + u_full[2 * n], x[1] + u_full[2 * n + 1]]
        })
        .collect();
    polygon_metrics(&pts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{rect_mesh_grid, MeshPattern};

    #[test]
    fn rectangle_metrics() {
        let m = rect_mesh_grid(1.0, 0.5, 4, 2, MeshPattern::RightDiagonal).unwrap();
        let s = shape_metrics(&vec![0.0; 2 * m.n_nodes()], &m);
        assert!((s.area - 0.5).abs() < 1e-15);
        assert!((s.perimeter - 3.0).abs() < 1e-15);
        assert!((s.roundness - 4.0 * PI * 0.5 / 9.0).abs() < 1e-15);
        assert!(!s.self_intersecting);
    }

    #[test]
    fn polygon_roundness() {
        let pts: Vec<[f64; 2]> = (0..64)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / 64.0;
                [t.cos(), t.sin()]
            })
            .collect();
        assert!(polygon_metrics(&pts).roundness >= 0.995);
        let bowtie = [[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(polygon_metrics(&bowtie).self_intersecting);
    }

    #[test]
    fn aligned_frame() {
        let s = StressField {
            values: vec![[2.0, 0.0, 0.0], [3.0, 3.0, 0.0]],
            kind: StressKind::Loaded,
        };
        let rh = radial_hoop(&s, &[[1.0, 0.0], [0.0, 2.0]], [0.0, 0.0]);
        assert!((rh.rr[0] - 2.0).abs() < 1e-15 && rh.tt[0].abs() < 1e-15);
        assert!((rh.rr[1] - 3.0).abs() < 1e-15 && (rh.tt[1] - 3.0).abs() < 1e-15);
        let rh = radial_hoop(&s, &[[0.0, 0.0], [0.0, 2.0]], [0.0, 0.0]);
        assert!(!rh.valid[0]);
    }
}
