//! External work and deformed perimeter, with gradients in displacement
//! space and reduced gradients in growth space.

use nalgebra::DMatrix;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fem::AssembledSystem;
use crate::mesh::TriMesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    ExternalWork,
    Perimeter,
}

impl Objective {
    /// Φ at a full displacement vector.
    pub fn value_at(&self, sys: &AssembledSystem, u_full: &[f64]) -> f64 {
        match self {
            Objective::ExternalWork => external_work_value(sys, u_full),
            Objective::Perimeter => perimeter_value(sys.mesh(), u_full),
        }
    }

    /// Reduced functional `Ψ(γ) = Φ(K⁻¹(Bγ + f))` and the displacement.
    pub fn evaluate(&self, sys: &AssembledSystem, gamma: &[f64]) -> (f64, Vec<f64>) {
        let u = sys.solve_equilibrium(gamma);
        (self.value_at(sys, &u), u)
    }

    /// `∇Ψ` at the state whose displacement is `u_full`.
    pub fn reduced_grad(&self, sys: &AssembledSystem, u_full: &[f64]) -> Result<Vec<f64>> {
        match self {
            Objective::ExternalWork => Ok(external_work_reduced_grad(sys)),
            Objective::Perimeter => perimeter_reduced_grad(sys, u_full),
        }
    }
}

/// `f · û`.
pub fn external_work_value(sys: &AssembledSystem, u_full: &[f64]) -> f64 {
    sys.load_full().iter().zip(u_full).map(|(f, u)| f * u).sum()
}

/// `Bᵀ K⁻¹ f`, independent of the growth state.
pub fn external_work_reduced_grad(sys: &AssembledSystem) -> Vec<f64> {
    sys.apply_coupling_t(&sys.solve(sys.load()))
}

fn deformed(mesh: &TriMesh, u_full: &[f64], node: usize) -> [f64; 2] {
    let x = mesh.nodes()[node];
    [x[0] + u_full[2 * node], x[1] + u_full[2 * node + 1]]
}

/// Deformed boundary edge vectors `y_{b(j+1)} − y_{b(j)}` along the loop.
fn deformed_edges(mesh: &TriMesh, u_full: &[f64]) -> Vec<[f64; 2]> {
    let lp = mesh.boundary_loop();
    (0..lp.len())
        .map(|j| {
            let a = deformed(mesh, u_full, lp[j]);
            let b = deformed(mesh, u_full, lp[(j + 1) % lp.len()]);
            [b[0] - a[0], b[1] - a[1]]
        })
        .collect()
}

/// Sum of deformed boundary edge lengths.
pub fn perimeter_value(mesh: &TriMesh, u_full: &[f64]) -> f64 {
    deformed_edges(mesh, u_full).iter().map(|e| e[0].hypot(e[1])).sum()
}

/// Index of the first zero-length deformed boundary edge, if any.
pub fn zero_length_edge(mesh: &TriMesh, u_full: &[f64]) -> Option<usize> {
    deformed_edges(mesh, u_full)
        .iter()
        .position(|e| e[0].hypot(e[1]) == 0.0)
}

/// `∂P_u/∂û` on all `2N` DOFs: at node `b(j)` it is `t_{j−1} − t_j` with
/// `t_j` the unit vector of edge `j`.
pub fn perimeter_grad_u(mesh: &TriMesh, u_full: &[f64]) -> Result<Vec<f64>> {
    let edges = deformed_edges(mesh, u_full);
    let lp = mesh.boundary_loop();
    let nb = lp.len();
    let mut units = Vec::with_capacity(nb);
    for (j, e) in edges.iter().enumerate() {
        let len = e[0].hypot(e[1]);
        if len == 0.0 {
            return Err(Error::ZeroLengthEdge { edge: j });
        }
        units.push([e[0] / len, e[1] / len]);
    }
    let mut g = vec![0.0; 2 * mesh.n_nodes()];
    for j in 0..nb {
        let prev = units[(j + nb - 1) % nb];
        let next = units[j];
        g[2 * lp[j]] += prev[0] - next[0];
        g[2 * lp[j] + 1] += prev[1] - next[1];
    }
    Ok(g)
}

/// `Bᵀ K⁻¹ ∇P_u` with `∇P_u` restricted to the free DOFs.
pub fn perimeter_reduced_grad(sys: &AssembledSystem, u_full: &[f64]) -> Result<Vec<f64>> {
    let g = perimeter_grad_u(sys.mesh(), u_full)?;
    let g = sys.reduction().restrict(&g);
    Ok(sys.apply_coupling_t(&sys.solve(&g)))
}

/// Outcome of [`convexity_probe`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexityReport {
    pub trials: usize,
    /// Largest `P_g(tγ1+(1−t)γ2) − tP_g(γ1) − (1−t)P_g(γ2)`; convexity means ≤ 0 up to round-off.
    pub max_violation: f64,
    /// Largest `|P_g(γ+sk) − P_g(γ) − s·slope|` over the sampled `s ∈ [0, 1]`.
    pub kernel_affine_deviation: f64,
    pub kernel_slope: f64,
    /// `‖M k‖ / ‖k‖` for the stacked edge-difference operator `M`.
    pub kernel_residual: f64,
    pub kernel_norm: f64,
}

/// Dense `K⁻¹B` on the free DOFs.
fn dense_response(sys: &AssembledSystem) -> DMatrix<f64> {
    let n = sys.n_growth();
    let mut w = DMatrix::zeros(sys.n_free(), n);
    let mut unit = vec![0.0; n];
    for j in 0..n {
        unit[j] = 1.0;
        let col = sys.solve(&sys.apply_coupling(&unit));
        w.set_column(j, &nalgebra::DVector::from_vec(col));
        unit[j] = 0.0;
    }
    w
}

/// Stacked `(C_{j+1} − C_j) K⁻¹ B` over all boundary edges (2 rows per edge).
pub fn edge_difference_operator(sys: &AssembledSystem) -> DMatrix<f64> {
    let w = dense_response(sys);
    let lp = sys.mesh().boundary_loop();
    let nb = lp.len();
    let n = sys.n_growth();
    let red = sys.reduction();
    let row = |dof: usize| -> Option<usize> { red.free_index(dof) };
    let mut m = DMatrix::zeros(2 * nb, n);
    for j in 0..nb {
        let (a, b) = (lp[j], lp[(j + 1) % nb]);
        for c in 0..2 {
            for col in 0..n {
                let wb = row(2 * b + c).map_or(0.0, |r| w[(r, col)]);
                let wa = row(2 * a + c).map_or(0.0, |r| w[(r, col)]);
                m[(2 * j + c, col)] = wb - wa;
            }
        }
    }
    m
}

/// Random midpoint convexity trials for `P_g` and the affine behavior of
/// `P_g` along a kernel direction of the stacked edge-difference operator.
/// Growth samples are uniform in `[-scale, scale]`.
pub fn convexity_probe(sys: &AssembledSystem, trials: usize, scale: f64, seed: u64) -> Result<ConvexityReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = sys.n_growth();
    let pg = |g: &[f64]| Objective::Perimeter.evaluate(sys, g).0;
    let random = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-scale..=scale)).collect()
    };

    let mut max_violation = f64::NEG_INFINITY;
    for _ in 0..trials {
        let g1 = random(&mut rng);
        let g2 = random(&mut rng);
        let t: f64 = rng.random_range(0.0..1.0);
        let mid: Vec<f64> = g1.iter().zip(&g2).map(|(a, b)| t * a + (1.0 - t) * b).collect();
        let v = pg(&mid) - t * pg(&g1) - (1.0 - t) * pg(&g2);
        max_violation = max_violation.max(v);
    }

    let m = edge_difference_operator(sys);
    let svd = m.transpose().svd(true, false);
    let u = svd.u.as_ref().ok_or_else(|| Error::Projection("SVD failed".into()))?;
    let smax = svd.singular_values.iter().fold(0.0f64, |a, &b| a.max(b));
    let tol = smax * 1e-12 * (n as f64);
    let z = nalgebra::DVector::from_vec(random(&mut rng));
    let mut k = z.clone();
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > tol {
            let ui = u.column(i);
            k -= ui * ui.dot(&z);
        }
    }
    let kernel_norm = k.norm();
    let kernel_residual = (&m * &k).norm() / kernel_norm.max(f64::MIN_POSITIVE);

    let base = random(&mut rng);
    let p0 = pg(&base);
    let shifted = |s: f64| -> Vec<f64> { base.iter().zip(k.iter()).map(|(b, kk)| b + s * kk).collect() };
    let slope = pg(&shifted(1.0)) - p0;
    let mut dev: f64 = 0.0;
    for i in 0..=10 {
        let s = i as f64 / 10.0;
        dev = dev.max((pg(&shifted(s)) - p0 - s * slope).abs());
    }
    Ok(ConvexityReport {
        trials,
        max_violation,
        kernel_affine_deviation: dev,
        kernel_slope: slope,
        kernel_residual,
        kernel_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{rect_mesh_grid, MeshPattern};

    #[test]
    fn undeformed_perimeters() {
        let sq = rect_mesh_grid(1.0, 1.0, 1, 1, MeshPattern::RightDiagonal).unwrap();
        assert!((perimeter_value(&sq, &[0.0; 8]) - 4.0).abs() < 1e-15);
        let r = rect_mesh_grid(1.0, 0.5, 4, 2, MeshPattern::RightDiagonal).unwrap();
        let u = vec![0.0; 2 * r.n_nodes()];
        assert!((perimeter_value(&r, &u) - 3.0).abs() < 1e-14);
    }

    #[test]
    fn square_corner_gradients() {
        let sq = rect_mesh_grid(1.0, 1.0, 1, 1, MeshPattern::RightDiagonal).unwrap();
        let g = perimeter_grad_u(&sq, &[0.0; 8]).unwrap();
        for (i, x) in sq.nodes().iter().enumerate() {
            let out = [x[0] - 0.5, x[1] - 0.5];
            let expect = [out[0].signum(), out[1].signum()];
            assert!((g[2 * i] - expect[0]).abs() < 1e-15);
            assert!((g[2 * i + 1] - expect[1]).abs() < 1e-15);
        }
    }

    #[test]
    fn collapsed_edge_is_reported() {
        let sq = rect_mesh_grid(1.0, 1.0, 1, 1, MeshPattern::RightDiagonal).unwrap();
        let lp = sq.boundary_loop().to_vec();
        let (a, b) = (lp[0], lp[1]);
        let mut u = vec![0.0; 8];
        u[2 * a] = sq.nodes()[b][0] - sq.nodes()[a][0];
        u[2 * a + 1] = sq.nodes()[b][1] - sq.nodes()[a][1];
        assert_eq!(zero_length_edge(&sq, &u), Some(0));
        assert!(matches!(perimeter_grad_u(&sq, &u), Err(Error::ZeroLengthEdge { edge: 0 })));
        assert!(perimeter_value(&sq, &u) > 0.0);
    }
}
