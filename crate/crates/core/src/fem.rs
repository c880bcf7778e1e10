//! Discrete operators for P1 displacements and P0 growth: stiffness `K`,
//! growth coupling `B`, load `f`, penalty metric `L`, trace weights `a` and
//! the elementwise trace operator `A`, all after Dirichlet elimination.
//!
//! Growth vectors use the per-element layout `(E11, E22, 2 E12)`, the same
//! doubled-shear convention as the engineering strain `D u`.

use nalgebra::DMatrix;
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};

use crate::error::{Error, Result};
use crate::mesh::{element_geometry, ElementGeometry, TriMesh};

/// Isotropic plane-stress law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElasticLaw {
    young: f64,
    poisson: f64,
}

impl ElasticLaw {
    pub fn new(young: f64, poisson: f64) -> Result<Self> {
        if !(young > 0.0 && young.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "Young's modulus must be positive, got {young}"
            )));
        }
        if !(poisson > -1.0 && poisson < 0.5) {
            return Err(Error::InvalidInput(format!(
                "Poisson ratio must lie in (-1, 0.5), got {poisson}"
            )));
        }
        Ok(Self { young, poisson })
    }

    pub fn young(&self) -> f64 {
        self.young
    }

    pub fn poisson(&self) -> f64 {
        self.poisson
    }

    /// The 3x3 plane-stress matrix acting on `(e11, e22, 2 e12)`.
    pub fn matrix(&self) -> [[f64; 3]; 3] {
        let nu = self.poisson;
        let s = self.young / (1.0 - nu * nu);
        [
            [s, s * nu, 0.0],
            [s * nu, s, 0.0],
            [0.0, 0.0, s * 0.5 * (1.0 - nu)],
        ]
    }

    /// `C v` for a vectorized strain.
    pub fn apply(&self, v: [f64; 3]) -> [f64; 3] {
        let c = self.matrix();
        let mut out = [0.0; 3];
        for i in 0..3 {
            out[i] = c[i][0] * v[0] + c[i][1] * v[1] + c[i][2] * v[2];
        }
        out
    }
}

/// Displacement component of a nodal degree of freedom.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    X,
    Y,
}

/// Elimination of constrained displacement DOFs (DOF `2i` is `x`, `2i+1` is `y` of node `i`).
#[derive(Debug, Clone, PartialEq)]
pub struct DofReduction {
    n_dofs: usize,
    free: Vec<usize>,
    full_to_free: Vec<Option<usize>>,
}

impl DofReduction {
    /// Clamps both components of every `dirichlet_nodes` entry and one
    /// component per `pins` entry.
    pub fn new(n_nodes: usize, dirichlet_nodes: &[usize], pins: &[(usize, Component)]) -> Result<Self> {
        let n_dofs = 2 * n_nodes;
        let mut fixed = vec![false; n_dofs];
        for &n in dirichlet_nodes {
            if n >= n_nodes {
                return Err(Error::InvalidInput(format!("constrained node {n} out of range")));
            }
            fixed[2 * n] = true;
            fixed[2 * n + 1] = true;
        }
        for &(n, c) in pins {
            if n >= n_nodes {
                return Err(Error::InvalidInput(format!("pinned node {n} out of range")));
            }
            fixed[2 * n + usize::from(c == Component::Y)] = true;
        }
        let mut free = Vec::new();
        let mut full_to_free = vec![None; n_dofs];
        for (d, &is_fixed) in fixed.iter().enumerate() {
            if !is_fixed {
                full_to_free[d] = Some(free.len());
                free.push(d);
            }
        }
        if free.is_empty() {
            return Err(Error::EmptyFreeDofs);
        }
        Ok(Self {
            n_dofs,
            free,
            full_to_free,
        })
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    pub fn free_dofs(&self) -> &[usize] {
        &self.free
    }

    pub fn free_index(&self, dof: usize) -> Option<usize> {
        self.full_to_free[dof]
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&d| full[d]).collect()
    }

    /// Zero-extends a reduced vector to all `2N` DOFs.
    pub fn expand(&self, reduced: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.n_dofs];
        for (&d, &v) in self.free.iter().zip(reduced) {
            full[d] = v;
        }
        full
    }
}

/// Which norm the minimizing-movements penalty uses on the shear slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ShearWeight {
    /// All three vector components weighted `2|T_e|`, so the engineering
    /// shear `2 e12` counts like a normal component.
    #[default]
    Engineering,
    /// Shear slot weighted `|T_e|` so `½ L g·g` equals the tensor Frobenius integral.
    Frobenius,
}

impl ShearWeight {
    pub fn factor(self) -> f64 {
        match self {
            ShearWeight::Engineering => 1.0,
            ShearWeight::Frobenius => 0.5,
        }
    }
}

/// Constant traction applied on every loaded Neumann edge.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoundaryLoad {
    pub traction: [f64; 2],
}

/// All discrete operators for one mesh, law and constraint set. `K` is
/// factored once on assembly; every solve reuses the factor.
pub struct AssembledSystem {
    mesh: TriMesh,
    law: ElasticLaw,
    reduction: DofReduction,
    shear_weight: ShearWeight,
    geometry: Vec<ElementGeometry>,
    stiffness: CscMatrix<f64>,
    factor: CscCholesky<f64>,
    coupling: Vec<[[f64; 3]; 6]>,
    load: Vec<f64>,
    load_full: Vec<f64>,
    l_diag: Vec<f64>,
    trace_weights: Vec<f64>,
}

impl std::fmt::Debug for AssembledSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AssembledSystem")
            .field("n_nodes", &self.mesh.n_nodes())
            .field("n_elements", &self.mesh.n_elements())
            .field("n_free", &self.reduction.n_free())
            .field("law", &self.law)
            .field("shear_weight", &self.shear_weight)
            .finish()
    }
}

/// The 3x6 symmetric-gradient matrix `D` of one element, columns ordered
/// `(u1x, u1y, u2x, u2y, u3x, u3y)`.
pub fn strain_matrix(geom: &ElementGeometry) -> [[f64; 6]; 3] {
    let mut d = [[0.0; 6]; 3];
    for (k, g) in geom.grads.iter().enumerate() {
        d[0][2 * k] = g[0];
        d[1][2 * k + 1] = g[1];
        d[2][2 * k] = g[1];
        d[2][2 * k + 1] = g[0];
    }
    d
}

/// Assembles `K`, `B`, `f`, `L`, `a` and factors `K`.
pub fn assemble(
    mesh: TriMesh,
    law: ElasticLaw,
    load: BoundaryLoad,
    reduction: DofReduction,
    shear_weight: ShearWeight,
) -> Result<AssembledSystem> {
    if reduction.n_dofs() != 2 * mesh.n_nodes() {
        return Err(Error::InvalidInput(
            "DOF reduction does not match the mesh node count".into(),
        ));
    }
    let n_e = mesh.n_elements();
    let geometry = (0..n_e)
        .map(|e| element_geometry(&mesh, e))
        .collect::<Result<Vec<_>>>()?;
    let c = law.matrix();
    let n_free = reduction.n_free();

    let mut coo = CooMatrix::new(n_free, n_free);
    let mut coupling = Vec::with_capacity(n_e);
    for (e, geom) in geometry.iter().enumerate() {
        let d = strain_matrix(geom);
        // B_e = |T| D^T C (6x3); K_e = B_e D (6x6)
        let mut be = [[0.0; 3]; 6];
        for i in 0..6 {
            for j in 0..3 {
                be[i][j] = geom.area * (0..3).map(|k| d[k][i] * c[k][j]).sum::<f64>();
            }
        }
        let dofs = element_dofs(mesh.triangles()[e]);
        for i in 0..6 {
            let Some(fi) = reduction.free_index(dofs[i]) else {
                continue;
            };
            for j in 0..6 {
                let Some(fj) = reduction.free_index(dofs[j]) else {
                    continue;
                };
                let kij: f64 = (0..3).map(|k| be[i][k] * d[k][j]).sum();
                coo.push(fi, fj, kij);
            }
        }
        coupling.push(be);
    }
    let stiffness = CscMatrix::from(&coo);
    let factor = CscCholesky::factor(&stiffness).map_err(|e| Error::Factorization(format!("{e:?}")))?;
    // round-off can let a singular K factor; reject vanishing pivots
    let kmax = (0..n_free)
        .filter_map(|i| stiffness.get_entry(i, i).map(|v| v.into_value()))
        .fold(0.0f64, f64::max);
    let lfac = factor.l();
    let min_pivot = (0..n_free)
        .map(|i| lfac.get_entry(i, i).map_or(0.0, |v| v.into_value().powi(2)))
        .fold(f64::INFINITY, f64::min);
    if !(min_pivot > 1e-10 * kmax) {
        return Err(Error::Factorization(format!(
            "pivot {min_pivot:e} vanishes relative to the largest stiffness entry {kmax:e}"
        )));
    }

    let mut load_full = vec![0.0; reduction.n_dofs()];
    let nodes = mesh.nodes();
    for edge in mesh.neumann_edges().iter().filter(|e| e.loaded) {
        let [a, b] = edge.nodes;
        let len = ((nodes[b][0] - nodes[a][0]).powi(2) + (nodes[b][1] - nodes[a][1]).powi(2)).sqrt();
        for n in [a, b] {
            load_full[2 * n] += 0.5 * len * load.traction[0];
            load_full[2 * n + 1] += 0.5 * len * load.traction[1];
        }
    }
    // reactions on constrained DOFs do no work
    for (d, v) in load_full.iter_mut().enumerate() {
        if reduction.free_index(d).is_none() {
            *v = 0.0;
        }
    }
    let load = reduction.restrict(&load_full);

    let shear = shear_weight.factor();
    let mut l_diag = Vec::with_capacity(3 * n_e);
    let mut trace_weights = Vec::with_capacity(3 * n_e);
    for g in &geometry {
        l_diag.extend_from_slice(&[2.0 * g.area, 2.0 * g.area, 2.0 * g.area * shear]);
        trace_weights.extend_from_slice(&[g.area, g.area, 0.0]);
    }

    Ok(AssembledSystem {
        mesh,
        law,
        reduction,
        shear_weight,
        geometry,
        stiffness,
        factor,
        coupling,
        load,
        load_full,
        l_diag,
        trace_weights,
    })
}

fn element_dofs(tri: [usize; 3]) -> [usize; 6] {
    [
        2 * tri[0],
        2 * tri[0] + 1,
        2 * tri[1],
        2 * tri[1] + 1,
        2 * tri[2],
        2 * tri[2] + 1,
    ]
}

impl AssembledSystem {
    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    pub fn law(&self) -> &ElasticLaw {
        &self.law
    }

    pub fn reduction(&self) -> &DofReduction {
        &self.reduction
    }

    pub fn shear_weight(&self) -> ShearWeight {
        self.shear_weight
    }

    pub fn n_elements(&self) -> usize {
        self.mesh.n_elements()
    }

    pub fn n_growth(&self) -> usize {
        3 * self.mesh.n_elements()
    }

    pub fn n_free(&self) -> usize {
        self.reduction.n_free()
    }

    pub fn element_geometry(&self, e: usize) -> &ElementGeometry {
        &self.geometry[e]
    }

    pub fn element_areas(&self) -> Vec<f64> {
        self.geometry.iter().map(|g| g.area).collect()
    }

    pub fn domain_area(&self) -> f64 {
        self.mesh.domain_area()
    }

    /// Reduced stiffness matrix (free DOFs only).
    pub fn stiffness(&self) -> &CscMatrix<f64> {
        &self.stiffness
    }

    /// Reduced load vector `f`.
    pub fn load(&self) -> &[f64] {
        &self.load
    }

    /// Load vector on all `2N` DOFs (zero on constrained DOFs).
    pub fn load_full(&self) -> &[f64] {
        &self.load_full
    }

    /// Diagonal of the penalty matrix `L`.
    pub fn l_diag(&self) -> &[f64] {
        &self.l_diag
    }

    /// Global trace weights `a` (area-weighted row sum of `A`).
    pub fn trace_weights(&self) -> &[f64] {
        &self.trace_weights
    }

    /// Per-element `B_e = |T_e| D^T C` blocks (6 x 3, local DOF order).
    pub fn coupling_block(&self, e: usize) -> &[[f64; 3]; 6] {
        &self.coupling[e]
    }

    /// `B γ` on the free DOFs.
    pub fn apply_coupling(&self, gamma: &[f64]) -> Vec<f64> {
        assert_eq!(gamma.len(), self.n_growth());
        let mut out = vec![0.0; self.n_free()];
        for (e, tri) in self.mesh.triangles().iter().enumerate() {
            let g = &gamma[3 * e..3 * e + 3];
            let be = &self.coupling[e];
            for (i, &dof) in element_dofs(*tri).iter().enumerate() {
                if let Some(fi) = self.reduction.free_index(dof) {
                    out[fi] += be[i][0] * g[0] + be[i][1] * g[1] + be[i][2] * g[2];
                }
            }
        }
        out
    }

    /// `Bᵀ z` for a reduced displacement-space vector `z`.
    pub fn apply_coupling_t(&self, z: &[f64]) -> Vec<f64> {
        assert_eq!(z.len(), self.n_free());
        let mut out = vec![0.0; self.n_growth()];
        for (e, tri) in self.mesh.triangles().iter().enumerate() {
            let be = &self.coupling[e];
            for (i, &dof) in element_dofs(*tri).iter().enumerate() {
                if let Some(fi) = self.reduction.free_index(dof) {
                    for k in 0..3 {
                        out[3 * e + k] += be[i][k] * z[fi];
                    }
                }
            }
        }
        out
    }

    /// `K x` on the free DOFs.
    pub fn apply_stiffness(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_free()];
        for (col, &xv) in x.iter().enumerate() {
            let c = self.stiffness.col(col);
            for (&row, &v) in c.row_indices().iter().zip(c.values()) {
                out[row] += v * xv;
            }
        }
        out
    }

    /// Solves `K x = rhs` with the stored factor.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.n_free());
        let mut b = DMatrix::from_column_slice(rhs.len(), 1, rhs);
        self.factor.solve_mut(&mut b);
        b.as_slice().to_vec()
    }

    /// Equilibrium displacement `K û = B γ + f`, zero-extended to all `2N` DOFs.
    pub fn solve_equilibrium(&self, gamma: &[f64]) -> Vec<f64> {
        self.reduction.expand(&self.solve_reduced(gamma, true))
    }

    /// Reduced equilibrium solve; `with_load = false` drops `f` (residual state).
    pub fn solve_reduced(&self, gamma: &[f64], with_load: bool) -> Vec<f64> {
        let mut rhs = self.apply_coupling(gamma);
        if with_load {
            for (r, f) in rhs.iter_mut().zip(&self.load) {
                *r += f;
            }
        }
        self.solve(&rhs)
    }

    /// Relative residual `‖K û − B γ − f‖ / ‖B γ + f‖` of a full displacement.
    pub fn equilibrium_residual(&self, u_full: &[f64], gamma: &[f64]) -> f64 {
        let u = self.reduction.restrict(u_full);
        let ku = self.apply_stiffness(&u);
        let rhs: Vec<f64> = self
            .apply_coupling(gamma)
            .iter()
            .zip(&self.load)
            .map(|(b, f)| b + f)
            .collect();
        let num: f64 = ku.iter().zip(&rhs).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den: f64 = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        if den == 0.0 {
            num
        } else {
            num / den
        }
    }

    /// Engineering strain `(e11, e22, 2 e12)` of element `e` for a full displacement.
    pub fn element_strain(&self, u_full: &[f64], e: usize) -> [f64; 3] {
        let d = strain_matrix(&self.geometry[e]);
        let dofs = element_dofs(self.mesh.triangles()[e]);
        let mut eps = [0.0; 3];
        for k in 0..3 {
            eps[k] = (0..6).map(|i| d[k][i] * u_full[dofs[i]]).sum();
        }
        eps
    }

    /// Elementwise strain of a full displacement, as a growth-layout vector.
    pub fn strain_field(&self, u_full: &[f64]) -> Vec<f64> {
        (0..self.n_elements())
            .flat_map(|e| self.element_strain(u_full, e))
            .collect()
    }

    /// `A γ`: elementwise traces.
    pub fn apply_trace(&self, gamma: &[f64]) -> Vec<f64> {
        gamma.chunks_exact(3).map(|g| g[0] + g[1]).collect()
    }

    /// `Aᵀ λ`.
    pub fn apply_trace_t(&self, lambda: &[f64]) -> Vec<f64> {
        lambda.iter().flat_map(|&l| [l, l, 0.0]).collect()
    }

    /// `a · γ`, the area-weighted total trace.
    pub fn total_trace(&self, gamma: &[f64]) -> f64 {
        self.trace_weights.iter().zip(gamma).map(|(a, g)| a * g).sum()
    }

    /// `L x · x`.
    pub fn l_norm_sq(&self, x: &[f64]) -> f64 {
        self.l_diag.iter().zip(x).map(|(l, v)| l * v * v).sum()
    }

    /// `L⁻¹ y · y`, the dual norm for gradients.
    pub fn l_inv_norm_sq(&self, y: &[f64]) -> f64 {
        self.l_diag.iter().zip(y).map(|(l, v)| v * v / l).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{rect_mesh_grid, MeshPattern};

    fn square_clamped_bottom(nu: f64) -> AssembledSystem {
        let mesh = rect_mesh_grid(1.0, 1.0, 1, 1, MeshPattern::RightDiagonal).unwrap();
        let bottom: Vec<usize> = (0..mesh.n_nodes()).filter(|&i| mesh.nodes()[i][1] == 0.0).collect();
        let mesh = mesh.with_tags(bottom.clone(), |_, _| false).unwrap();
        let red = DofReduction::new(mesh.n_nodes(), &bottom, &[]).unwrap();
        assemble(mesh, ElasticLaw::new(1.0, nu).unwrap(), BoundaryLoad::default(), red, ShearWeight::Engineering).unwrap()
    }

    #[test]
    fn plane_stress_matrix() {
        let c = ElasticLaw::new(2.0, 0.25).unwrap().matrix();
        let s = 2.0 / (1.0 - 0.0625);
        assert!((c[0][0] - s).abs() < 1e-15);
        assert!((c[0][1] - 0.25 * s).abs() < 1e-15);
        assert!((c[2][2] - 0.375 * s).abs() < 1e-15);
        assert!(ElasticLaw::new(1.0, 0.5).is_err());
        assert!(ElasticLaw::new(0.0, 0.0).is_err());
    }

    #[test]
    fn zero_traction_gives_zero_load() {
        let sys = square_clamped_bottom(0.0);
        assert!(sys.load().iter().all(|&v| v == 0.0));
        let u = sys.solve_equilibrium(&vec![0.0; sys.n_growth()]);
        assert!(u.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn no_constraints_is_an_error() {
        let mesh = rect_mesh_grid(1.0, 1.0, 2, 2, MeshPattern::RightDiagonal).unwrap();
        let red = DofReduction::new(mesh.n_nodes(), &[], &[]).unwrap();
        let r = assemble(mesh, ElasticLaw::new(1.0, 0.0).unwrap(), BoundaryLoad::default(), red, ShearWeight::Engineering);
        assert!(matches!(r, Err(Error::Factorization(_))));
        assert!(matches!(DofReduction::new(1, &[0], &[]), Err(Error::EmptyFreeDofs)));
    }

    #[test]
    fn l_and_a_layout() {
        let sys = square_clamped_bottom(0.3);
        for e in 0..sys.n_elements() {
            let area = sys.element_geometry(e).area;
            assert_eq!(&sys.l_diag()[3 * e..3 * e + 3], &[2.0 * area; 3]);
            assert_eq!(&sys.trace_weights()[3 * e..3 * e + 3], &[area, area, 0.0]);
        }
    }
}
