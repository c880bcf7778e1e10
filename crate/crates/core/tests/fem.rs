//! Stiffness, load and equilibrium oracles.

use growthopt::evolution::{assemble_on, Scenario};
use growthopt::fem::{assemble, strain_matrix, BoundaryLoad, Component, DofReduction, ElasticLaw, ShearWeight};
use growthopt::mesh::{element_geometry, generate_rect_mesh, rect_mesh_grid, MeshPattern, TriMesh};
use growthopt::postprocess::cauchy_stress;
use growthopt::AssembledSystem;

/// Hat-function gradients from the textbook cofactor formula.
fn hand_grads(mesh: &TriMesh, e: usize) -> (f64, [f64; 3], [f64; 3]) {
    let t = mesh.triangles()[e];
    let p = |k: usize| mesh.nodes()[t[k % 3]];
    let twice = (p(1)[0] - p(0)[0]) * (p(2)[1] - p(0)[1]) - (p(2)[0] - p(0)[0]) * (p(1)[1] - p(0)[1]);
    let mut b = [0.0; 3];
    let mut c = [0.0; 3];
    for a in 0..3 {
        b[a] = (p(a + 1)[1] - p(a + 2)[1]) / twice;
        c[a] = (p(a + 2)[0] - p(a + 1)[0]) / twice;
    }
    (0.5 * twice, b, c)
}

/// Dense element stiffness for plane stress, written out block by block.
fn hand_element_stiffness(area: f64, b: [f64; 3], c: [f64; 3], e_mod: f64, nu: f64) -> [[f64; 6]; 6] {
    let k = e_mod / (1.0 - nu * nu);
    let g = 0.5 * (1.0 - nu);
    let mut m = [[0.0; 6]; 6];
    for i in 0..3 {
        for j in 0..3 {
            m[2 * i][2 * j] = area * k * (b[i] * b[j] + g * c[i] * c[j]);
            m[2 * i][2 * j + 1] = area * k * (nu * b[i] * c[j] + g * c[i] * b[j]);
            m[2 * i + 1][2 * j] = area * k * (nu * c[i] * b[j] + g * b[i] * c[j]);
            m[2 * i + 1][2 * j + 1] = area * k * (c[i] * c[j] + g * b[i] * b[j]);
        }
    }
    m
}

fn left_clamped(mesh: TriMesh, nu: f64, traction: [f64; 2]) -> AssembledSystem {
    let left: Vec<usize> = (0..mesh.n_nodes()).filter(|&n| mesh.nodes()[n][0] == 0.0).collect();
    let (_, hi) = mesh.bounding_box();
    let mesh = mesh.with_tags(left.clone(), |a, b| a[1] == hi[1] && b[1] == hi[1]).unwrap();
    let red = DofReduction::new(mesh.n_nodes(), &left, &[]).unwrap();
    assemble(mesh, ElasticLaw::new(1.0, nu).unwrap(), BoundaryLoad { traction }, red, ShearWeight::Engineering).unwrap()
}

#[test]
fn reference_triangle_strain_matrix() {
    let mesh = TriMesh::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]]).unwrap();
    let g = element_geometry(&mesh, 0).unwrap();
    assert!((g.area - 0.5).abs() < 1e-15);
    let d = strain_matrix(&g);
    let expect = [
        [-1.0, 0.0, 1.0, 0.0, 0.0, 0.0],
        [0.0, -1.0, 0.0, 0.0, 0.0, 1.0],
        [-1.0, -1.0, 0.0, 1.0, 1.0, 0.0],
    ];
    for r in 0..3 {
        for c in 0..6 {
            assert!((d[r][c] - expect[r][c]).abs() < 1e-15, "D[{r}][{c}] = {}", d[r][c]);
        }
    }
}

#[test]
fn stiffness_matches_hand_assembly() {
    for (nu, pattern) in [(0.0, MeshPattern::RightDiagonal), (0.3, MeshPattern::Crossed)] {
        let mesh = rect_mesh_grid(1.0, 0.5, 3, 2, pattern).unwrap();
        let sys = left_clamped(mesh, nu, [0.0, 0.0]);
        let n = 2 * sys.mesh().n_nodes();
        let mut full = vec![vec![0.0; n]; n];
        for e in 0..sys.n_elements() {
            let (area, b, c) = hand_grads(sys.mesh(), e);
            let ke = hand_element_stiffness(area, b, c, 1.0, nu);
            let t = sys.mesh().triangles()[e];
            for i in 0..6 {
                for j in 0..6 {
                    full[2 * t[i / 2] + i % 2][2 * t[j / 2] + j % 2] += ke[i][j];
                }
            }
        }
        let free = sys.reduction().free_dofs().to_vec();
        let k = sys.stiffness();
        let mut dense = vec![vec![0.0; free.len()]; free.len()];
        for (i, j, v) in k.triplet_iter() {
            dense[i][j] += *v;
        }
        let scale = 1.0;
        for (a, &fa) in free.iter().enumerate() {
            for (b, &fb) in free.iter().enumerate() {
                assert!(
                    (dense[a][b] - full[fa][fb]).abs() < 1e-13 * scale,
                    "K[{a}][{b}]: {} vs {}",
                    dense[a][b],
                    full[fa][fb]
                );
            }
        }
    }
}

#[test]
fn consistent_edge_load_sums_to_resultant() {
    let sys = left_clamped(rect_mesh_grid(2.0, 0.5, 8, 2, MeshPattern::RightDiagonal).unwrap(), 0.0, [0.3, -0.7]);
    let f = sys.load_full();
    // clamped DOFs are zeroed: the left top node carries half an edge
    let fx: f64 = f.iter().step_by(2).sum();
    let fy: f64 = f.iter().skip(1).step_by(2).sum();
    let h = 2.0 / 8.0;
    assert!((fx - 0.3 * (2.0 - h / 2.0)).abs() < 1e-14, "{fx}");
    assert!((fy + 0.7 * (2.0 - h / 2.0)).abs() < 1e-14, "{fy}");
}

#[test]
fn uniform_growth_is_stress_free_on_an_isostatic_body() {
    let mesh = generate_rect_mesh(1.0, 0.5, 0.1).unwrap();
    let sc = Scenario::perimeter();
    let sys = assemble_on(&sc, mesh).unwrap();
    let g = [0.013, -0.004, 0.006];
    let gamma: Vec<f64> = (0..sys.n_elements()).flat_map(|_| g).collect();
    let u = sys.solve_equilibrium(&gamma);
    for e in 0..sys.n_elements() {
        let eps = sys.element_strain(&u, e);
        for k in 0..3 {
            assert!((eps[k] - g[k]).abs() < 1e-12, "element {e}: strain {eps:?}");
        }
    }
    let t = cauchy_stress(&sys, &u, &gamma);
    let worst = t.values.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(worst < 1e-12, "{worst}");
}

#[test]
fn response_is_affine_in_growth() {
    let sc = Scenario::cantilever();
    let sys = sc.assemble().unwrap();
    let gamma: Vec<f64> = (0..sys.n_growth()).map(|i| ((i * 7919) % 13) as f64 * 1e-3 - 6e-3).collect();
    let total = sys.solve_reduced(&gamma, true);
    let growth = sys.solve_reduced(&gamma, false);
    let load = sys.solve_reduced(&vec![0.0; sys.n_growth()], true);
    let scale = total.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for i in 0..total.len() {
        assert!((total[i] - growth[i] - load[i]).abs() < 1e-12 * scale);
    }
    let u = sys.solve_equilibrium(&gamma);
    let res = sys.equilibrium_residual(&u, &gamma);
    println!("relative residual {res:e}");
    assert!(res < 1e-10, "{res:e}");
}

#[test]
fn stiffness_is_symmetric() {
    let sys = Scenario::doubly_clamped().assemble().unwrap();
    let k = sys.stiffness();
    let kt = k.transpose();
    let d = k - &kt;
    assert!(d.values().iter().all(|v| v.abs() < 1e-14));
}

#[test]
fn cantilever_tip_matches_beam_theory() {
    let sc = Scenario::cantilever();
    let sys = sc.assemble().unwrap();
    let u = sys.solve_equilibrium(&vec![0.0; sys.n_growth()]);
    let (lo, hi) = sys.mesh().bounding_box();
    let tip: Vec<usize> = (0..sys.mesh().n_nodes()).filter(|&n| sys.mesh().nodes()[n][0] == hi[0]).collect();
    let w = tip.iter().map(|&n| u[2 * n + 1]).sum::<f64>() / tip.len() as f64;
    let (l, h) = (hi[0] - lo[0], hi[1] - lo[1]);
    let inertia = h.powi(3) / 12.0;
    let beam = -sc.load * l.powi(4) / (8.0 * sc.young * inertia);
    let rel = (w - beam).abs() / beam.abs();
    println!("tip {w:e}, beam theory {beam:e}, relative gap {rel:.3}");
    assert!(rel <= 0.30, "{rel}");
}

#[test]
fn pinned_body_without_enough_pins_is_rejected() {
    let mesh = rect_mesh_grid(1.0, 1.0, 2, 2, MeshPattern::RightDiagonal).unwrap();
    let mesh = mesh.with_tags(vec![], |_, _| false).unwrap();
    let red = DofReduction::new(mesh.n_nodes(), &[], &[(0, Component::X), (0, Component::Y)]).unwrap();
    let r = assemble(mesh, ElasticLaw::new(1.0, 0.0).unwrap(), BoundaryLoad { traction: [0.0, 0.0] }, red, ShearWeight::Engineering);
    assert!(r.is_err());
}
