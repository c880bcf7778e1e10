//! Cone and feasible-set projections against independent oracles.

use nalgebra::{Matrix2, SymmetricEigen};
use proptest::prelude::*;

use growthopt::constraints::{
    cone_beta, lambda_min_2x2, project_feasible_increment, project_psd, project_psd_weighted, project_trace_psd,
    MassBalance,
};
use growthopt::evolution::{assemble_on, Scenario};
use growthopt::mesh::{rect_mesh_grid, MeshPattern};
use growthopt::{AssembledSystem, BalanceMode, BalanceRelation, ShearWeight};

/// Squared norm with weights (1, 1, β/2), the per-element metric of the cone projection.
fn wnorm_sq(x: [f64; 3], beta: f64) -> f64 {
    x[0] * x[0] + x[1] * x[1] + 0.5 * beta * x[2] * x[2]
}

fn wdot(x: [f64; 3], y: [f64; 3], beta: f64) -> f64 {
    x[0] * y[0] + x[1] * y[1] + 0.5 * beta * x[2] * y[2]
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn eigen_clip(g: [f64; 3]) -> [f64; 3] {
    let m = Matrix2::new(g[0], 0.5 * g[2], 0.5 * g[2], g[1]);
    let eig = SymmetricEigen::new(m);
    let d = eig.eigenvalues.map(|v| v.max(0.0));
    let r = eig.eigenvectors * Matrix2::from_diagonal(&d) * eig.eigenvectors.transpose();
    [r[(0, 0)], r[(1, 1)], r[(0, 1)] + r[(1, 0)]]
}

fn vec3() -> impl Strategy<Value = [f64; 3]> {
    [-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn spectral_projection_matches_eigen_clipping(g in vec3()) {
        let p = project_psd(g);
        let q = eigen_clip(g);
        for k in 0..3 {
            prop_assert!((p[k] - q[k]).abs() < 1e-12, "{:?} vs {:?}", p, q);
        }
    }

    #[test]
    fn weighted_projection_is_idempotent_and_feasible(g in vec3(), beta in 0.2..5.0f64) {
        let p = project_psd_weighted(g, beta);
        prop_assert!(lambda_min_2x2(p) >= -1e-12);
        let pp = project_psd_weighted(p, beta);
        for k in 0..3 {
            prop_assert!((p[k] - pp[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn weighted_projection_is_nonexpansive(x in vec3(), y in vec3(), beta in 0.2..5.0f64) {
        let px = project_psd_weighted(x, beta);
        let py = project_psd_weighted(y, beta);
        prop_assert!(wnorm_sq(sub(px, py), beta) <= wnorm_sq(sub(x, y), beta) * (1.0 + 1e-12) + 1e-24);
    }

    #[test]
    fn weighted_projection_satisfies_the_variational_inequality(x in vec3(), y in vec3(), beta in 0.2..5.0f64) {
        let px = project_psd_weighted(x, beta);
        let yc = eigen_clip(y);
        prop_assert!(wdot(sub(x, px), sub(yc, px), beta) <= 1e-12);
    }

    #[test]
    fn unit_beta_is_the_spectral_projection(g in vec3()) {
        let a = project_psd_weighted(g, 1.0);
        let b = project_psd(g);
        for k in 0..3 {
            prop_assert!((a[k] - b[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn trace_projection_lands_on_the_slice(g in vec3(), t in 0.0..2.0f64, beta in 0.2..5.0f64) {
        let p = project_trace_psd(g, t, beta).unwrap();
        prop_assert!((p[0] + p[1] - t).abs() < 1e-12);
        prop_assert!(lambda_min_2x2(p) >= -1e-12);
        // any other slice point that is PSD is not closer
        for y in [[t, 0.0, 0.0], [0.0, t, 0.0], [0.5 * t, 0.5 * t, 0.0], [0.5 * t, 0.5 * t, t], [0.5 * t, 0.5 * t, -t]] {
            prop_assert!(wdot(sub(g, p), sub(y, p), beta) <= 1e-10);
        }
    }
}

fn small_system(weight: ShearWeight) -> AssembledSystem {
    let mut sc = Scenario::doubly_clamped();
    sc.shear_weight = weight;
    assemble_on(&sc, rect_mesh_grid(1.0, 0.2, 5, 2, MeshPattern::Crossed).unwrap()).unwrap()
}

/// Dykstra's alternating projections onto the balance set and the product cone, both in the L metric.
fn dykstra(z: &[f64], sys: &AssembledSystem, balance: &MassBalance, iters: usize) -> Vec<f64> {
    let l = sys.l_diag();
    let a = sys.trace_weights();
    let beta = cone_beta(sys.shear_weight());
    let ineq = balance.relation == BalanceRelation::Inequality;
    let project_balance = |x: &[f64]| -> Vec<f64> {
        let mut y = x.to_vec();
        match balance.mode {
            BalanceMode::Global => {
                let t = balance.global_target(sys);
                let ax: f64 = a.iter().zip(x).map(|(a, x)| a * x).sum();
                if ineq && ax <= t {
                    return y;
                }
                let aa: f64 = a.iter().zip(l).map(|(a, l)| a * a / l).sum();
                for i in 0..y.len() {
                    y[i] -= (ax - t) * a[i] / l[i] / aa;
                }
            }
            BalanceMode::Local => {
                let t = balance.local_targets(sys.n_elements()).unwrap();
                for e in 0..sys.n_elements() {
                    let i = 3 * e;
                    let s = x[i] + x[i + 1];
                    if ineq && s <= t[e] {
                        continue;
                    }
                    let m = 1.0 / l[i] + 1.0 / l[i + 1];
                    y[i] -= (s - t[e]) / l[i] / m;
                    y[i + 1] -= (s - t[e]) / l[i + 1] / m;
                }
            }
        }
        y
    };
    let project_cone = |x: &[f64]| -> Vec<f64> {
        x.chunks_exact(3)
            .flat_map(|g| project_psd_weighted([g[0], g[1], g[2]], beta))
            .collect()
    };
    let n = z.len();
    let mut x = z.to_vec();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for _ in 0..iters {
        let y_in: Vec<f64> = (0..n).map(|i| x[i] + p[i]).collect();
        let y = project_balance(&y_in);
        for i in 0..n {
            p[i] = y_in[i] - y[i];
        }
        let x_in: Vec<f64> = (0..n).map(|i| y[i] + q[i]).collect();
        x = project_cone(&x_in);
        for i in 0..n {
            q[i] = x_in[i] - x[i];
        }
    }
    x
}

fn pseudo_random(n: usize, seed: u64) -> Vec<f64> {
    let mut s = seed;
    (0..n)
        .map(|_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 0.2 - 0.1
        })
        .collect()
}

#[test]
fn exact_feasible_projection_matches_dykstra() {
    for weight in [ShearWeight::Engineering, ShearWeight::Frobenius] {
        let sys = small_system(weight);
        for (mode, relation, gamma) in [
            (BalanceMode::Global, BalanceRelation::Equality, 0.05),
            (BalanceMode::Global, BalanceRelation::Inequality, 0.01),
            (BalanceMode::Local, BalanceRelation::Equality, 0.03),
            (BalanceMode::Local, BalanceRelation::Inequality, 0.0),
        ] {
            let balance = MassBalance::new(mode, relation, gamma).unwrap();
            for seed in 0..3 {
                let z = pseudo_random(sys.n_growth(), seed);
                let exact = project_feasible_increment(&z, &balance, &sys).unwrap();
                let oracle = dykstra(&z, &sys, &balance, 20000);
                let diff = exact.iter().zip(&oracle).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                assert!(diff < 1e-7, "{weight:?} {mode:?} {relation:?} seed {seed}: {diff:e}");
                assert!(balance.residual(&exact, &sys).unwrap() < 1e-12);
            }
        }
    }
}

#[test]
fn projection_of_a_feasible_point_is_itself() {
    let sys = small_system(ShearWeight::Engineering);
    let balance = MassBalance::global(0.05).unwrap();
    let uniform: Vec<f64> = (0..sys.n_elements()).flat_map(|_| [0.025, 0.025, 0.0]).collect();
    let p = project_feasible_increment(&uniform, &balance, &sys).unwrap();
    let diff = p.iter().zip(&uniform).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(diff < 1e-14);
}
