//! A quick oracle and property suite for the `selftest` command. The full
//! suite lives in the integration tests; this one runs in about a second on
//! small meshes.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::constraints::{lambda_min_2x2, max_psd_violation, project_psd_weighted, MassBalance};
use crate::error::Result;
use crate::evolution::{read_checkpoint, run, write_checkpoint, Scenario};
use crate::fem::{assemble, BoundaryLoad, DofReduction, ElasticLaw, ShearWeight};
use crate::mesh::{rect_mesh_grid, MeshPattern};
use crate::objectives::Objective;
use crate::solver::{analytic_increment_global, analytic_increment_local, sparse_max_abs, LocalOperators, SolverPath};
use crate::AssembledSystem;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, value: f64, limit: f64) -> Check {
    Check {
        name,
        passed: value <= limit,
        detail: format!("{value:.3e} <= {limit:.0e}"),
    }
}

fn clamped_block(nx: usize, ny: usize, load: f64) -> Result<AssembledSystem> {
    let mesh = rect_mesh_grid(1.0, 0.25, nx, ny, MeshPattern::RightDiagonal)?;
    let left: Vec<usize> = (0..mesh.n_nodes()).filter(|&n| mesh.nodes()[n][0] == 0.0).collect();
    let mesh = mesh.with_tags(left.clone(), |a, b| a[1] == 0.25 && b[1] == 0.25)?;
    let red = DofReduction::new(mesh.n_nodes(), &left, &[])?;
    assemble(
        mesh,
        ElasticLaw::new(1.0, 0.3)?,
        BoundaryLoad { traction: [0.0, -load] },
        red,
        ShearWeight::Engineering,
    )
}

fn fd_error(sys: &AssembledSystem, objective: Objective, rng: &mut ChaCha8Rng) -> Result<f64> {
    let n = sys.n_growth();
    let base: Vec<f64> = (0..n).map(|_| rng.random_range(-0.02..0.02)).collect();
    let (_, u) = objective.evaluate(sys, &base);
    let g = objective.reduced_grad(sys, &u)?;
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let d: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let shift = |s: f64| -> Vec<f64> { base.iter().zip(&d).map(|(b, v)| b + s * v).collect() };
        let fd = (objective.evaluate(sys, &shift(h)).0 - objective.evaluate(sys, &shift(-h)).0) / (2.0 * h);
        let an: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
        worst = worst.max((fd - an).abs() / an.abs().max(1e-12));
    }
    Ok(worst)
}

/// Runs every check; an `Err` means a check could not be set up at all.
pub fn run_selftest() -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut out = Vec::new();

    let sys = clamped_block(8, 2, 1e-2)?;
    out.push(check("external work gradient vs central differences", fd_error(&sys, Objective::ExternalWork, &mut rng)?, 1e-5));
    out.push(check("perimeter gradient vs central differences", fd_error(&sys, Objective::Perimeter, &mut rng)?, 1e-5));

    let u = sys.solve_equilibrium(&vec![0.01; sys.n_growth()]);
    out.push(check(
        "equilibrium residual",
        sys.equilibrium_residual(&u, &vec![0.01; sys.n_growth()]),
        1e-10,
    ));

    let mut idem: f64 = 0.0;
    let mut psd: f64 = 0.0;
    for _ in 0..1000 {
        let g = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let p = project_psd_weighted(g, 2.0);
        let pp = project_psd_weighted(p, 2.0);
        idem = idem.max((0..3).map(|i| (p[i] - pp[i]).abs()).fold(0.0, f64::max));
        psd = psd.max(-lambda_min_2x2(p));
    }
    out.push(check("cone projection is idempotent", idem, 1e-12));
    out.push(check("cone projection lands in the cone", psd, 1e-12));

    let zero = vec![0.0; sys.n_growth()];
    let (dg, _) = analytic_increment_global(&sys, &zero, 0.05, 10.0);
    let (dl, _) = analytic_increment_local(&sys, &zero, &vec![0.05; sys.n_elements()], 10.0);
    let uniform = |d: &[f64]| {
        d.chunks_exact(3)
            .map(|g| (g[0] - 0.025).abs().max((g[1] - 0.025).abs()).max(g[2].abs()))
            .fold(0.0, f64::max)
    };
    out.push(check("zero-gradient global step is uniform", uniform(&dg), 1e-12));
    out.push(check("zero-gradient local step is uniform", uniform(&dl), 1e-12));

    let ops = LocalOperators::new(&sys);
    let pp = &ops.p * &ops.p;
    let ident = |m: &nalgebra_sparse::CscMatrix<f64>| {
        let mut d = m.clone();
        for (i, j, v) in d.triplet_iter_mut() {
            if i == j {
                *v -= 1.0;
            }
        }
        sparse_max_abs(&d)
    };
    out.push(check("P² = P", sparse_max_abs(&(&pp - &ops.p)), 1e-10));
    out.push(check("P = Pᵀ", sparse_max_abs(&(&ops.p - &ops.p.transpose())), 1e-10));
    out.push(check("A √L⁻¹ V = I", ident(&(&(&ops.a * &ops.sqrt_l_inv) * &ops.v)), 1e-10));
    out.push(check(
        "U √L⁻¹ Aᵀ = I",
        ident(&(&(&ops.u * &ops.sqrt_l_inv) * &ops.a.transpose())),
        1e-10,
    ));

    let mut sc = Scenario::doubly_clamped();
    sc.n_iter = 5;
    sc.snapshot_every = 1;
    sc.solver_path = SolverPath::Numerical;
    match run(&sc) {
        Ok(h) => {
            let kkt = h.records.iter().map(|r| r.kkt_residual).fold(0.0, f64::max);
            out.push(check("numerical beam steps satisfy KKT", kkt, 1e-5));
            let sys = sc.assemble()?;
            let balance = MassBalance::global(sc.gamma)?;
            let mut mass: f64 = 0.0;
            let mut viol: f64 = 0.0;
            for w in h.snapshots.windows(2) {
                let d: Vec<f64> = w[1].gamma.iter().zip(&w[0].gamma).map(|(a, b)| a - b).collect();
                mass = mass.max((sys.total_trace(&d) - balance.global_target(&sys)).abs());
                viol = viol.max(max_psd_violation(&d));
            }
            out.push(check("numerical beam steps conserve mass", mass, 1e-8));
            out.push(check("numerical beam increments are PSD", viol, 1e-10));
        }
        Err(e) => out.push(Check {
            name: "numerical beam steps satisfy KKT",
            passed: false,
            detail: e.to_string(),
        }),
    }

    let gamma: Vec<f64> = (0..sys.n_growth()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, 3, sys.mesh(), &gamma).map_err(|e| crate::Error::io("<memory>", e))?;
    let cp = read_checkpoint(buf.as_slice(), "<memory>")?;
    out.push(Check {
        name: "checkpoint round trip is exact",
        passed: cp.gamma.as_slice() == gamma.as_slice() && cp.iteration == 3,
        detail: String::new(),
    });
    Ok(out)
}
