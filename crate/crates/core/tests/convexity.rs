//! Convexity of the perimeter in growth space, and its flat directions.

use proptest::prelude::*;

use growthopt::evolution::{assemble_on, Scenario};
use growthopt::mesh::{rect_mesh_grid, MeshPattern};
use growthopt::objectives::convexity_probe;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn midpoint_inequality_and_affine_kernel(seed in any::<u64>(), scale in 0.001..0.1f64) {
        let sc = Scenario::perimeter();
        let sys = assemble_on(&sc, rect_mesh_grid(1.0, 0.5, 3, 2, MeshPattern::RightDiagonal).unwrap()).unwrap();
        let r = convexity_probe(&sys, 1, scale, seed).unwrap();
        prop_assert!(r.max_violation <= 1e-12, "{}", r.max_violation);
        prop_assert!(r.kernel_residual <= 1e-10, "{}", r.kernel_residual);
        prop_assert!(r.kernel_affine_deviation <= 1e-8, "{}", r.kernel_affine_deviation);
    }
}

#[test]
fn kernel_direction_is_nontrivial() {
    let sc = Scenario::perimeter();
    let sys = assemble_on(&sc, rect_mesh_grid(1.0, 0.5, 4, 2, MeshPattern::RightDiagonal).unwrap()).unwrap();
    let r = convexity_probe(&sys, 0, 0.05, 3).unwrap();
    assert!(r.kernel_norm > 1e-3, "{}", r.kernel_norm);
    assert!(r.kernel_residual <= 1e-10);
}
