use std::sync::Arc;

use morphrom::macrofem::{
    compare_fields, compliance, cooks_membrane, equilibrium_imbalance, solve_macro, stretch_deviation, ConstitutiveProvider,
    Fe2Provider, HomogeneousProvider, MacroOptions, MaterialPoint,
};
use morphrom::material::{rotation, NeoHookean};
use morphrom::mesh::build_parent_disk_mesh;
use morphrom::microfem::{Phases, SolverOptions};
use morphrom::morph::{assemble_auxiliary, Family, GeometryParam, ParentGeometry};
use morphrom::tensor::Tensor2;
use proptest::prelude::*;

#[test]
fn homogeneous_membrane_converges_quadratically_and_balances() {
    let problem = cooks_membrane(6, 6, 0.05).unwrap();
    let provider = HomogeneousProvider(NeoHookean::new(1.0, 1.0).unwrap());
    let sol = solve_macro(&problem, &provider, &MacroOptions::default()).unwrap();
    assert!(sol.record.iterations <= 8, "{:?}", sol.record);
    assert!(equilibrium_imbalance(&problem, &provider, &sol).unwrap() < 1e-8);
    let fc = compliance(&problem, &sol);
    assert!(fc > 0.0);
    // Residual ratios collapse faster than linearly near the solution.
    let r = &sol.record.residuals;
    let n = r.len();
    assert!(n >= 3 && r[n - 1] / r[n - 2] < 0.1 * (r[n - 2] / r[n - 3]).max(1e-3), "{r:?}");
}

#[test]
fn finer_macro_meshes_converge() {
    let provider = HomogeneousProvider(NeoHookean::new(1.0, 1.0).unwrap());
    let fc: Vec<f64> = [4, 8, 16]
        .iter()
        .map(|&n| {
            let p = cooks_membrane(n, n, 0.05).unwrap();
            compliance(&p, &solve_macro(&p, &provider, &MacroOptions::default()).unwrap())
        })
        .collect();
    assert!((fc[2] - fc[1]).abs() < (fc[1] - fc[0]).abs());
}

#[test]
fn nested_solver_with_one_phase_reproduces_the_material() {
    let m = NeoHookean::new(1.0, 1.0).unwrap();
    let mesh = Arc::new(build_parent_disk_mesh(0.225, 4).unwrap());
    let op = assemble_auxiliary(mesh, ParentGeometry::for_family(Family::Ellipse, 0.225), 0.3).unwrap();
    let point = MaterialPoint {
        index: 0,
        x: [1.0, 2.0],
        mu: GeometryParam::Ellipse {
            a: 0.35,
            b: 0.1,
            theta: 0.5,
        },
    };
    let fe2 = Fe2Provider::new(&[point], &op, Phases::homogeneous(m), SolverOptions::default()).unwrap();
    let f = rotation(0.3) * Tensor2::new(1.06, 0.04, 0.04, 0.95);
    let (p, a) = fe2.evaluate(&f, &point).unwrap();
    let (pm, am) = m.stress_and_tangent(&f).unwrap();
    assert!((p - pm).norm() <= 1e-9 * pm.norm());
    assert!((a.0 - am.0).norm() <= 1e-5 * am.norm(), "{}", (a.0 - am.0).norm());
}

#[test]
fn identical_solutions_compare_as_zero() {
    let problem = cooks_membrane(4, 4, 0.05).unwrap();
    let provider = HomogeneousProvider(NeoHookean::new(1.0, 1.0).unwrap());
    let sol = solve_macro(&problem, &provider, &MacroOptions::default()).unwrap();
    let c = compare_fields(&problem, &sol, &sol).unwrap();
    assert_eq!(c.relative_l2, 0.0);
    assert_eq!(c.max_abs, 0.0);
    assert!(c.reference_max > 0.0);
}

proptest! {
    #[test]
    fn rigid_rotations_have_no_stretch(angle in -3.1..3.1f64) {
        prop_assert!(stretch_deviation(&rotation(angle)).unwrap() < 1e-12);
    }

    #[test]
    fn stretch_deviation_ignores_rotation(angle in -3.1..3.1f64, e in -0.2..0.2f64, g in -0.2..0.2f64) {
        let u = Tensor2::new(1.0 + e, g, g, 1.0 - 0.5 * e);
        let d0 = stretch_deviation(&u).unwrap();
        let d1 = stretch_deviation(&(rotation(angle) * u)).unwrap();
        prop_assert!((d0 - d1).abs() < 1e-12);
        prop_assert!((d0 - e.abs().max(0.5 * e.abs()).max(g.abs())).abs() < 1e-12);
    }
}
