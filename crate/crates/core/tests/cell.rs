//! Cell-level properties on coarse meshes: solver sanity, map quality,
//! reduced auxiliary solves, invariance and equilibrium of stress modes.

use std::sync::Arc;

use morphrom::material::NeoHookean;
use morphrom::mesh::build_parent_disk_mesh;
use morphrom::microfem::{Phases, Rve, SolverOptions};
use morphrom::morph::{assemble_auxiliary, reduce_auxiliary, AuxiliaryOperator, Family, GeometryParam, ParentGeometry};
use morphrom::pipeline::sampling;
use morphrom::pipeline::verify::{negative_control, INVARIANCE_FLOOR};
use morphrom::rom;
use morphrom::tensor::Tensor2;
use proptest::prelude::*;

const RADIUS: f64 = 0.225;

fn operator(refinement: usize) -> AuxiliaryOperator {
    let mesh = Arc::new(build_parent_disk_mesh(RADIUS, refinement).unwrap());
    assemble_auxiliary(mesh, ParentGeometry::for_family(Family::Ellipse, RADIUS), 0.3).unwrap()
}

fn phases() -> Phases {
    Phases {
        matrix: NeoHookean::new(1.0, 1.0).unwrap(),
        fiber: NeoHookean::new(100.0, 100.0).unwrap(),
    }
}

fn ellipse(a: f64, b: f64, theta: f64) -> GeometryParam {
    GeometryParam::Ellipse { a, b, theta }
}

fn geometry() -> impl Strategy<Value = GeometryParam> {
    (0.12..0.33f64, 0.12..0.33f64, -1.5..1.5f64).prop_map(|(a, b, t)| ellipse(a, b, t))
}

#[test]
fn homogeneous_cell_has_no_fluctuation() {
    let mesh = build_parent_disk_mesh(RADIUS, 4).unwrap();
    let m = NeoHookean::new(1.0, 1.0).unwrap();
    let rve = Rve::new(mesh, Phases::homogeneous(m)).unwrap();
    let fbar = Tensor2::new(1.1, 0.05, -0.02, 0.92);
    let sol = rve.solve(&fbar, &SolverOptions::default()).unwrap();
    assert!(sol.w.iter().fold(0.0f64, |a, v| a.max(v.abs())) <= 1e-10);
    assert!((sol.pbar - m.pk1(&fbar).unwrap()).norm() <= 1e-10 * sol.pbar.norm());
}

#[test]
fn heterogeneous_cell_reproduces_average_deformation() {
    let op = operator(4);
    let map = op.solve_transformation(&ellipse(0.3, 0.15, 0.4)).unwrap();
    let rve = Rve::new(op.morph_mesh(&map), phases()).unwrap();
    let fbar = Tensor2::new(0.9, 0.1, 0.1, 1.08);
    let sol = rve.solve(&fbar, &SolverOptions::default()).unwrap();
    assert!((rve.average(&sol.f) - fbar).norm() <= 1e-10);
    // The average tangent is not the effective stiffness.
    let (_, a_eff) = rve.effective_stiffness_fd(&fbar, 1e-6, &SolverOptions::default()).unwrap();
    let a_avg = rve.average_tangent(&sol.f).unwrap();
    assert!((a_eff.0 - a_avg.0).norm() > 1e-3);
}

#[test]
fn reduced_auxiliary_has_three_modes_and_matches_full_solves() {
    let op = operator(4);
    let ranges = Family::Ellipse.default_ranges();
    let train: Vec<GeometryParam> = sampling::sobol(&ranges, 20)
        .unwrap()
        .iter()
        .map(|g| GeometryParam::from_slice(Family::Ellipse, g).unwrap())
        .collect();
    let red = reduce_auxiliary(&op, &train, 1e-10).unwrap();
    assert_eq!(red.n_modes(), 3);
    for g in sampling::uniform(&ranges, 10, 5) {
        let mu = GeometryParam::from_slice(Family::Ellipse, &g).unwrap();
        let (Ok(full), Ok(fast)) = (op.solve_transformation(&mu), red.solve(&op, &mu)) else {
            continue;
        };
        let diff: f64 = full.d.iter().zip(&fast.d).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = full.d.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(diff <= 1e-8 * norm, "{diff} vs {norm}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn maps_preserve_cell_area(mu in geometry()) {
        let op = operator(4);
        let map = op.solve_transformation(&mu).unwrap();
        prop_assert!((map.volume(&op.cache) - 1.0).abs() <= 1e-8);
        prop_assert!(map.min_det().1 > 0.0);
        let morphed = op.morph_mesh(&map);
        prop_assert!((morphed.area().unwrap() - 1.0).abs() <= 1e-8);
    }
}

#[test]
fn stress_modes_are_invariant_and_in_equilibrium() {
    let op = operator(4);
    let rve_phases = phases();
    let opts = SolverOptions::default();
    let inputs = sampling::sobol(
        &[[0.9, 1.1], [0.9, 1.1], [-0.1, 0.1], [0.12, 0.33], [0.12, 0.33], [-1.5, 1.5]],
        20,
    )
    .unwrap();
    let snaps: Vec<Vec<f64>> = inputs
        .iter()
        .map(|x| {
            let mu = GeometryParam::from_slice(Family::Ellipse, &x[3..]).unwrap();
            let map = op.solve_transformation(&mu).unwrap();
            let rve = Rve::new(op.morph_mesh(&map), rve_phases).unwrap();
            let sol = rve.solve(&Tensor2::new(x[0], x[2], x[2], x[1]), &opts).unwrap();
            rom::weighted_stress(&sol, &map).unwrap()
        })
        .collect();
    let basis = rom::pod(&snaps, &op.cache, Some(8)).unwrap();
    let control = negative_control(&basis, &op.cache.points);
    for g in sampling::uniform(&[[0.12, 0.33], [0.12, 0.33], [-1.5, 1.5]], 5, 11) {
        let mu = GeometryParam::from_slice(Family::Ellipse, &g).unwrap();
        let map = op.solve_transformation(&mu).unwrap();
        for r in rom::verify_invariance(&basis, &map, INVARIANCE_FLOOR) {
            assert!(r <= 1e-5, "mode residual {r}");
        }
        assert!(rom::invariance_residual(&control, &basis.weights, &map, INVARIANCE_FLOOR) > 1e-3);
        let alpha: Vec<f64> = (0..basis.n_modes()).map(|k| 1.0 / (k + 1) as f64).collect();
        let p = rom::reconstruct_stress(&alpha, &basis, &map).unwrap();
        let mesh = op.morph_mesh(&map);
        let eq = rom::equilibrium(&mesh, &mesh.quadrature().unwrap(), &p);
        assert!(eq.interior_ratio() <= 1e-6 && eq.periodic_ratio() <= 1e-8, "{eq:?}");
    }
}
