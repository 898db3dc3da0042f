//! Structural checks of a trained model: invariance of the stress modes
//! under admissible maps and equilibrium of reconstructed fields.

use serde::{Deserialize, Serialize};

use super::dataset::stretch;
use super::sampling;
use crate::error::{Error, Result};
use crate::morph::{GeometryParam, TransformationMap};
use crate::rom::{self, PodBasis};
use crate::surrogate::SurrogateModel;

/// Denominator floor of the invariance residual.
pub const INVARIANCE_FLOOR: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub n_maps: usize,
    /// Largest mode residual over all maps.
    pub max_invariance: f64,
    /// Smallest residual of the perturbed control field over all maps.
    pub min_negative_control: f64,
    pub max_interior_ratio: f64,
    pub max_periodic_ratio: f64,
}

/// A field whose divergence is `(X - 1/2, Y - 1/2)`, so it is not
/// self-equilibrated.
pub fn non_equilibrium_field(points: &[[f64; 2]]) -> Vec<f64> {
    points
        .iter()
        .flat_map(|p| [0.5 * (p[0] - 0.5).powi(2), 0.0, 0.0, 0.5 * (p[1] - 0.5).powi(2)])
        .collect()
}

/// The first mode plus a non-equilibrium field of the same norm.
pub fn negative_control(basis: &PodBasis, points: &[[f64; 2]]) -> Vec<f64> {
    let g = non_equilibrium_field(points);
    let s = basis.norm(&basis.modes[0]) / basis.norm(&g);
    basis.modes[0].iter().zip(&g).map(|(m, v)| m + s * v).collect()
}

/// Invariance and equilibrium over `n_maps` uniformly drawn geometries.
pub fn verify_model(model: &SurrogateModel, n_maps: usize, seed: u64) -> Result<VerifyReport> {
    let pack = model
        .recovery
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("model has no field-recovery data".into()))?;
    let op = &pack.operator;
    let control = negative_control(&pack.basis, &op.cache.points);
    let geo_ranges = &model.input_ranges[3 + model.material_dim..];
    let loads = sampling::uniform(&model.input_ranges[..3], n_maps, seed);
    let mut report = VerifyReport {
        n_maps,
        max_invariance: 0.0,
        min_negative_control: f64::INFINITY,
        max_interior_ratio: 0.0,
        max_periodic_ratio: 0.0,
    };
    for (geo, load) in sampling::uniform(geo_ranges, n_maps, seed.wrapping_add(1)).iter().zip(&loads) {
        let mu = GeometryParam::from_slice(model.family, geo)?;
        let map: TransformationMap = op.solve_transformation(&mu)?;
        for r in rom::verify_invariance(&pack.basis, &map, INVARIANCE_FLOOR) {
            report.max_invariance = report.max_invariance.max(r);
        }
        let c = rom::invariance_residual(&control, &pack.basis.weights, &map, INVARIANCE_FLOOR);
        report.min_negative_control = report.min_negative_control.min(c);
        let field = model.recover_stress_field(&stretch(load), &[], &mu)?;
        let cache = field.mesh.quadrature()?;
        let eq = rom::equilibrium(&field.mesh, &cache, &field.stress);
        report.max_interior_ratio = report.max_interior_ratio.max(eq.interior_ratio());
        report.max_periodic_ratio = report.max_periodic_ratio.max(eq.periodic_ratio());
    }
    Ok(report)
}
