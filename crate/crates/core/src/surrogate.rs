//! The trained effective constitutive law.
//!
//! Effective quantities are `Pbar = sum_n alpha_n Bbar_n` with `alpha_n` the
//! GPR posterior means, so no geometry map is needed online. Full stress
//! fields additionally need the reduced auxiliary model and the POD modes.
//!
//! Regression inputs are `[U_xx, U_yy, U_xy, lambda.., mu..]`.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::material::{polar_decompose, rotated_tangent};
use crate::mesh::{self, Mesh};
use crate::morph::{self, AuxiliaryOperator, Family, GeometryParam, ParentGeometry, ReducedAuxiliary, TransformationMap};
use crate::pipeline::rba::Array;
use crate::regress::{Gpr, GprParts};
use crate::rom::{self, PodBasis};
use crate::tensor::{flatten, Tensor2, Tensor4};

pub const FORMAT_VERSION: u32 = 1;
/// Number of stretch inputs.
pub const STRETCH_DIM: usize = 3;

/// Everything needed to rebuild stress fields on a morphed cell.
#[derive(Debug)]
pub struct RecoveryPack {
    pub basis: PodBasis,
    pub operator: Arc<AuxiliaryOperator>,
    pub reduced: ReducedAuxiliary,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 of the training dataset manifest.
    pub dataset_hash: String,
    pub seed: u64,
}

#[derive(Debug)]
pub struct SurrogateModel {
    pub family: Family,
    /// Number of material inputs between stretch and geometry.
    pub material_dim: usize,
    pub input_ranges: Vec<[f64; 2]>,
    pub effective_basis: Vec<Tensor2>,
    pub gprs: Vec<Gpr>,
    pub recovery: Option<RecoveryPack>,
    pub provenance: Provenance,
    out_of_range: AtomicUsize,
}

/// Stress on the morphed cell.
#[derive(Debug, Clone)]
pub struct RecoveredField {
    pub mesh: Mesh,
    pub map: TransformationMap,
    /// Stress per quadrature point of the morphed mesh.
    pub stress: Vec<Tensor2>,
    pub alpha: Vec<f64>,
}

impl SurrogateModel {
    pub fn new(
        family: Family,
        material_dim: usize,
        input_ranges: Vec<[f64; 2]>,
        effective_basis: Vec<Tensor2>,
        gprs: Vec<Gpr>,
        recovery: Option<RecoveryPack>,
        provenance: Provenance,
    ) -> Result<Self> {
        let dim = STRETCH_DIM + material_dim + family.dim();
        if input_ranges.len() != dim {
            return Err(Error::InvalidArgument(format!(
                "expected {dim} input ranges, got {}",
                input_ranges.len()
            )));
        }
        if gprs.len() != effective_basis.len() {
            return Err(Error::InvalidArgument(format!(
                "{} regressors for {} basis tensors",
                gprs.len(),
                effective_basis.len()
            )));
        }
        if gprs.iter().any(|g| g.dim() != dim) {
            return Err(Error::InvalidArgument("regressor input dimension mismatch".into()));
        }
        if let Some(pack) = &recovery {
            if pack.basis.n_modes() != gprs.len() {
                return Err(Error::InvalidArgument("recovery basis size mismatch".into()));
            }
        }
        Ok(SurrogateModel {
            family,
            material_dim,
            input_ranges,
            effective_basis,
            gprs,
            recovery,
            provenance,
            out_of_range: AtomicUsize::new(0),
        })
    }

    pub fn n_modes(&self) -> usize {
        self.gprs.len()
    }

    pub fn input_dim(&self) -> usize {
        self.input_ranges.len()
    }

    /// Number of evaluations that fell outside the training box.
    pub fn out_of_range_count(&self) -> usize {
        self.out_of_range.load(Ordering::Relaxed)
    }

    pub fn input(&self, u: &Tensor2, lambda: &[f64], mu: &GeometryParam) -> Result<Vec<f64>> {
        if lambda.len() != self.material_dim {
            return Err(Error::InvalidArgument(format!(
                "expected {} material parameters, got {}",
                self.material_dim,
                lambda.len()
            )));
        }
        if mu.family() != self.family {
            return Err(Error::InvalidArgument(format!(
                "model trained for {:?}, got {:?}",
                self.family,
                mu.family()
            )));
        }
        let mut x = vec![u[(0, 0)], u[(1, 1)], 0.5 * (u[(0, 1)] + u[(1, 0)])];
        x.extend_from_slice(lambda);
        x.extend(mu.to_vec());
        let inside = x
            .iter()
            .zip(&self.input_ranges)
            .all(|(v, r)| *v >= r[0] - 1e-12 && *v <= r[1] + 1e-12);
        if !inside && self.out_of_range.fetch_add(1, Ordering::Relaxed) == 0 {
            log::warn!("surrogate evaluated outside its training range at {x:?}");
        }
        Ok(x)
    }

    pub fn coefficients(&self, x: &[f64]) -> Vec<f64> {
        self.gprs.iter().map(|g| g.mean(x)).collect()
    }

    fn combine(&self, alpha: &[f64]) -> Tensor2 {
        self.effective_basis
            .iter()
            .zip(alpha)
            .fold(Tensor2::zeros(), |acc, (b, a)| acc + b * *a)
    }

    pub fn effective_stress(&self, u: &Tensor2, lambda: &[f64], mu: &GeometryParam) -> Result<Tensor2> {
        let x = self.input(u, lambda, mu)?;
        Ok(self.combine(&self.coefficients(&x)))
    }

    /// Stress and `sum_n Bbar_n d alpha_n / dx_k` for every input `k`.
    fn stress_and_derivatives(&self, x: &[f64]) -> (Tensor2, Vec<Tensor2>) {
        let mut p = Tensor2::zeros();
        let mut out = vec![Tensor2::zeros(); x.len()];
        for (g, b) in self.gprs.iter().zip(&self.effective_basis) {
            let (m, grad) = g.mean_and_gradient(x);
            p += b * m;
            for (o, d) in out.iter_mut().zip(grad) {
                *o += b * d;
            }
        }
        (p, out)
    }

    /// Stress and `dPbar/dU` with the `U_xy` derivative split equally over
    /// the `xy` and `yx` slots.
    pub fn stress_and_stiffness(&self, u: &Tensor2, lambda: &[f64], mu: &GeometryParam) -> Result<(Tensor2, Tensor4)> {
        let x = self.input(u, lambda, mu)?;
        let (p, d) = self.stress_and_derivatives(&x);
        let mut a = Tensor4::zeros();
        for (cols, dp, share) in [(&[0usize][..], d[0], 1.0), (&[3], d[1], 1.0), (&[1, 2], d[2], 0.5)] {
            let v = flatten(&dp);
            for &c in cols {
                for r in 0..4 {
                    a.0[(r, c)] = v[r] * share;
                }
            }
        }
        Ok((p, a))
    }

    pub fn effective_stiffness(&self, u: &Tensor2, lambda: &[f64], mu: &GeometryParam) -> Result<Tensor4> {
        Ok(self.stress_and_stiffness(u, lambda, mu)?.1)
    }

    /// `(dPbar/dlambda_k, dPbar/dmu_k)`.
    pub fn sensitivities(&self, u: &Tensor2, lambda: &[f64], mu: &GeometryParam) -> Result<(Vec<Tensor2>, Vec<Tensor2>)> {
        let x = self.input(u, lambda, mu)?;
        let (_, d) = self.stress_and_derivatives(&x);
        let split = STRETCH_DIM + self.material_dim;
        Ok((d[STRETCH_DIM..split].to_vec(), d[split..].to_vec()))
    }

    /// Stress and tangent for a general macroscopic deformation gradient
    /// `F = R U`, evaluating the surrogate at the stretch `U`.
    pub fn evaluate_with_rotation(&self, f: &Tensor2, lambda: &[f64], mu: &GeometryParam) -> Result<(Tensor2, Tensor4)> {
        let (r, u) = polar_decompose(f)?;
        let (p_hat, a_hat) = self.stress_and_stiffness(&u, lambda, mu)?;
        Ok((r * p_hat, rotated_tangent(f, &p_hat, &a_hat)?))
    }

    /// Solves the reduced auxiliary problem and rebuilds the stress field on
    /// the morphed cell.
    pub fn recover_stress_field(&self, u: &Tensor2, lambda: &[f64], mu: &GeometryParam) -> Result<RecoveredField> {
        let pack = self
            .recovery
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("model has no field-recovery data".into()))?;
        let x = self.input(u, lambda, mu)?;
        let alpha = self.coefficients(&x);
        let map = pack.reduced.solve(&pack.operator, mu)?;
        let stress = rom::reconstruct_stress(&alpha, &pack.basis, &map)?;
        let mesh = pack.operator.morph_mesh(&map);
        Ok(RecoveredField {
            mesh,
            map,
            stress,
            alpha,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<String> {
        std::fs::create_dir_all(dir)?;
        let recovery = match &self.recovery {
            Some(pack) => {
                Array::from_rows(&pack.basis.modes)?.write(&dir.join(POD_FILE))?;
                Array::from_rows(&pack.reduced.basis)?.write(&dir.join(AUX_FILE))?;
                mesh::write_mesh(&pack.operator.mesh, dir.join(MESH_FILE))?;
                Some(RecoveryManifest {
                    parent: pack.operator.parent,
                    xi: pack.operator.xi,
                    young: pack.operator.young,
                    pod_eigenvalues: pack.basis.eigenvalues.clone(),
                    aux_eigenvalues: pack.reduced.eigenvalues.clone(),
                })
            }
            None => None,
        };
        let manifest = SurrogateManifest {
            format_version: FORMAT_VERSION,
            family: self.family,
            material_dim: self.material_dim,
            input_ranges: self.input_ranges.clone(),
            effective_basis: self.effective_basis.iter().map(flatten).collect(),
            gprs: self.gprs.iter().map(Gpr::parts).collect(),
            provenance: self.provenance.clone(),
            recovery,
        };
        std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(&manifest)?)?;
        model_hash(dir)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = parse_manifest(&std::fs::read(dir.join(MANIFEST_FILE))?)?;
        let gprs = manifest
            .gprs
            .into_iter()
            .map(Gpr::from_parts)
            .collect::<Result<Vec<_>>>()?;
        let recovery = match manifest.recovery {
            Some(r) => {
                let parent_mesh = Arc::new(mesh::read_mesh(dir.join(MESH_FILE))?);
                let cache = parent_mesh.quadrature()?;
                let modes = Array::read(&dir.join(POD_FILE))?.rows()?;
                let weights = rom::component_weights(&cache);
                if modes.iter().any(|m| m.len() != weights.len()) {
                    return Err(Error::Format("POD modes do not match the parent mesh".into()));
                }
                let operator = Arc::new(morph::assemble_auxiliary_with_modulus(parent_mesh, r.parent, r.xi, r.young)?);
                let aux_basis = Array::read(&dir.join(AUX_FILE))?.rows()?;
                let reduced = ReducedAuxiliary::from_basis(&operator, aux_basis, r.aux_eigenvalues)?;
                Some(RecoveryPack {
                    basis: PodBasis {
                        modes,
                        eigenvalues: r.pod_eigenvalues,
                        coefficients: Vec::new(),
                        weights,
                    },
                    operator,
                    reduced,
                })
            }
            None => None,
        };
        SurrogateModel::new(
            manifest.family,
            manifest.material_dim,
            manifest.input_ranges,
            manifest.effective_basis.iter().map(crate::tensor::unflatten).collect(),
            gprs,
            recovery,
            manifest.provenance,
        )
    }
}

pub const MANIFEST_FILE: &str = "surrogate.json";
pub const POD_FILE: &str = "pod_modes.rba";
pub const AUX_FILE: &str = "aux_basis.rba";
pub const MESH_FILE: &str = "parent.mesh";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoveryManifest {
    pub parent: ParentGeometry,
    pub xi: f64,
    pub young: f64,
    pub pod_eigenvalues: Vec<f64>,
    pub aux_eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateManifest {
    pub format_version: u32,
    pub family: Family,
    pub material_dim: usize,
    pub input_ranges: Vec<[f64; 2]>,
    pub effective_basis: Vec<[f64; 4]>,
    pub gprs: Vec<GprParts>,
    pub provenance: Provenance,
    pub recovery: Option<RecoveryManifest>,
}

/// Parses and checks a surrogate manifest.
pub fn parse_manifest(bytes: &[u8]) -> Result<SurrogateManifest> {
    let m: SurrogateManifest = serde_json::from_slice(bytes)?;
    if m.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported surrogate format {}", m.format_version)));
    }
    let dim = STRETCH_DIM + m.material_dim + m.family.dim();
    if m.input_ranges.len() != dim {
        return Err(Error::Format("input range count mismatch".into()));
    }
    if m.effective_basis.len() != m.gprs.len() {
        return Err(Error::Format("basis and regressor counts differ".into()));
    }
    for g in &m.gprs {
        if g.ranges.len() != dim || g.theta.len() != dim + 2 || g.x.len() != g.y.len() {
            return Err(Error::Format("regressor shape mismatch".into()));
        }
        if g.x.iter().any(|r| r.len() != dim) {
            return Err(Error::Format("regressor input width mismatch".into()));
        }
    }
    Ok(m)
}

/// SHA-256 over the model files in a fixed order.
pub fn model_hash(dir: &Path) -> Result<String> {
    let mut h = Sha256::new();
    for name in [MANIFEST_FILE, POD_FILE, AUX_FILE, MESH_FILE] {
        let path = dir.join(name);
        if path.exists() {
            h.update(name.as_bytes());
            h.update(std::fs::read(path)?);
        }
    }
    Ok(hex::encode(h.finalize()))
}
