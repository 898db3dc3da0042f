//! POD of weighted stress snapshots on the parent domain.
//!
//! A weighted stress `S = P F_mu^{-T} det F_mu` pulls the first Piola stress
//! of a morphed cell back to the parent quadrature points. Fields are stored
//! flat with four components `(xx, xy, yx, yy)` per point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::mesh::{Mesh, QuadCache};
use crate::microfem::{self, MicroSolution};
use crate::morph::TransformationMap;
use crate::tensor::Tensor2;

/// Relative eigenvalue floor for rank decisions.
pub const EIGEN_FLOOR: f64 = 1e-14;

pub fn to_flat(field: &[Tensor2]) -> Vec<f64> {
    field
        .iter()
        .flat_map(|t| [t[(0, 0)], t[(0, 1)], t[(1, 0)], t[(1, 1)]])
        .collect()
}

pub fn from_flat(flat: &[f64]) -> Vec<Tensor2> {
    flat.chunks_exact(4)
        .map(|c| Tensor2::new(c[0], c[1], c[2], c[3]))
        .collect()
}

/// `P F_mu^{-T} |det F_mu|` at each parent quadrature point.
pub fn weighted_stress(sol: &MicroSolution, map: &TransformationMap) -> Result<Vec<f64>> {
    weighted_field(&sol.p, map)
}

pub fn weighted_field(p: &[Tensor2], map: &TransformationMap) -> Result<Vec<f64>> {
    if p.len() != map.f_mu.len() {
        return Err(Error::InvalidArgument(format!(
            "stress field has {} points but the map has {}",
            p.len(),
            map.f_mu.len()
        )));
    }
    let out: Vec<Tensor2> = p
        .iter()
        .zip(&map.f_mu)
        .zip(&map.det)
        .map(|((pq, f), det)| {
            let f_inv_t = f.try_inverse().expect("gated map").transpose();
            pq * f_inv_t * det.abs()
        })
        .collect();
    Ok(to_flat(&out))
}

/// Inverse of [`weighted_field`]: `S F_mu^T / |det F_mu|`.
pub fn unweight(s: &[f64], map: &TransformationMap) -> Result<Vec<Tensor2>> {
    let s = from_flat(s);
    if s.len() != map.f_mu.len() {
        return Err(Error::InvalidArgument("field/map size mismatch".into()));
    }
    s.iter()
        .zip(&map.f_mu)
        .zip(&map.det)
        .map(|((sq, f), det)| {
            if !(det.abs() > 0.0) {
                return Err(Error::NonPositiveDeterminant(*det));
            }
            Ok(sq * f.transpose() / det.abs())
        })
        .collect()
}

/// Per-component inner-product weights from parent quadrature weights.
pub fn component_weights(cache: &QuadCache) -> Vec<f64> {
    cache.weights.iter().flat_map(|w| [*w; 4]).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PodBasis {
    pub modes: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    /// `coefficients[n][l] = (S_l, B_n)`.
    pub coefficients: Vec<Vec<f64>>,
    /// Inner-product weight of every flat component.
    pub weights: Vec<f64>,
}

impl PodBasis {
    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        linalg::inner(a, b, Some(&self.weights))
    }

    pub fn norm(&self, a: &[f64]) -> f64 {
        self.inner(a, a).sqrt()
    }

    pub fn project(&self, s: &[f64]) -> Vec<f64> {
        self.modes.iter().map(|m| self.inner(s, m)).collect()
    }

    pub fn reconstruct(&self, alpha: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.weights.len()];
        for (m, a) in self.modes.iter().zip(alpha) {
            for (o, v) in out.iter_mut().zip(m) {
                *o += a * v;
            }
        }
        out
    }

    /// Keeps the leading `n` modes.
    pub fn truncated(&self, n: usize) -> PodBasis {
        let n = n.min(self.n_modes());
        PodBasis {
            modes: self.modes[..n].to_vec(),
            eigenvalues: self.eigenvalues.clone(),
            coefficients: self.coefficients[..n].to_vec(),
            weights: self.weights.clone(),
        }
    }
}

/// POD of weighted stress snapshots; `n_modes = None` keeps the numerical
/// rank.
pub fn pod(snapshots: &[Vec<f64>], cache: &QuadCache, n_modes: Option<usize>) -> Result<PodBasis> {
    let weights = component_weights(cache);
    let p = linalg::pod(snapshots, Some(&weights), n_modes, EIGEN_FLOOR)?;
    Ok(PodBasis {
        modes: p.modes,
        eigenvalues: p.eigenvalues,
        coefficients: p.coefficients,
        weights,
    })
}

pub fn project(snapshot: &[f64], basis: &PodBasis) -> Vec<f64> {
    basis.project(snapshot)
}

/// Volume average `|Omega|^{-1} sum_q w_q f(q)` of a flat field.
pub fn average(field: &[f64], weights: &[f64]) -> Tensor2 {
    let mut s = [0.0; 4];
    let mut total = 0.0;
    for (v, w) in field.chunks_exact(4).zip(weights.chunks_exact(4)) {
        for k in 0..4 {
            s[k] += w[0] * v[k];
        }
        total += w[0];
    }
    Tensor2::new(s[0], s[1], s[2], s[3]) / total
}

/// `Bbar_n` for every mode.
pub fn effective_basis(basis: &PodBasis) -> Vec<Tensor2> {
    basis.modes.iter().map(|m| average(m, &basis.weights)).collect()
}

pub fn reconstruct_stress(alpha: &[f64], basis: &PodBasis, map: &TransformationMap) -> Result<Vec<Tensor2>> {
    unweight(&basis.reconstruct(alpha), map)
}

/// Relative mismatch `|∫B F_mu^T - ∫B| / max(|∫B|, floor)` per mode.
pub fn verify_invariance(basis: &PodBasis, map: &TransformationMap, floor: f64) -> Vec<f64> {
    basis
        .modes
        .iter()
        .map(|m| invariance_residual(m, &basis.weights, map, floor))
        .collect()
}

pub fn invariance_residual(field: &[f64], weights: &[f64], map: &TransformationMap, floor: f64) -> f64 {
    let mut plain = Tensor2::zeros();
    let mut mapped = Tensor2::zeros();
    for ((v, w), f) in field.chunks_exact(4).zip(weights.chunks_exact(4)).zip(&map.f_mu) {
        let b = Tensor2::new(v[0], v[1], v[2], v[3]);
        plain += b * w[0];
        mapped += b * f.transpose() * w[0];
    }
    (mapped - plain).norm() / plain.norm().max(floor)
}

/// Interior and periodic residuals of a stress field on a cell mesh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    /// Norm of nodal forces at nodes off the cell boundary.
    pub interior: f64,
    /// Norm of `f_master + f_slave` over periodic pairs.
    pub periodic: f64,
    /// Norm of the absolute element contributions.
    pub scale: f64,
}

impl EquilibriumReport {
    pub fn interior_ratio(&self) -> f64 {
        self.interior / self.scale.max(f64::MIN_POSITIVE)
    }

    pub fn periodic_ratio(&self) -> f64 {
        self.periodic / self.scale.max(f64::MIN_POSITIVE)
    }
}

pub fn equilibrium(mesh: &Mesh, cache: &QuadCache, p: &[Tensor2]) -> EquilibriumReport {
    let f = microfem::nodal_forces(mesh, cache, p);
    let mut on_boundary = vec![false; mesh.n_nodes()];
    for set in ["left", "right", "bottom", "top"] {
        for &i in mesh.node_set(set) {
            on_boundary[i] = true;
        }
    }
    let interior = (0..mesh.n_nodes())
        .filter(|i| !on_boundary[*i])
        .map(|i| f[2 * i].powi(2) + f[2 * i + 1].powi(2))
        .sum::<f64>()
        .sqrt();
    let periodic = mesh
        .periodic_pairs
        .iter()
        .map(|pp| {
            (f[2 * pp.master] + f[2 * pp.slave]).powi(2) + (f[2 * pp.master + 1] + f[2 * pp.slave + 1]).powi(2)
        })
        .sum::<f64>()
        .sqrt();
    EquilibriumReport {
        interior,
        periodic,
        scale: microfem::force_scale(mesh, cache, p),
    }
}
