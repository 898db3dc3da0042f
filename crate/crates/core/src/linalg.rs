//! Snapshot POD by the method of snapshots.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Pod {
    /// All correlation eigenvalues, descending, clamped at zero.
    pub eigenvalues: Vec<f64>,
    /// Retained orthonormal modes.
    pub modes: Vec<Vec<f64>>,
    /// `coefficients[n][l] = (S_l, mode_n)`.
    pub coefficients: Vec<Vec<f64>>,
}

/// Weighted inner product `sum_i w_i a_i b_i` (plain dot product when `w` is
/// `None`).
pub fn inner(a: &[f64], b: &[f64], w: Option<&[f64]>) -> f64 {
    match w {
        Some(w) => a.iter().zip(b).zip(w).map(|((x, y), w)| w * x * y).sum(),
        None => a.iter().zip(b).map(|(x, y)| x * y).sum(),
    }
}

/// Correlation matrix `C_kl = (S_k, S_l)`.
pub fn correlation(snapshots: &[Vec<f64>], w: Option<&[f64]>) -> DMatrix<f64> {
    let n = snapshots.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|k| (0..=k).map(|l| inner(&snapshots[k], &snapshots[l], w)).collect())
        .collect();
    let mut c = DMatrix::zeros(n, n);
    for (k, row) in rows.iter().enumerate() {
        for (l, v) in row.iter().enumerate() {
            c[(k, l)] = *v;
            c[(l, k)] = *v;
        }
    }
    c
}

/// Keeps modes whose eigenvalue exceeds `rel_tol * lambda_1`, at most
/// `max_modes` of them.
pub fn pod(snapshots: &[Vec<f64>], w: Option<&[f64]>, max_modes: Option<usize>, rel_tol: f64) -> Result<Pod> {
    if snapshots.is_empty() {
        return Err(Error::InvalidArgument("POD needs at least one snapshot".into()));
    }
    let dim = snapshots[0].len();
    if snapshots.iter().any(|s| s.len() != dim) {
        return Err(Error::InvalidArgument("snapshots have inconsistent lengths".into()));
    }
    if let Some(w) = w {
        if w.len() != dim {
            return Err(Error::InvalidArgument("weight vector length mismatch".into()));
        }
    }
    let c = correlation(snapshots, w);
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..snapshots.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let lead = eigenvalues[0];
    let mut keep = eigenvalues
        .iter()
        .take_while(|&&l| l > 0.0 && l > rel_tol * lead)
        .count();
    if let Some(m) = max_modes {
        if m > keep {
            log::warn!("requested {m} modes but numerical rank is {keep}; truncating");
        }
        keep = keep.min(m);
    }
    let mut modes = Vec::with_capacity(keep);
    let mut coefficients = Vec::with_capacity(keep);
    for &i in order.iter().take(keep) {
        let lam = eig.eigenvalues[i];
        let phi = eig.eigenvectors.column(i);
        let scale = 1.0 / lam.sqrt();
        let mut mode = vec![0.0; dim];
        for (l, s) in snapshots.iter().enumerate() {
            let c = phi[l] * scale;
            for (m, v) in mode.iter_mut().zip(s) {
                *m += c * v;
            }
        }
        let coeffs = snapshots.iter().map(|s| inner(s, &mode, w)).collect();
        modes.push(mode);
        coefficients.push(coeffs);
    }
    Ok(Pod {
        eigenvalues,
        modes,
        coefficients,
    })
}
