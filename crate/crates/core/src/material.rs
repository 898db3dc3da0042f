//! Compressible Neo-Hookean law under plane strain, plus the 2D polar
//! decomposition used to reduce macroscopic loading to a symmetric stretch.
//!
//! Energy: `W = C1 (tr C - 3 - 2 ln J) + D1 (J - 1)^2` with the out-of-plane
//! stretch fixed at one, so `tr C = tr C_2d + 1` and `J = det F_2d`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{flatten, Tensor2, Tensor4};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeoHookean {
    pub c1: f64,
    pub d1: f64,
}

impl NeoHookean {
    pub fn new(c1: f64, d1: f64) -> Result<Self> {
        if !(c1 > 0.0 && d1 > 0.0 && c1.is_finite() && d1.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "Neo-Hookean moduli must be positive, got C1={c1}, D1={d1}"
            )));
        }
        Ok(Self { c1, d1 })
    }

    /// Parameter vector `[C1, D1]`.
    pub fn params(&self) -> [f64; 2] {
        [self.c1, self.d1]
    }

    pub fn energy(&self, f: &Tensor2) -> Result<f64> {
        let j = checked_det(f)?;
        let tr_c = f.norm_squared() + 1.0;
        Ok(self.c1 * (tr_c - 3.0 - 2.0 * j.ln()) + self.d1 * (j - 1.0).powi(2))
    }

    /// First Piola-Kirchhoff stress `P = dW/dF`.
    pub fn pk1(&self, f: &Tensor2) -> Result<Tensor2> {
        let j = checked_det(f)?;
        let f_inv_t = inverse_transpose(f, j);
        let g = 2.0 * self.d1 * (j - 1.0) * j;
        Ok(f * (2.0 * self.c1) + f_inv_t * (g - 2.0 * self.c1))
    }

    /// Material tangent `A = dP/dF`.
    pub fn tangent(&self, f: &Tensor2) -> Result<Tensor4> {
        Ok(self.stress_and_tangent(f)?.1)
    }

    /// Stress and tangent sharing the inverse; the Newton loops call this.
    pub fn stress_and_tangent(&self, f: &Tensor2) -> Result<(Tensor2, Tensor4)> {
        let j = checked_det(f)?;
        let f_inv_t = inverse_transpose(f, j);
        // F^{-1}_{ab} = f_inv_t[(b, a)]
        let inv = |a: usize, b: usize| f_inv_t[(b, a)];
        let g = 2.0 * self.d1 * (j - 1.0) * j;
        let dg_j = 2.0 * self.d1 * (2.0 * j - 1.0) * j;
        let c2 = 2.0 * self.c1;

        let p = f * c2 + f_inv_t * (g - c2);
        let mut a = Tensor4::zeros();
        for i in 0..2 {
            for jj in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        let mut v = (c2 - g) * inv(jj, k) * inv(l, i) + dg_j * inv(jj, i) * inv(l, k);
                        if i == k && jj == l {
                            v += c2;
                        }
                        a.set(i, jj, k, l, v);
                    }
                }
            }
        }
        Ok((p, a))
    }

    /// Small-strain Young's modulus and Poisson ratio of this law.
    pub fn elastic_constants(&self) -> (f64, f64) {
        elastic_constants(self.c1, self.d1)
    }
}

/// `(E, nu)` for given `(C1, D1)`: `E = 2C1(3D1 + 2C1)/(C1 + D1)`,
/// `nu = D1 / (2(C1 + D1))`.
pub fn elastic_constants(c1: f64, d1: f64) -> (f64, f64) {
    let e = 2.0 * c1 * (3.0 * d1 + 2.0 * c1) / (c1 + d1);
    let nu = d1 / (2.0 * (c1 + d1));
    (e, nu)
}

fn checked_det(f: &Tensor2) -> Result<f64> {
    let j = f.determinant();
    if j > 0.0 && j.is_finite() {
        Ok(j)
    } else {
        Err(Error::NonPositiveDeterminant(j))
    }
}

#[inline]
fn inverse_transpose(f: &Tensor2, det: f64) -> Tensor2 {
    // cof(F) / det F
    Tensor2::new(f[(1, 1)], -f[(1, 0)], -f[(0, 1)], f[(0, 0)]) / det
}

/// Polar decomposition `F = R U` in closed form.
///
/// `F + cof F` is a scaled rotation for every `F` with positive determinant,
/// which gives `R` directly; `U = R^T F` is symmetrized to remove round-off.
pub fn polar_decompose(f: &Tensor2) -> Result<(Tensor2, Tensor2)> {
    checked_det(f)?;
    let c = f[(0, 0)] + f[(1, 1)];
    let s = f[(1, 0)] - f[(0, 1)];
    let norm = c.hypot(s);
    let (cos, sin) = (c / norm, s / norm);
    let r = Tensor2::new(cos, -sin, sin, cos);
    let u = r.transpose() * f;
    let u = (u + u.transpose()) * 0.5;
    Ok((r, u))
}

/// Tangent `dP/dF` of `P(F) = R(F) Phat(U(F))` given the stretch-frame
/// stress `Phat` and its derivative `Ahat = dPhat/dU` at `U`.
pub fn rotated_tangent(f: &Tensor2, p_hat: &Tensor2, a_hat: &Tensor4) -> Result<Tensor4> {
    let (r, _) = polar_decompose(f)?;
    let c = f[(0, 0)] + f[(1, 1)];
    let s = f[(1, 0)] - f[(0, 1)];
    let n2 = c * c + s * s;
    let dr_dphi = r * Tensor2::new(0.0, -1.0, 1.0, 0.0);
    let mut out = Tensor4::zeros();
    for col in 0..4 {
        let mut df = Tensor2::zeros();
        df[(col / 2, col % 2)] = 1.0;
        let dphi = (c * (df[(1, 0)] - df[(0, 1)]) - s * (df[(0, 0)] + df[(1, 1)])) / n2;
        let dr = dr_dphi * dphi;
        let du = dr.transpose() * f + r.transpose() * df;
        let du = (du + du.transpose()) * 0.5;
        let dp = dr * p_hat + r * a_hat.contract(&du);
        for (row, v) in flatten(&dp).iter().enumerate() {
            out.0[(row, col)] = *v;
        }
    }
    Ok(out)
}

pub fn rotation(angle: f64) -> Tensor2 {
    let (s, c) = angle.sin_cos();
    Tensor2::new(c, -s, s, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_f(rng: &mut ChaCha8Rng) -> Tensor2 {
        loop {
            let f = Tensor2::new(
                rng.random_range(0.6..1.4),
                rng.random_range(-0.4..0.4),
                rng.random_range(-0.4..0.4),
                rng.random_range(0.6..1.4),
            );
            let j = f.determinant();
            if (0.5..=2.0).contains(&j) {
                return f;
            }
        }
    }

    fn fd_pk1(mat: &NeoHookean, f: &Tensor2, h: f64) -> Tensor2 {
        let mut p = Tensor2::zeros();
        for i in 0..2 {
            for j in 0..2 {
                let mut fp = *f;
                let mut fm = *f;
                fp[(i, j)] += h;
                fm[(i, j)] -= h;
                p[(i, j)] = (mat.energy(&fp).unwrap() - mat.energy(&fm).unwrap()) / (2.0 * h);
            }
        }
        p
    }

    fn fd_tangent(mat: &NeoHookean, f: &Tensor2, h: f64) -> Tensor4 {
        let mut a = Tensor4::zeros();
        for k in 0..2 {
            for l in 0..2 {
                let mut fp = *f;
                let mut fm = *f;
                fp[(k, l)] += h;
                fm[(k, l)] -= h;
                let dp = (mat.pk1(&fp).unwrap() - mat.pk1(&fm).unwrap()) / (2.0 * h);
                for i in 0..2 {
                    for j in 0..2 {
                        a.set(i, j, k, l, dp[(i, j)]);
                    }
                }
            }
        }
        a
    }

    #[test]
    fn reference_state_is_stress_free() {
        let mat = NeoHookean::new(1.0, 1.0).unwrap();
        let i = Tensor2::identity();
        assert_eq!(mat.energy(&i).unwrap(), 0.0);
        assert!(mat.pk1(&i).unwrap().norm() <= 1e-14);
    }

    #[test]
    fn isochoric_stretch_energy() {
        let mat = NeoHookean::new(1.0, 1.0).unwrap();
        let f = Tensor2::new(1.1, 0.0, 0.0, 1.0 / 1.1);
        let expected = 1.1f64.powi(2) + 1.1f64.powi(-2) - 2.0;
        assert!((mat.energy(&f).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn energy_is_frame_indifferent() {
        let mat = NeoHookean::new(1.3, 0.7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let f = random_f(&mut rng);
            let q = rotation(rng.random_range(-3.14..3.14));
            let w0 = mat.energy(&f).unwrap();
            let w1 = mat.energy(&(q * f)).unwrap();
            assert!((w0 - w1).abs() <= 1e-12 * w0.abs().max(1.0));
        }
    }

    #[test]
    fn pk1_and_tangent_match_finite_differences() {
        let mat = NeoHookean::new(1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let f = random_f(&mut rng);
            let p = mat.pk1(&f).unwrap();
            let p_fd = fd_pk1(&mat, &f, 1e-6);
            assert!((p - p_fd).norm() <= 1e-7 * p.norm().max(1.0));
            let a = mat.tangent(&f).unwrap();
            let a_fd = fd_tangent(&mat, &f, 1e-6);
            assert!((a - a_fd).norm() <= 1e-6 * a.norm());
            assert!(a.major_asymmetry() <= 1e-12 * a.norm());
        }
    }

    #[test]
    fn small_strain_limit_is_plane_strain_elasticity() {
        let mat = NeoHookean::new(1.0, 1.0).unwrap();
        let (e, nu) = mat.elastic_constants();
        assert!((e - 5.0).abs() < 1e-14);
        assert!((nu - 0.25).abs() < 1e-14);
        let eps = 1e-6;
        let p = mat.pk1(&Tensor2::new(1.0 + eps, 0.0, 0.0, 1.0)).unwrap() / eps;
        let c11 = e * (1.0 - nu) / ((1.0 + nu) * (1.0 - 2.0 * nu));
        let c12 = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
        assert!((p[(0, 0)] - c11).abs() < 1e-4);
        assert!((p[(1, 1)] - c12).abs() < 1e-4);
    }

    #[test]
    fn linearized_tangent_is_isotropic_elasticity() {
        let mat = NeoHookean::new(1.0, 1.0).unwrap();
        let (e, nu) = mat.elastic_constants();
        let lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
        let mu = e / (2.0 * (1.0 + nu));
        let a = mat.tangent(&Tensor2::identity()).unwrap();
        let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        let c = lambda * d(i, j) * d(k, l) + mu * (d(i, k) * d(j, l) + d(i, l) * d(j, k));
                        assert!((a.get(i, j, k, l) - c).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn stiff_fiber_constants() {
        assert_eq!(elastic_constants(100.0, 100.0), (500.0, 0.25));
    }

    #[test]
    fn rejects_inverted() {
        let mat = NeoHookean::new(1.0, 1.0).unwrap();
        let f = Tensor2::new(-1.0, 0.0, 0.0, 1.0);
        assert!(matches!(mat.pk1(&f), Err(Error::NonPositiveDeterminant(_))));
        assert!(polar_decompose(&f).is_err());
        assert!(NeoHookean::new(0.0, 1.0).is_err());
    }

    #[test]
    fn polar_decomposition_cases() {
        let spd = Tensor2::new(1.2, 0.1, 0.1, 0.9);
        let (r, u) = polar_decompose(&spd).unwrap();
        assert!((r - Tensor2::identity()).norm() < 1e-15);
        assert!((u - spd).norm() < 1e-15);

        let rot = rotation(30f64.to_radians());
        let (r, u) = polar_decompose(&rot).unwrap();
        assert!((u - Tensor2::identity()).norm() < 1e-15);
        assert!((r - rot).norm() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let f = random_f(&mut rng);
            let (r, u) = polar_decompose(&f).unwrap();
            assert!((r * u - f).norm() <= 1e-13);
            assert!((r.transpose() * r - Tensor2::identity()).norm() <= 1e-13);
            assert_eq!(u[(0, 1)], u[(1, 0)]);
            assert!(u.symmetric_eigenvalues().min() > 0.0);
        }
    }

    #[test]
    fn rotated_tangent_recovers_material_tangent() {
        let mat = NeoHookean::new(1.0, 1.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let f = random_f(&mut rng);
            let (_, u) = polar_decompose(&f).unwrap();
            let a_hat = mat.tangent(&u).unwrap().symmetrize_trailing();
            let a = rotated_tangent(&f, &mat.pk1(&u).unwrap(), &a_hat).unwrap();
            let exact = mat.tangent(&f).unwrap();
            assert!((a.0 - exact.0).norm() <= 1e-10 * exact.norm(), "{:?}", a.0 - exact.0);
        }
    }
}
