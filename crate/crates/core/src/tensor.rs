//! Small fixed-size tensors for 2D plane-strain mechanics.
//!
//! Second-order tensors are plain `nalgebra` 2x2 matrices. Fourth-order
//! tensors are stored as a 4x4 matrix acting on the flattened component
//! vector `(xx, xy, yx, yy)`, i.e. `A_ijkl` lives at `(2i + j, 2k + l)`.

use nalgebra::{Matrix2, Matrix4, Vector4};

pub type Tensor2 = Matrix2<f64>;

/// Flattens a second-order tensor into `(xx, xy, yx, yy)`.
#[inline]
pub fn flatten(t: &Tensor2) -> [f64; 4] {
    [t[(0, 0)], t[(0, 1)], t[(1, 0)], t[(1, 1)]]
}

#[inline]
pub fn unflatten(v: &[f64; 4]) -> Tensor2 {
    Tensor2::new(v[0], v[1], v[2], v[3])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tensor4(pub Matrix4<f64>);

impl Default for Tensor4 {
    fn default() -> Self {
        Self::zeros()
    }
}

impl Tensor4 {
    pub fn zeros() -> Self {
        Tensor4(Matrix4::zeros())
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.0[(2 * i + j, 2 * k + l)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, l: usize, v: f64) {
        self.0[(2 * i + j, 2 * k + l)] = v;
    }

    /// `A : B`, contracting the trailing index pair.
    pub fn contract(&self, b: &Tensor2) -> Tensor2 {
        let v = self.0 * Vector4::from(flatten(b));
        Tensor2::new(v[0], v[1], v[2], v[3])
    }

    /// Builds `A_ijkl = a_ij * b_kl`.
    pub fn outer(a: &Tensor2, b: &Tensor2) -> Self {
        let va = Vector4::from(flatten(a));
        let vb = Vector4::from(flatten(b));
        Tensor4(va * vb.transpose())
    }

    /// Replaces the `xy`/`yx` trailing slots by their average. Derivatives
    /// with respect to a symmetric stretch only see this combination.
    pub fn symmetrize_trailing(&self) -> Self {
        let mut out = *self;
        for r in 0..4 {
            let avg = 0.5 * (self.0[(r, 1)] + self.0[(r, 2)]);
            out.0[(r, 1)] = avg;
            out.0[(r, 2)] = avg;
        }
        out
    }

    /// Largest deviation from major symmetry `A_ijkl = A_klij`.
    pub fn major_asymmetry(&self) -> f64 {
        (self.0 - self.0.transpose()).abs().max()
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }
}

impl std::ops::Add for Tensor4 {
    type Output = Tensor4;
    fn add(self, rhs: Tensor4) -> Tensor4 {
        Tensor4(self.0 + rhs.0)
    }
}

impl std::ops::Sub for Tensor4 {
    type Output = Tensor4;
    fn sub(self, rhs: Tensor4) -> Tensor4 {
        Tensor4(self.0 - rhs.0)
    }
}

impl std::ops::Mul<f64> for Tensor4 {
    type Output = Tensor4;
    fn mul(self, rhs: f64) -> Tensor4 {
        Tensor4(self.0 * rhs)
    }
}

impl std::ops::AddAssign for Tensor4 {
    fn add_assign(&mut self, rhs: Tensor4) {
        self.0 += rhs.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flatten_order_is_row_major() {
        let t = Tensor2::new(1.0, 2.0, 3.0, 4.0);
        assert_eq!(flatten(&t), [1.0, 2.0, 3.0, 4.0]);
        assert_eq!(unflatten(&flatten(&t)), t);
    }

    #[test]
    fn outer_then_contract() {
        let a = Tensor2::new(1.0, 2.0, 0.0, -1.0);
        let b = Tensor2::new(0.5, 0.0, 1.0, 2.0);
        let c = Tensor2::new(1.0, 1.0, 1.0, 1.0);
        let t = Tensor4::outer(&a, &b);
        assert_eq!(t.get(0, 1, 1, 1), 2.0 * 2.0);
        // (a ⊗ b) : c = a (b : c)
        let bc = b.component_mul(&c).sum();
        assert!((t.contract(&c) - a * bc).norm() < 1e-15);
    }
}
