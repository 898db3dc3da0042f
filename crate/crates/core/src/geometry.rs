//! Closed interface curves: the parent circle and the eight-point periodic
//! cubic spline.
//!
//! Every curve is parameterized over `t ∈ [0, 1)` with `t = 0` on the
//! positive x-axis seen from the cell centre, running counter-clockwise.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

pub const CELL_CENTER: Point = [0.5, 0.5];

pub trait ClosedCurve: Send + Sync {
    fn point(&self, t: f64) -> Point;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub center: Point,
    pub radius: f64,
}

impl Circle {
    pub fn centered(radius: f64) -> Self {
        Circle {
            center: CELL_CENTER,
            radius,
        }
    }
}

impl ClosedCurve for Circle {
    fn point(&self, t: f64) -> Point {
        let (s, c) = (2.0 * PI * t).sin_cos();
        [self.center[0] + self.radius * c, self.center[1] + self.radius * s]
    }
}

/// C2 periodic cubic interpolant through `n` points placed at uniform
/// parameter values `t_k = k / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicSpline {
    points: Vec<Point>,
    /// Second derivatives with respect to the segment parameter.
    curvature: Vec<Point>,
}

impl PeriodicSpline {
    pub fn interpolate(points: Vec<Point>) -> Result<Self> {
        let n = points.len();
        if n < 3 {
            return Err(Error::InvalidGeometry(format!(
                "periodic spline needs at least 3 points, got {n}"
            )));
        }
        // M_{k-1} + 4 M_k + M_{k+1} = 6 (P_{k+1} - 2 P_k + P_{k-1})
        let mut a = DMatrix::<f64>::zeros(n, n);
        for k in 0..n {
            a[(k, k)] = 4.0;
            a[(k, (k + n - 1) % n)] += 1.0;
            a[(k, (k + 1) % n)] += 1.0;
        }
        let lu = a.lu();
        let mut curvature = vec![[0.0; 2]; n];
        for dim in 0..2 {
            let rhs = DVector::from_fn(n, |k, _| {
                6.0 * (points[(k + 1) % n][dim] - 2.0 * points[k][dim] + points[(k + n - 1) % n][dim])
            });
            let m = lu
                .solve(&rhs)
                .ok_or_else(|| Error::LinearAlgebra("singular spline system".into()))?;
            for k in 0..n {
                curvature[k][dim] = m[k];
            }
        }
        Ok(Self { points, curvature })
    }

    pub fn control_points(&self) -> &[Point] {
        &self.points
    }

    /// Dense polyline approximation with `per_segment` samples per span.
    pub fn sample(&self, per_segment: usize) -> Vec<Point> {
        let total = self.points.len() * per_segment;
        (0..total).map(|i| self.point(i as f64 / total as f64)).collect()
    }

    /// Fails when the curve crosses itself, tested on a dense polyline.
    pub fn check_simple(&self) -> Result<()> {
        let poly = self.sample(48);
        let n = poly.len();
        for i in 0..n {
            let (a0, a1) = (poly[i], poly[(i + 1) % n]);
            for j in (i + 2)..n {
                if i == 0 && j == n - 1 {
                    continue;
                }
                let (b0, b1) = (poly[j], poly[(j + 1) % n]);
                if segments_intersect(a0, a1, b0, b1) {
                    return Err(Error::InvalidGeometry(format!(
                        "spline interface self-intersects near ({:.4}, {:.4})",
                        a0[0], a0[1]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Parameter of the curve point lying on the ray from `center` through
    /// `p`; requires the curve to be star-shaped about `center`.
    pub fn parameter_of(&self, p: Point, center: Point) -> Result<f64> {
        let target = polar_angle([p[0] - center[0], p[1] - center[1]]);
        let angle_at = |t: f64| {
            let q = self.point(t);
            polar_angle([q[0] - center[0], q[1] - center[1]])
        };
        // Unwrapped angle offset relative to the target.
        let offset = |t: f64| wrap_angle(angle_at(t) - target);
        let samples = 512;
        let mut lo = None;
        for i in 0..samples {
            let (t0, t1) = (i as f64 / samples as f64, (i + 1) as f64 / samples as f64);
            let (f0, f1) = (offset(t0), offset(t1));
            if f0 == 0.0 {
                lo = Some((t0, t0));
                break;
            }
            if f0 < 0.0 && f1 >= 0.0 && (f1 - f0) < PI {
                lo = Some((t0, t1));
                break;
            }
        }
        let (mut a, mut b) = lo.ok_or_else(|| {
            Error::InvalidGeometry("point does not project onto the interface curve".into())
        })?;
        for _ in 0..80 {
            if b - a <= 1e-17 {
                break;
            }
            let mid = 0.5 * (a + b);
            if offset(mid) < 0.0 {
                a = mid;
            } else {
                b = mid;
            }
        }
        let t = 0.5 * (a + b);
        Ok(t.rem_euclid(1.0))
    }
}

impl ClosedCurve for PeriodicSpline {
    fn point(&self, t: f64) -> Point {
        let n = self.points.len();
        let u = t.rem_euclid(1.0) * n as f64;
        let k = (u.floor() as usize).min(n - 1);
        let s = u - k as f64;
        let k1 = (k + 1) % n;
        let r = 1.0 - s;
        let c0 = (r * r * r - r) / 6.0;
        let c1 = (s * s * s - s) / 6.0;
        let mut out = [0.0; 2];
        for d in 0..2 {
            out[d] = r * self.points[k][d]
                + s * self.points[k1][d]
                + c0 * self.curvature[k][d]
                + c1 * self.curvature[k1][d];
        }
        out
    }
}

/// Standard polar angle in `(-pi, pi]`.
pub fn polar_angle(v: Point) -> f64 {
    v[1].atan2(v[0])
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = a.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn segments_intersect(a0: Point, a1: Point, b0: Point, b1: Point) -> bool {
    let d1 = orient(b0, b1, a0);
    let d2 = orient(b0, b1, a1);
    let d3 = orient(a0, a1, b0);
    let d4 = orient(a0, a1, b1);
    (d1 * d2 < 0.0) && (d3 * d4 < 0.0)
}

/// Shoelace area of a closed polygon.
pub fn polygon_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    let mut s = 0.0;
    for i in 0..n {
        let (p, q) = (poly[i], poly[(i + 1) % n]);
        s += p[0] * q[1] - q[0] * p[1];
    }
    0.5 * s
}
