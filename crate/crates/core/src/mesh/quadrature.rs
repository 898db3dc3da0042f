use super::ElementKind;
use crate::error::{Error, Result};

/// Points and weights on a reference element.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    /// Highest polynomial degree integrated exactly.
    pub degree: usize,
}

impl QuadratureRule {
    /// Six-point degree-4 rule on the unit triangle (measure 1/2).
    pub fn triangle_degree4() -> Self {
        const A: f64 = 0.445_948_490_915_964_886_32;
        const WA: f64 = 0.223_381_589_678_011_465_70;
        const B: f64 = 0.091_576_213_509_770_743_46;
        const WB: f64 = 0.109_951_743_655_321_867_64;
        let points = vec![
            [A, A],
            [1.0 - 2.0 * A, A],
            [A, 1.0 - 2.0 * A],
            [B, B],
            [1.0 - 2.0 * B, B],
            [B, 1.0 - 2.0 * B],
        ];
        let weights = vec![WA, WA, WA, WB, WB, WB].into_iter().map(|w| 0.5 * w).collect();
        QuadratureRule {
            points,
            weights,
            degree: 4,
        }
    }

    /// 2x2 Gauss rule on `[-1, 1]^2`.
    pub fn quad_gauss2() -> Self {
        let g = 1.0 / 3f64.sqrt();
        QuadratureRule {
            points: vec![[-g, -g], [g, -g], [g, g], [-g, g]],
            weights: vec![1.0; 4],
            degree: 3,
        }
    }

    pub fn for_kind(kind: ElementKind) -> Self {
        match kind {
            ElementKind::Tri3 | ElementKind::Tri6 => Self::triangle_degree4(),
            ElementKind::Quad4 => Self::quad_gauss2(),
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Basis values and reference-coordinate gradients at `xi`.
///
/// Node ordering: corners counter-clockwise, then for Tri6 the midside nodes
/// of edges (1,2), (2,3), (3,1).
pub fn shape_eval(kind: ElementKind, xi: [f64; 2]) -> (Vec<f64>, Vec<[f64; 2]>) {
    let [x, y] = xi;
    match kind {
        ElementKind::Tri3 => (
            vec![1.0 - x - y, x, y],
            vec![[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]],
        ),
        ElementKind::Tri6 => {
            let l1 = 1.0 - x - y;
            let n = vec![
                l1 * (2.0 * l1 - 1.0),
                x * (2.0 * x - 1.0),
                y * (2.0 * y - 1.0),
                4.0 * l1 * x,
                4.0 * x * y,
                4.0 * y * l1,
            ];
            let dn = vec![
                [1.0 - 4.0 * l1, 1.0 - 4.0 * l1],
                [4.0 * x - 1.0, 0.0],
                [0.0, 4.0 * y - 1.0],
                [4.0 * (l1 - x), -4.0 * x],
                [4.0 * y, 4.0 * x],
                [-4.0 * y, 4.0 * (l1 - y)],
            ];
            (n, dn)
        }
        ElementKind::Quad4 => {
            let corners = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];
            let n = corners
                .iter()
                .map(|c| 0.25 * (1.0 + c[0] * x) * (1.0 + c[1] * y))
                .collect();
            let dn = corners
                .iter()
                .map(|c| [0.25 * c[0] * (1.0 + c[1] * y), 0.25 * c[1] * (1.0 + c[0] * x)])
                .collect();
            (n, dn)
        }
    }
}

/// Reference coordinates of the element's nodes.
pub fn reference_nodes(kind: ElementKind) -> Vec<[f64; 2]> {
    match kind {
        ElementKind::Tri3 => vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
        ElementKind::Tri6 => vec![
            [0.0, 0.0],
            [1.0, 0.0],
            [0.0, 1.0],
            [0.5, 0.0],
            [0.5, 0.5],
            [0.0, 0.5],
        ],
        ElementKind::Quad4 => vec![[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]],
    }
}

/// `shape_eval` with a validity check on the element code.
pub fn shape_eval_code(code: u32, xi: [f64; 2]) -> Result<(Vec<f64>, Vec<[f64; 2]>)> {
    let kind = ElementKind::from_code(code)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown element kind {code}")))?;
    Ok(shape_eval(kind, xi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const KINDS: [ElementKind; 3] = [ElementKind::Tri3, ElementKind::Tri6, ElementKind::Quad4];

    fn random_point(kind: ElementKind, rng: &mut ChaCha8Rng) -> [f64; 2] {
        match kind {
            ElementKind::Quad4 => [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
            _ => loop {
                let p = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
                if p[0] + p[1] <= 1.0 {
                    break p;
                }
            },
        }
    }

    #[test]
    fn kronecker_property_at_nodes() {
        for kind in KINDS {
            for (a, xi) in reference_nodes(kind).into_iter().enumerate() {
                let (n, _) = shape_eval(kind, xi);
                for (b, v) in n.iter().enumerate() {
                    let expected = if a == b { 1.0 } else { 0.0 };
                    assert!((v - expected).abs() < 1e-15, "{kind:?} node {a} basis {b}");
                }
            }
        }
    }

    #[test]
    fn partition_of_unity_and_gradient_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for kind in KINDS {
            for _ in 0..100 {
                let xi = random_point(kind, &mut rng);
                let (n, dn) = shape_eval(kind, xi);
                assert!((n.iter().sum::<f64>() - 1.0).abs() < 1e-14);
                let gx: f64 = dn.iter().map(|g| g[0]).sum();
                let gy: f64 = dn.iter().map(|g| g[1]).sum();
                assert!(gx.abs() < 1e-14 && gy.abs() < 1e-14);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = 1e-7;
        for kind in KINDS {
            let xi = random_point(kind, &mut rng);
            let (_, dn) = shape_eval(kind, xi);
            for d in 0..2 {
                let mut p = xi;
                let mut m = xi;
                p[d] += h;
                m[d] -= h;
                let (np, _) = shape_eval(kind, p);
                let (nm, _) = shape_eval(kind, m);
                for a in 0..np.len() {
                    assert!(((np[a] - nm[a]) / (2.0 * h) - dn[a][d]).abs() < 1e-7);
                }
            }
        }
    }

    fn monomial_integral_triangle(p: i32, q: i32) -> f64 {
        // ∫ x^p y^q over the unit triangle = p! q! / (p + q + 2)!
        let f = |n: i32| (1..=n).map(|v| v as f64).product::<f64>();
        f(p) * f(q) / f(p + q + 2)
    }

    #[test]
    fn triangle_rule_exact_to_degree_four() {
        let rule = QuadratureRule::triangle_degree4();
        assert!((rule.weights.iter().sum::<f64>() - 0.5).abs() < 1e-15);
        assert!(rule.weights.iter().all(|w| *w > 0.0));
        for p in 0..=4 {
            for q in 0..=(4 - p) {
                let approx: f64 = rule
                    .points
                    .iter()
                    .zip(&rule.weights)
                    .map(|(x, w)| w * x[0].powi(p) * x[1].powi(q))
                    .sum();
                assert!((approx - monomial_integral_triangle(p, q)).abs() < 1e-12, "x^{p} y^{q}");
            }
        }
    }

    #[test]
    fn quad_rule_exact_to_degree_three() {
        let rule = QuadratureRule::quad_gauss2();
        assert!((rule.weights.iter().sum::<f64>() - 4.0).abs() < 1e-15);
        for p in 0..=3 {
            for q in 0..=3 {
                let approx: f64 = rule
                    .points
                    .iter()
                    .zip(&rule.weights)
                    .map(|(x, w)| w * x[0].powi(p) * x[1].powi(q))
                    .sum();
                let exact_1d = |k: i32| if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
                assert!((approx - exact_1d(p) * exact_1d(q)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unknown_kind_rejected() {
        assert!(shape_eval_code(9, [0.1, 0.1]).is_err());
        assert!(shape_eval_code(2, [0.1, 0.1]).is_ok());
    }
}
