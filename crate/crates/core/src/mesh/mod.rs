//! Unstructured 2D meshes, reference-element machinery and the parent RVE
//! mesh generators.

mod generate;
mod io;
mod quadrature;

use std::collections::BTreeMap;

use nalgebra::Matrix2;

pub use generate::{build_parent_disk_mesh, build_parent_mesh, build_parent_spline_mesh, ParentLayout};
pub use io::{parse_mesh, read_mesh, render_mesh, write_mesh};
pub use quadrature::{reference_nodes, shape_eval, shape_eval_code, QuadratureRule};

use crate::error::{Error, Result};
use crate::geometry::{ClosedCurve, Point};

/// Tolerance used when checking periodic offsets.
pub const PERIODIC_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElementKind {
    Tri3,
    Tri6,
    Quad4,
}

impl ElementKind {
    pub fn code(self) -> u32 {
        match self {
            ElementKind::Tri3 => 1,
            ElementKind::Tri6 => 2,
            ElementKind::Quad4 => 3,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            1 => Some(ElementKind::Tri3),
            2 => Some(ElementKind::Tri6),
            3 => Some(ElementKind::Quad4),
            _ => None,
        }
    }

    pub fn nodes_per_element(self) -> usize {
        match self {
            ElementKind::Tri3 => 3,
            ElementKind::Tri6 => 6,
            ElementKind::Quad4 => 4,
        }
    }

    /// Measure of the reference element.
    pub fn reference_measure(self) -> f64 {
        match self {
            ElementKind::Tri3 | ElementKind::Tri6 => 0.5,
            ElementKind::Quad4 => 4.0,
        }
    }
}

/// Slave node on the right/top edge paired with its master on the
/// left/bottom edge; `axis` is 0 for an x-offset, 1 for a y-offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PeriodicPair {
    pub master: usize,
    pub slave: usize,
    pub axis: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub nodes: Vec<Point>,
    pub kind: ElementKind,
    pub elements: Vec<Vec<usize>>,
    pub node_sets: BTreeMap<String, Vec<usize>>,
    pub element_sets: BTreeMap<String, Vec<usize>>,
    pub periodic_pairs: Vec<PeriodicPair>,
}

/// Physical quadrature data for every element of a mesh: integration
/// weights `w * det J` and shape-function gradients in physical coordinates.
#[derive(Debug, Clone)]
pub struct QuadCache {
    pub kind: ElementKind,
    pub n_elements: usize,
    pub qp_per_element: usize,
    pub nodes_per_element: usize,
    /// `w_q * det J_q`, indexed `e * qp_per_element + q`.
    pub weights: Vec<f64>,
    /// Physical positions of quadrature points.
    pub points: Vec<Point>,
    /// Basis gradients, indexed `(e * qp_per_element + q) * nodes_per_element + a`.
    pub grads: Vec<[f64; 2]>,
    /// Basis values at the reference points, indexed `q * nodes_per_element + a`.
    pub values: Vec<f64>,
}

impl QuadCache {
    pub fn n_points(&self) -> usize {
        self.weights.len()
    }

    #[inline]
    pub fn grads_at(&self, e: usize, q: usize) -> &[[f64; 2]] {
        let start = (e * self.qp_per_element + q) * self.nodes_per_element;
        &self.grads[start..start + self.nodes_per_element]
    }

    #[inline]
    pub fn values_at(&self, q: usize) -> &[f64] {
        &self.values[q * self.nodes_per_element..(q + 1) * self.nodes_per_element]
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Quadrature average of a per-point field.
    pub fn integrate<T>(&self, field: &[T], f: impl Fn(&T) -> f64) -> f64 {
        self.weights.iter().zip(field).map(|(w, v)| w * f(v)).sum()
    }

    /// Gradient of a nodal vector field at a quadrature point:
    /// `G_ij = sum_a u_a,i dN_a/dX_j`.
    pub fn field_gradient(&self, mesh: &Mesh, e: usize, q: usize, u: &[f64]) -> Matrix2<f64> {
        let mut g = Matrix2::zeros();
        for (a, dn) in mesh.elements[e].iter().zip(self.grads_at(e, q)) {
            for i in 0..2 {
                let ui = u[2 * a + i];
                g[(i, 0)] += ui * dn[0];
                g[(i, 1)] += ui * dn[1];
            }
        }
        g
    }
}

impl Mesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn node_set(&self, name: &str) -> &[usize] {
        self.node_sets.get(name).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn element_set(&self, name: &str) -> &[usize] {
        self.element_sets.get(name).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Builds the physical quadrature data, failing on a non-positive
    /// Jacobian determinant.
    pub fn quadrature(&self) -> Result<QuadCache> {
        let rule = QuadratureRule::for_kind(self.kind);
        let npe = self.kind.nodes_per_element();
        let nq = rule.len();
        let reference: Vec<_> = rule.points.iter().map(|xi| shape_eval(self.kind, *xi)).collect();
        let mut weights = Vec::with_capacity(self.n_elements() * nq);
        let mut points = Vec::with_capacity(self.n_elements() * nq);
        let mut grads = Vec::with_capacity(self.n_elements() * nq * npe);
        for (e, conn) in self.elements.iter().enumerate() {
            for (q, (n, dn)) in reference.iter().enumerate() {
                let mut jac = Matrix2::<f64>::zeros();
                let mut x = [0.0; 2];
                for (a, &node) in conn.iter().enumerate() {
                    let p = self.nodes[node];
                    for i in 0..2 {
                        x[i] += n[a] * p[i];
                        jac[(i, 0)] += p[i] * dn[a][0];
                        jac[(i, 1)] += p[i] * dn[a][1];
                    }
                }
                let det = jac.determinant();
                if !(det > 0.0) {
                    return Err(Error::Mesh(format!(
                        "element {e} has non-positive Jacobian {det:.3e} at quadrature point {q}"
                    )));
                }
                let inv = jac.try_inverse().expect("positive determinant");
                for g in dn {
                    grads.push([
                        g[0] * inv[(0, 0)] + g[1] * inv[(1, 0)],
                        g[0] * inv[(0, 1)] + g[1] * inv[(1, 1)],
                    ]);
                }
                weights.push(rule.weights[q] * det);
                points.push(x);
            }
        }
        let values = reference.iter().flat_map(|(n, _)| n.iter().copied()).collect();
        Ok(QuadCache {
            kind: self.kind,
            n_elements: self.n_elements(),
            qp_per_element: nq,
            nodes_per_element: npe,
            weights,
            points,
            grads,
            values,
        })
    }

    pub fn area(&self) -> Result<f64> {
        Ok(self.quadrature()?.total_weight())
    }

    /// Area of an element subset.
    pub fn set_area(&self, set: &str) -> Result<f64> {
        let cache = self.quadrature()?;
        let nq = cache.qp_per_element;
        Ok(self
            .element_set(set)
            .iter()
            .map(|&e| cache.weights[e * nq..(e + 1) * nq].iter().sum::<f64>())
            .sum())
    }

    /// Copy with displaced nodes; topology and tags are shared.
    pub fn displaced(&self, d: &[f64]) -> Mesh {
        let mut out = self.clone();
        for (i, p) in out.nodes.iter_mut().enumerate() {
            p[0] += d[2 * i];
            p[1] += d[2 * i + 1];
        }
        out
    }

    /// Structural checks: connectivity bounds, set references, periodic
    /// offsets and phase partition (when phase sets exist).
    pub fn validate(&self) -> Result<()> {
        let npe = self.kind.nodes_per_element();
        let n = self.n_nodes();
        for (e, conn) in self.elements.iter().enumerate() {
            if conn.len() != npe {
                return Err(Error::Mesh(format!(
                    "element {e} has {} nodes, expected {npe}",
                    conn.len()
                )));
            }
            if let Some(bad) = conn.iter().find(|&&a| a >= n) {
                return Err(Error::Mesh(format!("element {e} references missing node {bad}")));
            }
        }
        for (name, ids) in &self.node_sets {
            if let Some(bad) = ids.iter().find(|&&a| a >= n) {
                return Err(Error::Mesh(format!("node set {name} references missing node {bad}")));
            }
        }
        for (name, ids) in &self.element_sets {
            if let Some(bad) = ids.iter().find(|&&a| a >= self.n_elements()) {
                return Err(Error::Mesh(format!(
                    "element set {name} references missing element {bad}"
                )));
            }
        }
        for pair in &self.periodic_pairs {
            if pair.master >= n || pair.slave >= n || pair.axis > 1 {
                return Err(Error::Mesh(format!("invalid periodic pair {pair:?}")));
            }
            let (m, s) = (self.nodes[pair.master], self.nodes[pair.slave]);
            let mut offset = [0.0; 2];
            offset[pair.axis as usize] = 1.0;
            if (s[0] - m[0] - offset[0]).abs() > PERIODIC_TOL
                || (s[1] - m[1] - offset[1]).abs() > PERIODIC_TOL
            {
                return Err(Error::Mesh(format!(
                    "periodic pair {} -> {} is not offset by a unit cell",
                    pair.master, pair.slave
                )));
            }
        }
        if self.element_sets.contains_key("matrix") || self.element_sets.contains_key("fiber") {
            let mut seen = vec![0u8; self.n_elements()];
            for name in ["matrix", "fiber"] {
                for &e in self.element_set(name) {
                    seen[e] += 1;
                }
            }
            if let Some(e) = seen.iter().position(|&c| c != 1) {
                return Err(Error::Mesh(format!(
                    "element {e} is not in exactly one of matrix/fiber"
                )));
            }
        }
        Ok(())
    }

    /// Largest distance of an interface node from the given curve, measured
    /// through the curve parameter of its polar angle.
    pub fn interface_deviation(&self, curve: &dyn Fn(Point) -> Result<Point>) -> Result<f64> {
        let mut worst = 0.0f64;
        for &i in self.node_set("interface") {
            let p = self.nodes[i];
            let q = curve(p)?;
            worst = worst.max((p[0] - q[0]).hypot(p[1] - q[1]));
        }
        Ok(worst)
    }

    /// Closest-parameter check for curves evaluated by polar parameter.
    pub fn max_interface_distance<C: ClosedCurve + ?Sized>(
        &self,
        curve: &C,
        parameter_of: impl Fn(Point) -> Result<f64>,
    ) -> Result<f64> {
        self.interface_deviation(&|p| Ok(curve.point(parameter_of(p)?)))
    }

    /// Slave node -> master node map over periodic pairs, resolving chains
    /// so that every slave points at a node that is not itself a slave.
    pub fn periodic_master_of(&self) -> Vec<usize> {
        let mut master: Vec<usize> = (0..self.n_nodes()).collect();
        for p in &self.periodic_pairs {
            master[p.slave] = p.master;
        }
        for i in 0..master.len() {
            let mut m = master[i];
            while master[m] != m {
                m = master[m];
            }
            master[i] = m;
        }
        master
    }
}
