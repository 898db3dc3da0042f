//! Parameterized interface geometries and the linear-elastic auxiliary
//! problem that maps the parent cell onto each geometry.

use std::f64::consts::FRAC_1_SQRT_2;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector, Matrix2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ClosedCurve, PeriodicSpline, Point, CELL_CENTER};
use crate::linalg;
use crate::mesh::{Mesh, QuadCache};
use crate::sparse::{Assembler, Factor};

/// Maps with `min det F_mu` at or below this are rejected.
pub const MIN_MAP_DET: f64 = 0.05;
/// Maps with `min det F_mu` below this are accepted with a warning.
pub const WARN_MAP_DET: f64 = 0.2;
/// Distance from the parent circle tolerated for interface nodes.
pub const CIRCLE_TOL: f64 = 1e-10;

pub const PARENT_SPLINE: [f64; 4] = [0.25, 0.25, 0.75, 0.75];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Ellipse,
    Spline,
}

impl Family {
    pub fn dim(self) -> usize {
        match self {
            Family::Ellipse => 3,
            Family::Spline => 4,
        }
    }

    pub fn names(self) -> &'static [&'static str] {
        match self {
            Family::Ellipse => &["a", "b", "theta"],
            Family::Spline => &["a", "b", "c", "d"],
        }
    }

    /// Default parameter box.
    pub fn default_ranges(self) -> Vec<[f64; 2]> {
        match self {
            Family::Ellipse => vec![
                [0.1, 0.35],
                [0.1, 0.35],
                [-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2],
            ],
            Family::Spline => vec![[0.1, 0.4], [0.1, 0.4], [0.6, 0.9], [0.6, 0.9]],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum GeometryParam {
    Ellipse { a: f64, b: f64, theta: f64 },
    Spline { a: f64, b: f64, c: f64, d: f64 },
}

impl GeometryParam {
    pub fn family(&self) -> Family {
        match self {
            GeometryParam::Ellipse { .. } => Family::Ellipse,
            GeometryParam::Spline { .. } => Family::Spline,
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        match *self {
            GeometryParam::Ellipse { a, b, theta } => vec![a, b, theta],
            GeometryParam::Spline { a, b, c, d } => vec![a, b, c, d],
        }
    }

    pub fn from_slice(family: Family, v: &[f64]) -> Result<Self> {
        if v.len() != family.dim() {
            return Err(Error::InvalidArgument(format!(
                "{family:?} takes {} parameters, got {}",
                family.dim(),
                v.len()
            )));
        }
        Ok(match family {
            Family::Ellipse => GeometryParam::Ellipse {
                a: v[0],
                b: v[1],
                theta: v[2],
            },
            Family::Spline => GeometryParam::Spline {
                a: v[0],
                b: v[1],
                c: v[2],
                d: v[3],
            },
        })
    }
}

/// Parent interface of a cell family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ParentGeometry {
    Disk { radius: f64 },
    Spline,
}

impl ParentGeometry {
    pub fn for_family(family: Family, radius: f64) -> Self {
        match family {
            Family::Ellipse => ParentGeometry::Disk { radius },
            Family::Spline => ParentGeometry::Spline,
        }
    }
}

/// The eight interpolation points, counter-clockwise from the `+x` axis:
/// four parameterized axis points and four fixed diagonal points.
pub fn spline_control_points(a: f64, b: f64, c: f64, d: f64) -> Vec<Point> {
    let s = 0.25 * FRAC_1_SQRT_2;
    let [x0, y0] = CELL_CENTER;
    vec![
        [c, y0],
        [x0 + s, y0 + s],
        [x0, d],
        [x0 - s, y0 + s],
        [a, y0],
        [x0 - s, y0 - s],
        [x0, b],
        [x0 + s, y0 - s],
    ]
}

pub fn spline_curve(a: f64, b: f64, c: f64, d: f64) -> Result<PeriodicSpline> {
    PeriodicSpline::interpolate(spline_control_points(a, b, c, d))
}

pub fn parent_spline() -> Result<PeriodicSpline> {
    let [a, b, c, d] = PARENT_SPLINE;
    spline_curve(a, b, c, d)
}

/// Linear ellipse map `X_c + Rot(theta) diag(a/r, b/r) Rot(-theta) (X - X_c)`.
pub fn ellipse_map(a: f64, b: f64, theta: f64, r: f64, p: Point) -> Point {
    let dx = p[0] - CELL_CENTER[0];
    let dy = p[1] - CELL_CENTER[1];
    let r_t = dx.hypot(dy);
    let phi = dy.atan2(dx) - theta;
    let (u, v) = (a / r * r_t * phi.cos(), b / r * r_t * phi.sin());
    let (s, c) = theta.sin_cos();
    [CELL_CENTER[0] + c * u - s * v, CELL_CENTER[1] + s * u + c * v]
}

/// Target positions of the interface nodes for an ellipse parameter.
pub fn ellipse_interface_targets(
    mesh: &Mesh,
    a: f64,
    b: f64,
    theta: f64,
    r: f64,
) -> Result<Vec<(usize, Point)>> {
    let iface = mesh.node_set("interface");
    if iface.is_empty() {
        return Err(Error::InvalidGeometry("mesh has no interface nodes".into()));
    }
    iface
        .iter()
        .map(|&i| {
            let p = mesh.nodes[i];
            let dist = (p[0] - CELL_CENTER[0]).hypot(p[1] - CELL_CENTER[1]);
            if (dist - r).abs() > CIRCLE_TOL {
                return Err(Error::InvalidGeometry(format!(
                    "interface node {i} is {dist} from the centre, expected {r}"
                )));
            }
            Ok((i, ellipse_map(a, b, theta, r, p)))
        })
        .collect()
}

/// Target positions of the interface nodes on the spline through the eight
/// control points; each node keeps its parent curve parameter.
pub fn spline_interface_targets(mesh: &Mesh, a: f64, b: f64, c: f64, d: f64) -> Result<Vec<(usize, Point)>> {
    let parent = parent_spline()?;
    let target = spline_curve(a, b, c, d)?;
    target.check_simple()?;
    mesh.node_set("interface")
        .iter()
        .map(|&i| {
            let t = parent.parameter_of(mesh.nodes[i], CELL_CENTER)?;
            Ok((i, target.point(t)))
        })
        .collect()
}

pub fn interface_targets(mesh: &Mesh, parent: ParentGeometry, mu: &GeometryParam) -> Result<Vec<(usize, Point)>> {
    match (parent, *mu) {
        (ParentGeometry::Disk { radius }, GeometryParam::Ellipse { a, b, theta }) => {
            ellipse_interface_targets(mesh, a, b, theta, radius)
        }
        (ParentGeometry::Spline, GeometryParam::Spline { a, b, c, d }) => {
            spline_interface_targets(mesh, a, b, c, d)
        }
        _ => Err(Error::InvalidArgument(format!(
            "parameter {mu:?} does not match parent geometry {parent:?}"
        ))),
    }
}

/// Transformation displacement and its gradient for one parameter value.
#[derive(Debug, Clone)]
pub struct TransformationMap {
    pub param: Option<GeometryParam>,
    /// Nodal displacement `d`, interleaved `(x, y)` per node.
    pub d: Vec<f64>,
    /// `F_mu = I + grad d` at each parent quadrature point.
    pub f_mu: Vec<Matrix2<f64>>,
    pub det: Vec<f64>,
}

impl TransformationMap {
    pub fn identity(n_nodes: usize, n_points: usize) -> Self {
        TransformationMap {
            param: None,
            d: vec![0.0; 2 * n_nodes],
            f_mu: vec![Matrix2::identity(); n_points],
            det: vec![1.0; n_points],
        }
    }

    /// Map fields of a nodal displacement over the parent quadrature.
    pub fn from_displacement(mesh: &Mesh, cache: &QuadCache, d: Vec<f64>, param: Option<GeometryParam>) -> Self {
        let nq = cache.qp_per_element;
        let mut f_mu = Vec::with_capacity(cache.n_points());
        for e in 0..mesh.n_elements() {
            for q in 0..nq {
                f_mu.push(Matrix2::identity() + cache.field_gradient(mesh, e, q, &d));
            }
        }
        let det = f_mu.iter().map(|f| f.determinant()).collect();
        TransformationMap { param, d, f_mu, det }
    }

    pub fn min_det(&self) -> (usize, f64) {
        self.det
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc })
    }

    /// `∫ det F_mu dX` over the parent domain.
    pub fn volume(&self, cache: &QuadCache) -> f64 {
        cache.weights.iter().zip(&self.det).map(|(w, d)| w * d).sum()
    }

    /// Rejects maps below the quality threshold.
    pub fn check_quality(&self, qp_per_element: usize) -> Result<()> {
        let (q, min) = self.min_det();
        if !(min > MIN_MAP_DET) {
            return Err(Error::DistortedMap {
                element: q / qp_per_element,
                min_det: min,
            });
        }
        if min < WARN_MAP_DET {
            log::warn!("transformation map is strongly distorted: min det F_mu = {min:.3}");
        }
        Ok(())
    }
}

/// Plane-strain isotropic elasticity on the parent mesh with all outer
/// boundary and interface nodes constrained.
#[derive(Debug)]
pub struct AuxiliaryOperator {
    pub mesh: Arc<Mesh>,
    pub cache: QuadCache,
    pub parent: ParentGeometry,
    pub xi: f64,
    pub young: f64,
    /// Free equation index of each DOF, `None` when constrained.
    pub free_of: Vec<Option<usize>>,
    pub n_free: usize,
    pub assembler: Assembler,
    /// Free-free stiffness values in the assembler's pattern.
    pub values: Vec<f64>,
    /// Free-constrained coupling `(free row, constrained dof, value)`.
    coupling: Vec<(usize, usize, f64)>,
    factor: OnceLock<std::result::Result<Factor, String>>,
}

/// Local elasticity stiffness, row-major over interleaved DOFs.
pub fn elasticity_stiffness(cache: &QuadCache, e: usize, lambda: f64, mu: f64) -> Vec<f64> {
    let npe = cache.nodes_per_element;
    let nd = 2 * npe;
    let mut k = vec![0.0; nd * nd];
    for q in 0..cache.qp_per_element {
        let w = cache.weights[e * cache.qp_per_element + q];
        let g = cache.grads_at(e, q);
        for a in 0..npe {
            for b in 0..npe {
                let dot = g[a][0] * g[b][0] + g[a][1] * g[b][1];
                for i in 0..2 {
                    for kk in 0..2 {
                        let mut v = lambda * g[a][i] * g[b][kk] + mu * g[a][kk] * g[b][i];
                        if i == kk {
                            v += mu * dot;
                        }
                        k[(2 * a + i) * nd + 2 * b + kk] += w * v;
                    }
                }
            }
        }
    }
    k
}

pub fn lame(young: f64, nu: f64) -> (f64, f64) {
    (
        young * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)),
        young / (2.0 * (1.0 + nu)),
    )
}

pub fn assemble_auxiliary(mesh: Arc<Mesh>, parent: ParentGeometry, xi: f64) -> Result<AuxiliaryOperator> {
    assemble_auxiliary_with_modulus(mesh, parent, xi, 1.0)
}

pub fn assemble_auxiliary_with_modulus(
    mesh: Arc<Mesh>,
    parent: ParentGeometry,
    xi: f64,
    young: f64,
) -> Result<AuxiliaryOperator> {
    if !(xi > -1.0 && xi < 0.5) {
        return Err(Error::InvalidArgument(format!(
            "auxiliary Poisson ratio must lie in (-1, 0.5), got {xi}"
        )));
    }
    if !(young > 0.0) {
        return Err(Error::InvalidArgument("Young's modulus must be positive".into()));
    }
    let cache = mesh.quadrature()?;
    let n = mesh.n_nodes();
    let mut constrained = vec![false; n];
    for set in ["left", "right", "bottom", "top", "interface"] {
        for &i in mesh.node_set(set) {
            constrained[i] = true;
        }
    }
    let mut free_of = vec![None; 2 * n];
    let mut n_free = 0;
    for i in 0..n {
        if !constrained[i] {
            for c in 0..2 {
                free_of[2 * i + c] = Some(n_free);
                n_free += 1;
            }
        }
    }
    let element_dofs: Vec<Vec<Option<usize>>> = mesh
        .elements
        .iter()
        .map(|conn| conn.iter().flat_map(|&a| [free_of[2 * a], free_of[2 * a + 1]]).collect())
        .collect();
    let assembler = Assembler::new(n_free, element_dofs);
    let mut values = assembler.zeros();
    let (lambda, mu) = lame(young, xi);
    let mut coupling_map = std::collections::BTreeMap::<(usize, usize), f64>::new();
    for (e, conn) in mesh.elements.iter().enumerate() {
        let ke = elasticity_stiffness(&cache, e, lambda, mu);
        assembler.add_matrix(&mut values, e, &ke);
        let dofs: Vec<usize> = conn.iter().flat_map(|&a| [2 * a, 2 * a + 1]).collect();
        let nd = dofs.len();
        for (r, &dr) in dofs.iter().enumerate() {
            let Some(fr) = free_of[dr] else { continue };
            for (c, &dc) in dofs.iter().enumerate() {
                if free_of[dc].is_none() {
                    *coupling_map.entry((fr, dc)).or_insert(0.0) += ke[r * nd + c];
                }
            }
        }
    }
    Ok(AuxiliaryOperator {
        mesh,
        cache,
        parent,
        xi,
        young,
        free_of,
        n_free,
        assembler,
        values,
        coupling: coupling_map.into_iter().map(|((r, c), v)| (r, c, v)).collect(),
        factor: OnceLock::new(),
    })
}

impl AuxiliaryOperator {
    fn factor(&self) -> Result<&Factor> {
        self.factor
            .get_or_init(|| {
                let sym = self.assembler.analyze().map_err(|e| e.to_string())?;
                self.assembler.factor(&sym, &self.values).map_err(|e| e.to_string())
            })
            .as_ref()
            .map_err(|e| Error::LinearAlgebra(e.clone()))
    }

    /// Constrained DOF values: interface displacement from the targets,
    /// zero on the cell boundary.
    pub fn boundary_data(&self, mu: &GeometryParam) -> Result<Vec<f64>> {
        let targets = interface_targets(&self.mesh, self.parent, mu)?;
        let mut g = vec![0.0; 2 * self.mesh.n_nodes()];
        for (i, t) in targets {
            let p = self.mesh.nodes[i];
            g[2 * i] = t[0] - p[0];
            g[2 * i + 1] = t[1] - p[1];
        }
        Ok(g)
    }

    /// Right-hand side `-K_fc g` of the free equations.
    pub fn rhs(&self, g: &[f64]) -> Vec<f64> {
        let mut b = vec![0.0; self.n_free];
        for &(r, c, v) in &self.coupling {
            b[r] -= v * g[c];
        }
        b
    }

    /// Full displacement from constrained data and free values.
    pub fn scatter(&self, g: &[f64], free: &[f64]) -> Vec<f64> {
        let mut d = g.to_vec();
        for (dof, f) in self.free_of.iter().enumerate() {
            if let Some(f) = f {
                d[dof] = free[*f];
            }
        }
        d
    }

    pub fn free_part(&self, d: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_free];
        for (dof, f) in self.free_of.iter().enumerate() {
            if let Some(f) = f {
                out[*f] = d[dof];
            }
        }
        out
    }

    /// Full-order map for boundary data `g`.
    pub fn solve_data(&self, g: &[f64], param: Option<GeometryParam>) -> Result<TransformationMap> {
        let free = self.factor()?.solve(&self.rhs(g))?;
        let d = self.scatter(g, &free);
        let map = TransformationMap::from_displacement(&self.mesh, &self.cache, d, param);
        map.check_quality(self.cache.qp_per_element)?;
        Ok(map)
    }

    pub fn solve_transformation(&self, mu: &GeometryParam) -> Result<TransformationMap> {
        let g = self.boundary_data(mu)?;
        self.solve_data(&g, Some(*mu))
    }

    pub fn morph_mesh(&self, map: &TransformationMap) -> Mesh {
        morph_mesh(&self.mesh, map)
    }
}

/// Moves the parent nodes by the transformation displacement.
pub fn morph_mesh(parent: &Mesh, map: &TransformationMap) -> Mesh {
    parent.displaced(&map.d)
}

/// POD-Galerkin reduction of the auxiliary problem.
#[derive(Debug, Clone)]
pub struct ReducedAuxiliary {
    /// Orthonormal basis of free-DOF displacements.
    pub basis: Vec<Vec<f64>>,
    /// `V^T K_ff V`.
    pub a_hat: DMatrix<f64>,
    /// Eigenvalues of the full-displacement snapshot correlation.
    pub eigenvalues: Vec<f64>,
}

impl ReducedAuxiliary {
    pub fn n_modes(&self) -> usize {
        self.basis.len()
    }

    /// Rebuilds the reduced matrix from a stored basis.
    pub fn from_basis(op: &AuxiliaryOperator, basis: Vec<Vec<f64>>, eigenvalues: Vec<f64>) -> Result<Self> {
        if basis.iter().any(|v| v.len() != op.n_free) {
            return Err(Error::InvalidArgument("reduced basis does not match operator".into()));
        }
        let kv: Vec<Vec<f64>> = basis.iter().map(|v| op.assembler.matvec(&op.values, v)).collect();
        let n = basis.len();
        let mut a_hat = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                a_hat[(i, j)] = linalg::inner(&basis[i], &kv[j], None);
            }
        }
        a_hat = (&a_hat + a_hat.transpose()) * 0.5;
        Ok(ReducedAuxiliary {
            basis,
            a_hat,
            eigenvalues,
        })
    }

    pub fn solve(&self, op: &AuxiliaryOperator, mu: &GeometryParam) -> Result<TransformationMap> {
        let g = op.boundary_data(mu)?;
        let b = op.rhs(&g);
        let rhs = DVector::from_iterator(self.n_modes(), self.basis.iter().map(|v| linalg::inner(v, &b, None)));
        let coeffs = if self.n_modes() == 0 {
            DVector::zeros(0)
        } else {
            self.a_hat
                .clone()
                .cholesky()
                .ok_or_else(|| Error::LinearAlgebra("reduced auxiliary matrix not SPD".into()))?
                .solve(&rhs)
        };
        let mut free = vec![0.0; op.n_free];
        for (v, c) in self.basis.iter().zip(coeffs.iter()) {
            for (f, x) in free.iter_mut().zip(v) {
                *f += c * x;
            }
        }
        let d = op.scatter(&g, &free);
        let map = TransformationMap::from_displacement(&op.mesh, &op.cache, d, Some(*mu));
        map.check_quality(op.cache.qp_per_element)?;
        Ok(map)
    }
}

/// Builds the reduced model from full solves at the training parameters.
/// The mode count is the number of full-displacement POD eigenvalues above
/// `tol * lambda_1`.
pub fn reduce_auxiliary(op: &AuxiliaryOperator, training: &[GeometryParam], tol: f64) -> Result<ReducedAuxiliary> {
    let family = training
        .first()
        .ok_or_else(|| Error::InvalidArgument("no training parameters".into()))?
        .family();
    if training.len() < family.dim() + 1 {
        return Err(Error::InvalidArgument(format!(
            "need at least {} training parameters, got {}",
            family.dim() + 1,
            training.len()
        )));
    }
    let maps = training
        .iter()
        .map(|mu| op.solve_transformation(mu))
        .collect::<Result<Vec<_>>>()?;
    let full: Vec<Vec<f64>> = maps.iter().map(|m| m.d.clone()).collect();
    let full_pod = linalg::pod(&full, None, None, tol)?;
    let rank = full_pod.modes.len();
    let free: Vec<Vec<f64>> = full.iter().map(|d| op.free_part(d)).collect();
    let free_pod = linalg::pod(&free, None, Some(rank), tol)?;
    ReducedAuxiliary::from_basis(op, free_pod.modes, full_pod.eigenvalues)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_parent_disk_mesh;

    #[test]
    fn ellipse_map_examples() {
        let r = 0.225;
        let p = ellipse_map(0.35, 0.1, 0.0, r, [0.5 + r, 0.5]);
        assert!((p[0] - 0.85).abs() < 1e-14 && (p[1] - 0.5).abs() < 1e-14);
        let q = ellipse_map(r, r, 0.7, r, [0.6, 0.55]);
        assert!((q[0] - 0.6).abs() < 1e-14 && (q[1] - 0.55).abs() < 1e-14);
        // theta = pi/2 turns the major axis vertical.
        let th = std::f64::consts::FRAC_PI_2;
        let x0 = ellipse_map(0.35, 0.1, th, r, [0.5 + r, 0.5]);
        let y0 = ellipse_map(0.35, 0.1, th, r, [0.5, 0.5 + r]);
        assert!((x0[0] - 0.6).abs() < 1e-12 && (y0[1] - 0.85).abs() < 1e-12);
    }

    #[test]
    fn spline_parent_reproduces_itself() {
        let mesh = crate::mesh::build_parent_spline_mesh(6).unwrap();
        let [a, b, c, d] = PARENT_SPLINE;
        for (i, t) in spline_interface_targets(&mesh, a, b, c, d).unwrap() {
            let p = mesh.nodes[i];
            assert!((p[0] - t[0]).hypot(p[1] - t[1]) < 1e-10);
        }
    }

    #[test]
    fn identity_parameters_give_zero_map() {
        let mesh = Arc::new(build_parent_disk_mesh(0.2, 6).unwrap());
        let op = assemble_auxiliary(mesh, ParentGeometry::Disk { radius: 0.2 }, 0.3).unwrap();
        let map = op
            .solve_transformation(&GeometryParam::Ellipse {
                a: 0.2,
                b: 0.2,
                theta: 0.4,
            })
            .unwrap();
        assert!(map.d.iter().all(|v| v.abs() < 1e-14));
        assert!(map.det.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn rejects_bad_poisson_ratio() {
        let mesh = Arc::new(build_parent_disk_mesh(0.2, 4).unwrap());
        assert!(assemble_auxiliary(mesh.clone(), ParentGeometry::Disk { radius: 0.2 }, 0.5).is_err());
        assert!(assemble_auxiliary(mesh, ParentGeometry::Disk { radius: 0.2 }, -1.0).is_err());
    }
}
