//! Periodic cell problem: Newton solver for the fluctuation field under an
//! imposed macroscopic deformation gradient.
//!
//! Periodicity is imposed by condensation: every slave node shares the DOFs
//! of its master, and the four corners are pinned to remove translations.

use std::sync::Arc;

use faer::sparse::linalg::solvers::SymbolicLlt;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::material::NeoHookean;
use crate::mesh::{Mesh, QuadCache};
use crate::sparse::Assembler;
use crate::tensor::{Tensor2, Tensor4};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_iterations: usize,
    pub max_bisections: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_iterations: 25,
            max_bisections: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phases {
    pub matrix: NeoHookean,
    pub fiber: NeoHookean,
}

impl Phases {
    pub fn homogeneous(mat: NeoHookean) -> Self {
        Phases {
            matrix: mat,
            fiber: mat,
        }
    }
}

/// DOF numbering and sparse structure shared by all meshes with the same
/// connectivity and periodic pairing.
pub struct RveTopology {
    /// First free equation of each node (`None` for pinned corners).
    pub node_dof: Vec<Option<usize>>,
    pub n_free: usize,
    pub assembler: Assembler,
    pub symbolic: SymbolicLlt<usize>,
    pub is_fiber: Vec<bool>,
}

impl std::fmt::Debug for RveTopology {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RveTopology")
            .field("n_free", &self.n_free)
            .finish_non_exhaustive()
    }
}

impl RveTopology {
    pub fn new(mesh: &Mesh) -> Result<Self> {
        if mesh.periodic_pairs.is_empty() {
            return Err(Error::Mesh("cell mesh has no periodic pairs".into()));
        }
        let master = mesh.periodic_master_of();
        let corners = mesh.node_set("corner");
        if corners.is_empty() {
            return Err(Error::Mesh("cell mesh has no corner nodes".into()));
        }
        let mut base = vec![None; mesh.n_nodes()];
        let mut n_free = 0;
        for i in 0..mesh.n_nodes() {
            if master[i] == i && !corners.contains(&i) {
                base[i] = Some(n_free);
                n_free += 2;
            }
        }
        let node_dof: Vec<Option<usize>> = (0..mesh.n_nodes()).map(|i| base[master[i]]).collect();
        let element_dofs = mesh
            .elements
            .iter()
            .map(|conn| {
                conn.iter()
                    .flat_map(|&a| [node_dof[a], node_dof[a].map(|d| d + 1)])
                    .collect()
            })
            .collect();
        let assembler = Assembler::new(n_free, element_dofs);
        let symbolic = assembler.analyze()?;
        let mut is_fiber = vec![false; mesh.n_elements()];
        for &e in mesh.element_set("fiber") {
            is_fiber[e] = true;
        }
        Ok(RveTopology {
            node_dof,
            n_free,
            assembler,
            symbolic,
            is_fiber,
        })
    }

    /// Nodal fluctuation from the reduced unknowns.
    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        let mut w = vec![0.0; 2 * self.node_dof.len()];
        for (i, d) in self.node_dof.iter().enumerate() {
            if let Some(d) = d {
                w[2 * i] = x[*d];
                w[2 * i + 1] = x[d + 1];
            }
        }
        w
    }

    /// Sums nodal forces onto the reduced equations.
    pub fn condense(&self, f: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; self.n_free];
        for (i, d) in self.node_dof.iter().enumerate() {
            if let Some(d) = d {
                r[*d] += f[2 * i];
                r[d + 1] += f[2 * i + 1];
            }
        }
        r
    }
}

/// A cell mesh with its materials, ready to be loaded.
#[derive(Debug, Clone)]
pub struct Rve {
    pub mesh: Arc<Mesh>,
    pub cache: Arc<QuadCache>,
    pub phases: Phases,
    pub topology: Arc<RveTopology>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub iterations: usize,
    pub load_steps: usize,
    pub residuals: Vec<f64>,
    pub final_residual: f64,
}

#[derive(Debug, Clone)]
pub struct MicroSolution {
    pub fbar: Tensor2,
    /// Nodal fluctuation, interleaved `(x, y)`.
    pub w: Vec<f64>,
    pub f: Vec<Tensor2>,
    pub p: Vec<Tensor2>,
    pub pbar: Tensor2,
    pub record: ConvergenceRecord,
}

impl Rve {
    pub fn new(mesh: Mesh, phases: Phases) -> Result<Self> {
        let topology = Arc::new(RveTopology::new(&mesh)?);
        Self::with_topology(mesh, phases, topology)
    }

    /// Reuses DOF numbering and symbolic factorization from a mesh with the
    /// same connectivity.
    pub fn with_topology(mesh: Mesh, phases: Phases, topology: Arc<RveTopology>) -> Result<Self> {
        if topology.node_dof.len() != mesh.n_nodes() || topology.is_fiber.len() != mesh.n_elements() {
            return Err(Error::Mesh("topology does not match mesh".into()));
        }
        let cache = Arc::new(mesh.quadrature()?);
        Ok(Rve {
            mesh: Arc::new(mesh),
            cache,
            phases,
            topology,
        })
    }

    fn material(&self, e: usize) -> &NeoHookean {
        if self.topology.is_fiber[e] {
            &self.phases.fiber
        } else {
            &self.phases.matrix
        }
    }

    /// Deformation gradient `F = Fbar + grad w` at every quadrature point.
    pub fn deformation(&self, fbar: &Tensor2, w: &[f64]) -> Vec<Tensor2> {
        let nq = self.cache.qp_per_element;
        let mut out = Vec::with_capacity(self.cache.n_points());
        for e in 0..self.mesh.n_elements() {
            for q in 0..nq {
                out.push(fbar + self.cache.field_gradient(&self.mesh, e, q, w));
            }
        }
        out
    }

    /// Stress at every quadrature point; fails on an inverted point.
    pub fn stresses(&self, f: &[Tensor2]) -> Result<Vec<Tensor2>> {
        let nq = self.cache.qp_per_element;
        f.iter()
            .enumerate()
            .map(|(i, fq)| {
                self.material(i / nq).pk1(fq).map_err(|_| Error::InvertedElement {
                    element: i / nq,
                    det: fq.determinant(),
                })
            })
            .collect()
    }

    pub fn tangents(&self, f: &[Tensor2]) -> Result<Vec<Tensor4>> {
        let nq = self.cache.qp_per_element;
        f.iter()
            .enumerate()
            .map(|(i, fq)| self.material(i / nq).tangent(fq))
            .collect()
    }

    fn first_inverted(&self, f: &[Tensor2]) -> Option<(usize, f64)> {
        let nq = self.cache.qp_per_element;
        f.iter()
            .enumerate()
            .find(|(_, fq)| !(fq.determinant() > 0.0))
            .map(|(i, fq)| (i / nq, fq.determinant()))
    }

    /// Condensed residual and tangent values at fluctuation `w`.
    fn residual_and_tangent(&self, f: &[Tensor2]) -> Result<(Vec<f64>, Vec<f64>)> {
        let topo = &self.topology;
        let npe = self.cache.nodes_per_element;
        let nd = 2 * npe;
        let nq = self.cache.qp_per_element;
        let mut values = topo.assembler.zeros();
        let mut rhs = vec![0.0; topo.n_free];
        let mut ke = vec![0.0; nd * nd];
        let mut fe = vec![0.0; nd];
        for e in 0..self.mesh.n_elements() {
            ke.iter_mut().for_each(|v| *v = 0.0);
            fe.iter_mut().for_each(|v| *v = 0.0);
            let mat = self.material(e);
            for q in 0..nq {
                let idx = e * nq + q;
                let (p, a) = mat.stress_and_tangent(&f[idx]).map_err(|_| Error::InvertedElement {
                    element: e,
                    det: f[idx].determinant(),
                })?;
                accumulate_point(self.cache.grads_at(e, q), self.cache.weights[idx], &p, &a, &mut fe, &mut ke);
            }
            topo.assembler.add_matrix(&mut values, e, &ke);
            topo.assembler.add_vector(&mut rhs, e, &fe);
        }
        Ok((rhs, values))
    }

    /// Nodal internal forces `f_a = sum_q w P grad N_a` of a stress field,
    /// before condensation.
    pub fn nodal_forces(&self, p: &[Tensor2]) -> Vec<f64> {
        nodal_forces(&self.mesh, &self.cache, p)
    }

    pub fn solve(&self, fbar: &Tensor2, opts: &SolverOptions) -> Result<MicroSolution> {
        self.solve_from(fbar, None, opts)
    }

    /// Newton solve with bisection load stepping on `Fbar - I`, optionally
    /// warm-started from a previous fluctuation at the full load.
    pub fn solve_from(&self, fbar: &Tensor2, guess: Option<&[f64]>, opts: &SolverOptions) -> Result<MicroSolution> {
        if !(fbar.determinant() > 0.0) {
            return Err(Error::NonPositiveDeterminant(fbar.determinant()));
        }
        let topo = &self.topology;
        let mut record = ConvergenceRecord::default();
        if let Some(g) = guess {
            let mut x = vec![0.0; topo.n_free];
            for (i, d) in topo.node_dof.iter().enumerate() {
                if let Some(d) = d {
                    x[*d] = g[2 * i];
                    x[d + 1] = g[2 * i + 1];
                }
            }
            if let Ok(x) = self.newton(fbar, x, opts, &mut record) {
                record.load_steps = 1;
                return self.finish(fbar, &x, record);
            }
            record = ConvergenceRecord::default();
        }
        let eye = Tensor2::identity();
        let mut x = vec![0.0; topo.n_free];
        let mut s: f64 = 0.0;
        let mut ds: f64 = 1.0;
        let mut level = 0;
        while s < 1.0 {
            let target = (s + ds).min(1.0);
            let f_step = eye + (fbar - eye) * target;
            match self.newton(&f_step, x.clone(), opts, &mut record) {
                Ok(xn) => {
                    x = xn;
                    s = target;
                    record.load_steps += 1;
                }
                Err(err) => {
                    level += 1;
                    if level > opts.max_bisections {
                        return Err(match err {
                            Error::NonConvergence { iterations, residual, .. } => Error::NonConvergence {
                                iterations,
                                residual,
                                load_fraction: target,
                            },
                            other => other,
                        });
                    }
                    ds *= 0.5;
                }
            }
        }
        self.finish(fbar, &x, record)
    }

    fn finish(&self, fbar: &Tensor2, x: &[f64], record: ConvergenceRecord) -> Result<MicroSolution> {
        let w = self.topology.expand(x);
        let f = self.deformation(fbar, &w);
        let p = self.stresses(&f)?;
        let pbar = self.average(&p);
        Ok(MicroSolution {
            fbar: *fbar,
            w,
            f,
            p,
            pbar,
            record,
        })
    }

    fn newton(&self, fbar: &Tensor2, mut x: Vec<f64>, opts: &SolverOptions, record: &mut ConvergenceRecord) -> Result<Vec<f64>> {
        let topo = &self.topology;
        let mut w = topo.expand(&x);
        let mut f = self.deformation(fbar, &w);
        if let Some((element, det)) = self.first_inverted(&f) {
            return Err(Error::InvertedElement { element, det });
        }
        let mut r0 = None;
        for it in 0..=opts.max_iterations {
            let (r, values) = self.residual_and_tangent(&f)?;
            let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            record.residuals.push(norm);
            record.final_residual = norm;
            let r0v = *r0.get_or_insert(norm);
            if norm <= opts.abs_tol || norm <= opts.rel_tol * r0v {
                return Ok(x);
            }
            if it == opts.max_iterations || !norm.is_finite() {
                return Err(Error::NonConvergence {
                    iterations: it,
                    residual: norm,
                    load_fraction: 1.0,
                });
            }
            record.iterations += 1;
            let factor = topo.assembler.factor(&topo.symbolic, &values)?;
            let neg: Vec<f64> = r.iter().map(|v| -v).collect();
            let dx = factor.solve(&neg)?;
            let mut alpha = 1.0;
            loop {
                let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + alpha * b).collect();
                let wt = topo.expand(&trial);
                let ft = self.deformation(fbar, &wt);
                match self.first_inverted(&ft) {
                    None => {
                        x = trial;
                        w = wt;
                        f = ft;
                        break;
                    }
                    Some((element, det)) => {
                        alpha *= 0.5;
                        if alpha < 1e-3 {
                            return Err(Error::InvertedElement { element, det });
                        }
                    }
                }
            }
        }
        let _ = w;
        unreachable!("loop returns")
    }

    /// Quadrature average over the cell.
    pub fn average(&self, p: &[Tensor2]) -> Tensor2 {
        let mut s = Tensor2::zeros();
        for (w, v) in self.cache.weights.iter().zip(p) {
            s += v * *w;
        }
        s / self.cache.total_weight()
    }

    pub fn average_tangent(&self, f: &[Tensor2]) -> Result<Tensor4> {
        let mut s = Tensor4::zeros();
        for (w, a) in self.cache.weights.iter().zip(self.tangents(f)?) {
            s += a * *w;
        }
        Ok(s * (1.0 / self.cache.total_weight()))
    }

    /// Effective stress and central-difference effective tangent with
    /// respect to the three independent components of a symmetric stretch.
    /// The off-diagonal derivative is split equally onto the `xy` and `yx`
    /// slots.
    pub fn effective_stiffness_fd(&self, ubar: &Tensor2, h: f64, opts: &SolverOptions) -> Result<(MicroSolution, Tensor4)> {
        self.effective_stiffness_fd_from(ubar, None, h, opts)
    }

    /// As [`Rve::effective_stiffness_fd`], warm-started from a fluctuation.
    pub fn effective_stiffness_fd_from(
        &self,
        ubar: &Tensor2,
        guess: Option<&[f64]>,
        h: f64,
        opts: &SolverOptions,
    ) -> Result<(MicroSolution, Tensor4)> {
        let base = self.solve_from(ubar, guess, opts)?;
        let dirs = [
            ("U_xx", Tensor2::new(1.0, 0.0, 0.0, 0.0)),
            ("U_yy", Tensor2::new(0.0, 0.0, 0.0, 1.0)),
            ("U_xy", Tensor2::new(0.0, 1.0, 1.0, 0.0)),
        ];
        let mut a = Tensor4::zeros();
        for (name, dir) in dirs {
            let solve = |sign: f64| {
                self.solve_from(&(ubar + dir * (sign * h)), Some(&base.w), opts)
                    .map_err(|e| Error::InvalidArgument(format!("perturbation {name} {sign:+}: {e}")))
            };
            let dp = (solve(1.0)?.pbar - solve(-1.0)?.pbar) / (2.0 * h);
            let dp = crate::tensor::flatten(&dp);
            let cols: &[usize] = if name == "U_xy" { &[1, 2] } else if name == "U_xx" { &[0] } else { &[3] };
            let share = 1.0 / cols.len() as f64;
            for &c in cols {
                for (r, v) in dp.iter().enumerate() {
                    a.0[(r, c)] = v * share;
                }
            }
        }
        Ok((base, a))
    }
}

pub fn solve_rve(rve: &Rve, fbar: &Tensor2, opts: &SolverOptions) -> Result<MicroSolution> {
    rve.solve(fbar, opts)
}

pub fn effective_stress(rve: &Rve, sol: &MicroSolution) -> Tensor2 {
    rve.average(&sol.p)
}

/// Adds one quadrature point's internal force and tangent to element
/// arrays over interleaved DOFs.
pub(crate) fn accumulate_point(g: &[[f64; 2]], w: f64, p: &Tensor2, a: &Tensor4, fe: &mut [f64], ke: &mut [f64]) {
    let nd = 2 * g.len();
    for (na, ga) in g.iter().enumerate() {
        for i in 0..2 {
            fe[2 * na + i] += w * (p[(i, 0)] * ga[0] + p[(i, 1)] * ga[1]);
        }
    }
    // K_(a i)(b k) = A_iJkL dN_a/dX_J dN_b/dX_L
    for (na, ga) in g.iter().enumerate() {
        for i in 0..2 {
            let mut row = [0.0; 4];
            for (kl, r) in row.iter_mut().enumerate() {
                *r = w * (a.0[(2 * i, kl)] * ga[0] + a.0[(2 * i + 1, kl)] * ga[1]);
            }
            let base = (2 * na + i) * nd;
            for (nb, gb) in g.iter().enumerate() {
                ke[base + 2 * nb] += row[0] * gb[0] + row[1] * gb[1];
                ke[base + 2 * nb + 1] += row[2] * gb[0] + row[3] * gb[1];
            }
        }
    }
}

/// Nodal internal forces of a quadrature-point stress field.
pub fn nodal_forces(mesh: &Mesh, cache: &QuadCache, p: &[Tensor2]) -> Vec<f64> {
    let nq = cache.qp_per_element;
    let mut f = vec![0.0; 2 * mesh.n_nodes()];
    for (e, conn) in mesh.elements.iter().enumerate() {
        for q in 0..nq {
            let idx = e * nq + q;
            let w = cache.weights[idx];
            let pq = &p[idx];
            for (&node, ga) in conn.iter().zip(cache.grads_at(e, q)) {
                for i in 0..2 {
                    f[2 * node + i] += w * (pq[(i, 0)] * ga[0] + pq[(i, 1)] * ga[1]);
                }
            }
        }
    }
    f
}

/// Sum of absolute element contributions per DOF; a scale for residuals.
pub fn force_scale(mesh: &Mesh, cache: &QuadCache, p: &[Tensor2]) -> f64 {
    let nq = cache.qp_per_element;
    let mut f = vec![0.0; 2 * mesh.n_nodes()];
    for (e, conn) in mesh.elements.iter().enumerate() {
        for q in 0..nq {
            let idx = e * nq + q;
            let w = cache.weights[idx];
            let pq = &p[idx];
            for (&node, ga) in conn.iter().zip(cache.grads_at(e, q)) {
                for i in 0..2 {
                    f[2 * node + i] += (w * (pq[(i, 0)] * ga[0] + pq[(i, 1)] * ga[1])).abs();
                }
            }
        }
    }
    f.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_parent_disk_mesh;

    fn phases() -> Phases {
        Phases {
            matrix: NeoHookean::new(1.0, 1.0).unwrap(),
            fiber: NeoHookean::new(100.0, 100.0).unwrap(),
        }
    }

    #[test]
    fn identity_load_gives_zero_solution() {
        let rve = Rve::new(build_parent_disk_mesh(0.2, 4).unwrap(), phases()).unwrap();
        let sol = rve.solve(&Tensor2::identity(), &SolverOptions::default()).unwrap();
        assert!(sol.w.iter().all(|v| *v == 0.0));
        assert!(sol.pbar.norm() == 0.0);
    }

    #[test]
    fn homogeneous_cell_has_no_fluctuation() {
        let mat = NeoHookean::new(1.0, 1.0).unwrap();
        let rve = Rve::new(build_parent_disk_mesh(0.2, 4).unwrap(), Phases::homogeneous(mat)).unwrap();
        let u = Tensor2::new(1.1, 0.05, 0.05, 0.95);
        let sol = rve.solve(&u, &SolverOptions::default()).unwrap();
        assert!(sol.w.iter().all(|v| v.abs() < 1e-10));
        assert!((sol.pbar - mat.pk1(&u).unwrap()).norm() < 1e-10);
    }

    #[test]
    fn heterogeneous_average_strain_is_imposed() {
        let rve = Rve::new(build_parent_disk_mesh(0.225, 5).unwrap(), phases()).unwrap();
        let u = Tensor2::new(1.1, 0.0, 0.0, 1.0);
        let sol = rve.solve(&u, &SolverOptions::default()).unwrap();
        assert!((rve.average(&sol.f) - u).norm() < 1e-10);
        assert!(sol.w.iter().any(|v| v.abs() > 1e-4));
        // Slaves carry their master's fluctuation.
        for p in &rve.mesh.periodic_pairs {
            assert_eq!(sol.w[2 * p.master], sol.w[2 * p.slave]);
        }
    }
}
