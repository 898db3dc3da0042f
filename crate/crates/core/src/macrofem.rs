//! Macroscopic plane-strain solver with pluggable effective material laws.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::material::{polar_decompose, rotated_tangent, NeoHookean};
use crate::mesh::{ElementKind, Mesh, QuadCache};
use crate::microfem::{accumulate_point, Phases, Rve, RveTopology, SolverOptions};
use crate::morph::{AuxiliaryOperator, GeometryParam};
use crate::sparse::Assembler;
use crate::surrogate::SurrogateModel;
use crate::tensor::{Tensor2, Tensor4};

/// Stretch bound of the loading box used for training.
pub const TRAINING_STRETCH_BOUND: f64 = 0.15;

/// A macroscopic quadrature point and the cell geometry attached to it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialPoint {
    pub index: usize,
    pub x: Point,
    pub mu: GeometryParam,
}

/// Effective constitutive law seen by the macro solver.
pub trait ConstitutiveProvider: Sync {
    fn name(&self) -> &str;

    /// `(Pbar, dPbar/dFbar)` at one point.
    fn evaluate(&self, f: &Tensor2, point: &MaterialPoint) -> Result<(Tensor2, Tensor4)>;
}

/// One Neo-Hookean law everywhere.
#[derive(Debug, Clone, Copy)]
pub struct HomogeneousProvider(pub NeoHookean);

impl ConstitutiveProvider for HomogeneousProvider {
    fn name(&self) -> &str {
        "homogeneous"
    }

    fn evaluate(&self, f: &Tensor2, _: &MaterialPoint) -> Result<(Tensor2, Tensor4)> {
        self.0.stress_and_tangent(f)
    }
}

pub struct SurrogateProvider {
    pub model: Arc<SurrogateModel>,
    pub lambda: Vec<f64>,
}

impl ConstitutiveProvider for SurrogateProvider {
    fn name(&self) -> &str {
        "surrogate"
    }

    fn evaluate(&self, f: &Tensor2, point: &MaterialPoint) -> Result<(Tensor2, Tensor4)> {
        self.model.evaluate_with_rotation(f, &self.lambda, &point.mu)
    }
}

/// Nested cell solves on one morphed cell per macro point.
pub struct Fe2Provider {
    rves: Vec<Rve>,
    warm: Vec<Mutex<Option<Vec<f64>>>>,
    pub options: SolverOptions,
    pub fd_step: f64,
}

impl Fe2Provider {
    /// Morphs the parent cell once per point with the full auxiliary solve.
    pub fn new(points: &[MaterialPoint], operator: &AuxiliaryOperator, phases: Phases, options: SolverOptions) -> Result<Self> {
        let topology = Arc::new(RveTopology::new(&operator.mesh)?);
        let rves = points
            .par_iter()
            .map(|p| {
                let map = operator.solve_transformation(&p.mu)?;
                Rve::with_topology(operator.morph_mesh(&map), phases, topology.clone())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Fe2Provider {
            warm: rves.iter().map(|_| Mutex::new(None)).collect(),
            rves,
            options,
            fd_step: 1e-6,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.rves.len()
    }
}

impl ConstitutiveProvider for Fe2Provider {
    fn name(&self) -> &str {
        "fe2"
    }

    fn evaluate(&self, f: &Tensor2, point: &MaterialPoint) -> Result<(Tensor2, Tensor4)> {
        let rve = self
            .rves
            .get(point.index)
            .ok_or_else(|| Error::InvalidArgument(format!("no cell for point {}", point.index)))?;
        let (r, u) = polar_decompose(f)?;
        let guess = self.warm[point.index].lock().unwrap().clone();
        let (sol, a_hat) = rve.effective_stiffness_fd_from(&u, guess.as_deref(), self.fd_step, &self.options)?;
        let a = rotated_tangent(f, &sol.pbar, &a_hat)?;
        *self.warm[point.index].lock().unwrap() = Some(sol.w);
        Ok((r * sol.pbar, a))
    }
}

/// Quasi-static boundary value problem on a Quad4 mesh.
#[derive(Debug, Clone)]
pub struct MacroProblem {
    pub mesh: Mesh,
    pub cache: QuadCache,
    /// Nodes with both displacement components fixed at zero.
    pub clamped: Vec<usize>,
    /// Consistent nodal load at full load factor.
    pub f_ext: Vec<f64>,
    pub points: Vec<MaterialPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MacroOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_iterations: usize,
    pub load_steps: usize,
    pub max_bisections: usize,
}

impl Default for MacroOptions {
    fn default() -> Self {
        MacroOptions {
            rel_tol: 1e-8,
            abs_tol: 1e-12,
            max_iterations: 25,
            load_steps: 1,
            max_bisections: 6,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MacroRecord {
    pub load_steps: usize,
    pub iterations: usize,
    pub residuals: Vec<f64>,
    pub provider_calls: usize,
}

#[derive(Debug, Clone)]
pub struct MacroSolution {
    /// Nodal displacement, interleaved `(x, y)`.
    pub u: Vec<f64>,
    pub f: Vec<Tensor2>,
    pub record: MacroRecord,
    /// Largest `|U_xx - 1|, |U_yy - 1|, |U_xy|` over all points.
    pub max_stretch_deviation: f64,
}

/// `θ(x) = (π/2) sin x`.
pub fn cook_theta(x: f64) -> f64 {
    std::f64::consts::FRAC_PI_2 * x.sin()
}

/// Corners of the tapered panel, counter-clockwise from the origin.
pub const COOK_CORNERS: [Point; 4] = [[0.0, 0.0], [48.0, 44.0], [48.0, 60.0], [0.0, 44.0]];

/// Cook's membrane with `nx` x `ny` bilinear elements, clamped on the left
/// and loaded by a vertical dead traction on the right edge. `scale`
/// multiplies all coordinates.
pub fn cooks_membrane_scaled(nx: usize, ny: usize, traction: f64, scale: f64) -> Result<MacroProblem> {
    if nx < 2 || ny < 2 {
        return Err(Error::InvalidArgument("Cook's membrane needs nx, ny >= 2".into()));
    }
    if !(scale > 0.0) {
        return Err(Error::InvalidArgument("scale must be positive".into()));
    }
    let [p0, p1, p2, p3] = COOK_CORNERS;
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            let (s, t) = (i as f64 / nx as f64, j as f64 / ny as f64);
            let n = [(1.0 - s) * (1.0 - t), s * (1.0 - t), s * t, (1.0 - s) * t];
            let x = n[0] * p0[0] + n[1] * p1[0] + n[2] * p2[0] + n[3] * p3[0];
            let y = n[0] * p0[1] + n[1] * p1[1] + n[2] * p2[1] + n[3] * p3[1];
            nodes.push([scale * x, scale * y]);
        }
    }
    let mut elements = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            elements.push(vec![id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    let left: Vec<usize> = (0..=ny).map(|j| id(0, j)).collect();
    let right: Vec<usize> = (0..=ny).map(|j| id(nx, j)).collect();
    let mut f_ext = vec![0.0; 2 * nodes.len()];
    for w in right.windows(2) {
        let (a, b) = (nodes[w[0]], nodes[w[1]]);
        let half = 0.5 * traction * (b[0] - a[0]).hypot(b[1] - a[1]);
        f_ext[2 * w[0] + 1] += half;
        f_ext[2 * w[1] + 1] += half;
    }
    let mesh = Mesh {
        nodes,
        kind: ElementKind::Quad4,
        elements,
        node_sets: BTreeMap::from([("left".to_string(), left.clone()), ("right".to_string(), right)]),
        element_sets: BTreeMap::new(),
        periodic_pairs: Vec::new(),
    };
    let cache = mesh.quadrature()?;
    let points = cache
        .points
        .iter()
        .enumerate()
        .map(|(index, x)| MaterialPoint {
            index,
            x: *x,
            mu: GeometryParam::Ellipse {
                a: 0.35,
                b: 0.1,
                theta: cook_theta(x[0]),
            },
        })
        .collect();
    Ok(MacroProblem {
        mesh,
        cache,
        clamped: left,
        f_ext,
        points,
    })
}

pub fn cooks_membrane(nx: usize, ny: usize, traction: f64) -> Result<MacroProblem> {
    cooks_membrane_scaled(nx, ny, traction, 1.0)
}

impl MacroProblem {
    fn dof_map(&self) -> (Vec<Option<usize>>, usize) {
        let mut fixed = vec![false; self.mesh.n_nodes()];
        for &n in &self.clamped {
            fixed[n] = true;
        }
        let mut map = vec![None; 2 * self.mesh.n_nodes()];
        let mut k = 0;
        for (n, f) in fixed.iter().enumerate() {
            if !f {
                map[2 * n] = Some(k);
                map[2 * n + 1] = Some(k + 1);
                k += 2;
            }
        }
        (map, k)
    }

    pub fn deformation(&self, u: &[f64]) -> Vec<Tensor2> {
        let nq = self.cache.qp_per_element;
        (0..self.cache.n_points())
            .map(|i| Tensor2::identity() + self.cache.field_gradient(&self.mesh, i / nq, i % nq, u))
            .collect()
    }

    /// Unreduced internal force vector for a given stress field.
    pub fn internal_forces(&self, p: &[Tensor2]) -> Vec<f64> {
        crate::microfem::nodal_forces(&self.mesh, &self.cache, p)
    }
}

/// Largest stretch component deviation of `Fbar` from the identity.
pub fn stretch_deviation(f: &Tensor2) -> Result<f64> {
    let (_, u) = polar_decompose(f)?;
    Ok((u[(0, 0)] - 1.0).abs().max((u[(1, 1)] - 1.0).abs()).max(u[(0, 1)].abs()))
}

struct Assembled {
    residual: Vec<f64>,
    values: Vec<f64>,
}

fn assemble(
    problem: &MacroProblem,
    provider: &dyn ConstitutiveProvider,
    assembler: &Assembler,
    free_of: &[Option<usize>],
    u: &[f64],
    load: f64,
) -> Result<Assembled> {
    let f = problem.deformation(u);
    let evaluated = problem
        .points
        .par_iter()
        .zip(f.par_iter())
        .map(|(pt, fq)| {
            provider.evaluate(fq, pt).map_err(|e| {
                Error::InvalidArgument(format!(
                    "{} provider failed at point {} ({:.4}, {:.4}): {e}",
                    provider.name(),
                    pt.index,
                    pt.x[0],
                    pt.x[1]
                ))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let nq = problem.cache.qp_per_element;
    let nd = 2 * problem.cache.nodes_per_element;
    let mut values = assembler.zeros();
    let mut residual = vec![0.0; assembler.n()];
    let mut ke = vec![0.0; nd * nd];
    let mut fe = vec![0.0; nd];
    for e in 0..problem.mesh.n_elements() {
        ke.iter_mut().for_each(|v| *v = 0.0);
        fe.iter_mut().for_each(|v| *v = 0.0);
        for q in 0..nq {
            let idx = e * nq + q;
            let (p, a) = &evaluated[idx];
            accumulate_point(problem.cache.grads_at(e, q), problem.cache.weights[idx], p, a, &mut fe, &mut ke);
        }
        assembler.add_matrix(&mut values, e, &ke);
        assembler.add_vector(&mut residual, e, &fe);
    }
    for (dof, free) in free_of.iter().enumerate() {
        if let Some(k) = free {
            residual[*k] -= load * problem.f_ext[dof];
        }
    }
    Ok(Assembled { residual, values })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Newton iterations at one load factor starting from `u`.
#[allow(clippy::too_many_arguments)]
fn newton(
    problem: &MacroProblem,
    provider: &dyn ConstitutiveProvider,
    assembler: &Assembler,
    free_of: &[Option<usize>],
    u: &mut [f64],
    load: f64,
    opts: &MacroOptions,
    record: &mut MacroRecord,
) -> Result<()> {
    let scale = load.abs() * norm(&problem.f_ext);
    for it in 0..=opts.max_iterations {
        let sys = assemble(problem, provider, assembler, free_of, u, load)?;
        record.provider_calls += problem.points.len();
        let r = norm(&sys.residual);
        record.residuals.push(r);
        if r <= opts.rel_tol * scale || r <= opts.abs_tol {
            return Ok(());
        }
        if !r.is_finite() || it == opts.max_iterations {
            return Err(Error::NonConvergence {
                iterations: it,
                residual: r,
                load_fraction: load,
            });
        }
        let du = assembler.factor_lu(&sys.values)?.solve(&sys.residual)?;
        for (dof, free) in free_of.iter().enumerate() {
            if let Some(k) = free {
                u[dof] -= du[*k];
            }
        }
        record.iterations += 1;
    }
    unreachable!()
}

/// Load-stepped Newton solve of the macro problem.
pub fn solve_macro(problem: &MacroProblem, provider: &dyn ConstitutiveProvider, opts: &MacroOptions) -> Result<MacroSolution> {
    let (free_of, n_free) = problem.dof_map();
    let element_dofs = problem
        .mesh
        .elements
        .iter()
        .map(|c| c.iter().flat_map(|&n| [free_of[2 * n], free_of[2 * n + 1]]).collect())
        .collect();
    let assembler = Assembler::new(n_free, element_dofs);
    let mut u = vec![0.0; 2 * problem.mesh.n_nodes()];
    let mut record = MacroRecord::default();
    let mut done = 0.0f64;
    let mut step = 1.0 / opts.load_steps.max(1) as f64;
    let mut depth = 0;
    while done < 1.0 {
        let target = (done + step).min(1.0);
        let mut trial = u.clone();
        match newton(problem, provider, &assembler, &free_of, &mut trial, target, opts, &mut record) {
            Ok(()) => {
                u = trial;
                done = target;
                record.load_steps += 1;
            }
            Err(e) => {
                if depth >= opts.max_bisections {
                    return Err(e);
                }
                log::debug!("macro step to load {target} failed ({e}); bisecting");
                depth += 1;
                step *= 0.5;
            }
        }
    }
    let f = problem.deformation(&u);
    let max_stretch_deviation = f
        .iter()
        .map(stretch_deviation)
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(MacroSolution {
        u,
        f,
        record,
        max_stretch_deviation,
    })
}

/// As [`solve_macro`], warning when the solution leaves the loading box the
/// surrogate was trained on.
pub fn solve_macro_guarded(
    problem: &MacroProblem,
    provider: &dyn ConstitutiveProvider,
    opts: &MacroOptions,
    bound: f64,
) -> Result<MacroSolution> {
    let sol = solve_macro(problem, provider, opts)?;
    if sol.max_stretch_deviation >= bound {
        log::warn!(
            "macro solution leaves the training range: max stretch deviation {:.4} >= {bound}",
            sol.max_stretch_deviation
        );
    }
    Ok(sol)
}

/// `f_ext . u`.
pub fn compliance(problem: &MacroProblem, sol: &MacroSolution) -> f64 {
    problem.f_ext.iter().zip(&sol.u).map(|(f, u)| f * u).sum()
}

/// Reaction forces on clamped nodes plus applied load, relative to the load.
pub fn equilibrium_imbalance(problem: &MacroProblem, provider: &dyn ConstitutiveProvider, sol: &MacroSolution) -> Result<f64> {
    let p = problem
        .points
        .iter()
        .zip(&sol.f)
        .map(|(pt, f)| provider.evaluate(f, pt).map(|r| r.0))
        .collect::<Result<Vec<_>>>()?;
    let fint = problem.internal_forces(&p);
    let mut reaction = [0.0; 2];
    let mut applied = [0.0; 2];
    for &n in &problem.clamped {
        reaction[0] += fint[2 * n];
        reaction[1] += fint[2 * n + 1];
    }
    for n in 0..problem.mesh.n_nodes() {
        applied[0] += problem.f_ext[2 * n];
        applied[1] += problem.f_ext[2 * n + 1];
    }
    let gap = ((applied[0] + reaction[0]).powi(2) + (applied[1] + reaction[1]).powi(2)).sqrt();
    Ok(gap / applied[0].hypot(applied[1]).max(f64::MIN_POSITIVE))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldComparison {
    /// `|u_a - u_b|` per node.
    pub nodal_error: Vec<f64>,
    /// `||u_a - u_b||_L2 / ||u_b||_L2` over the macro domain.
    pub relative_l2: f64,
    pub max_abs: f64,
    /// Largest nodal displacement magnitude of the reference.
    pub reference_max: f64,
}

/// Compares `a` against the reference `b` on the same mesh.
pub fn compare_fields(problem: &MacroProblem, a: &MacroSolution, b: &MacroSolution) -> Result<FieldComparison> {
    let n = problem.mesh.n_nodes();
    if a.u.len() != 2 * n || b.u.len() != 2 * n {
        return Err(Error::InvalidArgument("solutions do not match the mesh".into()));
    }
    let nodal_error: Vec<f64> = (0..n)
        .map(|i| (a.u[2 * i] - b.u[2 * i]).hypot(a.u[2 * i + 1] - b.u[2 * i + 1]))
        .collect();
    let diff: Vec<f64> = a.u.iter().zip(&b.u).map(|(x, y)| x - y).collect();
    let relative_l2 = l2_norm(problem, &diff) / l2_norm(problem, &b.u).max(f64::MIN_POSITIVE);
    Ok(FieldComparison {
        max_abs: nodal_error.iter().copied().fold(0.0, f64::max),
        reference_max: (0..n).map(|i| b.u[2 * i].hypot(b.u[2 * i + 1])).fold(0.0, f64::max),
        nodal_error,
        relative_l2,
    })
}

/// `L2` norm of a nodal vector field.
pub fn l2_norm(problem: &MacroProblem, u: &[f64]) -> f64 {
    let nq = problem.cache.qp_per_element;
    let mut s = 0.0;
    for (e, conn) in problem.mesh.elements.iter().enumerate() {
        for q in 0..nq {
            let n = problem.cache.values_at(q);
            let (mut x, mut y) = (0.0, 0.0);
            for (a, &node) in conn.iter().enumerate() {
                x += n[a] * u[2 * node];
                y += n[a] * u[2 * node + 1];
            }
            s += problem.cache.weights[e * nq + q] * (x * x + y * y);
        }
    }
    s.sqrt()
}

/// Writes `node,x,y,ux,uy[,error]` rows.
pub fn write_displacement_csv(path: &Path, problem: &MacroProblem, u: &[f64], error: Option<&[f64]>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(out, "node,x,y,ux,uy")?;
    if error.is_some() {
        write!(out, ",error")?;
    }
    writeln!(out)?;
    for (i, p) in problem.mesh.nodes.iter().enumerate() {
        write!(out, "{i},{},{},{},{}", p[0], p[1], u[2 * i], u[2 * i + 1])?;
        if let Some(e) = error {
            write!(out, ",{}", e[i])?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}
