//! Exact Gaussian process regression with an ARD squared-exponential kernel.
//!
//! Inputs are mapped affinely to the unit cube using configured ranges and
//! targets are standardized. Hyperparameters are optimized in log space,
//! `theta = [ln sf2, ln l_1 .. ln l_d, ln sn2]`, by a projected
//! limited-memory quasi-Newton method with random restarts.

use std::collections::VecDeque;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GprOptions {
    pub restarts: usize,
    pub seed: u64,
    pub max_iterations: usize,
    pub grad_tol: f64,
    pub min_noise: f64,
    pub max_noise: f64,
    pub lengthscale_bounds: [f64; 2],
    pub signal_bounds: [f64; 2],
    /// Hyperparameters are optimized on an evenly strided subset of at most
    /// this many points; the posterior always uses all of them.
    pub max_optimization_points: usize,
}

impl Default for GprOptions {
    fn default() -> Self {
        GprOptions {
            restarts: 5,
            seed: 0,
            max_iterations: 200,
            grad_tol: 1e-6,
            min_noise: 1e-10,
            max_noise: 1.0,
            lengthscale_bounds: [1e-2, 1e2],
            signal_bounds: [1e-4, 1e4],
            max_optimization_points: 400,
        }
    }
}

impl GprOptions {
    fn bounds(&self, dim: usize) -> Vec<[f64; 2]> {
        let ln = |b: [f64; 2]| [b[0].ln(), b[1].ln()];
        let mut b = vec![ln(self.signal_bounds)];
        b.extend(std::iter::repeat(ln(self.lengthscale_bounds)).take(dim));
        b.push(ln([self.min_noise, self.max_noise]));
        b
    }
}

/// Squared-exponential kernel with one lengthscale per input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArdKernel {
    pub signal_variance: f64,
    pub lengthscales: Vec<f64>,
}

impl ArdKernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let r2: f64 = a
            .iter()
            .zip(b)
            .zip(&self.lengthscales)
            .map(|((x, y), l)| ((x - y) / l).powi(2))
            .sum();
        self.signal_variance * (-0.5 * r2).exp()
    }
}

/// Pairwise squared input differences per dimension, reused across
/// likelihood evaluations.
struct Distances {
    n: usize,
    per_dim: Vec<Vec<f64>>,
}

impl Distances {
    fn new(x: &[Vec<f64>]) -> Self {
        let n = x.len();
        let dim = x.first().map_or(0, Vec::len);
        let per_dim = (0..dim)
            .map(|d| {
                let mut m = vec![0.0; n * n];
                for i in 0..n {
                    for j in 0..n {
                        m[i * n + j] = (x[i][d] - x[j][d]).powi(2);
                    }
                }
                m
            })
            .collect();
        Distances { n, per_dim }
    }

    fn kernel(&self, theta: &[f64]) -> DMatrix<f64> {
        let n = self.n;
        let sf2 = theta[0].exp();
        let inv_l2: Vec<f64> = self.per_dim.iter().enumerate().map(|(d, _)| (-2.0 * theta[1 + d]).exp()).collect();
        DMatrix::from_fn(n, n, |i, j| {
            let r2: f64 = self.per_dim.iter().zip(&inv_l2).map(|(m, il)| m[i * n + j] * il).sum();
            sf2 * (-0.5 * r2).exp()
        })
    }
}

fn factor_with_jitter(mut k: DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = k.nrows();
    let mut jitter = 0.0;
    for attempt in 0..7 {
        if let Some(c) = k.clone().cholesky() {
            return Ok((c, jitter));
        }
        let add = 1e-10 * 10f64.powi(attempt);
        for i in 0..n {
            k[(i, i)] += add - jitter;
        }
        jitter = add;
    }
    let diag_max = (0..n).map(|i| k[(i, i)]).fold(0.0, f64::max);
    let diag_min = (0..n).map(|i| k[(i, i)]).fold(f64::INFINITY, f64::min);
    Err(Error::Regression(format!(
        "Gram matrix not positive definite with jitter up to {jitter:.1e} (diagonal range {diag_min:.3e}..{diag_max:.3e})"
    )))
}

/// Log marginal likelihood and its gradient in log-hyperparameter space.
fn lml_with(dist: &Distances, y: &DVector<f64>, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
    let n = dist.n;
    let kf = dist.kernel(theta);
    let sn2 = theta[theta.len() - 1].exp();
    let mut k = kf.clone();
    for i in 0..n {
        k[(i, i)] += sn2;
    }
    let chol = k
        .cholesky()
        .ok_or_else(|| Error::Regression("Gram matrix not positive definite".into()))?;
    let alpha = chol.solve(y);
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let value = -0.5 * y.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * LN_2PI;
    let kinv = chol.inverse();
    // W = alpha alpha^T - K^{-1}; gradient = 1/2 tr(W dK)
    let w = |i: usize, j: usize| alpha[i] * alpha[j] - kinv[(i, j)];
    let mut grad = vec![0.0; theta.len()];
    let mut g_sf = 0.0;
    let mut g_l = vec![0.0; dist.per_dim.len()];
    let inv_l2: Vec<f64> = (0..dist.per_dim.len()).map(|d| (-2.0 * theta[1 + d]).exp()).collect();
    for i in 0..n {
        for j in 0..n {
            let wij = w(i, j);
            let kij = kf[(i, j)];
            g_sf += wij * kij;
            for (d, m) in dist.per_dim.iter().enumerate() {
                g_l[d] += wij * kij * m[i * n + j] * inv_l2[d];
            }
        }
    }
    grad[0] = 0.5 * g_sf;
    for (d, g) in g_l.into_iter().enumerate() {
        grad[1 + d] = 0.5 * g;
    }
    grad[theta.len() - 1] = 0.5 * sn2 * (0..n).map(|i| w(i, i)).sum::<f64>();
    Ok((value, grad))
}

/// Log marginal likelihood of standardized targets `y` at normalized inputs
/// `x`, with its gradient in `theta`.
pub fn log_marginal_likelihood(theta: &[f64], x: &[Vec<f64>], y: &[f64]) -> Result<(f64, Vec<f64>)> {
    let dim = x.first().map_or(0, Vec::len);
    if theta.len() != dim + 2 {
        return Err(Error::InvalidArgument(format!(
            "expected {} hyperparameters, got {}",
            dim + 2,
            theta.len()
        )));
    }
    lml_with(&Distances::new(x), &DVector::from_column_slice(y), theta)
}

fn project(x: &mut [f64], bounds: &[[f64; 2]]) {
    for (v, b) in x.iter_mut().zip(bounds) {
        *v = v.clamp(b[0], b[1]);
    }
}

fn projected_gradient_norm(x: &[f64], g: &[f64], bounds: &[[f64; 2]]) -> f64 {
    x.iter()
        .zip(g)
        .zip(bounds)
        .map(|((xi, gi), b)| ((xi - gi).clamp(b[0], b[1]) - xi).abs())
        .fold(0.0, f64::max)
}

/// Minimizes `f` over a box with a projected L-BFGS iteration.
pub fn minimize_box(
    f: &dyn Fn(&[f64]) -> Option<(f64, Vec<f64>)>,
    x0: &[f64],
    bounds: &[[f64; 2]],
    max_iterations: usize,
    grad_tol: f64,
) -> Option<(Vec<f64>, f64)> {
    let mut x = x0.to_vec();
    project(&mut x, bounds);
    let (mut fx, mut g) = f(&x)?;
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    for _ in 0..max_iterations {
        if projected_gradient_norm(&x, &g, bounds) <= grad_tol {
            break;
        }
        // Variables pinned at a bound with the gradient pushing outward are
        // frozen for this step.
        let active: Vec<bool> = x
            .iter()
            .zip(&g)
            .zip(bounds)
            .map(|((xi, gi), b)| (*xi <= b[0] && *gi > 0.0) || (*xi >= b[1] && *gi < 0.0))
            .collect();
        let mut q: Vec<f64> = g.iter().zip(&active).map(|(gi, a)| if *a { 0.0 } else { *gi }).collect();
        let mut alphas = Vec::with_capacity(memory.len());
        for (s, y, rho) in memory.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = memory.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in memory.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        let mut dir: Vec<f64> = q.iter().zip(&active).map(|(v, a)| if *a { 0.0 } else { -v }).collect();
        if dot(&dir, &g) >= 0.0 {
            memory.clear();
            dir = g.iter().zip(&active).map(|(v, a)| if *a { 0.0 } else { -v }).collect();
        }
        let mut step = if memory.is_empty() {
            (1.0 / dir.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-12)).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..40 {
            let mut xt: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            project(&mut xt, bounds);
            let decrease: f64 = g.iter().zip(xt.iter().zip(&x)).map(|(gi, (a, b))| gi * (a - b)).sum();
            if let Some((ft, gt)) = f(&xt) {
                if ft.is_finite() && ft <= fx + 1e-4 * decrease {
                    accepted = Some((xt, ft, gt));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else { break };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            memory.push_back((s, y, 1.0 / sy));
            if memory.len() > 10 {
                memory.pop_front();
            }
        }
        let change = (fx - fn_).abs();
        x = xn;
        fx = fn_;
        g = gn;
        if change <= 1e-14 * fx.abs().max(1.0) {
            break;
        }
    }
    Some((x, fx))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A fitted Gaussian process for one scalar output.
#[derive(Debug, Clone)]
pub struct Gpr {
    /// Per-input `[lo, hi]` used for normalization.
    pub ranges: Vec<[f64; 2]>,
    /// Normalized training inputs.
    pub x: Vec<Vec<f64>>,
    /// Raw training targets.
    pub y: Vec<f64>,
    pub y_mean: f64,
    pub y_std: f64,
    pub theta: Vec<f64>,
    pub log_likelihood: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    kernel: ArdKernel,
    /// Row-major `x / l`, so a kernel value costs one squared distance.
    scaled: Vec<f64>,
}

/// Serializable parameters from which a [`Gpr`] is rebuilt exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GprParts {
    pub ranges: Vec<[f64; 2]>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub theta: Vec<f64>,
}

impl Gpr {
    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        normalize(&self.ranges, x)
    }

    pub fn dim(&self) -> usize {
        self.ranges.len()
    }

    pub fn kernel(&self) -> &ArdKernel {
        &self.kernel
    }

    pub fn noise_variance(&self) -> f64 {
        self.theta[self.theta.len() - 1].exp()
    }

    pub fn parts(&self) -> GprParts {
        GprParts {
            ranges: self.ranges.clone(),
            x: self.x.clone(),
            y: self.y.clone(),
            theta: self.theta.clone(),
        }
    }

    /// Builds the posterior for fixed hyperparameters.
    pub fn from_parts(parts: GprParts) -> Result<Self> {
        let GprParts { ranges, x, y, theta } = parts;
        let n = x.len();
        let dim = ranges.len();
        if n == 0 || y.len() != n || theta.len() != dim + 2 || x.iter().any(|r| r.len() != dim) {
            return Err(Error::Regression("inconsistent GP parameters".into()));
        }
        let (y_mean, y_std) = standardization(&y);
        let ys = DVector::from_iterator(n, y.iter().map(|v| (v - y_mean) / y_std));
        let dist = Distances::new(&x);
        let mut k = dist.kernel(&theta);
        let sn2 = theta[dim + 1].exp();
        for i in 0..n {
            k[(i, i)] += sn2;
        }
        let (chol, _) = factor_with_jitter(k)?;
        let alpha = chol.solve(&ys);
        let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let log_likelihood = -0.5 * ys.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * LN_2PI;
        let kernel = ArdKernel {
            signal_variance: theta[0].exp(),
            lengthscales: theta[1..=dim].iter().map(|v| v.exp()).collect(),
        };
        let scaled = x
            .iter()
            .flat_map(|r| r.iter().zip(&kernel.lengthscales).map(|(v, l)| v / l))
            .collect();
        Ok(Gpr {
            scaled,
            ranges,
            x,
            y,
            y_mean,
            y_std,
            theta,
            log_likelihood,
            chol,
            alpha,
            kernel,
        })
    }

    pub fn in_range(&self, x: &[f64]) -> bool {
        x.iter().zip(&self.ranges).all(|(v, r)| *v >= r[0] - 1e-12 && *v <= r[1] + 1e-12)
    }

    /// Posterior mean (original units) and variance (standardized units).
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let xn = self.normalize(x);
        let ks = DVector::from_iterator(self.x.len(), self.x.iter().map(|xi| self.kernel.eval(&xn, xi)));
        let mean = self.y_mean + self.y_std * compensated_sum(ks.iter().zip(self.alpha.iter()).map(|(k, a)| k * a));
        let v = self.chol.l().solve_lower_triangular(&ks).unwrap_or_else(|| ks.clone());
        let var = (self.kernel.signal_variance - v.norm_squared()).max(0.0);
        (mean, var)
    }

    pub fn predict_batch(&self, xs: &[Vec<f64>]) -> Vec<(f64, f64)> {
        xs.iter().map(|x| self.predict(x)).collect()
    }

    /// Gradient of the posterior mean in original input units.
    pub fn predict_gradient(&self, x: &[f64]) -> Vec<f64> {
        let xn = self.normalize(x);
        let mut g = vec![0.0; self.dim()];
        for (xi, a) in self.x.iter().zip(self.alpha.iter()) {
            let k = self.kernel.eval(&xn, xi) * a;
            for d in 0..self.dim() {
                let l = self.kernel.lengthscales[d];
                g[d] -= k * (xn[d] - xi[d]) / (l * l);
            }
        }
        for (d, r) in self.ranges.iter().enumerate() {
            g[d] *= self.y_std / (r[1] - r[0]);
        }
        g
    }

    /// Normalized query divided by the lengthscales.
    fn scaled_query(&self, x: &[f64]) -> Vec<f64> {
        self.normalize(x).iter().zip(&self.kernel.lengthscales).map(|(v, l)| v / l).collect()
    }

    /// `k(x, x_i) alpha_i` for every training point, with the scaled offsets.
    fn weighted_terms<'a>(&'a self, q: &'a [f64]) -> impl Iterator<Item = (f64, &'a [f64])> + 'a {
        self.scaled.chunks_exact(q.len()).zip(self.alpha.iter()).map(move |(xi, a)| {
            let r2: f64 = q.iter().zip(xi).map(|(u, v)| (u - v) * (u - v)).sum();
            (self.kernel.signal_variance * (-0.5 * r2).exp() * a, xi)
        })
    }

    /// Posterior mean only, skipping the variance solve.
    pub fn mean(&self, x: &[f64]) -> f64 {
        let q = self.scaled_query(x);
        self.y_mean + self.y_std * compensated_sum(self.weighted_terms(&q).map(|(k, _)| k))
    }

    /// Posterior mean and its input gradient from one pass over the data.
    pub fn mean_and_gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let q = self.scaled_query(x);
        let mut m = Neumaier::default();
        let mut g = vec![0.0; self.dim()];
        for (k, xi) in self.weighted_terms(&q) {
            m.add(k);
            for ((gd, u), v) in g.iter_mut().zip(&q).zip(xi) {
                *gd -= k * (u - v);
            }
        }
        for ((gd, r), l) in g.iter_mut().zip(&self.ranges).zip(&self.kernel.lengthscales) {
            *gd *= self.y_std / (l * (r[1] - r[0]));
        }
        (self.y_mean + self.y_std * m.total(), g)
    }
}

/// Compensated running sum. The posterior mean is a sum of large terms of
/// both signs, and plain accumulation leaves enough rounding noise to stall
/// a Newton solve that uses the surrogate.
#[derive(Default)]
struct Neumaier {
    sum: f64,
    c: f64,
}

impl Neumaier {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.c += (self.sum - t) + v;
        } else {
            self.c += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.c
    }
}

fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut acc = Neumaier::default();
    values.for_each(|v| acc.add(v));
    acc.total()
}

fn standardization(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    let scale = mean.abs().max(1e-300);
    if std <= 1e-13 * scale || std == 0.0 {
        (mean, 1.0)
    } else {
        (mean, std)
    }
}

pub fn normalize(ranges: &[[f64; 2]], x: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(ranges)
        .map(|(v, r)| (v - r[0]) / (r[1] - r[0]))
        .collect()
}

/// Averages targets of rows with identical normalized inputs.
fn merge_duplicates(x: Vec<Vec<f64>>, y: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut out_x: Vec<Vec<f64>> = Vec::new();
    let mut sums: Vec<(f64, usize)> = Vec::new();
    let mut index = std::collections::HashMap::new();
    for (xi, yi) in x.into_iter().zip(y) {
        let key: Vec<u64> = xi.iter().map(|v| v.to_bits()).collect();
        match index.get(&key) {
            Some(&k) => {
                let s: &mut (f64, usize) = &mut sums[k];
                s.0 += yi;
                s.1 += 1;
            }
            None => {
                index.insert(key, out_x.len());
                out_x.push(xi);
                sums.push((*yi, 1));
            }
        }
    }
    (out_x, sums.into_iter().map(|(s, c)| s / c as f64).collect())
}

/// Indices `floor(k n / m)` for `k < m`, or all of `0..n`.
fn optimization_subset(n: usize, m: usize) -> Vec<usize> {
    if m < 2 || n <= m {
        return (0..n).collect();
    }
    (0..m).map(|k| k * n / m).collect()
}

/// Fits hyperparameters by maximum marginal likelihood.
pub fn fit(ranges: &[[f64; 2]], x: &[Vec<f64>], y: &[f64], opts: &GprOptions) -> Result<Gpr> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument("inputs and targets differ in length".into()));
    }
    if ranges.iter().any(|r| !(r[1] > r[0])) {
        return Err(Error::InvalidArgument("empty input range".into()));
    }
    if y.iter().any(|v| !v.is_finite()) || x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Regression("non-finite training data".into()));
    }
    let normalized: Vec<Vec<f64>> = x.iter().map(|xi| normalize(ranges, xi)).collect();
    let (xn, yn) = merge_duplicates(normalized, y);
    if xn.len() < 2 {
        return Err(Error::Regression("need at least two distinct training inputs".into()));
    }
    let dim = ranges.len();
    let (y_mean, y_std) = standardization(&yn);
    let keep = optimization_subset(xn.len(), opts.max_optimization_points);
    let ys = DVector::from_iterator(keep.len(), keep.iter().map(|&i| (yn[i] - y_mean) / y_std));
    let dist = Distances::new(&keep.iter().map(|&i| xn[i].clone()).collect::<Vec<_>>());
    let bounds = opts.bounds(dim);
    let objective = |t: &[f64]| {
        lml_with(&dist, &ys, t)
            .ok()
            .map(|(v, g)| (-v, g.into_iter().map(|x| -x).collect()))
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts = Vec::with_capacity(opts.restarts.max(1));
    let mut default = vec![0.0; dim + 2];
    default[1..=dim].iter_mut().for_each(|v| *v = 0.3f64.ln());
    default[dim + 1] = 1e-6f64.max(opts.min_noise).ln();
    starts.push(default);
    while starts.len() < opts.restarts.max(1) {
        starts.push(bounds.iter().map(|b| rng.random_range(b[0]..=b[1])).collect());
    }
    let mut best: Option<(Vec<f64>, f64)> = None;
    for s in &starts {
        if let Some((t, v)) = minimize_box(&objective, s, &bounds, opts.max_iterations, opts.grad_tol) {
            if best.as_ref().is_none_or(|b| v < b.1) {
                best = Some((t, v));
            }
        }
    }
    let (theta, _) = best.ok_or_else(|| {
        Error::Regression("likelihood could not be evaluated at any starting point".into())
    })?;
    Gpr::from_parts(GprParts {
        ranges: ranges.to_vec(),
        x: xn,
        y: yn,
        theta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_likelihood_is_gaussian_density() {
        let theta = [0.3f64.ln(), 0.5f64.ln(), 0.1f64.ln()];
        let (v, _) = log_marginal_likelihood(&theta, &[vec![0.2]], &[0.7]).unwrap();
        let s2: f64 = 0.3 + 0.1;
        let expected = -0.5 * 0.7 * 0.7 / s2 - 0.5 * s2.ln() - 0.5 * LN_2PI;
        assert!((v - expected).abs() < 1e-12);
    }

    #[test]
    fn constant_targets_give_constant_mean() {
        let x: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64 / 4.0]).collect();
        let gp = fit(&[[0.0, 1.0]], &x, &[2.5; 5], &GprOptions::default()).unwrap();
        for t in [0.1, 0.37, 0.9] {
            assert!((gp.predict(&[t]).0 - 2.5).abs() < 1e-12);
            assert!(gp.predict_gradient(&[t])[0].abs() <= 1e-8);
        }
    }

    #[test]
    fn duplicates_are_merged() {
        let x = vec![vec![0.0], vec![0.5], vec![0.5], vec![1.0]];
        let gp = fit(&[[0.0, 1.0]], &x, &[0.0, 1.0, 3.0, 0.0], &GprOptions::default()).unwrap();
        assert_eq!(gp.x.len(), 3);
        assert_eq!(gp.y[1], 2.0);
    }

    #[test]
    fn optimization_subset_is_strided() {
        assert_eq!(optimization_subset(5, 10), vec![0, 1, 2, 3, 4]);
        assert_eq!(optimization_subset(10, 4), vec![0, 2, 5, 7]);
    }

    #[test]
    fn box_minimizer_respects_bounds() {
        let f = |x: &[f64]| Some(((x[0] - 3.0).powi(2) + (x[1] + 1.0).powi(2), vec![2.0 * (x[0] - 3.0), 2.0 * (x[1] + 1.0)]));
        let (x, _) = minimize_box(&f, &[0.0, 0.0], &[[-1.0, 1.0], [-5.0, 5.0]], 100, 1e-10).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] + 1.0).abs() < 1e-8);
    }
}
