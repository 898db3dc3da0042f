//! Fixed-pattern sparse assembly and factorization.
//!
//! The sparsity pattern is computed once from element DOF lists; each
//! element's local matrix is then scattered through precomputed value
//! positions. The symbolic Cholesky analysis is shared by every matrix with
//! that pattern.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu, SymbolicLlt, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMat};
use faer::{Mat, Side};

use crate::error::{Error, Result};

const UNUSED: usize = usize::MAX;

#[derive(Debug, Clone)]
pub struct Assembler {
    n: usize,
    local: usize,
    pattern: SymbolicSparseColMat<usize>,
    /// Value position for each `(element, i, j)`, row-major per element.
    scatter: Vec<usize>,
    element_dofs: Vec<Vec<Option<usize>>>,
}

impl Assembler {
    /// `element_dofs[e][i]` is the global equation of local DOF `i`, or
    /// `None` when that DOF is eliminated.
    pub fn new(n: usize, element_dofs: Vec<Vec<Option<usize>>>) -> Self {
        let local = element_dofs.first().map_or(0, Vec::len);
        let mut columns: Vec<Vec<usize>> = vec![Vec::new(); n];
        for dofs in &element_dofs {
            for c in dofs.iter().flatten() {
                for r in dofs.iter().flatten() {
                    columns[*c].push(*r);
                }
            }
        }
        // Keep the diagonal even for DOFs no element touches.
        for (c, col) in columns.iter_mut().enumerate() {
            col.push(c);
            col.sort_unstable();
            col.dedup();
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for col in &columns {
            row_idx.extend_from_slice(col);
            col_ptr.push(row_idx.len());
        }
        let mut scatter = Vec::with_capacity(element_dofs.len() * local * local);
        for dofs in &element_dofs {
            for r in dofs {
                for c in dofs {
                    scatter.push(match (r, c) {
                        (Some(r), Some(c)) => {
                            let rows = &row_idx[col_ptr[*c]..col_ptr[c + 1]];
                            col_ptr[*c] + rows.binary_search(r).expect("pattern entry")
                        }
                        _ => UNUSED,
                    });
                }
            }
        }
        let pattern = SymbolicSparseColMat::new_checked(n, n, col_ptr, None, row_idx);
        Assembler {
            n,
            local,
            pattern,
            scatter,
            element_dofs,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.pattern.row_idx().len()
    }

    pub fn element_dofs(&self, e: usize) -> &[Option<usize>] {
        &self.element_dofs[e]
    }

    pub fn zeros(&self) -> Vec<f64> {
        vec![0.0; self.nnz()]
    }

    /// Adds the row-major local matrix `ke` of element `e`.
    pub fn add_matrix(&self, values: &mut [f64], e: usize, ke: &[f64]) {
        let pos = &self.scatter[e * self.local * self.local..(e + 1) * self.local * self.local];
        for (p, v) in pos.iter().zip(ke) {
            if *p != UNUSED {
                values[*p] += v;
            }
        }
    }

    /// Adds the local vector `fe` of element `e`.
    pub fn add_vector(&self, rhs: &mut [f64], e: usize, fe: &[f64]) {
        for (d, v) in self.element_dofs[e].iter().zip(fe) {
            if let Some(d) = d {
                rhs[*d] += v;
            }
        }
    }

    pub fn matrix<'a>(&'a self, values: &'a [f64]) -> SparseColMatRef<'a, usize, f64> {
        SparseColMatRef::new(self.pattern.as_ref(), values)
    }

    /// `y = A x` for a matrix stored with this pattern.
    pub fn matvec(&self, values: &[f64], x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        let col_ptr = self.pattern.col_ptr();
        let rows = self.pattern.row_idx();
        for c in 0..self.n {
            let xc = x[c];
            for p in col_ptr[c]..col_ptr[c + 1] {
                y[rows[p]] += values[p] * xc;
            }
        }
        y
    }

    /// Symbolic analysis reusable for every matrix with this pattern.
    pub fn analyze(&self) -> Result<SymbolicLlt<usize>> {
        SymbolicLlt::try_new(self.pattern.as_ref(), Side::Lower)
            .map_err(|e| Error::LinearAlgebra(format!("symbolic analysis failed: {e:?}")))
    }

    /// Cholesky factorization with an LU fallback for indefinite matrices.
    pub fn factor(&self, symbolic: &SymbolicLlt<usize>, values: &[f64]) -> Result<Factor> {
        let mat = self.matrix(values);
        match Llt::try_new_with_symbolic(symbolic.clone(), mat, Side::Lower) {
            Ok(llt) => Ok(Factor::Llt(llt)),
            Err(_) => self.factor_lu(values),
        }
    }

    /// LU factorization for matrices that need not be symmetric.
    pub fn factor_lu(&self, values: &[f64]) -> Result<Factor> {
        let sym = SymbolicLu::try_new(self.pattern.as_ref())
            .map_err(|e| Error::LinearAlgebra(format!("symbolic LU failed: {e:?}")))?;
        let lu = Lu::try_new_with_symbolic(sym, self.matrix(values))
            .map_err(|e| Error::LinearAlgebra(format!("LU factorization failed: {e:?}")))?;
        Ok(Factor::Lu(lu))
    }
}

pub enum Factor {
    Llt(Llt<usize, f64>),
    Lu(Lu<usize, f64>),
}

impl std::fmt::Debug for Factor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Factor::Llt(_) => f.write_str("Factor::Llt"),
            Factor::Lu(_) => f.write_str("Factor::Lu"),
        }
    }
}

impl Factor {
    pub fn is_cholesky(&self) -> bool {
        matches!(self, Factor::Llt(_))
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let b = Mat::<f64>::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        let x = match self {
            Factor::Llt(f) => f.solve(&b),
            Factor::Lu(f) => f.solve(&b),
        };
        let out: Vec<f64> = (0..rhs.len()).map(|i| x[(i, 0)]).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::LinearAlgebra("solve produced non-finite values".into()));
        }
        Ok(out)
    }

    /// Solves for several right-hand sides stored as columns.
    pub fn solve_many(&self, rhs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let n = rhs.first().map_or(0, Vec::len);
        let b = Mat::<f64>::from_fn(n, rhs.len(), |i, j| rhs[j][i]);
        let x = match self {
            Factor::Llt(f) => f.solve(&b),
            Factor::Lu(f) => f.solve(&b),
        };
        Ok((0..rhs.len())
            .map(|j| (0..n).map(|i| x[(i, j)]).collect())
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 1D chain of two-node elements with unit springs, left end eliminated.
    fn chain(n_el: usize) -> Assembler {
        let dofs = (0..n_el)
            .map(|e| vec![if e == 0 { None } else { Some(e - 1) }, Some(e)])
            .collect();
        Assembler::new(n_el, dofs)
    }

    #[test]
    fn spring_chain_solves() {
        let a = chain(5);
        let mut v = a.zeros();
        for e in 0..5 {
            a.add_matrix(&mut v, e, &[1.0, -1.0, -1.0, 1.0]);
        }
        let mut f = vec![0.0; 5];
        f[4] = 1.0;
        let sym = a.analyze().unwrap();
        let factor = a.factor(&sym, &v).unwrap();
        assert!(factor.is_cholesky());
        let u = factor.solve(&f).unwrap();
        for (i, ui) in u.iter().enumerate() {
            assert!((ui - (i + 1) as f64).abs() < 1e-12);
        }
        let r = a.matvec(&v, &u);
        assert!((r[4] - 1.0).abs() < 1e-12 && r[0].abs() < 1e-12);
    }

    #[test]
    fn indefinite_falls_back_to_lu() {
        let a = Assembler::new(2, vec![vec![Some(0), Some(1)]]);
        let mut v = a.zeros();
        a.add_matrix(&mut v, 0, &[0.0, 1.0, 1.0, 0.0]);
        let sym = a.analyze().unwrap();
        let factor = a.factor(&sym, &v).unwrap();
        assert!(!factor.is_cholesky());
        let x = factor.solve(&[2.0, 3.0]).unwrap();
        assert!((x[0] - 3.0).abs() < 1e-12 && (x[1] - 2.0).abs() < 1e-12);
    }
}
