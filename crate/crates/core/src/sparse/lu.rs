//! Left-looking sparse LU (Gilbert-Peierls) with threshold partial pivoting.
//!
//! Computes `P A Q = L U` where `Q` is a nested-dissection column order and `P`
//! comes from pivoting that prefers the structurally paired diagonal entry
//! whenever it is within [`PIVOT_THRESHOLD`] of the column maximum.

use super::{ordering::nested_dissection, SparseMatrix};
use crate::error::{check_len, Error, Result};

const PIVOT_THRESHOLD: f64 = 0.1;
const NONE: usize = usize::MAX;

/// A reusable factorization. Solves only read the factors, so a shared
/// reference may be used from several threads.
#[derive(Clone, Debug)]
pub struct LuFactorization {
    n: usize,
    /// column order: step `k` eliminates original column `q[k]`
    q: Vec<usize>,
    /// row `i` was pivoted at step `pinv[i]`
    pinv: Vec<usize>,
    l_ptr: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<f64>,
    u_ptr: Vec<usize>,
    u_idx: Vec<usize>,
    u_val: Vec<f64>,
    u_diag: Vec<f64>,
}

struct Csc {
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    vals: Vec<f64>,
}

fn to_csc(a: &SparseMatrix) -> Csc {
    let n = a.dim();
    let mut counts = vec![0usize; n + 1];
    for &j in a.col_idx() {
        counts[j + 1] += 1;
    }
    for j in 0..n {
        counts[j + 1] += counts[j];
    }
    let mut next = counts.clone();
    let mut row_idx = vec![0; a.nnz()];
    let mut vals = vec![0.0; a.nnz()];
    for i in 0..n {
        for (j, v) in a.row(i) {
            row_idx[next[j]] = i;
            vals[next[j]] = v;
            next[j] += 1;
        }
    }
    Csc {
        col_ptr: counts,
        row_idx,
        vals,
    }
}

impl LuFactorization {
    pub fn new(a: &SparseMatrix) -> Result<Self> {
        let n = a.dim();
        let q = nested_dissection(a);
        let csc = to_csc(a);

        let mut pinv = vec![NONE; n];
        let mut l_ptr = vec![0usize];
        let mut l_idx = Vec::new();
        let mut l_val = Vec::new();
        let mut u_ptr = vec![0usize];
        let mut u_idx = Vec::new();
        let mut u_val = Vec::new();
        let mut u_diag = vec![0.0; n];

        let mut x = vec![0.0; n];
        let mut mark = vec![NONE; n];
        let mut topo: Vec<usize> = Vec::new();
        let mut stack: Vec<(usize, usize)> = Vec::new();

        for k in 0..n {
            let col = q[k];
            let (start, end) = (csc.col_ptr[col], csc.col_ptr[col + 1]);

            // nonzero pattern of L^{-1} b in topological order (reverse postorder)
            topo.clear();
            for p in start..end {
                let r = csc.row_idx[p];
                if mark[r] == k {
                    continue;
                }
                mark[r] = k;
                stack.push((r, 0));
                while let Some(top) = stack.len().checked_sub(1) {
                    let (v, mut child) = stack[top];
                    let j = pinv[v];
                    let mut found = NONE;
                    if j != NONE {
                        let (ls, le) = (l_ptr[j], l_ptr[j + 1]);
                        while ls + child < le {
                            let w = l_idx[ls + child];
                            child += 1;
                            if mark[w] != k {
                                found = w;
                                break;
                            }
                        }
                    }
                    stack[top].1 = child;
                    if found != NONE {
                        mark[found] = k;
                        stack.push((found, 0));
                    } else {
                        topo.push(v);
                        stack.pop();
                    }
                }
            }

            for p in start..end {
                x[csc.row_idx[p]] = csc.vals[p];
            }
            for &r in topo.iter().rev() {
                let j = pinv[r];
                if j == NONE {
                    continue;
                }
                let xr = x[r];
                if xr != 0.0 {
                    for p in l_ptr[j]..l_ptr[j + 1] {
                        x[l_idx[p]] -= l_val[p] * xr;
                    }
                }
            }

            let mut best = NONE;
            let mut best_abs = -1.0f64;
            for &r in &topo {
                if pinv[r] == NONE {
                    let v = x[r].abs();
                    if v > best_abs || (v == best_abs && r < best) {
                        best_abs = v;
                        best = r;
                    }
                } else {
                    u_idx.push(pinv[r]);
                    u_val.push(x[r]);
                }
            }
            if best == NONE || !(best_abs > 0.0) || !best_abs.is_finite() {
                return Err(Error::SingularMatrix {
                    step: k,
                    column: col,
                });
            }
            if mark[col] == k && pinv[col] == NONE && x[col].abs() >= PIVOT_THRESHOLD * best_abs {
                best = col;
            }
            let pivot = x[best];
            pinv[best] = k;
            u_diag[k] = pivot;
            for &r in &topo {
                if pinv[r] == NONE && x[r] != 0.0 {
                    l_idx.push(r);
                    l_val.push(x[r] / pivot);
                }
                x[r] = 0.0;
            }
            l_ptr.push(l_idx.len());
            u_ptr.push(u_idx.len());
        }

        for r in l_idx.iter_mut() {
            *r = pinv[*r];
        }

        Ok(LuFactorization {
            n,
            q,
            pinv,
            l_ptr,
            l_idx,
            l_val,
            u_ptr,
            u_idx,
            u_val,
            u_diag,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Stored entries in `L` and `U` (including the diagonal of `U`).
    pub fn factor_nnz(&self) -> usize {
        self.l_idx.len() + self.u_idx.len() + self.n
    }

    /// Smallest and largest pivot magnitudes, a cheap conditioning indicator.
    pub fn pivot_range(&self) -> (f64, f64) {
        self.u_diag.iter().fold((f64::INFINITY, 0.0), |(lo, hi), v| {
            (lo.min(v.abs()), hi.max(v.abs()))
        })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        check_len("rhs", self.n, b.len())?;
        let mut y = vec![0.0; self.n];
        for (i, &bi) in b.iter().enumerate() {
            y[self.pinv[i]] = bi;
        }
        for k in 0..self.n {
            let yk = y[k];
            if yk != 0.0 {
                for p in self.l_ptr[k]..self.l_ptr[k + 1] {
                    y[self.l_idx[p]] -= self.l_val[p] * yk;
                }
            }
        }
        for k in (0..self.n).rev() {
            y[k] /= self.u_diag[k];
            let yk = y[k];
            if yk != 0.0 {
                for p in self.u_ptr[k]..self.u_ptr[k + 1] {
                    y[self.u_idx[p]] -= self.u_val[p] * yk;
                }
            }
        }
        let mut x = vec![0.0; self.n];
        for k in 0..self.n {
            x[self.q[k]] = y[k];
        }
        Ok(x)
    }

    /// Solves `A^T x = b` with the same factors.
    pub fn solve_transpose(&self, b: &[f64]) -> Result<Vec<f64>> {
        check_len("rhs", self.n, b.len())?;
        let mut w: Vec<f64> = self.q.iter().map(|&c| b[c]).collect();
        for k in 0..self.n {
            let mut s = w[k];
            for p in self.u_ptr[k]..self.u_ptr[k + 1] {
                s -= self.u_val[p] * w[self.u_idx[p]];
            }
            w[k] = s / self.u_diag[k];
        }
        for k in (0..self.n).rev() {
            let mut s = w[k];
            for p in self.l_ptr[k]..self.l_ptr[k + 1] {
                s -= self.l_val[p] * w[self.l_idx[p]];
            }
            w[k] = s;
        }
        Ok((0..self.n).map(|i| w[self.pinv[i]]).collect())
    }
}

/// Factors `a` and solves `a x = b`.
pub fn factor_solve(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    check_len("rhs", a.dim(), b.len())?;
    LuFactorization::new(a)?.solve(b)
}
