//! Incomplete LU factorization with thresholding (ILUT).
//!
//! Row-wise IKJ elimination with a dual dropping rule: entries smaller than
//! `drop_tol` times the 2-norm of the current row are discarded, and at most a
//! `fill`-factor multiple of the original row occupancy is kept per side
//! (largest entries win). The factors are stored as unit-lower L and upper U
//! with explicit diagonal.

use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::sparse::Csr;

#[derive(Debug, Clone, Copy)]
pub struct IlutConfig {
    /// Kept fill per row, as a multiple of the row's original occupancy.
    pub fill: f64,
    /// Relative drop tolerance against the row 2-norm.
    pub drop_tol: f64,
}

impl Default for IlutConfig {
    fn default() -> Self {
        IlutConfig {
            fill: 10.0,
            drop_tol: 1e-4,
        }
    }
}

/// ILUT factors of a square sparse matrix.
#[derive(Debug, Clone)]
pub struct Ilut {
    n: usize,
    l_rowptr: Vec<usize>,
    l_cols: Vec<usize>,
    l_vals: Vec<f64>,
    u_rowptr: Vec<usize>,
    u_cols: Vec<usize>, // first entry of each row is the diagonal
    u_vals: Vec<f64>,
}

impl Ilut {
    pub fn factor(a: &Csr, cfg: IlutConfig) -> Result<Ilut> {
        assert_eq!(a.nrows(), a.ncols());
        let n = a.nrows();
        let mut f = Ilut {
            n,
            l_rowptr: vec![0; 1],
            l_cols: Vec::new(),
            l_vals: Vec::new(),
            u_rowptr: vec![0; 1],
            u_cols: Vec::new(),
            u_vals: Vec::new(),
        };
        // Dense work row with an occupancy list; reused across rows.
        let mut w = vec![0.0f64; n];
        let mut occupied = vec![false; n];
        let mut upper_cols: Vec<usize> = Vec::new();
        for i in 0..n {
            let (cols, vals) = a.row(i);
            let row_nnz = cols.len().max(1);
            let keep = ((cfg.fill * row_nnz as f64 / 2.0).ceil() as usize).max(2);
            let tnorm = vals.iter().map(|v| v * v).sum::<f64>().sqrt();
            if tnorm == 0.0 {
                return Err(Error::FactorizationBreakdown {
                    context: "ilut empty row",
                    row: i,
                    pivot: 0.0,
                });
            }
            let drop = cfg.drop_tol * tnorm;

            // Min-heap over pending lower-triangular columns (std heap is max).
            let mut pending: BinaryHeap<std::cmp::Reverse<usize>> = BinaryHeap::new();
            upper_cols.clear();
            for (&j, &v) in cols.iter().zip(vals.iter()) {
                w[j] = v;
                occupied[j] = true;
                if j < i {
                    pending.push(std::cmp::Reverse(j));
                } else {
                    upper_cols.push(j);
                }
            }

            let mut lower: Vec<(usize, f64)> = Vec::new();
            while let Some(std::cmp::Reverse(k)) = pending.pop() {
                let factor = w[k] / f.u_vals[f.u_rowptr[k]];
                w[k] = 0.0;
                occupied[k] = false;
                if factor.abs() < drop {
                    continue;
                }
                lower.push((k, factor));
                let (lo, hi) = (f.u_rowptr[k], f.u_rowptr[k + 1]);
                for idx in lo + 1..hi {
                    let j = f.u_cols[idx];
                    let upd = factor * f.u_vals[idx];
                    if occupied[j] {
                        w[j] -= upd;
                    } else {
                        w[j] = -upd;
                        occupied[j] = true;
                        if j < i {
                            pending.push(std::cmp::Reverse(j));
                        } else {
                            upper_cols.push(j);
                        }
                    }
                }
            }

            // Keep the `keep` largest lower entries above the drop threshold.
            lower.retain(|&(_, v)| v.abs() >= drop);
            if lower.len() > keep {
                lower.sort_by(|a, b| b.1.abs().partial_cmp(&a.1.abs()).unwrap());
                lower.truncate(keep);
            }
            lower.sort_by_key(|&(c, _)| c);
            for &(c, v) in &lower {
                f.l_cols.push(c);
                f.l_vals.push(v);
            }
            f.l_rowptr.push(f.l_cols.len());

            // Upper part: diagonal always kept, then the largest off-diagonals.
            let diag = if occupied[i] { w[i] } else { 0.0 };
            if diag.abs() < 1e-300 {
                for &j in upper_cols.iter() {
                    w[j] = 0.0;
                    occupied[j] = false;
                }
                return Err(Error::FactorizationBreakdown {
                    context: "ilut zero pivot",
                    row: i,
                    pivot: diag,
                });
            }
            let mut upper: Vec<(usize, f64)> = Vec::new();
            for &j in upper_cols.iter() {
                if occupied[j] {
                    if j != i && w[j].abs() >= drop {
                        upper.push((j, w[j]));
                    }
                    w[j] = 0.0;
                    occupied[j] = false;
                }
            }
            if upper.len() > keep {
                upper.sort_by(|a, b| b.1.abs().partial_cmp(&a.1.abs()).unwrap());
                upper.truncate(keep);
            }
            upper.sort_by_key(|&(c, _)| c);
            f.u_cols.push(i);
            f.u_vals.push(diag);
            for &(c, v) in &upper {
                f.u_cols.push(c);
                f.u_vals.push(v);
            }
            f.u_rowptr.push(f.u_cols.len());
        }
        Ok(f)
    }

    /// Solves L U x = y in place.
    pub fn solve(&self, y: &mut [f64]) {
        debug_assert_eq!(y.len(), self.n);
        for i in 0..self.n {
            let (lo, hi) = (self.l_rowptr[i], self.l_rowptr[i + 1]);
            let mut acc = y[i];
            for k in lo..hi {
                acc -= self.l_vals[k] * y[self.l_cols[k]];
            }
            y[i] = acc;
        }
        for i in (0..self.n).rev() {
            let (lo, hi) = (self.u_rowptr[i], self.u_rowptr[i + 1]);
            let mut acc = y[i];
            for k in lo + 1..hi {
                acc -= self.u_vals[k] * y[self.u_cols[k]];
            }
            y[i] = acc / self.u_vals[lo];
        }
    }

    pub fn nnz(&self) -> usize {
        self.l_vals.len() + self.u_vals.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::Triplets;

    /// 1D Dirichlet Poisson matrix: tridiag(-1, 2, -1).
    pub fn poisson1d(n: usize) -> Csr {
        let mut t = Triplets::new(n, n);
        for i in 0..n {
            t.push(i, i, 2.0);
            if i > 0 {
                t.push(i, i - 1, -1.0);
            }
            if i + 1 < n {
                t.push(i, i + 1, -1.0);
            }
        }
        t.to_csr()
    }

    #[test]
    fn exact_on_tridiagonal_with_generous_fill() {
        // With no dropping the tridiagonal factorization is exact.
        let a = poisson1d(20);
        let f = Ilut::factor(
            &a,
            IlutConfig {
                fill: 10.0,
                drop_tol: 0.0,
            },
        )
        .unwrap();
        let x_true: Vec<f64> = (0..20).map(|i| (i as f64 * 0.7).sin()).collect();
        let mut y = a.mul_vec(&x_true);
        f.solve(&mut y);
        for (a, b) in y.iter().zip(x_true.iter()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_pivot_reported() {
        let mut t = Triplets::new(2, 2);
        t.push(0, 1, 1.0);
        t.push(1, 0, 1.0);
        let a = t.to_csr();
        assert!(Ilut::factor(&a, IlutConfig::default()).is_err());
    }
}
