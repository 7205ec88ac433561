//! Compressed sparse row matrices with the handful of operations the solver
//! needs: triplet assembly, mat-vec products, same-pattern linear combinations,
//! Dirichlet row/column elimination and a 3-component block expansion.

use crate::error::{Error, Result};

/// Triplet (COO) accumulator used during finite-element assembly.
///
/// Duplicate entries are allowed and are summed when the CSR matrix is built;
/// summation happens in a deterministic order (stable sort by row, then
/// column, then insertion order) so serial runs are bit-reproducible.
#[derive(Debug, Clone)]
pub struct Triplets {
    nrows: usize,
    ncols: usize,
    entries: Vec<(u32, u32, f64)>,
}

impl Triplets {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        assert!(nrows < u32::MAX as usize && ncols < u32::MAX as usize);
        Triplets {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, val: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row as u32, col as u32, val));
    }

    pub fn to_csr(&self) -> Csr {
        let mut order: Vec<u32> = (0..self.entries.len() as u32).collect();
        order.sort_by_key(|&i| {
            let (r, c, _) = self.entries[i as usize];
            (r, c)
        });
        let mut rowptr = vec![0usize; self.nrows + 1];
        let mut colidx = Vec::new();
        let mut vals: Vec<f64> = Vec::new();
        let mut last: Option<(u32, u32)> = None;
        for &i in &order {
            let (r, c, v) = self.entries[i as usize];
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                rowptr[r as usize + 1] += 1;
                colidx.push(c as usize);
                vals.push(v);
                last = Some((r, c));
            }
        }
        for r in 0..self.nrows {
            rowptr[r + 1] += rowptr[r];
        }
        Csr {
            nrows: self.nrows,
            ncols: self.ncols,
            rowptr,
            colidx,
            vals,
        }
    }
}

/// Compressed sparse row matrix with sorted column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    nrows: usize,
    ncols: usize,
    rowptr: Vec<usize>,
    colidx: Vec<usize>,
    vals: Vec<f64>,
}

impl Csr {
    pub fn from_parts(
        nrows: usize,
        ncols: usize,
        rowptr: Vec<usize>,
        colidx: Vec<usize>,
        vals: Vec<f64>,
    ) -> Self {
        assert_eq!(rowptr.len(), nrows + 1);
        assert_eq!(colidx.len(), vals.len());
        assert_eq!(*rowptr.last().unwrap(), colidx.len());
        Csr {
            nrows,
            ncols,
            rowptr,
            colidx,
            vals,
        }
    }

    /// n x n identity.
    pub fn identity(n: usize) -> Self {
        Csr {
            nrows: n,
            ncols: n,
            rowptr: (0..=n).collect(),
            colidx: (0..n).collect(),
            vals: vec![1.0; n],
        }
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.colidx.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.rowptr[i], self.rowptr[i + 1]);
        (&self.colidx[lo..hi], &self.vals[lo..hi])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(pos) => vals[pos],
            Err(_) => 0.0,
        }
    }

    /// y = A x.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for i in 0..self.nrows {
            let (lo, hi) = (self.rowptr[i], self.rowptr[i + 1]);
            let mut acc = 0.0;
            for k in lo..hi {
                acc += self.vals[k] * x[self.colidx[k]];
            }
            y[i] = acc;
        }
    }

    /// Returns A x as a fresh vector.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec(x, &mut y);
        y
    }

    /// y = A^T x (no explicit transpose is stored).
    pub fn tr_matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.nrows);
        debug_assert_eq!(y.len(), self.ncols);
        y.fill(0.0);
        for i in 0..self.nrows {
            let (lo, hi) = (self.rowptr[i], self.rowptr[i + 1]);
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            for k in lo..hi {
                y[self.colidx[k]] += self.vals[k] * xi;
            }
        }
    }

    pub fn tr_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols];
        self.tr_matvec(x, &mut y);
        y
    }

    /// Linear combination of matrices sharing one sparsity pattern.
    pub fn linear_combination(terms: &[(f64, &Csr)]) -> Result<Csr> {
        let (_, first) = terms[0];
        for &(_, m) in terms.iter().skip(1) {
            if m.rowptr != first.rowptr || m.colidx != first.colidx {
                return Err(Error::DimensionMismatch {
                    context: "linear_combination pattern",
                    expected: first.nnz(),
                    got: m.nnz(),
                });
            }
        }
        let mut vals = vec![0.0; first.nnz()];
        for &(c, m) in terms {
            if c == 0.0 {
                continue;
            }
            for (v, &mv) in vals.iter_mut().zip(m.vals.iter()) {
                *v += c * mv;
            }
        }
        Ok(Csr {
            nrows: first.nrows,
            ncols: first.ncols,
            rowptr: first.rowptr.clone(),
            colidx: first.colidx.clone(),
            vals,
        })
    }

    /// Expands a scalar matrix to its 3-component interleaved block form:
    /// entry (i, j) becomes entries (3i+c, 3j+c) for c = 0, 1, 2.
    pub fn expand_blocks3(&self) -> Csr {
        let nrows = 3 * self.nrows;
        let mut rowptr = Vec::with_capacity(nrows + 1);
        let mut colidx = Vec::with_capacity(3 * self.nnz());
        let mut vals = Vec::with_capacity(3 * self.nnz());
        rowptr.push(0);
        for i in 0..self.nrows {
            let (cols, v) = self.row(i);
            for c in 0..3 {
                for (&j, &a) in cols.iter().zip(v.iter()) {
                    colidx.push(3 * j + c);
                    vals.push(a);
                }
                rowptr.push(colidx.len());
            }
        }
        Csr {
            nrows,
            ncols: 3 * self.ncols,
            rowptr,
            colidx,
            vals,
        }
    }

    /// Returns the matrix with masked rows and columns eliminated: masked rows
    /// become identity rows and entries in masked columns of unmasked rows are
    /// dropped. Pair with a right-hand-side lift of the dropped columns.
    pub fn constrained(&self, mask: &[bool]) -> Csr {
        assert_eq!(mask.len(), self.nrows);
        assert_eq!(self.nrows, self.ncols);
        let mut rowptr = Vec::with_capacity(self.nrows + 1);
        let mut colidx = Vec::new();
        let mut vals = Vec::new();
        rowptr.push(0);
        for i in 0..self.nrows {
            if mask[i] {
                colidx.push(i);
                vals.push(1.0);
            } else {
                let (cols, v) = self.row(i);
                for (&j, &a) in cols.iter().zip(v.iter()) {
                    if !mask[j] {
                        colidx.push(j);
                        vals.push(a);
                    }
                }
            }
            rowptr.push(colidx.len());
        }
        Csr {
            nrows: self.nrows,
            ncols: self.ncols,
            rowptr,
            colidx,
            vals,
        }
    }

    /// Max relative asymmetry |a_ij - a_ji| / max|a|; zero for symmetric input.
    pub fn asymmetry(&self) -> f64 {
        assert_eq!(self.nrows, self.ncols);
        let scale = self
            .vals
            .iter()
            .fold(0.0f64, |m, &v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals.iter()) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst / scale
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols))
            .map(|i| self.get(i, i))
            .collect()
    }

    pub fn norm_inf_vec(v: &[f64]) -> f64 {
        v.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut d = nalgebra::DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals.iter()) {
                d[(i, j)] = v;
            }
        }
        d
    }
}
