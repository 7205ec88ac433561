//! Dense eigenvalues of P*D where P is symmetric positive definite and D is
//! symmetric.
//!
//! P*D is not symmetric, but with P = L L^T it is similar to L^T D L:
//!     L^{-1} (P D) L = L^T D L,
//! which is symmetric, so a plain Jacobi rotation sweep gives all eigenvalues
//! (real, and positive whenever D is also positive definite on the relevant
//! subspace). The eigensolver is a cyclic Jacobi with threshold; it also
//! returns a reconstruction residual so callers can verify the decomposition.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Eigenvalues (ascending) plus a relative reconstruction residual
/// ||Q V - V diag(lambda)||_F / ||Q||_F of the symmetrized problem.
#[derive(Debug, Clone)]
pub struct EigenOutcome {
    pub eigenvalues: Vec<f64>,
    pub residual: f64,
}

/// Cyclic Jacobi eigenvalue iteration for a symmetric matrix.
///
/// Returns eigenvalues ascending and the accumulated rotation matrix V with
/// A V = V diag(lambda) (columns reordered together with the eigenvalues).
pub fn jacobi_eigenvalues(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let mut m = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    if n <= 1 {
        return (m.diagonal().iter().cloned().collect(), v);
    }
    let frob = m.norm().max(f64::MIN_POSITIVE);
    let tol = 1e-15 * frob;
    let max_sweeps = 60;
    for _ in 0..max_sweeps {
        let mut off = 0.0f64;
        for p in 0..n - 1 {
            for q in p + 1..n {
                off += m[(p, q)] * m[(p, q)];
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq.abs() <= tol / (n as f64) {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].partial_cmp(&m[(j, j)]).unwrap());
    let eigs: Vec<f64> = order.iter().map(|&i| m[(i, i)]).collect();
    let mut v_sorted = DMatrix::<f64>::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        v_sorted.set_column(dst, &v.column(src));
    }
    (eigs, v_sorted)
}

fn require_symmetric(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::DimensionMismatch {
            context: what,
            expected: n,
            got: m.ncols(),
        });
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if worst > 1e-8 * scale {
        return Err(Error::AssertionFailed(format!(
            "{what}: input not symmetric (relative asymmetry {:.3e})",
            worst / scale
        )));
    }
    Ok(0.5 * (m + m.transpose()))
}

/// Eigenvalues of P*D for SPD `p` and symmetric `d`, via the L^T D L
/// similarity transform and Jacobi iteration. Eigenvalues come back ascending.
pub fn dense_eigs_spd_similar(p: &DMatrix<f64>, d: &DMatrix<f64>) -> Result<EigenOutcome> {
    let p = require_symmetric(p, "dense_eigs p")?;
    let d = require_symmetric(d, "dense_eigs d")?;
    let chol = nalgebra::Cholesky::new(p).ok_or(Error::FactorizationBreakdown {
        context: "dense_eigs cholesky (input not SPD)",
        row: 0,
        pivot: 0.0,
    })?;
    let l = chol.l();
    let q = l.transpose() * &d * &l;
    let q = 0.5 * (&q + q.transpose());
    let (eigenvalues, v) = jacobi_eigenvalues(&q);
    let lambda = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(eigenvalues.clone()));
    let resid = (&q * &v - &v * lambda).norm() / q.norm().max(f64::MIN_POSITIVE);
    Ok(EigenOutcome {
        eigenvalues,
        residual: resid,
    })
}
