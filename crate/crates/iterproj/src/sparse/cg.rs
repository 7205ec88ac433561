//! Conjugate gradients for SPD systems, plus a projected variant for the
//! singular pressure-Poisson operator whose null space is the constant vector.

use crate::sparse::{Csr, KrylovReport};

#[derive(Debug, Clone, Copy)]
pub struct CgConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CgConfig {
    fn default() -> Self {
        CgConfig {
            tol: 1e-12,
            max_iter: 10_000,
        }
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Plain CG for an SPD matrix; relative residual stopping test.
pub fn cg_spd(a: &Csr, b: &[f64], x0: &[f64], cfg: &CgConfig) -> (Vec<f64>, KrylovReport) {
    cg_impl(a, b, x0, cfg, false)
}

/// CG for the symmetric positive semidefinite Neumann operator with constant
/// null vector. The right-hand side is projected onto zero sum, the iterates
/// are re-projected every step to stop null-space drift, and the returned
/// solution has zero mean.
pub fn cg_neumann(a: &Csr, b: &[f64], cfg: &CgConfig) -> (Vec<f64>, KrylovReport) {
    let x0 = vec![0.0; b.len()];
    cg_impl(a, b, &x0, cfg, true)
}

fn cg_impl(
    a: &Csr,
    b: &[f64],
    x0: &[f64],
    cfg: &CgConfig,
    project: bool,
) -> (Vec<f64>, KrylovReport) {
    let n = b.len();
    assert_eq!(a.nrows(), n);
    assert_eq!(a.ncols(), n);
    let mut rhs = b.to_vec();
    if project {
        project_zero_mean(&mut rhs);
    }
    let bnorm = norm2(&rhs);
    if bnorm == 0.0 {
        return (
            vec![0.0; n],
            KrylovReport {
                converged: true,
                iterations: 0,
                residual: 0.0,
            },
        );
    }
    let mut x = x0.to_vec();
    if project {
        project_zero_mean(&mut x);
    }
    let mut r = rhs.clone();
    let ax = a.mul_vec(&x);
    for (ri, axi) in r.iter_mut().zip(ax.iter()) {
        *ri -= axi;
    }
    if project {
        project_zero_mean(&mut r);
    }
    let mut p = r.clone();
    let mut rs = dot(&r, &r);
    let mut iterations = 0usize;
    let mut rel = rs.sqrt() / bnorm;
    while rel > cfg.tol && iterations < cfg.max_iter {
        iterations += 1;
        let mut ap = a.mul_vec(&p);
        if project {
            project_zero_mean(&mut ap);
        }
        let alpha = rs / dot(&p, &ap);
        for (xi, pi) in x.iter_mut().zip(p.iter()) {
            *xi += alpha * pi;
        }
        for (ri, api) in r.iter_mut().zip(ap.iter()) {
            *ri -= alpha * api;
        }
        if project {
            project_zero_mean(&mut r);
            project_zero_mean(&mut x);
        }
        let rs_new = dot(&r, &r);
        let beta = rs_new / rs;
        rs = rs_new;
        for (pi, ri) in p.iter_mut().zip(r.iter()) {
            *pi = ri + beta * *pi;
        }
        rel = rs.sqrt() / bnorm;
    }
    if project {
        project_zero_mean(&mut x);
    }
    (
        x,
        KrylovReport {
            converged: rel <= cfg.tol,
            iterations,
            residual: rel,
        },
    )
}

fn project_zero_mean(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    for x in v.iter_mut() {
        *x -= mean;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::Triplets;

    fn poisson1d(n: usize) -> Csr {
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

    /// 1D periodic-style Neumann Laplacian; singular with constant null vector.
    fn neumann1d(n: usize) -> Csr {
        let mut t = Triplets::new(n, n);
        for i in 0..n {
            let mut d = 0.0;
            if i > 0 {
                t.push(i, i - 1, -1.0);
                d += 1.0;
            }
            if i + 1 < n {
                t.push(i, i + 1, -1.0);
                d += 1.0;
            }
            t.push(i, i, d);
        }
        t.to_csr()
    }

    #[test]
    fn cg_matches_exact_solution() {
        let n = 40;
        let a = poisson1d(n);
        let x_true: Vec<f64> = (0..n).map(|i| ((i as f64) * 0.3).cos()).collect();
        let b = a.mul_vec(&x_true);
        let (x, rep) = cg_spd(&a, &b, &vec![0.0; n], &CgConfig::default());
        assert!(rep.converged);
        for (xi, ti) in x.iter().zip(x_true.iter()) {
            assert!((xi - ti).abs() < 1e-8);
        }
    }

    #[test]
    fn neumann_solution_has_zero_mean_and_solves_projected_system() {
        let n = 30;
        let a = neumann1d(n);
        // Compatible rhs: A times an arbitrary vector.
        let y: Vec<f64> = (0..n).map(|i| (i as f64 * 0.41).sin()).collect();
        let b = a.mul_vec(&y);
        let (x, rep) = cg_neumann(&a, &b, &CgConfig::default());
        assert!(rep.converged, "residual {}", rep.residual);
        let mean = x.iter().sum::<f64>() / n as f64;
        assert!(mean.abs() < 1e-13, "mean {mean}");
        let r = a.mul_vec(&x);
        for (ri, bi) in r.iter().zip(b.iter()) {
            assert!((ri - bi).abs() < 1e-9);
        }
    }

    #[test]
    fn neumann_incompatible_rhs_is_projected() {
        let n = 25;
        let a = neumann1d(n);
        // Constant rhs is entirely in the null direction: solution is zero.
        let b = vec![3.0; n];
        let (x, rep) = cg_neumann(&a, &b, &CgConfig::default());
        assert!(rep.converged);
        assert_eq!(rep.iterations, 0);
        assert!(x.iter().all(|&v| v == 0.0));
    }
}
