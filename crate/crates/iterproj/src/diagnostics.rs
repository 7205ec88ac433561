//! Solution-quality measures: weak and strong incompressibility, error
//! norms against an exact solution, and the discrete energy functional used
//! by the stability assertion.
//!
//! The weak measure is the infinity norm of the divergence coupling applied
//! to the velocity — the quantity the pressure iteration drives to zero. The
//! strong measure is the pointwise maximum of |div u_h|; for quadratic
//! velocities the divergence is affine on each element, so the per-element
//! maximum is attained at a vertex (quadrature points are still sampled as a
//! cross-check).

use crate::assembly::{element_geometry, element_point, p2_global, AssemblyContext};
use crate::mesh::Mesh;
use crate::spaces::{eval_p2_basis, DofLayout};
use crate::sparse::Csr;

/// `max_i |(div u_h, q_i)|`, evaluated as the infinity norm of `B u`.
pub fn weak_div_measure(b: &Csr, u: &[f64]) -> f64 {
    Csr::norm_inf_vec(&b.mul_vec(u))
}

fn divergence_at(mesh: &Mesh, t: usize, r: [f64; 3], u: &[f64]) -> f64 {
    let geo = element_geometry(mesh, t);
    let (_, grads) = eval_p2_basis(r);
    let mut div = 0.0;
    for i in 0..10 {
        let node = p2_global(mesh, t, i);
        // Map the reference gradient, then take the c-th entry against the
        // c-th velocity component.
        for c in 0..3 {
            let g = geo.jinv_t[c][0] * grads[i][0]
                + geo.jinv_t[c][1] * grads[i][1]
                + geo.jinv_t[c][2] * grads[i][2];
            div += u[DofLayout::velocity_dof(node, c)] * g;
        }
    }
    div
}

/// Pointwise maximum of |div u_h| over every element's vertices and
/// quadrature points.
pub fn strong_div_measure(mesh: &Mesh, ctx: &AssemblyContext, u: &[f64]) -> f64 {
    const VERTICES: [[f64; 3]; 4] = [
        [0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
    ];
    let mut worst = 0.0f64;
    for t in 0..mesh.n_tets() {
        for &v in &VERTICES {
            worst = worst.max(divergence_at(mesh, t, v, u).abs());
        }
        for &q in &ctx.quad.points {
            worst = worst.max(divergence_at(mesh, t, q, u).abs());
        }
    }
    worst
}

/// Velocity and pressure errors against a pointwise-evaluable exact
/// solution, integrated by the degree-6 rule.
#[derive(Debug, Clone, Copy, Default)]
pub struct ErrorNorms {
    pub u_l2: f64,
    /// Gradient seminorm of the velocity error.
    pub u_h1_semi: f64,
    /// Full norm: sqrt(L2^2 + seminorm^2).
    pub u_h1: f64,
    /// Pressure error in the mean-adjusted (quotient) L2 norm.
    pub p_l2: f64,
}

pub fn error_norms(
    mesh: &Mesh,
    ctx: &AssemblyContext,
    u: &[f64],
    p: &[f64],
    exact_u: &dyn Fn([f64; 3]) -> [f64; 3],
    exact_grad_u: &dyn Fn([f64; 3]) -> [[f64; 3]; 3],
    exact_p: &dyn Fn([f64; 3]) -> f64,
) -> ErrorNorms {
    let nq = ctx.quad.points.len();
    let mut l2_sq = 0.0;
    let mut h1_sq = 0.0;
    let mut p_int = 0.0; // integral of the pressure error
    let mut p_sq = 0.0; // integral of its square
    let mut volume = 0.0;
    for t in 0..mesh.n_tets() {
        let geo = ctx.geometry[t];
        let nodes: Vec<usize> = (0..10).map(|i| p2_global(mesh, t, i)).collect();
        let verts = mesh.tets[t];
        for q in 0..nq {
            let w = ctx.quad.weights[q] * geo.det_j;
            let x = element_point(mesh, t, ctx.quad.points[q]);
            let (p2v, p2g) = &ctx.ref_p2[q];
            let (p1v, _) = &ctx.ref_p1[q];
            let mut uh = [0.0f64; 3];
            let mut guh = [[0.0f64; 3]; 3];
            for (i, &node) in nodes.iter().enumerate() {
                let gx = [
                    geo.jinv_t[0][0] * p2g[i][0]
                        + geo.jinv_t[0][1] * p2g[i][1]
                        + geo.jinv_t[0][2] * p2g[i][2],
                    geo.jinv_t[1][0] * p2g[i][0]
                        + geo.jinv_t[1][1] * p2g[i][1]
                        + geo.jinv_t[1][2] * p2g[i][2],
                    geo.jinv_t[2][0] * p2g[i][0]
                        + geo.jinv_t[2][1] * p2g[i][1]
                        + geo.jinv_t[2][2] * p2g[i][2],
                ];
                for c in 0..3 {
                    let coef = u[DofLayout::velocity_dof(node, c)];
                    uh[c] += coef * p2v[i];
                    for d in 0..3 {
                        guh[c][d] += coef * gx[d];
                    }
                }
            }
            let ue = exact_u(x);
            let gue = exact_grad_u(x);
            for c in 0..3 {
                let e = uh[c] - ue[c];
                l2_sq += w * e * e;
                for d in 0..3 {
                    let ge = guh[c][d] - gue[c][d];
                    h1_sq += w * ge * ge;
                }
            }
            let mut ph = 0.0;
            for i in 0..4 {
                ph += p[verts[i]] * p1v[i];
            }
            let pe = ph - exact_p(x);
            p_int += w * pe;
            p_sq += w * pe * pe;
            volume += w;
        }
    }
    // Quotient norm: subtract the mean of the error before measuring it.
    let p_quot_sq = (p_sq - p_int * p_int / volume).max(0.0);
    ErrorNorms {
        u_l2: l2_sq.sqrt(),
        u_h1_semi: h1_sq.sqrt(),
        u_h1: (l2_sq + h1_sq).sqrt(),
        p_l2: p_quot_sq.sqrt(),
    }
}

/// Mass-weighted inner product `a' M b`.
pub fn weighted_dot(m: &Csr, a: &[f64], b: &[f64]) -> f64 {
    m.mul_vec(b).iter().zip(a.iter()).map(|(x, y)| x * y).sum()
}

/// L2 norm of a coefficient vector under the given mass matrix.
pub fn weighted_norm(m: &Csr, a: &[f64]) -> f64 {
    weighted_dot(m, a, a).max(0.0).sqrt()
}

/// The two-level energy `||u_n||^2 + ||2 u_n - u_{n-1}||^2` in the
/// mass-weighted norm, the quantity the time-marching stability bound
/// controls.
pub fn step_energy(a0: &Csr, u_n: &[f64], u_nm1: &[f64]) -> f64 {
    let ext: Vec<f64> = u_n
        .iter()
        .zip(u_nm1.iter())
        .map(|(a, b)| 2.0 * a - b)
        .collect();
    weighted_dot(a0, u_n, u_n) + weighted_dot(a0, &ext, &ext)
}

/// Squared L2 norm of a pointwise-evaluable vector field, integrated by the
/// degree-6 rule. Used for the forcing term of the stability bound.
pub fn field_l2_sq(mesh: &Mesh, ctx: &AssemblyContext, f: impl Fn([f64; 3]) -> [f64; 3]) -> f64 {
    let mut total = 0.0;
    for t in 0..mesh.n_tets() {
        let geo = ctx.geometry[t];
        for (q, &r) in ctx.quad.points.iter().enumerate() {
            let w = ctx.quad.weights[q] * geo.det_j;
            let v = f(element_point(mesh, t, r));
            total += w * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
        }
    }
    total
}

/// Largest nodal speed of an interleaved velocity vector.
pub fn max_nodal_speed(u: &[f64]) -> f64 {
    u.chunks_exact(3)
        .map(|v| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt())
        .fold(0.0f64, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_static, interpolate_pressure, interpolate_velocity};
    use crate::mesh::build_uniform_cube_mesh;
    use crate::problems::{
        manufactured_pressure, manufactured_velocity, manufactured_velocity_gradient,
    };
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_fields_have_zero_measures() {
        let mesh = build_uniform_cube_mesh(2, [0.0; 3], [1.0; 3]).unwrap();
        let layout = DofLayout::build_no_slip(&mesh);
        let ctx = AssemblyContext::new(&mesh);
        let mats = assemble_static(&mesh, &layout, &ctx);
        let u = vec![0.0; layout.n_velocity];
        let p = vec![0.0; layout.n_pressure];
        assert_eq!(weak_div_measure(&mats.b, &u), 0.0);
        assert_eq!(strong_div_measure(&mesh, &ctx, &u), 0.0);
        let e = error_norms(&mesh, &ctx, &u, &p, &|_| [0.0; 3], &|_| [[0.0; 3]; 3], &|_| 0.0);
        assert_eq!(e.u_l2, 0.0);
        assert_eq!(e.u_h1, 0.0);
        assert_eq!(e.p_l2, 0.0);
    }

    #[test]
    fn linear_divergence_free_field_registers_zero() {
        let mesh = build_uniform_cube_mesh(2, [0.0; 3], [1.0; 3]).unwrap();
        let ctx = AssemblyContext::new(&mesh);
        let u = interpolate_velocity(&mesh, |p| [p[0], -p[1], 0.0]);
        assert!(strong_div_measure(&mesh, &ctx, &u) < 1e-11);
        let rot = interpolate_velocity(&mesh, |p| [-p[1], p[0], 0.0]);
        assert!(strong_div_measure(&mesh, &ctx, &rot) < 1e-11);
    }

    #[test]
    fn unit_divergence_field_registers_one() {
        let mesh = build_uniform_cube_mesh(2, [0.0; 3], [1.0; 3]).unwrap();
        let ctx = AssemblyContext::new(&mesh);
        let u = interpolate_velocity(&mesh, |p| [p[0], 0.0, 0.0]);
        assert!((strong_div_measure(&mesh, &ctx, &u) - 1.0).abs() < 1e-11);
    }

    #[test]
    fn field_norm_integrates_polynomials_exactly() {
        let mesh = build_uniform_cube_mesh(2, [0.0; 3], [1.0; 3]).unwrap();
        let ctx = AssemblyContext::new(&mesh);
        // int x^2 + int y^4 + int 1 over the unit cube.
        let exact = 1.0 / 3.0 + 1.0 / 5.0 + 1.0;
        let got = field_l2_sq(&mesh, &ctx, |p| [p[0], p[1] * p[1], 1.0]);
        assert!((got - exact).abs() < 1e-13, "{got} vs {exact}");
    }

    #[test]
    fn weak_measure_bounded_by_matrix_norm() {
        let mesh = build_uniform_cube_mesh(2, [0.0; 3], [1.0; 3]).unwrap();
        let layout = DofLayout::build_no_slip(&mesh);
        let ctx = AssemblyContext::new(&mesh);
        let mats = assemble_static(&mesh, &layout, &ctx);
        // ||B||_inf = max absolute row sum.
        let mut b_norm = 0.0f64;
        for i in 0..layout.n_pressure {
            let (_, vals) = mats.b.row(i);
            b_norm = b_norm.max(vals.iter().map(|v| v.abs()).sum());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let u: Vec<f64> = (0..layout.n_velocity)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let w = weak_div_measure(&mats.b, &u);
            let u_inf = u.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
            assert!(w <= b_norm * u_inf + 1e-12);
        }
    }

    #[test]
    fn interpolation_error_is_third_order_in_l2() {
        // Interpolate the manufactured velocity on two meshes; quadratic
        // elements give an L2 interpolation error of order h^3. The coarse
        // mesh must already resolve the oscillation of the field (scale
        // ~0.2), hence the 3 -> 6 pair.
        let mut errs = Vec::new();
        for n in [3usize, 6] {
            let mesh = build_uniform_cube_mesh(n, [0.0; 3], [1.0; 3]).unwrap();
            let ctx = AssemblyContext::new(&mesh);
            let u = interpolate_velocity(&mesh, |x| manufactured_velocity(0.0, x));
            let p = interpolate_pressure(&mesh, |x| manufactured_pressure(0.0, x));
            let e = error_norms(
                &mesh,
                &ctx,
                &u,
                &p,
                &|x| manufactured_velocity(0.0, x),
                &|x| manufactured_velocity_gradient(0.0, x),
                &|x| manufactured_pressure(0.0, x),
            );
            errs.push(e);
        }
        let rate = (errs[0].u_l2 / errs[1].u_l2).ln() / 2.0f64.ln();
        assert!(
            (2.5..=3.5).contains(&rate),
            "L2 interpolation rate {rate} (errors {} -> {})",
            errs[0].u_l2,
            errs[1].u_l2
        );
        let rate_h1 = (errs[0].u_h1_semi / errs[1].u_h1_semi).ln() / 2.0f64.ln();
        assert!(
            (1.5..=2.5).contains(&rate_h1),
            "H1 interpolation rate {rate_h1}"
        );
    }

    #[test]
    fn exact_pressure_interpolant_has_small_mean() {
        let mesh = build_uniform_cube_mesh(4, [0.0; 3], [1.0; 3]).unwrap();
        let layout = DofLayout::build_no_slip(&mesh);
        let ctx = AssemblyContext::new(&mesh);
        let mats = assemble_static(&mesh, &layout, &ctx);
        let p = interpolate_pressure(&mesh, |x| manufactured_pressure(0.0, x));
        let mean = crate::assembly::pressure_mean(&mats.m, &p);
        // The exact pressure has zero mean; the interpolant inherits it up
        // to interpolation error on the trig factors.
        assert!(mean.abs() < 1e-12, "interpolant mean {mean}");
    }

    #[test]
    fn energy_functional_matches_direct_sum() {
        let mesh = build_uniform_cube_mesh(2, [0.0; 3], [1.0; 3]).unwrap();
        let layout = DofLayout::build_no_slip(&mesh);
        let ctx = AssemblyContext::new(&mesh);
        let mats = assemble_static(&mesh, &layout, &ctx);
        let u1 = interpolate_velocity(&mesh, |p| [p[0] * p[1], 0.0, p[2]]);
        let u0 = interpolate_velocity(&mesh, |p| [0.0, p[1], 0.0]);
        let e = step_energy(&mats.a0, &u1, &u0);
        let n1 = weighted_norm(&mats.a0, &u1);
        let ext: Vec<f64> = u1.iter().zip(u0.iter()).map(|(a, b)| 2.0 * a - b).collect();
        let n2 = weighted_norm(&mats.a0, &ext);
        assert!((e - n1 * n1 - n2 * n2).abs() < 1e-12);
    }

    #[test]
    fn nodal_speed_picks_the_largest_vector() {
        let u = vec![0.0, 0.0, 0.0, 3.0, 4.0, 0.0, 1.0, 1.0, 1.0];
        assert!((max_nodal_speed(&u) - 5.0).abs() < 1e-15);
    }
}
