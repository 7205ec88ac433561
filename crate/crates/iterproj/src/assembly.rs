//! Finite-element assembly of the saddle-point operators on a tetrahedral
//! mesh: velocity mass and stiffness, the pressure/velocity divergence
//! coupling, pressure mass and stiffness, the convection operator in
//! skew-symmetric form, load vectors and Dirichlet elimination.
//!
//! All bilinear forms are integrated with the degree-6 rule, which is exact
//! for every integrand appearing here except loads with non-polynomial data.
//! Velocity matrices are assembled as scalar blocks on the quadratic nodes
//! and expanded to the interleaved three-component layout, since mass,
//! stiffness and skew convection all act component-wise.

use crate::error::Result;
use crate::mesh::Mesh;
use crate::spaces::{eval_p1_basis, eval_p2_basis, keast_quadrature, DofLayout, QuadratureRule};
use crate::sparse::{Csr, Triplets};

/// Per-element affine map data: inverse-transpose Jacobian and determinant.
#[derive(Debug, Clone, Copy)]
pub struct ElementGeometry {
    pub jinv_t: [[f64; 3]; 3],
    pub det_j: f64,
}

/// Pre-evaluated reference data shared by all assembly passes over one mesh.
#[derive(Debug, Clone)]
pub struct AssemblyContext {
    pub quad: QuadratureRule,
    /// P2 values and reference gradients at each quadrature point.
    pub ref_p2: Vec<([f64; 10], [[f64; 3]; 10])>,
    /// P1 values and reference gradients at each quadrature point.
    pub ref_p1: Vec<([f64; 4], [[f64; 3]; 4])>,
    pub geometry: Vec<ElementGeometry>,
}

impl AssemblyContext {
    pub fn new(mesh: &Mesh) -> Self {
        let quad = keast_quadrature();
        let ref_p2 = quad.points.iter().map(|&p| eval_p2_basis(p)).collect();
        let ref_p1 = quad.points.iter().map(|&p| eval_p1_basis(p)).collect();
        let geometry = (0..mesh.n_tets())
            .map(|t| element_geometry(mesh, t))
            .collect();
        AssemblyContext {
            quad,
            ref_p2,
            ref_p1,
            geometry,
        }
    }
}

pub fn element_geometry(mesh: &Mesh, t: usize) -> ElementGeometry {
    let v = mesh.tets[t];
    let p0 = mesh.nodes[v[0]];
    let mut j = [[0.0f64; 3]; 3]; // columns: v1-v0, v2-v0, v3-v0
    for (k, &vk) in v.iter().enumerate().skip(1) {
        for r in 0..3 {
            j[r][k - 1] = mesh.nodes[vk][r] - p0[r];
        }
    }
    let det = j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1])
        - j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0])
        + j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0]);
    let inv = [
        [
            (j[1][1] * j[2][2] - j[1][2] * j[2][1]) / det,
            (j[0][2] * j[2][1] - j[0][1] * j[2][2]) / det,
            (j[0][1] * j[1][2] - j[0][2] * j[1][1]) / det,
        ],
        [
            (j[1][2] * j[2][0] - j[1][0] * j[2][2]) / det,
            (j[0][0] * j[2][2] - j[0][2] * j[2][0]) / det,
            (j[0][2] * j[1][0] - j[0][0] * j[1][2]) / det,
        ],
        [
            (j[1][0] * j[2][1] - j[1][1] * j[2][0]) / det,
            (j[0][1] * j[2][0] - j[0][0] * j[2][1]) / det,
            (j[0][0] * j[1][1] - j[0][1] * j[1][0]) / det,
        ],
    ];
    // jinv_t[r][c] = inv[c][r]
    let mut jinv_t = [[0.0f64; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            jinv_t[r][c] = inv[c][r];
        }
    }
    ElementGeometry { jinv_t, det_j: det }
}

#[inline]
fn map_grad(g: &ElementGeometry, r: [f64; 3]) -> [f64; 3] {
    [
        g.jinv_t[0][0] * r[0] + g.jinv_t[0][1] * r[1] + g.jinv_t[0][2] * r[2],
        g.jinv_t[1][0] * r[0] + g.jinv_t[1][1] * r[1] + g.jinv_t[1][2] * r[2],
        g.jinv_t[2][0] * r[0] + g.jinv_t[2][1] * r[1] + g.jinv_t[2][2] * r[2],
    ]
}

/// Physical position of the reference point `r` (coordinates along the
/// three edge directions from vertex 0) inside element `t`.
#[inline]
pub fn element_point(mesh: &Mesh, t: usize, r: [f64; 3]) -> [f64; 3] {
    let verts = mesh.tets[t];
    let mut x = mesh.nodes[verts[0]];
    for (k, &vk) in verts.iter().enumerate().skip(1) {
        for c in 0..3 {
            x[c] += r[k - 1] * (mesh.nodes[vk][c] - mesh.nodes[verts[0]][c]);
        }
    }
    x
}

/// Global P2 node of local dof `i` (vertices 0..4, edge midpoints 4..10).
#[inline]
pub fn p2_global(mesh: &Mesh, t: usize, i: usize) -> usize {
    if i < 4 {
        mesh.tets[t][i]
    } else {
        mesh.tet_midpoints[t][i - 4]
    }
}

/// Time-independent operators of the discrete saddle-point problem.
///
/// All matrices live on the unconstrained spaces; Dirichlet conditions are
/// applied afterwards with [`apply_dirichlet`] / [`constrain_operator`].
#[derive(Debug, Clone)]
pub struct SystemMatrices {
    /// Velocity mass (interleaved three-component layout, SPD).
    pub a0: Csr,
    /// Velocity stiffness (interleaved, SPD on the no-slip subspace).
    pub s: Csr,
    /// Divergence coupling, rows pressure / columns velocity:
    /// `B[i][3j+c] = -(q_i, d/dx_c phi_j)`.
    pub b: Csr,
    /// Pressure stiffness (singular; null space is the constant vector).
    pub g: Csr,
    /// Pressure mass (SPD).
    pub m: Csr,
}

/// Assembles mass, stiffness, divergence coupling and the pressure operators.
pub fn assemble_static(mesh: &Mesh, layout: &DofLayout, ctx: &AssemblyContext) -> SystemMatrices {
    let ns = layout.n_velocity_scalar;
    let np = layout.n_pressure;
    let mut a0_t = Triplets::new(ns, ns);
    let mut s_t = Triplets::new(ns, ns);
    let mut b_t = Triplets::new(np, layout.n_velocity);
    let mut g_t = Triplets::new(np, np);
    let mut m_t = Triplets::new(np, np);

    let nq = ctx.quad.points.len();
    for t in 0..mesh.n_tets() {
        let geo = ctx.geometry[t];
        let mut a0_loc = [[0.0f64; 10]; 10];
        let mut s_loc = [[0.0f64; 10]; 10];
        let mut b_loc = [[[0.0f64; 3]; 10]; 4];
        let mut g_loc = [[0.0f64; 4]; 4];
        let mut m_loc = [[0.0f64; 4]; 4];
        for q in 0..nq {
            let w = ctx.quad.weights[q] * geo.det_j;
            let (p2v, p2g) = &ctx.ref_p2[q];
            let (p1v, p1g) = &ctx.ref_p1[q];
            let mut gx = [[0.0f64; 3]; 10];
            for i in 0..10 {
                gx[i] = map_grad(&geo, p2g[i]);
            }
            let mut hx = [[0.0f64; 3]; 4];
            for i in 0..4 {
                hx[i] = map_grad(&geo, p1g[i]);
            }
            for i in 0..10 {
                for j in 0..10 {
                    a0_loc[i][j] += w * p2v[i] * p2v[j];
                    s_loc[i][j] +=
                        w * (gx[i][0] * gx[j][0] + gx[i][1] * gx[j][1] + gx[i][2] * gx[j][2]);
                }
            }
            for i in 0..4 {
                for j in 0..10 {
                    for c in 0..3 {
                        b_loc[i][j][c] -= w * p1v[i] * gx[j][c];
                    }
                }
                for j in 0..4 {
                    m_loc[i][j] += w * p1v[i] * p1v[j];
                    g_loc[i][j] +=
                        w * (hx[i][0] * hx[j][0] + hx[i][1] * hx[j][1] + hx[i][2] * hx[j][2]);
                }
            }
        }
        for i in 0..10 {
            let gi = p2_global(mesh, t, i);
            for j in 0..10 {
                let gj = p2_global(mesh, t, j);
                a0_t.push(gi, gj, a0_loc[i][j]);
                s_t.push(gi, gj, s_loc[i][j]);
            }
        }
        for i in 0..4 {
            let pi = mesh.tets[t][i]; // pressure dof = primary node index
            for j in 0..10 {
                let gj = p2_global(mesh, t, j);
                for c in 0..3 {
                    b_t.push(pi, DofLayout::velocity_dof(gj, c), b_loc[i][j][c]);
                }
            }
            for j in 0..4 {
                let pj = mesh.tets[t][j];
                m_t.push(pi, pj, m_loc[i][j]);
                g_t.push(pi, pj, g_loc[i][j]);
            }
        }
    }

    SystemMatrices {
        a0: a0_t.to_csr().expand_blocks3(),
        s: s_t.to_csr().expand_blocks3(),
        b: b_t.to_csr(),
        g: g_t.to_csr(),
        m: m_t.to_csr(),
    }
}

/// Discrete convection operator at a given transport field.
#[derive(Debug, Clone)]
pub struct ConvectionMatrix {
    /// Interleaved operator with entries
    /// `(w . grad phi_j, phi_i) + 1/2 ((div w) phi_j, phi_i)` per component.
    pub n: Csr,
}

/// Assembles the skew-symmetric-form convection operator
/// `NL(w, v) = (w . grad) v + 1/2 (div w) v` tested against the velocity
/// basis. The integrand has polynomial degree 5, so the degree-6 rule
/// integrates it exactly and the discrete operator inherits the energy
/// identity (NL(w, v), v) = 0 for any v that vanishes on the boundary.
pub fn assemble_convection(
    mesh: &Mesh,
    layout: &DofLayout,
    ctx: &AssemblyContext,
    w_field: &[f64],
) -> ConvectionMatrix {
    assert_eq!(w_field.len(), layout.n_velocity);
    let ns = layout.n_velocity_scalar;
    let mut n_t = Triplets::new(ns, ns);
    let nq = ctx.quad.points.len();
    for t in 0..mesh.n_tets() {
        let geo = ctx.geometry[t];
        let nodes: Vec<usize> = (0..10).map(|i| p2_global(mesh, t, i)).collect();
        let mut n_loc = [[0.0f64; 10]; 10];
        for q in 0..nq {
            let w = ctx.quad.weights[q] * geo.det_j;
            let (p2v, p2g) = &ctx.ref_p2[q];
            let mut gx = [[0.0f64; 3]; 10];
            for i in 0..10 {
                gx[i] = map_grad(&geo, p2g[i]);
            }
            // Transport velocity and its divergence at the quadrature point.
            let mut wval = [0.0f64; 3];
            let mut divw = 0.0f64;
            for (i, &node) in nodes.iter().enumerate() {
                for c in 0..3 {
                    let coef = w_field[DofLayout::velocity_dof(node, c)];
                    wval[c] += coef * p2v[i];
                    divw += coef * gx[i][c];
                }
            }
            for j in 0..10 {
                let adv = wval[0] * gx[j][0] + wval[1] * gx[j][1] + wval[2] * gx[j][2]
                    + 0.5 * divw * p2v[j];
                for i in 0..10 {
                    n_loc[i][j] += w * adv * p2v[i];
                }
            }
        }
        for i in 0..10 {
            for j in 0..10 {
                n_t.push(nodes[i], nodes[j], n_loc[i][j]);
            }
        }
    }
    ConvectionMatrix {
        n: n_t.to_csr().expand_blocks3(),
    }
}

/// Fully explicit convection term `((w . grad) w, phi_i e_c)` as a load
/// vector (plain advective form, no skew correction).
pub fn assemble_convection_rhs(mesh: &Mesh, ctx: &AssemblyContext, w_field: &[f64]) -> Vec<f64> {
    let mut rhs = vec![0.0f64; w_field.len()];
    let nq = ctx.quad.points.len();
    for t in 0..mesh.n_tets() {
        let geo = ctx.geometry[t];
        let nodes: Vec<usize> = (0..10).map(|i| p2_global(mesh, t, i)).collect();
        for q in 0..nq {
            let w = ctx.quad.weights[q] * geo.det_j;
            let (p2v, p2g) = &ctx.ref_p2[q];
            let mut gx = [[0.0f64; 3]; 10];
            for i in 0..10 {
                gx[i] = map_grad(&geo, p2g[i]);
            }
            let mut wval = [0.0f64; 3];
            let mut wgrad = [[0.0f64; 3]; 3]; // wgrad[c][d] = d w_c / d x_d
            for (i, &node) in nodes.iter().enumerate() {
                for c in 0..3 {
                    let coef = w_field[DofLayout::velocity_dof(node, c)];
                    wval[c] += coef * p2v[i];
                    for d in 0..3 {
                        wgrad[c][d] += coef * gx[i][d];
                    }
                }
            }
            let conv = [
                wval[0] * wgrad[0][0] + wval[1] * wgrad[0][1] + wval[2] * wgrad[0][2],
                wval[0] * wgrad[1][0] + wval[1] * wgrad[1][1] + wval[2] * wgrad[1][2],
                wval[0] * wgrad[2][0] + wval[1] * wgrad[2][1] + wval[2] * wgrad[2][2],
            ];
            for (i, &node) in nodes.iter().enumerate() {
                for c in 0..3 {
                    rhs[DofLayout::velocity_dof(node, c)] += w * conv[c] * p2v[i];
                }
            }
        }
    }
    rhs
}

/// Load vector `(f, phi_i e_c)` for a prescribed body force.
pub fn assemble_load(
    mesh: &Mesh,
    ctx: &AssemblyContext,
    f: impl Fn([f64; 3]) -> [f64; 3],
) -> Vec<f64> {
    let mut rhs = vec![0.0f64; 3 * mesh.n_nodes()];
    let nq = ctx.quad.points.len();
    for t in 0..mesh.n_tets() {
        let geo = ctx.geometry[t];
        for q in 0..nq {
            let w = ctx.quad.weights[q] * geo.det_j;
            let (p2v, _) = &ctx.ref_p2[q];
            let fval = f(element_point(mesh, t, ctx.quad.points[q]));
            for i in 0..10 {
                let node = p2_global(mesh, t, i);
                for c in 0..3 {
                    rhs[DofLayout::velocity_dof(node, c)] += w * fval[c] * p2v[i];
                }
            }
        }
    }
    rhs
}

/// Eliminates Dirichlet dofs from a velocity-space system: prescribed values
/// are folded into the right-hand side of the free equations, constrained
/// rows/columns become identity, and the right-hand side carries the values.
pub fn apply_dirichlet(a: &Csr, rhs: &mut [f64], layout: &DofLayout) -> Csr {
    let lift = layout.lift_vector();
    let a_lift = a.mul_vec(&lift);
    for i in 0..rhs.len() {
        if layout.dirichlet_mask[i] {
            rhs[i] = layout.dirichlet_values[i];
        } else {
            rhs[i] -= a_lift[i];
        }
    }
    a.constrained(&layout.dirichlet_mask)
}

/// Constrained operator for homogeneous use (identity rows and columns, no
/// right-hand-side lift): the restriction of `a` to the free dofs.
pub fn constrain_operator(a: &Csr, layout: &DofLayout) -> Csr {
    a.constrained(&layout.dirichlet_mask)
}

/// Nodal interpolation of a vector field into the quadratic velocity space.
pub fn interpolate_velocity(mesh: &Mesh, f: impl Fn([f64; 3]) -> [f64; 3]) -> Vec<f64> {
    let mut u = vec![0.0f64; 3 * mesh.n_nodes()];
    for (node, &p) in mesh.nodes.iter().enumerate() {
        let v = f(p);
        for c in 0..3 {
            u[DofLayout::velocity_dof(node, c)] = v[c];
        }
    }
    u
}

/// Nodal interpolation of a scalar field into the linear pressure space.
pub fn interpolate_pressure(mesh: &Mesh, f: impl Fn([f64; 3]) -> f64) -> Vec<f64> {
    mesh.nodes[..mesh.n_primary].iter().map(|&p| f(p)).collect()
}

/// Subtracts the mass-weighted mean so the pressure has zero integral.
pub fn project_zero_mean_pressure(m: &Csr, p: &mut [f64]) {
    let ones = vec![1.0f64; p.len()];
    let m_ones = m.mul_vec(&ones);
    let total: f64 = m_ones.iter().sum();
    let mean = m_ones.iter().zip(p.iter()).map(|(a, b)| a * b).sum::<f64>() / total;
    for pi in p.iter_mut() {
        *pi -= mean;
    }
}

/// Mass-weighted mean of a pressure vector (the function's mean value over
/// the domain divided by the domain volume).
pub fn pressure_mean(m: &Csr, p: &[f64]) -> f64 {
    let ones = vec![1.0f64; p.len()];
    let m_ones = m.mul_vec(&ones);
    let total: f64 = m_ones.iter().sum();
    m_ones.iter().zip(p.iter()).map(|(a, b)| a * b).sum::<f64>() / total
}

pub fn check_patterns_compatible(mats: &SystemMatrices, conv: &ConvectionMatrix) -> Result<()> {
    Csr::linear_combination(&[(1.0, &mats.a0), (0.0, &mats.s), (0.0, &conv.n)]).map(|_| ())
}
