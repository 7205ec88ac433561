//! Benchmark problem definitions: a manufactured unsteady solution on the
//! unit cube with closed-form forcing, and the lid-driven cavity.
//!
//! The manufactured velocity is built from `g(x) = 10x^2(1-x)^2`, whose value
//! and first derivative vanish at 0 and 1, so the field satisfies no-slip on
//! every face and is divergence free by construction. The forcing is derived
//! by hand from the momentum equation `u_t - nu Lap(u) + (u.grad)u + grad p`
//! using the closed-form derivatives of `g`; a finite-difference oracle in
//! the tests guards the derivation.

use crate::error::Result;
use crate::mesh::{build_gauss_lobatto_mesh, build_uniform_cube_mesh, Face, FaceSet, Mesh};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

#[inline]
fn g(x: f64) -> f64 {
    10.0 * x * x * (1.0 - x) * (1.0 - x)
}

#[inline]
fn g1(x: f64) -> f64 {
    20.0 * x - 60.0 * x * x + 40.0 * x * x * x
}

#[inline]
fn g2(x: f64) -> f64 {
    20.0 - 120.0 * x + 120.0 * x * x
}

#[inline]
fn g3(x: f64) -> f64 {
    -120.0 + 240.0 * x
}

/// Velocity of the manufactured solution.
pub fn manufactured_velocity(t: f64, x: [f64; 3]) -> [f64; 3] {
    let ct = t.cos();
    [
        ct * g(x[0]) * g1(x[1]) * g1(x[2]),
        ct * g1(x[0]) * g(x[1]) * g1(x[2]),
        -2.0 * ct * g1(x[0]) * g1(x[1]) * g(x[2]),
    ]
}

/// Velocity gradient; `out[c][d] = d u_c / d x_d`.
pub fn manufactured_velocity_gradient(t: f64, x: [f64; 3]) -> [[f64; 3]; 3] {
    let ct = t.cos();
    [
        [
            ct * g1(x[0]) * g1(x[1]) * g1(x[2]),
            ct * g(x[0]) * g2(x[1]) * g1(x[2]),
            ct * g(x[0]) * g1(x[1]) * g2(x[2]),
        ],
        [
            ct * g2(x[0]) * g(x[1]) * g1(x[2]),
            ct * g1(x[0]) * g1(x[1]) * g1(x[2]),
            ct * g1(x[0]) * g(x[1]) * g2(x[2]),
        ],
        [
            -2.0 * ct * g2(x[0]) * g1(x[1]) * g(x[2]),
            -2.0 * ct * g1(x[0]) * g2(x[1]) * g(x[2]),
            -2.0 * ct * g1(x[0]) * g1(x[1]) * g1(x[2]),
        ],
    ]
}

/// Pressure of the manufactured solution (zero mean over the unit cube).
pub fn manufactured_pressure(t: f64, x: [f64; 3]) -> f64 {
    (3.0 * t).cos() * (TWO_PI * x[0]).sin() * (TWO_PI * x[1]).sin() * x[2] * x[2] * x[2]
}

fn manufactured_pressure_gradient(t: f64, x: [f64; 3]) -> [f64; 3] {
    let c3t = (3.0 * t).cos();
    let (sx, cx) = (TWO_PI * x[0]).sin_cos();
    let (sy, cy) = (TWO_PI * x[1]).sin_cos();
    let z3 = x[2] * x[2] * x[2];
    [
        c3t * TWO_PI * cx * sy * z3,
        c3t * TWO_PI * sx * cy * z3,
        c3t * sx * sy * 3.0 * x[2] * x[2],
    ]
}

fn manufactured_laplacian(t: f64, x: [f64; 3]) -> [f64; 3] {
    let ct = t.cos();
    [
        ct * (g2(x[0]) * g1(x[1]) * g1(x[2])
            + g(x[0]) * g3(x[1]) * g1(x[2])
            + g(x[0]) * g1(x[1]) * g3(x[2])),
        ct * (g3(x[0]) * g(x[1]) * g1(x[2])
            + g1(x[0]) * g2(x[1]) * g1(x[2])
            + g1(x[0]) * g(x[1]) * g3(x[2])),
        -2.0 * ct
            * (g3(x[0]) * g1(x[1]) * g(x[2])
                + g1(x[0]) * g3(x[1]) * g(x[2])
                + g1(x[0]) * g1(x[1]) * g2(x[2])),
    ]
}

/// Closed-form body force that makes the manufactured pair solve the
/// momentum equation with viscosity `nu`.
pub fn manufactured_forcing(t: f64, x: [f64; 3], nu: f64) -> [f64; 3] {
    let st = t.sin();
    let u_t = [
        -st * g(x[0]) * g1(x[1]) * g1(x[2]),
        -st * g1(x[0]) * g(x[1]) * g1(x[2]),
        2.0 * st * g1(x[0]) * g1(x[1]) * g(x[2]),
    ];
    let u = manufactured_velocity(t, x);
    let gu = manufactured_velocity_gradient(t, x);
    let lap = manufactured_laplacian(t, x);
    let gp = manufactured_pressure_gradient(t, x);
    let mut f = [0.0f64; 3];
    for c in 0..3 {
        let conv = u[0] * gu[c][0] + u[1] * gu[c][1] + u[2] * gu[c][2];
        f[c] = u_t[c] - nu * lap[c] + conv + gp[c];
    }
    f
}

/// Which benchmark a run solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    /// Manufactured solution on the unit cube, exact errors available.
    Manufactured,
    /// Lid-driven cavity on the centered unit cube, no exact solution.
    Cavity,
}

/// A benchmark problem: domain/mesh family, boundary data, forcing, optional
/// exact solution, and the velocity scale entering the Reynolds number
/// (length scale is 1 for both domains).
#[derive(Debug, Clone)]
pub struct Problem {
    pub kind: ProblemKind,
    pub nu: f64,
    pub velocity_scale: f64,
    /// Cavity only: nodes shared between the sliding wall and a side wall
    /// take the lid velocity when true (the default), zero otherwise.
    pub lid_priority: bool,
}

impl Problem {
    pub fn manufactured(nu: f64) -> Self {
        Problem {
            kind: ProblemKind::Manufactured,
            nu,
            // Maximum speed of the exact field, so Re = 4.6/nu.
            velocity_scale: 4.6,
            lid_priority: true,
        }
    }

    pub fn cavity(nu: f64) -> Self {
        Problem {
            kind: ProblemKind::Cavity,
            nu,
            velocity_scale: 1.0, // lid speed, so Re = 1/nu
            lid_priority: true,
        }
    }

    pub fn reynolds(&self) -> f64 {
        self.velocity_scale / self.nu
    }

    pub fn has_exact(&self) -> bool {
        self.kind == ProblemKind::Manufactured
    }

    pub fn exact_velocity(&self, t: f64, x: [f64; 3]) -> Option<[f64; 3]> {
        match self.kind {
            ProblemKind::Manufactured => Some(manufactured_velocity(t, x)),
            ProblemKind::Cavity => None,
        }
    }

    pub fn exact_velocity_gradient(&self, t: f64, x: [f64; 3]) -> Option<[[f64; 3]; 3]> {
        match self.kind {
            ProblemKind::Manufactured => Some(manufactured_velocity_gradient(t, x)),
            ProblemKind::Cavity => None,
        }
    }

    pub fn exact_pressure(&self, t: f64, x: [f64; 3]) -> Option<f64> {
        match self.kind {
            ProblemKind::Manufactured => Some(manufactured_pressure(t, x)),
            ProblemKind::Cavity => None,
        }
    }

    /// Body force (zero for the cavity).
    pub fn forcing(&self, t: f64, x: [f64; 3]) -> [f64; 3] {
        match self.kind {
            ProblemKind::Manufactured => manufactured_forcing(t, x, self.nu),
            ProblemKind::Cavity => [0.0; 3],
        }
    }

    pub fn has_forcing(&self) -> bool {
        self.kind == ProblemKind::Manufactured
    }

    /// Dirichlet velocity for a boundary node (time independent for both
    /// benchmarks).
    pub fn boundary_velocity(&self, _x: [f64; 3], faces: FaceSet) -> [f64; 3] {
        match self.kind {
            ProblemKind::Manufactured => [0.0; 3],
            ProblemKind::Cavity => {
                let on_lid = faces.contains(Face::XMinus);
                let lid_wins = self.lid_priority || faces.count() == 1;
                if on_lid && lid_wins {
                    [0.0, 1.0, 0.0]
                } else {
                    [0.0; 3]
                }
            }
        }
    }

    /// Mesh family of the problem: uniform on `[0,1]^3` for the manufactured
    /// case, boundary-graded (cosine-spaced in x and y) on the centered cube
    /// for the cavity.
    pub fn build_mesh(&self, n: usize) -> Result<Mesh> {
        match self.kind {
            ProblemKind::Manufactured => build_uniform_cube_mesh(n, [0.0; 3], [1.0; 3]),
            ProblemKind::Cavity => build_gauss_lobatto_mesh(n),
        }
    }
}
