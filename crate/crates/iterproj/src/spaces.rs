//! Reference-element machinery for the mixed quadratic/linear pair on
//! tetrahedra, the degree-6 volume quadrature rule, and the global dof layout.
//!
//! Reference tetrahedron: vertices (0,0,0), (1,0,0), (0,1,0), (0,0,1).
//! Barycentric coordinates L0 = 1-x-y-z, L1 = x, L2 = y, L3 = z.
//!
//! Quadratic basis order: 4 vertex functions Li(2Li-1), then 6 edge bubbles
//! 4*La*Lb following [`crate::mesh::TET_EDGES`]. Gradients are returned in
//! reference coordinates; callers map them with the inverse-transpose
//! Jacobian of the affine element map.

use crate::mesh::{FaceSet, Mesh, TET_EDGES};

/// Volume quadrature rule on the reference tetrahedron.
///
/// Weights include the reference volume: they sum to 1/6, so
/// `integral = sum_q w_q f(x_q) * |det J|` on a mapped element.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

// 24-point, degree-6 rule: three 4-point orbits of barycentric type
// (a,a,a,b) plus one 12-point orbit of type (a,a,b,c).
const ORBITS_AAAB: [(f64, f64); 3] = [
    (0.006_653_791_709_694_657, 0.214_602_871_259_152),
    (0.001_679_535_175_886_773, 0.040_673_958_534_611),
    (0.009_226_196_923_942_399, 0.322_337_890_142_276),
];
const ORBIT_AABC: (f64, f64, f64) = (
    0.008_035_714_285_714_285,
    0.063_661_001_875_018,
    0.269_672_331_458_316,
);

/// All permutations of four indices, in lexicographic order.
fn perms4() -> Vec<[usize; 4]> {
    let mut out = Vec::with_capacity(24);
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    if a != b && a != c && a != d && b != c && b != d && c != d {
                        out.push([a, b, c, d]);
                    }
                }
            }
        }
    }
    out
}

/// The 24-point degree-6 rule. Exactness over all monomials of total degree
/// <= 6 is enforced by tests against the closed-form integrals
/// a! b! c! / (a+b+c+3)!.
pub fn keast_quadrature() -> QuadratureRule {
    let mut points = Vec::with_capacity(24);
    let mut weights = Vec::with_capacity(24);
    let mut push_orbit = |bary: [f64; 4], w: f64| {
        let mut seen: Vec<[u64; 4]> = Vec::new();
        for perm in perms4() {
            let lam = [bary[perm[0]], bary[perm[1]], bary[perm[2]], bary[perm[3]]];
            let key = [
                lam[0].to_bits(),
                lam[1].to_bits(),
                lam[2].to_bits(),
                lam[3].to_bits(),
            ];
            if seen.contains(&key) {
                continue;
            }
            seen.push(key);
            // Reference coordinates are (L1, L2, L3).
            points.push([lam[1], lam[2], lam[3]]);
            weights.push(w);
        }
    };
    for (w, a) in ORBITS_AAAB {
        push_orbit([a, a, a, 1.0 - 3.0 * a], w);
    }
    let (w, a, b) = ORBIT_AABC;
    push_orbit([a, a, b, 1.0 - 2.0 * a - b], w);
    QuadratureRule { points, weights }
}

/// Quadratic basis values and reference gradients at a reference point.
pub fn eval_p2_basis(p: [f64; 3]) -> ([f64; 10], [[f64; 3]; 10]) {
    let l = [1.0 - p[0] - p[1] - p[2], p[0], p[1], p[2]];
    const GRAD_L: [[f64; 3]; 4] = [
        [-1.0, -1.0, -1.0],
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
    ];
    let mut vals = [0.0f64; 10];
    let mut grads = [[0.0f64; 3]; 10];
    for i in 0..4 {
        vals[i] = l[i] * (2.0 * l[i] - 1.0);
        let f = 4.0 * l[i] - 1.0;
        for c in 0..3 {
            grads[i][c] = f * GRAD_L[i][c];
        }
    }
    for (e, &(a, b)) in TET_EDGES.iter().enumerate() {
        vals[4 + e] = 4.0 * l[a] * l[b];
        for c in 0..3 {
            grads[4 + e][c] = 4.0 * (l[b] * GRAD_L[a][c] + l[a] * GRAD_L[b][c]);
        }
    }
    (vals, grads)
}

/// Linear basis values and (constant) reference gradients.
pub fn eval_p1_basis(p: [f64; 3]) -> ([f64; 4], [[f64; 3]; 4]) {
    let vals = [1.0 - p[0] - p[1] - p[2], p[0], p[1], p[2]];
    let grads = [
        [-1.0, -1.0, -1.0],
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
    ];
    (vals, grads)
}

/// Global degrees of freedom for the velocity/pressure pair.
///
/// Velocity is vector-valued and quadratic: one scalar dof per mesh node
/// (primary nodes and edge midpoints), three components interleaved, so the
/// global dof of component `c` at scalar dof `i` is `3*i + c`. Pressure is
/// linear: one dof per primary node, sharing the primary-node numbering.
#[derive(Debug, Clone)]
pub struct DofLayout {
    pub n_velocity_scalar: usize,
    pub n_velocity: usize,
    pub n_pressure: usize,
    /// Per velocity dof: constrained by a Dirichlet condition?
    pub dirichlet_mask: Vec<bool>,
    /// Prescribed value per velocity dof (zero on free dofs).
    pub dirichlet_values: Vec<f64>,
}

impl DofLayout {
    #[inline]
    pub fn velocity_dof(scalar: usize, comp: usize) -> usize {
        3 * scalar + comp
    }

    /// Builds the layout, constraining all velocity components of every
    /// boundary node; `bc` supplies the prescribed velocity for a boundary
    /// node given its position and face tags.
    pub fn build(mesh: &Mesh, bc: impl Fn([f64; 3], FaceSet) -> [f64; 3]) -> DofLayout {
        let n_velocity_scalar = mesh.n_nodes();
        let n_velocity = 3 * n_velocity_scalar;
        let mut dirichlet_mask = vec![false; n_velocity];
        let mut dirichlet_values = vec![0.0; n_velocity];
        for (node, tags) in mesh.boundary.iter().enumerate() {
            if tags.is_empty() {
                continue;
            }
            let value = bc(mesh.nodes[node], *tags);
            for c in 0..3 {
                let dof = Self::velocity_dof(node, c);
                dirichlet_mask[dof] = true;
                dirichlet_values[dof] = value[c];
            }
        }
        DofLayout {
            n_velocity_scalar,
            n_velocity,
            n_pressure: mesh.n_primary,
            dirichlet_mask,
            dirichlet_values,
        }
    }

    /// Homogeneous variant (no-slip everywhere).
    pub fn build_no_slip(mesh: &Mesh) -> DofLayout {
        Self::build(mesh, |_, _| [0.0; 3])
    }

    /// Full-length velocity vector holding the prescribed boundary values.
    pub fn lift_vector(&self) -> Vec<f64> {
        self.dirichlet_values.clone()
    }

    pub fn n_constrained(&self) -> usize {
        self.dirichlet_mask.iter().filter(|&&m| m).count()
    }

    /// Zeroes the constrained entries of a velocity vector in place.
    pub fn zero_constrained(&self, v: &mut [f64]) {
        for (vi, &m) in v.iter_mut().zip(self.dirichlet_mask.iter()) {
            if m {
                *vi = 0.0;
            }
        }
    }

    /// Overwrites constrained entries with the prescribed boundary values.
    pub fn impose_values(&self, v: &mut [f64]) {
        for ((vi, &m), &val) in v
            .iter_mut()
            .zip(self.dirichlet_mask.iter())
            .zip(self.dirichlet_values.iter())
        {
            if m {
                *vi = val;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_uniform_cube_mesh;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(|k| k as f64).product::<f64>().max(1.0)
    }

    fn monomial_exact(a: u32, b: u32, c: u32) -> f64 {
        factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 3)
    }

    #[test]
    fn quadrature_has_24_points_weights_sum_sixth() {
        let q = keast_quadrature();
        assert_eq!(q.points.len(), 24);
        let s: f64 = q.weights.iter().sum();
        assert!((s - 1.0 / 6.0).abs() < 1e-15);
        for p in &q.points {
            assert!(p.iter().all(|&x| x >= 0.0));
            assert!(p[0] + p[1] + p[2] <= 1.0 + 1e-14);
        }
    }

    #[test]
    fn quadrature_exact_through_degree_six() {
        let q = keast_quadrature();
        let mut worst = 0.0f64;
        for deg in 0..=6u32 {
            for a in 0..=deg {
                for b in 0..=(deg - a) {
                    let c = deg - a - b;
                    let num: f64 = q
                        .points
                        .iter()
                        .zip(q.weights.iter())
                        .map(|(p, w)| {
                            w * p[0].powi(a as i32) * p[1].powi(b as i32) * p[2].powi(c as i32)
                        })
                        .sum();
                    let err = (num - monomial_exact(a, b, c)).abs();
                    worst = worst.max(err);
                }
            }
        }
        assert!(worst <= 1e-14, "worst deviation {worst}");
    }

    #[test]
    fn quadrature_not_exact_at_degree_seven() {
        let q = keast_quadrature();
        let num: f64 = q
            .points
            .iter()
            .zip(q.weights.iter())
            .map(|(p, w)| w * p[0].powi(7))
            .sum();
        assert!((num - monomial_exact(7, 0, 0)).abs() > 1e-7);
    }

    #[test]
    fn p2_kronecker_property_and_partition_of_unity() {
        let ref_nodes: [[f64; 3]; 10] = [
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.5, 0.0, 0.0],
            [0.0, 0.5, 0.0],
            [0.0, 0.0, 0.5],
            [0.5, 0.5, 0.0],
            [0.5, 0.0, 0.5],
            [0.0, 0.5, 0.5],
        ];
        for (j, node) in ref_nodes.iter().enumerate() {
            let (vals, _) = eval_p2_basis(*node);
            for (i, v) in vals.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((v - expect).abs() < 1e-14, "N_{i}({node:?}) = {v}");
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let x: f64 = rng.random_range(0.0..0.4);
            let y: f64 = rng.random_range(0.0..0.4);
            let z: f64 = rng.random_range(0.0..0.2);
            let (vals, grads) = eval_p2_basis([x, y, z]);
            let s: f64 = vals.iter().sum();
            assert!((s - 1.0).abs() < 1e-13);
            for c in 0..3 {
                let g: f64 = grads.iter().map(|gr| gr[c]).sum();
                assert!(g.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn p1_reproduces_linear_functions() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let lin = |p: [f64; 3]| 0.3 - 1.7 * p[0] + 0.4 * p[1] + 2.2 * p[2];
        let corners = [
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
        ];
        for _ in 0..20 {
            let x: f64 = rng.random_range(0.0..0.5);
            let y: f64 = rng.random_range(0.0..0.3);
            let z: f64 = rng.random_range(0.0..0.2);
            let (vals, _) = eval_p1_basis([x, y, z]);
            let interp: f64 = (0..4).map(|i| vals[i] * lin(corners[i])).sum();
            assert!((interp - lin([x, y, z])).abs() < 1e-14);
        }
    }

    #[test]
    fn p2_reproduces_quadratics_exactly() {
        // Interpolate a full quadratic at the 10 reference nodes; its P2
        // interpolant must agree with the polynomial everywhere.
        let poly = |p: [f64; 3]| {
            1.0 + 2.0 * p[0] - p[1] + 3.0 * p[2] + p[0] * p[0] - p[0] * p[1] + 2.0 * p[1] * p[2]
                + 0.5 * p[2] * p[2]
        };
        let ref_nodes: [[f64; 3]; 10] = [
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.5, 0.0, 0.0],
            [0.0, 0.5, 0.0],
            [0.0, 0.0, 0.5],
            [0.5, 0.5, 0.0],
            [0.5, 0.0, 0.5],
            [0.0, 0.5, 0.5],
        ];
        let coeffs: Vec<f64> = ref_nodes.iter().map(|&p| poly(p)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let x: f64 = rng.random_range(0.0..0.6);
            let y: f64 = rng.random_range(0.0..(0.9 - x).max(0.01));
            let z: f64 = rng.random_range(0.0..(0.95 - x - y).max(0.01));
            let (vals, _) = eval_p2_basis([x, y, z]);
            let interp: f64 = coeffs.iter().zip(vals.iter()).map(|(c, v)| c * v).sum();
            assert!((interp - poly([x, y, z])).abs() < 1e-12);
        }
    }

    #[test]
    fn layout_counts_on_n4_mesh() {
        let mesh = build_uniform_cube_mesh(4, [0.0; 3], [1.0; 3]).unwrap();
        let layout = DofLayout::build_no_slip(&mesh);
        assert_eq!(layout.n_pressure, 125);
        assert_eq!(layout.n_velocity_scalar, 729);
        assert_eq!(layout.n_velocity, 2187);
        // Refined-lattice boundary nodes: 9^3 - 7^3.
        assert_eq!(layout.n_constrained(), 3 * (729 - 343));
    }

    #[test]
    fn layout_values_follow_bc_function() {
        let mesh = build_uniform_cube_mesh(2, [-0.5; 3], [0.5; 3]).unwrap();
        let layout = DofLayout::build(&mesh, |_, tags| {
            if tags.contains(crate::mesh::Face::XMinus) {
                [0.0, 1.0, 0.0]
            } else {
                [0.0; 3]
            }
        });
        for (node, tags) in mesh.boundary.iter().enumerate() {
            let dy = layout.dirichlet_values[DofLayout::velocity_dof(node, 1)];
            if tags.contains(crate::mesh::Face::XMinus) {
                assert_eq!(dy, 1.0);
            } else {
                assert_eq!(dy, 0.0);
            }
            for c in 0..3 {
                assert_eq!(
                    layout.dirichlet_mask[DofLayout::velocity_dof(node, c)],
                    !tags.is_empty()
                );
            }
        }
    }
}
