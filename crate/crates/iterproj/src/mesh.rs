//! Tetrahedral meshes of box domains.
//!
//! Each hexahedral cell of an axis-aligned lattice is split into six
//! tetrahedra that all share the cell's main diagonal (lowest corner to
//! highest corner). Using the same split in every cell makes neighbouring
//! cells agree on the face triangulation, so the mesh is conforming. Edge
//! midpoints are enumerated once per geometric edge and appended after the
//! primary nodes; quadratic elements address them through `tet_midpoints`.
//!
//! Conventions:
//! - `nodes[0..n_primary]` are lattice vertices, the rest are edge midpoints;
//! - tets store primary-node indices with positive signed volume;
//! - local edge order within a tet is (0,1), (0,2), (0,3), (1,2), (1,3), (2,3).

use std::collections::HashMap;
use std::io::Write;

use crate::error::{Error, Result};

/// One boundary face of the box domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Face {
    XMinus,
    XPlus,
    YMinus,
    YPlus,
    ZMinus,
    ZPlus,
}

impl Face {
    pub const ALL: [Face; 6] = [
        Face::XMinus,
        Face::XPlus,
        Face::YMinus,
        Face::YPlus,
        Face::ZMinus,
        Face::ZPlus,
    ];

    fn bit(self) -> u8 {
        match self {
            Face::XMinus => 1,
            Face::XPlus => 2,
            Face::YMinus => 4,
            Face::YPlus => 8,
            Face::ZMinus => 16,
            Face::ZPlus => 32,
        }
    }
}

/// Set of box faces a node lies on (empty for interior nodes).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FaceSet(u8);

impl FaceSet {
    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, f: Face) -> bool {
        self.0 & f.bit() != 0
    }

    pub fn insert(&mut self, f: Face) {
        self.0 |= f.bit();
    }

    pub fn count(self) -> u32 {
        self.0.count_ones()
    }
}

/// Conforming tetrahedral mesh of an axis-aligned box.
#[derive(Debug, Clone)]
pub struct Mesh {
    /// Node coordinates: primary lattice nodes first, then edge midpoints.
    pub nodes: Vec<[f64; 3]>,
    pub n_primary: usize,
    /// Tetrahedra as 4 primary-node indices, positively oriented.
    pub tets: Vec<[usize; 4]>,
    /// Midpoint node per tet for local edges (0,1),(0,2),(0,3),(1,2),(1,3),(2,3).
    pub tet_midpoints: Vec<[usize; 6]>,
    /// Unique geometric edges as (low node, high node, midpoint node).
    pub edges: Vec<(usize, usize, usize)>,
    /// Face tags per node (primary and midpoint alike).
    pub boundary: Vec<FaceSet>,
    /// Domain box corners (lo, hi).
    pub bbox: ([f64; 3], [f64; 3]),
}

const GEOM_TOL: f64 = 1e-12;

/// Local edge order used everywhere for quadratic elements.
pub const TET_EDGES: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// All permutations of (x, y, z); each yields one tet of the six-tet cell split.
const AXIS_PERMS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

fn signed_volume(p: [[f64; 3]; 4]) -> f64 {
    let a = [p[1][0] - p[0][0], p[1][1] - p[0][1], p[1][2] - p[0][2]];
    let b = [p[2][0] - p[0][0], p[2][1] - p[0][1], p[2][2] - p[0][2]];
    let c = [p[3][0] - p[0][0], p[3][1] - p[0][1], p[3][2] - p[0][2]];
    (a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
        + a[2] * (b[0] * c[1] - b[1] * c[0]))
        / 6.0
}

/// Tags every node with the box faces it lies on (absolute tolerance 1e-12).
pub fn classify_boundary(nodes: &[[f64; 3]], bbox: ([f64; 3], [f64; 3])) -> Vec<FaceSet> {
    let (lo, hi) = bbox;
    nodes
        .iter()
        .map(|p| {
            let mut set = FaceSet::default();
            if (p[0] - lo[0]).abs() <= GEOM_TOL {
                set.insert(Face::XMinus);
            }
            if (p[0] - hi[0]).abs() <= GEOM_TOL {
                set.insert(Face::XPlus);
            }
            if (p[1] - lo[1]).abs() <= GEOM_TOL {
                set.insert(Face::YMinus);
            }
            if (p[1] - hi[1]).abs() <= GEOM_TOL {
                set.insert(Face::YPlus);
            }
            if (p[2] - lo[2]).abs() <= GEOM_TOL {
                set.insert(Face::ZMinus);
            }
            if (p[2] - hi[2]).abs() <= GEOM_TOL {
                set.insert(Face::ZPlus);
            }
            set
        })
        .collect()
}

/// Builds the mesh from per-axis node coordinates (each strictly ascending).
fn build_from_axes(xs: &[f64], ys: &[f64], zs: &[f64]) -> Result<Mesh> {
    for axis in [xs, ys, zs] {
        if axis.len() < 2 {
            return Err(Error::Config("mesh needs at least one cell per axis".into()));
        }
        if axis.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("mesh axis coordinates must ascend".into()));
        }
    }
    let (nx, ny, nz) = (xs.len() - 1, ys.len() - 1, zs.len() - 1);
    let idx = |i: usize, j: usize, l: usize| (i * (ny + 1) + j) * (nz + 1) + l;

    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1));
    for i in 0..=nx {
        for j in 0..=ny {
            for l in 0..=nz {
                nodes.push([xs[i], ys[j], zs[l]]);
            }
        }
    }
    let n_primary = nodes.len();

    let mut tets = Vec::with_capacity(6 * nx * ny * nz);
    for i in 0..nx {
        for j in 0..ny {
            for l in 0..nz {
                let base = [i, j, l];
                for perm in AXIS_PERMS {
                    let mut walk = base;
                    let mut vs = [idx(base[0], base[1], base[2]); 4];
                    for (step, &axis) in perm.iter().enumerate() {
                        walk[axis] += 1;
                        vs[step + 1] = idx(walk[0], walk[1], walk[2]);
                    }
                    let coords = [
                        nodes[vs[0]],
                        nodes[vs[1]],
                        nodes[vs[2]],
                        nodes[vs[3]],
                    ];
                    if signed_volume(coords) < 0.0 {
                        vs.swap(2, 3);
                    }
                    let vol = signed_volume([
                        nodes[vs[0]],
                        nodes[vs[1]],
                        nodes[vs[2]],
                        nodes[vs[3]],
                    ]);
                    if vol <= 0.0 {
                        return Err(Error::DegenerateElement {
                            element: tets.len(),
                            volume: vol,
                        });
                    }
                    tets.push(vs);
                }
            }
        }
    }

    // Enumerate unique edges and create midpoint nodes in deterministic
    // first-encounter order (tet order, then local edge order).
    let mut edge_map: HashMap<(usize, usize), usize> = HashMap::new();
    let mut edges = Vec::new();
    let mut tet_midpoints = Vec::with_capacity(tets.len());
    for tet in &tets {
        let mut mids = [0usize; 6];
        for (e, &(a, b)) in TET_EDGES.iter().enumerate() {
            let (na, nb) = (tet[a].min(tet[b]), tet[a].max(tet[b]));
            let mid = *edge_map.entry((na, nb)).or_insert_with(|| {
                let pa = nodes[na];
                let pb = nodes[nb];
                nodes.push([
                    0.5 * (pa[0] + pb[0]),
                    0.5 * (pa[1] + pb[1]),
                    0.5 * (pa[2] + pb[2]),
                ]);
                edges.push((na, nb, nodes.len() - 1));
                nodes.len() - 1
            });
            mids[e] = mid;
        }
        tet_midpoints.push(mids);
    }

    let bbox = (
        [xs[0], ys[0], zs[0]],
        [xs[nx], ys[ny], zs[nz]],
    );
    let boundary = classify_boundary(&nodes, bbox);
    let mesh = Mesh {
        nodes,
        n_primary,
        tets,
        tet_midpoints,
        edges,
        boundary,
        bbox,
    };
    mesh.check_conforming()?;
    Ok(mesh)
}

/// Uniform N x N x N subdivision of the box [lo, hi], six tets per cell.
pub fn build_uniform_cube_mesh(n: usize, lo: [f64; 3], hi: [f64; 3]) -> Result<Mesh> {
    if n == 0 {
        return Err(Error::Config("mesh resolution must be positive".into()));
    }
    let axis = |a: f64, b: f64| -> Vec<f64> {
        (0..=n)
            .map(|i| a + (b - a) * (i as f64) / (n as f64))
            .collect()
    };
    build_from_axes(&axis(lo[0], hi[0]), &axis(lo[1], hi[1]), &axis(lo[2], hi[2]))
}

/// Wall-clustered mesh of the unit box (-1/2, 1/2)^3 for the cavity problem:
/// cosine-spaced nodes in x and y (Gauss-Lobatto abscissae scaled to the box),
/// uniform spacing in z.
pub fn build_gauss_lobatto_mesh(n: usize) -> Result<Mesh> {
    if n == 0 {
        return Err(Error::Config("mesh resolution must be positive".into()));
    }
    let cosine: Vec<f64> = (0..=n)
        .map(|i| -0.5 * (std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect();
    let uniform: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64 - 0.5).collect();
    build_from_axes(&cosine, &cosine, &uniform)
}

impl Mesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_tets(&self) -> usize {
        self.tets.len()
    }

    pub fn tet_volume(&self, t: usize) -> f64 {
        let v = self.tets[t];
        signed_volume([
            self.nodes[v[0]],
            self.nodes[v[1]],
            self.nodes[v[2]],
            self.nodes[v[3]],
        ])
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.n_tets()).map(|t| self.tet_volume(t)).sum()
    }

    pub fn box_volume(&self) -> f64 {
        let (lo, hi) = self.bbox;
        (hi[0] - lo[0]) * (hi[1] - lo[1]) * (hi[2] - lo[2])
    }

    /// Every interior triangular face must be shared by exactly two tets and
    /// every boundary face by exactly one.
    fn check_conforming(&self) -> Result<()> {
        let mut faces: HashMap<[usize; 3], u32> = HashMap::new();
        for tet in &self.tets {
            for skip in 0..4 {
                let mut f: Vec<usize> = (0..4).filter(|&k| k != skip).map(|k| tet[k]).collect();
                f.sort_unstable();
                *faces.entry([f[0], f[1], f[2]]).or_insert(0) += 1;
            }
        }
        for (face, count) in &faces {
            if *count > 2 {
                return Err(Error::Config(format!(
                    "non-conforming mesh: face {face:?} shared by {count} tets"
                )));
            }
            if *count == 1 {
                // Faces owned by a single tet must lie on the domain boundary.
                let on_boundary = face.iter().all(|&v| !self.boundary[v].is_empty());
                if !on_boundary {
                    return Err(Error::Config(
                        "mesh face with a single tet lies inside the domain".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Plain-text dump: one `x y z` line per node, then one 4-index line per tet.
    pub fn dump_text(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "# nodes {} (primary {})", self.n_nodes(), self.n_primary)?;
        for p in &self.nodes {
            writeln!(w, "{:.17e} {:.17e} {:.17e}", p[0], p[1], p[2])?;
        }
        writeln!(w, "# tets {}", self.n_tets())?;
        for t in &self.tets {
            writeln!(w, "{} {} {} {}", t[0], t[1], t[2], t[3])?;
        }
        Ok(())
    }
}
