//! Sparse linear algebra: CSR storage, ILUT-preconditioned GMRES, conjugate
//! gradients (plain SPD and singular-Neumann variants) and a dense eigensolver
//! for products of an SPD matrix with a symmetric matrix.
//!
//! Everything here is deliberately self-contained and serial so that runs are
//! bit-reproducible; the rest of the crate treats this module as its only
//! linear-algebra backend for sparse systems.

mod cg;
mod csr;
mod eigen;
mod gmres;
mod ilut;

pub use cg::{cg_neumann, cg_spd, CgConfig};
pub use csr::{Csr, Triplets};
pub use eigen::{dense_eigs_spd_similar, jacobi_eigenvalues, EigenOutcome};
pub use gmres::{gmres_ilut, gmres_precond, GmresConfig, KrylovReport};
pub use ilut::{Ilut, IlutConfig};
