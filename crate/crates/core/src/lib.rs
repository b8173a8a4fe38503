//! Embedded discontinuous Galerkin (EDG) discretization of the Poisson
//! problem on triangle meshes, statically condensed to the continuous
//! skeleton unknown, with a homogeneous V-cycle multigrid solver that uses
//! the same EDG scheme on every level.
//!
//! The pieces, bottom-up:
//!
//! - [`linalg`]: dense LU, symmetric eigenvalues, CSR matrices.
//! - [`mesh`]: triangulations, red refinement, nested hierarchies.
//! - [`basis`]: nodal Lagrange bases and quadrature.
//! - [`edg`]: local solvers, condensation, reconstruction, error norms.
//! - [`transfer`]: coarse-to-fine injection through the continuous extension.
//! - [`multigrid`]: smoothers, V-cycle, stationary and nested solves.
//! - [`experiment`]: iteration-count and convergence-order studies and their
//!   CSV/markdown tables.

pub mod basis;
pub mod edg;
pub mod experiment;
pub mod linalg;
pub mod mesh;
pub mod multigrid;
pub mod problem;
pub mod transfer;

pub use edg::{CondensedLevel, FieldSolution, PenaltyKind, PenaltyLaw, ReferenceElement, SkeletonDofMap};
pub use experiment::{ExperimentConfig, OutputFormat, ResultRow, ResultTable, RhsCase};
pub use linalg::{CsrMatrix, DenseMatrix, LuFactorization};
pub use mesh::{build_figure1_coarse, MeshHierarchy, Point2, TriMesh};
pub use multigrid::{MgHierarchy, SmootherConfig, SmootherKind, SolveReport};
pub use problem::EdgProblem;
pub use transfer::TransferOperator;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Mesh(#[from] mesh::MeshError),
    #[error(transparent)]
    Basis(#[from] basis::BasisError),
    #[error(transparent)]
    Edg(#[from] edg::EdgError),
    #[error(transparent)]
    Transfer(#[from] transfer::TransferError),
    #[error(transparent)]
    Multigrid(#[from] multigrid::MgError),
    #[error(transparent)]
    Linalg(#[from] linalg::LinalgError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot write {path}: {source}")]
    Output {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed table: {0}")]
    Table(#[from] csv::Error),
}
