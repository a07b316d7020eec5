//! Joint estimation of conditional-independence graphs for multivariate
//! functional data observed in several subpopulations.
//!
//! The pipeline: curves sampled on a shared grid are reduced per variable by
//! discretized functional PCA ([`fpca`]), the stacked principal-component
//! scores give one sample covariance per subpopulation, and blockwise-sparse
//! precision matrices are estimated jointly by a reweighted group graphical
//! lasso ([`jfggm`]) whose convex subproblems are solved with ADMM
//! ([`solver`]). [`simulate`] generates synthetic datasets with known graph
//! structure and [`evaluate`] scores support recovery with ROC/AUC.
//!
//! Conventions used throughout the public API:
//! - variables (graph nodes) and blocks are 1-indexed, matching the block
//!   notation `Ω_jl`; raw matrix entries use nalgebra's 0-indexed access;
//! - an edge is an unordered pair `(j, l)` stored with `j < l`;
//! - a `(p·M) × (p·M)` matrix is viewed as a `p × p` grid of `M × M` blocks,
//!   block `(j, l)` covering rows `(j-1)M..jM` and columns `(l-1)M..lM`.

pub mod blocknorm;
pub mod error;
pub mod evaluate;
pub mod fpca;
pub mod io;
pub mod jfggm;
pub mod simulate;
pub mod solver;

pub use blocknorm::BlockMatrix;
pub use error::{Error, Result};
pub use evaluate::{RocCurve, RocPoint};
pub use fpca::{CurvePanel, FpcaBasis, ScoreMatrix};
pub use jfggm::{JointEstimate, JointProblem};
pub use simulate::{GroundTruth, SimConfig};
pub use solver::{AdmmSettings, EdgeSet, SolveResult, WeightMatrix};
