//! Minimum-energy steering of a first-order linear system whose coefficient
//! switches randomly at integer times.
//!
//! The switching process is unrolled into a finite [`tree::TemporalTree`]
//! whose edges are unit time intervals. The optimal trajectory solves a
//! second-order boundary value problem on that tree with Kirchhoff-type
//! vertex conditions; its first-order residual on each edge is the control
//! to apply once the corresponding branch has been realized.
//!
//! Module map:
//!
//! - [`process`]: the coefficient process, its validation and truncation.
//! - [`tree`]: construction of the temporal tree and its weights.
//! - [`edge`]: closed-form fundamental solutions and exact edge integrals.
//! - [`bvp`]: assembly and solution of the tree boundary value problem.
//! - [`control`]: controls, energies, scenario playback and certificates.
//! - [`oracle`]: mesh-based brute-force checks independent of [`bvp`].
//! - [`export`]: CSV/JSON writers for trees, trajectories and fixtures.

pub mod bvp;
pub mod control;
pub mod edge;
pub mod export;
pub mod oracle;
pub mod process;
pub mod quadrature;
pub mod special;
pub mod tree;

pub use num_complex::Complex64;

pub use bvp::{solve, BoundaryData, SolveOptions, TreeTrajectory};
pub use control::{extract_controls, ControlFamily, ScenarioPath};
pub use process::{ProcessSpec, Targets, TruncationPolicy};
pub use tree::{build_tree, EdgeId, TemporalTree};
