//! Nonoverlapping Robin–Robin domain decomposition for nonlinear elliptic
//! equations of the form `-div α(∇u) + g(u) = f` with homogeneous Dirichlet
//! data, where `(α, g)` has p-structure (p-Laplacian type diffusion).
//!
//! The crate discretizes the problem with P1 finite elements on 1D intervals
//! and 2D rectangles, splits the mesh into two subdomains along a straight
//! cut, and provides:
//!
//! * the discrete Dirichlet solution operators `F_i` and Steklov–Poincaré
//!   operators `S_i` ([`interface::DecomposedProblem::steklov_apply`]),
//! * the Robin–Robin iteration and its Peaceman–Rachford interface form
//!   ([`interface::robin_robin_step`], [`interface::peaceman_rachford_step`]),
//! * a monolithic reference solver and a transmission-equivalence check
//!   ([`monolithic`]),
//! * certificates for the contraction and monotonicity structure of the
//!   iteration ([`diagnostics`]).

pub mod diagnostics;
pub mod error;
pub mod fem;
pub mod interface;
pub mod linalg;
pub mod mesh;
pub mod monolithic;
pub mod pstructure;
pub mod quadrature;
pub mod subsolver;

pub use diagnostics::{CertResult, ConvergenceHistory, IterationRecord, RunMetadata};
pub use error::{Error, Result};
pub use fem::{InterfaceMass, Source};
pub use interface::{DecomposedProblem, InitialTrace, InterfaceState, Reference, RunOptions, StopCriteria};
pub use mesh::{Axis, Decomposition, DualTrace, FeFunction, Mesh, Side, TraceVector, VertexTag};
pub use pstructure::{Flux, PStructure, Reaction, StructureConstants};
pub use quadrature::Quadrature;
pub use subsolver::{NewtonConfig, NewtonReport};

