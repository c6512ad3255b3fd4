//! Desk-scale laboratory for the fractional magnetic Schrödinger equation
//! (FMSE) on truncated lattices.
//!
//! The crate discretizes the nonlocal operators on a box `B ⊂ ℝⁿ` (n = 1, 2),
//! with a uniform rectangle rule standing in for every integral over `ℝⁿ` and
//! `ℝ²ⁿ`. With that choice the fractional gradient and divergence are exact
//! discrete adjoints, and the operator identities of the model become finite
//! identities that can be checked to round-off:
//!
//! * [`grid`]: lattice, node classification and discrete inner products.
//! * [`fields`]: bivariate vector fields, their symmetric/antisymmetric and
//!   parallel/perpendicular parts, the σ-kernel and the effective potential `Q`.
//! * [`operators`]: fractional and magnetic gradient/divergence, three
//!   independent assemblies of the magnetic fractional Laplacian, the
//!   conductivity operator with its reduction, and a Fourier-symbol check.
//! * [`solver`]: exterior Dirichlet problem and the Dirichlet-to-Neumann matrix.
//! * [`gauge`]: gauge partners and the `∼` / `≈` relations.
//! * [`inverse`]: Alessandrini identity, Runge rank and linear recovery of `(σ, Q)`.
//! * [`walk`]: the weighted long-jump random walk and its generator.
//! * [`presets`]: seeded instance generators shared by tests, benches and the CLI.

pub mod error;
pub mod fields;
pub mod gauge;
pub mod grid;
pub mod inverse;
pub mod io;
pub mod linalg;
pub mod operators;
pub mod presets;
pub mod solver;
pub mod special;
pub mod walk;

pub use error::{Error, Result};
pub use fields::{BivariateVectorField, Part, Potentials, PropertyReport, SigmaKernel};
pub use gauge::GaugeReport;
pub use grid::{Grid, GridConfig, OmegaSpec, ScalarField};
pub use inverse::{RecoveryOptions, RecoveryResult, RungeReport};
pub use operators::{AlphaKernel, AssemblyKind, OperatorMatrix};
pub use solver::{DirichletProblem, DirichletSolution, DnMatrix};
pub use walk::WalkConfig;

/// Version string embedded in every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
