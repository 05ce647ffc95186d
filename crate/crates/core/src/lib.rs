//! Numerical laboratory for nonlinear Fokker–Planck equations
//!
//! ```text
//! u_t - Δβ(u) + div(b(x, u) u) = 0   on the periodic box [-L, L)^d, d ∈ {1, 2}
//! ```
//!
//! * [`model`]: coefficients `β`, `b`, derived `Φ`, `δ`, assumption checks and a registry.
//! * [`grid`]: periodic grid, fields, spectral operators and negative Sobolev norms.
//! * [`pde`]: backward-Euler implicit scheme, regularised and linearised variants, barrier ODE.
//! * [`particles`]: McKean–Vlasov particle system with density-estimation closure.
//! * [`verify`]: executable checks (contraction, barrier, Grönwall, weak form, ...).
//!
//! Data-parallel loops go through [`exec`]; with the default `parallel`
//! feature they use rayon, otherwise they run sequentially. Results are
//! bitwise identical either way.

pub mod error;
pub mod exec;
pub mod grid;
pub mod krylov;
pub mod model;
pub mod particles;
pub mod pde;
pub mod verify;

pub use error::{Error, Result};
pub use exec::Execution;
pub use grid::{PeriodicGrid, ScalarField, Spectral, VectorField};
pub use model::ModelProblem;
pub use pde::{SolverConfig, Trajectory};
