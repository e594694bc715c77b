//! Plug-and-play, RED and Langevin solvers for linear inverse imaging
//! problems, with group-equivariant denoiser wrappers and brute-force
//! stability analysis (Jacobian symmetry, local Lipschitz constants,
//! spectral interplay between the denoiser and the forward operator).
//!
//! Everything is float64 on small grayscale grids. Randomness flows from
//! explicit [`rng::SeededRng`] values; nothing reads the clock.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod denoisers;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod grid;
pub mod groups;
pub mod io;
pub mod operators;
pub mod rng;
pub mod solvers;
pub mod toy;

pub use error::{Error, Result};
pub use exec::ExecPolicy;
pub use grid::{ComplexImage, DenseMatrix, Image};
pub use groups::{built_in_group, Group, GroupElement, GroupSpec};
pub use rng::SeededRng;
