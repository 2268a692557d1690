//! Discrete p-Poisson problems `Δ_p u = f` on closed metric-measure domains:
//! periodic grids, the circle and weighted graphs.
//!
//! The crate provides an exact-duality discrete calculus ([`calculus`]), the
//! nonlinear operators ([`plap`]), a Cordes-type fixed-point solver with
//! `ε`-continuation and an independent variational oracle ([`solve`]),
//! first p-eigenpairs ([`eigen`]), spectral constants ([`spectral`]) and a
//! library of inequality and estimate checks ([`verify`]).

// `!(x > 0.0)` style guards deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calculus;
pub mod eigen;
pub mod error;
pub mod io;
pub mod mesh;
pub mod plap;
pub mod serde_util;
pub mod solve;
pub mod spectral;
pub mod verify;

pub use calculus::{HessianField, ScalarField, VectorField};
pub use error::{Error, Result};
pub use mesh::{Ball, Domain};
pub use plap::RegParams;
pub use solve::{SolveRecord, Solver, SolverConfig};
