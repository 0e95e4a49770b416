//! Finite volume solver for the two-dimensional parabolic-elliptic
//! Keller-Segel system with cross-diffusion in the signal equation.
//!
//! The crate is organised bottom-up:
//!
//! - [`mesh`]: admissible meshes, transmissibilities, dual diamond cells;
//! - [`dspace`]: piecewise-constant fields, discrete norms, gradients;
//! - [`solver`]: sparse systems and the banded direct solver;
//! - [`scheme`]: assembly, the Picard time step and the run loop;
//! - [`diagnostics`]: entropies, functional inequalities, decay fits;
//! - [`experiment`]: configuration-driven experiments behind the `ksfv` binary;
//! - [`io`]: CSV/VTK writers and readers, mesh files.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod dspace;
pub mod error;
pub mod experiment;
pub mod io;
pub mod mesh;
pub mod scheme;
pub mod solver;

pub use dspace::Field;
pub use error::{Error, Result};
pub use mesh::{Mesh, Rect};
pub use scheme::{ModelParams, PicardConfig, Scheme, State, TimeGrid};
