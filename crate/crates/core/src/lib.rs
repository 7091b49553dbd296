//! Matching pursuit over continuously parametrized dictionaries.
//!
//! Atoms `g_λ` are unit-norm samples of a mother function transformed by a
//! parameter `λ`. The parameter space carries the pullback metric
//! `G_ij = ⟨∂ᵢg_λ, ∂ⱼg_λ⟩`, which drives both the gradient refinement used by
//! gMP and the discretization diagnostics in [`geometry`].
//!
//! ```
//! use geopursuit::{affine1d::{Affine1D, TauAdicGrid}, pursuit, Dictionary};
//!
//! let dict = Affine1D::new(256).unwrap();
//! let grid = TauAdicGrid::covering(256, 2.0, 0.5).unwrap();
//! let f = dict.synthesize(&geopursuit::ParamPoint::new([100.5, 7.0])).unwrap();
//! let dmp = pursuit::run(&f, &dict, &grid, &pursuit::PursuitConfig::dmp(1)).unwrap();
//! let gmp = pursuit::run(&f, &dict, &grid, &pursuit::PursuitConfig::gmp(10, 1)).unwrap();
//! assert!(gmp.steps[0].score >= dmp.steps[0].score);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod affine1d;
pub mod aniso2d;
pub mod dictionary;
pub mod error;
pub mod exec;
pub mod experiments;
pub mod geometry;
pub mod io;
pub mod pursuit;
pub mod signal;

pub use dictionary::{CoordKind, Dictionary, ParamPoint};
pub use error::{Error, Result};
pub use exec::Execution;
pub use signal::{Shape, SignalBuffer};
