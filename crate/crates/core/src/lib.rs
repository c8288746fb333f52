//! Reifenberg-type parameterizations of sampled sets.
//!
//! The crate builds multiscale nets and coherent plane families from point
//! clouds, iterates the resulting projection maps `σ_k` to a parameterization
//! `f` of a limit surface, extends it to an ambient map `g`, and computes the
//! multiscale flatness statistics (β numbers, Jones sums, Carleson sums) that
//! tell the bi-Hölder and bi-Lipschitz regimes apart.

// `!(x > 0.0)` style guards reject NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beta;
pub mod cloud;
pub mod error;
pub mod extend;
pub mod flow;
pub mod geom;
pub mod index;
pub mod io;
pub mod nets;
mod optim;
pub mod sets;
pub mod unity;

pub use cloud::PointCloud;
pub use error::{Error, Result};
pub use geom::{AffinePlane, Ball, BoxRegion, Matrix, Vector};
