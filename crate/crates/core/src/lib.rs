//! # kantlab
//!
//! Numerical laboratory for nonlinear Kantorovich problems, where the cost of a
//! transport plan depends on its conditional measures `σˣ` rather than only on
//! the pair `(x, y)`.
//!
//! Layout:
//!
//! - [`measures`]: discrete measures, grid densities, conditional kernels, moment maps.
//! - [`lp`]: bounded-variable primal simplex with dual values.
//! - [`transport`]: classical transport, the Kantorovich–Rubinshtein norm, the
//!   segment distance, and strong-monotonicity checks.
//! - [`convex_order`]: convex dominance with positive and negative certificates.
//! - [`martingale`]: couplings with prescribed conditional barycenters and gluing.
//! - [`nonlinear`]: nonlinear cost functionals, the fixed-barycenter LP, and the
//!   plan/map reductions for barycentric costs.
//! - [`nonattainment`]: exact fixtures for the non-attainment constructions and
//!   their convergence sweeps.
//! - [`cli`]: the `kantlab` command-line front end.

#![forbid(unsafe_code)]

pub mod cli;
pub mod convex_order;
pub mod error;
pub mod json;
pub mod lp;
pub mod martingale;
pub mod measures;
pub mod nonattainment;
pub mod nonlinear;
pub mod transport;

pub use error::{Error, Result};
