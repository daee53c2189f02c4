//! Verification laboratory for the weak representation property of
//! semimartingales under independent enlargement of filtrations.
//!
//! The crate has two engines:
//!
//! * an exact engine on finite weighted models ([`model`], [`jump`],
//!   [`wrp`], [`enlargement`], [`jacod`]) where compensators, predictable
//!   projections, compensated jump integrals and representation ranks are
//!   computed in closed form and every identity is checked to machine
//!   precision;
//! * a Monte Carlo engine ([`mc`]) for continuous-time scenarios mixing
//!   Brownian, compound-Poisson and deterministic-time step components,
//!   measuring how product-representation residuals decay under grid
//!   refinement.
//!
//! The [`scenario`] module wires both engines to scenario files and
//! deterministic reports; the `wrp-lab` binary exposes them on the command
//! line.

pub mod enlargement;
pub mod error;
pub mod io;
pub mod jacod;
pub mod jump;
pub mod linalg;
pub mod mc;
pub mod model;
pub mod random;
pub mod scenario;
pub mod wrp;

pub use error::{Error, Result};
pub use model::{AdaptedProcess, FiniteModel, PredictableProcess, EXACT_TOL, MASS_TOL};
