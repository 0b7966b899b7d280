//! Analysis and control toolkit for a predator-prey system in which
//! mutually interfering predators with a sigmoidal (type-III) functional
//! response are offered additional food of tunable quality and quantity.
//!
//! The crate covers, for both the food-free ("initial") and the
//! food-provided system:
//!
//! - the nondimensional model, vector fields, and analytic Jacobian
//!   ([`model`]);
//! - equilibria, nullcline geometry, and existence conditions
//!   ([`equilibria`]);
//! - eigenvalue classification, the interior-equilibrium stability
//!   theorems, the Region I-IV partition of the food-free parameter
//!   space, Hopf and bifurcation-curve location, and parameter-sweep
//!   atlases ([`stability`], [`atlas`]);
//! - adaptive trajectory integration with positivity/boundedness
//!   certificates and attractor detection ([`integrate`]);
//! - time-optimal control of food quality or quantity with Pontryagin
//!   diagnostics ([`control`]);
//! - config-file driven commands with CSV/JSON outputs ([`config`],
//!   [`commands`]).
//!
//! Start from the `examples/` directory: each file exercises one of the
//! capabilities above end to end.

pub mod atlas;
pub mod commands;
pub mod config;
pub mod control;
pub mod cubic;
pub mod equilibria;
mod error;
pub mod integrate;
pub mod model;
pub mod stability;

pub use error::{Error, Result};
pub use model::{ModelParams, State, SystemKind};
