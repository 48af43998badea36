//! Symbolic-numeric engine for singular stochastic PDEs in the language of
//! regularity structures.
//!
//! The symbolic layer generates decorated-tree symbol sets for an equation
//! class, carries the structure-group Hopf algebra with exact rational
//! arithmetic, and derives renormalised equations mechanically. The numeric
//! layer realises canonical models from mollified white noise on periodic
//! space-time grids, estimates Hölder exponents and renormalisation
//! constants, and runs renormalised solvers with convergence diagnostics.

pub mod cli;
pub mod coeff;
pub mod error;
pub mod fields;
pub mod formal;
pub mod hopf;
pub mod kpz_symbols;
pub mod lincomb;
pub mod model;
pub mod renorm;
pub mod rules;
pub mod solvers;
pub mod symbols;
pub mod wick;

pub use error::{Error, Result};
