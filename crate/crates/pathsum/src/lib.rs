//! Path-sum evaluation of time-ordered exponentials.
//!
//! Two-time functions live on a shared uniform [`TimeGrid`]; the
//! non-commutative convolution ([`star_product`]) and Volterra resolvents
//! built on it are enough to express the evolution operator of any
//! time-dependent Hamiltonian as a finite branched continued fraction over
//! the walks of its dynamical graph.

pub mod block;
pub mod cdt;
pub mod error;
pub mod graph;
pub mod grid;
pub mod many_body;
pub mod oracle;
pub mod quad;
pub mod special;
pub mod star;
pub mod two_level;
pub mod verify;
pub mod volterra;

pub use error::{Error, Result};
pub use graph::{DynamicalGraph, PathSumExpression};
pub use grid::{Quadrature, TimeGrid};
pub use star::{lift, lift_one_time, lift_one_time_scalar, lift_scalar, star_power, star_product, Column, TwoTimeFunction};

pub use num_complex::Complex64 as C64;
