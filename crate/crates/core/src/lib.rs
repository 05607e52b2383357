//! Discrete weighted p-Hardy inequalities on the half-line.
//!
//! The inequality under study is
//!
//! ```text
//! sum_{n>=1} nu(n) |u_n - u_{n-1}|^p  >=  C sum_{n>=1} mu(n) |u_n|^p,   u_0 = 0,
//! ```
//!
//! over finitely supported sequences. The crate computes Muckenhoupt-type
//! bounds on the best constant, optimal weights built from the ground state
//! of the path-graph p-Laplacian, sharp constants for power weights and a
//! battery of numeric checks on the supporting inequalities.

pub mod analysis;
pub mod enclosure;
pub mod error;
pub mod halfline;
pub mod muckenhoupt;
pub mod sequence;
pub mod sharpness;
mod tridiag;
pub mod verify;
pub mod weights;

pub use enclosure::Enclosure;
pub use error::{Error, Result};
pub use weights::{Exponent, TailModel, Weight, WeightFamily};
