//! Reduced dynamics of full counting statistics.
//!
//! The crate propagates small fermionic impurity models exactly in the
//! presence of a counting field, reconstructs the generalized dynamical maps
//! of the impurity by simulated process tomography, extracts transfer tensors
//! from those maps and uses a truncated transfer-tensor expansion to
//! extrapolate generating functions, cumulants and currents to long times.
//!
//! Module map:
//!
//! * [`linalg`]: dense complex operators, superoperators, Choi forms.
//! * [`fock`] and [`models`]: Fock space, Anderson and resonant-level models.
//! * [`fcsprop`]: exact counting-field propagation on the full space.
//! * [`gaussian`]: free-fermion propagation for quadratic models with large baths.
//! * [`tomography`]: generalized dynamical maps and their diagnostics.
//! * [`transfer`]: transfer tensors, smoothing and truncated propagation.
//! * [`stats`]: generating functions, moments, cumulants, currents.
//! * [`dataset`] and [`pipeline`]: file formats and the experiment runner.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dataset;
pub mod error;
pub mod fcsprop;
pub mod fock;
pub mod gaussian;
pub mod linalg;
pub mod models;
pub mod pipeline;
pub mod selftest;
pub mod stats;
pub mod tomography;
pub mod transfer;

pub use config::{Limits, Tolerances};
pub use error::{Error, Result};
pub use linalg::{ComplexMatrix, SuperOperator, C64};
