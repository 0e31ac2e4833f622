//! Central numerical tolerances and size limits.

use serde::{Deserialize, Serialize};

/// Tolerances shared by every module.
///
/// `structural` bounds identities that only involve a handful of floating
/// point operations (partial traces, reshuffles, dual pairings);
/// `propagation` bounds identities that pass through eigendecompositions and
/// long products of matrices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub structural: f64,
    pub propagation: f64,
    /// Relative Hermiticity tolerance: `max|M - M^dag| <= hermitian * max|M|`.
    pub hermitian: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { structural: 1e-12, propagation: 1e-10, hermitian: 1e-12 }
    }
}

pub const TOL: Tolerances = Tolerances { structural: 1e-12, propagation: 1e-10, hermitian: 1e-12 };

/// Size limits for dense many-body construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limits {
    /// Largest number of fermionic modes in a dense Fock space.
    pub max_modes: usize,
    /// Largest row/column count of any dense matrix built by [`crate::linalg::kron`].
    pub max_matrix_dim: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self { max_modes: 10, max_matrix_dim: 4096 }
    }
}

pub const LIMITS: Limits = Limits { max_modes: 10, max_matrix_dim: 4096 };
