//! Fermionic Fock space with a Jordan-Wigner ordering.
//!
//! Basis state `s` encodes occupations with mode 0 as the most significant
//! bit, so mode 0 is the leftmost tensor factor. With the impurity modes
//! placed first, the Fock space factorizes as `S (x) E` with
//! `s = s_S * d_E + s_E`.

use crate::config::LIMITS;
use crate::error::{Error, Result};
use crate::linalg::{c64, ComplexMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FockSpace {
    n_modes: usize,
}

impl FockSpace {
    pub fn new(n_modes: usize) -> Result<Self> {
        Self::with_max(n_modes, LIMITS.max_modes)
    }

    pub fn with_max(n_modes: usize, max_modes: usize) -> Result<Self> {
        if n_modes == 0 {
            return Err(Error::InvalidParameter("a Fock space needs at least one mode".into()));
        }
        if n_modes > max_modes {
            return Err(Error::DimensionOverflow { requested: 1usize << n_modes.min(63), max: 1 << max_modes });
        }
        Ok(Self { n_modes })
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn dim(&self) -> usize {
        1 << self.n_modes
    }

    #[inline]
    fn bit(&self, mode: usize) -> usize {
        1 << (self.n_modes - 1 - mode)
    }

    pub fn occupied(&self, state: usize, mode: usize) -> bool {
        state & self.bit(mode) != 0
    }

    pub fn particle_count(&self, state: usize) -> u32 {
        state.count_ones()
    }

    /// Parity of the modes strictly before `mode`.
    fn string_sign(&self, state: usize, mode: usize) -> f64 {
        let mask = !(self.bit(mode) * 2 - 1) & (self.dim() - 1);
        if (state & mask).count_ones().is_multiple_of(2) {
            1.0
        } else {
            -1.0
        }
    }

    /// Dense annihilation operator of `mode`.
    pub fn annihilation(&self, mode: usize) -> ComplexMatrix {
        assert!(mode < self.n_modes);
        let n = self.dim();
        let mut m = ComplexMatrix::zeros(n, n);
        let b = self.bit(mode);
        for s in 0..n {
            if s & b != 0 {
                m[(s ^ b, s)] = c64(self.string_sign(s, mode), 0.0);
            }
        }
        m
    }

    /// Occupations of `mode` per basis state.
    pub fn number_diag(&self, mode: usize) -> Vec<f64> {
        (0..self.dim()).map(|s| if self.occupied(s, mode) { 1.0 } else { 0.0 }).collect()
    }

    /// Total number of particles in `modes` per basis state.
    pub fn count_diag(&self, modes: &[usize]) -> Vec<f64> {
        (0..self.dim())
            .map(|s| modes.iter().filter(|&&m| self.occupied(s, m)).count() as f64)
            .collect()
    }

    /// Adds `coef * c_i^dag c_j` to `h` (for `i != j`), or `coef * n_i` for `i == j`.
    pub fn add_hopping(&self, h: &mut ComplexMatrix, i: usize, j: usize, coef: f64) {
        let n = self.dim();
        let (bi, bj) = (self.bit(i), self.bit(j));
        for s in 0..n {
            if s & bj == 0 {
                continue;
            }
            if i == j {
                h[(s, s)] += c64(coef, 0.0);
                continue;
            }
            let mid = s ^ bj;
            if mid & bi != 0 {
                continue;
            }
            let sign = self.string_sign(s, j) * self.string_sign(mid, i);
            h[(mid ^ bi, s)] += c64(coef * sign, 0.0);
        }
    }

    /// Adds `coef * n_i n_j` to `h`.
    pub fn add_density_density(&self, h: &mut ComplexMatrix, i: usize, j: usize, coef: f64) {
        for s in 0..self.dim() {
            if self.occupied(s, i) && self.occupied(s, j) {
                h[(s, s)] += c64(coef, 0.0);
            }
        }
    }
}

/// Annihilation operators `a_0 .. a_{n-1}` on `n_modes` fermionic modes.
pub fn jordan_wigner_ops(n_modes: usize) -> Result<Vec<ComplexMatrix>> {
    let space = FockSpace::new(n_modes)?;
    Ok((0..n_modes).map(|m| space.annihilation(m)).collect())
}

/// Checks `{a_i, a_j^dag} = delta_ij` and `{a_i, a_j} = 0`; returns the largest violation.
pub fn anticommutation_violation(ops: &[ComplexMatrix]) -> f64 {
    use crate::linalg::{anticommutator, identity, max_abs, max_abs_diff};
    let n = ops.first().map_or(0, |o| o.nrows());
    let id = identity(n);
    let zero = ComplexMatrix::zeros(n, n);
    let mut worst = 0.0f64;
    for (i, a) in ops.iter().enumerate() {
        for (j, b) in ops.iter().enumerate() {
            let mixed = anticommutator(a, &b.adjoint());
            let target = if i == j { &id } else { &zero };
            worst = worst.max(max_abs_diff(&mixed, target));
            worst = worst.max(max_abs(&anticommutator(a, b)));
        }
    }
    worst
}
