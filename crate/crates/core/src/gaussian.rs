//! Free-fermion propagation of the spinless resonant level.
//!
//! Every operator involved is Gaussian, so traces reduce to determinants of
//! single-particle matrices: `Tr[G(x) sigma] = det((1 - F) + F x)` for a
//! thermal `sigma` with occupations `F`. The impurity is mode 0, left-lead
//! levels are modes `1..=n_b`, right-lead levels `n_b+1..=2 n_b`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::fcsprop::MapSource;
use crate::linalg::{c64, ComplexMatrix, ComplexVector, SuperOperator, C64, ONE, ZERO};
use crate::models::{fermi, system_initial_state, AndersonParams};

#[derive(Debug, Clone)]
pub struct GaussianResonantLevel {
    params: AndersonParams,
    values: DVector<f64>,
    vectors: DMatrix<f64>,
    /// 1 on counted (left) modes.
    counted: Vec<f64>,
    /// Initial occupations of the environment; 1/2 on the impurity slot.
    occupations: Vec<f64>,
    rho_s0: ComplexMatrix,
}

impl GaussianResonantLevel {
    pub fn new(params: &AndersonParams) -> Result<Self> {
        if params.spinful || params.u != 0.0 {
            return Err(Error::InvalidParameter("the free-fermion engine needs a spinless level with U = 0".into()));
        }
        let nb = params.bath.levels_per_lead;
        let m = 1 + 2 * nb;
        let mut h = DMatrix::<f64>::zeros(m, m);
        h[(0, 0)] = params.epsilon;
        let mut counted = vec![0.0; m];
        let mut occupations = vec![0.5; m];
        for (lead, mu) in [(0, params.mu_left()), (1, params.mu_right())] {
            for k in 0..nb {
                let i = 1 + lead * nb + k;
                h[(i, i)] = params.bath.energies[k];
                h[(0, i)] = params.bath.couplings[k];
                h[(i, 0)] = params.bath.couplings[k];
                occupations[i] = fermi(params.bath.energies[k], mu, params.beta);
                if lead == 0 {
                    counted[i] = 1.0;
                }
            }
        }
        let eig = SymmetricEigen::new(h);
        let rho_s0 = system_initial_state(params.initial, false)?;
        if rho_s0[(0, 1)] != ZERO {
            return Err(Error::Contract("initial impurity state must be diagonal".into()));
        }
        Ok(Self { params: params.clone(), values: eig.eigenvalues, vectors: eig.eigenvectors, counted, occupations, rho_s0 })
    }

    pub fn params(&self) -> &AndersonParams {
        &self.params
    }

    pub fn n_single_particle(&self) -> usize {
        self.values.len()
    }

    /// `u = exp(-i h t)`.
    pub fn single_particle_propagator(&self, t: f64) -> ComplexMatrix {
        let m = self.n_single_particle();
        let v = &self.vectors;
        let phases: Vec<C64> = self.values.iter().map(|e| c64(0.0, -e * t).exp()).collect();
        let left = ComplexMatrix::from_fn(m, m, |i, p| phases[p] * v[(i, p)]);
        let right = ComplexMatrix::from_fn(m, m, |p, j| c64(v[(j, p)], 0.0));
        left * right
    }

    /// `<c_i^dag c_i>(t)` under ordinary evolution.
    pub fn occupations_at(&self, t: f64) -> Vec<f64> {
        let u = self.single_particle_propagator(t);
        let n0 = self.rho_s0[(1, 1)].re;
        let m = self.n_single_particle();
        (0..m)
            .map(|i| (0..m).map(|l| u[(i, l)].norm_sqr() * if l == 0 { n0 } else { self.occupations[l] }).sum())
            .collect()
    }

    pub fn map_at(&self, lambda: f64, t: f64) -> Result<SuperOperator> {
        let m = self.n_single_particle();
        let u = self.single_particle_propagator(t);
        let phase: Vec<C64> = self.counted.iter().map(|a| c64(0.0, lambda * a).exp()).collect();
        // k = e^{i lambda a} u e^{-i lambda a}, w = u^dag k
        let k = ComplexMatrix::from_fn(m, m, |i, j| phase[i] * u[(i, j)] * phase[j].conj());
        let u_adj = u.adjoint();
        let w = &u_adj * &k;
        let f = &self.occupations;

        let m1 = ComplexMatrix::from_fn(m, m, |i, j| {
            let diag = if i == j { ONE - f[i] } else { ZERO };
            diag + f[i] * w[(i, j)]
        });
        let lu1 = m1.lu();
        let det1 = lu1.determinant();
        if !(det1.norm() > 0.0) {
            return Err(Error::Contract(format!("singular propagator determinant at t = {t}")));
        }
        let minus_f = |col: ComplexVector| ComplexVector::from_fn(m, |i, _| -f[i] * col[i]);
        let y1 = lu1.solve(&minus_f(w.column(0).into_owned())).expect("nonsingular");
        let y2 = lu1.solve(&minus_f(u_adj.column(0).into_owned())).expect("nonsingular");
        let row = k.row(0);
        let r_full_y2: C64 = (0..m).map(|j| row[j] * y2[j]).sum();
        let r_y1: C64 = (1..m).map(|j| row[j] * y1[j]).sum();
        let r_y2: C64 = (1..m).map(|j| row[j] * y2[j]).sum();
        let t_ii = 2.0 * det1;
        let t_i_p0 = t_ii * (ONE + y1[0]);
        let t_p0_i = t_ii * (ONE + r_full_y2);
        let t_p0_p0 = t_ii * ((ONE + y1[0]) * (ONE + r_y2) - y2[0] * r_y1);

        let m2 = ComplexMatrix::from_fn(m, m, |i, j| {
            let diag = if i == j { ONE - f[i] } else { ZERO };
            diag + w[(i, j)] * f[j]
        });
        let lu2 = m2.lu();
        let det2 = lu2.determinant();
        // <1|L(|1><0|)|0> = 2 det [u (1-F) M2^{-1} w]_00
        let z1 = lu2.solve(&w.column(0).into_owned()).expect("nonsingular");
        let c_up: C64 = 2.0 * det2 * (0..m).map(|j| u[(0, j)] * (1.0 - f[j]) * z1[j]).sum::<C64>();
        // <0|L(|0><1|)|1> = 2 det [w^{-1}_{0,:} (I - (1-F) M2^{-1}) conj(u_{0,:})]
        // row 0 of w^{-1} = k^{-1} u = e^{i lambda a} u^dag e^{-i lambda a} u
        let winv_row = ComplexVector::from_fn(m, |l, _| {
            phase[0] * (0..m).map(|j| u[(j, 0)].conj() * phase[j].conj() * u[(j, l)]).sum::<C64>()
        });
        let ubar = ComplexVector::from_fn(m, |j, _| u[(0, j)].conj());
        let z2 = lu2.solve(&ubar).expect("nonsingular");
        let c_down: C64 =
            2.0 * det2 * (0..m).map(|l| winv_row[l] * (ubar[l] - (1.0 - f[l]) * z2[l])).sum::<C64>();

        let mut s = ComplexMatrix::zeros(4, 4);
        s[(0, 0)] = t_p0_p0;
        s[(0, 3)] = t_p0_i - t_p0_p0;
        s[(3, 0)] = t_i_p0 - t_p0_p0;
        s[(3, 3)] = t_ii - t_i_p0 - t_p0_i + t_p0_p0;
        s[(2, 2)] = c_up;
        s[(1, 1)] = c_down;
        SuperOperator::new(s)
    }
}

impl MapSource for GaussianResonantLevel {
    fn hilbert_dim(&self) -> usize {
        2
    }

    fn rho_s0(&self) -> &ComplexMatrix {
        &self.rho_s0
    }

    fn map_at(&self, lambda: f64, t: f64) -> Result<SuperOperator> {
        GaussianResonantLevel::map_at(self, lambda, t)
    }

    fn map_series(&self, lambda: f64, dt: f64, n_steps: usize) -> Result<Vec<SuperOperator>> {
        use rayon::prelude::*;
        (1..=n_steps).into_par_iter().map(|n| self.map_at(lambda, n as f64 * dt)).collect()
    }

    fn left_population(&self, t: f64) -> Result<f64> {
        Ok(self.occupations_at(t).iter().zip(&self.counted).map(|(n, a)| n * a).sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fcsprop::Propagator;
    use crate::models::{build_anderson, InitialState};

    fn pair(n_b: usize, initial: InitialState) -> (GaussianResonantLevel, crate::models::BuiltModel) {
        let mut p = AndersonParams::resonant_level(n_b).unwrap();
        p.initial = initial;
        p.epsilon = 0.7;
        p.beta = 2.0;
        (GaussianResonantLevel::new(&p).unwrap(), build_anderson(&p).unwrap())
    }

    #[test]
    fn matches_dense_engine() {
        for n_b in [1, 2] {
            let (g, dense) = pair(n_b, InitialState::Unoccupied);
            let prop = Propagator::new(&dense.spec).unwrap();
            for lambda in [0.0, 0.3, -0.6, 2.0] {
                for t in [0.0, 0.13, 0.9, 2.5] {
                    let a = g.map_at(lambda, t).unwrap();
                    let b = prop.map_at(lambda, t).unwrap();
                    assert!(a.max_abs_diff(&b) < 1e-10, "n_b {n_b} lambda {lambda} t {t}: {}", a.max_abs_diff(&b));
                }
            }
        }
    }

    #[test]
    fn populations_match_dense_engine() {
        let (g, dense) = pair(2, InitialState::Occupied);
        let prop = Propagator::new(&dense.spec).unwrap();
        for t in [0.0, 0.4, 1.7] {
            let exact = prop.expectation_diag(&dense.spec.counting, t).unwrap();
            assert!((g.left_population(t).unwrap() - exact).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_interacting_or_spinful() {
        assert!(GaussianResonantLevel::new(&AndersonParams::anderson(1).unwrap()).is_err());
    }

    #[test]
    fn large_bath_is_trace_preserving_at_zero_field() {
        let g = GaussianResonantLevel::new(&AndersonParams::resonant_level(80).unwrap()).unwrap();
        let map = g.map_at(0.0, 3.0).unwrap();
        let r = crate::tomography::check_cptp(
            &crate::tomography::DynamicalMap { sup: map, lambda: 0.0, step: 1, dt: 3.0 },
            1e-9,
        );
        assert!(r.passes(), "{r:?}");
    }
}
