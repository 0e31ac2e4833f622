//! Exact counting-field propagation on the full system (x) environment space.
//!
//! For a time-independent Hamiltonian `H` and counting operator `A` the
//! modified evolution is
//!
//! ```text
//! Z_{lambda,t}(X) = e^{i lambda A/2} U_t e^{-i lambda A/2} X e^{-i lambda A/2} U_t^dag e^{i lambda A/2}
//! ```
//!
//! with `U_t = e^{-iHt}`. Two independent routes are provided: the sandwich
//! form above, built from one eigendecomposition of `H`, and the tilted form
//! `e^{-i H_lambda t} X e^{i H_{-lambda} t}` with
//! `H_{+-lambda} = e^{+-i lambda A/2} H e^{-+i lambda A/2}`, built from
//! eigendecompositions of the tilted Hamiltonians.
//!
//! `A` is diagonal in the Fock basis, so `e^{i lambda A/2}` is a diagonal
//! phase matrix.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{
    c64, herm_eig, max_abs_diff, partial_trace_env, trace, ComplexMatrix, HermitianEigen, SuperOperator, C64, I,
    ZERO,
};
use crate::models::ModelSpec;

/// Counting field `lambda`, conjugate to the counted particle number.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct CountingField(f64);

impl CountingField {
    pub fn new(lambda: f64) -> Result<Self> {
        if !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!("counting field must be finite, got {lambda}")));
        }
        Ok(Self(lambda))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Generalized density operator `zeta_{lambda,t}` of the system.
#[derive(Debug, Clone)]
pub struct GeneralizedDensityOperator {
    pub matrix: ComplexMatrix,
    pub lambda: f64,
    pub time: f64,
}

impl GeneralizedDensityOperator {
    /// `Z_{lambda,t} = Tr zeta`.
    pub fn generating_value(&self) -> C64 {
        trace(&self.matrix)
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("propagation time must be finite and >= 0, got {t}")));
    }
    Ok(())
}

fn check_full(m: &ModelSpec, x: &ComplexMatrix) -> Result<()> {
    let n = m.dim();
    if x.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!("expected a {n}x{n} full-space operator, got {:?}", x.shape())));
    }
    Ok(())
}

/// `e^{i lambda a / 2}` per basis state.
pub fn counting_phases(counting: &[f64], lambda: f64) -> Vec<C64> {
    counting.iter().map(|&a| (I * (0.5 * lambda * a)).exp()).collect()
}

/// Sandwich-form propagator with a cached eigendecomposition of `H`.
#[derive(Debug, Clone)]
pub struct Propagator<'a> {
    model: &'a ModelSpec,
    eig: HermitianEigen,
}

impl<'a> Propagator<'a> {
    pub fn new(model: &'a ModelSpec) -> Result<Self> {
        Ok(Self { model, eig: herm_eig(&model.hamiltonian)? })
    }

    pub fn model(&self) -> &ModelSpec {
        self.model
    }

    pub fn eigen(&self) -> &HermitianEigen {
        &self.eig
    }

    /// `U_t = e^{-iHt}`.
    pub fn unitary(&self, t: f64) -> ComplexMatrix {
        self.eig.map(|e| (-I * (e * t)).exp())
    }

    /// Left and right factors `(L, R)` of `Z_{lambda,t}(X) = L X R`.
    pub fn factors(&self, lambda: f64, t: f64) -> (ComplexMatrix, ComplexMatrix) {
        let u = self.unitary(t);
        let d = counting_phases(&self.model.counting, lambda);
        let n = u.nrows();
        let left = ComplexMatrix::from_fn(n, n, |i, j| d[i] * u[(i, j)] * d[j].conj());
        let right = ComplexMatrix::from_fn(n, n, |i, j| d[i].conj() * u[(j, i)].conj() * d[j]);
        (left, right)
    }

    /// `Z_{lambda,t}(rho)` on the full space.
    pub fn sandwich(&self, lambda: f64, t: f64, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
        check_time(t)?;
        check_full(self.model, rho)?;
        if t == 0.0 {
            // e^{i lambda A/2} e^{-i lambda A/2} = 1 exactly
            return Ok(rho.clone());
        }
        let (l, r) = self.factors(lambda, t);
        Ok(l * rho * r)
    }

    /// `zeta_{lambda,t} = Tr_E Z_{lambda,t}(rho_S0 (x) rho_E0)`.
    pub fn zeta(&self, lambda: f64, t: f64) -> Result<GeneralizedDensityOperator> {
        let full = self.sandwich(lambda, t, &self.model.initial_state())?;
        Ok(GeneralizedDensityOperator {
            matrix: partial_trace_env(&full, self.model.factorization())?,
            lambda,
            time: t,
        })
    }

    /// `zeta_{lambda, n dt}` for `n = 0..=n_steps`.
    pub fn zeta_series(&self, lambda: f64, dt: f64, n_steps: usize) -> Result<Vec<GeneralizedDensityOperator>> {
        (0..=n_steps).into_par_iter().map(|n| self.zeta(lambda, n as f64 * dt)).collect()
    }

    /// `Tr[O rho(t)]` for a diagonal observable under ordinary evolution.
    pub fn expectation_diag(&self, observable: &[f64], t: f64) -> Result<f64> {
        let rho = self.sandwich(0.0, t, &self.model.initial_state())?;
        Ok(observable.iter().enumerate().map(|(i, o)| o * rho[(i, i)].re).sum())
    }

    /// Generalized dynamical maps `Lambda_{lambda, n dt}` for `n = 1..=n_steps`
    /// with `sigma_E = rho_E0`.
    ///
    /// Works in the eigenbasis of `H`: with `B` and `C` the time-independent
    /// input and output overlaps, each map is
    /// `sum_{kl} C_{kl} e^{-i(E_k - E_l)t} B_{kl}`. Only eigenvector pairs in
    /// coupled invariant blocks are kept.
    pub fn map_series(&self, lambda: f64, dt: f64, n_steps: usize) -> Result<Vec<SuperOperator>> {
        let engine = MapEngine::new(self, lambda)?;
        Ok((1..=n_steps).into_par_iter().map(|n| engine.map_at(n as f64 * dt)).collect())
    }

    /// Single map `Lambda_{lambda,t}`.
    pub fn map_at(&self, lambda: f64, t: f64) -> Result<SuperOperator> {
        check_time(t)?;
        if t == 0.0 {
            return Ok(SuperOperator::identity(self.model.d_s));
        }
        Ok(MapEngine::new(self, lambda)?.map_at(t))
    }
}

/// Anything that can produce generalized dynamical maps of one model.
pub trait MapSource: Sync {
    fn hilbert_dim(&self) -> usize;

    /// Initial impurity state `rho_S0`.
    fn rho_s0(&self) -> &ComplexMatrix;

    fn map_at(&self, lambda: f64, t: f64) -> Result<SuperOperator>;

    /// `Lambda_{lambda, n dt}` for `n = 1..=n_steps`.
    fn map_series(&self, lambda: f64, dt: f64, n_steps: usize) -> Result<Vec<SuperOperator>>;

    /// `Tr[N_L rho(t)]` under ordinary evolution.
    fn left_population(&self, t: f64) -> Result<f64>;
}

impl MapSource for Propagator<'_> {
    fn hilbert_dim(&self) -> usize {
        self.model.d_s
    }

    fn rho_s0(&self) -> &ComplexMatrix {
        &self.model.rho_s0
    }

    fn map_at(&self, lambda: f64, t: f64) -> Result<SuperOperator> {
        Propagator::map_at(self, lambda, t)
    }

    fn map_series(&self, lambda: f64, dt: f64, n_steps: usize) -> Result<Vec<SuperOperator>> {
        Propagator::map_series(self, lambda, dt, n_steps)
    }

    fn left_population(&self, t: f64) -> Result<f64> {
        self.expectation_diag(&self.model.counting, t)
    }
}

/// Precomputed overlaps for the eigenbasis map evaluation.
struct MapEngine {
    d_s: usize,
    /// Energy differences `E_k - E_l` of the retained pairs.
    gaps: Vec<f64>,
    /// `b[p * d2 + alpha]`: input overlap for pair `p`, input `alpha = mu d + nu`.
    b: Vec<C64>,
    /// `c[beta * np + p]`: output overlap for output `beta = mu' d + nu'`.
    c: Vec<C64>,
}

impl MapEngine {
    fn new(prop: &Propagator<'_>, lambda: f64) -> Result<Self> {
        let m = prop.model;
        let (d_s, d_e) = (m.d_s, m.d_e);
        let d2 = d_s * d_s;
        let p_env: Vec<f64> = diagonal_weights(&m.rho_e0)?;
        let phase = counting_phases(&m.counting, lambda);
        let eig = &prop.eig;
        let v = &eig.vectors;
        let nb = eig.blocks.len();
        let mut block_of = vec![0usize; m.dim()];
        for (bi, blk) in eig.blocks.iter().enumerate() {
            for &r in &blk.rows {
                block_of[r] = bi;
            }
        }

        // block pairs reachable from inputs (weighted by sigma_E) and outputs
        let mut input_pairs = vec![false; nb * nb];
        let mut output_pairs = vec![false; nb * nb];
        for mu in 0..d_s {
            for nu in 0..d_s {
                for f in 0..d_e {
                    let pair = block_of[mu * d_e + f] * nb + block_of[nu * d_e + f];
                    output_pairs[pair] = true;
                    if p_env[f] != 0.0 {
                        input_pairs[pair] = true;
                    }
                }
            }
        }

        let mut gaps = Vec::new();
        let mut b = Vec::new();
        let mut cols_c: Vec<Vec<C64>> = vec![Vec::new(); d2];
        for b1 in 0..nb {
            for b2 in 0..nb {
                let pair = b1 * nb + b2;
                if !(input_pairs[pair] && output_pairs[pair]) {
                    continue;
                }
                let (r1, r2) = (&eig.blocks[b1].cols, &eig.blocks[b2].cols);
                let (n1, n2) = (r1.len(), r2.len());
                let mut bb = vec![ZERO; n1 * n2 * d2];
                let mut cc = vec![ZERO; n1 * n2 * d2];
                for mu in 0..d_s {
                    for nu in 0..d_s {
                        let alpha = mu * d_s + nu;
                        for f in 0..d_e {
                            let (i, j) = (mu * d_e + f, nu * d_e + f);
                            if block_of[i] != b1 || block_of[j] != b2 {
                                continue;
                            }
                            // output overlap: D_i V_{i k} conj(D_j V_{j l})... with D_j (not conj)
                            let wc = phase[i] * phase[j];
                            let wb = c64(p_env[f], 0.0) * phase[i].conj() * phase[j].conj();
                            for (a, k) in r1.clone().enumerate() {
                                let vik = v[(i, k)];
                                for (bidx, l) in r2.clone().enumerate() {
                                    let vjl = v[(j, l)];
                                    let slot = (a * n2 + bidx) * d2 + alpha;
                                    cc[slot] += wc * vik * vjl.conj();
                                    if p_env[f] != 0.0 {
                                        bb[slot] += wb * vik.conj() * vjl;
                                    }
                                }
                            }
                        }
                    }
                }
                for (a, k) in r1.clone().enumerate() {
                    for (bidx, l) in r2.clone().enumerate() {
                        let base = (a * n2 + bidx) * d2;
                        let bslice = &bb[base..base + d2];
                        let cslice = &cc[base..base + d2];
                        if bslice.iter().all(|z| *z == ZERO) || cslice.iter().all(|z| *z == ZERO) {
                            continue;
                        }
                        gaps.push(eig.values[k] - eig.values[l]);
                        b.extend_from_slice(bslice);
                        for beta in 0..d2 {
                            cols_c[beta].push(cslice[beta]);
                        }
                    }
                }
            }
        }
        let c = cols_c.into_iter().flatten().collect();
        Ok(Self { d_s, gaps, b, c })
    }

    fn map_at(&self, t: f64) -> SuperOperator {
        let d2 = self.d_s * self.d_s;
        let np = self.gaps.len();
        let mut weighted = vec![ZERO; np * d2];
        for (p, gap) in self.gaps.iter().enumerate() {
            let w = (-I * (gap * t)).exp();
            for alpha in 0..d2 {
                weighted[p * d2 + alpha] = w * self.b[p * d2 + alpha];
            }
        }
        let mut matrix = ComplexMatrix::zeros(d2, d2);
        for beta in 0..d2 {
            let crow = &self.c[beta * np..(beta + 1) * np];
            for alpha in 0..d2 {
                let mut acc = ZERO;
                for p in 0..np {
                    acc += crow[p] * weighted[p * d2 + alpha];
                }
                matrix[(beta, alpha)] = acc;
            }
        }
        SuperOperator::new(matrix).expect("square by construction")
    }
}

/// Diagonal of a density matrix that must be diagonal in the Fock basis.
fn diagonal_weights(rho: &ComplexMatrix) -> Result<Vec<f64>> {
    let n = rho.nrows();
    for i in 0..n {
        for j in 0..n {
            if i != j && rho[(i, j)] != ZERO {
                return Err(Error::InvalidParameter(
                    "eigenbasis map evaluation needs an environment state diagonal in the Fock basis".into(),
                ));
            }
        }
    }
    Ok((0..n).map(|i| rho[(i, i)].re).collect())
}

/// Tilted-Hamiltonian propagator for one counting field.
#[derive(Debug, Clone)]
pub struct TiltedPropagator {
    lambda: f64,
    plus: HermitianEigen,
    minus: HermitianEigen,
}

impl TiltedPropagator {
    pub fn new(model: &ModelSpec, lambda: f64) -> Result<Self> {
        Ok(Self {
            lambda,
            plus: herm_eig(&tilted_hamiltonian(model, lambda))?,
            minus: herm_eig(&tilted_hamiltonian(model, -lambda))?,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `e^{-i H_lambda t} rho e^{i H_{-lambda} t}`.
    pub fn propagate(&self, t: f64, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
        check_time(t)?;
        if rho.shape() != (self.plus.dim(), self.plus.dim()) {
            return Err(Error::DimensionMismatch("operator does not match the model dimension".into()));
        }
        let left = self.plus.map(|e| (-I * (e * t)).exp());
        let right = self.minus.map(|e| (I * (e * t)).exp());
        Ok(left * rho * right)
    }
}

/// `H_lambda = e^{i lambda A/2} H e^{-i lambda A/2}`.
pub fn tilted_hamiltonian(model: &ModelSpec, lambda: f64) -> ComplexMatrix {
    let d = counting_phases(&model.counting, lambda);
    let h = &model.hamiltonian;
    ComplexMatrix::from_fn(h.nrows(), h.ncols(), |i, j| d[i] * h[(i, j)] * d[j].conj())
}

/// Sandwich-form modified propagation of `rho` to time `t`.
pub fn modified_propagate_sandwich(m: &ModelSpec, lambda: f64, t: f64, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
    Propagator::new(m)?.sandwich(lambda, t, rho)
}

/// Tilted-form modified propagation of `rho` to time `t`.
pub fn modified_propagate_tilted(m: &ModelSpec, lambda: f64, t: f64, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
    check_full(m, rho)?;
    TiltedPropagator::new(m, lambda)?.propagate(t, rho)
}

/// Modified generator `-i (H_lambda X - X H_{-lambda})`.
pub fn generator_apply(m: &ModelSpec, lambda: f64, x: &ComplexMatrix) -> Result<ComplexMatrix> {
    check_full(m, x)?;
    let hp = tilted_hamiltonian(m, lambda);
    let hm = tilted_hamiltonian(m, -lambda);
    Ok((&hp * x - x * &hm) * (-I))
}

/// `zeta_{lambda,t}` by full-space propagation and partial trace.
pub fn reduced_zeta(m: &ModelSpec, lambda: f64, t: f64) -> Result<GeneralizedDensityOperator> {
    Propagator::new(m)?.zeta(lambda, t)
}

/// `max|Z_{t:0}(rho) - Z_{t:s}(Z_{s:0}(rho))|` on the full space for `rho`
/// the model's initial state.
pub fn check_divisibility(m: &ModelSpec, lambda: f64, t: f64, s: f64) -> Result<f64> {
    let prop = Propagator::new(m)?;
    divisibility_residual(&prop, lambda, t, s, &m.initial_state())
}

pub fn divisibility_residual(prop: &Propagator<'_>, lambda: f64, t: f64, s: f64, rho: &ComplexMatrix) -> Result<f64> {
    if !(t >= s && s >= 0.0) {
        return Err(Error::InvalidParameter(format!("divisibility needs t >= s >= 0, got t={t}, s={s}")));
    }
    let direct = prop.sandwich(lambda, t, rho)?;
    let mid = prop.sandwich(lambda, s, rho)?;
    let composed = prop.sandwich(lambda, t - s, &mid)?;
    Ok(max_abs_diff(&direct, &composed))
}

/// Environment-averaged Heisenberg counting operator
/// `Tr_E[U_t^dag A U_t (I (x) sigma_E)]` with `sigma_E = rho_E0`.
pub fn heisenberg_counting_reduced(prop: &Propagator<'_>, t: f64) -> Result<ComplexMatrix> {
    let m = prop.model;
    let u = prop.unitary(t);
    let n = m.dim();
    let mut au = u.clone();
    for i in 0..n {
        for j in 0..n {
            au[(i, j)] *= m.counting[i];
        }
    }
    let heis = u.adjoint() * au;
    let sigma = crate::linalg::kron(&crate::linalg::identity(m.d_s), &m.rho_e0)?;
    partial_trace_env(&(heis * sigma), m.factorization())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{identity, kron, max_abs};
    use crate::models::{build_anderson, AndersonParams};

    fn small() -> ModelSpec {
        build_anderson(&AndersonParams::resonant_level(1).unwrap()).unwrap().spec
    }

    #[test]
    fn lambda_zero_is_unitary() {
        let m = small();
        let rho = m.initial_state();
        let out = modified_propagate_sandwich(&m, 0.0, 1.3, &rho).unwrap();
        assert!((trace(&out) - c64(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn time_zero_is_identity_for_commuting_states() {
        let m = small();
        let rho = m.initial_state();
        let out = modified_propagate_sandwich(&m, 0.7, 0.0, &rho).unwrap();
        assert_eq!(out, rho);
        let tilted = modified_propagate_tilted(&m, 0.7, 0.0, &rho).unwrap();
        assert!(max_abs_diff(&tilted, &rho) < 1e-12);
    }

    #[test]
    fn sandwich_matches_tilted() {
        let m = small();
        let rho = m.initial_state();
        for &lambda in &[0.0, 0.3, 0.6, -0.45] {
            for &t in &[0.5, 2.0, 7.9] {
                let a = modified_propagate_sandwich(&m, lambda, t, &rho).unwrap();
                let b = modified_propagate_tilted(&m, lambda, t, &rho).unwrap();
                assert!(max_abs_diff(&a, &b) < 1e-10, "lambda={lambda} t={t}");
            }
        }
    }

    #[test]
    fn conserved_counting_operator_freezes_z() {
        // decoupled leads: [A, H] = 0
        let mut p = AndersonParams::resonant_level(1).unwrap();
        p.bath.couplings.iter_mut().for_each(|v| *v = 0.0);
        let m = build_anderson(&p).unwrap().spec;
        let hl = tilted_hamiltonian(&m, 0.4);
        assert!(max_abs_diff(&hl, &m.hamiltonian) < 1e-15);
        let prop = Propagator::new(&m).unwrap();
        for &t in &[0.0, 1.0, 3.0] {
            let z = prop.zeta(0.4, t).unwrap().generating_value();
            assert!((z - c64(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn generator_special_cases() {
        let m = small();
        let n = m.dim();
        let g = generator_apply(&m, 0.0, &identity(n)).unwrap();
        assert!(max_abs(&g) < 1e-14);
        let x = m.initial_state();
        let g = generator_apply(&m, 0.0, &x).unwrap();
        let expected = crate::linalg::commutator(&m.hamiltonian, &x) * (-I);
        assert!(max_abs_diff(&g, &expected) < 1e-14);
        assert!(generator_apply(&m, 0.0, &identity(3)).is_err());
    }

    #[test]
    fn divisibility_special_cases() {
        let m = small();
        assert_eq!(check_divisibility(&m, 0.6, 1.0, 0.0).unwrap(), 0.0);
        assert!(check_divisibility(&m, 0.0, 2.0, 1.0).unwrap() < 1e-10);
        assert!(check_divisibility(&m, 0.6, 2.0, 1.0).unwrap() < 1e-10);
        assert!(check_divisibility(&m, 0.6, 1.0, 2.0).is_err());
    }

    #[test]
    fn map_engine_matches_full_space_route() {
        for p in [AndersonParams::resonant_level(1).unwrap(), AndersonParams::anderson(1).unwrap()] {
            let m = build_anderson(&p).unwrap().spec;
            let prop = Propagator::new(&m).unwrap();
            let d = m.d_s;
            for &(lambda, t) in &[(0.0, 0.7), (0.3, 1.1), (-0.6, 2.5)] {
                let map = prop.map_at(lambda, t).unwrap();
                for mu in 0..d {
                    for nu in 0..d {
                        let mut x = ComplexMatrix::zeros(d, d);
                        x[(mu, nu)] = c64(1.0, 0.0);
                        let full = kron(&x, &m.rho_e0).unwrap();
                        let out = prop.sandwich(lambda, t, &full).unwrap();
                        let direct = partial_trace_env(&out, m.factorization()).unwrap();
                        assert!(max_abs_diff(&map.apply(&x), &direct) < 1e-11);
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = small();
        assert!(modified_propagate_sandwich(&m, 0.1, -1.0, &m.initial_state()).is_err());
        assert!(modified_propagate_sandwich(&m, 0.1, 1.0, &identity(3)).is_err());
        assert!(CountingField::new(f64::NAN).is_err());
    }
}
