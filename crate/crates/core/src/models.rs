//! Finite fermionic impurity models.
//!
//! An impurity (one spinless level or one spinful Anderson site) is coupled to
//! two leads, each discretized into `levels_per_lead` single-particle levels
//! per spin. The counted observable is the total particle number of the left
//! lead. Energies are in units of the coupling scale `gamma`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::TOL;
use crate::error::{Error, Result};
use crate::fock::FockSpace;
use crate::linalg::{
    c64, ensure_hermitian, hermitian_eigenvalues, herm_eig, kron, max_abs, trace, ComplexMatrix,
    TensorFactorization,
};

/// Soft-edged flat band: `gamma / ((1 + e^{nu(w - wc)}) (1 + e^{-nu(w + wc)}))`.
pub fn hybridization(omega: f64, gamma: f64, omega_c: f64, nu: f64) -> f64 {
    gamma / ((1.0 + (nu * (omega - omega_c)).exp()) * (1.0 + (-nu * (omega + omega_c)).exp()))
}

/// Fermi function `1 / (1 + e^{beta (e - mu)})`, stable for large arguments.
pub fn fermi(energy: f64, mu: f64, beta: f64) -> f64 {
    let x = beta * (energy - mu);
    if x > 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BathDiscretization {
    pub gamma: f64,
    pub omega_c: f64,
    pub nu: f64,
    pub levels_per_lead: usize,
    /// Level energies of one lead (both leads share the grid).
    pub energies: Vec<f64>,
    /// Couplings `v_k = sqrt(Gamma(e_k) dw)`.
    pub couplings: Vec<f64>,
    /// Grid spacing `dw`.
    pub spacing: f64,
}

impl BathDiscretization {
    /// Half width of the discretized window, `omega_c + 3 / nu`.
    pub fn half_width(&self) -> f64 {
        self.omega_c + 3.0 / self.nu
    }

    /// Revival time `2 pi / dw` of the finite bath.
    pub fn recurrence_time(&self) -> f64 {
        2.0 * PI / self.spacing
    }

    /// Sum of `v_k^2` over one lead.
    pub fn total_weight(&self) -> f64 {
        self.couplings.iter().map(|v| v * v).sum()
    }
}

/// Midpoint grid of `n_b` cells over `[-(omega_c + 3/nu), omega_c + 3/nu]`.
pub fn discretize_bath(gamma: f64, omega_c: f64, nu: f64, n_b: usize) -> Result<BathDiscretization> {
    if n_b == 0 {
        return Err(Error::InvalidParameter("levels_per_lead must be at least 1".into()));
    }
    if !(gamma > 0.0 && omega_c > 0.0 && nu > 0.0) {
        return Err(Error::InvalidParameter("gamma, omega_c and nu must be positive".into()));
    }
    let half = omega_c + 3.0 / nu;
    let spacing = 2.0 * half / n_b as f64;
    let energies: Vec<f64> = (0..n_b).map(|k| -half + (k as f64 + 0.5) * spacing).collect();
    let couplings = energies
        .iter()
        .map(|&e| (hybridization(e, gamma, omega_c, nu) * spacing).sqrt())
        .collect();
    Ok(BathDiscretization { gamma, omega_c, nu, levels_per_lead: n_b, energies, couplings, spacing })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialState {
    /// Empty impurity.
    Unoccupied,
    /// Single spin-up electron (spinful only).
    Magnetized,
    /// Equal mixture of the singly occupied states.
    HalfFilled,
    /// Fully occupied impurity.
    Occupied,
}

impl FromStr for InitialState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unoccupied" => Ok(Self::Unoccupied),
            "magnetized" => Ok(Self::Magnetized),
            "half-filled" => Ok(Self::HalfFilled),
            "occupied" => Ok(Self::Occupied),
            other => Err(Error::InvalidParameter(format!("unknown initial state '{other}'"))),
        }
    }
}

impl fmt::Display for InitialState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Unoccupied => "unoccupied",
            Self::Magnetized => "magnetized",
            Self::HalfFilled => "half-filled",
            Self::Occupied => "occupied",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AndersonParams {
    pub epsilon: f64,
    pub u: f64,
    pub beta: f64,
    /// Bias `V`; chemical potentials are `+V/2` (left) and `-V/2` (right).
    pub voltage: f64,
    pub bath: BathDiscretization,
    pub spinful: bool,
    pub initial: InitialState,
}

impl AndersonParams {
    /// `Omega_C = 10`, `nu = 10`, `U = 5`, `epsilon = -U/2`, `beta = 10`, `V = 5`
    /// (all in units of `Gamma = 1`), spinful, empty impurity.
    pub fn anderson(levels_per_lead: usize) -> Result<Self> {
        Ok(Self {
            epsilon: -2.5,
            u: 5.0,
            beta: 10.0,
            voltage: 5.0,
            bath: discretize_bath(1.0, 10.0, 10.0, levels_per_lead)?,
            spinful: true,
            initial: InitialState::Unoccupied,
        })
    }

    /// Spinless resonant level at the band centre with the same bath shape.
    pub fn resonant_level(levels_per_lead: usize) -> Result<Self> {
        Ok(Self {
            epsilon: 0.0,
            u: 0.0,
            beta: 10.0,
            voltage: 5.0,
            bath: discretize_bath(1.0, 10.0, 10.0, levels_per_lead)?,
            spinful: false,
            initial: InitialState::Unoccupied,
        })
    }

    pub fn mu_left(&self) -> f64 {
        0.5 * self.voltage
    }

    pub fn mu_right(&self) -> f64 {
        -0.5 * self.voltage
    }

    pub fn n_spin(&self) -> usize {
        if self.spinful {
            2
        } else {
            1
        }
    }

    pub fn n_modes(&self) -> usize {
        self.n_spin() * (1 + 2 * self.bath.levels_per_lead)
    }
}

/// Named parameter sets addressable from configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Spinful Anderson impurity, one level per lead and spin (dim 64).
    Anderson,
    /// Spinless resonant level, two levels per lead (dim 32).
    ResonantLevelSmall,
    /// Spinless resonant level with a dense bath, propagated with
    /// free-fermion methods (see [`crate::gaussian`]).
    ResonantLevelWide,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Anderson, Preset::ResonantLevelSmall, Preset::ResonantLevelWide];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Anderson => "anderson",
            Preset::ResonantLevelSmall => "resonant-level-small",
            Preset::ResonantLevelWide => "resonant-level-wide",
        }
    }

    pub fn params(&self) -> AndersonParams {
        match self {
            Preset::Anderson => AndersonParams::anderson(1),
            Preset::ResonantLevelSmall => AndersonParams::resonant_level(2),
            Preset::ResonantLevelWide => AndersonParams::resonant_level(WIDE_LEVELS_PER_LEAD),
        }
        .expect("preset parameters are valid")
    }

    /// Whether the preset is propagated on the dense many-body space.
    pub fn is_dense(&self) -> bool {
        !matches!(self, Preset::ResonantLevelWide)
    }
}

/// Levels per lead of the `resonant-level-wide` preset.
pub const WIDE_LEVELS_PER_LEAD: usize = 80;

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown model preset '{s}'")))
    }
}

/// Full system (x) environment description with a factorized initial state.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub d_s: usize,
    pub d_e: usize,
    /// Full Hamiltonian on `S (x) E`.
    pub hamiltonian: ComplexMatrix,
    /// Diagonal of the counting operator `A` in the Fock basis.
    pub counting: Vec<f64>,
    pub rho_s0: ComplexMatrix,
    pub rho_e0: ComplexMatrix,
    pub labels: Vec<String>,
}

impl ModelSpec {
    /// Validates Hermiticity, the initial states and `[A, rho_S0 (x) rho_E0] = 0`.
    pub fn new(
        hamiltonian: ComplexMatrix,
        counting: Vec<f64>,
        rho_s0: ComplexMatrix,
        rho_e0: ComplexMatrix,
        labels: Vec<String>,
    ) -> Result<Self> {
        let d_s = rho_s0.nrows();
        let d_e = rho_e0.nrows();
        let n = d_s * d_e;
        if hamiltonian.shape() != (n, n) || counting.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "hamiltonian {:?} and counting operator ({}) must match d_S * d_E = {n}",
                hamiltonian.shape(),
                counting.len()
            )));
        }
        if labels.len() != d_s {
            return Err(Error::DimensionMismatch("one label per system basis state".into()));
        }
        ensure_hermitian(&hamiltonian, TOL.hermitian)?;
        check_density_matrix(&rho_s0, "rho_S0")?;
        check_density_matrix(&rho_e0, "rho_E0")?;
        let spec = Self { d_s, d_e, hamiltonian, counting, rho_s0, rho_e0, labels };
        let comm = spec.counting_commutator_with_initial_state()?;
        if comm > TOL.structural {
            return Err(Error::Contract(format!(
                "counting operator does not commute with the initial state (deviation {comm:e})"
            )));
        }
        Ok(spec)
    }

    pub fn factorization(&self) -> TensorFactorization {
        TensorFactorization { d_s: self.d_s, d_e: self.d_e }
    }

    pub fn dim(&self) -> usize {
        self.d_s * self.d_e
    }

    pub fn initial_state(&self) -> ComplexMatrix {
        kron(&self.rho_s0, &self.rho_e0).expect("model dimension already validated")
    }

    pub fn counting_matrix(&self) -> ComplexMatrix {
        diag_matrix(&self.counting)
    }

    /// `max|[A, rho_S0 (x) rho_E0]|`.
    pub fn counting_commutator_with_initial_state(&self) -> Result<f64> {
        let rho = kron(&self.rho_s0, &self.rho_e0)?;
        let a = &self.counting;
        let mut worst = 0.0f64;
        for i in 0..rho.nrows() {
            for j in 0..rho.ncols() {
                worst = worst.max(((a[i] - a[j]) * rho[(i, j)]).norm());
            }
        }
        Ok(worst)
    }

    /// `I_S (x) sigma` lifted onto the full space with `sigma = rho_E0`.
    pub fn with_initial_system_state(&self, rho_s: ComplexMatrix) -> Result<Self> {
        Self::new(self.hamiltonian.clone(), self.counting.clone(), rho_s, self.rho_e0.clone(), self.labels.clone())
    }
}

fn check_density_matrix(rho: &ComplexMatrix, name: &str) -> Result<()> {
    ensure_hermitian(rho, TOL.hermitian.max(1e-12))
        .map_err(|_| Error::InvalidParameter(format!("{name} is not Hermitian")))?;
    let tr = trace(rho);
    if (tr - c64(1.0, 0.0)).norm() > 1e-10 {
        return Err(Error::InvalidParameter(format!("{name} has trace {tr}")));
    }
    let scale = max_abs(rho).max(1.0);
    let min = hermitian_eigenvalues(rho).first().copied().unwrap_or(0.0);
    if min < -1e-10 * scale {
        return Err(Error::InvalidParameter(format!("{name} is not positive semi-definite (min eig {min:e})")));
    }
    Ok(())
}

pub(crate) fn diag_matrix(d: &[f64]) -> ComplexMatrix {
    let n = d.len();
    let mut m = ComplexMatrix::zeros(n, n);
    for (i, &x) in d.iter().enumerate() {
        m[(i, i)] = c64(x, 0.0);
    }
    m
}

/// Normalized `exp(-beta (h_E - sum_l mu_l N_l))`.
///
/// The exponent is shifted by its smallest eigenvalue, so large `beta` does
/// not overflow.
pub fn thermal_state(
    h_e: &ComplexMatrix,
    beta: f64,
    mu_per_lead: &[f64],
    number_ops: &[ComplexMatrix],
) -> Result<ComplexMatrix> {
    if beta < 0.0 || !beta.is_finite() {
        return Err(Error::InvalidParameter(format!("inverse temperature must be finite and >= 0, got {beta}")));
    }
    if mu_per_lead.len() != number_ops.len() {
        return Err(Error::DimensionMismatch("one chemical potential per lead number operator".into()));
    }
    let mut k = h_e.clone();
    for (mu, n) in mu_per_lead.iter().zip(number_ops) {
        if n.shape() != h_e.shape() {
            return Err(Error::DimensionMismatch("lead number operator shape".into()));
        }
        k -= n * c64(*mu, 0.0);
    }
    let eig = herm_eig(&k)?;
    let e_min = eig.values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut rho = eig.map(|e| c64((-beta * (e - e_min)).exp(), 0.0));
    let z = trace(&rho);
    rho /= z;
    Ok(rho)
}

/// Mode bookkeeping for a built impurity model.
#[derive(Debug, Clone)]
pub struct ModeLayout {
    pub system: Vec<usize>,
    /// `left[k][sigma]`, full-space mode index.
    pub left: Vec<Vec<usize>>,
    pub right: Vec<Vec<usize>>,
    pub n_modes: usize,
}

impl ModeLayout {
    fn new(p: &AndersonParams) -> Self {
        let ns = p.n_spin();
        let nb = p.bath.levels_per_lead;
        let system: Vec<usize> = (0..ns).collect();
        let lead = |offset: usize| -> Vec<Vec<usize>> {
            (0..nb).map(|k| (0..ns).map(|s| offset + k * ns + s).collect()).collect()
        };
        Self { system, left: lead(ns), right: lead(ns + nb * ns), n_modes: ns * (1 + 2 * nb) }
    }

    pub fn left_modes(&self) -> Vec<usize> {
        self.left.iter().flatten().copied().collect()
    }

    pub fn right_modes(&self) -> Vec<usize> {
        self.right.iter().flatten().copied().collect()
    }
}

/// A built model plus the operators needed by oracles and diagnostics.
#[derive(Debug, Clone)]
pub struct BuiltModel {
    pub spec: ModelSpec,
    pub params: AndersonParams,
    pub layout: ModeLayout,
    /// Diagonal of the total particle number.
    pub total_number: Vec<f64>,
    /// Bath-only Hamiltonian on the environment space.
    pub h_env: ComplexMatrix,
}

impl BuiltModel {
    /// Occupation of each impurity mode per full-space basis state.
    pub fn impurity_number_diag(&self, spin: usize) -> Vec<f64> {
        let space = FockSpace::with_max(self.layout.n_modes, usize::MAX).unwrap();
        space.number_diag(self.layout.system[spin])
    }
}

pub fn system_labels(spinful: bool) -> Vec<String> {
    if spinful {
        vec!["0".into(), "dn".into(), "up".into(), "updn".into()]
    } else {
        vec!["0".into(), "1".into()]
    }
}

/// Impurity density matrix for an initial-state label.
pub fn system_initial_state(initial: InitialState, spinful: bool) -> Result<ComplexMatrix> {
    let d = if spinful { 4 } else { 2 };
    let mut rho = ComplexMatrix::zeros(d, d);
    match (initial, spinful) {
        (InitialState::Unoccupied, _) => rho[(0, 0)] = c64(1.0, 0.0),
        (InitialState::Occupied, _) => rho[(d - 1, d - 1)] = c64(1.0, 0.0),
        (InitialState::Magnetized, true) => rho[(2, 2)] = c64(1.0, 0.0),
        (InitialState::Magnetized, false) => {
            return Err(Error::InvalidParameter("a magnetized state needs a spinful impurity".into()))
        }
        (InitialState::HalfFilled, true) => {
            rho[(1, 1)] = c64(0.5, 0.0);
            rho[(2, 2)] = c64(0.5, 0.0);
        }
        (InitialState::HalfFilled, false) => {
            rho[(0, 0)] = c64(0.5, 0.0);
            rho[(1, 1)] = c64(0.5, 0.0);
        }
    }
    Ok(rho)
}

/// Dense Anderson (or spinless resonant-level) model with two discretized leads.
pub fn build_anderson(p: &AndersonParams) -> Result<BuiltModel> {
    let layout = ModeLayout::new(p);
    let full = FockSpace::new(layout.n_modes)?;
    let ns = p.n_spin();
    let n_env = layout.n_modes - ns;
    let env = FockSpace::with_max(n_env, usize::MAX)?;
    let n = full.dim();

    let mut h = ComplexMatrix::zeros(n, n);
    for &d in &layout.system {
        full.add_hopping(&mut h, d, d, p.epsilon);
    }
    if p.spinful && p.u != 0.0 {
        full.add_density_density(&mut h, layout.system[0], layout.system[1], p.u);
    }
    for lead in [&layout.left, &layout.right] {
        for (k, modes) in lead.iter().enumerate() {
            let (e_k, v_k) = (p.bath.energies[k], p.bath.couplings[k]);
            for (s, &m) in modes.iter().enumerate() {
                let d = layout.system[s];
                full.add_hopping(&mut h, m, m, e_k);
                full.add_hopping(&mut h, m, d, v_k);
                full.add_hopping(&mut h, d, m, v_k);
            }
        }
    }

    // environment-only operators: env mode j is full mode j + ns
    let d_e = env.dim();
    let mut h_env = ComplexMatrix::zeros(d_e, d_e);
    let to_env = |m: usize| m - ns;
    for lead in [&layout.left, &layout.right] {
        for (k, modes) in lead.iter().enumerate() {
            for &m in modes {
                env.add_hopping(&mut h_env, to_env(m), to_env(m), p.bath.energies[k]);
            }
        }
    }
    let n_left = diag_matrix(&env.count_diag(&layout.left_modes().into_iter().map(to_env).collect::<Vec<_>>()));
    let n_right = diag_matrix(&env.count_diag(&layout.right_modes().into_iter().map(to_env).collect::<Vec<_>>()));
    let rho_e0 = thermal_state(&h_env, p.beta, &[p.mu_left(), p.mu_right()], &[n_left, n_right])?;
    let rho_s0 = system_initial_state(p.initial, p.spinful)?;

    let counting = full.count_diag(&layout.left_modes());
    let total_number = (0..n).map(|s| full.particle_count(s) as f64).collect();
    let spec = ModelSpec::new(h, counting, rho_s0, rho_e0, system_labels(p.spinful))?;
    Ok(BuiltModel { spec, params: p.clone(), layout, total_number, h_env })
}
