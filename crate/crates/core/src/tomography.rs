//! Generalized dynamical maps from propagated basis inputs.
//!
//! A data point is `L_{beta alpha} = Tr[Y_beta^dag Lambda(X_alpha)] = <<Y_beta|Lambda|X_alpha>>`
//! for input operators `X_alpha` and output operators `Y_beta`. With dual
//! sets `Tr[Xd_a^dag X_b] = delta_ab` the map is
//! `Lambda = sum L_{beta alpha} |Yd_beta>><<Xd_alpha|`.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fcsprop::MapSource;
use crate::linalg::{
    c64, choi_form, from_choi, hermitian_eigenvalues, identity, kron, vectorize, ComplexMatrix, ComplexVector,
    SuperOperator, C64, I, ONE, ZERO,
};

/// `Lambda_{lambda, n}` spanning `t_n = n dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicalMap {
    pub sup: SuperOperator,
    pub lambda: f64,
    pub step: usize,
    pub dt: f64,
}

impl DynamicalMap {
    pub fn identity(d: usize, lambda: f64, dt: f64) -> Self {
        Self { sup: SuperOperator::identity(d), lambda, step: 0, dt }
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }

    pub fn apply(&self, x: &ComplexMatrix) -> ComplexMatrix {
        self.sup.apply(x)
    }
}

/// Operator basis families for tomography.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisKind {
    /// `|mu><nu|`, index `mu d + nu`; self-dual.
    MatrixUnits,
    /// Tensor products of `{I, X, Y, Z}` (d a power of two).
    Pauli,
}

impl fmt::Display for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BasisKind::MatrixUnits => "matrix-units",
            BasisKind::Pauli => "pauli",
        })
    }
}

impl FromStr for BasisKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "matrix-units" => Ok(BasisKind::MatrixUnits),
            "pauli" => Ok(BasisKind::Pauli),
            other => Err(Error::InvalidParameter(format!("unknown basis '{other}'"))),
        }
    }
}

pub fn operator_basis(kind: BasisKind, d: usize) -> Result<Vec<ComplexMatrix>> {
    match kind {
        BasisKind::MatrixUnits => Ok((0..d * d)
            .map(|a| {
                let mut x = ComplexMatrix::zeros(d, d);
                x[(a / d, a % d)] = ONE;
                x
            })
            .collect()),
        BasisKind::Pauli => {
            if !d.is_power_of_two() {
                return Err(Error::InvalidParameter(format!("Pauli basis needs d = 2^k, got {d}")));
            }
            let single = [
                identity(2),
                ComplexMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]),
                ComplexMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]),
                ComplexMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]),
            ];
            let mut basis = vec![identity(1)];
            let mut dim = 1;
            while dim < d {
                basis = basis
                    .iter()
                    .flat_map(|b| single.iter().map(move |p| kron(b, p).expect("small")))
                    .collect();
                dim *= 2;
            }
            Ok(basis)
        }
    }
}

/// Dual set `{Wd_a}` with `Tr[Wd_a^dag W_b] = delta_ab`.
pub fn dual_basis(basis: &[ComplexMatrix]) -> Result<Vec<ComplexMatrix>> {
    let n = basis.len();
    let d = basis.first().map_or(0, |b| b.nrows());
    if n == 0 || n != d * d || basis.iter().any(|b| b.shape() != (d, d)) {
        return Err(Error::DimensionMismatch(format!("need d^2 = {} operators of size {d}x{d}, got {n}", d * d)));
    }
    let cols: Vec<ComplexVector> = basis.iter().map(vectorize).collect();
    let w = ComplexMatrix::from_columns(&cols);
    let gram = w.adjoint() * &w;
    let svals = gram.clone().singular_values();
    let (smax, smin) = svals.iter().fold((0.0f64, f64::INFINITY), |(a, b), &s| (a.max(s), b.min(s)));
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition < 1e12) {
        return Err(Error::SingularBasis { condition });
    }
    let ginv = gram.try_inverse().ok_or(Error::SingularBasis { condition })?;
    let dual = w * ginv;
    Ok((0..n).map(|a| ComplexMatrix::from_fn(d, d, |i, j| dual[(i * d + j, a)])).collect())
}

/// Matrix whose columns are the vectorized operators.
fn column_matrix(ops: &[ComplexMatrix]) -> ComplexMatrix {
    let cols: Vec<ComplexVector> = ops.iter().map(vectorize).collect();
    ComplexMatrix::from_columns(&cols)
}

/// `Lambda_{lambda, n dt}` from the self-dual basis `|mu><nu|`, `sigma_E = rho_E0`.
pub fn build_map_selfdual(prop: &(impl MapSource + ?Sized), lambda: f64, n: usize, dt: f64) -> Result<DynamicalMap> {
    let sup = prop.map_at(lambda, n as f64 * dt)?;
    Ok(DynamicalMap { sup, lambda, step: n, dt })
}

/// Maps for `n = 1..=n_steps`.
pub fn build_maps_selfdual(prop: &(impl MapSource + ?Sized), lambda: f64, dt: f64, n_steps: usize) -> Result<Vec<DynamicalMap>> {
    Ok(prop
        .map_series(lambda, dt, n_steps)?
        .into_iter()
        .enumerate()
        .map(|(i, sup)| DynamicalMap { sup, lambda, step: i + 1, dt })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub seed: u64,
}

/// Tomographic data `L_{lambda, n; beta alpha}` on a `lambda x n` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MapDataset {
    pub preset: String,
    pub d: usize,
    pub input_basis: BasisKind,
    pub output_basis: BasisKind,
    pub lambdas: Vec<f64>,
    pub dt: f64,
    pub n_steps: usize,
    pub noise: Option<NoiseSpec>,
    /// `data[lambda_index][n - 1]` is the `d^2 x d^2` matrix `L_{beta alpha}`.
    pub data: Vec<Vec<ComplexMatrix>>,
}

impl MapDataset {
    /// Data points for already-known maps: `L = Y^dag S X`.
    pub fn from_maps(
        preset: &str,
        maps: &[Vec<DynamicalMap>],
        input_basis: BasisKind,
        output_basis: BasisKind,
    ) -> Result<Self> {
        let first = maps.first().and_then(|m| m.first()).ok_or_else(|| Error::Incomplete("no maps".into()))?;
        let d = first.sup.hilbert_dim();
        let n_steps = maps[0].len();
        let dt = first.dt;
        let x = column_matrix(&operator_basis(input_basis, d)?);
        let y = column_matrix(&operator_basis(output_basis, d)?);
        let mut lambdas = Vec::new();
        let mut data = Vec::new();
        for series in maps {
            if series.len() != n_steps {
                return Err(Error::Incomplete("map series of unequal length".into()));
            }
            lambdas.push(series[0].lambda);
            data.push(
                series
                    .iter()
                    .enumerate()
                    .map(|(i, m)| {
                        if m.step != i + 1 || m.lambda != series[0].lambda {
                            return Err(Error::Incomplete("maps must cover n = 1..N at one lambda".into()));
                        }
                        Ok(y.adjoint() * m.sup.matrix() * &x)
                    })
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        Ok(Self { preset: preset.to_string(), d, input_basis, output_basis, lambdas, dt, n_steps, noise: None, data })
    }

    /// Simulates the complete dataset for a model.
    pub fn simulate(
        preset: &str,
        prop: &(impl MapSource + ?Sized),
        lambdas: &[f64],
        dt: f64,
        n_steps: usize,
        input_basis: BasisKind,
        output_basis: BasisKind,
    ) -> Result<Self> {
        let maps = lambdas
            .par_iter()
            .map(|&l| build_maps_selfdual(prop, l, dt, n_steps))
            .collect::<Result<Vec<_>>>()?;
        Self::from_maps(preset, &maps, input_basis, output_basis)
    }

    pub fn n_records(&self) -> usize {
        self.lambdas.len() * self.n_steps * self.d.pow(4)
    }

    pub fn lambda_index(&self, lambda: f64) -> Option<usize> {
        self.lambdas.iter().position(|&l| l == lambda)
    }

    pub fn validate(&self) -> Result<()> {
        let d2 = self.d * self.d;
        if self.data.len() != self.lambdas.len() {
            return Err(Error::Incomplete(format!(
                "{} lambda values but {} data blocks",
                self.lambdas.len(),
                self.data.len()
            )));
        }
        for (li, series) in self.data.iter().enumerate() {
            if series.len() != self.n_steps {
                return Err(Error::Incomplete(format!(
                    "lambda index {li}: {} of {} time steps",
                    series.len(),
                    self.n_steps
                )));
            }
            if series.iter().any(|m| m.shape() != (d2, d2)) {
                return Err(Error::Incomplete(format!("lambda index {li}: data block is not {d2}x{d2}")));
            }
        }
        if !(self.dt > 0.0) {
            return Err(Error::Incomplete("time step must be positive".into()));
        }
        Ok(())
    }

    /// Adds independent Gaussian noise of standard deviation `sigma` to the
    /// real and imaginary part of every data point.
    pub fn with_noise(&self, sigma: f64, seed: u64) -> Result<Self> {
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidParameter(format!("noise sigma: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = self.clone();
        for series in &mut out.data {
            for m in series.iter_mut() {
                let (rows, cols) = m.shape();
                // record order: beta outer? keep (alpha, beta) order of the file format
                for alpha in 0..cols {
                    for beta in 0..rows {
                        let re = normal.sample(&mut rng);
                        let im = normal.sample(&mut rng);
                        m[(beta, alpha)] += c64(re, im);
                    }
                }
            }
        }
        out.noise = Some(NoiseSpec { sigma, seed });
        Ok(out)
    }
}

/// Reassembles the maps of a dataset through the dual bases.
pub fn build_map_from_dataset(ds: &MapDataset) -> Result<Vec<Vec<DynamicalMap>>> {
    ds.validate()?;
    let xd = column_matrix(&dual_basis(&operator_basis(ds.input_basis, ds.d)?)?);
    let yd = column_matrix(&dual_basis(&operator_basis(ds.output_basis, ds.d)?)?);
    let xd_adj = xd.adjoint();
    let self_dual = ds.input_basis == BasisKind::MatrixUnits && ds.output_basis == BasisKind::MatrixUnits;
    Ok(ds
        .data
        .iter()
        .zip(&ds.lambdas)
        .map(|(series, &lambda)| {
            series
                .iter()
                .enumerate()
                .map(|(i, l)| {
                    let matrix = if self_dual { l.clone() } else { &yd * l * &xd_adj };
                    DynamicalMap { sup: SuperOperator::new(matrix).expect("d^2 x d^2"), lambda, step: i + 1, dt: ds.dt }
                })
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CptpReport {
    pub min_choi_eigenvalue: f64,
    /// `|| <<I| Lambda - <<I| ||_2`.
    pub tp_residual: f64,
    pub completely_positive: bool,
    pub trace_preserving: bool,
}

impl CptpReport {
    pub fn passes(&self) -> bool {
        self.completely_positive && self.trace_preserving
    }
}

/// `<<I| S` as a row of length `d^2`.
pub fn trace_row(s: &SuperOperator) -> Vec<C64> {
    let d = s.hilbert_dim();
    let m = s.matrix();
    (0..d * d).map(|a| (0..d).map(|k| m[(k * d + k, a)]).sum()).collect()
}

fn identity_row(d: usize) -> Vec<C64> {
    (0..d * d).map(|a| if a / d == a % d { ONE } else { ZERO }).collect()
}

/// Complete-positivity and trace-preservation diagnostics.
pub fn check_cptp(map: &DynamicalMap, tol: f64) -> CptpReport {
    let min_choi_eigenvalue = hermitian_eigenvalues(&choi_form(&map.sup))[0];
    let d = map.sup.hilbert_dim();
    let row = trace_row(&map.sup);
    let tp_residual = row.iter().zip(identity_row(d)).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
    CptpReport {
        min_choi_eigenvalue,
        tp_residual,
        completely_positive: min_choi_eigenvalue >= -tol,
        trace_preserving: tp_residual <= tol,
    }
}

/// `|| <<I|Lambda_lambda - <<I| - i lambda (<<A_t| - <<A_0|) ||_2` with the
/// environment-averaged Heisenberg counting operators `a_t`, `a_0`.
pub fn check_first_order_tp(map: &DynamicalMap, a_t: &ComplexMatrix, a_0: &ComplexMatrix, lambda: f64) -> f64 {
    let d = map.sup.hilbert_dim();
    let row = trace_row(&map.sup);
    let id = identity_row(d);
    let vt = vectorize(a_t);
    let v0 = vectorize(a_0);
    row.iter()
        .enumerate()
        .map(|(k, r)| {
            let expected = id[k] + I * lambda * (vt[k].conj() - v0[k].conj());
            (r - expected).norm_sqr()
        })
        .sum::<f64>()
        .sqrt()
}

/// Alternating projection onto completely positive and trace-preserving maps
/// (Choi eigenvalue clipping followed by the affine trace correction).
pub fn project_cptp(map: &DynamicalMap, iterations: usize) -> Result<DynamicalMap> {
    if map.lambda != 0.0 {
        return Err(Error::InvalidParameter("CPTP projection only applies at lambda = 0".into()));
    }
    let d = map.sup.hilbert_dim();
    let mut sup = map.sup.clone();
    for _ in 0..iterations {
        let choi = choi_form(&sup);
        let n = choi.nrows();
        let herm = ComplexMatrix::from_fn(n, n, |i, j| 0.5 * (choi[(i, j)] + choi[(j, i)].conj()));
        let eig = crate::linalg::herm_eig(&herm)?;
        let clipped = eig.map(|e| c64(e.max(0.0), 0.0));
        sup = from_choi(&clipped)?;
        // TP: Tr_out(C) must equal I on the input factor
        let row = trace_row(&sup);
        let id = identity_row(d);
        let mut m = sup.clone().into_matrix();
        for a in 0..d * d {
            let excess = (row[a] - id[a]) / d as f64;
            for k in 0..d {
                m[(k * d + k, a)] -= excess;
            }
        }
        sup = SuperOperator::new(m)?;
    }
    Ok(DynamicalMap { sup, ..map.clone() })
}
