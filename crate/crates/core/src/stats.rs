//! Generating functions, moments, cumulants, currents and steady states.

use std::fmt;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{trace, ComplexMatrix, C64, I};
use crate::tomography::{DynamicalMap, NoiseSpec};
use crate::transfer::{tt_from_maps_smoothed, TtFamily};

/// Where a series of generating-function values came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Provenance {
    Exact,
    Reconstructed { cutoff: usize, smoothing: usize, noise: Option<NoiseSpec> },
    Noisy(NoiseSpec),
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Exact => f.write_str("exact"),
            Provenance::Reconstructed { cutoff, smoothing, noise: None } => {
                write!(f, "reconstructed(m={cutoff};N={smoothing})")
            }
            Provenance::Reconstructed { cutoff, smoothing, noise: Some(n) } => {
                write!(f, "reconstructed(m={cutoff};N={smoothing};sigma={:e};seed={})", n.sigma, n.seed)
            }
            Provenance::Noisy(n) => write!(f, "noisy(sigma={:e};seed={})", n.sigma, n.seed),
        }
    }
}

/// `Z_{lambda, t_n}` on a `lambda x t` grid with `t_n = n dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct FcsSeries {
    pub lambdas: Vec<f64>,
    pub dt: f64,
    /// `values[lambda_index][n]`.
    pub values: Vec<Vec<C64>>,
    pub provenance: Provenance,
}

impl FcsSeries {
    pub fn n_times(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_times()).map(|n| n as f64 * self.dt).collect()
    }

    pub fn lambda_index(&self, lambda: f64) -> Option<usize> {
        let scale = lambda.abs().max(1e-300);
        self.lambdas.iter().position(|&l| (l - lambda).abs() <= 1e-12 * scale.max(1.0))
    }

    fn stencil(&self, h: f64) -> Result<[usize; 3]> {
        let find = |l: f64| self.lambda_index(l).ok_or(Error::MissingStencil(l));
        Ok([find(-h)?, find(0.0)?, find(h)?])
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("lambda,t,re_Z,im_Z,provenance\n");
        let prov = self.provenance.to_string();
        for (l, row) in self.lambdas.iter().zip(&self.values) {
            for (n, z) in row.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{},{},{prov}\n",
                    fmt_f64(*l),
                    fmt_f64(n as f64 * self.dt),
                    fmt_f64(z.re),
                    fmt_f64(z.im)
                ));
            }
        }
        write_text(path, &out)
    }
}

/// 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// `Z = Tr zeta` per grid point; `zetas[lambda_index][n]`.
pub fn generating_function(
    lambdas: &[f64],
    dt: f64,
    zetas: &[Vec<ComplexMatrix>],
    provenance: Provenance,
) -> Result<FcsSeries> {
    if zetas.len() != lambdas.len() {
        return Err(Error::DimensionMismatch(format!("{} lambda values, {} zeta series", lambdas.len(), zetas.len())));
    }
    let n = zetas.first().map_or(0, Vec::len);
    if zetas.iter().any(|z| z.len() != n) {
        return Err(Error::DimensionMismatch("zeta series of unequal length".into()));
    }
    Ok(FcsSeries {
        lambdas: lambdas.to_vec(),
        dt,
        values: zetas.iter().map(|s| s.iter().map(trace).collect()).collect(),
        provenance,
    })
}

/// A real series with the discarded imaginary parts kept alongside.
#[derive(Debug, Clone, PartialEq)]
pub struct RealSeries {
    pub values: Vec<f64>,
    pub imag_residue: Vec<f64>,
}

fn derivative(f: [C64; 3], order: usize, h: f64) -> Result<C64> {
    let [fm, f0, fp] = f;
    match order {
        // d/d(i lambda) = -i d/d lambda
        1 => Ok((fp - fm) / (2.0 * h) * (-I)),
        // d^2/d(i lambda)^2 = -d^2/d lambda^2
        2 => Ok(-(fp - 2.0 * f0 + fm) / (h * h)),
        m => Err(Error::InvalidParameter(format!("derivative order {m} not supported (1 or 2)"))),
    }
}

fn split(values: Vec<C64>) -> RealSeries {
    RealSeries { imag_residue: values.iter().map(|z| z.im).collect(), values: values.iter().map(|z| z.re).collect() }
}

/// `<(Delta A)^m>_t` by central differences in `lambda` with step `h`.
pub fn moments_fd(s: &FcsSeries, order: usize, h: f64) -> Result<RealSeries> {
    let [im, i0, ip] = s.stencil(h)?;
    let vals = (0..s.n_times())
        .map(|n| derivative([s.values[im][n], s.values[i0][n], s.values[ip][n]], order, h))
        .collect::<Result<Vec<_>>>()?;
    Ok(split(vals))
}

/// `C^m_t` from central differences of `ln Z`.
pub fn cumulants_fd(s: &FcsSeries, order: usize, h: f64) -> Result<RealSeries> {
    let idx = s.stencil(h)?;
    let mut vals = Vec::with_capacity(s.n_times());
    for n in 0..s.n_times() {
        let mut logs = [C64::new(0.0, 0.0); 3];
        for (slot, &li) in logs.iter_mut().zip(&idx) {
            let z = s.values[li][n];
            if !(z.norm() > 1e-300) || !z.re.is_finite() || !z.im.is_finite() {
                return Err(Error::VanishingGeneratingFunction { lambda: s.lambdas[li], time: n as f64 * s.dt });
            }
            *slot = z.ln();
        }
        vals.push(derivative(logs, order, h)?);
    }
    Ok(split(vals))
}

/// Time series of the left-lead particle current.
#[derive(Debug, Clone, PartialEq)]
pub struct CurrentSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub se: Option<Vec<f64>>,
}

impl CurrentSeries {
    /// Pointwise ensemble mean with the standard error of the mean.
    pub fn ensemble(members: &[CurrentSeries]) -> Result<Self> {
        let first = members.first().ok_or_else(|| Error::SeriesTooShort("empty ensemble".into()))?;
        let n = members.len() as f64;
        let len = first.values.len();
        if members.iter().any(|m| m.values.len() != len) {
            return Err(Error::DimensionMismatch("ensemble members of unequal length".into()));
        }
        let mut values = Vec::with_capacity(len);
        let mut se = Vec::with_capacity(len);
        for i in 0..len {
            let mean = members.iter().map(|m| m.values[i]).sum::<f64>() / n;
            let var = if members.len() > 1 {
                members.iter().map(|m| (m.values[i] - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            values.push(mean);
            se.push((var / n).sqrt());
        }
        Ok(Self { times: first.times.clone(), values, se: Some(se) })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("t,I,se\n");
        for (i, (t, v)) in self.times.iter().zip(&self.values).enumerate() {
            let se = self.se.as_ref().map_or(0.0, |s| s[i]);
            out.push_str(&format!("{},{},{}\n", fmt_f64(*t), fmt_f64(*v), fmt_f64(se)));
        }
        write_text(path, &out)
    }
}

/// `d/dt` on a uniform grid: central in the interior, second-order one-sided at the ends.
pub fn time_derivative(y: &[f64], dt: f64) -> Result<Vec<f64>> {
    let n = y.len();
    if n < 3 {
        return Err(Error::SeriesTooShort(format!("{n} points; a derivative needs at least 3")));
    }
    let mut d = Vec::with_capacity(n);
    d.push((-3.0 * y[0] + 4.0 * y[1] - y[2]) / (2.0 * dt));
    for k in 1..n - 1 {
        d.push((y[k + 1] - y[k - 1]) / (2.0 * dt));
    }
    d.push((3.0 * y[n - 1] - 4.0 * y[n - 2] + y[n - 3]) / (2.0 * dt));
    Ok(d)
}

/// `I = -dC^1/dt`: particles leaving the counted (left) lead per unit time.
pub fn current(c1: &[f64], dt: f64) -> Result<CurrentSeries> {
    let values = time_derivative(c1, dt)?.into_iter().map(|v| -v).collect();
    Ok(CurrentSeries { times: (0..c1.len()).map(|n| n as f64 * dt).collect(), values, se: None })
}

/// Tail-window mean and standard error of the mean over `t >= tail_start`.
pub fn steady_state(c: &CurrentSeries, tail_start: f64) -> Result<(f64, f64)> {
    let slack = c.times.get(1).map_or(0.0, |t1| 1e-9 * (t1 - c.times[0]));
    let tail: Vec<f64> =
        c.times.iter().zip(&c.values).filter(|(t, _)| **t >= tail_start - slack).map(|(_, v)| *v).collect();
    if tail.len() < 10 {
        return Err(Error::SeriesTooShort(format!("tail from t = {tail_start} holds {} points, need 10", tail.len())));
    }
    let n = tail.len() as f64;
    let mean = tail.iter().sum::<f64>() / n;
    let var = tail.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Start of the default tail window: the final eighth of the horizon.
pub fn default_tail_start(horizon: f64) -> f64 {
    0.875 * horizon
}

/// `zeta_n = sum_{k=1}^{min(n, m)} T_k zeta_{n-k}` from `zeta_0` alone.
pub fn propagate_from_initial(f: &TtFamily, zeta0: &ComplexMatrix, n_steps: usize) -> Vec<ComplexMatrix> {
    let d = zeta0.nrows();
    let mut vecs: Vec<ComplexMatrix> = vec![ComplexMatrix::from_row_slice(d * d, 1, zeta0.transpose().as_slice())];
    for n in 1..=n_steps {
        let mut acc = ComplexMatrix::zeros(d * d, 1);
        for k in 1..=n.min(f.cutoff()) {
            acc += f.tensors[k - 1].sup.matrix() * &vecs[n - k];
        }
        vecs.push(acc);
    }
    vecs.into_iter().map(|v| ComplexMatrix::from_row_slice(d, d, v.as_slice())).collect()
}

/// Reconstructed generating function for one cutoff: smoothing, tensor
/// extraction from the first `cutoff` maps, propagation to `n_steps`.
pub fn reconstruct_series(
    maps: &[Vec<DynamicalMap>],
    zeta0: &ComplexMatrix,
    cutoff: usize,
    smoothing: usize,
    n_steps: usize,
    noise: Option<NoiseSpec>,
) -> Result<FcsSeries> {
    let first = maps.first().and_then(|m| m.first()).ok_or_else(|| Error::Incomplete("no maps".into()))?;
    let dt = first.dt;
    let mut lambdas = Vec::with_capacity(maps.len());
    let mut zetas = Vec::with_capacity(maps.len());
    for series in maps {
        if cutoff == 0 || cutoff > series.len() {
            return Err(Error::InsufficientHistory { needed: cutoff.max(1), got: series.len() });
        }
        let f = tt_from_maps_smoothed(&series[..cutoff], smoothing)?;
        lambdas.push(f.lambda);
        zetas.push(propagate_from_initial(&f, zeta0, n_steps));
    }
    generating_function(&lambdas, dt, &zetas, Provenance::Reconstructed { cutoff, smoothing, noise })
}

/// Left current from a series whose grid holds the stencil `{-h, 0, h}`.
pub fn current_from_series(s: &FcsSeries, h: f64) -> Result<CurrentSeries> {
    current(&cumulants_fd(s, 1, h)?.values, s.dt)
}

/// One row of the memory-cutoff sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub t_m: f64,
    pub current: f64,
    pub se: f64,
    /// The propagated generating function vanished on the stencil.
    pub flagged: bool,
}

/// Steady current against memory cutoff. `maps[i]` holds `Lambda_{lambda_i, 1..}`
/// for the stencil `{-h, 0, h}`; cutoffs are in steps.
pub fn cutoff_sweep(
    maps: &[Vec<DynamicalMap>],
    zeta0: &ComplexMatrix,
    h: f64,
    cutoffs: &[usize],
    n_steps: usize,
    smoothing: usize,
    tail_start: f64,
) -> Result<Vec<SweepRow>> {
    use rayon::prelude::*;
    cutoffs
        .par_iter()
        .map(|&m| {
            let s = reconstruct_series(maps, zeta0, m, smoothing, n_steps, None)?;
            let t_m = m as f64 * s.dt;
            match current_from_series(&s, h) {
                Ok(c) => {
                    let (current, se) = steady_state(&c, tail_start)?;
                    Ok(SweepRow { t_m, current, se, flagged: false })
                }
                Err(Error::VanishingGeneratingFunction { .. }) => {
                    Ok(SweepRow { t_m, current: f64::NAN, se: f64::NAN, flagged: true })
                }
                Err(e) => Err(e),
            }
        })
        .collect()
}

pub fn write_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut out = String::from("t_m,inv_t_m,I_ss,se\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", fmt_f64(r.t_m), fmt_f64(1.0 / r.t_m), fmt_f64(r.current), fmt_f64(r.se)));
    }
    write_text(path, &out)
}
