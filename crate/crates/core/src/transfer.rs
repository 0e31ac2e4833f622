//! Transfer tensors, rolling-average smoothing and truncated propagation.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::linalg::{sup_norm_l2, ComplexMatrix, SuperOperator};
use crate::tomography::DynamicalMap;

/// `T_{lambda, n}` spanning `n dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferTensor {
    pub sup: SuperOperator,
    pub lambda: f64,
    pub lag: usize,
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapProvenance {
    Raw,
    Smoothed { window: usize },
}

/// Contiguous tensors `T_1 .. T_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct TtFamily {
    pub tensors: Vec<TransferTensor>,
    pub lambda: f64,
    pub dt: f64,
    pub smoothing: usize,
    pub provenance: MapProvenance,
}

impl TtFamily {
    pub fn cutoff(&self) -> usize {
        self.tensors.len()
    }

    pub fn memory_time(&self) -> f64 {
        self.cutoff() as f64 * self.dt
    }

    pub fn hilbert_dim(&self) -> usize {
        self.tensors[0].sup.hilbert_dim()
    }

    /// Keeps only lags `1..=m`.
    pub fn truncated(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.cutoff() {
            return Err(Error::InsufficientHistory { needed: m.max(1), got: self.cutoff() });
        }
        Ok(Self { tensors: self.tensors[..m].to_vec(), ..self.clone() })
    }
}

fn check_series(maps: &[DynamicalMap]) -> Result<(f64, f64, usize)> {
    let first = maps.first().ok_or_else(|| Error::Incomplete("empty map series".into()))?;
    let d = first.sup.hilbert_dim();
    for (i, m) in maps.iter().enumerate() {
        if m.step != i + 1 {
            return Err(Error::Incomplete(format!("missing lag {} (found step {})", i + 1, m.step)));
        }
        if m.lambda != first.lambda || m.dt != first.dt {
            return Err(Error::Incomplete(format!("lag {} has a different counting field or time step", i + 1)));
        }
        if m.sup.hilbert_dim() != d {
            return Err(Error::DimensionMismatch(format!("lag {} acts on dimension {}", i + 1, m.sup.hilbert_dim())));
        }
    }
    Ok((first.lambda, first.dt, d))
}

/// `T_1 = Lambda_1`, `T_n = Lambda_n - sum_{k<n} T_k Lambda_{n-k}`.
pub fn tt_from_maps_stationary(maps: &[DynamicalMap]) -> Result<TtFamily> {
    let (lambda, dt, _) = check_series(maps)?;
    let mut tensors: Vec<TransferTensor> = Vec::with_capacity(maps.len());
    for n in 1..=maps.len() {
        let mut t = maps[n - 1].sup.matrix().clone();
        for k in 1..n {
            t -= tensors[k - 1].sup.matrix() * maps[n - k - 1].sup.matrix();
        }
        tensors.push(TransferTensor { sup: SuperOperator::new(t)?, lambda, lag: n, dt });
    }
    Ok(TtFamily { tensors, lambda, dt, smoothing: 0, provenance: MapProvenance::Raw })
}

/// Two-time maps `Lambda_{t_j : t_k}` on an arbitrary increasing grid.
#[derive(Debug, Clone, Default)]
pub struct GridMaps {
    pub times: Vec<f64>,
    pub maps: BTreeMap<(usize, usize), SuperOperator>,
}

impl GridMaps {
    pub fn new(times: Vec<f64>) -> Self {
        Self { times, maps: BTreeMap::new() }
    }

    pub fn insert(&mut self, j: usize, k: usize, map: SuperOperator) {
        self.maps.insert((j, k), map);
    }

    /// `Lambda_{t_j : t_k}`, with the identity for `j == k`.
    pub fn get(&self, j: usize, k: usize) -> Result<SuperOperator> {
        if j == k {
            let d = self.maps.values().next().map_or(1, |m| m.hilbert_dim());
            return Ok(SuperOperator::identity(d));
        }
        self.maps
            .get(&(j, k))
            .cloned()
            .ok_or_else(|| Error::Incomplete(format!("missing intermediate map ({j}, {k})")))
    }
}

/// General-grid tensors: `out[&(j, n)] = T^(n)_{t_j : t_{j-n}}` for every `n <= j`.
pub fn tt_from_maps_general(grid: &GridMaps) -> Result<BTreeMap<(usize, usize), SuperOperator>> {
    let last = grid.times.len();
    if last < 2 {
        return Err(Error::Incomplete("general grid needs at least two points".into()));
    }
    if grid.times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Incomplete("grid times must increase".into()));
    }
    let mut out: BTreeMap<(usize, usize), SuperOperator> = BTreeMap::new();
    for j in 1..last {
        for n in 1..=j {
            let mut t = grid.get(j, j - n)?.into_matrix();
            for k in 1..n {
                t -= out[&(j, k)].matrix() * grid.get(j - k, j - n)?.matrix();
            }
            out.insert((j, n), SuperOperator::new(t)?);
        }
    }
    Ok(out)
}

/// `Lambda_n = sum_{k=1}^{min(n, m)} T_k Lambda_{n-k}` for `n = 1..=n_max`.
pub fn reconstruct_maps(f: &TtFamily, n_max: usize) -> Vec<DynamicalMap> {
    let d = f.hilbert_dim();
    let mut lam: Vec<ComplexMatrix> = vec![SuperOperator::identity(d).into_matrix()];
    for n in 1..=n_max {
        let mut acc = ComplexMatrix::zeros(d * d, d * d);
        for k in 1..=n.min(f.cutoff()) {
            acc += f.tensors[k - 1].sup.matrix() * &lam[n - k];
        }
        lam.push(acc);
    }
    lam.into_iter()
        .enumerate()
        .skip(1)
        .map(|(n, m)| DynamicalMap { sup: SuperOperator::new(m).expect("square"), lambda: f.lambda, step: n, dt: f.dt })
        .collect()
}

/// Extends `zeta_0 .. zeta_h` (`h >= m`) to `zeta_0 .. zeta_{n_steps}` with
/// `zeta_n = sum_{k=1}^{m} T_k zeta_{n-k}`.
pub fn propagate_truncated(f: &TtFamily, history: &[ComplexMatrix], n_steps: usize) -> Result<Vec<ComplexMatrix>> {
    let m = f.cutoff();
    if history.len() < m + 1 {
        return Err(Error::InsufficientHistory { needed: m + 1, got: history.len() });
    }
    let d = f.hilbert_dim();
    if history.iter().any(|z| z.shape() != (d, d)) {
        return Err(Error::DimensionMismatch(format!("history entries must be {d}x{d}")));
    }
    let mut vecs: Vec<ComplexMatrix> =
        history.iter().map(|z| ComplexMatrix::from_row_iterator(d * d, 1, z.transpose().iter().copied())).collect();
    vecs.truncate(n_steps + 1);
    while vecs.len() <= n_steps {
        let n = vecs.len();
        let mut acc = ComplexMatrix::zeros(d * d, 1);
        for k in 1..=m {
            acc += f.tensors[k - 1].sup.matrix() * &vecs[n - k];
        }
        vecs.push(acc);
    }
    Ok(vecs.into_iter().map(|v| ComplexMatrix::from_row_slice(d, d, v.as_slice())).collect())
}

/// Symmetric rolling mean over lags `n-w ..= n+w`, `w = min(window, n-1, m-n)`,
/// where `m` is the length of the series, so lag 0 never enters a window.
pub fn smooth_maps(maps: &[DynamicalMap], window: usize) -> Result<Vec<DynamicalMap>> {
    check_series(maps)?;
    if window == 0 {
        return Ok(maps.to_vec());
    }
    let m = maps.len();
    Ok((1..=m)
        .map(|n| {
            let w = window.min(n - 1).min(m - n);
            let mut acc = maps[n - w - 1].sup.matrix().clone();
            for k in n - w + 1..=n + w {
                acc += maps[k - 1].sup.matrix();
            }
            acc /= crate::linalg::c64((2 * w + 1) as f64, 0.0);
            DynamicalMap { sup: SuperOperator::new(acc).expect("square"), ..maps[n - 1].clone() }
        })
        .collect())
}

/// Frobenius norm of each tensor, in lag order.
pub fn tt_norm_series(f: &TtFamily) -> Vec<f64> {
    f.tensors.iter().map(|t| sup_norm_l2(&t.sup)).collect()
}

/// Smoothing (if any) then tensor extraction, tagging the provenance.
pub fn tt_from_maps_smoothed(maps: &[DynamicalMap], window: usize) -> Result<TtFamily> {
    let smoothed = smooth_maps(maps, window)?;
    let mut f = tt_from_maps_stationary(&smoothed)?;
    f.smoothing = window;
    if window > 0 {
        f.provenance = MapProvenance::Smoothed { window };
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fcsprop::Propagator;
    use crate::linalg::{c64, max_abs_diff};
    use crate::models::{build_anderson, AndersonParams};
    use crate::tomography::build_maps_selfdual;

    fn resonant_maps(lambda: f64, n: usize) -> (Vec<DynamicalMap>, Vec<ComplexMatrix>) {
        let m = build_anderson(&AndersonParams::resonant_level(2).unwrap()).unwrap().spec;
        let prop = Propagator::new(&m).unwrap();
        let maps = build_maps_selfdual(&prop, lambda, 0.05, n).unwrap();
        let zetas = prop
            .zeta_series(lambda, 0.05, n)
            .unwrap()
            .into_iter()
            .map(|z| z.matrix)
            .collect();
        (maps, zetas)
    }

    fn markov_family(n: usize) -> Vec<DynamicalMap> {
        let lam1 = SuperOperator::new(ComplexMatrix::from_fn(4, 4, |i, j| {
            c64(0.2 * ((i * 3 + j) as f64).sin(), 0.1 * ((i + 2 * j) as f64).cos())
        }))
        .unwrap();
        let mut out = Vec::new();
        let mut cur = SuperOperator::identity(2);
        for k in 1..=n {
            cur = lam1.compose(&cur);
            out.push(DynamicalMap { sup: cur.clone(), lambda: 0.4, step: k, dt: 0.1 });
        }
        out
    }

    #[test]
    fn single_map_family() {
        let maps = markov_family(1);
        let f = tt_from_maps_stationary(&maps).unwrap();
        assert_eq!(f.cutoff(), 1);
        assert_eq!(f.tensors[0].sup, maps[0].sup);
        assert_eq!(tt_norm_series(&f)[0], sup_norm_l2(&maps[0].sup));
    }

    #[test]
    fn markovian_family_collapses() {
        let maps = markov_family(12);
        let f = tt_from_maps_stationary(&maps).unwrap();
        for t in &f.tensors[1..] {
            assert!(sup_norm_l2(&t.sup) < 1e-12);
        }
        let rebuilt = reconstruct_maps(&f.truncated(1).unwrap(), 12);
        for (a, b) in rebuilt.iter().zip(&maps) {
            assert!(a.sup.max_abs_diff(&b.sup) < 1e-12);
        }
    }

    #[test]
    fn exact_identity_and_propagation() {
        for lambda in [0.0, 0.3] {
            let (maps, zetas) = resonant_maps(lambda, 40);
            let f = tt_from_maps_stationary(&maps).unwrap();
            for (a, b) in reconstruct_maps(&f, 40).iter().zip(&maps) {
                assert!(a.sup.max_abs_diff(&b.sup) < 1e-10);
            }
            let prop = propagate_truncated(&f, &zetas[..41], 40).unwrap();
            for (a, b) in prop.iter().zip(&zetas) {
                assert!(max_abs_diff(a, b) < 1e-10);
            }
            let from_start = propagate_truncated(&f, &zetas[..1], 40);
            assert!(matches!(from_start, Err(Error::InsufficientHistory { .. })));
        }
    }

    #[test]
    fn lambda_free_recursion_oracle() {
        // independent two- and three-lag expansion on ordinary density matrices
        let (maps, _) = resonant_maps(0.0, 3);
        let f = tt_from_maps_stationary(&maps).unwrap();
        let (l1, l2, l3) = (maps[0].sup.matrix(), maps[1].sup.matrix(), maps[2].sup.matrix());
        let t2 = l2 - l1 * l1;
        let t3 = l3 - l1 * l2 - &t2 * l1;
        assert!(max_abs_diff(f.tensors[1].sup.matrix(), &t2) < 1e-12);
        assert!(max_abs_diff(f.tensors[2].sup.matrix(), &t3) < 1e-12);
    }

    #[test]
    fn missing_lag_is_reported() {
        let mut maps = markov_family(4);
        maps.remove(2);
        assert!(matches!(tt_from_maps_stationary(&maps), Err(Error::Incomplete(_))));
    }

    #[test]
    fn general_grid_cases() {
        let m = build_anderson(&AndersonParams::resonant_level(2).unwrap()).unwrap().spec;
        let prop = Propagator::new(&m).unwrap();
        let lambda = 0.3;
        // two points
        let mut g = GridMaps::new(vec![0.0, 0.3]);
        g.insert(1, 0, prop.map_at(lambda, 0.3).unwrap());
        let t = tt_from_maps_general(&g).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[&(1, 1)], g.get(1, 0).unwrap());

        // nonuniform 4-point grid
        let times = vec![0.0, 0.1, 0.35, 0.5];
        let mut g = GridMaps::new(times.clone());
        for j in 0..4 {
            for k in 0..j {
                g.insert(j, k, prop.map_at(lambda, times[j] - times[k]).unwrap());
            }
        }
        let t = tt_from_maps_general(&g).unwrap();
        for j in 1..4 {
            for n in 1..=j {
                let mut sum = ComplexMatrix::zeros(4, 4);
                for k in 1..=n {
                    sum += t[&(j, k)].matrix() * g.get(j - k, j - n).unwrap().matrix();
                }
                assert!(max_abs_diff(&sum, g.get(j, j - n).unwrap().matrix()) < 1e-10);
            }
        }

        // uniform grid, stationary maps
        let (maps, _) = resonant_maps(lambda, 5);
        let mut g = GridMaps::new((0..6).map(|k| k as f64 * 0.05).collect());
        for j in 0..6 {
            for k in 0..j {
                g.insert(j, k, maps[j - k - 1].sup.clone());
            }
        }
        let t = tt_from_maps_general(&g).unwrap();
        let f = tt_from_maps_stationary(&maps).unwrap();
        for n in 1..=5 {
            assert!(t[&(5, n)].max_abs_diff(&f.tensors[n - 1].sup) < 1e-12);
        }
        g.maps.remove(&(3, 1));
        assert!(matches!(tt_from_maps_general(&g), Err(Error::Incomplete(_))));
    }

    #[test]
    fn smoothing_cases() {
        let maps = markov_family(10);
        assert_eq!(smooth_maps(&maps, 0).unwrap(), maps);
        let constant: Vec<_> = (1..=10).map(|n| DynamicalMap { step: n, ..maps[0].clone() }).collect();
        for (a, b) in smooth_maps(&constant, 6).unwrap().iter().zip(&constant) {
            assert!(a.sup.max_abs_diff(&b.sup) < 1e-15);
        }
        // windows shrink at both ends: w = min(N, n-1, m-n) in zero-based lag terms
        let s = smooth_maps(&maps, 2).unwrap();
        assert_eq!(s[0].sup, maps[0].sup);
        assert_eq!(s[9].sup, maps[9].sup);
        let mut mean = maps[0].sup.matrix() + maps[1].sup.matrix() + maps[2].sup.matrix();
        mean /= c64(3.0, 0.0);
        assert!(max_abs_diff(s[1].sup.matrix(), &mean) < 1e-15);
    }
}
