//! Fast invariant suite run by the `selftest` subcommand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::TOL;
use crate::error::Result;
use crate::fcsprop::{divisibility_residual, Propagator, TiltedPropagator};
use crate::fock::{anticommutation_violation, jordan_wigner_ops};
use crate::linalg::{
    c64, choi_form, commutator, from_choi, herm_expm, identity, max_abs, max_abs_diff, ComplexMatrix, SuperOperator,
    I, ONE,
};
use crate::models::{build_anderson, AndersonParams};
use crate::tomography::{build_maps_selfdual, check_cptp, DynamicalMap};
use crate::transfer::{propagate_truncated, reconstruct_maps, smooth_maps, tt_from_maps_stationary, tt_norm_series};

/// One invariant: `value` is the measured violation, `tol` its bound.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub tol: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.value <= self.tol
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, d: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(d, d, |_, _| c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

fn random_map(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> SuperOperator {
    let mut m = identity(d * d);
    m += random_matrix(rng, d * d) * c64(scale, 0.0);
    SuperOperator::new(m).expect("square")
}

pub fn run_selftest(seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();
    let mut push = |name, value, tol| checks.push(Check { name, value, tol });

    let built = build_anderson(&AndersonParams::resonant_level(2)?)?;
    let spec = &built.spec;
    let prop = Propagator::new(spec)?;
    let rho = spec.initial_state();
    let dt = 0.05;
    let n_steps = 40;

    let h = &spec.hamiltonian;
    let n_tot = ComplexMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        built.total_number.len(),
        built.total_number.iter().map(|&x| c64(x, 0.0)),
    ));
    push("number conservation", max_abs(&commutator(h, &n_tot)), TOL.structural);

    let ops = jordan_wigner_ops(4)?;
    push("canonical anticommutation", anticommutation_violation(&ops), TOL.structural);

    let herm = {
        let x = random_matrix(&mut rng, 6);
        (&x + x.adjoint()) * c64(0.5, 0.0)
    };
    let t = rng.random_range(0.0..10.0);
    let u = herm_expm(&herm, -I * t)? * herm_expm(&herm, I * t)?;
    push("exponential unitarity", max_abs_diff(&u, &identity(6)), TOL.propagation);

    let s = random_map(&mut rng, 2, 1.0);
    push("choi reshuffle involution", from_choi(&choi_form(&s))?.max_abs_diff(&s), 0.0);

    let mut sandwich_tilted: f64 = 0.0;
    let mut z_zero: f64 = 0.0;
    let mut pairing: f64 = 0.0;
    let mut divisibility: f64 = 0.0;
    for lambda in [0.0, 0.3, 0.6] {
        let tilted = TiltedPropagator::new(spec, lambda)?;
        for t in [0.5, 2.0, 8.0] {
            let a = prop.sandwich(lambda, t, &rho)?;
            let b = tilted.propagate(t, &rho)?;
            sandwich_tilted = sandwich_tilted.max(max_abs_diff(&a, &b));
            let zp = prop.zeta(lambda, t)?.matrix;
            let zm = prop.zeta(-lambda, t)?.matrix;
            pairing = pairing.max(max_abs_diff(&zm, &zp.adjoint()));
            if lambda == 0.0 {
                z_zero = z_zero.max((crate::linalg::trace(&zp) - ONE).norm());
            }
            let s = rng.random_range(0.0..t);
            divisibility = divisibility.max(divisibility_residual(&prop, lambda, t, s, &rho)?);
        }
    }
    push("sandwich and tilted forms agree", sandwich_tilted, TOL.propagation);
    push("normalization at zero field", z_zero, TOL.propagation);
    push("hermiticity pairing", pairing, TOL.propagation);
    push("divisibility", divisibility, TOL.propagation);

    let maps0 = build_maps_selfdual(&prop, 0.0, dt, n_steps)?;
    let cptp = maps0.iter().map(|m| check_cptp(m, 1e-8)).fold(0.0f64, |acc, r| {
        acc.max(-r.min_choi_eigenvalue).max(r.tp_residual)
    });
    push("zero-field maps are CPTP", cptp, 1e-8);

    let maps3 = build_maps_selfdual(&prop, 0.3, dt, n_steps)?;
    let mut exact: f64 = 0.0;
    let mut truncation: f64 = 0.0;
    for maps in [&maps0, &maps3] {
        let f = tt_from_maps_stationary(maps)?;
        for (a, b) in reconstruct_maps(&f, n_steps).iter().zip(maps.iter()) {
            exact = exact.max(a.sup.max_abs_diff(&b.sup));
        }
        let zeta0 = &spec.rho_s0;
        let direct: Vec<ComplexMatrix> =
            std::iter::once(zeta0.clone()).chain(maps.iter().map(|m| m.apply(zeta0))).collect();
        let prop_t = propagate_truncated(&f, &direct[..=n_steps], n_steps)?;
        for (a, b) in prop_t.iter().zip(&direct) {
            truncation = truncation.max(max_abs_diff(a, b));
        }
    }
    push("transfer tensors reproduce their maps", exact, TOL.propagation);
    push("truncated propagation at full memory", truncation, TOL.propagation);

    let one = random_map(&mut rng, 2, 0.1);
    let mut power = SuperOperator::identity(2);
    let markov: Vec<DynamicalMap> = (1..=8)
        .map(|n| {
            power = one.compose(&power);
            DynamicalMap { sup: power.clone(), lambda: 0.0, step: n, dt }
        })
        .collect();
    let f = tt_from_maps_stationary(&markov)?;
    let tail = tt_norm_series(&f).into_iter().skip(1).fold(0.0, f64::max);
    push("markovian families have a single tensor", tail, TOL.structural);

    let constant: Vec<DynamicalMap> =
        (1..=10).map(|n| DynamicalMap { sup: one.clone(), lambda: 0.0, step: n, dt }).collect();
    let smoothed = smooth_maps(&constant, 3)?;
    let dev = smoothed.iter().map(|m| m.sup.max_abs_diff(&one)).fold(0.0, f64::max);
    push("smoothing preserves constant maps", dev, TOL.structural);

    Ok(checks)
}
