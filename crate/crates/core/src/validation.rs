//! Self-checks of the estimator and the Lévy bounds, shared by the `check`
//! command.

use rand_distr::{Distribution, Exp1};

use crate::diagnostics::{mean_se, variance};
use crate::error::Result;
use crate::estimator::poisson_estimate;
use crate::levy::{tail_mass_by_quadrature, LevySpec, DOMINANCE_SLACK};
use crate::rng::seeded;

/// Sample moments of repeated estimates.
#[derive(Clone, Copy, Debug)]
pub struct FixtureSummary {
    pub mean: f64,
    pub std_error: f64,
    pub variance: f64,
}

/// Estimates of `exp(-∫_0^∞ e^{-x} dx) = e^{-1}` with `κ = Exp(1)`, `C = 1`.
/// The exact variance is `e^{-2}(e^{1/a} - 1)`.
pub fn exponential_fixture(draws: usize, a: f64, seed: u64) -> Result<FixtureSummary> {
    let mut rng = seeded(seed);
    let mut values = Vec::with_capacity(draws);
    for _ in 0..draws {
        let e = poisson_estimate(
            |x: &f64| (-x).exp(),
            |r: &mut _| Exp1.sample(r),
            |x: &f64| (-x).exp(),
            1.0,
            a,
            &mut rng,
        )?;
        values.push(e.value());
    }
    let (mean, std_error) = mean_se(&values);
    Ok(FixtureSummary {
        mean,
        std_error,
        variance: variance(&values),
    })
}

/// `points` log-spaced values from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
        .collect()
}

/// Grid points where the bound fails to dominate the quadrature tail mass
/// beyond rounding.
pub fn dominance_violations(spec: &LevySpec, grid: &[f64]) -> Vec<f64> {
    grid.iter()
        .copied()
        .filter(|&t| t < spec.support_end())
        .filter(|&t| spec.bound_density_unnorm(t) * (1.0 + DOMINANCE_SLACK) < tail_mass_by_quadrature(spec, t))
        .collect()
}

/// The specifications covered by the bound checks.
pub fn reference_specs() -> Vec<(String, LevySpec)> {
    let mut out = vec![];
    for s in [0.1, 0.5] {
        out.push((
            format!("generalized gamma σ={s}"),
            LevySpec::generalized_gamma(s, 1.0).expect("valid"),
        ));
    }
    out.push(("gamma".into(), LevySpec::gamma()));
    for s in [0.1, 0.5] {
        out.push((
            format!("stable beta σ={s}"),
            LevySpec::stable_beta(s, 1.0, 1.0).expect("valid"),
        ));
    }
    for g in [1.0, 2.0] {
        out.push((format!("beta φ={g}"), LevySpec::beta(g).expect("valid")));
    }
    out
}
