//! Unbiased Poisson estimation of `exp(-∫φ)` and of the Laplace functional
//! of the compound random measure.
//!
//! For a density `κ` and a constant `C ≥ sup φ/κ`, drawing `K ~ Poisson(aC)`
//! points from `κ` and forming `∏ (1 - φ(x)/(aCκ(x)))` gives an unbiased,
//! strictly positive estimate of `exp(-∫φ)` whose variance is
//! `L²(exp{∫φ²/κ / (aC)} - 1)`.
//!
//! The functional factorizes over sites. For site `u` with total latent weight
//! `w_u` the points are `(z, m*)` with `z` from the normalized Lévy bound and
//! `m*` size-biased at `u`; after cancellation each factor is
//! `1 - exp(-z Σ w m*) T(z) / (a κ̃(z))`.

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::levy::{LevySpec, DOMINANCE_SLACK};
use crate::parallel::Execution;
use crate::rng::substream;
use crate::score::ScoreModel;

/// Default Poisson oversampling factor.
pub const DEFAULT_A: f64 = 8.0;

/// Once `z Σ w m* ` passes this, `exp(-zS)/a` is below the resolution of the
/// accumulated log estimate and the rest of the walk cannot change it.
const NEGLIGIBLE: f64 = 45.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Component {
    Site(usize),
    Total,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoissonEstimate {
    pub log_value: f64,
    pub a: f64,
    pub c: f64,
    pub k_drawn: usize,
    pub component: Component,
}

impl PoissonEstimate {
    pub fn value(&self) -> f64 {
        self.log_value.exp()
    }

    fn empty(a: f64, component: Component) -> Self {
        PoissonEstimate {
            log_value: 0.0,
            a,
            c: 0.0,
            k_drawn: 0,
            component,
        }
    }
}

fn check_a(a: f64) -> Result<()> {
    if !(a > 1.0 && a.is_finite()) {
        return Err(Error::InvalidSpec(format!("oversampling factor a must exceed 1, got {a}")));
    }
    Ok(())
}

fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<usize> {
    if mean <= 0.0 {
        return Ok(0);
    }
    let d = Poisson::new(mean)
        .map_err(|e| Error::Numerical(format!("Poisson mean {mean}: {e}")))?;
    Ok(d.sample(rng) as usize)
}

/// Generic estimator of `exp(-∫φ)` with proposal density `κ`.
pub fn poisson_estimate<X, R, S, Phi, Kappa>(
    phi: Phi,
    mut sample: S,
    density: Kappa,
    c: f64,
    a: f64,
    rng: &mut R,
) -> Result<PoissonEstimate>
where
    R: Rng + ?Sized,
    S: FnMut(&mut R) -> X,
    Phi: Fn(&X) -> f64,
    Kappa: Fn(&X) -> f64,
{
    check_a(a)?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidSpec(format!("bounding constant must be positive, got {c}")));
    }
    let k = poisson_count(a * c, rng)?;
    let mut log_value = 0.0;
    for _ in 0..k {
        let x = sample(rng);
        let ratio = phi(&x) / (c * density(&x));
        if ratio > 1.0 {
            return Err(Error::DominanceViolated {
                ratio,
                location: f64::NAN,
            });
        }
        log_value += (-ratio / a).ln_1p();
    }
    Ok(PoissonEstimate {
        log_value,
        a,
        c,
        k_drawn: k,
        component: Component::Total,
    })
}

/// Monte Carlo estimate of the noise variance `(1/(aC)) ∫ φ²/κ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseVariance {
    pub value: f64,
    pub std_error: f64,
    pub a: f64,
}

pub fn noise_variance<X, R, S, Phi, Kappa>(
    phi: Phi,
    mut sample: S,
    density: Kappa,
    c: f64,
    a: f64,
    draws: usize,
    rng: &mut R,
) -> Result<NoiseVariance>
where
    R: Rng + ?Sized,
    S: FnMut(&mut R) -> X,
    Phi: Fn(&X) -> f64,
    Kappa: Fn(&X) -> f64,
{
    check_a(a)?;
    if draws < 2 {
        return Err(Error::InvalidSpec("noise variance needs at least two draws".into()));
    }
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..draws {
        let x = sample(rng);
        let f = phi(&x);
        let t = f * f / (density(&x) * density(&x));
        sum += t;
        sum_sq += t * t;
    }
    let n = draws as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    let scale = 1.0 / (a * c);
    Ok(NoiseVariance {
        value: mean * scale,
        std_error: (var / n).sqrt() * scale,
        a,
    })
}

/// The `a` that brings a measured noise variance to `target`.
pub fn tune_a(measured: &NoiseVariance, target: f64) -> Result<f64> {
    if !(target > 0.0) {
        return Err(Error::InvalidSpec("target noise variance must be positive".into()));
    }
    Ok(measured.value * measured.a / target)
}

/// Everything the site estimator needs besides the randomness.
#[derive(Clone, Debug)]
pub struct LaplaceProblem<'a> {
    pub levy: &'a LevySpec,
    pub score: &'a ScoreModel,
    /// `w_u`: sum of latent `v` over observations at each site.
    pub weights: &'a [f64],
    /// Total mass `M`.
    pub mass: f64,
    pub a: f64,
    /// Normalizer of the Lévy bound.
    pub bound_normalizer: f64,
}

impl<'a> LaplaceProblem<'a> {
    pub fn new(
        levy: &'a LevySpec,
        score: &'a ScoreModel,
        weights: &'a [f64],
        mass: f64,
        a: f64,
    ) -> Result<Self> {
        check_a(a)?;
        if weights.len() != score.dim() {
            return Err(Error::Domain(format!(
                "{} site weights for {} sites",
                weights.len(),
                score.dim()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::Domain("site weights must be nonnegative".into()));
        }
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::Domain(format!("total mass must be positive, got {mass}")));
        }
        Ok(LaplaceProblem {
            levy,
            score,
            weights,
            mass,
            a,
            bound_normalizer: levy.bound_normalizer(),
        })
    }

    /// Bounding constant for site `u`.
    pub fn bound(&self, u: usize) -> f64 {
        self.mass * self.weights[u] * self.score.mean_score(u) * self.bound_normalizer
    }

    /// Estimate of the site-`u` factor of the Laplace functional.
    pub fn estimate_site<R: Rng + ?Sized>(&self, u: usize, rng: &mut R) -> Result<PoissonEstimate> {
        let c = self.bound(u);
        if c == 0.0 {
            return Ok(PoissonEstimate::empty(self.a, Component::Site(u)));
        }
        let k = poisson_count(self.a * c, rng)?;
        let mut log_value = 0.0;
        for _ in 0..k {
            let z = self.levy.sample_bound_density(rng)?;
            let bound = self.levy.bound_density_unnorm(z);
            let tail = self.levy.tail_mass(z);
            if tail > bound * (1.0 + DOMINANCE_SLACK) {
                return Err(Error::DominanceViolated {
                    ratio: tail / bound,
                    location: z,
                });
            }
            let s = self
                .score
                .size_biased_weighted_sum(u, self.weights, NEGLIGIBLE / z, rng);
            let ratio = (-z * s).exp() * tail / bound;
            log_value += (-ratio / self.a).ln_1p();
        }
        Ok(PoissonEstimate {
            log_value,
            a: self.a,
            c,
            k_drawn: k,
            component: Component::Site(u),
        })
    }

    /// Draw of the site-`u` estimate from its law tilted by the estimate
    /// itself, `q(U) L̂(U) / L`. Tilting a Poisson process by a product of
    /// per-point factors thins it, so each proposed point is kept with
    /// probability equal to its factor.
    pub fn estimate_site_tilted<R: Rng + ?Sized>(&self, u: usize, rng: &mut R) -> Result<f64> {
        let c = self.bound(u);
        if c == 0.0 {
            return Ok(0.0);
        }
        let k = poisson_count(self.a * c, rng)?;
        let mut log_value = 0.0;
        for _ in 0..k {
            let z = self.levy.sample_bound_density(rng)?;
            let ratio_bound = self.levy.tail_mass(z) / self.levy.bound_density_unnorm(z);
            let s = self
                .score
                .size_biased_weighted_sum(u, self.weights, NEGLIGIBLE / z, rng);
            let factor = (-(-z * s).exp() * ratio_bound / self.a).ln_1p();
            let keep: f64 = rng.random();
            if keep < factor.exp() {
                log_value += factor;
            }
        }
        Ok(log_value)
    }

    /// All site estimates, each from its own substream of `seed`.
    pub fn estimate_sites(&self, seed: u64, exec: Execution) -> Result<Vec<PoissonEstimate>> {
        exec.map_indexed(self.score.dim(), |u| {
            self.estimate_site(u, &mut substream(seed, u as u64))
        })
        .into_iter()
        .collect()
    }

    /// Product of the site estimates.
    pub fn estimate(&self, seed: u64, exec: Execution) -> Result<PoissonEstimate> {
        let parts = self.estimate_sites(seed, exec)?;
        Ok(combine(&parts, self.a))
    }
}

/// Combines independent component estimates into their product.
pub fn combine(parts: &[PoissonEstimate], a: f64) -> PoissonEstimate {
    PoissonEstimate {
        log_value: parts.iter().map(|p| p.log_value).sum(),
        a,
        c: parts.iter().map(|p| p.c).sum(),
        k_drawn: parts.iter().map(|p| p.k_drawn).sum(),
        component: Component::Total,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::score::{Location, ScoreParams};
    use rand_distr::Exp1;
    use std::sync::Arc;

    #[test]
    fn zero_phi_gives_one() {
        let mut rng = seeded(1);
        let e = poisson_estimate(
            |_: &f64| 0.0,
            |r: &mut _| Exp1.sample(r),
            |x: &f64| (-x).exp(),
            1.0,
            8.0,
            &mut rng,
        )
        .unwrap();
        assert_eq!(e.log_value, 0.0);
    }

    #[test]
    fn dominance_violation_is_an_error() {
        let mut rng = seeded(2);
        let err = poisson_estimate(
            |_: &f64| 10.0,
            |r: &mut _| Exp1.sample(r),
            |x: &f64| (-x).exp(),
            1.0,
            8.0,
            &mut rng,
        );
        assert!(matches!(err, Err(Error::DominanceViolated { .. })));
    }

    #[test]
    fn rejects_small_a() {
        let mut rng = seeded(3);
        let r = poisson_estimate(|_: &f64| 0.0, |_: &mut _| 0.0, |_: &f64| 1.0, 1.0, 1.0, &mut rng);
        assert!(r.is_err());
    }

    #[test]
    fn tune_a_is_inverse_proportional() {
        let nv = NoiseVariance {
            value: 0.125,
            std_error: 0.0,
            a: 8.0,
        };
        assert_eq!(tune_a(&nv, 0.125).unwrap(), 8.0);
        assert_eq!(tune_a(&nv, 0.0625).unwrap(), 16.0);
    }

    #[test]
    fn zero_weight_site_is_exactly_one() {
        let levy = LevySpec::gamma();
        let sites = Arc::new(vec![Location::Point(vec![0.0]), Location::Point(vec![1.0])]);
        let score = ScoreModel::new(
            ScoreParams::GaussianProcess {
                variance: 1.0,
                lengthscale: 1.0,
            },
            sites,
        )
        .unwrap();
        let w = [0.0, 0.3];
        let p = LaplaceProblem::new(&levy, &score, &w, 1.0, 8.0).unwrap();
        let parts = p.estimate_sites(4, Execution::Sequential).unwrap();
        assert_eq!(parts[0].log_value, 0.0);
        assert_eq!(parts[0].k_drawn, 0);
        assert!(parts[1].log_value <= 0.0);
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let levy = LevySpec::generalized_gamma(0.3, 1.0).unwrap();
        let xs: Vec<Location> = (0..12).map(|i| Location::Point(vec![i as f64 / 11.0])).collect();
        let score = ScoreModel::new(
            ScoreParams::GaussianProcess {
                variance: 0.8,
                lengthscale: 0.3,
            },
            Arc::new(xs),
        )
        .unwrap();
        let w: Vec<f64> = (0..12).map(|i| 0.05 + 0.02 * i as f64).collect();
        let p = LaplaceProblem::new(&levy, &score, &w, 2.0, 8.0).unwrap();
        let a = p.estimate(99, Execution::Sequential).unwrap();
        let b = p.estimate(99, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }
}
