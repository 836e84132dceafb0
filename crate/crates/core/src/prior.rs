//! Scalar priors for hyperparameters.

use rand::Rng;
use rand_distr::{Distribution, Gamma as GammaDist, Uniform as UniformDist};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma as GammaCdf};

use crate::error::{Error, Result};
use crate::special::ln_gamma;

/// `Gamma` is parameterized by shape and rate; `InverseGamma { shape, scale }`
/// is the law of `1/X` for `X ~ Gamma(shape, rate = scale)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Prior {
    Gamma { shape: f64, rate: f64 },
    InverseGamma { shape: f64, scale: f64 },
    Uniform { low: f64, high: f64 },
}

impl Prior {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Prior::Gamma { shape, rate } => shape > 0.0 && rate > 0.0,
            Prior::InverseGamma { shape, scale } => shape > 0.0 && scale > 0.0,
            Prior::Uniform { low, high } => low < high && low.is_finite() && high.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid prior {self:?}")))
        }
    }

    pub fn log_density(&self, x: f64) -> f64 {
        match *self {
            Prior::Gamma { shape, rate } => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
            }
            Prior::InverseGamma { shape, scale } => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                shape * scale.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - scale / x
            }
            Prior::Uniform { low, high } => {
                if x <= low || x >= high {
                    f64::NEG_INFINITY
                } else {
                    -(high - low).ln()
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Prior::Gamma { shape, rate } => GammaDist::new(shape, 1.0 / rate)
                .expect("validated prior")
                .sample(rng),
            Prior::InverseGamma { shape, scale } => {
                1.0 / GammaDist::new(shape, 1.0 / scale)
                    .expect("validated prior")
                    .sample(rng)
            }
            Prior::Uniform { low, high } => UniformDist::new(low, high)
                .expect("validated prior")
                .sample(rng),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Prior::Gamma { shape, rate } => {
                GammaCdf::new(shape, rate).expect("validated prior").cdf(x)
            }
            Prior::InverseGamma { shape, scale } => {
                if x <= 0.0 {
                    0.0
                } else {
                    GammaCdf::new(shape, scale).expect("validated prior").sf(1.0 / x)
                }
            }
            Prior::Uniform { low, high } => ((x - low) / (high - low)).clamp(0.0, 1.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn densities_match_closed_forms() {
        let g = Prior::Gamma { shape: 1.0, rate: 1.0 };
        assert!((g.log_density(2.0) + 2.0).abs() < 1e-14);
        let ig = Prior::InverseGamma { shape: 1.0, scale: 4.0 };
        // 4 x^-2 e^{-4/x} at x = 2
        assert!((ig.log_density(2.0) - (4.0f64.ln() - 2.0 * 2.0f64.ln() - 2.0)).abs() < 1e-14);
        assert!((ig.cdf(2.0) - (-2.0f64).exp()).abs() < 1e-14);
        let u = Prior::Uniform { low: 0.0, high: 1.0 };
        assert_eq!(u.log_density(1.5), f64::NEG_INFINITY);
    }
}
