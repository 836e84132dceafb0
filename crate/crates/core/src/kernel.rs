//! Conjugate observation kernels and their cluster marginals.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::ln_gamma;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const LN_PI: f64 = 1.144_729_885_849_400_2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum KernelSpec {
    /// `y ~ N(θ, aσ²)`, `θ ~ N(μ, (1-a)σ²)` with `a = mix_fraction`.
    UnivariateNormal {
        mu: f64,
        sigma2: f64,
        mix_fraction: f64,
    },
    /// `y ~ N(μ_k, Σ_k)`, `Σ_k ~ IW(ν, Ψ)`, `μ_k | Σ_k ~ N(μ₀, Σ_k/λ)`.
    MultivariateNormal {
        mu0: Vec<f64>,
        lambda_shrink: f64,
        nu_df: f64,
        psi: Vec<f64>,
    },
}

impl KernelSpec {
    pub fn dim(&self) -> usize {
        match self {
            KernelSpec::UnivariateNormal { .. } => 1,
            KernelSpec::MultivariateNormal { mu0, .. } => mu0.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::UnivariateNormal {
                mu,
                sigma2,
                mix_fraction,
            } => {
                if !mu.is_finite() || !(*sigma2 > 0.0 && sigma2.is_finite()) {
                    return Err(Error::InvalidSpec("kernel needs finite mu and sigma2 > 0".into()));
                }
                if !(*mix_fraction > 0.0 && *mix_fraction < 1.0) {
                    return Err(Error::InvalidSpec("kernel mix fraction must lie in (0, 1)".into()));
                }
            }
            KernelSpec::MultivariateNormal {
                mu0,
                lambda_shrink,
                nu_df,
                psi,
            } => {
                let p = mu0.len();
                if p == 0 || psi.len() != p * p {
                    return Err(Error::InvalidSpec("kernel dimensions are inconsistent".into()));
                }
                if !(*lambda_shrink > 0.0) {
                    return Err(Error::InvalidSpec("lambda_shrink must be positive".into()));
                }
                if !(*nu_df > p as f64 - 1.0) {
                    return Err(Error::InvalidSpec(format!("nu_df must exceed {}", p - 1)));
                }
                let m = DMatrix::from_row_slice(p, p, psi);
                if (&m - m.transpose()).abs().max() > 1e-9 * m.abs().max()
                    || Cholesky::new(m).is_none()
                {
                    return Err(Error::InvalidSpec("psi must be symmetric positive definite".into()));
                }
            }
        }
        Ok(())
    }

    /// Observation and location variances of the univariate kernel.
    fn univariate_parts(&self) -> (f64, f64, f64) {
        match *self {
            KernelSpec::UnivariateNormal {
                mu,
                sigma2,
                mix_fraction,
            } => (mu, mix_fraction * sigma2, (1.0 - mix_fraction) * sigma2),
            _ => unreachable!("univariate kernel expected"),
        }
    }
}

/// Sufficient statistics of a cluster: count, sum and sum of outer products
/// (row-major `p×p`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    pub count: usize,
    pub sum: Vec<f64>,
    pub outer: Vec<f64>,
}

impl ClusterStats {
    pub fn empty(p: usize) -> Self {
        ClusterStats {
            count: 0,
            sum: vec![0.0; p],
            outer: vec![0.0; p * p],
        }
    }

    pub fn from_observations<'a, I: IntoIterator<Item = &'a [f64]>>(p: usize, ys: I) -> Self {
        let mut s = ClusterStats::empty(p);
        for y in ys {
            s.add(y);
        }
        s
    }

    pub fn dim(&self) -> usize {
        self.sum.len()
    }

    pub fn add(&mut self, y: &[f64]) {
        self.shift(y, 1.0);
        self.count += 1;
    }

    pub fn remove(&mut self, y: &[f64]) {
        debug_assert!(self.count > 0);
        self.shift(y, -1.0);
        self.count -= 1;
        if self.count == 0 {
            self.sum.iter_mut().for_each(|v| *v = 0.0);
            self.outer.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    fn shift(&mut self, y: &[f64], sign: f64) {
        let p = self.dim();
        for i in 0..p {
            self.sum[i] += sign * y[i];
            for j in 0..p {
                self.outer[i * p + j] += sign * y[i] * y[j];
            }
        }
    }
}

/// A location drawn from its conjugate posterior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Location {
    Univariate { mean: f64, variance: f64 },
    Multivariate { mean: Vec<f64>, cov: Vec<f64> },
}

impl Location {
    pub fn log_density(&self, y: &[f64]) -> f64 {
        match self {
            Location::Univariate { mean, variance } => {
                let d = y[0] - mean;
                -0.5 * (LN_2PI + variance.ln() + d * d / variance)
            }
            Location::Multivariate { mean, cov } => {
                let p = mean.len();
                let s = DMatrix::from_row_slice(p, p, cov);
                let Some(ch) = Cholesky::new(s) else {
                    return f64::NEG_INFINITY;
                };
                let d = DVector::from_fn(p, |i, _| y[i] - mean[i]);
                let z = ch.l().solve_lower_triangular(&d).expect("nonsingular");
                let log_det: f64 = 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
                -0.5 * (p as f64 * LN_2PI + log_det + z.norm_squared())
            }
        }
    }
}

fn log_multigamma(x: f64, p: usize) -> f64 {
    let mut v = p as f64 * (p as f64 - 1.0) / 4.0 * LN_PI;
    for j in 0..p {
        v += ln_gamma(x - j as f64 / 2.0);
    }
    v
}

/// Posterior normal–inverse-Wishart parameters.
struct NiwPosterior {
    mean: DVector<f64>,
    lambda: f64,
    nu: f64,
    psi: DMatrix<f64>,
}

fn niw_posterior(spec: &KernelSpec, stats: &ClusterStats) -> NiwPosterior {
    let KernelSpec::MultivariateNormal {
        mu0,
        lambda_shrink,
        nu_df,
        psi,
    } = spec
    else {
        unreachable!("multivariate kernel expected")
    };
    let p = mu0.len();
    let n = stats.count as f64;
    let m0 = DVector::from_column_slice(mu0);
    let s = DVector::from_column_slice(&stats.sum);
    let lambda = lambda_shrink + n;
    let mean = (&m0 * *lambda_shrink + &s) / lambda;
    let outer = DMatrix::from_row_slice(p, p, &stats.outer);
    let psi_n = DMatrix::from_row_slice(p, p, psi) + outer + &m0 * m0.transpose() * *lambda_shrink
        - &mean * mean.transpose() * lambda;
    NiwPosterior {
        mean,
        lambda,
        nu: nu_df + n,
        psi: (&psi_n + psi_n.transpose()) * 0.5,
    }
}

fn log_det_spd(m: &DMatrix<f64>) -> f64 {
    match Cholesky::new(m.clone()) {
        Some(ch) => 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>(),
        None => f64::NAN,
    }
}

/// `log q(y^(k))`, the cluster marginal likelihood.
pub fn log_marginal(spec: &KernelSpec, stats: &ClusterStats) -> f64 {
    if stats.count == 0 {
        return 0.0;
    }
    let n = stats.count as f64;
    match spec {
        KernelSpec::UnivariateNormal { .. } => {
            let (mu, s2, t2) = spec.univariate_parts();
            let sum_d = stats.sum[0] - n * mu;
            let sum_d2 = stats.outer[0] - 2.0 * mu * stats.sum[0] + n * mu * mu;
            let quad = sum_d2 - t2 * sum_d * sum_d / (s2 + n * t2);
            -0.5 * n * (LN_2PI + s2.ln()) - 0.5 * (n * t2 / s2).ln_1p() - 0.5 * quad / s2
        }
        KernelSpec::MultivariateNormal {
            lambda_shrink,
            nu_df,
            psi,
            ..
        } => {
            let p = stats.dim();
            let post = niw_posterior(spec, stats);
            let prior_psi = DMatrix::from_row_slice(p, p, psi);
            -0.5 * n * p as f64 * LN_PI + log_multigamma(post.nu / 2.0, p)
                - log_multigamma(nu_df / 2.0, p)
                + 0.5 * nu_df * log_det_spd(&prior_psi)
                - 0.5 * post.nu * log_det_spd(&post.psi)
                + 0.5 * p as f64 * (lambda_shrink.ln() - post.lambda.ln())
        }
    }
}

/// `log q(y^(k) ∪ {y}) - log q(y^(k))`, the log posterior predictive at `y`.
pub fn log_predictive_ratio(spec: &KernelSpec, stats: &ClusterStats, y: &[f64]) -> f64 {
    match spec {
        KernelSpec::UnivariateNormal { .. } => {
            let (mu, s2, t2) = spec.univariate_parts();
            let n = stats.count as f64;
            let prec = 1.0 / t2 + n / s2;
            let mean = (mu / t2 + stats.sum[0] / s2) / prec;
            let var = s2 + 1.0 / prec;
            let d = y[0] - mean;
            -0.5 * (LN_2PI + var.ln() + d * d / var)
        }
        KernelSpec::MultivariateNormal { .. } => {
            let p = stats.dim();
            let post = niw_posterior(spec, stats);
            let df = post.nu - p as f64 + 1.0;
            let scale = &post.psi * ((post.lambda + 1.0) / (post.lambda * df));
            let Some(ch) = Cholesky::new(scale) else {
                return f64::NEG_INFINITY;
            };
            let d = DVector::from_fn(p, |i, _| y[i] - post.mean[i]);
            let z = ch.l().solve_lower_triangular(&d).expect("nonsingular");
            let log_det: f64 = 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            let pf = p as f64;
            ln_gamma((df + pf) / 2.0)
                - ln_gamma(df / 2.0)
                - 0.5 * pf * (df.ln() + LN_PI)
                - 0.5 * log_det
                - 0.5 * (df + pf) * (z.norm_squared() / df).ln_1p()
        }
    }
}

/// Draws a location from its conjugate posterior (the prior when empty).
pub fn sample_location<R: Rng + ?Sized>(
    spec: &KernelSpec,
    stats: &ClusterStats,
    rng: &mut R,
) -> Result<Location> {
    match spec {
        KernelSpec::UnivariateNormal { .. } => {
            let (mu, s2, t2) = spec.univariate_parts();
            let n = stats.count as f64;
            let prec = 1.0 / t2 + n / s2;
            let mean = (mu / t2 + stats.sum[0] / s2) / prec;
            let z: f64 = StandardNormal.sample(rng);
            Ok(Location::Univariate {
                mean: mean + z / prec.sqrt(),
                variance: s2,
            })
        }
        KernelSpec::MultivariateNormal { .. } => {
            let p = stats.dim();
            let post = niw_posterior(spec, stats);
            let cov = sample_inverse_wishart(post.nu, &post.psi, rng)?;
            let ch = Cholesky::new(&cov / post.lambda)
                .ok_or_else(|| Error::Factorization("location covariance".into()))?;
            let z = DVector::from_fn(p, |_, _| StandardNormal.sample(rng));
            let mean = &post.mean + ch.l() * z;
            Ok(Location::Multivariate {
                mean: mean.iter().copied().collect(),
                cov: cov.transpose().iter().copied().collect(),
            })
        }
    }
}

/// `Σ ~ IW(ν, Ψ)` via the Bartlett decomposition of `Σ⁻¹ ~ W(ν, Ψ⁻¹)`.
pub fn sample_inverse_wishart<R: Rng + ?Sized>(
    nu: f64,
    psi: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let p = psi.nrows();
    let psi_inv = psi
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Factorization("scale matrix is singular".into()))?;
    let l = Cholesky::new(psi_inv)
        .ok_or_else(|| Error::Factorization("scale matrix is not positive definite".into()))?
        .l();
    let mut a = DMatrix::zeros(p, p);
    for i in 0..p {
        let chi = ChiSquared::new(nu - i as f64)
            .map_err(|e| Error::Numerical(format!("chi-square: {e}")))?;
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = StandardNormal.sample(rng);
        }
    }
    let la = l * a;
    let w = &la * la.transpose();
    let sigma = w
        .try_inverse()
        .ok_or_else(|| Error::Factorization("Wishart draw is singular".into()))?;
    Ok((&sigma + sigma.transpose()) * 0.5)
}
