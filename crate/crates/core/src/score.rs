//! Score priors: `m = exp(r)` with `r` a zero-mean Gaussian vector over the
//! distinct regressor locations ("sites").
//!
//! Continuous regressors use an exponential-covariance Gaussian process,
//! `C(x, y) = φ exp(-‖x-y‖/L)`. Categorical regressors use a two-way ANOVA
//! effect model `r = α_row + β_col + γ_cell`, whose induced covariance between
//! two cells is `σ₁²[same row] + σ₂²[same column] + σ₁₂²[same cell]`.
//!
//! One-dimensional GP sites are handled through the Markov (Ornstein–Uhlenbeck)
//! structure of the exponential kernel, which makes sampling, density
//! evaluation and conditioning linear in the number of sites. Everything
//! else goes through a dense Cholesky factor.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Relative diagonal jitter for the dense factorization.
pub const JITTER: f64 = 1e-8;

/// A regressor location.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Location {
    Point(Vec<f64>),
    Cell(usize, usize),
}

/// Score hyperparameters τ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ScoreParams {
    GaussianProcess {
        variance: f64,
        lengthscale: f64,
    },
    AnovaTwoWay {
        row_variance: f64,
        col_variance: f64,
        cell_variance: f64,
    },
}

impl ScoreParams {
    /// Names of the individual components, in [`ScoreParams::values`] order.
    pub fn names(&self) -> &'static [&'static str] {
        match self {
            ScoreParams::GaussianProcess { .. } => &["variance", "lengthscale"],
            ScoreParams::AnovaTwoWay { .. } => &["row_variance", "col_variance", "cell_variance"],
        }
    }

    pub fn values(&self) -> Vec<f64> {
        match *self {
            ScoreParams::GaussianProcess {
                variance,
                lengthscale,
            } => vec![variance, lengthscale],
            ScoreParams::AnovaTwoWay {
                row_variance,
                col_variance,
                cell_variance,
            } => vec![row_variance, col_variance, cell_variance],
        }
    }

    pub fn with_values(&self, values: &[f64]) -> ScoreParams {
        match self {
            ScoreParams::GaussianProcess { .. } => ScoreParams::GaussianProcess {
                variance: values[0],
                lengthscale: values[1],
            },
            ScoreParams::AnovaTwoWay { .. } => ScoreParams::AnovaTwoWay {
                row_variance: values[0],
                col_variance: values[1],
                cell_variance: values[2],
            },
        }
    }

    /// Indices of the components that scale the covariance linearly.
    pub fn variance_components(&self) -> &'static [usize] {
        match self {
            ScoreParams::GaussianProcess { .. } => &[0],
            ScoreParams::AnovaTwoWay { .. } => &[0, 1, 2],
        }
    }

    /// Multiplies every variance component by `factor`.
    pub fn scaled(&self, factor: f64) -> ScoreParams {
        let mut v = self.values();
        for &i in self.variance_components() {
            v[i] *= factor;
        }
        self.with_values(&v)
    }

    fn validate(&self) -> Result<()> {
        if self.values().iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidSpec(format!(
                "score hyperparameters must be positive and finite: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn covariance(&self, a: &Location, b: &Location) -> f64 {
        match (self, a, b) {
            (
                ScoreParams::GaussianProcess {
                    variance,
                    lengthscale,
                },
                Location::Point(x),
                Location::Point(y),
            ) => {
                let d2: f64 = x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum();
                variance * (-d2.sqrt() / lengthscale).exp()
            }
            (
                ScoreParams::AnovaTwoWay {
                    row_variance,
                    col_variance,
                    cell_variance,
                },
                Location::Cell(r1, c1),
                Location::Cell(r2, c2),
            ) => {
                let mut v = 0.0;
                if r1 == r2 {
                    v += row_variance;
                }
                if c1 == c2 {
                    v += col_variance;
                }
                if r1 == r2 && c1 == c2 {
                    v += cell_variance;
                }
                v
            }
            _ => f64::NAN,
        }
    }

    /// Mean and variance of `log(m(a)/m(b))`.
    pub fn log_ratio_moments(&self, a: &Location, b: &Location) -> (f64, f64) {
        let var =
            self.covariance(a, a) + self.covariance(b, b) - 2.0 * self.covariance(a, b);
        (0.0, var.max(0.0))
    }
}

/// Markov representation of a 1-D exponential-covariance process.
#[derive(Clone, Debug)]
struct OuChain {
    variance: f64,
    /// Site indices in increasing x.
    order: Vec<usize>,
    /// Position of each site in `order`.
    rank: Vec<usize>,
    xs: Vec<f64>,
    /// Correlation between consecutive sites; `rho[0]` is unused.
    rho: Vec<f64>,
    /// Conditional standard deviation of a step; `step_sd[0]` is marginal.
    step_sd: Vec<f64>,
    lengthscale: f64,
}

impl OuChain {
    fn new(coords: &[f64], variance: f64, lengthscale: f64) -> Result<Self> {
        let n = coords.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| coords[a].total_cmp(&coords[b]));
        let mut rank = vec![0; n];
        for (pos, &site) in order.iter().enumerate() {
            rank[site] = pos;
        }
        let xs: Vec<f64> = order.iter().map(|&i| coords[i]).collect();
        let mut rho = vec![0.0; n];
        let mut step_sd = vec![variance.sqrt(); n];
        for j in 1..n {
            let gap = xs[j] - xs[j - 1];
            if !(gap > 0.0) {
                return Err(Error::Factorization(
                    "duplicate site coordinates in exponential-covariance chain".into(),
                ));
            }
            rho[j] = (-gap / lengthscale).exp();
            step_sd[j] = (variance * -(-2.0 * gap / lengthscale).exp_m1()).sqrt();
        }
        Ok(OuChain {
            variance,
            order,
            rank,
            xs,
            rho,
            step_sd,
            lengthscale,
        })
    }

    fn log_density(&self, r: &[f64]) -> f64 {
        let mut total = 0.0;
        let mut prev = 0.0;
        for (j, &site) in self.order.iter().enumerate() {
            let mean = if j == 0 { 0.0 } else { self.rho[j] * prev };
            let sd = self.step_sd[j];
            let z = (r[site] - mean) / sd;
            total += -0.5 * (LN_2PI + z * z) - sd.ln();
            prev = r[site];
        }
        total
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let mut prev = 0.0;
        for (j, &site) in self.order.iter().enumerate() {
            let z: f64 = StandardNormal.sample(rng);
            let mean = if j == 0 { 0.0 } else { self.rho[j] * prev };
            prev = mean + self.step_sd[j] * z;
            out[site] = prev;
        }
    }

    /// Walks outward from site `start`, sampling the size-biased path and
    /// accumulating `Σ w e^{r}`. Stops once the sum exceeds `cutoff`.
    fn size_biased_weighted_sum<R: Rng + ?Sized>(
        &self,
        start: usize,
        weights: &[f64],
        cutoff: f64,
        rng: &mut R,
    ) -> f64 {
        let n = self.order.len();
        let p0 = self.rank[start];
        let sd0 = self.variance.sqrt();
        let z: f64 = StandardNormal.sample(rng);
        // size-biasing at `start` shifts the mean by the covariance column
        let base0 = sd0 * z;
        let mut total = weights[start] * (self.variance + base0).exp();
        if total > cutoff {
            return total;
        }
        // right
        let mut base = base0;
        let mut shift = self.variance;
        for j in p0 + 1..n {
            let z: f64 = StandardNormal.sample(rng);
            base = self.rho[j] * base + self.step_sd[j] * z;
            shift *= self.rho[j];
            let site = self.order[j];
            total += weights[site] * (shift + base).exp();
            if total > cutoff {
                return total;
            }
        }
        // left
        base = base0;
        shift = self.variance;
        for j in (0..p0).rev() {
            let z: f64 = StandardNormal.sample(rng);
            let link = j + 1;
            base = self.rho[link] * base + self.step_sd[link] * z;
            shift *= self.rho[link];
            let site = self.order[j];
            total += weights[site] * (shift + base).exp();
            if total > cutoff {
                return total;
            }
        }
        total
    }

    fn conditional(&self, x: f64) -> Conditional {
        let n = self.xs.len();
        let pos = self.xs.partition_point(|&v| v < x);
        let link = |d: f64| {
            let rho = (-d / self.lengthscale).exp();
            let one_minus = -(-2.0 * d / self.lengthscale).exp_m1();
            (rho, one_minus)
        };
        if pos < n && self.xs[pos] == x {
            return Conditional {
                terms: vec![(self.order[pos], 1.0)],
                variance: 0.0,
            };
        }
        if pos == 0 {
            let (rho, om) = link(self.xs[0] - x);
            return Conditional {
                terms: vec![(self.order[0], rho)],
                variance: self.variance * om,
            };
        }
        if pos == n {
            let (rho, om) = link(x - self.xs[n - 1]);
            return Conditional {
                terms: vec![(self.order[n - 1], rho)],
                variance: self.variance * om,
            };
        }
        let (r1, om1) = link(x - self.xs[pos - 1]);
        let (r2, om2) = link(self.xs[pos] - x);
        let denom = 1.0 - r1 * r1 * r2 * r2;
        Conditional {
            terms: vec![
                (self.order[pos - 1], r1 * om2 / denom),
                (self.order[pos], r2 * om1 / denom),
            ],
            variance: self.variance * om1 * om2 / denom,
        }
    }
}

#[derive(Clone, Debug)]
struct DenseField {
    cov: DMatrix<f64>,
    chol: DMatrix<f64>,
    log_det: f64,
}

impl DenseField {
    fn new(params: &ScoreParams, sites: &[Location]) -> Result<Self> {
        let n = sites.len();
        let scale = params
            .variance_components()
            .iter()
            .map(|&i| params.values()[i])
            .sum::<f64>();
        let cov = DMatrix::from_fn(n, n, |i, j| params.covariance(&sites[i], &sites[j]));
        let mut jittered = cov.clone();
        for i in 0..n {
            jittered[(i, i)] += JITTER * scale;
        }
        let chol = nalgebra::Cholesky::new(jittered)
            .ok_or_else(|| Error::Factorization("score covariance is not positive definite".into()))?
            .l();
        let log_det = 2.0 * chol.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        Ok(DenseField { cov, chol, log_det })
    }

    fn log_density(&self, r: &[f64]) -> f64 {
        let n = r.len();
        let v = DVector::from_column_slice(r);
        let z = self
            .chol
            .solve_lower_triangular(&v)
            .expect("triangular factor is nonsingular");
        -0.5 * (n as f64 * LN_2PI + self.log_det + z.norm_squared())
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let n = out.len();
        let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        for (i, o) in out.iter_mut().enumerate() {
            let row = self.chol.row(i);
            *o = (0..=i).map(|j| row[j] * z[j]).sum();
        }
    }
}

#[derive(Clone, Debug)]
enum Backend {
    Chain(OuChain),
    Dense(DenseField),
    Empty,
}

/// Gaussian conditional of a new location given the site values:
/// mean `Σ coeff·r[site]`, variance `variance`.
#[derive(Clone, Debug)]
pub struct Conditional {
    pub terms: Vec<(usize, f64)>,
    pub variance: f64,
}

impl Conditional {
    pub fn mean(&self, r: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, c)| c * r[i]).sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, r: &[f64], rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.mean(r) + self.variance.max(0.0).sqrt() * z
    }
}

/// A score prior over a fixed set of sites.
#[derive(Clone, Debug)]
pub struct ScoreModel {
    params: ScoreParams,
    sites: Arc<Vec<Location>>,
    backend: Backend,
}

impl ScoreModel {
    pub fn new(params: ScoreParams, sites: Arc<Vec<Location>>) -> Result<Self> {
        params.validate()?;
        let backend = if sites.is_empty() {
            Backend::Empty
        } else {
            match (&params, &sites[0]) {
                (
                    ScoreParams::GaussianProcess {
                        variance,
                        lengthscale,
                    },
                    Location::Point(p),
                ) if p.len() == 1 => {
                    let coords: Vec<f64> = sites
                        .iter()
                        .map(|s| match s {
                            Location::Point(p) => p[0],
                            Location::Cell(..) => f64::NAN,
                        })
                        .collect();
                    Backend::Chain(OuChain::new(&coords, *variance, *lengthscale)?)
                }
                _ => Backend::Dense(DenseField::new(&params, &sites)?),
            }
        };
        Ok(ScoreModel {
            params,
            sites,
            backend,
        })
    }

    /// Same sites, new hyperparameters.
    pub fn with_params(&self, params: ScoreParams) -> Result<Self> {
        ScoreModel::new(params, Arc::clone(&self.sites))
    }

    pub fn params(&self) -> &ScoreParams {
        &self.params
    }

    pub fn sites(&self) -> &Arc<Vec<Location>> {
        &self.sites
    }

    pub fn dim(&self) -> usize {
        self.sites.len()
    }

    pub fn site_variance(&self, k: usize) -> f64 {
        self.params.covariance(&self.sites[k], &self.sites[k])
    }

    /// `log N(r; 0, Σ)`.
    pub fn log_density_log_scale(&self, r: &[f64]) -> f64 {
        match &self.backend {
            Backend::Chain(c) => c.log_density(r),
            Backend::Dense(d) => d.log_density(r),
            Backend::Empty => 0.0,
        }
    }

    /// `log h(m | τ)`, the log-normal density of the score vector.
    pub fn log_density(&self, m: &[f64]) -> Result<f64> {
        if m.len() != self.dim() {
            return Err(Error::Domain(format!(
                "score vector has length {}, expected {}",
                m.len(),
                self.dim()
            )));
        }
        if m.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Domain("scores must be strictly positive".into()));
        }
        let r: Vec<f64> = m.iter().map(|v| v.ln()).collect();
        Ok(self.log_density_log_scale(&r) - r.iter().sum::<f64>())
    }

    pub fn sample_log_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.fill_log_prior(rng, &mut out);
        out
    }

    pub fn fill_log_prior<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match &self.backend {
            Backend::Chain(c) => c.sample(rng, out),
            Backend::Dense(d) => d.sample(rng, out),
            Backend::Empty => {}
        }
    }

    pub fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.sample_log_prior(rng).into_iter().map(f64::exp).collect()
    }

    /// Log-scores from the density tilted by `m_k`: `r ~ N(Σ e_k, Σ)`.
    pub fn sample_log_size_biased<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Vec<f64> {
        let mut r = self.sample_log_prior(rng);
        for (j, v) in r.iter_mut().enumerate() {
            *v += self.params.covariance(&self.sites[j], &self.sites[k]);
        }
        r
    }

    pub fn sample_size_biased<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Vec<f64> {
        self.sample_log_size_biased(k, rng)
            .into_iter()
            .map(f64::exp)
            .collect()
    }

    /// `Σ_j w_j m*_j` for `m*` drawn size-biased at site `k`. May stop early
    /// and return a partial sum once it exceeds `cutoff`.
    pub fn size_biased_weighted_sum<R: Rng + ?Sized>(
        &self,
        k: usize,
        weights: &[f64],
        cutoff: f64,
        rng: &mut R,
    ) -> f64 {
        match &self.backend {
            Backend::Chain(c) => c.size_biased_weighted_sum(k, weights, cutoff, rng),
            Backend::Dense(d) => {
                let n = self.dim();
                let mut r = vec![0.0; n];
                d.sample(rng, &mut r);
                let col = d.cov.column(k);
                r.iter()
                    .zip(weights)
                    .enumerate()
                    .map(|(j, (v, w))| w * (v + col[j]).exp())
                    .sum()
            }
            Backend::Empty => 0.0,
        }
    }

    /// `E[m_k] = exp(Σ_kk / 2)`.
    pub fn mean_score(&self, k: usize) -> f64 {
        (0.5 * self.site_variance(k)).exp()
    }

    /// Conditional law of the log-score at `location` given the site values.
    pub fn conditional(&self, location: &Location) -> Result<Conditional> {
        match (&self.backend, location) {
            (Backend::Chain(c), Location::Point(p)) if p.len() == 1 => Ok(c.conditional(p[0])),
            (Backend::Dense(d), _) => {
                let n = self.dim();
                let k = DVector::from_fn(n, |i, _| self.params.covariance(&self.sites[i], location));
                if k.iter().any(|v| v.is_nan()) {
                    return Err(Error::Domain("location type does not match the sites".into()));
                }
                let half = d
                    .chol
                    .solve_lower_triangular(&k)
                    .ok_or_else(|| Error::Factorization("triangular solve failed".into()))?;
                let coeffs = d
                    .chol
                    .transpose()
                    .solve_upper_triangular(&half)
                    .ok_or_else(|| Error::Factorization("triangular solve failed".into()))?;
                let variance = self.params.covariance(location, location) - half.norm_squared();
                Ok(Conditional {
                    terms: coeffs.iter().copied().enumerate().collect(),
                    variance: variance.max(0.0),
                })
            }
            (Backend::Empty, _) => Ok(Conditional {
                terms: vec![],
                variance: self.params.covariance(location, location),
            }),
            _ => Err(Error::Domain("location type does not match the sites".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn gp(var: f64, ls: f64, xs: &[f64]) -> ScoreModel {
        let sites = Arc::new(xs.iter().map(|&x| Location::Point(vec![x])).collect());
        ScoreModel::new(
            ScoreParams::GaussianProcess {
                variance: var,
                lengthscale: ls,
            },
            sites,
        )
        .unwrap()
    }

    fn gp_dense(var: f64, ls: f64, xs: &[f64]) -> ScoreModel {
        // a second zero coordinate forces the dense path
        let sites = Arc::new(xs.iter().map(|&x| Location::Point(vec![x, 0.0])).collect());
        ScoreModel::new(
            ScoreParams::GaussianProcess {
                variance: var,
                lengthscale: ls,
            },
            sites,
        )
        .unwrap()
    }

    #[test]
    fn univariate_log_density_values() {
        let m = gp(1.0, 1.0, &[0.0]);
        assert!((m.log_density(&[1.0]).unwrap() + 0.918_938_533_204_672_7).abs() < 1e-12);
        let e = std::f64::consts::E;
        let want = -0.5 - 0.918_938_533_204_672_7 - 1.0;
        assert!((m.log_density(&[e]).unwrap() - want).abs() < 1e-12);
        assert!(m.log_density(&[0.0]).is_err());
    }

    #[test]
    fn chain_and_dense_agree() {
        let xs = [0.3, 0.05, 0.9, 0.51, 0.52];
        let a = gp(1.7, 0.4, &xs);
        let b = gp_dense(1.7, 0.4, &xs);
        let r = [0.2, -1.0, 0.7, 0.1, 0.15];
        let da = a.log_density_log_scale(&r);
        let db = b.log_density_log_scale(&r);
        assert!((da - db).abs() < 1e-6, "{da} vs {db}");
        for &x in &[-0.2, 0.0, 0.3, 0.515, 0.7, 1.4] {
            let ca = a.conditional(&Location::Point(vec![x])).unwrap();
            let cb = b.conditional(&Location::Point(vec![x, 0.0])).unwrap();
            assert!((ca.mean(&r) - cb.mean(&r)).abs() < 1e-6, "x = {x}");
            assert!((ca.variance - cb.variance).abs() < 1e-6, "x = {x}");
        }
    }

    #[test]
    fn mean_score_values() {
        let m = gp(1.0, 1.0, &[0.0, 1.0]);
        assert!((m.mean_score(0) - 0.5f64.exp()).abs() < 1e-14);
        let tiny = gp(1e-12, 1.0, &[0.0]);
        assert!((tiny.mean_score(0) - 1.0).abs() < 1e-10);
        let sites = Arc::new(vec![Location::Cell(0, 0), Location::Cell(1, 0)]);
        let anova = ScoreModel::new(
            ScoreParams::AnovaTwoWay {
                row_variance: 0.3,
                col_variance: 0.2,
                cell_variance: 0.1,
            },
            sites,
        )
        .unwrap();
        assert!((anova.mean_score(1) - 0.3f64.exp()).abs() < 1e-14);
    }

    #[test]
    fn log_ratio_moments() {
        let p = ScoreParams::GaussianProcess {
            variance: 1.3,
            lengthscale: 0.5,
        };
        let a = Location::Point(vec![0.2]);
        assert_eq!(p.log_ratio_moments(&a, &a), (0.0, 0.0));
        let far = Location::Point(vec![1e6]);
        assert!((p.log_ratio_moments(&a, &far).1 - 2.6).abs() < 1e-12);
        let q = ScoreParams::AnovaTwoWay {
            row_variance: 0.3,
            col_variance: 0.2,
            cell_variance: 0.1,
        };
        let (_, v) = q.log_ratio_moments(&Location::Cell(1, 0), &Location::Cell(1, 2));
        assert!((v - 2.0 * (0.2 + 0.1)).abs() < 1e-14);
        let (_, v) = q.log_ratio_moments(&Location::Cell(1, 0), &Location::Cell(0, 2));
        assert!((v - 2.0 * 0.6).abs() < 1e-14);
    }

    #[test]
    fn conditional_at_site_is_exact() {
        let m = gp(1.0, 0.3, &[0.1, 0.4]);
        let c = m.conditional(&Location::Point(vec![0.4])).unwrap();
        assert_eq!(c.variance, 0.0);
        assert!((c.mean(&[0.5, -0.25]) + 0.25).abs() < 1e-15);
    }

    #[test]
    fn weighted_sum_cutoff_returns_partial() {
        let m = gp(1.0, 0.3, &[0.1, 0.4, 0.8]);
        let mut rng = seeded(3);
        let s = m.size_biased_weighted_sum(1, &[1.0, 1.0, 1.0], 0.0, &mut rng);
        assert!(s > 0.0);
    }

    #[test]
    fn deterministic_prior_draws() {
        let m = gp(1.0, 0.3, &[0.1, 0.4, 0.8]);
        let a = m.sample_prior(&mut seeded(5));
        let b = m.sample_prior(&mut seeded(5));
        assert_eq!(a, b);
    }
}
