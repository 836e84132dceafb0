//! Directing Lévy intensities: densities, tail masses, dominating bounds for
//! the tail mass, exact samplers from the bounds, and the jump integrals used
//! by the allocation and jump updates.
//!
//! Four families are supported. The generalized gamma process has intensity
//! `z^{-1-σ} e^{-λz} / Γ(1-σ)` on `(0, ∞)` and the gamma process is its
//! `σ = 0, λ = 1` limit. The stable-Beta process has intensity
//! `c z^{-σ-1} (1-λz)^{σ+φ-1}` on `(0, 1/λ)` with
//! `c = Γ(φ) / (Γ(σ+φ) Γ(1-σ))`, and the Beta process is its `σ = 0, λ = 1`
//! limit (so `c = 1`).
//!
//! Every tail mass `T(t) = ∫_t^∞ ν(z) dz` is bounded by a two-piece function
//! `κ̃(t)`: a power-law head `c (t^{-σ} - 1)/σ` (or `-c ln t`) on `t < b` and
//! a decaying tail tied to the head's value at `b`.

use rand::Rng;
use rand_distr::{Beta, Distribution, Exp, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate, integrate_to_infinity};
use crate::special::{
    exp_integral_e1, gamma_q, ln_gamma, power_log, power_log_inverse, upper_gamma_negative_shape,
};

/// Hard cap on rejection-sampler attempts before giving up.
pub const REJECTION_RETRY_CAP: usize = 1_000_000;

/// Default breakpoint between the head and tail pieces of the bound.
pub const DEFAULT_BREAKPOINT: f64 = 0.65;

/// Relative rounding allowance when comparing `κ̃` with `T`. The bound is
/// exact on the head for the beta process with unit shape, so the two can
/// differ in the last bits either way.
pub const DOMINANCE_SLACK: f64 = 1e-12;

const QUAD_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LevyFamily {
    GeneralizedGamma,
    Gamma,
    StableBeta,
    Beta,
}

/// A parameterized directing Lévy intensity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevySpec {
    pub family: LevyFamily,
    /// Stability index σ in [0, 1).
    pub sigma: f64,
    /// Tempering rate λ.
    pub lambda: f64,
    /// Beta-family concentration φ; ignored by the gamma families.
    pub gamma_shape: f64,
    /// Breakpoint `b` of the bounding function.
    pub b: f64,
}

impl LevySpec {
    pub fn gamma() -> Self {
        LevySpec {
            family: LevyFamily::Gamma,
            sigma: 0.0,
            lambda: 1.0,
            gamma_shape: 1.0,
            b: DEFAULT_BREAKPOINT,
        }
    }

    pub fn generalized_gamma(sigma: f64, lambda: f64) -> Result<Self> {
        LevySpec {
            family: LevyFamily::GeneralizedGamma,
            sigma,
            lambda,
            gamma_shape: 1.0,
            b: DEFAULT_BREAKPOINT,
        }
        .validated()
    }

    pub fn stable_beta(sigma: f64, gamma_shape: f64, lambda: f64) -> Result<Self> {
        LevySpec {
            family: LevyFamily::StableBeta,
            sigma,
            lambda,
            gamma_shape,
            b: DEFAULT_BREAKPOINT,
        }
        .validated()
    }

    pub fn beta(gamma_shape: f64) -> Result<Self> {
        LevySpec {
            family: LevyFamily::Beta,
            sigma: 0.0,
            lambda: 1.0,
            gamma_shape,
            b: DEFAULT_BREAKPOINT,
        }
        .validated()
    }

    pub fn with_breakpoint(mut self, b: f64) -> Result<Self> {
        self.b = b;
        self.validated()
    }

    pub fn with_sigma(mut self, sigma: f64) -> Result<Self> {
        self.sigma = sigma;
        self.validated()
    }

    pub fn with_gamma_shape(mut self, gamma_shape: f64) -> Result<Self> {
        self.gamma_shape = gamma_shape;
        self.validated()
    }

    pub fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidSpec(msg.to_string()));
        if !(self.b > 0.0 && self.b < 1.0) {
            return bad("breakpoint b must lie in (0, 1)");
        }
        if self.lambda == 0.0 && self.sigma >= 0.0 {
            return bad("lambda = 0 is a stable process whose tail mass is infinite");
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be positive");
        }
        match self.family {
            LevyFamily::Gamma | LevyFamily::Beta => {
                if self.sigma != 0.0 || self.lambda != 1.0 {
                    return bad("gamma and Beta limits require sigma = 0 and lambda = 1");
                }
            }
            LevyFamily::GeneralizedGamma | LevyFamily::StableBeta => {
                if !(self.sigma > 0.0 && self.sigma < 1.0) {
                    return bad("sigma must lie in (0, 1); use the limit family for sigma = 0");
                }
            }
        }
        if self.is_beta_family() {
            if !(self.gamma_shape > 0.0 && self.gamma_shape.is_finite()) {
                return bad("gamma_shape must be positive");
            }
            if self.sigma + self.gamma_shape < 1.0 {
                return bad("Beta families need sigma + gamma_shape >= 1 for the tail bound");
            }
            if self.b * self.lambda >= 1.0 {
                return bad("breakpoint must lie inside the support (0, 1/lambda)");
            }
        }
        Ok(())
    }

    pub fn is_beta_family(&self) -> bool {
        matches!(self.family, LevyFamily::StableBeta | LevyFamily::Beta)
    }

    /// Upper end of the jump support.
    pub fn support_end(&self) -> f64 {
        if self.is_beta_family() {
            1.0 / self.lambda
        } else {
            f64::INFINITY
        }
    }

    fn beta_exponent(&self) -> f64 {
        self.sigma + self.gamma_shape
    }

    /// Log of the intensity's leading constant `c`.
    fn log_coefficient(&self) -> f64 {
        match self.family {
            LevyFamily::GeneralizedGamma => -ln_gamma(1.0 - self.sigma),
            LevyFamily::Gamma | LevyFamily::Beta => 0.0,
            LevyFamily::StableBeta => {
                ln_gamma(self.gamma_shape)
                    - ln_gamma(self.beta_exponent())
                    - ln_gamma(1.0 - self.sigma)
            }
        }
    }

    fn coefficient(&self) -> f64 {
        self.log_coefficient().exp()
    }

    /// Log intensity; `-∞` outside the support.
    pub fn log_levy_density(&self, z: f64) -> f64 {
        if !(z > 0.0) || z >= self.support_end() {
            return f64::NEG_INFINITY;
        }
        let base = self.log_coefficient() - (1.0 + self.sigma) * z.ln();
        if self.is_beta_family() {
            base + (self.beta_exponent() - 1.0) * (-self.lambda * z).ln_1p()
        } else {
            base - self.lambda * z
        }
    }

    pub fn levy_density(&self, z: f64) -> Result<f64> {
        if !(z > 0.0) || z >= self.support_end() {
            return Err(Error::Domain(format!(
                "jump size {z} outside support (0, {})",
                self.support_end()
            )));
        }
        Ok(self.log_levy_density(z).exp())
    }

    /// Tail mass `T(t) = ∫_t^∞ ν(z) dz`.
    pub fn tail_mass(&self, t: f64) -> f64 {
        debug_assert!(t > 0.0);
        match self.family {
            LevyFamily::Gamma => exp_integral_e1(t),
            LevyFamily::GeneralizedGamma => {
                let x = self.lambda * t;
                self.lambda.powf(self.sigma) * upper_gamma_negative_shape(self.sigma, x)
                    / crate::special::gamma(1.0 - self.sigma)
            }
            LevyFamily::StableBeta | LevyFamily::Beta => {
                let end = self.support_end();
                if t >= end {
                    return 0.0;
                }
                // Split off the pure power part, which has a closed form, and
                // integrate the bounded remainder numerically.
                let power = if self.sigma == 0.0 {
                    (end / t).ln()
                } else {
                    (t.powf(-self.sigma) - end.powf(-self.sigma)) / self.sigma
                };
                let s = self.sigma;
                let e = self.beta_exponent() - 1.0;
                let lambda = self.lambda;
                let remainder = integrate(
                    |z: f64| {
                        let w = (-lambda * z).ln_1p();
                        // (1-λz)^e - 1 without cancellation near z = 0
                        z.powf(-s - 1.0) * (e * w).exp_m1()
                    },
                    t,
                    end,
                    QUAD_TOL,
                );
                (self.coefficient() * (power + remainder)).max(0.0)
            }
        }
    }

    /// Scale of the head piece, `c` for the limits and `c` with the `1/σ`
    /// folded into [`power_log`] otherwise.
    fn head_value(&self, t: f64) -> f64 {
        self.coefficient() * power_log(t, self.sigma)
    }

    /// Shape of the tail piece, equal to 1 at `t = b`.
    fn tail_shape(&self, t: f64) -> f64 {
        if self.is_beta_family() {
            let end = 1.0 - self.lambda * t;
            if end <= 0.0 {
                return 0.0;
            }
            (end / (1.0 - self.lambda * self.b)).powf(self.beta_exponent())
        } else {
            (-self.lambda * (t - self.b)).exp()
        }
    }

    /// Unnormalized bounding function `κ̃(t) > T(t)`.
    pub fn bound_density_unnorm(&self, t: f64) -> f64 {
        debug_assert!(t > 0.0);
        if t < self.b {
            self.head_value(t)
        } else {
            self.head_value(self.b) * self.tail_shape(t)
        }
    }

    /// Mass of `κ̃` on `(0, b)`.
    pub fn head_mass(&self) -> f64 {
        let s = self.sigma;
        let b = self.b;
        let ln_b = b.ln();
        // ∫_0^b (t^{-σ}-1)/σ dt = b (b^{-σ}/(1-σ) - 1)/σ, continuous at σ = 0
        let bracket = if s == 0.0 {
            1.0 - ln_b
        } else {
            (-s * ln_b - (-s).ln_1p()).exp_m1() / s
        };
        self.coefficient() * b * bracket
    }

    /// Mass of `κ̃` on `[b, end)`.
    pub fn tail_piece_mass(&self) -> f64 {
        let integral_of_shape = if self.is_beta_family() {
            (1.0 - self.lambda * self.b) / (self.lambda * (self.beta_exponent() + 1.0))
        } else {
            1.0 / self.lambda
        };
        self.head_value(self.b) * integral_of_shape
    }

    /// Normalizer `D = ∫ κ̃(t) dt`.
    pub fn bound_normalizer(&self) -> f64 {
        self.head_mass() + self.tail_piece_mass()
    }

    /// Draws `t` with density `κ̃(t)/D`.
    pub fn sample_bound_density<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let head = self.head_mass();
        let total = head + self.tail_piece_mass();
        if rng.random::<f64>() * total < head {
            self.sample_head(rng)
        } else {
            Ok(self.sample_tail(rng))
        }
    }

    fn sample_head<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let s = self.sigma;
        let threshold = power_log(self.b, s);
        if s == 0.0 {
            let g = Gamma::new(2.0, 1.0).expect("valid gamma");
            for _ in 0..REJECTION_RETRY_CAP {
                let y = g.sample(rng);
                if y > threshold {
                    return Ok(power_log_inverse(y, s));
                }
            }
        } else {
            // y = (t^{-σ}-1)/σ has density ∝ y (1+σy)^{-1/σ-1}: a Gamma(2, Ξ)
            // scale mixture with Ξ ~ Gamma(1/σ - 1, rate 1/σ).
            let mixing = Gamma::new(1.0 / s - 1.0, s).expect("valid gamma");
            for _ in 0..REJECTION_RETRY_CAP {
                let rate: f64 = mixing.sample(rng);
                let y = Gamma::new(2.0, 1.0 / rate)
                    .map_err(|e| Error::Numerical(e.to_string()))?
                    .sample(rng);
                if y > threshold {
                    return Ok(power_log_inverse(y, s));
                }
            }
        }
        Err(Error::RetryCapExceeded(REJECTION_RETRY_CAP))
    }

    fn sample_tail<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.is_beta_family() {
            let p = self.beta_exponent();
            let u_b = 1.0 - self.lambda * self.b;
            let u: f64 = rng.random::<f64>();
            let w = u_b * u.powf(1.0 / (p + 1.0));
            ((1.0 - w) / self.lambda).max(self.b)
        } else {
            let e = Exp::new(self.lambda).expect("valid rate");
            self.b + e.sample(rng)
        }
    }

    /// `γ(V) = ∫ z e^{-zV} ν(z) dz`.
    pub fn gamma_integral(&self, v: f64) -> f64 {
        debug_assert!(v >= 0.0);
        match self.family {
            LevyFamily::Gamma => 1.0 / (1.0 + v),
            LevyFamily::GeneralizedGamma => (self.lambda + v).powf(self.sigma - 1.0),
            LevyFamily::StableBeta | LevyFamily::Beta => self.beta_moment(1.0, v),
        }
    }

    /// `∫ z^p e^{-zV} ν(z) dz` for the Beta families.
    fn beta_moment(&self, power: f64, v: f64) -> f64 {
        let s = self.sigma;
        let e = self.beta_exponent() - 1.0;
        let lambda = self.lambda;
        let c = self.coefficient();
        c * integrate(
            |z: f64| {
                if z <= 0.0 {
                    return 0.0;
                }
                (((power - 1.0 - s) * z.ln()) + e * (-lambda * z).ln_1p() - z * v).exp()
            },
            0.0,
            self.support_end(),
            QUAD_TOL,
        )
    }

    /// Mean of `p(J | m) ∝ J e^{-JV} ν(J)`.
    pub fn jump_given_scores_mean(&self, v: f64) -> f64 {
        match self.family {
            LevyFamily::Gamma => 1.0 / (1.0 + v),
            LevyFamily::GeneralizedGamma => (1.0 - self.sigma) / (self.lambda + v),
            LevyFamily::StableBeta | LevyFamily::Beta => {
                self.beta_moment(2.0, v) / self.beta_moment(1.0, v)
            }
        }
    }

    /// Draws `J ~ p(J | m) ∝ J e^{-JV} ν(J)` for the candidate new cluster.
    pub fn sample_jump_given_scores<R: Rng + ?Sized>(&self, v: f64, rng: &mut R) -> Result<f64> {
        match self.family {
            LevyFamily::Gamma | LevyFamily::GeneralizedGamma => {
                let shape = 1.0 - self.sigma;
                let rate = self.lambda + v;
                Ok(Gamma::new(shape, 1.0 / rate)
                    .map_err(|e| Error::Numerical(e.to_string()))?
                    .sample(rng))
            }
            LevyFamily::StableBeta | LevyFamily::Beta => {
                self.sample_beta_tilted(1.0 - self.sigma, v, rng)
            }
        }
    }

    /// Rejection sampler for `z^{shape-1} (1-λz)^{σ+φ-1} e^{-zV}` on `(0, 1/λ)`.
    ///
    /// For `V ≥ λ` proposes from Gamma(shape, V) and thins by `(1-λz)^{σ+φ-1}`;
    /// otherwise proposes from the scaled Beta(shape, σ+φ) and thins by `e^{-zV}`.
    fn sample_beta_tilted<R: Rng + ?Sized>(&self, shape: f64, v: f64, rng: &mut R) -> Result<f64> {
        let e = self.beta_exponent() - 1.0;
        let end = self.support_end();
        if v >= self.lambda {
            let g = Gamma::new(shape, 1.0 / v).map_err(|err| Error::Numerical(err.to_string()))?;
            for _ in 0..REJECTION_RETRY_CAP {
                let z: f64 = g.sample(rng);
                if z >= end || z <= 0.0 {
                    continue;
                }
                let accept = (e * (-self.lambda * z).ln_1p()).exp();
                if rng.random::<f64>() < accept {
                    return Ok(z);
                }
            }
        } else {
            let beta = Beta::new(shape, self.beta_exponent())
                .map_err(|err| Error::Numerical(err.to_string()))?;
            for _ in 0..REJECTION_RETRY_CAP {
                let z = beta.sample(rng) / self.lambda;
                if z <= 0.0 {
                    continue;
                }
                if rng.random::<f64>() < (-z * v).exp() {
                    return Ok(z);
                }
            }
        }
        Err(Error::RetryCapExceeded(REJECTION_RETRY_CAP))
    }

    /// Log of the allocated-jump conditional `J^{n} e^{-JV} ν(J)`, on the
    /// log-J scale (includes the Jacobian `J`).
    pub fn log_allocated_jump_target(&self, log_jump: f64, count: usize, v: f64) -> f64 {
        let j = log_jump.exp();
        let lv = self.log_levy_density(j);
        if lv == f64::NEG_INFINITY {
            return lv;
        }
        (count as f64 + 1.0) * log_jump - j * v + lv
    }

    /// Updates an allocated jump from `J^{n_k} e^{-JV} ν(J)`.
    ///
    /// Exact for the gamma families; one random-walk Metropolis step on
    /// `log J` with scale `step` for the Beta families.
    pub fn sample_allocated_jump<R: Rng + ?Sized>(
        &self,
        count: usize,
        v: f64,
        current: f64,
        step: f64,
        rng: &mut R,
    ) -> Result<JumpDraw> {
        if count == 0 {
            return Err(Error::Domain(
                "allocated jump update needs at least one allocation".into(),
            ));
        }
        match self.family {
            LevyFamily::Gamma | LevyFamily::GeneralizedGamma => {
                let shape = count as f64 - self.sigma;
                let rate = self.lambda + v;
                let value = Gamma::new(shape, 1.0 / rate)
                    .map_err(|e| Error::Numerical(e.to_string()))?
                    .sample(rng);
                Ok(JumpDraw {
                    value,
                    accepted: None,
                })
            }
            LevyFamily::StableBeta | LevyFamily::Beta => {
                let log_cur = current.ln();
                let normal: f64 = rand_distr::StandardNormal.sample(rng);
                let log_prop = log_cur + step * normal;
                let log_ratio = self.log_allocated_jump_target(log_prop, count, v)
                    - self.log_allocated_jump_target(log_cur, count, v);
                let accept = rng.random::<f64>().ln() < log_ratio;
                Ok(JumpDraw {
                    value: if accept { log_prop.exp() } else { current },
                    accepted: Some(accept),
                })
            }
        }
    }

    /// Inverts the tail mass: the `z` with `T(z) = target`.
    fn inverse_tail_mass(&self, target: f64, floor: f64) -> f64 {
        let mut lo = floor.ln();
        let mut hi = if self.is_beta_family() {
            self.support_end().ln()
        } else {
            let mut h = 1.0f64;
            while self.tail_mass(h.exp()) > target {
                h += 2.0;
            }
            h
        };
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.tail_mass(mid.exp()) > target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-13 {
                break;
            }
        }
        (0.5 * (lo + hi)).exp()
    }

    /// Jumps larger than `floor` of a Poisson process with intensity `mass·ν`.
    pub fn sample_jumps_above<R: Rng + ?Sized>(
        &self,
        mass: f64,
        floor: f64,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let total = mass * self.tail_mass(floor);
        let count = if total > 0.0 {
            Poisson::new(total)
                .map_err(|e| Error::Numerical(e.to_string()))?
                .sample(rng) as usize
        } else {
            0
        };
        let floor_mass = self.tail_mass(floor);
        Ok((0..count)
            .map(|_| {
                let u: f64 = rng.random::<f64>();
                self.inverse_tail_mass(u * floor_mass, floor)
            })
            .collect())
    }

    /// Expected contribution `mass ∫_0^floor z ν(z) dz` of jumps below `floor`.
    pub fn small_jump_mean(&self, mass: f64, floor: f64) -> f64 {
        let s = self.sigma;
        let lambda = self.lambda;
        match self.family {
            LevyFamily::Gamma => mass * -(-floor).exp_m1(),
            LevyFamily::GeneralizedGamma => {
                // ∫_0^ε z^{-σ} e^{-λz}/Γ(1-σ) dz = λ^{σ-1} P(1-σ, λε)
                mass * lambda.powf(s - 1.0) * (1.0 - gamma_q(1.0 - s, lambda * floor))
            }
            LevyFamily::StableBeta | LevyFamily::Beta => {
                let e = self.beta_exponent() - 1.0;
                let c = self.coefficient();
                mass * c
                    * integrate(
                        |z: f64| {
                            if z <= 0.0 {
                                0.0
                            } else {
                                (-s * z.ln() + e * (-lambda * z).ln_1p()).exp()
                            }
                        },
                        0.0,
                        floor,
                        1e-10,
                    )
            }
        }
    }
}

/// Result of an allocated-jump update.
#[derive(Clone, Copy, Debug)]
pub struct JumpDraw {
    pub value: f64,
    /// `None` for exact draws, otherwise whether the Metropolis step moved.
    pub accepted: Option<bool>,
}

/// Numerical tail mass by quadrature of the intensity (slow; for checks).
pub fn tail_mass_by_quadrature(spec: &LevySpec, t: f64) -> f64 {
    let f = |z: f64| spec.log_levy_density(z).exp();
    if spec.is_beta_family() {
        integrate(f, t, spec.support_end(), 1e-12)
    } else {
        integrate_to_infinity(f, t, 1e-12)
    }
}
