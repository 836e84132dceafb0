//! Robbins–Monro scaling of random-walk proposals.

use serde::{Deserialize, Serialize};

pub const SCALAR_TARGET: f64 = 0.44;
pub const BLOCK_TARGET: f64 = 0.234;
const DECAY: f64 = 0.6;

/// A log-scale step size adapted towards a target acceptance rate with gain
/// `t^{-0.6}`, plus acceptance counters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub log_scale: f64,
    pub target: f64,
    updates: u64,
    pub proposed: u64,
    pub accepted: u64,
    pub window_proposed: u64,
    pub window_accepted: u64,
}

impl Step {
    pub fn new(scale: f64, target: f64) -> Self {
        Step {
            log_scale: scale.ln(),
            target,
            updates: 0,
            proposed: 0,
            accepted: 0,
            window_proposed: 0,
            window_accepted: 0,
        }
    }

    pub fn scalar(scale: f64) -> Self {
        Step::new(scale, SCALAR_TARGET)
    }

    pub fn block(scale: f64) -> Self {
        Step::new(scale, BLOCK_TARGET)
    }

    pub fn scale(&self) -> f64 {
        self.log_scale.exp()
    }

    /// Records one proposal with acceptance probability `alpha` and outcome
    /// `accepted`; the scale moves only while `adapting`.
    pub fn record(&mut self, alpha: f64, accepted: bool, adapting: bool) {
        self.proposed += 1;
        self.window_proposed += 1;
        if accepted {
            self.accepted += 1;
            self.window_accepted += 1;
        }
        if adapting {
            self.updates += 1;
            let gain = (self.updates as f64).powf(-DECAY);
            let alpha = if alpha.is_nan() { 0.0 } else { alpha.min(1.0) };
            self.log_scale = (self.log_scale + gain * (alpha - self.target)).clamp(-20.0, 5.0);
        }
    }

    pub fn rate(&self) -> f64 {
        ratio(self.accepted, self.proposed)
    }

    /// Acceptance rate since the last [`Step::reset_window`].
    pub fn window_rate(&self) -> f64 {
        ratio(self.window_accepted, self.window_proposed)
    }

    pub fn reset_window(&mut self) {
        self.window_proposed = 0;
        self.window_accepted = 0;
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        f64::NAN
    } else {
        a as f64 / b as f64
    }
}

/// Metropolis–Hastings accept step on a log ratio. Returns `(alpha, accepted)`.
pub fn accept<R: rand::Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> (f64, bool) {
    if log_ratio.is_nan() {
        return (0.0, false);
    }
    let alpha = log_ratio.min(0.0).exp();
    let u: f64 = rng.random();
    (alpha, u < alpha)
}
