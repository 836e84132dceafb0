use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::adapt::accept;
use super::state::{site_weights, Cluster};
use super::{Counters, Fault, Model, Sampler};
use crate::error::{Error, Result};
use crate::estimator::LaplaceProblem;
use crate::kernel::{log_marginal, log_predictive_ratio, ClusterStats, KernelSpec};
use crate::levy::{LevyFamily, LevySpec};
use crate::rng::{fork_seed, ChainRng};
use crate::score::ScoreModel;

/// Fresh estimate of the log Laplace-functional components.
///
/// States whose estimate would need more than `model.max_points` expected
/// Poisson points lie outside the support of the (truncated) target: the
/// components come back as `-∞`, so the proposal is rejected.
fn laplace(
    rng: &mut ChainRng,
    counters: &mut Counters,
    model: &Model,
    levy: &LevySpec,
    score: &ScoreModel,
    weights: &[f64],
    mass: f64,
) -> Result<Vec<f64>> {
    counters.laplace_proposals += 1;
    let problem = LaplaceProblem::new(levy, score, weights, mass, model.a)?;
    let expected: f64 = (0..weights.len()).map(|u| model.a * problem.bound(u)).sum();
    if expected > model.max_points {
        counters.truncated += 1;
        return Ok(vec![f64::NEG_INFINITY; weights.len()]);
    }
    counters.estimates += 1;
    let seed = fork_seed(rng);
    Ok(problem
        .estimate_sites(seed, model.execution)?
        .into_iter()
        .map(|e| e.log_value)
        .collect())
}

fn total(x: &[f64]) -> f64 {
    x.iter().sum()
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Index drawn with probabilities proportional to `exp(log_w)`.
fn sample_log_weights<R: Rng + ?Sized>(log_w: &[f64], rng: &mut R) -> usize {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let mut u = rng.random::<f64>() * w.iter().sum::<f64>();
    for (i, wi) in w.iter().enumerate() {
        if u < *wi {
            return i;
        }
        u -= wi;
    }
    w.iter().rposition(|x| *x > 0.0).unwrap_or(0)
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

impl Sampler {
    fn remove_cluster(&mut self, k: usize) -> Cluster {
        let last = self.state.clusters.len() - 1;
        let c = self.state.clusters.swap_remove(k);
        if k != last {
            for a in self.state.alloc.iter_mut() {
                if *a == last {
                    *a = k;
                }
            }
        }
        c
    }

    pub(super) fn update_allocations(&mut self) -> Result<()> {
        let n = self.data.len();
        let p = self.data.response_dim();
        let w = self.state.site_weights(&self.data);
        let empty = ClusterStats::empty(p);
        for i in 0..n {
            let yi = self.data.y[i].clone();
            let u = self.data.site_of[i];
            let k0 = self.state.alloc[i];
            self.state.clusters[k0].remove(&yi, u);
            self.state.alloc[i] = usize::MAX;
            let (cand_jump, cand_scores) = if self.state.clusters[k0].count() == 0 {
                let c = self.remove_cluster(k0);
                (c.jump, c.log_scores)
            } else {
                let r = self.score.sample_log_prior(&mut self.rng);
                let vm: f64 = r.iter().zip(&w).map(|(r, w)| w * r.exp()).sum();
                let j = self.state.levy.sample_jump_given_scores(vm, &mut self.rng)?;
                (j, r)
            };
            let cand_v: f64 = cand_scores.iter().zip(&w).map(|(r, w)| w * r.exp()).sum();
            let kernel = &self.state.kernel;
            let mut log_w: Vec<f64> = self
                .state
                .clusters
                .iter()
                .map(|c| c.jump.ln() + c.log_scores[u] + log_predictive_ratio(kernel, &c.stats, &yi))
                .collect();
            log_w.push(
                self.state.mass.ln()
                    + cand_scores[u]
                    + self.state.levy.gamma_integral(cand_v).ln()
                    + log_predictive_ratio(kernel, &empty, &yi),
            );
            let choice = sample_log_weights(&log_w, &mut self.rng);
            if choice == self.state.clusters.len() {
                self.state.clusters.push(Cluster::new(cand_jump, cand_scores, p));
            }
            self.state.clusters[choice].add(&yi, u);
            self.state.alloc[i] = choice;
        }
        Ok(())
    }

    pub(super) fn update_jumps(&mut self) -> Result<()> {
        let w = self.state.site_weights(&self.data);
        let adapting = self.adapting;
        for k in 0..self.state.clusters.len() {
            let c = &self.state.clusters[k];
            let vm = c.weighted_score_sum(&w);
            let draw = self.state.levy.sample_allocated_jump(
                c.count(),
                vm,
                c.jump,
                self.steps.jump.scale(),
                &mut self.rng,
            )?;
            if let Some(acc) = draw.accepted {
                self.steps.jump.record(acc as u8 as f64, acc, adapting);
            }
            self.state.clusters[k].jump = draw.value;
        }
        Ok(())
    }

    /// Preconditioned Crank–Nicolson moves on each cluster's log-scores.
    pub(super) fn update_scores(&mut self) -> Result<()> {
        let w = self.state.site_weights(&self.data);
        for k in 0..self.state.clusters.len() {
            let beta = self.steps.scores.scale().min(1.0);
            let rho = (1.0 - beta * beta).sqrt();
            let noise = self.score.sample_log_prior(&mut self.rng);
            let c = &self.state.clusters[k];
            let proposal: Vec<f64> = c
                .log_scores
                .iter()
                .zip(&noise)
                .map(|(r, e)| rho * r + beta * e)
                .collect();
            let log_ratio = c.score_likelihood(&proposal, &w) - c.score_likelihood(&c.log_scores, &w);
            let (alpha, ok) = accept(log_ratio, &mut self.rng);
            self.steps.scores.record(alpha, ok, self.adapting);
            if ok {
                self.state.clusters[k].log_scores = proposal;
            }
        }
        Ok(())
    }

    pub(super) fn update_v(&mut self) -> Result<()> {
        let n = self.data.len();
        let mut w = self.state.site_weights(&self.data);
        let count = self.model.v_updates.unwrap_or(n).min(n);
        for j in 0..count {
            let i = (self.v_cursor + j) % n.max(1);
            let u = self.data.site_of[i];
            let v = self.state.v[i];
            let step = self.steps.v[i].scale();
            let v_new = v * (step * normal(&mut self.rng)).exp();
            let total_jm: f64 = self
                .state
                .clusters
                .iter()
                .map(|c| c.jump * c.log_scores[u].exp())
                .sum();
            let mut w_new = w.clone();
            w_new[u] += v_new - v;
            let Sampler {
                rng,
                counters,
                model,
                state,
                score,
                ..
            } = self;
            let lhat = laplace(rng, counters, model, &state.levy, score, &w_new, state.mass)?;
            let log_ratio = -(v_new - v) * total_jm + total(&lhat) - state.log_lhat_total()
                + (v_new / v).ln();
            let (alpha, ok) = accept(log_ratio, rng);
            self.steps.v[i].record(alpha, ok, self.adapting);
            if ok {
                self.state.v[i] = v_new;
                self.state.log_lhat = lhat;
                w = w_new;
            }
        }
        if n > 0 {
            self.v_cursor = (self.v_cursor + count) % n;
        }
        Ok(())
    }

    /// Joint move `v → s v`, `J → J/s` that leaves every product `v_i J_k` fixed.
    pub(super) fn update_v_scale(&mut self) -> Result<()> {
        if self.data.is_empty() {
            return Ok(());
        }
        let ln_s = self.steps.v_scale.scale() * normal(&mut self.rng);
        let s = ln_s.exp();
        let v_new: Vec<f64> = self.state.v.iter().map(|v| v * s).collect();
        let w_new = site_weights(&v_new, &self.data);
        let levy = &self.state.levy;
        let mut log_ratio = -(self.state.k() as f64) * ln_s;
        for c in &self.state.clusters {
            log_ratio += levy.log_levy_density(c.jump / s) - levy.log_levy_density(c.jump);
        }
        let Sampler {
            rng,
            counters,
            model,
            state,
            score,
            ..
        } = self;
        let lhat = laplace(rng, counters, model, &state.levy, score, &w_new, state.mass)?;
        log_ratio += total(&lhat) - state.log_lhat_total();
        let (alpha, ok) = accept(log_ratio, rng);
        self.steps.v_scale.record(alpha, ok, self.adapting);
        if ok {
            self.state.v = v_new;
            for c in &mut self.state.clusters {
                c.jump /= s;
            }
            self.state.log_lhat = lhat;
        }
        Ok(())
    }

    /// Metropolis step on the Lévy measure given a proposed spec and the
    /// prior-plus-Jacobian part of the log ratio.
    fn levy_move(&mut self, proposal: Result<LevySpec>, log_prior_jacobian: f64) -> Result<(f64, bool)> {
        let Ok(levy_new) = proposal else {
            return Ok((0.0, false));
        };
        let mut log_ratio = log_prior_jacobian;
        if !log_ratio.is_finite() {
            return Ok((0.0, false));
        }
        for c in &self.state.clusters {
            log_ratio += levy_new.log_levy_density(c.jump) - self.state.levy.log_levy_density(c.jump);
        }
        let w = self.state.site_weights(&self.data);
        let Sampler {
            rng,
            counters,
            model,
            state,
            score,
            ..
        } = self;
        let lhat = laplace(rng, counters, model, &levy_new, score, &w, state.mass)?;
        log_ratio += total(&lhat) - state.log_lhat_total();
        let (alpha, ok) = accept(log_ratio, rng);
        if ok {
            self.state.levy = levy_new;
            self.state.log_lhat = lhat;
        }
        Ok((alpha, ok))
    }

    pub(super) fn update_sigma(&mut self) -> Result<()> {
        let levy = &self.state.levy;
        if !matches!(levy.family, LevyFamily::GeneralizedGamma | LevyFamily::StableBeta) {
            return Ok(());
        }
        let s = levy.sigma;
        let s_new = logistic(logit(s) + self.steps.sigma.scale() * normal(&mut self.rng));
        let prior = &self.model.priors.sigma;
        let lpj = prior.log_density(s_new) - prior.log_density(s)
            + (s_new * (1.0 - s_new)).ln()
            - (s * (1.0 - s)).ln();
        let proposal = levy.clone().with_sigma(s_new);
        let (alpha, ok) = self.levy_move(proposal, lpj)?;
        self.steps.sigma.record(alpha, ok, self.adapting);
        Ok(())
    }

    pub(super) fn update_gamma_shape(&mut self) -> Result<()> {
        let levy = &self.state.levy;
        if !levy.is_beta_family() {
            return Ok(());
        }
        let g = levy.gamma_shape;
        let g_new = g * (self.steps.gamma_shape.scale() * normal(&mut self.rng)).exp();
        let prior = &self.model.priors.gamma_shape;
        let lpj = prior.log_density(g_new) - prior.log_density(g) + (g_new / g).ln();
        let proposal = levy.clone().with_gamma_shape(g_new);
        let (alpha, ok) = self.levy_move(proposal, lpj)?;
        self.steps.gamma_shape.record(alpha, ok, self.adapting);
        Ok(())
    }

    pub(super) fn update_mass(&mut self) -> Result<()> {
        let m = self.state.mass;
        let ln_ratio = self.steps.mass.scale() * normal(&mut self.rng);
        let m_new = m * ln_ratio.exp();
        let prior = &self.model.priors.mass;
        let k = self.state.k() as f64;
        let mut log_ratio =
            prior.log_density(m_new) - prior.log_density(m) + (k + 1.0) * ln_ratio;
        let w = self.state.site_weights(&self.data);
        let Sampler {
            rng,
            counters,
            model,
            state,
            score,
            ..
        } = self;
        let lhat = laplace(rng, counters, model, &state.levy, score, &w, m_new)?;
        if model.fault != Some(Fault::DropMassLaplaceRatio) {
            log_ratio += total(&lhat) - state.log_lhat_total();
        }
        let (alpha, ok) = accept(log_ratio, rng);
        self.steps.mass.record(alpha, ok, self.adapting);
        if ok {
            self.state.mass = m_new;
            self.state.log_lhat = lhat;
        }
        Ok(())
    }

    /// Componentwise log random walk on τ with the log-scores held fixed.
    pub(super) fn update_tau(&mut self) -> Result<()> {
        let w = self.state.site_weights(&self.data);
        for j in 0..self.state.score_params.values().len() {
            let values = self.state.score_params.values();
            let ln_ratio = self.steps.tau[j].scale() * normal(&mut self.rng);
            let mut proposed = values.clone();
            proposed[j] *= ln_ratio.exp();
            let prior = &self.model.priors.tau[j];
            let mut log_ratio =
                prior.log_density(proposed[j]) - prior.log_density(values[j]) + ln_ratio;
            let params = self.state.score_params.with_values(&proposed);
            let score_new = match self.score.with_params(params) {
                Ok(s) => s,
                Err(Error::Factorization(_)) => {
                    self.steps.tau[j].record(0.0, false, self.adapting);
                    continue;
                }
                Err(e) => return Err(e),
            };
            for c in &self.state.clusters {
                log_ratio += score_new.log_density_log_scale(&c.log_scores)
                    - self.score.log_density_log_scale(&c.log_scores);
            }
            let Sampler {
                rng,
                counters,
                model,
                state,
                ..
            } = self;
            let lhat = laplace(rng, counters, model, &state.levy, &score_new, &w, state.mass)?;
            log_ratio += total(&lhat) - state.log_lhat_total();
            let (alpha, ok) = accept(log_ratio, rng);
            self.steps.tau[j].record(alpha, ok, self.adapting);
            if ok {
                self.state.score_params = score_new.params().clone();
                self.score = score_new;
                self.state.log_lhat = lhat;
            }
        }
        Ok(())
    }

    /// Scales every variance component by `c` and every log-score by `√c`,
    /// which keeps the standardized scores fixed.
    pub(super) fn update_tau_scale(&mut self) -> Result<()> {
        let ln_c = self.steps.tau_scale.scale() * normal(&mut self.rng);
        let c = ln_c.exp();
        let values = self.state.score_params.values();
        let comps = self.state.score_params.variance_components();
        let mut log_ratio = comps.len() as f64 * ln_c;
        for &j in comps {
            let prior = &self.model.priors.tau[j];
            log_ratio += prior.log_density(values[j] * c) - prior.log_density(values[j]);
        }
        let params = self.state.score_params.scaled(c);
        let score_new = match self.score.with_params(params) {
            Ok(s) => s,
            Err(Error::Factorization(_)) => {
                self.steps.tau_scale.record(0.0, false, self.adapting);
                return Ok(());
            }
            Err(e) => return Err(e),
        };
        let w = self.state.site_weights(&self.data);
        let root = c.sqrt();
        let scaled: Vec<Vec<f64>> = self
            .state
            .clusters
            .iter()
            .map(|cl| cl.log_scores.iter().map(|r| r * root).collect())
            .collect();
        for (cl, r_new) in self.state.clusters.iter().zip(&scaled) {
            log_ratio += cl.score_likelihood(r_new, &w) - cl.score_likelihood(&cl.log_scores, &w);
        }
        let Sampler {
            rng,
            counters,
            model,
            state,
            ..
        } = self;
        let lhat = laplace(rng, counters, model, &state.levy, &score_new, &w, state.mass)?;
        log_ratio += total(&lhat) - state.log_lhat_total();
        let (alpha, ok) = accept(log_ratio, rng);
        self.steps.tau_scale.record(alpha, ok, self.adapting);
        if ok {
            for (cl, r_new) in self.state.clusters.iter_mut().zip(scaled) {
                cl.log_scores = r_new;
            }
            self.state.score_params = score_new.params().clone();
            self.score = score_new;
            self.state.log_lhat = lhat;
        }
        Ok(())
    }

    /// Gibbs steps for the kernel location and scale, random walk on the
    /// mix fraction. Only the univariate kernel has free hyperparameters.
    pub(super) fn update_kernel(&mut self) -> Result<()> {
        let KernelSpec::UnivariateNormal {
            mut mu,
            mut sigma2,
            mix_fraction: a,
        } = self.state.kernel
        else {
            return Ok(());
        };
        let n = self.data.len();
        let u = self.model.updates.clone();
        let clusters = &self.state.clusters;
        if u.kernel_location && n >= 1 {
            let mut precision = 0.0;
            let mut weighted = 0.0;
            for c in clusters {
                let nk = c.count() as f64;
                let scale = sigma2 * (a + nk * (1.0 - a));
                precision += nk / scale;
                weighted += c.stats.sum[0] / scale;
            }
            mu = weighted / precision + normal(&mut self.rng) / precision.sqrt();
        }
        if u.kernel_scale && n >= 2 {
            let mut q = 0.0;
            for c in clusters {
                let nk = c.count() as f64;
                let sd = c.stats.sum[0] - nk * mu;
                let sd2 = c.stats.outer[0] - 2.0 * mu * c.stats.sum[0] + nk * mu * mu;
                q += (sd2 - (1.0 - a) * sd * sd / (a + nk * (1.0 - a))) / a;
            }
            let g = Gamma::new(n as f64 / 2.0, 1.0)
                .map_err(|e| Error::Numerical(e.to_string()))?
                .sample(&mut self.rng);
            sigma2 = 0.5 * q.max(f64::MIN_POSITIVE) / g;
        }
        self.state.kernel = KernelSpec::UnivariateNormal {
            mu,
            sigma2,
            mix_fraction: a,
        };
        if u.kernel_mix {
            let a_new = logistic(logit(a) + self.steps.mix.scale() * normal(&mut self.rng));
            let proposal = KernelSpec::UnivariateNormal {
                mu,
                sigma2,
                mix_fraction: a_new,
            };
            let prior = &self.model.priors.mix_fraction;
            let mut log_ratio = prior.log_density(a_new) - prior.log_density(a)
                + (a_new * (1.0 - a_new)).ln()
                - (a * (1.0 - a)).ln();
            if a_new > 0.0 && a_new < 1.0 {
                for c in &self.state.clusters {
                    log_ratio += log_marginal(&proposal, &c.stats) - log_marginal(&self.state.kernel, &c.stats);
                }
            } else {
                log_ratio = f64::NEG_INFINITY;
            }
            let (alpha, ok) = accept(log_ratio, &mut self.rng);
            self.steps.mix.record(alpha, ok, self.adapting);
            if ok {
                self.state.kernel = proposal;
            }
        }
        Ok(())
    }
}
