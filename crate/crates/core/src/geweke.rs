//! Joint-distribution check of the sampler.
//!
//! Marginal-conditional draws simulate parameters, latents, the stored
//! Laplace estimate and data straight from the model. The successive-
//! conditional chain alternates a sweep with a fresh draw of the data given
//! the allocations. Both target the same joint law, so scalar summaries
//! must agree up to Monte Carlo error.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use crate::data::Dataset;
use crate::diagnostics::{batch_means, mean_se};
use crate::error::{Error, Result};
use crate::estimator::{LaplaceProblem, DEFAULT_A};
use crate::kernel::KernelSpec;
use crate::levy::LevySpec;
use crate::parallel::Execution;
use crate::prior::Prior;
use crate::rng::{fork_seed, seeded};
use crate::sampler::state::{site_weights, ChainState, Cluster};
use crate::sampler::{Fault, Model, Priors, Sampler, Updates};
use crate::score::{Location, ScoreModel, ScoreParams};

/// Jumps below this are represented only through their mean contribution.
const JUMP_FLOOR: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct GewekeConfig {
    pub xs: Vec<f64>,
    pub levy: LevySpec,
    pub priors: Priors,
    pub mu: f64,
    pub sigma2: f64,
    pub a: f64,
    pub marginal_draws: usize,
    pub iterations: usize,
    /// Adaptive iterations run and discarded before the recorded chain.
    pub warmup: usize,
    pub batches: usize,
    pub fault: Option<Fault>,
    pub seed: u64,
}

impl GewekeConfig {
    /// Five observations, Gamma directing process, exponential-covariance
    /// scores and a univariate kernel with fixed location and scale. The
    /// hyperpriors are tighter than the data-analysis defaults so that every
    /// simulated state is cheap to estimate.
    pub fn fixture(iterations: usize, seed: u64) -> Self {
        let priors = Priors {
            mass: Prior::Gamma {
                shape: 5.0,
                rate: 1.0,
            },
            tau: vec![
                Prior::Gamma {
                    shape: 4.0,
                    rate: 4.0,
                },
                Prior::Gamma {
                    shape: 2.0,
                    rate: 4.0,
                },
            ],
            sigma: Prior::Uniform {
                low: 0.0,
                high: 1.0,
            },
            gamma_shape: Prior::Gamma {
                shape: 1.0,
                rate: 1.0,
            },
            mix_fraction: Prior::Uniform {
                low: 0.0,
                high: 1.0,
            },
        };
        GewekeConfig {
            xs: vec![0.1, 0.3, 0.5, 0.7, 0.9],
            levy: LevySpec::gamma(),
            priors,
            mu: 0.0,
            sigma2: 1.0,
            a: DEFAULT_A,
            marginal_draws: iterations,
            iterations,
            warmup: 2_000,
            batches: 100,
            fault: None,
            seed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GewekeStat {
    pub name: &'static str,
    pub marginal_mean: f64,
    pub chain_mean: f64,
    pub z: f64,
}

#[derive(Clone, Debug)]
pub struct GewekeReport {
    pub stats: Vec<GewekeStat>,
}

impl GewekeReport {
    pub fn max_abs_z(&self) -> f64 {
        self.stats.iter().map(|s| s.z.abs()).fold(0.0, f64::max)
    }
}

pub const STAT_NAMES: [&str; 7] = [
    "K",
    "mean_log_v",
    "log_M",
    "log_variance",
    "log_lengthscale",
    "mix_fraction",
    "log_L_hat",
];

fn statistics(state: &ChainState) -> [f64; 7] {
    let tau = state.score_params.values();
    let mix = match state.kernel {
        KernelSpec::UnivariateNormal { mix_fraction, .. } => mix_fraction,
        _ => f64::NAN,
    };
    [
        state.k() as f64,
        state.v.iter().map(|v| v.ln()).sum::<f64>() / state.v.len() as f64,
        state.mass.ln(),
        tau[0].ln(),
        tau[1].ln(),
        mix,
        state.log_lhat_total(),
    ]
}

fn sites(cfg: &GewekeConfig) -> Arc<Vec<Location>> {
    Arc::new(cfg.xs.iter().map(|&x| Location::Point(vec![x])).collect())
}

/// Responses given allocations, with cluster locations integrated out.
fn draw_responses<R: Rng + ?Sized>(state: &ChainState, rng: &mut R) -> Vec<Vec<f64>> {
    let KernelSpec::UnivariateNormal {
        mu,
        sigma2,
        mix_fraction: a,
    } = state.kernel
    else {
        unreachable!("univariate fixture")
    };
    let theta: Vec<f64> = (0..state.k())
        .map(|_| {
            let e: f64 = StandardNormal.sample(rng);
            mu + ((1.0 - a) * sigma2).sqrt() * e
        })
        .collect();
    state
        .alloc
        .iter()
        .map(|&k| {
            let e: f64 = StandardNormal.sample(rng);
            vec![theta[k] + (a * sigma2).sqrt() * e]
        })
        .collect()
}

/// One exact draw of the full state and data from the model.
fn marginal_draw<R: Rng + ?Sized>(
    cfg: &GewekeConfig,
    sites: &Arc<Vec<Location>>,
    data: &Dataset,
    rng: &mut R,
) -> Result<(ChainState, Vec<Vec<f64>>)> {
    let p = &cfg.priors;
    let mass = p.mass.sample(rng);
    let params = ScoreParams::GaussianProcess {
        variance: p.tau[0].sample(rng),
        lengthscale: p.tau[1].sample(rng),
    };
    let mix_fraction = p.mix_fraction.sample(rng);
    let score = ScoreModel::new(params.clone(), Arc::clone(sites))?;
    let jumps = cfg.levy.sample_jumps_above(mass, JUMP_FLOOR, rng)?;
    if jumps.is_empty() {
        return Err(Error::Numerical("no jumps above the floor".into()));
    }
    let scores: Vec<Vec<f64>> = jumps.iter().map(|_| score.sample_log_prior(rng)).collect();
    let n = cfg.xs.len();
    let small = cfg.levy.small_jump_mean(mass, JUMP_FLOOR);
    let mut alloc_raw = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for u in 0..n {
        let w: Vec<f64> = jumps.iter().zip(&scores).map(|(j, r)| j * r[u].exp()).collect();
        let total: f64 = w.iter().sum::<f64>() + small * score.mean_score(u);
        v.push(Exp::new(total).map_err(|e| Error::Numerical(e.to_string()))?.sample(rng));
        let mut x = rng.random::<f64>() * w.iter().sum::<f64>();
        let mut pick = w.len() - 1;
        for (k, wk) in w.iter().enumerate() {
            if x < *wk {
                pick = k;
                break;
            }
            x -= wk;
        }
        alloc_raw.push(pick);
    }
    let mut label = std::collections::HashMap::new();
    let mut clusters: Vec<Cluster> = Vec::new();
    let mut alloc = Vec::with_capacity(n);
    for (i, &j) in alloc_raw.iter().enumerate() {
        let k = *label.entry(j).or_insert_with(|| {
            clusters.push(Cluster::new(jumps[j], scores[j].clone(), 1));
            clusters.len() - 1
        });
        clusters[k].site_counts[data.site_of[i]] += 1;
        alloc.push(k);
    }
    let mut state = ChainState {
        alloc,
        clusters,
        v,
        mass,
        levy: cfg.levy.clone(),
        score_params: params,
        kernel: KernelSpec::UnivariateNormal {
            mu: cfg.mu,
            sigma2: cfg.sigma2,
            mix_fraction,
        },
        log_lhat: vec![],
    };
    let w = site_weights(&state.v, data);
    let problem = LaplaceProblem::new(&state.levy, &score, &w, mass, cfg.a)?;
    state.log_lhat = (0..n)
        .map(|u| problem.estimate_site_tilted(u, rng))
        .collect::<Result<_>>()?;
    let y = draw_responses(&state, rng);
    for (i, &k) in state.alloc.iter().enumerate() {
        state.clusters[k].stats.add(&y[i]);
    }
    Ok((state, y))
}

fn fixture_model(cfg: &GewekeConfig) -> Model {
    let mut model = Model::new(
        cfg.levy.clone(),
        ScoreParams::GaussianProcess {
            variance: 1.0,
            lengthscale: 1.0,
        },
        KernelSpec::UnivariateNormal {
            mu: cfg.mu,
            sigma2: cfg.sigma2,
            mix_fraction: 0.5,
        },
    );
    model.priors = cfg.priors.clone();
    model.a = cfg.a;
    model.updates = Updates {
        kernel_location: false,
        kernel_scale: false,
        ..Updates::default()
    };
    model.execution = Execution::Sequential;
    model.fault = cfg.fault;
    model
}

/// Runs both simulators and compares the summary means.
pub fn geweke_check(cfg: &GewekeConfig) -> Result<GewekeReport> {
    let mut rng = seeded(cfg.seed);
    let sites = sites(cfg);
    let n = cfg.xs.len();
    let xs: Vec<Location> = sites.iter().cloned().collect();
    let data = Dataset::with_dim(vec![vec![0.0]; n], xs, 1)?;

    let mut marginal: Vec<Vec<f64>> = (0..7).map(|_| Vec::with_capacity(cfg.marginal_draws)).collect();
    let mut drawn = 0;
    while drawn < cfg.marginal_draws {
        let Ok((state, _)) = marginal_draw(cfg, &sites, &data, &mut rng) else {
            continue;
        };
        for (m, s) in marginal.iter_mut().zip(statistics(&state)) {
            m.push(s);
        }
        drawn += 1;
    }

    let (start, y) = loop {
        if let Ok(d) = marginal_draw(cfg, &sites, &data, &mut rng) {
            break d;
        }
    };
    let mut chain_data = data.clone();
    chain_data.y = y;
    let seed = fork_seed(&mut rng);
    let mut sampler = Sampler::from_state(fixture_model(cfg), chain_data, start, seed)?;
    let record = |sampler: &mut Sampler, keep: bool, out: &mut Vec<Vec<f64>>| -> Result<()> {
        sampler.sweep()?;
        let state = sampler.state().clone();
        let y = draw_responses(&state, sampler.rng_mut());
        sampler.set_responses(y)?;
        if keep {
            for (m, s) in out.iter_mut().zip(statistics(sampler.state())) {
                m.push(s);
            }
        }
        Ok(())
    };
    let mut chain: Vec<Vec<f64>> = (0..7).map(|_| Vec::with_capacity(cfg.iterations)).collect();
    for _ in 0..cfg.warmup {
        record(&mut sampler, false, &mut chain)?;
    }
    sampler.set_adapting(false);
    for _ in 0..cfg.iterations {
        record(&mut sampler, true, &mut chain)?;
    }

    let stats = STAT_NAMES
        .iter()
        .zip(marginal.iter().zip(&chain))
        .map(|(name, (m, c))| {
            let (mm, mse) = mean_se(m);
            let (cm, cse) = batch_means(c, cfg.batches);
            let se = (mse * mse + cse * cse).sqrt();
            GewekeStat {
                name,
                marginal_mean: mm,
                chain_mean: cm,
                z: if se > 0.0 { (mm - cm) / se } else { 0.0 },
            }
        })
        .collect();
    Ok(GewekeReport { stats })
}
