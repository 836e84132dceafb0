//! Pseudo-marginal Metropolis-within-Gibbs sampler.
//!
//! The unallocated jumps are integrated out, which leaves the Laplace
//! functional `L(v)` in the target. It is replaced by the unbiased estimate
//! stored in the state; the estimate changes only when a proposal that moves
//! `v`, `ξ`, `M` or `τ` is accepted, together with that proposal.

pub mod adapt;
mod init;
pub mod state;
mod updates;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimator::{LaplaceProblem, DEFAULT_A};
use crate::kernel::KernelSpec;
use crate::levy::LevySpec;
use crate::parallel::Execution;
use crate::prior::Prior;
use crate::rng::{fork_seed, seeded, ChainRng};
use crate::score::{ScoreModel, ScoreParams};

pub use adapt::Step;
pub use state::{ChainState, Cluster};

/// Default estimator point budget, about 150 times the typical cost on
/// hundred-observation data sets.
pub const DEFAULT_MAX_POINTS: f64 = 2e5;

/// An update block: enabled flag, name, step.
type Block = (bool, &'static str, fn(&mut Sampler) -> Result<()>);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Priors {
    pub mass: Prior,
    /// One prior per score hyperparameter, in [`ScoreParams::values`] order.
    pub tau: Vec<Prior>,
    pub sigma: Prior,
    pub gamma_shape: Prior,
    pub mix_fraction: Prior,
}

impl Priors {
    /// `M ~ Ga(1,1)`, `φ⁻¹ ~ Ga(1,4)`, `L ~ Ga(1,1)`, ANOVA variances `Ga(1,2)`,
    /// uniform `σ` and mix fraction (rates throughout).
    pub fn defaults_for(params: &ScoreParams) -> Self {
        let tau = match params {
            ScoreParams::GaussianProcess { .. } => vec![
                Prior::InverseGamma {
                    shape: 1.0,
                    scale: 4.0,
                },
                Prior::Gamma {
                    shape: 1.0,
                    rate: 1.0,
                },
            ],
            ScoreParams::AnovaTwoWay { .. } => vec![
                Prior::Gamma {
                    shape: 1.0,
                    rate: 2.0
                };
                3
            ],
        };
        Priors {
            mass: Prior::Gamma {
                shape: 1.0,
                rate: 1.0,
            },
            tau,
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
        }
    }
}

/// Which blocks a sweep updates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Updates {
    pub allocation: bool,
    pub jumps: bool,
    pub scores: bool,
    pub v: bool,
    pub v_interweave: bool,
    pub sigma: bool,
    pub gamma_shape: bool,
    pub mass: bool,
    pub tau: bool,
    pub tau_interweave: bool,
    pub kernel_location: bool,
    pub kernel_scale: bool,
    pub kernel_mix: bool,
}

impl Default for Updates {
    fn default() -> Self {
        Updates {
            allocation: true,
            jumps: true,
            scores: true,
            v: true,
            v_interweave: true,
            sigma: false,
            gamma_shape: false,
            mass: true,
            tau: true,
            tau_interweave: true,
            kernel_location: true,
            kernel_scale: true,
            kernel_mix: true,
        }
    }
}

/// Deliberate errors for testing the correctness checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Fault {
    /// The mass update ignores the change in the Laplace estimate.
    DropMassLaplaceRatio,
}

/// Model and sampler settings; the starting hyperparameters double as the
/// fixed values of any block that is not updated.
#[derive(Clone, Debug)]
pub struct Model {
    pub levy: LevySpec,
    pub score_params: ScoreParams,
    pub kernel: KernelSpec,
    pub mass: f64,
    pub priors: Priors,
    pub a: f64,
    pub updates: Updates,
    pub execution: Execution,
    pub fault: Option<Fault>,
    /// Clusters used by the k-means start.
    pub initial_clusters: usize,
    /// Individual `v` proposals per sweep, cycling through the observations;
    /// `None` proposes every observation once.
    pub v_updates: Option<usize>,
    /// Budget of expected Poisson points per estimate; states beyond it are
    /// treated as having zero target density.
    pub max_points: f64,
}

impl Model {
    pub fn new(levy: LevySpec, score_params: ScoreParams, kernel: KernelSpec) -> Self {
        let priors = Priors::defaults_for(&score_params);
        Model {
            levy,
            score_params,
            kernel,
            mass: 1.0,
            priors,
            a: DEFAULT_A,
            updates: Updates::default(),
            execution: Execution::default(),
            fault: None,
            initial_clusters: 5,
            v_updates: None,
            max_points: DEFAULT_MAX_POINTS,
        }
    }

    pub fn validate(&self, data: &Dataset) -> Result<()> {
        self.levy.validate()?;
        self.kernel.validate()?;
        if self.kernel.dim() != data.response_dim() {
            return Err(Error::Config(format!(
                "kernel dimension {} does not match response dimension {}",
                self.kernel.dim(),
                data.response_dim()
            )));
        }
        if !(self.a > 1.0) {
            return Err(Error::Config("estimator.a must exceed 1".into()));
        }
        if !(self.max_points > 0.0) {
            return Err(Error::Config("estimator.max_points must be positive".into()));
        }
        if !(self.mass > 0.0) {
            return Err(Error::Config("initial mass must be positive".into()));
        }
        if self.priors.tau.len() != self.score_params.values().len() {
            return Err(Error::Config("one prior per score hyperparameter is required".into()));
        }
        for p in [
            &self.priors.mass,
            &self.priors.sigma,
            &self.priors.gamma_shape,
            &self.priors.mix_fraction,
        ]
        .into_iter()
        .chain(&self.priors.tau)
        {
            p.validate()?;
        }
        let cells = data.sites.iter().any(|s| matches!(s, crate::score::Location::Cell(..)));
        let anova = matches!(self.score_params, ScoreParams::AnovaTwoWay { .. });
        if !data.is_empty() && cells != anova {
            return Err(Error::Config(
                "score model does not match the regressor type".into(),
            ));
        }
        Ok(())
    }
}

/// Estimator bookkeeping for the pseudo-marginal audit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    /// Laplace-functional estimates computed.
    pub estimates: u64,
    /// Proposals that changed a quantity the functional depends on.
    pub laplace_proposals: u64,
    /// Proposals rejected for exceeding the estimator point budget.
    pub truncated: u64,
}

/// Adaptive proposal scales.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Steps {
    pub v: Vec<Step>,
    pub v_scale: Step,
    pub scores: Step,
    pub jump: Step,
    pub mass: Step,
    pub sigma: Step,
    pub gamma_shape: Step,
    pub tau: Vec<Step>,
    pub tau_scale: Step,
    pub mix: Step,
}

impl Steps {
    fn new(n: usize, tau: usize) -> Self {
        Steps {
            v: vec![Step::scalar(1.0); n],
            v_scale: Step::scalar(0.5),
            scores: Step::block(0.3),
            jump: Step::scalar(0.5),
            mass: Step::scalar(0.5),
            sigma: Step::scalar(0.5),
            gamma_shape: Step::scalar(0.5),
            tau: vec![Step::scalar(0.5); tau],
            tau_scale: Step::scalar(0.5),
            mix: Step::scalar(0.5),
        }
    }

    /// `(name, step)` for every block; `v` is pooled.
    pub fn named(&self, tau_names: &[&str]) -> Vec<(String, Vec<&Step>)> {
        let mut out = vec![
            ("v".to_string(), self.v.iter().collect()),
            ("v_scale".to_string(), vec![&self.v_scale]),
            ("scores".to_string(), vec![&self.scores]),
            ("jump".to_string(), vec![&self.jump]),
            ("mass".to_string(), vec![&self.mass]),
            ("sigma".to_string(), vec![&self.sigma]),
            ("gamma_shape".to_string(), vec![&self.gamma_shape]),
        ];
        for (name, s) in tau_names.iter().zip(&self.tau) {
            out.push((format!("tau.{name}"), vec![s]));
        }
        out.push(("tau_scale".to_string(), vec![&self.tau_scale]));
        out.push(("mix".to_string(), vec![&self.mix]));
        out
    }

    fn all_mut(&mut self) -> impl Iterator<Item = &mut Step> {
        self.v
            .iter_mut()
            .chain([
                &mut self.v_scale,
                &mut self.scores,
                &mut self.jump,
                &mut self.mass,
                &mut self.sigma,
                &mut self.gamma_shape,
                &mut self.tau_scale,
                &mut self.mix,
            ])
            .chain(self.tau.iter_mut())
    }
}

pub struct Sampler {
    model: Model,
    data: Dataset,
    state: ChainState,
    score: ScoreModel,
    steps: Steps,
    rng: ChainRng,
    iteration: u64,
    adapting: bool,
    counters: Counters,
    block_time: Vec<(&'static str, Duration)>,
    v_cursor: usize,
}

impl Sampler {
    /// Initializes a chain: `v = 1/n`, k-means allocations, prior scores and
    /// jumps at the mean of their conditional given the scores.
    pub fn new(model: Model, data: Dataset, seed: u64) -> Result<Self> {
        model.validate(&data)?;
        let mut rng = seeded(seed);
        let state = init::initial_state(&model, &data, &mut rng)?;
        Self::assemble(model, data, state, rng)
    }

    /// Starts from a given state. Its estimate components are kept, or
    /// computed afresh when empty.
    pub fn from_state(model: Model, data: Dataset, state: ChainState, seed: u64) -> Result<Self> {
        model.validate(&data)?;
        let mut probe = state.clone();
        if probe.log_lhat.is_empty() {
            probe.log_lhat = vec![0.0; data.site_count()];
        }
        probe
            .check(&data)
            .map_err(|e| Error::Config(format!("invalid starting state: {e}")))?;
        Self::assemble(model, data, state, seeded(seed))
    }

    fn assemble(model: Model, data: Dataset, mut state: ChainState, mut rng: ChainRng) -> Result<Self> {
        let score = ScoreModel::new(state.score_params.clone(), data.sites.clone())?;
        let steps = Steps::new(data.len(), state.score_params.values().len());
        if state.log_lhat.len() != data.site_count() {
            let w = state.site_weights(&data);
            let seed = fork_seed(&mut rng);
            state.log_lhat = LaplaceProblem::new(&state.levy, &score, &w, state.mass, model.a)?
                .estimate_sites(seed, model.execution)?
                .into_iter()
                .map(|e| e.log_value)
                .collect();
        }
        Ok(Sampler {
            model,
            data,
            state,
            score,
            steps,
            rng,
            iteration: 0,
            adapting: true,
            counters: Counters::default(),
            block_time: Vec::new(),
            v_cursor: 0,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn score_model(&self) -> &ScoreModel {
        &self.score
    }

    pub fn steps(&self) -> &Steps {
        &self.steps
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    pub fn rng_mut(&mut self) -> &mut ChainRng {
        &mut self.rng
    }

    /// Enables or freezes proposal adaptation.
    pub fn set_adapting(&mut self, adapting: bool) {
        self.adapting = adapting;
    }

    /// Windowed acceptance rates by block, then the windows are reset.
    pub fn take_acceptance(&mut self) -> Vec<(String, f64)> {
        let names = self.state.score_params.names();
        let rates = self
            .steps
            .named(names)
            .into_iter()
            .map(|(name, steps)| {
                let (a, p) = steps.iter().fold((0, 0), |(a, p), s| {
                    (a + s.window_accepted, p + s.window_proposed)
                });
                (name, if p == 0 { f64::NAN } else { a as f64 / p as f64 })
            })
            .collect();
        self.steps.all_mut().for_each(Step::reset_window);
        rates
    }

    /// Cumulative `(block, accepted, proposed)` counts.
    pub fn acceptance_totals(&self) -> Vec<(String, u64, u64)> {
        self.steps
            .named(self.state.score_params.names())
            .into_iter()
            .map(|(name, steps)| {
                let (a, p) = steps
                    .iter()
                    .fold((0, 0), |(a, p), s| (a + s.accepted, p + s.proposed));
                (name, a, p)
            })
            .collect()
    }

    /// Replaces the responses, keeping allocations (used for data
    /// re-simulation in joint-distribution checks).
    pub fn set_responses(&mut self, y: Vec<Vec<f64>>) -> Result<()> {
        if y.len() != self.data.len() {
            return Err(Error::Data("response count changed".into()));
        }
        self.data.y = y;
        let p = self.data.response_dim();
        for c in &mut self.state.clusters {
            c.stats = crate::kernel::ClusterStats::empty(p);
        }
        for (i, &k) in self.state.alloc.iter().enumerate() {
            self.state.clusters[k].stats.add(&self.data.y[i]);
        }
        Ok(())
    }

    /// Overwrites the kernel hyperparameters.
    pub fn set_kernel(&mut self, kernel: KernelSpec) {
        self.state.kernel = kernel;
    }

    /// Wall time spent in each block so far.
    pub fn block_times(&self) -> &[(&'static str, Duration)] {
        &self.block_time
    }

    fn timed(&mut self, name: &'static str, f: fn(&mut Self) -> Result<()>) -> Result<()> {
        let start = Instant::now();
        let out = f(self);
        let spent = start.elapsed();
        match self.block_time.iter_mut().find(|(n, _)| *n == name) {
            Some((_, t)) => *t += spent,
            None => self.block_time.push((name, spent)),
        }
        out
    }

    /// One full sweep in the order c, J, m, v, ξ, M, τ, kernel.
    pub fn sweep(&mut self) -> Result<()> {
        self.iteration += 1;
        let u = self.model.updates.clone();
        let blocks: [Block; 11] = [
            (u.allocation, "allocation", Self::update_allocations),
            (u.jumps, "jumps", Self::update_jumps),
            (u.scores, "scores", Self::update_scores),
            (u.v, "v", Self::update_v),
            (u.v_interweave, "v_scale", Self::update_v_scale),
            (u.sigma, "sigma", Self::update_sigma),
            (u.gamma_shape, "gamma_shape", Self::update_gamma_shape),
            (u.mass, "mass", Self::update_mass),
            (u.tau, "tau", Self::update_tau),
            (u.tau_interweave, "tau_scale", Self::update_tau_scale),
            (true, "kernel", Self::update_kernel),
        ];
        for (enabled, name, f) in blocks {
            if enabled {
                self.timed(name, f)?;
            }
        }
        Ok(())
    }
}
