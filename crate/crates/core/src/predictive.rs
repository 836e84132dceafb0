//! Posterior predictive densities of `y` at new regressor values.
//!
//! For each retained state the mixing weights at `x*` are `J_k m_k(x*)` for
//! the allocated clusters plus the expected unallocated mass
//! `M E[m(x*) γ(Σ_u w_u m_u)]` under the score prior, estimated by Monte
//! Carlo. Cluster densities are the conjugate posterior predictives, the
//! remainder uses the prior predictive. Densities are averaged over states.

use rand::Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernel::{log_predictive_ratio, ClusterStats};
use crate::parallel::Execution;
use crate::rng::{fork_seed, substream};
use crate::sampler::state::{site_weights, ChainState};
use crate::score::{Location, ScoreModel};

/// Draws used to estimate the unallocated mass at each `x*`.
pub const DEFAULT_REMAINDER_DRAWS: usize = 10;

/// Rejects `x*` that the score model cannot place.
pub fn check_location(data: &Dataset, x: &Location) -> Result<()> {
    match (&data.levels, x) {
        (Some(levels), Location::Cell(r, c)) => {
            if *r >= levels[0].len() || *c >= levels[1].len() {
                return Err(Error::Domain(format!(
                    "cell ({r}, {c}) is outside the categorical level set"
                )));
            }
            Ok(())
        }
        (Some(_), Location::Point(_)) => {
            Err(Error::Domain("categorical data needs a cell location".into()))
        }
        (None, Location::Point(p)) => {
            let want = match data.x.first() {
                Some(Location::Point(q)) => q.len(),
                _ => p.len(),
            };
            if p.len() != want || p.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!(
                    "regressor value needs {want} finite coordinates"
                )));
            }
            Ok(())
        }
        (None, Location::Cell(..)) => {
            Err(Error::Domain("continuous data cannot take a cell location".into()))
        }
    }
}

/// Log mixing weights at `x` and the log weight of the unallocated remainder.
fn log_weights<R: Rng + ?Sized>(
    state: &ChainState,
    score: &ScoreModel,
    w: &[f64],
    x: &Location,
    draws: usize,
    rng: &mut R,
) -> Result<(Vec<f64>, f64)> {
    let cond = score.conditional(x)?;
    let clusters = state
        .clusters
        .iter()
        .map(|c| c.jump.ln() + cond.sample(&c.log_scores, rng))
        .collect();
    let mut rest = 0.0;
    for _ in 0..draws {
        let r = score.sample_log_prior(rng);
        let v: f64 = r.iter().zip(w).map(|(ri, wi)| wi * ri.exp()).sum();
        rest += cond.sample(&r, rng).exp() * state.levy.gamma_integral(v);
    }
    let rest = (state.mass * rest / draws as f64).ln();
    Ok((clusters, rest))
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Log predictive density of each `y` at `x` under one state.
fn state_log_density<R: Rng + ?Sized>(
    state: &ChainState,
    data: &Dataset,
    x: &Location,
    ys: &[Vec<f64>],
    draws: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let score = ScoreModel::new(state.score_params.clone(), data.sites.clone())?;
    let w = site_weights(&state.v, data);
    let (lw, rest) = log_weights(state, &score, &w, x, draws, rng)?;
    let norm = log_sum_exp(lw.iter().copied().chain(std::iter::once(rest)));
    let empty = ClusterStats::empty(data.response_dim());
    Ok(ys
        .iter()
        .map(|y| {
            let terms = state
                .clusters
                .iter()
                .zip(&lw)
                .map(|(c, l)| l + log_predictive_ratio(&state.kernel, &c.stats, y))
                .chain(std::iter::once(
                    rest + log_predictive_ratio(&state.kernel, &empty, y),
                ));
            log_sum_exp(terms.collect::<Vec<_>>().into_iter()) - norm
        })
        .collect())
}

/// Posterior mean log density: entry `[j][l]` is `log p(ys[l] | xs[j])`.
pub fn log_predictive_grid(
    states: &[ChainState],
    data: &Dataset,
    xs: &[Location],
    ys: &[Vec<f64>],
    draws: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<Vec<f64>>> {
    if states.is_empty() {
        return Err(Error::Domain("no retained states".into()));
    }
    for x in xs {
        check_location(data, x)?;
    }
    let per_state: Vec<Result<Vec<Vec<f64>>>> = exec.map_indexed(states.len(), |s| {
        let mut rng = substream(seed, s as u64);
        xs.iter()
            .map(|x| state_log_density(&states[s], data, x, ys, draws, &mut rng))
            .collect()
    });
    let per_state = per_state.into_iter().collect::<Result<Vec<_>>>()?;
    let ln_s = (states.len() as f64).ln();
    Ok((0..xs.len())
        .map(|j| {
            (0..ys.len())
                .map(|l| log_sum_exp(per_state.iter().map(|p| p[j][l])) - ln_s)
                .collect()
        })
        .collect())
}

/// Posterior mean density on an `xs × ys` lattice.
pub fn predictive_density<R: Rng + ?Sized>(
    states: &[ChainState],
    data: &Dataset,
    xs: &[Location],
    ys: &[Vec<f64>],
    draws: usize,
    rng: &mut R,
    exec: Execution,
) -> Result<Vec<Vec<f64>>> {
    let seed = fork_seed(rng);
    let grid = log_predictive_grid(states, data, xs, ys, draws, seed, exec)?;
    Ok(grid
        .into_iter()
        .map(|row| row.into_iter().map(f64::exp).collect())
        .collect())
}

/// `log p(y_i | x_i)` for paired test points.
pub fn log_predictive_points(
    states: &[ChainState],
    data: &Dataset,
    points: &[(Location, Vec<f64>)],
    draws: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<f64>> {
    if states.is_empty() {
        return Err(Error::Domain("no retained states".into()));
    }
    for (x, _) in points {
        check_location(data, x)?;
    }
    let per_state: Vec<Result<Vec<f64>>> = exec.map_indexed(states.len(), |s| {
        let mut rng = substream(seed, s as u64);
        points
            .iter()
            .map(|(x, y)| {
                state_log_density(&states[s], data, x, std::slice::from_ref(y), draws, &mut rng)
                    .map(|v| v[0])
            })
            .collect()
    });
    let per_state = per_state.into_iter().collect::<Result<Vec<_>>>()?;
    let ln_s = (states.len() as f64).ln();
    Ok((0..points.len())
        .map(|i| log_sum_exp(per_state.iter().map(|p| p[i])) - ln_s)
        .collect())
}
