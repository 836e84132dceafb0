//! K-fold cross-validated log predictive score.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::archive::{collect_chain, Schedule};
use crate::config::RunConfig;
use crate::data::Dataset;
use crate::diagnostics::mean_se;
use crate::error::{Error, Result};
use crate::predictive::log_predictive_points;
use crate::rng::{seeded, substream};

/// Fold label of each observation. Sizes differ by at most one and the
/// result depends only on `(n, folds, seed)`.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded(seed));
    let mut fold = vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        fold[i] = rank % folds;
    }
    fold
}

#[derive(Clone, Debug)]
pub struct CvResult {
    /// `-(1/n) Σ log p(y_i | training data)`.
    pub lps: f64,
    pub fold_lps: Vec<f64>,
    /// Standard error of the fold scores.
    pub se: f64,
    pub log_densities: Vec<f64>,
}

/// Fits each training split and scores its held-out points.
pub fn lps_cross_validation(config: &RunConfig, data: &Dataset, folds: usize, seed: u64) -> Result<CvResult> {
    let n = data.len();
    if folds < 2 || folds > n {
        return Err(Error::Config(format!("cannot split {n} observations into {folds} folds")));
    }
    let label = fold_assignment(n, folds, seed);
    let s = &config.sampler;
    let schedule = Schedule {
        iterations: s.iterations,
        burn_in: s.burn_in,
        thin: s.thin,
    };
    let mut log_densities = vec![f64::NAN; n];
    let mut fold_lps = Vec::with_capacity(folds);
    for f in 0..folds {
        let train: Vec<usize> = (0..n).filter(|&i| label[i] != f).collect();
        let test: Vec<usize> = (0..n).filter(|&i| label[i] == f).collect();
        let train_data = data.subset(&train);
        let model = config.model_for(&train_data)?;
        let mut stream = substream(seed, f as u64 + 1);
        let chain_seed: u64 = stream.random();
        let (states, _) = collect_chain(model, train_data.clone(), schedule, chain_seed)?;
        let points: Vec<_> = test
            .iter()
            .map(|&i| (data.x[i].clone(), data.y[i].clone()))
            .collect();
        let lp = log_predictive_points(
            &states,
            &train_data,
            &points,
            config.grid.remainder_draws,
            stream.random(),
            config.execution(),
        )?;
        for (&i, l) in test.iter().zip(&lp) {
            log_densities[i] = *l;
        }
        fold_lps.push(-lp.iter().sum::<f64>() / lp.len() as f64);
    }
    let lps = -log_densities.iter().sum::<f64>() / n as f64;
    let (_, se) = mean_se(&fold_lps);
    Ok(CvResult {
        lps,
        fold_lps,
        se,
        log_densities,
    })
}
