use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::kernel::{ClusterStats, KernelSpec};
use crate::levy::LevySpec;
use crate::score::ScoreParams;

/// An allocated atom: its jump, log-scores at every site and the cached
/// sufficient statistics of its members.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub jump: f64,
    pub log_scores: Vec<f64>,
    pub stats: ClusterStats,
    /// Members at each site.
    pub site_counts: Vec<u32>,
}

impl Cluster {
    pub fn new(jump: f64, log_scores: Vec<f64>, p: usize) -> Self {
        let sites = log_scores.len();
        Cluster {
            jump,
            log_scores,
            stats: ClusterStats::empty(p),
            site_counts: vec![0; sites],
        }
    }

    pub fn count(&self) -> usize {
        self.stats.count
    }

    pub fn add(&mut self, y: &[f64], site: usize) {
        self.stats.add(y);
        self.site_counts[site] += 1;
    }

    pub fn remove(&mut self, y: &[f64], site: usize) {
        self.stats.remove(y);
        self.site_counts[site] -= 1;
    }

    /// `Σ_u w_u m_u`.
    pub fn weighted_score_sum(&self, weights: &[f64]) -> f64 {
        self.log_scores
            .iter()
            .zip(weights)
            .map(|(r, w)| w * r.exp())
            .sum()
    }

    /// Log-likelihood of the log-scores given the jump: `Σ n_u r_u - J Σ w_u e^{r_u}`.
    pub fn score_likelihood(&self, log_scores: &[f64], weights: &[f64]) -> f64 {
        let mut total = 0.0;
        for ((r, w), n) in log_scores.iter().zip(weights).zip(&self.site_counts) {
            total += *n as f64 * r - self.jump * w * r.exp();
        }
        total
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub alloc: Vec<usize>,
    pub clusters: Vec<Cluster>,
    pub v: Vec<f64>,
    pub mass: f64,
    pub levy: LevySpec,
    pub score_params: ScoreParams,
    pub kernel: KernelSpec,
    /// Log Laplace-functional estimate, one component per site.
    pub log_lhat: Vec<f64>,
}

impl ChainState {
    pub fn k(&self) -> usize {
        self.clusters.len()
    }

    pub fn log_lhat_total(&self) -> f64 {
        self.log_lhat.iter().sum()
    }

    /// Latent weight per site.
    pub fn site_weights(&self, data: &Dataset) -> Vec<f64> {
        site_weights(&self.v, data)
    }

    /// Checks bookkeeping against a recomputation from `data`.
    pub fn check(&self, data: &Dataset) -> Result<(), String> {
        let n = data.len();
        if self.alloc.len() != n || self.v.len() != n {
            return Err("allocation or latent vector has the wrong length".into());
        }
        if self.log_lhat.len() != data.site_count() {
            return Err("estimate components do not match the sites".into());
        }
        if self.v.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err("latent v must be positive".into());
        }
        if !(self.mass > 0.0) {
            return Err("mass must be positive".into());
        }
        let p = data.response_dim();
        let mut fresh: Vec<Cluster> = self
            .clusters
            .iter()
            .map(|c| Cluster::new(c.jump, c.log_scores.clone(), p))
            .collect();
        for (i, &k) in self.alloc.iter().enumerate() {
            let Some(c) = fresh.get_mut(k) else {
                return Err(format!("observation {i} allocated to missing cluster {k}"));
            };
            c.add(&data.y[i], data.site_of[i]);
        }
        for (k, (cached, fresh)) in self.clusters.iter().zip(&fresh).enumerate() {
            if fresh.count() == 0 {
                return Err(format!("cluster {k} is empty"));
            }
            if !(cached.jump > 0.0 && cached.jump.is_finite()) {
                return Err(format!("cluster {k} has jump {}", cached.jump));
            }
            if cached.log_scores.len() != data.site_count() {
                return Err(format!("cluster {k} has the wrong number of scores"));
            }
            if cached.site_counts != fresh.site_counts || cached.count() != fresh.count() {
                return Err(format!("cluster {k} counts disagree with allocations"));
            }
            let close = |a: &[f64], b: &[f64]| {
                a.iter()
                    .zip(b)
                    .all(|(x, y)| (x - y).abs() <= 1e-10 * (1.0 + x.abs().max(y.abs())))
            };
            if !close(&cached.stats.sum, &fresh.stats.sum)
                || !close(&cached.stats.outer, &fresh.stats.outer)
            {
                return Err(format!("cluster {k} statistics are stale"));
            }
        }
        Ok(())
    }
}

pub fn site_weights(v: &[f64], data: &Dataset) -> Vec<f64> {
    let mut w = vec![0.0; data.site_count()];
    for (vi, &s) in v.iter().zip(&data.site_of) {
        w[s] += vi;
    }
    w
}
