use rand::seq::index::sample;
use rand::Rng;

use super::state::{site_weights, ChainState, Cluster};
use super::Model;
use crate::data::Dataset;
use crate::error::Result;
use crate::score::ScoreModel;

const LLOYD_ITERATIONS: usize = 25;

/// Lloyd's algorithm from `k` distinct random observations; returns
/// compacted labels.
pub(crate) fn kmeans<R: Rng + ?Sized>(y: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<usize> {
    let n = y.len();
    if n == 0 {
        return vec![];
    }
    let k = k.clamp(1, n);
    let mut centers: Vec<Vec<f64>> = sample(rng, n, k).iter().map(|i| y[i].clone()).collect();
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut labels = vec![0; n];
    for _ in 0..LLOYD_ITERATIONS {
        let mut changed = false;
        for (i, yi) in y.iter().enumerate() {
            let best = (0..k)
                .min_by(|&a, &b| dist(yi, &centers[a]).total_cmp(&dist(yi, &centers[b])))
                .expect("k >= 1");
            if best != labels[i] {
                labels[i] = best;
                changed = true;
            }
        }
        for (j, c) in centers.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = y.iter().zip(&labels).filter(|(_, &l)| l == j).map(|(v, _)| v).collect();
            if members.is_empty() {
                continue;
            }
            for (d, cd) in c.iter_mut().enumerate() {
                *cd = members.iter().map(|m| m[d]).sum::<f64>() / members.len() as f64;
            }
        }
        if !changed {
            break;
        }
    }
    let mut map = vec![usize::MAX; k];
    let mut next = 0;
    for l in labels.iter_mut() {
        if map[*l] == usize::MAX {
            map[*l] = next;
            next += 1;
        }
        *l = map[*l];
    }
    labels
}

pub(crate) fn initial_state<R: Rng + ?Sized>(
    model: &Model,
    data: &Dataset,
    rng: &mut R,
) -> Result<ChainState> {
    let n = data.len();
    let p = data.response_dim();
    let v = vec![1.0 / n.max(1) as f64; n];
    let w = site_weights(&v, data);
    let score = ScoreModel::new(model.score_params.clone(), data.sites.clone())?;
    let alloc = kmeans(&data.y, model.initial_clusters.min(n), rng);
    let k = alloc.iter().copied().max().map_or(0, |m| m + 1);
    let mut clusters: Vec<Cluster> = (0..k)
        .map(|_| Cluster::new(1.0, score.sample_log_prior(rng), p))
        .collect();
    for (i, &c) in alloc.iter().enumerate() {
        clusters[c].add(&data.y[i], data.site_of[i]);
    }
    for c in &mut clusters {
        c.jump = model.levy.jump_given_scores_mean(c.weighted_score_sum(&w));
    }
    Ok(ChainState {
        alloc,
        clusters,
        v,
        mass: model.mass,
        levy: model.levy.clone(),
        score_params: model.score_params.clone(),
        kernel: model.kernel.clone(),
        log_lhat: vec![],
    })
}
