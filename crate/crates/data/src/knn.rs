//! k-nearest-neighbour classification of spike-count vectors.

use crate::episode::Episode;
use crate::error::{Error, Result};

fn distance(a: &[u32], b: &[u32]) -> f64 {
    let sq: u64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = i64::from(x) - i64::from(y);
            (d * d) as u64
        })
        .sum();
    (sq as f64).sqrt()
}

/// Majority label among the `k` nearest training vectors (Euclidean).
/// Vote ties go to the label whose neighbours have the smallest summed
/// distance, then to the lowest label. Neighbours at equal distance are
/// taken in training order.
pub fn knn_predict(train: &[(Vec<u32>, u32)], query: &[u32], k: usize) -> Result<u32> {
    if train.is_empty() {
        return Err(Error::Insufficient("empty KNN training set".into()));
    }
    if k == 0 || k > train.len() {
        return Err(Error::Insufficient(format!("k = {k} with {} training points", train.len())));
    }
    let mut d: Vec<(f64, usize)> = train.iter().enumerate().map(|(i, (v, _))| (distance(v, query), i)).collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut tally: Vec<(u32, usize, f64)> = Vec::new();
    for &(dist, i) in &d[..k] {
        let label = train[i].1;
        match tally.iter_mut().find(|t| t.0 == label) {
            Some(t) => {
                t.1 += 1;
                t.2 += dist;
            }
            None => tally.push((label, 1, dist)),
        }
    }
    tally.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.total_cmp(&b.2)).then(a.0.cmp(&b.0)));
    Ok(tally[0].0)
}

/// Accuracy of KNN on per-input spike counts, trained on the episode's
/// shots and evaluated on its queries.
pub fn knn_episode_accuracy(ep: &Episode, k: usize) -> Result<f64> {
    let train: Vec<(Vec<u32>, u32)> = ep.train.iter().map(|s| (s.spike_counts(), s.label())).collect();
    if ep.test.is_empty() {
        return Err(Error::Insufficient("episode has no queries".into()));
    }
    let mut correct = 0;
    for q in &ep.test {
        if knn_predict(&train, &q.spike_counts(), k)? == q.label() {
            correct += 1;
        }
    }
    Ok(correct as f64 / ep.test.len() as f64)
}
