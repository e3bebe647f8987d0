use rand::seq::index::sample;
use serde::Serialize;

use super::model::Matrix;
use crate::dataset::AuCellKey;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct TripletSet {
    /// (anchor, positive, negative) indices into the batch.
    pub triples: Vec<(usize, usize, usize)>,
    /// Set when the batch admits no valid triple.
    pub starved: bool,
}

impl TripletSet {
    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }
}

/// Mines triples over integer key ids. For each anchor i the candidates
/// are every (j, k) with key(j) = key(i), j ≠ i, key(k) ≠ key(i), in
/// ascending (j, k) order; anchors with more than `cap` candidates keep a
/// uniform subsample of `cap`.
pub(crate) fn mine_by_id(keys: &[u32], cap: Option<usize>, rng: &mut Rng) -> TripletSet {
    let mut triples = Vec::new();
    for (i, &ki) in keys.iter().enumerate() {
        let same: Vec<usize> = (0..keys.len()).filter(|&j| j != i && keys[j] == ki).collect();
        let diff: Vec<usize> = (0..keys.len()).filter(|&k| keys[k] != ki).collect();
        let total = same.len() * diff.len();
        if total == 0 {
            continue;
        }
        match cap {
            Some(c) if total > c => {
                let mut picks = sample(rng, total, c).into_vec();
                picks.sort_unstable();
                triples.extend(picks.into_iter().map(|t| (i, same[t / diff.len()], diff[t % diff.len()])));
            }
            _ => {
                for &j in &same {
                    triples.extend(diff.iter().map(|&k| (i, j, k)));
                }
            }
        }
    }
    TripletSet {
        starved: triples.is_empty(),
        triples,
    }
}

/// Maps keys to dense ids in key order.
pub(crate) fn key_ids(keys: &[AuCellKey]) -> Vec<u32> {
    let mut distinct: Vec<&AuCellKey> = keys.iter().collect();
    distinct.sort();
    distinct.dedup();
    keys.iter()
        .map(|k| distinct.binary_search(&k).unwrap() as u32)
        .collect()
}

/// All valid (anchor, positive, negative) triples for a batch, capped per
/// anchor.
pub fn mine_triplets(batch_keys: &[AuCellKey], cap: Option<usize>, rng: &mut Rng) -> TripletSet {
    mine_by_id(&key_ids(batch_keys), cap, rng)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Σ over triples of [‖a − p‖² − ‖a − n‖² + α]₊ and its gradient with
/// respect to each embedding row.
pub fn triplet_loss(embeddings: &Matrix, triplets: &TripletSet, margin: f64) -> Result<(f64, Matrix)> {
    let n = embeddings.rows;
    let mut grad = Matrix::zeros(n, embeddings.cols);
    let mut loss = 0.0;
    for &(i, j, k) in &triplets.triples {
        for index in [i, j, k] {
            if index >= n {
                return Err(Error::IndexOutOfRange { index, len: n });
            }
        }
        let (a, p, q) = (embeddings.row(i), embeddings.row(j), embeddings.row(k));
        let h = sq_dist(a, p) - sq_dist(a, q) + margin;
        if h <= 0.0 {
            continue;
        }
        loss += h;
        for c in 0..embeddings.cols {
            let (av, pv, qv) = (a[c], p[c], q[c]);
            grad.data[i * grad.cols + c] += 2.0 * (qv - pv);
            grad.data[j * grad.cols + c] -= 2.0 * (av - pv);
            grad.data[k * grad.cols + c] += 2.0 * (av - qv);
        }
    }
    Ok((loss, grad))
}
