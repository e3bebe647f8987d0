//! AU-calibrated training: cross-entropy plus a triplet term that pulls
//! together embeddings of faces sharing an AU presence pattern and pushes
//! apart those that differ.

mod model;
mod train;
mod triplet;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use model::{predict, predict_batch, softmax, Matrix, ModelParams};
pub use train::{
    cross_entropy, cross_entropy_loss, total_loss, total_loss_with_triplets, train, train_cross_entropy, Batch,
    LossBreakdown, Reduction, TrainConfig, TrainOutput,
};
pub use triplet::{mine_triplets, triplet_loss, TripletSet};

use crate::dataset::{AuCellKey, Dataset};
use crate::error::{Error, Result};

#[cfg(test)]
use train::epoch_batches;

/// Serialized model: dimensions, parameters and the training config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub d_in: usize,
    pub d_emb: usize,
    pub n_classes: usize,
    pub params: ModelParams,
    pub config: TrainConfig,
}

impl ModelFile {
    pub fn new(params: ModelParams, config: TrainConfig) -> Self {
        Self {
            d_in: params.d_in(),
            d_emb: params.d_emb(),
            n_classes: params.n_classes(),
            params,
            config,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let m: ModelFile = serde_json::from_str(&text)?;
        let p = &m.params;
        let consistent = p.w1.rows == m.d_in
            && p.w1.cols == m.d_emb
            && p.w1.data.len() == m.d_in * m.d_emb
            && p.b1.len() == m.d_emb
            && p.w2.rows == m.d_emb
            && p.w2.cols == m.n_classes
            && p.w2.data.len() == m.d_emb * m.n_classes
            && p.b2.len() == m.n_classes;
        if !consistent {
            return Err(Error::InvalidConfig("model dimensions are inconsistent".into()));
        }
        Ok(m)
    }
}

/// Positive-class scores for every record of `dataset`, in record order.
pub fn score_dataset(params: &ModelParams, dataset: &Dataset) -> Result<Vec<f64>> {
    dataset
        .records()
        .iter()
        .map(|r| predict(params, &r.features).map(|(s, _)| s))
        .collect()
}

/// Mean squared embedding distance between records sharing an AU key,
/// divided by the mean over pairs with different keys.
pub fn key_distance_ratio(params: &ModelParams, features: &[Vec<f64>], keys: &[AuCellKey]) -> Result<f64> {
    if features.len() != keys.len() {
        return Err(Error::LengthMismatch {
            expected: features.len(),
            actual: keys.len(),
        });
    }
    let emb: Vec<Vec<f64>> = features
        .iter()
        .map(|x| params.forward(x).map(|(f, _)| f))
        .collect::<Result<_>>()?;
    let (mut intra, mut n_intra, mut inter, mut n_inter) = (0.0, 0u64, 0.0, 0u64);
    for i in 0..emb.len() {
        for j in i + 1..emb.len() {
            let d: f64 = emb[i].iter().zip(&emb[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            if keys[i] == keys[j] {
                intra += d;
                n_intra += 1;
            } else {
                inter += d;
                n_inter += 1;
            }
        }
    }
    if n_intra == 0 || n_inter == 0 || inter == 0.0 {
        return Err(Error::InsufficientData("need pairs with equal and with different keys".into()));
    }
    Ok((intra / n_intra as f64) / (inter / n_inter as f64))
}
