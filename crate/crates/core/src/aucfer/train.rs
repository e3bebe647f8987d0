use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::{softmax, Matrix, ModelParams};
use super::triplet::{key_ids, mine_by_id, triplet_loss, TripletSet};
use crate::dataset::{AuCellKey, Dataset, Split};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    #[default]
    Sum,
    Mean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lambda: f64,
    pub margin: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub d_emb: usize,
    pub seed: u64,
    /// `None` keeps every valid triple.
    pub max_triplets_per_anchor: Option<usize>,
    pub reduction: Reduction,
    /// AUs whose presence pattern keys the triplets.
    pub conditioning: Vec<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 10.0,
            margin: 0.2,
            learning_rate: 0.05,
            batch_size: 128,
            epochs: 40,
            d_emb: 16,
            seed: 7,
            max_triplets_per_anchor: Some(64),
            reduction: Reduction::Sum,
            conditioning: vec!["AU12".into(), "AU6".into()],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be non-negative");
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return bad("margin must be non-negative");
        }
        if self.d_emb == 0 || self.epochs == 0 {
            return bad("d_emb and epochs must be positive");
        }
        if self.max_triplets_per_anchor == Some(0) {
            return bad("max_triplets_per_anchor must be positive");
        }
        Ok(())
    }
}

/// Inputs, class labels and integer AU keys of one minibatch.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub keys: Vec<u32>,
}

impl Batch {
    pub fn new(features: Matrix, labels: Vec<usize>, keys: &[AuCellKey]) -> Result<Self> {
        if labels.len() != features.rows || keys.len() != features.rows {
            return Err(Error::LengthMismatch {
                expected: features.rows,
                actual: labels.len().min(keys.len()),
            });
        }
        Ok(Self {
            features,
            labels,
            keys: key_ids(keys),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Mean −log softmax(z)[y] and its gradient (softmax − onehot) / N.
pub fn cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    if labels.len() != logits.rows {
        return Err(Error::LengthMismatch {
            expected: logits.rows,
            actual: labels.len(),
        });
    }
    let n = logits.rows as f64;
    let mut grad = Matrix::zeros(logits.rows, logits.cols);
    let mut loss = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        if y >= logits.cols {
            return Err(Error::InvalidLabel {
                label: y,
                classes: logits.cols,
            });
        }
        let z = logits.row(r);
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
        loss += lse - z[y];
        let p = softmax(z);
        let g = grad.row_mut(r);
        for (c, (gc, pc)) in g.iter_mut().zip(p).enumerate() {
            *gc = (pc - f64::from(u8::from(c == y))) / n;
        }
    }
    Ok((loss / n, grad))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub cross_entropy: f64,
    /// Reduced triplet term before weighting by λ.
    pub triplet: f64,
    pub n_triplets: usize,
    pub grads: ModelParams,
}

struct Forward {
    pre: Matrix,
    emb: Matrix,
    logits: Matrix,
}

fn forward_batch(params: &ModelParams, x: &Matrix) -> Result<Forward> {
    if x.cols != params.d_in() {
        return Err(Error::DimensionMismatch {
            expected: params.d_in(),
            actual: x.cols,
        });
    }
    let (d, c) = (params.d_emb(), params.n_classes());
    let mut pre = Matrix::zeros(x.rows, d);
    let mut emb = Matrix::zeros(x.rows, d);
    let mut logits = Matrix::zeros(x.rows, c);
    for r in 0..x.rows {
        params.hidden(x.row(r), pre.row_mut(r));
        for (e, &h) in emb.row_mut(r).iter_mut().zip(pre.row(r)) {
            *e = h.max(0.0);
        }
        let f = emb.row(r).to_vec();
        params.logits(&f, logits.row_mut(r));
    }
    Ok(Forward { pre, emb, logits })
}

/// Backpropagates logit and (optional, pre-weighted) embedding gradients.
fn backprop(params: &ModelParams, x: &Matrix, fw: &Forward, d_logits: &Matrix, d_emb_extra: Option<&Matrix>) -> ModelParams {
    let (d, c) = (params.d_emb(), params.n_classes());
    let mut g = ModelParams::zeros(params.d_in(), d, c);
    let mut dh = vec![0.0; d];
    for r in 0..x.rows {
        let f = fw.emb.row(r);
        let dz = d_logits.row(r);
        for j in 0..d {
            let row = &mut g.w2.data[j * c..(j + 1) * c];
            for (gw, &dzc) in row.iter_mut().zip(dz) {
                *gw += f[j] * dzc;
            }
        }
        for (gb, &dzc) in g.b2.iter_mut().zip(dz) {
            *gb += dzc;
        }
        for j in 0..d {
            let w = &params.w2.data[j * c..(j + 1) * c];
            let mut df: f64 = w.iter().zip(dz).map(|(a, b)| a * b).sum();
            if let Some(extra) = d_emb_extra {
                df += extra.get(r, j);
            }
            dh[j] = if fw.pre.get(r, j) > 0.0 { df } else { 0.0 };
        }
        for (gb, &v) in g.b1.iter_mut().zip(&dh) {
            *gb += v;
        }
        for (i, &xi) in x.row(r).iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &mut g.w1.data[i * d..(i + 1) * d];
            for (gw, &v) in row.iter_mut().zip(&dh) {
                *gw += xi * v;
            }
        }
    }
    g
}

/// Cross-entropy loss and gradients only.
pub fn cross_entropy_loss(params: &ModelParams, batch: &Batch) -> Result<LossBreakdown> {
    let fw = forward_batch(params, &batch.features)?;
    let (ce, dz) = cross_entropy(&fw.logits, &batch.labels)?;
    Ok(LossBreakdown {
        total: ce,
        cross_entropy: ce,
        triplet: 0.0,
        n_triplets: 0,
        grads: backprop(params, &batch.features, &fw, &dz, None),
    })
}

/// L = L_ce + λ·L_trp for a given set of triples.
pub fn total_loss_with_triplets(
    params: &ModelParams,
    batch: &Batch,
    triplets: &TripletSet,
    config: &TrainConfig,
) -> Result<LossBreakdown> {
    let fw = forward_batch(params, &batch.features)?;
    let (ce, dz) = cross_entropy(&fw.logits, &batch.labels)?;
    let (raw, mut d_emb) = triplet_loss(&fw.emb, triplets, config.margin)?;
    let scale = match config.reduction {
        Reduction::Mean if !triplets.is_empty() => 1.0 / triplets.len() as f64,
        _ => 1.0,
    };
    let trp = raw * scale;
    if config.lambda == 0.0 {
        return Ok(LossBreakdown {
            total: ce,
            cross_entropy: ce,
            triplet: trp,
            n_triplets: triplets.len(),
            grads: backprop(params, &batch.features, &fw, &dz, None),
        });
    }
    let w = config.lambda * scale;
    for v in &mut d_emb.data {
        *v *= w;
    }
    Ok(LossBreakdown {
        total: ce + config.lambda * trp,
        cross_entropy: ce,
        triplet: trp,
        n_triplets: triplets.len(),
        grads: backprop(params, &batch.features, &fw, &dz, Some(&d_emb)),
    })
}

/// Mines triples on the batch keys, then evaluates the combined loss.
pub fn total_loss(params: &ModelParams, batch: &Batch, config: &TrainConfig, rng: &mut Rng) -> Result<LossBreakdown> {
    let triplets = mine_by_id(&batch.keys, config.max_triplets_per_anchor, rng);
    total_loss_with_triplets(params, batch, &triplets, config)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainOutput {
    pub params: ModelParams,
    /// Per-epoch mean of the batch losses.
    pub loss_trace: Vec<f64>,
    pub cross_entropy_trace: Vec<f64>,
    pub triplet_trace: Vec<f64>,
    /// Triples mined per epoch.
    pub triplet_count_trace: Vec<usize>,
    pub starved_batches: usize,
}

pub(crate) struct TrainData {
    pub x: Matrix,
    pub labels: Vec<usize>,
    pub keys: Vec<u32>,
}

pub(crate) fn train_data(dataset: &Dataset, conditioning: &[String]) -> Result<TrainData> {
    if dataset.feature_dim() == 0 {
        return Err(Error::NoFeatures);
    }
    let train = dataset.split(Split::Train)?;
    if train.is_empty() {
        return Err(Error::EmptyTrainSplit);
    }
    train.require_binarized(conditioning)?;
    let rows: Vec<Vec<f64>> = train.records().iter().map(|r| r.features.clone()).collect();
    let keys: Vec<AuCellKey> = train
        .records()
        .iter()
        .map(|r| r.cell_key(conditioning).map_err(Error::NotBinarized))
        .collect::<Result<_>>()?;
    Ok(TrainData {
        x: Matrix::from_rows(&rows)?,
        labels: train.records().iter().map(|r| usize::from(r.label)).collect(),
        keys: key_ids(&keys),
    })
}

/// AU-key-stratified shuffle: each key's records are shuffled and spread
/// evenly over the epoch, then cut into batches. A trailing batch of one
/// record joins the previous batch. Batches left with a single key swap a
/// record with a neighbouring batch when that is possible.
pub(crate) fn epoch_batches(keys: &[u32], batch_size: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let n_keys = keys.iter().map(|&k| k as usize + 1).max().unwrap_or(0);
    let mut by_key: Vec<Vec<usize>> = vec![Vec::new(); n_keys];
    for (i, &k) in keys.iter().enumerate() {
        by_key[k as usize].push(i);
    }
    let mut placed: Vec<(f64, u32, usize)> = Vec::with_capacity(keys.len());
    for (k, members) in by_key.iter_mut().enumerate() {
        if members.is_empty() {
            continue;
        }
        members.shuffle(rng);
        let offset = rng.uniform();
        let m = members.len() as f64;
        placed.extend(
            members
                .iter()
                .enumerate()
                .map(|(r, &i)| ((r as f64 + offset) / m, k as u32, i)),
        );
    }
    placed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let order: Vec<usize> = placed.into_iter().map(|p| p.2).collect();
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    if batches.len() > 1 && batches.last().unwrap().len() < 2 {
        let last = batches.pop().unwrap();
        batches.last_mut().unwrap().extend(last);
    }

    let distinct = |b: &[usize]| {
        let first = keys[b[0]];
        b.iter().any(|&i| keys[i] != first)
    };
    if n_keys > 1 {
        for b in 0..batches.len() {
            if distinct(&batches[b]) {
                continue;
            }
            let own = keys[batches[b][0]];
            'search: for other in (0..batches.len()).filter(|&o| o != b) {
                for pos in 0..batches[other].len() {
                    let cand = batches[other][pos];
                    if keys[cand] == own {
                        continue;
                    }
                    let mut trial = batches[other].clone();
                    trial[pos] = batches[b][0];
                    if distinct(&trial) {
                        batches[other] = trial;
                        batches[b][0] = cand;
                        break 'search;
                    }
                }
            }
        }
    }
    batches
}

fn gather(data: &TrainData, idx: &[usize]) -> Batch {
    let mut x = Matrix::zeros(idx.len(), data.x.cols);
    for (r, &i) in idx.iter().enumerate() {
        x.row_mut(r).copy_from_slice(data.x.row(i));
    }
    Batch {
        features: x,
        labels: idx.iter().map(|&i| data.labels[i]).collect(),
        keys: idx.iter().map(|&i| data.keys[i]).collect(),
    }
}

fn sgd_loop(
    dataset: &Dataset,
    config: &TrainConfig,
    mut step: impl FnMut(&ModelParams, &Batch, &mut Rng) -> Result<LossBreakdown>,
) -> Result<TrainOutput> {
    config.validate()?;
    let data = train_data(dataset, &config.conditioning)?;
    let root = Rng::new(config.seed).child("train");
    let mut params = ModelParams::init(data.x.cols, config.d_emb, 2, &mut root.child("init"));
    let mut out = TrainOutput {
        params: params.clone(),
        loss_trace: Vec::new(),
        cross_entropy_trace: Vec::new(),
        triplet_trace: Vec::new(),
        triplet_count_trace: Vec::new(),
        starved_batches: 0,
    };
    for epoch in 0..config.epochs {
        let mut shuffle_rng = root.child_indexed("shuffle", epoch as u64);
        let mut mine_rng = root.child_indexed("mine", epoch as u64);
        let batches = epoch_batches(&data.keys, config.batch_size, &mut shuffle_rng);
        let (mut total, mut ce, mut trp, mut count) = (0.0, 0.0, 0.0, 0usize);
        for idx in &batches {
            let batch = gather(&data, idx);
            let l = step(&params, &batch, &mut mine_rng)?;
            for (p, g) in params.flat_mut().zip(l.grads.flat()) {
                *p -= config.learning_rate * g;
            }
            total += l.total;
            ce += l.cross_entropy;
            trp += l.triplet;
            count += l.n_triplets;
            if l.n_triplets == 0 {
                out.starved_batches += 1;
            }
        }
        let nb = batches.len() as f64;
        out.loss_trace.push(total / nb);
        out.cross_entropy_trace.push(ce / nb);
        out.triplet_trace.push(trp / nb);
        out.triplet_count_trace.push(count);
        if !params.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "training diverged in epoch {epoch}; lower the learning rate or lambda"
            )));
        }
    }
    out.params = params;
    Ok(out)
}

/// Minibatch SGD on cross-entropy + λ·triplet loss over the train split.
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<TrainOutput> {
    sgd_loop(dataset, config, |p, b, rng| total_loss(p, b, config, rng))
}

/// The same loop with the triplet term removed entirely.
pub fn train_cross_entropy(dataset: &Dataset, config: &TrainConfig) -> Result<TrainOutput> {
    sgd_loop(dataset, config, |p, b, _| cross_entropy_loss(p, b))
}
