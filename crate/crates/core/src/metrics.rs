//! Evaluation protocol: score thresholding, fair test sets, CV
//! discrimination, and multi-run aggregation.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::calibrate::f1_score;
use crate::dataset::{AuCellKey, Dataset};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::threshold::{best_threshold, check_lengths, Bounds};

const SCORE_RANGE: Bounds = Bounds { lo: 0.0, hi: 1.0 };

fn positive_rate(predictions: &[u8], groups: &[String], level: &str) -> Option<f64> {
    let (n, k) = predictions
        .iter()
        .zip(groups)
        .filter(|(_, g)| *g == level)
        .fold((0u64, 0u64), |(n, k), (&p, _)| (n + 1, k + u64::from(p)));
    (n > 0).then(|| k as f64 / n as f64)
}

/// Calders-Verwer score: P(ŷ = 1 | positive_group) − P(ŷ = 1 | other level),
/// and its absolute value.
pub fn cv_discrimination(predictions: &[u8], groups: &[String], positive_group: &str) -> Result<(f64, f64)> {
    if predictions.len() != groups.len() {
        return Err(Error::LengthMismatch {
            expected: predictions.len(),
            actual: groups.len(),
        });
    }
    let mut levels: Vec<&String> = groups.iter().collect();
    levels.sort();
    levels.dedup();
    if !levels.iter().any(|l| *l == positive_group) {
        return Err(Error::MissingGroup(positive_group.to_string()));
    }
    let others: Vec<&&String> = levels.iter().filter(|l| **l != positive_group).collect();
    let other = match others.as_slice() {
        [o] => o.as_str(),
        [] => return Err(Error::MissingGroup(format!("a level other than `{positive_group}`"))),
        _ => {
            return Err(Error::InvalidConfig(format!(
                "discrimination needs exactly two levels, found {}",
                levels.len()
            )))
        }
    };
    let a = positive_rate(predictions, groups, positive_group).unwrap();
    let b = positive_rate(predictions, groups, other).unwrap();
    Ok((a - b, (a - b).abs()))
}

/// Threshold on `1[score > t]` maximizing accuracy; smallest on ties.
pub fn select_threshold(scores: &[f64], labels: &[u8]) -> Result<(f64, f64)> {
    check_lengths(scores, labels)?;
    let positives = labels.iter().filter(|&&l| l == 1).count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::SingleClass);
    }
    let best = best_threshold(scores, labels, SCORE_RANGE)?;
    Ok((best.threshold, best.accuracy))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalanceMode {
    /// Equalize P(Y = 1 | group) by dropping positives of the higher-rate groups.
    #[default]
    BalancePositiveRate,
    /// Equalize per-(AU cell, group) counts to the cell minimum.
    BalanceCellCounts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairTestOptions {
    /// Drop records scoring below this.
    pub easy_low: Option<f64>,
    /// Drop records scoring above this.
    pub easy_high: Option<f64>,
    pub group_attr: String,
    pub aus: Vec<String>,
    pub mode: BalanceMode,
    pub seed: u64,
}

impl FairTestOptions {
    /// Defaults for the happy task: prune outside (1e-5, 0.99999), balance rates.
    pub fn happy(group_attr: &str, aus: &[String], seed: u64) -> Self {
        Self {
            easy_low: Some(1e-5),
            easy_high: Some(0.99999),
            group_attr: group_attr.to_string(),
            aus: aus.to_vec(),
            mode: BalanceMode::BalancePositiveRate,
            seed,
        }
    }

    /// Defaults for the anger task: prune below 0.05 only, balance cell counts.
    pub fn anger(group_attr: &str, aus: &[String], seed: u64) -> Self {
        Self {
            easy_low: Some(0.05),
            easy_high: None,
            group_attr: group_attr.to_string(),
            aus: aus.to_vec(),
            mode: BalanceMode::BalanceCellCounts,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FairTestLog {
    pub input: usize,
    pub pruned_easy: usize,
    /// Records removed while balancing, per group level.
    pub removed: BTreeMap<String, usize>,
    pub output: usize,
    pub positive_rate: BTreeMap<String, f64>,
}

/// Prunes easy cases by reference-model score, then balances groups.
pub fn build_fair_test_set(
    dataset: &Dataset,
    scores: &[f64],
    options: &FairTestOptions,
) -> Result<(Dataset, FairTestLog)> {
    if scores.len() != dataset.len() {
        return Err(Error::Misaligned {
            scores: scores.len(),
            records: dataset.len(),
        });
    }
    if let (Some(lo), Some(hi)) = (options.easy_low, options.easy_high) {
        if lo >= hi {
            return Err(Error::InvalidConfig(format!("easy_low {lo} must be below easy_high {hi}")));
        }
    }
    let levels = dataset.levels(&options.group_attr)?.to_vec();
    let recs = dataset.records();
    let kept: Vec<usize> = (0..recs.len())
        .filter(|&i| {
            let s = scores[i];
            !(options.easy_high.is_some_and(|h| s > h) || options.easy_low.is_some_and(|l| s < l))
        })
        .collect();
    let pruned_easy = recs.len() - kept.len();

    let mut sorted = kept.clone();
    sorted.sort_by(|&a, &b| recs[a].id.cmp(&recs[b].id).then(a.cmp(&b)));
    let root = Rng::new(options.seed).child("fair_test");
    let mut keep = vec![false; recs.len()];
    let mut removed: BTreeMap<String, usize> = levels.iter().map(|l| (l.clone(), 0)).collect();

    match options.mode {
        BalanceMode::BalancePositiveRate => {
            let mut stats = Vec::new();
            for level in &levels {
                let members: Vec<usize> = sorted
                    .iter()
                    .copied()
                    .filter(|&i| recs[i].group[&options.group_attr] == *level)
                    .collect();
                let pos: Vec<usize> = members.iter().copied().filter(|&i| recs[i].label == 1).collect();
                if pos.is_empty() {
                    return Err(Error::InfeasibleBalance(format!("level `{level}` has no positives")));
                }
                stats.push((level.clone(), members, pos));
            }
            // lowest rate k/n, compared exactly
            let (kmin, nmin) = stats
                .iter()
                .map(|(_, m, p)| (p.len() as u64, m.len() as u64))
                .min_by(|a, b| (a.0 * b.1).cmp(&(b.0 * a.1)))
                .unwrap();
            for (level, members, pos) in &stats {
                let (k, n) = (pos.len() as u64, members.len() as u64);
                let target = if kmin == nmin || k * nmin <= kmin * n {
                    k
                } else {
                    // k' / (k' + negatives) = kmin / nmin
                    let neg = n - k;
                    let num = kmin * neg;
                    let den = nmin - kmin;
                    let (q, r) = (num / den, num % den);
                    let rounded = match (2 * r).cmp(&den) {
                        std::cmp::Ordering::Greater => q + 1,
                        std::cmp::Ordering::Equal => q + (q & 1),
                        std::cmp::Ordering::Less => q,
                    };
                    rounded.min(k)
                };
                for &i in members.iter().filter(|&&i| recs[i].label == 0) {
                    keep[i] = true;
                }
                let mut rng = root.child(level);
                for j in sample(&mut rng, pos.len(), target as usize) {
                    keep[pos[j]] = true;
                }
                *removed.get_mut(level).unwrap() += (k - target) as usize;
            }
        }
        BalanceMode::BalanceCellCounts => {
            dataset.require_binarized(&options.aus)?;
            let mut by_cell: BTreeMap<AuCellKey, BTreeMap<&String, Vec<usize>>> = BTreeMap::new();
            for &i in &sorted {
                let key = recs[i].cell_key(&options.aus).map_err(Error::NotBinarized)?;
                by_cell
                    .entry(key)
                    .or_default()
                    .entry(&recs[i].group[&options.group_attr])
                    .or_default()
                    .push(i);
            }
            for (cell, groups) in &by_cell {
                let min = levels
                    .iter()
                    .map(|l| groups.get(l).map_or(0, Vec::len))
                    .min()
                    .unwrap_or(0);
                let cell_rng = root.child(&cell.to_string());
                for (level, members) in groups {
                    let mut rng = cell_rng.child(level);
                    for j in sample(&mut rng, members.len(), min) {
                        keep[members[j]] = true;
                    }
                    *removed.get_mut(*level).unwrap() += members.len() - min;
                }
            }
        }
    }

    let records: Vec<_> = recs
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(r, _)| r.clone())
        .collect();
    let out = dataset.with_records(records)?;
    let labels: Vec<u8> = out.records().iter().map(|r| r.label).collect();
    let groups: Vec<String> = out
        .records()
        .iter()
        .map(|r| r.group[&options.group_attr].clone())
        .collect();
    let positive_rate = levels
        .iter()
        .filter_map(|l| positive_rate(&labels, &groups, l).map(|r| (l.clone(), r)))
        .collect();
    let log = FairTestLog {
        input: recs.len(),
        pruned_easy,
        removed,
        output: out.len(),
        positive_rate,
    };
    Ok((out, log))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub n: usize,
    pub threshold: f64,
    pub accuracy: f64,
    pub f1: f64,
    pub positive_group: String,
    pub per_group_positive_rate: BTreeMap<String, f64>,
    pub disc_signed: f64,
    pub disc_abs: f64,
}

/// Thresholds scores for accuracy on `test`, then reports accuracy, F1, and
/// both forms of the discrimination score.
pub fn evaluate(scores: &[f64], test: &Dataset, group_attr: &str, positive_group: &str) -> Result<EvalResult> {
    if scores.len() != test.len() {
        return Err(Error::Misaligned {
            scores: scores.len(),
            records: test.len(),
        });
    }
    let labels: Vec<u8> = test.records().iter().map(|r| r.label).collect();
    let groups: Vec<String> = test
        .records()
        .iter()
        .map(|r| {
            r.level(group_attr)
                .map(str::to_string)
                .ok_or_else(|| Error::UnknownAttribute(group_attr.to_string()))
        })
        .collect::<Result<_>>()?;
    let (threshold, accuracy) = select_threshold(scores, &labels)?;
    let predictions: Vec<u8> = scores.iter().map(|&s| u8::from(s > threshold)).collect();
    let (disc_signed, disc_abs) = cv_discrimination(&predictions, &groups, positive_group)?;
    let mut levels = groups.clone();
    levels.sort();
    levels.dedup();
    Ok(EvalResult {
        n: scores.len(),
        threshold,
        accuracy,
        f1: f1_score(&predictions, &labels),
        positive_group: positive_group.to_string(),
        per_group_positive_rate: levels
            .iter()
            .map(|l| (l.clone(), positive_rate(&predictions, &groups, l).unwrap()))
            .collect(),
        disc_signed,
        disc_abs,
    })
}

/// Mean and sample (n − 1) standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, sd, n }
    }
}

impl fmt::Display for MeanStd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = f.precision().unwrap_or(3);
        write!(f, "{:.p$} ± {:.p$}", self.mean, self.sd)
    }
}
