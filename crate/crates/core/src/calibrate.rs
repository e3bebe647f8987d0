//! AU binarization thresholds: one global accuracy-maximizing threshold per
//! AU, and independently optimized thresholds per group level, with a parity
//! test on the resulting recognition accuracies.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audit::{pearson_statistic, two_proportion_test, ContingencyTable};
use crate::dataset::{Dataset, GroupThresholds};
use crate::error::{Error, Result};
use crate::special::chi_square_sf;
use crate::threshold::{accuracy_at, best_threshold, check_lengths, Bounds};

const AU_RANGE: Bounds = Bounds { lo: 0.0, hi: crate::dataset::AU_MAX };

/// Threshold maximizing the accuracy of `1[intensity > t]`, smallest on ties.
pub fn calibrate_global(intensities: &[f64], truth: &[u8]) -> Result<(f64, f64)> {
    let best = best_threshold(intensities, truth, AU_RANGE)?;
    Ok((best.threshold, best.accuracy))
}

/// F1 of the positive class; 0 when there are no true or predicted positives.
pub fn f1_score(predicted: &[u8], truth: &[u8]) -> f64 {
    let (mut tp, mut fp, mut fneg) = (0u64, 0u64, 0u64);
    for (&p, &t) in predicted.iter().zip(truth) {
        match (p, t) {
            (1, 1) => tp += 1,
            (1, _) => fp += 1,
            (_, 1) => fneg += 1,
            _ => {}
        }
    }
    if tp == 0 {
        return 0.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fneg) as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParityCheck {
    pub levels: Vec<String>,
    pub n: BTreeMap<String, u64>,
    pub correct: BTreeMap<String, u64>,
    pub accuracy: BTreeMap<String, f64>,
    pub f1: BTreeMap<String, f64>,
    /// Two-proportion z-test for two levels; groups × {correct, wrong}
    /// chi-square for more.
    pub p_value: Option<f64>,
    /// Pairwise two-proportion p-values in `levels` order.
    pub pairwise: Vec<Vec<f64>>,
}

fn sorted_levels(groups: &[String]) -> Vec<String> {
    let mut levels = groups.to_vec();
    levels.sort();
    levels.dedup();
    levels
}

fn parity_p(correct: &[u64], n: &[u64]) -> Option<f64> {
    match correct.len() {
        0 | 1 => None,
        2 => two_proportion_test(correct[0], n[0], correct[1], n[1]).ok(),
        _ => {
            let counts = correct.iter().zip(n).map(|(&c, &m)| vec![c, m - c]).collect();
            let table = ContingencyTable::from_counts(counts).ok()?;
            Some(match pearson_statistic(&table) {
                Some((stat, dof)) => chi_square_sf(stat, dof as f64),
                None => 1.0,
            })
        }
    }
}

/// Accuracy and F1 per group level plus a test that accuracies are equal.
pub fn accuracy_parity_check(predicted: &[u8], truth: &[u8], groups: &[String]) -> Result<ParityCheck> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch {
            expected: predicted.len(),
            actual: truth.len(),
        });
    }
    if groups.len() != truth.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            actual: groups.len(),
        });
    }
    let levels = sorted_levels(groups);
    let mut out = ParityCheck {
        levels: levels.clone(),
        n: BTreeMap::new(),
        correct: BTreeMap::new(),
        accuracy: BTreeMap::new(),
        f1: BTreeMap::new(),
        p_value: None,
        pairwise: Vec::new(),
    };
    for level in &levels {
        let idx: Vec<usize> = (0..groups.len()).filter(|&i| &groups[i] == level).collect();
        let p: Vec<u8> = idx.iter().map(|&i| predicted[i]).collect();
        let t: Vec<u8> = idx.iter().map(|&i| truth[i]).collect();
        let correct = p.iter().zip(&t).filter(|(a, b)| a == b).count() as u64;
        out.n.insert(level.clone(), idx.len() as u64);
        out.correct.insert(level.clone(), correct);
        out.accuracy.insert(level.clone(), correct as f64 / idx.len() as f64);
        out.f1.insert(level.clone(), f1_score(&p, &t));
    }
    let c: Vec<u64> = levels.iter().map(|l| out.correct[l]).collect();
    let n: Vec<u64> = levels.iter().map(|l| out.n[l]).collect();
    out.p_value = parity_p(&c, &n);
    out.pairwise = (0..levels.len())
        .map(|i| {
            (0..levels.len())
                .map(|j| two_proportion_test(c[i], n[i], c[j], n[j]).unwrap_or(1.0))
                .collect()
        })
        .collect();
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub au_id: String,
    pub levels: Vec<String>,
    pub global_threshold: f64,
    pub global_accuracy: f64,
    /// Per-level accuracy and F1 under the global threshold.
    pub raw_accuracy: BTreeMap<String, f64>,
    pub raw_f1: BTreeMap<String, f64>,
    pub raw_parity_p_value: Option<f64>,
    /// Degenerate levels fall back to the global threshold.
    pub per_group_thresholds: BTreeMap<String, f64>,
    pub per_group_accuracy: BTreeMap<String, f64>,
    pub per_group_f1: BTreeMap<String, f64>,
    /// Parity test over non-degenerate levels under per-group thresholds.
    pub parity_p_value: Option<f64>,
    pub degenerate_levels: Vec<String>,
    pub parity_test: String,
}

/// Global threshold plus one independently optimized threshold per level.
/// Levels lacking one of the truth classes are flagged and left out of the
/// parity test.
pub fn calibrate_per_group(
    au_id: &str,
    intensities: &[f64],
    truth: &[u8],
    groups: &[String],
) -> Result<CalibrationResult> {
    check_lengths(intensities, truth)?;
    if groups.len() != truth.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            actual: groups.len(),
        });
    }
    let (global_threshold, global_accuracy) = calibrate_global(intensities, truth)?;
    let raw_pred: Vec<u8> = intensities.iter().map(|&v| u8::from(v > global_threshold)).collect();
    let raw = accuracy_parity_check(&raw_pred, truth, groups)?;

    let levels = sorted_levels(groups);
    let mut result = CalibrationResult {
        au_id: au_id.to_string(),
        levels: levels.clone(),
        global_threshold,
        global_accuracy,
        raw_accuracy: raw.accuracy,
        raw_f1: raw.f1,
        raw_parity_p_value: raw.p_value,
        per_group_thresholds: BTreeMap::new(),
        per_group_accuracy: BTreeMap::new(),
        per_group_f1: BTreeMap::new(),
        parity_p_value: None,
        degenerate_levels: Vec::new(),
        parity_test: "pooled two-proportion z-test on correct counts".into(),
    };
    let (mut correct, mut sizes) = (Vec::new(), Vec::new());
    for level in &levels {
        let idx: Vec<usize> = (0..groups.len()).filter(|&i| &groups[i] == level).collect();
        let v: Vec<f64> = idx.iter().map(|&i| intensities[i]).collect();
        let t: Vec<u8> = idx.iter().map(|&i| truth[i]).collect();
        let positives = t.iter().filter(|&&b| b == 1).count();
        let degenerate = idx.len() < 2 || positives == 0 || positives == idx.len();
        let threshold = if degenerate {
            result.degenerate_levels.push(level.clone());
            global_threshold
        } else {
            best_threshold(&v, &t, AU_RANGE)?.threshold
        };
        let pred: Vec<u8> = v.iter().map(|&x| u8::from(x > threshold)).collect();
        let acc = accuracy_at(&v, &t, threshold);
        result.per_group_thresholds.insert(level.clone(), threshold);
        result.per_group_accuracy.insert(level.clone(), acc);
        result.per_group_f1.insert(level.clone(), f1_score(&pred, &t));
        if !degenerate {
            correct.push(pred.iter().zip(&t).filter(|(a, b)| a == b).count() as u64);
            sizes.push(idx.len() as u64);
        }
    }
    result.parity_p_value = parity_p(&correct, &sizes);
    Ok(result)
}

/// Calibrates every AU in `aus` against its presence column, using
/// `group_attr` for the per-group thresholds. AUs are processed in parallel.
pub fn calibrate_dataset(dataset: &Dataset, aus: &[String], group_attr: &str) -> Result<Vec<CalibrationResult>> {
    dataset.require_binarized(aus)?;
    dataset.levels(group_attr)?;
    let groups: Vec<String> = dataset
        .records()
        .iter()
        .map(|r| r.group[group_attr].clone())
        .collect();
    aus.par_iter()
        .map(|au| {
            let v: Vec<f64> = dataset.records().iter().map(|r| r.au_intensities[au]).collect();
            let t: Vec<u8> = dataset.records().iter().map(|r| r.au_presence[au]).collect();
            calibrate_per_group(au, &v, &t, &groups)
        })
        .collect()
}

/// Global thresholds keyed by AU.
pub fn global_thresholds(results: &[CalibrationResult]) -> BTreeMap<String, f64> {
    results
        .iter()
        .map(|r| (r.au_id.clone(), r.global_threshold))
        .collect()
}

/// Per-group thresholds in the form `binarize` accepts.
pub fn group_thresholds(results: &[CalibrationResult], attribute: &str) -> GroupThresholds {
    GroupThresholds {
        attribute: attribute.to_string(),
        thresholds: results
            .iter()
            .map(|r| (r.au_id.clone(), r.per_group_thresholds.clone()))
            .collect(),
    }
}
