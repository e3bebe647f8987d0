//! Accuracy-maximizing threshold search for predictors of the form
//! `1[value > t]`, shared by AU calibration and score binarization.

use crate::error::{Error, Result};

/// Range the threshold should live in. Candidates outside the observed
/// values are placed halfway to the bound, or half a unit past the data when
/// the data touches the bound.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Best {
    pub threshold: f64,
    pub accuracy: f64,
    pub correct: usize,
}

/// Candidate grid: one point below the minimum, midpoints of consecutive
/// distinct values, one point at or above the maximum. Ascending.
pub(crate) fn candidates(values: &[f64], bounds: Bounds) -> Vec<f64> {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let (min, max) = (sorted[0], *sorted.last().unwrap());
    let below = if min > bounds.lo {
        0.5 * (bounds.lo + min)
    } else {
        min - 0.5
    };
    let above = if max < bounds.hi {
        0.5 * (max + bounds.hi)
    } else {
        max
    };
    let mut out = Vec::with_capacity(sorted.len() + 1);
    out.push(below);
    out.extend(sorted.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    out.push(above);
    out
}

pub(crate) fn check_lengths(values: &[f64], truth: &[u8]) -> Result<()> {
    if values.len() != truth.len() {
        return Err(Error::LengthMismatch {
            expected: values.len(),
            actual: truth.len(),
        });
    }
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

/// Sweeps the candidate grid in ascending order and keeps the first
/// threshold reaching the maximum number of correct predictions.
pub(crate) fn best_threshold(values: &[f64], truth: &[u8], bounds: Bounds) -> Result<Best> {
    check_lengths(values, truth)?;
    let grid = candidates(values, bounds);
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));

    // Below every value, everything is predicted present.
    let mut correct = truth.iter().filter(|&&t| t == 1).count() as i64;
    let mut best_correct = correct;
    let mut best_idx = 0;
    let mut pos = 0;
    for (gi, _) in grid.iter().enumerate().skip(1) {
        // Move the next block of equal values to the predicted-absent side.
        let v = values[order[pos]];
        while pos < order.len() && values[order[pos]] == v {
            correct += if truth[order[pos]] == 1 { -1 } else { 1 };
            pos += 1;
        }
        if correct > best_correct {
            best_correct = correct;
            best_idx = gi;
        }
    }
    let n = values.len();
    Ok(Best {
        threshold: grid[best_idx],
        accuracy: best_correct as f64 / n as f64,
        correct: best_correct as usize,
    })
}

pub(crate) fn accuracy_at(values: &[f64], truth: &[u8], threshold: f64) -> f64 {
    let correct = values
        .iter()
        .zip(truth)
        .filter(|(&v, &t)| u8::from(v > threshold) == t)
        .count();
    correct as f64 / values.len() as f64
}
