//! Label flipping toward per-cell parity, and balanced subsampling.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use serde::Serialize;

use crate::dataset::{AuCellKey, Dataset};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Flip {
    pub id: String,
    pub cell: AuCellKey,
    pub level: String,
    pub from: u8,
    pub to: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupFlips {
    pub level: String,
    pub n: u64,
    pub positives_before: u64,
    pub positives_after: u64,
    /// Flips the rounding rule asked for; positive means 0 → 1.
    pub requested: i64,
    pub applied: u64,
    /// Requested flips that had no eligible record.
    pub deficit: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellFlips {
    pub cell: AuCellKey,
    pub target_proportion: f64,
    pub groups: Vec<GroupFlips>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlipLog {
    pub seed: u64,
    pub group_attr: String,
    pub conditioning: Vec<String>,
    pub total_flips: usize,
    pub cells: Vec<CellFlips>,
    pub flips: Vec<Flip>,
}

/// `num / den` rounded half to even, for `den > 0`.
fn div_round_half_even(num: u64, den: u64) -> u64 {
    let (q, r) = (num / den, num % den);
    match (2 * r).cmp(&den) {
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Equal => q + (q & 1),
        std::cmp::Ordering::Less => q,
    }
}

/// Record indices grouped by (cell, level), each list sorted by id.
fn strata(
    dataset: &Dataset,
    aus: &[String],
    group_attr: &str,
) -> Result<BTreeMap<AuCellKey, BTreeMap<String, Vec<usize>>>> {
    dataset.require_binarized(aus)?;
    dataset.levels(group_attr)?;
    let recs = dataset.records();
    let mut order: Vec<usize> = (0..recs.len()).collect();
    order.sort_by(|&a, &b| recs[a].id.cmp(&recs[b].id).then(a.cmp(&b)));
    let mut out: BTreeMap<AuCellKey, BTreeMap<String, Vec<usize>>> = BTreeMap::new();
    for i in order {
        let key = recs[i].cell_key(aus).map_err(Error::NotBinarized)?;
        out.entry(key)
            .or_default()
            .entry(recs[i].group[group_attr].clone())
            .or_default()
            .push(i);
    }
    Ok(out)
}

/// Flips labels inside every AU cell so each group's positive proportion
/// moves to the cell's pooled proportion. Flip counts are
/// round-half-even(n_g · |p_g − p*|); the flipped records are drawn
/// uniformly from the eligible label within the (cell, group) stratum.
pub fn relabel_to_parity(
    dataset: &Dataset,
    aus: &[String],
    group_attr: &str,
    seed: u64,
) -> Result<(Dataset, FlipLog)> {
    let levels = dataset.levels(group_attr)?.to_vec();
    if levels.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "attribute `{group_attr}` needs at least two levels"
        )));
    }
    let strata = strata(dataset, aus, group_attr)?;
    let root = Rng::new(seed).child("relabel");
    let mut records = dataset.records().to_vec();
    let mut log = FlipLog {
        seed,
        group_attr: group_attr.to_string(),
        conditioning: {
            let mut a = aus.to_vec();
            a.sort();
            a.dedup();
            a
        },
        total_flips: 0,
        cells: Vec::new(),
        flips: Vec::new(),
    };

    for (cell, by_level) in &strata {
        let count = |idx: &[usize]| idx.iter().filter(|&&i| records[i].label == 1).count() as u64;
        let total_n: u64 = by_level.values().map(|v| v.len() as u64).sum();
        let total_k: u64 = by_level.values().map(|v| count(v)).sum();
        let cell_rng = root.child(&cell.to_string());
        let mut summary = CellFlips {
            cell: cell.clone(),
            target_proportion: total_k as f64 / total_n as f64,
            groups: Vec::new(),
        };
        let mut cell_flips = Vec::new();
        for level in &levels {
            let Some(idx) = by_level.get(level) else { continue };
            let n = idx.len() as u64;
            let k = count(idx);
            // n·(p_g − p*) = (k·N − n·K) / N, rounded exactly
            let num = i128::from(k) * i128::from(total_n) - i128::from(n) * i128::from(total_k);
            let flips = div_round_half_even(num.unsigned_abs() as u64, total_n);
            let (from, to) = if num > 0 { (1u8, 0u8) } else { (0, 1) };
            let eligible: Vec<usize> = idx.iter().copied().filter(|&i| records[i].label == from).collect();
            let applied = flips.min(eligible.len() as u64);
            let mut rng = cell_rng.child(level);
            let mut chosen: Vec<usize> = sample(&mut rng, eligible.len(), applied as usize)
                .into_iter()
                .map(|j| eligible[j])
                .collect();
            chosen.sort_unstable();
            for &i in &chosen {
                cell_flips.push((i, level.clone(), from, to));
            }
            let after = if from == 1 { k - applied } else { k + applied };
            summary.groups.push(GroupFlips {
                level: level.clone(),
                n,
                positives_before: k,
                positives_after: after,
                requested: if num > 0 { -(flips as i64) } else { flips as i64 },
                applied,
                deficit: flips - applied,
            });
        }
        let mut ordered: Vec<Flip> = Vec::with_capacity(cell_flips.len());
        for (i, level, from, to) in cell_flips {
            records[i].label = to;
            ordered.push(Flip {
                id: records[i].id.clone(),
                cell: cell.clone(),
                level,
                from,
                to,
            });
        }
        ordered.sort_by(|a, b| a.id.cmp(&b.id));
        log.flips.extend(ordered);
        log.cells.push(summary);
    }
    log.total_flips = log.flips.len();
    Ok((dataset.with_records(records)?, log))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Shortfall {
    pub cell: AuCellKey,
    pub level: String,
    pub requested: usize,
    pub available: usize,
}

/// Uniform sample of `min(per_cell_count, available)` records from every
/// (AU cell, group level) stratum. Kept records stay in dataset order.
pub fn balanced_subsample(
    dataset: &Dataset,
    aus: &[String],
    group_attr: &str,
    per_cell_count: usize,
    seed: u64,
) -> Result<(Dataset, Vec<Shortfall>)> {
    if per_cell_count == 0 {
        return Err(Error::InvalidCount("per-cell count must be at least 1".into()));
    }
    let levels = dataset.levels(group_attr)?.to_vec();
    let strata = strata(dataset, aus, group_attr)?;
    let root = Rng::new(seed).child("balanced_subsample");
    let mut keep = vec![false; dataset.len()];
    let mut shortfalls = Vec::new();
    for cell in AuCellKey::enumerate(aus) {
        let cell_rng = root.child(&cell.to_string());
        for level in &levels {
            let idx = strata
                .get(&cell)
                .and_then(|m| m.get(level))
                .map(Vec::as_slice)
                .unwrap_or(&[]);
            if idx.len() < per_cell_count {
                shortfalls.push(Shortfall {
                    cell: cell.clone(),
                    level: level.clone(),
                    requested: per_cell_count,
                    available: idx.len(),
                });
                idx.iter().for_each(|&i| keep[i] = true);
            } else {
                let mut rng = cell_rng.child(level);
                for j in sample(&mut rng, idx.len(), per_cell_count) {
                    keep[idx[j]] = true;
                }
            }
        }
    }
    let records = dataset
        .records()
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(r, _)| r.clone())
        .collect();
    Ok((dataset.with_records(records)?, shortfalls))
}
