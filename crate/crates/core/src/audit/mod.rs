//! Annotation-bias audit: conditional label proportions per AU cell and
//! group, independence tests, and logistic fits of the label on AU
//! intensities plus group membership.
//!
//! Labels are unbiased with respect to a protected attribute Z when
//! Y ⊥ Z | AU. Each conditioning cell gets a groups × {0, 1} table and a
//! Pearson chi-square test; cells too sparse for the approximation are
//! reported with `insufficient_data` status instead of a p-value.

mod chi_square;
mod curves;
mod logistic;

use std::fmt::Write as _;

use serde::Serialize;

pub use chi_square::{
    chi_square_independence, pearson_statistic, significance_code, two_proportion_test,
    ChiSquareTest, ContingencyTable, DEFAULT_MIN_EXPECTED,
};
pub use curves::{bias_curves, Curve, CurvePoint, CurveSet};
pub use logistic::{logistic_fit, LogisticFit};

use crate::dataset::{AnnotatedRecord, AuCellKey, Dataset};
use crate::error::{Error, Result};

/// Which presence patterns define the conditioning cells.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "aus", rename_all = "lowercase")]
pub enum Conditioning {
    /// One cell per joint presence pattern, e.g. (AU6, AU12) ∈ {0,1}².
    Joint(Vec<String>),
    /// Two cells per AU: AU = 0 and AU = 1.
    Marginal(Vec<String>),
}

impl Conditioning {
    pub fn aus(&self) -> &[String] {
        match self {
            Conditioning::Joint(a) | Conditioning::Marginal(a) => a,
        }
    }

    pub fn cells(&self) -> Vec<AuCellKey> {
        match self {
            Conditioning::Joint(aus) => AuCellKey::enumerate(aus),
            Conditioning::Marginal(aus) => {
                let mut sorted = aus.clone();
                sorted.sort();
                sorted.dedup();
                sorted
                    .iter()
                    .flat_map(|au| (0..=1u8).map(move |b| AuCellKey::new(vec![(au.clone(), b)])))
                    .collect()
            }
        }
    }
}

fn in_cell(record: &AnnotatedRecord, key: &AuCellKey) -> bool {
    key.bits()
        .iter()
        .all(|(au, b)| record.au_presence.get(au) == Some(b))
}

/// What to do with group levels too sparse for the chi-square test.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SmallLevelPolicy {
    #[default]
    MarkInsufficient,
    MergeIntoOther,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditOptions {
    pub min_expected: f64,
    pub small_levels: SmallLevelPolicy,
    pub with_logistic: bool,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self {
            min_expected: DEFAULT_MIN_EXPECTED,
            small_levels: SmallLevelPolicy::MarkInsufficient,
            with_logistic: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Tested,
    InsufficientData,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupProportion {
    pub level: String,
    pub n: u64,
    pub positives: u64,
    /// P(Y = 1 | cell, group); absent when the group has no records in the cell.
    pub proportion: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellReport {
    pub condition: AuCellKey,
    pub groups: Vec<GroupProportion>,
    /// Second level minus first; two-level reports only.
    pub delta: Option<f64>,
    pub chi_square: Option<f64>,
    pub dof: Option<usize>,
    pub p_value: Option<f64>,
    pub significance: Option<String>,
    pub status: CellStatus,
    /// Level with the highest proportion, when the cell is significant at 0.05.
    pub highest_level: Option<String>,
    /// Levels pooled into `other` for the test.
    pub merged_levels: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PooledLogistic {
    pub regressors: Vec<String>,
    pub fit: LogisticFit,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BiasReport {
    pub target: String,
    pub group_attr: String,
    pub levels: Vec<String>,
    pub conditioning: Conditioning,
    pub min_expected: f64,
    pub delta_convention: String,
    pub label_scope: String,
    pub test: String,
    pub cells: Vec<CellReport>,
    pub logistic: Option<PooledLogistic>,
    pub logistic_error: Option<String>,
}

impl BiasReport {
    pub fn tested_cells(&self) -> impl Iterator<Item = &CellReport> {
        self.cells.iter().filter(|c| c.status == CellStatus::Tested)
    }

    /// Table-shaped CSV, one row per condition cell in key order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("condition");
        for l in &self.levels {
            let _ = write!(out, ",n_{l},positives_{l},p_{l}");
        }
        out.push_str(",delta,chi_square,dof,p_value,signif,status\n");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for c in &self.cells {
            let _ = write!(out, "\"{}\"", c.condition);
            for g in &c.groups {
                let _ = write!(out, ",{},{},{}", g.n, g.positives, opt(g.proportion));
            }
            let status = match c.status {
                CellStatus::Tested => "tested",
                CellStatus::InsufficientData => "insufficient_data",
            };
            let _ = writeln!(
                out,
                ",{},{},{},{},{},{}",
                opt(c.delta),
                opt(c.chi_square),
                c.dof.map(|d| d.to_string()).unwrap_or_default(),
                opt(c.p_value),
                c.significance.clone().unwrap_or_default(),
                status
            );
        }
        out
    }
}

fn group_counts(records: &[&AnnotatedRecord], attr: &str, levels: &[String]) -> Vec<GroupProportion> {
    levels
        .iter()
        .map(|level| {
            let (n, positives) = records
                .iter()
                .filter(|r| r.group[attr] == *level)
                .fold((0u64, 0u64), |(n, k), r| (n + 1, k + u64::from(r.label)));
            GroupProportion {
                level: level.clone(),
                n,
                positives,
                proportion: (n > 0).then(|| positives as f64 / n as f64),
            }
        })
        .collect()
}

fn table_for(groups: &[GroupProportion], condition: &AuCellKey) -> Result<ContingencyTable> {
    let mut t = ContingencyTable::new(
        groups.iter().map(|g| g.level.clone()).collect(),
        vec!["0".into(), "1".into()],
        groups.iter().map(|g| vec![g.n - g.positives, g.positives]).collect(),
    )?;
    t.condition = Some(condition.to_string());
    Ok(t)
}

fn test_cell(
    condition: AuCellKey,
    groups: Vec<GroupProportion>,
    options: &AuditOptions,
) -> Result<CellReport> {
    let delta = match groups.as_slice() {
        [a, b] => a.proportion.zip(b.proportion).map(|(pa, pb)| pb - pa),
        _ => None,
    };
    let mut merged_levels = Vec::new();
    let mut rows = groups.clone();
    if options.small_levels == SmallLevelPolicy::MergeIntoOther && groups.len() > 2 {
        let total: u64 = groups.iter().map(|g| g.n).sum();
        let pos: u64 = groups.iter().map(|g| g.positives).sum();
        let col_min = pos.min(total - pos) as f64;
        let small: Vec<bool> = groups
            .iter()
            .map(|g| total == 0 || (g.n as f64 * col_min / total as f64) < options.min_expected)
            .collect();
        if small.iter().any(|&s| s) {
            let mut other = GroupProportion {
                level: "other".into(),
                n: 0,
                positives: 0,
                proportion: None,
            };
            rows = Vec::new();
            for (g, s) in groups.iter().zip(&small) {
                if *s {
                    merged_levels.push(g.level.clone());
                    other.n += g.n;
                    other.positives += g.positives;
                } else {
                    rows.push(g.clone());
                }
            }
            rows.push(other);
        }
    }
    let outcome = if rows.len() >= 2 {
        chi_square_independence(&table_for(&rows, &condition)?, options.min_expected).ok()
    } else {
        None
    };
    let (status, chi, dof, p) = match outcome {
        Some(t) => (CellStatus::Tested, Some(t.statistic), Some(t.dof), Some(t.p_value)),
        None => (CellStatus::InsufficientData, None, None, None),
    };
    let highest_level = match p {
        Some(p) if p < 0.05 => groups
            .iter()
            .filter_map(|g| g.proportion.map(|pr| (pr, &g.level)))
            .fold(None, |best: Option<(f64, &String)>, (pr, l)| match best {
                Some((bp, _)) if bp >= pr => best,
                _ => Some((pr, l)),
            })
            .map(|(_, l)| l.clone()),
        _ => None,
    };
    Ok(CellReport {
        condition,
        groups,
        delta,
        chi_square: chi,
        dof,
        p_value: p,
        significance: p.map(|p| significance_code(p).to_string()),
        status,
        highest_level,
        merged_levels,
    })
}

fn pooled_logistic(
    dataset: &Dataset,
    aus: &[String],
    group_attr: &str,
    levels: &[String],
) -> Result<PooledLogistic> {
    let mut aus: Vec<String> = aus.to_vec();
    aus.sort();
    aus.dedup();
    let mut regressors = vec!["intercept".to_string()];
    regressors.extend(aus.iter().cloned());
    regressors.extend(levels.iter().skip(1).map(|l| format!("{group_attr}={l}")));

    let mut recs: Vec<&AnnotatedRecord> = dataset.records().iter().collect();
    recs.sort_by(|a, b| a.id.cmp(&b.id));
    let design: Vec<Vec<f64>> = recs
        .iter()
        .map(|r| {
            let mut row = vec![1.0];
            row.extend(aus.iter().map(|au| r.au_intensities[au]));
            row.extend(levels.iter().skip(1).map(|l| f64::from(u8::from(r.group[group_attr] == *l))));
            row
        })
        .collect();
    let labels: Vec<u8> = recs.iter().map(|r| r.label).collect();
    Ok(PooledLogistic {
        regressors,
        fit: logistic_fit(&design, &labels)?,
    })
}

fn bias_report(
    dataset: &Dataset,
    conditioning: &Conditioning,
    group_attr: &str,
    target: &str,
    options: &AuditOptions,
) -> Result<BiasReport> {
    dataset.require_binarized(conditioning.aus())?;
    let levels = dataset.levels(group_attr)?.to_vec();
    if levels.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "attribute `{group_attr}` needs at least two levels"
        )));
    }
    let cells = conditioning
        .cells()
        .into_iter()
        .map(|key| {
            let members: Vec<&AnnotatedRecord> =
                dataset.records().iter().filter(|r| in_cell(r, &key)).collect();
            let groups = group_counts(&members, group_attr, &levels);
            test_cell(key, groups, options)
        })
        .collect::<Result<Vec<_>>>()?;

    let (logistic, logistic_error) = if options.with_logistic {
        match pooled_logistic(dataset, conditioning.aus(), group_attr, &levels) {
            Ok(l) => (Some(l), None),
            Err(e) => (None, Some(e.to_string())),
        }
    } else {
        (None, None)
    };

    Ok(BiasReport {
        target: target.to_string(),
        group_attr: group_attr.to_string(),
        delta_convention: format!("P(Y=1|{}) - P(Y=1|{})", levels[1], levels[0]),
        levels,
        conditioning: conditioning.clone(),
        min_expected: options.min_expected,
        label_scope: "binary target vs rest".into(),
        test: "Pearson chi-square test of independence, no continuity correction".into(),
        cells,
        logistic,
        logistic_error,
    })
}

/// Per-cell proportions, Δ and chi-square tests for a protected attribute.
pub fn conditional_bias_report(
    dataset: &Dataset,
    conditioning: &Conditioning,
    group_attr: &str,
    target: &str,
    options: &AuditOptions,
) -> Result<BiasReport> {
    bias_report(dataset, conditioning, group_attr, target, options)
}

/// Same as [`conditional_bias_report`] for attributes with three or more
/// levels (age groups, race), using groups × 2 tables.
pub fn multi_group_bias_report(
    dataset: &Dataset,
    conditioning: &Conditioning,
    group_attr: &str,
    target: &str,
    options: &AuditOptions,
) -> Result<BiasReport> {
    let k = dataset.levels(group_attr)?.len();
    if k < 3 {
        return Err(Error::InvalidConfig(format!(
            "multi-group audit needs at least three levels, `{group_attr}` has {k}"
        )));
    }
    bias_report(dataset, conditioning, group_attr, target, options)
}
