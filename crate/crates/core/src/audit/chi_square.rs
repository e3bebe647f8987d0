use serde::Serialize;

use crate::error::{Error, Result};
use crate::special::{chi_square_sf, normal_two_sided};

/// Default minimum expected count for the chi-square approximation.
pub const DEFAULT_MIN_EXPECTED: f64 = 5.0;

/// Group levels (rows) against label values (columns).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContingencyTable {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
    /// Conditioning event the table was built for, if any.
    pub condition: Option<String>,
}

impl ContingencyTable {
    pub fn new(row_labels: Vec<String>, col_labels: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self> {
        if row_labels.len() < 2 || col_labels.len() < 2 {
            return Err(Error::InvalidCounts("a contingency table needs at least 2 rows and 2 columns".into()));
        }
        if counts.len() != row_labels.len() || counts.iter().any(|r| r.len() != col_labels.len()) {
            return Err(Error::InvalidCounts("count matrix shape does not match labels".into()));
        }
        Ok(Self {
            row_labels,
            col_labels,
            counts,
            condition: None,
        })
    }

    /// Unlabelled table, rows and columns numbered from 0.
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let rows = counts.len();
        let cols = counts.first().map_or(0, Vec::len);
        Self::new(
            (0..rows).map(|i| i.to_string()).collect(),
            (0..cols).map(|j| j.to_string()).collect(),
            counts,
        )
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_totals(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_totals(&self) -> Vec<u64> {
        (0..self.col_labels.len())
            .map(|j| self.counts.iter().map(|r| r[j]).sum())
            .collect()
    }

    /// Expected counts under independence, row total × column total / N.
    pub fn expected(&self) -> Vec<Vec<f64>> {
        let n = self.total() as f64;
        let cols = self.col_totals();
        self.row_totals()
            .iter()
            .map(|&r| {
                cols.iter()
                    .map(|&c| if n > 0.0 { r as f64 * c as f64 / n } else { 0.0 })
                    .collect()
            })
            .collect()
    }

    pub fn min_expected(&self) -> f64 {
        self.expected()
            .iter()
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson statistic without the expected-count guard. `None` when some
/// expected count is zero.
pub fn pearson_statistic(table: &ContingencyTable) -> Option<(f64, usize)> {
    let expected = table.expected();
    let mut stat = 0.0;
    for (obs_row, exp_row) in table.counts.iter().zip(&expected) {
        for (&o, &e) in obs_row.iter().zip(exp_row) {
            if e <= 0.0 {
                return None;
            }
            let d = o as f64 - e;
            stat += d * d / e;
        }
    }
    let dof = (table.row_labels.len() - 1) * (table.col_labels.len() - 1);
    Some((stat, dof))
}

/// Pearson chi-square test of independence, no continuity correction.
pub fn chi_square_independence(table: &ContingencyTable, min_expected: f64) -> Result<ChiSquareTest> {
    let smallest = table.min_expected();
    if !(smallest >= min_expected) || smallest <= 0.0 {
        return Err(Error::InsufficientData(format!(
            "smallest expected count {smallest:.3} is below {min_expected}"
        )));
    }
    let (statistic, dof) = pearson_statistic(table).expect("expected counts are positive");
    Ok(ChiSquareTest {
        statistic,
        dof,
        p_value: chi_square_sf(statistic, dof as f64),
    })
}

/// Pooled two-sided z-test for k1/n1 = k2/n2.
pub fn two_proportion_test(k1: u64, n1: u64, k2: u64, n2: u64) -> Result<f64> {
    if n1 == 0 || n2 == 0 || k1 > n1 || k2 > n2 {
        return Err(Error::InvalidCounts(format!("({k1}/{n1}) vs ({k2}/{n2})")));
    }
    let pooled = (k1 + k2) as f64 / (n1 + n2) as f64;
    if pooled <= 0.0 || pooled >= 1.0 {
        return Ok(1.0);
    }
    let se = (pooled * (1.0 - pooled) * (1.0 / n1 as f64 + 1.0 / n2 as f64)).sqrt();
    let z = (k1 as f64 / n1 as f64 - k2 as f64 / n2 as f64) / se;
    Ok(normal_two_sided(z).clamp(0.0, 1.0))
}

/// R-style significance code.
pub fn significance_code(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else if p < 0.1 {
        "."
    } else {
        ""
    }
}
