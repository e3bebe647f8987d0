use std::fmt::Write as _;

use serde::Serialize;

use super::logistic::{logistic_fit, LogisticFit};
use crate::dataset::{AnnotatedRecord, Dataset};
use crate::error::{Error, Result};
use crate::special::sigmoid;

/// z for a two-sided 95% band.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub intensity: f64,
    pub probability: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Curve {
    pub au: String,
    pub level: String,
    pub n: usize,
    pub fit: LogisticFit,
    pub points: Vec<CurvePoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurveSet {
    pub group_attr: String,
    pub levels: Vec<String>,
    pub grid: Vec<f64>,
    pub curves: Vec<Curve>,
}

impl CurveSet {
    /// One row per (AU, grid point); probability and band columns per level.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("au,intensity");
        for l in &self.levels {
            let _ = write!(out, ",p_{l},lower_{l},upper_{l}");
        }
        out.push('\n');
        let mut aus: Vec<&String> = self.curves.iter().map(|c| &c.au).collect();
        aus.dedup();
        for au in aus {
            for (i, x) in self.grid.iter().enumerate() {
                let _ = write!(out, "{au},{x}");
                for l in &self.levels {
                    let c = self
                        .curves
                        .iter()
                        .find(|c| &c.au == au && &c.level == l)
                        .expect("curve per level");
                    let p = &c.points[i];
                    let _ = write!(out, ",{},{},{}", p.probability, p.lower, p.upper);
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Per-group logistic curves of P(Y = 1 | intensity), one AU at a time, with
/// 95% delta-method bands on the logit scale.
pub fn bias_curves(
    dataset: &Dataset,
    aus: &[String],
    group_attr: &str,
    grid: &[f64],
) -> Result<CurveSet> {
    let levels = dataset.levels(group_attr)?.to_vec();
    let mut recs: Vec<&AnnotatedRecord> = dataset.records().iter().collect();
    recs.sort_by(|a, b| a.id.cmp(&b.id));
    let mut curves = Vec::new();
    for au in aus {
        if !dataset.au_ids().contains(au) {
            return Err(Error::UnknownAu(au.clone()));
        }
        for level in &levels {
            let members: Vec<&&AnnotatedRecord> =
                recs.iter().filter(|r| r.group[group_attr] == *level).collect();
            let design: Vec<Vec<f64>> = members
                .iter()
                .map(|r| vec![1.0, r.au_intensities[au]])
                .collect();
            let labels: Vec<u8> = members.iter().map(|r| r.label).collect();
            let fit = logistic_fit(&design, &labels)?;
            let points = grid
                .iter()
                .map(|&x| {
                    let row = [1.0, x];
                    let eta = fit.coefficients[0] + fit.coefficients[1] * x;
                    let se = fit.linear_predictor_se(&row);
                    CurvePoint {
                        intensity: x,
                        probability: sigmoid(eta),
                        lower: sigmoid(eta - Z95 * se),
                        upper: sigmoid(eta + Z95 * se),
                    }
                })
                .collect();
            curves.push(Curve {
                au: au.clone(),
                level: level.clone(),
                n: members.len(),
                fit,
                points,
            });
        }
    }
    Ok(CurveSet {
        group_attr: group_attr.to_string(),
        levels,
        grid: grid.to_vec(),
        curves,
    })
}
