//! Synthetic AU-annotated data with known annotation bias, and closed-form
//! expectations for it.
//!
//! Each record draws a group, a latent expression state, AU intensities from
//! truncated normals on [0, 5] given that state, and a label from a logistic
//! annotator σ(c + Σ w·intensity + β_group). The fair label uses the same
//! uniform draw with β = 0.

use std::collections::BTreeMap;
use std::path::Path;

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{AnnotatedRecord, AuCellKey, Dataset, Split, AU_MAX};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::special::{gauss_legendre, normal_cdf, sigmoid};

const QUAD_NODES: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncNormal {
    pub mean: f64,
    pub sd: f64,
}

impl TruncNormal {
    fn cdf(&self, x: f64) -> f64 {
        normal_cdf((x - self.mean) / self.sd)
    }

    /// Untruncated probability mass of [lo, hi].
    fn mass(&self, lo: f64, hi: f64) -> f64 {
        self.cdf(hi) - self.cdf(lo)
    }

    fn pdf(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.sd;
        (-0.5 * z * z).exp() / (self.sd * (2.0 * std::f64::consts::PI).sqrt())
    }

    fn sample(&self, rng: &mut Rng) -> f64 {
        let normal = Normal::new(self.mean, self.sd).expect("validated");
        loop {
            let x: f64 = normal.sample(rng);
            if (0.0..=AU_MAX).contains(&x) {
                return x;
            }
        }
    }
}

/// Intensity distributions for one AU under each latent state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuModel {
    pub absent: TruncNormal,
    pub present: TruncNormal,
}

impl AuModel {
    fn for_state(&self, positive: bool) -> &TruncNormal {
        if positive {
            &self.present
        } else {
            &self.absent
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupLevel {
    pub level: String,
    pub prob: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Annotator {
    pub intercept: f64,
    /// Per-unit-intensity weights.
    pub weights: BTreeMap<String, f64>,
    /// β per group level; missing levels get 0.
    #[serde(default)]
    pub group_shift: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    #[serde(default = "default_group_attr")]
    pub group_attr: String,
    /// Level order here is the dataset's level order.
    pub groups: Vec<GroupLevel>,
    pub latent_positive_prob: f64,
    /// Per-level overrides of `latent_positive_prob`.
    #[serde(default)]
    pub composition_shift: BTreeMap<String, f64>,
    pub au_models: BTreeMap<String, AuModel>,
    /// Presence is `intensity > threshold`.
    pub presence_thresholds: BTreeMap<String, f64>,
    pub annotator: Annotator,
    #[serde(default)]
    pub feature_dim: usize,
    #[serde(default)]
    pub feature_noise_std: f64,
    #[serde(default)]
    pub gender_leak_dims: usize,
    #[serde(default)]
    pub test_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_group_attr() -> String {
    "gender".into()
}

impl SynthConfig {
    /// Happy-vs-rest on six AUs, two gender levels (M first, so Δ = F − M),
    /// female labels shifted by `beta_f`.
    pub fn happy(n: usize, beta_f: f64, seed: u64) -> Self {
        let tn = |mean, sd| TruncNormal { mean, sd };
        let au = |absent: TruncNormal, present: TruncNormal| AuModel { absent, present };
        let au_models = BTreeMap::from([
            ("AU4".to_string(), au(tn(0.8, 0.7), tn(0.5, 0.6))),
            ("AU5".to_string(), au(tn(0.5, 0.6), tn(0.6, 0.6))),
            ("AU6".to_string(), au(tn(0.4, 0.6), tn(2.2, 0.9))),
            ("AU7".to_string(), au(tn(0.6, 0.6), tn(1.0, 0.8))),
            ("AU12".to_string(), au(tn(0.3, 0.5), tn(2.6, 1.0))),
            ("AU23".to_string(), au(tn(0.4, 0.5), tn(0.4, 0.5))),
        ]);
        let presence_thresholds = au_models.keys().map(|k| (k.clone(), 1.0)).collect();
        Self {
            n,
            group_attr: "gender".into(),
            groups: vec![
                GroupLevel {
                    level: "M".into(),
                    prob: 0.5,
                },
                GroupLevel {
                    level: "F".into(),
                    prob: 0.5,
                },
            ],
            latent_positive_prob: 0.35,
            composition_shift: BTreeMap::new(),
            au_models,
            presence_thresholds,
            annotator: Annotator {
                intercept: -2.5,
                weights: BTreeMap::from([("AU6".to_string(), 0.5), ("AU12".to_string(), 0.8)]),
                group_shift: BTreeMap::from([("F".to_string(), beta_f)]),
            },
            feature_dim: 24,
            feature_noise_std: 0.5,
            gender_leak_dims: 4,
            test_fraction: 0.3,
            seed,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: SynthConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn levels(&self) -> Vec<String> {
        self.groups.iter().map(|g| g.level.clone()).collect()
    }

    fn beta(&self, level: &str) -> f64 {
        self.annotator.group_shift.get(level).copied().unwrap_or(0.0)
    }

    fn positive_prob(&self, level: &str) -> f64 {
        self.composition_shift
            .get(level)
            .copied()
            .unwrap_or(self.latent_positive_prob)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let prob_ok = |p: f64| (0.0..=1.0).contains(&p);
        if self.groups.len() < 2 {
            return bad("at least two group levels are required".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for g in &self.groups {
            if !prob_ok(g.prob) {
                return bad(format!("probability of `{}` outside [0, 1]", g.level));
            }
            if !seen.insert(&g.level) {
                return bad(format!("duplicate level `{}`", g.level));
            }
        }
        let total: f64 = self.groups.iter().map(|g| g.prob).sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("group probabilities sum to {total}"));
        }
        if !prob_ok(self.latent_positive_prob) || self.composition_shift.values().any(|&p| !prob_ok(p)) {
            return bad("latent positive probabilities must lie in [0, 1]".into());
        }
        if let Some(l) = self
            .composition_shift
            .keys()
            .chain(self.annotator.group_shift.keys())
            .find(|l| !seen.contains(l))
        {
            return bad(format!("unknown level `{l}`"));
        }
        if self.au_models.is_empty() {
            return bad("no AU models".into());
        }
        for (au, m) in &self.au_models {
            for d in [&m.absent, &m.present] {
                if !(d.sd > 0.0 && d.sd.is_finite() && d.mean.is_finite()) {
                    return bad(format!("{au}: standard deviation must be positive"));
                }
                if d.mass(0.0, AU_MAX) < 1e-3 {
                    return bad(format!("{au}: almost no mass inside [0, {AU_MAX}]"));
                }
            }
            match self.presence_thresholds.get(au) {
                Some(t) if (0.0..AU_MAX).contains(t) => {}
                _ => return bad(format!("{au}: presence threshold missing or outside [0, {AU_MAX})")),
            }
        }
        if let Some(au) = self.annotator.weights.keys().find(|a| !self.au_models.contains_key(*a)) {
            return bad(format!("annotator weight for unknown AU `{au}`"));
        }
        let needed = self.au_models.len() + self.gender_leak_dims;
        if self.feature_dim > 0 && self.feature_dim < needed {
            return bad(format!("feature_dim {} is below the {needed} AU and leak dimensions", self.feature_dim));
        }
        if self.feature_dim == 0 && self.gender_leak_dims > 0 {
            return bad("gender_leak_dims needs feature_dim > 0".into());
        }
        if !(self.feature_noise_std >= 0.0 && self.feature_noise_std.is_finite()) {
            return bad("feature_noise_std must be non-negative".into());
        }
        if !prob_ok(self.test_fraction) {
            return bad("test_fraction must lie in [0, 1]".into());
        }
        Ok(())
    }
}

fn record(cfg: &SynthConfig, i: usize, root: &Rng) -> AnnotatedRecord {
    let mut rng = root.child_indexed("record", i as u64);
    let u = rng.uniform();
    let mut acc = 0.0;
    let mut level = &cfg.groups.last().unwrap().level;
    for g in &cfg.groups {
        acc += g.prob;
        if u < acc {
            level = &g.level;
            break;
        }
    }
    let positive = rng.uniform() < cfg.positive_prob(level);
    let mut au_intensities = BTreeMap::new();
    for (au, m) in &cfg.au_models {
        au_intensities.insert(au.clone(), m.for_state(positive).sample(&mut rng));
    }
    let eta = cfg.annotator.intercept
        + cfg
            .annotator
            .weights
            .iter()
            .map(|(au, w)| w * au_intensities[au])
            .sum::<f64>();
    let v = rng.uniform();
    let label = u8::from(v < sigmoid(eta + cfg.beta(level)));
    let fair_label = u8::from(v < sigmoid(eta));
    let split = if rng.uniform() < cfg.test_fraction {
        Split::Test
    } else {
        Split::Train
    };
    let au_presence = au_intensities
        .iter()
        .map(|(au, &x)| (au.clone(), u8::from(x > cfg.presence_thresholds[au])))
        .collect();

    let mut features = Vec::with_capacity(cfg.feature_dim);
    if cfg.feature_dim > 0 {
        let mut frng = root.child_indexed("features", i as u64);
        let noise = Normal::new(0.0, cfg.feature_noise_std.max(f64::MIN_POSITIVE)).expect("validated");
        let draw = |rng: &mut Rng| {
            let z: f64 = noise.sample(rng);
            if cfg.feature_noise_std == 0.0 {
                0.0
            } else {
                z
            }
        };
        for x in au_intensities.values() {
            features.push(x + draw(&mut frng));
        }
        let indicator = f64::from(u8::from(*level != cfg.groups[0].level));
        for _ in 0..cfg.gender_leak_dims {
            features.push(indicator + draw(&mut frng));
        }
        while features.len() < cfg.feature_dim {
            features.push(draw(&mut frng));
        }
    }
    AnnotatedRecord {
        id: format!("s{i:07}"),
        au_intensities,
        au_presence,
        label,
        fair_label: Some(fair_label),
        group: BTreeMap::from([(cfg.group_attr.clone(), level.clone())]),
        features,
        split,
    }
}

/// Draws `config.n` records. Each record has its own random stream, so the
/// output does not depend on thread count.
pub fn generate(config: &SynthConfig) -> Result<Dataset> {
    config.validate()?;
    let root = Rng::new(config.seed).child("synth");
    let records: Vec<AnnotatedRecord> = (0..config.n)
        .into_par_iter()
        .map(|i| record(config, i, &root))
        .collect();
    Dataset::new(
        records,
        BTreeMap::from([(config.group_attr.clone(), config.levels())]),
        config.au_models.keys().cloned().collect(),
        config.feature_dim,
    )
}

/// Closed-form quantities for one (cell, level).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellExpectation {
    pub level: String,
    /// P(cell | level).
    pub cell_probability: f64,
    /// P(Y = 1 | cell, level) for the biased annotator.
    pub positive_proportion: f64,
    /// The same with β = 0.
    pub fair_positive_proportion: f64,
}

/// Gauss–Legendre nodes and weights mapped onto [lo, hi].
fn nodes_on(lo: f64, hi: f64, x: &[f64], w: &[f64]) -> Vec<(f64, f64)> {
    let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
    x.iter().zip(w).map(|(&xi, &wi)| (mid + half * xi, half * wi)).collect()
}

/// Integrates the annotator over the truncated-normal intensities restricted
/// to the cell's presence pattern, 64 Gauss–Legendre nodes per weighted AU.
pub fn expected_cell_proportions(config: &SynthConfig, cell: &AuCellKey) -> Result<Vec<CellExpectation>> {
    config.validate()?;
    for (au, _) in cell.bits() {
        if !config.au_models.contains_key(au) {
            return Err(Error::UnknownAu(au.clone()));
        }
    }
    let weighted: Vec<(&String, f64)> = config
        .annotator
        .weights
        .iter()
        .filter(|(_, &w)| w != 0.0)
        .map(|(a, &w)| (a, w))
        .collect();
    if weighted.len() > 3 {
        return Err(Error::InvalidConfig(
            "quadrature supports at most three weighted AUs".into(),
        ));
    }
    let region = |au: &str| -> (f64, f64) {
        let t = config.presence_thresholds[au];
        match cell.bits().iter().find(|(a, _)| a == au) {
            Some((_, 1)) => (t, AU_MAX),
            Some(_) => (0.0, t),
            None => (0.0, AU_MAX),
        }
    };
    let (gx, gw) = gauss_legendre(QUAD_NODES);

    // per latent state: P(cell | state) and E[σ(η + β) | cell, state] for each β
    let levels = config.levels();
    let betas: Vec<f64> = levels.iter().map(|l| config.beta(l)).collect();
    let state_terms = |positive: bool| -> (f64, Vec<f64>, f64) {
        let mut p_cell = 1.0;
        for (au, _) in cell.bits() {
            let d = config.au_models[au].for_state(positive);
            let (lo, hi) = region(au);
            p_cell *= d.mass(lo, hi) / d.mass(0.0, AU_MAX);
        }
        // tensor-product grid over weighted AUs, each normalized to its region
        let mut grid: Vec<(f64, f64)> = vec![(config.annotator.intercept, 1.0)];
        for (au, w) in &weighted {
            let d = config.au_models[*au].for_state(positive);
            let (lo, hi) = region(au);
            let z = d.mass(lo, hi);
            let pts = nodes_on(lo, hi, &gx, &gw);
            grid = grid
                .iter()
                .flat_map(|&(eta, wt)| {
                    pts.iter()
                        .map(move |&(x, qw)| (eta + w * x, wt * qw * d.pdf(x) / z))
                })
                .collect();
        }
        let biased = betas
            .iter()
            .map(|b| grid.iter().map(|&(eta, wt)| wt * sigmoid(eta + b)).sum())
            .collect();
        let fair = grid.iter().map(|&(eta, wt)| wt * sigmoid(eta)).sum();
        (p_cell, biased, fair)
    };
    let (c1, b1, f1) = state_terms(true);
    let (c0, b0, f0) = state_terms(false);

    Ok(levels
        .iter()
        .enumerate()
        .map(|(i, level)| {
            let pi = config.positive_prob(level);
            let (m1, m0) = (pi * c1, (1.0 - pi) * c0);
            let cell_probability = m1 + m0;
            let mix = |a: f64, b: f64| {
                if cell_probability > 0.0 {
                    (m1 * a + m0 * b) / cell_probability
                } else {
                    f64::NAN
                }
            };
            CellExpectation {
                level: level.clone(),
                cell_probability,
                positive_proportion: mix(b1[i], b0[i]),
                fair_positive_proportion: mix(f1, f0),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_dataset() {
        let ds = generate(&SynthConfig::happy(0, 1.0, 1)).unwrap();
        assert!(ds.is_empty());
    }

    #[test]
    fn zero_sd_is_rejected() {
        let mut cfg = SynthConfig::happy(10, 1.0, 1);
        cfg.au_models.get_mut("AU6").unwrap().present.sd = 0.0;
        assert!(matches!(generate(&cfg), Err(Error::InvalidConfig(_))));
        assert!(expected_cell_proportions(&cfg, &AuCellKey::new(vec![])).is_err());
    }

    #[test]
    fn null_annotator_is_symmetric() {
        let cfg = SynthConfig::happy(10, 0.0, 1);
        for cell in AuCellKey::enumerate(&["AU6".into(), "AU12".into()]) {
            let e = expected_cell_proportions(&cfg, &cell).unwrap();
            assert_eq!(e[0].positive_proportion, e[1].positive_proportion);
            assert_eq!(e[0].positive_proportion, e[0].fair_positive_proportion);
        }
    }

    #[test]
    fn cell_probabilities_sum_to_one() {
        let cfg = SynthConfig::happy(10, 1.0, 1);
        let cells = AuCellKey::enumerate(&["AU6".into(), "AU12".into()]);
        for i in 0..2 {
            let s: f64 = cells
                .iter()
                .map(|c| expected_cell_proportions(&cfg, c).unwrap()[i].cell_probability)
                .sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_and_stream_separated() {
        let cfg = SynthConfig::happy(300, 1.0, 11);
        let a = generate(&cfg).unwrap();
        assert_eq!(a, generate(&cfg).unwrap());
        let mut noisy = cfg.clone();
        noisy.feature_noise_std = 2.0;
        let b = generate(&noisy).unwrap();
        for (x, y) in a.records().iter().zip(b.records()) {
            assert_eq!(x.au_intensities, y.au_intensities);
            assert_eq!((x.label, x.fair_label, &x.group), (y.label, y.fair_label, &y.group));
            assert_ne!(x.features, y.features);
        }
    }

    #[test]
    fn fair_label_never_exceeds_biased_for_positive_shift() {
        let ds = generate(&SynthConfig::happy(2000, 1.0, 2)).unwrap();
        for r in ds.records() {
            match r.group["gender"].as_str() {
                "F" => assert!(r.label >= r.fair_label.unwrap()),
                _ => assert_eq!(r.label, r.fair_label.unwrap()),
            }
        }
    }
}
