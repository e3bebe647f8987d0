//! End-to-end runs: baseline vs. mitigated training on a synthetic dataset
//! with a fair test set, and the scripted demo.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aucfer::{score_dataset, train, train_cross_entropy, Reduction, TrainConfig};
use crate::audit::{conditional_bias_report, AuditOptions, Conditioning};
use crate::dataset::{write_dataset, Dataset, Split};
use crate::error::{Error, Result};
use crate::metrics::{build_fair_test_set, evaluate, BalanceMode, EvalResult, FairTestLog, FairTestOptions, MeanStd};
use crate::relabel::relabel_to_parity;
use crate::report::{report_json, Header};
use crate::synth::{generate, SynthConfig};

fn default_group_attr() -> String {
    "gender".into()
}

fn default_positive_group() -> String {
    "F".into()
}

fn default_conditioning() -> Vec<String> {
    vec!["AU12".into(), "AU6".into()]
}

fn default_reference() -> TrainConfig {
    TrainConfig {
        lambda: 0.0,
        ..TrainConfig::default()
    }
}

/// Which labels the test set is scored against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestLabels {
    /// The annotator's (possibly biased) labels.
    Biased,
    /// The group-blind reference labels of synthetic data.
    #[default]
    Fair,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub name: String,
    /// Train on labels relabeled to per-cell parity.
    #[serde(default)]
    pub relabel: bool,
    /// `seed` is replaced by the run seed.
    pub train: TrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub data: SynthConfig,
    #[serde(default = "default_group_attr")]
    pub group_attr: String,
    #[serde(default = "default_positive_group")]
    pub positive_group: String,
    #[serde(default = "default_conditioning")]
    pub conditioning: Vec<String>,
    /// Model whose scores decide which test records are easy.
    #[serde(default = "default_reference")]
    pub reference: TrainConfig,
    #[serde(default)]
    pub easy_low: Option<f64>,
    #[serde(default)]
    pub easy_high: Option<f64>,
    #[serde(default)]
    pub mode: BalanceMode,
    #[serde(default)]
    pub test_labels: TestLabels,
    pub runs: Vec<RunSpec>,
}

impl CompareConfig {
    /// Baseline, relabeled and triplet-regularized runs on the happy data.
    /// Triplet terms are averaged and the step size is 0.01 for every run.
    pub fn happy(n: usize, seed: u64) -> Self {
        let base = TrainConfig {
            learning_rate: 0.01,
            reduction: Reduction::Mean,
            ..TrainConfig::default()
        };
        Self {
            data: SynthConfig::happy(n, 1.0, seed),
            group_attr: default_group_attr(),
            positive_group: default_positive_group(),
            conditioning: default_conditioning(),
            reference: default_reference(),
            easy_low: Some(1e-5),
            easy_high: Some(0.99999),
            mode: BalanceMode::BalancePositiveRate,
            test_labels: TestLabels::Fair,
            runs: vec![
                RunSpec {
                    name: "baseline".into(),
                    relabel: false,
                    train: TrainConfig {
                        lambda: 0.0,
                        ..base.clone()
                    },
                },
                RunSpec {
                    name: "relabeled".into(),
                    relabel: true,
                    train: TrainConfig {
                        lambda: 0.0,
                        ..base.clone()
                    },
                },
                RunSpec {
                    name: "aucfer".into(),
                    relabel: false,
                    train: base,
                },
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunResult {
    pub name: String,
    pub seed: u64,
    pub eval: EvalResult,
    pub final_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub name: String,
    pub accuracy: MeanStd,
    pub f1: MeanStd,
    pub disc_signed: MeanStd,
    pub disc_abs: MeanStd,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Comparison {
    pub seeds: Vec<u64>,
    pub fair_test: FairTestLog,
    pub runs: Vec<RunResult>,
    pub summary: Vec<SummaryRow>,
}

impl Comparison {
    /// One row per method, `mean ± sd` cells.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,runs,accuracy,f1,disc_signed,disc_abs\n");
        for r in &self.summary {
            out.push_str(&format!(
                "{},{},{:.4},{:.4},{:.4},{:.4}\n",
                r.name, r.accuracy.n, r.accuracy, r.f1, r.disc_signed, r.disc_abs
            ));
        }
        out
    }

    pub fn row(&self, name: &str) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.name == name)
    }
}

struct Prepared {
    data: Dataset,
    relabeled: Dataset,
    test: Dataset,
    fair_test: FairTestLog,
}

fn prepare(cfg: &CompareConfig, data: Dataset) -> Result<Prepared> {
    if cfg.runs.is_empty() {
        return Err(Error::InvalidConfig("no runs configured".into()));
    }
    let reference = train_cross_entropy(&data, &cfg.reference)?;
    let test_split = match cfg.test_labels {
        TestLabels::Biased => data.split(Split::Test)?,
        TestLabels::Fair => data.split(Split::Test)?.with_fair_labels()?,
    };
    let scores = score_dataset(&reference.params, &test_split)?;
    let options = FairTestOptions {
        easy_low: cfg.easy_low,
        easy_high: cfg.easy_high,
        group_attr: cfg.group_attr.clone(),
        aus: cfg.conditioning.clone(),
        mode: cfg.mode,
        seed: cfg.data.seed,
    };
    let (test, fair_test) = build_fair_test_set(&test_split, &scores, &options)?;
    let (relabeled, _) = relabel_to_parity(&data, &cfg.conditioning, &cfg.group_attr, cfg.data.seed)?;
    Ok(Prepared {
        data,
        relabeled,
        test,
        fair_test,
    })
}

fn run_one(cfg: &CompareConfig, prep: &Prepared, spec: &RunSpec, seed: u64) -> Result<RunResult> {
    let train_cfg = TrainConfig {
        seed,
        conditioning: cfg.conditioning.clone(),
        ..spec.train.clone()
    };
    let data = if spec.relabel { &prep.relabeled } else { &prep.data };
    let out = train(data, &train_cfg)?;
    let scores = score_dataset(&out.params, &prep.test)?;
    Ok(RunResult {
        name: spec.name.clone(),
        seed,
        eval: evaluate(&scores, &prep.test, &cfg.group_attr, &cfg.positive_group)?,
        final_loss: *out.loss_trace.last().unwrap(),
    })
}

fn compare_prepared(cfg: &CompareConfig, prep: &Prepared, seeds: &[u64]) -> Result<Comparison> {
    let jobs: Vec<(&RunSpec, u64)> = cfg
        .runs
        .iter()
        .flat_map(|spec| seeds.iter().map(move |&s| (spec, s)))
        .collect();
    let runs: Vec<RunResult> = jobs
        .par_iter()
        .map(|&(spec, seed)| run_one(cfg, prep, spec, seed))
        .collect::<Result<_>>()?;
    let summary = cfg
        .runs
        .iter()
        .map(|spec| {
            let mine: Vec<&EvalResult> = runs.iter().filter(|r| r.name == spec.name).map(|r| &r.eval).collect();
            let col = |f: fn(&EvalResult) -> f64| MeanStd::of(&mine.iter().map(|e| f(e)).collect::<Vec<_>>());
            SummaryRow {
                name: spec.name.clone(),
                accuracy: col(|e| e.accuracy),
                f1: col(|e| e.f1),
                disc_signed: col(|e| e.disc_signed),
                disc_abs: col(|e| e.disc_abs),
            }
        })
        .collect();
    Ok(Comparison {
        seeds: seeds.to_vec(),
        fair_test: prep.fair_test.clone(),
        runs,
        summary,
    })
}

/// Trains every configured run once per seed and evaluates each on the
/// shared fair test set. Runs execute in parallel; results keep config and
/// seed order.
pub fn compare(cfg: &CompareConfig, seeds: &[u64]) -> Result<Comparison> {
    if seeds.is_empty() {
        return Err(Error::InvalidCount("at least one seed is required".into()));
    }
    let data = generate(&cfg.data)?;
    let prep = prepare(cfg, data)?;
    compare_prepared(cfg, &prep, seeds)
}

/// Run seeds `seed, seed + 1, ...`.
pub fn seed_list(seed: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|i| seed.wrapping_add(i)).collect()
}

#[derive(Clone, Debug)]
pub struct DemoOutput {
    /// File name → canonical contents.
    pub files: BTreeMap<String, String>,
    pub comparison: Comparison,
}

/// synth → audit → relabel → audit → baseline vs. λ = 10 training → fair
/// evaluation, all from one seed.
pub fn run_demo(cfg: &CompareConfig, seeds: &[u64]) -> Result<DemoOutput> {
    let seed = cfg.data.seed;
    let data = generate(&cfg.data)?;
    let mut csv = Vec::new();
    write_dataset(&data, &mut csv)?;
    let header = Header::new("demo", Some(seed), Some(&csv));

    let cond = Conditioning::Joint(cfg.conditioning.clone());
    let options = AuditOptions::default();
    let before = conditional_bias_report(&data, &cond, &cfg.group_attr, "happy", &options)?;
    let (relabeled, flips) = relabel_to_parity(&data, &cfg.conditioning, &cfg.group_attr, seed)?;
    let after = conditional_bias_report(&relabeled, &cond, &cfg.group_attr, "happy", &options)?;
    let fair = conditional_bias_report(&data.with_fair_labels()?, &cond, &cfg.group_attr, "happy", &options)?;

    let prep = prepare(cfg, data)?;
    let comparison = compare_prepared(cfg, &prep, seeds)?;

    let mut files = BTreeMap::new();
    files.insert("audit_before.json".into(), report_json(&header, &before)?);
    files.insert("audit_before.csv".into(), before.to_csv());
    files.insert("audit_fair_labels.json".into(), report_json(&header, &fair)?);
    files.insert("flips.json".into(), report_json(&header, &flips)?);
    files.insert("audit_after.json".into(), report_json(&header, &after)?);
    files.insert("audit_after.csv".into(), after.to_csv());
    files.insert("comparison.json".into(), report_json(&header, &comparison)?);
    files.insert("comparison.csv".into(), comparison.to_csv());
    Ok(DemoOutput { files, comparison })
}
