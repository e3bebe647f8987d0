use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aucal::audit::{bias_curves, conditional_bias_report, AuditOptions, Conditioning, SmallLevelPolicy};
use aucal::aucfer::{score_dataset, train, ModelFile, Reduction, TrainConfig};
use aucal::calibrate::{calibrate_dataset, global_thresholds, group_thresholds};
use aucal::metrics::evaluate;
use aucal::pipeline::{compare, run_demo, seed_list, CompareConfig};
use aucal::relabel::relabel_to_parity;
use aucal::report::{report_json, Header};
use aucal::synth::{generate, SynthConfig};
use aucal::{binarize, save_dataset, write_dataset, Dataset, Error, GroupThresholds, Schema};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

const DEFAULT_SEED: u64 = 7;

#[derive(Parser, Debug)]
#[command(name = "aucal", version, about = "Audit and mitigate annotation bias in AU-annotated expression data")]
struct Cli {
    /// Seed for every random choice; each command has its own default.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit global and per-group AU presence thresholds.
    Calibrate(CalibrateArgs),
    /// Test label independence from a group attribute within AU cells.
    Audit(AuditArgs),
    /// Flip labels to per-cell parity across groups.
    Relabel(RelabelArgs),
    /// Train a classifier, optionally with the AU triplet term.
    Train(TrainArgs),
    /// Score a test file with a trained model.
    Eval(EvalArgs),
    /// Train and evaluate several configurations over seeds.
    Compare(CompareArgs),
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Run the whole pipeline on synthetic data.
    Demo(DemoArgs),
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Input CSV.
    #[arg(long)]
    data: PathBuf,
    /// Protected attribute column.
    #[arg(long, default_value = "gender")]
    group: String,
    /// Level order for the group attribute, e.g. `M,F`; sorted otherwise.
    #[arg(long, value_delimiter = ',')]
    levels: Vec<String>,
}

impl DataArgs {
    fn schema(&self, label: Option<&str>) -> Schema {
        let mut schema = Schema {
            label: label.map(str::to_string),
            group_attrs: vec![self.group.clone()],
            ..Schema::default()
        };
        if !self.levels.is_empty() {
            schema.level_order.insert(self.group.clone(), self.levels.clone());
        }
        schema
    }

    fn load(&self, label: Option<&str>) -> Result<(Dataset, Vec<u8>), Error> {
        let bytes = std::fs::read(&self.data)?;
        let (ds, report) = aucal::read_dataset(bytes.as_slice(), &self.schema(label))?;
        if report.dropped_count > 0 {
            eprintln!("dropped {} rows with missing AU values", report.dropped_count);
        }
        Ok((ds, bytes))
    }
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// AUs to calibrate against their `<AU>_c` truth columns.
    #[arg(long, value_delimiter = ',', required = true)]
    truth_cols: Vec<String>,
    #[arg(long)]
    out: PathBuf,
    /// Also write a thresholds file usable by `audit --thresholds`.
    #[arg(long)]
    thresholds: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SmallLevels {
    Mark,
    Merge,
}

#[derive(Args, Debug)]
struct AuditArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    condition: Vec<String>,
    #[arg(long)]
    label: String,
    /// One cell per AU instead of per joint pattern.
    #[arg(long)]
    marginal: bool,
    #[arg(long, default_value_t = 5.0)]
    min_expected: f64,
    /// Handling of group levels too small for the test.
    #[arg(long, value_enum, default_value = "mark")]
    small_levels: SmallLevels,
    /// Skip the pooled logistic regression.
    #[arg(long)]
    no_logistic: bool,
    /// Binarize with a thresholds file written by `calibrate`.
    #[arg(long)]
    thresholds: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Table-shaped CSV of the cells.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Per-group probability curves over AU intensity.
    #[arg(long)]
    curves: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RelabelArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    condition: Vec<String>,
    #[arg(long)]
    label: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    fliplog: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ReductionArg {
    Sum,
    Mean,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    label: String,
    #[arg(long, value_delimiter = ',', default_value = "AU6,AU12")]
    condition: Vec<String>,
    #[arg(long, default_value_t = 10.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0.2)]
    margin: f64,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 128)]
    batch: usize,
    #[arg(long, default_value_t = 40)]
    epochs: usize,
    #[arg(long, default_value_t = 16)]
    emb: usize,
    /// How triplet terms are combined within a batch.
    #[arg(long, value_enum, default_value = "sum")]
    reduction: ReductionArg,
    /// Cap on triples per anchor; 0 keeps all.
    #[arg(long, default_value_t = 64)]
    max_triplets: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long, default_value = "gender")]
    group: String,
    #[arg(long)]
    positive_group: String,
    #[arg(long, default_value = "label")]
    label: String,
    /// Score against `fair_label` instead of the label column.
    #[arg(long)]
    fair_labels: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// JSON comparison config (data, runs, evaluation options).
    #[arg(long)]
    configs: PathBuf,
    /// Number of run seeds, starting at `--seed`.
    #[arg(long, default_value_t = 5)]
    seeds: usize,
    /// Summary CSV, one row per method.
    #[arg(long)]
    out: PathBuf,
    /// Full per-run results.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Records for the built-in happy config when no config is given.
    #[arg(long, default_value_t = 20_000)]
    n: usize,
    /// Female label shift for the built-in config.
    #[arg(long, default_value_t = 1.0)]
    beta_f: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DemoArgs {
    #[arg(long, default_value = "demo_out")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 20_000)]
    n: usize,
    #[arg(long, default_value_t = 5)]
    runs: usize,
}

#[derive(Serialize, Deserialize)]
struct ThresholdFile {
    global: BTreeMap<String, f64>,
    per_group: Option<GroupThresholds>,
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text)?;
    Ok(())
}

fn calibrate_cmd(seed: Option<u64>, a: &CalibrateArgs) -> Result<(), Error> {
    let (ds, bytes) = a.data.load(None)?;
    let results = calibrate_dataset(&ds, &a.truth_cols, &a.data.group)?;
    let header = Header::new("calibrate", seed, Some(&bytes));
    write(&a.out, &report_json(&header, &results)?)?;
    if let Some(path) = &a.thresholds {
        let file = ThresholdFile {
            global: global_thresholds(&results),
            per_group: Some(group_thresholds(&results, &a.data.group)),
        };
        write(path, &serde_json::to_string_pretty(&file)?)?;
    }
    for r in &results {
        println!(
            "{}: global {:.3} (accuracy {:.4}), parity p {}",
            r.au_id,
            r.global_threshold,
            r.global_accuracy,
            r.parity_p_value.map_or("n/a".into(), |p| format!("{p:.4}"))
        );
    }
    Ok(())
}

fn audit_cmd(seed: Option<u64>, a: &AuditArgs) -> Result<(), Error> {
    let (mut ds, bytes) = a.data.load(Some(&a.label))?;
    if let Some(path) = &a.thresholds {
        let file: ThresholdFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        ds = binarize(&ds, &file.global, file.per_group.as_ref())?;
    }
    let conditioning = if a.marginal {
        Conditioning::Marginal(a.condition.clone())
    } else {
        Conditioning::Joint(a.condition.clone())
    };
    let options = AuditOptions {
        min_expected: a.min_expected,
        small_levels: match a.small_levels {
            SmallLevels::Mark => SmallLevelPolicy::MarkInsufficient,
            SmallLevels::Merge => SmallLevelPolicy::MergeIntoOther,
        },
        with_logistic: !a.no_logistic,
    };
    let report = conditional_bias_report(&ds, &conditioning, &a.data.group, &a.label, &options)?;
    let header = Header::new("audit", seed, Some(&bytes));
    write(&a.out, &report_json(&header, &report)?)?;
    if let Some(path) = &a.csv {
        write(path, &report.to_csv())?;
    }
    if let Some(path) = &a.curves {
        let grid: Vec<f64> = (0..=50).map(|i| i as f64 * 0.1).collect();
        write(path, &bias_curves(&ds, &a.condition, &a.data.group, &grid)?.to_csv())?;
    }
    print!("{}", report.to_csv());
    Ok(())
}

fn relabel_cmd(seed: Option<u64>, a: &RelabelArgs) -> Result<(), Error> {
    let seed = seed.unwrap_or(DEFAULT_SEED);
    let (ds, bytes) = a.data.load(Some(&a.label))?;
    let (out, log) = relabel_to_parity(&ds, &a.condition, &a.data.group, seed)?;
    save_dataset(&out, &a.out)?;
    if let Some(path) = &a.fliplog {
        write(path, &report_json(&Header::new("relabel", Some(seed), Some(&bytes)), &log)?)?;
    }
    println!("{} labels flipped", log.total_flips);
    Ok(())
}

fn train_cmd(seed: Option<u64>, a: &TrainArgs) -> Result<(), Error> {
    let (ds, _) = a.data.load(Some(&a.label))?;
    let config = TrainConfig {
        lambda: a.lambda,
        margin: a.margin,
        learning_rate: a.lr,
        batch_size: a.batch,
        epochs: a.epochs,
        d_emb: a.emb,
        seed: seed.unwrap_or(DEFAULT_SEED),
        max_triplets_per_anchor: (a.max_triplets > 0).then_some(a.max_triplets),
        reduction: match a.reduction {
            ReductionArg::Sum => Reduction::Sum,
            ReductionArg::Mean => Reduction::Mean,
        },
        conditioning: a.condition.clone(),
    };
    let out = train(&ds, &config)?;
    write(&a.out, &serde_json::to_string(&ModelFile::new(out.params, config))?)?;
    println!("final loss {:.6}", out.loss_trace.last().copied().unwrap_or(f64::NAN));
    Ok(())
}

fn eval_cmd(seed: Option<u64>, a: &EvalArgs) -> Result<(), Error> {
    let model = ModelFile::load(&a.model)?;
    let bytes = std::fs::read(&a.test)?;
    let schema = Schema {
        label: Some(a.label.clone()),
        group_attrs: vec![a.group.clone()],
        ..Schema::default()
    };
    let (mut test, _) = aucal::read_dataset(bytes.as_slice(), &schema)?;
    if a.fair_labels {
        test = test.with_fair_labels()?;
    }
    let scores = score_dataset(&model.params, &test)?;
    let result = evaluate(&scores, &test, &a.group, &a.positive_group)?;
    write(&a.out, &report_json(&Header::new("eval", seed, Some(&bytes)), &result)?)?;
    println!(
        "accuracy {:.4}, f1 {:.4}, disc {:+.4}",
        result.accuracy, result.f1, result.disc_signed
    );
    Ok(())
}

fn compare_cmd(seed: Option<u64>, a: &CompareArgs) -> Result<(), Error> {
    let text = std::fs::read_to_string(&a.configs)?;
    let cfg: CompareConfig = serde_json::from_str(&text)?;
    cfg.data.validate()?;
    let seeds = seed_list(seed.unwrap_or(DEFAULT_SEED), a.seeds);
    let result = compare(&cfg, &seeds)?;
    write(&a.out, &result.to_csv())?;
    if let Some(path) = &a.json {
        let header = Header::new("compare", seed, Some(text.as_bytes()));
        write(path, &report_json(&header, &result)?)?;
    }
    print!("{}", result.to_csv());
    Ok(())
}

fn synth_cmd(seed: Option<u64>, a: &SynthArgs) -> Result<(), Error> {
    let mut cfg = match &a.config {
        Some(path) => SynthConfig::load(path)?,
        None => SynthConfig::happy(a.n, a.beta_f, DEFAULT_SEED),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let ds = generate(&cfg)?;
    save_dataset(&ds, &a.out)?;
    println!("{} records written", ds.len());
    Ok(())
}

fn demo_cmd(seed: Option<u64>, a: &DemoArgs) -> Result<(), Error> {
    let seed = seed.unwrap_or(DEFAULT_SEED);
    let cfg = CompareConfig::happy(a.n, seed);
    let out = run_demo(&cfg, &seed_list(seed, a.runs))?;
    std::fs::create_dir_all(&a.out_dir)?;
    for (name, body) in &out.files {
        write(&a.out_dir.join(name), body)?;
    }
    let mut data = Vec::new();
    write_dataset(&generate(&cfg.data)?, &mut data)?;
    std::fs::write(a.out_dir.join("data.csv"), data)?;
    print!("{}", out.comparison.to_csv());
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Error> {
    let seed = cli.seed;
    match &cli.command {
        Command::Calibrate(a) => calibrate_cmd(seed, a),
        Command::Audit(a) => audit_cmd(seed, a),
        Command::Relabel(a) => relabel_cmd(seed, a),
        Command::Train(a) => train_cmd(seed, a),
        Command::Eval(a) => eval_cmd(seed, a),
        Command::Compare(a) => compare_cmd(seed, a),
        Command::Synth(a) => synth_cmd(seed, a),
        Command::Demo(a) => demo_cmd(seed, a),
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("AUCAL_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("AUCAL_THREADS must be a positive integer, got `{raw}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(1);
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
