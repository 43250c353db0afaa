//! Command-line front end: data generation, shift diagnostics, training,
//! sweeps and the theory checks.
//!
//! Exit codes: 0 on success, 1 for invalid input or configuration, 2 for
//! runtime failures (divergence, I/O).

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::csbm::{sample_domain_pair, sample_example41, stratified_split, Domain, MissingValueParams, ShiftSpec};
use crate::error::{from_json_str, Error, Result};
use crate::graph::{DomainPair, LabeledGraph, SplitDocument};
use crate::reweight::{compute_weight_table, StruRwSchedule, WeightTable};
use crate::shift::{css_metric, estimate_block_matrix, BlockMatrix};
use crate::theory::{alignment_study, distribution_identity_check, hoeffding_check, AlignmentCheckConfig, HoeffdingCheckConfig, IdentityCheckConfig};
use crate::train::{run_algorithm1, Pipeline, RunMetrics, RunOutput, TrainConfig};

/// Print a line to stdout, ignoring a closed pipe (`strurw ... | head`).
macro_rules! emit {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}
#[derive(Debug, Parser)]
#[command(name = "strurw", version, about = "Structural re-weighting for graph domain adaptation")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads for sweeps and theory checks. Defaults to STRURW_THREADS, then all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a source/target pair and write source.json, target.json and split.json.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Estimate the block matrix of a fully labeled graph file.
    EstimateB {
        graph: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the CSS between a source and a target block matrix.
    Css { source: PathBuf, target: PathBuf },
    /// Compute the edge weight table from a source and a target block matrix.
    Weights {
        source: PathBuf,
        target: PathBuf,
        #[arg(long, default_value_t = 0.8)]
        lambda: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one configuration per seed and write metrics.csv, summary.json and checkpoints.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Run the missing-value and alignment checks and write one JSON report per check.
    VerifyTheory {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the method x source-shift grid and write metrics.csv and summary.json.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
}

fn default_val_fraction() -> f64 {
    0.2
}

/// Where the domain pair comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    /// Three Gaussian classes, 1000 nodes each, intra 0.02, target inter 0.002.
    Benchmark {
        source_inter: f64,
        #[serde(default = "default_val_fraction")]
        val_fraction: f64,
    },
    Csbm {
        spec: ShiftSpec,
        #[serde(default = "default_val_fraction")]
        val_fraction: f64,
    },
    MissingValue {
        params: MissingValueParams,
        #[serde(default = "default_val_fraction")]
        val_fraction: f64,
    },
    /// Graph documents and a split document; relative paths resolve against the config file.
    Files { source: PathBuf, target: PathBuf, split: PathBuf },
}

impl DataConfig {
    pub fn load(&self, seed: u64, base: &Path) -> Result<DomainPair> {
        match self {
            DataConfig::Benchmark { source_inter, val_fraction } => {
                sample_domain_pair(&ShiftSpec::three_class_benchmark(*source_inter), *val_fraction, seed)
            }
            DataConfig::Csbm { spec, val_fraction } => sample_domain_pair(spec, *val_fraction, seed),
            DataConfig::MissingValue { params, val_fraction } => {
                if !(*val_fraction > 0.0 && *val_fraction < 1.0) {
                    return Err(Error::validation("val_fraction must lie in (0, 1)"));
                }
                let source = sample_example41(*params, Domain::Source, crate::rng::derive_seed(seed, "domain/source", &[]))?;
                let target = sample_example41(*params, Domain::Target, crate::rng::derive_seed(seed, "domain/target", &[]))?;
                let (val, test) = stratified_split(&target, *val_fraction, seed)?;
                DomainPair::new(source, target, val, test)
            }
            DataConfig::Files { source, target, split } => {
                let read = |p: &Path| fs::read_to_string(base.join(p));
                let source = LabeledGraph::from_json(&read(source)?)?;
                let target = LabeledGraph::from_json(&read(target)?)?;
                let split: SplitDocument = from_json_str(&read(split)?)?;
                DomainPair::new(source, target, split.val, split.test)
            }
        }
    }
}

/// One entry of the sweep's method axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub pipeline: Pipeline,
    pub strurw: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
}

impl MethodSpec {
    pub fn name(&self) -> &'static str {
        self.pipeline.method_name(self.strurw)
    }

    /// `base` specialized to this method. StruRW methods use `base.strurw`,
    /// or the default schedule if the base has none.
    pub fn apply(&self, base: &TrainConfig) -> TrainConfig {
        TrainConfig {
            pipeline: self.pipeline,
            strurw: if self.strurw { Some(base.strurw.unwrap_or_default()) } else { None },
            epochs: self.epochs.unwrap_or(base.epochs),
            lr: self.lr.unwrap_or(base.lr),
            ..base.clone()
        }
    }
}

fn default_methods() -> Vec<MethodSpec> {
    [Pipeline::Erm, Pipeline::Adv, Pipeline::Mixup]
        .into_iter()
        .flat_map(|pipeline| {
            [false, true].map(|strurw| MethodSpec {
                pipeline,
                strurw,
                epochs: (pipeline == Pipeline::Adv).then_some(300),
                lr: None,
            })
        })
        .collect()
}

fn default_grid() -> Vec<f64> {
    vec![0.001, 0.006, 0.010, 0.012, 0.014, 0.016]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    /// Source inter-class probabilities; used with `benchmark` data only.
    #[serde(default = "default_grid")]
    pub source_inter: Vec<f64>,
    #[serde(default = "default_methods")]
    pub methods: Vec<MethodSpec>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            source_inter: default_grid(),
            methods: default_methods(),
        }
    }
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub sweep: SweepGrid,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = from_json_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::validation("seeds must not be empty"));
        }
        self.train.validate()
    }

    /// Checks every method of the sweep grid against the base training config.
    pub fn validate_sweep(&self) -> Result<()> {
        for m in &self.sweep.methods {
            m.apply(&self.train).validate()?;
        }
        if self.sweep.methods.is_empty() {
            return Err(Error::validation("sweep.methods must not be empty"));
        }
        if self.sweep.source_inter.iter().any(|q| !(0.0..=1.0).contains(q)) {
            return Err(Error::validation("sweep.source_inter entries must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// One fully specified training run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSpec {
    pub method: &'static str,
    pub data: DataConfig,
    pub train: TrainConfig,
    pub seed: u64,
}

impl RunSpec {
    /// First 16 hex digits of the SHA-256 of the canonical run description.
    pub fn run_id(&self) -> String {
        let canonical = serde_json::to_vec(&serde_json::to_value(self).expect("serializable")).expect("serializable");
        let digest = Sha256::digest(&canonical);
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    fn source_inter(&self) -> Option<f64> {
        match self.data {
            DataConfig::Benchmark { source_inter, .. } => Some(source_inter),
            _ => None,
        }
    }
}

#[derive(Debug, Serialize)]
struct CsvRow<'a> {
    run_id: &'a str,
    pipeline: &'a str,
    strurw: bool,
    lambda: Option<f64>,
    m: Option<usize>,
    t: Option<usize>,
    seed: u64,
    epoch: usize,
    src_acc: f64,
    tgt_val_acc: f64,
    tgt_test_acc: f64,
    loss_erm: f64,
    loss_adv: Option<f64>,
    css_hat: f64,
}

/// Write one CSV row per evaluated epoch of every run.
pub fn write_metrics_csv<W: std::io::Write>(out: W, runs: &[(RunSpec, RunMetrics)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (spec, metrics) in runs {
        let id = spec.run_id();
        let sched: Option<StruRwSchedule> = spec.train.strurw;
        for e in &metrics.epochs {
            w.serialize(CsvRow {
                run_id: &id,
                pipeline: spec.train.pipeline.name(),
                strurw: sched.is_some(),
                lambda: sched.map(|s| s.lambda),
                m: sched.map(|s| s.start_epoch),
                t: sched.map(|s| s.period),
                seed: spec.seed,
                epoch: e.epoch,
                src_acc: e.src_acc,
                tgt_val_acc: e.tgt_val_acc,
                tgt_test_acc: e.tgt_test_acc,
                loss_erm: e.loss_erm,
                loss_adv: e.loss_adv,
                css_hat: e.css_hat,
            })
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub method: String,
    pub source_inter: Option<f64>,
    pub seed: u64,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub best_test_acc: f64,
    pub final_weights: Option<WeightTable>,
}

/// Mean and unbiased standard deviation of best-validation test accuracy
/// over seeds for one (method, source shift) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub method: String,
    pub source_inter: Option<f64>,
    pub seeds: Vec<u64>,
    pub mean_test_acc: f64,
    pub std_test_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub runs: Vec<RunSummary>,
    pub cells: Vec<CellSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<String>,
}

/// `(mean, std)` with the `n - 1` denominator; `std` is `None` for one value.
pub fn mean_std(xs: &[f64]) -> (f64, Option<f64>) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = (xs.len() > 1).then(|| (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (mean, std)
}

pub fn summarize(runs: &[(RunSpec, RunMetrics)], failures: Vec<String>) -> Summary {
    let run_summaries: Vec<RunSummary> = runs
        .iter()
        .map(|(spec, m)| RunSummary {
            run_id: spec.run_id(),
            method: spec.method.to_string(),
            source_inter: spec.source_inter(),
            seed: spec.seed,
            best_epoch: m.best_epoch,
            best_val_acc: m.best_val_acc,
            best_test_acc: m.best_test_acc,
            final_weights: m.final_weights.clone(),
        })
        .collect();
    let mut cells: Vec<CellSummary> = Vec::new();
    for r in &run_summaries {
        let same = |c: &CellSummary| c.method == r.method && c.source_inter == r.source_inter;
        if cells.iter().any(same) {
            continue;
        }
        let members: Vec<&RunSummary> = run_summaries
            .iter()
            .filter(|o| o.method == r.method && o.source_inter == r.source_inter)
            .collect();
        let accs: Vec<f64> = members.iter().map(|o| o.best_test_acc).collect();
        let (mean_test_acc, std_test_acc) = mean_std(&accs);
        cells.push(CellSummary {
            method: r.method.clone(),
            source_inter: r.source_inter,
            seeds: members.iter().map(|o| o.seed).collect(),
            mean_test_acc,
            std_test_acc,
        });
    }
    Summary {
        runs: run_summaries,
        cells,
        failures,
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::validation(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn to_pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(&serde_json::to_value(value).expect("serializable")).expect("serializable")
}

fn out_dir(flag: Option<PathBuf>, config: Option<&PathBuf>) -> Result<PathBuf> {
    let dir = flag
        .or_else(|| config.cloned())
        .ok_or_else(|| Error::validation("an output directory is required (--out or \"out\" in the config)"))?;
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn load_experiment(path: &Path) -> Result<(ExperimentConfig, PathBuf)> {
    let config = ExperimentConfig::from_json(&read(path)?)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((config, base))
}

fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let threads = match threads {
        Some(t) => t,
        None => match std::env::var("STRURW_THREADS") {
            Ok(v) => v
                .parse()
                .map_err(|_| Error::validation(format!("STRURW_THREADS = {v:?} is not a thread count")))?,
            Err(_) => 0,
        },
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::validation(e.to_string()))
}

/// Train every spec in parallel; results come back in input order.
fn execute(specs: Vec<RunSpec>, base: &Path, pool: &rayon::ThreadPool) -> (Vec<(RunSpec, RunOutput)>, Vec<(RunSpec, Error)>) {
    let results: Vec<(RunSpec, Result<RunOutput>)> = pool.install(|| {
        specs
            .into_par_iter()
            .map(|spec| {
                let out = spec.data.load(spec.seed, base).and_then(|pair| run_algorithm1(&pair, &spec.train));
                (spec, out)
            })
            .collect()
    });
    let mut done = Vec::new();
    let mut failed = Vec::new();
    for (spec, r) in results {
        match r {
            Ok(o) => done.push((spec, o)),
            Err(e) => failed.push((spec, e)),
        }
    }
    (done, failed)
}

fn emit_results(dir: &Path, done: &[(RunSpec, RunOutput)], failed: Vec<(RunSpec, Error)>) -> Result<()> {
    let metrics: Vec<(RunSpec, RunMetrics)> = done.iter().map(|(s, o)| (s.clone(), o.metrics.clone())).collect();
    write_metrics_csv(fs::File::create(dir.join("metrics.csv"))?, &metrics)?;
    let failures: Vec<String> = failed
        .iter()
        .map(|(s, e)| format!("{} {} seed {}: {e}", s.run_id(), s.method, s.seed))
        .collect();
    write(&dir.join("summary.json"), &to_pretty(&summarize(&metrics, failures)))?;
    if let Some((_, e)) = failed.into_iter().next() {
        return Err(e);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TheoryConfig {
    pub hoeffding: HoeffdingCheckConfig,
    pub identity: IdentityCheckConfig,
    pub alignment: AlignmentCheckConfig,
    pub alignment_seeds: Vec<u64>,
    /// Runs out of `alignment_seeds` that must come out right.
    pub alignment_required: usize,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        Self {
            hoeffding: HoeffdingCheckConfig::default(),
            identity: IdentityCheckConfig::default(),
            alignment: AlignmentCheckConfig::default(),
            alignment_seeds: (0..20).collect(),
            alignment_required: 18,
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { config, out, seed } => {
            let (exp, base) = load_experiment(&config)?;
            let dir = out_dir(out, exp.out.as_ref())?;
            let seed = seed.unwrap_or(exp.seeds[0]);
            let pair = exp.data.load(seed, &base)?;
            write(&dir.join("source.json"), &pair.source.to_json())?;
            write(&dir.join("target.json"), &pair.target.to_json())?;
            let split = SplitDocument {
                val: pair.target_val_mask,
                test: pair.target_test_mask,
            };
            write(&dir.join("split.json"), &to_pretty(&split))?;
        }
        Command::EstimateB { graph, out } => {
            let g = LabeledGraph::from_json(&read(&graph)?)?;
            let labels = g
                .known_labels()
                .ok_or_else(|| Error::validation("estimate-b needs every node labeled"))?;
            let est = estimate_block_matrix(&g, &labels)?;
            if est.is_degenerate() {
                log::warn!("classes {:?} have no nodes", est.empty_classes);
            }
            match out {
                Some(p) => write(&p, &est.matrix.to_json())?,
                None => emit!("{}", est.matrix.to_json()),
            }
        }
        Command::Css { source, target } => {
            let bs = BlockMatrix::from_json(&read(&source)?)?;
            let bt = BlockMatrix::from_json(&read(&target)?)?;
            let report = css_metric(&bs, &bt)?;
            if report.unbounded {
                log::warn!("an entry is zero in exactly one matrix; CSS is unbounded");
            }
            emit!("{:?}", report.value);
        }
        Command::Weights { source, target, lambda, out } => {
            let bs = BlockMatrix::from_json(&read(&source)?)?;
            let bt = BlockMatrix::from_json(&read(&target)?)?;
            let table = compute_weight_table(&bs, &bt, lambda, None)?;
            match out {
                Some(p) => write(&p, &table.to_json())?,
                None => emit!("{}", table.to_json()),
            }
        }
        Command::Train { config, out, seed, seeds } => {
            let (exp, base) = load_experiment(&config)?;
            let dir = out_dir(out, exp.out.as_ref())?;
            let seeds = seed.map(|s| vec![s]).or(seeds).unwrap_or_else(|| exp.seeds.clone());
            let specs: Vec<RunSpec> = seeds
                .iter()
                .map(|&s| RunSpec {
                    method: exp.train.pipeline.method_name(exp.train.strurw.is_some()),
                    data: exp.data.clone(),
                    train: TrainConfig { seed: s, ..exp.train.clone() },
                    seed: s,
                })
                .collect();
            let (done, failed) = execute(specs, &base, &thread_pool(cli.threads)?);
            for (spec, o) in &done {
                let f = fs::File::create(dir.join(format!("model-{}.ckpt", spec.run_id())))?;
                let last = o.metrics.epochs.last().map_or(0, |e| e.epoch);
                o.model.write_checkpoint(std::io::BufWriter::new(f), spec.seed, last)?;
            }
            emit_results(&dir, &done, failed)?;
        }
        Command::Sweep { config, out, seeds } => {
            let (exp, base) = load_experiment(&config)?;
            exp.validate_sweep()?;
            let dir = out_dir(out, exp.out.as_ref())?;
            let seeds = seeds.unwrap_or_else(|| exp.seeds.clone());
            let datasets: Vec<DataConfig> = match &exp.data {
                DataConfig::Benchmark { val_fraction, .. } => exp
                    .sweep
                    .source_inter
                    .iter()
                    .map(|&q| DataConfig::Benchmark {
                        source_inter: q,
                        val_fraction: *val_fraction,
                    })
                    .collect(),
                other => vec![other.clone()],
            };
            let mut specs = Vec::new();
            for data in &datasets {
                for m in &exp.sweep.methods {
                    for &s in &seeds {
                        specs.push(RunSpec {
                            method: m.name(),
                            data: data.clone(),
                            train: TrainConfig { seed: s, ..m.apply(&exp.train) },
                            seed: s,
                        });
                    }
                }
            }
            log::info!("sweep: {} runs", specs.len());
            let (done, failed) = execute(specs, &base, &thread_pool(cli.threads)?);
            emit_results(&dir, &done, failed)?;
        }
        Command::VerifyTheory { config, out } => {
            let tc: TheoryConfig = match &config {
                Some(p) => from_json_str(&read(p)?)?,
                None => TheoryConfig::default(),
            };
            let dir = out_dir(out, None)?;
            let pool = thread_pool(cli.threads)?;
            pool.install(|| -> Result<()> {
                let h = hoeffding_check(&tc.hoeffding)?;
                write(&dir.join("hoeffding.json"), &to_pretty(&h))?;
                emit!("hoeffding: {} (max error {:.4}, bound {:.4})", verdict(h.passed), h.max_error_large, h.bound);
                let i = distribution_identity_check(&tc.identity)?;
                write(&dir.join("identity.json"), &to_pretty(&i))?;
                emit!("identity: {} (tv {:.4}, threshold {:.4}, contrast {:.4})", verdict(i.passed), i.tv, i.threshold, i.contrast_tv);
                let a = alignment_study(&tc.alignment, &tc.alignment_seeds, tc.alignment_required)?;
                write(&dir.join("alignment.json"), &to_pretty(&a))?;
                emit!(
                    "alignment: {} (aligned kept {}/{}, unaligned rejected {}/{})",
                    verdict(a.passed),
                    a.aligned_not_rejected,
                    a.runs.len(),
                    a.unaligned_rejected,
                    a.runs.len()
                );
                Ok(())
            })?;
        }
    }
    Ok(())
}

fn verdict(passed: bool) -> &'static str {
    if passed { "pass" } else { "FAIL" }
}

/// Parse `argv` and run the selected subcommand, returning the exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            let kind = if e.is_user_error() { "input" } else { "runtime" };
            eprintln!("error[{kind}]: {e}");
            if e.is_user_error() { 1 } else { 2 }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_uses_unbiased_estimator() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert_eq!(s, Some(1.0));
        assert_eq!(mean_std(&[4.0]).1, None);
    }

    #[test]
    fn config_parsing_reports_field() {
        let err = ExperimentConfig::from_json(r#"{"data": {"kind": "benchmark", "source_inter": 0.01}, "train": {"lr": "x"}}"#).unwrap_err();
        assert!(err.to_string().contains("train.lr"), "{err}");
        let err = ExperimentConfig::from_json(r#"{"data": {"kind": "benchmark", "source_inter": 0.01}, "bogus": 1}"#).unwrap_err();
        assert!(err.is_user_error());
        let ok = ExperimentConfig::from_json(r#"{"data": {"kind": "benchmark", "source_inter": 0.01}}"#).unwrap();
        assert_eq!(ok.sweep.methods.len(), 6);
        assert_eq!(ok.seeds, vec![0]);
    }

    #[test]
    fn run_ids_differ_by_seed_and_method() {
        let data = DataConfig::Benchmark {
            source_inter: 0.016,
            val_fraction: 0.2,
        };
        let base = TrainConfig::default();
        let spec = |m: &MethodSpec, seed| RunSpec {
            method: m.name(),
            data: data.clone(),
            train: TrainConfig { seed, ..m.apply(&base) },
            seed,
        };
        let methods = default_methods();
        let mut ids: Vec<String> = methods.iter().flat_map(|m| [spec(m, 0).run_id(), spec(m, 1).run_id()]).collect();
        assert_eq!(spec(&methods[0], 0).run_id(), spec(&methods[0], 0).run_id());
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 12);
    }

    #[test]
    fn method_specialization() {
        let base = TrainConfig::default();
        let adv = MethodSpec {
            pipeline: Pipeline::Adv,
            strurw: true,
            epochs: Some(300),
            lr: None,
        };
        let c = adv.apply(&base);
        assert_eq!(c.epochs, 300);
        assert_eq!(c.strurw, Some(StruRwSchedule::default()));
        assert_eq!(adv.name(), "StruRW-Adv");
    }
}
