//! Full-batch training loops for the ERM, adversarial and mixup pipelines,
//! each with optional structural re-weighting of the source graph.
//!
//! Per epoch: refresh the target block-matrix estimate and the source edge
//! weights when the schedule says so, run the source graph (weighted) and,
//! for the adversarial pipeline, the target graph (never weighted), take
//! one Adam step on the pipeline loss, then evaluate.

use std::sync::Arc;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::Beta;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Gradients, SparseRows, Targets, Tape, Var};
use crate::error::{Error, Result};
use crate::gnn::{accuracy, aggregation_operator, grl_alpha, predict, Aggregation, BoundParams, EncoderConfig, ModelConfig, ModelState};
use crate::graph::DomainPair;
use crate::reweight::{assign_edge_weights, compute_weight_table, refresh_target_estimate, target_labels_for_estimate, StruRwSchedule, WeightTable};
use crate::rng::stream;
use crate::shift::{css_metric, estimate_block_matrix, BlockMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    Erm,
    Adv,
    Mixup,
}

impl Pipeline {
    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Erm => "erm",
            Pipeline::Adv => "adv",
            Pipeline::Mixup => "mixup",
        }
    }

    /// Display name of the pipeline with or without re-weighting.
    pub fn method_name(self, reweighted: bool) -> &'static str {
        match (self, reweighted) {
            (Pipeline::Erm, false) => "ERM",
            (Pipeline::Erm, true) => "StruRW-ERM",
            (Pipeline::Adv, false) => "DANN",
            (Pipeline::Adv, true) => "StruRW-Adv",
            (Pipeline::Mixup, false) => "Mixup",
            (Pipeline::Mixup, true) => "StruRW-Mix",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrlConfig {
    pub scale: f64,
    pub alpha_max: f64,
}

impl Default for GrlConfig {
    fn default() -> Self {
        Self {
            scale: 1.0,
            alpha_max: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    pub hidden_dims: Vec<usize>,
    pub aggregation: Aggregation,
    pub discriminator_hidden: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            hidden_dims: vec![20, 20],
            aggregation: Aggregation::WeightedMean,
            discriminator_hidden: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub pipeline: Pipeline,
    pub strurw: Option<StruRwSchedule>,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub grl: GrlConfig,
    pub mixup_alpha: f64,
    pub eval_every: usize,
    pub arch: ArchConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            pipeline: Pipeline::Erm,
            strurw: None,
            epochs: 200,
            lr: 0.004,
            seed: 0,
            grl: GrlConfig::default(),
            mixup_alpha: 1.0,
            eval_every: 1,
            arch: ArchConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Defaults for `pipeline`: 300 epochs for adversarial training, 200 otherwise.
    pub fn for_pipeline(pipeline: Pipeline) -> Self {
        Self {
            pipeline,
            epochs: if pipeline == Pipeline::Adv { 300 } else { 200 },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::validation("epochs must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::validation("lr must be positive"));
        }
        if self.eval_every == 0 {
            return Err(Error::validation("eval_every must be at least 1"));
        }
        if let Some(s) = &self.strurw {
            s.validate()?;
            if s.start_epoch >= self.epochs {
                return Err(Error::validation(format!(
                    "StruRW start epoch {} must be below the epoch count {}",
                    s.start_epoch, self.epochs
                )));
            }
        }
        if self.pipeline == Pipeline::Mixup && !(self.mixup_alpha > 0.0) {
            return Err(Error::validation("mixup_alpha must be positive"));
        }
        if !(self.grl.scale >= 0.0 && self.grl.alpha_max >= 0.0) {
            return Err(Error::validation("GRL scale and alpha_max must be non-negative"));
        }
        Ok(())
    }

    fn model_config(&self, input_dim: usize, num_classes: usize) -> ModelConfig {
        ModelConfig {
            encoder: EncoderConfig {
                input_dim,
                layer_dims: self.arch.hidden_dims.clone(),
                aggregation: self.arch.aggregation,
            },
            num_classes,
            discriminator_hidden: self.arch.discriminator_hidden,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub src_acc: f64,
    pub tgt_val_acc: f64,
    pub tgt_test_acc: f64,
    pub loss_erm: f64,
    pub loss_adv: Option<f64>,
    /// CSS between the source block matrix and the current target estimate.
    pub css_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub epochs: Vec<EpochMetrics>,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub best_test_acc: f64,
    /// Weight table in force at the end of training, if re-weighting ran.
    pub final_weights: Option<WeightTable>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    pub model: ModelState,
}

/// Mean cross-entropy of `logits` against class labels.
pub fn erm_loss(tape: &mut Tape, logits: Var, labels: &[usize]) -> Result<Var> {
    if labels.is_empty() {
        return Err(Error::validation("empty source set"));
    }
    tape.cross_entropy(logits, &Targets::Classes(labels.to_vec()), None)
}

/// Mean binary cross-entropy of the discriminator, source = 1 and target = 0,
/// with the encoder gradient reversed by `alpha`.
pub fn adv_loss(
    tape: &mut Tape,
    model: &ModelState,
    params: &BoundParams,
    h_source: Var,
    h_target: Var,
    alpha: f64,
) -> Result<Var> {
    let (ns, nt) = (tape.value(h_source).nrows(), tape.value(h_target).nrows());
    if ns == 0 || nt == 0 {
        return Err(Error::validation("adversarial loss needs both domains non-empty"));
    }
    let both = tape.concat_rows(h_source, h_target)?;
    let logits = model.discriminate_on(tape, params, both, alpha)?;
    let targets: Vec<f64> = std::iter::repeat_n(1.0, ns).chain(std::iter::repeat_n(0.0, nt)).collect();
    tape.bce_with_logits(logits, &targets)
}

/// A mixup draw: permutation and coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct MixupDraw {
    pub permutation: Arc<Vec<usize>>,
    pub coefficient: f64,
}

impl MixupDraw {
    pub fn sample<R: Rng + ?Sized>(n: usize, alpha: f64, rng: &mut R) -> Result<Self> {
        if n < 2 {
            return Err(Error::validation("mixup needs at least two source nodes"));
        }
        if !(alpha > 0.0) {
            return Err(Error::validation(format!("mixup alpha = {alpha} must be positive")));
        }
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        let beta = Beta::new(alpha, alpha).map_err(|e| Error::validation(e.to_string()))?;
        Ok(Self {
            permutation: Arc::new(perm),
            coefficient: rng.sample(beta),
        })
    }
}

/// Mix representations and one-hot labels: `λ h + (1 - λ) h[π]`.
pub fn mixup_step(
    tape: &mut Tape,
    h: Var,
    labels: &[usize],
    num_classes: usize,
    draw: &MixupDraw,
) -> Result<(Var, Array2<f64>)> {
    let lam = draw.coefficient;
    let n = labels.len();
    if draw.permutation.len() != n || tape.value(h).nrows() != n {
        return Err(Error::shape("mixup", "permutation, labels and representations differ in length"));
    }
    let shuffled = tape.gather_rows(h, Arc::clone(&draw.permutation))?;
    let a = tape.scalar_mul(h, lam)?;
    let b = tape.scalar_mul(shuffled, 1.0 - lam)?;
    let mixed = tape.add(a, b)?;
    let mut soft = Array2::zeros((n, num_classes));
    for i in 0..n {
        soft[[i, labels[i]]] += lam;
        soft[[i, labels[draw.permutation[i]]]] += 1.0 - lam;
    }
    Ok((mixed, soft))
}

struct Evaluation {
    src_acc: f64,
    val_acc: f64,
    test_acc: f64,
    css_hat: f64,
}

/// Run training on `pair` under `config` and select the epoch with the best
/// target validation accuracy (earliest on ties).
pub fn run_algorithm1(pair: &DomainPair, config: &TrainConfig) -> Result<RunOutput> {
    config.validate()?;
    let source = pair.source.without_edge_weights();
    let target = pair.target.without_edge_weights();
    let k = source.num_classes();
    let source_labels = source.known_labels().expect("domain pair sources are fully labeled");
    let model_config = config.model_config(source.attr_dim(), k);
    let mut model = ModelState::init(model_config, config.lr, config.seed)?;
    let agg = config.arch.aggregation;

    let bs = estimate_block_matrix(&source, &source_labels)?.matrix;
    let target_op = aggregation_operator(&target, agg);
    let mut source_op: Arc<SparseRows> = aggregation_operator(&source, agg);
    let mut bt_hat: Option<BlockMatrix> = None;
    let mut table: Option<WeightTable> = None;
    let mut mixup_rng = stream(config.seed, "mixup", &[]);

    let mut epochs = Vec::new();
    for epoch in 0..config.epochs {
        if let Some(schedule) = config.strurw.filter(|s| s.is_refresh_epoch(epoch)) {
            let est = refresh_target_estimate(&model, &target, &pair.target_val_mask, schedule.policy).map_err(|e| diverged(e, epoch))?;
            if est.is_degenerate() {
                log::warn!(
                    "epoch {epoch}: classes {:?} missing from target labels, keeping previous estimate",
                    est.empty_classes
                );
            } else {
                bt_hat = Some(est.matrix);
            }
            if let Some(bt) = &bt_hat {
                let t = compute_weight_table(&bs, bt, schedule.lambda, Some(epoch))?;
                let weighted = assign_edge_weights(&source, source.labels(), &t)?;
                source_op = aggregation_operator(&weighted, agg);
                table = Some(t);
            }
        }

        let (loss_erm, loss_adv) = train_step(&mut model, config, epoch, &source, &source_labels, &source_op, &target, &target_op, &mut mixup_rng)
            .map_err(|e| diverged(e, epoch))?;

        if epoch % config.eval_every == 0 || epoch + 1 == config.epochs {
            let ev = evaluate(&model, pair, &source, &source_labels, &source_op, &target, &target_op, &bs).map_err(|e| diverged(e, epoch))?;
            epochs.push(EpochMetrics {
                epoch,
                src_acc: ev.src_acc,
                tgt_val_acc: ev.val_acc,
                tgt_test_acc: ev.test_acc,
                loss_erm,
                loss_adv,
                css_hat: ev.css_hat,
            });
        }
    }

    let best = epochs
        .iter()
        .fold(None::<&EpochMetrics>, |best, m| match best {
            Some(b) if b.tgt_val_acc >= m.tgt_val_acc => Some(b),
            _ => Some(m),
        })
        .expect("at least one evaluated epoch");
    let metrics = RunMetrics {
        best_epoch: best.epoch,
        best_val_acc: best.tgt_val_acc,
        best_test_acc: best.tgt_test_acc,
        epochs,
        final_weights: table,
    };
    Ok(RunOutput { metrics, model })
}

#[allow(clippy::too_many_arguments)]
fn train_step(
    model: &mut ModelState,
    config: &TrainConfig,
    epoch: usize,
    source: &crate::graph::LabeledGraph,
    source_labels: &[usize],
    source_op: &Arc<SparseRows>,
    target: &crate::graph::LabeledGraph,
    target_op: &Arc<SparseRows>,
    mixup_rng: &mut crate::rng::StreamRng,
) -> Result<(f64, Option<f64>)> {
    let mut tape = Tape::new();
    let params = model.bind(&mut tape)?;
    let xs = tape.leaf(source.attrs().clone())?;
    let hs = model.encode_on(&mut tape, &params, xs, source_op)?;
    let k = model.config.num_classes;

    let (loss, loss_erm, loss_adv) = match config.pipeline {
        Pipeline::Erm => {
            let logits = model.classify_on(&mut tape, &params, hs)?;
            let l = erm_loss(&mut tape, logits, source_labels)?;
            (l, tape.scalar(l), None)
        }
        Pipeline::Adv => {
            let logits = model.classify_on(&mut tape, &params, hs)?;
            let l_erm = erm_loss(&mut tape, logits, source_labels)?;
            let xt = tape.leaf(target.attrs().clone())?;
            let ht = model.encode_on(&mut tape, &params, xt, target_op)?;
            let alpha = grl_alpha(config.grl.scale, config.grl.alpha_max, epoch, config.epochs);
            let l_adv = adv_loss(&mut tape, model, &params, hs, ht, alpha)?;
            let total = tape.add(l_erm, l_adv)?;
            (total, tape.scalar(l_erm), Some(tape.scalar(l_adv)))
        }
        Pipeline::Mixup => {
            let draw = MixupDraw::sample(source_labels.len(), config.mixup_alpha, mixup_rng)?;
            let (mixed, soft) = mixup_step(&mut tape, hs, source_labels, k, &draw)?;
            let logits = model.classify_on(&mut tape, &params, mixed)?;
            let l = tape.cross_entropy(logits, &Targets::Soft(soft), None)?;
            (l, tape.scalar(l), None)
        }
    };

    let mut grads: Gradients = tape.backward(loss)?;
    let grads: Vec<Option<Array2<f64>>> = params.vars().iter().map(|&v| grads.take(v)).collect();
    model.optimizer.step(&mut model.params, &grads)?;
    Ok((loss_erm, loss_adv))
}

#[allow(clippy::too_many_arguments)]
fn diverged(e: Error, epoch: usize) -> Error {
    match e {
        Error::NonFinite(detail) => Error::Diverged { epoch, detail },
        other => other,
    }
}

fn evaluate(
    model: &ModelState,
    pair: &DomainPair,
    source: &crate::graph::LabeledGraph,
    source_labels: &[usize],
    source_op: &Arc<SparseRows>,
    target: &crate::graph::LabeledGraph,
    target_op: &Arc<SparseRows>,
    bs: &BlockMatrix,
) -> Result<Evaluation> {
    let src_pred = predict(&model.classify(&model.encode_with(source.attrs(), source_op)?)?);
    let hits = src_pred.iter().zip(source_labels).filter(|(p, y)| p == y).count();
    let tgt_pred = predict(&model.classify(&model.encode_with(target.attrs(), target_op)?)?);
    let val_acc = accuracy(&tgt_pred, target.labels(), pair.target_val_mask.iter().copied());
    let test_acc = accuracy(&tgt_pred, target.labels(), pair.target_test_mask.iter().copied());
    let policy = crate::reweight::PseudoLabelPolicy::ValTruePlusPseudo;
    let labels = target_labels_for_estimate(&tgt_pred, target, &pair.target_val_mask, policy)?;
    let est = estimate_block_matrix(target, &labels)?;
    let css_hat = if est.is_degenerate() {
        f64::INFINITY
    } else {
        css_metric(bs, &est.matrix)?.value
    };
    Ok(Evaluation {
        src_acc: hits as f64 / source_labels.len() as f64,
        val_acc,
        test_acc,
        css_hat,
    })
}
