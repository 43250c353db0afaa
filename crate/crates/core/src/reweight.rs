//! Structural re-weighting of source-graph messages.
//!
//! A message sent from a class-`j` node into a class-`i` node is scaled by
//! `w_ij = (1 - λ) + λ · B^T_ij / B^S_ij`. Rows index the receiver's class,
//! columns the sender's.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{from_json_str, Error, Result};
use crate::gnn::ModelState;
use crate::graph::LabeledGraph;
use crate::shift::{estimate_block_matrix, BlockEstimate, BlockMatrix};

/// Floor applied when a weight would otherwise be zero.
pub const MIN_WEIGHT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_hash: String,
    pub target_hash: String,
    pub epoch: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightTable {
    pub lambda: f64,
    /// `weights[receiver_class][sender_class]`.
    pub weights: Vec<Vec<f64>>,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl WeightTable {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn get(&self, receiver: usize, sender: usize) -> f64 {
        self.weights[receiver][sender]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&serde_json::to_value(self).expect("serializable")).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let t: Self = from_json_str(text)?;
        let k = t.weights.len();
        if k == 0 || t.weights.iter().any(|r| r.len() != k) {
            return Err(Error::validation("weights must be a non-empty square matrix"));
        }
        if t.weights.iter().flatten().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::validation("weights must be positive and finite"));
        }
        if !(0.0..=1.0).contains(&t.lambda) {
            return Err(Error::validation("lambda must lie in [0, 1]"));
        }
        Ok(t)
    }
}

/// `w_ij = (1 - λ) + λ · bt_ij / bs_ij`.
///
/// Where `bs_ij == 0` there are no source messages of that class pair to
/// reweight, so the weight is 1. A weight that would be zero (`λ = 1`,
/// `bt_ij = 0`) is floored at [`MIN_WEIGHT`]. Both cases add a warning.
pub fn compute_weight_table(
    bs: &BlockMatrix,
    bt_hat: &BlockMatrix,
    lambda: f64,
    epoch: Option<usize>,
) -> Result<WeightTable> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::validation(format!("lambda = {lambda} must lie in [0, 1]")));
    }
    let k = bs.k();
    if bt_hat.k() != k {
        return Err(Error::validation(format!("class counts differ: {k} vs {}", bt_hat.k())));
    }
    let mut warnings = Vec::new();
    let mut weights = vec![vec![1.0; k]; k];
    for (i, row) in weights.iter_mut().enumerate() {
        for (j, w) in row.iter_mut().enumerate() {
            let s = bs.get(i, j);
            if s == 0.0 {
                warnings.push(format!("source B[{i}][{j}] = 0: weight set to 1"));
                continue;
            }
            *w = (1.0 - lambda) + lambda * (bt_hat.get(i, j) / s);
            if *w <= 0.0 {
                warnings.push(format!("weight [{i}][{j}] would be 0: clamped to {MIN_WEIGHT:e}"));
                *w = MIN_WEIGHT;
            }
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(WeightTable {
        lambda,
        weights,
        provenance: Provenance {
            source_hash: bs.content_hash(),
            target_hash: bt_hat.content_hash(),
            epoch,
        },
        warnings,
    })
}

/// Give directed pair `(u, v)` (message `u -> v`) the weight `w[y_v][y_u]`.
pub fn assign_edge_weights(g: &LabeledGraph, labels: &[Option<usize>], table: &WeightTable) -> Result<LabeledGraph> {
    if labels.len() != g.num_nodes() {
        return Err(Error::validation("one label per node is required"));
    }
    if table.k() != g.num_classes() {
        return Err(Error::validation(format!(
            "weight table is {0}x{0} but the graph has {1} classes",
            table.k(),
            g.num_classes()
        )));
    }
    let labels: Vec<usize> = labels
        .iter()
        .enumerate()
        .map(|(v, y)| y.ok_or_else(|| Error::validation(format!("source node {v} is unlabeled"))))
        .collect::<Result<_>>()?;
    if labels.iter().any(|&y| y >= table.k()) {
        return Err(Error::validation("label outside the weight table"));
    }
    g.map_edge_weights(|sender, receiver| table.get(labels[receiver], labels[sender]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PseudoLabelPolicy {
    /// Model predictions for every target node.
    PseudoOnly,
    /// True labels on the validation mask, predictions elsewhere.
    ValTruePlusPseudo,
}

/// When and how strongly to reweight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StruRwSchedule {
    pub start_epoch: usize,
    pub period: usize,
    pub lambda: f64,
    #[serde(default = "default_policy")]
    pub policy: PseudoLabelPolicy,
}

fn default_policy() -> PseudoLabelPolicy {
    PseudoLabelPolicy::ValTruePlusPseudo
}

impl Default for StruRwSchedule {
    fn default() -> Self {
        Self {
            start_epoch: 100,
            period: 5,
            lambda: 0.8,
            policy: default_policy(),
        }
    }
}

impl StruRwSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.period == 0 {
            return Err(Error::validation("StruRW period must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::validation(format!("lambda = {} must lie in [0, 1]", self.lambda)));
        }
        Ok(())
    }

    /// Refresh when `epoch >= m` and `(epoch - m) mod t == 0`.
    pub fn is_refresh_epoch(&self, epoch: usize) -> bool {
        epoch >= self.start_epoch && (epoch - self.start_epoch).is_multiple_of(self.period)
    }
}

/// Labels used to estimate the target block matrix under `policy`.
pub fn target_labels_for_estimate(
    predictions: &[usize],
    target: &LabeledGraph,
    val_mask: &[usize],
    policy: PseudoLabelPolicy,
) -> Result<Vec<usize>> {
    let mut labels = predictions.to_vec();
    if policy == PseudoLabelPolicy::ValTruePlusPseudo {
        for &v in val_mask {
            labels[v] = target.labels()[v]
                .ok_or_else(|| Error::validation(format!("validation node {v} has no label")))?;
        }
    }
    Ok(labels)
}

/// Estimate `B^T` from the model's target predictions. The caller keeps its
/// previous estimate when the result is degenerate.
pub fn refresh_target_estimate(
    model: &ModelState,
    target: &LabeledGraph,
    val_mask: &[usize],
    policy: PseudoLabelPolicy,
) -> Result<BlockEstimate> {
    let target = target.without_edge_weights();
    let predictions = model.predict_graph(&target)?;
    let labels = target_labels_for_estimate(&predictions, &target, val_mask, policy)?;
    estimate_block_matrix(&target, &labels)
}

/// A table of ones, used before the first refresh.
pub fn identity_table(k: usize) -> WeightTable {
    WeightTable {
        lambda: 0.0,
        weights: vec![vec![1.0; k]; k],
        provenance: Provenance {
            source_hash: String::new(),
            target_hash: String::new(),
            epoch: None,
        },
        warnings: Vec::new(),
    }
}

impl From<&WeightTable> for Array2<f64> {
    fn from(t: &WeightTable) -> Self {
        Array2::from_shape_fn((t.k(), t.k()), |(i, j)| t.weights[i][j])
    }
}
