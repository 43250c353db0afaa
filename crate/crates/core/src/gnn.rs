//! Edge-weight-aware message passing encoder, linear classifier and domain
//! discriminator.
//!
//! Layer `l` computes `h' = σ(h W_self + AGG(h) W_nbr + b)` with ReLU on
//! every layer but the last. `AGG` is the weighted mean (or sum) of the
//! senders' rows, using the per-directed-pair weight of the message.
//!
//! Parameter order, which is also the checkpoint blob order:
//! for each encoder layer `l`: `enc.{l}.w_self`, `enc.{l}.w_nbr`, `enc.{l}.bias`;
//! then `cls.weight`, `cls.bias`; then `disc.w1`, `disc.b1`, `disc.w2`, `disc.b2`.

use std::io::{Read, Write};
use std::ops::Range;
use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{sigmoid, Adam, SparseRows, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::LabeledGraph;
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    WeightedMean,
    WeightedSum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub input_dim: usize,
    /// Output width of each layer; the last entry is the representation width.
    pub layer_dims: Vec<usize>,
    pub aggregation: Aggregation,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::validation("encoder input_dim must be positive"));
        }
        if self.layer_dims.is_empty() || self.layer_dims.contains(&0) {
            return Err(Error::validation("encoder needs at least one layer of positive width"));
        }
        Ok(())
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("validated")
    }

    fn layer_shapes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        std::iter::once(self.input_dim)
            .chain(self.layer_dims.iter().copied())
            .zip(self.layer_dims.iter().copied())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub num_classes: usize,
    pub discriminator_hidden: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.num_classes == 0 || self.discriminator_hidden == 0 {
            return Err(Error::validation("num_classes and discriminator_hidden must be positive"));
        }
        Ok(())
    }

    /// `(name, shape)` of every parameter in canonical order.
    pub fn parameter_layout(&self) -> Vec<(String, (usize, usize))> {
        let mut out = Vec::new();
        for (l, (din, dout)) in self.encoder.layer_shapes().enumerate() {
            out.push((format!("enc.{l}.w_self"), (din, dout)));
            out.push((format!("enc.{l}.w_nbr"), (din, dout)));
            out.push((format!("enc.{l}.bias"), (1, dout)));
        }
        let d = self.encoder.output_dim();
        let h = self.discriminator_hidden;
        out.push(("cls.weight".into(), (d, self.num_classes)));
        out.push(("cls.bias".into(), (1, self.num_classes)));
        out.push(("disc.w1".into(), (d, h)));
        out.push(("disc.b1".into(), (1, h)));
        out.push(("disc.w2".into(), (h, 1)));
        out.push(("disc.b2".into(), (1, 1)));
        out
    }

    fn encoder_range(&self) -> Range<usize> {
        0..3 * self.encoder.layer_dims.len()
    }

    fn classifier_range(&self) -> Range<usize> {
        let s = self.encoder_range().end;
        s..s + 2
    }

    fn discriminator_range(&self) -> Range<usize> {
        let s = self.classifier_range().end;
        s..s + 4
    }
}

/// Parameters and optimizer state of encoder, classifier and discriminator.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub config: ModelConfig,
    pub params: Vec<Array2<f64>>,
    pub optimizer: Adam,
}

/// Parameter handles on a tape, in canonical order.
#[derive(Debug, Clone)]
pub struct BoundParams(Vec<Var>);

impl BoundParams {
    pub fn vars(&self) -> &[Var] {
        &self.0
    }
}

/// Build the aggregation operator for a graph: row `v` holds the senders
/// into `v` with coefficient `w_uv / Σ w` (mean) or `w_uv` (sum).
pub fn aggregation_operator(g: &LabeledGraph, aggregation: Aggregation) -> Arc<SparseRows> {
    let (offsets, senders, weights) = g.csr();
    let coefs: Vec<f64> = match aggregation {
        Aggregation::WeightedSum => weights.map_or_else(|| vec![1.0; senders.len()], <[f64]>::to_vec),
        Aggregation::WeightedMean => {
            let mut coefs = Vec::with_capacity(senders.len());
            for v in 0..g.num_nodes() {
                let range = offsets[v]..offsets[v + 1];
                let w = |e: usize| weights.map_or(1.0, |w| w[e]);
                let total: f64 = range.clone().map(w).sum();
                coefs.extend(range.map(|e| w(e) / total));
            }
            coefs
        }
    };
    Arc::new(
        SparseRows::new(g.num_nodes(), offsets.to_vec(), senders.to_vec(), coefs)
            .expect("graph adjacency is a valid sparse operator"),
    )
}

impl ModelState {
    /// Glorot-uniform weights and zero biases; parameter `i` draws from stream `init/{i}`.
    pub fn init(config: ModelConfig, lr: f64, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = config.parameter_layout();
        let params = layout
            .iter()
            .enumerate()
            .map(|(i, (name, (rows, cols)))| {
                if name.ends_with("bias") || name.starts_with("disc.b") {
                    Array2::zeros((*rows, *cols))
                } else {
                    let limit = (6.0 / (*rows + *cols) as f64).sqrt();
                    let mut rng = stream(seed, "init", &[i as u64]);
                    Array2::from_shape_simple_fn((*rows, *cols), || rng.random_range(-limit..limit))
                }
            })
            .collect();
        let shapes: Vec<_> = layout.iter().map(|(_, s)| *s).collect();
        Ok(Self {
            config,
            params,
            optimizer: Adam::new(lr, &shapes),
        })
    }

    pub fn bind(&self, tape: &mut Tape) -> Result<BoundParams> {
        self.params
            .iter()
            .map(|p| tape.leaf(p.clone()))
            .collect::<Result<Vec<_>>>()
            .map(BoundParams)
    }

    /// Record the encoder on `tape`, starting from node attributes `x`.
    pub fn encode_on(&self, tape: &mut Tape, params: &BoundParams, x: Var, op: &Arc<SparseRows>) -> Result<Var> {
        let p = &params.0;
        let layers = self.config.encoder.layer_dims.len();
        let mut h = x;
        for l in 0..layers {
            let agg = tape.aggregate(h, Arc::clone(op))?;
            let own = tape.matmul(h, p[3 * l])?;
            let nbr = tape.matmul(agg, p[3 * l + 1])?;
            let sum = tape.add(own, nbr)?;
            h = tape.add_bias(sum, p[3 * l + 2])?;
            if l + 1 < layers {
                h = tape.relu(h)?;
            }
        }
        Ok(h)
    }

    pub fn classify_on(&self, tape: &mut Tape, params: &BoundParams, h: Var) -> Result<Var> {
        let r = self.config.classifier_range();
        let z = tape.matmul(h, params.0[r.start])?;
        tape.add_bias(z, params.0[r.start + 1])
    }

    /// Domain logit per row of `h`, behind a gradient reversal of strength `alpha`.
    pub fn discriminate_on(&self, tape: &mut Tape, params: &BoundParams, h: Var, alpha: f64) -> Result<Var> {
        if alpha < 0.0 {
            return Err(Error::validation(format!("GRL alpha = {alpha} must be non-negative")));
        }
        let r = self.config.discriminator_range();
        let p = &params.0[r];
        let rev = tape.grad_reversal(h, alpha)?;
        let z = tape.matmul(rev, p[0])?;
        let z = tape.add_bias(z, p[1])?;
        let z = tape.relu(z)?;
        let z = tape.matmul(z, p[2])?;
        tape.add_bias(z, p[3])
    }

    fn check_input(&self, g: &LabeledGraph) -> Result<()> {
        if g.attr_dim() != self.config.encoder.input_dim {
            return Err(Error::shape(
                "encode",
                format!("graph attr_dim {} vs encoder input_dim {}", g.attr_dim(), self.config.encoder.input_dim),
            ));
        }
        Ok(())
    }

    /// Node representations of `g` (no gradient).
    pub fn encode(&self, g: &LabeledGraph) -> Result<Array2<f64>> {
        self.check_input(g)?;
        let op = aggregation_operator(g, self.config.encoder.aggregation);
        self.encode_with(g.attrs(), &op)
    }

    pub fn encode_with(&self, attrs: &Array2<f64>, op: &Arc<SparseRows>) -> Result<Array2<f64>> {
        let mut tape = Tape::new();
        let params = self.bind(&mut tape)?;
        let x = tape.leaf(attrs.clone())?;
        let h = self.encode_on(&mut tape, &params, x, op)?;
        Ok(tape.value(h).clone())
    }

    pub fn classify(&self, h: &Array2<f64>) -> Result<Array2<f64>> {
        let r = self.config.classifier_range();
        if h.ncols() != self.params[r.start].nrows() {
            return Err(Error::shape("classify", "representation width differs from classifier input"));
        }
        Ok(h.dot(&self.params[r.start]) + &self.params[r.start + 1])
    }

    /// Per-row domain probability `q(h)` of being a source sample.
    pub fn discriminate(&self, h: &Array2<f64>) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let params = self.bind(&mut tape)?;
        let x = tape.leaf(h.clone())?;
        let z = self.discriminate_on(&mut tape, &params, x, 0.0)?;
        Ok(tape.value(z).column(0).iter().map(|&v| sigmoid(v)).collect())
    }

    pub fn predict_graph(&self, g: &LabeledGraph) -> Result<Vec<usize>> {
        Ok(predict(&self.classify(&self.encode(g)?)?))
    }

    pub fn write_checkpoint<W: Write>(&self, mut out: W, seed: u64, epoch: usize) -> Result<()> {
        let header = CheckpointHeader {
            format: CHECKPOINT_FORMAT.to_string(),
            config: self.config.clone(),
            seed,
            epoch,
            parameters: self
                .config
                .parameter_layout()
                .into_iter()
                .map(|(name, (rows, cols))| ParamEntry { name, rows, cols })
                .collect(),
        };
        let header = serde_json::to_vec(&header).expect("header is serializable");
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_all(&(header.len() as u64).to_le_bytes())?;
        out.write_all(&header)?;
        for p in &self.params {
            for x in p.iter() {
                out.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Load parameters from a checkpoint. Optimizer state starts fresh at `lr`.
    pub fn read_checkpoint<R: Read>(mut input: R, lr: f64) -> Result<(Self, CheckpointHeader)> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::validation("not a model checkpoint (bad magic)"));
        }
        let mut len = [0u8; 8];
        input.read_exact(&mut len)?;
        let mut header = vec![0u8; u64::from_le_bytes(len) as usize];
        input.read_exact(&mut header)?;
        let header: CheckpointHeader = crate::error::from_json_str(
            std::str::from_utf8(&header).map_err(|e| Error::validation(e.to_string()))?,
        )?;
        let mut state = Self::init(header.config.clone(), lr, 0)?;
        for (p, entry) in state.params.iter_mut().zip(&header.parameters) {
            if p.dim() != (entry.rows, entry.cols) {
                return Err(Error::validation(format!("checkpoint shape mismatch for {}", entry.name)));
            }
            for x in p.iter_mut() {
                let mut b = [0u8; 8];
                input.read_exact(&mut b)?;
                *x = f64::from_le_bytes(b);
            }
        }
        if state.params.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("checkpoint parameters".into()));
        }
        Ok((state, header))
    }
}

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"STRURWCK";
const CHECKPOINT_FORMAT: &str = "strurw-checkpoint-v1";

/// JSON header stored after the magic and a little-endian u64 length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub config: ModelConfig,
    pub seed: u64,
    pub epoch: usize,
    pub parameters: Vec<ParamEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

/// Row argmax; ties go to the lowest index.
pub fn predict(logits: &Array2<f64>) -> Vec<usize> {
    logits
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (c, &z) in row.iter().enumerate() {
                if z > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Fraction of `nodes` whose prediction matches `labels`. Empty sets score 0.
pub fn accuracy(pred: &[usize], labels: &[Option<usize>], nodes: impl IntoIterator<Item = usize>) -> f64 {
    let (mut hit, mut total) = (0usize, 0usize);
    for v in nodes {
        total += 1;
        if labels[v] == Some(pred[v]) {
            hit += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        hit as f64 / total as f64
    }
}

/// GRL strength at `epoch`: `min(alpha_max, scale * epoch / total_epochs)`.
pub fn grl_alpha(scale: f64, alpha_max: f64, epoch: usize, total_epochs: usize) -> f64 {
    (scale * epoch as f64 / total_epochs as f64).min(alpha_max)
}
