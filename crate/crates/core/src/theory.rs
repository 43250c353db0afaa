//! Empirical checks of the missing-value construction and of attribute
//! alignment.
//!
//! In the missing-value family a one-layer GNN sees, for each M.V. node, the
//! multiset of its neighbors' symbols, summarized as counts `(c0, c1, c2)`.
//! Source class 0 and target class 1 induce the same multiset law, so any
//! shared encoder pays `ε_S + ε_T >= 1/2`; a target-specific encoder that
//! thresholds the neighbor counts drives the target error to zero.

use ndarray::{Array2, Axis};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::csbm::{mv_symbol, sample_csbm, sample_example41, AttrModel, CsbmParams, Domain, MissingValueParams, MV_ATTR_DIM, MV_SYMBOL};
use crate::error::{Error, Result};
use crate::gnn::{aggregation_operator, Aggregation, EncoderConfig, ModelConfig, ModelState};
use crate::graph::LabeledGraph;
use crate::rng::{derive_seed, stream};
use crate::shift::BlockMatrix;

/// Neighbor symbol counts of one node: value 0, value 1, M.V.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct MultisetFeature {
    pub c0: u64,
    pub c1: u64,
    pub c2: u64,
}

impl MultisetFeature {
    pub fn total(&self) -> u64 {
        self.c0 + self.c1 + self.c2
    }

    fn coords(&self) -> [u64; 3] {
        [self.c0, self.c1, self.c2]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeMultiset {
    pub node: usize,
    pub label: usize,
    pub feature: MultisetFeature,
}

fn symbols(g: &LabeledGraph) -> Result<Vec<usize>> {
    if g.attr_dim() != MV_ATTR_DIM || g.num_classes() != 2 {
        return Err(Error::validation(format!(
            "expected two classes and {MV_ATTR_DIM}-dim one-hot attributes, got {} classes and dim {}",
            g.num_classes(),
            g.attr_dim()
        )));
    }
    g.attrs()
        .rows()
        .into_iter()
        .enumerate()
        .map(|(v, row)| {
            let hot: Vec<usize> = (0..MV_ATTR_DIM).filter(|&s| row[s] == 1.0).collect();
            let zeros = row.iter().filter(|&&x| x == 0.0).count();
            match hot.as_slice() {
                [s] if zeros == MV_ATTR_DIM - 1 => Ok(*s),
                _ => Err(Error::validation(format!("attribute of node {v} is not one-hot over {{0, 1, M.V.}}"))),
            }
        })
        .collect()
}

/// Neighbor-symbol counts of every labeled M.V. node of `g`.
pub fn collect_multisets(g: &LabeledGraph) -> Result<Vec<NodeMultiset>> {
    let sym = symbols(g)?;
    let mut out = Vec::new();
    for v in (0..g.num_nodes()).filter(|&v| sym[v] == MV_SYMBOL) {
        let Some(label) = g.labels()[v] else { continue };
        let mut counts = [0u64; 3];
        for (u, _) in g.neighbor_iter(v) {
            counts[sym[u]] += 1;
        }
        out.push(NodeMultiset {
            node: v,
            label,
            feature: MultisetFeature {
                c0: counts[0],
                c1: counts[1],
                c2: counts[2],
            },
        });
    }
    Ok(out)
}

/// Draw each M.V. node's multiset directly from its exact marginal law
/// without materializing edges: given all attributes, the number of class-`c`
/// nodes with symbol `s` adjacent to `v` is `Bin(#{u != v: y_u = c, x_u = s}, B[y_v][c])`.
///
/// Attributes match [`sample_example41`] with the same seed. Counts of
/// different nodes are independent here, whereas in a graph they share
/// edges; per-node marginals are identical.
pub fn sample_multisets_direct(params: MissingValueParams, domain: Domain, seed: u64) -> Result<Vec<NodeMultiset>> {
    params.validate()?;
    let half = params.n / 2;
    let block = params.block(domain);
    let sym: Vec<usize> = (0..params.n)
        .map(|v| mv_symbol(&mut stream(seed, "attr", &[v as u64]), v / half, params.r))
        .collect();
    let mut pool = [[0u64; 3]; 2];
    for (v, &s) in sym.iter().enumerate() {
        pool[v / half][s] += 1;
    }
    let mut out = Vec::new();
    for v in (0..params.n).filter(|&v| sym[v] == MV_SYMBOL) {
        let y = v / half;
        let mut rng = stream(seed, "multiset", &[v as u64]);
        let mut counts = [0u64; 3];
        for (c, row) in pool.iter().enumerate() {
            for (s, &m) in row.iter().enumerate() {
                let available = m - u64::from(c == y && s == MV_SYMBOL);
                let dist = Binomial::new(available, block.get(y, c)).map_err(|e| Error::validation(e.to_string()))?;
                counts[s] += dist.sample(&mut rng);
            }
        }
        out.push(NodeMultiset {
            node: v,
            label: y,
            feature: MultisetFeature {
                c0: counts[0],
                c1: counts[1],
                c2: counts[2],
            },
        });
    }
    Ok(out)
}

/// Target-side threshold rule. The score is `(c0 + c1) / n`, whose mean is
/// `pr + δr/2` for class 0 and `pr` for class 1 in the target domain; the
/// threshold `pr + δr/4` sits between them. For `δ < 0` the inequality flips.
/// A score exactly at the threshold is assigned class 1.
pub fn hoeffding_classifier(f: &MultisetFeature, n: usize, p: f64, delta: f64, r: f64) -> usize {
    let theta = hoeffding_threshold(p, delta, r);
    let score = (f.c0 + f.c1) as f64 / n as f64;
    let class0 = if delta > 0.0 { score > theta } else { score < theta };
    if class0 { 0 } else { 1 }
}

pub fn hoeffding_threshold(p: f64, delta: f64, r: f64) -> f64 {
    p * r + delta * r / 4.0
}

/// `2 exp(-n δ² r² / 32)`.
pub fn hoeffding_bound(n: usize, delta: f64, r: f64) -> f64 {
    2.0 * (-(n as f64) * delta * delta * r * r / 32.0).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HoeffdingCheckConfig {
    pub p: f64,
    pub delta: f64,
    pub r: f64,
    pub n_large: usize,
    pub n_small: usize,
    pub seeds: Vec<u64>,
    /// Slack added to the bound.
    pub tolerance: f64,
}

impl Default for HoeffdingCheckConfig {
    fn default() -> Self {
        Self {
            p: 0.2,
            delta: 0.2,
            r: 0.5,
            n_large: 20000,
            n_small: 2000,
            seeds: (0..20).collect(),
            tolerance: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoeffdingReport {
    pub threshold: f64,
    pub bound: f64,
    pub errors_large: Vec<f64>,
    pub errors_small: Vec<f64>,
    pub median_large: f64,
    pub median_small: f64,
    pub max_error_large: f64,
    pub seeds: Vec<u64>,
    pub passed: bool,
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 }
}

/// Target error of [`hoeffding_classifier`] on one target draw.
pub fn hoeffding_target_error(params: MissingValueParams, seed: u64) -> Result<f64> {
    let nodes = sample_multisets_direct(params, Domain::Target, seed)?;
    if nodes.is_empty() {
        return Err(Error::InsufficientSamples("no M.V. nodes in the target draw".into()));
    }
    let MissingValueParams { n, p, delta, r } = params;
    let wrong = nodes
        .iter()
        .filter(|m| hoeffding_classifier(&m.feature, n, p, delta, r) != m.label)
        .count();
    Ok(wrong as f64 / nodes.len() as f64)
}

/// Every draw at `n_large` stays within the bound plus tolerance, and the
/// median error does not grow from `n_small` to `n_large`.
pub fn hoeffding_check(config: &HoeffdingCheckConfig) -> Result<HoeffdingReport> {
    if config.seeds.is_empty() {
        return Err(Error::validation("at least one seed is required"));
    }
    let at = |n: usize| -> Result<Vec<f64>> {
        let params = MissingValueParams {
            n,
            p: config.p,
            delta: config.delta,
            r: config.r,
        };
        params.validate()?;
        config
            .seeds
            .par_iter()
            .map(|&s| hoeffding_target_error(params, derive_seed(s, "hoeffding", &[n as u64])))
            .collect()
    };
    let errors_large = at(config.n_large)?;
    let errors_small = at(config.n_small)?;
    let bound = hoeffding_bound(config.n_large, config.delta, config.r);
    let max_error_large = errors_large.iter().copied().fold(0.0, f64::max);
    let (median_large, median_small) = (median(&errors_large), median(&errors_small));
    Ok(HoeffdingReport {
        threshold: hoeffding_threshold(config.p, config.delta, config.r),
        bound,
        passed: max_error_large <= bound + config.tolerance && median_large <= median_small,
        errors_large,
        errors_small,
        median_large,
        median_small,
        max_error_large,
        seeds: config.seeds.clone(),
    })
}

/// Total variation between two samples of multisets after binning each
/// coordinate at the pooled 1/3 and 2/3 quantiles (27 cells).
pub fn binned_tv(a: &[MultisetFeature], b: &[MultisetFeature]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientSamples("empty sample".into()));
    }
    let cuts: Vec<[u64; 2]> = (0..3)
        .map(|d| {
            let mut v: Vec<u64> = a.iter().chain(b).map(|f| f.coords()[d]).collect();
            v.sort_unstable();
            [v[v.len() / 3], v[2 * v.len() / 3]]
        })
        .collect();
    let cell = |f: &MultisetFeature| -> usize {
        f.coords()
            .iter()
            .zip(&cuts)
            .fold(0, |acc, (&x, c)| acc * 3 + usize::from(x > c[0]) + usize::from(x > c[1]))
    };
    let hist = |xs: &[MultisetFeature]| {
        let mut h = [0.0; 27];
        for f in xs {
            h[cell(f)] += 1.0 / xs.len() as f64;
        }
        h
    };
    let (ha, hb) = (hist(a), hist(b));
    Ok(ha.iter().zip(&hb).map(|(x, y)| (x - y).abs()).sum::<f64>() / 2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdentityCheckConfig {
    pub params: MissingValueParams,
    pub samples_per_side: usize,
    /// Same-distribution comparisons used to calibrate the threshold.
    pub null_replicates: usize,
    pub seed: u64,
}

impl Default for IdentityCheckConfig {
    fn default() -> Self {
        Self {
            params: MissingValueParams {
                n: 1000,
                p: 0.2,
                delta: 0.1,
                r: 0.5,
            },
            samples_per_side: 10_000,
            null_replicates: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    /// Source class 0 vs target class 1.
    pub tv: f64,
    /// Source class 0 vs target class 0, which differ by the shift.
    pub contrast_tv: f64,
    pub null_tvs: Vec<f64>,
    /// Largest same-distribution TV.
    pub threshold: f64,
    /// `(1 - tv) / 2`: floor on `ε_S + ε_T` for a shared encoder, up to binning.
    pub error_sum_lower_bound: f64,
    pub samples_per_side: usize,
    pub passed: bool,
}

/// Collect `count` multisets of class `class` from graphs of `domain`,
/// sampling graphs `stream_tag/0`, `stream_tag/1`, ... in turn.
fn gather(
    params: MissingValueParams,
    domain: Domain,
    class: usize,
    count: usize,
    seed: u64,
    stream_tag: u64,
) -> Result<Vec<MultisetFeature>> {
    let per_graph = (params.n / 2) as f64 * (1.0 - params.r);
    if per_graph < 1.0 {
        return Err(Error::InsufficientSamples(format!(
            "r = {} leaves fewer than one M.V. node per class per graph",
            params.r
        )));
    }
    let mut out = Vec::with_capacity(count);
    let mut i = 0u64;
    while out.len() < count {
        let g = sample_example41(params, domain, derive_seed(seed, "identity", &[stream_tag, i]))?;
        out.extend(collect_multisets(&g)?.into_iter().filter(|m| m.label == class).map(|m| m.feature));
        i += 1;
    }
    out.truncate(count);
    Ok(out)
}

/// Compare source class-0 and target class-1 multisets drawn from sampled
/// graphs against a threshold calibrated on independent same-law pairs.
pub fn distribution_identity_check(config: &IdentityCheckConfig) -> Result<IdentityReport> {
    config.params.validate()?;
    let n = config.samples_per_side;
    if n < 1000 {
        return Err(Error::InsufficientSamples(format!("{n} samples per side; at least 1000 are required")));
    }
    if config.null_replicates == 0 {
        return Err(Error::validation("at least one null replicate is required"));
    }
    let (params, seed) = (config.params, config.seed);
    let s0 = gather(params, Domain::Source, 0, n, seed, 0)?;
    let t1 = gather(params, Domain::Target, 1, n, seed, 1)?;
    let t0 = gather(params, Domain::Target, 0, n, seed, 1)?;
    let null_tvs: Vec<f64> = (0..config.null_replicates as u64)
        .into_par_iter()
        .map(|rep| {
            let a = gather(params, Domain::Source, 0, n, seed, 2 + 2 * rep)?;
            let b = gather(params, Domain::Source, 0, n, seed, 3 + 2 * rep)?;
            binned_tv(&a, &b)
        })
        .collect::<Result<_>>()?;
    let threshold = null_tvs.iter().copied().fold(0.0, f64::max);
    let tv = binned_tv(&s0, &t1)?;
    let contrast_tv = binned_tv(&s0, &t0)?;
    Ok(IdentityReport {
        tv,
        contrast_tv,
        threshold,
        null_tvs,
        error_sum_lower_bound: (1.0 - tv) / 2.0,
        samples_per_side: n,
        passed: tv < threshold && contrast_tv > threshold,
    })
}

/// Energy-distance statistic and permutation p-value
/// `(1 + #{T_perm >= T_obs}) / (B + 1)` for samples `x` and `y` (rows).
pub fn energy_permutation_test<R: Rng + ?Sized>(
    x: &Array2<f64>,
    y: &Array2<f64>,
    permutations: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    let (m, k) = (x.nrows(), y.nrows());
    if m == 0 || k == 0 {
        return Err(Error::InsufficientSamples("energy test needs non-empty samples".into()));
    }
    if x.ncols() != y.ncols() {
        return Err(Error::shape("energy_permutation_test", "samples differ in dimension"));
    }
    let pooled = ndarray::concatenate(Axis(0), &[x.view(), y.view()]).expect("same width");
    let total = m + k;
    let mut dist = vec![0.0; total * total];
    for i in 0..total {
        for j in (i + 1)..total {
            let d = (&pooled.row(i) - &pooled.row(j)).mapv(|v| v * v).sum().sqrt();
            dist[i * total + j] = d;
            dist[j * total + i] = d;
        }
    }
    let grand: f64 = dist.iter().sum();
    let statistic = |in_x: &[bool]| -> f64 {
        let (mut sxx, mut sxy) = (0.0, 0.0);
        for i in 0..total {
            let row = &dist[i * total..(i + 1) * total];
            let s: f64 = row.iter().zip(in_x).filter(|(_, &b)| b).map(|(d, _)| d).sum();
            if in_x[i] { sxx += s } else { sxy += s }
        }
        let syy = grand - sxx - 2.0 * sxy;
        let (mf, kf) = (m as f64, k as f64);
        2.0 * sxy / (mf * kf) - sxx / (mf * mf) - syy / (kf * kf)
    };
    let mut labels: Vec<bool> = (0..total).map(|i| i < m).collect();
    let observed = statistic(&labels);
    let mut exceed = 0usize;
    for _ in 0..permutations {
        labels.shuffle(rng);
        if statistic(&labels) >= observed {
            exceed += 1;
        }
    }
    Ok((observed, (1 + exceed) as f64 / (permutations + 1) as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlignmentCheckConfig {
    pub encoder: EncoderConfig,
    pub n_per_class: usize,
    pub intra: f64,
    pub inter: f64,
    /// Nodes drawn from each graph for the two-sample test.
    pub subsample: usize,
    pub permutations: usize,
    pub level: f64,
}

impl Default for AlignmentCheckConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig {
                input_dim: 2,
                layer_dims: vec![20, 20],
                aggregation: Aggregation::WeightedMean,
            },
            n_per_class: 100,
            intra: 0.05,
            inter: 0.01,
            subsample: 150,
            permutations: 199,
            level: 0.01,
        }
    }
}

const ALIGN_MEANS: [[f64; 2]; 3] = [[-1.0, 0.0], [1.0, 0.0], [3.0, 2.0]];
/// Target attributes are `A x + b` applied to draws of the source law.
const SHIFT_A: [[f64; 2]; 2] = [[1.5, 0.5], [-0.3, 1.2]];
const SHIFT_B: [f64; 2] = [2.0, -1.0];

fn affine(x: &Array2<f64>, a: [[f64; 2]; 2], b: [f64; 2]) -> Array2<f64> {
    Array2::from_shape_fn(x.raw_dim(), |(i, d)| a[d][0] * x[[i, 0]] + a[d][1] * x[[i, 1]] + b[d])
}

/// Inverse of the attribute shift: `A⁻¹ (x - b)`.
fn alignment_map(x: &Array2<f64>) -> Array2<f64> {
    let [[a, b], [c, d]] = SHIFT_A;
    let det = a * d - b * c;
    let inv = [[d / det, -b / det], [-c / det, a / det]];
    let back = [
        -(inv[0][0] * SHIFT_B[0] + inv[0][1] * SHIFT_B[1]),
        -(inv[1][0] * SHIFT_B[0] + inv[1][1] * SHIFT_B[1]),
    ];
    affine(x, inv, back)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub seed: u64,
    pub aligned_statistic: f64,
    pub aligned_p: f64,
    pub unaligned_statistic: f64,
    pub unaligned_p: f64,
}

/// Source and target share the structure law; the target's attributes are an
/// affine image of the source law. A fixed random encoder is run on the
/// source and on the target after (aligned) or without (unaligned) the
/// inverse map, and the last-layer node representations are compared.
pub fn conditional_alignment_check(config: &AlignmentCheckConfig, seed: u64) -> Result<AlignmentReport> {
    if config.encoder.input_dim != 2 {
        return Err(Error::validation("the alignment construction uses 2-dim attributes"));
    }
    if config.subsample == 0 || config.subsample > 3 * config.n_per_class {
        return Err(Error::validation("subsample must lie in 1..=3 * n_per_class"));
    }
    let csbm = |tag: &str| CsbmParams {
        n_per_class: vec![config.n_per_class; 3],
        block: BlockMatrix::planted(3, config.intra, config.inter).expect("valid probabilities"),
        attr_model: AttrModel::Gaussian {
            means: ALIGN_MEANS.iter().map(|m| m.to_vec()).collect(),
        },
        seed: derive_seed(seed, "alignment", &[u64::from(tag == "target")]),
    };
    let source = sample_csbm(&csbm("source"))?;
    let target_raw = sample_csbm(&csbm("target"))?;
    let target = target_raw.with_attrs(affine(target_raw.attrs(), SHIFT_A, SHIFT_B))?;
    let aligned = alignment_map(target.attrs());

    let model = ModelState::init(
        ModelConfig {
            encoder: config.encoder.clone(),
            num_classes: 3,
            discriminator_hidden: 1,
        },
        1e-3,
        derive_seed(seed, "alignment/encoder", &[]),
    )?;
    let op_s = aggregation_operator(&source, config.encoder.aggregation);
    let op_t = aggregation_operator(&target, config.encoder.aggregation);
    let h_s = model.encode_with(source.attrs(), &op_s)?;
    let h_aligned = model.encode_with(&aligned, &op_t)?;
    let h_raw = model.encode_with(target.attrs(), &op_t)?;

    let mut rng = stream(seed, "alignment/test", &[]);
    let pick = |h: &Array2<f64>, rng: &mut crate::rng::StreamRng| -> Array2<f64> {
        let idx: Vec<usize> = (0..h.nrows()).collect::<Vec<_>>().choose_multiple(rng, config.subsample).copied().collect();
        h.select(Axis(0), &idx)
    };
    let xs = pick(&h_s, &mut rng);
    let xa = pick(&h_aligned, &mut rng);
    let xr = pick(&h_raw, &mut rng);
    let (aligned_statistic, aligned_p) = energy_permutation_test(&xs, &xa, config.permutations, &mut rng)?;
    let (unaligned_statistic, unaligned_p) = energy_permutation_test(&xs, &xr, config.permutations, &mut rng)?;
    Ok(AlignmentReport {
        seed,
        aligned_statistic,
        aligned_p,
        unaligned_statistic,
        unaligned_p,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentStudy {
    pub runs: Vec<AlignmentReport>,
    pub level: f64,
    pub aligned_not_rejected: usize,
    pub unaligned_rejected: usize,
    pub required: usize,
    pub passed: bool,
}

/// Run [`conditional_alignment_check`] over `seeds`; passes when at least
/// `required` aligned runs keep `p > level` and at least `required`
/// unaligned runs reach `p <= level`.
pub fn alignment_study(config: &AlignmentCheckConfig, seeds: &[u64], required: usize) -> Result<AlignmentStudy> {
    let runs: Vec<AlignmentReport> = seeds
        .par_iter()
        .map(|&s| conditional_alignment_check(config, s))
        .collect::<Result<_>>()?;
    let aligned_not_rejected = runs.iter().filter(|r| r.aligned_p > config.level).count();
    let unaligned_rejected = runs.iter().filter(|r| r.unaligned_p <= config.level).count();
    Ok(AlignmentStudy {
        passed: aligned_not_rejected >= required && unaligned_rejected >= required,
        runs,
        level: config.level,
        aligned_not_rejected,
        unaligned_rejected,
        required,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csbm::MV_SYMBOL;
    use rand_distr::StandardNormal;

    fn gaussian_sample<R: Rng + ?Sized>(rows: usize, cols: usize, shift: f64, rng: &mut R) -> Array2<f64> {
        Array2::from_shape_simple_fn((rows, cols), || shift + rng.sample::<f64, _>(StandardNormal))
    }

    fn one_hot(symbols: &[usize]) -> Array2<f64> {
        let mut a = Array2::zeros((symbols.len(), 3));
        for (v, &s) in symbols.iter().enumerate() {
            a[[v, s]] = 1.0;
        }
        a
    }

    #[test]
    fn multiset_of_small_graph() {
        // Node 0 is M.V. with neighbors of symbols 0, 0 and M.V.; node 4 is isolated M.V.
        let attrs = one_hot(&[MV_SYMBOL, 0, 0, MV_SYMBOL, MV_SYMBOL]);
        let labels = vec![Some(0), Some(0), Some(0), Some(1), Some(1)];
        let g = LabeledGraph::new(5, &[(0, 1), (0, 2), (0, 3)], attrs, labels, 2).unwrap();
        let ms = collect_multisets(&g).unwrap();
        let f = |v: usize| ms.iter().find(|m| m.node == v).unwrap().feature;
        assert_eq!(f(0), MultisetFeature { c0: 2, c1: 0, c2: 1 });
        assert_eq!(f(4), MultisetFeature::default());
        assert_eq!(ms.len(), 3);
    }

    #[test]
    fn rejects_other_alphabets() {
        let g = LabeledGraph::new(2, &[], Array2::zeros((2, 3)), vec![Some(0), Some(1)], 2).unwrap();
        assert!(collect_multisets(&g).is_err());
        let g = LabeledGraph::new(2, &[], Array2::ones((2, 2)), vec![Some(0), Some(1)], 2).unwrap();
        assert!(collect_multisets(&g).is_err());
    }

    #[test]
    fn threshold_arithmetic() {
        assert!((hoeffding_threshold(0.1, 0.1, 0.5) - 0.0625).abs() < 1e-15);
        assert_eq!(hoeffding_classifier(&MultisetFeature::default(), 100, 0.1, 0.1, 0.5), 1);
        let b = hoeffding_bound(20000, 0.2, 0.5);
        assert!((b - 2.0 * (-6.25f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn tie_goes_to_class_one() {
        // (c0 + c1) / n == θ = 0.0625 exactly with n = 160.
        let f = MultisetFeature { c0: 6, c1: 4, c2: 0 };
        assert_eq!(hoeffding_classifier(&f, 160, 0.1, 0.1, 0.5), 1);
        let above = MultisetFeature { c0: 7, c1: 4, c2: 0 };
        assert_eq!(hoeffding_classifier(&above, 160, 0.1, 0.1, 0.5), 0);
        assert_eq!(hoeffding_classifier(&above, 160, 0.1, -0.1, 0.5), 1);
    }

    #[test]
    fn identity_requires_samples() {
        let cfg = IdentityCheckConfig {
            samples_per_side: 999,
            ..Default::default()
        };
        assert!(matches!(distribution_identity_check(&cfg), Err(Error::InsufficientSamples(_))));
        assert!(binned_tv(&[], &[MultisetFeature::default()]).is_err());
    }

    #[test]
    fn tv_of_identical_samples_is_zero() {
        let xs: Vec<MultisetFeature> = (0..50).map(|i| MultisetFeature { c0: i, c1: i % 7, c2: 3 }).collect();
        assert_eq!(binned_tv(&xs, &xs).unwrap(), 0.0);
    }

    #[test]
    fn energy_test_on_identical_samples_never_zero() {
        let mut rng = stream(1, "t", &[]);
        let x = gaussian_sample(30, 2, 0.0, &mut rng);
        let (stat, p) = energy_permutation_test(&x, &x, 99, &mut rng).unwrap();
        assert!(stat.abs() < 1e-12);
        assert!(p > 0.0);
        let y = gaussian_sample(30, 2, 3.0, &mut rng);
        let (_, p) = energy_permutation_test(&x, &y, 99, &mut rng).unwrap();
        assert_eq!(p, 0.01);
    }

    #[test]
    fn alignment_map_inverts_shift() {
        let mut rng = stream(2, "t", &[]);
        let x = gaussian_sample(10, 2, 0.5, &mut rng);
        let back = alignment_map(&affine(&x, SHIFT_A, SHIFT_B));
        assert!((back - &x).iter().all(|d| d.abs() < 1e-12));
    }
}
