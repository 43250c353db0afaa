//! Contextual stochastic block model sampling.
//!
//! Nodes are laid out class by class: class 0 occupies indices
//! `0..n_0`, class 1 the next `n_1`, and so on. Edges of class pair
//! `(i, j)`, `i <= j`, come from stream `edges/{i}/{j}`; node `v`'s
//! attribute comes from stream `attr/{v}`.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DomainPair, LabeledGraph};
use crate::rng::{derive_seed, stream};
use crate::sampling::bernoulli_rows;
use crate::shift::BlockMatrix;

/// Attribute dimension of the missing-value family: one-hot over {0, 1, M.V.}.
pub const MV_ATTR_DIM: usize = 3;
/// Index of the missing-value symbol in the one-hot encoding.
pub const MV_SYMBOL: usize = 2;

/// Class-conditional attribute law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttrModel {
    /// `N(means[c], I)` for class `c`.
    Gaussian { means: Vec<Vec<f64>> },
    /// Two classes; a class-`c` node shows symbol `c` with probability `r`,
    /// otherwise the missing-value symbol. One-hot encoded in three dimensions.
    DiscreteMv { r: f64 },
}

impl AttrModel {
    pub fn dim(&self) -> usize {
        match self {
            AttrModel::Gaussian { means } => means.first().map_or(0, Vec::len),
            AttrModel::DiscreteMv { .. } => MV_ATTR_DIM,
        }
    }

    fn same_family(&self, other: &AttrModel) -> bool {
        std::mem::discriminant(self) == std::mem::discriminant(other) && self.dim() == other.dim()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsbmParams {
    pub n_per_class: Vec<usize>,
    pub block: BlockMatrix,
    pub attr_model: AttrModel,
    #[serde(default)]
    pub seed: u64,
}

impl CsbmParams {
    pub fn num_classes(&self) -> usize {
        self.n_per_class.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.n_per_class.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.num_classes();
        if k == 0 {
            return Err(Error::validation("n_per_class must not be empty"));
        }
        if self.block.k() != k {
            return Err(Error::validation(format!(
                "block matrix is {0}x{0} but there are {k} classes",
                self.block.k()
            )));
        }
        if !self.block.is_symmetric() {
            return Err(Error::validation("block matrix must be symmetric"));
        }
        if self.block.entries().iter().any(|&b| b > 1.0) {
            return Err(Error::validation("block matrix entries must lie in [0, 1]"));
        }
        match &self.attr_model {
            AttrModel::Gaussian { means } => {
                if means.len() != k {
                    return Err(Error::validation(format!(
                        "{} gaussian means for {k} classes",
                        means.len()
                    )));
                }
                let d = means[0].len();
                if d == 0 || means.iter().any(|m| m.len() != d) {
                    return Err(Error::validation("gaussian means must share a positive dimension"));
                }
                if means.iter().flatten().any(|x| !x.is_finite()) {
                    return Err(Error::validation("gaussian means must be finite"));
                }
            }
            AttrModel::DiscreteMv { r } => {
                if k != 2 {
                    return Err(Error::validation("the missing-value attribute model needs k = 2"));
                }
                if !(*r > 0.0 && *r <= 1.0) {
                    return Err(Error::validation(format!("r = {r} must lie in (0, 1]")));
                }
            }
        }
        Ok(())
    }
}

/// Symbol of a class-`c` node in the missing-value family: `c` with
/// probability `r`, otherwise [`MV_SYMBOL`].
pub(crate) fn mv_symbol<R: Rng + ?Sized>(rng: &mut R, c: usize, r: f64) -> usize {
    if rng.random::<f64>() < r {
        c
    } else {
        MV_SYMBOL
    }
}

/// Sample one CSBM graph. Deterministic in `params.seed`.
pub fn sample_csbm(params: &CsbmParams) -> Result<LabeledGraph> {
    params.validate()?;
    let k = params.num_classes();
    let n = params.num_nodes();
    let starts: Vec<usize> = params
        .n_per_class
        .iter()
        .scan(0, |acc, &c| {
            let s = *acc;
            *acc += c;
            Some(s)
        })
        .collect();
    let labels: Vec<usize> = (0..k)
        .flat_map(|c| std::iter::repeat_n(c, params.n_per_class[c]))
        .collect();

    let d = params.attr_model.dim();
    let mut attrs = Array2::<f64>::zeros((n, d));
    for (v, mut row) in attrs.rows_mut().into_iter().enumerate() {
        let mut rng = stream(params.seed, "attr", &[v as u64]);
        let c = labels[v];
        match &params.attr_model {
            AttrModel::Gaussian { means } => {
                for (x, &mu) in row.iter_mut().zip(&means[c]) {
                    let z: f64 = rng.sample(StandardNormal);
                    *x = mu + z;
                }
            }
            AttrModel::DiscreteMv { r } => row[mv_symbol(&mut rng, c, *r)] = 1.0,
        }
    }

    let mut edges = Vec::new();
    for i in 0..k {
        for j in i..k {
            let p = params.block.get(i, j);
            let mut rng = stream(params.seed, "edges", &[i as u64, j as u64]);
            let (si, sj) = (starts[i], starts[j]);
            let (ni, nj) = (params.n_per_class[i], params.n_per_class[j]);
            if i == j {
                bernoulli_rows(ni, |a| (ni - a - 1) as u64, p, &mut rng, |a, off| {
                    edges.push((si + a, si + a + 1 + off as usize));
                });
            } else {
                bernoulli_rows(ni, |_| nj as u64, p, &mut rng, |a, off| {
                    edges.push((si + a, sj + off as usize));
                });
            }
        }
    }

    LabeledGraph::new(n, &edges, attrs, labels.into_iter().map(Some).collect(), k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

/// Parameters of the two-class missing-value family with a class-conditional
/// structure shift and no label or attribute shift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissingValueParams {
    pub n: usize,
    pub p: f64,
    pub delta: f64,
    pub r: f64,
}

impl MissingValueParams {
    pub fn validate(&self) -> Result<()> {
        let Self { n, p, delta, r } = *self;
        if n == 0 || n % 2 != 0 {
            return Err(Error::validation(format!("n = {n} must be positive and even")));
        }
        if !(p > 0.0 && p < 0.5) {
            return Err(Error::validation(format!("p = {p} must lie in (0, 1/2)")));
        }
        if !(delta.abs() <= p) || delta == 0.0 {
            return Err(Error::validation(format!(
                "delta = {delta} must lie in [-p, p] and be non-zero"
            )));
        }
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::validation(format!("r = {r} must lie in (0, 1]")));
        }
        Ok(())
    }

    /// Source `[[p, p], [p, p - δ]]`, target `[[p + δ, p], [p, p]]`.
    pub fn block(&self, domain: Domain) -> BlockMatrix {
        let (p, d) = (self.p, self.delta);
        let rows = match domain {
            Domain::Source => [[p, p], [p, p - d]],
            Domain::Target => [[p + d, p], [p, p]],
        };
        BlockMatrix::from_rows(&rows.map(|r| r.to_vec())).expect("validated parameters")
    }

    pub fn csbm(&self, domain: Domain, seed: u64) -> CsbmParams {
        CsbmParams {
            n_per_class: vec![self.n / 2; 2],
            block: self.block(domain),
            attr_model: AttrModel::DiscreteMv { r: self.r },
            seed,
        }
    }
}

pub fn sample_example41(params: MissingValueParams, domain: Domain, seed: u64) -> Result<LabeledGraph> {
    params.validate()?;
    sample_csbm(&params.csbm(domain, seed))
}

/// Source and target generative parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftSpec {
    pub source: CsbmParams,
    pub target: CsbmParams,
    /// Assert that there is no attribute shift: both sides must use the same attribute law.
    #[serde(default)]
    pub shared_attributes: bool,
}

impl ShiftSpec {
    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.target.validate()?;
        if self.source.num_classes() != self.target.num_classes() {
            return Err(Error::validation("source and target class counts differ"));
        }
        if !self.source.attr_model.same_family(&self.target.attr_model) {
            return Err(Error::validation(
                "source and target attribute models differ in family or dimension",
            ));
        }
        if self.shared_attributes && self.source.attr_model != self.target.attr_model {
            return Err(Error::validation(
                "shared_attributes is set but the attribute laws differ",
            ));
        }
        Ok(())
    }

    /// The synthetic three-class benchmark: 1000 nodes per class, intra-class
    /// probability 0.02, target inter-class probability 0.002, Gaussian
    /// attributes with means (-1, 0), (1, 0), (3, 2).
    pub fn three_class_benchmark(source_inter: f64) -> Self {
        let attr_model = AttrModel::Gaussian {
            means: vec![vec![-1.0, 0.0], vec![1.0, 0.0], vec![3.0, 2.0]],
        };
        let side = |inter: f64| CsbmParams {
            n_per_class: vec![1000; 3],
            block: BlockMatrix::planted(3, 0.02, inter).expect("valid planted matrix"),
            attr_model: attr_model.clone(),
            seed: 0,
        };
        Self {
            source: side(source_inter),
            target: side(0.002),
            shared_attributes: true,
        }
    }
}

/// Sample source and target independently and split the target into a
/// stratified validation mask and a test mask. The pair `seed` replaces the
/// per-side seeds, so one number reproduces the whole pair.
pub fn sample_domain_pair(spec: &ShiftSpec, val_fraction: f64, seed: u64) -> Result<DomainPair> {
    spec.validate()?;
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::validation(format!(
            "val_fraction = {val_fraction} must lie in (0, 1)"
        )));
    }
    let source = sample_csbm(&CsbmParams {
        seed: derive_seed(seed, "domain/source", &[]),
        ..spec.source.clone()
    })?;
    let target = sample_csbm(&CsbmParams {
        seed: derive_seed(seed, "domain/target", &[]),
        ..spec.target.clone()
    })?;
    let (val, test) = stratified_split(&target, val_fraction, seed)?;
    DomainPair::new(source, target, val, test)
}

/// Per class, shuffle that class's nodes and put `round(fraction * n_c)` in validation.
pub fn stratified_split(g: &LabeledGraph, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let labels = g
        .known_labels()
        .ok_or_else(|| Error::validation("stratified split needs every node labeled"))?;
    let mut val = Vec::new();
    let mut test = Vec::new();
    for c in 0..g.num_classes() {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&v| labels[v] == c).collect();
        members.shuffle(&mut stream(seed, "split", &[c as u64]));
        let take = ((members.len() as f64) * fraction).round() as usize;
        val.extend_from_slice(&members[..take]);
        test.extend_from_slice(&members[take..]);
    }
    val.sort_unstable();
    test.sort_unstable();
    Ok((val, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(k: usize) -> AttrModel {
        AttrModel::Gaussian {
            means: (0..k).map(|c| vec![c as f64, 0.0]).collect(),
        }
    }

    #[test]
    fn zero_and_one_matrices() {
        let mut params = CsbmParams {
            n_per_class: vec![2, 2],
            block: BlockMatrix::planted(2, 0.0, 0.0).unwrap(),
            attr_model: gaussian(2),
            seed: 3,
        };
        assert_eq!(sample_csbm(&params).unwrap().num_directed_edges(), 0);
        params.block = BlockMatrix::planted(2, 1.0, 1.0).unwrap();
        let g = sample_csbm(&params).unwrap();
        assert_eq!(g.undirected_edges().len(), 6);
    }

    #[test]
    fn rejects_mismatched_params() {
        let params = CsbmParams {
            n_per_class: vec![2, 2, 2],
            block: BlockMatrix::planted(2, 0.1, 0.1).unwrap(),
            attr_model: gaussian(3),
            seed: 0,
        };
        assert!(sample_csbm(&params).is_err());
        let params = CsbmParams {
            n_per_class: vec![2, 2],
            block: BlockMatrix::planted(2, 0.1, 0.1).unwrap(),
            attr_model: gaussian(3),
            seed: 0,
        };
        assert!(sample_csbm(&params).is_err());
        let asym = BlockMatrix::from_rows(&[vec![0.1, 0.2], vec![0.3, 0.1]]).unwrap();
        let params = CsbmParams {
            block: asym,
            attr_model: gaussian(2),
            ..params
        };
        assert!(sample_csbm(&params).is_err());
    }

    #[test]
    fn deterministic_in_seed() {
        let params = CsbmParams {
            n_per_class: vec![30, 40],
            block: BlockMatrix::planted(2, 0.2, 0.05).unwrap(),
            attr_model: gaussian(2),
            seed: 11,
        };
        let a = sample_csbm(&params).unwrap();
        assert_eq!(a, sample_csbm(&params).unwrap());
        let b = sample_csbm(&CsbmParams { seed: 12, ..params }).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn missing_value_parameter_ranges() {
        let ok = MissingValueParams { n: 10, p: 0.2, delta: 0.1, r: 0.5 };
        assert!(ok.validate().is_ok());
        for bad in [
            MissingValueParams { delta: 0.0, ..ok },
            MissingValueParams { delta: 0.25, ..ok },
            MissingValueParams { p: 0.5, ..ok },
            MissingValueParams { n: 9, ..ok },
            MissingValueParams { r: 0.0, ..ok },
        ] {
            assert!(sample_example41(bad, Domain::Source, 0).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn degenerate_r_reveals_labels() {
        let params = MissingValueParams { n: 40, p: 0.2, delta: -0.1, r: 1.0 };
        let g = sample_example41(params, Domain::Target, 5).unwrap();
        for (v, row) in g.attrs().rows().into_iter().enumerate() {
            let c = g.labels()[v].unwrap();
            assert_eq!(row[c], 1.0);
            assert_eq!(row.sum(), 1.0);
        }
    }

    #[test]
    fn split_sizes_are_stratified() {
        let spec = ShiftSpec::three_class_benchmark(0.016);
        let mut small = spec.clone();
        small.source.n_per_class = vec![50; 3];
        small.target.n_per_class = vec![50; 3];
        let pair = sample_domain_pair(&small, 0.2, 4).unwrap();
        assert_eq!(pair.target_val_mask.len(), 30);
        for c in 0..3 {
            let in_val = pair
                .target_val_mask
                .iter()
                .filter(|&&v| pair.target.labels()[v] == Some(c))
                .count();
            assert_eq!(in_val, 10);
        }
        assert!(sample_domain_pair(&small, 1.0, 4).is_err());
    }

    #[test]
    fn shared_attributes_flag_is_enforced() {
        let mut spec = ShiftSpec::three_class_benchmark(0.016);
        spec.target.attr_model = AttrModel::Gaussian {
            means: vec![vec![0.0, 0.0]; 3],
        };
        assert!(spec.validate().is_err());
        spec.shared_attributes = false;
        assert!(spec.validate().is_ok());
    }
}
