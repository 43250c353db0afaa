//! Class-pair edge-probability matrices and the conditional structure shift metric.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{from_json_str, Error, Result};
use crate::graph::LabeledGraph;

/// A k×k matrix of class-pair edge probabilities.
///
/// Serializes as a list of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct BlockMatrix {
    entries: Array2<f64>,
}

impl BlockMatrix {
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() || entries.nrows() == 0 {
            return Err(Error::validation(format!(
                "block matrix must be square and non-empty, got {:?}",
                entries.shape()
            )));
        }
        if entries.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::validation(
                "block matrix entries must be finite and non-negative",
            ));
        }
        Ok(Self { entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::validation("block matrix rows must all have length k"));
        }
        let flat = rows.iter().flatten().copied().collect();
        Self::new(Array2::from_shape_vec((k, k), flat).map_err(|e| Error::validation(e.to_string()))?)
    }

    /// Two-level matrix: `intra` on the diagonal and `inter` elsewhere.
    pub fn planted(k: usize, intra: f64, inter: f64) -> Result<Self> {
        Self::new(Array2::from_shape_fn((k, k), |(i, j)| if i == j { intra } else { inter }))
    }

    pub fn k(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[[i, j]]
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn is_symmetric(&self) -> bool {
        let k = self.k();
        (0..k).all(|i| (0..i).all(|j| self.entries[[i, j]] == self.entries[[j, i]]))
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.entries.mapv(|x| x * c))
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.entries.rows().into_iter().map(|r| r.to_vec()).collect()
    }

    /// Stable content hash (hex SHA-256 of the little-endian entries).
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update((self.k() as u64).to_le_bytes());
        for x in &self.entries {
            h.update(x.to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_json(&self) -> String {
        let doc = MatrixDocument {
            k: self.k(),
            entries: self.to_rows(),
        };
        serde_json::to_string_pretty(&serde_json::to_value(doc).expect("serializable"))
            .expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: MatrixDocument = from_json_str(text)?;
        let m = Self::from_rows(&doc.entries)?;
        if m.k() != doc.k {
            return Err(Error::validation(format!(
                "declared k = {} but entries are {}x{}",
                doc.k,
                m.k(),
                m.k()
            )));
        }
        Ok(m)
    }
}

impl TryFrom<Vec<Vec<f64>>> for BlockMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(&rows)
    }
}

impl From<BlockMatrix> for Vec<Vec<f64>> {
    fn from(m: BlockMatrix) -> Self {
        m.to_rows()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixDocument {
    k: usize,
    entries: Vec<Vec<f64>>,
}

/// Result of [`estimate_block_matrix`].
#[derive(Debug, Clone, PartialEq)]
pub struct BlockEstimate {
    pub matrix: BlockMatrix,
    /// Classes with no nodes; their rows and columns are zero.
    pub empty_classes: Vec<usize>,
}

impl BlockEstimate {
    pub fn is_degenerate(&self) -> bool {
        !self.empty_classes.is_empty()
    }
}

/// Estimate `B_ij = #{directed pairs (u, v): y_u = i, y_v = j} / (|V_i| |V_j|)`.
///
/// Both directions of every undirected edge are counted, so intra-class
/// entries use the `|V_i|^2` denominator. That choice cancels in the
/// target/source ratio used for reweighting.
pub fn estimate_block_matrix(g: &LabeledGraph, labels: &[usize]) -> Result<BlockEstimate> {
    let k = g.num_classes();
    if labels.len() != g.num_nodes() {
        return Err(Error::validation(format!(
            "{} labels for {} nodes",
            labels.len(),
            g.num_nodes()
        )));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::validation(format!("label {y} outside [0, {k})")));
    }
    let mut sizes = vec![0usize; k];
    for &y in labels {
        sizes[y] += 1;
    }
    let mut counts = Array2::<f64>::zeros((k, k));
    for (u, v, _) in g.directed_edges() {
        counts[[labels[u], labels[v]]] += 1.0;
    }
    let entries = Array2::from_shape_fn((k, k), |(i, j)| {
        let denom = sizes[i] as f64 * sizes[j] as f64;
        if denom == 0.0 {
            0.0
        } else {
            counts[[i, j]] / denom
        }
    });
    Ok(BlockEstimate {
        matrix: BlockMatrix::new(entries)?,
        empty_classes: (0..k).filter(|&c| sizes[c] == 0).collect(),
    })
}

/// Per-entry and aggregate conditional structure shift.
#[derive(Debug, Clone, PartialEq)]
pub struct CssReport {
    pub value: f64,
    pub per_entry: Array2<f64>,
    /// Some entry had a zero denominator against a non-zero counterpart.
    pub unbounded: bool,
}

/// Mean over all k² entries of `½(|s - t| / s + |s - t| / t)`.
///
/// Entries where both matrices are zero contribute 0; entries where only
/// one is zero are infinite and set `unbounded`.
pub fn css_metric(bs: &BlockMatrix, bt: &BlockMatrix) -> Result<CssReport> {
    let k = bs.k();
    if bt.k() != k {
        return Err(Error::validation(format!(
            "class counts differ: {k} vs {}",
            bt.k()
        )));
    }
    let per_entry = Array2::from_shape_fn((k, k), |(i, j)| entry_shift(bs.get(i, j), bt.get(i, j)));
    let unbounded = per_entry.iter().any(|x| x.is_infinite());
    let value = per_entry.iter().sum::<f64>() / (k * k) as f64;
    Ok(CssReport {
        value,
        per_entry,
        unbounded,
    })
}

fn entry_shift(s: f64, t: f64) -> f64 {
    if s == t {
        return 0.0;
    }
    if s == 0.0 || t == 0.0 {
        return f64::INFINITY;
    }
    let d = (s - t).abs();
    0.5 * (d / s + d / t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn two_nodes(edge: bool) -> LabeledGraph {
        let edges: &[(usize, usize)] = if edge { &[(0, 1)] } else { &[] };
        LabeledGraph::new(2, edges, Array2::zeros((2, 1)), vec![Some(0), Some(1)], 2).unwrap()
    }

    #[test]
    fn single_cross_edge() {
        let est = estimate_block_matrix(&two_nodes(true), &[0, 1]).unwrap();
        assert_eq!(est.matrix.entries(), &array![[0.0, 1.0], [1.0, 0.0]]);
        assert!(!est.is_degenerate());
    }

    #[test]
    fn empty_edges_give_zero_matrix() {
        let est = estimate_block_matrix(&two_nodes(false), &[0, 1]).unwrap();
        assert!(est.matrix.entries().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn empty_class_is_flagged() {
        let est = estimate_block_matrix(&two_nodes(true), &[0, 0]).unwrap();
        assert_eq!(est.empty_classes, vec![1]);
        assert_eq!(est.matrix.get(0, 0), 0.5);
        assert_eq!(est.matrix.get(1, 1), 0.0);
    }

    #[test]
    fn css_worked_example() {
        let bs = BlockMatrix::from_rows(&[vec![0.02, 0.016], vec![0.016, 0.02]]).unwrap();
        let bt = BlockMatrix::from_rows(&[vec![0.02, 0.002], vec![0.002, 0.02]]).unwrap();
        let r = css_metric(&bs, &bt).unwrap();
        assert!((r.per_entry[[0, 1]] - 3.9375).abs() < 1e-12);
        assert!((r.value - 1.96875).abs() < 1e-12);
        assert!(!r.unbounded);
        assert_eq!(css_metric(&bs, &bs).unwrap().value, 0.0);
    }

    #[test]
    fn css_zero_policy() {
        let a = BlockMatrix::from_rows(&[vec![0.0, 0.1], vec![0.1, 0.0]]).unwrap();
        let b = BlockMatrix::from_rows(&[vec![0.0, 0.1], vec![0.1, 0.2]]).unwrap();
        let r = css_metric(&a, &b).unwrap();
        assert_eq!(r.per_entry[[0, 0]], 0.0);
        assert!(r.per_entry[[1, 1]].is_infinite());
        assert!(r.unbounded && r.value.is_infinite());
    }

    #[test]
    fn css_rejects_mismatched_k() {
        let a = BlockMatrix::planted(2, 0.1, 0.01).unwrap();
        let b = BlockMatrix::planted(3, 0.1, 0.01).unwrap();
        assert!(css_metric(&a, &b).is_err());
    }

    #[test]
    fn matrix_json_round_trip() {
        let m = BlockMatrix::from_rows(&[vec![0.02, 0.016], vec![0.016, 0.1 + 0.2]]).unwrap();
        assert_eq!(BlockMatrix::from_json(&m.to_json()).unwrap(), m);
        assert!(BlockMatrix::from_json(r#"{"k": 3, "entries": [[1.0]]}"#).is_err());
        assert!(BlockMatrix::from_rows(&[vec![-0.1]]).is_err());
    }
}
