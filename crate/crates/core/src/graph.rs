//! Labeled attributed graphs and their JSON file format.
//!
//! Undirected edges are stored as two directed pairs. Adjacency is kept in
//! receiver-major compressed form: the senders of messages into node `v`
//! are `senders[offsets[v]..offsets[v + 1]]`, ascending. Optional edge
//! weights are aligned with that array, so `weights[e]` is the weight of
//! the message `senders[e] -> v`.

use std::collections::BTreeSet;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{from_json_str, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledGraph {
    num_classes: usize,
    attrs: Array2<f64>,
    labels: Vec<Option<usize>>,
    offsets: Vec<usize>,
    senders: Vec<usize>,
    edge_weights: Option<Vec<f64>>,
    self_loops: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GraphOptions {
    pub allow_self_loops: bool,
}

impl LabeledGraph {
    /// Build a graph from an undirected edge list, materializing both directions.
    pub fn new(
        num_nodes: usize,
        edges: &[(usize, usize)],
        attrs: Array2<f64>,
        labels: Vec<Option<usize>>,
        num_classes: usize,
    ) -> Result<Self> {
        Self::with_options(
            num_nodes,
            edges,
            attrs,
            labels,
            num_classes,
            GraphOptions::default(),
        )
    }

    pub fn with_options(
        num_nodes: usize,
        edges: &[(usize, usize)],
        attrs: Array2<f64>,
        labels: Vec<Option<usize>>,
        num_classes: usize,
        options: GraphOptions,
    ) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::validation("num_classes must be at least 1"));
        }
        if attrs.nrows() != num_nodes {
            return Err(Error::validation(format!(
                "attrs has {} rows, expected {num_nodes}",
                attrs.nrows()
            )));
        }
        if let Some((i, _)) = attrs.iter().enumerate().find(|(_, x)| !x.is_finite()) {
            return Err(Error::validation(format!(
                "non-finite attribute at flat index {i}"
            )));
        }
        if labels.len() != num_nodes {
            return Err(Error::validation(format!(
                "{} labels for {num_nodes} nodes",
                labels.len()
            )));
        }
        if let Some((v, y)) = labels
            .iter()
            .enumerate()
            .find_map(|(v, y)| y.filter(|&c| c >= num_classes).map(|c| (v, c)))
        {
            return Err(Error::validation(format!(
                "node {v} has label {y}, outside [0, {num_classes})"
            )));
        }

        let mut seen = BTreeSet::new();
        let mut directed: Vec<(usize, usize)> = Vec::with_capacity(edges.len() * 2);
        for &(u, v) in edges {
            if u >= num_nodes || v >= num_nodes {
                return Err(Error::validation(format!(
                    "edge ({u}, {v}) references a node outside [0, {num_nodes})"
                )));
            }
            if u == v && !options.allow_self_loops {
                return Err(Error::validation(format!("self-loop at node {u}")));
            }
            if !seen.insert((u.min(v), u.max(v))) {
                return Err(Error::validation(format!("duplicate edge ({u}, {v})")));
            }
            // (sender, receiver)
            directed.push((u, v));
            if u != v {
                directed.push((v, u));
            }
        }
        directed.sort_unstable_by_key(|&(s, r)| (r, s));

        let mut offsets = vec![0usize; num_nodes + 1];
        for &(_, r) in &directed {
            offsets[r + 1] += 1;
        }
        for v in 0..num_nodes {
            offsets[v + 1] += offsets[v];
        }
        let senders = directed.into_iter().map(|(s, _)| s).collect();

        Ok(Self {
            num_classes,
            attrs,
            labels,
            offsets,
            senders,
            edge_weights: None,
            self_loops: options.allow_self_loops,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn attr_dim(&self) -> usize {
        self.attrs.ncols()
    }

    pub fn attrs(&self) -> &Array2<f64> {
        &self.attrs
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    /// All labels, or `None` if any node is unlabeled.
    pub fn known_labels(&self) -> Option<Vec<usize>> {
        self.labels.iter().copied().collect()
    }

    pub fn allows_self_loops(&self) -> bool {
        self.self_loops
    }

    /// Number of stored directed pairs.
    pub fn num_directed_edges(&self) -> usize {
        self.senders.len()
    }

    pub fn has_edge_weights(&self) -> bool {
        self.edge_weights.is_some()
    }

    /// Raw receiver-major adjacency: `(offsets, senders, weights)`.
    pub fn csr(&self) -> (&[usize], &[usize], Option<&[f64]>) {
        (&self.offsets, &self.senders, self.edge_weights.as_deref())
    }

    /// Senders of messages into `v` with their weights, ascending by sender.
    pub fn neighbors(&self, v: usize) -> Result<Vec<(usize, f64)>> {
        if v >= self.num_nodes() {
            return Err(Error::validation(format!(
                "node {v} out of range for {} nodes",
                self.num_nodes()
            )));
        }
        Ok(self.neighbor_iter(v).collect())
    }

    pub(crate) fn neighbor_iter(&self, v: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[v]..self.offsets[v + 1];
        let weights = self.edge_weights.as_deref();
        range.map(move |e| (self.senders[e], weights.map_or(1.0, |w| w[e])))
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    /// Iterate stored directed pairs as `(sender, receiver, weight)`.
    pub fn directed_edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.num_nodes()).flat_map(move |v| self.neighbor_iter(v).map(move |(u, w)| (u, v, w)))
    }

    /// Undirected edges `(u, v)` with `u <= v`, ascending.
    pub fn undirected_edges(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = self
            .directed_edges()
            .filter(|&(u, v, _)| u <= v)
            .map(|(u, v, _)| (u, v))
            .collect();
        out.sort_unstable();
        out
    }

    /// Weight of the message `sender -> receiver`, if that pair is stored.
    pub fn edge_weight(&self, sender: usize, receiver: usize) -> Option<f64> {
        if receiver >= self.num_nodes() {
            return None;
        }
        let range = self.offsets[receiver]..self.offsets[receiver + 1];
        let slice = &self.senders[range.clone()];
        slice
            .binary_search(&sender)
            .ok()
            .map(|i| self.edge_weights.as_ref().map_or(1.0, |w| w[range.start + i]))
    }

    /// New graph with the given per-directed-pair weights (receiver-major order).
    pub fn with_edge_weights(&self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.senders.len() {
            return Err(Error::validation(format!(
                "{} edge weights for {} directed pairs",
                weights.len(),
                self.senders.len()
            )));
        }
        if let Some((e, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w > 0.0))
        {
            return Err(Error::validation(format!(
                "edge weight {w} at directed pair {e} is not positive and finite"
            )));
        }
        Ok(Self {
            edge_weights: Some(weights),
            ..self.clone()
        })
    }

    /// New graph with weights computed per directed pair by `f(sender, receiver)`.
    pub fn map_edge_weights(&self, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let weights = (0..self.num_nodes())
            .flat_map(|v| (self.offsets[v]..self.offsets[v + 1]).map(move |e| (e, v)))
            .map(|(e, v)| f(self.senders[e], v))
            .collect();
        self.with_edge_weights(weights)
    }

    pub fn without_edge_weights(&self) -> Self {
        Self {
            edge_weights: None,
            ..self.clone()
        }
    }

    pub fn with_labels(&self, labels: Vec<Option<usize>>) -> Result<Self> {
        if labels.len() != self.num_nodes() {
            return Err(Error::validation(format!(
                "{} labels for {} nodes",
                labels.len(),
                self.num_nodes()
            )));
        }
        if labels.iter().flatten().any(|&y| y >= self.num_classes) {
            return Err(Error::validation("label outside class range"));
        }
        Ok(Self {
            labels,
            ..self.clone()
        })
    }

    pub fn with_attrs(&self, attrs: Array2<f64>) -> Result<Self> {
        if attrs.nrows() != self.num_nodes() {
            return Err(Error::validation("attrs row count differs from node count"));
        }
        if attrs.iter().any(|x| !x.is_finite()) {
            return Err(Error::validation("non-finite attribute"));
        }
        Ok(Self {
            attrs,
            ..self.clone()
        })
    }

    /// Relabel nodes: node `v` of `self` becomes node `perm[v]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let n = self.num_nodes();
        let mut check = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut check[p], true)) {
            return Err(Error::validation("not a permutation of the node set"));
        }
        let edges: Vec<(usize, usize)> = self
            .undirected_edges()
            .into_iter()
            .map(|(u, v)| (perm[u], perm[v]))
            .collect();
        let mut attrs = Array2::zeros(self.attrs.raw_dim());
        let mut labels = vec![None; n];
        for v in 0..n {
            attrs.row_mut(perm[v]).assign(&self.attrs.row(v));
            labels[perm[v]] = self.labels[v];
        }
        let mut g = Self::with_options(
            n,
            &edges,
            attrs,
            labels,
            self.num_classes,
            GraphOptions {
                allow_self_loops: self.self_loops,
            },
        )?;
        if self.edge_weights.is_some() {
            g = g.map_edge_weights(|s, r| {
                let (s0, r0) = (inverse(perm, s), inverse(perm, r));
                self.edge_weight(s0, r0).unwrap_or(1.0)
            })?;
        }
        Ok(g)
    }

    pub fn to_json(&self) -> String {
        let doc = GraphDocument::from(self);
        // Round-tripping through `Value` sorts object keys.
        let value = serde_json::to_value(&doc).expect("graph document is always serializable");
        serde_json::to_string(&value).expect("json value is always serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: GraphDocument = from_json_str(text)?;
        doc.into_graph()
    }
}

fn inverse(perm: &[usize], target: usize) -> usize {
    perm.iter().position(|&p| p == target).expect("valid permutation")
}

/// On-disk graph document. Field names match the documented file format.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphDocument {
    pub num_nodes: usize,
    pub num_classes: usize,
    pub attr_dim: usize,
    pub edges: Vec<(usize, usize)>,
    pub attrs: Vec<Vec<f64>>,
    pub labels: Vec<Option<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_weights: Option<Vec<(usize, usize, f64, f64)>>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub self_loops: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

impl From<&LabeledGraph> for GraphDocument {
    fn from(g: &LabeledGraph) -> Self {
        let edges = g.undirected_edges();
        let edge_weights = g.edge_weights.as_ref().map(|_| {
            edges
                .iter()
                .map(|&(u, v)| {
                    let w_uv = g.edge_weight(u, v).unwrap_or(1.0);
                    let w_vu = g.edge_weight(v, u).unwrap_or(1.0);
                    (u, v, w_uv, w_vu)
                })
                .collect()
        });
        Self {
            num_nodes: g.num_nodes(),
            num_classes: g.num_classes,
            attr_dim: g.attr_dim(),
            attrs: g.attrs.rows().into_iter().map(|r| r.to_vec()).collect(),
            labels: g.labels.clone(),
            edges,
            edge_weights,
            self_loops: g.self_loops,
        }
    }
}

impl GraphDocument {
    pub fn into_graph(self) -> Result<LabeledGraph> {
        if self.attrs.len() != self.num_nodes {
            return Err(Error::validation(format!(
                "attrs has {} rows, expected num_nodes = {}",
                self.attrs.len(),
                self.num_nodes
            )));
        }
        if let Some(i) = self.attrs.iter().position(|r| r.len() != self.attr_dim) {
            return Err(Error::validation(format!(
                "attrs row {i} has length {}, expected attr_dim = {}",
                self.attrs[i].len(),
                self.attr_dim
            )));
        }
        if let Some(&(u, v)) = self.edges.iter().find(|(u, v)| u > v) {
            return Err(Error::validation(format!(
                "edge [{u}, {v}] must be listed with u <= v"
            )));
        }
        let flat: Vec<f64> = self.attrs.into_iter().flatten().collect();
        let attrs = Array2::from_shape_vec((self.num_nodes, self.attr_dim), flat)
            .map_err(|e| Error::validation(e.to_string()))?;
        let g = LabeledGraph::with_options(
            self.num_nodes,
            &self.edges,
            attrs,
            self.labels,
            self.num_classes,
            GraphOptions {
                allow_self_loops: self.self_loops,
            },
        )?;
        match self.edge_weights {
            None => Ok(g),
            Some(rows) => {
                if rows.len() != self.edges.len() {
                    return Err(Error::validation(format!(
                        "edge_weights has {} rows for {} edges",
                        rows.len(),
                        self.edges.len()
                    )));
                }
                let mut lookup = std::collections::HashMap::with_capacity(rows.len() * 2);
                for (u, v, w_uv, w_vu) in rows {
                    lookup.insert((u, v), w_uv);
                    lookup.insert((v, u), w_vu);
                }
                let mut missing = None;
                let weighted = g.map_edge_weights(|s, r| {
                    lookup.get(&(s, r)).copied().unwrap_or_else(|| {
                        missing.get_or_insert((s, r));
                        1.0
                    })
                })?;
                if let Some((s, r)) = missing {
                    return Err(Error::validation(format!(
                        "edge_weights has no entry for edge ({}, {})",
                        s.min(r),
                        s.max(r)
                    )));
                }
                Ok(weighted)
            }
        }
    }
}

/// Source graph, target graph, and the target validation/test split.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainPair {
    pub source: LabeledGraph,
    pub target: LabeledGraph,
    pub target_val_mask: Vec<usize>,
    pub target_test_mask: Vec<usize>,
}

impl DomainPair {
    pub fn new(
        source: LabeledGraph,
        target: LabeledGraph,
        mut target_val_mask: Vec<usize>,
        mut target_test_mask: Vec<usize>,
    ) -> Result<Self> {
        if source.num_classes() != target.num_classes() {
            return Err(Error::validation(format!(
                "source has {} classes, target has {}",
                source.num_classes(),
                target.num_classes()
            )));
        }
        if source.attr_dim() != target.attr_dim() {
            return Err(Error::validation(format!(
                "source attr_dim {} differs from target attr_dim {}",
                source.attr_dim(),
                target.attr_dim()
            )));
        }
        if source.known_labels().is_none() {
            return Err(Error::validation("every source node must be labeled"));
        }
        target_val_mask.sort_unstable();
        target_test_mask.sort_unstable();
        let n = target.num_nodes();
        let mut seen = vec![false; n];
        for &v in target_val_mask.iter().chain(&target_test_mask) {
            if v >= n {
                return Err(Error::validation(format!("mask node {v} out of range")));
            }
            if std::mem::replace(&mut seen[v], true) {
                return Err(Error::validation(format!(
                    "node {v} appears twice in the target masks"
                )));
            }
        }
        if let Some(v) = seen.iter().position(|s| !s) {
            return Err(Error::validation(format!(
                "target node {v} is in neither the validation nor the test mask"
            )));
        }
        if target_val_mask
            .iter()
            .chain(&target_test_mask)
            .any(|&v| target.labels()[v].is_none())
        {
            return Err(Error::validation(
                "target masks must reference labeled nodes for evaluation",
            ));
        }
        Ok(Self {
            source,
            target,
            target_val_mask,
            target_test_mask,
        })
    }
}

/// Target split document: `{"val": [...], "test": [...]}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct SplitDocument {
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn path3() -> LabeledGraph {
        LabeledGraph::new(
            3,
            &[(0, 1), (1, 2)],
            array![[0.0], [1.0], [2.0]],
            vec![Some(0), Some(1), Some(0)],
            2,
        )
        .unwrap()
    }

    #[test]
    fn materializes_both_directions() {
        let g = LabeledGraph::new(2, &[(0, 1)], Array2::zeros((2, 1)), vec![Some(0), Some(1)], 2)
            .unwrap();
        let pairs: Vec<_> = g.directed_edges().map(|(u, v, _)| (u, v)).collect();
        assert_eq!(pairs.len(), 2);
        assert!(pairs.contains(&(0, 1)) && pairs.contains(&(1, 0)));
        assert!(!g.has_edge_weights());
    }

    #[test]
    fn empty_edge_set_is_valid() {
        let g = LabeledGraph::new(3, &[], Array2::zeros((3, 2)), vec![None; 3], 2).unwrap();
        assert_eq!(g.num_directed_edges(), 0);
        assert!(g.neighbors(2).unwrap().is_empty());
    }

    #[test]
    fn rejects_out_of_range_duplicates_and_self_loops() {
        let attrs = Array2::zeros((2, 1));
        let labels = vec![Some(0), Some(1)];
        for edges in [vec![(0, 2)], vec![(0, 1), (1, 0)], vec![(1, 1)]] {
            let err = LabeledGraph::new(2, &edges, attrs.clone(), labels.clone(), 2).unwrap_err();
            assert!(matches!(err, Error::Validation(_)), "{edges:?}: {err}");
        }
        let g = LabeledGraph::with_options(
            2,
            &[(1, 1)],
            attrs,
            labels,
            2,
            GraphOptions {
                allow_self_loops: true,
            },
        )
        .unwrap();
        assert_eq!(g.neighbors(1).unwrap(), vec![(1, 1.0)]);
    }

    #[test]
    fn rejects_bad_attrs_and_labels() {
        assert!(LabeledGraph::new(2, &[], Array2::zeros((3, 1)), vec![None; 2], 2).is_err());
        assert!(LabeledGraph::new(1, &[], array![[f64::NAN]], vec![None], 2).is_err());
        assert!(LabeledGraph::new(1, &[], array![[0.0]], vec![Some(2)], 2).is_err());
    }

    #[test]
    fn neighbors_of_path() {
        let g = path3();
        assert_eq!(g.neighbors(1).unwrap(), vec![(0, 1.0), (2, 1.0)]);
        assert_eq!(g.neighbors(0).unwrap(), vec![(1, 1.0)]);
        assert!(g.neighbors(3).is_err());
    }

    #[test]
    fn weights_are_per_direction() {
        let g = path3();
        let w = g.map_edge_weights(|s, r| (1 + s * 3 + r) as f64).unwrap();
        assert_eq!(w.edge_weight(0, 1), Some(2.0));
        assert_eq!(w.edge_weight(1, 0), Some(4.0));
        assert_eq!(w.neighbors(1).unwrap(), vec![(0, 2.0), (2, 8.0)]);
        assert!(g.with_edge_weights(vec![1.0, 0.0, 1.0, 1.0]).is_err());
        assert!(g.with_edge_weights(vec![1.0; 3]).is_err());
    }

    #[test]
    fn json_round_trip_with_unknown_labels_and_weights() {
        let g = LabeledGraph::new(
            3,
            &[(0, 2), (0, 1)],
            array![[0.1, -2.5], [1e-300, 3.0], [0.3333333333333333, 7.0]],
            vec![Some(1), None, Some(0)],
            2,
        )
        .unwrap();
        let text = g.to_json();
        assert!(text.contains("null"));
        assert_eq!(LabeledGraph::from_json(&text).unwrap(), g);
        assert_eq!(LabeledGraph::from_json(&text).unwrap().to_json(), text);

        let w = g.map_edge_weights(|s, r| 0.25 + (s + 2 * r) as f64).unwrap();
        let back = LabeledGraph::from_json(&w.to_json()).unwrap();
        assert_eq!(back, w);
    }

    #[test]
    fn json_keys_are_sorted() {
        let text = path3().to_json();
        let keys = ["\"attr_dim\"", "\"attrs\"", "\"edges\"", "\"labels\"", "\"num_classes\"", "\"num_nodes\""];
        let pos: Vec<usize> = keys.iter().map(|k| text.find(k).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]), "{text}");
    }

    #[test]
    fn parses_hand_written_document() {
        let text = r#"{
            "num_nodes": 3, "num_classes": 2, "attr_dim": 1,
            "edges": [[0, 1], [1, 2]],
            "attrs": [[0.0], [1.0], [2.0]],
            "labels": [0, 1, 0]
        }"#;
        assert_eq!(LabeledGraph::from_json(text).unwrap(), path3());
    }

    #[test]
    fn malformed_document_reports_field() {
        let text = "{\n\"num_nodes\": 2, \"num_classes\": 2, \"attr_dim\": 1,\n\"edges\": [[0, \"x\"]], \"attrs\": [[0.0],[0.0]], \"labels\": [0, 1]}";
        match LabeledGraph::from_json(text).unwrap_err() {
            Error::Parse { line, path, .. } => {
                assert_eq!(line, 3);
                assert!(path.starts_with("edges"), "{path}");
            }
            other => panic!("unexpected {other}"),
        }
        let reversed = r#"{"num_nodes": 2, "num_classes": 2, "attr_dim": 1, "edges": [[1, 0]], "attrs": [[0.0],[0.0]], "labels": [0, 1]}"#;
        assert!(LabeledGraph::from_json(reversed).is_err());
    }

    #[test]
    fn domain_pair_masks_must_partition() {
        let g = path3();
        assert!(DomainPair::new(g.clone(), g.clone(), vec![0], vec![1, 2]).is_ok());
        assert!(DomainPair::new(g.clone(), g.clone(), vec![0], vec![1]).is_err());
        assert!(DomainPair::new(g.clone(), g.clone(), vec![0, 1], vec![1, 2]).is_err());
    }

    #[test]
    fn permute_preserves_structure() {
        let g = path3().map_edge_weights(|s, r| 1.0 + s as f64 + 10.0 * r as f64).unwrap();
        let perm = [2, 0, 1];
        let p = g.permute(&perm).unwrap();
        for (u, v, w) in g.directed_edges() {
            assert_eq!(p.edge_weight(perm[u], perm[v]), Some(w));
        }
        assert_eq!(p.labels()[2], Some(0));
    }
}
