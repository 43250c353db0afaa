//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

pub mod grad;

use ndarray::Array2;
use strurw::graph::LabeledGraph;

/// Block matrix by brute force over a dense adjacency matrix:
/// `Σ_{u in V_i, v in V_j} A_uv / (|V_i| |V_j|)`.
pub fn brute_force_block(g: &LabeledGraph, labels: &[usize], k: usize) -> Vec<Vec<f64>> {
    let n = g.num_nodes();
    let mut adj = vec![vec![0u32; n]; n];
    for (u, v) in g.undirected_edges() {
        adj[u][v] = 1;
        adj[v][u] = 1;
    }
    let mut out = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            let vi: Vec<usize> = (0..n).filter(|&u| labels[u] == i).collect();
            let vj: Vec<usize> = (0..n).filter(|&v| labels[v] == j).collect();
            if vi.is_empty() || vj.is_empty() {
                continue;
            }
            let mut pairs = 0u32;
            for &u in &vi {
                for &v in &vj {
                    pairs += adj[u][v];
                }
            }
            out[i][j] = f64::from(pairs) / (vi.len() * vj.len()) as f64;
        }
    }
    out
}

/// CSS written as the mean of `|s - t| (s + t) / (2 s t)`.
pub fn css_direct(s: &[Vec<f64>], t: &[Vec<f64>]) -> f64 {
    let k = s.len();
    let mut total = 0.0;
    for i in 0..k {
        for j in 0..k {
            let (a, b) = (s[i][j], t[i][j]);
            total += (a - b).abs() * (a + b) / (2.0 * a * b);
        }
    }
    total / (k * k) as f64
}

pub fn rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}
