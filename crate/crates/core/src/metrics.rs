//! Quality measures for neighbor graphs and embeddings.

use crate::data::{DataMatrix, Embedding};
use crate::knn::{exact_knn, KnnGraph};

/// Mean fraction of each point's true neighbors present in `approx`.
pub fn knn_recall(approx: &KnnGraph, exact: &KnnGraph) -> f64 {
    let n = exact.n();
    let k = exact.k();
    let mut hits = 0usize;
    for i in 0..n {
        let a = approx.neighbors(i);
        hits += exact.neighbors(i).iter().filter(|j| a.contains(j)).count();
    }
    hits as f64 / (n * k) as f64
}

/// Mean fraction of each point's `k` nearest embedding neighbors that share
/// its label.
pub fn label_purity(embedding: &Embedding, labels: &[u32], k: usize) -> f64 {
    let m = DataMatrix::new(embedding.rows(), 2, embedding.values().to_vec())
        .expect("embedding is n x 2");
    let g = exact_knn(&m, k, false).expect("k < n");
    let mut same = 0usize;
    for i in 0..g.n() {
        same += g
            .neighbors(i)
            .iter()
            .filter(|&&j| labels[j as usize] == labels[i])
            .count();
    }
    same as f64 / (g.n() * k) as f64
}
