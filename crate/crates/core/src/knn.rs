//! Exact k-nearest-neighbor search and the shared graph type.

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::parallel::map_indices;

/// Directed k-NN graph: row `i` lists the `k` nearest neighbors of point `i`
/// (excluding `i`) with squared Euclidean distances in non-decreasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnGraph {
    n: usize,
    k: usize,
    indices: Vec<u32>,
    sq_distances: Vec<f32>,
}

impl KnnGraph {
    /// Builds a graph and checks every structural invariant.
    pub fn new(n: usize, k: usize, indices: Vec<u32>, sq_distances: Vec<f32>) -> Result<Self> {
        let g = Self {
            n,
            k,
            indices,
            sq_distances,
        };
        g.check()?;
        Ok(g)
    }

    pub(crate) fn from_parts_unchecked(
        n: usize,
        k: usize,
        indices: Vec<u32>,
        sq_distances: Vec<f32>,
    ) -> Self {
        Self {
            n,
            k,
            indices,
            sq_distances,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.indices.len() != self.n * self.k || self.sq_distances.len() != self.n * self.k {
            return Err(Error::Shape(format!(
                "graph arrays do not match {}x{}",
                self.n, self.k
            )));
        }
        for i in 0..self.n {
            let nb = self.neighbors(i);
            let ds = self.sq_distances(i);
            if let Some(&j) = nb.iter().find(|&&j| j as usize == i || j as usize >= self.n) {
                return Err(Error::InvalidParam(format!("row {i} has invalid neighbor {j}")));
            }
            if ds.iter().any(|&d| !(d >= 0.0)) || ds.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::InvalidParam(format!(
                    "row {i} distances are not sorted non-negative values"
                )));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.indices[i * self.k..(i + 1) * self.k]
    }

    #[inline]
    pub fn sq_distances(&self, i: usize) -> &[f32] {
        &self.sq_distances[i * self.k..(i + 1) * self.k]
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn all_sq_distances(&self) -> &[f32] {
        &self.sq_distances
    }

    /// Keeps only the first `k` neighbors of every row.
    pub fn truncate(&self, k: usize) -> KnnGraph {
        let k = k.min(self.k);
        let mut indices = Vec::with_capacity(self.n * k);
        let mut dists = Vec::with_capacity(self.n * k);
        for i in 0..self.n {
            indices.extend_from_slice(&self.neighbors(i)[..k]);
            dists.extend_from_slice(&self.sq_distances(i)[..k]);
        }
        KnnGraph::from_parts_unchecked(self.n, k, indices, dists)
    }

    pub fn mean_distance(&self) -> f64 {
        if self.sq_distances.is_empty() {
            return 0.0;
        }
        self.sq_distances
            .iter()
            .map(|&d| (d as f64).sqrt())
            .sum::<f64>()
            / self.sq_distances.len() as f64
    }
}

#[inline]
pub(crate) fn sq_norm_f64(a: &[f32]) -> f64 {
    a.iter().map(|&v| v as f64 * v as f64).sum()
}

#[inline]
pub(crate) fn dot_f64(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

/// Squared distance of two rows by direct differencing.
#[inline]
pub fn sq_dist(a: &[f32], b: &[f32]) -> f32 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let t = x - y;
            t * t
        })
        .sum()
}

/// Pairwise squared distances between the rows of `a` (`m x dim`) and `b`
/// (`p x dim`) via `|a|^2 + |b|^2 - 2 a.b`, clamped below at zero. Returns a
/// row-major `m x p` block.
pub fn sq_dist_block(a: &[f32], b: &[f32], dim: usize) -> Result<Vec<f32>> {
    if dim == 0 || a.len() % dim != 0 || b.len() % dim != 0 {
        return Err(Error::Shape(format!(
            "blocks of length {} and {} are not multiples of dimension {dim}",
            a.len(),
            b.len()
        )));
    }
    let b_norms: Vec<f64> = b.chunks_exact(dim).map(sq_norm_f64).collect();
    let mut out = Vec::with_capacity(a.len() / dim * b_norms.len());
    for ra in a.chunks_exact(dim) {
        let na = sq_norm_f64(ra);
        for (rb, &nb) in b.chunks_exact(dim).zip(&b_norms) {
            out.push((na + nb - 2.0 * dot_f64(ra, rb)).max(0.0) as f32);
        }
    }
    Ok(out)
}

/// Total order on `(distance, index)`: lower index breaks ties.
#[inline]
pub(crate) fn dist_order<D: PartialOrd>(a: &(D, u32), b: &(D, u32)) -> std::cmp::Ordering {
    a.0.partial_cmp(&b.0)
        .unwrap_or(std::cmp::Ordering::Equal)
        .then(a.1.cmp(&b.1))
}

/// Rows per distance tile.
pub const TILE_ROWS: usize = 4096;

/// Exact k nearest neighbors from the full distance matrix, computed tile by
/// tile with partial selection per row. Ties go to the lower index.
pub fn exact_knn(x: &DataMatrix, k: usize, sequential: bool) -> Result<KnnGraph> {
    let n = x.rows();
    if k == 0 || k >= n {
        return Err(Error::InvalidParam(format!("k = {k} must be in [1, {n})")));
    }
    let norms: Vec<f64> = (0..n).map(|i| sq_norm_f64(x.row(i))).collect();
    let mut indices = Vec::with_capacity(n * k);
    let mut dists = Vec::with_capacity(n * k);
    for start in (0..n).step_by(TILE_ROWS) {
        let end = (start + TILE_ROWS).min(n);
        let rows = map_indices(end - start, sequential, |t| {
            let i = start + t;
            let xi = x.row(i);
            let mut cand: Vec<(f64, u32)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let d = norms[i] + norms[j] - 2.0 * dot_f64(xi, x.row(j));
                    (d.max(0.0), j as u32)
                })
                .collect();
            cand.select_nth_unstable_by(k - 1, dist_order);
            cand.truncate(k);
            cand.sort_unstable_by(dist_order);
            cand
        });
        for row in rows {
            for (d, j) in row {
                indices.push(j);
                dists.push(d as f32);
            }
        }
    }
    Ok(KnnGraph::from_parts_unchecked(n, k, indices, dists))
}
