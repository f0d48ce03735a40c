//! NNDescent: approximate k-NN graph by iterated local joins.
//!
//! Each point starts from `k` random neighbors. Every iteration samples a
//! candidate set per point (forward plus reverse neighbors, split into new and
//! old), joins candidate pairs, and applies the resulting heap insertions in a
//! fixed order. Iteration stops once the number of accepted insertions drops
//! below `delta * k * n`.

use rand::RngCore;

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::knn::{sq_dist, sq_dist_block, KnnGraph};
use crate::parallel::map_indices;
use crate::rng::RandomSource;

#[derive(Debug, Clone, PartialEq)]
pub struct NnDescentParams {
    pub k: usize,
    pub max_iters: usize,
    /// Early-termination update rate.
    pub delta: f64,
    /// Fraction of forward/reverse neighbors sampled into each candidate set.
    pub sample_rate: f64,
    /// Random-projection trees used for initialization. Only 0 (pure random
    /// initialization) is supported.
    pub n_trees_init: usize,
}

impl Default for NnDescentParams {
    fn default() -> Self {
        Self {
            k: 15,
            max_iters: 20,
            delta: 0.015,
            sample_rate: 0.5,
            n_trees_init: 0,
        }
    }
}

impl NnDescentParams {
    pub fn with_k(k: usize) -> Self {
        Self {
            k,
            ..Self::default()
        }
    }

    fn check(&self, n: usize) -> Result<()> {
        if self.k == 0 || self.k >= n {
            return Err(Error::InvalidParam(format!("k = {} must be in [1, {n})", self.k)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParam(format!("delta = {} not in (0, 1)", self.delta)));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate <= 1.0) {
            return Err(Error::InvalidParam(format!(
                "sample_rate = {} not in (0, 1]",
                self.sample_rate
            )));
        }
        if self.n_trees_init != 0 {
            return Err(Error::InvalidParam(
                "tree initialization is not supported; use n_trees_init = 0".into(),
            ));
        }
        Ok(())
    }
}

/// What happened during a run.
#[derive(Debug, Clone, PartialEq)]
pub struct NnDescentReport {
    /// Accepted heap insertions per iteration that were still in place when
    /// the iteration ended.
    pub updates: Vec<usize>,
    /// `delta * k * n`.
    pub threshold: f64,
    /// Sum over points of the k-th neighbor distance, at init and after
    /// every iteration.
    pub kth_distance_sums: Vec<f64>,
}

impl NnDescentReport {
    pub fn iterations(&self) -> usize {
        self.updates.len()
    }

    /// Whether the run stopped on the update-rate criterion.
    pub fn converged(&self) -> bool {
        self.updates
            .last()
            .is_some_and(|&c| (c as f64) < self.threshold)
    }
}

/// Fixed-capacity max-heap of `(distance, index)` with per-entry "new" flags.
/// Lower index wins ties, so the root is the greatest `(distance, index)`.
struct NeighborHeaps {
    k: usize,
    idx: Vec<u32>,
    dist: Vec<f32>,
    new: Vec<bool>,
    /// Iteration in which each entry was inserted.
    stamp: Vec<u32>,
    round: u32,
}

impl NeighborHeaps {
    #[inline]
    fn greater(d1: f32, i1: u32, d2: f32, i2: u32) -> bool {
        d1 > d2 || (d1 == d2 && i1 > i2)
    }

    #[inline]
    fn max_dist(&self, p: usize) -> f32 {
        self.dist[p * self.k]
    }

    /// Returns whether `q` was inserted into the heap of `p`.
    fn push(&mut self, p: usize, q: u32, d: f32) -> bool {
        let k = self.k;
        let base = p * k;
        if !Self::greater(self.dist[base], self.idx[base], d, q) {
            return false;
        }
        if self.idx[base..base + k].contains(&q) {
            return false;
        }
        let (idx, dist, new, stamp) = (
            &mut self.idx[base..base + k],
            &mut self.dist[base..base + k],
            &mut self.new[base..base + k],
            &mut self.stamp[base..base + k],
        );
        let mut pos = 0;
        loop {
            let l = 2 * pos + 1;
            if l >= k {
                break;
            }
            let r = l + 1;
            let c = if r < k && Self::greater(dist[r], idx[r], dist[l], idx[l]) {
                r
            } else {
                l
            };
            if Self::greater(dist[c], idx[c], d, q) {
                idx[pos] = idx[c];
                dist[pos] = dist[c];
                new[pos] = new[c];
                stamp[pos] = stamp[c];
                pos = c;
            } else {
                break;
            }
        }
        idx[pos] = q;
        dist[pos] = d;
        new[pos] = true;
        stamp[pos] = self.round;
        true
    }

    /// Entries inserted during the current round that are still present.
    fn surviving(&self) -> usize {
        self.stamp.iter().filter(|&&s| s == self.round).count()
    }

    fn kth_distance_sum(&self, n: usize) -> f64 {
        (0..n).map(|p| self.max_dist(p) as f64).sum()
    }
}

/// Keeps at most `cap` items with the smallest random priorities.
fn sample_capped(items: &mut Vec<(u32, u32)>, cap: usize) {
    if items.len() > cap {
        items.select_nth_unstable(cap);
        items.truncate(cap);
    }
}

pub fn nndescent(
    x: &DataMatrix,
    params: &NnDescentParams,
    rng: &mut RandomSource,
    sequential: bool,
) -> Result<KnnGraph> {
    nndescent_with_report(x, params, rng, sequential).map(|(g, _)| g)
}

pub fn nndescent_with_report(
    x: &DataMatrix,
    params: &NnDescentParams,
    rng: &mut RandomSource,
    sequential: bool,
) -> Result<(KnnGraph, NnDescentReport)> {
    let n = x.rows();
    params.check(n)?;
    let k = params.k;
    let dim = x.cols();

    let mut heaps = NeighborHeaps {
        k,
        idx: vec![u32::MAX; n * k],
        dist: vec![f32::INFINITY; n * k],
        new: vec![true; n * k],
        stamp: vec![0; n * k],
        round: 0,
    };
    for p in 0..n {
        let mut filled = 0;
        while filled < k {
            let q = rng.below(n);
            if q != p && heaps.push(p, q as u32, sq_dist(x.row(p), x.row(q))) {
                filled += 1;
            }
        }
    }

    let cap = ((params.sample_rate * k as f64).ceil() as usize).max(1);
    let threshold = params.delta * k as f64 * n as f64;
    let mut report = NnDescentReport {
        updates: Vec::new(),
        threshold,
        kth_distance_sums: vec![heaps.kth_distance_sum(n)],
    };

    for iter in 0..params.max_iters {
        // Forward sampling: up to `cap` new neighbors per point, old ones kept.
        let mut fwd_new: Vec<Vec<u32>> = vec![Vec::new(); n];
        let mut fwd_old: Vec<Vec<u32>> = vec![Vec::new(); n];
        for p in 0..n {
            let mut fresh: Vec<(u32, u32)> = Vec::new();
            for s in 0..k {
                let slot = p * k + s;
                if heaps.new[slot] {
                    fresh.push((rng.next_u32(), s as u32));
                } else {
                    fwd_old[p].push(heaps.idx[slot]);
                }
            }
            sample_capped(&mut fresh, cap);
            for &(_, s) in &fresh {
                let slot = p * k + s as usize;
                fwd_new[p].push(heaps.idx[slot]);
                heaps.new[slot] = false;
            }
        }

        // Reverse lists from the sampled forward graph, sampled again.
        let mut rev_new: Vec<Vec<(u32, u32)>> = vec![Vec::new(); n];
        let mut rev_old: Vec<Vec<(u32, u32)>> = vec![Vec::new(); n];
        for p in 0..n {
            for &q in &fwd_new[p] {
                rev_new[q as usize].push((rng.next_u32(), p as u32));
            }
            for &q in &fwd_old[p] {
                rev_old[q as usize].push((rng.next_u32(), p as u32));
            }
        }

        let mut new_c: Vec<Vec<u32>> = fwd_new;
        let mut old_c: Vec<Vec<u32>> = fwd_old;
        for p in 0..n {
            sample_capped(&mut rev_new[p], cap);
            sample_capped(&mut rev_old[p], cap);
            let nc = &mut new_c[p];
            for &(_, q) in &rev_new[p] {
                if !nc.contains(&q) {
                    nc.push(q);
                }
            }
            let oc = &mut old_c[p];
            for &(_, q) in &rev_old[p] {
                if !oc.contains(&q) && !new_c[p].contains(&q) {
                    oc.push(q);
                }
            }
        }

        // Local join against a frozen snapshot of the heap maxima.
        let bounds: Vec<f32> = (0..n).map(|p| heaps.max_dist(p)).collect();
        let proposals: Vec<Vec<(u32, u32, f32)>> = map_indices(n, sequential, |u| {
            let newer = &new_c[u];
            let older = &old_c[u];
            if newer.is_empty() {
                return Vec::new();
            }
            let members: Vec<u32> = newer.iter().chain(older).copied().collect();
            let mut a = Vec::with_capacity(newer.len() * dim);
            for &p in newer {
                a.extend_from_slice(x.row(p as usize));
            }
            let mut b = Vec::with_capacity(members.len() * dim);
            for &q in &members {
                b.extend_from_slice(x.row(q as usize));
            }
            let block = sq_dist_block(&a, &b, dim).expect("rows share the data dimension");
            let m = members.len();
            let mut out = Vec::new();
            for (ai, &p) in newer.iter().enumerate() {
                for (bi, &q) in members.iter().enumerate() {
                    // new-new pairs once, new-old pairs always
                    if bi < newer.len() && bi <= ai {
                        continue;
                    }
                    if p == q {
                        continue;
                    }
                    let d = block[ai * m + bi];
                    if d < bounds[p as usize] || d < bounds[q as usize] {
                        out.push((p, q, d));
                    }
                }
            }
            out
        });

        heaps.round = iter as u32 + 1;
        for list in proposals {
            for (p, q, d) in list {
                heaps.push(p as usize, q, d);
                heaps.push(q as usize, p, d);
            }
        }
        // insertions later evicted within the same round do not count
        let accepted = heaps.surviving();
        report.updates.push(accepted);
        report.kth_distance_sums.push(heaps.kth_distance_sum(n));
        log::debug!(
            "nndescent iteration {}: {accepted} updates (threshold {threshold:.1})",
            iter + 1
        );
        if (accepted as f64) < threshold {
            break;
        }
    }

    let mut indices = Vec::with_capacity(n * k);
    let mut dists = Vec::with_capacity(n * k);
    for p in 0..n {
        let mut row: Vec<(f32, u32)> = (0..k)
            .map(|s| (heaps.dist[p * k + s], heaps.idx[p * k + s]))
            .collect();
        row.sort_unstable_by(crate::knn::dist_order);
        for (d, q) in row {
            indices.push(q);
            dists.push(d);
        }
    }
    Ok((KnnGraph::from_parts_unchecked(n, k, indices, dists), report))
}
