//! TriMap: weighted triplet embedding optimized with momentum and adaptive
//! gains.

use crate::config::EmbedderConfig;
use crate::data::{DataMatrix, Embedding};
use crate::embed::{neighbor_graph, EpochObserver};
use crate::error::{Error, Result};
use crate::knn::{dist_order, sq_dist, KnnGraph};
use crate::pacmap::{scaled, scaled_pca_init, sigmas};
use crate::rng::RandomSource;
use crate::tsne::{adapt_gain, to_embedding};

#[derive(Debug, Clone, PartialEq)]
pub struct TrimapParams {
    pub n_inliers: usize,
    pub n_outliers: usize,
    pub n_random: usize,
    /// Extra graph neighbors searched beyond `n_inliers`.
    pub n_extra: usize,
    /// `n / 100` when unset.
    pub learning_rate: Option<f64>,
    pub momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch: usize,
    pub init_scale: f32,
}

impl Default for TrimapParams {
    fn default() -> Self {
        Self {
            n_inliers: 10,
            n_outliers: 5,
            n_random: 5,
            n_extra: 50,
            learning_rate: None,
            momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch: 250,
            init_scale: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletSet {
    /// `(anchor, closer, farther)`.
    pub triplets: Vec<[u32; 3]>,
    pub weights: Vec<f64>,
}

impl TripletSet {
    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }
}

const MIN_POINTS: usize = 12;
const WEIGHT_GAIN: f64 = 500.0;
const WEIGHT_FLOOR: f64 = 1e-12;

/// `log(1 + 500 (w - w_min) / (w_max - w_min + 1e-12))`.
pub fn transform_weights(raw: &[f64]) -> Vec<f64> {
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    raw.iter()
        .map(|&w| (1.0 + WEIGHT_GAIN * (w - lo) / (hi - lo + WEIGHT_FLOOR)).ln())
        .collect()
}

/// Inlier triplets (each scaled-distance inlier against sampled non-inliers)
/// plus random triplets, weighted by the margin of their scaled distances.
pub fn sample_triplets(
    x: &DataMatrix,
    graph: &KnnGraph,
    params: &TrimapParams,
    rng: &mut RandomSource,
) -> Result<TripletSet> {
    let n = x.rows();
    if n < MIN_POINTS {
        return Err(Error::InvalidParam(format!(
            "triplet sampling needs at least {MIN_POINTS} points, got {n}"
        )));
    }
    let sigma = sigmas(graph);
    let n_in = params.n_inliers.min(graph.k());
    let sd = |i: usize, j: usize| scaled(sq_dist(x.row(i), x.row(j)), sigma[i], sigma[j]) as f64;
    let mut triplets = Vec::new();
    let mut raw = Vec::new();
    for i in 0..n {
        let mut cand: Vec<(f32, u32)> = graph
            .neighbors(i)
            .iter()
            .zip(graph.sq_distances(i))
            .map(|(&j, &d2)| (scaled(d2, sigma[i], sigma[j as usize]), j))
            .collect();
        cand.sort_by(dist_order);
        let inliers: Vec<u32> = cand[..n_in].iter().map(|c| c.1).collect();
        for &(dij, j) in &cand[..n_in] {
            for _ in 0..params.n_outliers {
                let k = loop {
                    let k = rng.below(n);
                    if k != i && !inliers.contains(&(k as u32)) {
                        break k;
                    }
                };
                triplets.push([i as u32, j, k as u32]);
                raw.push((sd(i, k) - dij as f64).max(0.0));
            }
        }
        for _ in 0..params.n_random {
            let j = loop {
                let j = rng.below(n);
                if j != i {
                    break j;
                }
            };
            let k = loop {
                let k = rng.below(n);
                if k != i && k != j {
                    break k;
                }
            };
            let (dj, dk) = (sd(i, j), sd(i, k));
            let (j, k, w) = if dj <= dk { (j, k, dk - dj) } else { (k, j, dj - dk) };
            triplets.push([i as u32, j as u32, k as u32]);
            raw.push(w);
        }
    }
    Ok(TripletSet {
        weights: transform_weights(&raw),
        triplets,
    })
}

#[inline]
fn similarity(y: &[f64], a: usize, b: usize) -> (f64, [f64; 2]) {
    let diff = [y[2 * a] - y[2 * b], y[2 * a + 1] - y[2 * b + 1]];
    (1.0 / (1.0 + diff[0] * diff[0] + diff[1] * diff[1]), diff)
}

/// `sum_t w_t s_ik / (s_ij + s_ik)` with `s = (1 + d^2)^-1`, and its gradient.
pub fn trimap_loss(y: &[f64], set: &TripletSet) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; y.len()];
    let mut loss = 0.0;
    for (&[i, j, k], &w) in set.triplets.iter().zip(&set.weights) {
        let (i, j, k) = (i as usize, j as usize, k as usize);
        let (sij, dij) = similarity(y, i, j);
        let (sik, dik) = similarity(y, i, k);
        let denom = sij + sik;
        loss += w * sik / denom;
        // d loss / d |y_i - y_j|^2 and d loss / d |y_i - y_k|^2
        let cj = w * sik * sij * sij / (denom * denom);
        let ck = -w * sij * sik * sik / (denom * denom);
        for t in 0..2 {
            let gj = 2.0 * cj * dij[t];
            let gk = 2.0 * ck * dik[t];
            grad[2 * i + t] += gj + gk;
            grad[2 * j + t] -= gj;
            grad[2 * k + t] -= gk;
        }
    }
    (loss, grad)
}

/// Momentum descent with adaptive gains on the triplet loss. The gradient is
/// scaled by `n / n_triplets` so the step size does not grow with the number
/// of triplets per point.
#[allow(clippy::too_many_arguments)]
pub fn optimize(
    set: &TripletSet,
    mut y: Vec<f64>,
    params: &TrimapParams,
    epochs: usize,
    observer: &mut EpochObserver,
    mut on_loss: impl FnMut(usize, f64),
) -> Result<Embedding> {
    let n = y.len() / 2;
    if set.is_empty() {
        return Err(Error::Degenerate("no triplets".into()));
    }
    let lr = params.learning_rate.unwrap_or(n as f64 / 100.0);
    let scale = n as f64 / set.len() as f64;
    let mut update = vec![0.0; y.len()];
    let mut gains = vec![1.0; y.len()];
    for epoch in 0..epochs {
        let momentum = if epoch < params.momentum_switch {
            params.momentum
        } else {
            params.final_momentum
        };
        let (loss, grad) = trimap_loss(&y, set);
        on_loss(epoch, loss);
        for c in 0..y.len() {
            let g = grad[c] * scale;
            gains[c] = adapt_gain(gains[c], g, update[c]);
            update[c] = momentum * update[c] - lr * gains[c] * g;
            y[c] += update[c];
        }
        if observer.is_active() {
            observer.notify(epoch, &to_embedding(&y));
        }
    }
    Ok(to_embedding(&y))
}

pub fn fit(
    x: &DataMatrix,
    cfg: &EmbedderConfig,
    rng: &mut RandomSource,
    observer: &mut EpochObserver,
) -> Result<Embedding> {
    let params = &cfg.params.trimap;
    let n = x.rows();
    if n < MIN_POINTS {
        return Err(Error::InvalidParam(format!(
            "triplet sampling needs at least {MIN_POINTS} points, got {n}"
        )));
    }
    let k = (params.n_inliers + params.n_extra).min(n - 1);
    let graph = neighbor_graph(x, k, cfg, rng)?;
    let set = sample_triplets(x, &graph, params, rng)?;
    let y = scaled_pca_init(x, params.init_scale, rng)?;
    optimize(&set, y, params, cfg.epochs, observer, |_, _| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knn::exact_knn;
    use crate::synthetic::gaussian_mixture;

    fn fixture(n: usize, seed: u64) -> TripletSet {
        let (x, _) = gaussian_mixture(n, 5, 3, 2.0, seed);
        let g = exact_knn(&x, 20.min(n - 1), true).unwrap();
        let mut rng = RandomSource::new(seed);
        sample_triplets(&x, &g, &TrimapParams::default(), &mut rng).unwrap()
    }

    #[test]
    fn weight_transform_endpoints() {
        let w = transform_weights(&[0.5, 2.0, 1.0]);
        assert_eq!(w[0], 0.0);
        assert!((w[1] - 501f64.ln()).abs() < 1e-9);
        assert!((501f64.ln() - 6.2166).abs() < 1e-3);
    }

    #[test]
    fn triplet_invariants() {
        for seed in 0..4 {
            let set = fixture(80, seed);
            assert_eq!(set.len(), 80 * (10 * 5 + 5));
            for (t, &w) in set.triplets.iter().zip(&set.weights) {
                assert!(t[0] != t[1] && t[1] != t[2] && t[0] != t[2]);
                assert!(w.is_finite() && (0.0..=501f64.ln() + 1e-12).contains(&w));
            }
        }
    }

    #[test]
    fn too_few_points() {
        let (x, _) = gaussian_mixture(11, 3, 1, 1.0, 0);
        let g = exact_knn(&x, 10, true).unwrap();
        let mut rng = RandomSource::new(0);
        assert!(sample_triplets(&x, &g, &TrimapParams::default(), &mut rng).is_err());
    }

    fn one(y_k: f64) -> (Vec<f64>, TripletSet) {
        let set = TripletSet {
            triplets: vec![[0, 1, 2]],
            weights: vec![1.0],
        };
        (vec![0.0, 0.0, 0.0, 0.0, y_k, 0.0], set)
    }

    #[test]
    fn single_triplet_values() {
        let (y, set) = one(1.0);
        assert!((trimap_loss(&y, &set).0 - 1.0 / 3.0).abs() < 1e-15);
        let (y, set) = one(1e6);
        assert!(trimap_loss(&y, &set).0 < 1e-11);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let set = fixture(30, 3);
        let mut rng = RandomSource::new(12);
        let y: Vec<f64> = (0..60).map(|_| rng.normal()).collect();
        let (_, g) = trimap_loss(&y, &set);
        let h = 1e-6;
        for c in 0..60 {
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[c] += h;
            ym[c] -= h;
            let fd = (trimap_loss(&yp, &set).0 - trimap_loss(&ym, &set).0) / (2.0 * h);
            let rel = (fd - g[c]).abs() / fd.abs().max(1e-6);
            assert!(rel < 1e-4, "coord {c}: {} vs {fd}", g[c]);
        }
    }

    #[test]
    fn translation_invariant_loss() {
        let set = fixture(40, 6);
        let mut rng = RandomSource::new(1);
        let y: Vec<f64> = (0..80).map(|_| rng.normal()).collect();
        let shifted: Vec<f64> = y.iter().enumerate().map(|(c, v)| v + if c % 2 == 0 { 0.25 } else { -0.5 }).collect();
        let (a, b) = (trimap_loss(&y, &set).0, trimap_loss(&shifted, &set).0);
        assert!((a - b).abs() <= 1e-9 * a.abs());
    }

    #[test]
    fn per_triplet_loss_bounded_by_weight() {
        let set = fixture(40, 7);
        let mut rng = RandomSource::new(2);
        let y: Vec<f64> = (0..80).map(|_| rng.normal() * 5.0).collect();
        for (t, &w) in set.triplets.iter().zip(&set.weights) {
            let single = TripletSet {
                triplets: vec![*t],
                weights: vec![w],
            };
            let l = trimap_loss(&y, &single).0;
            assert!(l >= 0.0 && l <= w);
        }
    }
}
