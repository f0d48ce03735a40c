//! PaCMAP: near, mid-near and far pairs optimized in three weighted phases,
//! and LocalMAP, which periodically re-picks the near pairs in phase 3.

use std::collections::HashSet;

use crate::config::EmbedderConfig;
use crate::data::{DataMatrix, Embedding};
use crate::embed::{neighbor_graph, EpochObserver};
use crate::error::{Error, Result};
use crate::knn::{dist_order, sq_dist, KnnGraph};
use crate::optim::Adam;
use crate::parallel::map_indices;
use crate::preprocess::pca_layout;
use crate::rng::RandomSource;
use crate::tsne::to_embedding;

#[derive(Debug, Clone, PartialEq)]
pub struct PacmapParams {
    pub n_near: usize,
    pub n_mid: usize,
    pub n_far: usize,
    /// Extra graph neighbors searched beyond `n_near` before rescaling.
    pub n_extra: usize,
    /// Phase lengths; when unset they follow a 20/20/60 split of the epochs.
    pub phase_iters: Option<(usize, usize, usize)>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub init_scale: f32,
}

impl Default for PacmapParams {
    fn default() -> Self {
        Self {
            n_near: 10,
            n_mid: 5,
            n_far: 20,
            n_extra: 50,
            phase_iters: None,
            lr: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-7,
            init_scale: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalmapParams {
    pub resample_every: usize,
    pub candidate_pool: usize,
}

impl Default for LocalmapParams {
    fn default() -> Self {
        Self {
            resample_every: 10,
            candidate_pool: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairSets {
    pub n: usize,
    /// `n_near` pairs per point, grouped by the first index.
    pub near: Vec<(u32, u32)>,
    pub n_near: usize,
    pub mid: Vec<(u32, u32)>,
    pub far: Vec<(u32, u32)>,
    /// Per-point distance scale used for the scaled distances.
    pub sigma: Vec<f32>,
}

const MIN_POINTS: usize = 8;
const SIGMA_FLOOR: f32 = 1e-10;
const MID_CANDIDATES: usize = 6;

/// Mean distance (not squared) to the neighbors ranked 4 to 6.
pub fn sigma_from_distances(dists: &[f32]) -> f32 {
    let hi = dists.len().min(6);
    let lo = 3.min(hi.saturating_sub(1));
    let s = &dists[lo..hi];
    (s.iter().sum::<f32>() / s.len() as f32).max(SIGMA_FLOOR)
}

pub(crate) fn sigmas(graph: &KnnGraph) -> Vec<f32> {
    (0..graph.n())
        .map(|i| {
            let d: Vec<f32> = graph.sq_distances(i).iter().map(|v| v.sqrt()).collect();
            sigma_from_distances(&d)
        })
        .collect()
}

#[inline]
pub(crate) fn scaled(d2: f32, si: f32, sj: f32) -> f32 {
    d2 / (si * sj)
}

/// Distinct uniform draws from `0..n`, skipping `exclude`, when at least
/// `count` eligible points exist; otherwise draws with repetition.
fn sample_excluding(
    n: usize,
    count: usize,
    eligible: usize,
    rng: &mut RandomSource,
    exclude: impl Fn(usize) -> bool,
) -> Vec<usize> {
    let mut out = Vec::with_capacity(count);
    if eligible == 0 {
        return out;
    }
    let distinct = eligible >= count;
    while out.len() < count {
        let j = rng.below(n);
        if exclude(j) || (distinct && out.contains(&j)) {
            continue;
        }
        out.push(j);
    }
    out
}

/// Near pairs by scaled distance among the graph neighbors, mid-near pairs
/// (second closest of six random points, five times per point) and uniform far
/// pairs that are not near pairs in either direction.
pub fn sample_pairs(
    x: &DataMatrix,
    graph: &KnnGraph,
    params: &PacmapParams,
    rng: &mut RandomSource,
) -> Result<PairSets> {
    let n = x.rows();
    if n < MIN_POINTS {
        return Err(Error::InvalidParam(format!(
            "pair sampling needs at least {MIN_POINTS} points, got {n}"
        )));
    }
    let sigma = sigmas(graph);
    let n_near = params.n_near.min(graph.k());
    let mut near = Vec::with_capacity(n * n_near);
    for i in 0..n {
        let mut cand: Vec<(f32, u32)> = graph
            .neighbors(i)
            .iter()
            .zip(graph.sq_distances(i))
            .map(|(&j, &d2)| (scaled(d2, sigma[i], sigma[j as usize]), j))
            .collect();
        cand.sort_by(dist_order);
        near.extend(cand[..n_near].iter().map(|&(_, j)| (i as u32, j)));
    }

    let mut mid = Vec::with_capacity(n * params.n_mid);
    for i in 0..n {
        for _ in 0..params.n_mid {
            let picks = sample_excluding(n, MID_CANDIDATES, n - 1, rng, |j| j == i);
            let mut d: Vec<(f32, u32)> = picks
                .iter()
                .map(|&j| (sq_dist(x.row(i), x.row(j)), j as u32))
                .collect();
            d.sort_by(dist_order);
            mid.push((i as u32, d[1].1));
        }
    }

    let near_set: HashSet<(u32, u32)> = near.iter().copied().collect();
    let mut far = Vec::with_capacity(n * params.n_far);
    for i in 0..n {
        let iu = i as u32;
        let blocked = |j: usize| {
            j == i || near_set.contains(&(iu, j as u32)) || near_set.contains(&(j as u32, iu))
        };
        let eligible = (0..n).filter(|&j| !blocked(j)).count();
        for j in sample_excluding(n, params.n_far, eligible, rng, blocked) {
            far.push((iu, j as u32));
        }
    }
    Ok(PairSets {
        n,
        near,
        n_near,
        mid,
        far,
        sigma,
    })
}

/// Pair-type weights `(w_near, w_mid, w_far)` for an epoch.
pub fn phase_weights(epoch: usize, phases: (usize, usize, usize)) -> (f64, f64, f64) {
    let (p1, p2, _) = phases;
    if epoch < p1 {
        let t = epoch as f64 / p1 as f64;
        (2.0, (1.0 - t) * 1000.0 + t * 3.0, 1.0)
    } else if epoch < p1 + p2 {
        (3.0, 3.0, 1.0)
    } else {
        (1.0, 0.0, 1.0)
    }
}

/// Phase lengths for a run of `epochs` epochs.
pub fn phase_lengths(params: &PacmapParams, epochs: usize) -> Result<(usize, usize, usize)> {
    if let Some((a, b, c)) = params.phase_iters {
        if a == 0 || b == 0 || c == 0 || a + b + c != epochs {
            return Err(Error::InvalidParam(format!(
                "phase lengths ({a}, {b}, {c}) must be positive and sum to {epochs}"
            )));
        }
        return Ok((a, b, c));
    }
    if epochs < 3 {
        return Err(Error::InvalidParam(format!(
            "three optimization phases need at least 3 epochs, got {epochs}"
        )));
    }
    let a = ((epochs as f64 * 0.2).round() as usize).max(1);
    let b = ((epochs as f64 * 0.2).round() as usize).max(1);
    let a = a.min(epochs - 2);
    let b = b.min(epochs - a - 1);
    Ok((a, b, epochs - a - b))
}

#[inline]
fn pair_terms(y: &[f64], i: usize, j: usize) -> (f64, [f64; 2]) {
    let diff = [y[2 * i] - y[2 * j], y[2 * i + 1] - y[2 * j + 1]];
    (diff[0] * diff[0] + diff[1] * diff[1] + 1.0, diff)
}

fn accumulate(grad: &mut [f64], i: usize, j: usize, coeff: f64, diff: [f64; 2]) {
    for t in 0..2 {
        let g = coeff * diff[t];
        grad[2 * i + t] += g;
        grad[2 * j + t] -= g;
    }
}

/// Total loss and gradient for the weighted pair sets, with
/// `d = |y_i - y_j|^2 + 1`: near `w d / (10 + d)`, mid `w d / (10000 + d)`,
/// far `w / (1 + d)`.
pub fn pacmap_losses(y: &[f64], pairs: &PairSets, weights: (f64, f64, f64)) -> (f64, Vec<f64>) {
    let (w_nb, w_mn, w_fp) = weights;
    let mut grad = vec![0.0; y.len()];
    let mut loss = 0.0;
    for &(i, j) in &pairs.near {
        let (i, j) = (i as usize, j as usize);
        let (d, diff) = pair_terms(y, i, j);
        loss += w_nb * d / (10.0 + d);
        accumulate(&mut grad, i, j, w_nb * 20.0 / ((10.0 + d) * (10.0 + d)), diff);
    }
    if w_mn != 0.0 {
        for &(i, j) in &pairs.mid {
            let (i, j) = (i as usize, j as usize);
            let (d, diff) = pair_terms(y, i, j);
            loss += w_mn * d / (10000.0 + d);
            accumulate(&mut grad, i, j, w_mn * 20000.0 / ((10000.0 + d) * (10000.0 + d)), diff);
        }
    }
    for &(i, j) in &pairs.far {
        let (i, j) = (i as usize, j as usize);
        let (d, diff) = pair_terms(y, i, j);
        loss += w_fp / (1.0 + d);
        accumulate(&mut grad, i, j, -w_fp * 2.0 / ((1.0 + d) * (1.0 + d)), diff);
    }
    (loss, grad)
}

/// Replaces every point's near pairs: the `candidate_pool` points closest in
/// the current layout (full sort, lower index first on ties) are ranked by
/// scaled input-space distance and the best `n_near` kept.
pub fn localmap_resample(
    y: &[f64],
    x: &DataMatrix,
    pairs: &PairSets,
    params: &LocalmapParams,
    sequential: bool,
) -> PairSets {
    let n = pairs.n;
    let pool = params.candidate_pool.clamp(1, n - 1);
    let keep = pairs.n_near.min(pool);
    let sigma = &pairs.sigma;
    let rows: Vec<Vec<(u32, u32)>> = map_indices(n, sequential, |i| {
        let mut order: Vec<(f64, u32)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let (dx, dy) = (y[2 * i] - y[2 * j], y[2 * i + 1] - y[2 * j + 1]);
                (dx * dx + dy * dy, j as u32)
            })
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut cand: Vec<(f32, u32)> = order[..pool]
            .iter()
            .map(|&(_, j)| {
                let ju = j as usize;
                (scaled(sq_dist(x.row(i), x.row(ju)), sigma[i], sigma[ju]), j)
            })
            .collect();
        cand.sort_by(dist_order);
        cand[..keep].iter().map(|&(_, j)| (i as u32, j)).collect()
    });
    PairSets {
        near: rows.into_iter().flatten().collect(),
        n_near: keep,
        ..pairs.clone()
    }
}

/// Initial layout: first two principal coordinates times `scale`.
pub fn scaled_pca_init(x: &DataMatrix, scale: f32, rng: &mut RandomSource) -> Result<Vec<f64>> {
    let e = pca_layout(x, rng)?;
    Ok(e.values().iter().map(|&v| (v * scale) as f64).collect())
}

/// Runs the three-phase optimization from `y`. With `local` set, near pairs
/// are re-picked in phase 3 every `resample_every` epochs.
#[allow(clippy::too_many_arguments)]
pub fn optimize(
    x: &DataMatrix,
    mut pairs: PairSets,
    mut y: Vec<f64>,
    params: &PacmapParams,
    local: Option<&LocalmapParams>,
    epochs: usize,
    sequential: bool,
    observer: &mut EpochObserver,
    mut on_loss: impl FnMut(usize, f64),
) -> Result<Embedding> {
    let phases = phase_lengths(params, epochs)?;
    if let Some(l) = local {
        if l.resample_every == 0 {
            return Err(Error::InvalidParam("resample_every must be >= 1".into()));
        }
    }
    let mut adam = Adam::new(y.len(), params.lr, params.beta1, params.beta2, params.eps);
    for epoch in 0..epochs {
        if let Some(l) = local {
            if epoch >= phases.0 + phases.1 && epoch % l.resample_every == 0 {
                pairs = localmap_resample(&y, x, &pairs, l, sequential);
            }
        }
        let (loss, grad) = pacmap_losses(&y, &pairs, phase_weights(epoch, phases));
        on_loss(epoch, loss);
        adam.step(&mut y, &grad);
        if observer.is_active() {
            observer.notify(epoch, &to_embedding(&y));
        }
    }
    Ok(to_embedding(&y))
}

fn run(
    x: &DataMatrix,
    cfg: &EmbedderConfig,
    local: Option<&LocalmapParams>,
    rng: &mut RandomSource,
    observer: &mut EpochObserver,
) -> Result<Embedding> {
    let params = &cfg.params.pacmap;
    let n = x.rows();
    if n < MIN_POINTS {
        return Err(Error::InvalidParam(format!(
            "pair sampling needs at least {MIN_POINTS} points, got {n}"
        )));
    }
    let k = (params.n_near + params.n_extra).min(n - 1);
    let graph = neighbor_graph(x, k, cfg, rng)?;
    let pairs = sample_pairs(x, &graph, params, rng)?;
    let y = scaled_pca_init(x, params.init_scale, rng)?;
    optimize(x, pairs, y, params, local, cfg.epochs, cfg.sequential, observer, |_, _| {})
}

pub fn fit(
    x: &DataMatrix,
    cfg: &EmbedderConfig,
    rng: &mut RandomSource,
    observer: &mut EpochObserver,
) -> Result<Embedding> {
    run(x, cfg, None, rng, observer)
}

pub fn fit_localmap(
    x: &DataMatrix,
    cfg: &EmbedderConfig,
    rng: &mut RandomSource,
    observer: &mut EpochObserver,
) -> Result<Embedding> {
    run(x, cfg, Some(&cfg.params.localmap), rng, observer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knn::exact_knn;
    use crate::synthetic::gaussian_mixture;

    fn fixture(n: usize, seed: u64) -> (DataMatrix, PairSets) {
        let (x, _) = gaussian_mixture(n, 5, 3, 2.0, seed);
        let g = exact_knn(&x, 30.min(n - 1), true).unwrap();
        let mut rng = RandomSource::new(seed);
        let pairs = sample_pairs(&x, &g, &PacmapParams::default(), &mut rng).unwrap();
        (x, pairs)
    }

    #[test]
    fn sigma_of_ranks_four_to_six() {
        let d: Vec<f32> = (1..=10).map(|v| v as f32).collect();
        assert_eq!(sigma_from_distances(&d), 5.0);
    }

    #[test]
    fn pair_invariants() {
        for seed in 0..5 {
            let (_, p) = fixture(120, seed);
            let near: HashSet<(u32, u32)> = p.near.iter().copied().collect();
            assert_eq!(p.near.len(), 120 * 10);
            assert_eq!(p.mid.len(), 120 * 5);
            assert_eq!(p.far.len(), 120 * 20);
            for &(i, j) in p.near.iter().chain(&p.mid).chain(&p.far) {
                assert_ne!(i, j);
                assert!((i as usize) < 120 && (j as usize) < 120);
            }
            for &(i, j) in &p.far {
                assert!(!near.contains(&(i, j)) && !near.contains(&(j, i)));
            }
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        assert_eq!(fixture(100, 9).1, fixture(100, 9).1);
    }

    #[test]
    fn too_few_points() {
        let (x, _) = gaussian_mixture(7, 3, 1, 1.0, 0);
        let g = exact_knn(&x, 6, true).unwrap();
        let mut rng = RandomSource::new(0);
        assert!(sample_pairs(&x, &g, &PacmapParams::default(), &mut rng).is_err());
    }

    fn single(kind: usize) -> PairSets {
        let pair = vec![(0u32, 1u32)];
        PairSets {
            n: 2,
            near: if kind == 0 { pair.clone() } else { vec![] },
            n_near: 1,
            mid: if kind == 1 { pair.clone() } else { vec![] },
            far: if kind == 2 { pair } else { vec![] },
            sigma: vec![1.0; 2],
        }
    }

    #[test]
    fn coincident_pair_losses() {
        let y = [0.5, 0.5, 0.5, 0.5];
        let (l, _) = pacmap_losses(&y, &single(0), (1.0, 0.0, 0.0));
        assert!((l - 1.0 / 11.0).abs() < 1e-15);
        let (l, _) = pacmap_losses(&y, &single(2), (0.0, 0.0, 1.0));
        assert!((l - 0.5).abs() < 1e-15);
        let (l, _) = pacmap_losses(&y, &single(1), (0.0, 1.0, 0.0));
        assert!((l - 1.0 / 10001.0).abs() < 1e-15);
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let (_, pairs) = fixture(30, 4);
        let mut rng = RandomSource::new(11);
        let y: Vec<f64> = (0..60).map(|_| rng.normal() * 3.0).collect();
        for w in [(2.0, 501.5, 1.0), (3.0, 3.0, 1.0), (1.0, 0.0, 1.0)] {
            let (_, g) = pacmap_losses(&y, &pairs, w);
            for c in 0..60 {
                let h = 1e-6;
                let mut yp = y.clone();
                let mut ym = y.clone();
                yp[c] += h;
                ym[c] -= h;
                let fd = (pacmap_losses(&yp, &pairs, w).0 - pacmap_losses(&ym, &pairs, w).0) / (2.0 * h);
                let rel = (fd - g[c]).abs() / fd.abs().max(1e-6);
                assert!(rel < 1e-4, "{w:?} coord {c}: {} vs {fd}", g[c]);
            }
        }
    }

    #[test]
    fn weights_schedule() {
        let ph = (100, 100, 300);
        assert_eq!(phase_weights(0, ph), (2.0, 1000.0, 1.0));
        assert_eq!(phase_weights(50, ph), (2.0, 501.5, 1.0));
        assert_eq!(phase_weights(150, ph), (3.0, 3.0, 1.0));
        assert_eq!(phase_weights(400, ph), (1.0, 0.0, 1.0));
    }

    #[test]
    fn phase_lengths_scale() {
        let p = PacmapParams::default();
        assert_eq!(phase_lengths(&p, 500).unwrap(), (100, 100, 300));
        assert_eq!(phase_lengths(&p, 10).unwrap(), (2, 2, 6));
        assert_eq!(phase_lengths(&p, 3).unwrap(), (1, 1, 1));
        assert!(phase_lengths(&p, 2).is_err());
        let fixed = PacmapParams {
            phase_iters: Some((1, 2, 3)),
            ..p
        };
        assert!(phase_lengths(&fixed, 7).is_err());
    }

    #[test]
    fn full_pool_gives_scaled_knn() {
        let (x, pairs) = fixture(60, 2);
        let mut rng = RandomSource::new(3);
        let y: Vec<f64> = (0..120).map(|_| rng.normal()).collect();
        let params = LocalmapParams {
            resample_every: 1,
            candidate_pool: 59,
        };
        let out = localmap_resample(&y, &x, &pairs, &params, true);
        for i in 0..60 {
            let mut all: Vec<(f32, u32)> = (0..60)
                .filter(|&j| j != i)
                .map(|j| {
                    let d2 = sq_dist(x.row(i), x.row(j));
                    (d2 / (pairs.sigma[i] * pairs.sigma[j]), j as u32)
                })
                .collect();
            all.sort_by(dist_order);
            let want: Vec<(u32, u32)> = all[..10].iter().map(|&(_, j)| (i as u32, j)).collect();
            assert_eq!(&out.near[i * 10..(i + 1) * 10], &want[..]);
        }
        assert_eq!(out.mid, pairs.mid);
        assert_eq!(out.far, pairs.far);
    }

    #[test]
    fn layout_equal_to_input_is_a_fixed_point() {
        let (x, _) = gaussian_mixture(150, 2, 3, 2.0, 5);
        let g = exact_knn(&x, 60, true).unwrap();
        let mut rng = RandomSource::new(5);
        let pairs = sample_pairs(&x, &g, &PacmapParams::default(), &mut rng).unwrap();
        let y: Vec<f64> = x.values().iter().map(|&v| v as f64).collect();
        let params = LocalmapParams {
            resample_every: 1,
            candidate_pool: 60,
        };
        let out = localmap_resample(&y, &x, &pairs, &params, true);
        assert_eq!(out.near, pairs.near);
    }
}
