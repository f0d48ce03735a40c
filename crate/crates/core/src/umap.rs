//! UMAP: fuzzy neighbor graph, output-kernel fitting and negative-sampling SGD.

use num_traits::Float;

use crate::config::EmbedderConfig;
use crate::data::{DataMatrix, Embedding};
use crate::embed::{neighbor_graph, EpochObserver};
use crate::error::{Error, Result};
use crate::knn::KnnGraph;
use crate::preprocess::{pca_layout, scale_to_std};
use crate::rng::RandomSource;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UmapInit {
    /// First two principal coordinates scaled to standard deviation 0.1.
    Pca,
    /// Uniform in `[-10, 10]^2`.
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UmapParams {
    pub min_dist: f32,
    pub spread: f32,
    /// Output-kernel coefficients; fitted from `min_dist`/`spread` when unset.
    pub a: Option<f32>,
    pub b: Option<f32>,
    pub neg_samples: usize,
    pub initial_lr: f32,
    pub repulsion_strength: f32,
    pub init: UmapInit,
}

impl Default for UmapParams {
    fn default() -> Self {
        Self {
            min_dist: 0.1,
            spread: 1.0,
            a: None,
            b: None,
            neg_samples: 5,
            initial_lr: 1.0,
            repulsion_strength: 1.0,
            init: UmapInit::Pca,
        }
    }
}

/// Symmetric weighted graph with membership strengths in `(0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyGraph {
    pub n: usize,
    /// Both orientations of every edge, sorted by `(i, j)`.
    pub edges: Vec<(u32, u32, f32)>,
    pub rho: Vec<f32>,
    pub sigma: Vec<f32>,
}

const BANDWIDTH_TOL: f64 = 1e-5;
const BANDWIDTH_ITERS: usize = 64;
const MIN_BANDWIDTH_SCALE: f64 = 1e-3;

/// Solves `sum_j exp(-max(0, d_j - rho) / sigma) = target` by bisection.
/// Returns `(rho, sigma)` with sigma floored at `floor`.
pub fn calibrate_row(dists: &[f64], target: f64, floor: f64) -> (f64, f64) {
    let rho = dists
        .iter()
        .copied()
        .filter(|&d| d > 0.0)
        .fold(f64::INFINITY, f64::min);
    let rho = if rho.is_finite() { rho } else { 0.0 };
    let (mut lo, mut hi, mut mid) = (0.0f64, f64::INFINITY, 1.0f64);
    for _ in 0..BANDWIDTH_ITERS {
        let psum: f64 = dists
            .iter()
            .map(|&d| (-(d - rho).max(0.0) / mid).exp())
            .sum();
        if (psum - target).abs() < BANDWIDTH_TOL * target {
            break;
        }
        if psum > target {
            hi = mid;
            mid = (lo + hi) / 2.0;
        } else {
            lo = mid;
            mid = if hi.is_infinite() { mid * 2.0 } else { (lo + hi) / 2.0 };
        }
    }
    (rho, mid.max(floor))
}

/// Per-point `rho` (nearest positive neighbor distance) and bandwidth `sigma`
/// such that the smoothed membership sum equals `target`.
///
/// `sigma` is floored at `1e-3` times the point's mean neighbor distance, or
/// the global mean when the point has no positive distances.
pub fn smooth_knn_calibrate(graph: &KnnGraph, target: f64) -> (Vec<f32>, Vec<f32>) {
    let global_mean = graph.mean_distance();
    let mut rho = Vec::with_capacity(graph.n());
    let mut sigma = Vec::with_capacity(graph.n());
    let mut dists = Vec::with_capacity(graph.k());
    for i in 0..graph.n() {
        dists.clear();
        dists.extend(graph.sq_distances(i).iter().map(|&d| (d as f64).sqrt()));
        let mean = dists.iter().sum::<f64>() / dists.len() as f64;
        let has_positive = dists.iter().any(|&d| d > 0.0);
        let floor = MIN_BANDWIDTH_SCALE * if has_positive { mean } else { global_mean };
        let (r, s) = calibrate_row(&dists, target, floor);
        rho.push(r as f32);
        sigma.push(s as f32);
    }
    (rho, sigma)
}

/// Fuzzy union of two directed memberships.
#[inline]
pub fn fuzzy_union(w_ji: f32, w_ij: f32) -> f32 {
    (1.0 - (1.0 - w_ji as f64) * (1.0 - w_ij as f64)) as f32
}

/// Directed memberships `exp(-max(0, d - rho_i) / sigma_i)` symmetrized by
/// fuzzy union. Edges whose weight underflows to zero are dropped.
pub fn build_fuzzy_graph(graph: &KnnGraph, rho: &[f32], sigma: &[f32]) -> FuzzyGraph {
    let n = graph.n();
    let mut directed: Vec<(u32, u32, f32)> = Vec::with_capacity(n * graph.k());
    for i in 0..n {
        for (&j, &d2) in graph.neighbors(i).iter().zip(graph.sq_distances(i)) {
            let d = (d2 as f64).sqrt() as f32;
            let w = (-((d - rho[i]).max(0.0) as f64) / sigma[i] as f64).exp() as f32;
            directed.push((i as u32, j, w));
        }
    }
    directed.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    let lookup = |i: u32, j: u32| -> f32 {
        directed
            .binary_search_by(|e| (e.0, e.1).cmp(&(i, j)))
            .map_or(0.0, |p| directed[p].2)
    };
    let mut edges: Vec<(u32, u32, f32)> = Vec::with_capacity(directed.len() * 2);
    for &(i, j, w) in &directed {
        let back = lookup(j, i);
        let u = fuzzy_union(w, back);
        if u > 0.0 {
            edges.push((i, j, u));
            if back == 0.0 {
                edges.push((j, i, u));
            }
        }
    }
    edges.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    edges.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1);
    FuzzyGraph {
        n,
        edges,
        rho: rho.to_vec(),
        sigma: sigma.to_vec(),
    }
}

/// Output kernel `1 / (1 + a d^(2b))`.
#[inline]
pub fn kernel<F: Float>(d: F, a: F, b: F) -> F {
    F::one() / (F::one() + a * d.powf(b + b))
}

const FIT_GRID: usize = 300;
const FIT_ITERS: usize = 100;
const FIT_STEP_TOL: f64 = 1e-8;

fn fit_target(d: f64, min_dist: f64, spread: f64) -> f64 {
    if d <= min_dist {
        1.0
    } else {
        (-(d - min_dist) / spread).exp()
    }
}

/// Grid on `(0, 3 * spread]` used for the kernel fit.
pub fn fit_grid(spread: f32) -> Vec<f64> {
    let spread = spread as f64;
    (1..=FIT_GRID)
        .map(|m| 3.0 * spread * m as f64 / FIT_GRID as f64)
        .collect()
}

/// Least-squares fit of the output kernel to the piecewise target curve by
/// Gauss–Newton on `(ln a, b)`, starting from `a = b = 1`. Steps that increase
/// the residual are halved.
pub fn fit_ab(min_dist: f32, spread: f32) -> Result<(f32, f32)> {
    if !(min_dist >= 0.0 && spread > 0.0) {
        return Err(Error::InvalidParam(format!(
            "min_dist = {min_dist}, spread = {spread}"
        )));
    }
    let (md, sp) = (min_dist as f64, spread as f64);
    let grid = fit_grid(spread);
    let target: Vec<f64> = grid.iter().map(|&d| fit_target(d, md, sp)).collect();
    let sse = |la: f64, b: f64| -> f64 {
        grid.iter()
            .zip(&target)
            .map(|(&d, &t)| (kernel(d, la.exp(), b) - t).powi(2))
            .sum()
    };

    let (mut la, mut b) = (0.0f64, 1.0f64);
    let mut cost = sse(la, b);
    for _ in 0..FIT_ITERS {
        let a = la.exp();
        let (mut jtj, mut jtr) = ([[0.0f64; 2]; 2], [0.0f64; 2]);
        for (&d, &t) in grid.iter().zip(&target) {
            let p = a * d.powf(2.0 * b);
            let phi = 1.0 / (1.0 + p);
            let r = phi - t;
            let g = -phi * phi * p;
            let jac = [g, g * 2.0 * d.ln()];
            for u in 0..2 {
                jtr[u] += jac[u] * r;
                for v in 0..2 {
                    jtj[u][v] += jac[u] * jac[v];
                }
            }
        }
        let det = jtj[0][0] * jtj[1][1] - jtj[0][1] * jtj[1][0];
        if det.abs() < 1e-300 {
            break;
        }
        let step = [
            -(jtj[1][1] * jtr[0] - jtj[0][1] * jtr[1]) / det,
            -(jtj[0][0] * jtr[1] - jtj[1][0] * jtr[0]) / det,
        ];
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let (nla, nb) = (la + scale * step[0], b + scale * step[1]);
            let c = sse(nla, nb);
            if nb > 0.0 && c <= cost {
                la = nla;
                b = nb;
                cost = c;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        let moved = scale * (step[0].powi(2) + step[1].powi(2)).sqrt();
        if !accepted || moved < FIT_STEP_TOL {
            return Ok((la.exp() as f32, b as f32));
        }
    }
    Err(Error::NoConvergence("output kernel fit".into()))
}

/// `d/dy_i log Phi(|y_i - y_j|^2) = coeff * (y_i - y_j)`.
#[inline]
pub fn attract_coeff<F: Float>(d2: F, a: F, b: F) -> F {
    if d2 <= F::zero() {
        return F::zero();
    }
    let two = F::one() + F::one();
    -two * a * b * d2.powf(b - F::one()) / (a * d2.powf(b) + F::one())
}

/// `d/dy_i log(1 - Phi(|y_i - y_k|^2)) = coeff * (y_i - y_k)` with `guard`
/// added to the squared distance in the denominator.
#[inline]
pub fn repel_coeff<F: Float>(d2: F, a: F, b: F, guard: F) -> F {
    let two = F::one() + F::one();
    two * b / ((guard + d2) * (a * d2.powf(b) + F::one()))
}

const REPULSION_GUARD: f32 = 1e-3;
const GRAD_CLIP: f32 = 4.0;

#[inline]
fn clip(v: f32) -> f32 {
    v.clamp(-GRAD_CLIP, GRAD_CLIP)
}

/// Which forces the optimizer applies; tests switch attraction off.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Forces {
    pub attract: bool,
    pub repel: bool,
}

/// Negative-sampling SGD on the fuzzy graph, starting from `init`.
pub fn optimize(
    graph: &FuzzyGraph,
    params: &UmapParams,
    init: Embedding,
    epochs: usize,
    rng: &mut RandomSource,
    observer: &mut EpochObserver,
) -> Result<Embedding> {
    let forces = Forces {
        attract: true,
        repel: true,
    };
    optimize_with(graph, params, init, epochs, rng, observer, forces)
}

pub(crate) fn optimize_with(
    graph: &FuzzyGraph,
    params: &UmapParams,
    init: Embedding,
    epochs: usize,
    rng: &mut RandomSource,
    observer: &mut EpochObserver,
    forces: Forces,
) -> Result<Embedding> {
    if init.rows() != graph.n {
        return Err(Error::Shape(format!(
            "init has {} rows, graph has {}",
            init.rows(),
            graph.n
        )));
    }
    let (a, b) = match (params.a, params.b) {
        (Some(a), Some(b)) => (a, b),
        _ => fit_ab(params.min_dist, params.spread)?,
    };
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::InvalidParam(format!("kernel a = {a}, b = {b}")));
    }
    let n = graph.n;
    let mut y = init;
    let w_max = graph.edges.iter().map(|e| e.2).fold(0.0f32, f32::max);
    let neg = params.neg_samples.max(1) as f64;
    let per_sample: Vec<f64> = graph
        .edges
        .iter()
        .map(|e| w_max as f64 / e.2 as f64)
        .collect();
    let per_negative: Vec<f64> = per_sample.iter().map(|&e| e / neg).collect();
    let mut next_sample = per_sample.clone();
    let mut next_negative = per_negative.clone();
    let gamma = params.repulsion_strength;

    for epoch in 0..epochs {
        let alpha = params.initial_lr * (1.0 - epoch as f32 / epochs as f32);
        let now = (epoch + 1) as f64;
        let pos = y.values_mut();
        for (e, &(i, j, _)) in graph.edges.iter().enumerate() {
            if next_sample[e] > now {
                continue;
            }
            let (i, j) = (i as usize, j as usize);
            if forces.attract {
                let diff = [pos[2 * i] - pos[2 * j], pos[2 * i + 1] - pos[2 * j + 1]];
                let d2 = diff[0] * diff[0] + diff[1] * diff[1];
                let c = attract_coeff(d2, a, b);
                for t in 0..2 {
                    let g = clip(c * diff[t]) * alpha;
                    pos[2 * i + t] += g;
                    pos[2 * j + t] -= g;
                }
            }
            next_sample[e] += per_sample[e];

            let n_neg = ((now - next_negative[e]) / per_negative[e]).max(0.0) as usize;
            for _ in 0..n_neg {
                let k = rng.below(n);
                if !forces.repel || k == i {
                    continue;
                }
                let diff = [pos[2 * i] - pos[2 * k], pos[2 * i + 1] - pos[2 * k + 1]];
                let d2 = diff[0] * diff[0] + diff[1] * diff[1];
                for t in 0..2 {
                    let g = if d2 > 0.0 {
                        clip(gamma * repel_coeff(d2, a, b, REPULSION_GUARD) * diff[t])
                    } else {
                        GRAD_CLIP
                    };
                    pos[2 * i + t] += g * alpha;
                }
            }
            next_negative[e] += n_neg as f64 * per_negative[e];
        }
        observer.notify(epoch, &y);
    }
    Ok(y)
}

/// Initial layout for UMAP.
pub fn initial_layout(x: &DataMatrix, init: UmapInit, rng: &mut RandomSource) -> Result<Embedding> {
    match init {
        UmapInit::Pca => {
            let mut e = pca_layout(x, rng)?;
            scale_to_std(&mut e, 0.1);
            Ok(e)
        }
        UmapInit::Random => {
            let values = (0..x.rows() * 2).map(|_| rng.range_f32(-10.0, 10.0)).collect();
            Embedding::new(x.rows(), values)
        }
    }
}

pub fn fit(
    x: &DataMatrix,
    cfg: &EmbedderConfig,
    rng: &mut RandomSource,
    observer: &mut EpochObserver,
) -> Result<Embedding> {
    let params = &cfg.params.umap;
    let k = cfg.n_neighbors;
    let graph = neighbor_graph(x, k, cfg, rng)?;
    let (rho, sigma) = smooth_knn_calibrate(&graph, (k as f64).log2());
    let fuzzy = build_fuzzy_graph(&graph, &rho, &sigma);
    let init = initial_layout(x, params.init, rng)?;
    optimize(&fuzzy, params, init, cfg.epochs, rng, observer)
}
