//! t-SNE with exact repulsion, and DREAMS, which adds an annealed pull
//! towards the PCA layout.

use num_traits::Float;

use crate::config::EmbedderConfig;
use crate::data::{DataMatrix, Embedding};
use crate::embed::{neighbor_graph, EpochObserver};
use crate::error::{Error, Result};
use crate::knn::KnnGraph;
use crate::parallel::map_indices;
use crate::preprocess::{pca_layout, standardize_axes};
use crate::rng::RandomSource;

#[derive(Debug, Clone, PartialEq)]
pub struct TsneParams {
    pub perplexity: f64,
    pub exaggeration: f64,
    pub exaggeration_epochs: usize,
    pub momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch: usize,
    /// `n / 12` when unset.
    pub learning_rate: Option<f64>,
}

impl Default for TsneParams {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            exaggeration: 12.0,
            exaggeration_epochs: 250,
            momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch: 250,
            learning_rate: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DreamsParams {
    /// Initial regularization weight, annealed linearly to zero.
    pub lambda0: f64,
}

impl Default for DreamsParams {
    fn default() -> Self {
        Self { lambda0: 0.1 }
    }
}

impl DreamsParams {
    pub fn lambda(&self, epoch: usize, epochs: usize) -> f64 {
        self.lambda0 * (1.0 - epoch as f64 / epochs as f64)
    }
}

/// Symmetric sparse joint probabilities in CSR layout.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f32>,
}

impl AffinityMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f32]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f32 {
        let (c, v) = self.row(i);
        c.binary_search(&(j as u32)).map_or(0.0, |p| v[p])
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn sum(&self) -> f64 {
        self.vals.iter().map(|&v| v as f64).sum()
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f32)> + '_ {
        (0..self.n).flat_map(move |i| {
            let (c, v) = self.row(i);
            c.iter().zip(v).map(move |(&j, &p)| (i, j as usize, p))
        })
    }
}

const ENTROPY_TOL: f64 = 1e-5;
const PRECISION_ITERS: usize = 64;

/// Conditional distribution `p_j ∝ exp(-beta d2_j)` whose Shannon entropy
/// (natural log) equals `ln(perplexity)`. Returns the probabilities and beta.
pub fn conditional_row(sq_dists: &[f64], perplexity: f64) -> (Vec<f64>, f64) {
    let target = perplexity.ln();
    let d_min = sq_dists.iter().copied().fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = sq_dists.iter().map(|&d| d - d_min).collect();
    let mut p = vec![0.0; shifted.len()];
    let (mut lo, mut hi, mut beta) = (0.0f64, f64::INFINITY, 1.0f64);
    for _ in 0..PRECISION_ITERS {
        let mut sum = 0.0;
        let mut weighted = 0.0;
        for (pj, &d) in p.iter_mut().zip(&shifted) {
            *pj = (-beta * d).exp();
            sum += *pj;
            weighted += d * *pj;
        }
        let entropy = sum.ln() + beta * weighted / sum;
        p.iter_mut().for_each(|v| *v /= sum);
        let diff = entropy - target;
        if diff.abs() < ENTROPY_TOL {
            break;
        }
        if diff > 0.0 {
            lo = beta;
            beta = if hi.is_infinite() { beta * 2.0 } else { (lo + hi) / 2.0 };
        } else {
            hi = beta;
            beta = (lo + hi) / 2.0;
        }
    }
    (p, beta)
}

/// Shannon entropy in nats.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}

/// Per-row perplexity calibration over the k-NN support, then
/// `P = (P_cond + P_cond^T) / (2n)`.
pub fn calibrate_perplexity(graph: &KnnGraph, perplexity: f64) -> Result<AffinityMatrix> {
    let n = graph.n();
    if !(perplexity > 0.0 && perplexity < n as f64) {
        return Err(Error::InvalidParam(format!(
            "perplexity {perplexity} must be in (0, {n})"
        )));
    }
    let mut triples: Vec<(u32, u32, f64)> = Vec::with_capacity(2 * n * graph.k());
    for i in 0..n {
        let d: Vec<f64> = graph.sq_distances(i).iter().map(|&v| v as f64).collect();
        let (p, _) = conditional_row(&d, perplexity);
        for (&j, &pj) in graph.neighbors(i).iter().zip(&p) {
            triples.push((i as u32, j, pj));
            triples.push((j, i as u32, pj));
        }
    }
    triples.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    let norm = 2.0 * n as f64;
    let mut row_ptr = vec![0usize; n + 1];
    let mut cols = Vec::with_capacity(triples.len());
    let mut vals = Vec::with_capacity(triples.len());
    let mut t = 0;
    while t < triples.len() {
        let (i, j, mut v) = triples[t];
        t += 1;
        // at most two contributions per cell: one from each endpoint's row
        while t < triples.len() && triples[t].0 == i && triples[t].1 == j {
            v += triples[t].2;
            t += 1;
        }
        cols.push(j);
        vals.push((v / norm) as f32);
        row_ptr[i as usize + 1] += 1;
    }
    for i in 0..n {
        row_ptr[i + 1] += row_ptr[i];
    }
    Ok(AffinityMatrix {
        n,
        row_ptr,
        cols,
        vals,
    })
}

/// Student-t similarity `(1 + d2)^-1`.
#[inline]
pub fn student_t<F: Float>(d2: F) -> F {
    F::one() / (F::one() + d2)
}

/// Gradient of `KL(P || Q)` with attractive terms scaled by `exaggeration`:
/// `4 sum_j (a p_ij - q_ij) (1 + |y_i - y_j|^2)^-1 (y_i - y_j)`, with the exact
/// O(n^2) normalizer.
pub fn kl_gradient(y: &[f64], p: &AffinityMatrix, exaggeration: f64, sequential: bool) -> Vec<f64> {
    let n = p.n();
    let rows: Vec<(f64, [f64; 2], [f64; 2])> = map_indices(n, sequential, |i| {
        let (xi, yi) = (y[2 * i], y[2 * i + 1]);
        let mut z = 0.0;
        let mut rep = [0.0; 2];
        for j in 0..n {
            if j == i {
                continue;
            }
            let (dx, dy) = (xi - y[2 * j], yi - y[2 * j + 1]);
            let w = student_t(dx * dx + dy * dy);
            z += w;
            rep[0] += w * w * dx;
            rep[1] += w * w * dy;
        }
        let mut attr = [0.0; 2];
        let (cols, vals) = p.row(i);
        for (&j, &pij) in cols.iter().zip(vals) {
            let j = j as usize;
            let (dx, dy) = (xi - y[2 * j], yi - y[2 * j + 1]);
            let w = student_t(dx * dx + dy * dy) * pij as f64;
            attr[0] += w * dx;
            attr[1] += w * dy;
        }
        (z, rep, attr)
    });
    let z: f64 = rows.iter().map(|r| r.0).sum();
    let mut grad = Vec::with_capacity(2 * n);
    for (_, rep, attr) in &rows {
        for t in 0..2 {
            grad.push(4.0 * (exaggeration * attr[t] - rep[t] / z));
        }
    }
    grad
}

/// `KL(P || Q)` with the exact normalizer.
pub fn kl_divergence(y: &[f64], p: &AffinityMatrix, sequential: bool) -> f64 {
    let n = p.n();
    let z: f64 = map_indices(n, sequential, |i| {
        (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let (dx, dy) = (y[2 * i] - y[2 * j], y[2 * i + 1] - y[2 * j + 1]);
                student_t(dx * dx + dy * dy)
            })
            .sum::<f64>()
    })
    .iter()
    .sum();
    p.entries()
        .filter(|e| e.2 > 0.0)
        .map(|(i, j, pij)| {
            let (dx, dy) = (y[2 * i] - y[2 * j], y[2 * i + 1] - y[2 * j + 1]);
            let q = student_t(dx * dx + dy * dy) / z;
            pij as f64 * (pij as f64 / q).ln()
        })
        .sum()
}

/// Gradient of `lambda |Y - Y_pca|^2 / n`.
pub fn dreams_reg_gradient(y: &[f64], y_pca: &[f64], lambda: f64) -> Vec<f64> {
    let n = (y.len() / 2) as f64;
    y.iter()
        .zip(y_pca)
        .map(|(&a, &b)| 2.0 * lambda / n * (a - b))
        .collect()
}

/// Momentum and per-coordinate gains carried between steps.
#[derive(Debug, Clone)]
pub struct TsneState {
    pub update: Vec<f64>,
    pub gains: Vec<f64>,
}

impl TsneState {
    pub fn new(n: usize) -> Self {
        Self {
            update: vec![0.0; 2 * n],
            gains: vec![1.0; 2 * n],
        }
    }
}

const GAIN_FLOOR: f64 = 0.01;

#[inline]
pub(crate) fn adapt_gain(gain: f64, grad: f64, update: f64) -> f64 {
    let g = if grad * update < 0.0 { gain + 0.2 } else { gain * 0.8 };
    g.max(GAIN_FLOOR)
}

pub(crate) fn recenter(y: &mut [f64]) {
    let n = (y.len() / 2) as f64;
    for t in 0..2 {
        let mean = y.iter().skip(t).step_by(2).sum::<f64>() / n;
        y.iter_mut().skip(t).step_by(2).for_each(|v| *v -= mean);
    }
}

fn learning_rate(params: &TsneParams, n: usize) -> f64 {
    params.learning_rate.unwrap_or(n as f64 / 12.0)
}

/// One t-SNE step: exaggerated KL gradient, momentum with adaptive gains, then
/// recentering.
pub fn tsne_step(
    y: &mut [f64],
    p: &AffinityMatrix,
    epoch: usize,
    params: &TsneParams,
    state: &mut TsneState,
    sequential: bool,
) {
    step(y, p, None, epoch, params, state, sequential)
}

/// One DREAMS step. The PCA pull `lambda(t) (2/n) (Y - Y_pca)` enters the gain
/// adaptation like any other gradient term but is integrated implicitly, so
/// arbitrarily large weights stay stable. With zero weight it is exactly
/// [`tsne_step`].
#[allow(clippy::too_many_arguments)]
pub fn dreams_step(
    y: &mut [f64],
    p: &AffinityMatrix,
    y_pca: &[f64],
    epoch: usize,
    epochs: usize,
    params: &TsneParams,
    dreams: &DreamsParams,
    state: &mut TsneState,
    sequential: bool,
) {
    let lambda = dreams.lambda(epoch, epochs);
    let reg = (lambda != 0.0).then_some((y_pca, lambda));
    step(y, p, reg, epoch, params, state, sequential)
}

fn step(
    y: &mut [f64],
    p: &AffinityMatrix,
    reg: Option<(&[f64], f64)>,
    epoch: usize,
    params: &TsneParams,
    state: &mut TsneState,
    sequential: bool,
) {
    let n = p.n();
    let exaggeration = if epoch < params.exaggeration_epochs {
        params.exaggeration
    } else {
        1.0
    };
    let momentum = if epoch < params.momentum_switch {
        params.momentum
    } else {
        params.final_momentum
    };
    let lr = learning_rate(params, n);
    let grad = kl_gradient(y, p, exaggeration, sequential);
    match reg {
        None => {
            for c in 0..2 * n {
                state.gains[c] = adapt_gain(state.gains[c], grad[c], state.update[c]);
                state.update[c] = momentum * state.update[c] - lr * state.gains[c] * grad[c];
                y[c] += state.update[c];
            }
        }
        Some((y_pca, lambda)) => {
            let pull = 2.0 * lambda / n as f64;
            for c in 0..2 * n {
                let total = grad[c] + pull * (y[c] - y_pca[c]);
                state.gains[c] = adapt_gain(state.gains[c], total, state.update[c]);
                let eta = lr * state.gains[c];
                let explicit = y[c] + momentum * state.update[c] - eta * grad[c];
                let next = (explicit + eta * pull * y_pca[c]) / (1.0 + eta * pull);
                state.update[c] = next - y[c];
                y[c] = next;
            }
        }
    }
    recenter(y);
}

pub(crate) fn to_embedding(y: &[f64]) -> Embedding {
    Embedding::new(y.len() / 2, y.iter().map(|&v| v as f32).collect()).expect("even length")
}

/// PCA layout standardized to unit variance per axis; both the t-SNE/DREAMS
/// initialization and the DREAMS anchor.
pub fn pca_anchor(x: &DataMatrix, rng: &mut RandomSource) -> Result<Vec<f64>> {
    let mut e = pca_layout(x, rng)?;
    standardize_axes(&mut e, 1.0);
    Ok(e.values().iter().map(|&v| v as f64).collect())
}

/// Support size for a given perplexity: `min(n - 1, 3 * perplexity)`.
pub fn support_size(n: usize, perplexity: f64) -> usize {
    ((3.0 * perplexity).floor() as usize).clamp(1, n - 1)
}

fn run(
    x: &DataMatrix,
    cfg: &EmbedderConfig,
    dreams: Option<&DreamsParams>,
    rng: &mut RandomSource,
    observer: &mut EpochObserver,
) -> Result<Embedding> {
    let params = &cfg.params.tsne;
    let n = x.rows();
    if !(params.perplexity > 0.0 && params.perplexity < n as f64) {
        return Err(Error::InvalidParam(format!(
            "perplexity {} must be in (0, {n})",
            params.perplexity
        )));
    }
    let graph = neighbor_graph(x, support_size(n, params.perplexity), cfg, rng)?;
    let p = calibrate_perplexity(&graph, params.perplexity)?;
    let anchor = pca_anchor(x, rng)?;
    let mut y = anchor.clone();
    let mut state = TsneState::new(n);
    for epoch in 0..cfg.epochs {
        match dreams {
            None => tsne_step(&mut y, &p, epoch, params, &mut state, cfg.sequential),
            Some(d) => dreams_step(
                &mut y,
                &p,
                &anchor,
                epoch,
                cfg.epochs,
                params,
                d,
                &mut state,
                cfg.sequential,
            ),
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
    run(x, cfg, None, rng, observer)
}

pub fn fit_dreams(
    x: &DataMatrix,
    cfg: &EmbedderConfig,
    rng: &mut RandomSource,
    observer: &mut EpochObserver,
) -> Result<Embedding> {
    run(x, cfg, Some(&cfg.params.dreams), rng, observer)
}
