//! Contrastive neighbor embedding: k-NN edges as positives, uniform random
//! negatives, Cauchy similarity, and a pluggable contrastive loss.

use std::str::FromStr;

use crate::config::EmbedderConfig;
use crate::data::{DataMatrix, Embedding};
use crate::embed::{neighbor_graph, EpochObserver};
use crate::error::{Error, Result};
use crate::optim::Adam;
use crate::pacmap::scaled_pca_init;
use crate::parallel::map_indices;
use crate::rng::RandomSource;
use crate::tsne::to_embedding;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CneLoss {
    #[default]
    InfoNce,
    NegSampling,
}

impl FromStr for CneLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "infonce" => Ok(CneLoss::InfoNce),
            "neg_sampling" | "negsampling" => Ok(CneLoss::NegSampling),
            _ => Err(Error::InvalidParam(format!("unknown contrastive loss '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CneParams {
    pub loss: CneLoss,
    pub negatives: usize,
    pub batch_edges: usize,
    pub lr: f64,
    pub init_scale: f32,
}

impl Default for CneParams {
    fn default() -> Self {
        Self {
            loss: CneLoss::InfoNce,
            negatives: 5,
            batch_edges: 1024,
            lr: 1e-2,
            init_scale: 0.01,
        }
    }
}

/// Positive edges with `m` negatives each (`negatives[e * m..(e + 1) * m]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub edges: Vec<(u32, u32)>,
    pub negatives: Vec<u32>,
    pub m: usize,
}

/// Gradient restricted to the rows a batch touches.
#[derive(Debug, Clone)]
pub struct BatchGrad {
    pub loss: f64,
    /// Dense `n x 2`; rows not in `touched` are exactly zero.
    pub grad: Vec<f64>,
    /// Sorted, distinct.
    pub touched: Vec<usize>,
}

const CLAMP: f64 = 1e-4;

#[inline]
pub fn cauchy(d2: f64) -> f64 {
    1.0 / (1.0 + d2)
}

/// Draws `m` uniform negatives per edge, never the edge's head point.
pub fn sample_negatives(
    edges: &[(u32, u32)],
    n: usize,
    m: usize,
    rng: &mut RandomSource,
) -> Vec<u32> {
    let mut out = Vec::with_capacity(edges.len() * m);
    for &(i, _) in edges {
        for _ in 0..m {
            let k = loop {
                let k = rng.below(n);
                if k != i as usize {
                    break k;
                }
            };
            out.push(k as u32);
        }
    }
    out
}

/// Per-positive loss and the derivatives with respect to each squared
/// distance (positive first, then negatives).
fn edge_terms(loss: CneLoss, d2: &[f64]) -> (f64, Vec<f64>) {
    let q: Vec<f64> = d2.iter().map(|&d| cauchy(d)).collect();
    match loss {
        CneLoss::InfoNce => {
            let s: f64 = q.iter().sum();
            let l = -(q[0] / s).ln();
            // dq/dd2 = -q^2
            let mut g: Vec<f64> = q.iter().map(|&qv| -qv * qv / s).collect();
            g[0] += q[0];
            (l, g)
        }
        CneLoss::NegSampling => {
            let mut l = 0.0;
            let mut g = Vec::with_capacity(q.len());
            for (t, &qv) in q.iter().enumerate() {
                let c = qv.clamp(CLAMP, 1.0 - CLAMP);
                let inside = qv > CLAMP && qv < 1.0 - CLAMP;
                if t == 0 {
                    l -= c.ln();
                    g.push(if inside { qv } else { 0.0 });
                } else {
                    l -= (1.0 - c).ln();
                    g.push(if inside { -qv * qv / (1.0 - qv) } else { 0.0 });
                }
            }
            (l, g)
        }
    }
}

/// Summed loss over the batch and its gradient with respect to `y`.
pub fn cne_batch(y: &[f64], batch: &Batch, loss: CneLoss, sequential: bool) -> BatchGrad {
    let m = batch.m;
    let terms: Vec<(f64, Vec<[f64; 2]>)> = map_indices(batch.edges.len(), sequential, |e| {
        let (i, j) = batch.edges[e];
        let i = i as usize;
        let others = std::iter::once(j).chain(batch.negatives[e * m..(e + 1) * m].iter().copied());
        let diffs: Vec<[f64; 2]> = others
            .map(|o| {
                let o = o as usize;
                [y[2 * i] - y[2 * o], y[2 * i + 1] - y[2 * o + 1]]
            })
            .collect();
        let d2: Vec<f64> = diffs.iter().map(|d| d[0] * d[0] + d[1] * d[1]).collect();
        let (l, dd) = edge_terms(loss, &d2);
        let g = diffs
            .iter()
            .zip(&dd)
            .map(|(d, &c)| [2.0 * c * d[0], 2.0 * c * d[1]])
            .collect();
        (l, g)
    });
    let mut grad = vec![0.0; y.len()];
    let mut touched = Vec::with_capacity(batch.edges.len() * (m + 2));
    let mut total = 0.0;
    for (e, (l, g)) in terms.iter().enumerate() {
        total += l;
        let i = batch.edges[e].0 as usize;
        touched.push(i);
        let others = std::iter::once(batch.edges[e].1).chain(batch.negatives[e * m..(e + 1) * m].iter().copied());
        for (o, gt) in others.zip(g) {
            let o = o as usize;
            touched.push(o);
            for t in 0..2 {
                grad[2 * i + t] += gt[t];
                grad[2 * o + t] -= gt[t];
            }
        }
    }
    touched.sort_unstable();
    touched.dedup();
    BatchGrad {
        loss: total,
        grad,
        touched,
    }
}

/// Sparse Adam over shuffled edge batches; one epoch visits every edge once.
pub fn optimize(
    edges: &[(u32, u32)],
    mut y: Vec<f64>,
    params: &CneParams,
    epochs: usize,
    rng: &mut RandomSource,
    sequential: bool,
    observer: &mut EpochObserver,
    mut on_loss: impl FnMut(usize, f64),
) -> Result<Embedding> {
    if edges.is_empty() {
        return Err(Error::Degenerate("empty edge list".into()));
    }
    if params.negatives == 0 || params.batch_edges == 0 {
        return Err(Error::InvalidParam(
            "negatives and batch_edges must be >= 1".into(),
        ));
    }
    let n = y.len() / 2;
    let mut adam = Adam::new(y.len(), params.lr, 0.9, 0.999, 1e-8);
    let mut order: Vec<(u32, u32)> = edges.to_vec();
    for epoch in 0..epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(params.batch_edges) {
            let negatives = sample_negatives(chunk, n, params.negatives, rng);
            let batch = Batch {
                edges: chunk.to_vec(),
                negatives,
                m: params.negatives,
            };
            let bg = cne_batch(&y, &batch, params.loss, sequential);
            epoch_loss += bg.loss;
            adam.step_rows(&mut y, &bg.grad, &bg.touched, 2);
        }
        on_loss(epoch, epoch_loss);
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
    let params = &cfg.params.cne;
    let graph = neighbor_graph(x, cfg.n_neighbors, cfg, rng)?;
    let edges: Vec<(u32, u32)> = (0..graph.n())
        .flat_map(|i| graph.neighbors(i).iter().map(move |&j| (i as u32, j)))
        .collect();
    let y = scaled_pca_init(x, params.init_scale, rng)?;
    optimize(&edges, y, params, cfg.epochs, rng, cfg.sequential, observer, |_, _| {})
}
