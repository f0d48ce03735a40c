//! Manifold-matching autoencoder: an MLP autoencoder with a 2-D bottleneck,
//! trained on reconstruction error plus agreement between input-space and
//! latent distances of in-batch neighbor pairs.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis, LinalgScalar};
use num_traits::Float;

use crate::config::EmbedderConfig;
use crate::data::{DataMatrix, Embedding};
use crate::embed::{neighbor_graph, EpochObserver};
use crate::error::{Error, Result};
use crate::io::{read_matrix, write_matrix};
use crate::knn::KnnGraph;
use crate::optim::Adam;
use crate::rng::RandomSource;

#[derive(Debug, Clone, PartialEq)]
pub struct MmaeParams {
    pub lambda_mm: f64,
    pub batch: usize,
    pub lr: f64,
    pub hidden: usize,
}

impl Default for MmaeParams {
    fn default() -> Self {
        Self {
            lambda_mm: 1.0,
            batch: 256,
            lr: 1e-3,
            hidden: 128,
        }
    }
}

pub trait Scalar: LinalgScalar + Float + Send + Sync {}
impl<T: LinalgScalar + Float + Send + Sync> Scalar for T {}

/// Fully connected layer `x W + b`, `W` stored `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<F> {
    pub w: Array2<F>,
    pub b: Array1<F>,
}

impl<F: Scalar> Dense<F> {
    fn xavier(fan_in: usize, fan_out: usize, rng: &mut RandomSource) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w = Array2::from_shape_fn((fan_in, fan_out), |_| {
            F::from((rng.uniform() * 2.0 - 1.0) * limit).unwrap()
        });
        Self {
            w,
            b: Array1::zeros(fan_out),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            w: Array2::zeros(self.w.raw_dim()),
            b: Array1::zeros(self.b.raw_dim()),
        }
    }

    fn apply(&self, x: &ArrayView2<F>) -> Array2<F> {
        x.dot(&self.w) + &self.b
    }
}

/// Encoder `d -> hidden -> 2` and decoder `2 -> hidden -> d`, ReLU on the
/// hidden layers, linear outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpAutoencoder<F> {
    pub layers: [Dense<F>; 4],
}

struct Forward<F> {
    pre1: Array2<F>,
    h1: Array2<F>,
    z: Array2<F>,
    pre3: Array2<F>,
    h3: Array2<F>,
    out: Array2<F>,
}

fn relu<F: Scalar>(a: &Array2<F>) -> Array2<F> {
    a.mapv(|v| v.max(F::zero()))
}

fn relu_mask<F: Scalar>(grad: Array2<F>, pre: &Array2<F>) -> Array2<F> {
    let mut g = grad;
    g.zip_mut_with(pre, |gv, &p| {
        if p <= F::zero() {
            *gv = F::zero();
        }
    });
    g
}

/// Pairs `(a, b)` of batch rows with their input-space distance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchPairs<F> {
    pub pairs: Vec<(usize, usize)>,
    pub dists: Vec<F>,
}

const NORM_EPS: f64 = 1e-8;

impl<F: Scalar> MlpAutoencoder<F> {
    pub fn new(d: usize, hidden: usize, rng: &mut RandomSource) -> Self {
        Self {
            layers: [
                Dense::xavier(d, hidden, rng),
                Dense::xavier(hidden, 2, rng),
                Dense::xavier(2, hidden, rng),
                Dense::xavier(hidden, d, rng),
            ],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].w.ncols()
    }

    fn forward(&self, x: &ArrayView2<F>) -> Forward<F> {
        let pre1 = self.layers[0].apply(x);
        let h1 = relu(&pre1);
        let z = self.layers[1].apply(&h1.view());
        let pre3 = self.layers[2].apply(&z.view());
        let h3 = relu(&pre3);
        let out = self.layers[3].apply(&h3.view());
        Forward {
            pre1,
            h1,
            z,
            pre3,
            h3,
            out,
        }
    }

    pub fn encode(&self, x: &ArrayView2<F>) -> Array2<F> {
        let h1 = relu(&self.layers[0].apply(x));
        self.layers[1].apply(&h1.view())
    }

    pub fn reconstruct(&self, x: &ArrayView2<F>) -> Array2<F> {
        self.forward(x).out
    }

    /// Reconstruction term, matching term, and `d loss / d z` of the
    /// weighted matching term.
    fn terms(&self, x: &ArrayView2<F>, f: &Forward<F>, pairs: &BatchPairs<F>, lambda: F) -> (F, F, Array2<F>) {
        let rows = F::from(x.nrows()).unwrap();
        let recon = (&f.out - x).mapv(|v| v * v).sum() / rows;
        let mut dz = Array2::zeros(f.z.raw_dim());
        let p = pairs.pairs.len();
        if p == 0 {
            return (recon, F::zero(), dz);
        }
        let pf = F::from(p).unwrap();
        let eps = F::from(NORM_EPS).unwrap();
        let two = F::from(2.0).unwrap();
        let hd_mean = pairs.dists.iter().fold(F::zero(), |a, &v| a + v) / pf + eps;
        let diffs: Vec<[F; 2]> = pairs
            .pairs
            .iter()
            .map(|&(a, b)| [f.z[[a, 0]] - f.z[[b, 0]], f.z[[a, 1]] - f.z[[b, 1]]])
            .collect();
        let g: Vec<F> = diffs.iter().map(|d| (d[0] * d[0] + d[1] * d[1]).sqrt()).collect();
        let m = g.iter().fold(F::zero(), |a, &v| a + v) / pf + eps;
        let r: Vec<F> = g
            .iter()
            .zip(&pairs.dists)
            .map(|(&gv, &dv)| gv / m - dv / hd_mean)
            .collect();
        let matching = r.iter().fold(F::zero(), |a, &v| a + v * v) / pf;
        // the batch mean couples every pair through m
        let coupling = r.iter().zip(&g).fold(F::zero(), |a, (&rv, &gv)| a + rv * gv) / (pf * m * m);
        for (q, &(a, b)) in pairs.pairs.iter().enumerate() {
            if g[q] == F::zero() {
                continue;
            }
            let dg = lambda * two / pf * (r[q] / m - coupling);
            for t in 0..2 {
                let v = dg * diffs[q][t] / g[q];
                dz[[a, t]] = dz[[a, t]] + v;
                dz[[b, t]] = dz[[b, t]] - v;
            }
        }
        (recon, matching, dz)
    }

    /// `mean |x_hat - x|^2 + lambda * mean (g / mean g - delta / mean delta)^2`.
    pub fn loss(&self, x: &ArrayView2<F>, pairs: &BatchPairs<F>, lambda: F) -> F {
        let f = self.forward(x);
        let (recon, matching, _) = self.terms(x, &f, pairs, lambda);
        recon + lambda * matching
    }

    /// Loss and gradients of every weight and bias.
    pub fn loss_and_grad(&self, x: &ArrayView2<F>, pairs: &BatchPairs<F>, lambda: F) -> (F, [Dense<F>; 4]) {
        let f = self.forward(x);
        let (recon, matching, dz_mm) = self.terms(x, &f, pairs, lambda);
        let rows = F::from(x.nrows()).unwrap();
        let two = F::from(2.0).unwrap();
        let mut grads = [
            self.layers[0].zeros_like(),
            self.layers[1].zeros_like(),
            self.layers[2].zeros_like(),
            self.layers[3].zeros_like(),
        ];
        let d_out = (&f.out - x).mapv(|v| two * v / rows);
        grads[3].w = f.h3.t().dot(&d_out);
        grads[3].b = d_out.sum_axis(Axis(0));
        let d_pre3 = relu_mask(d_out.dot(&self.layers[3].w.t()), &f.pre3);
        grads[2].w = f.z.t().dot(&d_pre3);
        grads[2].b = d_pre3.sum_axis(Axis(0));
        let dz = d_pre3.dot(&self.layers[2].w.t()) + dz_mm;
        grads[1].w = f.h1.t().dot(&dz);
        grads[1].b = dz.sum_axis(Axis(0));
        let d_pre1 = relu_mask(dz.dot(&self.layers[1].w.t()), &f.pre1);
        grads[0].w = x.t().dot(&d_pre1);
        grads[0].b = d_pre1.sum_axis(Axis(0));
        (recon + lambda * matching, grads)
    }
}

impl MlpAutoencoder<f32> {
    /// Writes a one-line manifest of layer sizes followed by each layer's
    /// weight and bias as MXV1 records.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        let sizes: Vec<String> = std::iter::once(self.layers[0].w.nrows())
            .chain(self.layers.iter().map(|l| l.w.ncols()))
            .map(|s| s.to_string())
            .collect();
        writeln!(w, "{}", sizes.join(" "))?;
        for l in &self.layers {
            let (r, c) = l.w.dim();
            write_matrix(&mut w, &DataMatrix::new(r, c, l.w.iter().copied().collect())?)?;
            write_matrix(&mut w, &DataMatrix::new(1, c, l.b.to_vec())?)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BufReader::new(std::fs::File::open(path)?);
        let mut line = String::new();
        r.read_line(&mut line)?;
        let sizes: Vec<usize> = line
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| Error::Format(format!("bad layer size '{s}'"))))
            .collect::<Result<_>>()?;
        if sizes.len() != 5 || sizes[2] != 2 {
            return Err(Error::Format(format!("unexpected layer sizes {sizes:?}")));
        }
        let mut layers = Vec::with_capacity(4);
        for k in 0..4 {
            let w = read_matrix(&mut r)?;
            let b = read_matrix(&mut r)?;
            if w.rows() != sizes[k] || w.cols() != sizes[k + 1] || b.rows() != 1 || b.cols() != sizes[k + 1] {
                return Err(Error::Format(format!("layer {k} does not match the manifest")));
            }
            layers.push(Dense {
                w: Array2::from_shape_vec((w.rows(), w.cols()), w.into_values())
                    .map_err(|e| Error::Shape(e.to_string()))?,
                b: Array1::from(b.into_values()),
            });
        }
        let layers: [Dense<f32>; 4] = layers.try_into().expect("four layers");
        Ok(Self { layers })
    }
}

/// In-batch neighbor pairs with their input-space distances.
pub fn batch_pairs(graph: &KnnGraph, batch: &[usize], slot: &mut [usize]) -> BatchPairs<f32> {
    for (p, &i) in batch.iter().enumerate() {
        slot[i] = p;
    }
    let mut out = BatchPairs::default();
    for (p, &i) in batch.iter().enumerate() {
        for (&j, &d2) in graph.neighbors(i).iter().zip(graph.sq_distances(i)) {
            let q = slot[j as usize];
            if q != usize::MAX {
                out.pairs.push((p, q));
                out.dists.push(d2.sqrt());
            }
        }
    }
    for &i in batch {
        slot[i] = usize::MAX;
    }
    out
}

/// Trained model, final encodings and mean batch loss per epoch.
#[derive(Debug, Clone)]
pub struct MmaeFit {
    pub model: MlpAutoencoder<f32>,
    pub embedding: Embedding,
    pub losses: Vec<f64>,
}

fn encode_all(model: &MlpAutoencoder<f32>, x: &DataMatrix) -> Result<Embedding> {
    let z = model.encode(&x.view());
    Embedding::new(x.rows(), z.iter().copied().collect())
}

/// Mini-batch Adam training for `epochs` passes over shuffled rows.
pub fn train(
    x: &DataMatrix,
    graph: &KnnGraph,
    params: &MmaeParams,
    epochs: usize,
    rng: &mut RandomSource,
    observer: &mut EpochObserver,
) -> Result<MmaeFit> {
    if !(params.lambda_mm >= 0.0) {
        return Err(Error::InvalidParam("lambda_mm must be >= 0".into()));
    }
    if params.batch == 0 || params.hidden == 0 {
        return Err(Error::InvalidParam("batch and hidden must be >= 1".into()));
    }
    let n = x.rows();
    let mut model = MlpAutoencoder::<f32>::new(x.cols(), params.hidden, rng);
    let mut adams: Vec<(Adam, Adam)> = model
        .layers
        .iter()
        .map(|l| {
            (
                Adam::new(l.w.len(), params.lr, 0.9, 0.999, 1e-8),
                Adam::new(l.b.len(), params.lr, 0.9, 0.999, 1e-8),
            )
        })
        .collect();
    let lambda = params.lambda_mm as f32;
    let mut order: Vec<usize> = (0..n).collect();
    let mut slot = vec![usize::MAX; n];
    let mut losses = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        let mut batches = 0;
        for batch in order.chunks(params.batch) {
            let xb = x.select_rows(batch);
            let pairs = batch_pairs(graph, batch, &mut slot);
            let (loss, grads) = model.loss_and_grad(&xb.view(), &pairs, lambda);
            total += loss as f64;
            batches += 1;
            for ((layer, g), (aw, ab)) in model.layers.iter_mut().zip(&grads).zip(adams.iter_mut()) {
                let w = layer.w.as_slice_mut().expect("standard layout");
                aw.step_f32(w, g.w.as_slice().expect("standard layout"));
                let b = layer.b.as_slice_mut().expect("standard layout");
                ab.step_f32(b, g.b.as_slice().expect("standard layout"));
            }
        }
        losses.push(total / batches as f64);
        if observer.is_active() {
            observer.notify(epoch, &encode_all(&model, x)?);
        }
    }
    let embedding = encode_all(&model, x)?;
    Ok(MmaeFit {
        model,
        embedding,
        losses,
    })
}

pub fn fit(
    x: &DataMatrix,
    cfg: &EmbedderConfig,
    rng: &mut RandomSource,
    observer: &mut EpochObserver,
) -> Result<Embedding> {
    let graph = neighbor_graph(x, cfg.n_neighbors, cfg, rng)?;
    Ok(train(x, &graph, &cfg.params.mmae, cfg.epochs, rng, observer)?.embedding)
}
