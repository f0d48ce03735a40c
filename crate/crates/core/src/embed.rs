//! The uniform `fit_transform` entry point and helpers shared by the methods.

use crate::config::{EmbedderConfig, KnnStrategy, Method, Normalize};
use crate::data::{validate, DataMatrix, Embedding, EmbeddingTrace};
use crate::error::{Error, Result};
use crate::knn::{exact_knn, KnnGraph};
use crate::nndescent::{nndescent, NnDescentParams};
use crate::preprocess::{normalize_minmax, normalize_standard, pca_reduce};
use crate::rng::RandomSource;
use crate::{cne, mmae, pacmap, trimap, tsne, umap};

/// Optional per-epoch observer. Each notification hands out a copy of the
/// current layout.
pub struct EpochObserver<'a> {
    callback: Option<&'a mut dyn FnMut(usize, Embedding)>,
    calls: usize,
}

impl<'a> EpochObserver<'a> {
    pub fn none() -> Self {
        Self {
            callback: None,
            calls: 0,
        }
    }

    pub fn new(callback: &'a mut dyn FnMut(usize, Embedding)) -> Self {
        Self {
            callback: Some(callback),
            calls: 0,
        }
    }

    pub fn is_active(&self) -> bool {
        self.callback.is_some()
    }

    pub fn notify(&mut self, epoch: usize, y: &Embedding) {
        self.calls += 1;
        if let Some(cb) = self.callback.as_mut() {
            cb(epoch, y.clone());
        }
    }

    /// Number of notifications so far.
    pub fn calls(&self) -> usize {
        self.calls
    }
}

/// Neighbor graph with `k` neighbors, exact or NNDescent according to the
/// configured strategy. Fails when every point coincides with its neighbors.
pub fn neighbor_graph(
    x: &DataMatrix,
    k: usize,
    cfg: &EmbedderConfig,
    rng: &mut RandomSource,
) -> Result<KnnGraph> {
    let n = x.rows();
    if k == 0 || k >= n {
        return Err(Error::Degenerate(format!(
            "{k} neighbors requested for {n} points"
        )));
    }
    let exact = match &cfg.knn {
        KnnStrategy::Auto => n <= KnnStrategy::AUTO_EXACT_MAX,
        KnnStrategy::Exact => true,
        KnnStrategy::NnDescent(_) => false,
    };
    let graph = if exact {
        exact_knn(x, k, cfg.sequential)?
    } else {
        let mut params = match &cfg.knn {
            KnnStrategy::NnDescent(p) => p.clone(),
            _ => NnDescentParams::default(),
        };
        params.k = k;
        let mut knn_rng = rng.fork(0x6b6e6e);
        nndescent(x, &params, &mut knn_rng, cfg.sequential)?
    };
    if graph.all_sq_distances().iter().all(|&d| d == 0.0) {
        return Err(Error::Degenerate(
            "all neighbor distances are zero (identical points)".into(),
        ));
    }
    Ok(graph)
}

/// Validation, normalization and optional PCA reduction applied before any
/// method sees the data.
pub fn prepare(cfg: &EmbedderConfig, x: &DataMatrix) -> Result<DataMatrix> {
    validate(x)?;
    cfg.validate(x.rows())?;
    let first = x.row(0);
    if (1..x.rows()).all(|i| x.row(i) == first) {
        return Err(Error::Degenerate("all rows are identical".into()));
    }
    let x = match cfg.normalize {
        Normalize::None => x.clone(),
        Normalize::Standard => normalize_standard(x),
        Normalize::MinMax => normalize_minmax(x),
    };
    match cfg.pca_dims {
        Some(p) if x.cols() > p => pca_reduce(&x, p),
        _ => Ok(x),
    }
}

/// Embeds `x` into two dimensions with the configured method. The callback,
/// when given, receives a copy of the layout after every epoch.
pub fn fit_transform(
    cfg: &EmbedderConfig,
    x: &DataMatrix,
    callback: Option<&mut dyn FnMut(usize, Embedding)>,
) -> Result<Embedding> {
    let x = prepare(cfg, x)?;
    let mut rng = RandomSource::new(cfg.seed);
    let mut observer = match callback {
        Some(cb) => EpochObserver::new(cb),
        None => EpochObserver::none(),
    };
    let y = match cfg.method {
        Method::Umap => umap::fit(&x, cfg, &mut rng, &mut observer),
        Method::Tsne => tsne::fit(&x, cfg, &mut rng, &mut observer),
        Method::Dreams => tsne::fit_dreams(&x, cfg, &mut rng, &mut observer),
        Method::Pacmap => pacmap::fit(&x, cfg, &mut rng, &mut observer),
        Method::Localmap => pacmap::fit_localmap(&x, cfg, &mut rng, &mut observer),
        Method::Trimap => trimap::fit(&x, cfg, &mut rng, &mut observer),
        Method::Cne => cne::fit(&x, cfg, &mut rng, &mut observer),
        Method::Mmae => mmae::fit(&x, cfg, &mut rng, &mut observer),
    }?;
    if !y.is_finite() {
        return Err(Error::NoConvergence(format!(
            "{} produced non-finite coordinates",
            cfg.method
        )));
    }
    Ok(y)
}

/// Runs [`fit_transform`] recording every `every`-th epoch (and the last one)
/// into a trace.
pub fn fit_trace(
    cfg: &EmbedderConfig,
    x: &DataMatrix,
    every: usize,
) -> Result<(Embedding, EmbeddingTrace)> {
    let every = every.max(1);
    let last = cfg.epochs.saturating_sub(1);
    let mut trace = EmbeddingTrace::new();
    let mut failure = None;
    let mut cb = |epoch: usize, y: Embedding| {
        if (epoch % every == 0 || epoch == last) && failure.is_none() {
            if let Err(e) = trace.push(epoch, y) {
                failure = Some(e);
            }
        }
    };
    let y = fit_transform(cfg, x, Some(&mut cb))?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok((y, trace))
}
