//! k-NN graph construction and 2-D embedding methods behind one
//! `fit_transform` entry point.

pub mod cne;
pub mod config;
pub mod data;
pub mod embed;
pub mod error;
pub mod io;
pub mod knn;
pub mod metrics;
pub mod mmae;
pub mod nndescent;
pub mod optim;
pub mod pacmap;
mod parallel;
pub mod preprocess;
pub mod rng;
pub mod synthetic;
pub mod trimap;
pub mod tsne;
pub mod umap;

pub use config::{EmbedderConfig, KnnStrategy, Method, MethodParams, Normalize};
pub use data::{validate, DataMatrix, Embedding, EmbeddingTrace};
pub use embed::{fit_trace, fit_transform, EpochObserver};
pub use error::{Error, Result};
pub use knn::KnnGraph;
pub use rng::RandomSource;
