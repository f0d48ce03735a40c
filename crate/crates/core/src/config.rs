//! Embedder configuration records.

use std::fmt;
use std::str::FromStr;

use crate::cne::CneParams;
use crate::error::{Error, Result};
use crate::mmae::MmaeParams;
use crate::nndescent::NnDescentParams;
use crate::pacmap::{LocalmapParams, PacmapParams};
use crate::trimap::TrimapParams;
use crate::tsne::{DreamsParams, TsneParams};
use crate::umap::UmapParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Umap,
    Tsne,
    Dreams,
    Pacmap,
    Localmap,
    Trimap,
    Cne,
    Mmae,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Umap,
        Method::Tsne,
        Method::Dreams,
        Method::Pacmap,
        Method::Localmap,
        Method::Trimap,
        Method::Cne,
        Method::Mmae,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Umap => "umap",
            Method::Tsne => "tsne",
            Method::Dreams => "dreams",
            Method::Pacmap => "pacmap",
            Method::Localmap => "localmap",
            Method::Trimap => "trimap",
            Method::Cne => "cne",
            Method::Mmae => "mmae",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Method::ALL
            .into_iter()
            .find(|m| m.name() == lower)
            .ok_or_else(|| Error::InvalidParam(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalize {
    None,
    #[default]
    Standard,
    MinMax,
}

impl FromStr for Normalize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Normalize::None),
            "standard" => Ok(Normalize::Standard),
            "minmax" => Ok(Normalize::MinMax),
            _ => Err(Error::InvalidParam(format!("unknown normalization '{s}'"))),
        }
    }
}

/// How the neighbor graph is built.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum KnnStrategy {
    /// Exact up to [`KnnStrategy::AUTO_EXACT_MAX`] points, NNDescent above.
    #[default]
    Auto,
    Exact,
    NnDescent(NnDescentParams),
}

impl KnnStrategy {
    pub const AUTO_EXACT_MAX: usize = 2000;
}

/// Per-method parameter records. Only the record matching the configured
/// method is read.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MethodParams {
    pub umap: UmapParams,
    pub tsne: TsneParams,
    pub dreams: DreamsParams,
    pub pacmap: PacmapParams,
    pub localmap: LocalmapParams,
    pub trimap: TrimapParams,
    pub cne: CneParams,
    pub mmae: MmaeParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedderConfig {
    pub method: Method,
    pub n_neighbors: usize,
    pub epochs: usize,
    pub seed: u64,
    pub normalize: Normalize,
    /// Disable internal parallelism.
    pub sequential: bool,
    /// Reduce inputs wider than this with PCA before building the graph.
    pub pca_dims: Option<usize>,
    pub knn: KnnStrategy,
    pub params: MethodParams,
}

impl EmbedderConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            n_neighbors: 15,
            epochs: 500,
            seed: 0,
            normalize: Normalize::Standard,
            sequential: false,
            pca_dims: Some(100),
            knn: KnnStrategy::Auto,
            params: MethodParams::default(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.epochs = epochs;
        self
    }

    pub fn with_neighbors(mut self, k: usize) -> Self {
        self.n_neighbors = k;
        self
    }

    pub fn sequential(mut self, on: bool) -> Self {
        self.sequential = on;
        self
    }

    /// Checks everything that can be checked without the data, plus
    /// `n_neighbors < n` for `n` rows.
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidParam("epochs must be >= 1".into()));
        }
        if self.n_neighbors == 0 {
            return Err(Error::InvalidParam("n_neighbors must be >= 1".into()));
        }
        if self.n_neighbors >= n {
            return Err(Error::Degenerate(format!(
                "n_neighbors {} must be smaller than the number of points {n}",
                self.n_neighbors
            )));
        }
        if self.pca_dims == Some(0) {
            return Err(Error::InvalidParam("pca_dims must be >= 1".into()));
        }
        Ok(())
    }
}
