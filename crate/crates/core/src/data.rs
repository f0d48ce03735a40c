//! Dense matrices shared by every stage of the pipeline.

use crate::error::{Error, Result};

/// Dense row-major `rows x cols` matrix of `f32` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f32>,
}

impl DataMatrix {
    /// Wraps a row-major buffer. Only the length is checked here; finiteness is
    /// the job of [`validate`].
    pub fn new(rows: usize, cols: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values for a {rows}x{cols} matrix",
                values.len()
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Shape(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            values.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            values,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.values[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.values[i * self.cols + j]
    }

    pub fn view(&self) -> ndarray::ArrayView2<'_, f32> {
        ndarray::ArrayView2::from_shape((self.rows, self.cols), &self.values)
            .expect("length checked at construction")
    }

    /// Copies the selected rows into a new matrix.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut values = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            values,
        }
    }
}

/// Checks that `x` is non-empty and finite. The error names the first
/// offending cell in row-major order.
pub fn validate(x: &DataMatrix) -> Result<()> {
    if x.rows == 0 || x.cols == 0 {
        return Err(Error::Empty {
            rows: x.rows,
            cols: x.cols,
        });
    }
    match x.values.iter().position(|v| !v.is_finite()) {
        Some(p) => Err(Error::NonFinite {
            row: p / x.cols,
            col: p % x.cols,
        }),
        None => Ok(()),
    }
}

/// An `n x 2` layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    rows: usize,
    values: Vec<f32>,
}

impl Embedding {
    pub fn new(rows: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != rows * 2 {
            return Err(Error::Shape(format!(
                "{} values for a {rows}x2 embedding",
                values.len()
            )));
        }
        Ok(Self { rows, values })
    }

    pub fn zeros(rows: usize) -> Self {
        Self {
            rows,
            values: vec![0.0; rows * 2],
        }
    }

    pub fn from_points(points: &[[f32; 2]]) -> Self {
        Self {
            rows: points.len(),
            values: points.iter().flatten().copied().collect(),
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn point(&self, i: usize) -> [f32; 2] {
        [self.values[2 * i], self.values[2 * i + 1]]
    }

    #[inline]
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `(xmin, xmax, ymin, ymax)`; `None` when empty.
    pub fn bounds(&self) -> Option<(f32, f32, f32, f32)> {
        if self.rows == 0 {
            return None;
        }
        let mut b = (f32::INFINITY, f32::NEG_INFINITY, f32::INFINITY, f32::NEG_INFINITY);
        for p in self.values.chunks_exact(2) {
            b.0 = b.0.min(p[0]);
            b.1 = b.1.max(p[0]);
            b.2 = b.2.min(p[1]);
            b.3 = b.3.max(p[1]);
        }
        Some(b)
    }

    pub fn to_matrix(&self) -> DataMatrix {
        DataMatrix {
            rows: self.rows,
            cols: 2,
            values: self.values.clone(),
        }
    }

    pub fn from_matrix(m: DataMatrix) -> Result<Self> {
        if m.cols != 2 {
            return Err(Error::Shape(format!(
                "embedding needs 2 columns, got {}",
                m.cols
            )));
        }
        Ok(Self {
            rows: m.rows,
            values: m.values,
        })
    }
}

/// Per-epoch snapshots of an optimization run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingTrace {
    snapshots: Vec<Embedding>,
    epochs: Vec<usize>,
}

impl EmbeddingTrace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a snapshot. Epoch numbers must strictly increase and every
    /// snapshot must have the same row count as the first.
    pub fn push(&mut self, epoch: usize, snapshot: Embedding) -> Result<()> {
        if let Some(&last) = self.epochs.last() {
            if epoch <= last {
                return Err(Error::InvalidParam(format!(
                    "epoch {epoch} does not follow {last}"
                )));
            }
        }
        if let Some(first) = self.snapshots.first() {
            if first.rows() != snapshot.rows() {
                return Err(Error::Shape(format!(
                    "snapshot has {} rows, trace has {}",
                    snapshot.rows(),
                    first.rows()
                )));
            }
        }
        self.snapshots.push(snapshot);
        self.epochs.push(epoch);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn snapshots(&self) -> &[Embedding] {
        &self.snapshots
    }

    pub fn epoch_indices(&self) -> &[usize] {
        &self.epochs
    }

    pub fn last(&self) -> Option<&Embedding> {
        self.snapshots.last()
    }

    /// Union of all snapshot bounding boxes.
    pub fn bounds(&self) -> Option<(f32, f32, f32, f32)> {
        self.snapshots
            .iter()
            .filter_map(Embedding::bounds)
            .reduce(|a, b| (a.0.min(b.0), a.1.max(b.1), a.2.min(b.2), a.3.max(b.3)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validate_accepts_finite() {
        let x = DataMatrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(validate(&x).is_ok());
    }

    #[test]
    fn validate_names_first_nan() {
        let x = DataMatrix::new(2, 2, vec![1.0, 2.0, f32::NAN, 4.0]).unwrap();
        match validate(&x) {
            Err(Error::NonFinite { row, col }) => assert_eq!((row, col), (1, 0)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn validate_rejects_empty() {
        let x = DataMatrix::new(0, 3, vec![]).unwrap();
        let err = validate(&x).unwrap_err();
        assert!(err.to_string().contains("empty"));
    }

    #[test]
    fn trace_enforces_increasing_epochs_and_rows() {
        let mut t = EmbeddingTrace::new();
        t.push(0, Embedding::zeros(3)).unwrap();
        assert!(t.push(0, Embedding::zeros(3)).is_err());
        assert!(t.push(1, Embedding::zeros(4)).is_err());
        t.push(5, Embedding::zeros(3)).unwrap();
        assert_eq!(t.epoch_indices(), &[0, 5]);
    }
}
