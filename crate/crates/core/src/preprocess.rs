//! Feature scaling and principal component analysis.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;

use crate::data::{DataMatrix, Embedding};
use crate::error::{Error, Result};
use crate::rng::RandomSource;

const ZERO_STD: f64 = 1e-12;

fn column_moments(x: &DataMatrix) -> (Vec<f64>, Vec<f64>) {
    let (n, d) = (x.rows(), x.cols());
    let mut mean = vec![0.0f64; d];
    for i in 0..n {
        for (m, &v) in mean.iter_mut().zip(x.row(i)) {
            *m += v as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0f64; d];
    for i in 0..n {
        for ((s, &v), &m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
            let c = v as f64 - m;
            *s += c * c;
        }
    }
    var.iter_mut().for_each(|s| *s /= n as f64);
    (mean, var)
}

/// Z-score every column with the population standard deviation. Constant
/// columns become all zeros.
pub fn normalize_standard(x: &DataMatrix) -> DataMatrix {
    let (mean, var) = column_moments(x);
    let inv: Vec<f64> = var
        .iter()
        .map(|&v| {
            let s = v.sqrt();
            if s > ZERO_STD {
                1.0 / s
            } else {
                0.0
            }
        })
        .collect();
    let mut out = x.clone();
    for i in 0..x.rows() {
        for ((o, &m), &s) in out.row_mut(i).iter_mut().zip(&mean).zip(&inv) {
            *o = ((*o as f64 - m) * s) as f32;
        }
    }
    out
}

/// Affinely map every column onto `[0, 1]`; constant columns become zeros.
pub fn normalize_minmax(x: &DataMatrix) -> DataMatrix {
    let d = x.cols();
    let mut lo = vec![f32::INFINITY; d];
    let mut hi = vec![f32::NEG_INFINITY; d];
    for i in 0..x.rows() {
        for (j, &v) in x.row(i).iter().enumerate() {
            lo[j] = lo[j].min(v);
            hi[j] = hi[j].max(v);
        }
    }
    let mut out = x.clone();
    for i in 0..x.rows() {
        for (j, o) in out.row_mut(i).iter_mut().enumerate() {
            let span = hi[j] as f64 - lo[j] as f64;
            *o = if span > 0.0 {
                ((*o as f64 - lo[j] as f64) / span) as f32
            } else {
                0.0
            };
        }
    }
    out
}

/// Fitted principal axes of a data set.
#[derive(Debug, Clone)]
pub struct PcaModel {
    pub mean: Vec<f32>,
    /// `p x d`, orthonormal rows.
    pub components: Vec<f32>,
    /// Population variance along each component, descending.
    pub explained_variance: Vec<f32>,
    pub dim: usize,
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.explained_variance.len()
    }

    pub fn component(&self, k: usize) -> &[f32] {
        &self.components[k * self.dim..(k + 1) * self.dim]
    }
}

fn centered_f64(x: &DataMatrix, mean: &[f64]) -> Array2<f64> {
    let (n, d) = (x.rows(), x.cols());
    Array2::from_shape_fn((n, d), |(i, j)| x.get(i, j) as f64 - mean[j])
}

/// Descending eigenpairs of a symmetric matrix; eigenvectors are columns.
fn sorted_eigen(m: Array2<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let k = m.nrows();
    let dm = DMatrix::from_row_slice(k, k, m.as_slice().expect("standard layout"));
    let eig = SymmetricEigen::new(dm);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let vectors = DMatrix::from_fn(k, k, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Top-`p` principal components of mean-centered `x`.
///
/// Uses the `d x d` covariance when `d <= n` and the `n x n` Gram matrix
/// otherwise. Each component's largest-magnitude entry is made positive.
pub fn pca_fit(x: &DataMatrix, p: usize) -> Result<PcaModel> {
    let (n, d) = (x.rows(), x.cols());
    if p == 0 || p > n.min(d) {
        return Err(Error::InvalidParam(format!(
            "{p} components requested from a {n}x{d} matrix"
        )));
    }
    let (mean, _) = column_moments(x);
    let xc = centered_f64(x, &mean);
    let nf = n as f64;

    let mut comps: Vec<Vec<f64>> = Vec::with_capacity(p);
    let mut variances = Vec::with_capacity(p);
    if d <= n {
        let cov = xc.t().dot(&xc) / nf;
        let (vals, vecs) = sorted_eigen(cov);
        for k in 0..p {
            comps.push(vecs.column(k).iter().copied().collect());
            variances.push(vals[k]);
        }
    } else {
        let gram = xc.dot(&xc.t()) / nf;
        let (vals, vecs) = sorted_eigen(gram);
        let floor = vals[0] * 1e-12;
        for k in 0..p {
            variances.push(vals[k]);
            if vals[k] <= floor {
                comps.push(vec![0.0; d]);
                continue;
            }
            let u = ndarray::Array1::from_iter(vecs.column(k).iter().copied());
            let v = xc.t().dot(&u);
            let norm = v.dot(&v).sqrt();
            comps.push(v.iter().map(|a| a / norm).collect());
        }
    }
    complete_orthonormal(&mut comps, d);

    for c in comps.iter_mut() {
        let mut best = 0;
        for (j, v) in c.iter().enumerate() {
            if v.abs() > c[best].abs() {
                best = j;
            }
        }
        if c[best] < 0.0 {
            c.iter_mut().for_each(|v| *v = -*v);
        }
    }

    Ok(PcaModel {
        mean: mean.iter().map(|&m| m as f32).collect(),
        components: comps.iter().flatten().map(|&v| v as f32).collect(),
        explained_variance: variances.iter().map(|&v| v as f32).collect(),
        dim: d,
    })
}

/// Replaces zero rows (directions with no variance) by Gram–Schmidt
/// completions against the standard basis.
fn complete_orthonormal(comps: &mut [Vec<f64>], d: usize) {
    let mut basis = 0;
    for k in 0..comps.len() {
        if comps[k].iter().any(|&v| v != 0.0) {
            continue;
        }
        while basis < d {
            let mut v = vec![0.0; d];
            v[basis] = 1.0;
            basis += 1;
            for c in comps.iter().filter(|c| c.iter().any(|&x| x != 0.0)) {
                let dot: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(c).for_each(|(a, b)| *a -= dot * b);
            }
            let norm: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm > 1e-6 {
                v.iter_mut().for_each(|a| *a /= norm);
                comps[k] = v;
                break;
            }
        }
    }
}

/// `(x - mean) * components^T`.
pub fn pca_project(model: &PcaModel, x: &DataMatrix) -> Result<DataMatrix> {
    if x.cols() != model.dim {
        return Err(Error::Shape(format!(
            "model has dimension {}, data has {}",
            model.dim,
            x.cols()
        )));
    }
    let p = model.n_components();
    let mut out = DataMatrix::zeros(x.rows(), p);
    let mut centered = vec![0.0f64; model.dim];
    for i in 0..x.rows() {
        for ((c, &v), &m) in centered.iter_mut().zip(x.row(i)).zip(&model.mean) {
            *c = v as f64 - m as f64;
        }
        for (k, o) in out.row_mut(i).iter_mut().enumerate() {
            *o = model
                .component(k)
                .iter()
                .zip(&centered)
                .map(|(&a, &b)| a as f64 * b)
                .sum::<f64>() as f32;
        }
    }
    Ok(out)
}

/// Projects onto the top `dims` components when `x` is wider than that.
pub fn pca_reduce(x: &DataMatrix, dims: usize) -> Result<DataMatrix> {
    if x.cols() <= dims {
        return Ok(x.clone());
    }
    let model = pca_fit(x, dims.min(x.rows()))?;
    pca_project(&model, x)
}

/// First two principal coordinates. One-dimensional (or single-row) input
/// gets a tiny random second coordinate.
pub fn pca_layout(x: &DataMatrix, rng: &mut RandomSource) -> Result<Embedding> {
    let p = 2.min(x.cols()).min(x.rows());
    let proj = pca_project(&pca_fit(x, p)?, x)?;
    let mut values = Vec::with_capacity(x.rows() * 2);
    for i in 0..x.rows() {
        let r = proj.row(i);
        values.push(r[0]);
        values.push(if p > 1 { r[1] } else { (rng.normal() * 1e-4) as f32 });
    }
    Embedding::new(x.rows(), values)
}

/// Rescales each axis of `e` to zero mean and the given standard deviation.
/// Axes with no spread are left centered.
pub fn standardize_axes(e: &mut Embedding, target_std: f64) {
    let n = e.rows() as f64;
    for axis in 0..2 {
        let vals = e.values_mut();
        let mean = vals.iter().skip(axis).step_by(2).map(|&v| v as f64).sum::<f64>() / n;
        let var = vals
            .iter()
            .skip(axis)
            .step_by(2)
            .map(|&v| (v as f64 - mean).powi(2))
            .sum::<f64>()
            / n;
        let s = if var.sqrt() > ZERO_STD {
            target_std / var.sqrt()
        } else {
            1.0
        };
        for v in vals.iter_mut().skip(axis).step_by(2) {
            *v = ((*v as f64 - mean) * s) as f32;
        }
    }
}

/// Rescales `e` jointly so that its first axis has the given standard
/// deviation, preserving the aspect ratio.
pub fn scale_to_std(e: &mut Embedding, target_std: f64) {
    let vals = e.values_mut();
    let n = (vals.len() / 2) as f64;
    let mean0 = vals.iter().step_by(2).map(|&v| v as f64).sum::<f64>() / n;
    let mean1 = vals.iter().skip(1).step_by(2).map(|&v| v as f64).sum::<f64>() / n;
    let var = vals
        .iter()
        .step_by(2)
        .map(|&v| (v as f64 - mean0).powi(2))
        .sum::<f64>()
        / n;
    let s = if var.sqrt() > ZERO_STD {
        target_std / var.sqrt()
    } else {
        1.0
    };
    for p in vals.chunks_exact_mut(2) {
        p[0] = ((p[0] as f64 - mean0) * s) as f32;
        p[1] = ((p[1] as f64 - mean1) * s) as f32;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn col(values: &[f32]) -> DataMatrix {
        DataMatrix::new(values.len(), 1, values.to_vec()).unwrap()
    }

    fn gaussian(n: usize, d: usize, seed: u64) -> DataMatrix {
        let mut rng = RandomSource::new(seed);
        let v = (0..n * d).map(|_| rng.normal() as f32).collect();
        DataMatrix::new(n, d, v).unwrap()
    }

    #[test]
    fn standard_closed_form() {
        let z = normalize_standard(&col(&[1.0, 2.0, 3.0]));
        let e = 1.0 / (2.0f32 / 3.0).sqrt();
        for (a, b) in z.values().iter().zip([-e, 0.0, e]) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
        assert!((e - 1.2247).abs() < 1e-4);
    }

    #[test]
    fn standard_constant_column_is_zero() {
        assert_eq!(normalize_standard(&col(&[5.0, 5.0, 5.0])).values(), &[0.0; 3]);
    }

    #[test]
    fn minmax_examples() {
        assert_eq!(normalize_minmax(&col(&[2.0, 4.0, 6.0])).values(), &[0.0, 0.5, 1.0]);
        assert_eq!(normalize_minmax(&col(&[-1.0, 1.0])).values(), &[0.0, 1.0]);
        assert_eq!(normalize_minmax(&col(&[7.0, 7.0])).values(), &[0.0, 0.0]);
    }

    #[test]
    fn collinear_pca() {
        let x = DataMatrix::from_rows(&[vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0]]).unwrap();
        let m = pca_fit(&x, 2).unwrap();
        let h = std::f32::consts::FRAC_1_SQRT_2;
        assert!((m.component(0)[0] - h).abs() < 1e-6);
        assert!((m.component(0)[1] - h).abs() < 1e-6);
        assert!((m.explained_variance[0] - 4.0 / 3.0).abs() < 1e-5);
        assert!(m.explained_variance[1].abs() < 1e-6);
    }

    #[test]
    fn out_of_range_components() {
        let x = gaussian(5, 3, 1);
        assert!(pca_fit(&x, 0).is_err());
        assert!(pca_fit(&x, 4).is_err());
    }

    #[test]
    fn full_rank_round_trip() {
        for (n, d) in [(40, 6), (5, 9)] {
            let x = gaussian(n, d, 2);
            let p = n.min(d);
            let m = pca_fit(&x, p).unwrap();
            let proj = pca_project(&m, &x).unwrap();
            // With p = d the projection is invertible; with d > n the data lie
            // in the span of the n-1 non-trivial components.
            for i in 0..n {
                for j in 0..d {
                    let rec: f32 = m.mean[j]
                        + (0..p).map(|k| proj.get(i, k) * m.component(k)[j]).sum::<f32>();
                    assert!((rec - x.get(i, j)).abs() < 1e-4, "({i},{j})");
                }
            }
        }
    }

    #[test]
    fn isotropic_cloud_has_flat_spectrum() {
        let x = gaussian(10_000, 5, 3);
        let m = pca_fit(&x, 5).unwrap();
        let max = m.explained_variance[0];
        let min = m.explained_variance[4];
        assert!((max - min) / max < 0.1, "{:?}", m.explained_variance);
    }

    #[test]
    fn project_mean_is_zero() {
        let x = gaussian(30, 4, 4);
        let m = pca_fit(&x, 2).unwrap();
        let mean = DataMatrix::new(1, 4, m.mean.clone()).unwrap();
        let p = pca_project(&m, &mean).unwrap();
        assert!(p.values().iter().all(|v| v.abs() < 1e-6));
        let wrong = DataMatrix::zeros(1, 3);
        assert!(pca_project(&m, &wrong).is_err());
    }

    #[test]
    fn identity_components_center_the_data() {
        let x = DataMatrix::from_rows(&[vec![1.0, 5.0], vec![3.0, 1.0]]).unwrap();
        let m = PcaModel {
            mean: vec![2.0, 3.0],
            components: vec![1.0, 0.0, 0.0, 1.0],
            explained_variance: vec![1.0, 1.0],
            dim: 2,
        };
        assert_eq!(pca_project(&m, &x).unwrap().values(), &[-1.0, 2.0, 1.0, -2.0]);
    }

    #[test]
    fn projected_variance_matches_and_is_uncorrelated() {
        let mut x = gaussian(500, 6, 5);
        for i in 0..500 {
            let r = x.row_mut(i);
            r[1] += 2.0 * r[0];
            r[2] *= 3.0;
        }
        let m = pca_fit(&x, 4).unwrap();
        let proj = pca_project(&m, &x).unwrap();
        let (_, var) = column_moments(&proj);
        for k in 0..4 {
            assert!((var[k] as f32 - m.explained_variance[k]).abs() < 1e-3);
        }
        for a in 0..4 {
            for b in (a + 1)..4 {
                let cov: f64 = (0..500)
                    .map(|i| proj.get(i, a) as f64 * proj.get(i, b) as f64)
                    .sum::<f64>()
                    / 500.0;
                assert!(cov.abs() < 1e-3 * var[0]);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn standard_is_idempotent(seed in any::<u64>(), n in 2usize..40, d in 1usize..6) {
            let x = gaussian(n, d, seed);
            let once = normalize_standard(&x);
            let twice = normalize_standard(&once);
            for (a, b) in once.values().iter().zip(twice.values()) {
                prop_assert!((a - b).abs() < 1e-5);
            }
        }

        #[test]
        fn components_are_orthonormal(seed in any::<u64>(), n in 3usize..30, d in 2usize..12) {
            let x = gaussian(n, d, seed);
            let p = n.min(d);
            let m = pca_fit(&x, p).unwrap();
            for a in 0..p {
                for b in 0..p {
                    let dot: f32 = m.component(a).iter().zip(m.component(b)).map(|(u, v)| u * v).sum();
                    let want = if a == b { 1.0 } else { 0.0 };
                    prop_assert!((dot - want).abs() < 1e-4, "{a},{b}: {dot}");
                }
            }
            for w in m.explained_variance.windows(2) {
                prop_assert!(w[0] >= w[1] && w[1] >= 0.0);
            }
        }
    }
}
