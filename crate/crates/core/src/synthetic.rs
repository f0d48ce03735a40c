//! Synthetic data sets for tests, examples and benchmarking.

use crate::data::DataMatrix;
use crate::rng::RandomSource;

/// `n` points in `d` dimensions drawn from `clusters` unit-variance Gaussians
/// whose centers are themselves drawn from `N(0, center_scale^2)` per
/// coordinate. Points are assigned to clusters round-robin. Returns the data
/// and the cluster label of every row.
pub fn gaussian_mixture(
    n: usize,
    d: usize,
    clusters: usize,
    center_scale: f64,
    seed: u64,
) -> (DataMatrix, Vec<u32>) {
    let mut rng = RandomSource::new(seed);
    let centers: Vec<f64> = (0..clusters * d)
        .map(|_| rng.normal() * center_scale)
        .collect();
    let mut values = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % clusters;
        labels.push(c as u32);
        for j in 0..d {
            values.push((centers[c * d + j] + rng.normal()) as f32);
        }
    }
    (
        DataMatrix::new(n, d, values).expect("length matches"),
        labels,
    )
}

/// The three-cluster reference problem: 3000 points, 50 dimensions, centers
/// scaled by 2 so that every cluster sits well outside the others' noise.
pub fn three_clusters(seed: u64) -> (DataMatrix, Vec<u32>) {
    gaussian_mixture(3000, 50, 3, 2.0, seed)
}
