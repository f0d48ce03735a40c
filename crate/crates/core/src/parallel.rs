use rayon::prelude::*;

/// Maps `f` over `0..n`, on the rayon pool unless `sequential` is set. Each
/// output slot depends only on its own index, so both paths return identical
/// results.
pub(crate) fn map_indices<T, F>(n: usize, sequential: bool, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if sequential {
        (0..n).map(f).collect()
    } else {
        (0..n).into_par_iter().map(f).collect()
    }
}
