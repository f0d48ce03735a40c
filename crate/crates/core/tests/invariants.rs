use proptest::prelude::*;

use dimred::cne::{cne_batch, sample_negatives, Batch, CneLoss};
use dimred::knn::exact_knn;
use dimred::nndescent::{nndescent, NnDescentParams};
use dimred::pacmap::{pacmap_losses, sample_pairs, PacmapParams};
use dimred::trimap::{sample_triplets, trimap_loss, TrimapParams};
use dimred::tsne::calibrate_perplexity;
use dimred::umap::{build_fuzzy_graph, smooth_knn_calibrate};
use dimred::{DataMatrix, RandomSource};

fn matrix(n: usize, d: usize, seed: u64) -> DataMatrix {
    let mut rng = RandomSource::new(seed);
    DataMatrix::new(n, d, (0..n * d).map(|_| rng.normal() as f32).collect()).unwrap()
}

fn layout(n: usize, seed: u64, scale: f64) -> Vec<f64> {
    let mut rng = RandomSource::new(seed ^ 0xabc);
    (0..2 * n).map(|_| rng.normal() * scale).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn affinities_are_symmetric_and_normalized(n in 12usize..50, d in 1usize..6, seed in any::<u64>(), perp in 2.0f64..4.0) {
        let x = matrix(n, d, seed);
        let g = exact_knn(&x, ((3.0 * perp) as usize).min(n - 1), true).unwrap();
        let p = calibrate_perplexity(&g, perp).unwrap();
        prop_assert!((p.sum() - 1.0).abs() < 1e-6);
        for (i, j, v) in p.entries() {
            prop_assert!(v >= 0.0);
            prop_assert_ne!(i, j);
            prop_assert_eq!(p.get(j, i).to_bits(), v.to_bits());
        }
    }

    #[test]
    fn fuzzy_graph_is_symmetric(n in 8usize..50, d in 1usize..6, seed in any::<u64>(), k in 2usize..7) {
        let x = matrix(n, d, seed);
        let g = exact_knn(&x, k, true).unwrap();
        let (rho, sigma) = smooth_knn_calibrate(&g, (k as f64).log2());
        let fg = build_fuzzy_graph(&g, &rho, &sigma);
        for &(i, j, w) in &fg.edges {
            let back = fg.edges.binary_search_by(|e| (e.0, e.1).cmp(&(j, i)));
            prop_assert!(back.is_ok());
            prop_assert_eq!(fg.edges[back.unwrap()].2.to_bits(), w.to_bits());
            prop_assert!(w > 0.0 && w <= 1.0);
        }
    }

    #[test]
    fn nndescent_graphs_are_valid(n in 10usize..120, d in 1usize..6, seed in any::<u64>(), k in 1usize..8) {
        let x = matrix(n, d, seed);
        let g = nndescent(&x, &NnDescentParams::with_k(k), &mut RandomSource::new(seed), true).unwrap();
        prop_assert!(g.check().is_ok());
        for i in 0..n {
            prop_assert!(!g.neighbors(i).contains(&(i as u32)));
        }
    }

    #[test]
    fn pacmap_loss_is_finite_and_non_negative(seed in any::<u64>(), scale in 1e-3f64..1e3) {
        let x = matrix(40, 4, seed);
        let g = exact_knn(&x, 20, true).unwrap();
        let pairs = sample_pairs(&x, &g, &PacmapParams::default(), &mut RandomSource::new(seed)).unwrap();
        let y = layout(40, seed, scale);
        for w in [(2.0, 1000.0, 1.0), (3.0, 3.0, 1.0), (1.0, 0.0, 1.0)] {
            let (l, grad) = pacmap_losses(&y, &pairs, w);
            prop_assert!(l.is_finite() && l >= 0.0);
            prop_assert!(grad.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn trimap_loss_bounded_and_translation_invariant(seed in any::<u64>(), scale in 1e-2f64..1e2, shift in -50.0f64..50.0) {
        let x = matrix(30, 4, seed);
        let g = exact_knn(&x, 20, true).unwrap();
        let set = sample_triplets(&x, &g, &TrimapParams::default(), &mut RandomSource::new(seed)).unwrap();
        let y = layout(30, seed, scale);
        let (l, _) = trimap_loss(&y, &set);
        let total: f64 = set.weights.iter().sum();
        prop_assert!(l.is_finite() && l >= 0.0 && l <= total);
        let moved: Vec<f64> = y.iter().map(|v| v + shift).collect();
        let (lm, _) = trimap_loss(&moved, &set);
        prop_assert!((l - lm).abs() <= 1e-6 * l.max(1.0));
    }

    #[test]
    fn infonce_loss_is_non_negative(seed in any::<u64>(), scale in 1e-2f64..1e2, m in 1usize..6) {
        let n = 25;
        let mut rng = RandomSource::new(seed);
        let edges: Vec<(u32, u32)> = (0..n as u32).map(|i| (i, (i + 1) % n as u32)).collect();
        let negatives = sample_negatives(&edges, n, m, &mut rng);
        let batch = Batch { edges, negatives, m };
        let y = layout(n, seed, scale);
        for loss in [CneLoss::InfoNce, CneLoss::NegSampling] {
            let bg = cne_batch(&y, &batch, loss, true);
            prop_assert!(bg.loss.is_finite() && bg.loss >= 0.0);
        }
    }
}
