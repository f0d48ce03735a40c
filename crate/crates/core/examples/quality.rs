use dimred::metrics::label_purity;
use dimred::synthetic::three_clusters;
use dimred::{fit_transform, EmbedderConfig, Method};

fn main() {
    let methods: Vec<Method> = std::env::args().skip(1).map(|s| s.parse().unwrap()).collect();
    let methods = if methods.is_empty() { Method::ALL.to_vec() } else { methods };
    let (x, labels) = three_clusters(0);
    for m in methods {
        let cfg = EmbedderConfig::new(m).with_seed(42);
        let t = std::time::Instant::now();
        let y = fit_transform(&cfg, &x, None).unwrap();
        let b = y.bounds().unwrap();
        println!("{m}: purity {:.4} time {:?} bounds {:?}", label_purity(&y, &labels, 10), t.elapsed(), b);
    }
}
