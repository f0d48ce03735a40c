use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use dimred::embed::neighbor_graph;
use dimred::{io, EmbedderConfig, Embedding, EmbeddingTrace, KnnStrategy, Method, RandomSource};
use dimred_render::animate::open_encoder;
use dimred_render::{
    animate_trace, load_palette, morph, render, write_png, FrameSchedule, FrameSink, PngSequence,
    RenderConfig, DEFAULT_ENCODER,
};

use crate::args::{
    AnimateArgs, EmbedArgs, FitArgs, InputArgs, KnnArgs, KnnChoice, MorphArgs, RenderArgs,
    StyleArgs, VideoArgs,
};
use crate::ingest::{self, parse_labels, Dataset, Format};

pub fn knn_strategy(choice: KnnChoice) -> KnnStrategy {
    match choice {
        KnnChoice::Auto => KnnStrategy::Auto,
        KnnChoice::Exact => KnnStrategy::Exact,
        KnnChoice::Nndescent => KnnStrategy::NnDescent(Default::default()),
    }
}

pub fn embedder_config(method: Method, fit: &FitArgs) -> EmbedderConfig {
    let mut cfg = EmbedderConfig::new(method)
        .with_seed(fit.seed)
        .with_epochs(fit.epochs)
        .with_neighbors(fit.n_neighbors)
        .sequential(fit.sequential);
    cfg.normalize = fit.normalize;
    cfg.knn = knn_strategy(fit.knn);
    cfg.pca_dims = (fit.pca_dims > 0).then_some(fit.pca_dims);
    cfg
}

fn load(input: &InputArgs) -> Result<Dataset> {
    ingest::ingest(
        &input.input,
        input.format,
        input.label_col,
        input.labels.as_deref(),
    )
}

fn load_labels(path: Option<&Path>, rows: usize) -> Result<Option<Vec<u32>>> {
    let Some(p) = path else { return Ok(None) };
    let text = fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
    let labels = parse_labels(&text).with_context(|| format!("{}", p.display()))?;
    if labels.len() != rows {
        bail!("{}: {} labels for {rows} points", p.display(), labels.len());
    }
    Ok(Some(labels))
}

/// `x,y[,label]` per line in shortest round-trip notation.
pub fn embedding_csv(y: &Embedding, labels: Option<&[u32]>) -> String {
    let mut out = String::with_capacity(y.rows() * 24);
    for i in 0..y.rows() {
        let [a, b] = y.point(i);
        match labels {
            Some(l) => writeln!(out, "{a},{b},{}", l[i]),
            None => writeln!(out, "{a},{b}"),
        }
        .expect("writing to a String");
    }
    out
}

fn save_embedding(path: &Path, y: &Embedding, labels: Option<&[u32]>) -> Result<()> {
    match Format::infer(path) {
        Format::Csv => fs::write(path, embedding_csv(y, labels))?,
        Format::Mxv => io::save_embedding(path, y)?,
    }
    Ok(())
}

pub fn run_embed(a: &EmbedArgs) -> Result<()> {
    let ds = load(&a.input)?;
    let cfg = embedder_config(a.method, &a.fit);
    log::info!(
        "{} on {}x{} ({} epochs, seed {})",
        a.method,
        ds.matrix.rows(),
        ds.matrix.cols(),
        cfg.epochs,
        cfg.seed
    );
    let y = match &a.trace {
        Some(path) => {
            let (y, trace) = dimred::fit_trace(&cfg, &ds.matrix, a.trace_every)?;
            io::save_trace(path, &trace)
                .with_context(|| format!("cannot write {}", path.display()))?;
            y
        }
        None => dimred::fit_transform(&cfg, &ds.matrix, None)?,
    };
    save_embedding(&a.output, &y, ds.labels.as_deref())
        .with_context(|| format!("cannot write {}", a.output.display()))
}

pub fn render_config(style: &StyleArgs) -> Result<RenderConfig> {
    let mut cfg = RenderConfig::square(style.size);
    cfg.radius = style.radius;
    cfg.alpha = style.alpha;
    cfg.sequential = style.sequential;
    if let Some(p) = &style.palette {
        cfg.palette = load_palette(p)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn as_embedding(ds: Dataset, what: &Path) -> Result<(Embedding, Option<Vec<u32>>)> {
    let y = Embedding::from_matrix(ds.matrix).with_context(|| format!("{}", what.display()))?;
    Ok((y, ds.labels))
}

pub fn run_render(a: &RenderArgs) -> Result<()> {
    let cfg = render_config(&a.style)?;
    let (y, labels) = as_embedding(load(&a.input)?, &a.input.input)?;
    let img = render(&y, labels.as_deref(), &cfg)?;
    write_png(&img, &a.output).with_context(|| format!("cannot write {}", a.output.display()))
}

fn open_sink(v: &VideoArgs, size: usize) -> Result<Box<dyn FrameSink>> {
    if v.png {
        return Ok(Box::new(PngSequence::create(&v.output)?));
    }
    let template = v.encoder_cmd.as_deref().unwrap_or(DEFAULT_ENCODER);
    Ok(open_encoder(template, size, size, v.fps, &v.output)?)
}

fn play(
    trace: &EmbeddingTrace,
    labels: Option<&[u32]>,
    style: &StyleArgs,
    v: &VideoArgs,
) -> Result<()> {
    let cfg = render_config(style)?;
    let sched = FrameSchedule {
        intro_hold: v.hold.intro,
        outro_hold: v.hold.outro,
        frames_per_snapshot: v.frames_per_snapshot,
        fps: v.fps,
        ..FrameSchedule::default()
    };
    let mut sink = open_sink(v, style.size)?;
    let stats = animate_trace(trace, &sched, &cfg, labels, sink.as_mut(), !style.sequential)?;
    log::info!("{} frames, {} renders", stats.frames, stats.renders);
    Ok(())
}

pub fn run_animate(a: &AnimateArgs) -> Result<()> {
    let trace = io::load_trace(&a.trace)
        .with_context(|| format!("cannot load {}", a.trace.display()))?;
    let rows = trace.snapshots().first().map_or(0, Embedding::rows);
    let labels = load_labels(a.labels.as_deref(), rows)?;
    play(&trace, labels.as_deref(), &a.style, &a.video)
}

fn load_embedding(path: &Path) -> Result<Embedding> {
    let ds = ingest::ingest(path, None, None, None)?;
    Ok(as_embedding(ds, path)?.0)
}

pub fn run_morph(a: &MorphArgs) -> Result<()> {
    let from = load_embedding(&a.from)?;
    let to = load_embedding(&a.to)?;
    let trace = morph(&from, &to, a.frames, a.ease)?;
    let labels = load_labels(a.labels.as_deref(), from.rows())?;
    play(&trace, labels.as_deref(), &a.style, &a.video)
}

pub fn run_knn(a: &KnnArgs) -> Result<()> {
    let ds = load(&a.input)?;
    let mut cfg = EmbedderConfig::new(Method::Umap)
        .with_seed(a.seed)
        .sequential(a.sequential);
    cfg.knn = knn_strategy(a.knn);
    let mut rng = RandomSource::new(a.seed);
    let graph = neighbor_graph(&ds.matrix, a.n_neighbors, &cfg, &mut rng)?;
    let (n, k) = (graph.n(), graph.k());
    let mut f = fs::File::create(&a.output)
        .with_context(|| format!("cannot write {}", a.output.display()))?;
    io::write_indices(&mut f, n, k, graph.indices())?;
    if let Some(p) = &a.distances {
        let d = graph.all_sq_distances().iter().map(|v| v.sqrt()).collect();
        let m = dimred::DataMatrix::new(n, k, d)?;
        io::save_matrix(p, &m).with_context(|| format!("cannot write {}", p.display()))?;
    }
    Ok(())
}
