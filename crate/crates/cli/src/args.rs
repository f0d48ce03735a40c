use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dimred::{Method, Normalize};
use dimred_render::Ease;

use crate::ingest::{Format, LabelCol};

#[derive(Debug, Parser)]
#[command(name = "dimred", version, about = "Dimensionality reduction, rendering and animation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Embed a dataset in 2-D.
    Embed(EmbedArgs),
    /// Draw an embedding as a PNG scatter plot.
    Render(RenderArgs),
    /// Animate a recorded trace.
    Animate(AnimateArgs),
    /// Animate the interpolation between two embeddings.
    Morph(MorphArgs),
    /// Export a k-nearest-neighbor graph.
    Knn(KnnArgs),
    /// Time every method on one dataset.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// csv or mxv; inferred from the extension when omitted.
    #[arg(long)]
    pub format: Option<Format>,
    /// CSV column holding integer labels: `last` or a 0-based index.
    #[arg(long)]
    pub label_col: Option<LabelCol>,
    /// File with one integer label per line.
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KnnChoice {
    Auto,
    Exact,
    Nndescent,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[arg(long, default_value_t = 15)]
    pub n_neighbors: usize,
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    #[arg(long, default_value = "standard")]
    pub normalize: Normalize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "auto")]
    pub knn: KnnChoice,
    /// PCA dimensions applied before neighbor search; 0 disables.
    #[arg(long, default_value_t = 100)]
    pub pca_dims: usize,
    /// Single-threaded, bit-reproducible execution.
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub method: Method,
    #[command(flatten)]
    pub fit: FitArgs,
    /// Embedding output; `.csv` writes text (with labels when known), anything
    /// else MXV.
    #[arg(long)]
    pub output: PathBuf,
    /// Also record per-epoch snapshots to this MXT file.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Keep every n-th epoch in the trace (the last epoch is always kept).
    #[arg(long, default_value_t = 1)]
    pub trace_every: usize,
}

#[derive(Debug, Clone, Args)]
pub struct StyleArgs {
    /// Square canvas edge in pixels.
    #[arg(long, default_value_t = 1000)]
    pub size: usize,
    #[arg(long, default_value_t = 2.0)]
    pub radius: f32,
    #[arg(long, default_value_t = 0.6)]
    pub alpha: f32,
    /// Palette file with one `#RRGGBB` per line.
    #[arg(long)]
    pub palette: Option<PathBuf>,
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub style: StyleArgs,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct VideoArgs {
    #[arg(long, default_value_t = 60)]
    pub fps: u32,
    /// Hold frames before and after: `N` or `INTRO,OUTRO`.
    #[arg(long, default_value = "0")]
    pub hold: Hold,
    #[arg(long, default_value_t = 1)]
    pub frames_per_snapshot: usize,
    /// Encoder command template; `{width}`, `{height}`, `{fps}` and `{output}`
    /// are substituted.
    #[arg(long)]
    pub encoder_cmd: Option<String>,
    /// Write a PNG sequence into the output directory instead of encoding.
    #[arg(long)]
    pub png: bool,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hold {
    pub intro: usize,
    pub outro: usize,
}

impl std::str::FromStr for Hold {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parse = |t: &str| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| format!("invalid hold '{s}'"))
        };
        match s.split_once(',') {
            Some((a, b)) => Ok(Hold {
                intro: parse(a)?,
                outro: parse(b)?,
            }),
            None => {
                let n = parse(s)?;
                Ok(Hold { intro: n, outro: n })
            }
        }
    }
}

#[derive(Debug, Args)]
pub struct AnimateArgs {
    /// MXT trace written by `embed --trace`.
    #[arg(long)]
    pub trace: PathBuf,
    /// File with one integer label per line.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[command(flatten)]
    pub style: StyleArgs,
    #[command(flatten)]
    pub video: VideoArgs,
}

#[derive(Debug, Args)]
pub struct MorphArgs {
    #[arg(long)]
    pub from: PathBuf,
    #[arg(long)]
    pub to: PathBuf,
    #[arg(long, default_value_t = 60)]
    pub frames: usize,
    #[arg(long, default_value = "cubic_in_out")]
    pub ease: Ease,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[command(flatten)]
    pub style: StyleArgs,
    #[command(flatten)]
    pub video: VideoArgs,
}

#[derive(Debug, Args)]
pub struct KnnArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = 15)]
    pub n_neighbors: usize,
    #[arg(long, value_enum, default_value = "auto")]
    pub knn: KnnChoice,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub sequential: bool,
    /// Neighbor indices (MXI).
    #[arg(long)]
    pub output: PathBuf,
    /// Euclidean neighbor distances (MXV).
    #[arg(long)]
    pub distances: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Dataset; a synthetic Gaussian mixture is generated when omitted.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub format: Option<Format>,
    #[arg(long)]
    pub label_col: Option<LabelCol>,
    /// Synthetic rows.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Synthetic dimensions.
    #[arg(long, default_value_t = 50)]
    pub dims: usize,
    /// Comma-separated method names; all methods when omitted.
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<Method>,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[command(flatten)]
    pub fit: FitArgs,
    /// Animation plan `INTRO,EPOCH_FRAMES,OUTRO`; `0,0,0` skips animation.
    #[arg(long, default_value = "30,740,30")]
    pub anim: AnimPlan,
    #[arg(long, default_value_t = 1000)]
    pub size: usize,
    /// Pipe animation frames to this encoder instead of discarding them.
    #[arg(long)]
    pub encoder_cmd: Option<String>,
    /// CSV report path.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnimPlan {
    pub intro: usize,
    pub epochs: usize,
    pub outro: usize,
}

impl AnimPlan {
    pub fn total(&self) -> usize {
        self.intro + self.epochs + self.outro
    }
}

impl std::str::FromStr for AnimPlan {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|t| t.trim().parse())
            .collect::<Result<_, _>>()
            .map_err(|_| format!("invalid animation plan '{s}'"))?;
        match parts[..] {
            [intro, epochs, outro] => Ok(AnimPlan { intro, epochs, outro }),
            _ => Err(format!("animation plan '{s}' needs three counts")),
        }
    }
}
