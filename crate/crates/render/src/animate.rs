//! Frame planning, embedding interpolation and frame encoding.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::str::FromStr;
use std::sync::mpsc::sync_channel;
use std::sync::Arc;

use dimred::{Embedding, EmbeddingTrace};

use crate::error::{RenderError, Result};
use crate::raster::{render, write_png, Bounds, RenderConfig, RgbImage};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Ease {
    #[default]
    Linear,
    CubicInOut,
}

impl Ease {
    /// Maps `t` in `[0, 1]` onto interpolation weight.
    pub fn apply(self, t: f64) -> f64 {
        match self {
            Ease::Linear => t,
            Ease::CubicInOut => t * t * (3.0 - 2.0 * t),
        }
    }
}

impl FromStr for Ease {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "linear" => Ok(Ease::Linear),
            "cubic_in_out" | "cubic" => Ok(Ease::CubicInOut),
            other => Err(format!("unknown easing '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameSchedule {
    pub intro_hold: usize,
    pub outro_hold: usize,
    pub frames_per_snapshot: usize,
    pub fps: u32,
    pub ease: Ease,
}

impl Default for FrameSchedule {
    fn default() -> Self {
        Self {
            intro_hold: 0,
            outro_hold: 0,
            frames_per_snapshot: 1,
            fps: 60,
            ease: Ease::Linear,
        }
    }
}

impl FrameSchedule {
    pub fn holds(intro: usize, outro: usize) -> Self {
        Self {
            intro_hold: intro,
            outro_hold: outro,
            ..Self::default()
        }
    }

    pub fn total_frames(&self, snapshots: usize) -> usize {
        self.intro_hold + self.frames_per_snapshot * snapshots + self.outro_hold
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameEntry {
    pub snapshot: usize,
    pub is_hold: bool,
}

/// Ordered frames plus the world-space bounds shared by all of them.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePlan {
    pub entries: Vec<FrameEntry>,
    /// Union of every snapshot's bounding box, before margin.
    pub bounds: Bounds,
    pub fps: u32,
}

impl FramePlan {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Copy of `base` pinned to the plan's margin-expanded bounds.
    pub fn render_config(&self, base: &RenderConfig) -> RenderConfig {
        RenderConfig {
            fixed_bounds: Some(self.bounds.expand(base.margin)),
            ..base.clone()
        }
    }

    pub fn distinct_snapshots(&self) -> usize {
        let mut ids: Vec<usize> = self.entries.iter().map(|e| e.snapshot).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }
}

/// Intro holds on the first snapshot, each snapshot once (further repeats are
/// holds), then outro holds on the last.
pub fn schedule(trace: &EmbeddingTrace, cfg: &FrameSchedule) -> Result<FramePlan> {
    let n = trace.len();
    let bounds = trace.bounds().ok_or(RenderError::EmptyTrace)?;
    if cfg.frames_per_snapshot == 0 {
        return Err(RenderError::Config("frames_per_snapshot must be >= 1".into()));
    }
    if cfg.fps == 0 {
        return Err(RenderError::Config("fps must be >= 1".into()));
    }
    let mut entries = Vec::with_capacity(cfg.total_frames(n));
    let hold = |snapshot| FrameEntry {
        snapshot,
        is_hold: true,
    };
    entries.extend((0..cfg.intro_hold).map(|_| hold(0)));
    for s in 0..n {
        entries.push(FrameEntry {
            snapshot: s,
            is_hold: false,
        });
        entries.extend((1..cfg.frames_per_snapshot).map(|_| hold(s)));
    }
    entries.extend((0..cfg.outro_hold).map(|_| hold(n - 1)));
    Ok(FramePlan {
        entries,
        bounds: Bounds::new(bounds.0, bounds.1, bounds.2, bounds.3),
        fps: cfg.fps,
    })
}

/// `frames` snapshots sweeping from `a` to `b`; the first is `a` and the last
/// is `b`, bit for bit.
pub fn morph(a: &Embedding, b: &Embedding, frames: usize, ease: Ease) -> Result<EmbeddingTrace> {
    if a.rows() != b.rows() {
        return Err(RenderError::Shape(format!(
            "cannot morph {} rows into {}",
            a.rows(),
            b.rows()
        )));
    }
    if frames < 2 {
        return Err(RenderError::Config("morph needs at least 2 frames".into()));
    }
    let mut trace = EmbeddingTrace::new();
    for f in 0..frames {
        let e = ease.apply(f as f64 / (frames - 1) as f64) as f32;
        let values = a
            .values()
            .iter()
            .zip(b.values())
            .map(|(&p, &q)| (1.0 - e) * p + e * q)
            .collect();
        trace.push(f, Embedding::new(a.rows(), values)?)?;
    }
    Ok(trace)
}

/// Destination for resolved frames.
pub trait FrameSink {
    fn write_frame(&mut self, img: &RgbImage) -> Result<()>;
    fn finish(&mut self) -> Result<()>;
    fn frames_written(&self) -> usize;
}

/// `frame_000000.png`, `frame_000001.png`, ... in one directory.
#[derive(Debug)]
pub struct PngSequence {
    dir: PathBuf,
    count: usize,
}

impl PngSequence {
    pub fn create(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir, count: 0 })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn frame_path(&self, i: usize) -> PathBuf {
        self.dir.join(format!("frame_{i:06}.png"))
    }
}

impl FrameSink for PngSequence {
    fn write_frame(&mut self, img: &RgbImage) -> Result<()> {
        write_png(img, self.frame_path(self.count))?;
        self.count += 1;
        Ok(())
    }

    fn finish(&mut self) -> Result<()> {
        Ok(())
    }

    fn frames_written(&self) -> usize {
        self.count
    }
}

/// Collects the raw RGB stream in memory.
#[derive(Debug, Default)]
pub struct MemorySink {
    pub stream: Vec<u8>,
    pub count: usize,
}

impl FrameSink for MemorySink {
    fn write_frame(&mut self, img: &RgbImage) -> Result<()> {
        self.stream.extend_from_slice(&img.data);
        self.count += 1;
        Ok(())
    }

    fn finish(&mut self) -> Result<()> {
        Ok(())
    }

    fn frames_written(&self) -> usize {
        self.count
    }
}

/// H.264 via ffmpeg, reading raw RGB24 frames from stdin.
pub const DEFAULT_ENCODER: &str = "ffmpeg -y -loglevel error -f rawvideo -pix_fmt rgb24 \
     -s {width}x{height} -r {fps} -i - -c:v libx264 -pix_fmt yuv420p {output}";

/// Expands `{width}`, `{height}`, `{fps}` and `{output}` in each word of a
/// shell-style command template.
pub fn encoder_command(
    template: &str,
    width: usize,
    height: usize,
    fps: u32,
    output: &Path,
) -> Result<Vec<String>> {
    let words = shell_words::split(template)
        .map_err(|e| RenderError::Config(format!("encoder command: {e}")))?;
    if words.is_empty() {
        return Err(RenderError::Config("empty encoder command".into()));
    }
    let out = output.to_string_lossy();
    Ok(words
        .into_iter()
        .map(|w| {
            w.replace("{width}", &width.to_string())
                .replace("{height}", &height.to_string())
                .replace("{fps}", &fps.to_string())
                .replace("{output}", &out)
        })
        .collect())
}

/// Pipes frames into an external process.
#[derive(Debug)]
pub struct EncoderSink {
    child: Child,
    stdin: Option<ChildStdin>,
    count: usize,
}

impl EncoderSink {
    pub fn spawn(argv: &[String]) -> io::Result<Self> {
        let mut child = Command::new(&argv[0])
            .args(&argv[1..])
            .stdin(Stdio::piped())
            .spawn()?;
        let stdin = child.stdin.take();
        Ok(Self {
            child,
            stdin,
            count: 0,
        })
    }

    fn exited(&mut self) -> RenderError {
        self.stdin = None;
        match self.child.wait() {
            Ok(status) => RenderError::EncoderExited { status },
            Err(e) => e.into(),
        }
    }
}

impl FrameSink for EncoderSink {
    fn write_frame(&mut self, img: &RgbImage) -> Result<()> {
        if let Ok(Some(status)) = self.child.try_wait() {
            self.stdin = None;
            return Err(RenderError::EncoderExited { status });
        }
        let Some(stdin) = self.stdin.as_mut() else {
            return Err(self.exited());
        };
        match stdin.write_all(&img.data) {
            Ok(()) => {
                self.count += 1;
                Ok(())
            }
            Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Err(self.exited()),
            Err(e) => Err(e.into()),
        }
    }

    fn finish(&mut self) -> Result<()> {
        if let Some(mut stdin) = self.stdin.take() {
            if let Err(e) = stdin.flush() {
                if e.kind() != io::ErrorKind::BrokenPipe {
                    return Err(e.into());
                }
            }
        }
        let status = self.child.wait()?;
        if status.success() {
            Ok(())
        } else {
            Err(RenderError::EncoderExited { status })
        }
    }

    fn frames_written(&self) -> usize {
        self.count
    }
}

/// Where frames for `output` go when the encoder cannot be started:
/// `<dir>/<stem>_frames/`.
pub fn fallback_dir(output: &Path) -> PathBuf {
    let stem = output
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "animation".into());
    output
        .parent()
        .unwrap_or(Path::new(""))
        .join(format!("{stem}_frames"))
}

/// Starts the encoder, or falls back to a PNG sequence if it cannot be spawned.
pub fn open_encoder(
    template: &str,
    width: usize,
    height: usize,
    fps: u32,
    output: &Path,
) -> Result<Box<dyn FrameSink>> {
    let argv = encoder_command(template, width, height, fps, output)?;
    match EncoderSink::spawn(&argv) {
        Ok(sink) => Ok(Box::new(sink)),
        Err(e) => {
            let dir = fallback_dir(output);
            log::warn!(
                "could not start encoder '{}': {e}; writing PNG frames to {}",
                argv[0],
                dir.display()
            );
            Ok(Box::new(PngSequence::create(dir)?))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncodeStats {
    pub frames: usize,
    pub renders: usize,
}

/// Renders and writes every frame of `plan` in order. A snapshot is rendered
/// only when it differs from the previous frame's; otherwise the previous
/// image is reused. With `pipelined`, rendering of frame n+1 overlaps the
/// write of frame n and at most two frames are in flight.
pub fn encode<R>(
    plan: &FramePlan,
    mut renderer: R,
    sink: &mut dyn FrameSink,
    pipelined: bool,
) -> Result<EncodeStats>
where
    R: FnMut(usize) -> Result<RgbImage> + Send,
{
    let mut renders = 0;
    let mut frames = 0;
    let mut produce = |last: &mut Option<(usize, Arc<RgbImage>)>, snap: usize| -> Result<Arc<RgbImage>> {
        match last {
            Some((s, img)) if *s == snap => Ok(Arc::clone(img)),
            _ => {
                let img = Arc::new(renderer(snap)?);
                renders += 1;
                *last = Some((snap, Arc::clone(&img)));
                Ok(img)
            }
        }
    };
    if !pipelined {
        let mut last = None;
        for entry in &plan.entries {
            let img = produce(&mut last, entry.snapshot)?;
            sink.write_frame(&img)?;
            frames += 1;
        }
    } else {
        std::thread::scope(|scope| -> Result<()> {
            let (tx, rx) = sync_channel::<Result<Arc<RgbImage>>>(0);
            let worker = scope.spawn(move || {
                let mut last = None;
                for entry in &plan.entries {
                    let item = produce(&mut last, entry.snapshot);
                    let failed = item.is_err();
                    if tx.send(item).is_err() || failed {
                        break;
                    }
                }
            });
            let mut outcome = Ok(());
            for item in rx.iter() {
                match item.and_then(|img| sink.write_frame(&img)) {
                    Ok(()) => frames += 1,
                    Err(e) => {
                        outcome = Err(e);
                        break;
                    }
                }
            }
            drop(rx);
            worker.join().expect("render thread panicked");
            outcome
        })?;
    }
    sink.finish()?;
    Ok(EncodeStats { frames, renders })
}

/// Renders a trace with one viewport for the whole plan.
pub fn animate_trace(
    trace: &EmbeddingTrace,
    schedule_cfg: &FrameSchedule,
    render_cfg: &RenderConfig,
    labels: Option<&[u32]>,
    sink: &mut dyn FrameSink,
    pipelined: bool,
) -> Result<EncodeStats> {
    let plan = schedule(trace, schedule_cfg)?;
    let cfg = plan.render_config(render_cfg);
    let snaps = trace.snapshots();
    encode(&plan, |i| render(&snaps[i], labels, &cfg), sink, pipelined)
}
