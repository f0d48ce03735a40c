//! Point-splatting rasterizer, PNG output and embedding animation.

pub mod animate;
pub mod error;
pub mod palette;
pub mod raster;

pub use animate::{
    animate_trace, encode, morph, open_encoder, schedule, Ease, EncodeStats, FrameEntry,
    FramePlan, FrameSchedule, FrameSink, MemorySink, PngSequence, DEFAULT_ENCODER,
};
pub use error::{RenderError, Result};
pub use palette::{default_palette, load_palette, parse_palette, Color};
pub use raster::{
    map_to_pixels, read_png, render, resolve, splat, write_png, Bounds, Framebuffer,
    RenderConfig, RgbImage,
};
