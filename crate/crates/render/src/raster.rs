//! Viewport mapping, disc splatting into a premultiplied accumulation buffer,
//! and resolution to 8-bit RGB.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rayon::prelude::*;

use dimred::Embedding;

use crate::error::{RenderError, Result};
use crate::palette::{default_palette, Color, WHITE};

/// World-space rectangle `(xmin, xmax, ymin, ymax)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub xmin: f32,
    pub xmax: f32,
    pub ymin: f32,
    pub ymax: f32,
}

impl Bounds {
    pub fn new(xmin: f32, xmax: f32, ymin: f32, ymax: f32) -> Self {
        Self {
            xmin,
            xmax,
            ymin,
            ymax,
        }
    }

    pub fn of(e: &Embedding) -> Option<Self> {
        e.bounds().map(|(a, b, c, d)| Self::new(a, b, c, d))
    }

    /// Grows each side by `margin` times the extent along that axis.
    pub fn expand(self, margin: f32) -> Self {
        let dx = (self.xmax - self.xmin) * margin;
        let dy = (self.ymax - self.ymin) * margin;
        Self::new(self.xmin - dx, self.xmax + dx, self.ymin - dy, self.ymax + dy)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderConfig {
    pub width: usize,
    pub height: usize,
    pub radius: f32,
    pub alpha: f32,
    pub margin: f32,
    pub background: Color,
    pub palette: Vec<Color>,
    /// Used verbatim instead of the margin-expanded data bounds.
    pub fixed_bounds: Option<Bounds>,
    pub sequential: bool,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            width: 1000,
            height: 1000,
            radius: 2.0,
            alpha: 0.6,
            margin: 0.05,
            background: WHITE,
            palette: default_palette(),
            fixed_bounds: None,
            sequential: false,
        }
    }
}

impl RenderConfig {
    pub fn square(size: usize) -> Self {
        Self {
            width: size,
            height: size,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(RenderError::Config("canvas must be at least 1x1".into()));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(RenderError::Config(format!("radius {} must be > 0", self.radius)));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(RenderError::Config(format!("alpha {} must be in (0, 1]", self.alpha)));
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(RenderError::Config(format!("margin {} must be >= 0", self.margin)));
        }
        if self.palette.is_empty() {
            return Err(RenderError::Config("empty palette".into()));
        }
        Ok(())
    }
}

/// Isotropic world-to-pixel transform with the y axis pointing up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Viewport {
    center: [f32; 2],
    scale: f32,
    half: [f32; 2],
}

impl Viewport {
    pub fn new(bounds: Bounds, width: usize, height: usize) -> Self {
        let (ex, ey) = (bounds.xmax - bounds.xmin, bounds.ymax - bounds.ymin);
        let sx = if ex > 0.0 { width as f32 / ex } else { f32::INFINITY };
        let sy = if ey > 0.0 { height as f32 / ey } else { f32::INFINITY };
        let scale = sx.min(sy);
        Self {
            center: [(bounds.xmin + bounds.xmax) * 0.5, (bounds.ymin + bounds.ymax) * 0.5],
            scale: if scale.is_finite() { scale } else { 0.0 },
            half: [width as f32 * 0.5, height as f32 * 0.5],
        }
    }

    /// Continuous pixel position; pixel `(ix, iy)` has its center at
    /// `(ix + 0.5, iy + 0.5)`.
    #[inline]
    pub fn map(&self, x: f32, y: f32) -> [f32; 2] {
        [
            self.half[0] + (x - self.center[0]) * self.scale,
            self.half[1] - (y - self.center[1]) * self.scale,
        ]
    }
}

pub fn viewport(y: &Embedding, cfg: &RenderConfig) -> Viewport {
    let bounds = cfg.fixed_bounds.unwrap_or_else(|| {
        Bounds::of(y)
            .map(|b| b.expand(cfg.margin))
            .unwrap_or(Bounds::new(0.0, 0.0, 0.0, 0.0))
    });
    Viewport::new(bounds, cfg.width, cfg.height)
}

pub fn map_to_pixels(y: &Embedding, cfg: &RenderConfig) -> Vec<[f32; 2]> {
    let vp = viewport(y, cfg);
    (0..y.rows()).map(|i| {
        let p = y.point(i);
        vp.map(p[0], p[1])
    }).collect()
}

/// Premultiplied `(r, g, b, a)` accumulators, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Framebuffer {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Framebuffer {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height * 4],
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 4] {
        let o = (y * self.width + x) * 4;
        [self.data[o], self.data[o + 1], self.data[o + 2], self.data[o + 3]]
    }
}

/// Linear falloff `max(0, 1 - r / R)`.
#[inline]
pub fn falloff(r: f32, radius: f32) -> f32 {
    (1.0 - r / radius).max(0.0)
}

const BAND_ROWS: usize = 16;

/// Pixel columns or rows whose centers lie within `radius` of `p`.
#[inline]
fn span(p: f32, radius: f32, limit: usize) -> (usize, usize) {
    let lo = (p - radius - 0.5).ceil().max(0.0);
    let hi = (p + radius - 0.5).floor().min(limit as f32 - 1.0);
    if hi < lo {
        (1, 0)
    } else {
        (lo as usize, hi as usize)
    }
}

/// Accumulates every point's disc. Each pixel receives contributions in point
/// order, so the result does not depend on the number of threads.
pub fn splat(points: &[[f32; 2]], colors: &[Color], cfg: &RenderConfig) -> Result<Framebuffer> {
    cfg.validate()?;
    if colors.len() != points.len() {
        return Err(RenderError::Shape(format!(
            "{} colors for {} points",
            colors.len(),
            points.len()
        )));
    }
    let (w, h, radius, alpha) = (cfg.width, cfg.height, cfg.radius, cfg.alpha);
    let n_bands = h.div_ceil(BAND_ROWS);
    let mut members: Vec<Vec<u32>> = vec![Vec::new(); n_bands];
    for (i, p) in points.iter().enumerate() {
        if !(p[0].is_finite() && p[1].is_finite()) {
            continue;
        }
        let (y0, y1) = span(p[1], radius, h);
        if y0 > y1 {
            continue;
        }
        for band in &mut members[y0 / BAND_ROWS..=y1 / BAND_ROWS] {
            band.push(i as u32);
        }
    }
    let mut fb = Framebuffer::new(w, h);
    let fill = |band: usize, rows: &mut [f32]| {
        let row0 = band * BAND_ROWS;
        let n_rows = rows.len() / (w * 4);
        for &i in &members[band] {
            let p = points[i as usize];
            let c = colors[i as usize];
            let (x0, x1) = span(p[0], radius, w);
            let (y0, y1) = span(p[1], radius, h);
            let y0 = y0.max(row0);
            let y1 = y1.min(row0 + n_rows - 1);
            for iy in y0..=y1 {
                let dy = iy as f32 + 0.5 - p[1];
                for ix in x0..=x1 {
                    let dx = ix as f32 + 0.5 - p[0];
                    let r = (dx * dx + dy * dy).sqrt();
                    if r > radius {
                        continue;
                    }
                    let a = alpha * falloff(r, radius);
                    let o = ((iy - row0) * w + ix) * 4;
                    rows[o] += a * c[0];
                    rows[o + 1] += a * c[1];
                    rows[o + 2] += a * c[2];
                    rows[o + 3] += a;
                }
            }
        }
    };
    let chunk = BAND_ROWS * w * 4;
    if cfg.sequential {
        fb.data.chunks_mut(chunk).enumerate().for_each(|(b, rows)| fill(b, rows));
    } else {
        fb.data.par_chunks_mut(chunk).enumerate().for_each(|(b, rows)| fill(b, rows));
    }
    Ok(fb)
}

/// Packed 8-bit RGB, top row first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(RenderError::Shape(format!(
                "{} bytes for a {width}x{height} RGB image",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let o = (y * self.width + x) * 3;
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }
}

const ALPHA_GUARD: f32 = 1e-8;

/// `round(255 v)` with halves rounded up, clamped to `[0, 255]`.
#[inline]
pub fn quantize(v: f32) -> u8 {
    (255.0 * v + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Un-premultiplies each pixel and composites it over the background with
/// coverage `min(a, 1)`.
pub fn resolve(fb: &Framebuffer, background: Color) -> RgbImage {
    let mut data = Vec::with_capacity(fb.width * fb.height * 3);
    for px in fb.data.chunks_exact(4) {
        let a = px[3];
        let cov = a.min(1.0);
        let inv = 1.0 / a.max(ALPHA_GUARD);
        for t in 0..3 {
            let color = px[t] * inv;
            data.push(quantize(color * cov + background[t] * (1.0 - cov)));
        }
    }
    RgbImage {
        width: fb.width,
        height: fb.height,
        data,
    }
}

/// Per-point colors: `palette[label % len]`, or the first palette color for
/// every point when there are no labels.
pub fn point_colors(n: usize, labels: Option<&[u32]>, palette: &[Color]) -> Result<Vec<Color>> {
    match labels {
        Some(l) if l.len() != n => Err(RenderError::Shape(format!(
            "{} labels for {n} points",
            l.len()
        ))),
        Some(l) => Ok(l.iter().map(|&c| palette[c as usize % palette.len()]).collect()),
        None => Ok(vec![palette[0]; n]),
    }
}

/// Map, splat and resolve in one go.
pub fn render(y: &Embedding, labels: Option<&[u32]>, cfg: &RenderConfig) -> Result<RgbImage> {
    cfg.validate()?;
    let colors = point_colors(y.rows(), labels, &cfg.palette)?;
    let fb = splat(&map_to_pixels(y, cfg), &colors, cfg)?;
    Ok(resolve(&fb, cfg.background))
}

/// 8-bit non-interlaced truecolor PNG.
pub fn write_png(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    let mut enc = png::Encoder::new(file, img.width as u32, img.height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header()?;
    writer.write_image_data(&img.data)?;
    writer.finish()?;
    Ok(())
}

pub fn read_png(path: impl AsRef<Path>) -> Result<RgbImage> {
    let dec = png::Decoder::new(BufReader::new(File::open(path)?));
    let mut reader = dec.read_info()?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| RenderError::Shape("image too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf)?;
    if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
        return Err(RenderError::Shape(format!(
            "expected 8-bit RGB, found {:?} {:?}",
            info.color_type, info.bit_depth
        )));
    }
    buf.truncate(info.buffer_size());
    RgbImage::new(info.width as usize, info.height as usize, buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::palette::{BLACK, WHITE};

    fn cfg(w: usize, h: usize) -> RenderConfig {
        RenderConfig {
            width: w,
            height: h,
            sequential: true,
            ..RenderConfig::default()
        }
    }

    #[test]
    fn diagonal_maps_with_equal_insets() {
        let y = Embedding::from_points(&[[0.0, 0.0], [1.0, 1.0]]);
        let px = map_to_pixels(&y, &cfg(100, 100));
        let inset = 0.05 * 100.0 / 1.1;
        assert!((px[0][0] - inset).abs() < 1e-4);
        assert!((px[0][1] - (100.0 - inset)).abs() < 1e-4);
        assert!((px[1][0] - (100.0 - inset)).abs() < 1e-4);
        assert!((px[1][1] - inset).abs() < 1e-4);
    }

    #[test]
    fn isotropic_on_wide_canvas() {
        let y = Embedding::from_points(&[[0.0, 0.0], [1.0, 1.0]]);
        let c = RenderConfig {
            margin: 0.0,
            ..cfg(200, 100)
        };
        let px = map_to_pixels(&y, &c);
        assert_eq!(px[0], [50.0, 100.0]);
        assert_eq!(px[1], [150.0, 0.0]);
    }

    #[test]
    fn single_point_goes_to_center() {
        let y = Embedding::from_points(&[[3.0, -7.0]]);
        assert_eq!(map_to_pixels(&y, &cfg(64, 32)), vec![[32.0, 16.0]]);
        let y = Embedding::from_points(&[[3.0, -7.0], [3.0, -7.0]]);
        assert_eq!(map_to_pixels(&y, &cfg(64, 32))[1], [32.0, 16.0]);
    }

    #[test]
    fn fixed_bounds_take_precedence() {
        let c = RenderConfig {
            fixed_bounds: Some(Bounds::new(-1.0, 1.0, -1.0, 1.0)),
            ..cfg(50, 50)
        };
        let a = Embedding::from_points(&[[0.25, 0.5], [0.0, 0.0]]);
        let b = Embedding::from_points(&[[0.25, 0.5], [9.0, 9.0], [-4.0, 2.0]]);
        assert_eq!(map_to_pixels(&a, &c)[0], map_to_pixels(&b, &c)[0]);
        assert_eq!(map_to_pixels(&a, &c)[1], [25.0, 25.0]);
    }

    #[test]
    fn unit_disc_touches_one_pixel() {
        let c = RenderConfig {
            radius: 1.0,
            alpha: 1.0,
            ..cfg(3, 3)
        };
        let fb = splat(&[[1.5, 1.5]], &[WHITE], &c).unwrap();
        for y in 0..3 {
            for x in 0..3 {
                let want = if (x, y) == (1, 1) { [1.0; 4] } else { [0.0; 4] };
                assert_eq!(fb.pixel(x, y), want, "({x}, {y})");
            }
        }
    }

    #[test]
    fn coincident_points_keep_color() {
        let c = cfg(9, 9);
        let red = [1.0, 0.0, 0.0];
        let one = splat(&[[4.3, 4.6]], &[red], &c).unwrap();
        let two = splat(&[[4.3, 4.6], [4.3, 4.6]], &[red, red], &c).unwrap();
        for (a, b) in one.data.chunks(4).zip(two.data.chunks(4)) {
            assert_eq!(b[3], 2.0 * a[3]);
            assert_eq!(b[0], 2.0 * a[0]);
        }
        let px = resolve(&two, BLACK).pixel(4, 4);
        assert_eq!(px[1], 0);
        assert_eq!(px[2], 0);
    }

    #[test]
    fn resolve_examples() {
        let mut fb = Framebuffer::new(4, 1);
        fb.data[4..8].copy_from_slice(&[2.0, 0.0, 0.0, 2.0]);
        fb.data[8..12].copy_from_slice(&[0.5, 0.0, 0.0, 0.5]);
        fb.data[12..16].copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        let img = resolve(&fb, BLACK);
        assert_eq!(img.pixel(0, 0), [0, 0, 0]);
        assert_eq!(img.pixel(1, 0), [255, 0, 0]);
        assert_eq!(img.pixel(2, 0), [128, 0, 0]);
        assert_eq!(img.pixel(3, 0), [255, 0, 0]);
        let img = resolve(&Framebuffer::new(1, 1), [0.2, 0.4, 0.6]);
        assert_eq!(img.pixel(0, 0), [quantize(0.2), quantize(0.4), quantize(0.6)]);
    }

    #[test]
    fn quantize_rounds_half_up() {
        assert_eq!(quantize(0.5), 128);
        assert_eq!(quantize(0.0), 0);
        assert_eq!(quantize(1.0), 255);
        assert_eq!(quantize(1.7), 255);
        assert_eq!(quantize(-0.2), 0);
    }

    #[test]
    fn png_round_trip_and_white_pixel() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.png");
        write_png(&RgbImage::new(1, 1, vec![255; 3]).unwrap(), &p).unwrap();
        assert_eq!(read_png(&p).unwrap().data, vec![255, 255, 255]);
    }

    #[test]
    fn unwritable_path_errors() {
        let img = RgbImage::new(1, 1, vec![0; 3]).unwrap();
        assert!(write_png(&img, "/nonexistent-dir/x/y.png").is_err());
    }

    #[test]
    fn config_validation() {
        assert!(RenderConfig { radius: 0.0, ..cfg(4, 4) }.validate().is_err());
        assert!(RenderConfig { alpha: 1.5, ..cfg(4, 4) }.validate().is_err());
        assert!(cfg(0, 4).validate().is_err());
        assert!(cfg(4, 4).validate().is_ok());
    }

    #[test]
    fn label_colors_cycle() {
        let pal = [BLACK, WHITE];
        let c = point_colors(3, Some(&[0, 1, 2]), &pal).unwrap();
        assert_eq!(c, vec![BLACK, WHITE, BLACK]);
        assert!(point_colors(2, Some(&[0]), &pal).is_err());
    }
}
