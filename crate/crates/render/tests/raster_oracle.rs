use dimred_render::palette::{BLACK, WHITE};
use dimred_render::raster::{falloff, quantize};
use dimred_render::{read_png, resolve, splat, write_png, Color, Framebuffer, RenderConfig, RgbImage};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scene(n: usize, w: usize, h: usize, seed: u64) -> (Vec<[f32; 2]>, Vec<Color>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = (0..n)
        .map(|_| [rng.random_range(-3.0..w as f32 + 3.0), rng.random_range(-3.0..h as f32 + 3.0)])
        .collect();
    let cols = (0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
    (pts, cols)
}

/// For each pixel, sum over all points in point order.
fn per_pixel(points: &[[f32; 2]], colors: &[Color], cfg: &RenderConfig) -> Framebuffer {
    let mut fb = Framebuffer::new(cfg.width, cfg.height);
    for iy in 0..cfg.height {
        for ix in 0..cfg.width {
            let o = (iy * cfg.width + ix) * 4;
            for (p, c) in points.iter().zip(colors) {
                let dx = ix as f32 + 0.5 - p[0];
                let dy = iy as f32 + 0.5 - p[1];
                let r = (dx * dx + dy * dy).sqrt();
                if r <= cfg.radius {
                    let a = cfg.alpha * falloff(r, cfg.radius);
                    fb.data[o] += a * c[0];
                    fb.data[o + 1] += a * c[1];
                    fb.data[o + 2] += a * c[2];
                    fb.data[o + 3] += a;
                }
            }
        }
    }
    fb
}

fn cfg(w: usize, h: usize, radius: f32, sequential: bool) -> RenderConfig {
    RenderConfig {
        width: w,
        height: h,
        radius,
        sequential,
        ..RenderConfig::default()
    }
}

#[test]
fn splat_equals_per_pixel_loop() {
    for (seed, radius) in [(1, 2.0), (2, 3.5), (3, 0.7)] {
        let (p, c) = scene(200, 64, 64, seed);
        let c64 = cfg(64, 64, radius, true);
        assert_eq!(splat(&p, &c, &c64).unwrap(), per_pixel(&p, &c, &c64));
    }
    // Non-square canvas spanning several row bands.
    let (p, c) = scene(300, 37, 90, 4);
    let odd = cfg(37, 90, 4.0, true);
    assert_eq!(splat(&p, &c, &odd).unwrap(), per_pixel(&p, &c, &odd));
}

#[test]
fn parallel_splat_is_bit_identical() {
    let (p, c) = scene(2000, 128, 96, 9);
    let seq = splat(&p, &c, &cfg(128, 96, 2.5, true)).unwrap();
    let par = splat(&p, &c, &cfg(128, 96, 2.5, false)).unwrap();
    assert_eq!(seq, par);
}

#[test]
fn crafted_alpha_quantization() {
    let mut fb = Framebuffer::new(4, 1);
    for (i, a) in [0.0f32, 0.5, 1.0, 2.0].into_iter().enumerate() {
        fb.data[i * 4..i * 4 + 4].copy_from_slice(&[a, 0.0, 0.0, a]);
    }
    let img = resolve(&fb, BLACK);
    let reds: Vec<u8> = (0..4).map(|x| img.pixel(x, 0)[0]).collect();
    assert_eq!(reds, [0, 128, 255, 255]);
    assert!((0..4).all(|x| img.pixel(x, 0)[1..] == [0, 0]));
    assert_eq!(resolve(&Framebuffer::new(1, 1), WHITE).pixel(0, 0), [255, 255, 255]);
}

#[test]
fn random_png_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let dir = tempfile::tempdir().unwrap();
    for (w, h) in [(1, 1), (17, 3), (64, 40)] {
        let data = (0..w * h * 3).map(|_| rng.random()).collect();
        let img = RgbImage::new(w, h, data).unwrap();
        let path = dir.path().join(format!("{w}x{h}.png"));
        write_png(&img, &path).unwrap();
        assert_eq!(read_png(&path).unwrap(), img);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn alpha_is_conserved(seed in 0u64..1000, radius in 0.5f32..4.0, n in 1usize..40) {
        // Keep discs clear of the canvas edge so every offset lands.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pad = radius + 1.0;
        let pts: Vec<[f32; 2]> = (0..n)
            .map(|_| [rng.random_range(pad..48.0 - pad), rng.random_range(pad..48.0 - pad)])
            .collect();
        let cols = vec![WHITE; n];
        let c = cfg(48, 48, radius, true);
        let fb = splat(&pts, &cols, &c).unwrap();
        let total: f64 = fb.data.chunks(4).map(|p| p[3] as f64).sum();
        let mut want = 0.0f64;
        for p in &pts {
            let r = radius.ceil() as i64 + 1;
            let (cx, cy) = (p[0].floor() as i64, p[1].floor() as i64);
            for iy in cy - r..=cy + r {
                for ix in cx - r..=cx + r {
                    let dx = ix as f32 + 0.5 - p[0];
                    let dy = iy as f32 + 0.5 - p[1];
                    let d = (dx * dx + dy * dy).sqrt();
                    if d <= radius {
                        want += (c.alpha * falloff(d, radius)) as f64;
                    }
                }
            }
        }
        prop_assert!((total - want).abs() <= 1e-5 * want.max(1.0));
        prop_assert!(fb.data.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn resolve_is_monotone(r in 0.0f32..1.0, g in 0.0f32..1.0, b in 0.0f32..1.0, a1 in 0.0f32..3.0, da in 0.0f32..3.0) {
        let color = [r, g, b];
        let bg = [1.0 - r, 0.5, b * 0.3];
        let px = |a: f32| {
            let mut fb = Framebuffer::new(1, 1);
            fb.data.copy_from_slice(&[a * r, a * g, a * b, a]);
            resolve(&fb, bg).pixel(0, 0)
        };
        let (lo, hi) = (px(a1), px(a1 + da));
        for t in 0..3 {
            let target = quantize(color[t]) as i32;
            prop_assert!((hi[t] as i32 - target).abs() <= (lo[t] as i32 - target).abs());
        }
    }
}
