//! Timing harness: embed time over repeats, peak resident memory and
//! animation render time per method.

use std::fmt::Write as _;
use std::fs;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use dimred::synthetic::gaussian_mixture;
use dimred::{fit_trace, fit_transform, EmbeddingTrace, Method};
use dimred_render::animate::open_encoder;
use dimred_render::{
    encode, render, Bounds, FrameEntry, FramePlan, FrameSink, RenderConfig, RgbImage,
};

use crate::args::{AnimPlan, BenchArgs};
use crate::commands::embedder_config;
use crate::ingest::{self, Dataset};

pub const CSV_HEADER: &str = "method,time_mean_s,time_std_s,peak_mem_mb,anim_s";

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub method: Method,
    pub time_mean_s: f64,
    pub time_std_s: f64,
    /// `None` where the OS does not expose a high-water mark.
    pub peak_mem_mb: Option<f64>,
    pub anim_s: Option<f64>,
}

/// Mean and sample standard deviation; the deviation of a single run is 0.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Resident-set high-water mark of this process, in MiB.
pub fn peak_rss_mb() -> Option<f64> {
    let status = fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: f64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb / 1024.0)
}

/// Lowers the high-water mark to the current RSS so each method is measured on
/// its own. Best effort.
fn reset_peak_rss() {
    let _ = fs::write("/proc/self/clear_refs", "5");
}

/// Intro holds, `plan.epochs` frames spread evenly over the trace, outro holds.
pub fn animation_plan(trace: &EmbeddingTrace, plan: &AnimPlan, fps: u32) -> Result<FramePlan> {
    let s = trace.len();
    let b = trace.bounds().context("empty trace")?;
    let mut entries = Vec::with_capacity(plan.total());
    let mut prev = None;
    let mut push = |snapshot: usize| {
        entries.push(FrameEntry {
            snapshot,
            is_hold: prev == Some(snapshot),
        });
        prev = Some(snapshot);
    };
    (0..plan.intro).for_each(|_| push(0));
    (0..plan.epochs).for_each(|j| push(j * s / plan.epochs));
    (0..plan.outro).for_each(|_| push(s - 1));
    Ok(FramePlan {
        entries,
        bounds: Bounds::new(b.0, b.1, b.2, b.3),
        fps,
    })
}

/// Drops frames; only rendering is timed.
#[derive(Debug, Default)]
struct NullSink(usize);

impl FrameSink for NullSink {
    fn write_frame(&mut self, _img: &RgbImage) -> dimred_render::Result<()> {
        self.0 += 1;
        Ok(())
    }

    fn finish(&mut self) -> dimred_render::Result<()> {
        Ok(())
    }

    fn frames_written(&self) -> usize {
        self.0
    }
}

fn dataset(a: &BenchArgs) -> Result<Dataset> {
    match &a.input {
        Some(p) => ingest::ingest(p, a.format, a.label_col, None),
        None => {
            let (matrix, labels) = gaussian_mixture(a.n, a.dims, 10, 2.0, a.fit.seed);
            Ok(Dataset {
                matrix,
                labels: Some(labels),
            })
        }
    }
}

pub fn bench_method(a: &BenchArgs, ds: &Dataset, method: Method) -> Result<BenchRow> {
    reset_peak_rss();
    let mut times = Vec::with_capacity(a.repeats);
    for r in 0..a.repeats {
        let mut fit = a.fit.clone();
        fit.seed = fit.seed.wrapping_add(r as u64);
        let cfg = embedder_config(method, &fit);
        let t0 = Instant::now();
        fit_transform(&cfg, &ds.matrix, None).with_context(|| format!("{method} run {r}"))?;
        times.push(t0.elapsed().as_secs_f64());
        log::info!("{method} run {r}: {:.3} s", times[r]);
    }
    let (time_mean_s, time_std_s) = mean_std(&times);
    let anim_s = if a.anim.total() > 0 {
        let cfg = embedder_config(method, &a.fit);
        let (_, trace) = fit_trace(&cfg, &ds.matrix, 1)?;
        let fps = 60;
        let plan = animation_plan(&trace, &a.anim, fps)?;
        let rcfg = plan.render_config(&RenderConfig {
            sequential: a.fit.sequential,
            ..RenderConfig::square(a.size)
        });
        let labels = ds.labels.as_deref();
        let snaps = trace.snapshots();
        let mut sink: Box<dyn FrameSink> = match &a.encoder_cmd {
            Some(t) => {
                let out = std::path::PathBuf::from(format!("bench_{method}.mp4"));
                open_encoder(t, a.size, a.size, fps, &out)?
            }
            None => Box::new(NullSink::default()),
        };
        let t0 = Instant::now();
        encode(&plan, |i| render(&snaps[i], labels, &rcfg), sink.as_mut(), !a.fit.sequential)?;
        Some(t0.elapsed().as_secs_f64())
    } else {
        None
    };
    Ok(BenchRow {
        method,
        time_mean_s,
        time_std_s,
        peak_mem_mb: peak_rss_mb(),
        anim_s,
    })
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "nan".to_string(), |x| format!("{x:.digits$}"))
}

pub fn report_csv(rows: &[BenchRow]) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for r in rows {
        writeln!(
            out,
            "{},{:.6},{:.6},{},{}",
            r.method,
            r.time_mean_s,
            r.time_std_s,
            opt(r.peak_mem_mb, 1),
            opt(r.anim_s, 6)
        )
        .expect("writing to a String");
    }
    out
}

pub fn report_text(rows: &[BenchRow], repeats: usize) -> String {
    let mut out = format!(
        "{:<10} {:>22} {:>14} {:>10}\n",
        "method",
        format!("embed s (n={repeats})"),
        "peak mem MB",
        "anim s"
    );
    for r in rows {
        let t = format!("{:.3} ± {:.3}", r.time_mean_s, r.time_std_s);
        writeln!(
            out,
            "{:<10} {:>22} {:>14} {:>10}",
            r.method.to_string(),
            t,
            opt(r.peak_mem_mb, 1),
            opt(r.anim_s, 3)
        )
        .expect("writing to a String");
    }
    out
}

pub fn run_bench(a: &BenchArgs) -> Result<()> {
    if a.repeats == 0 {
        bail!("--repeats must be at least 1");
    }
    let ds = dataset(a)?;
    let methods = if a.methods.is_empty() {
        Method::ALL.to_vec()
    } else {
        a.methods.clone()
    };
    let mut rows = Vec::with_capacity(methods.len());
    for m in methods {
        rows.push(bench_method(a, &ds, m)?);
    }
    print!("{}", report_text(&rows, a.repeats));
    if let Some(p) = &a.output {
        fs::write(p, report_csv(&rows)).with_context(|| format!("cannot write {}", p.display()))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use dimred::Embedding;

    #[test]
    fn std_of_one_run_is_zero() {
        assert_eq!(mean_std(&[2.5]), (2.5, 0.0));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn plan_spreads_epochs() {
        let mut t = EmbeddingTrace::new();
        for e in 0..500 {
            t.push(e, Embedding::from_points(&[[e as f32, 0.0], [0.0, 1.0]])).unwrap();
        }
        let p = AnimPlan { intro: 30, epochs: 740, outro: 30 };
        let plan = animation_plan(&t, &p, 60).unwrap();
        assert_eq!(plan.len(), 800);
        assert_eq!(plan.distinct_snapshots(), 500);
        assert_eq!(plan.entries[30], FrameEntry { snapshot: 0, is_hold: true });
        assert_eq!(plan.entries[769].snapshot, 499);
        assert!(plan.entries.windows(2).all(|w| w[0].snapshot <= w[1].snapshot));
        let few = AnimPlan { intro: 0, epochs: 3, outro: 0 };
        let plan = animation_plan(&t, &few, 60).unwrap();
        let ids: Vec<_> = plan.entries.iter().map(|e| e.snapshot).collect();
        assert_eq!(ids, [0, 166, 333]);
    }

    #[test]
    fn peak_memory_is_reported() {
        if cfg!(target_os = "linux") {
            assert!(peak_rss_mb().unwrap() > 0.0);
        }
    }
}
