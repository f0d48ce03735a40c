use std::path::Path;

use dimred::{Embedding, EmbeddingTrace};
use dimred_render::animate::{encoder_command, fallback_dir, EncoderSink};
use dimred_render::{
    animate_trace, encode, open_encoder, render, schedule, FrameSchedule, FrameSink, MemorySink,
    PngSequence, RenderConfig, RenderError,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_trace(snapshots: usize, n: usize, seed: u64) -> (EmbeddingTrace, Vec<u32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y: Vec<f32> = (0..2 * n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut t = EmbeddingTrace::new();
    for e in 0..snapshots {
        for v in &mut y {
            *v *= 1.05;
            *v += rng.random_range(-0.02..0.02);
        }
        t.push(e, Embedding::new(n, y.clone()).unwrap()).unwrap();
    }
    let labels = (0..n as u32).map(|i| i % 4).collect();
    (t, labels)
}

fn small() -> RenderConfig {
    RenderConfig::square(48)
}

#[test]
fn pipelined_stream_matches_sequential() {
    let (trace, labels) = random_trace(40, 300, 1);
    let sched = FrameSchedule::holds(5, 5);
    let mut a = MemorySink::default();
    let mut b = MemorySink::default();
    let sa = animate_trace(&trace, &sched, &small(), Some(&labels), &mut a, false).unwrap();
    let sb = animate_trace(&trace, &sched, &small(), Some(&labels), &mut b, true).unwrap();
    assert_eq!(sa.frames, 50);
    assert_eq!(sa, sb);
    assert_eq!(a.count, 50);
    assert_eq!(a.stream, b.stream);
    assert_eq!(a.stream.len(), 50 * 48 * 48 * 3);
}

#[test]
fn holds_render_once_per_snapshot() {
    let (trace, _) = random_trace(1, 20, 2);
    let plan = schedule(&trace, &FrameSchedule::holds(5, 5)).unwrap();
    assert_eq!(plan.len(), 11);
    for pipelined in [false, true] {
        let cfg = plan.render_config(&small());
        let mut sink = MemorySink::default();
        let mut count = 0usize;
        let stats = encode(
            &plan,
            |i| {
                count += 1;
                render(&trace.snapshots()[i], None, &cfg)
            },
            &mut sink,
            pipelined,
        )
        .unwrap();
        assert_eq!(count, 1);
        assert_eq!(stats.renders, 1);
        assert_eq!(sink.count, 11);
    }
    let (trace, _) = random_trace(6, 20, 3);
    let plan = schedule(&trace, &FrameSchedule { frames_per_snapshot: 3, ..FrameSchedule::holds(2, 2) }).unwrap();
    let cfg = plan.render_config(&small());
    let stats = encode(&plan, |i| render(&trace.snapshots()[i], None, &cfg), &mut MemorySink::default(), true).unwrap();
    assert_eq!(stats.renders, plan.distinct_snapshots());
    assert_eq!(stats.frames, 22);
}

#[test]
fn viewport_is_shared_by_all_frames() {
    let (trace, _) = random_trace(10, 50, 4);
    let plan = schedule(&trace, &FrameSchedule::default()).unwrap();
    let cfg = plan.render_config(&small());
    let probe = Embedding::from_points(&[[0.3, -0.2]]);
    let first = dimred_render::map_to_pixels(&probe, &cfg);
    let again = dimred_render::map_to_pixels(&probe, &plan.render_config(&small()));
    assert_eq!(first, again);
}

#[test]
fn png_sequence_gets_every_frame() {
    let dir = tempfile::tempdir().unwrap();
    let (trace, _) = random_trace(100, 30, 5);
    let mut sink = PngSequence::create(dir.path().join("frames")).unwrap();
    let cfg = RenderConfig::square(16);
    let stats = animate_trace(&trace, &FrameSchedule::holds(30, 30), &cfg, None, &mut sink, true).unwrap();
    assert_eq!(stats.frames, 160);
    let files = std::fs::read_dir(sink.dir()).unwrap().count();
    assert_eq!(files, 160);
    assert!(sink.dir().join("frame_000159.png").exists());
}

#[test]
fn render_errors_propagate_from_pipeline() {
    let (trace, _) = random_trace(5, 10, 6);
    let plan = schedule(&trace, &FrameSchedule::default()).unwrap();
    for pipelined in [false, true] {
        let mut sink = MemorySink::default();
        let err = encode(
            &plan,
            |i| if i == 3 { Err(RenderError::Config("boom".into())) } else { render(&trace.snapshots()[i], None, &small()) },
            &mut sink,
            pipelined,
        );
        assert!(err.is_err());
        assert_eq!(sink.count, 3);
    }
}

#[test]
fn encoder_receives_raw_stream() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("video.raw");
    let (trace, _) = random_trace(4, 10, 7);
    let mut sink = open_encoder("sh -c 'cat > \"$0\"' {output}", 48, 48, 30, &out).unwrap();
    let mut mem = MemorySink::default();
    animate_trace(&trace, &FrameSchedule::holds(1, 1), &small(), None, sink.as_mut(), true).unwrap();
    animate_trace(&trace, &FrameSchedule::holds(1, 1), &small(), None, &mut mem, false).unwrap();
    assert_eq!(std::fs::read(&out).unwrap(), mem.stream);
}

#[test]
fn early_encoder_exit_reports_status() {
    let (trace, _) = random_trace(30, 10, 8);
    let argv = encoder_command("sh -c 'exit 3'", 48, 48, 30, Path::new("x")).unwrap();
    let mut sink = EncoderSink::spawn(&argv).unwrap();
    std::thread::sleep(std::time::Duration::from_millis(100));
    let err = animate_trace(&trace, &FrameSchedule::default(), &small(), None, &mut sink, false).unwrap_err();
    match err {
        RenderError::EncoderExited { status } => assert_eq!(status.code(), Some(3)),
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn failing_encoder_reports_status_on_finish() {
    let (trace, _) = random_trace(2, 10, 9);
    let argv = encoder_command("sh -c 'cat > /dev/null; exit 5'", 48, 48, 30, Path::new("x")).unwrap();
    let mut sink = EncoderSink::spawn(&argv).unwrap();
    let err = animate_trace(&trace, &FrameSchedule::default(), &small(), None, &mut sink, true).unwrap_err();
    assert!(matches!(err, RenderError::EncoderExited { status } if status.code() == Some(5)));
    assert_eq!(sink.frames_written(), 2);
}

#[test]
fn missing_encoder_falls_back_to_png() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("movie.mp4");
    let (trace, _) = random_trace(3, 10, 10);
    let mut sink = open_encoder("no-such-encoder-binary -o {output}", 48, 48, 30, &out).unwrap();
    let stats = animate_trace(&trace, &FrameSchedule::holds(1, 0), &small(), None, sink.as_mut(), true).unwrap();
    assert_eq!(stats.frames, 4);
    let frames = fallback_dir(&out);
    assert_eq!(std::fs::read_dir(&frames).unwrap().count(), 4);
    assert!(!out.exists());
}
