//! Sequential vs rayon execution of the data-parallel stages.
//!
//! `cargo bench -p sftrack` runs both policies; building with
//! `--no-default-features` makes the parallel arm fall back to the
//! sequential path, which is a useful sanity check on overhead.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sftrack::appearance::{color_histogram, extract_crop, handcrafted_embedding, ColorHistogram, Patch};
use sftrack::association::{build_stage_matrix, DetectionCue, Stage, TrackCue};
use sftrack::detection::Embedding;
use sftrack::geometry::BoundingBox;
use sftrack::motion::{detect_features, track_features, FeatureParams, FlowParams};
use sftrack::par::Execution;
use sftrack::rng::XorShift64Star;
use sftrack::synthetic::{generate, preset, value_noise_gray};
use sftrack::tracker::{run_sequence, TrackerOptions};
use sftrack::TrackerConfig;
use std::hint::black_box;

const POLICIES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

struct Cues {
    boxes: Vec<BoundingBox>,
    hist: Vec<ColorHistogram>,
    patch: Vec<Patch>,
    emb: Vec<Embedding>,
}

fn cues(n: usize) -> Cues {
    let seq = generate(&preset("baseline").unwrap(), Execution::Parallel);
    let frame = &seq.frames[0];
    let mut rng = XorShift64Star::stream(7, &[n as u64]);
    let boxes: Vec<BoundingBox> = (0..n)
        .map(|_| BoundingBox::tlwh(rng.range(0.0, 560.0), rng.range(0.0, 400.0), rng.range(20.0, 80.0), rng.range(20.0, 80.0)))
        .collect();
    let crops: Vec<_> = boxes.iter().map(|b| extract_crop(frame, b).unwrap()).collect();
    Cues {
        hist: crops.iter().map(|c| color_histogram(c, 8)).collect(),
        patch: crops.iter().map(|c| Patch::from_crop(c, (16, 16)).unwrap()).collect(),
        emb: crops.iter().map(|c| handcrafted_embedding(c).unwrap()).collect(),
        boxes,
    }
}

fn track_cues(c: &Cues) -> Vec<TrackCue<'_>> {
    (0..c.boxes.len())
        .map(|i| TrackCue {
            bbox: c.boxes[i].translate(2.0, 1.0),
            class_id: 1,
            histogram: Some(&c.hist[i]),
            patch: Some(&c.patch[i]),
            embedding: Some(&c.emb[i]),
        })
        .collect()
}

fn det_cues(c: &Cues) -> Vec<DetectionCue<'_>> {
    (0..c.boxes.len())
        .map(|i| DetectionCue {
            bbox: c.boxes[i],
            class_id: 1,
            histogram: Some(&c.hist[i]),
            patch: Some(&c.patch[i]),
            embedding: Some(&c.emb[i]),
        })
        .collect()
}

fn cost_matrix(cr: &mut Criterion) {
    let cfg = TrackerConfig::default();
    let mut g = cr.benchmark_group("cost_matrix");
    for n in [50, 200] {
        let c = cues(n);
        let (t, d) = (track_cues(&c), det_cues(&c));
        for (name, exec) in POLICIES {
            g.bench_with_input(BenchmarkId::new(name, n), &n, |b, _| {
                b.iter(|| {
                    black_box(build_stage_matrix(&t, &d, Stage::First, &cfg, exec));
                    black_box(build_stage_matrix(&t, &d, Stage::Second, &cfg, exec));
                })
            });
        }
    }
    g.finish();
}

fn optical_flow(cr: &mut Criterion) {
    let prev = value_noise_gray(320, 240, 3, 6.0);
    let cur = value_noise_gray(320, 240, 4, 6.0);
    let points = detect_features(&prev, &FeatureParams::default()).unwrap();
    let mut g = cr.benchmark_group("optical_flow");
    for (name, exec) in POLICIES {
        g.bench_function(name, |b| {
            b.iter(|| black_box(track_features(&prev, &cur, &points, &FlowParams::default(), exec).unwrap()))
        });
    }
    g.finish();
}

fn render(cr: &mut Criterion) {
    let mut spec = preset("occlusion").unwrap();
    spec.frames = 10;
    let mut g = cr.benchmark_group("render");
    g.sample_size(10);
    for (name, exec) in POLICIES {
        g.bench_function(name, |b| b.iter(|| black_box(generate(&spec, exec))));
    }
    g.finish();
}

fn full_track(cr: &mut Criterion) {
    let mut spec = preset("fast_camera").unwrap();
    spec.frames = 20;
    let seq = generate(&spec, Execution::Parallel);
    let cfg = TrackerConfig::default();
    let mut g = cr.benchmark_group("track");
    g.sample_size(10);
    for (name, exec) in POLICIES {
        let options = TrackerOptions { execution: exec, ..TrackerOptions::default() };
        g.bench_function(name, |b| {
            b.iter(|| black_box(run_sequence(&seq.frames, &seq.detections, &cfg, &options).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, cost_matrix, optical_flow, render, full_track);
criterion_main!(benches);
