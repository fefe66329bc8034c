use super::spec::{ObjectSpec, ScenarioSpec, Texture};
use super::value_noise;
use crate::detection::Detection;
use crate::geometry::BoundingBox;
use crate::image::RawImage;
use crate::io::{self, FormatError, SequenceManifest, MANIFEST_FILE};
use crate::metrics::EvalRecord;
use crate::motion::AffineTransform2D;
use crate::par::{self, Execution};
use crate::rng::{mix, XorShift64Star};
use crate::tracker::DetectionsByFrame;
use std::fmt::Write as _;
use std::path::Path;

const BACKGROUND_KEY: u64 = 0xB6;
const DETECTION_KEY: u64 = 0xDE7;
const FALSE_POSITIVE_KEY: u64 = 0xFA15E;
const OBJECT_KEY: u64 = 0x0B1;

/// Ground truth of one object in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectState {
    /// 1-based object index in the spec.
    pub id: u64,
    pub class_id: i32,
    /// Box clipped to the image, quantized to 0.01 px.
    pub bbox: BoundingBox,
    pub truncated: bool,
    /// Fraction of the object's pixels hidden by objects in front or the occluder.
    pub occlusion: f64,
}

#[derive(Debug, Clone)]
pub struct GeneratedSequence {
    pub spec: ScenarioSpec,
    pub frames: Vec<RawImage>,
    /// Per frame, in object order.
    pub ground_truth: Vec<Vec<ObjectState>>,
    pub detections: DetectionsByFrame,
    /// Camera pose of each frame (image to world).
    pub poses: Vec<AffineTransform2D>,
}

fn quantize(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

fn quantize_box(b: &BoundingBox) -> BoundingBox {
    BoundingBox::tlwh(quantize(b.left), quantize(b.top), quantize(b.width), quantize(b.height))
}

fn camera_poses(spec: &ScenarioSpec) -> Vec<AffineTransform2D> {
    let mut poses = Vec::with_capacity(spec.frames as usize);
    let mut pose = AffineTransform2D::IDENTITY;
    poses.push(pose);
    for k in 2..=spec.frames {
        if let Some(seg) = spec.camera.iter().find(|s| (s.start..=s.end).contains(&k)) {
            let (s, theta, t) = seg.step(k);
            pose = pose.compose(&AffineTransform2D::similarity(s, theta, t));
        }
        poses.push(pose);
    }
    poses
}

/// Full (unclipped) image box of an object under a camera pose.
fn image_box(o: &ObjectSpec, frame: u32, pose: &AffineTransform2D, inv: &AffineTransform2D) -> BoundingBox {
    let (scale, _) = pose.column_scales();
    let [cx, cy] = inv.apply(o.center(frame));
    let (w, h) = (o.width / scale, o.height / scale);
    BoundingBox::tlwh(cx - w / 2.0, cy - h / 2.0, w, h)
}

/// Pixel columns or rows whose centers fall in `[lo, hi)`, clipped to `[0, n)`.
fn pixel_span(lo: f64, hi: f64, n: usize) -> (usize, usize) {
    let a = (lo - 0.5).ceil().max(0.0);
    let b = (hi - 0.5).ceil().max(0.0);
    ((a as usize).min(n), (b as usize).min(n))
}

fn channel(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

fn background(seed: u64, scale: f64, w: [f64; 2]) -> [u8; 3] {
    let (u, v) = (w[0] / scale, w[1] / scale);
    let n = 0.6 * value_noise(seed, u, v) + 0.4 * value_noise(seed ^ 0x5A5A, 2.5 * u, 2.5 * v);
    let t = value_noise(seed ^ 0x7117, u / 6.0, v / 6.0);
    [channel(50.0 + 150.0 * n + 20.0 * t), channel(60.0 + 140.0 * n), channel(45.0 + 120.0 * n + 25.0 * (1.0 - t))]
}

fn texture(o: &ObjectSpec, seed: u64, u: f64, v: f64) -> [u8; 3] {
    let c = o.color.map(f64::from);
    let scaled = |f: f64| [channel(c[0] * f), channel(c[1] * f), channel(c[2] * f)];
    match o.texture {
        Texture::Solid => scaled(0.92 + 0.16 * value_noise(seed, 4.0 * u, 4.0 * v)),
        Texture::Stripes => scaled(if (u * 4.0) as i64 % 2 == 0 { 1.0 } else { 0.55 }),
        Texture::Checker => {
            if ((u * 3.0) as i64 + (v * 3.0) as i64) % 2 == 0 {
                scaled(1.0)
            } else {
                [channel(c[0] * 0.5 + 60.0), channel(c[1] * 0.5 + 60.0), channel(c[2] * 0.5 + 60.0)]
            }
        }
        Texture::Noise => scaled(0.6 + 0.8 * value_noise(seed, 6.0 * u, 6.0 * v)),
    }
}

struct FrameOut {
    image: RawImage,
    states: Vec<ObjectState>,
    detections: Vec<Detection>,
}

fn render_frame(spec: &ScenarioSpec, frame: u32, pose: &AffineTransform2D) -> FrameOut {
    let (w, h) = (spec.width, spec.height);
    let inv = pose.inverse().expect("camera scale is positive");
    let bg_seed = mix(spec.seed, &[BACKGROUND_KEY]);
    let mut data = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            data.extend_from_slice(&background(bg_seed, spec.background_scale, pose.apply([x as f64 + 0.5, y as f64 + 0.5])));
        }
    }
    let mut image = RawImage::new(w, h, data).expect("sized buffer");

    // z-order is spec order; owner 0 is background, u32::MAX the occluder
    let mut owner = vec![0u32; w * h];
    let mut full = Vec::new();
    for (i, o) in spec.objects.iter().enumerate() {
        if !o.exists(frame) {
            continue;
        }
        let b = image_box(o, frame, pose, &inv);
        let seed = mix(spec.seed, &[OBJECT_KEY, i as u64]);
        let (x0, x1) = pixel_span(b.left, b.right(), w);
        let (y0, y1) = pixel_span(b.top, b.bottom(), h);
        for y in y0..y1 {
            let v = (y as f64 + 0.5 - b.top) / b.height;
            for x in x0..x1 {
                let u = (x as f64 + 0.5 - b.left) / b.width;
                image.set_pixel(x, y, texture(o, seed, u, v));
                owner[y * w + x] = i as u32 + 1;
            }
        }
        full.push((i, b, (x0, x1, y0, y1)));
    }
    if let Some(oc) = &spec.occluder {
        let (x0, x1) = pixel_span(oc.left, oc.left + oc.width, w);
        let (y0, y1) = pixel_span(oc.top, oc.top + oc.height, h);
        for y in y0..y1 {
            for x in x0..x1 {
                let f = 0.85 + 0.3 * value_noise(bg_seed ^ 0x0CC, x as f64 / 6.0, y as f64 / 6.0);
                image.set_pixel(x, y, oc.color.map(|c| channel(c as f64 * f)));
                owner[y * w + x] = u32::MAX;
            }
        }
    }

    let mut states = Vec::new();
    for (i, b, (x0, x1, y0, y1)) in full {
        let clipped = b.clamp_to(w as f64, h as f64);
        if clipped.area() < 0.5 * b.area() {
            continue;
        }
        let total = (x1 - x0) * (y1 - y0);
        let mut own = 0;
        for y in y0..y1 {
            own += owner[y * w + x0..y * w + x1].iter().filter(|&&o| o == i as u32 + 1).count();
        }
        let occlusion = if total == 0 { 1.0 } else { 1.0 - own as f64 / total as f64 };
        let bbox = quantize_box(&clipped);
        if bbox.is_degenerate() {
            continue;
        }
        states.push(ObjectState {
            id: i as u64 + 1,
            class_id: spec.objects[i].class_id,
            bbox,
            truncated: clipped != b,
            occlusion,
        });
    }
    let detections = detect(spec, frame, &states);
    FrameOut { image, states, detections }
}

fn detect(spec: &ScenarioSpec, frame: u32, states: &[ObjectState]) -> Vec<Detection> {
    let n = &spec.noise;
    let (w, h) = (spec.width as f64, spec.height as f64);
    let mut out = Vec::new();
    let mut emit = |b: BoundingBox, score: f64, class_id: i32| {
        let b = quantize_box(&b.clamp_to(w, h));
        if !b.is_degenerate() {
            let score = (score.clamp(0.0, 1.0) * 1e4).round() / 1e4;
            out.push(Detection::new(frame, b, score, class_id).expect("score in range"));
        }
    };
    for s in states {
        let mut r = XorShift64Star::stream(spec.seed, &[DETECTION_KEY, frame as u64, s.id]);
        let draws = [r.uniform(), r.normal(), r.normal(), r.normal(), r.normal(), r.normal()];
        if s.occlusion > n.max_occlusion || draws[0] < n.dropout {
            continue;
        }
        let b = s.bbox;
        let dw = b.width * n.size_jitter * draws[3];
        let dh = b.height * n.size_jitter * draws[4];
        let jittered = BoundingBox::tlwh(
            b.left + n.jitter * draws[1] - dw / 2.0,
            b.top + n.jitter * draws[2] - dh / 2.0,
            (b.width + dw).max(1.0),
            (b.height + dh).max(1.0),
        );
        let conf = n.base_confidence(b.area()) - n.occlusion_penalty * s.occlusion + n.conf_noise * draws[5];
        emit(jittered, conf.clamp(n.score_min, n.score_max), s.class_id);
    }

    let mut r = XorShift64Star::stream(spec.seed, &[FALSE_POSITIVE_KEY, frame as u64]);
    let count = n.fp_rate.floor() as usize + usize::from(r.uniform() < n.fp_rate.fract());
    let (wmin, wmax, hmin, hmax) = spec.objects.iter().fold((f64::MAX, 0.0f64, f64::MAX, 0.0f64), |a, o| {
        (a.0.min(o.width), a.1.max(o.width), a.2.min(o.height), a.3.max(o.height))
    });
    let (wmin, wmax, hmin, hmax) = if spec.objects.is_empty() { (10.0, 60.0, 10.0, 60.0) } else { (wmin, wmax, hmin, hmax) };
    for _ in 0..count {
        let bw = r.range(wmin, wmax.max(wmin + 1.0));
        let bh = r.range(hmin, hmax.max(hmin + 1.0));
        let left = r.range(0.0, (w - bw).max(1.0));
        let top = r.range(0.0, (h - bh).max(1.0));
        let hi = n.base_confidence(bw * bh).clamp(n.score_min, n.score_max);
        let score = r.range(n.score_min, hi);
        let class_id = if spec.objects.is_empty() { 1 } else { spec.objects[r.below(spec.objects.len())].class_id };
        emit(BoundingBox::tlwh(left, top, bw, bh), score, class_id);
    }
    out.sort_by(|a, b| b.score.total_cmp(&a.score));
    out
}

/// Renders every frame. Each frame draws its randomness from streams keyed
/// by the seed and frame index, so the result does not depend on `exec`.
pub fn generate(spec: &ScenarioSpec, exec: Execution) -> GeneratedSequence {
    let poses = camera_poses(spec);
    let outs = par::map_range(exec, spec.frames as usize, |i| render_frame(spec, i as u32 + 1, &poses[i]));
    let mut frames = Vec::with_capacity(outs.len());
    let mut ground_truth = Vec::with_capacity(outs.len());
    let mut detections = DetectionsByFrame::new();
    for (i, o) in outs.into_iter().enumerate() {
        frames.push(o.image);
        ground_truth.push(o.states);
        if !o.detections.is_empty() {
            detections.insert(i as u32 + 1, o.detections);
        }
    }
    GeneratedSequence { spec: spec.clone(), frames, ground_truth, detections, poses }
}

impl GeneratedSequence {
    /// Image-space motion from frame `k - 1` to frame `k`.
    pub fn image_motion(&self, k: u32) -> AffineTransform2D {
        let i = k as usize - 1;
        let current = self.poses[i].inverse().expect("invertible pose");
        current.compose(&self.poses[i - 1])
    }

    pub fn gt_records(&self) -> Vec<EvalRecord> {
        self.ground_truth
            .iter()
            .enumerate()
            .flat_map(|(i, states)| {
                states.iter().map(move |s| EvalRecord {
                    frame: i as u32 + 1,
                    id: s.id as i64,
                    bbox: s.bbox,
                    class_id: Some(s.class_id),
                    ignore: false,
                })
            })
            .collect()
    }

    /// VisDrone-style annotation lines.
    pub fn gt_text(&self) -> String {
        let mut s = String::new();
        for (i, states) in self.ground_truth.iter().enumerate() {
            for o in states {
                let level = if o.occlusion <= 0.0 { 0 } else if o.occlusion < 0.5 { 1 } else { 2 };
                let b = &o.bbox;
                let _ = writeln!(
                    s,
                    "{},{},{:.2},{:.2},{:.2},{:.2},1,{},{},{}",
                    i + 1,
                    o.id,
                    b.left,
                    b.top,
                    b.width,
                    b.height,
                    o.class_id,
                    u8::from(o.truncated),
                    level
                );
            }
        }
        s
    }

    /// MOTChallenge detection lines with the class id in the eighth column.
    pub fn det_text(&self) -> String {
        let mut s = String::new();
        for (frame, dets) in &self.detections {
            for d in dets {
                let b = &d.bbox;
                let _ = writeln!(
                    s,
                    "{frame},-1,{:.2},{:.2},{:.2},{:.2},{:.4},{},-1,-1",
                    b.left, b.top, b.width, b.height, d.score, d.class_id
                );
            }
        }
        s
    }

    pub fn manifest(&self) -> SequenceManifest {
        SequenceManifest {
            name: self.spec.name.clone(),
            image_directory: "frames".into(),
            frame_rate: self.spec.frame_rate,
            seq_length: self.spec.frames,
            im_width: self.spec.width,
            im_height: self.spec.height,
            image_extension: ".ppm".into(),
        }
    }
}

/// Writes `frames/NNNNNN.ppm`, `gt.txt`, `det.txt`, `seqinfo.ini` and
/// `scenario.txt` under `out`. Stale `.ppm` files in `frames/` are removed.
pub fn write_sequence(seq: &GeneratedSequence, out: &Path, exec: Execution) -> Result<(), FormatError> {
    let manifest = seq.manifest();
    let frames_dir = out.join(&manifest.image_directory);
    let io_err = |path: &Path| {
        let path = path.display().to_string();
        move |source| FormatError::Io { path, source }
    };
    std::fs::create_dir_all(&frames_dir).map_err(io_err(&frames_dir))?;
    for entry in std::fs::read_dir(&frames_dir).map_err(io_err(&frames_dir))?.flatten() {
        let p = entry.path();
        if p.extension().is_some_and(|e| e == "ppm") {
            std::fs::remove_file(&p).map_err(io_err(&p))?;
        }
    }
    let encoded = par::map_slice(exec, &seq.frames, io::encode_ppm);
    for (i, bytes) in encoded.iter().enumerate() {
        io::write_bytes(&frames_dir.join(manifest.frame_file(i as u32 + 1)), bytes)?;
    }
    io::write_bytes(&out.join("gt.txt"), seq.gt_text().as_bytes())?;
    io::write_bytes(&out.join("det.txt"), seq.det_text().as_bytes())?;
    io::write_bytes(&out.join(MANIFEST_FILE), manifest.to_text().as_bytes())?;
    io::write_bytes(&out.join("scenario.txt"), seq.spec.to_text().as_bytes())?;
    Ok(())
}
