use super::spec::{CameraSegment, MotionPath, NoiseModel, ObjectSpec, Occluder, ScenarioSpec, Texture};

pub const PRESET_NAMES: [&str; 4] = ["baseline", "fast_camera", "small_objects", "occlusion"];

/// Fixed scenario by name.
pub fn preset(name: &str) -> Option<ScenarioSpec> {
    match name {
        "baseline" => Some(baseline()),
        "fast_camera" => Some(fast_camera()),
        "small_objects" => Some(small_objects()),
        "occlusion" => Some(occlusion()),
        _ => None,
    }
}

fn obj(class_id: i32, (width, height): (f64, f64), (x, y): (f64, f64), (vx, vy): (f64, f64), color: [u8; 3], texture: Texture) -> ObjectSpec {
    ObjectSpec { class_id, width, height, x, y, vx, vy, path: MotionPath::Linear, color, texture, appear: 1, disappear: u32::MAX }
}

fn finish(mut s: ScenarioSpec) -> ScenarioSpec {
    for o in &mut s.objects {
        o.disappear = o.disappear.min(s.frames);
    }
    s
}

fn scene(name: &str, seed: u64, frames: u32) -> ScenarioSpec {
    ScenarioSpec {
        name: name.to_string(),
        seed,
        frames,
        width: 640,
        height: 480,
        frame_rate: 30.0,
        background_scale: 12.0,
        noise: NoiseModel::default(),
        occluder: None,
        objects: Vec::new(),
        camera: Vec::new(),
    }
}

fn segment(start: u32, end: u32, scale: f64, rotation_deg: f64, tx: f64, ty: f64, period: f64) -> CameraSegment {
    CameraSegment { start, end, scale, rotation_deg, tx, ty, period }
}

/// Five well separated objects, static camera, perfect detections.
fn baseline() -> ScenarioSpec {
    let mut s = scene("baseline", 101, 60);
    s.objects = vec![
        obj(4, (48.0, 32.0), (110.0, 90.0), (2.0, 0.5), [210, 40, 40], Texture::Solid),
        obj(4, (56.0, 36.0), (520.0, 120.0), (-1.5, 0.8), [40, 60, 210], Texture::Stripes),
        obj(1, (24.0, 48.0), (300.0, 240.0), (0.0, 1.2), [230, 210, 40], Texture::Checker),
        obj(5, (44.0, 44.0), (140.0, 380.0), (1.8, -0.6), [40, 190, 70], Texture::Noise),
        obj(9, (60.0, 40.0), (500.0, 390.0), (-1.2, -0.4), [200, 90, 220], Texture::Solid),
    ];
    finish(s)
}

/// Jerky camera with per-frame rotation up to 3 degrees and translation up
/// to 15 px; three static and three moving objects, confident detections.
fn fast_camera() -> ScenarioSpec {
    let mut s = scene("fast_camera", 202, 100);
    s.camera = vec![
        segment(2, 21, 1.01, 3.0, 15.0, 5.0, 6.0),
        segment(22, 41, 0.99, -2.5, -12.0, 14.0, 4.0),
        segment(42, 61, 1.0, 3.0, 14.0, -10.0, 5.0),
        segment(62, 81, 1.01, -3.0, 10.0, 10.0, 4.0),
        segment(82, 100, 1.0, 2.0, -15.0, -8.0, 6.0),
    ];
    s.objects = vec![
        obj(4, (44.0, 32.0), (150.0, 130.0), (0.0, 0.0), [220, 50, 40], Texture::Solid),
        obj(4, (56.0, 40.0), (480.0, 120.0), (0.0, 0.0), [40, 70, 220], Texture::Stripes),
        obj(1, (32.0, 48.0), (170.0, 380.0), (0.0, 0.0), [235, 215, 50], Texture::Checker),
        obj(4, (44.0, 30.0), (110.0, 245.0), (2.2, 0.0), [40, 200, 200], Texture::Solid),
        obj(4, (50.0, 34.0), (530.0, 310.0), (-2.0, 0.0), [210, 80, 210], Texture::Noise),
        ObjectSpec {
            path: MotionPath::Sinusoidal { amp_x: 40.0, amp_y: 0.0, period: 50.0 },
            ..obj(5, (36.0, 36.0), (460.0, 390.0), (0.0, 0.0), [250, 140, 30], Texture::Stripes)
        },
    ];
    s.noise = NoiseModel {
        jitter: 0.3,
        size_jitter: 0.01,
        conf_small: 0.9,
        conf_large: 0.9,
        area_low: 0.0,
        area_high: 1.0,
        conf_noise: 0.03,
        score_min: 0.75,
        score_max: 0.99,
        dropout: 0.01,
        fp_rate: 0.0,
        occlusion_penalty: 0.0,
        max_occlusion: 0.7,
    };
    finish(s)
}

/// Objects 8 to 14 px tall whose detector scores stay in [0.3, 0.65];
/// two pairs of differently colored objects cross.
fn small_objects() -> ScenarioSpec {
    let mut s = scene("small_objects", 303, 100);
    s.camera = vec![segment(2, 100, 1.0, 0.1, 0.8, 0.4, 40.0)];
    s.objects = vec![
        obj(1, (6.0, 12.0), (120.0, 100.0), (0.8, 0.3), [230, 40, 40], Texture::Solid),
        obj(1, (6.0, 14.0), (520.0, 90.0), (-0.7, 0.4), [40, 70, 230], Texture::Solid),
        obj(4, (14.0, 9.0), (200.0, 200.0), (1.2, 0.0), [240, 220, 40], Texture::Solid),
        obj(4, (14.0, 10.0), (320.0, 200.0), (-1.2, 0.0), [40, 200, 60], Texture::Solid),
        obj(4, (12.0, 8.0), (420.0, 300.0), (-0.9, 0.5), [220, 60, 220], Texture::Solid),
        obj(4, (16.0, 11.0), (180.0, 380.0), (1.0, -0.3), [40, 220, 220], Texture::Solid),
        obj(1, (5.0, 10.0), (300.0, 330.0), (0.6, 0.8), [250, 140, 30], Texture::Solid),
        obj(4, (13.0, 9.0), (560.0, 400.0), (-1.1, -0.2), [250, 250, 250], Texture::Solid),
    ];
    s.noise = NoiseModel {
        jitter: 0.3,
        size_jitter: 0.03,
        conf_small: 0.35,
        conf_large: 0.9,
        area_low: 60.0,
        area_high: 2500.0,
        conf_noise: 0.04,
        score_min: 0.3,
        score_max: 0.65,
        dropout: 0.02,
        fp_rate: 0.1,
        occlusion_penalty: 0.3,
        max_occlusion: 0.7,
    };
    finish(s)
}

/// Static camera; objects cross each other and pass behind a horizontal band.
fn occlusion() -> ScenarioSpec {
    let mut s = scene("occlusion", 404, 80);
    s.occluder = Some(Occluder { left: 0.0, top: 220.0, width: 640.0, height: 34.0, color: [120, 120, 130] });
    s.objects = vec![
        obj(4, (48.0, 34.0), (100.0, 160.0), (3.0, 0.0), [220, 50, 40], Texture::Solid),
        obj(4, (50.0, 36.0), (540.0, 170.0), (-3.0, 0.0), [40, 70, 220], Texture::Stripes),
        obj(1, (26.0, 52.0), (200.0, 120.0), (0.0, 2.5), [235, 215, 50], Texture::Checker),
        obj(1, (26.0, 52.0), (440.0, 360.0), (0.0, -2.5), [40, 200, 80], Texture::Noise),
        obj(5, (44.0, 44.0), (320.0, 400.0), (1.0, -0.5), [210, 80, 210], Texture::Solid),
    ];
    s.noise = NoiseModel {
        jitter: 0.5,
        size_jitter: 0.02,
        conf_small: 0.85,
        conf_large: 0.9,
        area_low: 500.0,
        area_high: 2500.0,
        conf_noise: 0.04,
        score_min: 0.1,
        score_max: 0.99,
        dropout: 0.01,
        fp_rate: 0.2,
        occlusion_penalty: 0.6,
        max_occlusion: 0.7,
    };
    finish(s)
}
