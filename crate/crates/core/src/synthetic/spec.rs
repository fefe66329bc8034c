use crate::kv::{self, Entry, KvError, Section};
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpecError {
    #[error(transparent)]
    Syntax(#[from] KvError),
    #[error("line {line}: unknown key `{key}` in {section}")]
    UnknownKey { section: String, key: String, line: usize },
    #[error("line {line}: unknown section `[{name}]`")]
    UnknownSection { name: String, line: usize },
    #[error("missing required key `{key}` in {section}")]
    Missing { section: String, key: String },
    #[error("line {line}: invalid `{key}`: {reason}")]
    Invalid { key: String, line: usize, reason: String },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// Detector simulation applied to visible ground-truth boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    /// Std of the box-center jitter in pixels.
    pub jitter: f64,
    /// Std of the relative size jitter.
    pub size_jitter: f64,
    /// Base confidence at or below `area_low`.
    pub conf_small: f64,
    /// Base confidence at or above `area_high`.
    pub conf_large: f64,
    pub area_low: f64,
    pub area_high: f64,
    /// Std of the additive gaussian confidence noise.
    pub conf_noise: f64,
    pub score_min: f64,
    pub score_max: f64,
    /// Probability that a visible object yields no detection.
    pub dropout: f64,
    /// Expected number of false positives per frame.
    pub fp_rate: f64,
    /// Confidence subtracted per unit of occluded fraction.
    pub occlusion_penalty: f64,
    /// Objects occluded beyond this fraction are never detected.
    pub max_occlusion: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            jitter: 0.0,
            size_jitter: 0.0,
            conf_small: 1.0,
            conf_large: 1.0,
            area_low: 0.0,
            area_high: 1.0,
            conf_noise: 0.0,
            score_min: 0.0,
            score_max: 1.0,
            dropout: 0.0,
            fp_rate: 0.0,
            occlusion_penalty: 0.0,
            max_occlusion: 0.7,
        }
    }
}

impl NoiseModel {
    /// Piecewise-linear confidence over box area.
    pub fn base_confidence(&self, area: f64) -> f64 {
        if area <= self.area_low {
            self.conf_small
        } else if area >= self.area_high {
            self.conf_large
        } else {
            let t = (area - self.area_low) / (self.area_high - self.area_low);
            self.conf_small + t * (self.conf_large - self.conf_small)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MotionPath {
    Linear,
    /// Linear drift plus `amp * sin(2 pi t / period)` on each axis.
    Sinusoidal { amp_x: f64, amp_y: f64, period: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Texture {
    Solid,
    Stripes,
    Checker,
    Noise,
}

impl Texture {
    fn name(self) -> &'static str {
        match self {
            Texture::Solid => "solid",
            Texture::Stripes => "stripes",
            Texture::Checker => "checker",
            Texture::Noise => "noise",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectSpec {
    pub class_id: i32,
    /// World size in pixels.
    pub width: f64,
    pub height: f64,
    /// World center at frame 1.
    pub x: f64,
    pub y: f64,
    /// World velocity in pixels per frame.
    pub vx: f64,
    pub vy: f64,
    pub path: MotionPath,
    pub color: [u8; 3],
    pub texture: Texture,
    /// First and last frame (inclusive) in which the object exists.
    pub appear: u32,
    pub disappear: u32,
}

impl ObjectSpec {
    /// World center at `frame` (1-based).
    pub fn center(&self, frame: u32) -> [f64; 2] {
        let t = frame as f64 - 1.0;
        let mut c = [self.x + self.vx * t, self.y + self.vy * t];
        if let MotionPath::Sinusoidal { amp_x, amp_y, period } = self.path {
            let phase = (std::f64::consts::TAU * t / period).sin();
            c[0] += amp_x * phase;
            c[1] += amp_y * phase;
        }
        c
    }

    pub fn exists(&self, frame: u32) -> bool {
        (self.appear..=self.disappear).contains(&frame)
    }
}

/// Camera steps over an inclusive frame range. With `period > 0` every
/// parameter's deviation from identity is modulated by
/// `cos(2 pi (k - start) / period)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraSegment {
    pub start: u32,
    pub end: u32,
    pub scale: f64,
    pub rotation_deg: f64,
    pub tx: f64,
    pub ty: f64,
    pub period: f64,
}

impl CameraSegment {
    /// `(scale, rotation in radians, translation)` of the step into `frame`.
    pub fn step(&self, frame: u32) -> (f64, f64, [f64; 2]) {
        let f = if self.period > 0.0 {
            (std::f64::consts::TAU * (frame - self.start) as f64 / self.period).cos()
        } else {
            1.0
        };
        (1.0 + (self.scale - 1.0) * f, (self.rotation_deg * f).to_radians(), [self.tx * f, self.ty * f])
    }
}

/// Static band drawn over everything, in image coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Occluder {
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
    pub color: [u8; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub name: String,
    pub seed: u64,
    pub frames: u32,
    pub width: usize,
    pub height: usize,
    pub frame_rate: f64,
    /// Lattice spacing of the background noise in world pixels.
    pub background_scale: f64,
    pub noise: NoiseModel,
    pub occluder: Option<Occluder>,
    pub objects: Vec<ObjectSpec>,
    pub camera: Vec<CameraSegment>,
}

const ROOT_KEYS: [&str; 7] = ["name", "seed", "frames", "width", "height", "frame_rate", "background_scale"];
const NOISE_KEYS: [&str; 13] = [
    "jitter",
    "size_jitter",
    "conf_small",
    "conf_large",
    "area_low",
    "area_high",
    "conf_noise",
    "score_min",
    "score_max",
    "dropout",
    "fp_rate",
    "occlusion_penalty",
    "max_occlusion",
];
const OBJECT_KEYS: [&str; 15] = [
    "class_id", "width", "height", "x", "y", "vx", "vy", "motion", "amp_x", "amp_y", "period", "color", "texture",
    "appear", "disappear",
];
const CAMERA_KEYS: [&str; 7] = ["start", "end", "scale", "rotation_deg", "tx", "ty", "period"];
const OCCLUDER_KEYS: [&str; 5] = ["left", "top", "width", "height", "color"];

struct Reader<'a> {
    section: &'a Section,
    label: String,
}

impl<'a> Reader<'a> {
    fn new(section: &'a Section, allowed: &[&str]) -> Result<Self, SpecError> {
        let label = section.name.as_ref().map_or("root section".to_string(), |n| format!("[{n}]"));
        if let Some(e) = section.entries.iter().find(|e| !allowed.contains(&e.key.as_str())) {
            return Err(SpecError::UnknownKey { section: label, key: e.key.clone(), line: e.line });
        }
        Ok(Self { section, label })
    }

    fn entry(&self, key: &str) -> Result<&'a Entry, SpecError> {
        self.section
            .get(key)
            .ok_or_else(|| SpecError::Missing { section: self.label.clone(), key: key.to_string() })
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64, SpecError> {
        self.section.get(key).map_or(Ok(default), |e| Ok(kv::parse_f64(e)?))
    }

    fn f64(&self, key: &str) -> Result<f64, SpecError> {
        Ok(kv::parse_f64(self.entry(key)?)?)
    }

    fn u64(&self, key: &str) -> Result<u64, SpecError> {
        Ok(kv::parse_u64(self.entry(key)?)?)
    }

    fn u32_or(&self, key: &str, default: u32) -> Result<u32, SpecError> {
        match self.section.get(key) {
            None => Ok(default),
            Some(e) => u32::try_from(kv::parse_u64(e)?).map_err(|_| invalid(e, "out of range")),
        }
    }

    fn str_or(&self, key: &str, default: &'a str) -> &'a str {
        self.section.get(key).map_or(default, |e| e.value.as_str())
    }
}

fn invalid(e: &Entry, reason: impl Into<String>) -> SpecError {
    SpecError::Invalid { key: e.key.clone(), line: e.line, reason: reason.into() }
}

fn parse_color(e: &Entry) -> Result<[u8; 3], SpecError> {
    let parts: Vec<&str> = e.value.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(invalid(e, "expected `r,g,b`"));
    }
    let mut c = [0u8; 3];
    for (slot, p) in c.iter_mut().zip(parts) {
        *slot = p.parse().map_err(|_| invalid(e, format!("`{p}` is not a channel value 0-255")))?;
    }
    Ok(c)
}

fn check(cond: bool, e: Option<&Entry>, section: &str, key: &str, reason: &str) -> Result<(), SpecError> {
    if cond {
        return Ok(());
    }
    Err(match e {
        Some(e) => invalid(e, reason),
        None => SpecError::Invalid { key: format!("{section}.{key}"), line: 0, reason: reason.to_string() },
    })
}

impl ScenarioSpec {
    pub fn parse(text: &str) -> Result<Self, SpecError> {
        let sections = kv::parse(text)?;
        let root = Reader::new(&sections[0], &ROOT_KEYS)?;
        let width = root.section.get("width").map_or(Ok(640), |_| root.u64("width"))?;
        let height = root.section.get("height").map_or(Ok(480), |_| root.u64("height"))?;
        let frames_entry = root.entry("frames")?;
        let frames = u32::try_from(root.u64("frames")?).map_err(|_| invalid(frames_entry, "out of range"))?;
        let mut spec = ScenarioSpec {
            name: root.str_or("name", "custom").to_string(),
            seed: root.u64("seed")?,
            frames,
            width: width as usize,
            height: height as usize,
            frame_rate: root.f64_or("frame_rate", 30.0)?,
            background_scale: root.f64_or("background_scale", 12.0)?,
            noise: NoiseModel::default(),
            occluder: None,
            objects: Vec::new(),
            camera: Vec::new(),
        };
        check(frames >= 1, Some(frames_entry), "", "frames", "must be at least 1")?;
        check(spec.width >= 16 && spec.height >= 16, root.section.get("width"), "", "width", "image must be at least 16x16")?;
        check(spec.background_scale > 0.0, root.section.get("background_scale"), "", "background_scale", "must be positive")?;

        let mut seen_noise = false;
        for s in &sections[1..] {
            let name = s.name.as_deref().unwrap_or_default();
            match name {
                "noise" if !seen_noise => {
                    seen_noise = true;
                    spec.noise = parse_noise(&Reader::new(s, &NOISE_KEYS)?)?;
                }
                "occluder" if spec.occluder.is_none() => {
                    let r = Reader::new(s, &OCCLUDER_KEYS)?;
                    spec.occluder = Some(Occluder {
                        left: r.f64("left")?,
                        top: r.f64("top")?,
                        width: r.f64("width")?,
                        height: r.f64("height")?,
                        color: r.section.get("color").map_or(Ok([90, 90, 90]), parse_color)?,
                    });
                }
                "object" => spec.objects.push(parse_object(&Reader::new(s, &OBJECT_KEYS)?, frames)?),
                "camera" => spec.camera.push(parse_camera(&Reader::new(s, &CAMERA_KEYS)?, frames)?),
                _ => return Err(SpecError::UnknownSection { name: name.to_string(), line: s.line }),
            }
        }
        spec.camera.sort_by_key(|c| c.start);
        for pair in spec.camera.windows(2) {
            if pair[1].start <= pair[0].end {
                return Err(SpecError::Invalid {
                    key: "camera.start".into(),
                    line: 0,
                    reason: format!("segments starting at {} and {} overlap", pair[0].start, pair[1].start),
                });
            }
        }
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, SpecError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Spec file text; `parse(to_text())` reproduces the spec.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "name = {}", self.name);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "frames = {}", self.frames);
        let _ = writeln!(s, "width = {}", self.width);
        let _ = writeln!(s, "height = {}", self.height);
        let _ = writeln!(s, "frame_rate = {}", self.frame_rate);
        let _ = writeln!(s, "background_scale = {}", self.background_scale);
        let n = &self.noise;
        let _ = write!(
            s,
            "\n[noise]\njitter = {}\nsize_jitter = {}\nconf_small = {}\nconf_large = {}\narea_low = {}\narea_high = {}\n\
             conf_noise = {}\nscore_min = {}\nscore_max = {}\ndropout = {}\nfp_rate = {}\nocclusion_penalty = {}\n\
             max_occlusion = {}\n",
            n.jitter,
            n.size_jitter,
            n.conf_small,
            n.conf_large,
            n.area_low,
            n.area_high,
            n.conf_noise,
            n.score_min,
            n.score_max,
            n.dropout,
            n.fp_rate,
            n.occlusion_penalty,
            n.max_occlusion
        );
        if let Some(o) = &self.occluder {
            let _ = write!(
                s,
                "\n[occluder]\nleft = {}\ntop = {}\nwidth = {}\nheight = {}\ncolor = {},{},{}\n",
                o.left, o.top, o.width, o.height, o.color[0], o.color[1], o.color[2]
            );
        }
        for o in &self.objects {
            let _ = write!(
                s,
                "\n[object]\nclass_id = {}\nwidth = {}\nheight = {}\nx = {}\ny = {}\nvx = {}\nvy = {}\n",
                o.class_id, o.width, o.height, o.x, o.y, o.vx, o.vy
            );
            match o.path {
                MotionPath::Linear => s.push_str("motion = linear\n"),
                MotionPath::Sinusoidal { amp_x, amp_y, period } => {
                    let _ = write!(s, "motion = sinusoidal\namp_x = {amp_x}\namp_y = {amp_y}\nperiod = {period}\n");
                }
            }
            let _ = write!(
                s,
                "color = {},{},{}\ntexture = {}\nappear = {}\ndisappear = {}\n",
                o.color[0],
                o.color[1],
                o.color[2],
                o.texture.name(),
                o.appear,
                o.disappear
            );
        }
        for c in &self.camera {
            let _ = write!(
                s,
                "\n[camera]\nstart = {}\nend = {}\nscale = {}\nrotation_deg = {}\ntx = {}\nty = {}\nperiod = {}\n",
                c.start, c.end, c.scale, c.rotation_deg, c.tx, c.ty, c.period
            );
        }
        s
    }
}

fn parse_noise(r: &Reader) -> Result<NoiseModel, SpecError> {
    let d = NoiseModel::default();
    let n = NoiseModel {
        jitter: r.f64_or("jitter", d.jitter)?,
        size_jitter: r.f64_or("size_jitter", d.size_jitter)?,
        conf_small: r.f64_or("conf_small", d.conf_small)?,
        conf_large: r.f64_or("conf_large", d.conf_large)?,
        area_low: r.f64_or("area_low", d.area_low)?,
        area_high: r.f64_or("area_high", d.area_high)?,
        conf_noise: r.f64_or("conf_noise", d.conf_noise)?,
        score_min: r.f64_or("score_min", d.score_min)?,
        score_max: r.f64_or("score_max", d.score_max)?,
        dropout: r.f64_or("dropout", d.dropout)?,
        fp_rate: r.f64_or("fp_rate", d.fp_rate)?,
        occlusion_penalty: r.f64_or("occlusion_penalty", d.occlusion_penalty)?,
        max_occlusion: r.f64_or("max_occlusion", d.max_occlusion)?,
    };
    let e = |k| r.section.get(k);
    check(n.jitter >= 0.0 && n.size_jitter >= 0.0 && n.conf_noise >= 0.0, e("jitter"), "noise", "jitter", "noise std must be non-negative")?;
    check(n.area_high > n.area_low, e("area_high"), "noise", "area_high", "must exceed area_low")?;
    check(
        0.0 <= n.score_min && n.score_min <= n.score_max && n.score_max <= 1.0,
        e("score_min"),
        "noise",
        "score_min",
        "need 0 <= score_min <= score_max <= 1",
    )?;
    check((0.0..=1.0).contains(&n.dropout), e("dropout"), "noise", "dropout", "must be a probability")?;
    check(n.fp_rate >= 0.0, e("fp_rate"), "noise", "fp_rate", "must be non-negative")?;
    Ok(n)
}

fn parse_object(r: &Reader, frames: u32) -> Result<ObjectSpec, SpecError> {
    let path = match r.str_or("motion", "linear") {
        "linear" => MotionPath::Linear,
        "sinusoidal" => {
            let period = r.f64("period")?;
            check(period > 0.0, r.section.get("period"), "object", "period", "must be positive")?;
            MotionPath::Sinusoidal { amp_x: r.f64_or("amp_x", 0.0)?, amp_y: r.f64_or("amp_y", 0.0)?, period }
        }
        other => return Err(invalid(r.entry("motion")?, format!("unknown motion `{other}`"))),
    };
    let texture = match r.str_or("texture", "solid") {
        "solid" => Texture::Solid,
        "stripes" => Texture::Stripes,
        "checker" => Texture::Checker,
        "noise" => Texture::Noise,
        other => return Err(invalid(r.entry("texture")?, format!("unknown texture `{other}`"))),
    };
    let class_entry = r.entry("class_id")?;
    let o = ObjectSpec {
        class_id: i32::try_from(kv::parse_i64(class_entry)?).map_err(|_| invalid(class_entry, "out of range"))?,
        width: r.f64("width")?,
        height: r.f64("height")?,
        x: r.f64("x")?,
        y: r.f64("y")?,
        vx: r.f64_or("vx", 0.0)?,
        vy: r.f64_or("vy", 0.0)?,
        path,
        color: r.section.get("color").map_or(Ok([200, 60, 60]), parse_color)?,
        texture,
        appear: r.u32_or("appear", 1)?,
        disappear: r.u32_or("disappear", frames)?,
    };
    check(o.width > 0.0 && o.height > 0.0, r.section.get("width"), "object", "width", "size must be positive")?;
    check(o.appear >= 1 && o.appear <= o.disappear, r.section.get("appear"), "object", "appear", "need 1 <= appear <= disappear")?;
    Ok(o)
}

fn parse_camera(r: &Reader, frames: u32) -> Result<CameraSegment, SpecError> {
    let c = CameraSegment {
        start: r.u32_or("start", 2)?,
        end: r.u32_or("end", frames)?,
        scale: r.f64_or("scale", 1.0)?,
        rotation_deg: r.f64_or("rotation_deg", 0.0)?,
        tx: r.f64_or("tx", 0.0)?,
        ty: r.f64_or("ty", 0.0)?,
        period: r.f64_or("period", 0.0)?,
    };
    check(c.start >= 2 && c.start <= c.end, r.section.get("start"), "camera", "start", "need 2 <= start <= end")?;
    check(c.scale > 0.0, r.section.get("scale"), "camera", "scale", "must be positive")?;
    check(c.period >= 0.0, r.section.get("period"), "camera", "period", "must be non-negative")?;
    Ok(c)
}
