//! Detection, ground-truth and result text files, sequence manifests and
//! frame images.

mod ppm;

pub use ppm::{decode_ppm, encode_ppm, PpmError};

use crate::appearance::EmbeddingTable;
use crate::detection::Detection;
use crate::geometry::BoundingBox;
use crate::image::RawImage;
use crate::kv;
use crate::metrics::EvalRecord;
use crate::tracker::{DetectionsByFrame, FrameResult, FrameSource, TrackerError};
use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}line {line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Image { path: String, source: PpmError },
    #[error("manifest {path}: {message}")]
    Manifest { path: String, message: String },
}

impl FormatError {
    fn with_path(self, p: &Path) -> Self {
        match self {
            FormatError::Parse { line, message, .. } => {
                FormatError::Parse { path: format!("{}: ", p.display()), line, message }
            }
            other => other,
        }
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Parse { path: String::new(), line, message: message.into() }
}

pub fn read_text(path: &Path) -> Result<String, FormatError> {
    std::fs::read_to_string(path).map_err(|source| FormatError::Io { path: path.display().to_string(), source })
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    std::fs::write(path, bytes).map_err(|source| FormatError::Io { path: path.display().to_string(), source })
}

/// Comma-separated numeric rows, skipping blank lines.
fn rows(text: &str, min_fields: usize) -> impl Iterator<Item = Result<(usize, Vec<f64>), FormatError>> + '_ {
    text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()).map(move |(i, l)| {
        let line = i + 1;
        let fields: Vec<&str> = l.split(',').map(str::trim).collect();
        if fields.len() < min_fields {
            return Err(parse_err(line, format!("expected at least {min_fields} fields, got {}", fields.len())));
        }
        let values = fields
            .iter()
            .enumerate()
            .map(|(k, f)| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(line, format!("field {} is not a number: `{f}`", k + 1)))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        Ok((line, values))
    })
}

fn frame_of(line: usize, v: f64) -> Result<u32, FormatError> {
    if v.fract() != 0.0 || v < 1.0 || v > u32::MAX as f64 {
        return Err(parse_err(line, format!("frame must be a positive integer, got {v}")));
    }
    Ok(v as u32)
}

fn int_of(line: usize, what: &str, v: f64) -> Result<i64, FormatError> {
    if v.fract() != 0.0 || v.abs() > 9.0e15 {
        return Err(parse_err(line, format!("{what} must be an integer, got {v}")));
    }
    Ok(v as i64)
}

fn box_of(line: usize, v: &[f64]) -> Result<BoundingBox, FormatError> {
    BoundingBox::new(v[0], v[1], v[2], v[3]).map_err(|e| parse_err(line, e.to_string()))
}

/// MOTChallenge detections: `frame,id,left,top,width,height,conf[,x,y,z]`.
///
/// A non-negative integer in the eighth column is taken as the class id;
/// otherwise the class is 0. When any score falls outside `[0, 1]`, all
/// scores in the file are min-max rescaled.
pub fn parse_mot_detections(text: &str) -> Result<DetectionsByFrame, FormatError> {
    let mut raw = Vec::new();
    for row in rows(text, 7) {
        let (line, v) = row?;
        let frame = frame_of(line, v[0])?;
        let bbox = box_of(line, &v[2..6])?;
        let class_id = match v.get(7) {
            Some(&c) if c >= 0.0 && c.fract() == 0.0 && c <= i32::MAX as f64 => c as i32,
            _ => 0,
        };
        raw.push((frame, bbox, v[6], class_id));
    }
    let (lo, hi) = raw.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r.2), hi.max(r.2)));
    let rescale = !raw.is_empty() && (lo < 0.0 || hi > 1.0);
    if rescale {
        log::warn!("detection scores span [{lo}, {hi}]; rescaling to [0, 1]");
    }
    let mut out = DetectionsByFrame::new();
    for (frame, bbox, score, class_id) in raw {
        let score = if rescale {
            if hi > lo { (score - lo) / (hi - lo) } else { 1.0 }
        } else {
            score
        };
        let d = Detection::new(frame, bbox, score.clamp(0.0, 1.0), class_id).expect("score clamped");
        out.entry(frame).or_default().push(d);
    }
    Ok(out)
}

pub fn read_mot_detections(path: &Path) -> Result<DetectionsByFrame, FormatError> {
    parse_mot_detections(&read_text(path)?).map_err(|e| e.with_path(path))
}

/// Attaches embeddings keyed by `(frame, index within the frame's detections)`.
pub fn attach_embeddings(dets: &mut DetectionsByFrame, table: &EmbeddingTable) -> usize {
    let mut n = 0;
    for (frame, list) in dets.iter_mut() {
        for (i, d) in list.iter_mut().enumerate() {
            if let Some(e) = table.get(&(*frame, i)) {
                d.embedding = Some(e.clone());
                n += 1;
            }
        }
    }
    n
}

/// Tracker results: `frame,id,left,top,width,height,score,...`.
pub fn parse_results(text: &str) -> Result<Vec<EvalRecord>, FormatError> {
    rows(text, 6)
        .map(|row| {
            let (line, v) = row?;
            Ok(EvalRecord {
                frame: frame_of(line, v[0])?,
                id: int_of(line, "id", v[1])?,
                bbox: box_of(line, &v[2..6])?,
                class_id: None,
                ignore: false,
            })
        })
        .collect()
}

pub fn read_results(path: &Path) -> Result<Vec<EvalRecord>, FormatError> {
    parse_results(&read_text(path)?).map_err(|e| e.with_path(path))
}

/// MOTChallenge ground truth: `frame,id,left,top,width,height,flag[,class,visibility]`.
/// Rows with flag 0 become ignore regions.
pub fn parse_mot_gt(text: &str) -> Result<Vec<EvalRecord>, FormatError> {
    rows(text, 7)
        .map(|row| {
            let (line, v) = row?;
            Ok(EvalRecord {
                frame: frame_of(line, v[0])?,
                id: int_of(line, "id", v[1])?,
                bbox: box_of(line, &v[2..6])?,
                class_id: v.get(7).map(|&c| c as i32),
                ignore: v[6] == 0.0,
            })
        })
        .collect()
}

pub fn read_mot_gt(path: &Path) -> Result<Vec<EvalRecord>, FormatError> {
    parse_mot_gt(&read_text(path)?).map_err(|e| e.with_path(path))
}

/// The five evaluated VisDrone categories: pedestrian, car, van, truck, bus.
pub const VISDRONE_CLASSES: [i32; 5] = [1, 4, 5, 6, 9];

/// Category of VisDrone "ignored regions".
pub const VISDRONE_IGNORED_REGION: i32 = 0;

struct VisDroneRow {
    line: usize,
    frame: u32,
    id: i64,
    bbox: BoundingBox,
    score: f64,
    category: i32,
}

fn visdrone_rows(text: &str) -> impl Iterator<Item = Result<VisDroneRow, FormatError>> + '_ {
    rows(text, 8).map(|row| {
        let (line, v) = row?;
        Ok(VisDroneRow {
            line,
            frame: frame_of(line, v[0])?,
            id: int_of(line, "id", v[1])?,
            bbox: box_of(line, &v[2..6])?,
            score: v[6],
            category: int_of(line, "category", v[7])? as i32,
        })
    })
}

/// VisDrone ground truth `frame,id,x,y,w,h,score,category,truncation,occlusion`.
/// Rows with score 0 or in the ignored-region category are kept as ignore
/// regions; categories outside `classes` are dropped.
pub fn parse_visdrone_gt(text: &str, classes: &[i32]) -> Result<Vec<EvalRecord>, FormatError> {
    let mut out = Vec::new();
    for r in visdrone_rows(text) {
        let r = r?;
        let ignore = r.score == 0.0 || r.category == VISDRONE_IGNORED_REGION;
        if !ignore && !classes.contains(&r.category) {
            continue;
        }
        out.push(EvalRecord { frame: r.frame, id: r.id, bbox: r.bbox, class_id: Some(r.category), ignore });
    }
    Ok(out)
}

pub fn read_visdrone_gt(path: &Path, classes: &[i32]) -> Result<Vec<EvalRecord>, FormatError> {
    parse_visdrone_gt(&read_text(path)?, classes).map_err(|e| e.with_path(path))
}

/// VisDrone detections; the score column is the confidence.
pub fn parse_visdrone_detections(text: &str, classes: &[i32]) -> Result<DetectionsByFrame, FormatError> {
    let mut out = DetectionsByFrame::new();
    for r in visdrone_rows(text) {
        let r = r?;
        if !classes.contains(&r.category) {
            continue;
        }
        let d = Detection::new(r.frame, r.bbox, r.score, r.category)
            .map_err(|e| parse_err(r.line, e.to_string()))?;
        out.entry(r.frame).or_default().push(d);
    }
    Ok(out)
}

pub fn read_visdrone_detections(path: &Path, classes: &[i32]) -> Result<DetectionsByFrame, FormatError> {
    parse_visdrone_detections(&read_text(path)?, classes).map_err(|e| e.with_path(path))
}

/// One line per output: `frame,track_id,left,top,width,height,score,-1,-1,-1`
/// with two decimals.
pub fn format_results(results: &[FrameResult]) -> String {
    let mut s = String::new();
    for r in results {
        for o in &r.outputs {
            let b = &o.bbox;
            let _ = writeln!(
                s,
                "{},{},{:.2},{:.2},{:.2},{:.2},{:.2},-1,-1,-1",
                r.frame, o.track_id, b.left, b.top, b.width, b.height, o.score
            );
        }
    }
    s
}

pub fn write_results(path: &Path, results: &[FrameResult]) -> Result<(), FormatError> {
    write_bytes(path, format_results(results).as_bytes())
}

pub fn read_ppm(path: &Path) -> Result<RawImage, FormatError> {
    let bytes = std::fs::read(path).map_err(|source| FormatError::Io { path: path.display().to_string(), source })?;
    decode_ppm(&bytes).map_err(|source| FormatError::Image { path: path.display().to_string(), source })
}

pub fn write_ppm(path: &Path, img: &RawImage) -> Result<(), FormatError> {
    write_bytes(path, &encode_ppm(img))
}

pub const MANIFEST_FILE: &str = "seqinfo.ini";

/// `seqinfo.ini`-style sequence description.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceManifest {
    pub name: String,
    pub image_directory: String,
    pub frame_rate: f64,
    pub seq_length: u32,
    pub im_width: usize,
    pub im_height: usize,
    pub image_extension: String,
}

impl SequenceManifest {
    pub fn parse(text: &str) -> Result<Self, String> {
        let sections = kv::parse(text).map_err(|e| e.to_string())?;
        let section = sections
            .iter()
            .find(|s| s.name.as_deref() == Some("Sequence"))
            .or_else(|| sections.first())
            .ok_or("no [Sequence] section")?;
        let get = |k: &str| section.get(k).ok_or_else(|| format!("missing key `{k}`"));
        let num = |k: &str| -> Result<u64, String> { kv::parse_u64(get(k)?).map_err(|e| e.to_string()) };
        Ok(Self {
            name: get("name")?.value.clone(),
            image_directory: section.get("imDir").map_or("img1".to_string(), |e| e.value.clone()),
            frame_rate: match section.get("frameRate") {
                Some(e) => kv::parse_f64(e).map_err(|e| e.to_string())?,
                None => 30.0,
            },
            seq_length: u32::try_from(num("seqLength")?).map_err(|_| "seqLength out of range")?,
            im_width: num("imWidth")? as usize,
            im_height: num("imHeight")? as usize,
            image_extension: section.get("imExt").map_or(".ppm".to_string(), |e| e.value.clone()),
        })
    }

    pub fn to_text(&self) -> String {
        format!(
            "[Sequence]\nname={}\nimDir={}\nframeRate={}\nseqLength={}\nimWidth={}\nimHeight={}\nimExt={}\n",
            self.name, self.image_directory, self.frame_rate, self.seq_length, self.im_width, self.im_height,
            self.image_extension
        )
    }

    pub fn frame_file(&self, index: u32) -> String {
        format!("{index:06}{}", self.image_extension)
    }
}

/// A sequence directory: manifest plus one image per frame.
#[derive(Debug, Clone)]
pub struct SequenceDir {
    pub root: PathBuf,
    pub manifest: SequenceManifest,
}

impl SequenceDir {
    /// Loads the manifest and checks that exactly `seq_length` frame images exist.
    pub fn open(root: &Path) -> Result<Self, FormatError> {
        let mpath = root.join(MANIFEST_FILE);
        let manifest = SequenceManifest::parse(&read_text(&mpath)?)
            .map_err(|message| FormatError::Manifest { path: mpath.display().to_string(), message })?;
        let dir = root.join(&manifest.image_directory);
        let listing = std::fs::read_dir(&dir).map_err(|source| FormatError::Io { path: dir.display().to_string(), source })?;
        let present: BTreeSet<String> = listing
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().into_string().ok())
            .filter(|n| n.ends_with(&manifest.image_extension))
            .collect();
        let expected: BTreeSet<String> = (1..=manifest.seq_length).map(|i| manifest.frame_file(i)).collect();
        if present != expected {
            let missing = expected.difference(&present).next().cloned();
            return Err(FormatError::Manifest {
                path: mpath.display().to_string(),
                message: match missing {
                    Some(m) => format!("seqLength {} but frame {m} is missing", manifest.seq_length),
                    None => format!("seqLength {} but {} images present", manifest.seq_length, present.len()),
                },
            });
        }
        Ok(Self { root: root.to_path_buf(), manifest })
    }

    pub fn frame_path(&self, index: u32) -> PathBuf {
        self.root.join(&self.manifest.image_directory).join(self.manifest.frame_file(index))
    }

    pub fn read_frame(&self, index: u32) -> Result<RawImage, FormatError> {
        read_ppm(&self.frame_path(index))
    }
}

impl FrameSource for SequenceDir {
    fn frame_count(&self) -> u32 {
        self.manifest.seq_length
    }

    fn frame(&self, index: u32) -> Result<RawImage, TrackerError> {
        if index == 0 || index > self.manifest.seq_length {
            return Err(TrackerError::MissingImage(index));
        }
        self.read_frame(index).map_err(|e| TrackerError::Frame { frame: index, message: e.to_string() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tracker::{FrameDiagnostics, TrackOutput};
    use proptest::prelude::*;

    #[test]
    fn mot_detection_line() {
        let d = parse_mot_detections("1,-1,10,20,30,40,0.9\n").unwrap();
        let det = &d[&1][0];
        assert_eq!(det.bbox, BoundingBox::tlwh(10., 20., 30., 40.));
        assert_eq!(det.score, 0.9);
        assert_eq!(det.class_id, 0);
        let d = parse_mot_detections("2,-1,1,2,3,4,0.5,4,-1,-1\n").unwrap();
        assert_eq!(d[&2][0].class_id, 4);
        assert!(parse_mot_detections("").unwrap().is_empty());
    }

    #[test]
    fn mot_detection_errors_name_the_line() {
        match parse_mot_detections("1,-1,1,2,3,4,0.5\n1,-1,a,2,3,4,0.5\n") {
            Err(FormatError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(parse_mot_detections("0,-1,1,2,3,4,0.5\n").is_err());
        assert!(parse_mot_detections("1,-1,1,2,-3,4,0.5\n").is_err());
    }

    #[test]
    fn scores_rescaled() {
        let d = parse_mot_detections("1,-1,0,0,1,1,10\n1,-1,0,0,1,1,30\n2,-1,0,0,1,1,20\n").unwrap();
        assert_eq!(d[&1][0].score, 0.0);
        assert_eq!(d[&1][1].score, 1.0);
        assert_eq!(d[&2][0].score, 0.5);
    }

    #[test]
    fn visdrone_filters_and_ignores() {
        let text = "1,1,0,0,10,10,1,4,0,0\n1,2,0,0,10,10,1,3,0,0\n1,3,0,0,10,10,0,4,0,0\n1,4,5,5,10,10,1,0,0,0\n";
        let gt = parse_visdrone_gt(text, &VISDRONE_CLASSES).unwrap();
        assert_eq!(gt.len(), 3);
        assert_eq!((gt[0].id, gt[0].class_id, gt[0].ignore), (1, Some(4), false));
        assert!(gt[1].ignore && gt[2].ignore);
        let det = parse_visdrone_detections("3,-1,1,2,3,4,0.8,1,0,0\n3,-1,1,2,3,4,0.8,11,0,0\n", &VISDRONE_CLASSES).unwrap();
        assert_eq!(det[&3].len(), 1);
        assert_eq!(det[&3][0].class_id, 1);
        assert!(parse_visdrone_gt("1,1,0,0,10\n", &VISDRONE_CLASSES).is_err());
    }

    fn result(frame: u32, id: u64, b: BoundingBox, score: f64) -> FrameResult {
        FrameResult {
            frame,
            outputs: vec![TrackOutput { track_id: id, class_id: 0, bbox: b, score }],
            diagnostics: FrameDiagnostics::default(),
            predictions: vec![],
        }
    }

    #[test]
    fn results_format() {
        let r = result(3, 7, BoundingBox::tlwh(1.234, 5.0, 10.005, 20.5), 0.912);
        assert_eq!(format_results(&[r]), "3,7,1.23,5.00,10.01,20.50,0.91,-1,-1,-1\n");
        assert_eq!(format_results(&[]), "");
    }

    #[test]
    fn manifest_round_trip() {
        let m = SequenceManifest {
            name: "s".into(),
            image_directory: "frames".into(),
            frame_rate: 30.0,
            seq_length: 4,
            im_width: 64,
            im_height: 48,
            image_extension: ".ppm".into(),
        };
        assert_eq!(SequenceManifest::parse(&m.to_text()).unwrap(), m);
        let extra = m.to_text() + "unknownKey=1\n";
        assert_eq!(SequenceManifest::parse(&extra).unwrap(), m);
        assert!(SequenceManifest::parse("[Sequence]\nname=x\n").is_err());
    }

    #[test]
    fn sequence_dir_checks_frame_count() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = SequenceManifest {
            name: "s".into(),
            image_directory: "frames".into(),
            frame_rate: 30.0,
            seq_length: 2,
            im_width: 2,
            im_height: 2,
            image_extension: ".ppm".into(),
        };
        std::fs::create_dir(dir.path().join("frames")).unwrap();
        for i in 1..=2 {
            write_ppm(&dir.path().join("frames").join(m.frame_file(i)), &RawImage::filled(2, 2, [1, 2, 3])).unwrap();
        }
        std::fs::write(dir.path().join(MANIFEST_FILE), m.to_text()).unwrap();
        let seq = SequenceDir::open(dir.path()).unwrap();
        assert_eq!(seq.frame(2).unwrap().pixel(1, 1), [1, 2, 3]);
        m.seq_length = 3;
        std::fs::write(dir.path().join(MANIFEST_FILE), m.to_text()).unwrap();
        assert!(SequenceDir::open(dir.path()).is_err());
    }

    proptest! {
        #[test]
        fn write_read_is_idempotent_at_two_decimals(
            boxes in proptest::collection::vec((1u32..50, 1u64..20, -100.0..700.0f64, -100.0..500.0f64, 0.0..200.0f64, 0.0..200.0f64, 0.0..=1.0f64), 0..20)
        ) {
            let results: Vec<FrameResult> = boxes
                .iter()
                .map(|&(f, id, l, t, w, h, s)| result(f, id, BoundingBox::tlwh(l, t, w, h), s))
                .collect();
            let text = format_results(&results);
            let parsed = parse_results(&text).unwrap();
            prop_assert_eq!(parsed.len(), results.len());
            for (p, r) in parsed.iter().zip(&results) {
                let b = &r.outputs[0].bbox;
                prop_assert!((p.bbox.left - b.left).abs() <= 0.005 + 1e-9);
                prop_assert!((p.bbox.height - b.height).abs() <= 0.005 + 1e-9);
            }
            // second pass reproduces the same text exactly
            let again: Vec<FrameResult> = parsed
                .iter()
                .zip(&results)
                .map(|(p, r)| result(p.frame, p.id as u64, p.bbox, (r.outputs[0].score * 100.0).round() / 100.0))
                .collect();
            prop_assert_eq!(format_results(&again), text);
        }

        #[test]
        fn parsers_are_total(s in "[0-9,.\\-a-z\n ]{0,80}") {
            let _ = parse_mot_detections(&s);
            let _ = parse_results(&s);
            let _ = parse_mot_gt(&s);
            let _ = parse_visdrone_gt(&s, &VISDRONE_CLASSES);
        }
    }
}
