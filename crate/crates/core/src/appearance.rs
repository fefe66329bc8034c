//! Hand-crafted appearance cues: per-channel color histograms compared by
//! Bhattacharyya (Hellinger) distance, scaled-crop MSE, and embeddings.

use crate::detection::Embedding;
use crate::geometry::BoundingBox;
use crate::image::RawImage;
use std::collections::HashMap;
use std::path::Path;
use thiserror::Error;

/// Per-channel (R, G, B) normalized histograms, `bins` entries each.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorHistogram {
    bins: usize,
    values: Vec<f64>,
    degenerate: bool,
}

impl ColorHistogram {
    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.values[c * self.bins..(c + 1) * self.bins]
    }

    /// True when built from an empty crop; all bins are zero.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn empty(bins: usize) -> Self {
        Self { bins, values: vec![0.0; 3 * bins], degenerate: true }
    }

    /// Builds a histogram from already-normalized channel values.
    pub fn from_channels(r: &[f64], g: &[f64], b: &[f64]) -> Self {
        assert!(r.len() == g.len() && g.len() == b.len());
        let values = [r, g, b].concat();
        let degenerate = values.iter().all(|&v| v == 0.0);
        Self { bins: r.len(), values, degenerate }
    }
}

#[inline]
fn bin_of(v: u8, bins: usize) -> usize {
    v as usize * bins / 256
}

/// Histogram of a crop: `bins` equal-width levels over 0..=255 per channel,
/// each channel L1-normalized.
pub fn color_histogram(crop: &RawImage, bins: usize) -> ColorHistogram {
    if crop.is_empty() || bins == 0 {
        return ColorHistogram::empty(bins);
    }
    let mut values = vec![0.0; 3 * bins];
    for px in crop.data().chunks_exact(3) {
        for c in 0..3 {
            values[c * bins + bin_of(px[c], bins)] += 1.0;
        }
    }
    let n = (crop.width() * crop.height()) as f64;
    values.iter_mut().for_each(|v| *v /= n);
    ColorHistogram { bins, values, degenerate: false }
}

/// `1 - mean_c sqrt(1 - sum_i sqrt(h1_i h2_i))`.
pub fn hist_similarity(h1: &ColorHistogram, h2: &ColorHistogram) -> f64 {
    if h1.degenerate || h2.degenerate || h1.bins != h2.bins {
        return 0.0;
    }
    let mut dist = 0.0;
    for c in 0..3 {
        let bc: f64 = h1.channel(c).iter().zip(h2.channel(c)).map(|(a, b)| (a * b).sqrt()).sum();
        dist += (1.0 - bc.min(1.0)).max(0.0).sqrt();
    }
    (1.0 - dist / 3.0).clamp(0.0, 1.0)
}

/// Crop resized to a fixed patch, stored as floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub width: usize,
    pub height: usize,
    data: Vec<f64>,
}

impl Patch {
    /// Bilinear resize with pixel-center alignment.
    pub fn from_crop(crop: &RawImage, (w, h): (usize, usize)) -> Option<Self> {
        if crop.is_empty() || w == 0 || h == 0 {
            return None;
        }
        let (sw, sh) = (crop.width(), crop.height());
        let sx = sw as f64 / w as f64;
        let sy = sh as f64 / h as f64;
        let mut data = Vec::with_capacity(w * h * 3);
        for y in 0..h {
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (sh - 1) as f64);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(sh - 1);
            let ty = fy - y0 as f64;
            for x in 0..w {
                let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (sw - 1) as f64);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(sw - 1);
                let tx = fx - x0 as f64;
                let (a, b, c, d) = (crop.pixel(x0, y0), crop.pixel(x1, y0), crop.pixel(x0, y1), crop.pixel(x1, y1));
                for ch in 0..3 {
                    let top = a[ch] as f64 * (1.0 - tx) + b[ch] as f64 * tx;
                    let bot = c[ch] as f64 * (1.0 - tx) + d[ch] as f64 * tx;
                    data.push(top * (1.0 - ty) + bot * ty);
                }
            }
        }
        Some(Self { width: w, height: h, data })
    }
}

/// `1 - MSE / 255^2` between two patches of the same size.
pub fn patch_similarity(a: &Patch, b: &Patch) -> f64 {
    if a.width != b.width || a.height != b.height {
        return 0.0;
    }
    let mse = a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.data.len() as f64;
    (1.0 - mse / (255.0 * 255.0)).clamp(0.0, 1.0)
}

/// Resizes both crops to `patch` and compares them by normalized MSE.
pub fn scaled_mse_similarity(a: &RawImage, b: &RawImage, patch: (usize, usize)) -> f64 {
    match (Patch::from_crop(a, patch), Patch::from_crop(b, patch)) {
        (Some(pa), Some(pb)) => patch_similarity(&pa, &pb),
        _ => 0.0,
    }
}

/// Cosine similarity clamped at zero. Inputs that are not unit length are
/// renormalized first.
pub fn embedding_similarity(e1: &[f64], e2: &[f64]) -> f64 {
    if e1.len() != e2.len() || e1.is_empty() {
        return 0.0;
    }
    let n1 = e1.iter().map(|v| v * v).sum::<f64>().sqrt();
    let n2 = e2.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(n1 > 0.0 && n2 > 0.0) {
        return 0.0;
    }
    if (n1 - 1.0).abs() > 1e-6 || (n2 - 1.0).abs() > 1e-6 {
        log::warn!("embedding not unit-norm ({n1:.6}, {n2:.6}); renormalizing");
    }
    let dot: f64 = e1.iter().zip(e2).map(|(a, b)| a * b).sum();
    (dot / (n1 * n2)).clamp(0.0, 1.0)
}

/// Pixels of `frame` inside `bbox` after rounding to the pixel grid and
/// clamping to the frame. `None` marks a degenerate crop.
pub fn extract_crop(frame: &RawImage, bbox: &BoundingBox) -> Option<RawImage> {
    if frame.is_empty() || ![bbox.left, bbox.top, bbox.width, bbox.height].iter().all(|v| v.is_finite()) {
        return None;
    }
    let (fw, fh) = (frame.width() as f64, frame.height() as f64);
    let l = bbox.left.round().clamp(0.0, fw);
    let t = bbox.top.round().clamp(0.0, fh);
    let r = bbox.right().round().clamp(0.0, fw);
    let b = bbox.bottom().round().clamp(0.0, fh);
    if r <= l || b <= t {
        return None;
    }
    Some(frame.sub_image(l as usize, t as usize, (r - l) as usize, (b - t) as usize))
}

const GRID_COLS: usize = 2;
const GRID_ROWS: usize = 4;
const GRID_BINS: usize = 8;

/// Fallback embedding: a 2 (wide) x 4 (tall) grid of 3x8 color histograms,
/// concatenated to 192 values and L2-normalized.
pub fn handcrafted_embedding(crop: &RawImage) -> Option<Embedding> {
    if crop.is_empty() {
        return None;
    }
    let (w, h) = (crop.width(), crop.height());
    let cell_len = 3 * GRID_BINS;
    let mut v = vec![0.0; GRID_COLS * GRID_ROWS * cell_len];
    let mut counts = [0usize; GRID_COLS * GRID_ROWS];
    for y in 0..h {
        let row = (((y as f64 + 0.5) / h as f64) * GRID_ROWS as f64) as usize;
        for x in 0..w {
            let col = (((x as f64 + 0.5) / w as f64) * GRID_COLS as f64) as usize;
            let cell = row.min(GRID_ROWS - 1) * GRID_COLS + col.min(GRID_COLS - 1);
            counts[cell] += 1;
            let px = crop.pixel(x, y);
            for c in 0..3 {
                v[cell * cell_len + c * GRID_BINS + bin_of(px[c], GRID_BINS)] += 1.0;
            }
        }
    }
    for (cell, &n) in counts.iter().enumerate() {
        if n > 0 {
            v[cell * cell_len..(cell + 1) * cell_len].iter_mut().for_each(|x| *x /= n as f64);
        }
    }
    Embedding::normalized(v)
}

/// Per-track cache of the last matched crop's descriptors plus a running
/// embedding.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AppearanceMemory {
    pub histogram: Option<ColorHistogram>,
    pub patch: Option<Patch>,
    pub embedding: Option<Embedding>,
}

impl AppearanceMemory {
    /// Replaces crop descriptors (when present) and folds the new embedding
    /// into the running average: `e = m e_old + (1 - m) e_new`, renormalized.
    pub fn update(
        &mut self,
        histogram: Option<ColorHistogram>,
        patch: Option<Patch>,
        embedding: Option<&Embedding>,
        momentum: f64,
    ) {
        if let Some(h) = histogram.filter(|h| !h.is_degenerate()) {
            self.histogram = Some(h);
        }
        if let Some(p) = patch {
            self.patch = Some(p);
        }
        if let Some(new) = embedding {
            self.embedding = match self.embedding.take() {
                Some(old) if old.dim() == new.dim() => {
                    let mixed = old
                        .as_slice()
                        .iter()
                        .zip(new.as_slice())
                        .map(|(a, b)| momentum * a + (1.0 - momentum) * b)
                        .collect();
                    Embedding::normalized(mixed).or_else(|| Some(new.clone()))
                }
                _ => Some(new.clone()),
            };
        }
    }
}

#[derive(Debug, Error)]
pub enum EmbeddingFileError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cannot read embeddings {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

pub type EmbeddingTable = HashMap<(u32, usize), Embedding>;

/// Parses `frame,det_index,v1,...,vD` rows; vectors are renormalized.
pub fn parse_embeddings(text: &str) -> Result<EmbeddingTable, EmbeddingFileError> {
    let mut out = HashMap::new();
    let mut dim: Option<usize> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let err = |message: String| EmbeddingFileError::Parse { line, message };
        let fields: Vec<&str> = raw.split(',').map(str::trim).collect();
        if fields.len() < 3 {
            return Err(err(format!("expected frame,det_index,v1,...; got {} fields", fields.len())));
        }
        let frame: u32 = fields[0].parse().map_err(|_| err(format!("bad frame `{}`", fields[0])))?;
        if frame == 0 {
            return Err(err("frames are 1-based".into()));
        }
        let det: usize = fields[1].parse().map_err(|_| err(format!("bad detection index `{}`", fields[1])))?;
        let v = fields[2..]
            .iter()
            .map(|f| f.parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| err("non-numeric embedding value".into()))?;
        match dim {
            Some(d) if d != v.len() => return Err(err(format!("dimension {} differs from {d}", v.len()))),
            None => dim = Some(v.len()),
            _ => {}
        }
        let e = Embedding::normalized(v).ok_or_else(|| err("zero embedding vector".into()))?;
        if out.insert((frame, det), e).is_some() {
            return Err(err(format!("duplicate entry for frame {frame}, detection {det}")));
        }
    }
    Ok(out)
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable, EmbeddingFileError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| EmbeddingFileError::Io { path: path.display().to_string(), source })?;
    parse_embeddings(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn solid(w: usize, h: usize, rgb: [u8; 3]) -> RawImage {
        RawImage::filled(w, h, rgb)
    }

    #[test]
    fn histogram_of_red() {
        let h = color_histogram(&solid(4, 4, [255, 0, 0]), 8);
        assert_eq!(h.channel(0)[7], 1.0);
        assert_eq!(h.channel(1)[0], 1.0);
        assert_eq!(h.channel(2)[0], 1.0);
    }

    #[test]
    fn bin_edges() {
        assert_eq!(bin_of(31, 8), 0);
        assert_eq!(bin_of(32, 8), 1);
        assert_eq!(bin_of(224, 8), 7);
        assert_eq!(bin_of(255, 8), 7);
    }

    #[test]
    fn histogram_mix() {
        let img = RawImage::new(2, 1, vec![10, 0, 0, 200, 0, 0]).unwrap();
        let h = color_histogram(&img, 8);
        assert_eq!(h.channel(0)[0], 0.5);
        assert_eq!(h.channel(0)[6], 0.5);
    }

    #[test]
    fn empty_crop_histogram_is_degenerate() {
        let h = color_histogram(&RawImage::new(0, 0, vec![]).unwrap(), 8);
        assert!(h.is_degenerate());
        assert_eq!(hist_similarity(&h, &h), 0.0);
    }

    #[test]
    fn hist_similarity_examples() {
        let a = color_histogram(&solid(3, 3, [100, 40, 220]), 8);
        assert_eq!(hist_similarity(&a, &a), 1.0);
        let one_hot = |i: usize| {
            let mut v = vec![0.0; 8];
            v[i] = 1.0;
            v
        };
        let b0 = ColorHistogram::from_channels(&one_hot(0), &one_hot(0), &one_hot(0));
        let b1 = ColorHistogram::from_channels(&one_hot(1), &one_hot(1), &one_hot(1));
        assert_eq!(hist_similarity(&b0, &b1), 0.0);
        let mut half = vec![0.0; 8];
        half[0] = 0.5;
        half[1] = 0.5;
        let c = ColorHistogram::from_channels(&half, &one_hot(0), &one_hot(0));
        let expected = 1.0 - (1.0 - 0.5f64.sqrt()).sqrt() / 3.0;
        assert!((hist_similarity(&b0, &c) - expected).abs() < 1e-12);
        assert!((expected - 0.8196).abs() < 1e-4);
    }

    #[test]
    fn mse_examples() {
        let p = (32, 32);
        let a = solid(10, 12, [30, 60, 90]);
        assert_eq!(scaled_mse_similarity(&a, &a, p), 1.0);
        assert_eq!(scaled_mse_similarity(&solid(5, 5, [0; 3]), &solid(9, 3, [255; 3]), p), 0.0);
        let s = scaled_mse_similarity(&solid(5, 5, [0; 3]), &solid(7, 7, [128; 3]), p);
        assert!((s - (1.0 - 16384.0 / 65025.0)).abs() < 1e-12);
        assert!((s - 0.748).abs() < 1e-3);
        assert_eq!(scaled_mse_similarity(&RawImage::new(0, 0, vec![]).unwrap(), &a, p), 0.0);
    }

    #[test]
    fn embedding_similarity_examples() {
        assert_eq!(embedding_similarity(&[0.6, 0.8], &[0.6, 0.8]), 1.0);
        assert_eq!(embedding_similarity(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        assert_eq!(embedding_similarity(&[1.0, 0.0], &[-1.0, 0.0]), 0.0);
        assert!((embedding_similarity(&[3.0, 4.0], &[0.6, 0.8]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn crops() {
        let mut frame = RawImage::filled(20, 10, [0, 0, 0]);
        frame.set_pixel(5, 3, [9, 9, 9]);
        let c = extract_crop(&frame, &BoundingBox::tlwh(4.2, 2.6, 3.0, 2.0)).unwrap();
        assert_eq!((c.width(), c.height()), (3, 2));
        assert_eq!(c.pixel(1, 0), [9, 9, 9]);
        let c = extract_crop(&frame, &BoundingBox::tlwh(15.0, 0.0, 10.0, 5.0)).unwrap();
        assert_eq!((c.width(), c.height()), (5, 5));
        assert!(extract_crop(&frame, &BoundingBox::tlwh(30.0, 0.0, 10.0, 5.0)).is_none());
        assert!(extract_crop(&frame, &BoundingBox::tlwh(3.0, 3.0, 0.2, 5.0)).is_none());
    }

    #[test]
    fn embedding_file() {
        let t = parse_embeddings("3,0,0.6,0.8\n3,1,2,0\n").unwrap();
        assert_eq!(t[&(3, 0)].as_slice(), &[0.6, 0.8]);
        assert_eq!(t[&(3, 1)].as_slice(), &[1.0, 0.0]);
        assert!(parse_embeddings("").unwrap().is_empty());
        match parse_embeddings("1,0,1,0\n2,0,1,0,0\n") {
            Err(EmbeddingFileError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(parse_embeddings("1,0,abc\n").is_err());
    }

    #[test]
    fn memory_embedding_stays_unit() {
        let mut m = AppearanceMemory::default();
        let a = Embedding::normalized(vec![1.0, 0.0, 0.0]).unwrap();
        let b = Embedding::normalized(vec![0.0, 1.0, 0.0]).unwrap();
        m.update(None, None, Some(&a), 0.9);
        for _ in 0..20 {
            m.update(None, None, Some(&b), 0.9);
            assert!((m.embedding.as_ref().unwrap().norm() - 1.0).abs() < 1e-12);
        }
        assert!(m.embedding.unwrap().as_slice()[1] > 0.8);
    }

    fn upscale2x(c: &RawImage) -> RawImage {
        let mut out = RawImage::filled(c.width() * 2, c.height() * 2, [0; 3]);
        for y in 0..out.height() {
            for x in 0..out.width() {
                out.set_pixel(x, y, c.pixel(x / 2, y / 2));
            }
        }
        out
    }

    fn arb_crop() -> impl Strategy<Value = RawImage> {
        (1usize..12, 1usize..12).prop_flat_map(|(w, h)| {
            proptest::collection::vec(any::<u8>(), w * h * 3).prop_map(move |d| RawImage::new(w, h, d).unwrap())
        })
    }

    /// Piecewise-constant crop: a few solid color blocks.
    fn arb_blocky() -> impl Strategy<Value = RawImage> {
        (1usize..4, 1usize..4, proptest::collection::vec(any::<[u8; 3]>(), 16)).prop_map(|(bw, bh, colors)| {
            let (w, h) = (bw * 4, bh * 8);
            let mut img = RawImage::filled(w, h, [0; 3]);
            for y in 0..h {
                for x in 0..w {
                    img.set_pixel(x, y, colors[(y / bh / 2) * 4 + x / bw % 4]);
                }
            }
            img
        })
    }

    proptest! {
        #[test]
        fn cues_are_symmetric_and_bounded(a in arb_crop(), b in arb_crop()) {
            let (ha, hb) = (color_histogram(&a, 8), color_histogram(&b, 8));
            let s1 = hist_similarity(&ha, &hb);
            prop_assert_eq!(s1, hist_similarity(&hb, &ha));
            prop_assert!((0.0..=1.0).contains(&s1));
            let m1 = scaled_mse_similarity(&a, &b, (32, 32));
            prop_assert_eq!(m1, scaled_mse_similarity(&b, &a, (32, 32)));
            prop_assert!((0.0..=1.0).contains(&m1));
            prop_assert_eq!(scaled_mse_similarity(&a, &a, (32, 32)), 1.0);
            prop_assert_eq!(scaled_mse_similarity(&a, &a, (7, 19)), 1.0);
        }

        #[test]
        fn fallback_embedding_survives_upscaling(c in arb_blocky()) {
            let e1 = handcrafted_embedding(&c).unwrap();
            let e2 = handcrafted_embedding(&upscale2x(&c)).unwrap();
            prop_assert_eq!(e1.dim(), 192);
            prop_assert!(embedding_similarity(e1.as_slice(), e2.as_slice()) >= 0.99);
        }
    }
}
