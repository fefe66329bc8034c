//! CLEAR-MOT and identity metrics.

use crate::association::{hungarian, CostMatrix, FORBIDDEN};
use crate::geometry::{iou, BoundingBox};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("MOTA is undefined without ground-truth objects")]
    EmptyGroundTruth,
    #[error("{side} id {id} appears twice in frame {frame}")]
    DuplicateId { side: &'static str, frame: u32, id: i64 },
}

/// Boxes with identities, grouped by frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameTracks {
    frames: BTreeMap<u32, Vec<(i64, BoundingBox)>>,
}

impl FrameTracks {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, frame: u32, id: i64, bbox: BoundingBox) {
        self.frames.entry(frame).or_default().push((id, bbox));
    }

    pub fn frame(&self, frame: u32) -> &[(i64, BoundingBox)] {
        self.frames.get(&frame).map_or(&[], Vec::as_slice)
    }

    pub fn frames(&self) -> impl Iterator<Item = u32> + '_ {
        self.frames.keys().copied()
    }

    pub fn total(&self) -> usize {
        self.frames.values().map(Vec::len).sum()
    }

    pub fn ids(&self) -> BTreeSet<i64> {
        self.frames.values().flatten().map(|(id, _)| *id).collect()
    }

    fn check_unique(&self, side: &'static str) -> Result<(), MetricsError> {
        for (&frame, items) in &self.frames {
            let mut seen = BTreeSet::new();
            for (id, _) in items {
                if !seen.insert(*id) {
                    return Err(MetricsError::DuplicateId { side, frame, id: *id });
                }
            }
        }
        Ok(())
    }

    /// Keeps only frames in `keep`.
    pub fn restrict(&self, keep: &BTreeSet<u32>) -> Self {
        Self { frames: self.frames.iter().filter(|(f, _)| keep.contains(f)).map(|(f, v)| (*f, v.clone())).collect() }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClearResult {
    pub fp: usize,
    pub fn_: usize,
    pub ids: usize,
    pub tp: usize,
    pub gt_total: usize,
    pub hyp_total: usize,
    /// Per frame `(gt id, hyp id)` matches.
    pub correspondences: BTreeMap<u32, Vec<(i64, i64)>>,
}

/// Frame-by-frame CLEAR matching. Correspondences from the previous frame
/// are kept while their IoU stays at or above `iou_threshold`; remaining
/// pairs are matched by Hungarian assignment on IoU. A ground-truth object
/// matched to a different hypothesis than its last match counts one switch.
pub fn clear_match(gt: &FrameTracks, hyp: &FrameTracks, iou_threshold: f64) -> Result<ClearResult, MetricsError> {
    gt.check_unique("ground-truth")?;
    hyp.check_unique("hypothesis")?;
    let frames: BTreeSet<u32> = gt.frames().chain(hyp.frames()).collect();
    let mut res = ClearResult { gt_total: gt.total(), hyp_total: hyp.total(), ..Default::default() };
    let mut prev: HashMap<i64, i64> = HashMap::new();
    let mut last: HashMap<i64, i64> = HashMap::new();
    for f in frames {
        let g = gt.frame(f);
        let h = hyp.frame(f);
        let mut g_used = vec![false; g.len()];
        let mut h_used = vec![false; h.len()];
        let mut pairs = Vec::new();
        for (gi, (gid, gb)) in g.iter().enumerate() {
            if let Some(&hid) = prev.get(gid) {
                if let Some(hi) = h.iter().position(|(id, _)| *id == hid) {
                    if !h_used[hi] && iou(gb, &h[hi].1) >= iou_threshold {
                        g_used[gi] = true;
                        h_used[hi] = true;
                        pairs.push((gi, hi));
                    }
                }
            }
        }
        let gi_free: Vec<usize> = (0..g.len()).filter(|&i| !g_used[i]).collect();
        let hi_free: Vec<usize> = (0..h.len()).filter(|&i| !h_used[i]).collect();
        if !gi_free.is_empty() && !hi_free.is_empty() {
            let values = gi_free
                .iter()
                .flat_map(|&gi| {
                    hi_free.iter().map(move |&hi| {
                        let v = iou(&g[gi].1, &h[hi].1);
                        if v >= iou_threshold { 1.0 - v } else { FORBIDDEN }
                    })
                })
                .collect();
            let a = hungarian(&CostMatrix::new(gi_free.len(), hi_free.len(), values));
            pairs.extend(a.matches.iter().map(|&(r, c)| (gi_free[r], hi_free[c])));
        }
        let mut cur = HashMap::new();
        let mut corr = Vec::with_capacity(pairs.len());
        for &(gi, hi) in &pairs {
            let (gid, hid) = (g[gi].0, h[hi].0);
            if last.get(&gid).is_some_and(|&prev_h| prev_h != hid) {
                res.ids += 1;
            }
            last.insert(gid, hid);
            cur.insert(gid, hid);
            corr.push((gid, hid));
        }
        corr.sort_unstable();
        res.tp += pairs.len();
        res.fn_ += g.len() - pairs.len();
        res.fp += h.len() - pairs.len();
        res.correspondences.insert(f, corr);
        prev = cur;
    }
    Ok(res)
}

/// `(1 - (fp + fn + ids) / gt_total) * 100`.
pub fn mota(fp: usize, fn_: usize, ids: usize, gt_total: usize) -> Result<f64, MetricsError> {
    if gt_total == 0 {
        return Err(MetricsError::EmptyGroundTruth);
    }
    let correct = gt_total as i64 - (fp + fn_ + ids) as i64;
    Ok(correct as f64 * 100.0 / gt_total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityResult {
    pub idtp: usize,
    pub gt_total: usize,
    pub hyp_total: usize,
}

impl IdentityResult {
    pub fn idf1(&self) -> f64 {
        let denom = self.gt_total + self.hyp_total;
        if denom == 0 {
            1.0
        } else {
            2.0 * self.idtp as f64 / denom as f64
        }
    }
}

/// Frame counts where each (gt id, hyp id) pair overlaps at the threshold.
fn overlap_counts(gt: &FrameTracks, hyp: &FrameTracks, iou_threshold: f64) -> HashMap<(i64, i64), usize> {
    let mut m = HashMap::new();
    for f in gt.frames() {
        for (gid, gb) in gt.frame(f) {
            for (hid, hb) in hyp.frame(f) {
                if iou(gb, hb) >= iou_threshold {
                    *m.entry((*gid, *hid)).or_insert(0) += 1;
                }
            }
        }
    }
    m
}

/// Identity metrics under the best one-to-one map between ground-truth and
/// hypothesis trajectories.
pub fn identity_match(gt: &FrameTracks, hyp: &FrameTracks, iou_threshold: f64) -> IdentityResult {
    let counts = overlap_counts(gt, hyp, iou_threshold);
    let gids: Vec<i64> = gt.ids().into_iter().collect();
    let hids: Vec<i64> = hyp.ids().into_iter().collect();
    let mut idtp = 0;
    if !gids.is_empty() && !hids.is_empty() && !counts.is_empty() {
        let max = counts.values().copied().max().unwrap_or(0) as f64;
        let values = gids
            .iter()
            .flat_map(|g| hids.iter().map(move |h| (*g, *h)))
            .map(|k| max - counts.get(&k).copied().unwrap_or(0) as f64)
            .collect();
        let a = hungarian(&CostMatrix::new(gids.len(), hids.len(), values));
        idtp = a.matches.iter().map(|&(r, c)| counts.get(&(gids[r], hids[c])).copied().unwrap_or(0)).sum();
    }
    IdentityResult { idtp, gt_total: gt.total(), hyp_total: hyp.total() }
}

pub fn idf1(gt: &FrameTracks, hyp: &FrameTracks, iou_threshold: f64) -> f64 {
    identity_match(gt, hyp, iou_threshold).idf1()
}

/// Mostly tracked (coverage >= 80%) and mostly lost (coverage <= 20%)
/// counts, where coverage is the share of a trajectory's frames matched to
/// any hypothesis.
pub fn mt_ml(gt: &FrameTracks, clear: &ClearResult) -> (usize, usize) {
    let mut length: BTreeMap<i64, usize> = BTreeMap::new();
    for f in gt.frames() {
        for (id, _) in gt.frame(f) {
            *length.entry(*id).or_insert(0) += 1;
        }
    }
    let mut covered: HashMap<i64, usize> = HashMap::new();
    for corr in clear.correspondences.values() {
        for (g, _) in corr {
            *covered.entry(*g).or_insert(0) += 1;
        }
    }
    let (mut mt, mut ml) = (0, 0);
    for (id, len) in length {
        let c = covered.get(&id).copied().unwrap_or(0);
        if 5 * c >= 4 * len {
            mt += 1;
        }
        if 5 * c <= len {
            ml += 1;
        }
    }
    (mt, ml)
}

/// Counts and scores for one evaluation unit.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SequenceMetrics {
    pub mota: f64,
    pub idf1: f64,
    pub idf1_percent: f64,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub ids: usize,
    pub idtp: usize,
    pub gt_total: usize,
    pub hyp_total: usize,
    pub mt: usize,
    pub ml: usize,
    pub gt_trajectories: usize,
}

impl SequenceMetrics {
    fn finish(mut self) -> Result<Self, MetricsError> {
        self.mota = mota(self.fp, self.fn_, self.ids, self.gt_total)?;
        let id = IdentityResult { idtp: self.idtp, gt_total: self.gt_total, hyp_total: self.hyp_total };
        self.idf1 = id.idf1();
        self.idf1_percent = self.idf1 * 100.0;
        Ok(self)
    }

    fn add(&mut self, o: &SequenceMetrics) {
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.ids += o.ids;
        self.idtp += o.idtp;
        self.gt_total += o.gt_total;
        self.hyp_total += o.hyp_total;
        self.mt += o.mt;
        self.ml += o.ml;
        self.gt_trajectories += o.gt_trajectories;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MetricsReport {
    pub mota: f64,
    pub idf1: f64,
    pub idf1_percent: f64,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub ids: usize,
    pub idtp: usize,
    pub gt_total: usize,
    pub hyp_total: usize,
    pub mt: usize,
    pub ml: usize,
    pub gt_trajectories: usize,
    pub per_sequence: BTreeMap<String, SequenceMetrics>,
}

/// Labeled boxes for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub frame: u32,
    pub id: i64,
    pub bbox: BoundingBox,
    pub class_id: Option<i32>,
    /// Ground-truth region that neither counts as a miss nor as a false positive.
    pub ignore: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub iou_threshold: f64,
    /// Evaluate these classes separately and sum the counts. Used only when
    /// every hypothesis carries a class.
    pub classes: Option<Vec<i32>>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { iou_threshold: 0.5, classes: None }
    }
}

/// Share of `b`'s area covered by `region`.
fn coverage(b: &BoundingBox, region: &BoundingBox) -> f64 {
    let a = b.area();
    if a <= 0.0 {
        return 0.0;
    }
    let iw = (b.right().min(region.right()) - b.left.max(region.left)).max(0.0);
    let ih = (b.bottom().min(region.bottom()) - b.top.max(region.top)).max(0.0);
    iw * ih / a
}

fn evaluate_unit(gt: &[&EvalRecord], hyp: &[&EvalRecord], iou_threshold: f64) -> Result<SequenceMetrics, MetricsError> {
    let mut ignore: BTreeMap<u32, Vec<BoundingBox>> = BTreeMap::new();
    let mut g = FrameTracks::new();
    for r in gt {
        if r.ignore {
            ignore.entry(r.frame).or_default().push(r.bbox);
        } else {
            g.push(r.frame, r.id, r.bbox);
        }
    }
    let mut h = FrameTracks::new();
    for r in hyp {
        let inside_ignored = ignore
            .get(&r.frame)
            .is_some_and(|regions| regions.iter().any(|reg| coverage(&r.bbox, reg) >= 0.5));
        if !inside_ignored {
            h.push(r.frame, r.id, r.bbox);
        }
    }
    let clear = clear_match(&g, &h, iou_threshold)?;
    let idm = identity_match(&g, &h, iou_threshold);
    let (mt, ml) = mt_ml(&g, &clear);
    Ok(SequenceMetrics {
        fp: clear.fp,
        fn_: clear.fn_,
        ids: clear.ids,
        idtp: idm.idtp,
        gt_total: clear.gt_total,
        hyp_total: clear.hyp_total,
        mt,
        ml,
        gt_trajectories: g.ids().len(),
        ..Default::default()
    })
}

/// Evaluates one sequence. With per-class evaluation, counts are summed
/// over classes before the scores are formed.
pub fn evaluate_sequence(gt: &[EvalRecord], hyp: &[EvalRecord], cfg: &EvalConfig) -> Result<SequenceMetrics, MetricsError> {
    let per_class = cfg.classes.as_ref().filter(|_| !hyp.is_empty() && hyp.iter().all(|r| r.class_id.is_some()));
    let mut total = SequenceMetrics::default();
    match per_class {
        Some(classes) => {
            for c in classes {
                let g: Vec<&EvalRecord> = gt.iter().filter(|r| r.ignore || r.class_id == Some(*c)).collect();
                let h: Vec<&EvalRecord> = hyp.iter().filter(|r| r.class_id == Some(*c)).collect();
                total.add(&evaluate_unit(&g, &h, cfg.iou_threshold)?);
            }
        }
        None => {
            let g: Vec<&EvalRecord> = gt.iter().collect();
            let h: Vec<&EvalRecord> = hyp.iter().collect();
            total = evaluate_unit(&g, &h, cfg.iou_threshold)?;
        }
    }
    total.finish()
}

/// Aggregates per-sequence results by summing counts.
pub fn aggregate(per_sequence: BTreeMap<String, SequenceMetrics>) -> Result<MetricsReport, MetricsError> {
    let mut sum = SequenceMetrics::default();
    for m in per_sequence.values() {
        sum.add(m);
    }
    let sum = sum.finish()?;
    Ok(MetricsReport {
        mota: sum.mota,
        idf1: sum.idf1,
        idf1_percent: sum.idf1_percent,
        fp: sum.fp,
        fn_: sum.fn_,
        ids: sum.ids,
        idtp: sum.idtp,
        gt_total: sum.gt_total,
        hyp_total: sum.hyp_total,
        mt: sum.mt,
        ml: sum.ml,
        gt_trajectories: sum.gt_trajectories,
        per_sequence,
    })
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Fixed-width text table, one row per sequence plus the overall row.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<16} {:>8} {:>8} {:>7} {:>7} {:>6} {:>5} {:>5} {:>7}",
            "sequence", "MOTA", "IDF1", "FP", "FN", "IDs", "MT", "ML", "GT"
        );
        let mut row = |name: &str, m: &SequenceMetrics| {
            let _ = writeln!(
                s,
                "{:<16} {:>8.2} {:>8.2} {:>7} {:>7} {:>6} {:>5} {:>5} {:>7}",
                name, m.mota, m.idf1_percent, m.fp, m.fn_, m.ids, m.mt, m.ml, m.gt_total
            );
        };
        for (name, m) in &self.per_sequence {
            row(name, m);
        }
        if self.per_sequence.len() != 1 {
            let overall = SequenceMetrics {
                mota: self.mota,
                idf1: self.idf1,
                idf1_percent: self.idf1_percent,
                fp: self.fp,
                fn_: self.fn_,
                ids: self.ids,
                idtp: self.idtp,
                gt_total: self.gt_total,
                hyp_total: self.hyp_total,
                mt: self.mt,
                ml: self.ml,
                gt_trajectories: self.gt_trajectories,
            };
            row("OVERALL", &overall);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x: f64) -> BoundingBox {
        BoundingBox::tlwh(x, 0.0, 10.0, 10.0)
    }

    fn single_trajectory(frames: u32) -> FrameTracks {
        let mut t = FrameTracks::new();
        for f in 1..=frames {
            t.push(f, 1, b(f as f64));
        }
        t
    }

    #[test]
    fn mota_examples() {
        assert_eq!(mota(5, 10, 1, 100).unwrap(), 84.0);
        assert_eq!(mota(0, 0, 0, 17).unwrap(), 100.0);
        assert_eq!(mota(60, 60, 0, 100).unwrap(), -20.0);
        assert_eq!(mota(0, 0, 0, 0), Err(MetricsError::EmptyGroundTruth));
    }

    #[test]
    fn perfect_and_empty() {
        let gt = single_trajectory(10);
        let r = clear_match(&gt, &gt, 0.5).unwrap();
        assert_eq!((r.fp, r.fn_, r.ids), (0, 0, 0));
        assert_eq!(idf1(&gt, &gt, 0.5), 1.0);
        let empty = FrameTracks::new();
        let r = clear_match(&gt, &empty, 0.5).unwrap();
        assert_eq!((r.fp, r.fn_), (0, 10));
        assert_eq!(idf1(&gt, &empty, 0.5), 0.0);
    }

    #[test]
    fn split_trajectory() {
        let gt = single_trajectory(10);
        let mut hyp = FrameTracks::new();
        for f in 1..=10u32 {
            hyp.push(f, if f <= 5 { 7 } else { 8 }, b(f as f64));
        }
        let r = clear_match(&gt, &hyp, 0.5).unwrap();
        assert_eq!(r.ids, 1);
        let id = identity_match(&gt, &hyp, 0.5);
        assert_eq!(id.idtp, 5);
        assert_eq!(id.idf1(), 0.5);
    }

    #[test]
    fn switch_counted_after_gap() {
        let gt = single_trajectory(6);
        let mut hyp = FrameTracks::new();
        for f in [1u32, 2] {
            hyp.push(f, 1, b(f as f64));
        }
        for f in [5u32, 6] {
            hyp.push(f, 2, b(f as f64));
        }
        let r = clear_match(&gt, &hyp, 0.5).unwrap();
        assert_eq!((r.ids, r.fn_, r.fp), (1, 2, 0));
    }

    #[test]
    fn previous_correspondence_is_kept() {
        // two hypotheses overlap the object; the first one keeps it even
        // though the second overlaps better in frame 2
        let mut gt = FrameTracks::new();
        gt.push(1, 1, b(0.0));
        gt.push(2, 1, b(0.0));
        let mut hyp = FrameTracks::new();
        hyp.push(1, 10, b(0.0));
        hyp.push(2, 10, b(2.0));
        hyp.push(2, 11, b(0.0));
        let r = clear_match(&gt, &hyp, 0.5).unwrap();
        assert_eq!(r.ids, 0);
        assert_eq!(r.fp, 1);
        assert_eq!(r.correspondences[&2], vec![(1, 10)]);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut gt = FrameTracks::new();
        gt.push(1, 1, b(0.0));
        gt.push(1, 1, b(30.0));
        assert!(matches!(clear_match(&gt, &FrameTracks::new(), 0.5), Err(MetricsError::DuplicateId { .. })));
    }

    #[test]
    fn mt_ml_boundaries() {
        let gt = single_trajectory(10);
        let mut hyp = FrameTracks::new();
        for f in 1..=8u32 {
            hyp.push(f, 3, b(f as f64));
        }
        let r = clear_match(&gt, &hyp, 0.5).unwrap();
        assert_eq!(mt_ml(&gt, &r), (1, 0));
        let r = clear_match(&gt, &FrameTracks::new(), 0.5).unwrap();
        assert_eq!(mt_ml(&gt, &r), (0, 1));
        let mut two = FrameTracks::new();
        for f in 1..=2u32 {
            two.push(f, 3, b(f as f64));
        }
        let r = clear_match(&gt, &two, 0.5).unwrap();
        assert_eq!(mt_ml(&gt, &r), (0, 1));
    }

    #[test]
    fn ignored_regions() {
        let gt = vec![
            EvalRecord { frame: 1, id: 1, bbox: b(0.0), class_id: Some(1), ignore: false },
            EvalRecord { frame: 1, id: 2, bbox: BoundingBox::tlwh(100., 0., 50., 50.), class_id: None, ignore: true },
        ];
        let hyp = vec![
            EvalRecord { frame: 1, id: 5, bbox: b(0.0), class_id: None, ignore: false },
            EvalRecord { frame: 1, id: 6, bbox: BoundingBox::tlwh(110., 10., 10., 10.), class_id: None, ignore: false },
        ];
        let m = evaluate_sequence(&gt, &hyp, &EvalConfig::default()).unwrap();
        assert_eq!((m.fp, m.fn_, m.gt_total), (0, 0, 1));
        assert_eq!(m.mota, 100.0);
    }

    #[test]
    fn report_json_field_names() {
        let gt: Vec<EvalRecord> = (1..=3)
            .map(|f| EvalRecord { frame: f, id: 1, bbox: b(0.0), class_id: None, ignore: false })
            .collect();
        let m = evaluate_sequence(&gt, &gt, &EvalConfig::default()).unwrap();
        let report = aggregate(BTreeMap::from([("seq".to_string(), m)])).unwrap();
        let v: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        for key in ["mota", "idf1", "fp", "fn", "ids", "idtp", "gt_total", "mt", "ml", "per_sequence"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["mota"], 100.0);
        assert!(report.table().contains("100.00"));
    }
}
