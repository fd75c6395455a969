//! IoU, greedy matching, 101-point AP and per-class mAP tables.

use crate::scene::{taxonomy, BBox, Detection, ObjectClass, NUM_CLASSES};

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn coco_thresholds() -> [f64; 10] {
    std::array::from_fn(|i| (50 + 5 * i) as f64 / 100.0)
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let ih = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchResult {
    /// Per prediction, in the order given.
    pub tp: Vec<bool>,
    /// Per ground truth box, in the order given.
    pub gt_matched: Vec<bool>,
}

/// Prediction indices by descending confidence; ties keep input order.
pub fn confidence_rank(confidences: &[f32]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..confidences.len()).collect();
    idx.sort_by(|&a, &b| confidences[b].total_cmp(&confidences[a]).then(a.cmp(&b)));
    idx
}

/// Greedy matching of one image and class. Predictions are visited by
/// descending confidence; each takes the unmatched ground truth with the
/// highest IoU at or above `iou_thresh` (lowest index on ties).
pub fn match_detections(preds: &[(BBox, f32)], gts: &[BBox], iou_thresh: f64) -> MatchResult {
    let confidences: Vec<f32> = preds.iter().map(|p| p.1).collect();
    let mut tp = vec![false; preds.len()];
    let mut gt_matched = vec![false; gts.len()];
    for pi in confidence_rank(&confidences) {
        let mut best: Option<(usize, f64)> = None;
        for (gi, g) in gts.iter().enumerate() {
            if gt_matched[gi] {
                continue;
            }
            let v = iou(&preds[pi].0, g);
            if v >= iou_thresh && best.map_or(true, |(_, b)| v > b) {
                best = Some((gi, v));
            }
        }
        if let Some((gi, _)) = best {
            gt_matched[gi] = true;
            tp[pi] = true;
        }
    }
    MatchResult { tp, gt_matched }
}

/// 101-point interpolated AP of TP/FP flags listed in confidence order.
///
/// `None` when there is nothing to score (no ground truth, no predictions);
/// `Some(0.0)` for predictions without ground truth.
pub fn average_precision(flags: &[bool], num_gt: usize) -> Option<f64> {
    if num_gt == 0 {
        return if flags.is_empty() { None } else { Some(0.0) };
    }
    // Cumulative (tp, seen) after each prediction.
    let mut points = Vec::with_capacity(flags.len());
    let mut tp = 0usize;
    for (i, &f) in flags.iter().enumerate() {
        tp += usize::from(f);
        points.push((tp, i + 1));
    }
    // Monotone envelope: best precision at this recall or any higher one.
    let mut envelope = vec![0.0f64; points.len()];
    let mut best = 0.0f64;
    for i in (0..points.len()).rev() {
        let (t, n) = points[i];
        best = best.max(t as f64 / n as f64);
        envelope[i] = best;
    }
    let mut sum = 0.0;
    let mut j = 0;
    for r in 0..=100usize {
        // First point whose recall tp/num_gt reaches r/100, in integers.
        while j < points.len() && points[j].0 * 100 < r * num_gt {
            j += 1;
        }
        if j == points.len() {
            break;
        }
        sum += envelope[j];
    }
    Some(sum / 101.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub image_id: String,
    pub ground_truth: Vec<(ObjectClass, BBox)>,
    pub predictions: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassRow {
    pub class: ObjectClass,
    pub num_gt: usize,
    pub num_pred: usize,
    /// Images with at least one ground-truth box of this class.
    pub images: usize,
    pub ap50: Option<f64>,
    pub ap75: Option<f64>,
    /// Mean AP over the ten COCO thresholds.
    pub ap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapSummary {
    pub rows: Vec<ClassRow>,
    pub num_images: usize,
    /// Images with any ground truth.
    pub images_with_gt: usize,
    pub map50: Option<f64>,
    pub map75: Option<f64>,
    pub map: Option<f64>,
}

/// AP of `class` at one IoU threshold over all records.
pub fn class_ap(records: &[EvalRecord], class: ObjectClass, iou_thresh: f64) -> Option<f64> {
    // (confidence, image, rank in image, tp)
    let mut scored: Vec<(f32, usize, usize, bool)> = Vec::new();
    let mut num_gt = 0;
    for (ri, r) in records.iter().enumerate() {
        let gts: Vec<BBox> = r
            .ground_truth
            .iter()
            .filter(|(c, _)| c.id == class.id)
            .map(|(_, b)| *b)
            .collect();
        let preds: Vec<(BBox, f32)> = r
            .predictions
            .iter()
            .filter(|d| d.class.id == class.id)
            .map(|d| (d.bbox, d.confidence))
            .collect();
        num_gt += gts.len();
        let m = match_detections(&preds, &gts, iou_thresh);
        let confidences: Vec<f32> = preds.iter().map(|p| p.1).collect();
        for (rank, pi) in confidence_rank(&confidences).into_iter().enumerate() {
            scored.push((preds[pi].1, ri, rank, m.tp[pi]));
        }
    }
    scored.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let flags: Vec<bool> = scored.iter().map(|s| s.3).collect();
    average_precision(&flags, num_gt)
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Per-class AP@50, AP@75 and AP@[50:95] plus their means over classes
/// that have any ground truth or predictions.
pub fn map_summary(records: &[EvalRecord]) -> MapSummary {
    let thresholds = coco_thresholds();
    let rows: Vec<ClassRow> = taxonomy()
        .iter()
        .map(|&class| {
            let per_t: Vec<Option<f64>> =
                thresholds.iter().map(|&t| class_ap(records, class, t)).collect();
            let num_gt = records
                .iter()
                .map(|r| r.ground_truth.iter().filter(|(c, _)| c.id == class.id).count())
                .sum();
            let images = records
                .iter()
                .filter(|r| r.ground_truth.iter().any(|(c, _)| c.id == class.id))
                .count();
            let num_pred = records
                .iter()
                .map(|r| r.predictions.iter().filter(|d| d.class.id == class.id).count())
                .sum();
            ClassRow {
                class,
                num_gt,
                num_pred,
                images,
                ap50: per_t[0],
                ap75: per_t[5],
                ap: mean(per_t.iter().copied()),
            }
        })
        .collect();
    debug_assert_eq!(rows.len(), NUM_CLASSES);
    MapSummary {
        num_images: records.len(),
        images_with_gt: records.iter().filter(|r| !r.ground_truth.is_empty()).count(),
        map50: mean(rows.iter().map(|r| r.ap50)),
        map75: mean(rows.iter().map(|r| r.ap75)),
        map: mean(rows.iter().map(|r| r.ap)),
        rows,
    }
}

impl MapSummary {
    /// Tab-separated table: one row per class, then `Total`.
    pub fn to_tsv(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
        let pct = |n: usize| {
            if self.num_images == 0 {
                "-".to_string()
            } else {
                format!("{:.2}", 100.0 * n as f64 / self.num_images as f64)
            }
        };
        let mut out = String::new();
        out.push_str("# AP is 101-point interpolated; classes with neither ground truth nor predictions show '-' and are skipped from the means\n");
        out.push_str("category\tclass\tinstances\tpct_images\tmap50\tmap75\tmap\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                r.class.category.name(),
                r.class.name,
                r.num_gt,
                pct(r.images),
                fmt(r.ap50),
                fmt(r.ap75),
                fmt(r.ap)
            ));
        }
        let total: usize = self.rows.iter().map(|r| r.num_gt).sum();
        out.push_str(&format!(
            "Total\t\t{}\t{}\t{}\t{}\t{}\n",
            total,
            pct(self.images_with_gt),
            fmt(self.map50),
            fmt(self.map75),
            fmt(self.map)
        ));
        out
    }
}
