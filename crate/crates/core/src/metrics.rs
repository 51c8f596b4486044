//! Detection and driving evaluation: greedy box matching, precision/recall,
//! confusion matrices with a Background class, and stop-compliance reports.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::attack::{apply_attack, AttackConfig};
use crate::bbox::iou;
use crate::closed_loop::EpisodeLog;
use crate::geom::Vec2;
use crate::perception::{decode, forward, Detection, LossWeights, ModelParams, PerceptionError, N_CLASSES};
use crate::render::Frame;
use crate::rng;
use crate::scene::{ObjectKind, TrackSpec};

/// Index of the synthetic Background class in confusion matrices.
pub const BACKGROUND: usize = N_CLASSES;

#[derive(Debug, Clone, PartialEq)]
pub enum MetricsError {
    EmptyDataset,
    Perception(PerceptionError),
}

impl core::fmt::Display for MetricsError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            MetricsError::EmptyDataset => write!(f, "empty dataset"),
            MetricsError::Perception(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for MetricsError {}

impl From<PerceptionError> for MetricsError {
    fn from(e: PerceptionError) -> Self {
        MetricsError::Perception(e)
    }
}

/// Outcome of matching predictions against ground truth for one frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchResult {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// Matched `(prediction index, ground-truth index)` pairs.
    pub pairs: Vec<(usize, usize)>,
}

/// Greedy matching in descending prediction confidence: each prediction
/// takes the highest-IoU unmatched ground truth of the same class with
/// IoU at or above the threshold; IoU ties go to the lower GT index.
pub fn match_detections(
    preds: &[Detection],
    gt_boxes: &[crate::bbox::BBox],
    gt_classes: &[ObjectKind],
    iou_threshold: f64,
) -> MatchResult {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| {
        preds[b]
            .confidence
            .partial_cmp(&preds[a].confidence)
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut gt_taken = vec![false; gt_boxes.len()];
    let mut result = MatchResult::default();
    for &pi in &order {
        let p = &preds[pi];
        let mut best: Option<(usize, f64)> = None;
        for (gi, (gb, &gc)) in gt_boxes.iter().zip(gt_classes).enumerate() {
            if gt_taken[gi] || gc != p.class {
                continue;
            }
            let overlap = iou(&p.bbox, gb);
            if overlap < iou_threshold {
                continue;
            }
            let better = match best {
                None => true,
                Some((_, b)) => overlap > b, // ties keep the lower index
            };
            if better {
                best = Some((gi, overlap));
            }
        }
        match best {
            Some((gi, _)) => {
                gt_taken[gi] = true;
                result.true_positives += 1;
                result.pairs.push((pi, gi));
            }
            None => result.false_positives += 1,
        }
    }
    result.false_negatives = gt_taken.iter().filter(|&&t| !t).count();
    result
}

/// Square counts over the four object classes plus Background. Rows are
/// ground truth, columns are predictions; background/background stays zero
/// (there is no universe of negatives).
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    pub counts: [[u64; N_CLASSES + 1]; N_CLASSES + 1],
}

impl Default for ConfusionMatrix {
    fn default() -> Self {
        ConfusionMatrix {
            counts: [[0; N_CLASSES + 1]; N_CLASSES + 1],
        }
    }
}

impl ConfusionMatrix {
    pub fn class_names() -> [&'static str; N_CLASSES + 1] {
        [
            "vehicle",
            "stop_sign",
            "traffic_light",
            "intersection",
            "background",
        ]
    }

    /// Class-agnostic greedy matching at the IoU threshold; matched pairs
    /// land in `(true class, predicted class)`, unmatched ground truth in
    /// the background column, unmatched predictions in the background row.
    pub fn update(
        &mut self,
        preds: &[Detection],
        gt_boxes: &[crate::bbox::BBox],
        gt_classes: &[ObjectKind],
        iou_threshold: f64,
    ) {
        let mut order: Vec<usize> = (0..preds.len()).collect();
        order.sort_by(|&a, &b| {
            preds[b]
                .confidence
                .partial_cmp(&preds[a].confidence)
                .unwrap()
                .then(a.cmp(&b))
        });
        let mut gt_taken = vec![false; gt_boxes.len()];
        for &pi in &order {
            let p = &preds[pi];
            let mut best: Option<(usize, f64)> = None;
            for (gi, gb) in gt_boxes.iter().enumerate() {
                if gt_taken[gi] {
                    continue;
                }
                let overlap = iou(&p.bbox, gb);
                if overlap < iou_threshold {
                    continue;
                }
                if best.map_or(true, |(_, b)| overlap > b) {
                    best = Some((gi, overlap));
                }
            }
            match best {
                Some((gi, _)) => {
                    gt_taken[gi] = true;
                    self.counts[gt_classes[gi].class_id()][p.class.class_id()] += 1;
                }
                None => self.counts[BACKGROUND][p.class.class_id()] += 1,
            }
        }
        for (gi, taken) in gt_taken.iter().enumerate() {
            if !taken {
                self.counts[gt_classes[gi].class_id()][BACKGROUND] += 1;
            }
        }
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for r in 0..=N_CLASSES {
            for c in 0..=N_CLASSES {
                self.counts[r][c] += other.counts[r][c];
            }
        }
    }

    pub fn diagonal_mass(&self) -> u64 {
        (0..N_CLASSES).map(|k| self.counts[k][k]).sum()
    }

    /// Ground-truth objects predicted as nothing (the background column).
    pub fn background_column_mass(&self) -> u64 {
        (0..N_CLASSES).map(|k| self.counts[k][BACKGROUND]).sum()
    }

    pub fn row_sum(&self, row: usize) -> u64 {
        self.counts[row].iter().sum()
    }
}

/// `0/0` counts as perfect by convention, so empty-prediction runs are
/// well defined.
pub fn safe_ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// Aggregated detection evaluation over a dataset under one attack setting.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalSummary {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub confusion: ConfusionMatrix,
    pub loss_sum: f64,
    pub frames: usize,
}

impl EvalSummary {
    pub fn precision(&self) -> f64 {
        safe_ratio(self.true_positives, self.true_positives + self.false_positives)
    }

    pub fn recall(&self) -> f64 {
        safe_ratio(self.true_positives, self.true_positives + self.false_negatives)
    }

    pub fn mean_loss(&self) -> f64 {
        if self.frames == 0 {
            0.0
        } else {
            self.loss_sum / self.frames as f64
        }
    }

    pub fn merge(&mut self, other: &EvalSummary) {
        self.true_positives += other.true_positives;
        self.false_positives += other.false_positives;
        self.false_negatives += other.false_negatives;
        self.confusion.merge(&other.confusion);
        self.loss_sum += other.loss_sum;
        self.frames += other.frames;
    }
}

/// Detection operating point used for evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalPoint {
    pub conf_threshold: f64,
    pub nms_iou: f64,
    pub iou_threshold: f64,
}

impl Default for EvalPoint {
    fn default() -> Self {
        EvalPoint {
            conf_threshold: 0.25,
            nms_iou: 0.5,
            iou_threshold: 0.5,
        }
    }
}

/// Evaluates one frame: attack (per config), forward, decode, match, and
/// confusion update. The per-frame attack seed derives from the frame index.
pub fn evaluate_frame(
    theta: &ModelParams,
    frame: &Frame,
    frame_index: u64,
    attack: &AttackConfig,
    weights: &LossWeights,
    point: &EvalPoint,
) -> Result<EvalSummary, MetricsError> {
    let seed = rng::derive_seed(attack.seed, rng::stream::ATTACK, frame_index);
    let image = apply_attack(attack, theta, &frame.image, &frame.labels, weights, seed)?;
    let raw = forward(theta, &image)?;
    let dets = decode(&raw, point.conf_threshold, point.nms_iou);
    let m = match_detections(
        &dets,
        &frame.labels.boxes,
        &frame.labels.classes,
        point.iou_threshold,
    );
    let mut summary = EvalSummary {
        true_positives: m.true_positives,
        false_positives: m.false_positives,
        false_negatives: m.false_negatives,
        loss_sum: crate::perception::loss(&raw, &frame.labels, weights).total,
        frames: 1,
        ..EvalSummary::default()
    };
    summary.confusion.update(
        &dets,
        &frame.labels.boxes,
        &frame.labels.classes,
        point.iou_threshold,
    );
    Ok(summary)
}

/// Full-dataset evaluation (single-threaded; callers may evaluate frames
/// independently and merge summaries).
pub fn evaluate(
    theta: &ModelParams,
    dataset: &[Frame],
    attack: &AttackConfig,
    weights: &LossWeights,
    point: &EvalPoint,
) -> Result<EvalSummary, MetricsError> {
    if dataset.is_empty() {
        return Err(MetricsError::EmptyDataset);
    }
    let mut total = EvalSummary::default();
    for (i, frame) in dataset.iter().enumerate() {
        total.merge(&evaluate_frame(theta, frame, i as u64, attack, weights, point)?);
    }
    Ok(total)
}

/// Precision and recall of the model over a dataset under an attack.
pub fn precision_recall(
    theta: &ModelParams,
    dataset: &[Frame],
    attack: &AttackConfig,
    weights: &LossWeights,
    point: &EvalPoint,
) -> Result<(f64, f64), MetricsError> {
    let s = evaluate(theta, dataset, attack, weights, point)?;
    Ok((s.precision(), s.recall()))
}

/// Confusion matrix of the model over a dataset under an attack.
pub fn confusion(
    theta: &ModelParams,
    dataset: &[Frame],
    attack: &AttackConfig,
    weights: &LossWeights,
    point: &EvalPoint,
) -> Result<ConfusionMatrix, MetricsError> {
    Ok(evaluate(theta, dataset, attack, weights, point)?.confusion)
}

// ---------------------------------------------------------------------------
// driving compliance
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplianceParams {
    /// Arc-length half-width of the stop zone around each line, meters.
    pub zone_radius_m: f64,
    /// Speed at or below this counts as stopped, m/s.
    pub speed_threshold: f64,
    /// Minimum continuous stopped time inside the zone, seconds.
    pub min_dwell_s: f64,
}

impl Default for ComplianceParams {
    fn default() -> Self {
        ComplianceParams {
            zone_radius_m: 0.15,
            speed_threshold: 0.02,
            min_dwell_s: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopResult {
    pub passed: bool,
    /// Minimum commanded speed observed inside the zone; `None` when the
    /// vehicle never entered it.
    pub min_speed_in_zone: Option<f64>,
    /// Longest continuous stopped interval inside the zone, seconds.
    pub dwell_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplianceReport {
    pub stops: Vec<StopResult>,
    pub lap_completed: bool,
    pub lateral_rms_m: f64,
    pub max_abs_deviation_m: f64,
    /// Net forward progress along the centerline, meters.
    pub progress_m: f64,
}

impl ComplianceReport {
    pub fn failed_stops(&self) -> usize {
        self.stops.iter().filter(|s| !s.passed).count()
    }

    pub fn summary_line(&self) -> String {
        use core::fmt::Write;
        let mut s = String::new();
        for (i, stop) in self.stops.iter().enumerate() {
            let _ = write!(s, "stop{}={} ", i + 1, if stop.passed { "pass" } else { "FAIL" });
        }
        let _ = write!(
            s,
            "lap={} lat_rms={:.4} max_dev={:.4}",
            self.lap_completed, self.lateral_rms_m, self.max_abs_deviation_m
        );
        s
    }
}

/// Scores an episode log against the track: per-stop dwell compliance,
/// lateral RMS from the ground-truth projection, and lap completion from
/// net arc progress.
pub fn compliance(log: &EpisodeLog, track: &TrackSpec, params: &ComplianceParams) -> ComplianceReport {
    let lap = track.lap_length();
    let n_stops = track.stop_lines.len();
    let mut stops = vec![
        StopResult {
            passed: false,
            min_speed_in_zone: None,
            dwell_s: 0.0,
        };
        n_stops
    ];
    let mut runs = vec![0.0f64; n_stops]; // current contiguous stopped time per zone

    let mut lat_sq_sum = 0.0;
    let mut max_abs = 0.0f64;
    let mut progress = 0.0;
    let mut prev_s: Option<f64> = None;
    let mut prev_t: Option<u64> = None;

    for tick in &log.ticks {
        let proj = track.project(Vec2::new(tick.state.x, tick.state.y));
        lat_sq_sum += proj.lateral * proj.lateral;
        max_abs = max_abs.max(proj.lateral.abs());

        if let Some(ps) = prev_s {
            // shortest signed wrap-around delta
            let mut ds = proj.s - ps;
            if ds > lap / 2.0 {
                ds -= lap;
            } else if ds < -lap / 2.0 {
                ds += lap;
            }
            progress += ds;
        }
        let dt = match prev_t {
            Some(pt) => (tick.t_us.saturating_sub(pt)) as f64 / 1e6,
            None => 0.0,
        };
        prev_s = Some(proj.s);
        prev_t = Some(tick.t_us);

        let speed = tick.cmd.v.abs();
        for (i, sl) in track.stop_lines.iter().enumerate() {
            let fwd = track.forward_distance(proj.s, sl.s);
            let dist = fwd.min(lap - fwd);
            let in_zone = dist <= params.zone_radius_m;
            if in_zone {
                let min = stops[i].min_speed_in_zone.get_or_insert(f64::INFINITY);
                *min = min.min(speed);
                if speed <= params.speed_threshold {
                    runs[i] += dt;
                    stops[i].dwell_s = stops[i].dwell_s.max(runs[i]);
                } else {
                    runs[i] = 0.0;
                }
            } else {
                runs[i] = 0.0;
            }
        }
    }

    for stop in stops.iter_mut() {
        stop.passed = stop.dwell_s >= params.min_dwell_s;
    }
    let n = log.ticks.len().max(1) as f64;
    ComplianceReport {
        stops,
        lap_completed: progress >= lap,
        lateral_rms_m: crate::math::sqrt(lat_sq_sum / n),
        max_abs_deviation_m: max_abs,
        progress_m: progress,
    }
}
