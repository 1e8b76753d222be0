//! SoftPQ and the baseline instance metrics (PQ, F1, mAP).
//!
//! Every metric here starts from the same [`IouPairs`] so one pixel pass is
//! enough for a full [`ScoreReport`].
//!
//! Matching is greedy and one-to-one: candidate pairs at or above a threshold
//! are taken in order of descending IoU, ties broken by the smaller
//! ground-truth id and then the smaller prediction id. For thresholds of 0.5
//! and above this is the unique matching except for exact 0.5 ties, which can
//! only occur between two segments that split a third one in half.
//!
//! SoftPQ extends PQ with a lower threshold `l`. For each anchor segment
//! (ground truth in `over` mode, prediction in `under` mode) the matched IoU
//! is kept as is and all IoUs strictly above `l` that did not make it into
//! the matching are summed and weighted by `f(n)`, `n` being how many such
//! soft pairs the anchor has. The per-anchor values are summed into
//! `IoU_modified`; the final score is `IoU_modified * F1 / m` when there are
//! `m > 0` matches and `IoU_modified / |G|` otherwise. TP/FP/FN, and so F1,
//! come from the hard matching only.
//!
//! mAP is the mean over IoU thresholds of `TP / (TP + FP + FN)`, the
//! detection-style average precision common in cell segmentation, not the
//! score-ranked COCO curve.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labelgrid::{LabelGrid, LabelStats};
use crate::overlap::{
    binary_scores_from_counts, iou_pairs, joint_histogram, IouEntry, IouPairs, OverlapMatrix,
};

/// Weighting applied to the summed soft IoU of an anchor with `n` soft pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Penalty {
    /// `1 / sqrt(n + 1)`
    #[default]
    Sqrt,
    /// `1 / (n + 1)`
    Linear,
    /// `1 / ln(n + 1)`; exceeds 1 for `n = 1`, so a lone soft pair is up-weighted.
    Log,
}

/// Which side of a pair soft matches are grouped by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Anchor on ground truth: one object covered by several fragments.
    #[default]
    Over,
    /// Anchor on predictions: one prediction spanning several objects.
    Under,
}

impl Penalty {
    pub const ALL: [Penalty; 3] = [Penalty::Sqrt, Penalty::Linear, Penalty::Log];

    pub fn as_str(self) -> &'static str {
        match self {
            Penalty::Sqrt => "sqrt",
            Penalty::Linear => "linear",
            Penalty::Log => "log",
        }
    }
}

impl fmt::Display for Penalty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Penalty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sqrt" => Ok(Penalty::Sqrt),
            "linear" => Ok(Penalty::Linear),
            "log" => Ok(Penalty::Log),
            other => Err(Error::InvalidConfig(format!(
                "unknown penalty {other:?}, expected sqrt, linear or log"
            ))),
        }
    }
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Over => "over",
            Mode::Under => "under",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "over" => Ok(Mode::Over),
            "under" => Ok(Mode::Under),
            other => Err(Error::InvalidConfig(format!(
                "unknown mode {other:?}, expected over or under"
            ))),
        }
    }
}

/// Thresholds and aggregation choices for SoftPQ.
///
/// `lower` must lie in `[0, upper]` and `upper` in `[0.5, 1]`. With
/// `lower == upper == 0.5` SoftPQ is exactly PQ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftPqConfig {
    pub lower: f64,
    pub upper: f64,
    pub penalty: Penalty,
    pub mode: Mode,
}

impl Default for SoftPqConfig {
    fn default() -> Self {
        Self {
            lower: 0.05,
            upper: 0.5,
            penalty: Penalty::Sqrt,
            mode: Mode::Over,
        }
    }
}

impl SoftPqConfig {
    pub fn new(lower: f64, upper: f64, penalty: Penalty, mode: Mode) -> Result<Self> {
        let config = Self {
            lower,
            upper,
            penalty,
            mode,
        };
        config.validate()?;
        Ok(config)
    }

    /// Default penalty and mode with the given thresholds.
    pub fn with_thresholds(lower: f64, upper: f64) -> Result<Self> {
        Self::new(lower, upper, Penalty::Sqrt, Mode::Over)
    }

    /// `l = h = 0.5`, the configuration under which SoftPQ equals PQ.
    pub fn pq_equivalent() -> Self {
        Self {
            lower: 0.5,
            upper: 0.5,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let Self { lower, upper, .. } = *self;
        if !lower.is_finite() || !upper.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "thresholds must be finite, got lower={lower}, upper={upper}"
            )));
        }
        if !(0.5..=1.0).contains(&upper) {
            return Err(Error::InvalidConfig(format!(
                "upper threshold {upper} outside [0.5, 1]"
            )));
        }
        if !(0.0..=upper).contains(&lower) {
            return Err(Error::InvalidConfig(format!(
                "lower threshold {lower} outside [0, upper={upper}]"
            )));
        }
        Ok(())
    }
}

/// Weight of the summed soft IoU for an anchor with `n` soft pairs.
///
/// # Panics
///
/// If `n == 0`. The soft term is empty there and the log penalty is undefined.
pub fn penalty_weight(kind: Penalty, n: usize) -> f64 {
    assert!(n >= 1, "penalty weight is only defined for n >= 1");
    let n1 = (n + 1) as f64;
    match kind {
        Penalty::Sqrt => 1.0 / n1.sqrt(),
        Penalty::Linear => 1.0 / n1,
        Penalty::Log => 1.0 / n1.ln(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub gt: u32,
    pub pred: u32,
    pub iou: f64,
}

/// A soft pair seen from its anchor: the id on the other side and the IoU.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftEntry {
    pub other: u32,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// One-to-one matches at IoU >= upper, in the order they were taken.
    pub matched_pairs: Vec<MatchedPair>,
    /// Anchor id -> unmatched pairs with IoU above the lower threshold.
    pub soft_sets: BTreeMap<u32, Vec<SoftEntry>>,
    pub mode: Mode,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub gt_count: usize,
    pub pred_count: usize,
}

impl MatchResult {
    /// Number of soft pairs anchored on `id`.
    pub fn soft_count(&self, id: u32) -> usize {
        self.soft_sets.get(&id).map_or(0, Vec::len)
    }
}

/// Greedy one-to-one matching among pairs with IoU >= `threshold`.
pub fn greedy_match(entries: &[IouEntry], threshold: f64) -> Vec<MatchedPair> {
    let mut candidates: Vec<&IouEntry> = entries.iter().filter(|e| e.iou >= threshold).collect();
    candidates.sort_by(|a, b| {
        b.iou
            .total_cmp(&a.iou)
            .then(a.gt.cmp(&b.gt))
            .then(a.pred.cmp(&b.pred))
    });
    let mut used_gt = std::collections::HashSet::new();
    let mut used_pred = std::collections::HashSet::new();
    let mut matched = Vec::new();
    for e in candidates {
        if used_gt.contains(&e.gt) || used_pred.contains(&e.pred) {
            continue;
        }
        used_gt.insert(e.gt);
        used_pred.insert(e.pred);
        matched.push(MatchedPair {
            gt: e.gt,
            pred: e.pred,
            iou: e.iou,
        });
    }
    matched
}

/// Splits pairs into hard matches and per-anchor soft sets.
///
/// A pair is soft when it is not in the matching and its IoU is strictly
/// above `config.lower`. That covers the `lower < IoU < upper` band and also
/// pairs at or above `upper` that lost a tie in the greedy matching.
pub fn classify_matches(
    pairs: &IouPairs,
    gt_stats: &LabelStats,
    pred_stats: &LabelStats,
    config: &SoftPqConfig,
) -> MatchResult {
    let matched_pairs = greedy_match(&pairs.entries, config.upper);
    let matched: std::collections::HashSet<(u32, u32)> =
        matched_pairs.iter().map(|m| (m.gt, m.pred)).collect();

    let mut soft_sets: BTreeMap<u32, Vec<SoftEntry>> = BTreeMap::new();
    for e in pairs.iter() {
        if matched.contains(&(e.gt, e.pred)) || e.iou <= config.lower {
            continue;
        }
        let (anchor, other) = match config.mode {
            Mode::Over => (e.gt, e.pred),
            Mode::Under => (e.pred, e.gt),
        };
        soft_sets
            .entry(anchor)
            .or_default()
            .push(SoftEntry { other, iou: e.iou });
    }
    for set in soft_sets.values_mut() {
        set.sort_by_key(|s| s.other);
    }

    let tp = matched_pairs.len();
    MatchResult {
        matched_pairs,
        soft_sets,
        mode: config.mode,
        tp,
        fp: pred_stats.instance_count - tp,
        fn_: gt_stats.instance_count - tp,
        gt_count: gt_stats.instance_count,
        pred_count: pred_stats.instance_count,
    }
}

/// Per-anchor modified IoU and its sum.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModifiedIou {
    pub per_anchor: BTreeMap<u32, f64>,
    pub total: f64,
}

/// `IoU_match(s) + f(n_s) * sum(soft IoUs of s)` for every anchor `s` that has
/// a match or at least one soft pair.
pub fn modified_iou(matches: &MatchResult, config: &SoftPqConfig) -> ModifiedIou {
    let mut per_anchor: BTreeMap<u32, f64> = BTreeMap::new();
    for m in &matches.matched_pairs {
        let anchor = match matches.mode {
            Mode::Over => m.gt,
            Mode::Under => m.pred,
        };
        per_anchor.insert(anchor, m.iou);
    }
    for (&anchor, set) in &matches.soft_sets {
        if set.is_empty() {
            continue;
        }
        let soft_sum: f64 = set.iter().map(|s| s.iou).sum();
        *per_anchor.entry(anchor).or_insert(0.0) +=
            penalty_weight(config.penalty, set.len()) * soft_sum;
    }
    // f64's Sum starts from -0.0, which would print as "-0" for an empty set
    let total = per_anchor.values().fold(0.0, |a, b| a + b);
    ModifiedIou { per_anchor, total }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Score {
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// F1 of the hard matching; soft pairs do not count as true positives.
pub fn f1_from_matches(matches: &MatchResult) -> F1Score {
    F1Score {
        f1: f1_from_counts(matches.tp, matches.fp, matches.fn_),
        tp: matches.tp,
        fp: matches.fp,
        fn_: matches.fn_,
    }
}

pub fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp + fp + fn_ == 0 {
        return 1.0;
    }
    (2 * tp) as f64 / (2 * tp + fp + fn_) as f64
}

/// Everything computed on the way to a SoftPQ value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftPq {
    pub value: f64,
    pub matches: MatchResult,
    pub modified: ModifiedIou,
    pub f1: F1Score,
}

pub fn softpq_from_pairs(
    pairs: &IouPairs,
    gt_stats: &LabelStats,
    pred_stats: &LabelStats,
    config: &SoftPqConfig,
) -> SoftPq {
    let matches = classify_matches(pairs, gt_stats, pred_stats, config);
    let modified = modified_iou(&matches, config);
    let f1 = f1_from_matches(&matches);
    let m = matches.tp;
    let value = if m > 0 {
        modified.total * f1.f1 / m as f64
    } else if matches.gt_count > 0 {
        modified.total / matches.gt_count as f64
    } else if matches.pred_count == 0 {
        1.0
    } else {
        0.0
    };
    SoftPq {
        value,
        matches,
        modified,
        f1,
    }
}

pub fn softpq(gt: &LabelGrid, pred: &LabelGrid, config: &SoftPqConfig) -> Result<SoftPq> {
    config.validate()?;
    let overlap = joint_histogram(gt, pred)?;
    Ok(softpq_from_pairs(
        &iou_pairs(&overlap),
        &overlap.gt,
        &overlap.pred,
        config,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanopticQuality {
    pub pq: f64,
    pub sq: f64,
    pub rq: f64,
}

/// PQ = SQ * RQ with matches at IoU >= 0.5.
pub fn pq_from_pairs(pairs: &IouPairs, gt_count: usize, pred_count: usize) -> PanopticQuality {
    if gt_count == 0 && pred_count == 0 {
        return PanopticQuality {
            pq: 1.0,
            sq: 1.0,
            rq: 1.0,
        };
    }
    let matched = greedy_match(&pairs.entries, 0.5);
    let tp = matched.len();
    if tp == 0 {
        return PanopticQuality {
            pq: 0.0,
            sq: 0.0,
            rq: 0.0,
        };
    }
    let fp = pred_count - tp;
    let fn_ = gt_count - tp;
    let sq = matched.iter().map(|m| m.iou).sum::<f64>() / tp as f64;
    let rq = tp as f64 / (tp as f64 + 0.5 * fp as f64 + 0.5 * fn_ as f64);
    PanopticQuality {
        pq: sq * rq,
        sq,
        rq,
    }
}

pub fn panoptic_quality(gt: &LabelGrid, pred: &LabelGrid) -> Result<PanopticQuality> {
    let overlap = joint_histogram(gt, pred)?;
    Ok(pq_from_pairs(
        &iou_pairs(&overlap),
        overlap.gt.instance_count,
        overlap.pred.instance_count,
    ))
}

/// `0.50, 0.55, ..., 0.95`
pub fn default_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionScores {
    pub f1_at_half: f64,
    pub map: f64,
    /// `TP / (TP + FP + FN)` at each threshold.
    pub per_threshold: Vec<(f64, f64)>,
}

pub fn detection_from_pairs(
    pairs: &IouPairs,
    gt_count: usize,
    pred_count: usize,
    thresholds: &[f64],
) -> DetectionScores {
    let tp_at = |t: f64| greedy_match(&pairs.entries, t).len();
    let ap = |tp: usize| {
        let denom = gt_count + pred_count - tp;
        if denom == 0 {
            1.0
        } else {
            tp as f64 / denom as f64
        }
    };
    let per_threshold: Vec<(f64, f64)> = thresholds.iter().map(|&t| (t, ap(tp_at(t)))).collect();
    let map = if per_threshold.is_empty() {
        0.0
    } else {
        per_threshold.iter().map(|&(_, a)| a).sum::<f64>() / per_threshold.len() as f64
    };
    let tp = tp_at(0.5);
    DetectionScores {
        f1_at_half: f1_from_counts(tp, pred_count - tp, gt_count - tp),
        map,
        per_threshold,
    }
}

pub fn detection_scores(
    gt: &LabelGrid,
    pred: &LabelGrid,
    thresholds: &[f64],
) -> Result<DetectionScores> {
    let overlap = joint_histogram(gt, pred)?;
    Ok(detection_from_pairs(
        &iou_pairs(&overlap),
        overlap.gt.instance_count,
        overlap.pred.instance_count,
        thresholds,
    ))
}

/// All metrics for one image pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub softpq: f64,
    pub pq: f64,
    pub sq: f64,
    /// RQ of PQ, which is F1 of the matching at IoU 0.5.
    pub rq_f1: f64,
    #[serde(rename = "map")]
    pub map_score: f64,
    pub pixel_iou: f64,
    pub dice: f64,
    /// Hard-match counts at the configured upper threshold.
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub config: SoftPqConfig,
    /// Modified IoU per anchor (ground-truth ids in `over` mode, prediction ids in `under`).
    pub per_anchor_modified: BTreeMap<u32, f64>,
}

pub fn evaluate_overlap(
    overlap: &OverlapMatrix,
    config: &SoftPqConfig,
    thresholds: &[f64],
) -> ScoreReport {
    let pairs = iou_pairs(overlap);
    let (gt_count, pred_count) = (overlap.gt.instance_count, overlap.pred.instance_count);
    let soft = softpq_from_pairs(&pairs, &overlap.gt, &overlap.pred, config);
    let pq = pq_from_pairs(&pairs, gt_count, pred_count);
    let det = detection_from_pairs(&pairs, gt_count, pred_count, thresholds);
    let pixel = binary_scores_from_counts(
        overlap.pairs.values().sum(),
        overlap.gt.foreground(),
        overlap.pred.foreground(),
    );
    ScoreReport {
        softpq: soft.value,
        pq: pq.pq,
        sq: pq.sq,
        rq_f1: pq.rq,
        map_score: det.map,
        pixel_iou: pixel.iou,
        dice: pixel.dice,
        tp: soft.f1.tp,
        fp: soft.f1.fp,
        fn_: soft.f1.fn_,
        config: *config,
        per_anchor_modified: soft.modified.per_anchor,
    }
}

/// SoftPQ, PQ, mAP over the default thresholds, and pixel scores from one overlap pass.
pub fn evaluate_all(
    gt: &LabelGrid,
    pred: &LabelGrid,
    config: &SoftPqConfig,
) -> Result<ScoreReport> {
    evaluate_with_thresholds(gt, pred, config, &default_thresholds())
}

pub fn evaluate_with_thresholds(
    gt: &LabelGrid,
    pred: &LabelGrid,
    config: &SoftPqConfig,
    thresholds: &[f64],
) -> Result<ScoreReport> {
    config.validate()?;
    let overlap = joint_histogram(gt, pred)?;
    Ok(evaluate_overlap(&overlap, config, thresholds))
}
