//! Sparse ground-truth × prediction overlap counts.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::labelgrid::{LabelGrid, LabelStats};

/// Intersection pixel counts between co-occurring nonzero label pairs,
/// along with the area of every label on each side.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverlapMatrix {
    /// `(gt, pred) -> |gt ∩ pred|`, only pairs that share at least one pixel.
    pub pairs: BTreeMap<(u32, u32), u64>,
    pub gt: LabelStats,
    pub pred: LabelStats,
}

impl OverlapMatrix {
    pub fn intersection(&self, gt: u32, pred: u32) -> u64 {
        self.pairs.get(&(gt, pred)).copied().unwrap_or(0)
    }

    /// IoU of a stored pair from its exact integer counts.
    pub fn iou(&self, gt: u32, pred: u32) -> f64 {
        let inter = self.intersection(gt, pred);
        if inter == 0 {
            return 0.0;
        }
        let union = self.gt.area(gt) + self.pred.area(pred) - inter;
        inter as f64 / union as f64
    }
}

/// One stored IoU value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IouEntry {
    pub gt: u32,
    pub pred: u32,
    pub iou: f64,
}

/// Nonzero IoU values, sorted by `(gt, pred)`. Missing pairs are implicitly 0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IouPairs {
    pub entries: Vec<IouEntry>,
}

impl IouPairs {
    pub fn get(&self, gt: u32, pred: u32) -> f64 {
        self.entries
            .binary_search_by(|e| (e.gt, e.pred).cmp(&(gt, pred)))
            .map(|i| self.entries[i].iou)
            .unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &IouEntry> {
        self.entries.iter()
    }
}

/// Single pass over the pixels accumulating sparse pair counts.
pub fn joint_histogram(gt: &LabelGrid, pred: &LabelGrid) -> Result<OverlapMatrix> {
    gt.check_same_shape(pred)?;
    let mut pairs: HashMap<(u32, u32), u64> = HashMap::new();
    let mut gt_areas: HashMap<u32, u64> = HashMap::new();
    let mut pred_areas: HashMap<u32, u64> = HashMap::new();
    for (&g, &p) in gt.labels().iter().zip(pred.labels()) {
        if g != 0 {
            *gt_areas.entry(g).or_insert(0) += 1;
        }
        if p != 0 {
            *pred_areas.entry(p).or_insert(0) += 1;
        }
        if g != 0 && p != 0 {
            *pairs.entry((g, p)).or_insert(0) += 1;
        }
    }
    Ok(OverlapMatrix {
        pairs: pairs.into_iter().collect(),
        gt: LabelStats::from_areas(gt_areas.into_iter().collect()),
        pred: LabelStats::from_areas(pred_areas.into_iter().collect()),
    })
}

pub fn iou_pairs(m: &OverlapMatrix) -> IouPairs {
    let entries = m
        .pairs
        .keys()
        .map(|&(gt, pred)| IouEntry {
            gt,
            pred,
            iou: m.iou(gt, pred),
        })
        .collect();
    IouPairs { entries }
}

/// Foreground/background scores ignoring instance identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelScores {
    pub iou: f64,
    pub dice: f64,
}

/// Pixel IoU and Dice of the binarized masks (any nonzero label is foreground).
///
/// Two empty foregrounds agree perfectly and score 1.0.
pub fn pixel_binary_scores(gt: &LabelGrid, pred: &LabelGrid) -> Result<PixelScores> {
    gt.check_same_shape(pred)?;
    let (mut inter, mut fg_gt, mut fg_pred) = (0u64, 0u64, 0u64);
    for (&g, &p) in gt.labels().iter().zip(pred.labels()) {
        fg_gt += u64::from(g != 0);
        fg_pred += u64::from(p != 0);
        inter += u64::from(g != 0 && p != 0);
    }
    Ok(binary_scores_from_counts(inter, fg_gt, fg_pred))
}

pub(crate) fn binary_scores_from_counts(inter: u64, fg_gt: u64, fg_pred: u64) -> PixelScores {
    if fg_gt == 0 && fg_pred == 0 {
        return PixelScores {
            iou: 1.0,
            dice: 1.0,
        };
    }
    let union = fg_gt + fg_pred - inter;
    PixelScores {
        iou: inter as f64 / union as f64,
        dice: (2 * inter) as f64 / (fg_gt + fg_pred) as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::two_fragment_fixture;

    #[test]
    fn identity_pairs_only_on_diagonal() {
        let g = LabelGrid::from_rows(&[[1, 1, 0], [2, 2, 2]]).unwrap();
        let m = joint_histogram(&g, &g).unwrap();
        assert_eq!(m.pairs, BTreeMap::from([((1, 1), 2), ((2, 2), 3)]));
        let ious = iou_pairs(&m);
        assert!(ious.iter().all(|e| e.iou == 1.0));
    }

    #[test]
    fn empty_prediction_keeps_gt_areas() {
        let g = LabelGrid::from_rows(&[[1, 1], [0, 2]]).unwrap();
        let p = LabelGrid::zeros(2, 2).unwrap();
        let m = joint_histogram(&g, &p).unwrap();
        assert!(m.pairs.is_empty());
        assert_eq!(m.gt.areas, BTreeMap::from([(1, 2), (2, 1)]));
        assert_eq!(m.pred.instance_count, 0);
    }

    #[test]
    fn fragment_inside_square() {
        let (gt, pred) = two_fragment_fixture();
        let ious = iou_pairs(&joint_histogram(&gt, &pred).unwrap());
        assert_eq!(ious.len(), 2);
        assert_eq!(ious.get(1, 1), 0.4375);
        assert_eq!(ious.get(1, 2), 0.4375);
        assert_eq!(ious.get(2, 1), 0.0);
    }

    #[test]
    fn disjoint_labels_have_no_entry() {
        let g = LabelGrid::from_rows(&[[1, 0]]).unwrap();
        let p = LabelGrid::from_rows(&[[0, 1]]).unwrap();
        assert!(iou_pairs(&joint_histogram(&g, &p).unwrap()).is_empty());
    }

    #[test]
    fn pixel_scores_fixture() {
        let (gt, pred) = two_fragment_fixture();
        let s = pixel_binary_scores(&gt, &pred).unwrap();
        assert_eq!(s.iou, 14.0 / 16.0);
        assert_eq!(s.dice, 28.0 / 30.0);
        let same = pixel_binary_scores(&gt, &gt).unwrap();
        assert_eq!((same.iou, same.dice), (1.0, 1.0));
    }

    #[test]
    fn pixel_scores_empty_conventions() {
        let z = LabelGrid::zeros(3, 3).unwrap();
        let s = pixel_binary_scores(&z, &z).unwrap();
        assert_eq!((s.iou, s.dice), (1.0, 1.0));
        let one = LabelGrid::from_rows(&[[0, 0, 0], [0, 5, 0], [0, 0, 0]]).unwrap();
        let s = pixel_binary_scores(&one, &z).unwrap();
        assert_eq!((s.iou, s.dice), (0.0, 0.0));
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let a = LabelGrid::zeros(2, 3).unwrap();
        let b = LabelGrid::zeros(3, 2).unwrap();
        let err = joint_histogram(&a, &b).unwrap_err().to_string();
        assert!(err.contains("2x3") && err.contains("3x2"), "{err}");
        assert!(pixel_binary_scores(&a, &b).is_err());
    }
}
