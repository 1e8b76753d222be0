//! Scoring many image pairs at once.
//!
//! Directory mode pairs files by identical filename. Pairs are scored in
//! parallel, but results always come back in filename order and each one is
//! computed independently, so output does not depend on the thread count.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labelgrid::load;
use crate::metrics::{evaluate_with_thresholds, ScoreReport, SoftPqConfig};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImagePair {
    pub name: String,
    pub gt: PathBuf,
    pub pred: PathBuf,
}

fn file_names(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_file() {
            out.insert(entry.file_name().to_string_lossy().into_owned(), path);
        }
    }
    Ok(out)
}

/// Pairs every file in `gt_dir` with the same-named file in `pred_dir`.
///
/// Any name present on only one side is an error listing all of them.
pub fn pair_directories(gt_dir: &Path, pred_dir: &Path) -> Result<Vec<ImagePair>> {
    let gt = file_names(gt_dir)?;
    let mut pred = file_names(pred_dir)?;
    let mut pairs = Vec::new();
    let mut unmatched = Vec::new();
    for (name, gt_path) in gt {
        match pred.remove(&name) {
            Some(pred_path) => pairs.push(ImagePair {
                name,
                gt: gt_path,
                pred: pred_path,
            }),
            None => unmatched.push(format!("{name} (no prediction)")),
        }
    }
    unmatched.extend(pred.into_keys().map(|n| format!("{n} (no ground truth)")));
    if !unmatched.is_empty() {
        return Err(Error::UnmatchedFiles(unmatched));
    }
    Ok(pairs)
}

pub fn evaluate_pair(
    pair: &ImagePair,
    config: &SoftPqConfig,
    thresholds: &[f64],
) -> Result<ScoreReport> {
    let gt = load(&pair.gt)?;
    let pred = load(&pair.pred)?;
    evaluate_with_thresholds(&gt, &pred, config, thresholds)
}

/// One result per pair, in input order. A failing pair does not stop the others.
pub fn evaluate_pairs(
    pairs: &[ImagePair],
    config: &SoftPqConfig,
    thresholds: &[f64],
) -> Vec<Result<ScoreReport>> {
    pairs
        .par_iter()
        .map(|p| evaluate_pair(p, config, thresholds))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageReport {
    pub name: String,
    #[serde(flatten)]
    pub report: ScoreReport,
}

/// Unweighted per-image means.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanScores {
    pub softpq: f64,
    pub pq: f64,
    pub sq: f64,
    pub rq_f1: f64,
    pub map: f64,
    pub pixel_iou: f64,
    pub dice: f64,
}

impl MeanScores {
    pub fn of(reports: &[ScoreReport]) -> Self {
        if reports.is_empty() {
            return Self::default();
        }
        let n = reports.len() as f64;
        let mean = |f: fn(&ScoreReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        Self {
            softpq: mean(|r| r.softpq),
            pq: mean(|r| r.pq),
            sq: mean(|r| r.sq),
            rq_f1: mean(|r| r.rq_f1),
            map: mean(|r| r.map_score),
            pixel_iou: mean(|r| r.pixel_iou),
            dice: mean(|r| r.dice),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub config: SoftPqConfig,
    pub thresholds: Vec<f64>,
    pub images: Vec<ImageReport>,
    pub mean: MeanScores,
}

impl BatchReport {
    pub fn new(config: SoftPqConfig, thresholds: Vec<f64>, images: Vec<ImageReport>) -> Self {
        let reports: Vec<ScoreReport> = images.iter().map(|i| i.report.clone()).collect();
        Self {
            config,
            thresholds,
            mean: MeanScores::of(&reports),
            images,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}

/// Scores all pairs, failing on the first error in filename order.
pub fn evaluate_batch(
    pairs: &[ImagePair],
    config: &SoftPqConfig,
    thresholds: &[f64],
) -> Result<BatchReport> {
    config.validate()?;
    let images = pairs
        .iter()
        .zip(evaluate_pairs(pairs, config, thresholds))
        .map(|(p, r)| {
            r.map(|report| ImageReport {
                name: p.name.clone(),
                report,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BatchReport::new(*config, thresholds.to_vec(), images))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::two_fragment_fixture;
    use crate::labelgrid::save;

    #[test]
    fn pairing_reports_both_sides() {
        let gt = tempfile::tempdir().unwrap();
        let pred = tempfile::tempdir().unwrap();
        let (g, p) = two_fragment_fixture();
        save(&g, gt.path().join("a.pgm")).unwrap();
        save(&p, pred.path().join("a.pgm")).unwrap();
        save(&g, gt.path().join("b.pgm")).unwrap();
        save(&p, pred.path().join("c.pgm")).unwrap();
        match pair_directories(gt.path(), pred.path()) {
            Err(Error::UnmatchedFiles(names)) => {
                assert_eq!(
                    names,
                    vec!["b.pgm (no prediction)", "c.pgm (no ground truth)"]
                );
            }
            other => panic!("unexpected {other:?}"),
        }
        std::fs::remove_file(gt.path().join("b.pgm")).unwrap();
        std::fs::remove_file(pred.path().join("c.pgm")).unwrap();
        let pairs = pair_directories(gt.path(), pred.path()).unwrap();
        assert_eq!(pairs.len(), 1);
        let report = evaluate_batch(
            &pairs,
            &SoftPqConfig::default(),
            &crate::metrics::default_thresholds(),
        )
        .unwrap();
        assert!((report.mean.softpq - 0.875 / 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn failing_pair_does_not_stop_others() {
        let dir = tempfile::tempdir().unwrap();
        let (g, p) = two_fragment_fixture();
        save(&g, dir.path().join("g.pgm")).unwrap();
        save(&p, dir.path().join("p.pgm")).unwrap();
        let pairs = vec![
            ImagePair {
                name: "missing".into(),
                gt: dir.path().join("nope.pgm"),
                pred: dir.path().join("p.pgm"),
            },
            ImagePair {
                name: "ok".into(),
                gt: dir.path().join("g.pgm"),
                pred: dir.path().join("p.pgm"),
            },
        ];
        let results = evaluate_pairs(&pairs, &SoftPqConfig::default(), &[0.5]);
        assert!(matches!(results[0], Err(Error::Io { .. })));
        assert!(results[1].is_ok());
    }

    #[test]
    fn empty_batch_has_zero_means() {
        let r = evaluate_batch(&[], &SoftPqConfig::default(), &[0.5]).unwrap();
        assert!(r.images.is_empty());
        assert_eq!(r.mean, MeanScores::default());
    }
}
