//! Python bindings: score label arrays in memory or label files on disk.

use std::path::PathBuf;

use numpy::PyReadonlyArray2;
use pyo3::exceptions::{PyTypeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use softpq::batch::{evaluate_pairs, ImagePair};
use softpq::metrics::{default_thresholds, evaluate_with_thresholds, Mode, Penalty};
use softpq::{LabelGrid, ScoreReport, SoftPqConfig};

/// Score names returned by both entry points, in output order.
pub const SCORE_KEYS: [&str; 7] = ["softpq", "pq", "sq", "rq_f1", "map", "pixel_iou", "dice"];

pub fn score_values(r: &ScoreReport) -> [f64; 7] {
    [
        r.softpq,
        r.pq,
        r.sq,
        r.rq_f1,
        r.map_score,
        r.pixel_iou,
        r.dice,
    ]
}

pub fn build_config(
    lower: f64,
    upper: f64,
    penalty: &str,
    mode: &str,
) -> Result<SoftPqConfig, String> {
    let penalty: Penalty = penalty.parse().map_err(|e: softpq::Error| e.to_string())?;
    let mode: Mode = mode.parse().map_err(|e: softpq::Error| e.to_string())?;
    SoftPqConfig::new(lower, upper, penalty, mode).map_err(|e| e.to_string())
}

/// Builds a grid from row-major values of any integer type, rejecting
/// negatives and ids above `u32::MAX`.
pub fn grid_from_values<I>(height: usize, width: usize, values: I) -> Result<LabelGrid, String>
where
    I: IntoIterator<Item = i128>,
{
    let labels = values
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            u32::try_from(v).map_err(|_| {
                format!(
                    "label {v} at ({}, {}) is not a valid instance id",
                    i / width.max(1),
                    i % width.max(1)
                )
            })
        })
        .collect::<Result<Vec<u32>, String>>()?;
    LabelGrid::new(height, width, labels).map_err(|e| e.to_string())
}

fn rows_to_grid(rows: Vec<Vec<i128>>) -> Result<LabelGrid, String> {
    let width = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != width) {
        return Err("rows have different lengths".into());
    }
    let height = rows.len();
    grid_from_values(height, width, rows.into_iter().flatten())
}

macro_rules! try_array {
    ($obj:expr, $($t:ty),+) => {
        $(
            if let Ok(a) = $obj.extract::<PyReadonlyArray2<$t>>() {
                let view = a.as_array();
                let (h, w) = view.dim();
                return grid_from_values(h, w, view.iter().map(|&v| v as i128))
                    .map_err(PyValueError::new_err);
            }
        )+
    };
}

/// Accepts a 2D numpy array of any integer dtype, or a list of equal-length
/// integer rows. Values are copied into an owned grid.
fn to_grid(obj: &Bound<'_, PyAny>) -> PyResult<LabelGrid> {
    try_array!(obj, u32, u8, u16, u64, i8, i16, i32, i64);
    if let Ok(rows) = obj.extract::<Vec<Vec<i128>>>() {
        return rows_to_grid(rows).map_err(PyValueError::new_err);
    }
    Err(PyTypeError::new_err(
        "expected a 2D integer numpy array or a list of integer rows",
    ))
}

fn thresholds_or_default(thresholds: Option<Vec<f64>>) -> Vec<f64> {
    thresholds.unwrap_or_else(default_thresholds)
}

fn scores_dict<'py>(py: Python<'py>, r: &ScoreReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for (k, v) in SCORE_KEYS.iter().zip(score_values(r)) {
        d.set_item(k, v)?;
    }
    Ok(d)
}

/// Scores a prediction array against a ground-truth array.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (gt, pred, lower=0.05, upper=0.5, penalty="sqrt", mode="over", thresholds=None))]
fn py_evaluate<'py>(
    py: Python<'py>,
    gt: &Bound<'py, PyAny>,
    pred: &Bound<'py, PyAny>,
    lower: f64,
    upper: f64,
    penalty: &str,
    mode: &str,
    thresholds: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let config = build_config(lower, upper, penalty, mode).map_err(PyValueError::new_err)?;
    let (gt, pred) = (to_grid(gt)?, to_grid(pred)?);
    let thresholds = thresholds_or_default(thresholds);
    let report = py
        .detach(|| evaluate_with_thresholds(&gt, &pred, &config, &thresholds))
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    scores_dict(py, &report)
}

/// Scores `(gt_path, pred_path)` file pairs. A pair that fails yields
/// `{"gt", "pred", "error"}` instead of scores; the rest still run.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (pairs, lower=0.05, upper=0.5, penalty="sqrt", mode="over", thresholds=None))]
fn py_batch<'py>(
    py: Python<'py>,
    pairs: Vec<(PathBuf, PathBuf)>,
    lower: f64,
    upper: f64,
    penalty: &str,
    mode: &str,
    thresholds: Option<Vec<f64>>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let config = build_config(lower, upper, penalty, mode).map_err(PyValueError::new_err)?;
    let thresholds = thresholds_or_default(thresholds);
    let pairs: Vec<ImagePair> = pairs
        .into_iter()
        .map(|(gt, pred)| ImagePair {
            name: pred
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            gt,
            pred,
        })
        .collect();
    let results = py.detach(|| evaluate_pairs(&pairs, &config, &thresholds));
    pairs
        .iter()
        .zip(results)
        .map(|(pair, result)| {
            let d = match &result {
                Ok(report) => scores_dict(py, report)?,
                Err(e) => {
                    let d = PyDict::new(py);
                    d.set_item("error", e.to_string())?;
                    d
                }
            };
            d.set_item("name", &pair.name)?;
            d.set_item("gt", &pair.gt)?;
            d.set_item("pred", &pair.pred)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn softpq_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(py_evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(py_batch, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use softpq::evaluate_all;
    use softpq::fixtures::two_fragment_fixture;

    #[test]
    fn config_parsing() {
        let c = build_config(0.25, 0.5, "log", "under").unwrap();
        assert_eq!((c.penalty, c.mode), (Penalty::Log, Mode::Under));
        assert!(build_config(0.6, 0.5, "sqrt", "over").is_err());
        assert!(build_config(0.1, 0.5, "cubic", "over").is_err());
        assert!(build_config(0.1, 0.5, "sqrt", "sideways").is_err());
    }

    #[test]
    fn values_validated() {
        let g = grid_from_values(2, 2, [0, 1, 2, 4_294_967_295]).unwrap();
        assert_eq!(g.labels(), &[0, 1, 2, u32::MAX]);
        let err = grid_from_values(2, 2, [0, -1, 0, 0]).unwrap_err();
        assert!(err.contains("(0, 1)"), "{err}");
        assert!(grid_from_values(1, 1, [1 << 32]).is_err());
        assert!(grid_from_values(2, 2, [0, 1, 2]).is_err());
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(rows_to_grid(vec![vec![1, 2], vec![3]]).is_err());
        assert_eq!(
            rows_to_grid(vec![vec![1, 2], vec![3, 4]]).unwrap().shape(),
            (2, 2)
        );
    }

    #[test]
    fn score_order_matches_keys() {
        let (gt, pred) = two_fragment_fixture();
        let r = evaluate_all(&gt, &pred, &SoftPqConfig::default()).unwrap();
        let v = score_values(&r);
        assert_eq!(SCORE_KEYS[0], "softpq");
        assert_eq!(v[0], r.softpq);
        assert_eq!(SCORE_KEYS[4], "map");
        assert_eq!(v[4], r.map_score);
        assert_eq!(v[6], r.dice);
    }
}
