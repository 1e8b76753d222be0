//! Controlled perturbation experiments on the disk grid.
//!
//! Each runner perturbs a synthetic ground truth step by step, scores every
//! step through [`crate::metrics`], and returns a [`CurveTable`]. The tables
//! are written as CSV (canonical) or as a small standalone SVG line chart.
//! Runners also expose the qualitative properties they are expected to show
//! as [`Check`]s so the CLI can print them and tests can assert them.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labelgrid::LabelGrid;
use crate::metrics::{
    default_thresholds, evaluate_all, evaluate_overlap, penalty_weight, pq_from_pairs,
    softpq_from_pairs, Penalty, ScoreReport, SoftPqConfig,
};
use crate::overlap::{iou_pairs, joint_histogram};
use crate::perturb::{
    make_disk_grid, morph_instances, split_instances, DiskGridSpec, Morph, SplitSpec,
};

/// Slack for comparisons between mathematically equal or ordered scores.
pub const SCORE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveTable {
    pub x_label: String,
    pub x_values: Vec<f64>,
    pub series: Vec<Series>,
    pub metadata: BTreeMap<String, String>,
}

impl CurveTable {
    pub fn new(x_label: impl Into<String>, x_values: Vec<f64>) -> Self {
        Self {
            x_label: x_label.into(),
            x_values,
            series: Vec::new(),
            metadata: BTreeMap::new(),
        }
    }

    /// # Panics
    ///
    /// If `values` is not aligned with `x_values`.
    pub fn push(&mut self, name: impl Into<String>, values: Vec<f64>) {
        let name = name.into();
        assert_eq!(
            values.len(),
            self.x_values.len(),
            "series {name} is not aligned with x"
        );
        self.series.push(Series { name, values });
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.series
            .iter()
            .find(|s| s.name == name)
            .map(|s| s.values.as_slice())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.series.iter().map(|s| s.name.as_str())
    }

    fn meta(&mut self, key: &str, value: impl ToString) {
        self.metadata.insert(key.to_string(), value.to_string());
    }
}

/// A named pass/fail property of an experiment run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRun {
    pub table: CurveTable,
    pub checks: Vec<Check>,
}

/// Column name for a SoftPQ configuration, e.g. `softpq_l0.05_h0.5`.
pub fn softpq_series_name(config: &SoftPqConfig) -> String {
    let mut name = format!("softpq_l{}_h{}", config.lower, config.upper);
    if config.penalty != Penalty::Sqrt {
        name.push('_');
        name.push_str(config.penalty.as_str());
    }
    if config.mode != crate::metrics::Mode::Over {
        name.push('_');
        name.push_str(config.mode.as_str());
    }
    name
}

/// `Δ_i = v_i - v_{i-1}`, with `Δ_0 = 0`.
pub fn deltas(values: &[f64]) -> Vec<f64> {
    std::iter::once(0.0)
        .chain(values.windows(2).map(|w| w[1] - w[0]))
        .take(values.len())
        .collect()
}

/// Largest `v_{i-1} - v_i` over adjacent entries (0 for fewer than two values).
pub fn max_drop(values: &[f64]) -> f64 {
    values.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max)
}

fn max_abs(values: &[f64]) -> f64 {
    values.iter().map(|v| v.abs()).fold(0.0, f64::max)
}

fn morph_sequence(gt: &LabelGrid, kind: Morph, steps: usize) -> Vec<LabelGrid> {
    let mut seq = Vec::with_capacity(steps + 1);
    seq.push(gt.clone());
    for i in 0..steps {
        let next = morph_instances(&seq[i], kind, 1);
        seq.push(next);
    }
    seq
}

fn x_range(n: usize) -> Vec<f64> {
    (0..=n).map(|i| i as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErosionParams {
    pub steps: usize,
    pub configs: Vec<SoftPqConfig>,
    pub baselines: bool,
    pub disks: DiskGridSpec,
}

impl Default for ErosionParams {
    fn default() -> Self {
        Self {
            steps: 25,
            configs: vec![SoftPqConfig::default()],
            baselines: true,
            disks: DiskGridSpec::default(),
        }
    }
}

pub const BASELINE_SERIES: [&str; 5] = ["pq", "f1", "map", "pixel_iou", "dice"];

fn baseline_values(r: &ScoreReport) -> [f64; 5] {
    [r.pq, r.rq_f1, r.map_score, r.pixel_iou, r.dice]
}

/// Scores of progressively eroded predictions, plus per-step deltas.
pub fn erosion_curve(params: &ErosionParams) -> Result<ExperimentRun> {
    if params.steps == 0 {
        return Err(Error::InvalidConfig(
            "erosion needs at least one step".into(),
        ));
    }
    if params.configs.is_empty() {
        return Err(Error::InvalidConfig(
            "erosion needs at least one SoftPQ config".into(),
        ));
    }
    for c in &params.configs {
        c.validate()?;
    }
    let gt = make_disk_grid(&params.disks)?;
    let preds = morph_sequence(&gt, Morph::Erode, params.steps);

    // reports[step][config]
    let reports: Vec<Vec<ScoreReport>> = preds
        .par_iter()
        .map(|pred| {
            params
                .configs
                .iter()
                .map(|c| evaluate_all(&gt, pred, c))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut table = CurveTable::new("erosion_step", x_range(params.steps));
    let mut columns: Vec<(String, Vec<f64>)> = Vec::new();
    for (ci, c) in params.configs.iter().enumerate() {
        columns.push((
            softpq_series_name(c),
            reports.iter().map(|r| r[ci].softpq).collect(),
        ));
    }
    if params.baselines {
        for (bi, name) in BASELINE_SERIES.iter().enumerate() {
            columns.push((
                name.to_string(),
                reports.iter().map(|r| baseline_values(&r[0])[bi]).collect(),
            ));
        }
    }
    let delta_columns: Vec<(String, Vec<f64>)> = columns
        .iter()
        .map(|(n, v)| (format!("delta_{n}"), deltas(v)))
        .collect();
    for (n, v) in columns.into_iter().chain(delta_columns) {
        table.push(n, v);
    }
    table.meta("experiment", "erosion");
    table.meta("steps", params.steps);
    table.meta("disks", format!("{:?}", params.disks));
    table.meta(
        "configs",
        serde_json::to_string(&params.configs).expect("configs serialize"),
    );

    let mut checks = Vec::new();
    let first = softpq_series_name(&params.configs[0]);
    let soft = table.get(&first).expect("softpq series").to_vec();
    let at_start: Vec<f64> = table
        .series
        .iter()
        .filter(|s| !s.name.starts_with("delta_"))
        .map(|s| s.values[0])
        .collect();
    checks.push(Check::new(
        "identity_start",
        at_start.iter().all(|&v| v == 1.0),
        format!("step 0 scores {at_start:?}"),
    ));
    let increases = soft.windows(2).filter(|w| w[1] > w[0]).count();
    checks.push(Check::new(
        "softpq_monotone_non_increasing",
        increases == 0,
        format!("{first}: {increases} increasing steps"),
    ));
    if let Some(pq) = table.get("pq") {
        let (ds, dp) = (max_abs(&deltas(&soft)), max_abs(&deltas(pq)));
        checks.push(Check::new(
            "softpq_smoother_than_pq",
            ds < dp,
            format!("max |delta| {first} = {ds:.6}, pq = {dp:.6}"),
        ));
    }
    Ok(ExperimentRun { table, checks })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepParams {
    pub lower_grid: Vec<f64>,
    pub upper: f64,
    pub perturbation: Morph,
    pub steps: usize,
    pub disks: DiskGridSpec,
}

/// `0.05, 0.10, ..., 0.50`
pub fn default_lower_grid() -> Vec<f64> {
    (1..=10).map(|i| (5 * i) as f64 / 100.0).collect()
}

impl Default for SweepParams {
    fn default() -> Self {
        Self {
            lower_grid: default_lower_grid(),
            upper: 0.5,
            perturbation: Morph::Erode,
            steps: 25,
            disks: DiskGridSpec::default(),
        }
    }
}

/// SoftPQ for each lower threshold across progressive erosion or dilation.
pub fn threshold_sweep(params: &SweepParams) -> Result<ExperimentRun> {
    if params.lower_grid.is_empty() {
        return Err(Error::InvalidConfig(
            "sweep needs at least one lower threshold".into(),
        ));
    }
    let configs: Vec<SoftPqConfig> = params
        .lower_grid
        .iter()
        .map(|&l| SoftPqConfig::with_thresholds(l, params.upper))
        .collect::<Result<_>>()?;
    let gt = make_disk_grid(&params.disks)?;
    let preds = morph_sequence(&gt, params.perturbation, params.steps);

    // (softpq per config, pq) per step
    let cells: Vec<(Vec<f64>, f64)> = preds
        .par_iter()
        .map(|pred| {
            let overlap = joint_histogram(&gt, pred)?;
            let pairs = iou_pairs(&overlap);
            let soft = configs
                .iter()
                .map(|c| softpq_from_pairs(&pairs, &overlap.gt, &overlap.pred, c).value)
                .collect();
            let pq = pq_from_pairs(
                &pairs,
                overlap.gt.instance_count,
                overlap.pred.instance_count,
            )
            .pq;
            Ok((soft, pq))
        })
        .collect::<Result<_>>()?;

    let mut table = CurveTable::new(
        match params.perturbation {
            Morph::Erode => "erosion_step",
            Morph::Dilate => "dilation_step",
        },
        x_range(params.steps),
    );
    for (ci, c) in configs.iter().enumerate() {
        table.push(
            softpq_series_name(c),
            cells.iter().map(|c| c.0[ci]).collect(),
        );
    }
    let pq: Vec<f64> = cells.iter().map(|c| c.1).collect();
    table.push("pq", pq.clone());
    table.meta("experiment", "sweep");
    table.meta("upper", params.upper);
    table.meta(
        "perturbation",
        format!("{:?}", params.perturbation).to_lowercase(),
    );
    table.meta("steps", params.steps);
    table.meta("disks", format!("{:?}", params.disks));

    let mut checks = Vec::new();
    if params.upper == 0.5 {
        for c in configs.iter().filter(|c| c.lower == c.upper) {
            let name = softpq_series_name(c);
            let s = table.get(&name).expect("series");
            let worst = s
                .iter()
                .zip(&pq)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            checks.push(Check::new(
                "reduction_to_pq",
                worst <= SCORE_EPS,
                format!("max |{name} - pq| = {worst:e}"),
            ));
        }
        let violations: usize = configs
            .iter()
            .map(|c| {
                let s = table.get(&softpq_series_name(c)).expect("series");
                s.iter()
                    .zip(&pq)
                    .filter(|(a, b)| **a < **b - SCORE_EPS)
                    .count()
            })
            .sum();
        checks.push(Check::new(
            "dominance_over_pq",
            violations == 0,
            format!("{violations} points below pq"),
        ));
    }
    let lowest = configs
        .iter()
        .min_by(|a, b| a.lower.total_cmp(&b.lower))
        .expect("non-empty grid");
    let lowest_name = softpq_series_name(lowest);
    let soft = table.get(&lowest_name).expect("series");
    let collapse = pq.iter().zip(soft).position(|(p, s)| *p == 0.0 && *s > 0.0);
    checks.push(Check::new(
        "pq_collapses_before_softpq",
        collapse.is_some(),
        match collapse {
            Some(step) => format!("step {step}: pq = 0, {lowest_name} = {:.6}", soft[step]),
            None => format!("no step with pq = 0 and {lowest_name} > 0"),
        },
    ));
    Ok(ExperimentRun { table, checks })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OversegParams {
    pub fractions: Vec<f64>,
    pub fragments: Vec<usize>,
    pub config: SoftPqConfig,
    pub lower_envelope: Vec<f64>,
    pub gap: bool,
    pub seed: u64,
    pub disks: DiskGridSpec,
}

impl Default for OversegParams {
    fn default() -> Self {
        Self {
            fractions: (0..=5).map(|i| i as f64 / 5.0).collect(),
            fragments: (1..=5).collect(),
            config: SoftPqConfig::default(),
            lower_envelope: default_lower_grid(),
            gap: true,
            seed: 0,
            disks: DiskGridSpec::default(),
        }
    }
}

/// Metrics as a growing share of objects is split into `k` fragments.
pub fn overseg_curve(params: &OversegParams) -> Result<ExperimentRun> {
    params.config.validate()?;
    let envelope: Vec<SoftPqConfig> = params
        .lower_envelope
        .iter()
        .map(|&l| {
            SoftPqConfig::new(
                l,
                params.config.upper,
                params.config.penalty,
                params.config.mode,
            )
        })
        .collect::<Result<_>>()?;
    let gt = make_disk_grid(&params.disks)?;

    let cells: Vec<(usize, f64)> = params
        .fragments
        .iter()
        .flat_map(|&k| params.fractions.iter().map(move |&f| (k, f)))
        .collect();
    // (softpq, pq, map, envelope min, envelope max)
    let scores: Vec<[f64; 5]> = cells
        .par_iter()
        .map(|&(k, f)| {
            let pred = split_instances(
                &gt,
                &SplitSpec {
                    fragments: k,
                    fraction: f,
                    gap: params.gap,
                },
                params.seed,
            )?
            .grid;
            let overlap = joint_histogram(&gt, &pred)?;
            let r = evaluate_overlap(&overlap, &params.config, &default_thresholds());
            let pairs = iou_pairs(&overlap);
            let env = envelope
                .iter()
                .map(|c| softpq_from_pairs(&pairs, &overlap.gt, &overlap.pred, c).value);
            let (lo, hi) = env.fold((r.softpq, r.softpq), |(lo, hi), v| (lo.min(v), hi.max(v)));
            Ok([r.softpq, r.pq, r.map_score, lo, hi])
        })
        .collect::<Result<_>>()?;

    let mut table = CurveTable::new("split_fraction", params.fractions.clone());
    let nf = params.fractions.len();
    for (ki, &k) in params.fragments.iter().enumerate() {
        let row = &scores[ki * nf..(ki + 1) * nf];
        for (col, prefix) in ["softpq", "pq", "map", "envelope_min", "envelope_max"]
            .iter()
            .enumerate()
        {
            table.push(
                format!("{prefix}_k{k}"),
                row.iter().map(|s| s[col]).collect(),
            );
        }
    }
    table.meta("experiment", "overseg");
    table.meta(
        "config",
        serde_json::to_string(&params.config).expect("config serializes"),
    );
    table.meta("gap", params.gap);
    table.meta("seed", params.seed);
    table.meta("disks", format!("{:?}", params.disks));

    let mut checks = Vec::new();
    let mut violations = 0;
    for &k in &params.fragments {
        let s = table.get(&format!("softpq_k{k}")).expect("series");
        let p = table.get(&format!("pq_k{k}")).expect("series");
        violations += s
            .iter()
            .zip(p)
            .filter(|(a, b)| **a < **b - SCORE_EPS)
            .count();
    }
    if params.config.upper == 0.5 {
        checks.push(Check::new(
            "dominance_over_pq",
            violations == 0,
            format!("{violations} points below pq"),
        ));
    }
    let full = params.fractions.iter().position(|&f| f == 1.0);
    if let (Some(i), true) = (full, params.fragments.contains(&2)) {
        let (s, p, m) = (
            table.get("softpq_k2").expect("series")[i],
            table.get("pq_k2").expect("series")[i],
            table.get("map_k2").expect("series")[i],
        );
        checks.push(Check::new(
            "full_two_way_split",
            p == 0.0 && m == 0.0 && s >= 0.4,
            format!("pq = {p}, map = {m}, softpq = {s:.6}"),
        ));
    }
    Ok(ExperimentRun { table, checks })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationParams {
    pub fragments: Vec<usize>,
    pub lower: f64,
    pub upper: f64,
    pub gap: bool,
    pub seed: u64,
    pub disks: DiskGridSpec,
}

impl Default for AblationParams {
    fn default() -> Self {
        Self {
            fragments: (1..=5).collect(),
            lower: 0.05,
            upper: 0.5,
            gap: false,
            seed: 0,
            disks: DiskGridSpec::default(),
        }
    }
}

/// SoftPQ under each penalty as every object is split into more fragments,
/// plus the inverse weights `1 / f(n)` at each fragment count.
pub fn penalty_ablation(params: &AblationParams) -> Result<ExperimentRun> {
    if params.fragments.iter().any(|&k| !(1..=5).contains(&k)) {
        return Err(Error::InvalidConfig(format!(
            "ablation fragment counts must lie in 1..=5, got {:?}",
            params.fragments
        )));
    }
    let configs: Vec<SoftPqConfig> = Penalty::ALL
        .iter()
        .map(|&p| SoftPqConfig::new(params.lower, params.upper, p, Default::default()))
        .collect::<Result<_>>()?;
    let gt = make_disk_grid(&params.disks)?;
    let scores: Vec<Vec<f64>> = params
        .fragments
        .par_iter()
        .map(|&k| {
            let pred = split_instances(
                &gt,
                &SplitSpec {
                    fragments: k,
                    fraction: 1.0,
                    gap: params.gap,
                },
                params.seed,
            )?
            .grid;
            let overlap = joint_histogram(&gt, &pred)?;
            let pairs = iou_pairs(&overlap);
            Ok(configs
                .iter()
                .map(|c| softpq_from_pairs(&pairs, &overlap.gt, &overlap.pred, c).value)
                .collect())
        })
        .collect::<Result<_>>()?;

    let x: Vec<f64> = params.fragments.iter().map(|&k| k as f64).collect();
    let mut table = CurveTable::new("fragments", x);
    for (pi, p) in Penalty::ALL.iter().enumerate() {
        table.push(p.as_str(), scores.iter().map(|s| s[pi]).collect());
    }
    for p in Penalty::ALL {
        table.push(
            format!("inverse_weight_{p}"),
            params
                .fragments
                .iter()
                .map(|&n| 1.0 / penalty_weight(p, n))
                .collect(),
        );
    }
    table.meta("experiment", "ablation");
    table.meta("lower", params.lower);
    table.meta("upper", params.upper);
    table.meta("gap", params.gap);
    table.meta("seed", params.seed);
    table.meta("disks", format!("{:?}", params.disks));

    let mut checks = Vec::new();
    let sqrt = table.get("sqrt").expect("series");
    let linear = table.get("linear").expect("series");
    let log = table.get("log").expect("series");
    if let Some(i) = params.fragments.iter().position(|&k| k == 1) {
        checks.push(Check::new(
            "unsplit_penalties_agree",
            sqrt[i] == linear[i] && sqrt[i] == log[i],
            format!("sqrt {} linear {} log {}", sqrt[i], linear[i], log[i]),
        ));
    }
    let below = params
        .fragments
        .iter()
        .enumerate()
        .filter(|&(i, &k)| k >= 2 && sqrt[i] < linear[i] - SCORE_EPS)
        .count();
    checks.push(Check::new(
        "sqrt_at_least_linear",
        below == 0,
        format!("{below} fragment counts with sqrt < linear"),
    ));
    // Drops are compared across split objects only (fragments >= 2).
    let split_only = |s: &[f64]| -> Vec<f64> {
        s.iter()
            .zip(&params.fragments)
            .filter(|&(_, &k)| k >= 2)
            .map(|(&v, _)| v)
            .collect()
    };
    let (ds, dl) = (max_drop(&split_only(sqrt)), max_drop(&split_only(linear)));
    checks.push(Check::new(
        "sqrt_declines_more_gradually",
        ds < dl,
        format!("max adjacent drop over fragments >= 2: sqrt = {ds:.6}, linear = {dl:.6}"),
    ));
    Ok(ExperimentRun { table, checks })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmitFormat {
    Csv,
    Svg,
}

pub fn emit(table: &CurveTable, format: EmitFormat) -> Vec<u8> {
    match format {
        EmitFormat::Csv => to_csv(table).into_bytes(),
        EmitFormat::Svg => to_svg(table).into_bytes(),
    }
}

/// `%.12g`-style rendering: 12 significant digits, trailing zeros trimmed.
pub fn format_sig(v: f64) -> String {
    const DIGITS: i32 = 12;
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..DIGITS).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (DIGITS - 1 - exp).max(0) as usize;
    trim_zeros(&format!("{v:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn to_csv(table: &CurveTable) -> String {
    let mut out = String::from("x");
    for s in &table.series {
        out.push(',');
        out.push_str(&s.name);
    }
    out.push('\n');
    for (i, &x) in table.x_values.iter().enumerate() {
        out.push_str(&format_sig(x));
        for s in &table.series {
            out.push(',');
            out.push_str(&format_sig(s.values[i]));
        }
        out.push('\n');
    }
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

const PALETTE: [&str; 10] = [
    "#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

fn to_svg(table: &CurveTable) -> String {
    const W: f64 = 800.0;
    const H: f64 = 500.0;
    const LEFT: f64 = 60.0;
    const RIGHT: f64 = 600.0;
    const TOP: f64 = 20.0;
    const BOTTOM: f64 = 450.0;

    let xs = &table.x_values;
    let (x_min, x_max) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
            (a.min(x), b.max(x))
        });
    let (x_min, x_max) = if xs.is_empty() {
        (0.0, 1.0)
    } else if x_max > x_min {
        (x_min, x_max)
    } else {
        (x_min - 0.5, x_max + 0.5)
    };
    let all = table.series.iter().flat_map(|s| s.values.iter().copied());
    let (y_min, y_max) = all.fold((0.0f64, 1.0f64), |(a, b), v| (a.min(v), b.max(v)));
    let px = |x: f64| LEFT + (x - x_min) / (x_max - x_min) * (RIGHT - LEFT);
    let py = |y: f64| BOTTOM - (y - y_min) / (y_max - y_min) * (BOTTOM - TOP);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(
        out,
        r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#
    );
    let _ = writeln!(
        out,
        r#"<g stroke="black" stroke-width="1"><line x1="{LEFT}" y1="{BOTTOM}" x2="{RIGHT}" y2="{BOTTOM}"/><line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{BOTTOM}"/></g>"#
    );
    let _ = writeln!(
        out,
        r#"<g font-family="sans-serif" font-size="11"><text x="{LEFT}" y="{}" >{}</text><text x="{}" y="{}" text-anchor="end">{}</text><text x="{}" y="{}" text-anchor="end">{}</text><text x="{RIGHT}" y="{}" text-anchor="end">{}</text><text x="{}" y="{}" text-anchor="middle">{}</text></g>"#,
        BOTTOM + 15.0,
        format_sig(x_min),
        LEFT - 5.0,
        BOTTOM,
        format_sig(y_min),
        LEFT - 5.0,
        TOP + 10.0,
        format_sig(y_max),
        BOTTOM + 15.0,
        format_sig(x_max),
        (LEFT + RIGHT) / 2.0,
        BOTTOM + 35.0,
        xml_escape(&table.x_label),
    );
    for (i, s) in table.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = xs
            .iter()
            .zip(&s.values)
            .map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"><title>{}</title></polyline>"#,
            points.join(" "),
            xml_escape(&s.name)
        );
        let ly = TOP + 5.0 + 14.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<g font-family="sans-serif" font-size="10"><line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text></g>"#,
            RIGHT + 15.0,
            RIGHT + 35.0,
            RIGHT + 40.0,
            ly + 3.5,
            xml_escape(&s.name)
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_disks() -> DiskGridSpec {
        DiskGridSpec {
            rows: 2,
            cols: 2,
            radius: 8,
            spacing: 21,
        }
    }

    #[test]
    fn sig_formatting() {
        assert_eq!(format_sig(0.0), "0");
        assert_eq!(format_sig(1.0), "1");
        assert_eq!(format_sig(0.25), "0.25");
        assert_eq!(format_sig(25.0), "25");
        assert_eq!(format_sig(-0.5), "-0.5");
        assert_eq!(format_sig(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_sig(2.0 / 3.0), "0.666666666667");
        assert_eq!(format_sig(1e-7), "1e-07");
        assert_eq!(format_sig(0.875 / 3f64.sqrt()), "0.505181485541");
        assert_eq!(format_sig(123456789012345.0), "1.23456789012e+14");
    }

    #[test]
    fn one_point_csv_has_two_lines() {
        let mut t = CurveTable::new("x", vec![0.0]);
        t.push("a", vec![0.5]);
        let csv = String::from_utf8(emit(&t, EmitFormat::Csv)).unwrap();
        assert_eq!(csv, "x,a\n0,0.5\n");
    }

    #[test]
    fn svg_has_one_polyline_per_series() {
        let mut t = CurveTable::new("step <n>", vec![0.0, 1.0, 2.0]);
        t.push("a&b", vec![1.0, 0.5, 0.25]);
        t.push("c", vec![0.0, 0.1, 0.2]);
        let svg = String::from_utf8(emit(&t, EmitFormat::Svg)).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("a&amp;b") && svg.contains("step &lt;n&gt;"));
        assert!(svg.contains(r#"viewBox="0 0 800 500""#));
    }

    #[test]
    #[should_panic]
    fn misaligned_series_panics() {
        let mut t = CurveTable::new("x", vec![0.0, 1.0]);
        t.push("a", vec![1.0]);
    }

    #[test]
    fn delta_and_drop_helpers() {
        assert_eq!(
            deltas(&[1.0, 0.75, 0.75, 0.5]),
            vec![0.0, -0.25, 0.0, -0.25]
        );
        assert_eq!(deltas(&[]), Vec::<f64>::new());
        assert_eq!(max_drop(&[1.0, 0.5, 0.6, 0.0]), 0.6);
        assert_eq!(max_drop(&[1.0]), 0.0);
    }

    #[test]
    fn series_names() {
        assert_eq!(
            softpq_series_name(&SoftPqConfig::default()),
            "softpq_l0.05_h0.5"
        );
        let c = SoftPqConfig::new(0.25, 0.6, Penalty::Log, crate::metrics::Mode::Under).unwrap();
        assert_eq!(softpq_series_name(&c), "softpq_l0.25_h0.6_log_under");
    }

    #[test]
    fn small_erosion_run() {
        let run = erosion_curve(&ErosionParams {
            steps: 10,
            disks: small_disks(),
            ..ErosionParams::default()
        })
        .unwrap();
        assert_eq!(run.table.x_values.len(), 11);
        assert_eq!(run.table.series.len(), 12);
        assert!(run.checks.iter().all(|c| c.passed), "{:?}", run.checks);
        assert!(erosion_curve(&ErosionParams {
            steps: 0,
            ..ErosionParams::default()
        })
        .is_err());
    }

    #[test]
    fn small_dilation_sweep() {
        let run = threshold_sweep(&SweepParams {
            perturbation: Morph::Dilate,
            steps: 12,
            disks: small_disks(),
            ..SweepParams::default()
        })
        .unwrap();
        let reduction = run
            .checks
            .iter()
            .find(|c| c.name == "reduction_to_pq")
            .unwrap();
        assert!(reduction.passed);
        let dominance = run
            .checks
            .iter()
            .find(|c| c.name == "dominance_over_pq")
            .unwrap();
        assert!(dominance.passed);
    }

    #[test]
    fn sweep_rejects_lower_above_upper() {
        assert!(threshold_sweep(&SweepParams {
            lower_grid: vec![0.6],
            ..SweepParams::default()
        })
        .is_err());
    }

    #[test]
    fn ablation_rejects_out_of_range_fragments() {
        assert!(penalty_ablation(&AblationParams {
            fragments: vec![1, 6],
            ..AblationParams::default()
        })
        .is_err());
    }

    #[test]
    fn overseg_unperturbed_column_is_perfect() {
        let run = overseg_curve(&OversegParams {
            fractions: vec![0.0, 1.0],
            fragments: vec![1, 2],
            disks: small_disks(),
            ..OversegParams::default()
        })
        .unwrap();
        for s in &run.table.series {
            assert_eq!(s.values[0], 1.0, "{}", s.name);
        }
    }
}
