//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 for usage errors, unreadable or unpaired
//! inputs and invalid parameters, 3 when two grids have different shapes.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::batch::{evaluate_batch, pair_directories, ImagePair};
use crate::error::{Error, Result};
use crate::experiments::{
    emit, erosion_curve, format_sig, overseg_curve, penalty_ablation, threshold_sweep,
    AblationParams, EmitFormat, ErosionParams, ExperimentRun, OversegParams, SweepParams,
    SCORE_EPS,
};
use crate::labelgrid::{load, save};
use crate::metrics::{default_thresholds, Mode, Penalty, SoftPqConfig};
use crate::perturb::{
    apply, make_disk_grid, DiskGridSpec, Morph, PerturbSpec, Perturbation, SplitSpec,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DIMENSIONS: i32 = 3;

/// Settings loadable from `--config <json>`. Unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub penalty: Option<Penalty>,
    pub mode: Option<Mode>,
    pub thresholds: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }
}

/// Named threshold pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// l = 0.25, h = 0.5
    Benchmark,
    /// l = 0.4, h = 0.6
    Strict,
    /// l = 0.05, h = 0.5
    Lenient,
}

impl Preset {
    pub fn thresholds(self) -> (f64, f64) {
        match self {
            Preset::Benchmark => (0.25, 0.5),
            Preset::Strict => (0.4, 0.6),
            Preset::Lenient => (0.05, 0.5),
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct ScoreFlags {
    /// Lower IoU threshold (soft band starts strictly above it)
    #[arg(long)]
    pub lower: Option<f64>,
    /// Upper IoU threshold (matches at or above it)
    #[arg(long)]
    pub upper: Option<f64>,
    #[arg(long, value_parser = parse_penalty)]
    pub penalty: Option<Penalty>,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<Mode>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// JSON file with default settings; flags override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma separated IoU thresholds for mAP
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_penalty(s: &str) -> std::result::Result<Penalty, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_mode(s: &str) -> std::result::Result<Mode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Settings after merging defaults, the config file, the preset and flags.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub config: SoftPqConfig,
    pub thresholds: Vec<f64>,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl ScoreFlags {
    pub fn resolve(&self) -> Result<Resolved> {
        let file = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        let mut config = SoftPqConfig::default();
        if let Some(l) = file.lower {
            config.lower = l;
        }
        if let Some(h) = file.upper {
            config.upper = h;
        }
        if let Some(p) = file.penalty {
            config.penalty = p;
        }
        if let Some(m) = file.mode {
            config.mode = m;
        }
        if let Some(preset) = self.preset {
            (config.lower, config.upper) = preset.thresholds();
        }
        if let Some(l) = self.lower {
            config.lower = l;
        }
        if let Some(h) = self.upper {
            config.upper = h;
        }
        if let Some(p) = self.penalty {
            config.penalty = p;
        }
        if let Some(m) = self.mode {
            config.mode = m;
        }
        config.validate()?;
        let thresholds = self
            .thresholds
            .clone()
            .or(file.thresholds)
            .unwrap_or_else(default_thresholds);
        if thresholds.is_empty() || thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::InvalidConfig(format!(
                "mAP thresholds must be a non-empty list in [0, 1], got {thresholds:?}"
            )));
        }
        Ok(Resolved {
            config,
            thresholds,
            seed: self.seed.or(file.seed).unwrap_or(0),
            out: self.out.clone().or(file.out),
        })
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "softpq",
    version,
    about = "Soft panoptic quality for instance segmentation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PerturbKind {
    Erode,
    Dilate,
    Split,
    Ghost,
    Partial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExperimentName {
    Erosion,
    Sweep,
    Overseg,
    Ablation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MorphArg {
    Erode,
    Dilate,
}

#[derive(Debug, Clone, Args)]
pub struct DiskFlags {
    #[arg(long, default_value_t = 5)]
    pub rows: usize,
    #[arg(long, default_value_t = 5)]
    pub cols: usize,
    #[arg(long, default_value_t = 18)]
    pub radius: usize,
    #[arg(long, default_value_t = 51)]
    pub spacing: usize,
}

impl DiskFlags {
    fn spec(&self) -> DiskGridSpec {
        DiskGridSpec {
            rows: self.rows,
            cols: self.cols,
            radius: self.radius,
            spacing: self.spacing,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score a prediction against ground truth (two files or two directories)
    Eval {
        gt: PathBuf,
        pred: PathBuf,
        #[command(flatten)]
        flags: ScoreFlags,
    },
    /// Per-image PQ vs SoftPQ as CSV for two paired directories
    Compare {
        gt_dir: PathBuf,
        pred_dir: PathBuf,
        #[command(flatten)]
        flags: ScoreFlags,
    },
    /// Apply a synthetic error to a label image
    Perturb {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, value_enum)]
        kind: PerturbKind,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        fragments: Option<usize>,
        #[arg(long)]
        fraction: Option<f64>,
        /// Width of the removed column at each split cut
        #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u8).range(0..=1))]
        gap: u8,
        #[arg(long)]
        ghost_count: Option<usize>,
        #[arg(long)]
        ghost_radius: Option<usize>,
        #[arg(long)]
        keep_fraction: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write the synthetic disk-grid ground truth
    Disks {
        output: PathBuf,
        #[command(flatten)]
        disks: DiskFlags,
    },
    /// Run a perturbation experiment and write CSV (and optionally SVG)
    Experiment {
        #[arg(value_enum)]
        name: ExperimentName,
        #[arg(long)]
        steps: Option<usize>,
        /// Perturbation for the threshold sweep
        #[arg(long, value_enum, default_value = "erode")]
        perturbation: MorphArg,
        /// Lower thresholds for the sweep and the over-segmentation envelope
        #[arg(long, value_delimiter = ',')]
        lower_grid: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        fragments: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        fractions: Option<Vec<f64>>,
        /// Split gap width (over-segmentation defaults to 1, ablation to 0)
        #[arg(long, value_parser = clap::value_parser!(u8).range(0..=1))]
        gap: Option<u8>,
        /// Also write an SVG chart
        #[arg(long)]
        svg: bool,
        #[command(flatten)]
        flags: ScoreFlags,
        #[command(flatten)]
        disks: DiskFlags,
    },
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::DimensionMismatch { .. } => EXIT_DIMENSIONS,
        _ => EXIT_USAGE,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(rendered.as_bytes())
            } else {
                stdout.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    match execute(cli.command, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn resolve_pairs(gt: &Path, pred: &Path) -> Result<Vec<ImagePair>> {
    match (gt.is_dir(), pred.is_dir()) {
        (true, true) => pair_directories(gt, pred),
        (false, false) => {
            let name = pred
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| pred.display().to_string());
            Ok(vec![ImagePair {
                name,
                gt: gt.to_path_buf(),
                pred: pred.to_path_buf(),
            }])
        }
        _ => Err(Error::InvalidConfig(
            "ground truth and prediction must both be files or both be directories".into(),
        )),
    }
}

fn execute(command: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    match command {
        Command::Eval { gt, pred, flags } => {
            let resolved = flags.resolve()?;
            let pairs = resolve_pairs(&gt, &pred)?;
            let report = evaluate_batch(&pairs, &resolved.config, &resolved.thresholds)?;
            let json = report.to_json() + "\n";
            stdout.write_all(json.as_bytes()).map_err(io_err)?;
            if let Some(out) = &resolved.out {
                write_file(out, json.as_bytes())?;
            }
            Ok(())
        }
        Command::Compare {
            gt_dir,
            pred_dir,
            flags,
        } => {
            let resolved = flags.resolve()?;
            let pairs = pair_directories(&gt_dir, &pred_dir)?;
            let report = evaluate_batch(&pairs, &resolved.config, &resolved.thresholds)?;
            let mut csv = String::from("name,pq,softpq,softpq_minus_pq\n");
            let mut violations = 0;
            for img in &report.images {
                let (pq, soft) = (img.report.pq, img.report.softpq);
                if soft < pq - SCORE_EPS {
                    violations += 1;
                }
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    img.name,
                    format_sig(pq),
                    format_sig(soft),
                    format_sig(soft - pq)
                ));
            }
            match &resolved.out {
                Some(out) => write_file(out, csv.as_bytes())?,
                None => stdout.write_all(csv.as_bytes()).map_err(io_err)?,
            }
            writeln!(
                stderr,
                "compared {} images; rows with softpq < pq: {violations}",
                report.images.len()
            )
            .map_err(io_err)?;
            Ok(())
        }
        Command::Perturb {
            input,
            output,
            kind,
            iterations,
            fragments,
            fraction,
            gap,
            ghost_count,
            ghost_radius,
            keep_fraction,
            seed,
        } => {
            let need = |v: Option<usize>, flag: &str| {
                v.ok_or_else(|| {
                    Error::InvalidPerturbation(format!("--kind {kind:?} needs --{flag}"))
                })
            };
            let perturbation = match kind {
                PerturbKind::Erode => Perturbation::Erode {
                    iterations: need(iterations, "iterations")?,
                },
                PerturbKind::Dilate => Perturbation::Dilate {
                    iterations: need(iterations, "iterations")?,
                },
                PerturbKind::Split => Perturbation::Split(SplitSpec {
                    fragments: need(fragments, "fragments")?,
                    fraction: fraction.unwrap_or(1.0),
                    gap: gap == 1,
                }),
                PerturbKind::Ghost => Perturbation::Ghost {
                    count: need(ghost_count, "ghost-count")?,
                    radius: need(ghost_radius, "ghost-radius")?,
                },
                PerturbKind::Partial => Perturbation::Partial {
                    keep_fraction: keep_fraction.ok_or_else(|| {
                        Error::InvalidPerturbation("--kind partial needs --keep-fraction".into())
                    })?,
                },
            };
            let grid = load(&input)?;
            let outcome = apply(&grid, &PerturbSpec { perturbation, seed })?;
            for note in &outcome.notes {
                writeln!(stderr, "note: {note}").map_err(io_err)?;
            }
            save(&outcome.grid, &output)
        }
        Command::Disks { output, disks } => save(&make_disk_grid(&disks.spec())?, &output),
        Command::Experiment {
            name,
            steps,
            perturbation,
            lower_grid,
            fragments,
            fractions,
            gap,
            svg,
            flags,
            disks,
        } => {
            let resolved = flags.resolve()?;
            let disks = disks.spec();
            let gap = gap.map(|g| g == 1);
            let (label, run) = match name {
                ExperimentName::Erosion => (
                    "erosion",
                    erosion_curve(&ErosionParams {
                        steps: steps.unwrap_or(25),
                        configs: vec![resolved.config],
                        baselines: true,
                        disks,
                    })?,
                ),
                ExperimentName::Sweep => {
                    let defaults = SweepParams::default();
                    (
                        "sweep",
                        threshold_sweep(&SweepParams {
                            lower_grid: lower_grid.unwrap_or(defaults.lower_grid),
                            upper: resolved.config.upper,
                            perturbation: match perturbation {
                                MorphArg::Erode => Morph::Erode,
                                MorphArg::Dilate => Morph::Dilate,
                            },
                            steps: steps.unwrap_or(defaults.steps),
                            disks,
                        })?,
                    )
                }
                ExperimentName::Overseg => {
                    let defaults = OversegParams::default();
                    (
                        "overseg",
                        overseg_curve(&OversegParams {
                            fractions: fractions.unwrap_or(defaults.fractions),
                            fragments: fragments.unwrap_or(defaults.fragments),
                            config: resolved.config,
                            lower_envelope: lower_grid.unwrap_or(defaults.lower_envelope),
                            gap: gap.unwrap_or(defaults.gap),
                            seed: resolved.seed,
                            disks,
                        })?,
                    )
                }
                ExperimentName::Ablation => {
                    let defaults = AblationParams::default();
                    (
                        "ablation",
                        penalty_ablation(&AblationParams {
                            fragments: fragments.unwrap_or(defaults.fragments),
                            lower: resolved.config.lower,
                            upper: resolved.config.upper,
                            gap: gap.unwrap_or(defaults.gap),
                            seed: resolved.seed,
                            disks,
                        })?,
                    )
                }
            };
            write_experiment(label, &run, resolved.out.as_deref(), svg, stdout)
        }
    }
}

fn write_experiment(
    label: &str,
    run: &ExperimentRun,
    out_dir: Option<&Path>,
    svg: bool,
    stdout: &mut dyn Write,
) -> Result<()> {
    let dir = out_dir.unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join(format!("{label}.csv"));
    write_file(&csv_path, &emit(&run.table, EmitFormat::Csv))?;
    writeln!(stdout, "wrote {}", csv_path.display()).map_err(io_err)?;
    if svg {
        let svg_path = dir.join(format!("{label}.svg"));
        write_file(&svg_path, &emit(&run.table, EmitFormat::Svg))?;
        writeln!(stdout, "wrote {}", svg_path.display()).map_err(io_err)?;
    }
    let meta = serde_json::json!({
        "metadata": run.table.metadata,
        "checks": run.checks,
    });
    let meta_path = dir.join(format!("{label}.json"));
    let text = serde_json::to_string_pretty(&meta).expect("metadata serializes") + "\n";
    write_file(&meta_path, text.as_bytes())?;
    for c in &run.checks {
        let verdict = if c.passed { "PASS" } else { "FAIL" };
        writeln!(stdout, "{verdict} {}: {}", c.name, c.detail).map_err(io_err)?;
    }
    Ok(())
}
