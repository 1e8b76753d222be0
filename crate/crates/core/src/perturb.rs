//! Synthetic ground truths and controlled prediction errors.
//!
//! Geometry: disks on a regular grid. Morphology uses the 4-connected 3×3
//! cross, one application per iteration, applied to every instance at once.
//! Splits cut an instance's bounding box with equally spaced vertical lines.
//! Every randomized choice is drawn from a ChaCha8 stream seeded by the
//! caller, so outputs are a pure function of `(grid, parameters, seed)`.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labelgrid::LabelGrid;

/// How many random centers are tried per ghost before giving up.
pub const GHOST_PLACEMENT_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiskGridSpec {
    pub rows: usize,
    pub cols: usize,
    pub radius: usize,
    pub spacing: usize,
}

impl Default for DiskGridSpec {
    fn default() -> Self {
        Self {
            rows: 5,
            cols: 5,
            radius: 18,
            spacing: 51,
        }
    }
}

impl DiskGridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidPerturbation(format!(
                "disk grid needs at least one row and column, got {}x{}",
                self.rows, self.cols
            )));
        }
        if self.spacing <= 2 * self.radius {
            return Err(Error::InvalidPerturbation(format!(
                "spacing {} must exceed twice the radius {}",
                self.spacing, self.radius
            )));
        }
        Ok(())
    }

    /// `(height, width)` of the generated image.
    pub fn shape(&self) -> (usize, usize) {
        (self.rows * self.spacing + 1, self.cols * self.spacing + 1)
    }
}

/// Offsets `(dy, dx)` with `dy² + dx² <= r²`, in row-major order.
pub fn disk_offsets(radius: usize) -> Vec<(isize, isize)> {
    let r = radius as isize;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dy * dy + dx * dx <= r * r {
                out.push((dy, dx));
            }
        }
    }
    out
}

/// `rows * cols` equal disks labelled `1..=N` in row-major placement order.
pub fn make_disk_grid(spec: &DiskGridSpec) -> Result<LabelGrid> {
    spec.validate()?;
    let (height, width) = spec.shape();
    let mut labels = vec![0u32; height * width];
    let offsets = disk_offsets(spec.radius);
    let center = (spec.spacing / 2) as isize;
    let mut id = 0u32;
    for i in 0..spec.rows {
        for j in 0..spec.cols {
            id += 1;
            let cy = (i * spec.spacing) as isize + center;
            let cx = (j * spec.spacing) as isize + center;
            for &(dy, dx) in &offsets {
                let (y, x) = ((cy + dy) as usize, (cx + dx) as usize);
                labels[y * width + x] = id;
            }
        }
    }
    LabelGrid::new(height, width, labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Morph {
    Erode,
    Dilate,
}

/// Per-instance erosion or dilation with the 4-connected cross.
///
/// Erosion drops every pixel that has a 4-neighbour outside its instance
/// (the image border counts as outside). Dilation only claims background;
/// a background pixel touching several instances goes to the smallest id.
pub fn morph_instances(grid: &LabelGrid, kind: Morph, iterations: usize) -> LabelGrid {
    let (h, w) = grid.shape();
    let mut cur = grid.labels().to_vec();
    let mut next = cur.clone();
    for _ in 0..iterations {
        let mut changed = false;
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let l = cur[i];
                let neighbours = [
                    (y > 0).then(|| cur[i - w]),
                    (y + 1 < h).then(|| cur[i + w]),
                    (x > 0).then(|| cur[i - 1]),
                    (x + 1 < w).then(|| cur[i + 1]),
                ];
                next[i] = match kind {
                    Morph::Erode => {
                        if l != 0 && neighbours.iter().any(|n| *n != Some(l)) {
                            0
                        } else {
                            l
                        }
                    }
                    Morph::Dilate => {
                        if l == 0 {
                            neighbours
                                .iter()
                                .flatten()
                                .copied()
                                .filter(|&n| n != 0)
                                .min()
                                .unwrap_or(0)
                        } else {
                            l
                        }
                    }
                };
                changed |= next[i] != l;
            }
        }
        std::mem::swap(&mut cur, &mut next);
        if !changed {
            break;
        }
    }
    LabelGrid::new(h, w, cur).expect("shape preserved")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// Parts per split instance, at least 1.
    pub fragments: usize,
    /// Share of instances to split, in `[0, 1]`.
    pub fraction: f64,
    /// Remove the one-pixel column at each cut.
    pub gap: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitOutcome {
    pub grid: LabelGrid,
    /// Instances that were selected but too narrow to cut.
    pub notes: Vec<String>,
}

/// Number of instances a split fraction selects: `round(fraction * n)`, halves away from zero.
pub fn split_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64).round() as usize).min(n)
}

/// Cuts a seeded selection of instances into vertical strips with fresh ids.
///
/// Strip `j` of an instance whose bounding box spans `width` columns starting
/// at `left` covers columns `[left + j*width/k, left + (j+1)*width/k)`. With
/// `gap` the first column of every strip but the first is cleared. Selected
/// instances keep their id if they are too narrow for the cut (`k > width`,
/// or `2k - 1 > width` with a gap); each such case is reported in `notes`.
pub fn split_instances(grid: &LabelGrid, spec: &SplitSpec, seed: u64) -> Result<SplitOutcome> {
    if spec.fragments == 0 {
        return Err(Error::InvalidPerturbation("fragments must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&spec.fraction) {
        return Err(Error::InvalidPerturbation(format!(
            "split fraction {} outside [0, 1]",
            spec.fraction
        )));
    }
    let stats = grid.stats();
    let count = split_count(spec.fraction, stats.instance_count);
    if spec.fragments == 1 || count == 0 {
        return Ok(SplitOutcome {
            grid: grid.clone(),
            notes: Vec::new(),
        });
    }

    let mut order = stats.id_list.clone();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut chosen: Vec<u32> = order[..count].to_vec();
    chosen.sort_unstable();

    let (h, w) = grid.shape();
    let mut bounds: HashMap<u32, (usize, usize)> = HashMap::new();
    for (i, &l) in grid.labels().iter().enumerate() {
        if l != 0 {
            let x = i % w;
            let b = bounds.entry(l).or_insert((x, x));
            b.0 = b.0.min(x);
            b.1 = b.1.max(x);
        }
    }

    let k = spec.fragments;
    let mut notes = Vec::new();
    // id -> (left column, bounding-box width)
    let mut cuts: HashMap<u32, (usize, usize)> = HashMap::new();
    for &id in &chosen {
        let (left, right) = bounds[&id];
        let width = right - left + 1;
        let needed = if spec.gap { 2 * k - 1 } else { k };
        if width < needed {
            notes.push(format!(
                "instance {id} is {width} px wide, too narrow for {k} fragments; left unsplit"
            ));
            continue;
        }
        cuts.insert(id, (left, width));
    }

    // strip index of column x, or None for a removed gap column
    let strip_of = |left: usize, width: usize, x: usize| -> Option<usize> {
        let off = x - left;
        let j = (0..k).rev().find(|&j| j * width / k <= off).unwrap_or(0);
        if spec.gap && j > 0 && off == j * width / k {
            None
        } else {
            Some(j)
        }
    };

    let mut strip_sizes: BTreeMap<(u32, usize), u64> = BTreeMap::new();
    for (i, &l) in grid.labels().iter().enumerate() {
        if let Some(&(left, width)) = cuts.get(&l) {
            if let Some(j) = strip_of(left, width, i % w) {
                *strip_sizes.entry((l, j)).or_insert(0) += 1;
            }
        }
    }
    let mut next_id = grid.max_label();
    let mut fresh: HashMap<(u32, usize), u32> = HashMap::new();
    for &key in strip_sizes.keys() {
        next_id = next_id
            .checked_add(1)
            .ok_or_else(|| Error::InvalidPerturbation("ran out of 32-bit ids".into()))?;
        fresh.insert(key, next_id);
    }

    let labels = grid
        .labels()
        .iter()
        .enumerate()
        .map(|(i, &l)| match cuts.get(&l) {
            Some(&(left, width)) => match strip_of(left, width, i % w) {
                Some(j) => fresh[&(l, j)],
                None => 0,
            },
            None => l,
        })
        .collect();
    Ok(SplitOutcome {
        grid: LabelGrid::new(h, w, labels)?,
        notes,
    })
}

/// Places `count` background-only disks of `radius` with fresh ids.
pub fn add_ghosts(grid: &LabelGrid, count: usize, radius: usize, seed: u64) -> Result<LabelGrid> {
    if count == 0 {
        return Ok(grid.clone());
    }
    let (h, w) = grid.shape();
    let span = 2 * radius + 1;
    if span > h || span > w {
        return Err(Error::Placement(format!(
            "a radius-{radius} ghost does not fit in a {h}x{w} image"
        )));
    }
    let offsets = disk_offsets(radius);
    let mut labels = grid.labels().to_vec();
    let mut next_id = grid.max_label();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for g in 0..count {
        next_id = next_id
            .checked_add(1)
            .ok_or_else(|| Error::Placement("ran out of 32-bit ids".into()))?;
        let placed = (0..GHOST_PLACEMENT_ATTEMPTS).find_map(|_| {
            let cy = rng.random_range(radius..h - radius) as isize;
            let cx = rng.random_range(radius..w - radius) as isize;
            let pixels: Vec<usize> = offsets
                .iter()
                .map(|&(dy, dx)| (cy + dy) as usize * w + (cx + dx) as usize)
                .collect();
            pixels.iter().all(|&i| labels[i] == 0).then_some(pixels)
        });
        let pixels = placed.ok_or_else(|| {
            Error::Placement(format!(
                "no background room for ghost {} of {count} after {GHOST_PLACEMENT_ATTEMPTS} attempts",
                g + 1
            ))
        })?;
        for i in pixels {
            labels[i] = next_id;
        }
    }
    LabelGrid::new(h, w, labels)
}

/// Keeps, per instance, the `ceil(keep_fraction * area)` pixels nearest the
/// instance centroid (ties by row-major order).
pub fn partial_mask(grid: &LabelGrid, keep_fraction: f64) -> Result<LabelGrid> {
    if !(0.0..=1.0).contains(&keep_fraction) {
        return Err(Error::InvalidPerturbation(format!(
            "keep fraction {keep_fraction} outside [0, 1]"
        )));
    }
    let (h, w) = grid.shape();
    let mut members: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &l) in grid.labels().iter().enumerate() {
        if l != 0 {
            members.entry(l).or_default().push(i);
        }
    }
    let mut labels = vec![0u32; h * w];
    for (id, mut pixels) in members {
        let area = pixels.len();
        // products like 0.7 * 10 land a hair above the integer
        let keep = ((keep_fraction * area as f64 - 1e-9).ceil().max(0.0) as usize).min(area);
        let (sy, sx) = pixels.iter().fold((0.0, 0.0), |(sy, sx), &i| {
            (sy + (i / w) as f64, sx + (i % w) as f64)
        });
        let (cy, cx) = (sy / area as f64, sx / area as f64);
        let dist = |i: usize| {
            let (dy, dx) = ((i / w) as f64 - cy, (i % w) as f64 - cx);
            dy * dy + dx * dx
        };
        pixels.sort_by(|&a, &b| dist(a).total_cmp(&dist(b)).then(a.cmp(&b)));
        for &i in &pixels[..keep] {
            labels[i] = id;
        }
    }
    LabelGrid::new(h, w, labels)
}

/// One error family and its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Perturbation {
    Erode { iterations: usize },
    Dilate { iterations: usize },
    Split(SplitSpec),
    Ghost { count: usize, radius: usize },
    Partial { keep_fraction: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbSpec {
    pub perturbation: Perturbation,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PerturbOutcome {
    pub grid: LabelGrid,
    pub notes: Vec<String>,
}

pub fn apply(grid: &LabelGrid, spec: &PerturbSpec) -> Result<PerturbOutcome> {
    let plain = |grid| PerturbOutcome {
        grid,
        notes: Vec::new(),
    };
    Ok(match spec.perturbation {
        Perturbation::Erode { iterations } => {
            plain(morph_instances(grid, Morph::Erode, iterations))
        }
        Perturbation::Dilate { iterations } => {
            plain(morph_instances(grid, Morph::Dilate, iterations))
        }
        Perturbation::Split(split) => {
            let SplitOutcome { grid, notes } = split_instances(grid, &split, spec.seed)?;
            PerturbOutcome { grid, notes }
        }
        Perturbation::Ghost { count, radius } => plain(add_ghosts(grid, count, radius, spec.seed)?),
        Perturbation::Partial { keep_fraction } => plain(partial_mask(grid, keep_fraction)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{evaluate_all, SoftPqConfig};
    use crate::overlap::{iou_pairs, joint_histogram};

    /// 4-connected foreground components, ignoring label values.
    fn component_count(grid: &LabelGrid) -> usize {
        let (h, w) = grid.shape();
        let mut seen = vec![false; h * w];
        let mut count = 0;
        for start in 0..h * w {
            if seen[start] || grid.labels()[start] == 0 {
                continue;
            }
            count += 1;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(i) = stack.pop() {
                let (y, x) = (i / w, i % w);
                let mut visit = |j: usize| {
                    if !seen[j] && grid.labels()[j] != 0 {
                        seen[j] = true;
                        stack.push(j);
                    }
                };
                if y > 0 {
                    visit(i - w);
                }
                if y + 1 < h {
                    visit(i + w);
                }
                if x > 0 {
                    visit(i - 1);
                }
                if x + 1 < w {
                    visit(i + 1);
                }
            }
        }
        count
    }

    /// Per-pixel erosion straight from the definition, one instance at a time.
    fn naive_erode(grid: &LabelGrid, iterations: usize) -> LabelGrid {
        let (h, w) = grid.shape();
        let mut g = grid.clone();
        for _ in 0..iterations {
            let mut out = vec![0u32; h * w];
            for y in 0..h {
                for x in 0..w {
                    let l = g.get(y, x);
                    let inside = |yy: isize, xx: isize| {
                        yy >= 0
                            && xx >= 0
                            && (yy as usize) < h
                            && (xx as usize) < w
                            && g.get(yy as usize, xx as usize) == l
                    };
                    let (yi, xi) = (y as isize, x as isize);
                    if l != 0
                        && inside(yi - 1, xi)
                        && inside(yi + 1, xi)
                        && inside(yi, xi - 1)
                        && inside(yi, xi + 1)
                    {
                        out[y * w + x] = l;
                    }
                }
            }
            g = LabelGrid::new(h, w, out).unwrap();
        }
        g
    }

    fn single_disk(radius: usize) -> LabelGrid {
        make_disk_grid(&DiskGridSpec {
            rows: 1,
            cols: 1,
            radius,
            spacing: 2 * radius + 3,
        })
        .unwrap()
    }

    #[test]
    fn default_disk_grid_has_25_components() {
        let g = make_disk_grid(&DiskGridSpec::default()).unwrap();
        let s = g.stats();
        assert_eq!(s.instance_count, 25);
        assert_eq!(component_count(&g), 25);
        assert_eq!(s.id_list, (1..=25).collect::<Vec<_>>());
        let area = s.areas[&1];
        assert!(s.areas.values().all(|&a| a == area));
        assert_eq!(g.shape(), (256, 256));
    }

    #[test]
    fn single_disk_area_is_lattice_count() {
        for r in [0usize, 1, 5, 18] {
            let g = single_disk(r);
            let ri = r as i64;
            let lattice = (-ri..=ri)
                .flat_map(|y| (-ri..=ri).map(move |x| (y, x)))
                .filter(|(y, x)| y * y + x * x <= ri * ri)
                .count() as u64;
            assert_eq!(g.stats().areas[&1], lattice);
        }
    }

    #[test]
    fn disk_spec_rejects_touching_disks() {
        let spec = DiskGridSpec {
            spacing: 36,
            ..DiskGridSpec::default()
        };
        assert!(make_disk_grid(&spec).is_err());
    }

    #[test]
    fn erode_zero_is_identity_and_square_shrinks_to_center() {
        let g = LabelGrid::from_rows(&[
            [0, 0, 0, 0, 0],
            [0, 3, 3, 3, 0],
            [0, 3, 3, 3, 0],
            [0, 3, 3, 3, 0],
            [0, 0, 0, 0, 0],
        ])
        .unwrap();
        assert_eq!(morph_instances(&g, Morph::Erode, 0), g);
        let e = morph_instances(&g, Morph::Erode, 1);
        assert_eq!(e.stats().areas, BTreeMap::from([(3, 1)]));
        assert_eq!(e.get(2, 2), 3);
    }

    #[test]
    fn erosion_matches_naive_oracle_on_disks() {
        let g = make_disk_grid(&DiskGridSpec {
            rows: 2,
            cols: 2,
            radius: 6,
            spacing: 15,
        })
        .unwrap();
        for it in 0..=8 {
            assert_eq!(
                morph_instances(&g, Morph::Erode, it),
                naive_erode(&g, it),
                "iteration {it}"
            );
        }
    }

    #[test]
    fn radius_r_disk_vanishes_after_r_plus_one_erosions() {
        for r in [1usize, 4, 18] {
            let g = single_disk(r);
            let after_r = morph_instances(&g, Morph::Erode, r);
            assert_eq!(after_r, naive_erode(&g, r));
            // the diamond of L1 radius r fits in the disk, so the center survives r steps
            assert_eq!(after_r.stats().foreground(), 1);
            assert!(morph_instances(&g, Morph::Erode, r + 1).is_empty());
        }
    }

    #[test]
    fn erosion_touching_instances_separates_them() {
        let g = LabelGrid::from_rows(&[[1, 1, 1, 2, 2, 2]; 3]).unwrap();
        let e = morph_instances(&g, Morph::Erode, 1);
        assert_eq!(e.stats().areas, BTreeMap::from([(1, 1), (2, 1)]));
    }

    #[test]
    fn dilation_conflicts_go_to_smaller_id() {
        let g = LabelGrid::from_rows(&[[2, 0, 1]]).unwrap();
        let d = morph_instances(&g, Morph::Dilate, 1);
        assert_eq!(d, LabelGrid::from_rows(&[[2, 1, 1]]).unwrap());
        let g = LabelGrid::from_rows(&[[0, 0, 0], [0, 4, 0], [0, 0, 0]]).unwrap();
        let d = morph_instances(&g, Morph::Dilate, 1);
        assert_eq!(d.stats().areas[&4], 5);
        assert_eq!(morph_instances(&g, Morph::Dilate, 2).stats().areas[&4], 9);
    }

    #[test]
    fn split_no_ops() {
        let g = make_disk_grid(&DiskGridSpec::default()).unwrap();
        for (fragments, fraction) in [(1, 1.0), (3, 0.0)] {
            let out = split_instances(
                &g,
                &SplitSpec {
                    fragments,
                    fraction,
                    gap: true,
                },
                7,
            )
            .unwrap();
            assert_eq!(out.grid, g);
        }
    }

    #[test]
    fn full_split_without_gap_doubles_and_partitions() {
        let g = make_disk_grid(&DiskGridSpec::default()).unwrap();
        let out = split_instances(
            &g,
            &SplitSpec {
                fragments: 2,
                fraction: 1.0,
                gap: false,
            },
            1,
        )
        .unwrap();
        assert_eq!(out.grid.stats().instance_count, 50);
        assert!(out.notes.is_empty());
        let fg = |g: &LabelGrid| g.labels().iter().map(|&l| l != 0).collect::<Vec<_>>();
        assert_eq!(fg(&out.grid), fg(&g));
        assert!(out.grid.stats().id_list.iter().all(|&id| id > 25));
    }

    #[test]
    fn full_split_with_gap_kills_pq_but_not_softpq() {
        let g = make_disk_grid(&DiskGridSpec::default()).unwrap();
        let out = split_instances(
            &g,
            &SplitSpec {
                fragments: 2,
                fraction: 1.0,
                gap: true,
            },
            1,
        )
        .unwrap();
        let ious = iou_pairs(&joint_histogram(&g, &out.grid).unwrap());
        assert_eq!(ious.len(), 50);
        assert!(ious.iter().all(|e| e.iou < 0.5));
        let r = evaluate_all(&g, &out.grid, &SoftPqConfig::default()).unwrap();
        assert_eq!(r.pq, 0.0);
        assert!(r.softpq > 0.0);
    }

    #[test]
    fn partial_split_selection_is_seeded() {
        let g = make_disk_grid(&DiskGridSpec::default()).unwrap();
        let spec = SplitSpec {
            fragments: 3,
            fraction: 0.4,
            gap: false,
        };
        let a = split_instances(&g, &spec, 11).unwrap();
        let b = split_instances(&g, &spec, 11).unwrap();
        assert_eq!(a, b);
        // 10 of 25 split into 3: 15 untouched + 30 fragments
        assert_eq!(a.grid.stats().instance_count, 45);
        assert_eq!(split_count(0.5, 25), 13);
        assert_eq!(split_count(0.2, 25), 5);
    }

    #[test]
    fn narrow_instances_are_left_unsplit() {
        let g = LabelGrid::from_rows(&[[1, 1, 0, 2], [1, 1, 0, 2]]).unwrap();
        let out = split_instances(
            &g,
            &SplitSpec {
                fragments: 2,
                fraction: 1.0,
                gap: false,
            },
            0,
        )
        .unwrap();
        assert_eq!(out.notes.len(), 1);
        assert!(out.notes[0].contains("instance 2"));
        assert_eq!(out.grid.stats().instance_count, 3);
        assert_eq!(out.grid.get(0, 3), 2);
    }

    #[test]
    fn split_rejects_bad_parameters() {
        let g = LabelGrid::from_rows(&[[1]]).unwrap();
        let bad = |fragments, fraction| {
            split_instances(
                &g,
                &SplitSpec {
                    fragments,
                    fraction,
                    gap: false,
                },
                0,
            )
            .is_err()
        };
        assert!(bad(0, 0.5));
        assert!(bad(2, 1.5));
    }

    #[test]
    fn ghosts_land_on_background() {
        let g = make_disk_grid(&DiskGridSpec::default()).unwrap();
        assert_eq!(add_ghosts(&g, 0, 5, 3).unwrap(), g);
        let ghosted = add_ghosts(&g, 3, 5, 3).unwrap();
        assert_eq!(ghosted.stats().instance_count, 28);
        let m = joint_histogram(&g, &ghosted).unwrap();
        for ghost in 26..=28 {
            assert!(m.pairs.keys().all(|&(_, p)| p != ghost));
        }
        assert_eq!(ghosted, add_ghosts(&g, 3, 5, 3).unwrap());
    }

    #[test]
    fn ghosts_add_false_positives_only() {
        let g = make_disk_grid(&DiskGridSpec::default()).unwrap();
        let pred = morph_instances(&g, Morph::Erode, 2);
        let ghosted = add_ghosts(&pred, 3, 5, 9).unwrap();
        let cfg = SoftPqConfig::default();
        let before = evaluate_all(&g, &pred, &cfg).unwrap();
        let after = evaluate_all(&g, &ghosted, &cfg).unwrap();
        assert_eq!(after.fp, before.fp + 3);
        assert_eq!(after.per_anchor_modified, before.per_anchor_modified);
        assert!(after.rq_f1 < before.rq_f1);
        assert!(after.softpq < before.softpq);
    }

    #[test]
    fn ghost_without_room_fails() {
        let g = LabelGrid::new(5, 5, vec![1; 25]).unwrap();
        assert!(matches!(add_ghosts(&g, 1, 1, 0), Err(Error::Placement(_))));
        assert!(matches!(add_ghosts(&g, 1, 4, 0), Err(Error::Placement(_))));
    }

    #[test]
    fn partial_mask_fractions() {
        let g = single_disk(18);
        assert_eq!(partial_mask(&g, 1.0).unwrap(), g);
        assert!(partial_mask(&g, 0.0).unwrap().is_empty());
        assert!(partial_mask(&g, 1.5).is_err());

        let half = partial_mask(&g, 0.5).unwrap();
        let area = g.stats().areas[&1];
        let kept = half.stats().areas[&1];
        assert_eq!(kept, area.div_ceil(2));
        // kept pixels are a subset, so IoU is kept / area
        let m = joint_histogram(&g, &half).unwrap();
        assert_eq!(m.intersection(1, 1), kept);
        assert_eq!(m.iou(1, 1), kept as f64 / area as f64);
    }

    #[test]
    fn apply_dispatches() {
        let g = make_disk_grid(&DiskGridSpec::default()).unwrap();
        let spec = PerturbSpec {
            perturbation: Perturbation::Erode { iterations: 0 },
            seed: 0,
        };
        assert_eq!(apply(&g, &spec).unwrap().grid, g);
        let spec = PerturbSpec {
            perturbation: Perturbation::Split(SplitSpec {
                fragments: 2,
                fraction: 1.0,
                gap: false,
            }),
            seed: 5,
        };
        assert_eq!(apply(&g, &spec).unwrap().grid.stats().instance_count, 50);
    }
}
