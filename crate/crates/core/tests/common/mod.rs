//! Fuzz inputs and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use softpq::LabelGrid;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random rectangles painted over background.
pub fn random_grid(rng: &mut ChaCha8Rng, h: usize, w: usize, max_id: u32) -> LabelGrid {
    let mut labels = vec![0u32; h * w];
    for _ in 0..rng.random_range(0..=6) {
        let id = rng.random_range(1..=max_id);
        let (y0, x0) = (rng.random_range(0..h), rng.random_range(0..w));
        let (y1, x1) = (rng.random_range(y0..h), rng.random_range(x0..w));
        for y in y0..=y1 {
            for x in x0..=x1 {
                labels[y * w + x] = id;
            }
        }
    }
    LabelGrid::new(h, w, labels).unwrap()
}

fn map_labels(g: &LabelGrid, f: impl Fn(usize, u32) -> u32) -> LabelGrid {
    let labels = g
        .labels()
        .iter()
        .enumerate()
        .map(|(i, &l)| f(i, l))
        .collect();
    LabelGrid::new(g.height(), g.width(), labels).unwrap()
}

/// A ground truth and a prediction derived from it by one of several error
/// families (shift, split, merge, noise, erosion/dilation, or unrelated).
pub fn random_pair(rng: &mut ChaCha8Rng, max_dim: usize, max_id: u32) -> (LabelGrid, LabelGrid) {
    let h = rng.random_range(1..=max_dim);
    let w = rng.random_range(1..=max_dim);
    let gt = random_grid(rng, h, w, max_id);
    let pred = match rng.random_range(0..7) {
        0 => random_grid(rng, h, w, max_id),
        1 => {
            let (dy, dx) = (rng.random_range(-3i64..=3), rng.random_range(-3i64..=3));
            map_labels(&gt, |i, _| {
                let (y, x) = ((i / w) as i64 - dy, (i % w) as i64 - dx);
                if y < 0 || x < 0 || y >= h as i64 || x >= w as i64 {
                    0
                } else {
                    gt.get(y as usize, x as usize)
                }
            })
        }
        2 => {
            let cut = rng.random_range(0..w);
            let fresh: Vec<u32> = (0..=max_id).map(|_| rng.random_range(1..=max_id)).collect();
            map_labels(&gt, |i, l| {
                if l != 0 && i % w >= cut && l % 2 == 0 {
                    fresh[l as usize]
                } else {
                    l
                }
            })
        }
        3 => {
            let target: Vec<u32> = (0..=max_id).map(|_| rng.random_range(1..=max_id)).collect();
            map_labels(&gt, |_, l| if l == 0 { 0 } else { target[l as usize] })
        }
        4 => {
            let noise: Vec<(bool, u32)> = (0..h * w)
                .map(|_| (rng.random_bool(0.15), rng.random_range(0..=max_id)))
                .collect();
            map_labels(&gt, |i, l| if noise[i].0 { noise[i].1 } else { l })
        }
        5 => {
            let kind = if rng.random_bool(0.5) {
                softpq::perturb::Morph::Erode
            } else {
                softpq::perturb::Morph::Dilate
            };
            softpq::perturb::morph_instances(&gt, kind, rng.random_range(0..3))
        }
        _ => gt.clone(),
    };
    (gt, pred)
}

/// Nonzero ids in a grid.
pub fn ids(g: &LabelGrid) -> BTreeSet<u32> {
    g.labels().iter().copied().filter(|&l| l != 0).collect()
}

/// Per-pair intersection counts by scanning the whole image once per pair.
pub fn naive_intersections(gt: &LabelGrid, pred: &LabelGrid) -> BTreeMap<(u32, u32), u64> {
    let mut out = BTreeMap::new();
    for g in ids(gt) {
        for p in ids(pred) {
            let n = gt
                .labels()
                .iter()
                .zip(pred.labels())
                .filter(|(&a, &b)| a == g && b == p)
                .count() as u64;
            if n > 0 {
                out.insert((g, p), n);
            }
        }
    }
    out
}

pub fn naive_area(g: &LabelGrid, id: u32) -> u64 {
    g.labels().iter().filter(|&&l| l == id).count() as u64
}

/// IoU of every overlapping pair, from naive counts.
pub fn naive_ious(gt: &LabelGrid, pred: &LabelGrid) -> BTreeMap<(u32, u32), f64> {
    naive_intersections(gt, pred)
        .into_iter()
        .map(|((g, p), inter)| {
            let union = naive_area(gt, g) + naive_area(pred, p) - inter;
            ((g, p), inter as f64 / union as f64)
        })
        .collect()
}

/// Applies an id permutation (background fixed).
pub fn permute_ids(g: &LabelGrid, perm: &BTreeMap<u32, u32>) -> LabelGrid {
    map_labels(g, |_, l| if l == 0 { 0 } else { perm[&l] })
}

pub fn render(g: &LabelGrid) -> String {
    g.rows()
        .map(|r| {
            r.iter()
                .map(|l| l.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect::<Vec<_>>()
        .join("\n")
}
