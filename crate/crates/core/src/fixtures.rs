//! Small hand-checkable label grids.

use crate::labelgrid::LabelGrid;

/// 8×8 grid: one 4×4 ground-truth square (rows 2..=5, cols 2..=5) and a
/// prediction made of two 7-pixel fragments covering its left and right
/// halves, each missing one top corner pixel.
///
/// Both fragments have IoU 7/16 with the square, so nothing reaches 0.5.
pub fn two_fragment_fixture() -> (LabelGrid, LabelGrid) {
    let mut gt = vec![0u32; 64];
    let mut pred = vec![0u32; 64];
    for r in 2..=5 {
        for c in 2..=5 {
            gt[r * 8 + c] = 1;
            pred[r * 8 + c] = if c <= 3 { 1 } else { 2 };
        }
    }
    pred[2 * 8 + 2] = 0;
    pred[2 * 8 + 5] = 0;
    (
        LabelGrid::new(8, 8, gt).expect("8x8"),
        LabelGrid::new(8, 8, pred).expect("8x8"),
    )
}
