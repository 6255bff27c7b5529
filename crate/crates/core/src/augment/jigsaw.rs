use ndarray::{s, Array3, Array4, Axis};
use rand::seq::SliceRandom;

use super::AugmentError;
use crate::datasets::RasterSample;
use crate::rng;

/// A shuffled m×n puzzle.
///
/// `positions[s]` is the true row-major grid cell of the patch in slot `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct JigsawInstance {
    pub patches: Array4<f32>,
    pub positions: Vec<usize>,
    pub grid: (usize, usize),
    pub gap: usize,
}

/// Uniform random permutation of `0..cells`, deterministic in `seed`.
pub fn shuffled_positions(cells: usize, seed: u64) -> Vec<usize> {
    let mut p: Vec<usize> = (0..cells).collect();
    p.shuffle(&mut rng::rng_str(seed, "jigsaw"));
    p
}

/// Cuts the sample row-major into m×n cells, trims `gap` pixels from every cell
/// edge and shuffles the patches.
pub fn make_jigsaw(
    sample: &RasterSample,
    grid: (usize, usize),
    gap: usize,
    seed: u64,
) -> Result<JigsawInstance, AugmentError> {
    let (c, h, w) = sample.shape();
    let (m, n) = grid;
    if m == 0 || n == 0 || h < m * (2 * gap + 1) || w < n * (2 * gap + 1) {
        return Err(AugmentError::GridTooLarge { m, n, gap, h, w });
    }
    let (cell_h, cell_w) = (h / m, w / n);
    let (ph, pw) = (cell_h - 2 * gap, cell_w - 2 * gap);
    let positions = shuffled_positions(m * n, rng::derive_str(seed, &sample.id));
    let mut patches = Array4::<f32>::zeros((m * n, c, ph, pw));
    for (slot, &cell) in positions.iter().enumerate() {
        let (r, col) = (cell / n, cell % n);
        let top = r * cell_h + gap;
        let left = col * cell_w + gap;
        patches
            .index_axis_mut(Axis(0), slot)
            .assign(&sample.pixels.slice(s![.., top..top + ph, left..left + pw]));
    }
    Ok(JigsawInstance {
        patches,
        positions,
        grid,
        gap,
    })
}

/// Places every patch at its recorded cell. Exact inverse of [`make_jigsaw`] when
/// `gap = 0` and the image divides evenly into the grid.
pub fn reassemble(instance: &JigsawInstance) -> Result<Array3<f32>, AugmentError> {
    let (m, n) = instance.grid;
    let (count, c, ph, pw) = instance.patches.dim();
    if count != m * n || instance.positions.len() != count {
        return Err(AugmentError::ShapeMismatch(format!(
            "{count} patches and {} positions for a {m}x{n} grid",
            instance.positions.len()
        )));
    }
    let (cell_h, cell_w) = (ph + 2 * instance.gap, pw + 2 * instance.gap);
    let mut out = Array3::<f32>::zeros((c, m * cell_h, n * cell_w));
    for (slot, &cell) in instance.positions.iter().enumerate() {
        if cell >= count {
            return Err(AugmentError::ShapeMismatch(format!("position {cell} outside the grid")));
        }
        let top = (cell / n) * cell_h + instance.gap;
        let left = (cell % n) * cell_w + instance.gap;
        out.slice_mut(s![.., top..top + ph, left..left + pw])
            .assign(&instance.patches.index_axis(Axis(0), slot));
    }
    Ok(out)
}
