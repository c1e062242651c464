//! Grids of forest output over one or two input dimensions, rendered as
//! grayscale PGM images (darker means larger) and CSV tables.

use smoothforest_core::forest::Forest;
use smoothforest_core::smoothing::{PerturbationSpec, SmoothForest};

use crate::error::{IoError, Result};

/// Perturbation scales of the default sweep; 0 means the exact forest.
pub const DEFAULT_SIGMAS: [f64; 4] = [0.0, 0.05, 0.10, 0.15];

/// Sample positions along each axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub resolution: usize,
    pub lower: f64,
    pub upper: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { resolution: 200, lower: 0.0, upper: 1.0 }
    }
}

impl GridSpec {
    /// Pixel centres from `lower` to `upper`.
    pub fn coords(&self) -> Vec<f64> {
        let step = (self.upper - self.lower) / self.resolution as f64;
        (0..self.resolution).map(|i| self.lower + (i as f64 + 0.5) * step).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.resolution == 0 || self.lower.partial_cmp(&self.upper) != Some(core::cmp::Ordering::Less) {
            return Err(IoError::Core(smoothforest_core::Error::InvalidArgument(format!(
                "grid needs resolution >= 1 and lower < upper, got {self:?}"
            ))));
        }
        Ok(())
    }
}

/// Values of output component 0, `grid[row][col]`.
///
/// For a 2-D forest `row` indexes `x_1` from high to low (image orientation)
/// and `col` indexes `x_0`; a 1-D forest yields a single row.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub sigma: f64,
    pub xs: Vec<f64>,
    /// Empty for a 1-D profile.
    pub ys: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

pub fn evaluate_grid(forest: &Forest, sigma: f64, spec: &GridSpec) -> Result<Grid> {
    spec.validate()?;
    let dim = forest.input_dim();
    if !(1..=2).contains(&dim) {
        return Err(IoError::Core(smoothforest_core::Error::InvalidArgument(format!(
            "heatmaps need a forest over 1 or 2 inputs, this one has {dim}"
        ))));
    }
    let smooth = if sigma > 0.0 { Some((SmoothForest::new(forest)?, PerturbationSpec::new(sigma)?)) } else { None };
    let eval = |x: &[f64]| -> Result<f64> {
        Ok(match &smooth {
            Some((sf, spec)) => sf.evaluate(forest, x, *spec)?.value[0],
            None => forest.evaluate(x)?[0],
        })
    };
    let xs = spec.coords();
    if dim == 1 {
        let row = xs.iter().map(|&x| eval(&[x])).collect::<Result<Vec<_>>>()?;
        return Ok(Grid { sigma, xs, ys: Vec::new(), values: vec![row] });
    }
    let mut ys = spec.coords();
    ys.reverse();
    let values = ys
        .iter()
        .map(|&y| xs.iter().map(|&x| eval(&[x, y])).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(Grid { sigma, xs, ys, values })
}

/// Sum of absolute differences between horizontally and vertically adjacent cells.
pub fn total_variation(values: &[Vec<f64>]) -> f64 {
    let mut tv = 0.0;
    for (r, row) in values.iter().enumerate() {
        for c in 0..row.len() {
            if c + 1 < row.len() {
                tv += (row[c + 1] - row[c]).abs();
            }
            if let Some(next) = values.get(r + 1) {
                tv += (next[c] - row[c]).abs();
            }
        }
    }
    tv
}

/// Plain (P2) graymap scaled linearly over the grid's range; the maximum is
/// black. A constant grid is uniformly white.
pub fn to_pgm(grid: &Grid) -> String {
    let (lo, hi) = grid
        .values
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let width = grid.values.first().map_or(0, Vec::len);
    let mut out = format!("P2\n{} {}\n255\n", width, grid.values.len());
    for row in &grid.values {
        let line: Vec<String> = row
            .iter()
            .map(|&v| {
                let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
                (255.0 - (255.0 * t).round()).to_string()
            })
            .collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// `x,value` rows for a profile, `x,y,value` rows for a 2-D grid.
pub fn to_csv(grid: &Grid) -> String {
    let mut out = String::new();
    if grid.ys.is_empty() {
        out.push_str("x,value\n");
        for (x, v) in grid.xs.iter().zip(&grid.values[0]) {
            out.push_str(&format!("{x},{v}\n"));
        }
    } else {
        out.push_str("x,y,value\n");
        for (y, row) in grid.ys.iter().zip(&grid.values) {
            for (x, v) in grid.xs.iter().zip(row) {
                out.push_str(&format!("{x},{y},{v}\n"));
            }
        }
    }
    out
}
