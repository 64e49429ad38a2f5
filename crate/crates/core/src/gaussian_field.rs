//! Brownian sheets as discrete Gaussian random measures on the lattice.
//!
//! A sheet is built from i.i.d. `N(0, h^2)` cell masses followed by a 2-D prefix sum,
//! which reproduces the exact finite-dimensional law of `B(t, x)` at lattice nodes.

use std::io::Write;
use std::sync::Arc;

use ndarray::{s, Array2};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid_calculus::{steps_in, GridSpec, LatticeField, ScalarField};
use crate::io::write_lattice_csv;
use crate::rng::rng_from_seed;
use crate::stats::covariance;

/// Realized Brownian sheet on `[0, T] x [0, T + X]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SheetSample {
    grid: GridSpec,
    values: Arc<Array2<f64>>,
    cell_increments: Array2<f64>,
    seed: u64,
}

fn prefix_sum(cells: &Array2<f64>) -> Array2<f64> {
    let (n, m) = cells.dim();
    let mut b = Array2::zeros((n + 1, m + 1));
    for i in 0..n {
        let mut row_acc = 0.0;
        for j in 0..m {
            row_acc += cells[[i, j]];
            b[[i + 1, j + 1]] = b[[i, j + 1]] + row_acc;
        }
    }
    b
}

/// Draws a sheet from `seed`. Identical `(grid, seed)` give bit-identical samples.
pub fn sample_sheet(grid: &GridSpec, seed: u64) -> SheetSample {
    let mut rng = rng_from_seed(seed);
    let h = grid.h();
    let cells = Array2::from_shape_simple_fn((grid.n_t(), grid.sheet_n_x()), || {
        let z: f64 = StandardNormal.sample(&mut rng);
        h * z
    });
    SheetSample::from_increments(*grid, cells, seed).expect("shape built from grid")
}

impl SheetSample {
    /// Builds a sheet from explicit cell masses of shape `(n_t, n_t + n_x)`.
    pub fn from_increments(grid: GridSpec, cells: Array2<f64>, seed: u64) -> Result<Self> {
        if cells.dim() != (grid.n_t(), grid.sheet_n_x()) {
            return Err(Error::GridMismatch(format!(
                "cell increments have shape {:?}, expected {:?}",
                cells.dim(),
                (grid.n_t(), grid.sheet_n_x())
            )));
        }
        let values = prefix_sum(&cells);
        Ok(SheetSample {
            grid,
            values: Arc::new(values),
            cell_increments: cells,
            seed,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Node values `B(t_i, x_j)` with `j` ranging over `[0, T + X]`.
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn cell_increments(&self) -> &Array2<f64> {
        &self.cell_increments
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }

    /// Sheet seen on the lattice with step `factor * h`. The coarse cell masses are the
    /// sums of the fine ones, so the realization is shared across resolutions.
    pub fn restrict(&self, factor: usize) -> Result<SheetSample> {
        let grid = self.grid.coarsen(factor)?;
        let values = self.values.slice(s![..;factor, ..;factor]).to_owned();
        let (n, m) = (grid.n_t(), grid.sheet_n_x());
        let cells = Array2::from_shape_fn((n, m), |(i, j)| {
            values[[i + 1, j + 1]] - values[[i, j + 1]] - values[[i + 1, j]] + values[[i, j]]
        });
        Ok(SheetSample {
            grid,
            values: Arc::new(values),
            cell_increments: cells,
            seed: self.seed,
        })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_lattice_csv(out, self.grid.h(), &self.values)
    }
}

impl LatticeField for SheetSample {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }
}

/// Grid-aligned planar rectangle `[t_lo, t_hi] x [x_lo, x_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RectRegion {
    pub t_lo: f64,
    pub t_hi: f64,
    pub x_lo: f64,
    pub x_hi: f64,
}

/// Lattice indices of a rectangle's corners.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RectIndices {
    pub i_lo: usize,
    pub i_hi: usize,
    pub j_lo: usize,
    pub j_hi: usize,
}

impl RectRegion {
    pub fn new(t_lo: f64, t_hi: f64, x_lo: f64, x_hi: f64) -> Result<Self> {
        if !(t_lo <= t_hi && x_lo <= x_hi) || [t_lo, x_lo].iter().any(|v| *v < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "rectangle [{t_lo}, {t_hi}] x [{x_lo}, {x_hi}] is not ordered in the quadrant"
            )));
        }
        Ok(RectRegion { t_lo, t_hi, x_lo, x_hi })
    }

    pub fn area(&self) -> f64 {
        (self.t_hi - self.t_lo) * (self.x_hi - self.x_lo)
    }

    pub fn intersect(&self, other: &RectRegion) -> Option<RectRegion> {
        let t_lo = self.t_lo.max(other.t_lo);
        let t_hi = self.t_hi.min(other.t_hi);
        let x_lo = self.x_lo.max(other.x_lo);
        let x_hi = self.x_hi.min(other.x_hi);
        (t_lo < t_hi && x_lo < x_hi).then_some(RectRegion { t_lo, t_hi, x_lo, x_hi })
    }

    /// Corner indices on the sheet lattice of `grid`; fails for off-lattice corners or
    /// rectangles leaving the sheet domain.
    pub fn indices(&self, grid: &GridSpec) -> Result<RectIndices> {
        let h = grid.h();
        let idx = |v: f64, what: &str, max: usize| -> Result<usize> {
            let k = steps_in(v, h).ok_or_else(|| Error::Misaligned {
                what: format!("rectangle {what} = {v}"),
                h,
            })?;
            if k > max {
                return Err(Error::InvalidArgument(format!("rectangle {what} = {v} outside the sheet domain")));
            }
            Ok(k)
        };
        Ok(RectIndices {
            i_lo: idx(self.t_lo, "t_lo", grid.n_t())?,
            i_hi: idx(self.t_hi, "t_hi", grid.n_t())?,
            j_lo: idx(self.x_lo, "x_lo", grid.sheet_n_x())?,
            j_hi: idx(self.x_hi, "x_hi", grid.sheet_n_x())?,
        })
    }
}

/// Random-measure mass of a grid-aligned rectangle, by inclusion-exclusion on `B`.
pub fn rect_measure(sheet: &SheetSample, r: &RectRegion) -> Result<f64> {
    let k = r.indices(&sheet.grid)?;
    Ok(rect_measure_idx(sheet, &k))
}

pub(crate) fn rect_measure_idx(sheet: &SheetSample, k: &RectIndices) -> f64 {
    let b = &sheet.values;
    b[[k.i_hi, k.j_hi]] - b[[k.i_lo, k.j_hi]] - b[[k.i_hi, k.j_lo]] + b[[k.i_lo, k.j_lo]]
}

/// Noise `W(t, x) = B(t, t + x)` read off the sheet at lattice nodes.
///
/// The path keeps a handle to the full sheet so that values along characteristics
/// `s -> B(s, t + x)` are also available.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalPath {
    grid: GridSpec,
    values: ScalarField,
    sheet: Arc<Array2<f64>>,
    seed: u64,
}

pub fn diagonal_noise(sheet: &SheetSample) -> DiagonalPath {
    let grid = sheet.grid;
    let b = &sheet.values;
    let values = Array2::from_shape_fn(grid.shape(), |(i, j)| b[[i, i + j]]);
    DiagonalPath {
        grid,
        values: ScalarField::new(grid, values).expect("sheet values are finite"),
        sheet: Arc::clone(&sheet.values),
        seed: sheet.seed,
    }
}

impl DiagonalPath {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `W(t_i, x_j)`.
    pub fn w(&self, i: usize, j: usize) -> f64 {
        self.values.get(i, j)
    }

    pub fn field(&self) -> &ScalarField {
        &self.values
    }

    /// `B(s_k, xi_m)`: the sheet at time node `k` and sheet column `m`. Along the
    /// characteristic through `(t_i, x_j)` the column is fixed at `m = i + j`.
    pub fn sheet_at(&self, k: usize, m: usize) -> f64 {
        self.sheet[[k, m]]
    }

    pub fn restrict(&self, factor: usize) -> Result<DiagonalPath> {
        let grid = self.grid.coarsen(factor)?;
        Ok(DiagonalPath {
            grid,
            values: self.values.restrict(factor)?,
            sheet: Arc::new(self.sheet.slice(s![..;factor, ..;factor]).to_owned()),
            seed: self.seed,
        })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_lattice_csv(out, self.grid.h(), self.values.values())
    }
}

impl LatticeField for DiagonalPath {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.values.get(i, j)
    }
}

/// Unbiased covariance across samples of the values at lattice nodes `p1` and `p2`.
pub fn empirical_covariance<F: LatticeField>(samples: &[F], p1: (usize, usize), p2: (usize, usize)) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: samples.len() });
    }
    let xs: Vec<f64> = samples.iter().map(|f| f.at(p1.0, p1.1)).collect();
    let ys: Vec<f64> = samples.iter().map(|f| f.at(p2.0, p2.1)).collect();
    covariance(&xs, &ys)
}
