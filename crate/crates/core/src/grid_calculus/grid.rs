use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed when testing whether a horizon is an integer multiple of the step.
fn divisibility_slack(ratio: f64) -> f64 {
    64.0 * f64::EPSILON * ratio.max(1.0)
}

/// Returns `Some(n)` when `span / h` is an integer `n` up to rounding.
pub(crate) fn steps_in(span: f64, h: f64) -> Option<usize> {
    let ratio = span / h;
    let n = ratio.round();
    if (ratio - n).abs() <= divisibility_slack(ratio) && n >= 0.0 {
        Some(n as usize)
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridParams {
    pub t_max: f64,
    pub x_max: f64,
    pub h: f64,
}

/// Uniform space-time lattice with a single step `h` on both axes.
///
/// The Brownian sheet that drives the noise lives on `[0, t_max] x [0, t_max + x_max]`,
/// so that every shifted diagonal point `(t_i, t_i + x_j)` is itself a lattice node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridParams", into = "GridParams")]
pub struct GridSpec {
    t_max: f64,
    x_max: f64,
    h: f64,
    n_t: usize,
    n_x: usize,
    sheet_x_max: f64,
}

impl TryFrom<GridParams> for GridSpec {
    type Error = Error;

    fn try_from(p: GridParams) -> Result<Self> {
        GridSpec::new(p.t_max, p.x_max, p.h)
    }
}

impl From<GridSpec> for GridParams {
    fn from(g: GridSpec) -> Self {
        GridParams {
            t_max: g.t_max,
            x_max: g.x_max,
            h: g.h,
        }
    }
}

/// Builds a validated grid. Fails when `h` does not divide either horizon.
pub fn make_grid(t_max: f64, x_max: f64, h: f64) -> Result<GridSpec> {
    GridSpec::new(t_max, x_max, h)
}

impl GridSpec {
    pub fn new(t_max: f64, x_max: f64, h: f64) -> Result<Self> {
        for (name, v) in [("t_max", t_max), ("x_max", x_max), ("h", h)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidGrid(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        let n_t = steps_in(t_max, h).filter(|&n| n > 0).ok_or(Error::NonDivisibleStep {
            axis: "t",
            horizon: t_max,
            h,
        })?;
        let n_x = steps_in(x_max, h).filter(|&n| n > 0).ok_or(Error::NonDivisibleStep {
            axis: "x",
            horizon: x_max,
            h,
        })?;
        Ok(GridSpec {
            t_max,
            x_max,
            h,
            n_t,
            n_x,
            sheet_x_max: t_max + x_max,
        })
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Number of time steps; there are `n_t + 1` time nodes.
    pub fn n_t(&self) -> usize {
        self.n_t
    }

    /// Number of space steps; there are `n_x + 1` space nodes.
    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn sheet_x_max(&self) -> f64 {
        self.sheet_x_max
    }

    /// Number of space steps of the sheet domain `[0, t_max + x_max]`.
    pub fn sheet_n_x(&self) -> usize {
        self.n_t + self.n_x
    }

    pub fn t(&self, i: usize) -> f64 {
        i as f64 * self.h
    }

    pub fn x(&self, j: usize) -> f64 {
        j as f64 * self.h
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_t + 1, self.n_x + 1)
    }

    /// Lattice index of a coordinate, rejecting off-lattice or out-of-range values.
    pub fn lattice_index(&self, v: f64, max_steps: usize, what: &str) -> Result<usize> {
        let idx = steps_in(v, self.h).ok_or_else(|| Error::Misaligned {
            what: format!("{what} = {v}"),
            h: self.h,
        })?;
        if v < 0.0 || idx > max_steps {
            return Err(Error::InvalidArgument(format!(
                "{what} = {v} lies outside [0, {}]",
                max_steps as f64 * self.h
            )));
        }
        Ok(idx)
    }

    pub fn t_index(&self, t: f64) -> Result<usize> {
        self.lattice_index(t, self.n_t, "t")
    }

    pub fn x_index(&self, x: f64) -> Result<usize> {
        self.lattice_index(x, self.n_x, "x")
    }

    /// Grid with step `factor * h` over the same horizons.
    pub fn coarsen(&self, factor: usize) -> Result<GridSpec> {
        if factor == 0 || !self.n_t.is_multiple_of(factor) || !self.n_x.is_multiple_of(factor) {
            return Err(Error::InvalidArgument(format!(
                "coarsening factor {factor} does not divide the lattice ({} x {})",
                self.n_t, self.n_x
            )));
        }
        GridSpec::new(self.t_max, self.x_max, self.h * factor as f64)
    }

    /// True when both grids describe the same lattice (same step counts and horizons).
    pub fn same_lattice(&self, other: &GridSpec) -> bool {
        self.n_t == other.n_t
            && self.n_x == other.n_x
            && (self.t_max - other.t_max).abs() <= 1e-12 * self.t_max
            && (self.x_max - other.x_max).abs() <= 1e-12 * self.x_max
    }

    pub(crate) fn ensure_same(&self, other: &GridSpec) -> Result<()> {
        if self.same_lattice(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{}x{} (h={}) vs {}x{} (h={})",
                self.n_t, self.n_x, self.h, other.n_t, other.n_x, other.h
            )))
        }
    }

    /// Rectangle on which coefficients may be evaluated: characteristics through the
    /// grid reach `x` up to `t_max + x_max`.
    pub fn coefficient_bounds(&self) -> Bounds {
        Bounds {
            t: (0.0, self.t_max),
            x: (0.0, self.sheet_x_max),
        }
    }
}

/// Closed rectangle used to switch finite differences to one-sided stencils.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub t: (f64, f64),
    pub x: (f64, f64),
}

/// Read access to a real value at lattice node `(i, j)`.
pub trait LatticeField {
    fn at(&self, i: usize, j: usize) -> f64;
}

/// Real field sampled at the nodes of a [`GridSpec`], indexed `(i, j) <-> (t_i, x_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    values: Array2<f64>,
}

impl ScalarField {
    pub fn new(grid: GridSpec, values: Array2<f64>) -> Result<Self> {
        if values.dim() != grid.shape() {
            return Err(Error::GridMismatch(format!(
                "values have shape {:?}, grid needs {:?}",
                values.dim(),
                grid.shape()
            )));
        }
        if let Some(((i, j), _)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { i, j });
        }
        Ok(ScalarField { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        ScalarField {
            grid,
            values: Array2::zeros(grid.shape()),
        }
    }

    /// Samples `f(t, x)` at every node. Non-finite samples are rejected.
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let values = Array2::from_shape_fn(grid.shape(), |(i, j)| f(grid.t(i), grid.x(j)));
        ScalarField::new(grid, values)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }

    /// Values at time node `i` across all space nodes.
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.values.row(i).to_vec()
    }

    /// Values at space node `j` across all time nodes.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.column(j).to_vec()
    }

    /// Keeps every `factor`-th node in both directions.
    pub fn restrict(&self, factor: usize) -> Result<ScalarField> {
        let grid = self.grid.coarsen(factor)?;
        let values = self
            .values
            .slice(s![..;factor, ..;factor])
            .to_owned();
        ScalarField::new(grid, values)
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<ScalarField> {
        self.grid.ensure_same(&other.grid)?;
        let mut values = self.values.clone();
        values.zip_mut_with(&other.values, |a, &b| *a = f(*a, b));
        ScalarField::new(self.grid, values)
    }

    pub fn max_abs_diff(&self, other: &ScalarField) -> Result<f64> {
        self.grid.ensure_same(&other.grid)?;
        Ok(self
            .values
            .iter()
            .zip(other.values.iter())
            .fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs())))
    }
}

impl LatticeField for ScalarField {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }
}
