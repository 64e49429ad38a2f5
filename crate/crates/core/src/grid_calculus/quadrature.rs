use serde::{Deserialize, Serialize};

use super::grid::{Bounds, GridSpec, ScalarField};

/// Discretization rule for one-dimensional cumulative integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeRule {
    /// Second order; used for ordinary (pathwise) integrands.
    Trapezoid,
    /// Non-anticipating left endpoint; used for stochastic sums.
    Left,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    T,
    X,
}

/// Trapezoid approximation of the double integral of `f` over the grid rectangle.
pub fn integrate_2d(f: &ScalarField) -> f64 {
    integrate_lattice(f.grid(), |i, j| f.get(i, j))
}

/// Tensor trapezoid rule over the nodes of `grid` for an integrand given by node index.
pub fn integrate_lattice(grid: &GridSpec, f: impl Fn(usize, usize) -> f64) -> f64 {
    let (rows, cols) = grid.shape();
    let h = grid.h();
    let w = |k: usize, n: usize| if k == 0 || k + 1 == n { 0.5 } else { 1.0 };
    let mut total = 0.0;
    for i in 0..rows {
        let wi = w(i, rows);
        let mut row = 0.0;
        for j in 0..cols {
            row += w(j, cols) * f(i, j);
        }
        total += wi * row;
    }
    total * h * h
}

/// Cumulative integral of samples `f` with spacing `h`; entry `k` approximates the
/// integral from the first node up to node `k`, so the output has the input's length
/// and starts at zero.
pub fn integrate_time(f: &[f64], h: f64, rule: TimeRule) -> Vec<f64> {
    let mut out = Vec::with_capacity(f.len());
    let mut acc = 0.0;
    if f.is_empty() {
        return out;
    }
    out.push(0.0);
    for k in 1..f.len() {
        acc += match rule {
            TimeRule::Trapezoid => 0.5 * h * (f[k - 1] + f[k]),
            TimeRule::Left => h * f[k - 1],
        };
        out.push(acc);
    }
    out
}

/// Trapezoid integral over all samples.
pub fn trapezoid(f: &[f64], h: f64) -> f64 {
    match f.len() {
        0 | 1 => 0.0,
        n => h * (0.5 * (f[0] + f[n - 1]) + f[1..n - 1].iter().sum::<f64>()),
    }
}

/// Composite Simpson rule on `[lo, hi]` with `n` (rounded up to even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let n = (n.max(2) + 1) & !1;
    let h = (hi - lo) / n as f64;
    let mut acc = f(lo) + f(hi);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(lo + k as f64 * h);
    }
    acc * h / 3.0
}

/// Default finite-difference step for a lattice of step `h`.
pub fn default_fd_step(h: f64) -> f64 {
    f64::max(1e-5, h * h)
}

/// Second-order derivative estimate of `f` along `axis` at `point`.
///
/// Uses the symmetric quotient in the interior; when `bounds` is given and the stencil
/// would leave it, switches to the one-sided three-point formula.
pub fn central_diff(
    f: impl Fn(f64, f64) -> f64,
    point: (f64, f64),
    axis: Axis,
    h_fd: f64,
    bounds: Option<Bounds>,
) -> f64 {
    let (t, x) = point;
    let along = |s: f64| match axis {
        Axis::T => f(s, x),
        Axis::X => f(t, s),
    };
    let (p, range) = match axis {
        Axis::T => (t, bounds.map(|b| b.t)),
        Axis::X => (x, bounds.map(|b| b.x)),
    };
    derivative_1d(along, p, h_fd, range)
}

/// One-dimensional version of [`central_diff`].
pub fn derivative_1d(f: impl Fn(f64) -> f64, p: f64, h_fd: f64, range: Option<(f64, f64)>) -> f64 {
    match range {
        Some((lo, _)) if p - h_fd < lo => {
            (-3.0 * f(p) + 4.0 * f(p + h_fd) - f(p + 2.0 * h_fd)) / (2.0 * h_fd)
        }
        Some((_, hi)) if p + h_fd > hi => {
            (3.0 * f(p) - 4.0 * f(p - h_fd) + f(p - 2.0 * h_fd)) / (2.0 * h_fd)
        }
        _ => (f(p + h_fd) - f(p - h_fd)) / (2.0 * h_fd),
    }
}
