//! Constructive solutions.
//!
//! * [`solve_b_zero`]: `U_t = D W` with `b = 0`, obtained by differentiating the integral
//!   identity returned by [`theorem1_sides`] in `x`.
//! * [`solve_theorem2`]: closed form of `r_t - r_x = a (W_t - W_x) + c W` (the case
//!   `b = -a`), `r = a W + int W (a_x - a_t + c) ds + r0(t + x)`.
//! * [`solve_ito_form`]: the same solution written with a Wiener-Ito integral against the
//!   diagonal noise, `r = int a dB + int B (a_x + c) ds + r0(t + x)`.
//!
//! The time integrals can follow two traces through the noise, see [`NoiseTrace`].

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::diagnostics::existence_check;
use crate::error::{Error, Result};
use crate::gaussian_field::DiagonalPath;
use crate::grid_calculus::{
    default_fd_step, derivative_1d, integrate_time, CoefficientSet, GridSpec, Partial, PartialSource, ScalarField,
    TimeRule,
};
use crate::io::write_lattice_csv;

/// Absolute tolerance for the structural coefficient checks (`b = -a`, `b = 0`).
pub const STRUCTURE_TOL: f64 = 1e-12;

/// Path followed by the time integrals of the solution formulas.
///
/// `Characteristic` integrates along `s -> (s, t + x - s)`, on which the noise is
/// `B(s, t + x)`; this is the function that satisfies the weak form of
/// `r_t - r_x = D W`. `FixedOffset` integrates along `s -> (s, x)` with noise
/// `B(s, s + x)`; this is the per-maturity dynamics `dr = a dB^x + [...] dt`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseTrace {
    #[default]
    Characteristic,
    FixedOffset,
}

impl fmt::Display for NoiseTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseTrace::Characteristic => "characteristic",
            NoiseTrace::FixedOffset => "fixed_offset",
        })
    }
}

pub type CurveFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Built-in initial curves accepted in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CurveSpec {
    Flat { level: f64 },
    Linear { level: f64, slope: f64 },
    /// `beta0 + beta1 e^{-x/tau} + beta2 (x/tau) e^{-x/tau}`.
    NelsonSiegel { beta0: f64, beta1: f64, beta2: f64, tau: f64 },
    /// `sum_k coeffs[k] x^k`.
    Poly { coeffs: Vec<f64> },
}

impl Default for CurveSpec {
    fn default() -> Self {
        CurveSpec::NelsonSiegel {
            beta0: 0.04,
            beta1: -0.02,
            beta2: 0.01,
            tau: 1.5,
        }
    }
}

/// Initial curve `r0` on `[0, domain_max]`, optionally with its derivative.
#[derive(Clone)]
pub struct InitialCurve {
    r0: CurveFn,
    dr0: Option<CurveFn>,
    domain_max: f64,
}

impl fmt::Debug for InitialCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InitialCurve")
            .field("domain_max", &self.domain_max)
            .field("analytic_derivative", &self.dr0.is_some())
            .finish()
    }
}

impl InitialCurve {
    pub fn new(r0: impl Fn(f64) -> f64 + Send + Sync + 'static, domain_max: f64) -> Self {
        InitialCurve {
            r0: Arc::new(r0),
            dr0: None,
            domain_max,
        }
    }

    pub fn with_derivative(mut self, dr0: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.dr0 = Some(Arc::new(dr0));
        self
    }

    pub fn flat(level: f64) -> Self {
        InitialCurve::from_spec(&CurveSpec::Flat { level })
    }

    pub fn from_spec(spec: &CurveSpec) -> Self {
        match spec.clone() {
            CurveSpec::Flat { level } => InitialCurve::new(move |_| level, f64::INFINITY).with_derivative(|_| 0.0),
            CurveSpec::Linear { level, slope } => {
                InitialCurve::new(move |x| level + slope * x, f64::INFINITY).with_derivative(move |_| slope)
            }
            CurveSpec::NelsonSiegel { beta0, beta1, beta2, tau } => InitialCurve::new(
                move |x| {
                    let e = (-x / tau).exp();
                    beta0 + beta1 * e + beta2 * (x / tau) * e
                },
                f64::INFINITY,
            )
            .with_derivative(move |x| {
                let e = (-x / tau).exp();
                -beta1 * e / tau + beta2 * e * (1.0 - x / tau) / tau
            }),
            CurveSpec::Poly { coeffs } => {
                let d: Vec<f64> = coeffs.iter().enumerate().skip(1).map(|(k, c)| k as f64 * c).collect();
                InitialCurve::new(move |x| horner(&coeffs, x), f64::INFINITY).with_derivative(move |x| horner(&d, x))
            }
        }
    }

    pub fn domain_max(&self) -> f64 {
        self.domain_max
    }

    pub fn value(&self, s: f64) -> f64 {
        (self.r0)(s)
    }

    /// `r0'(s)`, from the closed form when present, otherwise by finite differences.
    pub fn derivative(&self, s: f64, h_fd: f64) -> f64 {
        match &self.dr0 {
            Some(d) => d(s),
            None => derivative_1d(|u| (self.r0)(u), s, h_fd, Some((0.0, self.domain_max))),
        }
    }

    /// Compares a supplied derivative against central differences on `[0, upto]`.
    pub fn check_derivative(&self, upto: f64, rel_tol: f64) -> Result<()> {
        if let Some(d) = &self.dr0 {
            for k in 0..=64 {
                let s = upto * k as f64 / 64.0;
                let fd = derivative_1d(|u| (self.r0)(u), s, 1e-5, Some((0.0, self.domain_max.min(upto))));
                if (fd - d(s)).abs() > rel_tol * (1.0 + fd.abs()) {
                    return Err(Error::InvalidArgument(format!(
                        "initial curve derivative at {s}: closed form {} vs finite difference {fd}",
                        d(s)
                    )));
                }
            }
        }
        Ok(())
    }

    fn ensure_covers(&self, grid: &GridSpec) -> Result<()> {
        let needed = grid.sheet_x_max();
        if self.domain_max < needed * (1.0 - 1e-12) {
            return Err(Error::CurveDomain {
                defined: self.domain_max,
                needed,
            });
        }
        Ok(())
    }
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formula {
    Theorem2,
    Ito,
    BZero,
    Transport,
    /// Single-driver forward-rate model, see `yield_curve::ms_simulate`.
    MusielaSondermann,
}

/// How a [`SolutionField`] was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub formula: Formula,
    pub trace: Option<NoiseTrace>,
    pub seed: Option<u64>,
    pub coefficients: String,
    pub partials: PartialSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolutionField {
    pub field: ScalarField,
    pub provenance: Provenance,
}

impl SolutionField {
    pub fn grid(&self) -> &GridSpec {
        self.field.grid()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.field.get(i, j)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_lattice_csv(out, self.grid().h(), self.field.values())
    }
}

/// Deterministic transport solution `r(t, x) = r0(t + x)`.
pub fn transport_solution(grid: &GridSpec, r0: &InitialCurve) -> Result<SolutionField> {
    r0.ensure_covers(grid)?;
    Ok(SolutionField {
        field: ScalarField::from_fn(*grid, |t, x| r0.value(t + x))?,
        provenance: Provenance {
            formula: Formula::Transport,
            trace: None,
            seed: None,
            coefficients: "none".into(),
            partials: PartialSource::Analytic,
        },
    })
}

/// Both sides of the integral identity satisfied by weak solutions of `U_t = D W`:
///
/// `int_0^x [U(t,y) - U(0,y)] dy
///    = int_0^t [bW(s,x) - bW(s,0)] ds + int_0^x [aW(t,y) - aW(0,y)] dy
///      + int_0^x int_0^t (a_t + b_x - c) W ds dy`,
///
/// evaluated at every lattice node with trapezoid quadrature.
#[derive(Debug, Clone, PartialEq)]
pub struct Theorem1Sides {
    pub lhs: ScalarField,
    pub rhs: ScalarField,
}

impl Theorem1Sides {
    /// `lhs - rhs` at every node.
    pub fn gap(&self) -> ScalarField {
        self.lhs.zip_map(&self.rhs, |l, r| l - r).expect("same grid")
    }
}

/// Cumulative trapezoid integral along `axis` of a lattice array.
fn cumulative(values: &Array2<f64>, h: f64, axis: usize) -> Array2<f64> {
    let mut out = Array2::zeros(values.dim());
    for (src, mut dst) in values.lanes(ndarray::Axis(axis)).into_iter().zip(out.lanes_mut(ndarray::Axis(axis))) {
        let lane: Vec<f64> = src.to_vec();
        for (d, v) in dst.iter_mut().zip(integrate_time(&lane, h, TimeRule::Trapezoid)) {
            *d = v;
        }
    }
    out
}

fn cumulative_rows(values: &Array2<f64>, h: f64) -> Array2<f64> {
    cumulative(values, h, 1)
}

fn cumulative_cols(values: &Array2<f64>, h: f64) -> Array2<f64> {
    cumulative(values, h, 0)
}

pub fn theorem1_sides(coeffs: &CoefficientSet, u: &ScalarField, w: &ScalarField) -> Result<Theorem1Sides> {
    u.grid().ensure_same(w.grid())?;
    let g = *u.grid();
    let h = g.h();
    let (rows, cols) = g.shape();
    let h_fd = default_fd_step(h);
    let bounds = Some(g.coefficient_bounds());
    let node = |i: usize, j: usize| (g.t(i), g.x(j));

    let du = Array2::from_shape_fn((rows, cols), |(i, j)| u.get(i, j) - u.get(0, j));
    let lhs = cumulative_rows(&du, h);

    let bw = Array2::from_shape_fn((rows, cols), |(i, j)| {
        let (t, x) = node(i, j);
        coeffs.b(t, x) * w.get(i, j)
    });
    let bw_t = cumulative_cols(&bw, h);
    let aw = Array2::from_shape_fn((rows, cols), |(i, j)| {
        let (t, x) = node(i, j);
        coeffs.a(t, x) * w.get(i, j)
    });
    let daw = Array2::from_shape_fn((rows, cols), |(i, j)| aw[[i, j]] - aw[[0, j]]);
    let aw_x = cumulative_rows(&daw, h);
    let q = Array2::from_shape_fn((rows, cols), |(i, j)| {
        let (t, x) = node(i, j);
        let k = coeffs.partial(Partial::DaDt, t, x, h_fd, bounds) + coeffs.partial(Partial::DbDx, t, x, h_fd, bounds)
            - coeffs.c(t, x);
        k * w.get(i, j)
    });
    let q_tx = cumulative_rows(&cumulative_cols(&q, h), h);

    let rhs = Array2::from_shape_fn((rows, cols), |(i, j)| bw_t[[i, j]] - bw_t[[i, 0]] + aw_x[[i, j]] + q_tx[[i, j]]);
    Ok(Theorem1Sides {
        lhs: ScalarField::new(g, lhs)?,
        rhs: ScalarField::new(g, rhs)?,
    })
}

/// `(LHS, RHS)` of the integral identity at lattice node `(t_index, x_index)`.
pub fn theorem1_identity_sides(
    coeffs: &CoefficientSet,
    u: &ScalarField,
    w: &ScalarField,
    t_index: usize,
    x_index: usize,
) -> Result<(f64, f64)> {
    let (rows, cols) = u.grid().shape();
    if t_index >= rows || x_index >= cols {
        return Err(Error::InvalidArgument(format!(
            "node ({t_index}, {x_index}) outside a {rows}x{cols} lattice"
        )));
    }
    let sides = theorem1_sides(coeffs, u, w)?;
    Ok((sides.lhs.get(t_index, x_index), sides.rhs.get(t_index, x_index)))
}

/// Function-valued solution of `U_t = D W` when `b = 0`:
/// `U(t,x) = U0(x) + a W(t,x) - a(0,x) W(0,x) + int_0^t (a_t - c) W ds`.
pub fn solve_b_zero(coeffs: &CoefficientSet, u0: &dyn Fn(f64) -> f64, w: &ScalarField) -> Result<SolutionField> {
    let g = *w.grid();
    let mut worst = (0.0f64, 0.0, 0.0);
    for i in 0..=g.n_t() {
        for j in 0..=g.n_x() {
            let (t, x) = (g.t(i), g.x(j));
            let b = coeffs.b(t, x).abs();
            if b > worst.0 {
                worst = (b, t, x);
            }
        }
    }
    if worst.0 > STRUCTURE_TOL {
        return Err(Error::NonZeroDrift {
            deviation: worst.0,
            t: worst.1,
            x: worst.2,
        });
    }
    let h_fd = default_fd_step(g.h());
    let bounds = Some(g.coefficient_bounds());
    let mut values = Array2::zeros(g.shape());
    for j in 0..=g.n_x() {
        let x = g.x(j);
        let integrand: Vec<f64> = (0..=g.n_t())
            .map(|i| {
                let t = g.t(i);
                (coeffs.partial(Partial::DaDt, t, x, h_fd, bounds) - coeffs.c(t, x)) * w.get(i, j)
            })
            .collect();
        let integral = integrate_time(&integrand, g.h(), TimeRule::Trapezoid);
        let base = u0(x) - coeffs.a(0.0, x) * w.get(0, j);
        for i in 0..=g.n_t() {
            values[[i, j]] = base + coeffs.a(g.t(i), x) * w.get(i, j) + integral[i];
        }
    }
    Ok(SolutionField {
        field: ScalarField::new(g, values)?,
        provenance: Provenance {
            formula: Formula::BZero,
            trace: None,
            seed: None,
            coefficients: coeffs.label().to_string(),
            partials: coeffs.partial_source(),
        },
    })
}

/// Lattice lines along which the solution formulas integrate in time.
struct Lines<'a> {
    path: &'a DiagonalPath,
    trace: NoiseTrace,
}

impl<'a> Lines<'a> {
    fn count(&self) -> usize {
        let g = self.path.grid();
        match self.trace {
            NoiseTrace::FixedOffset => g.n_x() + 1,
            NoiseTrace::Characteristic => g.sheet_n_x() + 1,
        }
    }

    /// Number of time nodes on `line`.
    fn len(&self, line: usize) -> usize {
        let g = self.path.grid();
        match self.trace {
            NoiseTrace::FixedOffset => g.n_t() + 1,
            NoiseTrace::Characteristic => g.n_t().min(line) + 1,
        }
    }

    /// Coordinates `(s, y)` of node `k` on `line`.
    fn point(&self, line: usize, k: usize) -> (f64, f64) {
        let g = self.path.grid();
        match self.trace {
            NoiseTrace::FixedOffset => (g.t(k), g.x(line)),
            NoiseTrace::Characteristic => (g.t(k), g.x(line - k)),
        }
    }

    fn noise(&self, line: usize, k: usize) -> f64 {
        match self.trace {
            NoiseTrace::FixedOffset => self.path.w(k, line),
            NoiseTrace::Characteristic => self.path.sheet_at(k, line),
        }
    }

    /// Line through lattice node `(i, j)`; the node sits at position `i` on it.
    fn through(&self, j: usize, i: usize) -> usize {
        match self.trace {
            NoiseTrace::FixedOffset => j,
            NoiseTrace::Characteristic => i + j,
        }
    }

    /// Cumulative trapezoid integral of `noise * f(point)` along every line.
    fn integrate(&self, f: impl Fn(f64, f64) -> f64) -> Vec<Vec<f64>> {
        let h = self.path.grid().h();
        (0..self.count())
            .map(|line| {
                let vals: Vec<f64> = (0..self.len(line))
                    .map(|k| {
                        let (s, y) = self.point(line, k);
                        let n = self.noise(line, k);
                        if n == 0.0 {
                            0.0
                        } else {
                            n * f(s, y)
                        }
                    })
                    .collect();
                integrate_time(&vals, h, TimeRule::Trapezoid)
            })
            .collect()
    }

    /// Cumulative left-point Ito sums `sum_{k<i} f(point_k) (noise_{k+1} - noise_k)`.
    fn ito(&self, f: impl Fn(f64, f64) -> f64) -> Vec<Vec<f64>> {
        (0..self.count())
            .map(|line| {
                let n = self.len(line);
                let mut out = Vec::with_capacity(n);
                let mut acc = 0.0;
                out.push(0.0);
                for k in 0..n - 1 {
                    let (s, y) = self.point(line, k);
                    acc += f(s, y) * (self.noise(line, k + 1) - self.noise(line, k));
                    out.push(acc);
                }
                out
            })
            .collect()
    }
}

fn check_transport_form(coeffs: &CoefficientSet, r0: &InitialCurve, path: &DiagonalPath) -> Result<()> {
    let g = path.grid();
    let report = existence_check(coeffs, g, STRUCTURE_TOL);
    if !report.exists {
        return Err(Error::ExistenceViolated {
            deviation: report.max_deviation,
            t: report.at.0,
            x: report.at.1,
        });
    }
    r0.ensure_covers(g)?;
    if (0..=g.n_x()).any(|j| path.w(0, j) != 0.0) {
        return Err(Error::InvalidArgument("noise does not vanish at t = 0".into()));
    }
    Ok(())
}

fn provenance(formula: Formula, coeffs: &CoefficientSet, path: &DiagonalPath, trace: NoiseTrace) -> Provenance {
    Provenance {
        formula,
        trace: Some(trace),
        seed: Some(path.seed()),
        coefficients: coeffs.label().to_string(),
        partials: coeffs.partial_source(),
    }
}

/// Closed-form solution for `b = -a`:
/// `r(t,x) = a(t,x) W(t,x) + int_0^t N(s) [a_x - a_t + c](s, y(s)) ds + r0(t + x)`,
/// where `(s, y(s))` and the noise `N` follow `trace`. Time integral by trapezoid.
pub fn solve_theorem2(
    coeffs: &CoefficientSet,
    r0: &InitialCurve,
    path: &DiagonalPath,
    trace: NoiseTrace,
) -> Result<SolutionField> {
    check_transport_form(coeffs, r0, path)?;
    let g = *path.grid();
    let h_fd = default_fd_step(g.h());
    let bounds = Some(g.coefficient_bounds());
    let lines = Lines { path, trace };
    let integral = lines.integrate(|s, y| {
        coeffs.partial(Partial::DaDx, s, y, h_fd, bounds) - coeffs.partial(Partial::DaDt, s, y, h_fd, bounds)
            + coeffs.c(s, y)
    });
    let values = Array2::from_shape_fn(g.shape(), |(i, j)| {
        let (t, x) = (g.t(i), g.x(j));
        coeffs.a(t, x) * path.w(i, j) + integral[lines.through(j, i)][i] + r0.value(t + x)
    });
    Ok(SolutionField {
        field: ScalarField::new(g, values)?,
        provenance: provenance(Formula::Theorem2, coeffs, path, trace),
    })
}

/// Wiener-Ito representation for `b = -a`:
/// `r(t,x) = int_0^t a dN + int_0^t N [c + a_x 1{fixed offset}] ds + r0(t + x)`.
///
/// Along characteristics the drift carries only `c`, since `d/ds a(s, t+x-s) = a_t - a_x`
/// is absorbed by the product rule.
pub fn solve_ito_form(
    coeffs: &CoefficientSet,
    r0: &InitialCurve,
    path: &DiagonalPath,
    trace: NoiseTrace,
) -> Result<SolutionField> {
    check_transport_form(coeffs, r0, path)?;
    let g = *path.grid();
    let h_fd = default_fd_step(g.h());
    let bounds = Some(g.coefficient_bounds());
    let lines = Lines { path, trace };
    let stochastic = lines.ito(|s, y| coeffs.a(s, y));
    let drift = lines.integrate(|s, y| match trace {
        NoiseTrace::FixedOffset => coeffs.partial(Partial::DaDx, s, y, h_fd, bounds) + coeffs.c(s, y),
        NoiseTrace::Characteristic => coeffs.c(s, y),
    });
    let values = Array2::from_shape_fn(g.shape(), |(i, j)| {
        let line = lines.through(j, i);
        stochastic[line][i] + drift[line][i] + r0.value(g.t(i) + g.x(j))
    });
    Ok(SolutionField {
        field: ScalarField::new(g, values)?,
        provenance: provenance(Formula::Ito, coeffs, path, trace),
    })
}

/// Left-point Ito sum `sum_{i < t_index} f(s_i, x) [B^x(s_{i+1}) - B^x(s_i)]` at fixed
/// offset `x = x_index * h`.
pub fn ito_integral(
    integrand: &dyn Fn(f64, f64) -> f64,
    path: &DiagonalPath,
    x_index: usize,
    t_index: usize,
) -> Result<f64> {
    let g = path.grid();
    if x_index > g.n_x() || t_index > g.n_t() {
        return Err(Error::InvalidArgument(format!(
            "node ({t_index}, {x_index}) outside the lattice"
        )));
    }
    let x = g.x(x_index);
    Ok((0..t_index)
        .map(|i| integrand(g.t(i), x) * (path.w(i + 1, x_index) - path.w(i, x_index)))
        .sum())
}
