//! Checks for the existence criterion and the probabilistic lemmas behind it.
//!
//! A function-valued solution needs `A = a + b` to vanish. When it does not, the
//! detector `Z(t, .)` built from `A` and the sheet carries non-zero quadratic variation
//! in `x`, so it cannot be Hölder of order above 1/2.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian_field::{rect_measure, sample_sheet, RectRegion, SheetSample};
use crate::grid_calculus::{integrate_time, simpson, steps_in, CoefficientSet, GridSpec, ScalarField, TimeRule};
use crate::solver::NoiseTrace;
use crate::stats::{mean_estimate, median, Estimate};

/// Default absolute tolerance of [`existence_check`].
pub const EXISTENCE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExistenceReport {
    pub exists: bool,
    /// `sup |a + b|` over the lattice.
    pub max_deviation: f64,
    /// Lattice point `(t, x)` where the sup is attained.
    pub at: (f64, f64),
}

/// `sup |a + b| <= tol` over the nodes of `grid`.
pub fn existence_check(coeffs: &CoefficientSet, grid: &GridSpec, tol: f64) -> ExistenceReport {
    let mut worst = (0.0f64, (0.0, 0.0));
    for i in 0..=grid.n_t() {
        for j in 0..=grid.n_x() {
            let (t, x) = (grid.t(i), grid.x(j));
            let d = (coeffs.a(t, x) + coeffs.b(t, x)).abs();
            if d > worst.0 || d.is_nan() {
                worst = (d, (t, x));
            }
        }
    }
    ExistenceReport {
        exists: worst.0 <= tol,
        max_deviation: worst.0,
        at: worst.1,
    }
}

/// Real function sampled at `x_j = j h`, `j = 0..len`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XProfile {
    pub h: f64,
    pub values: Vec<f64>,
}

impl XProfile {
    pub fn from_fn(h: f64, len: usize, f: impl Fn(f64) -> f64) -> Self {
        XProfile {
            h,
            values: (0..len).map(|j| f(j as f64 * h)).collect(),
        }
    }

    fn index(&self, x: f64, what: &str) -> Result<usize> {
        match steps_in(x, self.h) {
            Some(j) if j < self.values.len() => Ok(j),
            Some(_) => Err(Error::InvalidArgument(format!("{what} = {x} beyond the profile"))),
            None => Err(Error::Misaligned {
                what: format!("{what} = {x}"),
                h: self.h,
            }),
        }
    }

    /// Lattice index of `x_lo` and the stride of an `n`-cell partition of `[x_lo, x_hi]`.
    fn partition(&self, x_lo: f64, x_hi: f64, n: usize) -> Result<(usize, usize)> {
        let lo = self.index(x_lo, "x_lo")?;
        let hi = self.index(x_hi, "x_hi")?;
        if hi <= lo {
            return Err(Error::Partition(format!("empty range [{x_lo}, {x_hi}]")));
        }
        let span = hi - lo;
        if n == 0 || span % n != 0 {
            return Err(Error::Partition(format!(
                "{n} cells do not divide the {span} lattice steps of [{x_lo}, {x_hi}]"
            )));
        }
        Ok((lo, span / n))
    }

    fn increments(&self, x_lo: f64, x_hi: f64, n: usize) -> Result<impl Iterator<Item = f64> + '_> {
        let (lo, stride) = self.partition(x_lo, x_hi, n)?;
        Ok((1..=n).map(move |k| self.values[lo + k * stride] - self.values[lo + (k - 1) * stride]))
    }
}

/// `A(t, x) = a(t, x) + b(t, x)`.
fn a_plus_b(coeffs: &CoefficientSet, t: f64, x: f64) -> f64 {
    coeffs.a(t, x) + coeffs.b(t, x)
}

/// Detector `Z(t, x_j) = int_0^t A(s, y(s)) N(s) ds` at lattice time `t_index`, by trapezoid.
///
/// With `FixedOffset`, `y(s) = x_j` and `N(s) = B(s, s + x_j)`. With `Characteristic`,
/// `y(s) = t + x_j - s` and `N(s) = B(s, t + x_j)`, the integral that remains when the
/// solution formula is paired against the operator with `a + b != 0`.
pub fn build_z(coeffs: &CoefficientSet, sheet: &SheetSample, t_index: usize, trace: NoiseTrace) -> Result<XProfile> {
    let g = sheet.grid();
    if t_index > g.n_t() {
        return Err(Error::InvalidArgument(format!("time index {t_index} beyond {}", g.n_t())));
    }
    let t = g.t(t_index);
    let values = (0..=g.n_x())
        .map(|j| {
            let integrand: Vec<f64> = (0..=t_index)
                .map(|i| {
                    let s = g.t(i);
                    let (y, m) = match trace {
                        NoiseTrace::FixedOffset => (g.x(j), i + j),
                        NoiseTrace::Characteristic => (t + g.x(j) - s, t_index + j),
                    };
                    let a = a_plus_b(coeffs, s, y);
                    if a == 0.0 {
                        0.0
                    } else {
                        a * sheet.value(i, m)
                    }
                })
                .collect();
            integrate_time(&integrand, g.h(), TimeRule::Trapezoid)[t_index]
        })
        .collect();
    Ok(XProfile { h: g.h(), values })
}

/// `sum_k (Z(x_lo + k d) - Z(x_lo + (k-1) d))^2` with `d = (x_hi - x_lo) / n`.
pub fn qv_estimate(z: &XProfile, x_lo: f64, x_hi: f64, n: usize) -> Result<f64> {
    Ok(z.increments(x_lo, x_hi, n)?.map(|d| d * d).sum())
}

const QUAD_PANELS: usize = 400;

/// `int_0^t int_{x_lo}^{x_hi} A(s, z)^2 s dz ds` by nested Simpson quadrature.
pub fn qv_theoretical(coeffs: &CoefficientSet, t: f64, x_lo: f64, x_hi: f64) -> f64 {
    simpson(
        |s| s * simpson(|z| a_plus_b(coeffs, s, z).powi(2), x_lo, x_hi, QUAD_PANELS),
        0.0,
        t,
        QUAD_PANELS,
    )
}

/// Quadratic-variation limit of the characteristic detector:
/// `int_{x_lo}^{x_hi} int_0^t int_0^t A(r, t+z-r) A(s, t+z-s) min(r, s) dr ds dz`.
pub fn qv_characteristic_limit(coeffs: &CoefficientSet, t: f64, x_lo: f64, x_hi: f64) -> f64 {
    const N: usize = 4000;
    let h = t / N as f64;
    let inner = |z: f64| {
        // 2 int_0^t A(s) [int_0^s r A(r) dr] ds
        let a: Vec<f64> = (0..=N).map(|k| a_plus_b(coeffs, k as f64 * h, t + z - k as f64 * h)).collect();
        let ra: Vec<f64> = a.iter().enumerate().map(|(k, v)| k as f64 * h * v).collect();
        let cum = integrate_time(&ra, h, TimeRule::Trapezoid);
        let outer: Vec<f64> = a.iter().zip(&cum).map(|(v, c)| v * c).collect();
        2.0 * crate::grid_calculus::trapezoid(&outer, h)
    };
    if t == 0.0 {
        return 0.0;
    }
    simpson(inner, x_lo, x_hi, 64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderReport {
    /// Regression slope; `None` when every increment vanishes (exponent `+inf`).
    pub estimated_exponent: Option<f64>,
    pub degenerate: bool,
    pub levels: Vec<usize>,
    pub deltas: Vec<f64>,
    pub max_increments: Vec<f64>,
    /// Root-mean-square residual of the log-log fit.
    pub regression_residual: f64,
}

impl HolderReport {
    pub fn exponent(&self) -> f64 {
        self.estimated_exponent.unwrap_or(f64::INFINITY)
    }
}

/// Least-squares slope and RMS residual of `y` against `x`.
fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - my - slope * (a - mx)).powi(2)).sum();
    (slope, (rss / n).sqrt())
}

/// Slope of `log max_k |dZ|` against `log d` over the partition levels.
pub fn holder_estimate(z: &XProfile, x_lo: f64, x_hi: f64, levels: &[usize]) -> Result<HolderReport> {
    if levels.len() < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 levels, got {}", levels.len())));
    }
    let mut deltas = Vec::with_capacity(levels.len());
    let mut maxima = Vec::with_capacity(levels.len());
    for &n in levels {
        let m = z.increments(x_lo, x_hi, n)?.fold(0.0f64, |acc, d| acc.max(d.abs()));
        deltas.push((x_hi - x_lo) / n as f64);
        maxima.push(m);
    }
    let degenerate = maxima.contains(&0.0);
    let (exponent, residual) = if degenerate {
        (None, 0.0)
    } else {
        let lx: Vec<f64> = deltas.iter().map(|d| d.ln()).collect();
        let ly: Vec<f64> = maxima.iter().map(|m| m.ln()).collect();
        let (slope, res) = fit_line(&lx, &ly);
        (Some(slope), res)
    };
    Ok(HolderReport {
        estimated_exponent: exponent,
        degenerate,
        levels: levels.to_vec(),
        deltas,
        max_increments: maxima,
        regression_residual: residual,
    })
}

/// `sup |g(t,x) - g(t,0) - g(0,x) + g(0,0)|`: distance from the additive form
/// `g(t,0) + g(0,x) + const`.
pub fn separability_residual(g: &ScalarField) -> f64 {
    let (rows, cols) = g.grid().shape();
    let mut worst = 0.0f64;
    for i in 0..rows {
        for j in 0..cols {
            worst = worst.max((g.get(i, j) - g.get(i, 0) - g.get(0, j) + g.get(0, 0)).abs());
        }
    }
    worst
}

/// Equal grid-aligned slabs `F_k = [t_lo, t_hi] x [x_lo + (k-1) d, x_lo + k d]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionScheme {
    pub base: RectRegion,
    pub n: usize,
    pub cells: Vec<RectRegion>,
}

impl PartitionScheme {
    pub fn slabs(base: RectRegion, n: usize, grid: &GridSpec) -> Result<Self> {
        let idx = base.indices(grid)?;
        let span = idx.j_hi - idx.j_lo;
        if n == 0 || span % n != 0 {
            return Err(Error::Partition(format!(
                "{n} slabs do not divide the {span} lattice steps of [{}, {}]",
                base.x_lo, base.x_hi
            )));
        }
        let stride = span / n;
        let h = grid.h();
        let cells = (0..n)
            .map(|k| RectRegion {
                t_lo: base.t_lo,
                t_hi: base.t_hi,
                x_lo: (idx.j_lo + k * stride) as f64 * h,
                x_hi: (idx.j_lo + (k + 1) * stride) as f64 * h,
            })
            .collect();
        Ok(PartitionScheme { base, n, cells })
    }

    pub fn sup_area(&self) -> f64 {
        self.cells.iter().map(RectRegion::area).fold(0.0, f64::max)
    }
}

fn overlap(a: &RectRegion, b: &RectRegion) -> f64 {
    a.intersect(b).map_or(0.0, |r| r.area())
}

fn midpoint(r: &RectRegion) -> (f64, f64) {
    (0.5 * (r.t_lo + r.t_hi), 0.5 * (r.x_lo + r.x_hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadLemMode {
    /// `(F_k ∩ G_k)_k` partitions `F ∩ G`; the sums tend to `int_{F∩G} R S`.
    Diagonal,
    /// For every `k, l` one of `F_k ∩ G_l`, `F_l ∩ G_k` is empty; the sums tend to 0.
    Disjoint,
}

/// Region pair and level list of a [`quadlem_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadLemSetup {
    pub f: RectRegion,
    pub g: RectRegion,
    pub n_values: Vec<usize>,
    pub mode: QuadLemMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadLemLevel {
    pub n: usize,
    pub sup_area: f64,
    /// Mean of the sums across seeds.
    pub sum: Estimate,
    /// `sqrt(mean (sum - limit)^2)`.
    pub l2_error: f64,
    pub median_abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadLemReport {
    pub mode: QuadLemMode,
    pub limit: f64,
    pub n_seeds: usize,
    pub levels: Vec<QuadLemLevel>,
}

fn check_geometry(fp: &PartitionScheme, gp: &PartitionScheme, mode: QuadLemMode) -> Result<()> {
    let tol = 1e-12 * (fp.base.area() + gp.base.area()).max(1.0);
    match mode {
        QuadLemMode::Diagonal => {
            let covered: f64 = fp.cells.iter().zip(&gp.cells).map(|(a, b)| overlap(a, b)).sum();
            if (covered - overlap(&fp.base, &gp.base)).abs() > tol {
                return Err(Error::Partition(format!(
                    "diagonal intersections cover {covered}, not the area of F ∩ G"
                )));
            }
        }
        QuadLemMode::Disjoint => {
            for (k, (fk, gk)) in fp.cells.iter().zip(&gp.cells).enumerate() {
                for (fl, gl) in fp.cells.iter().zip(&gp.cells).skip(k) {
                    if overlap(fk, gl) > tol && overlap(fl, gk) > tol {
                        return Err(Error::Partition(
                            "disjoint mode needs F_k ∩ G_l or F_l ∩ G_k empty for all k, l".into(),
                        ));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Monte Carlo L² check of `sum_k R_k S_k B(F_k) B(G_k) -> limit` over equal x-slabs of
/// `F` and `G`. `R_k`, `S_k` are the values at the midpoints of `F_k` and `G_k`.
pub fn quadlem_check(
    grid: &GridSpec,
    r: &(dyn Fn(f64, f64) -> f64 + Sync),
    s: &(dyn Fn(f64, f64) -> f64 + Sync),
    setup: &QuadLemSetup,
    seeds: &[u64],
) -> Result<QuadLemReport> {
    let schemes = setup
        .n_values
        .iter()
        .map(|&n| {
            let fp = PartitionScheme::slabs(setup.f, n, grid)?;
            let gp = PartitionScheme::slabs(setup.g, n, grid)?;
            check_geometry(&fp, &gp, setup.mode)?;
            Ok((fp, gp))
        })
        .collect::<Result<Vec<_>>>()?;
    let limit = match (setup.mode, setup.f.intersect(&setup.g)) {
        (QuadLemMode::Diagonal, Some(fg)) => simpson(
            |t| simpson(|x| r(t, x) * s(t, x), fg.x_lo, fg.x_hi, QUAD_PANELS),
            fg.t_lo,
            fg.t_hi,
            QUAD_PANELS,
        ),
        _ => 0.0,
    };
    let weights: Vec<Vec<f64>> = schemes
        .iter()
        .map(|(fp, gp)| {
            fp.cells
                .iter()
                .zip(&gp.cells)
                .map(|(fk, gk)| {
                    let (ft, fx) = midpoint(fk);
                    let (gt, gx) = midpoint(gk);
                    r(ft, fx) * s(gt, gx)
                })
                .collect()
        })
        .collect();
    let per_seed: Vec<Vec<f64>> = seeds
        .par_iter()
        .map(|&seed| {
            let sheet = sample_sheet(grid, seed);
            schemes
                .iter()
                .zip(&weights)
                .map(|((fp, gp), w)| {
                    let mut total = 0.0;
                    for ((fk, gk), wk) in fp.cells.iter().zip(&gp.cells).zip(w) {
                        if *wk != 0.0 {
                            total += wk * rect_measure(&sheet, fk)? * rect_measure(&sheet, gk)?;
                        }
                    }
                    Ok(total)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let levels = schemes
        .iter()
        .enumerate()
        .map(|(l, (fp, gp))| {
            let sums: Vec<f64> = per_seed.iter().map(|v| v[l]).collect();
            let errs: Vec<f64> = sums.iter().map(|v| (v - limit).abs()).collect();
            Ok(QuadLemLevel {
                n: fp.n,
                sup_area: fp.sup_area().max(gp.sup_area()),
                sum: mean_estimate(&sums)?,
                l2_error: (errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64).sqrt(),
                median_abs_error: median(&errs),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(QuadLemReport {
        mode: setup.mode,
        limit,
        n_seeds: seeds.len(),
        levels,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSupLevel {
    pub n: usize,
    pub sup_area: f64,
    /// `n^kappa * sup_k area(F_k)`, the hypothesis quantity that must tend to 0.
    pub hypothesis: f64,
    /// `sup_k |B(F_k)|` for each seed.
    pub sups: Vec<f64>,
    pub median_sup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSupReport {
    pub base: RectRegion,
    pub kappa: f64,
    pub levels: Vec<PartitionSupLevel>,
}

/// `sup_k |B(F_k)|` over equal x-slabs of `base`, per seed and level.
pub fn partition_sup_check(
    grid: &GridSpec,
    base: RectRegion,
    kappa: f64,
    n_values: &[usize],
    seeds: &[u64],
) -> Result<PartitionSupReport> {
    let schemes = n_values
        .iter()
        .map(|&n| PartitionScheme::slabs(base, n, grid))
        .collect::<Result<Vec<_>>>()?;
    let per_seed: Vec<Vec<f64>> = seeds
        .par_iter()
        .map(|&seed| {
            let sheet = sample_sheet(grid, seed);
            schemes
                .iter()
                .map(|p| {
                    p.cells
                        .iter()
                        .try_fold(0.0f64, |acc, c| Ok(acc.max(rect_measure(&sheet, c)?.abs())))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let levels = schemes
        .iter()
        .enumerate()
        .map(|(l, p)| {
            let sups: Vec<f64> = per_seed.iter().map(|v| v[l]).collect();
            PartitionSupLevel {
                n: p.n,
                sup_area: p.sup_area(),
                hypothesis: (p.n as f64).powf(kappa) * p.sup_area(),
                median_sup: median(&sups),
                sups,
            }
        })
        .collect();
    Ok(PartitionSupReport { base, kappa, levels })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QVReport {
    pub t: f64,
    pub x_lo: f64,
    pub x_hi: f64,
    pub n_partitions: usize,
    pub trace: NoiseTrace,
    /// Median of the per-seed estimates.
    pub empirical_qv: f64,
    /// `int_0^t int_{x_lo}^{x_hi} A(s,z)^2 s dz ds`.
    pub theoretical_qv: f64,
    pub relative_error: f64,
    /// Limit of the characteristic detector, see [`qv_characteristic_limit`].
    pub characteristic_limit: f64,
    pub seeds: Vec<u64>,
}

/// Per-seed rows `(n, seed, qv)` and one report per partition level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QvStudy {
    pub reports: Vec<QVReport>,
    pub rows: Vec<(usize, u64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QvSetup {
    pub t: f64,
    pub x_lo: f64,
    pub x_hi: f64,
    pub n_values: Vec<usize>,
    pub trace: NoiseTrace,
}

/// Runs [`build_z`] and [`qv_estimate`] for every seed and partition level.
pub fn qv_study(coeffs: &CoefficientSet, grid: &GridSpec, setup: &QvSetup, seeds: &[u64]) -> Result<QvStudy> {
    if setup.n_values.iter().any(|n| *n < 2) {
        return Err(Error::Partition("quadratic variation needs at least 2 cells".into()));
    }
    let t_index = grid.t_index(setup.t)?;
    let per_seed: Vec<Vec<f64>> = seeds
        .par_iter()
        .map(|&seed| {
            let z = build_z(coeffs, &sample_sheet(grid, seed), t_index, setup.trace)?;
            setup
                .n_values
                .iter()
                .map(|&n| qv_estimate(&z, setup.x_lo, setup.x_hi, n))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let theoretical = qv_theoretical(coeffs, setup.t, setup.x_lo, setup.x_hi);
    let characteristic = qv_characteristic_limit(coeffs, setup.t, setup.x_lo, setup.x_hi);
    let mut rows = Vec::new();
    let reports = setup
        .n_values
        .iter()
        .enumerate()
        .map(|(l, &n)| {
            let vals: Vec<f64> = per_seed.iter().map(|v| v[l]).collect();
            rows.extend(seeds.iter().zip(&vals).map(|(s, v)| (n, *s, *v)));
            let emp = median(&vals);
            QVReport {
                t: setup.t,
                x_lo: setup.x_lo,
                x_hi: setup.x_hi,
                n_partitions: n,
                trace: setup.trace,
                empirical_qv: emp,
                theoretical_qv: theoretical,
                relative_error: relative(emp, theoretical),
                characteristic_limit: characteristic,
                seeds: seeds.to_vec(),
            }
        })
        .collect();
    Ok(QvStudy { reports, rows })
}

fn relative(value: f64, target: f64) -> f64 {
    if target == 0.0 {
        value.abs()
    } else {
        (value - target).abs() / target.abs()
    }
}
