//! Forward-rate curves `r(t, x)` (time `t`, time to maturity `x`) driven by the
//! diagonal noise, `r_t - r_x = a (W_t - W_x) + c W`, with a single-driver model for
//! comparison.

use std::io::Write;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian_field::{diagonal_noise, sample_sheet, DiagonalPath};
use crate::grid_calculus::{default_fd_step, CoefSpec, CoefficientSet, GridSpec, Partial, ScalarField};
use crate::io::write_table_csv;
use crate::rng::{batch_seeds, derive_seed, rng_from_seed};
use crate::solver::{solve_theorem2, CurveSpec, Formula, InitialCurve, NoiseTrace, Provenance, SolutionField};
use crate::stats::{correlation, covariance_estimate, mean_estimate, quantile};

/// Stream index of the single-driver Wiener path inside a path seed.
const MS_STREAM: u64 = 0x4d53;

fn default_paths() -> usize {
    1000
}

/// Ensemble of curve paths. The transport coefficient is always `b = -a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct YieldScenario {
    pub grid: GridSpec,
    #[serde(default)]
    pub r0: CurveSpec,
    pub vol: CoefSpec,
    #[serde(default = "CoefSpec::zero")]
    pub carry: CoefSpec,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default)]
    pub seed: u64,
    /// Times at which ensemble statistics are reported; empty means the final time.
    #[serde(default)]
    pub t_slices: Vec<f64>,
    #[serde(default)]
    pub trace: NoiseTrace,
    /// Keep every path in the result.
    #[serde(default)]
    pub keep_paths: bool,
}

impl YieldScenario {
    pub fn new(grid: GridSpec, vol: CoefSpec, n_paths: usize, seed: u64) -> Self {
        YieldScenario {
            grid,
            r0: CurveSpec::default(),
            vol,
            carry: CoefSpec::zero(),
            n_paths,
            seed,
            t_slices: Vec::new(),
            trace: NoiseTrace::default(),
            keep_paths: false,
        }
    }

    pub fn coefficients(&self) -> CoefficientSet {
        CoefficientSet::from_specs(&self.vol, &self.vol.negated(), &self.carry)
    }

    pub fn initial_curve(&self) -> InitialCurve {
        InitialCurve::from_spec(&self.r0)
    }

    pub fn path_seeds(&self) -> Vec<u64> {
        batch_seeds(self.seed, self.n_paths)
    }

    fn slice_indices(&self) -> Result<Vec<usize>> {
        if self.t_slices.is_empty() {
            return Ok(vec![self.grid.n_t()]);
        }
        self.t_slices.iter().map(|&t| self.grid.t_index(t)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::InvalidArgument("n_paths must be at least 1".into()));
        }
        self.slice_indices()?;
        Ok(())
    }

    /// Path `k` of the ensemble.
    pub fn path(&self, seed: u64) -> Result<(DiagonalPath, SolutionField)> {
        let noise = diagonal_noise(&sample_sheet(&self.grid, seed));
        let r = solve_theorem2(&self.coefficients(), &self.initial_curve(), &noise, self.trace)?;
        Ok((noise, r))
    }
}

/// Pointwise ensemble statistics at one lattice node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceStats {
    pub t: f64,
    pub x: f64,
    pub mean: f64,
    pub mean_se: f64,
    pub variance: f64,
    pub variance_se: f64,
    pub q05: f64,
    pub q95: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub n_paths: usize,
    pub seeds: Vec<u64>,
    pub slices: Vec<SliceStats>,
    pub paths: Option<Vec<SolutionField>>,
}

impl EnsembleResult {
    pub fn stats_at(&self, t: f64, x: f64) -> Option<&SliceStats> {
        self.slices.iter().find(|s| (s.t - t).abs() < 1e-12 && (s.x - x).abs() < 1e-12)
    }

    /// CSV with columns `t, x, mean, variance, q05, q95`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let rows: Vec<Vec<f64>> = self
            .slices
            .iter()
            .map(|s| vec![s.t, s.x, s.mean, s.variance, s.q05, s.q95])
            .collect();
        write_table_csv(out, &["t", "x", "mean", "variance", "q05", "q95"], &rows)
    }
}

fn summarize(t: f64, x: f64, samples: &[f64]) -> Result<SliceStats> {
    let (mean, var) = if samples.len() >= 2 {
        (mean_estimate(samples)?, covariance_estimate(samples, samples)?)
    } else {
        let m = crate::stats::Estimate {
            value: samples[0],
            std_error: f64::NAN,
        };
        (m, crate::stats::Estimate { value: 0.0, std_error: f64::NAN })
    };
    Ok(SliceStats {
        t,
        x,
        mean: mean.value,
        mean_se: mean.std_error,
        variance: var.value,
        variance_se: var.std_error,
        q05: quantile(samples, 0.05),
        q95: quantile(samples, 0.95),
    })
}

/// Simulates `n_paths` independent sheets and reports statistics at the requested times.
/// Paths run in parallel; the reduction follows path order, so results are bit-stable.
pub fn simulate_yield(sc: &YieldScenario) -> Result<EnsembleResult> {
    sc.validate()?;
    let slices = sc.slice_indices()?;
    let seeds = sc.path_seeds();
    let g = sc.grid;
    let runs: Vec<(Vec<f64>, Option<SolutionField>)> = seeds
        .par_iter()
        .map(|&seed| {
            let (_, r) = sc.path(seed)?;
            let picked = slices
                .iter()
                .flat_map(|&i| (0..=g.n_x()).map(move |j| (i, j)))
                .map(|(i, j)| r.get(i, j))
                .collect();
            Ok((picked, sc.keep_paths.then_some(r)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut stats = Vec::with_capacity(slices.len() * (g.n_x() + 1));
    let mut column = vec![0.0; runs.len()];
    for (s, &i) in slices.iter().enumerate() {
        for j in 0..=g.n_x() {
            let idx = s * (g.n_x() + 1) + j;
            for (c, run) in column.iter_mut().zip(&runs) {
                *c = run.0[idx];
            }
            stats.push(summarize(g.t(i), g.x(j), &column)?);
        }
    }
    let paths = sc
        .keep_paths
        .then(|| runs.into_iter().map(|r| r.1.expect("kept path")).collect());
    Ok(EnsembleResult {
        n_paths: sc.n_paths,
        seeds,
        slices: stats,
        paths,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftResidual {
    pub max: f64,
    pub sum: f64,
}

/// Per-step defect of the fixed-maturity dynamics
/// `dr = a dB^x + [B^x (a_x + c) + r0'(t + x)] dt` along the column at offset `x`.
///
/// The display describes the fixed-offset form of the solution, so `path` must come
/// from [`NoiseTrace::FixedOffset`] (or be trace-independent, as for constant `a`).
pub fn drift_decomposition_residual(
    path: &SolutionField,
    noise: &DiagonalPath,
    sc: &YieldScenario,
    x: f64,
) -> Result<DriftResidual> {
    let g = *noise.grid();
    path.grid().ensure_same(&g)?;
    let j = g.x_index(x)?;
    let coeffs = sc.coefficients();
    let r0 = sc.initial_curve();
    let h = g.h();
    let h_fd = default_fd_step(h);
    let bounds = Some(g.coefficient_bounds());
    let mut out = DriftResidual { max: 0.0, sum: 0.0 };
    for i in 0..g.n_t() {
        let t = g.t(i);
        let dr = path.get(i + 1, j) - path.get(i, j);
        let db = noise.w(i + 1, j) - noise.w(i, j);
        let drift = noise.w(i, j) * (coeffs.partial(Partial::DaDx, t, x, h_fd, bounds) + coeffs.c(t, x))
            + r0.derivative(t + x, h_fd);
        let res = (dr - coeffs.a(t, x) * db - drift * h).abs();
        out.max = out.max.max(res);
        out.sum += res;
    }
    Ok(out)
}

/// Parameters of the single-driver model `dr(t,x) = alpha dt + sigma dW(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MsParams {
    #[serde(default = "CoefSpec::zero")]
    pub ms_alpha: CoefSpec,
    pub sigma: CoefSpec,
}

/// Euler-Maruyama for `dr(t,x) = alpha dt + sigma dW(t)` with one scalar Wiener path
/// shared by every maturity. The path is drawn from a stream derived from `seed`.
pub fn ms_simulate(
    alpha: &CoefSpec,
    sigma: &CoefSpec,
    r0: &InitialCurve,
    grid: &GridSpec,
    seed: u64,
) -> Result<SolutionField> {
    let (alpha, sigma) = (alpha.to_poly(), sigma.to_poly());
    let h = grid.h();
    let mut rng = rng_from_seed(derive_seed(seed, MS_STREAM));
    let dw: Vec<f64> = (0..grid.n_t())
        .map(|_| h.sqrt() * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut values = Array2::zeros(grid.shape());
    for j in 0..=grid.n_x() {
        let x = grid.x(j);
        let mut r = r0.value(x);
        values[[0, j]] = r;
        for (i, dw_i) in dw.iter().enumerate() {
            let t = grid.t(i);
            r += alpha.eval(t, x) * h + sigma.eval(t, x) * dw_i;
            values[[i + 1, j]] = r;
        }
    }
    Ok(SolutionField {
        field: ScalarField::new(*grid, values)?,
        provenance: Provenance {
            formula: Formula::MusielaSondermann,
            trace: None,
            seed: Some(seed),
            coefficients: format!("alpha={alpha}, sigma={sigma}"),
            partials: crate::grid_calculus::PartialSource::Analytic,
        },
    })
}

/// Cross-maturity correlation of one-step increments `r(t+h, x) - r(t, x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSlice {
    pub t: f64,
    pub maturities: Vec<f64>,
    /// `None` where an increment has zero variance.
    pub spde: Vec<Vec<Option<f64>>>,
    pub ms: Vec<Vec<Option<f64>>>,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub n_paths: usize,
    pub slices: Vec<CorrelationSlice>,
}

fn correlation_matrix(incs: &[Vec<f64>]) -> Result<Vec<Vec<Option<f64>>>> {
    let m = incs.len();
    let mut out = vec![vec![None; m]; m];
    for a in 0..m {
        for b in a..m {
            let c = correlation(&incs[a], &incs[b])?;
            out[a][b] = c;
            out[b][a] = c;
        }
    }
    Ok(out)
}

// SPDE and single-driver increments of one path, flattened slice-major.
type PathIncrements = (Vec<f64>, Vec<f64>);

/// Both models driven path by path from the scenario seeds; increment correlations are
/// taken across paths at each requested time and pair of maturities.
pub fn compare_models(sc: &YieldScenario, ms: &MsParams, t_slices: &[f64], maturities: &[f64]) -> Result<ComparisonReport> {
    sc.validate()?;
    if sc.n_paths < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: sc.n_paths });
    }
    let g = sc.grid;
    let ti: Vec<usize> = t_slices
        .iter()
        .map(|&t| {
            let i = g.t_index(t)?;
            if i >= g.n_t() {
                return Err(Error::InvalidArgument(format!("no increment after the final time {t}")));
            }
            Ok(i)
        })
        .collect::<Result<_>>()?;
    let xj: Vec<usize> = maturities.iter().map(|&x| g.x_index(x)).collect::<Result<_>>()?;
    let r0 = sc.initial_curve();
    let per_path: Vec<(Vec<f64>, Vec<f64>)> = sc
        .path_seeds()
        .par_iter()
        .map(|&seed| {
            let (_, spde) = sc.path(seed)?;
            let single = ms_simulate(&ms.ms_alpha, &ms.sigma, &r0, &g, seed)?;
            let inc = |f: &SolutionField| -> Vec<f64> {
                ti.iter()
                    .flat_map(|&i| xj.iter().map(move |&j| (i, j)))
                    .map(|(i, j)| f.get(i + 1, j) - f.get(i, j))
                    .collect()
            };
            Ok((inc(&spde), inc(&single)))
        })
        .collect::<Result<_>>()?;
    let slices = ti
        .iter()
        .enumerate()
        .map(|(s, &i)| {
            let gather = |pick: &dyn Fn(&PathIncrements) -> &Vec<f64>| -> Vec<Vec<f64>> {
                (0..xj.len())
                    .map(|m| per_path.iter().map(|p| pick(p)[s * xj.len() + m]).collect())
                    .collect()
            };
            let spde = correlation_matrix(&gather(&|p| &p.0))?;
            let ms = correlation_matrix(&gather(&|p| &p.1))?;
            let degenerate = spde.iter().chain(&ms).flatten().any(Option::is_none);
            Ok(CorrelationSlice {
                t: g.t(i),
                maturities: xj.iter().map(|&j| g.x(j)).collect(),
                spde,
                ms,
                degenerate,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ComparisonReport {
        n_paths: sc.n_paths,
        slices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_calculus::make_grid;
    use crate::solver::{solve_ito_form, transport_solution};
    use crate::stats::median;

    fn grid(h: f64) -> GridSpec {
        make_grid(1.0, 1.0, h).unwrap()
    }

    #[test]
    fn zero_vol_is_transport() {
        let mut sc = YieldScenario::new(grid(0.05), CoefSpec::zero(), 5, 1);
        sc.keep_paths = true;
        sc.t_slices = vec![0.5, 1.0];
        let res = simulate_yield(&sc).unwrap();
        let base = transport_solution(&sc.grid, &sc.initial_curve()).unwrap();
        for p in res.paths.as_ref().unwrap() {
            assert_eq!(p.field, base.field);
        }
        for s in &res.slices {
            let v = sc.initial_curve().value(s.t + s.x);
            assert!(s.variance.abs() < 1e-30);
            assert!((s.mean - v).abs() <= f64::EPSILON * v.abs());
            assert_eq!((s.q05, s.q95), (v, v));
        }
        assert_eq!(res.slices.len(), 2 * 21);
    }

    #[test]
    fn constant_vol_variance_law() {
        let sigma = 0.1;
        let mut sc = YieldScenario::new(grid(0.05), CoefSpec::Const { value: sigma }, 10_000, 17);
        sc.t_slices = vec![0.5, 1.0];
        let res = simulate_yield(&sc).unwrap();
        for (t, x) in [(1.0, 1.0), (0.5, 0.25), (1.0, 0.0)] {
            let s = res.stats_at(t, x).unwrap();
            let target = sigma * sigma * t * (t + x);
            assert!((s.variance - target).abs() <= 3.0 * s.variance_se, "{s:?} vs {target}");
            let mean_target = sc.initial_curve().value(t + x);
            assert!((s.mean - mean_target).abs() <= 3.0 * s.mean_se, "{s:?}");
        }
        assert!((res.stats_at(1.0, 1.0).unwrap().variance - 0.02).abs() < 0.002);
    }

    #[test]
    fn ensemble_is_deterministic() {
        let mut sc = YieldScenario::new(grid(0.1), CoefSpec::T { scale: 0.2 }, 200, 5);
        sc.carry = CoefSpec::Const { value: 0.05 };
        let a = simulate_yield(&sc).unwrap();
        let b = simulate_yield(&sc).unwrap();
        assert_eq!(a, b);
        let mut csv_a = Vec::new();
        a.write_csv(&mut csv_a).unwrap();
        let text = String::from_utf8(csv_a).unwrap();
        assert!(text.starts_with("t,x,mean,variance,q05,q95\n"));
        assert_eq!(text.lines().count(), 1 + 11);
    }

    #[test]
    fn scenario_json_round_trip() {
        let mut sc = YieldScenario::new(grid(0.05), CoefSpec::TPlusX { scale: 0.1 + 0.2 }, 300, u64::MAX);
        sc.r0 = CurveSpec::NelsonSiegel {
            beta0: 0.1 / 3.0,
            beta1: -1e-17,
            beta2: std::f64::consts::PI,
            tau: 1.25,
        };
        sc.t_slices = vec![0.35, 1.0];
        let json = serde_json::to_string(&sc).unwrap();
        assert_eq!(serde_json::from_str::<YieldScenario>(&json).unwrap(), sc);
        assert!(serde_json::from_str::<YieldScenario>(&json.replace("\"seed\"", "\"sed\"")).is_err());
    }

    #[test]
    fn invalid_scenarios() {
        let sc = YieldScenario::new(grid(0.1), CoefSpec::zero(), 0, 1);
        assert!(simulate_yield(&sc).is_err());
        let mut sc = YieldScenario::new(grid(0.1), CoefSpec::zero(), 1, 1);
        sc.t_slices = vec![0.33];
        assert!(simulate_yield(&sc).is_err());
    }

    #[test]
    fn drift_residual_without_noise_is_taylor_error() {
        for h in [0.1, 0.05] {
            let sc = YieldScenario::new(grid(h), CoefSpec::zero(), 1, 1);
            let (noise, r) = sc.path(1).unwrap();
            let res = drift_decomposition_residual(&r, &noise, &sc, 0.5).unwrap();
            let r0 = sc.initial_curve();
            let mut expect = 0.0f64;
            for i in 0..sc.grid.n_t() {
                let s = sc.grid.t(i) + 0.5;
                expect = expect.max((r0.value(s + h) - r0.value(s) - r0.derivative(s, 1e-5) * h).abs());
            }
            assert!((res.max - expect).abs() < 1e-15);
            assert!(res.max < h * h);
        }
    }

    #[test]
    fn drift_residual_constant_vol_cancels_noise() {
        let sigma = 0.3;
        let sc = YieldScenario::new(grid(0.05), CoefSpec::Const { value: sigma }, 1, 1);
        let base = YieldScenario::new(grid(0.05), CoefSpec::zero(), 1, 1);
        let (noise, r) = sc.path(3).unwrap();
        let (n0, r_base) = base.path(3).unwrap();
        let a = drift_decomposition_residual(&r, &noise, &sc, 0.25).unwrap();
        let b = drift_decomposition_residual(&r_base, &n0, &base, 0.25).unwrap();
        assert!((a.max - b.max).abs() < 1e-15 && (a.sum - b.sum).abs() < 1e-14);
    }

    #[test]
    fn drift_residual_linear_vol_decays() {
        let sums: Vec<Vec<f64>> = batch_seeds(99, 20)
            .iter()
            .map(|&seed| {
                [0.04, 0.02, 0.01]
                    .iter()
                    .map(|&h| {
                        let mut sc = YieldScenario::new(grid(h), CoefSpec::T { scale: 1.0 }, 1, 1);
                        sc.trace = NoiseTrace::FixedOffset;
                        let (noise, r) = sc.path(seed).unwrap();
                        drift_decomposition_residual(&r, &noise, &sc, 0.2).unwrap().sum
                    })
                    .collect()
            })
            .collect();
        let med: Vec<f64> = (0..3).map(|k| median(&sums.iter().map(|s| s[k]).collect::<Vec<_>>())).collect();
        assert!(med[0] > med[1] && med[1] > med[2], "{med:?}");
        let slope = (med[0] / med[2]).log2() / 2.0;
        assert!((slope - 0.5).abs() < 0.2, "rate {slope}");
    }

    #[test]
    fn ito_form_matches_dynamics_exactly() {
        // For a = t the fixed-offset Ito form steps exactly as the display; only the
        // Taylor error of r0 remains.
        let mut sc = YieldScenario::new(grid(0.02), CoefSpec::T { scale: 1.0 }, 1, 1);
        sc.trace = NoiseTrace::FixedOffset;
        let (noise, _) = sc.path(4).unwrap();
        let r = solve_ito_form(&sc.coefficients(), &sc.initial_curve(), &noise, NoiseTrace::FixedOffset).unwrap();
        let res = drift_decomposition_residual(&r, &noise, &sc, 0.3).unwrap();
        assert!(res.max < 0.02 * 0.02);
    }

    #[test]
    fn ms_examples() {
        let g = grid(0.05);
        let r0 = InitialCurve::from_spec(&CurveSpec::default());
        let still = ms_simulate(&CoefSpec::zero(), &CoefSpec::zero(), &r0, &g, 1).unwrap();
        let drift = ms_simulate(&CoefSpec::Const { value: 1.0 }, &CoefSpec::zero(), &r0, &g, 1).unwrap();
        for i in 0..=20 {
            for j in 0..=20 {
                let x = g.x(j);
                assert_eq!(still.get(i, j), r0.value(x));
                assert!((drift.get(i, j) - r0.value(x) - g.t(i)).abs() < 1e-14);
            }
        }
        let seeds = batch_seeds(3, 10_000);
        let d: Vec<f64> = seeds
            .iter()
            .map(|&s| {
                let r = ms_simulate(&CoefSpec::zero(), &CoefSpec::Const { value: 1.0 }, &r0, &g, s).unwrap();
                r.get(20, 7) - r0.value(g.x(7))
            })
            .collect();
        let v = covariance_estimate(&d, &d).unwrap();
        assert!(v.within(1.0, 3.0), "{v:?}");
    }

    /// `Cov(B(s1, y1), B(s2, y2))` of the Brownian sheet.
    fn sheet_cov(p: (f64, f64), q: (f64, f64)) -> f64 {
        p.0.min(q.0) * p.1.min(q.1)
    }

    /// Correlation of `B(t+h, t+h+x) - B(t, t+x)` at two offsets, expanded term by term.
    fn increment_corr(t: f64, h: f64, x1: f64, x2: f64) -> f64 {
        let pts = |x: f64| [((t + h, t + h + x), 1.0), ((t, t + x), -1.0)];
        let cov = |a: f64, b: f64| -> f64 {
            let mut c = 0.0;
            for (p, sp) in pts(a) {
                for (q, sq) in pts(b) {
                    c += sp * sq * sheet_cov(p, q);
                }
            }
            c
        };
        cov(x1, x2) / (cov(x1, x1) * cov(x2, x2)).sqrt()
    }

    #[test]
    fn increment_oracle_closed_form() {
        let (t, h) = (0.5f64, 0.05f64);
        for (x1, x2) in [(0.0, 0.5), (0.2, 1.0), (0.5, 0.55)] {
            let closed = (t + h + x1) / ((2.0 * t + h + x1) * (2.0 * t + h + x2)).sqrt();
            assert!((increment_corr(t, h, x1, x2) - closed).abs() < 1e-14);
        }
    }

    #[test]
    fn compare_models_correlations() {
        let sc = YieldScenario::new(grid(0.05), CoefSpec::Const { value: 1.0 }, 4000, 11);
        let ms = MsParams {
            ms_alpha: CoefSpec::zero(),
            sigma: CoefSpec::Const { value: 1.0 },
        };
        let mats = [0.0, 0.5, 1.0];
        let rep = compare_models(&sc, &ms, &[0.5], &mats).unwrap();
        let s = &rep.slices[0];
        assert!(!s.degenerate);
        for a in 0..3 {
            for b in 0..3 {
                assert_eq!(s.ms[a][b], Some(1.0));
                if a != b {
                    let c = s.spde[a][b].unwrap();
                    let oracle = increment_corr(0.5, 0.05, mats[a], mats[b]);
                    // Fisher z standard error.
                    let se = (1.0 - oracle * oracle) / (4000.0f64 - 3.0).sqrt();
                    assert!((c - oracle).abs() < 3.0 * se + 1e-3, "{a},{b}: {c} vs {oracle}");
                    assert!(c < 1.0);
                }
            }
        }
        let flat = YieldScenario::new(grid(0.05), CoefSpec::zero(), 10, 11);
        let none = MsParams {
            ms_alpha: CoefSpec::zero(),
            sigma: CoefSpec::zero(),
        };
        let rep = compare_models(&flat, &none, &[0.5], &mats).unwrap();
        assert!(rep.slices[0].degenerate);
        assert!(compare_models(&flat, &none, &[1.0], &mats).is_err());
    }

    #[test]
    fn characteristic_and_fixed_agree_for_constant_vol() {
        let mut sc = YieldScenario::new(grid(0.1), CoefSpec::Const { value: 0.2 }, 1, 1);
        let (_, a) = sc.path(8).unwrap();
        sc.trace = NoiseTrace::FixedOffset;
        let (noise, b) = sc.path(8).unwrap();
        assert_eq!(a.field, b.field);
        assert_eq!(noise.seed(), 8);
    }
}
