//! The first-order operator `D phi = a phi_t + b phi_x + c phi`, its formal adjoint, and
//! the test-function pairings that define weak solutions.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid_calculus::{
    integrate_lattice, Bounds, CoefficientSet, Derivative, GridSpec, Partial, PartialSource, Poly2, ScalarFn,
    ScalarField, TestFunction,
};

/// A function with first partials available pointwise.
pub trait SmoothFn {
    fn value(&self, t: f64, x: f64) -> f64;
    fn dt(&self, t: f64, x: f64) -> f64;
    fn dx(&self, t: f64, x: f64) -> f64;
}

impl SmoothFn for Poly2 {
    fn value(&self, t: f64, x: f64) -> f64 {
        self.eval(t, x)
    }
    fn dt(&self, t: f64, x: f64) -> f64 {
        self.d_dt().eval(t, x)
    }
    fn dx(&self, t: f64, x: f64) -> f64 {
        self.d_dx().eval(t, x)
    }
}

/// A closure bundled with closed-form partials.
#[derive(Clone)]
pub struct FnWithPartials {
    pub f: ScalarFn,
    pub f_t: ScalarFn,
    pub f_x: ScalarFn,
}

impl SmoothFn for FnWithPartials {
    fn value(&self, t: f64, x: f64) -> f64 {
        (self.f)(t, x)
    }
    fn dt(&self, t: f64, x: f64) -> f64 {
        (self.f_t)(t, x)
    }
    fn dx(&self, t: f64, x: f64) -> f64 {
        (self.f_x)(t, x)
    }
}

#[derive(Debug, Clone)]
pub struct OperatorD {
    coeffs: CoefficientSet,
    h_fd: f64,
    bounds: Option<Bounds>,
}

impl OperatorD {
    pub fn new(coeffs: CoefficientSet) -> Self {
        OperatorD {
            coeffs,
            h_fd: 1e-5,
            bounds: None,
        }
    }

    /// Finite-difference settings used when a coefficient partial has no closed form.
    pub fn with_fd(mut self, h_fd: f64, bounds: Option<Bounds>) -> Self {
        self.h_fd = h_fd;
        self.bounds = bounds;
        self
    }

    pub fn coeffs(&self) -> &CoefficientSet {
        &self.coeffs
    }

    pub fn partial_source(&self) -> PartialSource {
        self.coeffs.partial_source()
    }

    pub(crate) fn partial(&self, which: Partial, t: f64, x: f64) -> f64 {
        self.coeffs.partial(which, t, x, self.h_fd, self.bounds)
    }

    pub fn apply(&self, f: &dyn SmoothFn, t: f64, x: f64) -> f64 {
        let c = &self.coeffs;
        c.a(t, x) * f.dt(t, x) + c.b(t, x) * f.dx(t, x) + c.c(t, x) * f.value(t, x)
    }

    /// `D* phi = -(a phi)_t - (b phi)_x + c phi`, expanded with the product rule.
    pub fn adjoint(&self, tf: &TestFunction, t: f64, x: f64) -> f64 {
        let phi = tf.eval(t, x, Derivative::Value);
        let phi_t = tf.eval(t, x, Derivative::Dt);
        let phi_x = tf.eval(t, x, Derivative::Dx);
        if phi == 0.0 && phi_t == 0.0 && phi_x == 0.0 {
            return 0.0;
        }
        let c = &self.coeffs;
        -self.partial(Partial::DaDt, t, x) * phi - c.a(t, x) * phi_t - self.partial(Partial::DbDx, t, x) * phi
            - c.b(t, x) * phi_x
            + c.c(t, x) * phi
    }
}

pub fn apply_d(op: &OperatorD, f: &dyn SmoothFn, t: f64, x: f64) -> f64 {
    op.apply(f, t, x)
}

pub fn apply_adjoint(op: &OperatorD, tf: &TestFunction, t: f64, x: f64) -> f64 {
    op.adjoint(tf, t, x)
}

/// `|<D f, phi> - <f, D* phi>|` with both pairings by trapezoid quadrature on `grid`.
pub fn adjoint_identity_residual(op: &OperatorD, f: &dyn SmoothFn, tf: &TestFunction, grid: &GridSpec) -> f64 {
    let lhs = integrate_lattice(grid, |i, j| {
        let (t, x) = (grid.t(i), grid.x(j));
        let phi = tf.eval(t, x, Derivative::Value);
        if phi == 0.0 {
            0.0
        } else {
            op.apply(f, t, x) * phi
        }
    });
    let rhs = integrate_lattice(grid, |i, j| {
        let (t, x) = (grid.t(i), grid.x(j));
        f.value(t, x) * op.adjoint(tf, t, x)
    });
    (lhs - rhs).abs()
}

/// `<W, D* phi>` on the lattice of `w`.
fn noise_pairing(w: &ScalarField, op: &OperatorD, tf: &TestFunction) -> f64 {
    let g = w.grid();
    integrate_lattice(g, |i, j| {
        let v = w.get(i, j);
        if v == 0.0 {
            0.0
        } else {
            v * op.adjoint(tf, g.t(i), g.x(j))
        }
    })
}

/// Residual of the weak form of `r_t - r_x = D W`:
/// `| <r, phi_t - phi_x> + <W, D* phi> |`, the right side being
/// `<W, (a phi)_t + (b phi)_x - c phi> = -<W, D* phi>`.
pub fn weak_residual_transport(r: &ScalarField, w: &ScalarField, op: &OperatorD, tf: &TestFunction) -> Result<f64> {
    r.grid().ensure_same(w.grid())?;
    tf.check_inside(r.grid())?;
    let g = r.grid();
    let lhs = integrate_lattice(g, |i, j| {
        let (t, x) = (g.t(i), g.x(j));
        r.get(i, j) * (tf.eval(t, x, Derivative::Dt) - tf.eval(t, x, Derivative::Dx))
    });
    Ok((lhs + noise_pairing(w, op, tf)).abs())
}

/// Residual of the weak form of `U_t = D W`: `| -<U, phi_t> - <W, D* phi> |`.
pub fn weak_residual_theorem1(u: &ScalarField, w: &ScalarField, op: &OperatorD, tf: &TestFunction) -> Result<f64> {
    u.grid().ensure_same(w.grid())?;
    tf.check_inside(u.grid())?;
    let g = u.grid();
    let lhs = -integrate_lattice(g, |i, j| u.get(i, j) * tf.eval(g.t(i), g.x(j), Derivative::Dt));
    Ok((lhs - noise_pairing(w, op, tf)).abs())
}

/// One residual evaluation, as emitted in JSON reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualRecord {
    pub h: f64,
    pub seed: u64,
    pub test_function_id: usize,
    pub residual: f64,
    pub partials: PartialSource,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_calculus::{make_grid, scalar_fn, PolyTerm};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn poly(terms: &[(f64, u32, u32)]) -> Poly2 {
        Poly2::new(terms.iter().map(|&(coef, t, x)| PolyTerm { coef, t, x }).collect())
    }

    fn grid(h: f64) -> GridSpec {
        make_grid(1.0, 1.0, h).unwrap()
    }

    fn bump() -> TestFunction {
        TestFunction::new(0.5, 0.45, 0.3, 0.25, &grid(0.01)).unwrap()
    }

    #[test]
    fn operator_examples() {
        let f_t = poly(&[(1.0, 1, 0)]);
        let d = OperatorD::new(CoefficientSet::constant(1.0, 0.0, 0.0));
        assert_eq!(apply_d(&d, &f_t, 0.3, 0.8), 1.0);

        let mult = OperatorD::new(CoefficientSet::constant(0.0, 0.0, 1.0));
        let f = poly(&[(2.0, 2, 1), (1.0, 0, 0)]);
        assert_eq!(apply_d(&mult, &f, 0.5, 0.4), f.eval(0.5, 0.4));

        let transport = OperatorD::new(CoefficientSet::constant(1.0, 1.0, 0.0));
        let null = poly(&[(1.0, 1, 0), (-1.0, 0, 1)]);
        assert_eq!(apply_d(&transport, &null, 0.7, 0.2), 0.0);
    }

    #[test]
    fn adjoint_constant_coefficients() {
        let tf = bump();
        let (t, x) = (0.41, 0.52);
        let d = OperatorD::new(CoefficientSet::constant(1.0, 0.0, 0.0));
        assert_eq!(apply_adjoint(&d, &tf, t, x), -tf.eval(t, x, Derivative::Dt));
        let (a, b, c) = (0.7, -1.3, 2.1);
        let d = OperatorD::new(CoefficientSet::constant(a, b, c));
        let expect = -a * tf.eval(t, x, Derivative::Dt) - b * tf.eval(t, x, Derivative::Dx)
            + c * tf.eval(t, x, Derivative::Value);
        assert!((apply_adjoint(&d, &tf, t, x) - expect).abs() < 1e-15);
    }

    #[test]
    fn adjoint_time_dependent_coefficient() {
        let tf = bump();
        let d = OperatorD::new(CoefficientSet::from_polys(&poly(&[(1.0, 1, 0)]), &Poly2::default(), &Poly2::default()));
        let e = 1e-5;
        for (t, x) in [(0.4, 0.5), (0.6, 0.3), (0.35, 0.6)] {
            let closed = -tf.eval(t, x, Derivative::Value) - t * tf.eval(t, x, Derivative::Dt);
            let prod = |s: f64| s * tf.eval(s, x, Derivative::Value);
            let fd = -(prod(t + e) - prod(t - e)) / (2.0 * e);
            assert!((apply_adjoint(&d, &tf, t, x) - closed).abs() < 1e-14);
            assert!((closed - fd).abs() < 1e-6);
        }
    }

    #[test]
    fn adjoint_matches_brute_force_expansion() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let tf = bump();
        for _ in 0..100 {
            let mut coef = || rng.random_range(-1.5..1.5);
            let a = poly(&[(coef(), 0, 0), (coef(), 1, 0), (coef(), 0, 1), (coef(), 1, 1), (coef(), 2, 0)]);
            let b = poly(&[(coef(), 0, 0), (coef(), 1, 0), (coef(), 0, 1), (coef(), 0, 2)]);
            let c = poly(&[(coef(), 0, 0), (coef(), 1, 1)]);
            let op = OperatorD::new(CoefficientSet::from_polys(&a, &b, &c));
            let t = rng.random_range(0.22..0.78);
            let x = rng.random_range(0.22..0.68);
            let e = 1e-5;
            let a_phi = |s: f64, y: f64| a.eval(s, y) * tf.eval(s, y, Derivative::Value);
            let b_phi = |s: f64, y: f64| b.eval(s, y) * tf.eval(s, y, Derivative::Value);
            let brute = -(a_phi(t + e, x) - a_phi(t - e, x)) / (2.0 * e) - (b_phi(t, x + e) - b_phi(t, x - e)) / (2.0 * e)
                + c.eval(t, x) * tf.eval(t, x, Derivative::Value);
            assert!((op.adjoint(&tf, t, x) - brute).abs() < 1e-6);
        }
    }

    #[test]
    fn fd_partials_fall_back() {
        let a: ScalarFn = scalar_fn(|t, x| t * t + x);
        let op = OperatorD::new(CoefficientSet::new(a, scalar_fn(|_, x| x * x), scalar_fn(|_, _| 0.5)));
        assert_eq!(op.partial_source(), PartialSource::FiniteDifference);
        let analytic = OperatorD::new(CoefficientSet::from_polys(
            &poly(&[(1.0, 2, 0), (1.0, 0, 1)]),
            &poly(&[(1.0, 0, 2)]),
            &Poly2::constant(0.5),
        ));
        let tf = bump();
        for (t, x) in [(0.4, 0.5), (0.6, 0.3)] {
            assert!((op.adjoint(&tf, t, x) - analytic.adjoint(&tf, t, x)).abs() < 1e-8);
        }
    }

    #[test]
    fn adjoint_identity_zero_function() {
        let op = OperatorD::new(CoefficientSet::constant(1.0, 2.0, 3.0));
        assert_eq!(adjoint_identity_residual(&op, &Poly2::default(), &bump(), &grid(0.05)), 0.0);
    }

    #[test]
    fn adjoint_identity_transport_in_time() {
        let op = OperatorD::new(CoefficientSet::constant(1.0, 0.0, 0.0));
        let f = poly(&[(1.0, 1, 0)]);
        assert!(adjoint_identity_residual(&op, &f, &bump(), &grid(0.01)) < 1e-4);
    }

    fn trig() -> FnWithPartials {
        FnWithPartials {
            f: Arc::new(|t: f64, x: f64| t.sin() * x.cos()),
            f_t: Arc::new(|t: f64, x: f64| t.cos() * x.cos()),
            f_x: Arc::new(|t: f64, x: f64| -t.sin() * x.sin()),
        }
    }

    #[test]
    fn adjoint_identity_converges_at_least_second_order() {
        let op = OperatorD::new(CoefficientSet::from_polys(
            &poly(&[(1.0, 1, 0), (1.0, 0, 1)]),
            &Poly2::constant(1.0),
            &poly(&[(1.0, 0, 1)]),
        ));
        let tf = bump();
        let f = trig();
        let hs = [0.05, 0.025, 0.0125];
        let res: Vec<f64> = hs.iter().map(|&h| adjoint_identity_residual(&op, &f, &tf, &grid(h))).collect();
        // Smooth, compactly supported integrands: the trapezoid rule converges at least
        // as fast as h^2 (in fact faster).
        for w in res.windows(2) {
            assert!(w[1] < w[0], "{res:?}");
            let slope = (w[0] / w[1]).log2();
            assert!(slope >= 1.7, "slope {slope} from {res:?}");
        }
    }

    #[test]
    fn transport_weak_form_deterministic() {
        let g = grid(0.01);
        let r = ScalarField::from_fn(g, |t, x| 0.03 + 0.01 * (t + x) - 0.002 * (t + x).powi(2)).unwrap();
        let w = ScalarField::zeros(g);
        let op = OperatorD::new(CoefficientSet::constant(1.0, -1.0, 0.0));
        for tf in crate::grid_calculus::bump_battery(&g) {
            assert!(weak_residual_transport(&r, &w, &op, &tf).unwrap() < 1e-3);
        }
    }

    #[test]
    fn theorem1_weak_form_trivial_cases() {
        let g = grid(0.02);
        let op = OperatorD::new(CoefficientSet::constant(1.0, 0.5, -0.2));
        let tf = TestFunction::new(0.5, 0.5, 0.3, 0.3, &g).unwrap();
        let zero = ScalarField::zeros(g);
        assert_eq!(weak_residual_theorem1(&zero, &zero, &op, &tf).unwrap(), 0.0);
        let u = ScalarField::from_fn(g, |_, x| 1.0 + x * x).unwrap();
        assert!(weak_residual_theorem1(&u, &zero, &op, &tf).unwrap() < 1e-10);
    }

    #[test]
    fn residuals_check_grids() {
        let op = OperatorD::new(CoefficientSet::constant(1.0, -1.0, 0.0));
        let tf = TestFunction::new(0.5, 0.5, 0.3, 0.3, &grid(0.1)).unwrap();
        let a = ScalarField::zeros(grid(0.1));
        let b = ScalarField::zeros(grid(0.05));
        assert!(weak_residual_transport(&a, &b, &op, &tf).is_err());
        assert!(weak_residual_theorem1(&a, &b, &op, &tf).is_err());
    }
}
