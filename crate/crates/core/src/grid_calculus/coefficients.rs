use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::grid::{Bounds, GridSpec};
use super::quadrature::{central_diff, Axis};
use crate::error::{Error, Result};

/// Shared real function of `(t, x)`.
pub type ScalarFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

pub fn scalar_fn(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> ScalarFn {
    Arc::new(f)
}

/// One monomial `coef * t^t * x^x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyTerm {
    pub coef: f64,
    #[serde(default)]
    pub t: u32,
    #[serde(default)]
    pub x: u32,
}

/// Polynomial in `(t, x)` with exact partial derivatives.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Poly2 {
    terms: Vec<PolyTerm>,
}

impl Poly2 {
    pub fn new(terms: Vec<PolyTerm>) -> Self {
        Poly2 {
            terms: terms.into_iter().filter(|m| m.coef != 0.0).collect(),
        }
    }

    pub fn constant(c: f64) -> Self {
        Poly2::new(vec![PolyTerm { coef: c, t: 0, x: 0 }])
    }

    pub fn eval(&self, t: f64, x: f64) -> f64 {
        self.terms
            .iter()
            .map(|m| m.coef * t.powi(m.t as i32) * x.powi(m.x as i32))
            .sum()
    }

    pub fn d_dt(&self) -> Poly2 {
        Poly2::new(
            self.terms
                .iter()
                .filter(|m| m.t > 0)
                .map(|m| PolyTerm { coef: m.coef * m.t as f64, t: m.t - 1, x: m.x })
                .collect(),
        )
    }

    pub fn d_dx(&self) -> Poly2 {
        Poly2::new(
            self.terms
                .iter()
                .filter(|m| m.x > 0)
                .map(|m| PolyTerm { coef: m.coef * m.x as f64, t: m.t, x: m.x - 1 })
                .collect(),
        )
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn to_fn(&self) -> ScalarFn {
        let p = self.clone();
        Arc::new(move |t, x| p.eval(t, x))
    }
}

impl fmt::Display for Poly2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, m) in self.terms.iter().enumerate() {
            if k > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{}", m.coef)?;
            match m.t {
                0 => {}
                1 => write!(f, "*t")?,
                p => write!(f, "*t^{p}")?,
            }
            match m.x {
                0 => {}
                1 => write!(f, "*x")?,
                p => write!(f, "*x^{p}")?,
            }
        }
        Ok(())
    }
}

/// Named coefficient built-ins accepted in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefSpec {
    Const { value: f64 },
    T {
        #[serde(default = "one")]
        scale: f64,
    },
    X {
        #[serde(default = "one")]
        scale: f64,
    },
    TPlusX {
        #[serde(default = "one")]
        scale: f64,
    },
    Poly { terms: Vec<PolyTerm> },
}

fn one() -> f64 {
    1.0
}

impl CoefSpec {
    pub fn zero() -> Self {
        CoefSpec::Const { value: 0.0 }
    }

    pub fn to_poly(&self) -> Poly2 {
        let term = |coef, t, x| PolyTerm { coef, t, x };
        match *self {
            CoefSpec::Const { value } => Poly2::constant(value),
            CoefSpec::T { scale } => Poly2::new(vec![term(scale, 1, 0)]),
            CoefSpec::X { scale } => Poly2::new(vec![term(scale, 0, 1)]),
            CoefSpec::TPlusX { scale } => Poly2::new(vec![term(scale, 1, 0), term(scale, 0, 1)]),
            CoefSpec::Poly { ref terms } => Poly2::new(terms.clone()),
        }
    }

    /// The specification of `-self`.
    pub fn negated(&self) -> CoefSpec {
        match self {
            CoefSpec::Const { value } => CoefSpec::Const { value: -value },
            CoefSpec::T { scale } => CoefSpec::T { scale: -scale },
            CoefSpec::X { scale } => CoefSpec::X { scale: -scale },
            CoefSpec::TPlusX { scale } => CoefSpec::TPlusX { scale: -scale },
            CoefSpec::Poly { terms } => CoefSpec::Poly {
                terms: terms.iter().map(|m| PolyTerm { coef: -m.coef, ..*m }).collect(),
            },
        }
    }
}

/// Which first partial of a coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Partial {
    DaDt,
    DaDx,
    DbDt,
    DbDx,
}

/// Whether coefficient partials came from closed forms or central differences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartialSource {
    Analytic,
    FiniteDifference,
}

/// Coefficients `a, b, c` of `D phi = a phi_t + b phi_x + c phi`, with optional
/// closed-form partials of `a` and `b`.
#[derive(Clone)]
pub struct CoefficientSet {
    pub a: ScalarFn,
    pub b: ScalarFn,
    pub c: ScalarFn,
    pub da_dt: Option<ScalarFn>,
    pub da_dx: Option<ScalarFn>,
    pub db_dt: Option<ScalarFn>,
    pub db_dx: Option<ScalarFn>,
    label: String,
}

impl fmt::Debug for CoefficientSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientSet")
            .field("label", &self.label)
            .field("partials", &self.partial_source())
            .finish()
    }
}

impl CoefficientSet {
    /// Coefficients without closed-form partials; these fall back to central differences.
    pub fn new(a: ScalarFn, b: ScalarFn, c: ScalarFn) -> Self {
        CoefficientSet {
            a,
            b,
            c,
            da_dt: None,
            da_dx: None,
            db_dt: None,
            db_dx: None,
            label: "user functions".into(),
        }
    }

    pub fn with_partials(mut self, da_dt: ScalarFn, da_dx: ScalarFn, db_dt: ScalarFn, db_dx: ScalarFn) -> Self {
        self.da_dt = Some(da_dt);
        self.da_dx = Some(da_dx);
        self.db_dt = Some(db_dt);
        self.db_dx = Some(db_dx);
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn from_polys(a: &Poly2, b: &Poly2, c: &Poly2) -> Self {
        CoefficientSet::new(a.to_fn(), b.to_fn(), c.to_fn())
            .with_partials(a.d_dt().to_fn(), a.d_dx().to_fn(), b.d_dt().to_fn(), b.d_dx().to_fn())
            .with_label(format!("a = {a}; b = {b}; c = {c}"))
    }

    pub fn from_specs(a: &CoefSpec, b: &CoefSpec, c: &CoefSpec) -> Self {
        CoefficientSet::from_polys(&a.to_poly(), &b.to_poly(), &c.to_poly())
    }

    pub fn constant(a: f64, b: f64, c: f64) -> Self {
        CoefficientSet::from_polys(&Poly2::constant(a), &Poly2::constant(b), &Poly2::constant(c))
    }

    /// Operator with `b = -a`, the only form admitting function-valued solutions under
    /// diagonal Brownian-sheet noise.
    pub fn transport(a: &Poly2, c: &Poly2) -> Self {
        let neg = Poly2::new(
            a.terms
                .iter()
                .map(|m| PolyTerm { coef: -m.coef, ..*m })
                .collect(),
        );
        CoefficientSet::from_polys(a, &neg, c)
    }

    pub fn a(&self, t: f64, x: f64) -> f64 {
        (self.a)(t, x)
    }

    pub fn b(&self, t: f64, x: f64) -> f64 {
        (self.b)(t, x)
    }

    pub fn c(&self, t: f64, x: f64) -> f64 {
        (self.c)(t, x)
    }

    pub fn partial_source(&self) -> PartialSource {
        if self.da_dt.is_some() && self.da_dx.is_some() && self.db_dt.is_some() && self.db_dx.is_some() {
            PartialSource::Analytic
        } else {
            PartialSource::FiniteDifference
        }
    }

    /// Partial derivative, analytic when available, otherwise by central differences
    /// with step `h_fd` (one-sided near `bounds`).
    pub fn partial(&self, which: Partial, t: f64, x: f64, h_fd: f64, bounds: Option<Bounds>) -> f64 {
        let (analytic, f, axis) = match which {
            Partial::DaDt => (&self.da_dt, &self.a, Axis::T),
            Partial::DaDx => (&self.da_dx, &self.a, Axis::X),
            Partial::DbDt => (&self.db_dt, &self.b, Axis::T),
            Partial::DbDx => (&self.db_dx, &self.b, Axis::X),
        };
        match analytic {
            Some(d) => d(t, x),
            None => central_diff(|s, y| f(s, y), (t, x), axis, h_fd, bounds),
        }
    }

    /// Checks that `a, b, c` are finite on the coefficient domain of `grid` and that any
    /// closed-form partials agree with central differences within `rel_tol`.
    pub fn validate(&self, grid: &GridSpec, rel_tol: f64) -> Result<()> {
        let bounds = grid.coefficient_bounds();
        let steps = 24usize;
        let h_fd = 1e-5;
        for p in 0..=steps {
            for q in 0..=steps {
                let t = bounds.t.1 * p as f64 / steps as f64;
                let x = bounds.x.1 * q as f64 / steps as f64;
                for (name, v) in [("a", self.a(t, x)), ("b", self.b(t, x)), ("c", self.c(t, x))] {
                    if !v.is_finite() {
                        return Err(Error::Coefficients(format!("{name}({t}, {x}) = {v}")));
                    }
                }
                let checks = [
                    (Partial::DaDt, &self.da_dt, &self.a, Axis::T, "da/dt"),
                    (Partial::DaDx, &self.da_dx, &self.a, Axis::X, "da/dx"),
                    (Partial::DbDt, &self.db_dt, &self.b, Axis::T, "db/dt"),
                    (Partial::DbDx, &self.db_dx, &self.b, Axis::X, "db/dx"),
                ];
                for (_, analytic, f, axis, name) in checks {
                    if let Some(d) = analytic {
                        let exact = d(t, x);
                        let fd = central_diff(|s, y| f(s, y), (t, x), axis, h_fd, Some(bounds));
                        if (exact - fd).abs() > rel_tol * (1.0 + exact.abs()) {
                            return Err(Error::Coefficients(format!(
                                "{name} at ({t}, {x}): closed form {exact} vs finite difference {fd}"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
