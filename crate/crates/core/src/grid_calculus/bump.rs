use serde::{Deserialize, Serialize};

use super::grid::GridSpec;
use crate::error::{Error, Result};

/// Smooth one-dimensional bump `exp(-1/(1-u^2))` on `(-1, 1)`, zero elsewhere.
pub fn psi(u: f64) -> f64 {
    if u.abs() < 1.0 {
        (-1.0 / (1.0 - u * u)).exp()
    } else {
        0.0
    }
}

pub fn psi_prime(u: f64) -> f64 {
    if u.abs() < 1.0 {
        let q = 1.0 - u * u;
        psi(u) * (-2.0 * u / (q * q))
    } else {
        0.0
    }
}

pub fn psi_second(u: f64) -> f64 {
    if u.abs() < 1.0 {
        let q = 1.0 - u * u;
        let g1 = -2.0 * u / (q * q);
        let g2 = -2.0 / (q * q) - 8.0 * u * u / (q * q * q);
        psi(u) * (g1 * g1 + g2)
    } else {
        0.0
    }
}

/// Which partial derivative of a test function to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Derivative {
    Value,
    Dt,
    Dx,
    Dtx,
}

/// Tensor-product bump `psi((t-t0)/rho_t) * psi((x-x0)/rho_x)`, compactly supported
/// inside the open grid rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub t0: f64,
    pub x0: f64,
    pub rho_t: f64,
    pub rho_x: f64,
}

impl TestFunction {
    /// Validates that the support `[t0-rho_t, t0+rho_t] x [x0-rho_x, x0+rho_x]` sits
    /// strictly inside `(0, t_max) x (0, x_max)`.
    pub fn new(t0: f64, x0: f64, rho_t: f64, rho_x: f64, grid: &GridSpec) -> Result<Self> {
        let tf = TestFunction { t0, x0, rho_t, rho_x };
        tf.check_inside(grid)?;
        Ok(tf)
    }

    pub fn check_inside(&self, grid: &GridSpec) -> Result<()> {
        if !(self.rho_t > 0.0 && self.rho_x > 0.0) {
            return Err(Error::InvalidTestFunction(format!(
                "radii must be positive, got ({}, {})",
                self.rho_t, self.rho_x
            )));
        }
        let inside = self.t0 - self.rho_t > 0.0
            && self.t0 + self.rho_t < grid.t_max()
            && self.x0 - self.rho_x > 0.0
            && self.x0 + self.rho_x < grid.x_max();
        if inside {
            Ok(())
        } else {
            Err(Error::InvalidTestFunction(format!(
                "support of bump at ({}, {}) with radii ({}, {}) leaves (0,{})x(0,{})",
                self.t0,
                self.x0,
                self.rho_t,
                self.rho_x,
                grid.t_max(),
                grid.x_max()
            )))
        }
    }

    pub fn eval(&self, t: f64, x: f64, order: Derivative) -> f64 {
        let u = (t - self.t0) / self.rho_t;
        let v = (x - self.x0) / self.rho_x;
        if u.abs() >= 1.0 || v.abs() >= 1.0 {
            return 0.0;
        }
        match order {
            Derivative::Value => psi(u) * psi(v),
            Derivative::Dt => psi_prime(u) * psi(v) / self.rho_t,
            Derivative::Dx => psi(u) * psi_prime(v) / self.rho_x,
            Derivative::Dtx => psi_prime(u) * psi_prime(v) / (self.rho_t * self.rho_x),
        }
    }
}

/// Free-function form of [`TestFunction::eval`].
pub fn bump_eval(tf: &TestFunction, t: f64, x: f64, order: Derivative) -> f64 {
    tf.eval(t, x, order)
}

/// The fixed 12-member battery: 3 centres x 2 radii x 2 anisotropies, scaled to the grid.
pub fn bump_battery(grid: &GridSpec) -> Vec<TestFunction> {
    let (tm, xm) = (grid.t_max(), grid.x_max());
    let scale = tm.min(xm);
    let centres = [(0.5, 0.5), (0.4, 0.6), (0.6, 0.4)];
    let radii = [0.2, 0.3];
    let aniso = [(1.0, 1.0), (1.0, 0.6)];
    let mut out = Vec::with_capacity(12);
    for (ct, cx) in centres {
        for r in radii {
            for (at, ax) in aniso {
                out.push(TestFunction {
                    t0: ct * tm,
                    x0: cx * xm,
                    rho_t: r * at * scale,
                    rho_x: r * ax * scale,
                });
            }
        }
    }
    out
}
