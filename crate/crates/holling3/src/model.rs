//! Model definitions: dimensional and nondimensional parameter sets, the
//! nondimensionalization map, vector fields, and the analytic Jacobian.
//!
//! The nondimensional system is
//!
//! ```text
//! dx/dt = x (1 - x/gamma) - x^2 y / D
//! dy/dt = delta (x^2 + xi) y / D - m y,      D = 1 + x^2 + alpha xi + eps y
//! ```
//!
//! with `xi = 0` recovering the system without additional food.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Foraging-process constants behind the functional response: handling
/// times per interaction and encounter rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForagingParams {
    /// Handling time per prey item.
    pub h_n: f64,
    /// Handling time per unit of additional food.
    pub h_a: f64,
    /// Time lost per predator-predator encounter.
    pub h_p: f64,
    /// Search rate per unit squared prey density.
    pub e_n: f64,
    /// Search rate per unit of additional food.
    pub e_a: f64,
    /// Predator-predator encounter rate constant.
    pub e_p: f64,
}

impl ForagingParams {
    pub fn new(h_n: f64, h_a: f64, h_p: f64, e_n: f64, e_a: f64, e_p: f64) -> Result<Self> {
        for (name, v) in [
            ("h_n", h_n),
            ("h_a", h_a),
            ("h_p", h_p),
            ("e_n", e_n),
            ("e_a", e_a),
            ("e_p", e_p),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::NegativeInput { name, value: v });
            }
        }
        if h_n <= 0.0 || e_n <= 0.0 {
            return Err(Error::InvalidParameter(
                "h_n and e_n must be positive (1/(e_n h_n) appears in the response)".into(),
            ));
        }
        Ok(Self { h_n, h_a, h_p, e_n, e_a, e_p })
    }
}

/// Per-predator consumption rates of prey (`g`) and additional food (`h`)
/// when searching, handling, and rival encounters share one time budget.
///
/// Both rates share the denominator
/// `1/(e_n h_n) + N^2 + (h_a e_a)/(h_n e_n) A + (h_p e_p)/(h_n e_n) P`,
/// so `g * e_a * A == h * e_n * N^2` exactly.
pub fn holling3_rates(fp: &ForagingParams, prey: f64, predator: f64, food: f64) -> Result<(f64, f64)> {
    for (name, v) in [("prey", prey), ("predator", predator), ("food", food)] {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::NegativeInput { name, value: v });
        }
    }
    let en_hn = fp.e_n * fp.h_n;
    let denom = 1.0 / en_hn
        + prey * prey
        + (fp.h_a * fp.e_a) / (fp.h_n * fp.e_n) * food
        + (fp.h_p * fp.e_p) / (fp.h_n * fp.e_n) * predator;
    let g = (prey * prey / fp.h_n) / denom;
    let h = (fp.e_a / en_hn) * food / denom;
    Ok((g, h))
}

/// Dimensional parameters of the predator-prey systems.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimensionalParams {
    /// Prey intrinsic growth rate (1/time).
    pub r: f64,
    /// Prey carrying capacity (biomass).
    pub k: f64,
    /// Half-saturation prey density (biomass).
    pub a: f64,
    /// Maximum predation rate (1/time).
    pub c: f64,
    /// Maximum predator growth rate (1/time).
    pub delta1: f64,
    /// Predator mortality rate (1/time).
    pub m1: f64,
    /// Effectual-food coefficient (dimensionless).
    pub eta: f64,
    /// Additional food biomass.
    pub food: f64,
    /// Mutual-interference strength.
    pub eps1: f64,
}

impl DimensionalParams {
    pub fn new(
        r: f64,
        k: f64,
        a: f64,
        c: f64,
        delta1: f64,
        m1: f64,
        eta: f64,
        food: f64,
        eps1: f64,
    ) -> Result<Self> {
        for (name, v) in [("r", r), ("k", k), ("a", a), ("c", c), ("delta1", delta1), ("m1", m1)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("eta", eta), ("food", food), ("eps1", eps1)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::NegativeInput { name, value: v });
            }
        }
        Ok(Self { r, k, a, c, delta1, m1, eta, food, eps1 })
    }
}

/// Nondimensional parameter vector governing both systems.
///
/// `alpha` is the quality of additional food (ratio of the predator's
/// maximum growth rates on prey and on food) and `xi` its quantity; they
/// are independent knobs rather than outputs of the scaling map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub gamma: f64,
    pub xi: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub m: f64,
}

impl ModelParams {
    /// Validates `gamma > 0`, `xi >= 0`, `alpha >= 0`, `epsilon > 0` and the
    /// feasibility constraint `delta > m > 0`.
    pub fn new(gamma: f64, xi: f64, alpha: f64, epsilon: f64, delta: f64, m: f64) -> Result<Self> {
        let p = Self { gamma, xi, alpha, epsilon, delta, m };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.gamma, self.xi, self.alpha, self.epsilon, self.delta, self.m];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("parameters must be finite".into()));
        }
        if self.gamma <= 0.0 {
            return Err(Error::InvalidParameter(format!("gamma must be positive, got {}", self.gamma)));
        }
        if self.xi < 0.0 {
            return Err(Error::NegativeInput { name: "xi", value: self.xi });
        }
        if self.alpha < 0.0 {
            return Err(Error::NegativeInput { name: "alpha", value: self.alpha });
        }
        if self.epsilon <= 0.0 {
            return Err(Error::InvalidParameter(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.delta > self.m && self.m > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "require delta > m > 0, got delta = {}, m = {}",
                self.delta, self.m
            )));
        }
        Ok(())
    }

    /// Parameters as seen by the selected system: the initial system is the
    /// additional-food system with `xi = 0`.
    pub fn effective(&self, kind: SystemKind) -> ModelParams {
        match kind {
            SystemKind::Initial => ModelParams { xi: 0.0, ..*self },
            SystemKind::AdditionalFood => *self,
        }
    }
}

/// Prey/predator densities in nondimensional units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub x: f64,
    pub y: f64,
}

impl State {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        if !x.is_finite() || x < 0.0 {
            return Err(Error::NegativeInput { name: "x", value: x });
        }
        if !y.is_finite() || y < 0.0 {
            return Err(Error::NegativeInput { name: "y", value: y });
        }
        Ok(Self { x, y })
    }
}

/// Which of the two systems to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    /// No additional food; evaluates bit-identically to `AdditionalFood`
    /// with `xi = 0`.
    Initial,
    AdditionalFood,
}

/// The shared response denominator `1 + x^2 + alpha xi + eps y`.
#[inline]
pub fn denominator(p: &ModelParams, s: State) -> f64 {
    1.0 + s.x * s.x + p.alpha * p.xi + p.epsilon * s.y
}

/// Right-hand side (dx/dt, dy/dt) of the selected system.
pub fn vector_field(p: &ModelParams, s: State, kind: SystemKind) -> (f64, f64) {
    let p = p.effective(kind);
    let d = denominator(&p, s);
    let dx = s.x * (1.0 - s.x / p.gamma) - s.x * s.x * s.y / d;
    let dy = p.delta * (s.x * s.x + p.xi) * s.y / d - p.m * s.y;
    (dx, dy)
}

/// Analytic Jacobian of the vector field, row-major `[[df/dx, df/dy], [dg/dx, dg/dy]]`.
pub fn jacobian(p: &ModelParams, s: State, kind: SystemKind) -> [[f64; 2]; 2] {
    let p = p.effective(kind);
    let (x, y) = (s.x, s.y);
    let axi = p.alpha * p.xi;
    let d = 1.0 + x * x + axi + p.epsilon * y;
    let d2 = d * d;
    let fx = 1.0 - 2.0 * x / p.gamma - 2.0 * x * y * (1.0 + axi + p.epsilon * y) / d2;
    let fy = -x * x * (1.0 + x * x + axi) / d2;
    let gx = 2.0 * p.delta * x * y * (1.0 + (p.alpha - 1.0) * p.xi + p.epsilon * y) / d2;
    let gy = p.delta * (x * x + p.xi) * (1.0 + x * x + axi) / d2 - p.m;
    [[fx, fy], [gx, gy]]
}

/// Maps dimensional parameters onto the nondimensional vector via
/// `gamma = K/a`, `xi = eta A / a^2`, `epsilon = eps1 a r / c`,
/// `delta = delta1 / c`, `m = m1 / c`.
///
/// The scaling does not produce `alpha`; it is supplied directly as the
/// food-quality ratio.
pub fn nondimensionalize(dp: &DimensionalParams, alpha: f64) -> Result<ModelParams> {
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::NegativeInput { name: "alpha", value: alpha });
    }
    let gamma = dp.k / dp.a;
    let xi = dp.eta * dp.food / (dp.a * dp.a);
    let epsilon = dp.eps1 * dp.a * dp.r / dp.c;
    let delta = dp.delta1 / dp.c;
    let m = dp.m1 / dp.c;
    ModelParams::new(gamma, xi, alpha, epsilon, delta, m)
}

/// Right-hand side (dN/dT, dP/dT) of the dimensional additional-food system.
///
/// Only used to cross-check the nondimensionalization; analysis and the
/// public surface work on the nondimensional form.
#[cfg_attr(not(test), allow(dead_code))]
pub(crate) fn dimensional_vector_field(dp: &DimensionalParams, alpha: f64, n: f64, p: f64) -> (f64, f64) {
    let a2 = dp.a * dp.a;
    let d = a2 + n * n + alpha * dp.eta * dp.food + dp.eps1 * a2 * p;
    let dn = dp.r * n * (1.0 - n / dp.k) - dp.c * n * n * p / d;
    let dpdt = dp.delta1 * (n * n + dp.eta * dp.food) * p / d - dp.m1 * p;
    (dn, dpdt)
}
