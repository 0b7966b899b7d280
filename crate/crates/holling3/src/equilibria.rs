//! Equilibria of both systems, nullcline geometry, and existence
//! conditions.

use serde::Serialize;

use crate::cubic::{solve_cubic, solve_quadratic};
use crate::error::{Error, Result};
use crate::model::{jacobian, vector_field, ModelParams, State, SystemKind};

/// Which invariant set an equilibrium lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EquilibriumKind {
    /// The origin.
    Trivial,
    /// Prey at carrying capacity, no predators: (gamma, 0).
    AxialPrey,
    /// Predators sustained by additional food alone: (0, y2).
    AxialPredator,
    /// Coexistence in the open quadrant.
    Interior,
}

/// An equilibrium point together with the worst component of the vector
/// field evaluated there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Equilibrium {
    pub point: State,
    pub kind: EquilibriumKind,
    pub residual: f64,
}

/// Shape of the nontrivial prey nullcline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PreyNullclineShape {
    /// Monotonically decreasing between its pole and gamma.
    Monotone,
    /// Exhibits a hump and a dip before reaching (gamma, 0).
    CrestTrough,
}

/// Threshold on gamma above which the prey nullcline develops a crest and
/// trough: `4 eps + sqrt(16 eps^2 + 27 (1 + alpha xi))`.
pub fn nullcline_threshold(p: &ModelParams) -> f64 {
    let axi = p.alpha * p.xi;
    4.0 * p.epsilon + (16.0 * p.epsilon * p.epsilon + 27.0 * (1.0 + axi)).sqrt()
}

/// Classifies the prey nullcline; crest/trough requires the strict
/// inequality `gamma > threshold`.
pub fn nullcline_shape(p: &ModelParams) -> (PreyNullclineShape, f64) {
    let threshold = nullcline_threshold(p);
    let shape = if p.gamma > threshold {
        PreyNullclineShape::CrestTrough
    } else {
        PreyNullclineShape::Monotone
    };
    (shape, threshold)
}

/// x-coordinate of the prey nullcline's vertical asymptote,
/// `eps / (1 + eps/gamma)`.
pub fn prey_nullcline_pole(p: &ModelParams) -> f64 {
    p.epsilon / (1.0 + p.epsilon / p.gamma)
}

/// Height of the nontrivial prey nullcline at `x`:
/// `(1 - x/gamma)(1 + x^2 + alpha xi) / ((1 + eps/gamma) x - eps)`.
///
/// Positive exactly between the pole and gamma.
pub fn prey_nullcline(p: &ModelParams, x: f64) -> Result<f64> {
    let pole = prey_nullcline_pole(p);
    if (x - pole).abs() <= 1e-12 {
        return Err(Error::NullclineAsymptote { x, pole });
    }
    let axi = p.alpha * p.xi;
    Ok((1.0 - x / p.gamma) * (1.0 + x * x + axi) / ((1.0 + p.epsilon / p.gamma) * x - p.epsilon))
}

/// Height of the nontrivial predator nullcline at `x`, an upward parabola:
/// `((delta - m) x^2 + delta xi - m (1 + alpha xi)) / (m eps)`.
pub fn predator_nullcline(p: &ModelParams, x: f64) -> f64 {
    ((p.delta - p.m) * x * x + food_margin(p)) / (p.m * p.epsilon)
}

/// The recurring sign quantity `delta xi - m (1 + alpha xi)`: positive
/// exactly when additional food alone sustains predators.
pub fn food_margin(p: &ModelParams) -> f64 {
    p.delta * p.xi - p.m * (1.0 + p.alpha * p.xi)
}

/// True when an interior equilibrium exists:
/// `delta xi - m (1 + alpha xi) > -gamma^2 (delta - m)`.
pub fn interior_existence_condition(p: &ModelParams) -> bool {
    food_margin(p) > -p.gamma * p.gamma * (p.delta - p.m)
}

/// Positive prey abscissa of the food-free interior equilibrium.
pub fn initial_interior_x(p: &ModelParams) -> f64 {
    let egd = p.epsilon * p.gamma * p.delta;
    let lead = (p.delta - p.m) * p.gamma + p.delta * p.epsilon;
    (egd + (egd * egd + 4.0 * p.m * p.gamma * lead).sqrt()) / (2.0 * lead)
}

/// All equilibria of the selected system: the origin, (gamma, 0), the
/// food-only axial point when it exists, and every admissible interior
/// point sorted by prey density.
pub fn equilibria_all(p: &ModelParams, kind: SystemKind) -> Vec<Equilibrium> {
    let ep = p.effective(kind);
    let mut out = Vec::with_capacity(4);
    out.push(make(p, kind, State { x: 0.0, y: 0.0 }, EquilibriumKind::Trivial));
    out.push(make(p, kind, State { x: ep.gamma, y: 0.0 }, EquilibriumKind::AxialPrey));

    if kind == SystemKind::AdditionalFood && food_margin(&ep) > 0.0 {
        let y2 = food_margin(&ep) / (ep.m * ep.epsilon);
        out.push(make(p, kind, State { x: 0.0, y: y2 }, EquilibriumKind::AxialPredator));
    }

    for x in interior_abscissas(&ep) {
        let y = predator_nullcline(&ep, x);
        if y > 0.0 {
            let point = polish(&ep, State { x, y });
            if point.x > 0.0 && point.y > 0.0 {
                out.push(make(p, kind, point, EquilibriumKind::Interior));
            }
        }
    }
    out
}

/// Positive roots of the interior-equilibrium polynomial.
fn interior_abscissas(p: &ModelParams) -> Vec<f64> {
    let margin = food_margin(p);
    let lead = p.gamma * (p.delta - p.m) + p.epsilon * p.delta;
    // delta > m keeps the leading coefficient away from zero.
    assert!(lead > 0.0, "interior cubic degenerated: gamma (delta - m) + eps delta = {lead}");
    let roots = if p.xi == 0.0 {
        // Constant term vanishes; the positive root of the remaining
        // quadratic is the closed form used for the food-free system.
        solve_quadratic(lead, -p.epsilon * p.delta * p.gamma, -p.gamma * p.m)
    } else {
        let b = -p.epsilon * p.delta * p.gamma;
        let c = p.epsilon * p.delta * p.xi + p.gamma * margin;
        let d = -p.epsilon * p.delta * p.gamma * p.xi;
        solve_cubic(lead, b, c, d).expect("nonzero leading coefficient")
    };
    roots.into_iter().filter(|x| *x > 0.0).collect()
}

/// A couple of Newton steps on the full planar system to push the
/// residual to roundoff.
fn polish(p: &ModelParams, mut s: State) -> State {
    for _ in 0..3 {
        let (f, g) = vector_field(p, s, SystemKind::AdditionalFood);
        let j = jacobian(p, s, SystemKind::AdditionalFood);
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det.abs() < 1e-300 {
            break;
        }
        let dx = (f * j[1][1] - g * j[0][1]) / det;
        let dy = (g * j[0][0] - f * j[1][0]) / det;
        if !(dx.is_finite() && dy.is_finite()) {
            break;
        }
        s = State { x: s.x - dx, y: s.y - dy };
    }
    s
}

fn make(p: &ModelParams, kind: SystemKind, point: State, ekind: EquilibriumKind) -> Equilibrium {
    let (f, g) = vector_field(p, point, kind);
    Equilibrium { point, kind: ekind, residual: f.abs().max(g.abs()) }
}
