//! Eigenvalue classification of equilibria, the interior-equilibrium
//! stability theorems, the Region I-IV partition of the food-free
//! parameter space, Hopf location, and the bifurcation curves in the
//! (quality, quantity) plane.

use num_complex::Complex64;
use serde::Serialize;

use crate::cubic::{solve_cubic, solve_quadratic};
use crate::equilibria::{food_margin, initial_interior_x, Equilibrium, EquilibriumKind};
use crate::error::{Error, Result};
use crate::model::{jacobian, ModelParams, SystemKind};

/// Real parts closer to zero than this are treated as ties.
pub const HYPERBOLICITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityClass {
    StableNode,
    StableFocus,
    UnstableNode,
    UnstableFocus,
    Saddle,
    NonHyperbolic,
}

impl StabilityClass {
    pub fn is_stable(self) -> bool {
        matches!(self, StabilityClass::StableNode | StabilityClass::StableFocus)
    }

    pub fn is_unstable(self) -> bool {
        matches!(self, StabilityClass::UnstableNode | StabilityClass::UnstableFocus)
    }
}

/// Classification along with the eigenvalues it was derived from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Classified {
    pub class: StabilityClass,
    pub eigenvalues: [Complex64; 2],
}

/// Eigenvalues of a real 2x2 matrix from its trace and determinant.
pub fn eigenvalues_2x2(j: [[f64; 2]; 2]) -> [Complex64; 2] {
    let tr = j[0][0] + j[1][1];
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let disc = tr * tr - 4.0 * det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        [Complex64::new((tr - s) / 2.0, 0.0), Complex64::new((tr + s) / 2.0, 0.0)]
    } else {
        let w = (-disc).sqrt() / 2.0;
        [Complex64::new(tr / 2.0, -w), Complex64::new(tr / 2.0, w)]
    }
}

/// Classifies the eigenvalue pair by the signs of its real parts, with
/// node/focus split by the sign of the characteristic discriminant.
pub fn classify_eigenvalues(eig: [Complex64; 2]) -> StabilityClass {
    let (r1, r2) = (eig[0].re, eig[1].re);
    if r1.abs() < HYPERBOLICITY_TOL || r2.abs() < HYPERBOLICITY_TOL {
        return StabilityClass::NonHyperbolic;
    }
    let complex = eig[0].im != 0.0;
    if r1 < 0.0 && r2 < 0.0 {
        if complex { StabilityClass::StableFocus } else { StabilityClass::StableNode }
    } else if r1 > 0.0 && r2 > 0.0 {
        if complex { StabilityClass::UnstableFocus } else { StabilityClass::UnstableNode }
    } else {
        StabilityClass::Saddle
    }
}

/// Classifies an equilibrium of the selected system.
pub fn classify(p: &ModelParams, e: &Equilibrium, kind: SystemKind) -> Classified {
    debug_assert!(e.residual < 1e-10, "classify expects a converged equilibrium");
    let eig = eigenvalues_2x2(jacobian(p, e.point, kind));
    Classified { class: classify_eigenvalues(eig), eigenvalues: eig }
}

/// What an interior-equilibrium theorem commits to, if anything.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TheoremPrediction {
    Stable,
    Unstable,
    Saddle,
    /// Within roundoff of a decision boundary; the theorem stays quiet.
    Silent,
}

/// Trace test for the food-free interior equilibrium: the sign of
/// `2m xb^2 - ((2m - delta) gamma + m eps delta) xb + m eps delta gamma`
/// is the negated sign of the Jacobian trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitialInteriorTest {
    /// Coefficients (a, b, c) of the trace quadratic.
    pub quadratic: (f64, f64, f64),
    pub discriminant: f64,
    /// Both roots when real, ascending.
    pub roots: Option<(f64, f64)>,
    pub x_bar: f64,
    /// Whether x_bar falls strictly between the roots (trace positive).
    pub in_unstable_window: bool,
    /// Value of the quadratic at x_bar.
    pub quadratic_value: f64,
}

/// Predicates for the food-provided interior equilibrium.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdditionalFoodInteriorTest {
    /// `1 + (alpha - 1) xi`; its sign drives the determinant.
    pub interference_term: f64,
    /// Lower bound on eps required for a positive determinant when the
    /// interference term is negative.
    pub eps_lower_bound: Option<f64>,
    /// Membership in the set where the determinant argument applies.
    pub omega_member: bool,
    /// Simplified interior determinant.
    pub det_value: f64,
    /// Numerator of the simplified interior trace.
    pub trace_numerator: f64,
    /// Positive roots of the trace cubic, ascending.
    pub trace_roots: Vec<f64>,
    /// Whether x* lies strictly between two positive trace roots.
    pub in_unstable_window: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum TheoremDetail {
    Initial(InitialInteriorTest),
    AdditionalFood(AdditionalFoodInteriorTest),
}

/// Outcome of evaluating the interior-equilibrium stability theorems for
/// one equilibrium.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremReport {
    pub kind: SystemKind,
    /// The blanket sufficiency condition for stability.
    pub delta_gt_2m: bool,
    pub prediction: TheoremPrediction,
    pub detail: TheoremDetail,
}

/// Relative margin inside which a sign test abstains.
const SILENCE_TOL: f64 = 1e-9;

fn signed_prediction(value: f64, scale: f64, positive: TheoremPrediction, negative: TheoremPrediction) -> TheoremPrediction {
    if value.abs() <= SILENCE_TOL * scale.max(1.0) {
        TheoremPrediction::Silent
    } else if value > 0.0 {
        positive
    } else {
        negative
    }
}

/// Evaluates the stability theorems at an interior equilibrium and returns
/// every predicate alongside the implied classification.
///
/// The prediction is driven by the exact simplified trace and determinant
/// expressions; the sufficient conditions (`delta > 2m`, the interference
/// sign, the eps bound) are reported for inspection.
pub fn theorem_predicates(p: &ModelParams, e: &Equilibrium, kind: SystemKind) -> TheoremReport {
    assert_eq!(e.kind, EquilibriumKind::Interior, "theorem predicates apply to interior equilibria");
    let ep = p.effective(kind);
    let delta_gt_2m = ep.delta > 2.0 * ep.m;
    match kind {
        SystemKind::Initial => {
            let t = initial_trace_test(&ep, e.point.x);
            let prediction = signed_prediction(
                t.quadratic_value,
                quadratic_scale(&t, e.point.x),
                TheoremPrediction::Stable,
                TheoremPrediction::Unstable,
            );
            TheoremReport { kind, delta_gt_2m, prediction, detail: TheoremDetail::Initial(t) }
        }
        SystemKind::AdditionalFood => {
            let t = additional_food_test(&ep, e.point.x, e.point.y);
            let det_scale = det_terms_scale(&ep, e.point.x, e.point.y);
            let det_sign = signed_prediction(t.det_value, det_scale, TheoremPrediction::Stable, TheoremPrediction::Saddle);
            let prediction = match det_sign {
                TheoremPrediction::Saddle | TheoremPrediction::Silent => det_sign,
                _ => signed_prediction(
                    t.trace_numerator,
                    trace_terms_scale(&ep, e.point.x),
                    TheoremPrediction::Unstable,
                    TheoremPrediction::Stable,
                ),
            };
            TheoremReport { kind, delta_gt_2m, prediction, detail: TheoremDetail::AdditionalFood(t) }
        }
    }
}

fn initial_trace_test(p: &ModelParams, x_bar: f64) -> InitialInteriorTest {
    let a = 2.0 * p.m;
    let b = -((2.0 * p.m - p.delta) * p.gamma + p.m * p.epsilon * p.delta);
    let c = p.m * p.epsilon * p.delta * p.gamma;
    let discriminant = b * b - 4.0 * a * c;
    let roots = if discriminant > 0.0 {
        let r = solve_quadratic(a, b, c);
        Some((r[0], r[1]))
    } else {
        None
    };
    let quadratic_value = (a * x_bar + b) * x_bar + c;
    let in_unstable_window = roots.map_or(false, |(r1, r2)| r1 < x_bar && x_bar < r2);
    InitialInteriorTest { quadratic: (a, b, c), discriminant, roots, x_bar, in_unstable_window, quadratic_value }
}

fn quadratic_scale(t: &InitialInteriorTest, x: f64) -> f64 {
    let (a, b, c) = t.quadratic;
    (a * x * x).abs() + (b * x).abs() + c.abs()
}

fn additional_food_test(p: &ModelParams, x: f64, y: f64) -> AdditionalFoodInteriorTest {
    let interference_term = 1.0 + (p.alpha - 1.0) * p.xi;
    let eps_lower_bound = if interference_term < 0.0 {
        Some(-2.0 / y * (1.0 - x / p.gamma) * interference_term)
    } else {
        None
    };
    let omega_member = interference_term > 0.0
        || eps_lower_bound.map_or(false, |b| b > 0.0 && b < p.epsilon);

    let axi = p.alpha * p.xi;
    let d = 1.0 + x * x + axi + p.epsilon * y;
    let det_value = (p.epsilon * p.delta * y * (x * x + p.xi)
        + 2.0 * p.delta * (1.0 - x / p.gamma) * interference_term * x * x)
        / (d * d);

    let trace_numerator = trace_cubic_value(p, x);
    let trace_roots: Vec<f64> = trace_cubic_roots(p).into_iter().filter(|r| *r > 0.0).collect();
    let in_unstable_window = trace_roots.windows(2).any(|w| w[0] < x && x < w[1])
        && trace_numerator > 0.0;
    AdditionalFoodInteriorTest {
        interference_term,
        eps_lower_bound,
        omega_member,
        det_value,
        trace_numerator,
        trace_roots,
        in_unstable_window,
    }
}

/// Numerator of the simplified interior trace of the food-provided system:
/// `-2 x^3/gamma + (2 - delta/m - (delta - m)) x^2 - delta xi/m
///  - (delta xi - m (1 + alpha xi))`.
fn trace_cubic_value(p: &ModelParams, x: f64) -> f64 {
    let b = 2.0 - p.delta / p.m - (p.delta - p.m);
    -2.0 * x * x * x / p.gamma + b * x * x - p.delta * p.xi / p.m - food_margin(p)
}

fn trace_cubic_roots(p: &ModelParams) -> Vec<f64> {
    let b = 2.0 - p.delta / p.m - (p.delta - p.m);
    let d = -p.delta * p.xi / p.m - food_margin(p);
    solve_cubic(-2.0 / p.gamma, b, 0.0, d).expect("nonzero leading coefficient")
}

fn trace_terms_scale(p: &ModelParams, x: f64) -> f64 {
    let b = 2.0 - p.delta / p.m - (p.delta - p.m);
    2.0 * x * x * x / p.gamma + (b * x * x).abs() + p.delta * p.xi / p.m + food_margin(p).abs()
}

fn det_terms_scale(p: &ModelParams, x: f64, y: f64) -> f64 {
    let interference = 1.0 + (p.alpha - 1.0) * p.xi;
    let d = 1.0 + x * x + p.alpha * p.xi + p.epsilon * y;
    (p.epsilon * p.delta * y * (x * x + p.xi)
        + (2.0 * p.delta * (1.0 - x / p.gamma) * interference * x * x).abs())
        / (d * d)
}

/// One of the four dynamical regimes of the food-free parameter space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RegionLabel {
    I,
    II,
    III,
    IV,
}

impl std::fmt::Display for RegionLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RegionLabel::I => "I",
            RegionLabel::II => "II",
            RegionLabel::III => "III",
            RegionLabel::IV => "IV",
        };
        f.write_str(s)
    }
}

/// Region membership of food-free parameters (`xi` and `alpha` ignored):
///
/// - I: no interior equilibrium (gamma does not exceed the coexistence
///   abscissa);
/// - II: interior equilibrium with a monotone prey nullcline;
/// - III: crest/trough nullcline, interior equilibrium attracting;
/// - IV: crest/trough nullcline, interior equilibrium repelling (limit
///   cycle).
///
/// The III/IV boundary is the vanishing of the Jacobian trace at the
/// interior equilibrium, which is the Hopf condition.
pub fn region_of(p: &ModelParams) -> Result<RegionLabel> {
    if !(p.delta > p.m && p.m > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "regions are defined for delta > m > 0, got delta = {}, m = {}",
            p.delta, p.m
        )));
    }
    let p = p.effective(SystemKind::Initial);
    let x_bar = initial_interior_x(&p);
    if p.gamma <= x_bar {
        return Ok(RegionLabel::I);
    }
    if p.gamma <= 4.0 * p.epsilon + (16.0 * p.epsilon * p.epsilon + 27.0).sqrt() {
        return Ok(RegionLabel::II);
    }
    if interior_trace(&p) < 0.0 {
        Ok(RegionLabel::III)
    } else {
        Ok(RegionLabel::IV)
    }
}

/// Jacobian trace at the food-free interior equilibrium.
fn interior_trace(p: &ModelParams) -> f64 {
    let x = initial_interior_x(p);
    let y = ((p.delta - p.m) * x * x - p.m) / (p.m * p.epsilon);
    let j = jacobian(p, crate::model::State { x, y }, SystemKind::Initial);
    j[0][0] + j[1][1]
}

/// Locates the Hopf value of gamma inside `bracket` for the food-free
/// system, if one exists.
///
/// Returns `Ok(None)` when `delta > 2m` (the trace is provably negative).
/// Errors when the bracket endpoints share a trace sign.
pub fn find_hopf_gamma(epsilon: f64, delta: f64, m: f64, bracket: (f64, f64)) -> Result<Option<f64>> {
    if !(delta > m && m > 0.0) {
        return Err(Error::InvalidParameter(format!("require delta > m > 0, got {delta}, {m}")));
    }
    if delta > 2.0 * m {
        return Ok(None);
    }
    let trace_at = |gamma: f64| -> Result<f64> {
        let p = ModelParams::new(gamma, 0.0, 0.0, epsilon, delta, m)?;
        let x = initial_interior_x(&p);
        let y = ((delta - m) * x * x - m) / (m * epsilon);
        if y <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "no interior equilibrium at gamma = {gamma} inside the Hopf bracket"
            )));
        }
        Ok(interior_trace(&p))
    };
    let (mut lo, mut hi) = bracket;
    let mut flo = trace_at(lo)?;
    let fhi = trace_at(hi)?;
    if flo == 0.0 {
        return Ok(Some(lo));
    }
    if fhi == 0.0 {
        return Ok(Some(hi));
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::NoSignChange { lo, hi });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = trace_at(mid)?;
        if fm == 0.0 {
            return Ok(Some(mid));
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
        if (hi - lo) <= f64::EPSILON * hi.abs() {
            break;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

/// Quantity of additional food on the prey-elimination curve
/// `delta xi - m (1 + alpha xi) = 0`, i.e. `xi = m / (delta - m alpha)`.
///
/// `None` when the curve does not cross positive quantities
/// (`delta - m alpha <= 0`).
pub fn pec_xi(delta: f64, m: f64, alpha: f64) -> Option<f64> {
    let denom = delta - m * alpha;
    if denom <= 0.0 {
        return None;
    }
    let xi = m / denom;
    (xi > 0.0).then_some(xi)
}

/// Quantity of additional food on the transcritical curve
/// `delta xi - m (1 + alpha xi) = -(delta - m) gamma^2`, i.e.
/// `xi = (m - (delta - m) gamma^2) / (delta - m alpha)`.
///
/// `None` when the solution is not a positive quantity.
pub fn tbc_xi(gamma: f64, delta: f64, m: f64, alpha: f64) -> Option<f64> {
    let denom = delta - m * alpha;
    if denom == 0.0 {
        return None;
    }
    let xi = (m - (delta - m) * gamma * gamma) / denom;
    (xi > 0.0).then_some(xi)
}
