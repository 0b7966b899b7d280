//! Real roots of low-degree polynomials.
//!
//! The interior-equilibrium cubic and the trace cubics only need real
//! roots, so the solver returns the distinct real roots in ascending
//! order, Newton-polished on the original coefficients.

use crate::error::{Error, Result};

/// Distance below which two roots are treated as one (relative to root size).
const MULTIPLICITY_TOL: f64 = 1e-8;

/// All distinct real roots of `a x^3 + b x^2 + c x + d`, ascending.
///
/// `a` must be nonzero; callers holding a degenerate leading coefficient
/// dispatch to [`solve_quadratic`] themselves.
pub fn solve_cubic(a: f64, b: f64, c: f64, d: f64) -> Result<Vec<f64>> {
    if a == 0.0 {
        return Err(Error::DegenerateCubic);
    }
    // Depress: x = t - b/(3a) turns the cubic into t^3 + p t + q.
    let bn = b / a;
    let cn = c / a;
    let dn = d / a;
    let shift = bn / 3.0;
    let p = cn - bn * bn / 3.0;
    let q = 2.0 * bn * bn * bn / 27.0 - bn * cn / 3.0 + dn;

    let coeff_scale = p.abs().max(q.abs()).max(1.0);
    let mut roots: Vec<f64> = Vec::with_capacity(3);
    if p.abs() < 1e-14 * coeff_scale && q.abs() < 1e-14 * coeff_scale {
        roots.push(-shift); // triple root
    } else {
        let disc = q * q / 4.0 + p * p * p / 27.0;
        let disc_scale = q * q / 4.0 + (p * p * p / 27.0).abs();
        if disc.abs() <= 1e-13 * disc_scale {
            // Repeated root: the closed forms beat the general branches,
            // whose accuracy degrades to sqrt(eps) here.
            roots.push(3.0 * q / p - shift);
            roots.push(-3.0 * q / (2.0 * p) - shift);
        } else if disc > 0.0 {
            // One real root; pick the cube root with no cancellation.
            let s = disc.sqrt();
            let u3 = -q / 2.0 - s.copysign(q);
            let u = u3.cbrt();
            let v = if u != 0.0 { -p / (3.0 * u) } else { 0.0 };
            roots.push(u + v - shift);
        } else {
            // Three real roots via the trigonometric form (p < 0 here).
            let rho = 2.0 * (-p / 3.0).sqrt();
            let arg = (3.0 * q / (p * rho)).clamp(-1.0, 1.0);
            let phi = arg.acos();
            for k in 0..3 {
                let t = rho * ((phi - 2.0 * std::f64::consts::PI * k as f64) / 3.0).cos();
                roots.push(t - shift);
            }
        }
    }

    for r in roots.iter_mut() {
        *r = polish(a, b, c, d, *r);
    }
    roots.sort_by(|u, v| u.partial_cmp(v).unwrap());
    roots.dedup_by(|u, v| (*u - *v).abs() <= MULTIPLICITY_TOL * u.abs().max(v.abs()).max(1.0));
    Ok(roots)
}

/// Real roots of `a x^2 + b x + c`, ascending (empty when complex).
pub fn solve_quadratic(a: f64, b: f64, c: f64) -> Vec<f64> {
    if a == 0.0 {
        if b == 0.0 {
            return Vec::new();
        }
        return vec![-c / b];
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    if disc == 0.0 {
        return vec![-b / (2.0 * a)];
    }
    // Citardauq pairing avoids cancellation in the smaller root.
    let s = disc.sqrt();
    let q = -0.5 * (b + s.copysign(b));
    let mut roots = if q != 0.0 { vec![q / a, c / q] } else { vec![0.0, -b / a] };
    roots.sort_by(|u, v| u.partial_cmp(v).unwrap());
    roots
}

fn polish(a: f64, b: f64, c: f64, d: f64, mut x: f64) -> f64 {
    for _ in 0..3 {
        let f = ((a * x + b) * x + c) * x + d;
        let df = (3.0 * a * x + 2.0 * b) * x + c;
        if df == 0.0 {
            break;
        }
        let step = f / df;
        // A flat derivative (repeated root) can fling the iterate away.
        if !step.is_finite() || step.abs() > 0.1 * x.abs().max(1.0) {
            break;
        }
        x -= step;
    }
    x
}
