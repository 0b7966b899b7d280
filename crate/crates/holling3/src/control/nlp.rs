//! Transcription and box-constrained minimization behind the time-optimal
//! solver.
//!
//! Decision vector layout: `z[0]` is the free final time, `z[1..]` the
//! piecewise-constant controls. Dynamics are integrated on a fixed
//! normalized grid with the final time folded into the vector field, so
//! every sensitivity flows through the same chain rule as the controls.

use crate::model::{jacobian, vector_field, ModelParams, State, SystemKind};

use super::{control_jacobian, ControlMode};

pub(crate) type Mat2 = [[f64; 2]; 2];

const IDENTITY: Mat2 = [[1.0, 0.0], [0.0, 1.0]];

fn mat_mul(a: Mat2, b: Mat2) -> Mat2 {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

fn mat_t_vec(a: Mat2, v: [f64; 2]) -> [f64; 2] {
    [a[0][0] * v[0] + a[1][0] * v[1], a[0][1] * v[0] + a[1][1] * v[1]]
}

fn mat_scale_add(scale: f64, a: Mat2, b: Mat2) -> Mat2 {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = scale * a[i][j] + b[i][j];
        }
    }
    out
}

/// Single-shooting transcription of the controlled system on `n` equal
/// intervals with `substeps` classic Runge-Kutta stages per interval.
pub(crate) struct Transcription {
    pub params: ModelParams,
    pub mode: ControlMode,
    pub s0: State,
    pub n: usize,
    pub substeps: usize,
}

pub(crate) struct Evaluated {
    /// Node states including both endpoints (length n + 1).
    pub nodes: Vec<State>,
    /// Per-interval state transition and (du, dT) sensitivity blocks.
    pub sensitivity: Vec<(Mat2, Mat2)>,
    /// False when the propagation left the representable range.
    pub finite: bool,
}

impl Transcription {
    /// Integrates the whole horizon, propagating interval sensitivities.
    pub fn eval(&self, z: &[f64]) -> Evaluated {
        let t_final = z[0];
        let tau = 1.0 / (self.n as f64 * self.substeps as f64);
        let mut nodes = Vec::with_capacity(self.n + 1);
        let mut sensitivity = Vec::with_capacity(self.n);
        let mut s = self.s0;
        let mut finite = true;
        nodes.push(s);
        for i in 0..self.n {
            let p = self.mode.apply(&self.params, z[1 + i]);
            let mut a_int = IDENTITY;
            let mut b_int = [[0.0; 2]; 2];
            if finite {
                for _ in 0..self.substeps {
                    let (s_next, m_x, m_th) = rk4_substep(&p, self.mode, s, t_final, tau);
                    a_int = mat_mul(m_x, a_int);
                    b_int = mat_scale_add(1.0, mat_mul(m_x, b_int), m_th);
                    s = s_next;
                    if !(s.x.is_finite() && s.y.is_finite() && s.x.abs() < 1e12 && s.y.abs() < 1e12) {
                        finite = false;
                        break;
                    }
                }
            }
            nodes.push(s);
            sensitivity.push((a_int, b_int));
        }
        Evaluated { nodes, sensitivity, finite }
    }

    /// Augmented-Lagrangian value and gradient for the ball-constrained
    /// endpoint `|end - sf|^2 <= r^2` (the target is only reported to a
    /// tolerance, so an equality would be unsatisfiable):
    ///
    /// `T + (max(0, lambda + 2 mu g)^2 - lambda^2) / (4 mu)` with
    /// `g = |end - sf|^2 - r^2`.
    ///
    /// Also returns the endpoint residual vector.
    pub fn objective(&self, z: &[f64], sf: State, radius: f64, lambda: f64, mu: f64) -> (f64, Vec<f64>, [f64; 2]) {
        let ev = self.eval(z);
        if !ev.finite {
            return (f64::INFINITY, vec![0.0; z.len()], [f64::INFINITY, f64::INFINITY]);
        }
        let end = *ev.nodes.last().unwrap();
        let e = [end.x - sf.x, end.y - sf.y];
        let g = e[0] * e[0] + e[1] * e[1] - radius * radius;
        let active = (lambda + 2.0 * mu * g).max(0.0);
        let value = z[0] + (active * active - lambda * lambda) / (4.0 * mu);

        // Reverse sweep: w carries d(value)/d(node state).
        let mut w = [active * 2.0 * e[0], active * 2.0 * e[1]];
        let mut grad = vec![0.0; z.len()];
        grad[0] = 1.0;
        for i in (0..self.n).rev() {
            let (a_int, b_int) = ev.sensitivity[i];
            grad[1 + i] = w[0] * b_int[0][0] + w[1] * b_int[1][0];
            grad[0] += w[0] * b_int[0][1] + w[1] * b_int[1][1];
            w = mat_t_vec(a_int, w);
        }
        (value, grad, e)
    }
}

/// One RK4 substep of the time-scaled field `F(x) = T f(x, u)` on the
/// normalized grid, returning the new state and the Jacobians of the map
/// with respect to the state and to (u, T).
fn rk4_substep(
    p: &ModelParams,
    mode: ControlMode,
    s: State,
    t_final: f64,
    tau: f64,
) -> (State, Mat2, Mat2) {
    let field = |st: State| -> ([f64; 2], Mat2, Mat2) {
        let f = vector_field(p, st, SystemKind::AdditionalFood);
        let jx = jacobian(p, st, SystemKind::AdditionalFood);
        let (fu, gu) = control_jacobian(p, st, mode);
        // Columns: d/du, d/dT of T * f.
        let ftheta = [[t_final * fu, f.0], [t_final * gu, f.1]];
        let fx = [
            [t_final * jx[0][0], t_final * jx[0][1]],
            [t_final * jx[1][0], t_final * jx[1][1]],
        ];
        ([t_final * f.0, t_final * f.1], fx, ftheta)
    };
    let at = |st: State, scale: f64, k: [f64; 2]| State { x: st.x + scale * k[0], y: st.y + scale * k[1] };

    let (k1, k1x, k1th) = field(s);
    let a2 = at(s, tau / 2.0, k1);
    let (k2, j2, f2th) = field(a2);
    let k2x = mat_mul(j2, mat_scale_add(tau / 2.0, k1x, IDENTITY));
    let k2th = mat_scale_add(1.0, mat_mul(j2, scale_mat(tau / 2.0, k1th)), f2th);
    let a3 = at(s, tau / 2.0, k2);
    let (k3, j3, f3th) = field(a3);
    let k3x = mat_mul(j3, mat_scale_add(tau / 2.0, k2x, IDENTITY));
    let k3th = mat_scale_add(1.0, mat_mul(j3, scale_mat(tau / 2.0, k2th)), f3th);
    let a4 = at(s, tau, k3);
    let (k4, j4, f4th) = field(a4);
    let k4x = mat_mul(j4, mat_scale_add(tau, k3x, IDENTITY));
    let k4th = mat_scale_add(1.0, mat_mul(j4, scale_mat(tau, k3th)), f4th);

    let s_next = State {
        x: s.x + tau / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        y: s.y + tau / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    };
    let m_x = mat_scale_add(
        tau / 6.0,
        sum4(k1x, scale_mat(2.0, k2x), scale_mat(2.0, k3x), k4x),
        IDENTITY,
    );
    let m_th = scale_mat(tau / 6.0, sum4(k1th, scale_mat(2.0, k2th), scale_mat(2.0, k3th), k4th));
    (s_next, m_x, m_th)
}

fn scale_mat(s: f64, a: Mat2) -> Mat2 {
    [[s * a[0][0], s * a[0][1]], [s * a[1][0], s * a[1][1]]]
}

fn sum4(a: Mat2, b: Mat2, c: Mat2, d: Mat2) -> Mat2 {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][j] + b[i][j] + c[i][j] + d[i][j];
        }
    }
    out
}

impl Transcription {
    /// Augmented-Lagrangian value and gradient for a pinned endpoint
    /// `c = end - target = 0`: `T + lambda . c + mu |c|^2`.
    pub fn objective_eq(&self, z: &[f64], target: State, lambda: [f64; 2], mu: f64) -> (f64, Vec<f64>, [f64; 2]) {
        let ev = self.eval(z);
        if !ev.finite {
            return (f64::INFINITY, vec![0.0; z.len()], [f64::INFINITY, f64::INFINITY]);
        }
        let end = *ev.nodes.last().unwrap();
        let c = [end.x - target.x, end.y - target.y];
        let value = z[0] + lambda[0] * c[0] + lambda[1] * c[1] + mu * (c[0] * c[0] + c[1] * c[1]);
        let mut w = [lambda[0] + 2.0 * mu * c[0], lambda[1] + 2.0 * mu * c[1]];
        let mut grad = vec![0.0; z.len()];
        grad[0] = 1.0;
        for i in (0..self.n).rev() {
            let (a_int, b_int) = ev.sensitivity[i];
            grad[1 + i] = w[0] * b_int[0][0] + w[1] * b_int[1][0];
            grad[0] += w[0] * b_int[0][1] + w[1] * b_int[1][1];
            w = mat_t_vec(a_int, w);
        }
        (value, grad, c)
    }

    /// Endpoint and both rows of its Jacobian with respect to the
    /// decision vector.
    pub fn endpoint_jacobian(&self, z: &[f64]) -> Option<(State, [Vec<f64>; 2])> {
        let ev = self.eval(z);
        if !ev.finite {
            return None;
        }
        let end = *ev.nodes.last().unwrap();
        let mut rows = [vec![0.0; z.len()], vec![0.0; z.len()]];
        for (row, seed) in rows.iter_mut().zip([[1.0, 0.0], [0.0, 1.0]]) {
            let mut w = seed;
            for i in (0..self.n).rev() {
                let (a_int, b_int) = ev.sensitivity[i];
                row[1 + i] = w[0] * b_int[0][0] + w[1] * b_int[1][0];
                row[0] += w[0] * b_int[0][1] + w[1] * b_int[1][1];
                w = mat_t_vec(a_int, w);
            }
        }
        Some((end, rows))
    }

    /// Value and full gradient of the ball constraint
    /// `g = |end - sf|^2 - r^2`, plus the endpoint residual.
    pub fn constraint(&self, z: &[f64], sf: State, radius: f64) -> (f64, Vec<f64>, [f64; 2]) {
        let ev = self.eval(z);
        if !ev.finite {
            return (f64::INFINITY, vec![0.0; z.len()], [f64::INFINITY, f64::INFINITY]);
        }
        let end = *ev.nodes.last().unwrap();
        let e = [end.x - sf.x, end.y - sf.y];
        let g = e[0] * e[0] + e[1] * e[1] - radius * radius;
        let mut w = [2.0 * e[0], 2.0 * e[1]];
        let mut grad = vec![0.0; z.len()];
        for i in (0..self.n).rev() {
            let (a_int, b_int) = ev.sensitivity[i];
            grad[1 + i] = w[0] * b_int[0][0] + w[1] * b_int[1][0];
            grad[0] += w[0] * b_int[0][1] + w[1] * b_int[1][1];
            w = mat_t_vec(a_int, w);
        }
        (g, grad, e)
    }
}

pub(crate) struct MinimizeResult {
    pub z: Vec<f64>,
    pub iterations: usize,
}

/// Projected quasi-Newton minimization over a box: limited-memory BFGS
/// directions with a projected backtracking line search, falling back to
/// spectral projected-gradient steps whenever curvature is unusable.
pub(crate) fn minimize_box<F>(
    f_g: F,
    z0: Vec<f64>,
    lo: &[f64],
    hi: &[f64],
    max_iter: usize,
    tol: f64,
) -> MinimizeResult
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    const MEMORY: usize = 10;
    const HISTORY: usize = 8;

    let project = |z: &mut [f64]| {
        for i in 0..z.len() {
            z[i] = z[i].clamp(lo[i], hi[i]);
        }
    };
    let n = z0.len();
    let mut z = z0;
    project(&mut z);
    let (mut value, mut grad) = f_g(&z);
    if !value.is_finite() {
        return MinimizeResult { z, iterations: 0 };
    }
    let mut pairs: std::collections::VecDeque<(Vec<f64>, Vec<f64>, f64)> = Default::default();
    let mut recent: std::collections::VecDeque<f64> = Default::default();
    recent.push_back(value);
    let mut bb_step = 1.0;

    for iter in 0..max_iter {
        let kkt = projected_gradient_norm(&z, &grad, lo, hi);
        if kkt <= tol {
            return MinimizeResult { z, iterations: iter };
        }

        // Two-loop recursion over stored curvature pairs.
        let mut d: Vec<f64> = grad.iter().map(|g| -g).collect();
        if !pairs.is_empty() {
            let mut alphas = Vec::with_capacity(pairs.len());
            for (s, y, rho) in pairs.iter().rev() {
                let a = rho * dot(s, &d);
                for i in 0..n {
                    d[i] -= a * y[i];
                }
                alphas.push(a);
            }
            let (s_last, y_last, _) = pairs.back().unwrap();
            let scale = dot(s_last, y_last) / dot(y_last, y_last).max(1e-300);
            for di in d.iter_mut() {
                *di *= scale;
            }
            for ((s, y, rho), a) in pairs.iter().zip(alphas.into_iter().rev()) {
                let b = rho * dot(y, &d);
                for i in 0..n {
                    d[i] += (a - b) * s[i];
                }
            }
        } else {
            for di in d.iter_mut() {
                *di *= bb_step;
            }
        }
        if dot(&d, &grad) > -1e-14 * norm(&d) * norm(&grad) {
            // Not a descent direction; spectral gradient fallback.
            d = grad.iter().map(|g| -bb_step * g).collect();
        }

        // Nonmonotone Armijo search along the projected arc.
        let reference = recent.iter().cloned().fold(value, f64::max);
        let mut beta = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let mut trial: Vec<f64> = (0..n).map(|i| z[i] + beta * d[i]).collect();
            project(&mut trial);
            let step: Vec<f64> = (0..n).map(|i| trial[i] - z[i]).collect();
            let slope = dot(&grad, &step);
            if norm(&step) == 0.0 {
                break;
            }
            let (v_trial, g_trial) = f_g(&trial);
            if v_trial.is_finite() && v_trial <= reference + 1e-4 * slope.min(0.0) {
                accepted = Some((trial, v_trial, g_trial, step));
                break;
            }
            beta *= 0.25;
        }
        let Some((z_new, v_new, g_new, step)) = accepted else {
            return MinimizeResult { z, iterations: iter };
        };

        let yvec: Vec<f64> = (0..n).map(|i| g_new[i] - grad[i]).collect();
        let sy = dot(&step, &yvec);
        if sy > 1e-12 * norm(&step) * norm(&yvec) {
            bb_step = (dot(&step, &step) / sy).clamp(1e-8, 1e8);
            pairs.push_back((step, yvec, 1.0 / sy));
            if pairs.len() > MEMORY {
                pairs.pop_front();
            }
        }
        z = z_new;
        value = v_new;
        grad = g_new;
        recent.push_back(value);
        if recent.len() > HISTORY {
            recent.pop_front();
        }
    }
    MinimizeResult { z, iterations: max_iter }
}

pub(crate) fn projected_gradient_norm(z: &[f64], grad: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..z.len() {
        let moved = (z[i] - grad[i]).clamp(lo[i], hi[i]) - z[i];
        if !moved.is_finite() {
            return f64::INFINITY;
        }
        worst = worst.max(moved.abs());
    }
    worst
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
