//! Time-optimal steering of the food-provided system with either the
//! quality or the quantity of additional food as the bounded control.
//!
//! The solver is a direct method: piecewise-constant control on a uniform
//! grid, single-shooting transcription with analytic sensitivities, free
//! final time, and an augmented-Lagrangian treatment of the endpoint
//! constraint, restarted from several control profiles. Pontryagin
//! quantities (reparameterized Hamiltonian, adjoints, switching function)
//! are computed afterwards to audit the bang-bang structure, not to build
//! the solution.

mod nlp;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::{integrate, Tolerances};
use crate::model::{denominator, ModelParams, State, SystemKind};

use nlp::{minimize_box, Transcription};

/// Which food characteristic the controller drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    /// Control the quality ratio alpha; quantity xi stays fixed.
    Quality,
    /// Control the quantity xi; quality alpha stays fixed.
    Quantity,
}

impl ControlMode {
    /// Parameter set with the control value substituted in.
    pub fn apply(&self, p: &ModelParams, u: f64) -> ModelParams {
        match self {
            ControlMode::Quality => ModelParams { alpha: u, ..*p },
            ControlMode::Quantity => ModelParams { xi: u, ..*p },
        }
    }
}

/// One time-optimal steering problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OCProblem {
    pub mode: ControlMode,
    pub u_min: f64,
    pub u_max: f64,
    /// Fixed model parameters; the controlled entry is ignored.
    pub params: ModelParams,
    pub s0: State,
    pub sf: State,
    /// Radius of the endpoint acceptance ball (max-norm).
    pub endpoint_tol: f64,
}

impl OCProblem {
    pub fn validate(&self) -> Result<()> {
        if !(self.u_min < self.u_max) {
            return Err(Error::InvalidParameter(format!(
                "control bounds must satisfy u_min < u_max, got [{}, {}]",
                self.u_min, self.u_max
            )));
        }
        if self.u_min < 0.0 {
            return Err(Error::NegativeInput { name: "u_min", value: self.u_min });
        }
        State::new(self.s0.x, self.s0.y)?;
        State::new(self.sf.x, self.sf.y)?;
        if !(self.endpoint_tol > 0.0) {
            return Err(Error::InvalidParameter("endpoint tolerance must be positive".into()));
        }
        self.mode.apply(&self.params, self.u_min).validate()
    }
}

/// Adjoint variables paired with (x, y).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Costate {
    pub p: f64,
    pub q: f64,
}

/// Converged (or best-found) solution of a steering problem.
#[derive(Debug, Clone, Serialize)]
pub struct OCSolution {
    /// Transfer time.
    pub final_time: f64,
    /// Node times, 0 to final_time inclusive.
    pub times: Vec<f64>,
    /// Node states from tight re-integration of the returned control.
    pub states: Vec<State>,
    /// Piecewise-constant control values, one per interval.
    pub controls: Vec<f64>,
    /// Adjoints at the nodes from the backward pass.
    pub costates: Vec<Costate>,
    /// Switching-function values at the nodes, scaled to unit peak.
    pub switching: Vec<f64>,
    /// Times where the switching function changes sign.
    pub switch_times: Vec<f64>,
    /// Worst endpoint component error against the target.
    pub endpoint_miss: f64,
    /// Worst node discrepancy between the transcription and the tight
    /// re-integration.
    pub transcription_defect: f64,
    /// Endpoint multiplier estimates from the augmented Lagrangian.
    pub multipliers: [f64; 2],
    pub nlp_iterations: usize,
    pub converged: bool,
    pub restart_index: usize,
}

/// The time dilation `dt/ds = 1 + x^2 + alpha xi + eps y` of the
/// reparameterized problem.
pub fn time_dilation(p: &ModelParams, s: State, u: f64, mode: ControlMode) -> f64 {
    denominator(&mode.apply(p, u), s)
}

/// Dynamics in the stretched time `s` where `dt = (1 + x^2 + alpha xi +
/// eps y) ds`; equals the dilation times the original field.
pub fn reparameterized_field(p: &ModelParams, s: State, u: f64, mode: ControlMode) -> (f64, f64) {
    let pu = mode.apply(p, u);
    let d = denominator(&pu, s);
    let dx = s.x * (1.0 - s.x / pu.gamma) * d - s.x * s.x * s.y;
    let dy = pu.delta * (s.x * s.x + pu.xi) * s.y - d * pu.m * s.y;
    (dx, dy)
}

/// Control Hamiltonian of the reparameterized problem,
/// `p X(x, y, u) + q Y(x, y, u)`; affine in the control for both modes.
pub fn hamiltonian(p: &ModelParams, s: State, c: &Costate, u: f64, mode: ControlMode) -> f64 {
    let (dx, dy) = reparameterized_field(p, s, u, mode);
    c.p * dx + c.q * dy
}

/// Adjoint equations `dp/ds = -dH/dx`, `dq/ds = -dH/dy` of the
/// reparameterized problem.
pub fn costate_rhs(p: &ModelParams, s: State, c: &Costate, u: f64, mode: ControlMode) -> (f64, f64) {
    let pu = mode.apply(p, u);
    let (x, y) = (s.x, s.y);
    let d = denominator(&pu, s);
    let axi = pu.alpha * pu.xi;
    let dp = c.p * (2.0 * x * y - 2.0 * x * x * (1.0 - x / pu.gamma) - d * (1.0 - 2.0 * x / pu.gamma))
        + 2.0 * c.q * x * y * (pu.m - pu.delta);
    let dq = c.p * (x * x - pu.epsilon * x * (1.0 - x / pu.gamma))
        + c.q * (2.0 * pu.m * pu.epsilon * y + pu.m * (1.0 + x * x + axi) - pu.delta * (x * x + pu.xi));
    (dp, dq)
}

/// Coefficient of the control in the Hamiltonian (`dH/du`). Its sign
/// selects the bang value: negative means the upper bound pays off.
///
/// Quality mode: `xi (p x (1 - x/gamma) - q m y)`. Quantity mode:
/// `p alpha x (1 - x/gamma) + q (delta - alpha m) y`.
pub fn switching_function(p: &ModelParams, s: State, c: &Costate, mode: ControlMode) -> f64 {
    let (x, y) = (s.x, s.y);
    let logistic = x * (1.0 - x / p.gamma);
    match mode {
        ControlMode::Quality => p.xi * (c.p * logistic - c.q * p.m * y),
        ControlMode::Quantity => c.p * p.alpha * logistic + c.q * (p.delta - p.alpha * p.m) * y,
    }
}

/// `d(field)/du` of the original-time dynamics at fixed state.
pub(crate) fn control_jacobian(p: &ModelParams, s: State, mode: ControlMode) -> (f64, f64) {
    let (x, y) = (s.x, s.y);
    let d = denominator(p, s);
    let d2 = d * d;
    match mode {
        ControlMode::Quality => {
            let dd = p.xi;
            (x * x * y * dd / d2, -p.delta * (x * x + p.xi) * y * dd / d2)
        }
        ControlMode::Quantity => {
            let dd = p.alpha;
            (x * x * y * dd / d2, p.delta * y * (d - p.alpha * (x * x + p.xi)) / d2)
        }
    }
}

/// Curve in the phase plane on which a quality-mode singular arc can
/// live: `y = 2 delta / (m (1 - m)) x (1 - x/gamma)^2`. Only admissible
/// for `m < 1`.
pub fn singular_arc_quality(p: &ModelParams, x: f64) -> Result<f64> {
    if p.m >= 1.0 {
        return Err(Error::SingularArcDomain { m: p.m });
    }
    let s = 1.0 - x / p.gamma;
    Ok(2.0 * p.delta / (p.m * (1.0 - p.m)) * x * s * s)
}

/// Audit of a solution against the minimum principle.
#[derive(Debug, Clone, Serialize)]
pub struct PmpReport {
    /// Fraction of control intervals within 1e-3 of a bound.
    pub bang_fraction: f64,
    /// Among nodes with |switching| > 1e-3 (after unit-peak scaling),
    /// fraction where the control matches the sign rule.
    pub sign_consistency: f64,
    /// Number of nodes entering the consistency score.
    pub consistency_nodes: usize,
    pub switch_times: Vec<f64>,
    pub switch_count: usize,
    /// Spans of three or more nodes where the switching function is
    /// numerically zero (candidate singular arcs).
    pub singular_windows: Vec<(f64, f64)>,
}

/// Checks the bang-bang structure of a solution: how much of the control
/// rides its bounds and how well the bound choice correlates with the
/// switching-function sign from the backward costate pass.
pub fn verify_pmp(sol: &OCSolution, oc: &OCProblem) -> PmpReport {
    let n = sol.controls.len();
    let at_bound = |u: f64| (u - oc.u_min).abs() <= 1e-3 || (oc.u_max - u).abs() <= 1e-3;
    let bang_fraction = sol.controls.iter().filter(|&&u| at_bound(u)).count() as f64 / n.max(1) as f64;

    let mut consistent = 0usize;
    let mut counted = 0usize;
    for i in 0..n {
        let sigma = sol.switching[i];
        if sigma.abs() <= 1e-3 {
            continue;
        }
        counted += 1;
        let upper = (sol.controls[i] - oc.u_max).abs() <= 1e-3;
        if upper == (sigma < 0.0) {
            consistent += 1;
        }
    }
    let sign_consistency = if counted == 0 { 1.0 } else { consistent as f64 / counted as f64 };

    let mut singular_windows = Vec::new();
    let mut run_start: Option<usize> = None;
    for i in 0..=n {
        let quiet = sol.switching[i].abs() < 1e-6;
        match (quiet, run_start) {
            (true, None) => run_start = Some(i),
            (false, Some(s)) => {
                if i - s >= 3 {
                    singular_windows.push((sol.times[s], sol.times[i - 1]));
                }
                run_start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = run_start {
        if n + 1 - s >= 3 {
            singular_windows.push((sol.times[s], sol.times[n]));
        }
    }

    PmpReport {
        bang_fraction,
        sign_consistency,
        consistency_nodes: counted,
        switch_times: sol.switch_times.clone(),
        switch_count: sol.switch_times.len(),
        singular_windows,
    }
}

/// Solves the steering problem with the default two seeded restarts on
/// top of the three deterministic ones.
pub fn solve(oc: &OCProblem, n_nodes: usize) -> Result<OCSolution> {
    solve_seeded(oc, n_nodes, 0, 2)
}

/// [`solve`] with explicit seed and number of extra randomized restarts.
/// Restarts run in parallel; the feasible result with the lowest transfer
/// time wins, ties broken by restart index.
pub fn solve_seeded(oc: &OCProblem, n_nodes: usize, seed: u64, extra_restarts: usize) -> Result<OCSolution> {
    use rand::{Rng, SeedableRng};
    oc.validate()?;
    if n_nodes < 20 {
        return Err(Error::InvalidParameter(format!("need at least 20 control intervals, got {n_nodes}")));
    }

    let mut starts = vec![oc.u_min, 0.5 * (oc.u_min + oc.u_max), oc.u_max];
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..extra_restarts {
        starts.push(rng.random_range(oc.u_min..oc.u_max));
    }

    let outcomes: Vec<Result<OCSolution>> = starts
        .par_iter()
        .enumerate()
        .map(|(idx, &u0)| solve_from(oc, n_nodes, u0, idx))
        .collect();
    let mut first_err = None;
    let mut candidates = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(sol) => candidates.push(sol),
            Err(e) => first_err = first_err.or(Some(e)),
        }
    }
    let Some(best) = candidates.into_iter().min_by(|a, b| {
        let fa = a.endpoint_miss <= oc.endpoint_tol;
        let fb = b.endpoint_miss <= oc.endpoint_tol;
        fb.cmp(&fa)
            .then(a.final_time.total_cmp(&b.final_time))
            .then(a.restart_index.cmp(&b.restart_index))
    }) else {
        return Err(first_err.expect("no candidates implies at least one error"));
    };

    if best.endpoint_miss > oc.endpoint_tol {
        return Err(Error::InfeasibleEndpoint { miss: best.endpoint_miss, tol: oc.endpoint_tol });
    }
    Ok(best)
}

const T_MIN: f64 = 1e-6;
const T_MAX: f64 = 1e5;

fn solve_from(oc: &OCProblem, n: usize, u0: f64, restart_index: usize) -> Result<OCSolution> {
    let t0 = initial_time_guess(oc, u0)?;
    let mut z = vec![0.0; n + 1];
    z[0] = t0;
    for zi in z[1..].iter_mut() {
        *zi = u0;
    }

    let mut lo = vec![oc.u_min; n + 1];
    let mut hi = vec![oc.u_max; n + 1];
    lo[0] = T_MIN;
    // Keep the horizon from wandering past anything the probe justifies.
    hi[0] = (10.0 * t0 + 100.0).min(T_MAX);

    // Aim at the interior of the acceptance ball so the returned endpoint
    // clears the tolerance with margin even after re-integration drift.
    let radius = 0.5 * oc.endpoint_tol;
    let mut substeps = 16usize;
    let mut total_iters = 0usize;
    let trace = std::env::var("HOLLING3_TRACE").is_ok();

    loop {
        let transcription = Transcription {
            params: oc.params,
            mode: oc.mode,
            s0: oc.s0,
            n,
            substeps,
        };

        // Phase A: ball-constrained approach. Locates the face of the
        // endpoint ball the optimal trajectory stops on.
        let mut lambda = 0.0f64;
        let mut mu = 10.0f64;
        let mut prev_violation = f64::INFINITY;
        let mut stale_outers = 0usize;
        for outer in 0..12 {
            let result = minimize_box(
                |zz| {
                    let (v, g, _) = transcription.objective(zz, oc.sf, radius, lambda, mu);
                    (v, g)
                },
                z.clone(),
                &lo,
                &hi,
                600,
                1e-9,
            );
            z = result.z;
            total_iters += result.iterations;

            let (g, grad_g, _) = transcription.constraint(&z, oc.sf, radius);
            if !g.is_finite() {
                break;
            }
            let violation = if g > 0.0 { g } else { 0.0 };
            let band = 0.5 * radius * radius;
            if g <= band {
                // Near the boundary: recover the multiplier from the
                // stationarity of the transfer time instead of the slow
                // first-order update.
                lambda = if grad_g[0] < 0.0 { -1.0 / grad_g[0] } else { 0.0 };
            } else {
                lambda = (lambda + 2.0 * mu * g).max(0.0);
                if violation > 0.25 * prev_violation {
                    mu = (mu * 10.0).min(1e7);
                }
            }
            if trace {
                eprintln!(
                    "[trace] restart {restart_index} A outer {outer} substeps {substeps} T={:.6} g={:+.3e} iters={} mu={:.1e} lambda={:.3e}",
                    z[0], g, result.iterations, mu, lambda
                );
            }
            if g <= 0.1 * radius * radius {
                break;
            }
            if violation > band && violation > 0.9 * prev_violation {
                stale_outers += 1;
                // A restart that cannot reduce its violation is hopeless;
                // let the others win.
                if stale_outers >= 4 {
                    break;
                }
            } else {
                stale_outers = 0;
            }
            prev_violation = violation.max(1e-300);
        }

        // Phase B: pin the boundary point phase A found and drive the
        // endpoint onto it as an equality, which determines the final
        // time sharply and yields crisp multipliers for the costates.
        let mut multipliers = [0.0f64, 0.0];
        let mut stationary = false;
        let (g_a, _, e_a) = transcription.constraint(&z, oc.sf, radius);
        let e_norm = (e_a[0] * e_a[0] + e_a[1] * e_a[1]).sqrt();
        if g_a.is_finite() && g_a > -0.5 * radius * radius && e_norm > 0.0 {
            let target = State {
                x: oc.sf.x + radius * e_a[0] / e_norm,
                y: oc.sf.y + radius * e_a[1] / e_norm,
            };
            let mut lam = [lambda * 2.0 * e_a[0], lambda * 2.0 * e_a[1]];
            let mut mu_eq = 1e4f64;
            let mut prev_miss = f64::INFINITY;
            for outer in 0..20 {
                let result = minimize_box(
                    |zz| {
                        let (v, g, _) = transcription.objective_eq(zz, target, lam, mu_eq);
                        (v, g)
                    },
                    z.clone(),
                    &lo,
                    &hi,
                    600,
                    1e-10,
                );
                z = result.z;
                total_iters += result.iterations;
                let (_, _, c) = transcription.objective_eq(&z, target, lam, mu_eq);
                if !(c[0].is_finite() && c[1].is_finite()) {
                    break;
                }
                let miss = c[0].abs().max(c[1].abs());
                lam[0] += 2.0 * mu_eq * c[0];
                lam[1] += 2.0 * mu_eq * c[1];

                // Least-squares multipliers over the free variables tighten
                // the estimate once the endpoint is essentially pinned.
                let mut kkt = f64::INFINITY;
                if let Some((_, rows)) = transcription.endpoint_jacobian(&z) {
                    if miss < 1e-6 {
                        if let Some(best) = lsq_multipliers(&z, &lo, &hi, &rows) {
                            lam = best;
                        }
                    }
                    let grad_l: Vec<f64> = (0..z.len())
                        .map(|i| {
                            let base = if i == 0 { 1.0 } else { 0.0 };
                            base + lam[0] * rows[0][i] + lam[1] * rows[1][i]
                        })
                        .collect();
                    kkt = nlp::projected_gradient_norm(&z, &grad_l, &lo, &hi);
                }
                if trace {
                    eprintln!(
                        "[trace] restart {restart_index} B outer {outer} T={:.6} miss={:.3e} kkt={:.3e} iters={} mu={:.1e}",
                        z[0], miss, kkt, result.iterations, mu_eq
                    );
                }
                let lam_scale = 1.0 + lam[0].abs().max(lam[1].abs());
                if miss <= 1e-9 * (1.0 + target.y.abs()) && kkt <= 1e-6 * lam_scale {
                    multipliers = lam;
                    stationary = true;
                    break;
                }
                if miss > 0.25 * prev_miss {
                    mu_eq = (mu_eq * 10.0).min(1e10);
                }
                prev_miss = miss;
                multipliers = lam;
            }
        }

        // Tight re-integration; escalate the transcription resolution until
        // it tracks the reference to 1e-8 per node.
        let (states, defect, miss) = reintegrate(oc, n, &z)?;
        if (defect.is_finite() && defect < 1e-8) || substeps >= 512 {
            return finalize(oc, n, z, states, defect, miss, multipliers, total_iters, stationary, restart_index);
        }
        substeps *= 2;
    }
}

/// Least-squares endpoint multipliers from the stationarity system over
/// the strictly free decision variables.
fn lsq_multipliers(z: &[f64], lo: &[f64], hi: &[f64], rows: &[Vec<f64>; 2]) -> Option<[f64; 2]> {
    let mut ata = [[0.0f64; 2]; 2];
    let mut atb = [0.0f64; 2];
    let mut free = 0usize;
    for i in 0..z.len() {
        let margin = 1e-9 * (1.0 + z[i].abs());
        if z[i] - lo[i] <= margin || hi[i] - z[i] <= margin {
            continue;
        }
        free += 1;
        let a = [rows[0][i], rows[1][i]];
        let b = if i == 0 { -1.0 } else { 0.0 };
        for r in 0..2 {
            for cc in 0..2 {
                ata[r][cc] += a[r] * a[cc];
            }
            atb[r] += a[r] * b;
        }
    }
    if free == 0 {
        return None;
    }
    // Ridge keeps the system meaningful when only one variable is free
    // (rank one): it then returns the minimum-norm stationary multipliers.
    let ridge = 1e-12 * (ata[0][0] + ata[1][1]).max(1e-300);
    ata[0][0] += ridge;
    ata[1][1] += ridge;
    let det = ata[0][0] * ata[1][1] - ata[0][1] * ata[1][0];
    if det.abs() < 1e-300 {
        return None;
    }
    let l0 = (atb[0] * ata[1][1] - atb[1] * ata[0][1]) / det;
    let l1 = (atb[1] * ata[0][0] - atb[0] * ata[1][0]) / det;
    (l0.is_finite() && l1.is_finite()).then_some([l0, l1])
}

/// Constant-control probe: pick the time of closest approach to the
/// target as the initial horizon.
fn initial_time_guess(oc: &OCProblem, u0: f64) -> Result<f64> {
    let p = oc.mode.apply(&oc.params, u0);
    let horizon = 400.0;
    let traj = integrate(&p, oc.s0, SystemKind::AdditionalFood, horizon, Tolerances::default())?;
    let mut best_t = horizon;
    let mut best_d = f64::INFINITY;
    let samples = 4000;
    for i in 0..=samples {
        let t = horizon * i as f64 / samples as f64;
        let s = traj.sample(t);
        let d = (s.x - oc.sf.x).abs().max((s.y - oc.sf.y).abs());
        if d < best_d {
            best_d = d;
            best_t = t;
        }
    }
    Ok(best_t.max(1e-3))
}

/// Integrates the returned control tightly interval by interval,
/// reporting node states, the worst transcription defect, and the
/// endpoint miss.
fn reintegrate(oc: &OCProblem, n: usize, z: &[f64]) -> Result<(Vec<State>, f64, f64)> {
    let transcription = Transcription { params: oc.params, mode: oc.mode, s0: oc.s0, n, substeps: 16 };
    let coarse = transcription.eval(z);
    let h = z[0] / n as f64;
    let mut states = Vec::with_capacity(n + 1);
    let mut s = oc.s0;
    states.push(s);
    let mut defect = 0.0f64;
    for i in 0..n {
        let p = oc.mode.apply(&oc.params, z[1 + i]);
        let traj = integrate(&p, clamp_state(s), SystemKind::AdditionalFood, h, Tolerances::tight())?;
        s = traj.end_state();
        states.push(s);
        let c = coarse.nodes[i + 1];
        if c.x.is_finite() && c.y.is_finite() {
            defect = defect.max((s.x - c.x).abs().max((s.y - c.y).abs()));
        } else {
            defect = f64::INFINITY;
        }
    }
    let miss = (s.x - oc.sf.x).abs().max((s.y - oc.sf.y).abs());
    Ok((states, defect, miss))
}

fn clamp_state(s: State) -> State {
    State { x: s.x.max(0.0), y: s.y.max(0.0) }
}

#[allow(clippy::too_many_arguments)]
fn finalize(
    oc: &OCProblem,
    n: usize,
    z: Vec<f64>,
    states: Vec<State>,
    defect: f64,
    miss: f64,
    multipliers: [f64; 2],
    nlp_iterations: usize,
    stationary: bool,
    restart_index: usize,
) -> Result<OCSolution> {
    let t_final = z[0];
    let controls: Vec<f64> = z[1..].to_vec();
    let times: Vec<f64> = (0..=n).map(|i| t_final * i as f64 / n as f64).collect();

    let costates = backward_costates(oc, &times, &states, &controls, multipliers)?;
    let mut switching: Vec<f64> = states
        .iter()
        .zip(costates.iter())
        .map(|(s, c)| switching_function(&oc.params, *s, c, oc.mode))
        .collect();
    let peak = switching.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        for v in switching.iter_mut() {
            *v /= peak;
        }
    }
    let mut switch_times = Vec::new();
    for i in 1..switching.len() {
        let (a, b) = (switching[i - 1], switching[i]);
        if a != 0.0 && b != 0.0 && a.signum() != b.signum() {
            let frac = a / (a - b);
            switch_times.push(times[i - 1] + frac * (times[i] - times[i - 1]));
        }
    }

    Ok(OCSolution {
        final_time: t_final,
        times,
        states,
        controls,
        costates,
        switching,
        switch_times,
        endpoint_miss: miss,
        transcription_defect: defect,
        multipliers,
        nlp_iterations,
        converged: miss <= oc.endpoint_tol && stationary,
        restart_index,
    })
}

/// Backward integration of the reparameterized adjoints along the state
/// trajectory, seeded with the endpoint multiplier direction. The chain
/// rule `dp/dt = (dp/ds) / (dt/ds)` keeps everything on the t grid.
fn backward_costates(
    oc: &OCProblem,
    times: &[f64],
    states: &[State],
    controls: &[f64],
    lambda: [f64; 2],
) -> Result<Vec<Costate>> {
    let n = controls.len();
    let scale = (lambda[0] * lambda[0] + lambda[1] * lambda[1]).sqrt();
    let terminal = if scale > 0.0 {
        Costate { p: lambda[0] / scale, q: lambda[1] / scale }
    } else {
        Costate { p: 0.0, q: 0.0 }
    };

    let mut out = vec![terminal; n + 1];
    let mut c = terminal;
    const SUBSTEPS: usize = 32;
    for i in (0..n).rev() {
        let u = controls[i];
        let p = oc.mode.apply(&oc.params, u);
        let h = times[i + 1] - times[i];
        if h <= 0.0 {
            out[i] = c;
            continue;
        }
        // State support for the backward pass via tight re-integration of
        // this interval.
        let traj = integrate(&p, clamp_state(states[i]), SystemKind::AdditionalFood, h, Tolerances::tight())?;
        let rhs = |t_local: f64, cc: Costate| -> (f64, f64) {
            let s = traj.sample(t_local);
            let (dp, dq) = costate_rhs(&oc.params, s, &cc, u, oc.mode);
            let dil = time_dilation(&oc.params, s, u, oc.mode);
            (dp / dil, dq / dil)
        };
        let tau = h / SUBSTEPS as f64;
        for k in (0..SUBSTEPS).rev() {
            // RK4 backwards in local time.
            let t1 = (k as f64 + 1.0) * tau;
            let k1 = rhs(t1, c);
            let k2 = rhs(t1 - tau / 2.0, Costate { p: c.p - tau / 2.0 * k1.0, q: c.q - tau / 2.0 * k1.1 });
            let k3 = rhs(t1 - tau / 2.0, Costate { p: c.p - tau / 2.0 * k2.0, q: c.q - tau / 2.0 * k2.1 });
            let k4 = rhs(t1 - tau, Costate { p: c.p - tau * k3.0, q: c.q - tau * k3.1 });
            c = Costate {
                p: c.p - tau / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
                q: c.q - tau / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
            };
        }
        out[i] = c;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::vector_field;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn paper_quality_problem() -> OCProblem {
        OCProblem {
            mode: ControlMode::Quality,
            u_min: 0.0,
            u_max: 2.0,
            params: ModelParams::new(1.2, 0.8, 0.0, 0.05, 1.5, 0.5).unwrap(),
            s0: State { x: 4.0, y: 0.5 },
            sf: State { x: 0.1, y: 19.7 },
            endpoint_tol: 1e-2,
        }
    }

    fn sample_inputs(rng: &mut ChaCha8Rng) -> (ModelParams, State, Costate, f64) {
        let m = rng.random_range(0.2..3.0);
        let p = ModelParams {
            gamma: rng.random_range(0.5..15.0),
            xi: rng.random_range(0.0..4.0),
            alpha: rng.random_range(0.0..4.0),
            epsilon: rng.random_range(0.05..2.0),
            delta: m * rng.random_range(1.05..3.0),
            m,
        };
        let s = State { x: rng.random_range(0.0..p.gamma * 1.5), y: rng.random_range(0.0..20.0) };
        let c = Costate { p: rng.random_range(-2.0..2.0), q: rng.random_range(-2.0..2.0) };
        let u = rng.random_range(0.0..2.0);
        (p, s, c, u)
    }

    #[test]
    fn stretched_field_is_dilation_times_original() {
        let mut rng = ChaCha8Rng::seed_from_u64(79);
        for _ in 0..1000 {
            let (p, s, _, u) = sample_inputs(&mut rng);
            for mode in [ControlMode::Quality, ControlMode::Quantity] {
                let pu = mode.apply(&p, u);
                let d = time_dilation(&p, s, u, mode);
                let (fx, fy) = vector_field(&pu, s, SystemKind::AdditionalFood);
                let (gx, gy) = reparameterized_field(&p, s, u, mode);
                assert!((gx - d * fx).abs() <= 1e-9 * gx.abs().max(1.0));
                assert!((gy - d * fy).abs() <= 1e-9 * gy.abs().max(1.0));
            }
        }
    }

    #[test]
    fn dilation_is_unity_at_origin_without_food_term() {
        let p = ModelParams::new(2.0, 0.0, 3.0, 0.5, 8.0, 6.0).unwrap();
        let d = time_dilation(&p, State { x: 0.0, y: 0.0 }, 0.0, ControlMode::Quality);
        assert_eq!(d, 1.0);
    }

    #[test]
    fn equilibria_survive_reparameterization() {
        let p = ModelParams::new(5.0, 1.0, 0.5, 1.0, 8.0, 6.0).unwrap();
        let eqs = crate::equilibria::equilibria_all(&p, SystemKind::AdditionalFood);
        for e in eqs.iter().filter(|e| e.kind == crate::equilibria::EquilibriumKind::Interior) {
            let (dx, dy) = reparameterized_field(&p, e.point, p.alpha, ControlMode::Quality);
            assert!(dx.abs() < 1e-8 && dy.abs() < 1e-8);
        }
    }

    #[test]
    fn hamiltonian_vanishes_with_zero_costate() {
        let p = ModelParams::new(1.2, 0.8, 0.0, 0.05, 1.5, 0.5).unwrap();
        let c = Costate { p: 0.0, q: 0.0 };
        assert_eq!(hamiltonian(&p, State { x: 1.0, y: 2.0 }, &c, 1.0, ControlMode::Quality), 0.0);
    }

    #[test]
    fn hamiltonian_is_affine_in_the_control() {
        let mut rng = ChaCha8Rng::seed_from_u64(83);
        for _ in 0..500 {
            let (p, s, c, _) = sample_inputs(&mut rng);
            for mode in [ControlMode::Quality, ControlMode::Quantity] {
                let h0 = hamiltonian(&p, s, &c, 0.0, mode);
                let h1 = hamiltonian(&p, s, &c, 1.0, mode);
                let h_mid = hamiltonian(&p, s, &c, 0.5, mode);
                let scale = h0.abs().max(h1.abs()).max(1.0);
                assert!((h_mid - 0.5 * (h0 + h1)).abs() < 1e-12 * scale);
            }
        }
    }

    #[test]
    fn switching_matches_control_derivative_of_hamiltonian() {
        let mut rng = ChaCha8Rng::seed_from_u64(89);
        for _ in 0..500 {
            let (p, s, c, u) = sample_inputs(&mut rng);
            for mode in [ControlMode::Quality, ControlMode::Quantity] {
                // Affine in u, so a wide central difference is exact up to
                // roundoff and avoids amplifying it.
                let h = 0.5;
                let fd = (hamiltonian(&p, s, &c, u + h, mode) - hamiltonian(&p, s, &c, u - h, mode)) / (2.0 * h);
                let sigma = switching_function(&p, s, &c, mode);
                assert!((fd - sigma).abs() < 1e-8 * sigma.abs().max(1.0), "{fd} vs {sigma}");
            }
        }
    }

    #[test]
    fn quality_switching_needs_food_on_the_table() {
        let p = ModelParams::new(1.2, 0.0, 0.0, 0.05, 1.5, 0.5).unwrap();
        let c = Costate { p: 0.7, q: -0.3 };
        assert_eq!(switching_function(&p, State { x: 0.5, y: 2.0 }, &c, ControlMode::Quality), 0.0);
    }

    #[test]
    fn adjoints_match_negative_state_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(97);
        for _ in 0..1000 {
            let (p, s, c, u) = sample_inputs(&mut rng);
            for mode in [ControlMode::Quality, ControlMode::Quantity] {
                let (dp, dq) = costate_rhs(&p, s, &c, u, mode);
                let h = 1e-6 * s.x.abs().max(s.y.abs()).max(1.0);
                let hx = (hamiltonian(&p, State { x: s.x + h, ..s }, &c, u, mode)
                    - hamiltonian(&p, State { x: s.x - h, ..s }, &c, u, mode))
                    / (2.0 * h);
                let hy = (hamiltonian(&p, State { y: s.y + h, ..s }, &c, u, mode)
                    - hamiltonian(&p, State { y: s.y - h, ..s }, &c, u, mode))
                    / (2.0 * h);
                let scale = hx.abs().max(hy.abs()).max(1.0);
                assert!((dp + hx).abs() < 1e-6 * scale, "dp {dp} vs -dH/dx {}", -hx);
                assert!((dq + hy).abs() < 1e-6 * scale, "dq {dq} vs -dH/dy {}", -hy);
            }
        }
    }

    #[test]
    fn adjoint_rhs_at_origin_and_linearity() {
        let p = ModelParams::new(1.2, 0.8, 1.5, 0.05, 1.5, 0.5).unwrap();
        let c = Costate { p: 0.9, q: 0.4 };
        let u = p.alpha;
        let (dp, dq) = costate_rhs(&p, State { x: 0.0, y: 0.0 }, &c, u, ControlMode::Quality);
        assert!((dp + c.p * (1.0 + u * p.xi)).abs() < 1e-14);
        assert!((dq - c.q * (p.m * (1.0 + u * p.xi) - p.delta * p.xi)).abs() < 1e-14);

        let s = State { x: 0.7, y: 1.3 };
        let (a1, b1) = costate_rhs(&p, s, &Costate { p: 2.0 * c.p, q: 2.0 * c.q }, u, ControlMode::Quality);
        let (a0, b0) = costate_rhs(&p, s, &c, u, ControlMode::Quality);
        assert!((a1 - 2.0 * a0).abs() < 1e-12 && (b1 - 2.0 * b0).abs() < 1e-12);
    }

    #[test]
    fn singular_arc_shape() {
        let p = ModelParams::new(1.2, 0.8, 0.0, 0.05, 1.5, 0.5).unwrap();
        assert!(singular_arc_quality(&p, 0.0).unwrap().abs() < 1e-15);
        assert!(singular_arc_quality(&p, p.gamma).unwrap().abs() < 1e-12);
        // Stationary point of x (1 - x/gamma)^2 sits at gamma/3.
        let probe = |x: f64| singular_arc_quality(&p, x).unwrap();
        let third = p.gamma / 3.0;
        let best = (0..=1000)
            .map(|i| p.gamma * i as f64 / 1000.0)
            .max_by(|a, b| probe(*a).partial_cmp(&probe(*b)).unwrap())
            .unwrap();
        assert!((best - third).abs() < 2e-3 * p.gamma);

        let bad = ModelParams::new(1.2, 0.8, 0.0, 0.05, 3.5, 1.5).unwrap();
        assert!(matches!(singular_arc_quality(&bad, 0.5), Err(Error::SingularArcDomain { .. })));
    }

    #[test]
    fn time_reparameterization_reproduces_trajectories() {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        for trial in 0..20 {
            let m = rng.random_range(0.3..2.0);
            let p = ModelParams {
                gamma: rng.random_range(1.0..8.0),
                xi: rng.random_range(0.1..3.0),
                alpha: rng.random_range(0.0..3.0),
                epsilon: rng.random_range(0.05..1.0),
                delta: m * rng.random_range(1.1..2.5),
                m,
            };
            let mode = if trial % 2 == 0 { ControlMode::Quality } else { ControlMode::Quantity };
            let u = rng.random_range(0.0..2.0);
            let s0 = State { x: rng.random_range(0.2..p.gamma), y: rng.random_range(0.2..5.0) };

            // March the stretched system and accumulate physical time.
            let ds = 2e-4;
            let steps = 40_000;
            let mut s = s0;
            let mut t_acc = 0.0;
            let mut checkpoints = Vec::new();
            for k in 0..steps {
                let deriv = |st: State| {
                    let (dx, dy) = reparameterized_field(&p, st, u, mode);
                    let dt = time_dilation(&p, st, u, mode);
                    (dx, dy, dt)
                };
                let k1 = deriv(s);
                let k2 = deriv(State { x: s.x + 0.5 * ds * k1.0, y: s.y + 0.5 * ds * k1.1 });
                let k3 = deriv(State { x: s.x + 0.5 * ds * k2.0, y: s.y + 0.5 * ds * k2.1 });
                let k4 = deriv(State { x: s.x + ds * k3.0, y: s.y + ds * k3.1 });
                s = State {
                    x: s.x + ds / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
                    y: s.y + ds / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
                };
                t_acc += ds / 6.0 * (k1.2 + 2.0 * k2.2 + 2.0 * k3.2 + k4.2);
                if (k + 1) % 10_000 == 0 {
                    checkpoints.push((t_acc, s));
                }
            }

            let pu = mode.apply(&p, u);
            let direct = integrate(&pu, s0, SystemKind::AdditionalFood, t_acc * 1.001, Tolerances::tight()).unwrap();
            for (t, expect) in checkpoints {
                let got = direct.sample(t);
                assert!(
                    (got.x - expect.x).abs() < 1e-6 && (got.y - expect.y).abs() < 1e-6,
                    "mismatch at t = {t}: ({}, {}) vs ({}, {})",
                    got.x,
                    got.y,
                    expect.x,
                    expect.y
                );
            }
        }
    }

    #[test]
    fn coincident_endpoints_give_zero_time() {
        let mut oc = paper_quality_problem();
        oc.sf = oc.s0;
        let sol = solve(&oc, 20).unwrap();
        assert!(sol.final_time < 1e-3, "T = {}", sol.final_time);
        assert!(sol.endpoint_miss <= oc.endpoint_tol);
    }

    #[test]
    fn reachable_target_on_constant_control_trajectory() {
        let oc0 = paper_quality_problem();
        // Manufacture a target the u = u_max flow reaches in 5 time units.
        let pu = oc0.mode.apply(&oc0.params, oc0.u_max);
        let traj = integrate(&pu, oc0.s0, SystemKind::AdditionalFood, 5.0, Tolerances::tight()).unwrap();
        let oc = OCProblem { sf: traj.end_state(), ..oc0 };
        let sol = solve(&oc, 24).unwrap();
        assert!(sol.endpoint_miss <= oc.endpoint_tol);
        assert!(sol.final_time <= 5.1, "T = {}", sol.final_time);
        assert!(sol.transcription_defect < 1e-8);
        let report = verify_pmp(&sol, &oc);
        assert!(report.bang_fraction >= 0.9, "bang fraction {}", report.bang_fraction);
    }

    #[test]
    fn rejects_undersized_grids_and_bad_bounds() {
        let oc = paper_quality_problem();
        assert!(matches!(solve(&oc, 10), Err(Error::InvalidParameter(_))));
        let bad = OCProblem { u_min: 2.0, u_max: 1.0, ..oc };
        assert!(bad.validate().is_err());
    }
}
