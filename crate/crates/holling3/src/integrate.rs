//! Adaptive trajectory integration, runtime positivity/boundedness
//! verification, and asymptotic attractor detection.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{vector_field, ModelParams, State, SystemKind};

/// Absolute/relative local error targets per step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    pub abs: f64,
    pub rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { abs: 1e-9, rel: 1e-7 }
    }
}

impl Tolerances {
    pub fn tight() -> Self {
        Tolerances { abs: 1e-12, rel: 1e-10 }
    }
}

/// Why integration stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalReason {
    TimeExhausted,
    ConvergedToPoint,
    CycleDetected,
}

/// Time-stamped state sequence with integrator metadata. Derivatives are
/// retained at every node so intermediate states interpolate with cubic
/// Hermite accuracy.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    derivs: Vec<(f64, f64)>,
    pub accepted: usize,
    pub rejected: usize,
    pub reason: TerminalReason,
    pub kind: SystemKind,
}

impl Trajectory {
    pub fn end_time(&self) -> f64 {
        *self.times.last().expect("trajectory has at least the initial node")
    }

    pub fn end_state(&self) -> State {
        *self.states.last().expect("trajectory has at least the initial node")
    }

    /// Cubic Hermite interpolation at `t` (clamped to the covered span).
    pub fn sample(&self, t: f64) -> State {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.states[0];
        }
        if t >= self.times[n - 1] {
            return self.states[n - 1];
        }
        let idx = match self.times.binary_search_by(|v| v.partial_cmp(&t).unwrap()) {
            Ok(i) => return self.states[i],
            Err(i) => i - 1,
        };
        let (t0, t1) = (self.times[idx], self.times[idx + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let (s0, s1) = (self.states[idx], self.states[idx + 1]);
        let (d0, d1) = (self.derivs[idx], self.derivs[idx + 1]);
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        State {
            x: h00 * s0.x + h10 * h * d0.0 + h01 * s1.x + h11 * h * d1.0,
            y: h00 * s0.y + h10 * h * d0.1 + h01 * s1.y + h11 * h * d1.1,
        }
    }

    /// States at an evenly spaced grid with spacing `dt`.
    pub fn resample(&self, dt: f64) -> (Vec<f64>, Vec<State>) {
        let t0 = self.times[0];
        let t1 = self.end_time();
        let n = ((t1 - t0) / dt).floor() as usize;
        let mut times = Vec::with_capacity(n + 2);
        let mut states = Vec::with_capacity(n + 2);
        for i in 0..=n {
            let t = t0 + i as f64 * dt;
            times.push(t);
            states.push(self.sample(t));
        }
        if *times.last().unwrap() < t1 {
            times.push(t1);
            states.push(self.end_state());
        }
        (times, states)
    }
}

// Dormand-Prince 5(4) tableau.
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Error-estimate weights: 5th-order minus embedded 4th-order solution.
const E: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];

const MIN_STEP: f64 = 1e-14;
const SAFETY: f64 = 0.9;

struct Options {
    max_step: f64,
    detect: bool,
}

/// Peak-matching and stillness state carried across steps during
/// asymptotic detection.
struct Detector {
    window: std::collections::VecDeque<(f64, State)>,
    last_peak: Option<(f64, f64)>,
    trough_since_peak: f64,
    outcome: Option<(TerminalReason, Option<f64>)>,
}

impl Detector {
    fn new() -> Self {
        Detector {
            window: std::collections::VecDeque::new(),
            last_peak: None,
            trough_since_peak: f64::INFINITY,
            outcome: None,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn observe(
        &mut self,
        t_prev: f64,
        s_prev: State,
        d_prev: (f64, f64),
        t: f64,
        s: State,
        d: (f64, f64),
    ) {
        const WINDOW: f64 = 50.0;
        const STILL: f64 = 1e-9;

        self.trough_since_peak = self.trough_since_peak.min(s.x);

        // Point convergence: flow nearly zero and no movement over a
        // trailing window of 50 time units.
        self.window.push_back((t, s));
        while self.window.len() > 2 && self.window[1].0 <= t - WINDOW {
            self.window.pop_front();
        }
        if t - self.window[0].0 >= WINDOW {
            let (_, old) = self.window[0];
            let moved = (s.x - old.x).abs().max((s.y - old.y).abs());
            let speed = d.0.abs().max(d.1.abs());
            if speed < STILL && moved < STILL {
                self.outcome = Some((TerminalReason::ConvergedToPoint, None));
                return;
            }
        }

        // Prey maxima: the x-derivative crosses from positive to negative.
        if d_prev.0 > 0.0 && d.0 <= 0.0 {
            let (t_pk, x_pk) = refine_peak(t_prev, s_prev, d_prev, t, s, d);
            if let Some((t_last, x_last)) = self.last_peak {
                let amplitude = x_pk - self.trough_since_peak;
                let rel = (x_pk - x_last).abs() / x_pk.abs().max(f64::MIN_POSITIVE);
                if rel < 1e-6 && amplitude > 1e-4 {
                    self.outcome = Some((TerminalReason::CycleDetected, Some(t_pk - t_last)));
                    return;
                }
            }
            self.last_peak = Some((t_pk, x_pk));
            self.trough_since_peak = s.x;
        }
    }
}

/// Locates the prey maximum inside a step by golden-section search on the
/// Hermite interpolant.
fn refine_peak(
    t0: f64,
    s0: State,
    d0: (f64, f64),
    t1: f64,
    s1: State,
    d1: (f64, f64),
) -> (f64, f64) {
    let h = t1 - t0;
    let x_at = |u: f64| {
        let h00 = (1.0 + 2.0 * u) * (1.0 - u) * (1.0 - u);
        let h10 = u * (1.0 - u) * (1.0 - u);
        let h01 = u * u * (3.0 - 2.0 * u);
        let h11 = u * u * (u - 1.0);
        h00 * s0.x + h10 * h * d0.0 + h01 * s1.x + h11 * h * d1.0
    };
    let phi = 0.5 * (5.0f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (0.0, 1.0);
    let (mut u1, mut u2) = (hi - phi * (hi - lo), lo + phi * (hi - lo));
    let (mut f1, mut f2) = (x_at(u1), x_at(u2));
    for _ in 0..60 {
        if f1 < f2 {
            lo = u1;
            u1 = u2;
            f1 = f2;
            u2 = lo + phi * (hi - lo);
            f2 = x_at(u2);
        } else {
            hi = u2;
            u2 = u1;
            f2 = f1;
            u1 = hi - phi * (hi - lo);
            f1 = x_at(u1);
        }
    }
    let u = 0.5 * (lo + hi);
    (t0 + u * h, x_at(u))
}

fn clamp_roundoff(s: &mut State) {
    if s.x < 0.0 && s.x >= -1e-12 {
        s.x = 0.0;
    }
    if s.y < 0.0 && s.y >= -1e-12 {
        s.y = 0.0;
    }
}

fn error_norm(err: (f64, f64), s0: State, s1: State, tol: Tolerances) -> f64 {
    let sx = tol.abs + tol.rel * s0.x.abs().max(s1.x.abs());
    let sy = tol.abs + tol.rel * s0.y.abs().max(s1.y.abs());
    let ex = err.0 / sx;
    let ey = err.1 / sy;
    (0.5 * (ex * ex + ey * ey)).sqrt()
}

fn initial_step(p: &ModelParams, s0: State, kind: SystemKind, t_end: f64, tol: Tolerances) -> f64 {
    let d = vector_field(p, s0, kind);
    let scale = (s0.x.abs() + s0.y.abs()).max(1.0);
    let speed = (d.0.abs() + d.1.abs()).max(1e-8);
    (0.01 * scale / speed).min(t_end / 10.0).max(1e-8).min((tol.abs.max(1e-12)).powf(0.2))
}

fn run(
    p: &ModelParams,
    s0: State,
    kind: SystemKind,
    t_end: f64,
    tol: Tolerances,
    opts: Options,
) -> Result<Trajectory> {
    if !(t_end > 0.0) {
        return Err(Error::InvalidParameter(format!("t_end must be positive, got {t_end}")));
    }
    p.validate()?;
    State::new(s0.x, s0.y)?;

    let f = |s: State| vector_field(p, s, kind);
    let mut t = 0.0;
    let mut s = s0;
    let mut d = f(s);
    let mut h = initial_step(p, s0, kind, t_end, tol).min(opts.max_step);

    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![s0],
        derivs: vec![d],
        accepted: 0,
        rejected: 0,
        reason: TerminalReason::TimeExhausted,
        kind,
    };
    let mut detector = opts.detect.then(Detector::new);

    while t < t_end {
        h = h.min(t_end - t).min(opts.max_step);
        if h < MIN_STEP {
            return Err(Error::StepSizeUnderflow { t, x: s.x, y: s.y });
        }

        // FSAL: k[0] carries over from the previous accepted step.
        let mut k = [(0.0, 0.0); 7];
        k[0] = d;
        for i in 0..6 {
            let mut sx = 0.0;
            let mut sy = 0.0;
            for (j, kj) in k.iter().enumerate().take(i + 1) {
                sx += A[i][j] * kj.0;
                sy += A[i][j] * kj.1;
            }
            let mut stage = State { x: s.x + h * sx, y: s.y + h * sy };
            clamp_roundoff(&mut stage);
            k[i + 1] = f(stage);
        }
        // 5th-order solution is stage 6's argument (b row equals A[5]).
        let mut s_new = State {
            x: s.x + h * (0..6).map(|j| A[5][j] * k[j].0).sum::<f64>(),
            y: s.y + h * (0..6).map(|j| A[5][j] * k[j].1).sum::<f64>(),
        };
        clamp_roundoff(&mut s_new);
        let err = (
            h * (0..7).map(|j| E[j] * k[j].0).sum::<f64>(),
            h * (0..7).map(|j| E[j] * k[j].1).sum::<f64>(),
        );
        let norm = error_norm(err, s, s_new, tol);

        if norm <= 1.0 {
            let t_prev = t;
            let s_prev = s;
            let d_prev = d;
            t += h;
            s = s_new;
            d = k[6];
            traj.times.push(t);
            traj.states.push(s);
            traj.derivs.push(d);
            traj.accepted += 1;
            if let Some(det) = detector.as_mut() {
                det.observe(t_prev, s_prev, d_prev, t, s, d);
                if let Some((reason, _)) = det.outcome {
                    traj.reason = reason;
                    return Ok(finish(traj, detector));
                }
            }
            let grow = if norm == 0.0 { 5.0 } else { SAFETY * norm.powf(-0.2) };
            h *= grow.clamp(0.2, 5.0);
        } else {
            traj.rejected += 1;
            h *= (SAFETY * norm.powf(-0.2)).clamp(0.1, 0.9);
        }
    }
    Ok(finish(traj, detector))
}

fn finish(mut traj: Trajectory, detector: Option<Detector>) -> Trajectory {
    if let Some(det) = detector {
        if let Some((reason, _)) = det.outcome {
            traj.reason = reason;
        }
    }
    traj
}

/// Integrates the selected system from `s0` over `[0, t_end]` with an
/// embedded 4(5) Runge-Kutta pair.
pub fn integrate(p: &ModelParams, s0: State, kind: SystemKind, t_end: f64, tol: Tolerances) -> Result<Trajectory> {
    run(p, s0, kind, t_end, tol, Options { max_step: f64::INFINITY, detect: false })
}

/// Dissipativity certificate for a trajectory: the weighted population
/// `W = x + y/delta` never exceeds `max(W(0), M/K)` with `K = m/2` and
/// `M = gamma (1+K)^2 / 4 + xi/eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundednessCertificate {
    /// Decay constant used in the bound (m/2).
    pub k_choice: f64,
    /// Forcing ceiling `gamma (1+K)^2/4 + xi/eps`.
    pub m_cap: f64,
    /// Largest observed `x + y/delta`.
    pub w_max: f64,
    /// `max(W(0), M/K)`.
    pub bound: f64,
}

/// Verifies nonnegativity (to roundoff) and the dissipativity bound over
/// every sample of `traj`.
pub fn check_positivity_boundedness(traj: &Trajectory, p: &ModelParams) -> Result<BoundednessCertificate> {
    let ep = p.effective(traj.kind);
    let k = ep.m / 2.0;
    let m_cap = ep.gamma * (1.0 + k) * (1.0 + k) / 4.0 + ep.xi / ep.epsilon;
    let w = |s: State| s.x.max(0.0) + s.y.max(0.0) / ep.delta;
    let bound = w(traj.states[0]).max(m_cap / k);

    let mut w_max = 0.0f64;
    for (&t, &s) in traj.times.iter().zip(traj.states.iter()) {
        if s.x < -1e-12 || s.y < -1e-12 {
            return Err(Error::positivity(t, s));
        }
        let wt = w(s);
        if wt > bound * (1.0 + 1e-6) {
            return Err(Error::BoundednessViolation { t, w: wt, bound });
        }
        w_max = w_max.max(wt);
    }
    Ok(BoundednessCertificate { k_choice: k, m_cap, w_max, bound })
}

/// Long-run fate of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AsymptoticOutcome {
    /// Settled at a fixed point.
    Point { x: f64, y: f64 },
    /// Locked onto a periodic orbit; period estimated from prey peaks.
    LimitCycle { period: f64 },
    /// Neither detected before the time horizon ran out.
    Undetermined,
}

/// Default horizon for attractor detection.
pub const ASYMPTOTIC_T_END: f64 = 1e4;

/// Integrates until the trajectory either settles (flow and trailing
/// displacement below 1e-9), repeats prey maxima to 1e-6 relative with
/// amplitude above 1e-4, or exhausts the 1e4 time-unit horizon.
pub fn asymptotic_outcome(p: &ModelParams, s0: State, kind: SystemKind) -> Result<AsymptoticOutcome> {
    asymptotic_outcome_within(p, s0, kind, ASYMPTOTIC_T_END)
}

/// [`asymptotic_outcome`] with an explicit horizon.
pub fn asymptotic_outcome_within(
    p: &ModelParams,
    s0: State,
    kind: SystemKind,
    t_end: f64,
) -> Result<AsymptoticOutcome> {
    // The stillness thresholds sit below the default tolerances' noise
    // floor, so detection always integrates tightly.
    let traj = run(p, s0, kind, t_end, Tolerances::tight(), Options { max_step: 10.0, detect: true })?;
    Ok(match traj.reason {
        TerminalReason::ConvergedToPoint => {
            let s = traj.end_state();
            AsymptoticOutcome::Point { x: s.x, y: s.y }
        }
        TerminalReason::CycleDetected => {
            // Recover the period from the last matched pair of peaks.
            let period = last_period(&traj).unwrap_or(0.0);
            AsymptoticOutcome::LimitCycle { period }
        }
        TerminalReason::TimeExhausted => AsymptoticOutcome::Undetermined,
    })
}

/// Spacing of the last two prey maxima in an already-integrated
/// trajectory.
fn last_period(traj: &Trajectory) -> Option<f64> {
    let mut peaks = Vec::new();
    for i in 1..traj.times.len() {
        if traj.derivs[i - 1].0 > 0.0 && traj.derivs[i].0 <= 0.0 {
            // Peak sits inside [t_{i-1}, t_i]; Hermite refinement.
            let (t_pk, _) = refine_peak(
                traj.times[i - 1],
                traj.states[i - 1],
                traj.derivs[i - 1],
                traj.times[i],
                traj.states[i],
                traj.derivs[i],
            );
            peaks.push(t_pk);
        }
    }
    (peaks.len() >= 2).then(|| peaks[peaks.len() - 1] - peaks[peaks.len() - 2])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibria::{equilibria_all, EquilibriumKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(gamma: f64, xi: f64, alpha: f64, epsilon: f64, delta: f64, m: f64) -> ModelParams {
        ModelParams::new(gamma, xi, alpha, epsilon, delta, m).unwrap()
    }

    #[test]
    fn prey_axis_decays_exponentially() {
        let p = params(2.0, 0.0, 0.0, 0.5, 8.0, 6.0);
        let y0 = 3.0;
        let traj = integrate(&p, State { x: 0.0, y: y0 }, SystemKind::Initial, 2.0, Tolerances::default()).unwrap();
        for (&t, &s) in traj.times.iter().zip(traj.states.iter()) {
            assert_eq!(s.x, 0.0);
            let expect = y0 * (-p.m * t).exp();
            assert!((s.y - expect).abs() < 1e-6 * expect.max(1e-3), "t = {t}");
        }
    }

    #[test]
    fn equilibrium_start_stays_put() {
        let p = params(11.0, 0.0, 0.0, 1.0, 8.0, 6.0);
        let eqs = equilibria_all(&p, SystemKind::Initial);
        let int = eqs.iter().find(|e| e.kind == EquilibriumKind::Interior).unwrap();
        // Per-step noise sits at the tolerance floor, so holding 1e-8 for
        // all time needs the tight pair.
        let traj = integrate(&p, int.point, SystemKind::Initial, 100.0, Tolerances::tight()).unwrap();
        for &s in &traj.states {
            assert!((s.x - int.point.x).abs() < 1e-8);
            assert!((s.y - int.point.y).abs() < 1e-8);
        }
    }

    #[test]
    fn region_one_high_quality_food_drives_prey_axis() {
        // alpha = 5 shifts the attractor to (gamma, 0).
        let p = params(1.0, 1.0, 5.0, 0.5, 8.0, 6.0);
        let out = asymptotic_outcome(&p, State { x: 0.8, y: 0.4 }, SystemKind::AdditionalFood).unwrap();
        match out {
            AsymptoticOutcome::Point { x, y } => {
                assert!((x - p.gamma).abs() < 1e-6);
                assert!(y.abs() < 1e-6);
            }
            other => panic!("expected prey-axis point, got {other:?}"),
        }
    }

    #[test]
    fn region_three_settles_at_interior_point() {
        let p = params(11.0, 0.0, 0.0, 1.0, 8.0, 6.0);
        let eqs = equilibria_all(&p, SystemKind::Initial);
        let int = eqs.iter().find(|e| e.kind == EquilibriumKind::Interior).unwrap();
        let out = asymptotic_outcome(&p, State { x: 2.0, y: 1.0 }, SystemKind::Initial).unwrap();
        match out {
            AsymptoticOutcome::Point { x, y } => {
                assert!((x - int.point.x).abs() < 1e-6);
                assert!((y - int.point.y).abs() < 1e-6);
            }
            other => panic!("expected interior point, got {other:?}"),
        }
    }

    #[test]
    fn region_four_limit_cycle() {
        let p = params(17.0, 0.0, 0.0, 0.35, 3.8, 3.0);
        let out = asymptotic_outcome(&p, State { x: 3.0, y: 1.0 }, SystemKind::Initial).unwrap();
        match out {
            AsymptoticOutcome::LimitCycle { period } => assert!(period > 1.0, "period {period}"),
            other => panic!("expected limit cycle, got {other:?}"),
        }
    }

    #[test]
    fn boundedness_certificates_hold_at_region_four() {
        let p = params(17.0, 0.0, 0.0, 0.35, 3.8, 3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        for _ in 0..100 {
            let s0 = State {
                x: rng.random_range(0.0..2.0 * p.gamma),
                y: rng.random_range(0.0..50.0),
            };
            let traj = integrate(&p, s0, SystemKind::Initial, 200.0, Tolerances::default()).unwrap();
            let cert = check_positivity_boundedness(&traj, &p).unwrap();
            assert!(cert.w_max <= cert.bound * (1.0 + 1e-6));
            for &s in &traj.states {
                assert!(s.x >= -1e-12 && s.y >= -1e-12);
            }
        }
    }

    #[test]
    fn origin_certificate_is_trivial() {
        let p = params(1.0, 1.0, 0.0, 0.5, 8.0, 6.0);
        let traj = integrate(&p, State { x: 0.0, y: 0.0 }, SystemKind::AdditionalFood, 10.0, Tolerances::default()).unwrap();
        let cert = check_positivity_boundedness(&traj, &p).unwrap();
        assert_eq!(cert.w_max, 0.0);
    }

    #[test]
    fn dense_output_matches_tight_reference() {
        let p = params(5.0, 1.0, 0.5, 1.0, 8.0, 6.0);
        let s0 = State { x: 2.0, y: 1.0 };
        let loose = integrate(&p, s0, SystemKind::AdditionalFood, 20.0, Tolerances::default()).unwrap();
        let tight = integrate(&p, s0, SystemKind::AdditionalFood, 20.0, Tolerances::tight()).unwrap();
        for i in 0..=200 {
            let t = 20.0 * i as f64 / 200.0;
            let a = loose.sample(t);
            let b = tight.sample(t);
            assert!((a.x - b.x).abs() < 1e-5, "x mismatch at t = {t}");
            assert!((a.y - b.y).abs() < 1e-5, "y mismatch at t = {t}");
        }
    }

    #[test]
    fn convergence_order_at_least_four() {
        // Fixed-step runs of the same pair: global error should shrink by
        // ~2^5 per halving; require at least 2^4.
        let p = params(5.0, 1.0, 0.5, 1.0, 8.0, 6.0);
        let s0 = State { x: 2.0, y: 1.0 };
        let t_end = 5.0;

        let fixed_run = |n: usize| -> State {
            let h = t_end / n as f64;
            let f = |s: State| vector_field(&p, s, SystemKind::AdditionalFood);
            let mut s = s0;
            let mut d = f(s);
            for _ in 0..n {
                let mut k = [(0.0, 0.0); 7];
                k[0] = d;
                for i in 0..6 {
                    let mut sx = 0.0;
                    let mut sy = 0.0;
                    for (j, kj) in k.iter().enumerate().take(i + 1) {
                        sx += A[i][j] * kj.0;
                        sy += A[i][j] * kj.1;
                    }
                    k[i + 1] = f(State { x: s.x + h * sx, y: s.y + h * sy });
                }
                s = State {
                    x: s.x + h * (0..6).map(|j| A[5][j] * k[j].0).sum::<f64>(),
                    y: s.y + h * (0..6).map(|j| A[5][j] * k[j].1).sum::<f64>(),
                };
                d = k[6];
            }
            s
        };

        // Self-converged fine-grid reference keeps the comparison clear of
        // the adaptive controller's own noise floor.
        let rf = fixed_run(6400);
        let mut errors = Vec::new();
        for n in [25usize, 50, 100, 200] {
            let s = fixed_run(n);
            errors.push(((s.x - rf.x).abs() + (s.y - rf.y).abs()).max(1e-16));
        }
        for w in errors.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 4.0, "observed order {order} from errors {errors:?}");
        }
    }

    #[test]
    fn tightening_tolerances_shrinks_error() {
        let p = params(17.0, 0.0, 0.0, 0.35, 3.8, 3.0);
        let s0 = State { x: 3.0, y: 1.0 };
        let t_end = 50.0;
        let rf = integrate(&p, s0, SystemKind::Initial, t_end, Tolerances { abs: 1e-12, rel: 1e-12 })
            .unwrap()
            .end_state();
        let mut last = f64::INFINITY;
        for k in 0..4 {
            let scale = 0.5f64.powi(3 * k);
            let tol = Tolerances { abs: 1e-6 * scale, rel: 1e-5 * scale };
            let s = integrate(&p, s0, SystemKind::Initial, t_end, tol).unwrap().end_state();
            let err = (s.x - rf.x).abs() + (s.y - rf.y).abs();
            assert!(err <= last * 1.5, "error did not shrink: {err} after {last}");
            last = err;
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = params(1.0, 1.0, 0.0, 0.5, 8.0, 6.0);
        assert!(integrate(&p, State { x: -1.0, y: 0.0 }, SystemKind::Initial, 1.0, Tolerances::default()).is_err());
        assert!(integrate(&p, State { x: 1.0, y: 0.0 }, SystemKind::Initial, 0.0, Tolerances::default()).is_err());
    }

    #[test]
    fn point_outcomes_match_a_computed_equilibrium() {
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        let mut matched = 0;
        for _ in 0..25 {
            let m = rng.random_range(0.5..3.0);
            let p = ModelParams {
                gamma: rng.random_range(0.5..8.0),
                xi: rng.random_range(0.0..3.0),
                alpha: rng.random_range(0.0..3.0),
                epsilon: rng.random_range(0.1..1.5),
                delta: m * rng.random_range(1.1..3.0),
                m,
            };
            let s0 = State { x: rng.random_range(0.1..p.gamma), y: rng.random_range(0.1..5.0) };
            if let Ok(AsymptoticOutcome::Point { x, y }) =
                asymptotic_outcome_within(&p, s0, SystemKind::AdditionalFood, 5e3)
            {
                let eqs = equilibria_all(&p, SystemKind::AdditionalFood);
                let near = eqs
                    .iter()
                    .any(|e| (e.point.x - x).abs() < 1e-6 && (e.point.y - y).abs() < 1e-6);
                assert!(near, "settled at ({x}, {y}) but no equilibrium nearby for {p:?}");
                matched += 1;
            }
        }
        assert!(matched > 5, "too few settled runs: {matched}");
    }
}
