//! Parameter-sweep atlases over food quality, quantity, and interference
//! strength, combining analytic classification with simulated attractors.

use rayon::prelude::*;
use serde::Serialize;

use crate::equilibria::{equilibria_all, Equilibrium, EquilibriumKind};
use crate::integrate::{asymptotic_outcome, AsymptoticOutcome};
use crate::model::{ModelParams, State, SystemKind};
use crate::stability::{classify, Classified};

/// Grid axes for a sweep; an empty axis keeps the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SweepGrid {
    pub alpha: Vec<f64>,
    pub xi: Vec<f64>,
    pub epsilon: Vec<f64>,
}

impl SweepGrid {
    fn axis(values: &[f64], base: f64) -> Vec<f64> {
        if values.is_empty() {
            vec![base]
        } else {
            values.to_vec()
        }
    }
}

/// Joint analytic/simulated verdict for one grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CellOutcome {
    /// Every probe settles on a stable interior equilibrium.
    InteriorStable,
    /// Every probe settles on a stable (gamma, 0).
    AxialPreyStable,
    /// Every probe settles on the food-only axial point.
    PreyEliminated,
    /// Every probe locks onto a periodic orbit around an unstable interior
    /// point.
    LimitCycle,
    /// Probes disagree, time out, or contradict the classification.
    Mixed,
}

/// One cell of a sweep atlas.
#[derive(Debug, Clone, Serialize)]
pub struct AtlasCell {
    pub alpha: f64,
    pub xi: f64,
    pub epsilon: f64,
    pub outcome: CellOutcome,
    pub equilibria: Vec<(Equilibrium, Classified)>,
    /// Per-cell failure; the sweep itself never aborts.
    pub error: Option<String>,
}

/// Evaluates every grid cell: equilibria and their classification plus
/// attractor probes from each initial condition. Cells run in parallel
/// and come back in grid order (alpha outermost, then xi, then epsilon).
pub fn sweep(
    base: &ModelParams,
    kind: SystemKind,
    grid: &SweepGrid,
    initial_conditions: &[State],
) -> Vec<AtlasCell> {
    let alphas = SweepGrid::axis(&grid.alpha, base.alpha);
    let xis = SweepGrid::axis(&grid.xi, base.xi);
    let epsilons = SweepGrid::axis(&grid.epsilon, base.epsilon);

    let mut cells = Vec::new();
    for &alpha in &alphas {
        for &xi in &xis {
            for &epsilon in &epsilons {
                cells.push((alpha, xi, epsilon));
            }
        }
    }

    cells
        .into_par_iter()
        .map(|(alpha, xi, epsilon)| evaluate_cell(base, kind, alpha, xi, epsilon, initial_conditions))
        .collect()
}

fn evaluate_cell(
    base: &ModelParams,
    kind: SystemKind,
    alpha: f64,
    xi: f64,
    epsilon: f64,
    initial_conditions: &[State],
) -> AtlasCell {
    let p = ModelParams { alpha, xi, epsilon, ..*base };
    if let Err(e) = p.validate() {
        return AtlasCell {
            alpha,
            xi,
            epsilon,
            outcome: CellOutcome::Mixed,
            equilibria: Vec::new(),
            error: Some(e.to_string()),
        };
    }

    let equilibria: Vec<(Equilibrium, Classified)> = equilibria_all(&p, kind)
        .into_iter()
        .map(|e| {
            let c = classify(&p, &e, kind);
            (e, c)
        })
        .collect();

    let mut error = None;
    let mut probe_kinds: Vec<Option<ProbeResult>> = Vec::new();
    for &s0 in initial_conditions {
        match asymptotic_outcome(&p, s0, kind) {
            Ok(AsymptoticOutcome::Point { x, y }) => {
                let hit = equilibria.iter().find(|(e, _)| {
                    (e.point.x - x).abs() < 1e-6 && (e.point.y - y).abs() < 1e-6
                });
                probe_kinds.push(hit.map(|(e, c)| ProbeResult::Settled(e.kind, c.class.is_stable())));
            }
            Ok(AsymptoticOutcome::LimitCycle { .. }) => probe_kinds.push(Some(ProbeResult::Cycle)),
            Ok(AsymptoticOutcome::Undetermined) => probe_kinds.push(None),
            Err(e) => {
                error = Some(e.to_string());
                probe_kinds.push(None);
            }
        }
    }

    let outcome = synthesize(&probe_kinds, &equilibria);
    AtlasCell { alpha, xi, epsilon, outcome, equilibria, error }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum ProbeResult {
    Settled(EquilibriumKind, bool),
    Cycle,
}

/// Outcome is committed only when every probe agrees and the analytic
/// classification backs the observation; anything else is `Mixed`.
fn synthesize(probes: &[Option<ProbeResult>], equilibria: &[(Equilibrium, Classified)]) -> CellOutcome {
    let Some(first) = probes.first().copied().flatten() else {
        return CellOutcome::Mixed;
    };
    if probes.iter().any(|p| *p != Some(first)) {
        return CellOutcome::Mixed;
    }
    match first {
        ProbeResult::Cycle => {
            let interior_unstable = equilibria.iter().any(|(e, c)| {
                e.kind == EquilibriumKind::Interior
                    && c.class.is_unstable()
                    && c.eigenvalues[0].im != 0.0
            });
            if interior_unstable {
                CellOutcome::LimitCycle
            } else {
                CellOutcome::Mixed
            }
        }
        ProbeResult::Settled(kind, stable) => match (kind, stable) {
            (EquilibriumKind::Interior, true) => CellOutcome::InteriorStable,
            (EquilibriumKind::AxialPrey, true) => CellOutcome::AxialPreyStable,
            (EquilibriumKind::AxialPredator, _) => CellOutcome::PreyEliminated,
            _ => CellOutcome::Mixed,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(gamma: f64, xi: f64, alpha: f64, epsilon: f64, delta: f64, m: f64) -> ModelParams {
        ModelParams::new(gamma, xi, alpha, epsilon, delta, m).unwrap()
    }

    #[test]
    fn quality_sweep_at_region_one_base_reaches_prey_axis() {
        let base = params(1.0, 1.0, 0.0, 0.5, 8.0, 6.0);
        let grid = SweepGrid { alpha: vec![0.5, 2.0, 5.0, 10.0], ..Default::default() };
        let ics = [State { x: 0.8, y: 0.4 }, State { x: 0.3, y: 1.0 }];
        let cells = sweep(&base, SystemKind::AdditionalFood, &grid, &ics);
        assert_eq!(cells.len(), 4);
        // Quality degrades with alpha; large alpha hands the system to E1.
        let last = cells.last().unwrap();
        assert_eq!(last.outcome, CellOutcome::AxialPreyStable, "{last:?}");
        assert!(cells.iter().all(|c| c.error.is_none()));
    }

    #[test]
    fn interference_sweep_at_rich_food_base_stays_on_prey_axis() {
        let base = params(7.0, 10.0, 10.0, 0.5, 6.0, 4.0);
        let grid = SweepGrid { epsilon: vec![0.1, 0.5, 1.0, 2.0], ..Default::default() };
        let ics = [State { x: 2.0, y: 1.0 }];
        let cells = sweep(&base, SystemKind::AdditionalFood, &grid, &ics);
        for cell in &cells {
            assert_eq!(cell.outcome, CellOutcome::AxialPreyStable, "{cell:?}");
        }
    }

    #[test]
    fn region_four_base_cycles() {
        let base = params(17.0, 0.0, 0.0, 0.35, 3.8, 3.0);
        let cells = sweep(&base, SystemKind::Initial, &SweepGrid::default(), &[State { x: 3.0, y: 1.0 }]);
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].outcome, CellOutcome::LimitCycle);
    }

    #[test]
    fn invalid_cells_carry_errors_without_aborting() {
        let base = params(1.0, 1.0, 0.0, 0.5, 8.0, 6.0);
        let grid = SweepGrid { epsilon: vec![-1.0, 0.5], ..Default::default() };
        let cells = sweep(&base, SystemKind::AdditionalFood, &grid, &[State { x: 0.5, y: 0.5 }]);
        assert_eq!(cells.len(), 2);
        assert!(cells[0].error.is_some());
        assert!(cells[1].error.is_none());
    }

    #[test]
    fn grid_ordering_is_row_major() {
        let base = params(1.0, 1.0, 0.0, 0.5, 8.0, 6.0);
        let grid = SweepGrid { alpha: vec![0.0, 1.0], xi: vec![0.5, 1.5], ..Default::default() };
        let cells = sweep(&base, SystemKind::AdditionalFood, &grid, &[]);
        let coords: Vec<(f64, f64)> = cells.iter().map(|c| (c.alpha, c.xi)).collect();
        assert_eq!(coords, vec![(0.0, 0.5), (0.0, 1.5), (1.0, 0.5), (1.0, 1.5)]);
    }
}
