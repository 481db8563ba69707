//! Cognitive-hierarchy policy iteration.
//!
//! Level 0: the defender picks `β` sensors at random and the adversary best
//! responds. Level `k ≥ 1`: the defender optimizes against every adversary
//! policy seen at levels `< k`, then the adversary best responds to it. Once
//! the adversary repeats itself (`A_{ℓ+1} = A_ℓ`) the defender faces the same
//! policy set forever after, so every later level is a copy of level `ℓ+1`.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{best_response_enumerate, AdversaryError};
use crate::defender::{defender_enumerate, sensor_cost, DefenderError};
use crate::disruption::{DisruptionError, DisruptionTable};
use crate::network::{AttackSet, GameBudgets, MonitorSet};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GameError {
    #[error("level {level}: adversary: {source}")]
    Adversary { level: usize, source: AdversaryError },
    #[error("level {level}: defender: {source}")]
    Defender { level: usize, source: DefenderError },
    #[error(transparent)]
    Disruption(#[from] DisruptionError),
}

/// One level of the hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub level: usize,
    pub monitors: MonitorSet,
    pub attack: AttackSet,
    /// `Q(M_k, A_k)`.
    pub disruption: f64,
    /// `R_k = κᵀz_k + max_{i<k} Q(M_k, A_i)`; at level 0, `κᵀz_0 + Q(M_0, A_0)`.
    pub objective: f64,
    /// `false` at level 0, where `M_0` is random rather than optimized.
    pub optimized: bool,
    /// The row repeats the first post-convergence level.
    pub repeated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTrace {
    pub rows: Vec<TraceRow>,
    pub seed: u64,
    /// First `ℓ` with `A_{ℓ+1} = A_ℓ`.
    pub converged_at: Option<usize>,
}

impl PolicyTrace {
    /// Distinct adversary policies appearing in the trace.
    pub fn distinct_attacks(&self) -> Vec<AttackSet> {
        let mut v: Vec<_> = self.rows.iter().map(|r| r.attack.clone()).collect();
        v.sort();
        v.dedup();
        v
    }
}

/// Level-0 monitor set: `β` distinct nodes drawn by `rand::seq::index::sample`
/// from a ChaCha8 stream seeded with `seed_from_u64(seed)`.
pub fn random_monitor_set(n: usize, beta: usize, seed: u64) -> MonitorSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = rand::seq::index::sample(&mut rng, n, beta.min(n)).into_vec();
    MonitorSet::new(&nodes, n, beta).expect("sampled nodes are distinct and in range")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IterationOptions {
    /// Compute every level even after convergence.
    pub force_full: bool,
}

/// Runs levels `0..=q`.
pub fn run_ch_iteration(
    table: &DisruptionTable,
    budgets: &GameBudgets,
    q: usize,
    seed: u64,
    options: IterationOptions,
) -> Result<PolicyTrace, GameError> {
    let spec = table.spec();
    let n = spec.n_nodes();

    let m0 = random_monitor_set(n, budgets.beta, seed);
    let r0 = best_response_enumerate(table, &m0, budgets.alpha)
        .map_err(|source| GameError::Adversary { level: 0, source })?;
    let mut rows = vec![TraceRow {
        level: 0,
        objective: sensor_cost(spec, &m0) + r0.best_value,
        monitors: m0,
        attack: r0.best_set,
        disruption: r0.best_value,
        optimized: false,
        repeated: false,
    }];
    let mut history = vec![rows[0].attack.clone()];
    let mut converged_at: Option<usize> = None;

    for level in 1..=q {
        if let Some(l) = converged_at {
            if !options.force_full {
                let mut row = rows[l + 1].clone();
                row.level = level;
                row.repeated = true;
                rows.push(row);
                continue;
            }
        }
        let d = defender_enumerate(table, &history, budgets.beta)
            .map_err(|source| GameError::Defender { level, source })?;
        let r = best_response_enumerate(table, &d.monitor_set, budgets.alpha)
            .map_err(|source| GameError::Adversary { level, source })?;
        let repeated = converged_at.is_some_and(|l| level > l + 1);
        if converged_at.is_none() && r.best_set == rows[level - 1].attack {
            converged_at = Some(level - 1);
        }
        history.push(r.best_set.clone());
        rows.push(TraceRow {
            level,
            monitors: d.monitor_set,
            attack: r.best_set,
            disruption: r.best_value,
            objective: d.objective,
            optimized: true,
            repeated,
        });
    }
    Ok(PolicyTrace {
        rows,
        seed,
        converged_at,
    })
}

/// Re-derives every row from its predecessors and reports mismatches: each
/// `A_k` must be the adversary's answer to `M_k`, and each `M_k` (k ≥ 1) the
/// defender's answer to `{A_0, …, A_{k−1}}`.
pub fn recheck_trace(
    table: &DisruptionTable,
    budgets: &GameBudgets,
    trace: &PolicyTrace,
) -> Result<Vec<String>, GameError> {
    let mut issues = Vec::new();
    if let Some(first) = trace.rows.first() {
        if first.monitors != random_monitor_set(table.spec().n_nodes(), budgets.beta, trace.seed) {
            issues.push(format!("level 0: M_0 = {} is not the seeded draw", first.monitors));
        }
    }
    for (k, row) in trace.rows.iter().enumerate() {
        if k > 0 {
            let history: Vec<_> = trace.rows[..k].iter().map(|r| r.attack.clone()).collect();
            let d = defender_enumerate(table, &history, budgets.beta)
                .map_err(|source| GameError::Defender { level: k, source })?;
            if d.monitor_set != row.monitors {
                issues.push(format!(
                    "level {k}: stored M = {}, recomputed {}",
                    row.monitors, d.monitor_set
                ));
            }
            if (d.objective - row.objective).abs() > proposition_slack(d.objective) {
                issues.push(format!(
                    "level {k}: stored R = {}, recomputed {}",
                    row.objective, d.objective
                ));
            }
        }
        let r = best_response_enumerate(table, &row.monitors, budgets.alpha)
            .map_err(|source| GameError::Adversary { level: k, source })?;
        if r.best_set != row.attack {
            issues.push(format!(
                "level {k}: stored A = {}, recomputed {}",
                row.attack, r.best_set
            ));
        }
    }
    if detect_convergence(&trace.rows) != trace.converged_at {
        issues.push(format!(
            "stored convergence level {:?} disagrees with the rows",
            trace.converged_at
        ));
    }
    Ok(issues)
}

/// First `ℓ` with `A_{ℓ+1} = A_ℓ`.
pub fn detect_convergence(rows: &[TraceRow]) -> Option<usize> {
    rows.windows(2).position(|w| w[0].attack == w[1].attack)
}

/// `Q(M_k, A_ℓ)` for every defender level `k` (rows) and adversary level `ℓ`
/// (columns) of a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeGrid {
    pub monitors: Vec<MonitorSet>,
    pub attacks: Vec<AttackSet>,
    pub values: DMatrix<f64>,
}

impl OutcomeGrid {
    /// A grid from raw values, with placeholder sets.
    pub fn from_values(values: DMatrix<f64>) -> Self {
        OutcomeGrid {
            monitors: vec![MonitorSet::empty(); values.nrows()],
            attacks: vec![AttackSet::default(); values.ncols()],
            values,
        }
    }

    pub fn levels(&self) -> usize {
        self.values.nrows()
    }
}

pub fn outcome_grid(table: &DisruptionTable, trace: &PolicyTrace) -> Result<OutcomeGrid, GameError> {
    let monitors: Vec<_> = trace.rows.iter().map(|r| r.monitors.clone()).collect();
    let attacks: Vec<_> = trace.rows.iter().map(|r| r.attack.clone()).collect();
    let pairs: Vec<_> = monitors
        .iter()
        .flat_map(|m| attacks.iter().map(move |a| (m.clone(), a.clone())))
        .collect();
    let certs = table.evaluate(&pairs)?;
    let k = monitors.len();
    let values = DMatrix::from_fn(k, k, |i, j| certs[i * k + j].value);
    Ok(OutcomeGrid {
        monitors,
        attacks,
        values,
    })
}

/// Absolute slack used by the proposition checks: `1e-6·max(1, |Q|)`.
pub fn proposition_slack(q: f64) -> f64 {
    1e-6 * q.abs().max(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowFinding {
    pub defender_level: usize,
    /// Row maximum is on the diagonal: the adversary gains nothing by
    /// reasoning at a level other than the defender's.
    pub resonance_optimal: bool,
    /// Column of the row maximum.
    pub argmax_level: usize,
    /// `max_ℓ Q(M_k, A_ℓ) − Q(M_k, A_k)`.
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnFinding {
    pub adversary_level: usize,
    /// `Q(M_{ℓ+1}, A_ℓ) − Q(M_ℓ, A_ℓ)`; non-positive when reasoning one level
    /// deeper helps the defender.
    pub change: f64,
    pub benefit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    /// An off-diagonal entry beats the diagonal in its row.
    AdversaryMismatchGain {
        defender_level: usize,
        adversary_level: usize,
        excess: f64,
    },
    /// The next defender level did worse against `A_ℓ`.
    DefenderRegression { adversary_level: usize, increase: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MismatchReport {
    pub rows: Vec<RowFinding>,
    pub columns: Vec<ColumnFinding>,
    pub violations: Vec<Violation>,
}

impl MismatchReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Row check: each defender level's worst case sits on the diagonal. Column
/// check (only meaningful with uniform sensor costs, so `check_defender`
/// gates whether failures count as violations): moving one defender level
/// deeper never increases `Q` against a fixed adversary.
pub fn mismatch_report(grid: &OutcomeGrid, check_defender: bool) -> MismatchReport {
    let v = &grid.values;
    let k = v.nrows().min(v.ncols());
    let mut rows = Vec::with_capacity(k);
    let mut violations = Vec::new();
    for i in 0..k {
        let diag = v[(i, i)];
        let (mut arg, mut max) = (i, diag);
        for j in 0..v.ncols() {
            if v[(i, j)] > max {
                max = v[(i, j)];
                arg = j;
            }
        }
        let excess = max - diag;
        let resonance_optimal = excess <= proposition_slack(diag);
        if !resonance_optimal {
            violations.push(Violation::AdversaryMismatchGain {
                defender_level: i,
                adversary_level: arg,
                excess,
            });
        }
        rows.push(RowFinding {
            defender_level: i,
            resonance_optimal,
            argmax_level: arg,
            excess,
        });
    }
    let mut columns = Vec::new();
    for l in 0..k.saturating_sub(1) {
        let change = v[(l + 1, l)] - v[(l, l)];
        let benefit = change <= proposition_slack(v[(l, l)]);
        if check_defender && !benefit {
            violations.push(Violation::DefenderRegression {
                adversary_level: l,
                increase: change,
            });
        }
        columns.push(ColumnFinding {
            adversary_level: l,
            change,
            benefit,
        });
    }
    MismatchReport {
        rows,
        columns,
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::SolverSettings;
    use crate::network::{binomial, random_network, GainRanges};

    fn row(level: usize, attack: &[usize]) -> TraceRow {
        TraceRow {
            level,
            monitors: MonitorSet::empty(),
            attack: AttackSet::new(attack, 10, attack.len()).unwrap(),
            disruption: 0.0,
            objective: 0.0,
            optimized: level > 0,
            repeated: false,
        }
    }

    #[test]
    fn convergence_detection() {
        let mut rows: Vec<_> = (0..17).map(|k| row(k, &[k % 10])).collect();
        for k in 17..20 {
            rows.push(row(k, &[1, 3, 9]));
        }
        assert_eq!(detect_convergence(&rows), Some(17));
        let changing: Vec<_> = (0..5).map(|k| row(k, &[k])).collect();
        assert_eq!(detect_convergence(&changing), None);
        assert_eq!(detect_convergence(&rows[..1]), None);
    }

    #[test]
    fn random_monitors_are_seeded() {
        let a = random_monitor_set(10, 3, 7);
        assert_eq!(a.len(), 3);
        assert_eq!(a, random_monitor_set(10, 3, 7));
        let distinct: std::collections::HashSet<_> = (0..20).map(|s| random_monitor_set(10, 3, s)).collect();
        assert!(distinct.len() > 1);
    }

    #[test]
    fn hand_built_grids() {
        let clean = OutcomeGrid::from_values(DMatrix::from_row_slice(2, 2, &[3.0, 2.0, 1.0, 2.0]));
        assert!(mismatch_report(&clean, true).is_clean());

        let bad = OutcomeGrid::from_values(DMatrix::from_row_slice(2, 2, &[3.0, 3.5, 1.0, 2.0]));
        let report = mismatch_report(&bad, true);
        assert_eq!(report.violations.len(), 1);
        assert!(matches!(
            report.violations[0],
            Violation::AdversaryMismatchGain {
                defender_level: 0,
                adversary_level: 1,
                ..
            }
        ));

        let single = OutcomeGrid::from_values(DMatrix::from_element(1, 1, 4.0));
        assert!(mismatch_report(&single, true).is_clean());
    }

    #[test]
    fn defender_regression_flagged_only_when_checked() {
        let g = OutcomeGrid::from_values(DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 5.0, 6.0]));
        assert!(mismatch_report(&g, false).is_clean());
        assert_eq!(mismatch_report(&g, true).violations.len(), 1);
    }

    fn instance(seed: u64, n: usize) -> crate::network::NetworkSpec {
        random_network(seed, n, 0.5, &GainRanges::default())
            .unwrap()
            .with_perf_weight(DMatrix::identity(n, n) * 5.0)
            .unwrap()
    }

    #[test]
    fn iteration_structure() {
        let spec = instance(2, 5);
        let budgets = GameBudgets::new(&spec, 2, 2, 1.0, None).unwrap();
        let table = DisruptionTable::new(&spec, 1.0, SolverSettings::default());
        let q = binomial(5, 2) + 1;
        let trace = run_ch_iteration(&table, &budgets, q, 3, IterationOptions::default()).unwrap();
        assert_eq!(trace.rows.len(), q + 1);
        assert_eq!(trace.rows[0].monitors.len(), 2);
        assert!(!trace.rows[0].optimized);
        let l = trace.converged_at.expect("converges within C(N,α)+1 levels");
        assert_eq!(detect_convergence(&trace.rows), Some(l));
        for r in &trace.rows[l + 2..] {
            assert_eq!(r.monitors, trace.rows[l + 1].monitors);
            assert_eq!(r.attack, trace.rows[l + 1].attack);
            assert!(r.repeated);
        }
        assert!(trace.distinct_attacks().len() <= binomial(5, 2));
        for w in trace.rows[1..].windows(2) {
            assert!(w[1].objective >= w[0].objective - proposition_slack(w[0].objective));
        }

        let full = run_ch_iteration(&table, &budgets, q, 3, IterationOptions { force_full: true }).unwrap();
        assert_eq!(full, trace);
        assert!(recheck_trace(&table, &budgets, &trace).unwrap().is_empty());

        let mut tampered = trace.clone();
        tampered.rows[1].attack = tampered.rows[0].attack.clone();
        assert!(!recheck_trace(&table, &budgets, &tampered).unwrap().is_empty());
    }

    #[test]
    fn level_zero_only() {
        let spec = instance(5, 4);
        let budgets = GameBudgets::new(&spec, 1, 2, 1.0, None).unwrap();
        let table = DisruptionTable::new(&spec, 1.0, SolverSettings::default());
        let trace = run_ch_iteration(&table, &budgets, 0, 9, IterationOptions::default()).unwrap();
        assert_eq!(trace.rows.len(), 1);
        let r = &trace.rows[0];
        assert_eq!(r.monitors, random_monitor_set(4, 2, 9));
        let best = best_response_enumerate(&table, &r.monitors, 1).unwrap();
        assert_eq!(best.best_set, r.attack);
    }

    #[test]
    fn grid_diagonal_matches_trace() {
        let spec = instance(6, 4);
        let budgets = GameBudgets::new(&spec, 1, 2, 1.0, None).unwrap();
        let table = DisruptionTable::new(&spec, 1.0, SolverSettings::default());
        let trace = run_ch_iteration(&table, &budgets, 4, 1, IterationOptions::default()).unwrap();
        let grid = outcome_grid(&table, &trace).unwrap();
        for (k, r) in trace.rows.iter().enumerate() {
            assert!((grid.values[(k, k)] - r.disruption).abs() <= 1e-6 * r.disruption.max(1.0));
        }
        let report = mismatch_report(&grid, false);
        assert!(report.rows.iter().all(|f| f.resonance_optimal), "{report:?}");
    }
}
