//! CH-k defender policy: the monitor set minimizing sensor cost plus the
//! worst disruption over a list of adversary policies,
//!
//! ```text
//! min_{|M| ≤ β}  κᵀz(M) + max_i Q(M, A_i).
//! ```
//!
//! [`defender_enumerate`] scans every monitor set and is exact.
//! [`defender_branch_and_bound`] solves the big-M mixed-integer SDP by
//! best-first branch-and-bound over the relaxation `z ∈ [0,1]ᴺ`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::tie_slack;
use crate::conic::{self, ConicError, ConicProgram, Domain, SolveStatus, VarId};
use crate::disruption::{add_dissipation_block, DisruptionError, DisruptionTable, Scaling};
use crate::network::{
    binomial, enumerate_attack_sets, enumerate_monitor_sets, AttackSet, MonitorSet, NetworkError, NetworkSpec,
};

/// Largest candidate count the exact scans accept.
pub const DEFAULT_ENUMERATION_CAP: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DefenderError {
    #[error("defender needs at least one adversary policy")]
    NoPolicies,
    #[error("{count} candidates exceed the enumeration cap {cap}")]
    TooManyCandidates { count: usize, cap: usize },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Disruption(#[from] DisruptionError),
    #[error(transparent)]
    Program(#[from] ConicError),
    #[error("root relaxation returned {0:?}")]
    Relaxation(SolveStatus),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefenderMethod {
    Enumeration,
    BranchAndBound,
}

/// Certificate for one adversary policy at the chosen monitor set.
/// `omega = γ ∘ z`: zero off the monitor set.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyCertificate {
    pub attack: AttackSet,
    pub omega: DVector<f64>,
    pub psi: DVector<f64>,
    pub storage: DMatrix<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DefenderSolution {
    pub monitor_set: MonitorSet,
    /// `κᵀz + inner_value`.
    pub objective: f64,
    /// `max_i Q(M, A_i)`.
    pub inner_value: f64,
    pub sensor_cost: f64,
    /// One entry per distinct policy, in set order.
    pub per_adversary: Vec<PolicyCertificate>,
    pub method: DefenderMethod,
    /// Branch-and-bound nodes whose relaxation was solved (0 for enumeration).
    pub nodes_solved: usize,
    /// Nodes that were split (0 if the root relaxation was already decisive).
    pub branchings: usize,
}

pub fn sensor_cost(spec: &NetworkSpec, monitors: &MonitorSet) -> f64 {
    monitors.nodes().iter().map(|&m| spec.sensor_costs()[m]).sum()
}

/// Sorted, deduplicated policy list.
fn distinct_policies(policies: &[AttackSet]) -> Result<Vec<AttackSet>, DefenderError> {
    if policies.is_empty() {
        return Err(DefenderError::NoPolicies);
    }
    let mut v = policies.to_vec();
    v.sort();
    v.dedup();
    Ok(v)
}

fn candidate_count(n: usize, beta: usize) -> usize {
    (0..=beta.min(n)).map(|s| binomial(n, s)).sum()
}

/// `true` if `(obj_a, cost_a, set_a)` should replace `(obj_b, cost_b, set_b)`
/// as the incumbent: strictly lower objective beyond the tie tolerance, or a
/// tie broken by lower cost and then by set order.
fn preferred(a: (f64, f64, &MonitorSet), b: (f64, f64, &MonitorSet)) -> bool {
    let slack = tie_slack(a.0.abs().max(b.0.abs()));
    if a.0 < b.0 - slack {
        return true;
    }
    if a.0 > b.0 + slack {
        return false;
    }
    let cost_slack = 1e-12 * a.1.abs().max(b.1.abs()).max(1.0);
    if a.1 < b.1 - cost_slack {
        return true;
    }
    if a.1 > b.1 + cost_slack {
        return false;
    }
    a.2 < b.2
}

fn assemble_solution(
    table: &DisruptionTable,
    monitors: &MonitorSet,
    policies: &[AttackSet],
    method: DefenderMethod,
) -> Result<DefenderSolution, DefenderError> {
    let pairs: Vec<_> = policies.iter().map(|a| (monitors.clone(), a.clone())).collect();
    let certs = table.evaluate(&pairs)?;
    let per_adversary: Vec<PolicyCertificate> = certs
        .iter()
        .map(|c| PolicyCertificate {
            attack: c.attack.clone(),
            omega: c.gamma.clone(),
            psi: c.psi.clone(),
            storage: c.storage.clone(),
            value: c.value,
        })
        .collect();
    let inner_value = per_adversary.iter().map(|p| p.value).fold(f64::NEG_INFINITY, f64::max);
    let cost = sensor_cost(table.spec(), monitors);
    Ok(DefenderSolution {
        monitor_set: monitors.clone(),
        objective: cost + inner_value,
        inner_value,
        sensor_cost: cost,
        per_adversary,
        method,
        nodes_solved: 0,
        branchings: 0,
    })
}

/// Exact scan over every monitor set of size `0..=β`.
pub fn defender_enumerate(
    table: &DisruptionTable,
    policies: &[AttackSet],
    beta: usize,
) -> Result<DefenderSolution, DefenderError> {
    let policies = distinct_policies(policies)?;
    let n = table.spec().n_nodes();
    let count = candidate_count(n, beta);
    if count > DEFAULT_ENUMERATION_CAP {
        return Err(DefenderError::TooManyCandidates {
            count,
            cap: DEFAULT_ENUMERATION_CAP,
        });
    }
    let candidates = enumerate_monitor_sets(n, beta);
    let pairs: Vec<_> = candidates
        .iter()
        .flat_map(|m| policies.iter().map(move |a| (m.clone(), a.clone())))
        .collect();
    let values = table.evaluate(&pairs)?;

    let mut best: Option<(f64, f64, &MonitorSet)> = None;
    for (m, chunk) in candidates.iter().zip(values.chunks(policies.len())) {
        let inner = chunk.iter().map(|c| c.value).fold(f64::NEG_INFINITY, f64::max);
        let cost = sensor_cost(table.spec(), m);
        let entry = (cost + inner, cost, m);
        if best.is_none_or(|b| preferred(entry, b)) {
            best = Some(entry);
        }
    }
    let chosen = best.expect("at least the empty set").2.clone();
    assemble_solution(table, &chosen, &policies, DefenderMethod::Enumeration)
}

/// Defender against every admissible attack set: the policy the hierarchy
/// converges to.
pub fn full_coverage_policy(
    table: &DisruptionTable,
    alpha: usize,
    beta: usize,
    cap: usize,
) -> Result<DefenderSolution, DefenderError> {
    let n = table.spec().n_nodes();
    let count = binomial(n, alpha);
    if count > cap {
        return Err(DefenderError::TooManyCandidates { count, cap });
    }
    let all = enumerate_attack_sets(n, alpha)?;
    defender_enumerate(table, &all, beta)
}

/// Relaxation of the big-M program with some indicators fixed.
struct Relaxation {
    program: ConicProgram,
    z: Vec<VarId>,
}

fn build_relaxation(
    spec: &NetworkSpec,
    policies: &[AttackSet],
    beta: usize,
    energy: f64,
    big_m: f64,
    eps: f64,
    fixed: &[Option<bool>],
) -> Result<Relaxation, ConicError> {
    let n = spec.n_nodes();
    let output = spec.perf_gram().amax();
    let output = if output > 0.0 { output } else { 1.0 };
    let mut program = ConicProgram::new();

    let z: Vec<VarId> = (0..n)
        .map(|i| program.add_variable(format!("z[{}]", i + 1), Domain::NonNegative))
        .collect();
    for (i, &zi) in z.iter().enumerate() {
        program.add_objective(zi, spec.sensor_costs()[i]);
        match fixed[i] {
            Some(true) => program.add_linear_le(&[(zi, -1.0)], 1.0)?,
            Some(false) => program.add_linear_le(&[(zi, 1.0)], 0.0)?,
            None => program.add_linear_le(&[(zi, 1.0)], -1.0)?,
        }
    }
    let budget: Vec<_> = z.iter().map(|&v| (v, 1.0)).collect();
    program.add_linear_le(&budget, -(beta as f64))?;

    let q = program.add_variable("Q", Domain::AtLeast(eps / output));
    program.add_objective(q, output);

    for (idx, attack) in policies.iter().enumerate() {
        let label = format!("A{}.", idx + 1);
        let b = spec.attack_input_matrix(attack);
        let mut scaling = Scaling::equilibrate(spec, &b);
        scaling.output = output;
        let omega: Vec<(usize, VarId)> = (0..n)
            .map(|i| {
                (
                    i,
                    program.add_variable(format!("{label}omega[{}]", i + 1), Domain::NonNegative),
                )
            })
            .collect();
        for &(i, w) in &omega {
            // ω = s·ω̃ ≤ M∞·z
            program.add_linear_le(&[(w, 1.0), (z[i], -big_m / output)], 0.0)?;
        }
        let vars = add_dissipation_block(&mut program, spec, &b, &omega, &scaling, eps, &label)?;
        let mut row: Vec<(VarId, f64)> = omega.iter().map(|&(i, w)| (w, spec.alarm_thresholds()[i])).collect();
        for (j, &v) in vars.psi.iter().enumerate() {
            row.push((v, energy * scaling.columns[j].powi(2)));
        }
        row.push((q, -1.0));
        program.add_linear_le(&row, 0.0)?;
    }
    Ok(Relaxation { program, z })
}

struct Node {
    bound: f64,
    order: usize,
    fixed: Vec<Option<bool>>,
    z: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // Max-heap on reversed bound: smallest bound first, then oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.order.cmp(&self.order))
    }
}

const INTEGRALITY_TOL: f64 = 1e-6;

/// Best-first branch-and-bound on the big-M relaxation. Integral-looking
/// relaxations are confirmed by exact evaluation of the rounded set, since a
/// tiny `z_i` still buys `ω_i ≤ M∞·z_i` of monitoring.
pub fn defender_branch_and_bound(
    table: &DisruptionTable,
    policies: &[AttackSet],
    beta: usize,
    big_m: f64,
) -> Result<DefenderSolution, DefenderError> {
    let policies = distinct_policies(policies)?;
    let spec = table.spec();
    let n = spec.n_nodes();
    let settings = table.settings();

    let mut nodes_solved = 0;
    let mut branchings = 0;
    let mut counter = 0;
    let mut solve_node = |fixed: Vec<Option<bool>>| -> Result<Option<Node>, DefenderError> {
        let relax = build_relaxation(spec, &policies, beta, table.energy(), big_m, settings.eps_pos, &fixed)?;
        let sol = conic::solve(&relax.program, settings);
        nodes_solved += 1;
        counter += 1;
        match sol.status {
            SolveStatus::Optimal => Ok(Some(Node {
                bound: sol.objective_value,
                order: counter,
                z: relax.z.iter().map(|&v| sol.value(v)).collect(),
                fixed,
            })),
            SolveStatus::Infeasible => Ok(None),
            s if counter == 1 => Err(DefenderError::Relaxation(s)),
            s => {
                log::warn!("branch-and-bound node relaxation returned {s:?}; node dropped");
                Ok(None)
            }
        }
    };

    let exact = |m: &MonitorSet| -> Result<(f64, f64), DefenderError> {
        let pairs: Vec<_> = policies.iter().map(|a| (m.clone(), a.clone())).collect();
        let inner = table
            .evaluate(&pairs)?
            .iter()
            .map(|c| c.value)
            .fold(f64::NEG_INFINITY, f64::max);
        let cost = sensor_cost(spec, m);
        Ok((cost + inner, cost))
    };

    let mut incumbent: Option<(f64, f64, MonitorSet)> = None;
    let offer = |m: MonitorSet, incumbent: &mut Option<(f64, f64, MonitorSet)>| -> Result<f64, DefenderError> {
        let (obj, cost) = exact(&m)?;
        let better = match incumbent {
            None => true,
            Some((o, c, s)) => preferred((obj, cost, &m), (*o, *c, s)),
        };
        if better {
            *incumbent = Some((obj, cost, m));
        }
        Ok(obj)
    };

    let mut heap = BinaryHeap::new();
    match solve_node(vec![None; n])? {
        Some(root) => heap.push(root),
        None => return Err(DefenderError::Relaxation(SolveStatus::Infeasible)),
    }
    offer(MonitorSet::empty(), &mut incumbent)?;

    while let Some(node) = heap.pop() {
        if let Some((best, _, _)) = &incumbent {
            if node.bound > best + tie_slack(*best) {
                // Best-first: every remaining node is worse. Tied nodes are
                // still explored so the tie-break matches enumeration.
                break;
            }
        }

        let fixed_ones: Vec<usize> = (0..n).filter(|&i| node.fixed[i] == Some(true)).collect();
        // Rounding heuristic: fixed ones plus the largest fractional entries.
        let mut order: Vec<usize> = (0..n).filter(|&i| node.fixed[i].is_none()).collect();
        order.sort_by(|&a, &b| node.z[b].total_cmp(&node.z[a]).then(a.cmp(&b)));
        let mut rounded = fixed_ones.clone();
        for &i in &order {
            if rounded.len() < beta && node.z[i] >= 0.5 {
                rounded.push(i);
            }
        }
        let rounded = MonitorSet::new(&rounded, n, beta).expect("rounded set within budget");
        let rounded_value = offer(rounded, &mut incumbent)?;
        offer(
            MonitorSet::new(&fixed_ones, n, beta).expect("fixed set within budget"),
            &mut incumbent,
        )?;

        let free: Vec<usize> = (0..n).filter(|&i| node.fixed[i].is_none()).collect();
        if free.is_empty() {
            continue;
        }
        let frac = |i: usize| node.z[i].min(1.0 - node.z[i]);
        let most_fractional = free
            .iter()
            .copied()
            .max_by(|&a, &b| frac(a).total_cmp(&frac(b)).then(b.cmp(&a)))
            .expect("free coordinates");
        let branch_on = if frac(most_fractional) > INTEGRALITY_TOL {
            most_fractional
        } else if rounded_value <= node.bound + tie_slack(rounded_value).max(10.0 * settings.feasibility_tol) {
            // Integral and confirmed: subtree solved.
            continue;
        } else {
            // Integral-looking but the relaxation exploits tiny z entries:
            // split on the free coordinate carrying the most weight.
            order[0]
        };

        branchings += 1;
        for value in [true, false] {
            if value && fixed_ones.len() >= beta {
                continue;
            }
            let mut fixed = node.fixed.clone();
            fixed[branch_on] = Some(value);
            if let Some(child) = solve_node(fixed)? {
                let dominated = incumbent
                    .as_ref()
                    .is_some_and(|(best, _, _)| child.bound > best + tie_slack(*best));
                if !dominated {
                    heap.push(child);
                }
            }
        }
    }

    let (_, _, chosen) = incumbent.expect("empty set is always offered");
    let mut solution = assemble_solution(table, &chosen, &policies, DefenderMethod::BranchAndBound)?;
    solution.nodes_solved = nodes_solved;
    solution.branchings = branchings;
    Ok(solution)
}

/// Independent re-check of a solution's invariants against fresh disruption
/// solves. Returns a description of each violation.
pub fn validate_solution(
    table: &DisruptionTable,
    solution: &DefenderSolution,
    beta: usize,
    big_m: f64,
    tol: f64,
) -> Vec<String> {
    let spec = table.spec();
    let mut issues = Vec::new();
    let m = &solution.monitor_set;
    if m.len() > beta {
        issues.push(format!("|M| = {} exceeds budget {beta}", m.len()));
    }
    let z = m.indicator(spec.n_nodes());
    let scale = solution.inner_value.abs().max(1.0);
    for pc in &solution.per_adversary {
        for i in 0..spec.n_nodes() {
            if pc.omega[i] < -tol || pc.omega[i] > big_m * z[i] + tol {
                issues.push(format!(
                    "ω[{}] = {} violates 0 ≤ ω ≤ M∞·z for {}",
                    i + 1,
                    pc.omega[i],
                    pc.attack
                ));
            }
        }
        let dual = spec.alarm_thresholds().dot(&pc.omega) + table.energy() * pc.psi.sum();
        if dual > solution.inner_value + tol * scale {
            issues.push(format!(
                "δᵀω + E·1ᵀψ = {dual} exceeds Q_k = {} for {}",
                solution.inner_value, pc.attack
            ));
        }
        match crate::disruption::worst_case_disruption(spec, m, &pc.attack, table.energy(), table.settings()) {
            Ok(fresh) if (fresh.value - pc.value).abs() > tol * fresh.value.abs().max(1.0) => issues.push(format!(
                "stored Q = {} but re-solve gives {} for {}",
                pc.value, fresh.value, pc.attack
            )),
            Ok(_) => {}
            Err(e) => issues.push(format!("re-solve failed: {e}")),
        }
    }
    let recomputed = sensor_cost(spec, m) + solution.inner_value;
    if (recomputed - solution.objective).abs() > 1e-8 * recomputed.abs().max(1e-12) {
        issues.push(format!("objective {} ≠ κᵀz + Q_k = {recomputed}", solution.objective));
    }
    issues
}
