//! CH-k adversary best response: the attack set maximizing `Q(M_k, A)` for a
//! fixed monitor set.
//!
//! [`best_response_enumerate`] solves every admissible set separately and is
//! the primary path. [`best_response_joint`] solves all sets in one SDP with
//! a shared `Q_k` and per-set gap variables `ε_A = Q_k − Q(M_k, A)`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conic::{self, ConicError, ConicProgram, Domain, SolveStatus, SolverSettings, VarId};
use crate::disruption::{add_dissipation_block, DisruptionError, DisruptionTable, Scaling};
use crate::network::{binomial, enumerate_attack_sets, AttackSet, MonitorSet, NetworkError, NetworkSpec};

/// Relative tolerance below which two disruption values count as tied.
pub const TIE_TOL: f64 = 1e-6;

pub(crate) fn tie_slack(reference: f64) -> f64 {
    TIE_TOL * reference.abs().max(1e-12)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseMethod {
    Enumeration,
    JointSdp,
}

/// One admissible attack set's disruption and its gap to the best.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub attack: AttackSet,
    pub value: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdversaryResponse {
    pub monitors: MonitorSet,
    pub best_set: AttackSet,
    pub best_value: f64,
    /// Every admissible set, in lexicographic order.
    pub candidates: Vec<Candidate>,
    pub method: ResponseMethod,
}

impl AdversaryResponse {
    pub fn gap(&self, attack: &AttackSet) -> Option<f64> {
        self.candidates.iter().find(|c| &c.attack == attack).map(|c| c.gap)
    }

    pub fn value(&self, attack: &AttackSet) -> Option<f64> {
        self.candidates.iter().find(|c| &c.attack == attack).map(|c| c.value)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdversaryError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Disruption(#[from] DisruptionError),
    #[error(transparent)]
    Program(#[from] ConicError),
    #[error("joint program returned {0:?}")]
    Solver(SolveStatus),
    #[error("weight r = {r} does not dominate {sets} gap variables (Q_k = {q_k}, largest per-set value {max_value})")]
    UnderWeighted {
        r: f64,
        sets: usize,
        q_k: f64,
        max_value: f64,
    },
}

/// Lexicographically smallest set whose value is within [`TIE_TOL`] of the
/// maximum. `values` must be in lexicographic set order.
fn argmax_with_ties(values: &[f64]) -> usize {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .position(|&v| v >= max - tie_slack(max))
        .expect("nonempty candidate list")
}

/// Solves `Q(M, A)` for every admissible `A` and returns the argmax.
pub fn best_response_enumerate(
    table: &DisruptionTable,
    monitors: &MonitorSet,
    alpha: usize,
) -> Result<AdversaryResponse, AdversaryError> {
    let sets = enumerate_attack_sets(table.spec().n_nodes(), alpha)?;
    let pairs: Vec<_> = sets.iter().map(|a| (monitors.clone(), a.clone())).collect();
    let values: Vec<f64> = table.evaluate(&pairs)?.iter().map(|c| c.value).collect();
    let best = argmax_with_ties(&values);
    let best_value = values[best];
    let candidates = sets
        .into_iter()
        .zip(&values)
        .map(|(attack, &value)| Candidate {
            attack,
            value,
            gap: best_value - value,
        })
        .collect::<Vec<_>>();
    Ok(AdversaryResponse {
        monitors: monitors.clone(),
        best_set: candidates[best].attack.clone(),
        best_value,
        candidates,
        method: ResponseMethod::Enumeration,
    })
}

/// Default gap weight: ten times the number of admissible sets.
pub fn default_weight(n: usize, alpha: usize) -> f64 {
    10.0 * binomial(n, alpha) as f64
}

struct JointSet {
    attack: AttackSet,
    gamma: Vec<(usize, VarId)>,
    psi: Vec<VarId>,
    scaling: Scaling,
    epsilon: VarId,
}

/// One SDP over all admissible sets: minimize `r·Q_k − Σ ε_A` subject to
/// `δᵀγ_A + E·1ᵀψ_A + ε_A ≤ Q_k` and one dissipation inequality per set.
/// The best set is the one with the smallest gap.
pub fn best_response_joint(
    spec: &NetworkSpec,
    monitors: &MonitorSet,
    alpha: usize,
    energy: f64,
    weight_r: f64,
    settings: &SolverSettings,
) -> Result<AdversaryResponse, AdversaryError> {
    let sets = enumerate_attack_sets(spec.n_nodes(), alpha)?;
    let output = spec.perf_gram().amax();
    let output = if output > 0.0 { output } else { 1.0 };
    let eps = settings.eps_pos;

    let mut program = ConicProgram::new();
    let q_k = program.add_variable("Q_k", Domain::NonNegative);
    program.add_objective(q_k, weight_r);
    let mut joint = Vec::with_capacity(sets.len());
    for (idx, attack) in sets.iter().enumerate() {
        let b = spec.attack_input_matrix(attack);
        let mut scaling = Scaling::equilibrate(spec, &b);
        scaling.output = output;
        let label = format!("A{}.", idx + 1);
        let gamma: Vec<(usize, VarId)> = monitors
            .nodes()
            .iter()
            .map(|&m| {
                let v = program.add_variable(format!("{label}gamma[{}]", m + 1), Domain::AtLeast(eps / output));
                (m, v)
            })
            .collect();
        let vars = add_dissipation_block(&mut program, spec, &b, &gamma, &scaling, eps, &label)?;
        let epsilon = program.add_variable(format!("{label}eps"), Domain::NonNegative);
        program.add_objective(epsilon, -1.0);

        let mut row: Vec<(VarId, f64)> = gamma.iter().map(|&(m, v)| (v, spec.alarm_thresholds()[m])).collect();
        for (j, &v) in vars.psi.iter().enumerate() {
            row.push((v, energy * scaling.columns[j] * scaling.columns[j]));
        }
        row.push((epsilon, 1.0));
        row.push((q_k, -1.0));
        program.add_linear_le(&row, 0.0)?;
        joint.push(JointSet {
            attack: attack.clone(),
            gamma,
            psi: vars.psi,
            scaling,
            epsilon,
        });
    }

    let sol = conic::solve(&program, settings);
    let under_weighted = |q: f64, max_value: f64| AdversaryError::UnderWeighted {
        r: weight_r,
        sets: sets.len(),
        q_k: q,
        max_value,
    };
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Unbounded => return Err(under_weighted(f64::INFINITY, f64::NAN)),
        s => return Err(AdversaryError::Solver(s)),
    }

    let best_value = output * sol.value(q_k);
    let mut values = Vec::with_capacity(joint.len());
    let mut gaps = Vec::with_capacity(joint.len());
    for set in &joint {
        let s = set.scaling.output;
        let mut gamma = DVector::zeros(spec.n_nodes());
        for &(m, v) in &set.gamma {
            gamma[m] = s * sol.value(v);
        }
        let psi_sum: f64 = set
            .psi
            .iter()
            .enumerate()
            .map(|(j, &v)| s * set.scaling.columns[j].powi(2) * sol.value(v))
            .sum();
        values.push(spec.alarm_thresholds().dot(&gamma) + energy * psi_sum);
        gaps.push(output * sol.value(set.epsilon));
    }
    let max_value = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if (best_value - max_value).abs() > tie_slack(max_value).max(10.0 * settings.feasibility_tol) {
        return Err(under_weighted(best_value, max_value));
    }

    let min_gap = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    let best = gaps
        .iter()
        .position(|&g| g <= min_gap + tie_slack(best_value))
        .expect("nonempty candidate list");
    let candidates = joint
        .into_iter()
        .zip(values.iter().zip(&gaps))
        .map(|(set, (&value, &gap))| Candidate {
            attack: set.attack,
            value,
            gap,
        })
        .collect::<Vec<_>>();
    Ok(AdversaryResponse {
        monitors: monitors.clone(),
        best_set: candidates[best].attack.clone(),
        best_value,
        candidates,
        method: ResponseMethod::JointSdp,
    })
}

/// Attack sets whose gap is at most `cap` (never below the tie floor): the
/// near-best alternatives.
pub fn epsilon_cap(response: &AdversaryResponse, cap: f64) -> Vec<&Candidate> {
    let limit = cap.max(tie_slack(response.best_value));
    response.candidates.iter().filter(|c| c.gap <= limit).collect()
}
