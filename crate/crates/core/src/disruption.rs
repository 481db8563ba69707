//! Worst-case disruption `Q(M, A)`: the largest performance-output energy an
//! energy-bounded attack on `A` can cause while every monitored output stays
//! under its alarm threshold.
//!
//! `Q` is computed from its dual: minimize `δᵀγ + E·1ᵀψ` over dual weights
//! `γ ≥ 0` (monitored nodes only), `ψ > 0`, and a symmetric storage matrix
//! `P`, subject to the dissipation inequality
//!
//! ```text
//! [ A_cᵀP + PA_c + WᵀW − diag(γ∘z)   P·B_A     ]
//! [ B_AᵀP                           −diag(ψ)  ]  ⪯ 0
//! ```
//!
//! A frequency-domain oracle for the unmonitored single-channel case lives
//! alongside it, together with [`DisruptionTable`], a memoizing batch
//! evaluator used by the policy solvers.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rayon::prelude::*;
use thiserror::Error;

use crate::conic::{self, ConicError, ConicProgram, Domain, SolveStatus, SolverSettings, VarId};
use crate::network::{AttackSet, MonitorSet, NetworkSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DisruptionError {
    #[error("solver returned {status:?} for M = {monitors}, A = {attack}")]
    Solver {
        status: SolveStatus,
        monitors: MonitorSet,
        attack: AttackSet,
        /// Text dump of the program that failed.
        dump: String,
    },
    #[error(transparent)]
    Program(#[from] ConicError),
    #[error("energy bound {0} must be positive")]
    Energy(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("frequency oracle needs a single attack channel, got {0}")]
    MultiChannel(usize),
    #[error("closed loop is not Hurwitz")]
    NotHurwitz,
}

/// Dual certificate for one `(M, A)` pair, in original (unscaled) units.
#[derive(Debug, Clone, PartialEq)]
pub struct DisruptionCertificate {
    pub monitors: MonitorSet,
    pub attack: AttackSet,
    /// `Q(M, A) = δᵀγ + E·1ᵀψ`.
    pub value: f64,
    /// Length `N`, zero off the monitor set.
    pub gamma: DVector<f64>,
    /// Length `α`.
    pub psi: DVector<f64>,
    /// Storage function coefficient `P`.
    pub storage: DMatrix<f64>,
    pub status: SolveStatus,
    /// Largest eigenvalue of the dissipation matrix at the certificate.
    pub lmi_residual: f64,
}

/// Dissipation matrix at `(γ, ψ, P)`; negative semidefinite iff the
/// certificate is feasible.
pub fn dissipation_matrix(
    spec: &NetworkSpec,
    attack: &AttackSet,
    gamma: &DVector<f64>,
    psi: &DVector<f64>,
    storage: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n = spec.n_nodes();
    let alpha = attack.len();
    let b = spec.attack_input_matrix(attack);
    let ac = spec.closed_loop();
    let top = ac.transpose() * storage + storage * ac + spec.perf_gram() - DMatrix::from_diagonal(gamma);
    let pb = storage * &b;
    let mut m = DMatrix::zeros(n + alpha, n + alpha);
    m.view_mut((0, 0), (n, n)).copy_from(&top);
    m.view_mut((0, n), (n, alpha)).copy_from(&pb);
    m.view_mut((n, 0), (alpha, n)).copy_from(&pb.transpose());
    for j in 0..alpha {
        m[(n + j, n + j)] = -psi[j];
    }
    m
}

impl DisruptionCertificate {
    /// Recomputes the dissipation matrix's largest eigenvalue.
    pub fn recheck(&self, spec: &NetworkSpec) -> f64 {
        let m = dissipation_matrix(spec, &self.attack, &self.gamma, &self.psi, &self.storage);
        m.symmetric_eigenvalues()
            .iter()
            .fold(f64::NEG_INFINITY, |a, &b| a.max(b))
    }

    /// `δᵀγ + E·1ᵀψ` recomputed from the stored dual variables.
    pub fn dual_objective(&self, spec: &NetworkSpec, energy: f64) -> f64 {
        spec.alarm_thresholds().dot(&self.gamma) + energy * self.psi.sum()
    }
}

/// Diagonal rescaling applied before solving: the output weight is divided
/// by `output` and attack column `j` by `columns[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaling {
    pub output: f64,
    pub columns: Vec<f64>,
}

impl Scaling {
    pub fn identity(alpha: usize) -> Self {
        Scaling {
            output: 1.0,
            columns: vec![1.0; alpha],
        }
    }

    /// Max-abs equilibration of `WᵀW` and of each column of `B_A`.
    pub fn equilibrate(spec: &NetworkSpec, b: &DMatrix<f64>) -> Self {
        let nonzero_or_one = |v: f64| if v > 0.0 { v } else { 1.0 };
        Scaling {
            output: nonzero_or_one(spec.perf_gram().amax()),
            columns: (0..b.ncols()).map(|j| nonzero_or_one(b.column(j).amax())).collect(),
        }
    }

    /// Objective weight of scaled `ψ̃_j` (times `E`).
    fn psi_weight(&self, j: usize) -> f64 {
        self.columns[j] * self.columns[j]
    }
}

/// Variables of one dissipation block inside a larger program.
#[derive(Debug, Clone)]
pub(crate) struct DissipationVars {
    /// Upper-triangle entries of `P`, row-major over `i ≤ j`.
    pub p: Vec<VarId>,
    pub psi: Vec<VarId>,
}

/// Symmetric basis matrix for entry `(i, j)`.
fn sym_basis(n: usize, i: usize, j: usize) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(n, n);
    s[(i, j)] = 1.0;
    s[(j, i)] = 1.0;
    s
}

/// Adds one scaled dissipation block. `monitor_weights` lists the
/// variables subtracted from the state diagonal. New `ψ̃` variables get
/// lower bound `psi_floor / (s·c_j²)`.
pub(crate) fn add_dissipation_block(
    program: &mut ConicProgram,
    spec: &NetworkSpec,
    b: &DMatrix<f64>,
    monitor_weights: &[(usize, VarId)],
    scaling: &Scaling,
    psi_floor: f64,
    label: &str,
) -> Result<DissipationVars, ConicError> {
    let n = spec.n_nodes();
    let alpha = b.ncols();
    let dim = n + alpha;
    let ac = spec.closed_loop();
    let mut b_scaled = b.clone();
    for j in 0..alpha {
        let c = scaling.columns[j];
        b_scaled.column_mut(j).scale_mut(1.0 / c);
    }

    let mut constant = DMatrix::zeros(dim, dim);
    constant
        .view_mut((0, 0), (n, n))
        .copy_from(&(spec.perf_gram() / scaling.output));

    let mut terms = Vec::new();
    let mut p = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            let v = program.add_variable(format!("{label}P[{},{}]", i + 1, j + 1), Domain::Free);
            p.push(v);
            let s = sym_basis(n, i, j);
            let mut f = DMatrix::zeros(dim, dim);
            f.view_mut((0, 0), (n, n)).copy_from(&(ac.transpose() * &s + &s * ac));
            let sb = &s * &b_scaled;
            f.view_mut((0, n), (n, alpha)).copy_from(&sb);
            f.view_mut((n, 0), (alpha, n)).copy_from(&sb.transpose());
            terms.push((v, f));
        }
    }
    for &(node, v) in monitor_weights {
        let mut f = DMatrix::zeros(dim, dim);
        f[(node, node)] = -1.0;
        terms.push((v, f));
    }
    let mut psi = Vec::with_capacity(alpha);
    for j in 0..alpha {
        let lb = psi_floor / (scaling.output * scaling.psi_weight(j));
        let v = program.add_variable(format!("{label}psi[{}]", j + 1), Domain::AtLeast(lb));
        psi.push(v);
        let mut f = DMatrix::zeros(dim, dim);
        f[(n + j, n + j)] = -1.0;
        terms.push((v, f));
    }
    program.add_lmi_block(&constant, &terms)?;
    Ok(DissipationVars { p, psi })
}

/// The single-pair disruption program plus the handles needed to read a
/// certificate back out of a solution.
#[derive(Debug, Clone)]
pub struct DisruptionProgram {
    pub program: ConicProgram,
    /// `(node, γ̃_node)` for monitored nodes only.
    pub gamma: Vec<(usize, VarId)>,
    pub psi: Vec<VarId>,
    pub storage: Vec<VarId>,
    pub scaling: Scaling,
    n: usize,
}

fn build_program(
    spec: &NetworkSpec,
    monitors: &MonitorSet,
    attack: &AttackSet,
    energy: f64,
    eps_pos: f64,
    scaling: Scaling,
) -> Result<DisruptionProgram, ConicError> {
    let b = spec.attack_input_matrix(attack);
    let mut program = ConicProgram::new();
    let gamma: Vec<(usize, VarId)> = monitors
        .nodes()
        .iter()
        .map(|&m| {
            let v = program.add_variable(format!("gamma[{}]", m + 1), Domain::AtLeast(eps_pos / scaling.output));
            (m, v)
        })
        .collect();
    let vars = add_dissipation_block(&mut program, spec, &b, &gamma, &scaling, eps_pos, "")?;
    for &(m, v) in &gamma {
        program.add_objective(v, spec.alarm_thresholds()[m]);
    }
    for (j, &v) in vars.psi.iter().enumerate() {
        program.add_objective(v, energy * scaling.psi_weight(j));
    }
    Ok(DisruptionProgram {
        program,
        gamma,
        psi: vars.psi,
        storage: vars.p,
        scaling,
        n: spec.n_nodes(),
    })
}

/// Unscaled disruption program: variables `γ_m` (m ∈ M), `ψ_1..ψ_α`, the
/// `N(N+1)/2` entries of `P`; one `(N+α)×(N+α)` block.
pub fn assemble_disruption_lmi(
    spec: &NetworkSpec,
    monitors: &MonitorSet,
    attack: &AttackSet,
    energy: f64,
    eps_pos: f64,
) -> Result<DisruptionProgram, ConicError> {
    build_program(spec, monitors, attack, energy, eps_pos, Scaling::identity(attack.len()))
}

impl DisruptionProgram {
    /// Converts solver values into unscaled `(γ, ψ, P)`.
    pub fn unscale(&self, values: &[f64]) -> (DVector<f64>, DVector<f64>, DMatrix<f64>) {
        let s = self.scaling.output;
        let mut gamma = DVector::zeros(self.n);
        for &(m, v) in &self.gamma {
            gamma[m] = s * values[v.index()];
        }
        let psi = DVector::from_iterator(
            self.psi.len(),
            self.psi
                .iter()
                .enumerate()
                .map(|(j, v)| s * self.scaling.psi_weight(j) * values[v.index()]),
        );
        let mut storage = DMatrix::zeros(self.n, self.n);
        let mut k = 0;
        for i in 0..self.n {
            for j in i..self.n {
                let x = s * values[self.storage[k].index()];
                storage[(i, j)] = x;
                storage[(j, i)] = x;
                k += 1;
            }
        }
        (gamma, psi, storage)
    }

    /// Inverse of [`Self::unscale`]: the solver-space point for a
    /// certificate.
    pub fn values_for(&self, cert: &DisruptionCertificate) -> Vec<f64> {
        let s = self.scaling.output;
        let mut values = vec![0.0; self.program.num_variables()];
        for &(m, v) in &self.gamma {
            values[v.index()] = cert.gamma[m] / s;
        }
        for (j, v) in self.psi.iter().enumerate() {
            values[v.index()] = cert.psi[j] / (s * self.scaling.psi_weight(j));
        }
        let mut k = 0;
        for i in 0..self.n {
            for j in i..self.n {
                values[self.storage[k].index()] = cert.storage[(i, j)] / s;
                k += 1;
            }
        }
        values
    }
}

/// Solves the dual SDP for `Q(M, A)` with equilibration and returns an
/// unscaled certificate.
pub fn worst_case_disruption(
    spec: &NetworkSpec,
    monitors: &MonitorSet,
    attack: &AttackSet,
    energy: f64,
    settings: &SolverSettings,
) -> Result<DisruptionCertificate, DisruptionError> {
    if !(energy > 0.0 && energy.is_finite()) {
        return Err(DisruptionError::Energy(energy));
    }
    let b = spec.attack_input_matrix(attack);
    let scaling = Scaling::equilibrate(spec, &b);
    let problem = build_program(spec, monitors, attack, energy, settings.eps_pos, scaling)?;
    let sol = conic::solve(&problem.program, settings);
    if sol.status != SolveStatus::Optimal {
        return Err(DisruptionError::Solver {
            status: sol.status,
            monitors: monitors.clone(),
            attack: attack.clone(),
            dump: problem.program.dump(),
        });
    }
    let (gamma, psi, storage) = problem.unscale(&sol.values);
    let mut cert = DisruptionCertificate {
        monitors: monitors.clone(),
        attack: attack.clone(),
        value: 0.0,
        gamma,
        psi,
        storage,
        status: sol.status,
        lmi_residual: 0.0,
    };
    cert.value = cert.dual_objective(spec, energy);
    cert.lmi_residual = cert.recheck(spec);
    Ok(cert)
}

/// Angular frequencies for the transfer-function oracle. Always contains 0.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    points: Vec<f64>,
    refine: bool,
}

impl FrequencyGrid {
    /// `count` log-spaced points on `[lo, hi]`, plus `ω = 0`.
    pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Self {
        assert!(lo > 0.0 && hi > lo && count >= 2);
        let (a, b) = (lo.ln(), hi.ln());
        let mut points = vec![0.0];
        points.extend((0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()));
        FrequencyGrid { points, refine: true }
    }

    /// 400 points spanning three decades either side of the closed-loop
    /// time scales.
    pub fn for_network(spec: &NetworkSpec) -> Self {
        Self::log_spaced(1e-3 * spec.slowest_rate(), 1e3 * spec.spectral_radius(), 400)
    }

    /// Evaluate only at the grid points (no local refinement of the peak).
    pub fn without_refinement(mut self) -> Self {
        self.refine = false;
        self
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }
}

/// `‖W (jωI − A)⁻¹ b‖²` for a single input column.
pub fn transfer_gain_sq(a: &DMatrix<f64>, b: &DVector<f64>, w: &DMatrix<f64>, omega: f64) -> f64 {
    let n = a.nrows();
    let m = DMatrix::from_fn(n, n, |i, j| {
        let re = -a[(i, j)];
        let im = if i == j { omega } else { 0.0 };
        Complex::new(re, im)
    });
    let rhs = DVector::from_iterator(n, b.iter().map(|&v| Complex::new(v, 0.0)));
    let x = m.lu().solve(&rhs).expect("jωI − A is invertible for Hurwitz A");
    let wc = w.map(|v| Complex::new(v, 0.0));
    (wc * x).norm_squared()
}

/// `sup_ω ‖W(jωI − A)⁻¹b‖²` over the grid, refined by golden-section search
/// around the best grid point. Never exceeds the true supremum.
pub fn peak_gain_sq(a: &DMatrix<f64>, b: &DVector<f64>, w: &DMatrix<f64>, grid: &FrequencyGrid) -> (f64, f64) {
    let pts = grid.points();
    let gains: Vec<f64> = pts.iter().map(|&om| transfer_gain_sq(a, b, w, om)).collect();
    let (mut best_idx, mut best) = (0, gains[0]);
    for (i, &g) in gains.iter().enumerate() {
        if g > best {
            best = g;
            best_idx = i;
        }
    }
    let mut best_omega = pts[best_idx];
    if grid.refine && pts.len() >= 3 {
        let lo = pts[best_idx.saturating_sub(1)];
        let hi = pts[(best_idx + 1).min(pts.len() - 1)];
        let f = |om: f64| transfer_gain_sq(a, b, w, om);
        let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
        let (mut x0, mut x3) = (lo, hi);
        let mut x1 = x3 - inv_phi * (x3 - x0);
        let mut x2 = x0 + inv_phi * (x3 - x0);
        let (mut f1, mut f2) = (f(x1), f(x2));
        for _ in 0..80 {
            if f1 > f2 {
                x3 = x2;
                x2 = x1;
                f2 = f1;
                x1 = x3 - inv_phi * (x3 - x0);
                f1 = f(x1);
            } else {
                x0 = x1;
                x1 = x2;
                f1 = f2;
                x2 = x0 + inv_phi * (x3 - x0);
                f2 = f(x2);
            }
        }
        for (om, g) in [(x1, f1), (x2, f2)] {
            if g > best {
                best = g;
                best_omega = om;
            }
        }
    }
    (best, best_omega)
}

/// `E · sup_ω ‖W(jωI − A_c)⁻¹ B‖²` for a single attack channel and no
/// monitors. A lower bound on the true gain: the grid can undershoot a peak.
pub fn unmonitored_gain_oracle(
    spec: &NetworkSpec,
    attack: &AttackSet,
    energy: f64,
    grid: &FrequencyGrid,
) -> Result<f64, OracleError> {
    if attack.len() != 1 {
        return Err(OracleError::MultiChannel(attack.len()));
    }
    if spec.slowest_rate() <= 0.0 {
        return Err(OracleError::NotHurwitz);
    }
    let b = spec.attack_input_matrix(attack).column(0).into_owned();
    if b.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let (peak, _) = peak_gain_sq(spec.closed_loop(), &b, spec.perf_weight(), grid);
    Ok(energy * peak)
}

/// Memoized, batch-parallel `Q(M, A)` evaluation for one plant and energy.
///
/// Results depend only on `(M, A)`, so the order in which workers finish
/// never changes what callers see.
pub struct DisruptionTable<'a> {
    spec: &'a NetworkSpec,
    energy: f64,
    settings: SolverSettings,
    pool: Option<rayon::ThreadPool>,
    cache: Mutex<HashMap<(MonitorSet, AttackSet), Arc<DisruptionCertificate>>>,
}

impl<'a> DisruptionTable<'a> {
    pub fn new(spec: &'a NetworkSpec, energy: f64, settings: SolverSettings) -> Self {
        DisruptionTable {
            spec,
            energy,
            settings,
            pool: None,
            cache: Mutex::new(HashMap::new()),
        }
    }

    /// Runs batches on a dedicated pool of `workers` threads (0 = rayon's
    /// global pool).
    pub fn with_workers(mut self, workers: usize) -> Self {
        self.pool = if workers == 0 {
            None
        } else {
            rayon::ThreadPoolBuilder::new().num_threads(workers).build().ok()
        };
        self
    }

    pub fn spec(&self) -> &'a NetworkSpec {
        self.spec
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn settings(&self) -> &SolverSettings {
        &self.settings
    }

    /// Number of distinct pairs solved so far.
    pub fn solved(&self) -> usize {
        self.cache.lock().unwrap().len()
    }

    pub fn certificate(
        &self,
        monitors: &MonitorSet,
        attack: &AttackSet,
    ) -> Result<Arc<DisruptionCertificate>, DisruptionError> {
        let pair = [(monitors.clone(), attack.clone())];
        Ok(self.evaluate(&pair)?.remove(0))
    }

    pub fn value(&self, monitors: &MonitorSet, attack: &AttackSet) -> Result<f64, DisruptionError> {
        Ok(self.certificate(monitors, attack)?.value)
    }

    /// Certificates for every pair, in input order. Missing pairs are solved
    /// in parallel; the first failure in input order is reported.
    pub fn evaluate(
        &self,
        pairs: &[(MonitorSet, AttackSet)],
    ) -> Result<Vec<Arc<DisruptionCertificate>>, DisruptionError> {
        let missing: Vec<&(MonitorSet, AttackSet)> = {
            let cache = self.cache.lock().unwrap();
            let mut seen = std::collections::HashSet::new();
            pairs
                .iter()
                .filter(|p| !cache.contains_key(*p) && seen.insert((*p).clone()))
                .collect()
        };
        if !missing.is_empty() {
            let solve = |p: &&(MonitorSet, AttackSet)| {
                worst_case_disruption(self.spec, &p.0, &p.1, self.energy, &self.settings)
            };
            let results: Vec<Result<DisruptionCertificate, DisruptionError>> = match &self.pool {
                Some(pool) => pool.install(|| missing.par_iter().map(solve).collect()),
                None => missing.par_iter().map(solve).collect(),
            };
            let mut cache = self.cache.lock().unwrap();
            let mut first_err = None;
            for (p, r) in missing.iter().zip(results) {
                match r {
                    Ok(c) => {
                        cache.insert((*p).clone(), Arc::new(c));
                    }
                    Err(e) => {
                        first_err.get_or_insert(e);
                    }
                }
            }
            if let Some(e) = first_err {
                return Err(e);
            }
        }
        let cache = self.cache.lock().unwrap();
        Ok(pairs.iter().map(|p| Arc::clone(&cache[p])).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::verify_solution;
    use crate::network::{build_network, random_network, GainRanges, RawNetwork};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn chain2(thresholds: [f64; 2]) -> NetworkSpec {
        build_network(&RawNetwork {
            nodes: 2,
            interconnection: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            control_gains: vec![1.0, 1.0],
            perf_weight: None,
            alarm_thresholds: thresholds.to_vec(),
            sensor_costs: None,
            local_dynamics: None,
        })
        .unwrap()
    }

    fn set(n: usize, nodes: &[usize]) -> AttackSet {
        AttackSet::from_one_based(nodes, n, nodes.len()).unwrap()
    }

    fn mon(n: usize, nodes: &[usize]) -> MonitorSet {
        MonitorSet::from_one_based(nodes, n, n).unwrap()
    }

    #[test]
    fn program_dimensions() {
        let spec = chain2([1.0, 1.0]);
        let p = assemble_disruption_lmi(&spec, &MonitorSet::empty(), &set(2, &[2]), 1.0, 1e-9).unwrap();
        assert_eq!(p.psi.len(), 1);
        assert_eq!(p.storage.len(), 3);
        assert!(p.gamma.is_empty());
        assert_eq!(p.program.num_variables(), 4);
        assert_eq!(p.program.lmi_blocks().len(), 1);
        assert_eq!(p.program.lmi_blocks()[0].dim(), 3);

        let q = assemble_disruption_lmi(&spec, &mon(2, &[1]), &set(2, &[2]), 1.0, 1e-9).unwrap();
        assert_eq!(q.gamma.len(), 1);
        let gamma_term = &q.program.lmi_blocks()[0]
            .terms
            .iter()
            .find(|(v, _)| *v == q.gamma[0].1)
            .unwrap()
            .1;
        let mut expected = DMatrix::zeros(3, 3);
        expected[(0, 0)] = -1.0;
        assert_eq!(gamma_term, &expected);
    }

    #[test]
    fn chain_closed_form() {
        // -A_c⁻¹ e_1 = [2/3, 1/3], so Q = 4/9 + 1/9.
        let spec = chain2([1.0, 1.0]);
        let cert = worst_case_disruption(
            &spec,
            &MonitorSet::empty(),
            &set(2, &[2]),
            1.0,
            &SolverSettings::default(),
        )
        .unwrap();
        assert_relative_eq!(cert.value, 5.0 / 9.0, max_relative = 1e-6);
        assert!(cert.lmi_residual < 1e-7);
        assert_eq!(cert.gamma, DVector::zeros(2));
        assert_relative_eq!(cert.value, cert.dual_objective(&spec, 1.0), max_relative = 1e-12);
    }

    #[test]
    fn slack_monitor_does_not_change_value() {
        let spec = chain2([10.0, 1.0]);
        let cert = worst_case_disruption(&spec, &mon(2, &[1]), &set(2, &[2]), 1.0, &SolverSettings::default()).unwrap();
        assert_relative_eq!(cert.value, 5.0 / 9.0, max_relative = 1e-4);
        assert_eq!(cert.gamma[1], 0.0);
    }

    #[test]
    fn tight_monitor_reduces_value() {
        let spec = chain2([0.01, 0.01]);
        let free = worst_case_disruption(
            &spec,
            &MonitorSet::empty(),
            &set(2, &[2]),
            1.0,
            &SolverSettings::default(),
        )
        .unwrap();
        let watched =
            worst_case_disruption(&spec, &mon(2, &[1]), &set(2, &[2]), 1.0, &SolverSettings::default()).unwrap();
        assert!(watched.value < 0.5 * free.value, "{} vs {}", watched.value, free.value);
        assert!(watched.gamma[0] > 0.0);
    }

    #[test]
    fn zero_weight_gives_zero_disruption() {
        let spec = chain2([1.0, 1.0]).with_perf_weight(DMatrix::zeros(2, 2)).unwrap();
        let cert = worst_case_disruption(&spec, &mon(2, &[1]), &set(2, &[2]), 1.0, &SolverSettings::default()).unwrap();
        assert!(cert.value.abs() < 1e-6, "{}", cert.value);
    }

    #[test]
    fn vanishing_energy_vanishing_disruption() {
        let spec = chain2([1.0, 1.0]);
        for e in [1e-2, 1e-4, 1e-6] {
            let v = worst_case_disruption(
                &spec,
                &MonitorSet::empty(),
                &set(2, &[2]),
                e,
                &SolverSettings::default(),
            )
            .unwrap()
            .value;
            assert!(v <= e, "E = {e}: Q = {v}");
        }
    }

    #[test]
    fn nonpositive_energy_rejected() {
        let spec = chain2([1.0, 1.0]);
        assert!(worst_case_disruption(
            &spec,
            &MonitorSet::empty(),
            &set(2, &[2]),
            0.0,
            &SolverSettings::default()
        )
        .is_err());
    }

    #[test]
    fn certificate_passes_independent_verification() {
        let spec = random_network(3, 4, 0.6, &GainRanges::default()).unwrap();
        let m = mon(4, &[1, 3]);
        let a = set(4, &[2, 4]);
        let cert = worst_case_disruption(&spec, &m, &a, 2.0, &SolverSettings::default()).unwrap();
        let program = assemble_disruption_lmi(&spec, &m, &a, 2.0, 1e-9).unwrap();
        let values = program.values_for(&cert);
        let report = verify_solution(&program.program, &values, 1e-6);
        assert!(report.is_clean(), "{report:?}");
        assert_relative_eq!(program.program.objective_at(&values), cert.value, max_relative = 1e-9);
    }

    #[test]
    fn oracle_chain() {
        let spec = chain2([1.0, 1.0]);
        let grid = FrequencyGrid::for_network(&spec);
        let q = unmonitored_gain_oracle(&spec, &set(2, &[2]), 3.0, &grid).unwrap();
        assert_relative_eq!(q, 3.0 * 5.0 / 9.0, max_relative = 1e-12);
    }

    #[test]
    fn oracle_isolated_node_is_zero() {
        let spec = build_network(&RawNetwork {
            nodes: 1,
            interconnection: vec![vec![0.0]],
            control_gains: vec![1.0],
            perf_weight: Some(vec![vec![2.0]]),
            alarm_thresholds: vec![1.0],
            sensor_costs: None,
            local_dynamics: None,
        })
        .unwrap();
        let grid = FrequencyGrid::for_network(&spec);
        assert_eq!(unmonitored_gain_oracle(&spec, &set(1, &[1]), 1.0, &grid).unwrap(), 0.0);
        assert!(unmonitored_gain_oracle(&chain2([1.0; 2]), &set(2, &[1, 2]), 1.0, &grid).is_err());
    }

    #[test]
    fn oracle_diagonal_plant() {
        // A = -I, b = e_1, W = 2I: peak 4 at ω = 0.
        let a = -DMatrix::<f64>::identity(3, 3);
        let b = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let w = DMatrix::identity(3, 3) * 2.0;
        let (g, om) = peak_gain_sq(&a, &b, &w, &FrequencyGrid::log_spaced(1e-3, 1e3, 400));
        assert_relative_eq!(g, 4.0, max_relative = 1e-12);
        assert_eq!(om, 0.0);
    }

    #[test]
    fn oracle_finds_resonant_peak() {
        // Lightly damped pair: peak away from ω = 0.
        let a = DMatrix::from_row_slice(2, 2, &[-0.05, 1.0, -1.0, -0.05]);
        let b = DVector::from_vec(vec![0.0, 1.0]);
        let w = DMatrix::identity(2, 2);
        let coarse = FrequencyGrid::log_spaced(1e-2, 1e2, 400);
        let (g, om) = peak_gain_sq(&a, &b, &w, &coarse);
        let (g_raw, _) = peak_gain_sq(&a, &b, &w, &coarse.clone().without_refinement());
        assert!(g >= g_raw);
        assert!((om - 1.0).abs() < 0.01, "{om}");
        // Brute-force dense scan near the resonance.
        let dense = (0..200_001)
            .map(|i| 0.9 + 0.2 * i as f64 / 200_000.0)
            .map(|o| transfer_gain_sq(&a, &b, &w, o))
            .fold(0.0, f64::max);
        assert_relative_eq!(g, dense, max_relative = 1e-6);
    }

    #[test]
    fn table_memoizes() {
        let spec = chain2([1.0, 1.0]);
        let table = DisruptionTable::new(&spec, 1.0, SolverSettings::default()).with_workers(2);
        let pairs = vec![
            (MonitorSet::empty(), set(2, &[1])),
            (MonitorSet::empty(), set(2, &[2])),
            (MonitorSet::empty(), set(2, &[1])),
        ];
        let certs = table.evaluate(&pairs).unwrap();
        assert_eq!(table.solved(), 2);
        assert!(Arc::ptr_eq(&certs[0], &certs[2]));
        assert_relative_eq!(certs[0].value, certs[1].value, max_relative = 1e-6);
    }

    fn small_instance(seed: u64, n: usize) -> NetworkSpec {
        random_network(seed, n, 0.6, &GainRanges::default()).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn matches_frequency_oracle(seed in 0u64..10_000, n in 2usize..6, node in 0usize..5) {
            let spec = small_instance(seed, n);
            let a = AttackSet::new(&[node % n], n, 1).unwrap();
            let q = worst_case_disruption(&spec, &MonitorSet::empty(), &a, 1.5, &SolverSettings::default()).unwrap().value;
            let oracle = unmonitored_gain_oracle(&spec, &a, 1.5, &FrequencyGrid::for_network(&spec)).unwrap();
            prop_assert!((q - oracle).abs() <= 1e-3 * oracle.max(1e-12) + 1e-8, "Q = {}, oracle = {}", q, oracle);
        }

        #[test]
        fn monotone_in_energy_monitors_thresholds(seed in 0u64..10_000, n in 2usize..5) {
            let spec = small_instance(seed, n);
            let settings = SolverSettings::default();
            let a = AttackSet::new(&[0], n, 1).unwrap();
            let small = MonitorSet::new(&[n - 1], n, n).unwrap();
            let big = MonitorSet::new(&[0, n - 1], n, n).unwrap();
            let q = |s: &NetworkSpec, m: &MonitorSet, e: f64| worst_case_disruption(s, m, &a, e, &settings).unwrap().value;

            prop_assert!(q(&spec, &small, 1.0) <= q(&spec, &small, 2.0) + 1e-6);
            prop_assert!(q(&spec, &big, 1.0) <= q(&spec, &small, 1.0) + 1e-6);
            prop_assert!(q(&spec, &small, 1.0) <= q(&spec, &MonitorSet::empty(), 1.0) + 1e-6);
            let looser = spec.with_thresholds(spec.alarm_thresholds() * 3.0).unwrap();
            prop_assert!(q(&spec, &big, 1.0) <= q(&looser, &big, 1.0) + 1e-6);
        }

        #[test]
        fn certificates_are_consistent(seed in 0u64..10_000, n in 2usize..6) {
            let spec = small_instance(seed, n);
            let alpha = if n > 2 { 2 } else { 1 };
            let a = AttackSet::new(&(0..alpha).collect::<Vec<_>>(), n, alpha).unwrap();
            let m = MonitorSet::new(&[n - 1], n, n).unwrap();
            let cert = worst_case_disruption(&spec, &m, &a, 1.0, &SolverSettings::default()).unwrap();
            prop_assert!(cert.value >= -1e-9);
            prop_assert!(cert.lmi_residual <= 1e-6 * spec.perf_gram().amax().max(1.0));
            for i in 0..n {
                if !m.contains(i) {
                    prop_assert_eq!(cert.gamma[i], 0.0);
                }
            }
            let recomputed = cert.dual_objective(&spec, 1.0);
            prop_assert!((cert.value - recomputed).abs() <= 1e-8 * cert.value.abs().max(1e-12));
        }
    }
}
