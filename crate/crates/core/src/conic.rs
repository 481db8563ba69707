//! Linear-objective conic programs with LMI blocks.
//!
//! Programs are stated in the `F(x) = F₀ + Σ xᵢ Fᵢ ⪯ 0` orientation and
//! affine inequalities `Σ aᵢ xᵢ + c ≤ 0`. [`solve`] hands them to Clarabel
//! after flipping every block into its PSD-triangle cone; [`verify_solution`]
//! re-checks a point using only the program data and an eigenvalue routine.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConicError {
    #[error("LMI block {block}: {what} is {rows}x{cols}, expected {dim}x{dim}")]
    Dimension {
        block: usize,
        what: String,
        rows: usize,
        cols: usize,
        dim: usize,
    },
    #[error("LMI block {block}: {what} is not symmetric (max |M - Mᵀ| = {asymmetry:.3e})")]
    Asymmetric { block: usize, what: String, asymmetry: f64 },
    #[error("variable index {0} is not declared")]
    UnknownVariable(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Sign restriction on a scalar variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    Free,
    NonNegative,
    /// `x ≥ bound`; used for the strictly positive variables.
    AtLeast(f64),
}

impl Domain {
    fn lower_bound(self) -> Option<f64> {
        match self {
            Domain::Free => None,
            Domain::NonNegative => Some(0.0),
            Domain::AtLeast(b) => Some(b),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub domain: Domain,
}

/// `Σ coef·x + constant ≤ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl LinearConstraint {
    pub fn evaluate(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * values[v.0]).sum::<f64>() + self.constant
    }
}

/// `constant + Σ x·coefficient ⪯ 0`, all matrices symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiBlock {
    pub constant: DMatrix<f64>,
    pub terms: Vec<(VarId, DMatrix<f64>)>,
}

impl LmiBlock {
    pub fn dim(&self) -> usize {
        self.constant.nrows()
    }

    pub fn evaluate(&self, values: &[f64]) -> DMatrix<f64> {
        let mut m = self.constant.clone();
        for (v, f) in &self.terms {
            m += f * values[v.0];
        }
        m
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConicProgram {
    variables: Vec<Variable>,
    objective: Vec<f64>,
    linear: Vec<LinearConstraint>,
    lmis: Vec<LmiBlock>,
}

/// Relative tolerance for accepting a nearly symmetric block.
pub const SYMMETRY_TOL: f64 = 1e-10;

fn symmetrize(m: &DMatrix<f64>) -> Result<DMatrix<f64>, f64> {
    let scale = m.amax().max(1.0);
    let asymmetry = (m - m.transpose()).amax();
    if asymmetry > SYMMETRY_TOL * scale {
        return Err(asymmetry);
    }
    Ok((m + m.transpose()) * 0.5)
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_variable(&mut self, name: impl Into<String>, domain: Domain) -> VarId {
        self.variables.push(Variable {
            name: name.into(),
            domain,
        });
        self.objective.push(0.0);
        VarId(self.variables.len() - 1)
    }

    /// Adds `coef` to the objective coefficient of `var` (minimized).
    pub fn add_objective(&mut self, var: VarId, coef: f64) {
        self.objective[var.0] += coef;
    }

    pub fn add_linear_le(&mut self, terms: &[(VarId, f64)], constant: f64) -> Result<(), ConicError> {
        let mut merged: BTreeMap<VarId, f64> = BTreeMap::new();
        for &(v, c) in terms {
            self.check_var(v)?;
            *merged.entry(v).or_default() += c;
        }
        self.linear.push(LinearConstraint {
            terms: merged.into_iter().collect(),
            constant,
        });
        Ok(())
    }

    /// Appends `constant + Σ x·F ⪯ 0`. Inputs within [`SYMMETRY_TOL`] of
    /// symmetric are symmetrized; anything else is rejected.
    pub fn add_lmi_block(
        &mut self,
        constant: &DMatrix<f64>,
        terms: &[(VarId, DMatrix<f64>)],
    ) -> Result<usize, ConicError> {
        let block = self.lmis.len();
        let dim = constant.nrows();
        let check_dim = |what: String, m: &DMatrix<f64>| {
            if m.nrows() != dim || m.ncols() != dim {
                Err(ConicError::Dimension {
                    block,
                    what,
                    rows: m.nrows(),
                    cols: m.ncols(),
                    dim,
                })
            } else {
                Ok(())
            }
        };
        check_dim("constant".into(), constant)?;
        let constant = symmetrize(constant).map_err(|asymmetry| ConicError::Asymmetric {
            block,
            what: "constant".into(),
            asymmetry,
        })?;
        let mut sym_terms = Vec::with_capacity(terms.len());
        for (v, f) in terms {
            self.check_var(*v)?;
            let what = format!("coefficient of {}", self.variables[v.0].name);
            check_dim(what.clone(), f)?;
            let f = symmetrize(f).map_err(|asymmetry| ConicError::Asymmetric { block, what, asymmetry })?;
            sym_terms.push((*v, f));
        }
        self.lmis.push(LmiBlock {
            constant,
            terms: sym_terms,
        });
        Ok(block)
    }

    fn check_var(&self, v: VarId) -> Result<(), ConicError> {
        if v.0 < self.variables.len() {
            Ok(())
        } else {
            Err(ConicError::UnknownVariable(v.0))
        }
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn linear_constraints(&self) -> &[LinearConstraint] {
        &self.linear
    }

    pub fn lmi_blocks(&self) -> &[LmiBlock] {
        &self.lmis
    }

    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn objective_at(&self, values: &[f64]) -> f64 {
        self.objective.iter().zip(values).map(|(c, x)| c * x).sum()
    }

    /// Multiplies every objective coefficient by `factor`.
    pub fn scale_objective(&mut self, factor: f64) {
        for c in &mut self.objective {
            *c *= factor;
        }
    }

    /// Plain-text dump: variables, objective, linear rows, and each LMI
    /// block as upper-triangle sparse triplets `(row col value)`, 0-based.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "conic-program v1");
        let _ = writeln!(out, "variables {}", self.variables.len());
        for (i, v) in self.variables.iter().enumerate() {
            let dom = match v.domain {
                Domain::Free => "free".to_string(),
                Domain::NonNegative => "nonneg".to_string(),
                Domain::AtLeast(b) => format!("ge {b:e}"),
            };
            let _ = writeln!(out, "var {i} {} {dom} obj {:e}", v.name, self.objective[i]);
        }
        let _ = writeln!(out, "linear {}", self.linear.len());
        for (k, c) in self.linear.iter().enumerate() {
            let _ = write!(out, "row {k} const {:e}", c.constant);
            for (v, a) in &c.terms {
                let _ = write!(out, " {}:{a:e}", v.0);
            }
            let _ = writeln!(out);
        }
        let _ = writeln!(out, "lmi {}", self.lmis.len());
        for (b, block) in self.lmis.iter().enumerate() {
            let _ = writeln!(out, "block {b} dim {}", block.dim());
            let mut emit = |tag: &str, m: &DMatrix<f64>| {
                for j in 0..m.ncols() {
                    for i in 0..=j {
                        if m[(i, j)] != 0.0 {
                            let _ = writeln!(out, "{tag} {i} {j} {:e}", m[(i, j)]);
                        }
                    }
                }
            };
            emit("const", &block.constant);
            for (v, f) in &block.terms {
                emit(&format!("var{}", v.0), f);
            }
        }
        out
    }
}

/// Solver tolerances and limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub feasibility_tol: f64,
    pub gap_tol: f64,
    pub max_iter: u32,
    /// Lower bound standing in for strict positivity.
    pub eps_pos: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            feasibility_tol: 1e-8,
            gap_tol: 1e-8,
            max_iter: 200,
            eps_pos: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub values: Vec<f64>,
    pub objective_value: f64,
    /// Largest eigenvalue over all LMI blocks at `values` (≤ 0 means
    /// feasible).
    pub max_lmi_residual: f64,
    pub iterations: u32,
}

impl ConicSolution {
    pub fn value(&self, v: VarId) -> f64 {
        self.values[v.0]
    }
}

fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(f64::NEG_INFINITY, |a, &b| a.max(b))
}

/// Residuals of a candidate point, recomputed from program data alone.
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    /// Largest eigenvalue of each LMI block (feasible iff ≤ 0).
    pub lmi_max_eigenvalues: Vec<f64>,
    /// `Σ a x + c` per linear row (feasible iff ≤ 0).
    pub linear_residuals: Vec<f64>,
    /// Shortfall below each variable's lower bound (feasible iff ≤ 0).
    pub domain_shortfalls: Vec<f64>,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Lmi { block: usize, max_eigenvalue: f64 },
    Linear { row: usize, residual: f64 },
    Domain { variable: usize, shortfall: f64 },
}

impl VerificationReport {
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (block, &e) in self.lmi_max_eigenvalues.iter().enumerate() {
            if e > self.tol {
                out.push(Violation::Lmi {
                    block,
                    max_eigenvalue: e,
                });
            }
        }
        for (row, &r) in self.linear_residuals.iter().enumerate() {
            if r > self.tol {
                out.push(Violation::Linear { row, residual: r });
            }
        }
        for (variable, &s) in self.domain_shortfalls.iter().enumerate() {
            if s > self.tol {
                out.push(Violation::Domain { variable, shortfall: s });
            }
        }
        out
    }

    pub fn is_clean(&self) -> bool {
        self.violations().is_empty()
    }

    pub fn max_residual(&self) -> f64 {
        self.lmi_max_eigenvalues
            .iter()
            .chain(&self.linear_residuals)
            .chain(&self.domain_shortfalls)
            .fold(f64::NEG_INFINITY, |a, &b| a.max(b))
    }
}

pub fn verify_solution(program: &ConicProgram, values: &[f64], tol: f64) -> VerificationReport {
    assert_eq!(values.len(), program.num_variables(), "one value per variable");
    VerificationReport {
        lmi_max_eigenvalues: program
            .lmis
            .iter()
            .map(|b| max_eigenvalue(&b.evaluate(values)))
            .collect(),
        linear_residuals: program.linear.iter().map(|c| c.evaluate(values)).collect(),
        domain_shortfalls: program
            .variables
            .iter()
            .zip(values)
            .filter_map(|(v, &x)| v.domain.lower_bound().map(|lb| lb - x))
            .collect(),
        tol,
    }
}

fn max_lmi_residual(program: &ConicProgram, values: &[f64]) -> f64 {
    program
        .lmis
        .iter()
        .map(|b| max_eigenvalue(&b.evaluate(values)))
        .fold(f64::NEG_INFINITY, f64::max)
}

struct Triplets {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    b: Vec<f64>,
}

impl Triplets {
    fn push(&mut self, row: usize, col: usize, val: f64) {
        if val != 0.0 {
            self.rows.push(row);
            self.cols.push(col);
            self.vals.push(val);
        }
    }
}

/// Solves with Clarabel. Statuses other than `Optimal` are reported, never
/// turned into a wrong answer.
pub fn solve(program: &ConicProgram, settings: &SolverSettings) -> ConicSolution {
    let n = program.num_variables();
    if n == 0 {
        let feasible = verify_solution(program, &[], settings.feasibility_tol).is_clean();
        return ConicSolution {
            status: if feasible {
                SolveStatus::Optimal
            } else {
                SolveStatus::Infeasible
            },
            values: Vec::new(),
            objective_value: 0.0,
            max_lmi_residual: max_lmi_residual(program, &[]),
            iterations: 0,
        };
    }

    let mut t = Triplets {
        rows: Vec::new(),
        cols: Vec::new(),
        vals: Vec::new(),
        b: Vec::new(),
    };
    // s = b - A x ≥ 0 rows first: lower bounds, then linear inequalities.
    for (j, v) in program.variables.iter().enumerate() {
        if let Some(lb) = v.domain.lower_bound() {
            let r = t.b.len();
            t.push(r, j, -1.0);
            t.b.push(-lb);
        }
    }
    for c in &program.linear {
        let r = t.b.len();
        for &(v, a) in &c.terms {
            t.push(r, v.0, a);
        }
        t.b.push(-c.constant);
    }
    let n_nonneg = t.b.len();
    let mut cones = Vec::new();
    if n_nonneg > 0 {
        cones.push(SupportedConeT::NonnegativeConeT(n_nonneg));
    }
    // -F(x) ⪰ 0 in Clarabel's scaled upper-triangle column-major svec.
    let sqrt2 = std::f64::consts::SQRT_2;
    for block in &program.lmis {
        let d = block.dim();
        let r0 = t.b.len();
        let mut idx = 0;
        for j in 0..d {
            for i in 0..=j {
                let s = if i == j { 1.0 } else { sqrt2 };
                t.b.push(-block.constant[(i, j)] * s);
                for (v, f) in &block.terms {
                    t.push(r0 + idx, v.0, f[(i, j)] * s);
                }
                idx += 1;
            }
        }
        cones.push(SupportedConeT::PSDTriangleConeT(d));
    }
    let m = t.b.len();
    let a = CscMatrix::new_from_triplets(m, n, t.rows, t.cols, t.vals);
    let p = CscMatrix::<f64>::zeros((n, n));

    let failure = |iterations| ConicSolution {
        status: SolveStatus::NumericFailure,
        values: vec![f64::NAN; n],
        objective_value: f64::NAN,
        max_lmi_residual: f64::NAN,
        iterations,
    };
    let Ok(clarabel_settings) = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(settings.max_iter)
        .tol_feas(settings.feasibility_tol)
        .tol_gap_abs(settings.gap_tol)
        .tol_gap_rel(settings.gap_tol)
        .build()
    else {
        return failure(0);
    };
    let Ok(mut solver) = DefaultSolver::new(&p, &program.objective, &a, &t.b, &cones, clarabel_settings) else {
        return failure(0);
    };
    solver.solve();
    let sol = &solver.solution;
    let iterations = sol.iterations;
    let status = match sol.status {
        SolverStatus::Solved => SolveStatus::Optimal,
        SolverStatus::AlmostSolved => {
            // Accept a reduced-accuracy point only if it checks out.
            let report = verify_solution(program, &sol.x, settings.feasibility_tol.sqrt());
            if report.is_clean() {
                SolveStatus::Optimal
            } else {
                SolveStatus::NumericFailure
            }
        }
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
        _ => SolveStatus::NumericFailure,
    };
    if status != SolveStatus::Optimal {
        let mut out = failure(iterations);
        out.status = status;
        return out;
    }
    let values = sol.x.clone();
    ConicSolution {
        status,
        objective_value: program.objective_at(&values),
        max_lmi_residual: max_lmi_residual(program, &values),
        values,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn scalar_lmi_lower_bound() {
        // 3 - x ⪯ 0
        let mut p = ConicProgram::new();
        let x = p.add_variable("x", Domain::Free);
        p.add_objective(x, 1.0);
        p.add_lmi_block(&scalar(3.0), &[(x, scalar(-1.0))]).unwrap();
        let sol = solve(&p, &SolverSettings::default());
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_relative_eq!(sol.value(x), 3.0, max_relative = 1e-7);
        assert_eq!(sol.objective_value, p.objective_at(&sol.values));
    }

    #[test]
    fn scalar_bounded_real_lemma() {
        // ẋ = -x + u, y = x: [[-2p + 1, p], [p, -ψ]] ⪯ 0, min ψ = ‖1/(s+1)‖²∞ = 1.
        let mut p = ConicProgram::new();
        let pv = p.add_variable("p", Domain::Free);
        let psi = p.add_variable("psi", Domain::AtLeast(1e-9));
        p.add_objective(psi, 1.0);
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let fp = DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, 1.0, 0.0]);
        let fpsi = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, -1.0]);
        p.add_lmi_block(&c, &[(pv, fp), (psi, fpsi)]).unwrap();
        let sol = solve(&p, &SolverSettings::default());
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_relative_eq!(sol.value(psi), 1.0, max_relative = 1e-6);
        assert!(sol.max_lmi_residual < 1e-7);
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        let mut p = ConicProgram::new();
        let x = p.add_variable("x", Domain::Free);
        p.add_objective(x, 1.0);
        p.add_linear_le(&[(x, -1.0)], 1.0).unwrap(); // x ≥ 1
        p.add_linear_le(&[(x, 1.0)], 0.0).unwrap(); // x ≤ 0
        assert_eq!(solve(&p, &SolverSettings::default()).status, SolveStatus::Infeasible);
    }

    #[test]
    fn unbounded_is_reported() {
        let mut p = ConicProgram::new();
        let x = p.add_variable("x", Domain::Free);
        p.add_objective(x, 1.0);
        p.add_linear_le(&[(x, 1.0)], 0.0).unwrap();
        assert_eq!(solve(&p, &SolverSettings::default()).status, SolveStatus::Unbounded);
    }

    #[test]
    fn svec_ordering_matches_off_diagonal_placement() {
        // [[x, 1, 0], [1, 4, 2], [0, 2, y]] ⪰ 0, min x + y.
        // Schur complement: 1/x + 4/y ≤ 4, so the optimum is x = 3/4, y = 3/2.
        let mut p = ConicProgram::new();
        let x = p.add_variable("x", Domain::Free);
        let y = p.add_variable("y", Domain::Free);
        p.add_objective(x, 1.0);
        p.add_objective(y, 1.0);
        let c = -DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 4.0, 2.0, 0.0, 2.0, 0.0]);
        let mut ex = DMatrix::zeros(3, 3);
        ex[(0, 0)] = -1.0;
        let mut ey = DMatrix::zeros(3, 3);
        ey[(2, 2)] = -1.0;
        p.add_lmi_block(&c, &[(x, ex), (y, ey)]).unwrap();
        let sol = solve(&p, &SolverSettings::default());
        assert_eq!(sol.status, SolveStatus::Optimal);
        // The objective is tight to the gap tolerance; the argmin only to
        // roughly its square root.
        assert_relative_eq!(sol.objective_value, 2.25, max_relative = 1e-7);
        assert_relative_eq!(sol.value(x), 0.75, max_relative = 1e-3);
        assert_relative_eq!(sol.value(y), 1.5, max_relative = 1e-3);
    }

    #[test]
    fn asymmetric_block_rejected() {
        let mut p = ConicProgram::new();
        let x = p.add_variable("x", Domain::Free);
        let f = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.1, 1.0]);
        let err = p.add_lmi_block(&DMatrix::zeros(2, 2), &[(x, f)]).unwrap_err();
        assert!(matches!(err, ConicError::Asymmetric { .. }));
        let err = p
            .add_lmi_block(&DMatrix::zeros(2, 2), &[(x, DMatrix::zeros(3, 3))])
            .unwrap_err();
        assert!(matches!(err, ConicError::Dimension { .. }));
    }

    #[test]
    fn tiny_asymmetry_is_symmetrized() {
        let mut p = ConicProgram::new();
        let x = p.add_variable("x", Domain::Free);
        let f = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0 + 1e-13, 1.0]);
        p.add_lmi_block(&DMatrix::zeros(2, 2), &[(x, f)]).unwrap();
        let stored = &p.lmi_blocks()[0].terms[0].1;
        assert_eq!(stored[(0, 1)], stored[(1, 0)]);
    }

    #[test]
    fn constant_only_block() {
        let mut p = ConicProgram::new();
        p.add_lmi_block(&scalar(-1.0), &[]).unwrap();
        assert_eq!(solve(&p, &SolverSettings::default()).status, SolveStatus::Optimal);
        let mut q = ConicProgram::new();
        q.add_lmi_block(&scalar(1.0), &[]).unwrap();
        assert_eq!(solve(&q, &SolverSettings::default()).status, SolveStatus::Infeasible);
        assert!(verify_solution(&ConicProgram::new(), &[], 1e-9).violations().is_empty());
    }

    #[test]
    fn verification_flags_perturbed_point() {
        let mut p = ConicProgram::new();
        let x = p.add_variable("x", Domain::NonNegative);
        p.add_objective(x, -1.0);
        p.add_linear_le(&[(x, 1.0)], -2.0).unwrap(); // x ≤ 2
        p.add_lmi_block(&scalar(-5.0), &[(x, scalar(1.0))]).unwrap(); // x ≤ 5
        let sol = solve(&p, &SolverSettings::default());
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!(verify_solution(&p, &sol.values, 1e-7).is_clean());
        let mut bumped = sol.values.clone();
        bumped[0] += 1.0;
        let v = verify_solution(&p, &bumped, 1e-7).violations();
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], Violation::Linear { row: 0, .. }));
    }

    #[test]
    fn dump_lists_blocks() {
        let mut p = ConicProgram::new();
        let x = p.add_variable("x", Domain::AtLeast(1e-9));
        p.add_lmi_block(&scalar(3.0), &[(x, scalar(-1.0))]).unwrap();
        let text = p.dump();
        assert!(text.contains("block 0 dim 1"));
        assert!(text.contains("var0 0 0 -1e0"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn objective_scaling_scales_value(b in 0.1f64..10.0, c in 0.1f64..100.0) {
            let mut p = ConicProgram::new();
            let x = p.add_variable("x", Domain::Free);
            let y = p.add_variable("y", Domain::Free);
            p.add_objective(x, 1.0);
            p.add_objective(y, 2.0);
            // [[x, b], [b, y]] ⪰ 0
            let cst = DMatrix::from_row_slice(2, 2, &[0.0, -b, -b, 0.0]);
            let ex = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 0.0]);
            let ey = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, -1.0]);
            p.add_lmi_block(&cst, &[(x, ex), (y, ey)]).unwrap();
            let base = solve(&p, &SolverSettings::default());
            let mut scaled = p.clone();
            scaled.scale_objective(c);
            let s = solve(&scaled, &SolverSettings::default());
            prop_assert_eq!(base.status, SolveStatus::Optimal);
            prop_assert_eq!(s.status, SolveStatus::Optimal);
            // min x + 2y s.t. xy ≥ b²: 2√2·b
            prop_assert!((base.objective_value - 2.0 * 2f64.sqrt() * b).abs() < 1e-6 * b.max(1.0));
            prop_assert!((s.objective_value - c * base.objective_value).abs() < 1e-6 * c * base.objective_value);
            prop_assert!((s.values[0] - base.values[0]).abs() < 1e-3 * b.max(1.0));
            prop_assert_eq!(base.objective_value, p.objective_at(&base.values));
        }
    }
}
