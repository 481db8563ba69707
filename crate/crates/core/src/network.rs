//! Networked plant: interconnection gains, closed loop, attack inputs and
//! the admissible attack/monitor set families.
//!
//! Node indices are 0-based inside the crate. Anything user-facing
//! (`Display`, parsing, error messages) is 1-based.

use std::fmt;

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest admissible real part of a closed-loop eigenvalue.
pub const HURWITZ_MARGIN: f64 = -1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error("{field}: expected {expected} entries, found {found}")]
    DimensionMismatch {
        field: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("network must have at least one node")]
    Empty,
    #[error("{field}[{node}] = {value} must be strictly positive")]
    NonPositive {
        field: &'static str,
        node: usize,
        value: f64,
    },
    #[error("interconnection[{row}][{col}] = {value} must be nonnegative")]
    NegativeGain { row: usize, col: usize, value: f64 },
    #[error("interconnection[{node}][{node}] = {value}: diagonal must be zero")]
    NonzeroDiagonal { node: usize, value: f64 },
    #[error("{field} contains a non-finite value at node {node}")]
    NonFinite { field: &'static str, node: usize },
    #[error("closed-loop matrix is not Hurwitz: eigenvalue {re:+.6e}{im:+.6e}i")]
    NotHurwitz { re: f64, im: f64 },
    #[error("node {node} out of range 1..={n}")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("duplicate node {node} in set")]
    DuplicateNode { node: usize },
    #[error("attack set has {found} nodes, expected exactly {alpha}")]
    WrongAttackSize { found: usize, alpha: usize },
    #[error("monitor set has {found} nodes, budget allows at most {beta}")]
    MonitorBudgetExceeded { found: usize, beta: usize },
    #[error("alpha = {alpha} exceeds the number of nodes {n}")]
    AlphaTooLarge { alpha: usize, n: usize },
    #[error("invalid budget: {0}")]
    InvalidBudget(String),
    #[error("invalid generator parameter: {0}")]
    InvalidGenerator(String),
    #[error("no Hurwitz closed loop after {0} control-gain resamples")]
    RetriesExhausted(usize),
}

/// Network description as it appears in a scenario file. All matrices are
/// row-major nested lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawNetwork {
    pub nodes: usize,
    pub interconnection: Vec<Vec<f64>>,
    pub control_gains: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perf_weight: Option<Vec<Vec<f64>>>,
    pub alarm_thresholds: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensor_costs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local_dynamics: Option<Vec<f64>>,
}

/// A validated plant. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    interconnection: DMatrix<f64>,
    control_gains: DVector<f64>,
    perf_weight: DMatrix<f64>,
    alarm_thresholds: DVector<f64>,
    sensor_costs: DVector<f64>,
    local_dynamics: DVector<f64>,
    closed_loop: DMatrix<f64>,
    perf_gram: DMatrix<f64>,
    slowest_rate: f64,
    spectral_radius: f64,
}

fn check_vector(field: &'static str, values: &[f64], n: usize, positive: bool, errors: &mut Vec<NetworkError>) {
    if values.len() != n {
        errors.push(NetworkError::DimensionMismatch {
            field,
            expected: n,
            found: values.len(),
        });
        return;
    }
    for (i, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            errors.push(NetworkError::NonFinite { field, node: i + 1 });
        } else if positive && v <= 0.0 {
            errors.push(NetworkError::NonPositive {
                field,
                node: i + 1,
                value: v,
            });
        }
    }
}

fn check_square(field: &'static str, rows: &[Vec<f64>], n: usize, errors: &mut Vec<NetworkError>) -> bool {
    if rows.len() != n {
        errors.push(NetworkError::DimensionMismatch {
            field,
            expected: n,
            found: rows.len(),
        });
        return false;
    }
    let mut ok = true;
    for row in rows {
        if row.len() != n {
            errors.push(NetworkError::DimensionMismatch {
                field,
                expected: n,
                found: row.len(),
            });
            ok = false;
        }
    }
    for (i, row) in rows.iter().enumerate() {
        if row.iter().any(|v| !v.is_finite()) {
            errors.push(NetworkError::NonFinite { field, node: i + 1 });
            ok = false;
        }
    }
    ok
}

fn to_matrix(rows: &[Vec<f64>], n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| rows[i][j])
}

/// `A_c = -diag(theta) - diag(A 1) + A`.
pub fn closed_loop_matrix(interconnection: &DMatrix<f64>, control_gains: &DVector<f64>) -> DMatrix<f64> {
    let n = interconnection.nrows();
    let mut ac = interconnection.clone();
    for i in 0..n {
        let in_degree: f64 = interconnection.row(i).sum();
        ac[(i, i)] = -control_gains[i] - in_degree;
    }
    ac
}

/// Eigenvalue with the largest real part, as `(re, im)`.
pub fn rightmost_eigenvalue(m: &DMatrix<f64>) -> (f64, f64) {
    m.complex_eigenvalues()
        .iter()
        .map(|z| (z.re, z.im))
        .fold((f64::NEG_INFINITY, 0.0), |best, z| if z.0 > best.0 { z } else { best })
}

/// Every error in `raw`, not just the first. Empty means `build_network`
/// will succeed.
pub fn validate_raw(raw: &RawNetwork) -> Vec<NetworkError> {
    let n = raw.nodes;
    let mut errors = Vec::new();
    if n == 0 {
        errors.push(NetworkError::Empty);
        return errors;
    }
    if check_square("interconnection", &raw.interconnection, n, &mut errors) {
        for (i, row) in raw.interconnection.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if i == j && v != 0.0 {
                    errors.push(NetworkError::NonzeroDiagonal { node: i + 1, value: v });
                } else if v < 0.0 {
                    errors.push(NetworkError::NegativeGain {
                        row: i + 1,
                        col: j + 1,
                        value: v,
                    });
                }
            }
        }
    }
    check_vector("control_gains", &raw.control_gains, n, true, &mut errors);
    check_vector("alarm_thresholds", &raw.alarm_thresholds, n, true, &mut errors);
    if let Some(costs) = &raw.sensor_costs {
        check_vector("sensor_costs", costs, n, true, &mut errors);
    }
    if let Some(local) = &raw.local_dynamics {
        check_vector("local_dynamics", local, n, false, &mut errors);
    }
    if let Some(w) = &raw.perf_weight {
        check_square("perf_weight", w, n, &mut errors);
    }
    if errors.is_empty() {
        let a = to_matrix(&raw.interconnection, n);
        let theta = DVector::from_column_slice(&raw.control_gains);
        let (re, im) = rightmost_eigenvalue(&closed_loop_matrix(&a, &theta));
        if re >= HURWITZ_MARGIN {
            errors.push(NetworkError::NotHurwitz { re, im });
        }
    }
    errors
}

/// Validates a parsed network and computes the closed loop.
pub fn build_network(raw: &RawNetwork) -> Result<NetworkSpec, NetworkError> {
    if let Some(e) = validate_raw(raw).into_iter().next() {
        return Err(e);
    }
    let n = raw.nodes;
    let interconnection = to_matrix(&raw.interconnection, n);
    let control_gains = DVector::from_column_slice(&raw.control_gains);
    let perf_weight = raw
        .perf_weight
        .as_ref()
        .map(|w| to_matrix(w, n))
        .unwrap_or_else(|| DMatrix::identity(n, n));
    let sensor_costs = raw
        .sensor_costs
        .as_ref()
        .map(|c| DVector::from_column_slice(c))
        .unwrap_or_else(|| DVector::from_element(n, 1.0));
    let local_dynamics = raw
        .local_dynamics
        .as_ref()
        .map(|c| DVector::from_column_slice(c))
        .unwrap_or_else(|| DVector::zeros(n));
    let closed_loop = closed_loop_matrix(&interconnection, &control_gains);
    let eigs = closed_loop.complex_eigenvalues();
    let slowest_rate = eigs.iter().map(|z| -z.re).fold(f64::INFINITY, f64::min);
    let spectral_radius = eigs.iter().map(|z| z.norm()).fold(0.0, f64::max);
    for j in 0..n {
        if interconnection.column(j).iter().all(|&v| v == 0.0) {
            log::warn!("node {} has no neighbours; attacking it has no effect", j + 1);
        }
    }
    let perf_gram = perf_weight.transpose() * &perf_weight;
    Ok(NetworkSpec {
        interconnection,
        control_gains,
        perf_weight,
        alarm_thresholds: DVector::from_column_slice(&raw.alarm_thresholds),
        sensor_costs,
        local_dynamics,
        closed_loop,
        perf_gram,
        slowest_rate,
        spectral_radius,
    })
}

impl NetworkSpec {
    pub fn n_nodes(&self) -> usize {
        self.control_gains.len()
    }

    pub fn interconnection(&self) -> &DMatrix<f64> {
        &self.interconnection
    }

    pub fn control_gains(&self) -> &DVector<f64> {
        &self.control_gains
    }

    pub fn perf_weight(&self) -> &DMatrix<f64> {
        &self.perf_weight
    }

    /// `WᵀW`, the form that enters every dissipation inequality.
    pub fn perf_gram(&self) -> &DMatrix<f64> {
        &self.perf_gram
    }

    pub fn alarm_thresholds(&self) -> &DVector<f64> {
        &self.alarm_thresholds
    }

    pub fn sensor_costs(&self) -> &DVector<f64> {
        &self.sensor_costs
    }

    pub fn local_dynamics(&self) -> &DVector<f64> {
        &self.local_dynamics
    }

    pub fn closed_loop(&self) -> &DMatrix<f64> {
        &self.closed_loop
    }

    /// `|Re λ_max(A_c)|`: decay rate of the slowest closed-loop mode.
    pub fn slowest_rate(&self) -> f64 {
        self.slowest_rate
    }

    /// `max |λ(A_c)|`.
    pub fn spectral_radius(&self) -> f64 {
        self.spectral_radius
    }

    /// True when every node has the same sensor cost.
    pub fn uniform_costs(&self) -> bool {
        let first = self.sensor_costs[0];
        self.sensor_costs.iter().all(|&c| c == first)
    }

    /// Column `j` is `A e_{a_j}`: the attack on node `a_j` enters its
    /// neighbours' dynamics, never its own.
    pub fn attack_input_matrix(&self, attack: &AttackSet) -> DMatrix<f64> {
        let n = self.n_nodes();
        let mut b = DMatrix::zeros(n, attack.len());
        for (j, &a) in attack.nodes().iter().enumerate() {
            b.set_column(j, &self.interconnection.column(a));
        }
        b
    }

    pub fn to_raw(&self) -> RawNetwork {
        let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
        };
        RawNetwork {
            nodes: self.n_nodes(),
            interconnection: rows(&self.interconnection),
            control_gains: self.control_gains.iter().copied().collect(),
            perf_weight: Some(rows(&self.perf_weight)),
            alarm_thresholds: self.alarm_thresholds.iter().copied().collect(),
            sensor_costs: Some(self.sensor_costs.iter().copied().collect()),
            local_dynamics: Some(self.local_dynamics.iter().copied().collect()),
        }
    }

    /// Copy of the plant with different alarm thresholds.
    pub fn with_thresholds(&self, thresholds: DVector<f64>) -> Result<NetworkSpec, NetworkError> {
        let mut raw = self.to_raw();
        raw.alarm_thresholds = thresholds.iter().copied().collect();
        build_network(&raw)
    }

    /// Copy of the plant with a different performance weight.
    pub fn with_perf_weight(&self, w: DMatrix<f64>) -> Result<NetworkSpec, NetworkError> {
        let mut raw = self.to_raw();
        raw.perf_weight = Some((0..w.nrows()).map(|i| w.row(i).iter().copied().collect()).collect());
        build_network(&raw)
    }
}

fn check_nodes(nodes: &[usize], n: usize) -> Result<Vec<usize>, NetworkError> {
    let mut sorted = nodes.to_vec();
    sorted.sort_unstable();
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            return Err(NetworkError::DuplicateNode { node: w[0] + 1 });
        }
    }
    if let Some(&bad) = sorted.iter().find(|&&v| v >= n) {
        return Err(NetworkError::NodeOutOfRange { node: bad + 1, n });
    }
    Ok(sorted)
}

fn one_based_to_zero(nodes: &[usize], n: usize) -> Result<Vec<usize>, NetworkError> {
    nodes
        .iter()
        .map(|&v| {
            if v == 0 || v > n {
                Err(NetworkError::NodeOutOfRange { node: v, n })
            } else {
                Ok(v - 1)
            }
        })
        .collect()
}

fn fmt_nodes(nodes: &[usize], f: &mut fmt::Formatter<'_>) -> fmt::Result {
    write!(f, "{{")?;
    for (i, v) in nodes.iter().enumerate() {
        if i > 0 {
            write!(f, ",")?;
        }
        write!(f, "{}", v + 1)?;
    }
    write!(f, "}}")
}

/// Exactly `alpha` attack nodes, sorted, 0-based.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AttackSet(Vec<usize>);

impl AttackSet {
    pub fn new(nodes: &[usize], n: usize, alpha: usize) -> Result<Self, NetworkError> {
        let sorted = check_nodes(nodes, n)?;
        if sorted.len() != alpha {
            return Err(NetworkError::WrongAttackSize {
                found: sorted.len(),
                alpha,
            });
        }
        Ok(AttackSet(sorted))
    }

    pub fn from_one_based(nodes: &[usize], n: usize, alpha: usize) -> Result<Self, NetworkError> {
        Self::new(&one_based_to_zero(nodes, n)?, n, alpha)
    }

    pub fn nodes(&self) -> &[usize] {
        &self.0
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.0.iter().map(|v| v + 1).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for AttackSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_nodes(&self.0, f)
    }
}

/// At most `beta` monitored nodes, sorted, 0-based.
///
/// Ordered by size first, then lexicographically, which is also the order
/// `enumerate_monitor_sets` produces.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MonitorSet(Vec<usize>);

impl MonitorSet {
    pub fn empty() -> Self {
        MonitorSet(Vec::new())
    }

    pub fn new(nodes: &[usize], n: usize, beta: usize) -> Result<Self, NetworkError> {
        let sorted = check_nodes(nodes, n)?;
        if sorted.len() > beta {
            return Err(NetworkError::MonitorBudgetExceeded {
                found: sorted.len(),
                beta,
            });
        }
        Ok(MonitorSet(sorted))
    }

    pub fn from_one_based(nodes: &[usize], n: usize, beta: usize) -> Result<Self, NetworkError> {
        Self::new(&one_based_to_zero(nodes, n)?, n, beta)
    }

    /// Rounds a (near-)binary indicator vector.
    pub fn from_indicator(z: &[f64]) -> Self {
        MonitorSet(
            z.iter()
                .enumerate()
                .filter(|(_, &v)| v >= 0.5)
                .map(|(i, _)| i)
                .collect(),
        )
    }

    /// `z_m = 1` iff `m` is monitored.
    pub fn indicator(&self, n: usize) -> DVector<f64> {
        let mut z = DVector::zeros(n);
        for &m in &self.0 {
            z[m] = 1.0;
        }
        z
    }

    pub fn contains(&self, node: usize) -> bool {
        self.0.binary_search(&node).is_ok()
    }

    pub fn nodes(&self) -> &[usize] {
        &self.0
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.0.iter().map(|v| v + 1).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_subset_of(&self, other: &MonitorSet) -> bool {
        self.0.iter().all(|&m| other.contains(m))
    }
}

impl PartialOrd for MonitorSet {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for MonitorSet {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.len().cmp(&other.0.len()).then_with(|| self.0.cmp(&other.0))
    }
}

impl fmt::Display for MonitorSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_nodes(&self.0, f)
    }
}

/// Resources of the two players.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GameBudgets {
    /// Exact number of attack nodes.
    pub alpha: usize,
    /// Maximum number of monitored nodes.
    pub beta: usize,
    /// Per-channel attack energy bound.
    pub energy: f64,
    /// Big-M constant linking dual weights to monitor indicators.
    pub big_m: f64,
}

impl GameBudgets {
    /// `big_m = None` selects `1e6 · max(1, ‖WᵀW‖₂)`.
    pub fn new(
        spec: &NetworkSpec,
        alpha: usize,
        beta: usize,
        energy: f64,
        big_m: Option<f64>,
    ) -> Result<Self, NetworkError> {
        let n = spec.n_nodes();
        if alpha == 0 || alpha > n {
            return Err(NetworkError::AlphaTooLarge { alpha, n });
        }
        if beta > n {
            return Err(NetworkError::InvalidBudget(format!("beta = {beta} exceeds {n} nodes")));
        }
        if !(energy > 0.0 && energy.is_finite()) {
            return Err(NetworkError::InvalidBudget(format!(
                "energy = {energy} must be positive"
            )));
        }
        let big_m = big_m.unwrap_or_else(|| default_big_m(spec));
        if !(big_m > 0.0 && big_m.is_finite()) {
            return Err(NetworkError::InvalidBudget(format!("big_m = {big_m} must be positive")));
        }
        Ok(GameBudgets {
            alpha,
            beta,
            energy,
            big_m,
        })
    }
}

pub fn default_big_m(spec: &NetworkSpec) -> f64 {
    let gram_norm = spec
        .perf_gram()
        .clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    1e6 * gram_norm.max(1.0)
}

/// All `C(n, alpha)` attack sets in lexicographic order.
pub fn enumerate_attack_sets(n: usize, alpha: usize) -> Result<Vec<AttackSet>, NetworkError> {
    if alpha > n {
        return Err(NetworkError::AlphaTooLarge { alpha, n });
    }
    Ok((0..n).combinations(alpha).map(AttackSet).collect())
}

/// All subsets of size `0..=beta`, ordered by size then lexicographically.
/// `beta` is clamped to `n`.
pub fn enumerate_monitor_sets(n: usize, beta: usize) -> Vec<MonitorSet> {
    (0..=beta.min(n))
        .flat_map(|s| (0..n).combinations(s).map(MonitorSet))
        .collect()
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Parameter ranges for [`random_network`]. Each pair is a closed interval
/// sampled uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GainRanges {
    pub coupling: (f64, f64),
    pub control: (f64, f64),
    pub threshold: (f64, f64),
    pub cost: (f64, f64),
    /// Diagonal entries of `W`.
    pub perf_weight: (f64, f64),
}

impl Default for GainRanges {
    fn default() -> Self {
        GainRanges {
            coupling: (0.5, 2.0),
            control: (0.5, 1.5),
            threshold: (0.5, 2.0),
            cost: (1.0, 1.0),
            perf_weight: (1.0, 1.0),
        }
    }
}

const MAX_GAIN_RESAMPLES: usize = 20;

fn sample(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    if range.0 == range.1 {
        range.0
    } else {
        rng.gen_range(range.0..=range.1)
    }
}

/// Seeded random instance: undirected edge pattern with probability
/// `edge_density` per node pair, independent gains in each direction.
/// Uses ChaCha8 seeded by `seed`.
pub fn random_network(
    seed: u64,
    n: usize,
    edge_density: f64,
    ranges: &GainRanges,
) -> Result<NetworkSpec, NetworkError> {
    if n == 0 {
        return Err(NetworkError::Empty);
    }
    if !(edge_density > 0.0 && edge_density <= 1.0) {
        return Err(NetworkError::InvalidGenerator(format!(
            "edge_density = {edge_density} must lie in (0, 1]"
        )));
    }
    for (name, r, lower) in [
        ("coupling", ranges.coupling, 0.0),
        ("control", ranges.control, f64::MIN_POSITIVE),
        ("threshold", ranges.threshold, f64::MIN_POSITIVE),
        ("cost", ranges.cost, f64::MIN_POSITIVE),
        ("perf_weight", ranges.perf_weight, 0.0),
    ] {
        if !(r.0 >= lower && r.0 <= r.1 && r.1.is_finite()) {
            return Err(NetworkError::InvalidGenerator(format!(
                "{name} range [{}, {}] is invalid",
                r.0, r.1
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = vec![vec![0.0; n]; n];
    #[allow(clippy::needless_range_loop)] // touches a[i][j] and a[j][i]
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.gen_bool(edge_density) {
                a[i][j] = sample(&mut rng, ranges.coupling);
                a[j][i] = sample(&mut rng, ranges.coupling);
            }
        }
    }
    let mut theta: Vec<f64> = (0..n).map(|_| sample(&mut rng, ranges.control)).collect();
    let thresholds: Vec<f64> = (0..n).map(|_| sample(&mut rng, ranges.threshold)).collect();
    let costs: Vec<f64> = (0..n).map(|_| sample(&mut rng, ranges.cost)).collect();
    let w: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = vec![0.0; n];
            row[i] = sample(&mut rng, ranges.perf_weight);
            row
        })
        .collect();
    let mut raw = RawNetwork {
        nodes: n,
        interconnection: a,
        control_gains: theta.clone(),
        perf_weight: Some(w),
        alarm_thresholds: thresholds,
        sensor_costs: Some(costs),
        local_dynamics: None,
    };
    for _ in 0..MAX_GAIN_RESAMPLES {
        match build_network(&raw) {
            Ok(spec) => return Ok(spec),
            Err(NetworkError::NotHurwitz { .. }) => {
                for t in theta.iter_mut() {
                    *t *= 2.0;
                }
                raw.control_gains = theta.clone();
            }
            Err(e) => return Err(e),
        }
    }
    Err(NetworkError::RetriesExhausted(MAX_GAIN_RESAMPLES))
}
