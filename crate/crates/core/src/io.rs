//! Scenario files and CSV results.
//!
//! A scenario is one JSON object:
//!
//! ```json
//! {
//!   "network": { "generator": { "seed": 1, "nodes": 10, "edge_density": 0.3 } },
//!   "budgets": { "alpha": 3, "beta": 3, "energy": 1.0 },
//!   "run": { "game": { "q": 20, "seed": 7 } },
//!   "settings": { "gap_tol": 1e-8 },
//!   "workers": 4
//! }
//! ```
//!
//! `network` holds exactly one of `inline` (a [`RawNetwork`]) or
//! `generator`; `run` holds exactly one directive. Node indices are 1-based.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::adversary::ResponseMethod;
use crate::conic::SolverSettings;
use crate::defender::DefenderMethod;
use crate::game::{detect_convergence, OutcomeGrid, PolicyTrace, TraceRow};
use crate::network::{
    build_network, random_network, validate_raw, AttackSet, GainRanges, GameBudgets, MonitorSet, NetworkError,
    NetworkSpec, RawNetwork,
};
use crate::simulation::AttackSignal;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub seed: u64,
    pub nodes: usize,
    pub edge_density: f64,
    #[serde(default)]
    pub gains: GainRanges,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkSource {
    Inline(RawNetwork),
    Generator(GeneratorSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetsFile {
    pub alpha: usize,
    pub beta: usize,
    pub energy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub big_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchDirective {
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum RunDirective {
    Disruption {
        monitors: Vec<usize>,
        attack: Vec<usize>,
    },
    Adversary {
        monitors: Vec<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        method: Option<ResponseMethod>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weight_r: Option<f64>,
    },
    Defender {
        policies: Vec<Vec<usize>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        method: Option<DefenderMethod>,
    },
    Baseline {},
    Game {
        q: usize,
        seed: u64,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        force_full: bool,
    },
    Grid {
        q: usize,
        seed: u64,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        force_full: bool,
    },
    Simulate {
        monitors: Vec<usize>,
        attack: Vec<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        signal: Option<AttackSignal>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dt: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        horizon: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        search: Option<SearchDirective>,
    },
}

impl RunDirective {
    pub fn name(&self) -> &'static str {
        match self {
            RunDirective::Disruption { .. } => "disruption",
            RunDirective::Adversary { .. } => "adversary",
            RunDirective::Defender { .. } => "defender",
            RunDirective::Baseline {} => "baseline",
            RunDirective::Game { .. } => "game",
            RunDirective::Grid { .. } => "grid",
            RunDirective::Simulate { .. } => "simulate",
        }
    }
}

/// The file as written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub network: NetworkSource,
    pub budgets: BudgetsFile,
    pub run: RunDirective,
    #[serde(default)]
    pub settings: SolverSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub spec: NetworkSpec,
    pub budgets: GameBudgets,
}

impl Scenario {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.file).expect("scenario serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IssueKind {
    Syntax,
    Schema,
    Semantic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioIssue {
    pub kind: IssueKind,
    pub field: String,
    pub message: String,
}

impl fmt::Display for ScenarioIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            IssueKind::Syntax => "syntax",
            IssueKind::Schema => "schema",
            IssueKind::Semantic => "semantic",
        };
        write!(f, "{kind} error at {}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("{}", .0.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<ScenarioIssue>),
}

struct Issues(Vec<ScenarioIssue>);

impl Issues {
    fn push(&mut self, kind: IssueKind, field: impl Into<String>, message: impl Into<String>) {
        self.0.push(ScenarioIssue {
            kind,
            field: field.into(),
            message: message.into(),
        });
    }

    fn schema<T: DeserializeOwned>(&mut self, field: &str, value: &Value) -> Option<T> {
        match serde_json::from_value(value.clone()) {
            Ok(v) => Some(v),
            Err(e) => {
                self.push(IssueKind::Schema, field, e.to_string());
                None
            }
        }
    }

    /// The single key of an object meant to hold exactly one of `allowed`.
    fn one_of<'v>(&mut self, field: &str, value: &'v Value, allowed: &[&str]) -> Option<(&'v str, &'v Value)> {
        let Some(obj) = value.as_object() else {
            self.push(IssueKind::Schema, field, "expected an object");
            return None;
        };
        let unknown: Vec<_> = obj.keys().filter(|k| !allowed.contains(&k.as_str())).collect();
        for k in &unknown {
            self.push(
                IssueKind::Schema,
                format!("{field}.{k}"),
                format!("unknown key; expected one of {allowed:?}"),
            );
        }
        if !unknown.is_empty() {
            return None;
        }
        match obj.len() {
            1 => obj.iter().next().map(|(k, v)| (k.as_str(), v)),
            0 => {
                self.push(IssueKind::Schema, field, format!("expected exactly one of {allowed:?}"));
                None
            }
            _ => {
                let keys: Vec<_> = obj.keys().map(String::as_str).collect();
                self.push(
                    IssueKind::Schema,
                    field,
                    format!("expected exactly one of {allowed:?}, found {keys:?}"),
                );
                None
            }
        }
    }
}

const TOP_KEYS: [&str; 5] = ["network", "budgets", "run", "settings", "workers"];
const RUN_KEYS: [&str; 7] = [
    "disruption",
    "adversary",
    "defender",
    "baseline",
    "game",
    "grid",
    "simulate",
];

pub fn parse_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario_str(&text)
}

/// Parses and validates a scenario, reporting every problem found rather
/// than stopping at the first.
pub fn parse_scenario_str(text: &str) -> Result<Scenario, ScenarioError> {
    let mut issues = Issues(Vec::new());
    let root: Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(e) => {
            issues.push(
                IssueKind::Syntax,
                format!("line {}, column {}", e.line(), e.column()),
                e.to_string(),
            );
            return Err(ScenarioError::Invalid(issues.0));
        }
    };
    let Some(obj) = root.as_object() else {
        issues.push(IssueKind::Schema, "$", "expected a JSON object");
        return Err(ScenarioError::Invalid(issues.0));
    };
    for k in obj.keys().filter(|k| !TOP_KEYS.contains(&k.as_str())) {
        issues.push(IssueKind::Schema, k.clone(), "unknown key");
    }
    for k in ["network", "budgets", "run"] {
        if !obj.contains_key(k) {
            issues.push(IssueKind::Schema, k, "missing");
        }
    }

    let network = obj.get("network").and_then(|v| {
        let (key, inner) = issues.one_of("network", v, &["inline", "generator"])?;
        match key {
            "inline" => issues
                .schema::<RawNetwork>("network.inline", inner)
                .map(NetworkSource::Inline),
            _ => issues
                .schema::<GeneratorSpec>("network.generator", inner)
                .map(NetworkSource::Generator),
        }
    });
    let budgets = obj
        .get("budgets")
        .and_then(|v| issues.schema::<BudgetsFile>("budgets", v));
    let run = obj.get("run").and_then(|v| {
        let (key, _) = issues.one_of("run", v, &RUN_KEYS)?;
        issues.schema::<RunDirective>(&format!("run.{key}"), v)
    });
    let settings = match obj.get("settings") {
        Some(v) => issues.schema::<SolverSettings>("settings", v),
        None => Some(SolverSettings::default()),
    };
    let workers = match obj.get("workers") {
        Some(v) => issues.schema::<usize>("workers", v).map(Some),
        None => Some(None),
    };

    let (Some(network), Some(budgets), Some(run), Some(settings), Some(workers)) =
        (network, budgets, run, settings, workers)
    else {
        return Err(ScenarioError::Invalid(issues.0));
    };
    let file = ScenarioFile {
        network,
        budgets,
        run,
        settings,
        workers,
    };
    validate_file(file, issues)
}

fn network_issue(issues: &mut Issues, field: &str, e: &NetworkError) {
    issues.push(IssueKind::Semantic, field, e.to_string());
}

fn check_nodes(issues: &mut Issues, field: &str, nodes: &[usize], n: usize) {
    let mut seen = BTreeSet::new();
    for (i, &v) in nodes.iter().enumerate() {
        if v == 0 || v > n {
            issues.push(
                IssueKind::Semantic,
                format!("{field}[{i}]"),
                format!("node {v} outside 1..={n}"),
            );
        } else if !seen.insert(v) {
            issues.push(
                IssueKind::Semantic,
                format!("{field}[{i}]"),
                format!("node {v} repeated"),
            );
        }
    }
}

fn check_attack(issues: &mut Issues, field: &str, nodes: &[usize], n: usize, alpha: usize) {
    check_nodes(issues, field, nodes, n);
    if nodes.len() != alpha {
        issues.push(
            IssueKind::Semantic,
            field,
            format!("attack set has {} nodes, budget alpha = {alpha}", nodes.len()),
        );
    }
}

fn check_monitors(issues: &mut Issues, field: &str, nodes: &[usize], n: usize, beta: usize) {
    check_nodes(issues, field, nodes, n);
    if nodes.len() > beta {
        issues.push(
            IssueKind::Semantic,
            field,
            format!("monitor set has {} nodes, budget beta = {beta}", nodes.len()),
        );
    }
}

fn validate_file(file: ScenarioFile, mut issues: Issues) -> Result<Scenario, ScenarioError> {
    let spec = match &file.network {
        NetworkSource::Inline(raw) => {
            let errs = validate_raw(raw);
            for e in &errs {
                network_issue(&mut issues, "network.inline", e);
            }
            if errs.is_empty() {
                build_network(raw)
                    .map_err(|e| network_issue(&mut issues, "network.inline", &e))
                    .ok()
            } else {
                None
            }
        }
        NetworkSource::Generator(g) => random_network(g.seed, g.nodes, g.edge_density, &g.gains)
            .map_err(|e| network_issue(&mut issues, "network.generator", &e))
            .ok(),
    };
    let s = &file.settings;
    for (name, v) in [
        ("feasibility_tol", s.feasibility_tol),
        ("gap_tol", s.gap_tol),
        ("eps_pos", s.eps_pos),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            issues.push(
                IssueKind::Semantic,
                format!("settings.{name}"),
                format!("{v} must be positive"),
            );
        }
    }
    if file.workers == Some(0) {
        issues.push(IssueKind::Semantic, "workers", "must be at least 1");
    }

    let Some(spec) = spec else {
        return Err(ScenarioError::Invalid(issues.0));
    };
    let n = spec.n_nodes();
    let b = &file.budgets;
    let budgets = GameBudgets::new(&spec, b.alpha, b.beta, b.energy, b.big_m)
        .map_err(|e| network_issue(&mut issues, "budgets", &e))
        .ok();
    let (alpha, beta) = (b.alpha, b.beta);
    match &file.run {
        RunDirective::Disruption { monitors, attack } => {
            check_monitors(&mut issues, "run.disruption.monitors", monitors, n, beta);
            check_attack(&mut issues, "run.disruption.attack", attack, n, alpha);
        }
        RunDirective::Adversary { monitors, weight_r, .. } => {
            check_monitors(&mut issues, "run.adversary.monitors", monitors, n, beta);
            if let Some(r) = weight_r {
                if !(*r > 0.0 && r.is_finite()) {
                    issues.push(
                        IssueKind::Semantic,
                        "run.adversary.weight_r",
                        format!("{r} must be positive"),
                    );
                }
            }
        }
        RunDirective::Defender { policies, .. } => {
            if policies.is_empty() {
                issues.push(
                    IssueKind::Semantic,
                    "run.defender.policies",
                    "at least one policy required",
                );
            }
            for (i, p) in policies.iter().enumerate() {
                check_attack(&mut issues, &format!("run.defender.policies[{i}]"), p, n, alpha);
            }
        }
        RunDirective::Simulate {
            monitors,
            attack,
            signal,
            dt,
            horizon,
            search,
        } => {
            check_monitors(&mut issues, "run.simulate.monitors", monitors, n, n);
            check_attack(&mut issues, "run.simulate.attack", attack, n, alpha);
            if let Some(sig) = signal {
                if sig.channels.len() != alpha {
                    issues.push(
                        IssueKind::Semantic,
                        "run.simulate.signal.channels",
                        format!("{} channels for {alpha} attack nodes", sig.channels.len()),
                    );
                }
                if !(sig.support > 0.0 && sig.support.is_finite()) {
                    issues.push(IssueKind::Semantic, "run.simulate.signal.support", "must be positive");
                }
            }
            if signal.is_none() && search.is_none() {
                issues.push(IssueKind::Semantic, "run.simulate", "needs a signal, a search, or both");
            }
            for (name, v) in [("dt", dt), ("horizon", horizon)] {
                if let Some(v) = v {
                    if !(*v > 0.0 && v.is_finite()) {
                        issues.push(
                            IssueKind::Semantic,
                            format!("run.simulate.{name}"),
                            format!("{v} must be positive"),
                        );
                    }
                }
            }
            if search.as_ref().is_some_and(|s| s.trials == 0) {
                issues.push(IssueKind::Semantic, "run.simulate.search.trials", "must be at least 1");
            }
        }
        RunDirective::Baseline {} | RunDirective::Game { .. } | RunDirective::Grid { .. } => {}
    }
    match budgets {
        Some(budgets) if issues.0.is_empty() => Ok(Scenario { file, spec, budgets }),
        _ => Err(ScenarioError::Invalid(issues.0)),
    }
}

/// `{1,3,4}` with 1-based indices.
pub fn format_set(one_based: &[usize]) -> String {
    let inner: Vec<String> = one_based.iter().map(|v| v.to_string()).collect();
    format!("{{{}}}", inner.join(","))
}

/// Inverse of [`format_set`].
pub fn parse_set(text: &str) -> Option<Vec<usize>> {
    let inner = text.trim().strip_prefix('{')?.strip_suffix('}')?.trim();
    if inner.is_empty() {
        return Some(Vec::new());
    }
    inner.split(',').map(|v| v.trim().parse().ok()).collect()
}

/// Display rounding: values are rounded up.
pub fn round_up(v: f64) -> f64 {
    v.ceil()
}

const TRACE_HEADER: [&str; 10] = [
    "k",
    "A_k",
    "Q",
    "Q_rounded",
    "M_k",
    "R",
    "R_rounded",
    "optimized",
    "repeated",
    "seed",
];

/// Trace CSV: one row per level, sets as `{i,j}`, values at full
/// (round-trip) precision plus a rounded-up display column.
pub fn write_trace<W: Write>(trace: &PolicyTrace, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for r in &trace.rows {
        w.write_record([
            r.level.to_string(),
            format_set(&r.attack.one_based()),
            r.disruption.to_string(),
            round_up(r.disruption).to_string(),
            format_set(&r.monitors.one_based()),
            r.objective.to_string(),
            round_up(r.objective).to_string(),
            r.optimized.to_string(),
            r.repeated.to_string(),
            trace.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Error)]
pub enum TraceReadError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("row {row}: bad {column} value {value:?}")]
    Field {
        row: usize,
        column: &'static str,
        value: String,
    },
    #[error("unexpected header {0:?}")]
    Header(Vec<String>),
}

pub fn read_trace<R: Read>(input: R) -> Result<PolicyTrace, TraceReadError> {
    let mut rdr = csv::Reader::from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    if header != TRACE_HEADER {
        return Err(TraceReadError::Header(header));
    }
    let mut rows = Vec::new();
    let mut seed = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |column: &'static str, idx: usize| TraceReadError::Field {
            row: i + 1,
            column,
            value: rec[idx].to_string(),
        };
        let num = |idx: usize, column: &'static str| rec[idx].parse::<f64>().map_err(|_| bad(column, idx));
        let flag = |idx: usize, column: &'static str| rec[idx].parse::<bool>().map_err(|_| bad(column, idx));
        let set = |idx: usize, column: &'static str| parse_set(&rec[idx]).ok_or_else(|| bad(column, idx));

        let attack = set(1, "A_k")?;
        let monitors = set(4, "M_k")?;
        let n = attack.iter().chain(&monitors).copied().max().unwrap_or(0);
        rows.push(TraceRow {
            level: rec[0].parse().map_err(|_| bad("k", 0))?,
            attack: AttackSet::from_one_based(&attack, n, attack.len()).map_err(|_| bad("A_k", 1))?,
            disruption: num(2, "Q")?,
            monitors: MonitorSet::from_one_based(&monitors, n, monitors.len()).map_err(|_| bad("M_k", 4))?,
            objective: num(5, "R")?,
            optimized: flag(7, "optimized")?,
            repeated: flag(8, "repeated")?,
        });
        seed = rec[9].parse().map_err(|_| bad("seed", 9))?;
    }
    let converged_at = detect_convergence(&rows);
    Ok(PolicyTrace {
        rows,
        seed,
        converged_at,
    })
}

/// Long-form grid CSV: `defender_level, adversary_level, Q, resonance_flag`,
/// row-major; the flag marks the diagonal.
pub fn emit_grid<W: Write>(grid: &OutcomeGrid, out: W) -> csv::Result<()> {
    let values = &grid.values;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["defender_level", "adversary_level", "Q", "resonance_flag"])?;
    for k in 0..values.nrows() {
        for l in 0..values.ncols() {
            w.write_record([
                k.to_string(),
                l.to_string(),
                values[(k, l)].to_string(),
                (k == l).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
