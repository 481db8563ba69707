//! `cogsec` command-line runner: one scenario file in, CSV results and a JSON
//! run manifest out.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use cogsec::adversary::{
    best_response_enumerate, best_response_joint, default_weight, AdversaryError, AdversaryResponse, ResponseMethod,
};
use cogsec::conic::{verify_solution, SolveStatus};
use cogsec::defender::{
    defender_branch_and_bound, defender_enumerate, full_coverage_policy, validate_solution, DefenderError,
    DefenderMethod, DefenderSolution, DEFAULT_ENUMERATION_CAP,
};
use cogsec::disruption::{assemble_disruption_lmi, DisruptionError, DisruptionTable};
use cogsec::game::{
    mismatch_report, outcome_grid, proposition_slack, recheck_trace, run_ch_iteration, GameError, IterationOptions,
};
use cogsec::io::{emit_grid, format_set, parse_scenario, round_up, write_trace, RunDirective, Scenario, ScenarioError};
use cogsec::network::{random_network, AttackSet, GainRanges, MonitorSet};
use cogsec::simulation::{
    is_admissible, is_stealthy, randomized_lower_bound, simulate, LtiSystem, SearchSettings, SimulationError,
};

#[derive(Parser)]
#[command(
    name = "cogsec",
    version,
    about = "Worst-case stealthy-attack disruption and cognitive-hierarchy security policies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Worst-case disruption Q(M, A) with its dual certificate.
    Disruption(Common),
    /// Adversary best response to a monitor set.
    Adversary(Common),
    /// Defender policy against a list of adversary policies.
    Defender(Common),
    /// Defender policy against every admissible attack set.
    Baseline(Common),
    /// Cognitive-hierarchy policy iteration.
    Game(Common),
    /// Policy iteration plus the full reasoning-outcome grid.
    Grid(Common),
    /// Time-domain simulation and randomized attack search.
    Simulate(Common),
    /// Write a random network as an inline scenario fragment.
    Gen(GenArgs),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (overrides the scenario).
    #[arg(long)]
    workers: Option<usize>,
    /// Seed override for the game, grid, and search directives.
    #[arg(long)]
    seed: Option<u64>,
    /// Tolerance for --check validators.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Run independent validators after computing.
    #[arg(long)]
    check: bool,
    /// Compute every level even after convergence.
    #[arg(long)]
    force_full_iteration: bool,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    nodes: usize,
    #[arg(long)]
    density: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

enum Failure {
    Io(String),
    Parse(String),
    Solver(String),
    Infeasible(String),
    Check(Vec<String>),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Parse(_) => 2,
            Failure::Solver(_) => 3,
            Failure::Infeasible(_) => 4,
            Failure::Check(_) => 5,
        }
    }

    fn io(e: impl Display) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<DisruptionError> for Failure {
    fn from(e: DisruptionError) -> Self {
        match e {
            DisruptionError::Solver {
                status: SolveStatus::Infeasible,
                ..
            } => Failure::Infeasible(e.to_string()),
            _ => Failure::Solver(e.to_string()),
        }
    }
}

impl From<AdversaryError> for Failure {
    fn from(e: AdversaryError) -> Self {
        match e {
            AdversaryError::Disruption(d) => d.into(),
            AdversaryError::Solver(SolveStatus::Infeasible) => Failure::Infeasible(e.to_string()),
            _ => Failure::Solver(e.to_string()),
        }
    }
}

impl From<DefenderError> for Failure {
    fn from(e: DefenderError) -> Self {
        match e {
            DefenderError::Disruption(d) => d.into(),
            DefenderError::Relaxation(SolveStatus::Infeasible) => Failure::Infeasible(e.to_string()),
            _ => Failure::Solver(e.to_string()),
        }
    }
}

impl From<GameError> for Failure {
    fn from(e: GameError) -> Self {
        match e {
            GameError::Disruption(d) => d.into(),
            GameError::Adversary { source, .. } => source.into(),
            GameError::Defender { source, .. } => source.into(),
        }
    }
}

impl From<SimulationError> for Failure {
    fn from(e: SimulationError) -> Self {
        Failure::Parse(e.to_string())
    }
}

/// Collects output files and validator findings for the manifest.
struct Run<'a> {
    out: &'a Path,
    files: Vec<String>,
    issues: Vec<String>,
}

impl Run<'_> {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), Failure> {
        fs::write(self.out.join(name), bytes).map_err(Failure::io)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), Failure> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(Failure::io)?;
        for r in rows {
            w.write_record(&r).map_err(Failure::io)?;
        }
        let bytes = w.into_inner().map_err(Failure::io)?;
        self.write(name, &bytes)
    }

    fn json(&mut self, name: &str, value: &Value) -> Result<(), Failure> {
        let mut text = serde_json::to_string_pretty(value).map_err(Failure::io)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }
}

fn set_of(nodes: &[usize]) -> String {
    format_set(nodes)
}

fn matrix_json(m: &nalgebra::DMatrix<f64>) -> Value {
    Value::from(
        (0..m.nrows())
            .map(|i| m.row(i).iter().copied().collect::<Vec<_>>())
            .collect::<Vec<_>>(),
    )
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(args) => generate(&args),
        Command::Disruption(c) => execute("disruption", &c),
        Command::Adversary(c) => execute("adversary", &c),
        Command::Defender(c) => execute("defender", &c),
        Command::Baseline(c) => execute("baseline", &c),
        Command::Game(c) => execute("game", &c),
        Command::Grid(c) => execute("grid", &c),
        Command::Simulate(c) => execute("simulate", &c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Io(m) => eprintln!("I/O error: {m}"),
                Failure::Parse(m) => eprintln!("{m}"),
                Failure::Solver(m) => eprintln!("solver failure: {m}"),
                Failure::Infeasible(m) => eprintln!("infeasible: {m}"),
                Failure::Check(v) => {
                    eprintln!("check failed:");
                    for i in v {
                        eprintln!("  {i}");
                    }
                }
            }
            ExitCode::from(f.code())
        }
    }
}

fn generate(args: &GenArgs) -> Result<(), Failure> {
    let spec = random_network(args.seed, args.nodes, args.density, &GainRanges::default())
        .map_err(|e| Failure::Parse(e.to_string()))?;
    fs::create_dir_all(&args.out).map_err(Failure::io)?;
    let path = args.out.join("network.json");
    let text = serde_json::to_string_pretty(&json!({ "inline": spec.to_raw() })).map_err(Failure::io)?;
    fs::write(&path, text + "\n").map_err(Failure::io)?;
    println!("{}", path.display());
    Ok(())
}

fn execute(command: &str, c: &Common) -> Result<(), Failure> {
    let t0 = Instant::now();
    let bytes = fs::read(&c.scenario).map_err(Failure::io)?;
    let scenario = parse_scenario(&c.scenario).map_err(|e| match e {
        ScenarioError::Io(e) => Failure::io(e),
        e @ ScenarioError::Invalid(_) => Failure::Parse(e.to_string()),
    })?;
    if scenario.file.run.name() != command {
        return Err(Failure::Parse(format!(
            "scenario holds a `{}` directive but the `{command}` subcommand was requested",
            scenario.file.run.name()
        )));
    }
    let parse_ms = t0.elapsed().as_secs_f64() * 1e3;

    let workers = c.workers.or(scenario.file.workers);
    if let Some(w) = workers {
        // Only the first call in a process can configure the global pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w).build_global();
    }
    fs::create_dir_all(&c.out).map_err(Failure::io)?;
    let mut run = Run {
        out: &c.out,
        files: Vec::new(),
        issues: Vec::new(),
    };

    let t1 = Instant::now();
    let table = DisruptionTable::new(&scenario.spec, scenario.budgets.energy, scenario.file.settings);
    match &scenario.file.run {
        RunDirective::Disruption { monitors, attack } => {
            run_disruption(&mut run, &scenario, &table, monitors, attack, c)?
        }
        RunDirective::Adversary {
            monitors,
            method,
            weight_r,
        } => run_adversary(&mut run, &scenario, &table, monitors, *method, *weight_r, c)?,
        RunDirective::Defender { policies, method } => run_defender(&mut run, &scenario, &table, policies, *method, c)?,
        RunDirective::Baseline {} => {
            let s = full_coverage_policy(
                &table,
                scenario.budgets.alpha,
                scenario.budgets.beta,
                DEFAULT_ENUMERATION_CAP,
            )?;
            write_defender(&mut run, "baseline", &s)?;
            if c.check {
                run.issues.extend(validate_solution(
                    &table,
                    &s,
                    scenario.budgets.beta,
                    scenario.budgets.big_m,
                    c.tol,
                ));
            }
        }
        RunDirective::Game { q, seed, force_full } => {
            let seed = c.seed.unwrap_or(*seed);
            let options = IterationOptions {
                force_full: *force_full || c.force_full_iteration,
            };
            let trace = run_ch_iteration(&table, &scenario.budgets, *q, seed, options)?;
            let mut buf = Vec::new();
            write_trace(&trace, &mut buf).map_err(Failure::io)?;
            run.write("trace.csv", &buf)?;
            if c.check {
                check_trace(&mut run, &scenario, &table, &trace)?;
            }
        }
        RunDirective::Grid { q, seed, force_full } => {
            let seed = c.seed.unwrap_or(*seed);
            let options = IterationOptions {
                force_full: *force_full || c.force_full_iteration,
            };
            let trace = run_ch_iteration(&table, &scenario.budgets, *q, seed, options)?;
            let grid = outcome_grid(&table, &trace)?;
            let report = mismatch_report(&grid, scenario.spec.uniform_costs());
            let mut buf = Vec::new();
            write_trace(&trace, &mut buf).map_err(Failure::io)?;
            run.write("trace.csv", &buf)?;
            let mut buf = Vec::new();
            emit_grid(&grid, &mut buf).map_err(Failure::io)?;
            run.write("grid.csv", &buf)?;
            run.json("mismatch.json", &serde_json::to_value(&report).map_err(Failure::io)?)?;
            if c.check {
                check_trace(&mut run, &scenario, &table, &trace)?;
                run.issues.extend(report.violations.iter().map(|v| format!("{v:?}")));
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
            let n = scenario.spec.n_nodes();
            let m = MonitorSet::from_one_based(monitors, n, n).map_err(|e| Failure::Parse(e.to_string()))?;
            let a = AttackSet::from_one_based(attack, n, attack.len()).map_err(|e| Failure::Parse(e.to_string()))?;
            let q = table.value(&m, &a)?;
            let bound = q * (1.0 + 1e-3) + 1e-6;
            let mut summary = Vec::new();
            if let Some(sig) = signal {
                let sys = LtiSystem::attacked(&scenario.spec, &a);
                let dt = dt.unwrap_or_else(|| sys.max_step().min(sig.support / 2000.0));
                let horizon = horizon.unwrap_or_else(|| sig.support + 20.0 / scenario.spec.slowest_rate());
                let traj = simulate(&scenario.spec, &a, sig, dt, horizon)?;
                let stealth = is_stealthy(&traj, &m, &scenario.spec);
                let admissible = is_admissible(sig, scenario.budgets.energy, dt);
                let mut buf = Vec::new();
                traj.write_csv(&mut buf, &m).map_err(Failure::io)?;
                run.write("trajectory.csv", &buf)?;
                summary.push(vec![
                    "signal".into(),
                    traj.perf_energy.to_string(),
                    q.to_string(),
                    stealth.stealthy.to_string(),
                    admissible.to_string(),
                    set_of(&stealth.alarms.iter().map(|v| v + 1).collect::<Vec<_>>()),
                ]);
                if c.check && stealth.stealthy && admissible && traj.perf_energy > bound {
                    run.issues
                        .push(format!("simulated J = {} exceeds Q = {q}", traj.perf_energy));
                }
            }
            if let Some(s) = search {
                let seed = c.seed.unwrap_or(s.seed);
                let settings = SearchSettings {
                    dt: *dt,
                    ..SearchSettings::default()
                };
                let lb = randomized_lower_bound(
                    &scenario.spec,
                    &m,
                    &a,
                    scenario.budgets.energy,
                    s.trials,
                    seed,
                    &settings,
                )?;
                run.json(
                    "search_signal.json",
                    &json!({
                        "value": lb.value,
                        "trial": lb.trial,
                        "stealthy_trials": lb.stealthy_trials,
                        "signal": lb.signal,
                    }),
                )?;
                summary.push(vec![
                    "search".into(),
                    lb.value.to_string(),
                    q.to_string(),
                    "true".into(),
                    "true".into(),
                    "{}".into(),
                ]);
                if c.check && lb.value > bound {
                    run.issues.push(format!("search found J = {} above Q = {q}", lb.value));
                }
            }
            run.csv(
                "simulation.csv",
                &["kind", "J", "Q", "stealthy", "admissible", "alarms"],
                summary,
            )?;
        }
    }
    let compute_ms = t1.elapsed().as_secs_f64() * 1e3;

    let manifest = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "scenario": c.scenario.display().to_string(),
        "scenario_sha256": hex::encode(Sha256::digest(&bytes)),
        "seed_override": c.seed,
        "workers": workers,
        "solves": table.solved(),
        "outputs": run.files,
        "check": { "ran": c.check, "tol": c.tol, "issues": run.issues },
        "timings_ms": { "parse": parse_ms, "compute": compute_ms },
    });
    let mut text = serde_json::to_string_pretty(&manifest).map_err(Failure::io)?;
    text.push('\n');
    fs::write(c.out.join("manifest.json"), text).map_err(Failure::io)?;

    if c.check && !run.issues.is_empty() {
        return Err(Failure::Check(run.issues));
    }
    Ok(())
}

fn run_disruption(
    run: &mut Run,
    scenario: &Scenario,
    table: &DisruptionTable,
    monitors: &[usize],
    attack: &[usize],
    c: &Common,
) -> Result<(), Failure> {
    let n = scenario.spec.n_nodes();
    let b = &scenario.budgets;
    let m = MonitorSet::from_one_based(monitors, n, b.beta).map_err(|e| Failure::Parse(e.to_string()))?;
    let a = AttackSet::from_one_based(attack, n, b.alpha).map_err(|e| Failure::Parse(e.to_string()))?;
    let cert = table.certificate(&m, &a)?;
    run.csv(
        "disruption.csv",
        &["M", "A", "Q", "Q_rounded", "lmi_residual"],
        vec![vec![
            set_of(&m.one_based()),
            set_of(&a.one_based()),
            cert.value.to_string(),
            round_up(cert.value).to_string(),
            cert.lmi_residual.to_string(),
        ]],
    )?;
    run.json(
        "certificate.json",
        &json!({
            "monitors": m.one_based(),
            "attack": a.one_based(),
            "value": cert.value,
            "gamma": cert.gamma.as_slice(),
            "psi": cert.psi.as_slice(),
            "storage": matrix_json(&cert.storage),
            "status": cert.status,
            "lmi_residual": cert.lmi_residual,
        }),
    )?;
    if c.check {
        let program = assemble_disruption_lmi(&scenario.spec, &m, &a, b.energy, scenario.file.settings.eps_pos)
            .map_err(|e| Failure::Solver(e.to_string()))?;
        let report = verify_solution(&program.program, &program.values_for(&cert), c.tol);
        run.issues.extend(report.violations().iter().map(|v| format!("{v:?}")));
    }
    Ok(())
}

fn write_adversary(run: &mut Run, r: &AdversaryResponse) -> Result<(), Failure> {
    let rows = r
        .candidates
        .iter()
        .map(|cand| {
            vec![
                set_of(&cand.attack.one_based()),
                cand.value.to_string(),
                cand.gap.to_string(),
                (cand.attack == r.best_set).to_string(),
            ]
        })
        .collect();
    run.csv("adversary.csv", &["A", "Q", "gap", "best"], rows)
}

fn run_adversary(
    run: &mut Run,
    scenario: &Scenario,
    table: &DisruptionTable,
    monitors: &[usize],
    method: Option<ResponseMethod>,
    weight_r: Option<f64>,
    c: &Common,
) -> Result<(), Failure> {
    let n = scenario.spec.n_nodes();
    let b = &scenario.budgets;
    let m = MonitorSet::from_one_based(monitors, n, b.beta).map_err(|e| Failure::Parse(e.to_string()))?;
    let response = match method.unwrap_or(ResponseMethod::Enumeration) {
        ResponseMethod::Enumeration => best_response_enumerate(table, &m, b.alpha)?,
        ResponseMethod::JointSdp => best_response_joint(
            &scenario.spec,
            &m,
            b.alpha,
            b.energy,
            weight_r.unwrap_or_else(|| default_weight(n, b.alpha)),
            &scenario.file.settings,
        )?,
    };
    write_adversary(run, &response)?;
    if c.check {
        let slack = proposition_slack(response.best_value);
        for cand in &response.candidates {
            if cand.gap < -slack {
                run.issues
                    .push(format!("{} beats the best response by {}", cand.attack, -cand.gap));
            }
        }
        if response.method == ResponseMethod::JointSdp {
            let e = best_response_enumerate(table, &m, b.alpha)?;
            if (e.best_value - response.best_value).abs() > 1e-5 * e.best_value.abs().max(1e-12) {
                run.issues.push(format!(
                    "joint value {} vs enumeration {}",
                    response.best_value, e.best_value
                ));
            }
        }
    }
    Ok(())
}

fn write_defender(run: &mut Run, name: &str, s: &DefenderSolution) -> Result<(), Failure> {
    let method = match s.method {
        DefenderMethod::Enumeration => "enumeration",
        DefenderMethod::BranchAndBound => "branch_and_bound",
    };
    run.csv(
        &format!("{name}.csv"),
        &["M", "R", "R_rounded", "Q", "sensor_cost", "method"],
        vec![vec![
            set_of(&s.monitor_set.one_based()),
            s.objective.to_string(),
            round_up(s.objective).to_string(),
            s.inner_value.to_string(),
            s.sensor_cost.to_string(),
            method.to_string(),
        ]],
    )?;
    let rows = s
        .per_adversary
        .iter()
        .map(|p| vec![set_of(&p.attack.one_based()), p.value.to_string()])
        .collect();
    run.csv(&format!("{name}_adversaries.csv"), &["A", "Q"], rows)
}

fn run_defender(
    run: &mut Run,
    scenario: &Scenario,
    table: &DisruptionTable,
    policies: &[Vec<usize>],
    method: Option<DefenderMethod>,
    c: &Common,
) -> Result<(), Failure> {
    let n = scenario.spec.n_nodes();
    let b = &scenario.budgets;
    let policies = policies
        .iter()
        .map(|p| AttackSet::from_one_based(p, n, b.alpha))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::Parse(e.to_string()))?;
    let s = match method.unwrap_or(DefenderMethod::Enumeration) {
        DefenderMethod::Enumeration => defender_enumerate(table, &policies, b.beta)?,
        DefenderMethod::BranchAndBound => defender_branch_and_bound(table, &policies, b.beta, b.big_m)?,
    };
    write_defender(run, "defender", &s)?;
    if c.check {
        run.issues.extend(validate_solution(table, &s, b.beta, b.big_m, c.tol));
        if s.method == DefenderMethod::BranchAndBound {
            let e = defender_enumerate(table, &policies, b.beta)?;
            if (e.objective - s.objective).abs() > 1e-5 * e.objective.abs().max(1e-12) {
                run.issues.push(format!(
                    "branch-and-bound objective {} vs enumeration {}",
                    s.objective, e.objective
                ));
            }
        }
    }
    Ok(())
}

fn check_trace(
    run: &mut Run,
    scenario: &Scenario,
    table: &DisruptionTable,
    trace: &cogsec::game::PolicyTrace,
) -> Result<(), Failure> {
    run.issues.extend(recheck_trace(table, &scenario.budgets, trace)?);
    for w in trace.rows.iter().skip(1).collect::<Vec<_>>().windows(2) {
        if w[1].objective < w[0].objective - proposition_slack(w[0].objective) {
            run.issues
                .push(format!("R decreases from level {} to {}", w[0].level, w[1].level));
        }
    }
    Ok(())
}
